import itertools
import math

import numpy as np

from homwave.symtensor import SymTensor, component_count, msets, mset_key, multiplicity


def test_component_count_binomial():
    for d in (1, 2):
        for n in range(0, 5):
            assert len(msets(d, n)) == component_count(d, n) == math.comb(n + d - 1, n)


def test_multiplicities_sum_to_power():
    for d in (1, 2):
        for n in range(0, 5):
            assert sum(multiplicity(S) for S in msets(d, n)) == d**n


def test_contract_matches_ordered_sum():
    rng = np.random.default_rng(5)
    d, n = 2, 3
    comps = {S: rng.standard_normal() for S in msets(d, n)}
    tens = SymTensor(d=d, order=n, comps=comps)
    xi = rng.standard_normal(d)
    stack = {S: np.prod([xi[j] for j in S]) for S in msets(d, n)}
    direct = sum(comps[mset_key(t)] * np.prod([xi[j] for j in t])
                 for t in itertools.product(range(d), repeat=n))
    assert np.isclose(tens.contract(stack), direct)


def test_frobenius_counts_ordered_components():
    comps = {S: 1.0 for S in msets(2, 2)}
    tens = SymTensor(d=2, order=2, comps=comps)
    assert tens.frobenius() == math.sqrt(4.0)
