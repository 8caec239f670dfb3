"""Symmetrized index-block bookkeeping.

Corrector fields and homogenized tensors carry blocks of indices in {0..d-1}
that are only ever contracted against symmetric stacks (derivative stacks or
frequency powers), so components are stored per sorted index tuple (multiset)
with the multinomial multiplicity accounting for the expansion to ordered
tuples.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

__all__ = ["msets", "multiplicity", "mset_key", "component_count", "SymTensor"]


def msets(d: int, n: int):
    """All sorted index tuples of length n over {0..d-1}."""
    return list(itertools.combinations_with_replacement(range(d), n))


def mset_key(idx) -> tuple:
    return tuple(sorted(idx))


def multiplicity(key) -> int:
    """Number of ordered tuples with the given sorted content."""
    n = len(key)
    m = math.factorial(n)
    for c in Counter(key).values():
        m //= math.factorial(c)
    return m


def component_count(d: int, n: int) -> int:
    return math.comb(n + d - 1, n)


@dataclass
class SymTensor:
    """Order-n symmetric tensor over {0..d-1}: one component per multiset.

    Components may be scalars or ndarrays (e.g. matrix blocks, fields)."""

    d: int
    order: int
    comps: dict

    @classmethod
    def zeros(cls, d: int, order: int, like=None):
        z = 0.0 if like is None else np.zeros_like(like)
        return cls(d=d, order=order, comps={S: (z if like is None else z.copy()) for S in msets(d, order)})

    def __getitem__(self, idx):
        return self.comps[mset_key(idx)]

    def __setitem__(self, idx, value):
        self.comps[mset_key(idx)] = value

    def contract(self, stack) -> np.ndarray:
        """Sum over all ordered index tuples of comp * stack, with stack given
        per multiset (stack must itself be symmetric in the indices)."""
        out = None
        for S, c in self.comps.items():
            term = multiplicity(S) * c * stack[S]
            out = term if out is None else out + term
        return out

    def frobenius(self) -> float:
        """Norm of the expanded (ordered) tensor."""
        total = 0.0
        for S, c in self.comps.items():
            total += multiplicity(S) * float(np.sum(np.asarray(c) ** 2))
        return math.sqrt(total)
