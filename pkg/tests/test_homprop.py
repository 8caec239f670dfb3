import itertools
import math

import numpy as np
import pytest

from homwave.errors import AdmissibilityError, FitError, IllPosedError
from homwave.homprop import (AdmissibilityCertificate, HomogenizedFlow, HomogenizedSymbol,
                             certify_kappa, evolve_homogenized, green_function,
                             green_rescaled_identity_gap, group_velocity, invert_group_map,
                             max_certified_kappa, measure_decay, symbol_from_correctors)
from homwave.media import build_grid, sample_periodic
from homwave.symtensor import SymTensor
from homwave.twoscale import build_mollifier


def _symbol_1d(a1, a3=None, K=None, C0=2.0):
    tensors = {1: SymTensor(d=1, order=2, comps={(0, 0): a1})}
    if a3 is not None:
        tensors[3] = SymTensor(d=1, order=4, comps={(0, 0, 0, 0): a3})
    K = K or {n: 0.0 for n in range(0, 4)}
    return HomogenizedSymbol(d=1, tensors=tensors, K=K, C0=C0)


def test_mu_identity():
    sym = _symbol_1d(1.0)
    assert sym.mu((0.5,)) == pytest.approx(0.25)
    g2 = build_grid(2, 1.0, 32)
    f2 = sample_periodic(g2, "constant")
    from homwave.correctors import build_corrector_set

    sym2 = symbol_from_correctors(build_corrector_set(f2, N=1, with_flux=False))
    xi = (0.3, -0.4)
    assert sym2.mu(xi) == pytest.approx(0.25)


def test_mu_quartic_form():
    sym = _symbol_1d(2.0, a3=0.5)
    xi = 0.7
    assert sym.mu((xi,)) == pytest.approx(2.0 * xi**2 - 0.5 * xi**4)
    # kappa rescaling identity mu_k(xi) = kappa^-2 mu(kappa xi)
    kappa = 0.3
    assert sym.mu_rescaled(kappa, (xi,)) == pytest.approx(sym.mu((kappa * xi,)) / kappa**2)


def test_mu_against_unsymmetrized_contraction(laminate_set):
    """Brute-force contraction with explicit i-powers over ordered tuples."""
    sym = symbol_from_correctors(laminate_set, N=3)
    xi = np.array([0.37])
    total = 0.0 + 0.0j
    for n in (1, 2, 3):
        for B, M in laminate_set.abar_ord[n].items():
            for i, j in itertools.product(range(1), repeat=2):
                block = np.prod([(1j * xi[b]) for b in B]) if B else 1.0
                total += xi[i] * block * M[i, j] * xi[j]
    assert abs(total.imag) < 1e-12
    assert sym.mu((0.37,)) == pytest.approx(total.real, rel=1e-10)


def test_certify_identity_passes_everywhere(identity_set):
    sym = symbol_from_correctors(identity_set)
    for kappa in (0.1, 1.0, 10.0):
        assert certify_kappa(sym, kappa, k=3).passed


def test_certify_fails_large_k3():
    sym = _symbol_1d(1.0, a3=0.1, K={0: 1.0, 1: 1.0, 2: 0.0, 3: 10.0}, C0=4.0)
    cert = certify_kappa(sym, 1.0, k=0)
    assert not cert.passed
    assert cert.margin_basic == pytest.approx(10.0)


def test_max_certified_kappa_decreasing_in_n(laminate_set):
    k2 = max_certified_kappa(symbol_from_correctors(laminate_set, N=2), k=0)
    k3 = max_certified_kappa(symbol_from_correctors(laminate_set, N=3), k=0)
    assert 0 < k3 <= k2


def _flow_setup(extent=128.0, points=2048, kappa=0.5):
    g = build_grid(1, extent, points)
    f = sample_periodic(g, "constant")
    from homwave.correctors import build_corrector_set

    sym = symbol_from_correctors(build_corrector_set(f, N=1, with_flux=False))
    cert = certify_kappa(sym, kappa)
    return g, sym, cert


def test_evolve_t0_exact():
    g, sym, cert = _flow_setup()
    rho = build_mollifier(0.5, g).kernel
    out = evolve_homogenized(rho, sym, cert, 0.0, g)
    assert np.max(np.abs(out - rho)) < 1e-14


def test_evolve_dalembert_closed_form():
    g, sym, cert = _flow_setup()
    x = g.axis()
    coeffs = [(1, 0.8), (2, -0.5), (3, 0.2)]
    pulse = lambda y: sum(c * np.cos(2 * np.pi * k * y / g.extent) for k, c in coeffs)
    u0 = pulse(x)
    t = 7.3
    out = evolve_homogenized(u0, sym, cert, t, g)
    ref = 0.5 * (pulse(x - t) + pulse(x + t))
    assert g.l2(out - ref) < 1e-10


def test_flow_l2_never_grows():
    g, sym, cert = _flow_setup()
    rho = build_mollifier(0.5, g).kernel
    flow = HomogenizedFlow(g, sym, cert, rho)
    n0 = g.l2(flow.u(0.0))
    for t in (3.0, 11.0, 29.0):
        assert g.l2(flow.u(t)) <= n0 * (1 + 1e-12)


def test_flow_energy_split_conserved():
    g, sym, cert = _flow_setup()
    rho = build_mollifier(0.5, g).kernel
    flow = HomogenizedFlow(g, sym, cert, rho)
    e0 = sum(flow.energy_split(0.0))
    for t in (5.0, 17.0):
        assert sum(flow.energy_split(t)) == pytest.approx(e0, rel=1e-10)


def test_green_zero_mode_mass():
    g, sym, cert = _flow_setup()
    rho = build_mollifier(0.5, g).kernel
    for t in (0.0, 9.0, 31.0):
        G = green_function(0.5, sym, rho, t, g, cert)
        assert g.cell_volume * np.sum(G) == pytest.approx(1.0, abs=1e-12)


def test_green_rescaling_identity():
    g, sym, cert = _flow_setup()
    rho = build_mollifier(0.5, g).kernel
    assert green_rescaled_identity_gap(0.5, sym, rho, 13.0, g) < 1e-8


def test_band_precondition_rejected():
    g, sym, cert = _flow_setup(kappa=0.25)
    rho = build_mollifier(0.5, g).kernel  # band 0.5 > certificate band 0.25
    with pytest.raises(AdmissibilityError):
        HomogenizedFlow(g, sym, cert, rho)


def test_illposed_detected():
    g = build_grid(1, 128.0, 2048)
    sym = _symbol_1d(1.0, a3=100.0)  # mu < 0 beyond |xi| = 0.1
    cert = AdmissibilityCertificate(kappa=0.5, N=3, k=0, margin_basic=0.0,
                                    margin_derivative=0.0, threshold=1.0)
    rho = build_mollifier(0.5, g).kernel
    with pytest.raises(IllPosedError):
        HomogenizedFlow(g, sym, cert, rho)


def test_group_velocity_identity_and_scaling():
    sym = _symbol_1d(1.0)
    assert group_velocity(sym, 0.3, 0.5)[0] == pytest.approx(1.0)
    assert group_velocity(sym, 0.3, -0.5)[0] == pytest.approx(-1.0)
    sym_c = _symbol_1d(2.5)
    for xi in (0.2, 0.9):
        assert abs(group_velocity(sym_c, 0.3, xi)[0]) == pytest.approx(math.sqrt(2.5))
    with pytest.raises(IllPosedError):
        group_velocity(sym, 0.3, 0.0)


def test_group_velocity_bounded_on_band(laminate_set):
    sym = symbol_from_correctors(laminate_set, N=3)
    kappa = max_certified_kappa(sym, k=0) * 0.9
    C0 = sym.C0
    for xi in np.linspace(0.05, 1.0, 40):
        nu = abs(group_velocity(sym, kappa, xi)[0])
        assert 1.0 / C0 <= nu <= C0


def test_invert_group_map_identity():
    sym = _symbol_1d(1.0)
    assert invert_group_map(sym, 0.3, 1.0)[0] == pytest.approx(0.5)
    assert invert_group_map(sym, 0.3, 0.0)[0] == 0.0


def test_invert_group_map_roundtrip(laminate_set):
    sym = symbol_from_correctors(laminate_set, N=3)
    kappa = max_certified_kappa(sym, k=1) * 0.9
    worst_res = 0.0
    for xi in np.linspace(-0.95, 0.95, 100):
        if abs(xi) < 1e-3:
            continue
        y = sym.grad_mu_rescaled(kappa, (xi,))
        back = invert_group_map(sym, kappa, y)
        worst_res = max(worst_res, abs(sym.grad_mu_rescaled(kappa, tuple(back))[0] - y[0]))
        ratio = abs(back[0]) / abs(xi)
        assert 0.5 <= ratio <= 2.0
    assert worst_res < 1e-10


def test_symbol_band_bounds_scan(laminate_set):
    """Certified bands satisfy the two-sided quadratic comparison
    |xi|^2/(2 C0) <= mu <= 3 C0 |xi|^2 / 2 on a grid scan."""
    sym = symbol_from_correctors(laminate_set, N=3)
    kappa = max_certified_kappa(sym, k=0)
    lo, hi = sym.band_bounds_margin(kappa)
    assert lo >= 1.0 and hi >= 1.0
    g2 = build_grid(2, 1.0, 64)
    from homwave.correctors import build_corrector_set

    cs2 = build_corrector_set(sample_periodic(g2, "cosine"), N=3)
    sym2 = symbol_from_correctors(cs2)
    lo2, hi2 = sym2.band_bounds_margin(max_certified_kappa(sym2, k=0))
    assert lo2 >= 1.0 and hi2 >= 1.0


def test_measure_decay_preconditions():
    g = build_grid(1, 64.0, 512)
    snaps = [np.ones(g.shape)] * 6
    with pytest.raises(FitError):
        measure_decay([1, 2, 3, 4, 5, 6], snaps, g, 1.0)
    times = np.linspace(1, 5, 9)
    with pytest.raises(FitError):
        measure_decay(times, [np.ones(g.shape)] * 9, g, 1.0)
    times = np.geomspace(1, 150, 9)
    with pytest.raises(FitError):
        measure_decay(times, [np.ones(g.shape)] * 9, g, 1.0, region="sideways")
