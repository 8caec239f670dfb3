import math

import numpy as np
import pytest

from homwave.errors import FitError, HomwaveError
from homwave.media import build_grid, sample_periodic
from homwave.twoscale import (build_cutoff, build_mollifier, error_budget, regularize,
                              regularization_error, scaling_experiment, tile_field,
                              two_scale_reconstruct)


@pytest.fixture(scope="module")
def torus():
    return build_grid(1, 128.0, 2048)


@pytest.fixture(scope="module")
def moll(torus):
    return build_mollifier(0.5, torus)


def test_mollifier_mass_and_positivity(moll, torus):
    assert torus.cell_volume * np.sum(moll.kernel) == pytest.approx(1.0, abs=1e-12)
    assert moll.kernel.min() >= -1e-12


def test_mollifier_band_support_exact(moll, torus):
    outside = torus.freq_norm() > moll.kappa
    assert np.max(np.abs(moll.hat[outside])) == 0.0


def test_mollifier_second_moment_scale(torus):
    # the uncertainty bound forces ratio >= 4 (pi/2)^2 ~ 9.87 for any kernel
    # whose transform is a squared half-band bump; the smooth bump sits ~ 12
    for kappa in (0.25, 0.5, 1.0):
        m = build_mollifier(kappa, torus)
        ratio = m.second_moment() * kappa**2
        assert 0.1 <= ratio <= 16.0


def test_mollifier_band_preconditions(torus):
    with pytest.raises(HomwaveError):
        build_mollifier(0.1, torus)  # fewer than 4 modes
    with pytest.raises(HomwaveError):
        build_mollifier(1e3, torus)  # beyond Nyquist


def test_cutoff_shape(torus):
    chi = build_cutoff(16.0, torus)
    r = torus.torus_radius()
    assert np.all((chi.chi >= 0) & (chi.chi <= 1))
    assert np.all(chi.chi[r <= 8.0 - torus.h] == 1.0)
    assert np.all(chi.chi[r >= 16.0 + torus.h] == 0.0)
    grad = np.abs(np.gradient(chi.chi, torus.h))
    assert grad.max() <= 4.0 / 16.0
    assert chi.gradient_bound <= 4.0 / 16.0


def test_regularize_zero_and_contraction(torus, moll):
    zero = regularize(np.zeros(torus.shape), 0.5, 16.0, torus, mollifier=moll)
    assert np.max(np.abs(zero)) == 0.0
    rng = np.random.default_rng(2)
    u0 = rng.standard_normal(torus.shape)
    out = regularize(u0, 0.5, 16.0, torus, mollifier=moll)
    assert torus.l2(out) <= torus.l2(u0)
    hat = torus.fft(out)
    assert np.max(np.abs(hat[torus.freq_norm() > 0.5])) < 1e-12 * np.max(np.abs(hat))


def test_regularize_band_limited_supported_data():
    """Data band-limited deep inside kappa and supported well inside B_{L/2}
    passes through nearly unchanged, and always within the directly evaluated
    moment bound sqrt(int |y|^2 rho) ||grad u||."""
    from homwave.correctors import Spectral

    g = build_grid(1, 1024.0, 8192)
    kappa, L = 4.0, 320.0
    u0 = build_mollifier(kappa / 32.0, g).kernel
    u0 = u0 / g.l2(u0)
    out = regularize(u0, kappa, L, g)
    gap = g.l2(out - u0)
    assert gap < 1e-3
    moll = build_mollifier(kappa, g)
    grad_norm = g.l2(Spectral(g).grad(u0)[0])
    assert gap <= math.sqrt(moll.second_moment()) * grad_norm


def test_regularization_error_supported_branch():
    g = build_grid(1, 64.0, 1024)
    f = sample_periodic(g, "laminate")
    xc = g.centered_coords()[0]
    u0 = np.exp(-((xc / 2.5) ** 2))
    u0 /= g.l2(u0)
    checks = [regularization_error(f, u0, 0.8, 20.0, 8.0, t) for t in (2.0, 3.5)]
    assert all(c.branch == "supported" for c in checks)
    assert all(c.measured <= 2.0 * c.bound for c in checks)
    assert checks[1].ratio < 3.0 * max(checks[0].ratio, 1e-6)


def test_regularization_bound_kappaL_trend():
    # (kappa L)^-n with n = 2: quadrupling L cuts the tail term 16x ...
    tail = lambda kL: kL**-2.0
    assert tail(4 * 10) == pytest.approx(tail(10) / 16.0)
    # ... and the measured truncation error does not grow when L doubles
    g = build_grid(1, 256.0, 4096)
    f = sample_periodic(g, "laminate")
    xc = g.centered_coords()[0]
    u0 = np.exp(-((xc / 6.0) ** 2)) * np.cos(0.3 * xc)
    u0 /= g.l2(u0)
    checks = [regularization_error(f, u0, 0.8, L, 4.0, 2.0) for L in (40.0, 80.0)]
    assert checks[1].measured <= checks[0].measured * 1.05


def test_reconstruct_identity_and_order_zero(identity_set, torus):
    from homwave.twoscale import tile_cell_array

    g = identity_set.grid
    xc = g.centered_coords()[0]
    ubar = np.cos(2 * math.pi * xc / g.extent)
    hat = g.fft(ubar)
    rec0 = two_scale_reconstruct(identity_set, hat, 0, g)
    rec2 = two_scale_reconstruct(identity_set, hat, 2, g)
    assert g.l2(rec0 - ubar) < 1e-12
    assert g.l2(rec2 - ubar) < 1e-12


def test_reconstruct_first_order_laminate(laminate_set, laminate_oracle):
    cell = laminate_set.grid
    big = build_grid(1, 64.0, 64 * cell.points)
    xi = big.freqs()[0]
    hat = np.where(np.abs(xi) <= 0.4, np.exp(-(xi / 0.2) ** 2), 0.0) * big.size
    ubar = big.ifft(hat)
    ubar = ubar / big.l2(ubar)
    rec = two_scale_reconstruct(laminate_set, big.fft(ubar), 1, big)
    from homwave.twoscale import tile_cell_array, _derivative_field

    du = _derivative_field(big, big.fft(ubar), (0,))
    phi1 = tile_cell_array(laminate_oracle.phi[1][(0,)], cell, big)
    expected = ubar + phi1 * du
    # tolerance set by the oracle-vs-spectral corrector gap on the laminate
    assert big.l2(rec - expected) < 1e-4 * big.l2(du)


def test_error_budget_identity_medium(identity_set):
    cell = identity_set.grid
    field = tile_field(identity_set.field, 64)
    grid = field.grid
    xc = grid.centered_coords()[0]
    u0 = math.sqrt(0.4) * np.exp(-((0.4 * xc) ** 2))
    u0 /= grid.l2(u0)
    series = error_budget(field, identity_set, u0, 0.4, 16.0, 2, [2.0, 5.0])
    for row in series:
        assert row.A0 < 1e-12 and row.A < 1e-12
        assert row.B < 1e-12 and row.C < 1e-12 and row.D < 1e-12
        assert row.measured < 1e-6


def test_error_budget_d_vanishes_at_n1(laminate_set):
    field = tile_field(laminate_set.field, 128)
    grid = field.grid
    xc = grid.centered_coords()[0]
    u0 = math.sqrt(0.3) * np.exp(-((0.3 * xc) ** 2))
    u0 /= grid.l2(u0)
    series = error_budget(field, laminate_set, u0, 0.3, 16.0, 1, [3.0])
    assert series[0].D == 0.0
    assert series[0].M == 0.0
    assert series[0].measured <= series[0].bound


def test_error_budget_bound_nondecreasing():
    """The assembled bound and its secular component are nondecreasing along
    the sampled times (running suprema times growing horizons)."""
    from homwave.correctors import build_corrector_set

    cell = build_grid(1, 1.0, 16)
    cset = build_corrector_set(sample_periodic(cell, "laminate"), N=3)
    field = tile_field(cset.field, 1024)
    grid = field.grid
    xc = grid.centered_coords()[0]
    u0 = math.sqrt(0.1) * np.exp(-((0.1 * xc) ** 2))
    u0 /= grid.l2(u0)
    series = error_budget(field, cset, u0, 0.1, 60.0, 3, [5.0, 15.0, 40.0, 80.0])
    for a, b in zip(series, series[1:]):
        assert b.bound >= a.bound
        assert b.secular_rate >= a.secular_rate - 1e-15


def test_regularization_horizon_guard():
    g = build_grid(1, 64.0, 1024)
    f = sample_periodic(g, "laminate")
    xc = g.centered_coords()[0]
    u0 = np.exp(-((xc / 3.0) ** 2))
    from homwave.errors import HorizonError

    with pytest.raises(HorizonError):
        regularization_error(f, u0, 0.8, 24.0, 8.0, 100.0)


def test_scaling_experiment_needs_three_kappas(laminate):
    with pytest.raises(FitError):
        scaling_experiment(laminate, [1], [0.1, 0.2])


def test_scaling_experiment_n1_quick():
    cell = build_grid(1, 1.0, 16)
    f = sample_periodic(cell, "laminate")
    reports = scaling_experiment(f, N_list=[1], kappa_list=[0.08, 0.12, 0.18], n_times=3)
    assert abs(reports[0].exponent - 2.0) <= 0.4
    assert reports[0].dominance <= 100.0
