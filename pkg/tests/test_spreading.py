import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homwave.errors import HomwaveError
from homwave.hetwave import discrete_eigenpairs
from homwave.media import build_grid, sample_periodic, sample_random
from homwave.spreading import (ExponentialWeight, brute_force_window_scan, energy_density,
                               energy_width, large_scale_average, localization_length,
                               predict_lower_bound, recenter_eigenpair, standing_wave_probe,
                               weighted_inequality_slack, width_comparison)


@pytest.fixture(scope="module")
def grid16():
    return build_grid(1, 16.0, 1024)


def test_window_average_full_mass(grid16):
    r = grid16.torus_radius()
    u = np.where(r <= 1.0, 1.0, 0.0)
    u /= grid16.l2(u)
    for R in (2.0, 4.0):
        val = large_scale_average(u, R, grid16)
        assert val == pytest.approx(R ** (-0.5), rel=1e-12)


def test_window_average_constant_field(grid16):
    from homwave.spreading import _ball_offsets

    c = 0.7
    u = np.full(grid16.shape, c)
    for R in (1.0, 2.0):
        # center-independent: R^{-d/2} c sqrt(vol of the discrete ball)
        vol = len(_ball_offsets(grid16, R)) * grid16.h
        expected = R ** (-0.5) * c * math.sqrt(vol)
        assert large_scale_average(u, R, grid16) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(c * math.sqrt(2.0), rel=0.02)


def test_window_average_equals_brute_force_exactly(rng):
    g = build_grid(1, 4.0, 64)
    u = rng.standard_normal(g.shape)
    assert large_scale_average(u, 0.7, g) == brute_force_window_scan(u, 0.7, g)
    g2 = build_grid(2, 4.0, 64)
    u2 = rng.standard_normal(g2.shape)
    assert large_scale_average(u2, 0.6, g2) == brute_force_window_scan(u2, 0.6, g2)


def test_localization_length_indicator(grid16):
    r = grid16.torus_radius()
    rho = 2.0
    psi = np.where(r <= rho, 1.0, 0.0)
    psi /= grid16.l2(psi)
    for theta in (0.1, 0.3):
        l, sat = localization_length(psi, theta, grid16)
        # cumulative norm of the 1D indicator: sqrt(r/rho) -> l = rho (1-theta)^2
        assert not sat
        assert l == pytest.approx(rho * (1 - theta) ** 2, abs=2 * grid16.h)


def test_localization_theta_bounds(grid16):
    psi = np.exp(-grid16.torus_radius() ** 2)
    psi /= grid16.l2(psi)
    with pytest.raises(HomwaveError):
        localization_length(psi, 0.7, grid16)


@settings(max_examples=15, deadline=None)
@given(t1=st.floats(0.02, 0.44), t2=st.floats(0.02, 0.44))
def test_localization_monotone(t1, t2):
    g = build_grid(1, 16.0, 256)
    psi = np.exp(-g.torus_radius() ** 2)
    psi = psi / g.l2(psi)
    l1 = localization_length(psi, t1, g)[0]
    l2 = localization_length(psi, t2, g)[0]
    if t1 < t2:
        assert l1 >= l2 - 1e-12
    elif t2 < t1:
        assert l2 >= l1 - 1e-12


def test_localization_translation_invariant(grid16):
    psi = np.exp(-grid16.torus_radius() ** 2)
    psi /= grid16.l2(psi)
    base, _ = localization_length(psi, 0.25, grid16)
    shifted = np.roll(psi, 100)
    recentered = np.roll(shifted, -100)
    l2_, _ = localization_length(recentered, 0.25, grid16)
    assert l2_ == pytest.approx(base, abs=grid16.h)


def test_rescaling_identity():
    g = build_grid(1, 32.0, 2048)
    xc = g.centered_coords()[0]
    lam = 4.0
    phi = np.exp(-(xc**2))
    phi /= g.l2(phi)
    phil = np.exp(-((math.sqrt(lam) * xc) ** 2))
    phil /= g.l2(phil)
    for theta in (0.1, 0.25):
        l0 = localization_length(phi, theta, g)[0]
        l1 = localization_length(phil, theta, g)[0]
        assert abs(l1 - l0 / math.sqrt(lam)) <= 2 * g.h


def test_energy_density_sums_to_quadratic_form():
    g = build_grid(1, 8.0, 512)
    f = sample_random(g, seed=2, correlation_range=0.25, contrast=4.0)
    rng = np.random.default_rng(3)
    psi = rng.standard_normal(g.shape)
    from homwave.hetwave import WaveOperator

    op = WaveOperator(f)
    dens = energy_density(f, psi)
    assert g.cell_volume * np.sum(dens) == pytest.approx(
        -g.cell_volume * np.sum(psi * op.apply(psi)), rel=1e-12)


def test_energy_width_rayleigh_identity():
    g = build_grid(1, 8.0, 512)
    f = sample_periodic(g, "constant", cell=8.0)
    pair = discrete_eigenpairs(f, 1, bc="dirichlet")[0]
    dens = energy_density(f, pair.psi) / pair.eigenvalue
    total = g.cell_volume * np.sum(dens)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_energy_width_box_sine_closed_form():
    g = build_grid(1, 8.0, 1024)
    f = sample_periodic(g, "constant", cell=8.0)
    pair = discrete_eigenpairs(f, 1, bc="dirichlet")[0]
    # recenter the box mode: it peaks at L/2; measure widths about the peak
    f2, p2 = recenter_eigenpair(f, pair)
    theta = 0.25
    lw, sat, flagged = energy_width(p2.psi, p2.eigenvalue, f2, theta)
    assert not sat and not flagged
    # analytic: energy density ~ cos^2(pi x / L) about the... mass of cos^2 in
    # radius r around the node of sin': integral (r + sin(2 pi r/L) L/(2 pi))/L
    L = g.extent
    target = (1 - theta) ** 2

    def mass(rr):
        # energy density cos^2(pi x/L) around the sine peak at L/2
        return 2 * rr / L - math.sin(2 * math.pi * rr / L) / math.pi

    lo, hi = 0.0, L / 2
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if mass(mid) < target:
            lo = mid
        else:
            hi = mid
    assert lw == pytest.approx(0.5 * (lo + hi), abs=4 * g.h)


def test_exponential_weight_normalized(grid16):
    w = ExponentialWeight.build(grid16, lam=2.0, alpha=3.0)
    assert grid16.cell_volume * np.sum(w.kernel) == pytest.approx(1.0, abs=1e-10)


def test_weighted_inequality_on_eigenpairs():
    g = build_grid(1, 64.0, 1024)
    f = sample_random(g, seed=11, correlation_range=0.5, contrast=16.0)
    for pair in discrete_eigenpairs(f, 3, target=2.0):
        for alpha in (1.0, 2.0, 8.0):
            assert weighted_inequality_slack(f, pair, alpha) >= -1e-8


def test_width_comparison_quarter_rule():
    from homwave.acceptance import localized_fixture

    l02, field, pair = localized_fixture()
    rep, slack, holds = width_comparison(field, pair, theta=0.25, alpha=2.0)
    assert slack >= -1e-8
    assert holds
    assert 0 < rep.energy_theta < 0.5


def test_probe_periodicity_without_truncation():
    from homwave.acceptance import localized_fixture

    l02, field, pair = localized_fixture()
    res = standing_wave_probe(field, pair, kappa=pair.eigenvalue**0.25,
                              R=3 * l02, L=8 * l02, periods=4)
    w = np.asarray(res.window_norms)
    assert np.max(np.abs(w - w[0])) < 1e-5


def test_probe_band_choice_floor_arithmetic():
    """With the bandwidth tied to the eigenvalue as kappa = lambda^(1/4), the
    non-dispersive floor kappa + sqrt(lambda)/kappa collapses to 2 lambda^(1/4)."""
    for lam in (1e-4, 0.04, 2.5):
        kappa = lam**0.25
        assert kappa + math.sqrt(lam) / kappa == pytest.approx(2.0 * lam**0.25, rel=1e-12)


def test_predict_lower_bound_values():
    assert predict_lower_bound("periodic", 0.01) is None
    assert predict_lower_bound("random", 1e-4, d=1, eps=0.1) == pytest.approx(10 ** (4 * (2 / 3 - 0.1)), rel=1e-10)
    assert predict_lower_bound("random", 0.01, d=2, eps=0.0) == pytest.approx(100.0)
    assert predict_lower_bound("hyperuniform1d", 0.01, eps=0.0) == pytest.approx(100.0)
    assert predict_lower_bound("quasiperiodic", 0.25, sigma=0.5) == pytest.approx(math.exp(0.25**-0.5))
    with pytest.raises(HomwaveError):
        predict_lower_bound("quasiperiodic", 0.25)
    with pytest.raises(HomwaveError):
        predict_lower_bound("random", -1.0)
