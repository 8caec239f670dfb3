import math

import numpy as np
import pytest

from homwave.errors import CFLError, HomwaveError, HorizonError
from homwave.hetwave import (WaveOperator, WaveState, cfl_dt, discrete_eigenpairs, energy,
                             energy_estimate_check, evolve_heterogeneous, evolve_with_snapshots,
                             finite_speed_check, _operator_matrix, _sparse_operator_2d)
from homwave.media import build_grid, sample_periodic, sample_random


@pytest.fixture(scope="module")
def torus64():
    return build_grid(1, 64.0, 1024)


@pytest.fixture(scope="module")
def laminate64(torus64):
    return sample_periodic(torus64, "laminate")


def _pulse(grid, width=2.0):
    r = grid.torus_radius()
    return np.exp(-((r / width) ** 2))


def test_constant_data_stays_constant(laminate64, torus64):
    st = WaveState.from_rest(torus64, np.full(torus64.shape, 3.7))
    out = evolve_heterogeneous(laminate64, st, 5.0)
    assert np.max(np.abs(out.u - 3.7)) < 1e-12


def test_cfl_rejected(laminate64, torus64):
    st = WaveState.from_rest(torus64, _pulse(torus64))
    with pytest.raises(CFLError):
        evolve_heterogeneous(laminate64, st, 1.0, dt=torus64.h)


def test_time_reversal(laminate64, torus64):
    u0 = _pulse(torus64)
    fwd = evolve_heterogeneous(laminate64, WaveState.from_rest(torus64, u0), 10.0)
    back = evolve_heterogeneous(laminate64, WaveState(grid=torus64, u=fwd.u, v=-fwd.v, t=0.0), 10.0)
    assert torus64.l2(back.u - u0) < 1e-8


def test_energy_zero_states(laminate64, torus64):
    zero = WaveState.from_rest(torus64, np.zeros(torus64.shape))
    assert energy(laminate64, zero) == 0.0
    const = WaveState.from_rest(torus64, np.ones(torus64.shape))
    assert abs(energy(laminate64, const)) < 1e-12


def test_energy_drift_scales_dt_squared(laminate64, torus64):
    u0 = _pulse(torus64, width=4.0)
    st = WaveState.from_rest(torus64, u0)
    e0 = energy(laminate64, st)
    drifts = []
    for fac in (1.0, 0.5):
        fin = evolve_heterogeneous(laminate64, st, 5.0, dt=fac * cfl_dt(laminate64))
        drifts.append(abs(energy(laminate64, fin) - e0) / e0)
    assert drifts[1] < 0.4 * drifts[0]


def test_snapshots_match_single_run(laminate64, torus64):
    u0 = _pulse(torus64)
    st = WaveState.from_rest(torus64, u0)
    dt = cfl_dt(laminate64)
    snaps = evolve_with_snapshots(laminate64, st, [2.0, 5.0], dt=dt)
    direct = evolve_heterogeneous(laminate64, st, snaps[1].t, dt=dt)
    assert np.max(np.abs(snaps[1].u - direct.u)) < 1e-12


def test_finite_speed_trivial_cases(torus64, laminate64):
    u0 = np.where(torus64.torus_radius() < 2.0, 1.0, 0.0)
    leak0 = finite_speed_check(laminate64, u0, 2.0, 0.0)
    assert leak0 == 0.0
    with pytest.raises(HorizonError):
        finite_speed_check(laminate64, u0, 2.0, 1e4)


def test_energy_estimate_free_case(laminate64, torus64):
    v0 = _pulse(torus64)
    lhs, rhs, ratio = energy_estimate_check(laminate64, v0=v0, t_end=4.0)
    assert rhs == pytest.approx(torus64.l2(v0))
    assert lhs <= rhs * (1 + 1e-10)


def test_energy_estimate_g_must_vanish(laminate64, torus64):
    with pytest.raises(HomwaveError):
        energy_estimate_check(laminate64, g_force=lambda t: np.ones(torus64.shape), t_end=1.0)


def test_energy_estimate_h_linear_growth(laminate64, torus64):
    bump = _pulse(torus64)
    bump = bump - bump.mean()
    ratios = []
    for t_end in (4.0, 8.0):
        lhs, rhs, ratio = energy_estimate_check(laminate64, h_force=lambda t: bump, t_end=t_end)
        ratios.append(ratio)
        assert ratio <= 1.5
    assert ratios[1] <= ratios[0] * 1.5


def test_energy_estimate_oscillatory_f_stable_constant():
    ratios = []
    for pts in (512, 1024):
        g = build_grid(1, 64.0, pts)
        f = sample_periodic(g, "laminate")
        r = g.torus_radius()
        prof = np.exp(-((r / 3.0) ** 2))
        force = lambda t: (math.sin(3.0 * t) * prof)[None, :]
        lhs, rhs, ratio = energy_estimate_check(f, f=force, t_end=6.0)
        ratios.append(ratio)
    assert ratios[0] <= 1.0 and ratios[1] <= 1.0
    assert abs(ratios[1] - ratios[0]) < 0.5 * max(ratios)


def test_dirichlet_box_spectrum():
    g = build_grid(1, 8.0, 512)
    f = sample_periodic(g, "constant", cell=8.0)
    pairs = discrete_eigenpairs(f, 3, bc="dirichlet")
    L = g.extent
    for k, p in enumerate(pairs, start=1):
        lam_exact = (math.pi * k / L) ** 2
        assert p.eigenvalue == pytest.approx(lam_exact, rel=5e-4)  # O(h^2)
        x = g.axis()
        mode = np.sin(math.pi * k * x / L)
        mode /= g.l2(mode)
        overlap = abs(g.cell_volume * np.sum(mode * p.psi))
        assert overlap == pytest.approx(1.0, abs=1e-8)


def test_eigen_matrix_matches_stencil():
    small = build_grid(1, 4.0, 64)
    f = sample_periodic(small, "laminate")
    op = WaveOperator(f)
    M = _operator_matrix(op, "periodic")
    e = np.zeros(small.points)
    for j in range(small.points):
        e[:] = 0.0
        e[j] = 1.0
        np.testing.assert_array_equal(M[:, j], -op.apply(e))  # entry for entry
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = rng.standard_normal(small.points)
        np.testing.assert_allclose(M @ x, -op.apply(x), atol=1e-11)


def test_sparse_2d_matches_stencil():
    g = build_grid(2, 2.0, 32)
    f = sample_periodic(g, "anisotropic_cosine")
    op = WaveOperator(f)
    A = _sparse_operator_2d(op)
    rng = np.random.default_rng(1)
    for _ in range(3):
        x = rng.standard_normal(g.shape)
        got = (A @ x.ravel()).reshape(g.shape)
        np.testing.assert_allclose(got, -op.apply(x), atol=1e-12)


def test_2d_eigenpairs_constant_medium():
    g = build_grid(2, 8.0, 32)
    f = sample_periodic(g, "diagonal", a11=1.0, a22=2.0)
    pairs = discrete_eigenpairs(f, 2, target=0.5)
    # discrete symbol of the flux stencil: (4/h^2)(a11 sin^2(xi1 h/2) + a22 sin^2(xi2 h/2))
    h = g.h
    xi1 = 2 * math.pi / g.extent
    cands = sorted({(4 / h**2) * (1.0 * math.sin(k1 * xi1 * h / 2) ** 2
                                  + 2.0 * math.sin(k2 * xi1 * h / 2) ** 2)
                    for k1 in range(0, 4) for k2 in range(0, 4)} - {0.0})
    assert pairs[0].eigenvalue == pytest.approx(cands[0], rel=1e-10)


def test_standing_wave_period(laminate64):
    g = build_grid(1, 32.0, 512)
    f = sample_random(g, seed=5, correlation_range=0.5, contrast=16.0)
    pair = discrete_eigenpairs(f, 1, target=3.0)[0]
    T = 2 * math.pi / math.sqrt(pair.eigenvalue)
    dt = cfl_dt(f) / 8.0
    out = evolve_with_snapshots(f, WaveState.from_rest(g, pair.psi), [T], dt=dt)[0]
    assert g.l2(out.u - pair.psi) < 1e-6
