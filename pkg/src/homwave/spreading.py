"""Width functionals, the standing-wave probe, and lower-bound predictors.

The localization length l_theta is the smallest radius capturing a (1-theta)
fraction of the L2 norm; its energy analogue rescales the local stencil
energy by sqrt(lambda). The probe evolves a cut eigenstate and compares the
measured window norm against the dispersive + band + gradient terms of the
large-scale estimate, with the single absolute constant fitted once on the
identity medium and frozen.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import AdmissibilityError, HomwaveError, HorizonError
from .hetwave import Eigenpair, WaveOperator, WaveState, evolve_with_snapshots
from .media import CoefficientField, Grid, build_grid, sample_periodic

__all__ = [
    "WidthReport",
    "ProbeResult",
    "ExponentialWeight",
    "large_scale_average",
    "localization_length",
    "energy_width",
    "energy_density",
    "width_comparison",
    "standing_wave_probe",
    "predict_lower_bound",
    "probe_constant",
]

# window-sum path switches to FFT convolution above this many ball offsets
_DIRECT_WINDOW_LIMIT = 20_000


def _ball_offsets(grid: Grid, R: float):
    """Sorted lattice offsets with torus distance <= R (as index tuples)."""
    reach = int(math.floor(R / grid.h))
    rng = np.arange(-reach, reach + 1)
    if grid.d == 1:
        offs = [(int(k),) for k in rng if abs(k) * grid.h <= R]
    else:
        offs = [(int(i), int(j)) for i in rng for j in rng
                if math.hypot(i, j) * grid.h <= R]
    offs.sort()
    return offs


def large_scale_average(u: np.ndarray, R: float, grid: Grid) -> float:
    """sup over centers x of R^{-d/2} ||u||_{L2(B_R(x))} by moving-window sums.

    Small windows accumulate shifted copies in a fixed offset order (matching
    a per-center scan bit for bit); large windows use FFT convolution with the
    ball indicator."""
    if R < grid.h:
        raise HomwaveError(f"averaging radius {R} below grid spacing {grid.h}")
    w = u**2
    offs = _ball_offsets(grid, R)
    if len(offs) <= _DIRECT_WINDOW_LIMIT:
        acc = np.zeros_like(w)
        for off in offs:
            acc += np.roll(w, shift=off, axis=tuple(range(grid.d)))
        mass = acc
    else:
        ind = (grid.torus_radius() <= R).astype(float)
        mass = grid.ifft(grid.fft(w) * np.conj(grid.fft(ind))).real
        mass = np.maximum(mass, 0.0)
    best = float(np.max(mass)) * grid.cell_volume
    return R ** (-grid.d / 2.0) * math.sqrt(max(best, 0.0))


def brute_force_window_scan(u: np.ndarray, R: float, grid: Grid) -> float:
    """Independent per-center scan with the same offset ordering (oracle)."""
    offs = _ball_offsets(grid, R)
    w = u**2
    n = grid.points
    best = -math.inf
    it = np.ndindex(*grid.shape)
    for center in it:
        total = 0.0
        for off in offs:
            if grid.d == 1:
                total += w[(center[0] - off[0]) % n]
            else:
                total += w[(center[0] - off[0]) % n, (center[1] - off[1]) % n]
        best = max(best, total)
    return R ** (-grid.d / 2.0) * math.sqrt(best * grid.cell_volume)


def _radial_cumulative(grid: Grid, density: np.ndarray):
    """Sorted radii and cumulative h^d-weighted sums of the density."""
    r = grid.torus_radius().ravel()
    order = np.argsort(r, kind="stable")
    csum = np.cumsum(density.ravel()[order]) * grid.cell_volume
    return r[order], csum


def _bracket_radius(radii, cumulative, target: float):
    """Smallest radius where the cumulative reaches the target, linearly
    interpolated between the bracketing distinct grid radii."""
    distinct, last = np.unique(radii, return_index=False), None
    # cumulative value at each distinct radius = last entry with that radius
    idx_last = np.searchsorted(radii, distinct, side="right") - 1
    cum_d = cumulative[idx_last]
    j = int(np.searchsorted(cum_d, target, side="left"))
    if j >= len(distinct):
        return None
    r_hi, c_hi = float(distinct[j]), float(cum_d[j])
    r_lo, c_lo = (float(distinct[j - 1]), float(cum_d[j - 1])) if j > 0 else (0.0, 0.0)
    if c_hi <= c_lo:
        return r_hi
    frac = (target - c_lo) / (c_hi - c_lo)
    return r_lo + float(np.clip(frac, 0.0, 1.0)) * (r_hi - r_lo)


@dataclass(frozen=True)
class WidthReport:
    theta: float
    mass_width: float
    energy_width: float
    energy_theta: float
    eigenvalue: float
    saturated: bool


def localization_length(psi: np.ndarray, theta: float, grid: Grid):
    """Smallest r with ||psi||_{L2(B_r)} >= (1 - theta) ||psi||, interpolated
    between bracketing grid radii; saturates at the torus half-width."""
    if not (0.0 < theta < 0.5):
        raise HomwaveError(f"theta must lie in (0, 1/2), got {theta}")
    total = grid.l2(psi)
    radii, cum = _radial_cumulative(grid, psi**2)
    target = ((1.0 - theta) * total) ** 2
    r = _bracket_radius(radii, cum, target)
    if r is None:
        return 0.5 * grid.extent, True
    return r, False


def energy_density(field: CoefficientField, psi: np.ndarray) -> np.ndarray:
    """Node density of the stencil energy grad psi . A grad psi: half-edge
    (and centered mixed) contributions split evenly between their endpoints,
    so the h^d-weighted sum equals <psi, -L psi> exactly."""
    g = field.grid
    op = WaveOperator(field)
    inv_h2 = 1.0 / g.h**2
    if g.d == 1:
        du = (np.roll(psi, -1) - psi)
        edge = op.ah * du**2 * inv_h2
        return 0.5 * (edge + np.roll(edge, 1))
    dux = np.roll(psi, -1, axis=0) - psi
    duy = np.roll(psi, -1, axis=1) - psi
    ex = op.a11h * dux**2 * inv_h2
    ey = op.a22h * duy**2 * inv_h2
    dens = 0.5 * (ex + np.roll(ex, 1, axis=0)) + 0.5 * (ey + np.roll(ey, 1, axis=1))
    dx0 = (np.roll(psi, -1, axis=0) - np.roll(psi, 1, axis=0)) / 2.0
    dy0 = (np.roll(psi, -1, axis=1) - np.roll(psi, 1, axis=1)) / 2.0
    dens += 2.0 * op.a12 * dx0 * dy0 * inv_h2
    return dens


def energy_width(psi: np.ndarray, lam: float, field: CoefficientField, theta: float):
    """Smallest r with lambda^{-1/2} ||sqrt(A) grad psi||_{L2(B_r)} >= (1-theta) ||psi||.

    The full-space rescaled energy equals ||psi|| by the Rayleigh identity for
    exact discrete eigenpairs; if it deviates by more than 1% the actual
    full-space energy renormalizes the threshold (flagged)."""
    if lam <= 0:
        raise HomwaveError("energy width needs a positive eigenvalue")
    grid = field.grid
    dens = energy_density(field, psi) / lam
    total_sq = grid.cell_volume * float(np.sum(dens))
    norm_sq = grid.l2(psi) ** 2
    flagged = abs(total_sq - norm_sq) > 0.01 * norm_sq
    target_total = total_sq if flagged else norm_sq
    radii, cum = _radial_cumulative(grid, dens)
    target = (1.0 - theta) ** 2 * target_total
    r = _bracket_radius(radii, cum, target)
    if r is None:
        return 0.5 * grid.extent, True, flagged
    return r, False, flagged


@dataclass(frozen=True)
class ExponentialWeight:
    """Normalized kernel exp(-sqrt(lambda)|x|/alpha) on the torus."""

    grid: Grid
    lam: float
    alpha: float
    kernel: np.ndarray

    @classmethod
    def build(cls, grid: Grid, lam: float, alpha: float) -> "ExponentialWeight":
        if alpha < 1.0:
            raise HomwaveError("exponential weight requires alpha >= 1")
        raw = np.exp(-math.sqrt(lam) / alpha * grid.torus_radius())
        K = grid.cell_volume * float(np.sum(raw))
        return cls(grid=grid, lam=float(lam), alpha=float(alpha), kernel=raw / K)

    def shifted(self, center_idx) -> np.ndarray:
        return np.roll(self.kernel, shift=center_idx, axis=tuple(range(self.grid.d)))


def weighted_inequality_slack(field: CoefficientField, pair: Eigenpair, alpha: float,
                              centers=None):
    """Minimum slack of the exponentially-weighted energy inequality
    (1 + 2/alpha) int zeta(.-z) grad psi . A grad psi - lambda int zeta(.-z) |psi|^2
    over sampled centers z."""
    grid = field.grid
    zeta = ExponentialWeight.build(grid, pair.eigenvalue, alpha)
    dens = energy_density(field, pair.psi)
    psi2 = pair.psi**2
    if centers is None:
        step = max(1, grid.points // 16)
        if grid.d == 1:
            centers = [(i,) for i in range(0, grid.points, step)]
        else:
            centers = [(i, j) for i in range(0, grid.points, step) for j in range(0, grid.points, step)]
    worst = math.inf
    for z in centers:
        w = zeta.shifted(z)
        lhs = pair.eigenvalue * grid.cell_volume * float(np.sum(w * psi2))
        rhs = (1.0 + 2.0 / alpha) * grid.cell_volume * float(np.sum(w * dens))
        worst = min(worst, rhs - lhs)
    return worst


def width_comparison(field: CoefficientField, pair: Eigenpair, theta: float, alpha: float,
                     tail_constant: float | None = None):
    """Mass width, admissible energy threshold, and the energy width at it.

    Evaluates the weighted energy inequality at sampled centers, then the tail
    inequality at R = l_theta:

        lam ||psi||^2_{out B_R} <= (1+2/alpha) E_{out B_{R/4}} + C lam e^{-sqrt(lam) R/(8 alpha)}

    calibrating C from the measured sides unless one is supplied, and returns
    the largest admissible energy threshold
    theta_hat = (1+2/alpha)^{-1/2} (theta^2 - C exp(-sqrt(lam) R/(8 alpha)))^{1/2}
    together with the check l'_theta_hat >= l_theta / 4."""
    if pair.residual > 1e-6:
        raise HomwaveError(f"eigen-residual {pair.residual:.2e} too large for width comparison")
    grid = field.grid
    lam = pair.eigenvalue
    l_theta, saturated = localization_length(pair.psi, theta, grid)
    slack = weighted_inequality_slack(field, pair, alpha)
    r = grid.torus_radius()
    tail_sq = grid.l2(pair.psi * (r > l_theta)) ** 2
    dens = energy_density(field, pair.psi)
    e_out = grid.cell_volume * float(np.sum(dens[r > l_theta / 4.0]))
    expo_raw = math.exp(-math.sqrt(lam) * l_theta / (8.0 * alpha))
    if tail_constant is None:
        # smallest C for which the measured tail inequality holds
        c_used = max((lam * tail_sq - (1.0 + 2.0 / alpha) * e_out) / (lam * expo_raw), 0.0)
    else:
        c_used = tail_constant
    inner = theta**2 - c_used * expo_raw
    if inner <= 0.0:
        raise AdmissibilityError(
            f"admissibility empty: tail term {c_used * expo_raw:.3e} >= theta^2 = {theta**2:.3e}")
    theta_hat = (1.0 + 2.0 / alpha) ** (-0.5) * math.sqrt(inner)
    l_energy, esat, flagged = energy_width(pair.psi, lam, field, theta_hat)
    report = WidthReport(theta=theta, mass_width=l_theta, energy_width=l_energy,
                         energy_theta=theta_hat, eigenvalue=lam, saturated=saturated or esat)
    holds = l_energy >= l_theta / 4.0
    return report, slack, holds


@dataclass(frozen=True)
class ProbeResult:
    """Standing-wave probe rows: per sampled period-multiple, the measured
    window norm, the assembled right-hand side pieces, and the signed slack
    RHS - (||psi||_{B_R} - tail)."""

    kappa: float
    R: float
    L: float
    eigenvalue: float
    times: tuple
    window_norms: tuple
    rhs_values: tuple
    slacks: tuple
    lhs: float
    tail: float
    constant: float


@lru_cache(maxsize=None)
def probe_constant(d: int = 1) -> float:
    """Absolute constant of the probe inequality, fitted once on the identity
    medium with a localized pulse and frozen thereafter."""
    grid = build_grid(d, 256.0 if d == 1 else 64.0, 2048 if d == 1 else 256)
    field = sample_periodic(grid, "constant")
    r = grid.torus_radius()
    psi = np.exp(-(r / 4.0) ** 2)
    psi /= grid.l2(psi)
    kappa, R, L = 0.5, 8.0, 16.0
    times = [12.0, 24.0, 36.0]
    worst = 0.0
    states = evolve_with_snapshots(field, WaveState.from_rest(grid, psi), times)
    ball_R = r <= R
    for st in states:
        win = grid.l2(st.u * ball_R)
        rhs = _probe_rhs_terms(field, psi, kappa, R, L, st.t)
        worst = max(worst, win / rhs)
    return worst


def _probe_rhs_terms(field: CoefficientField, psi: np.ndarray, kappa: float, R: float,
                     L: float, t: float, eta: float = 0.2) -> float:
    """Constant-free dispersive + band + gradient combination of the
    large-scale estimate for cut data chi_{2L} psi."""
    grid = field.grid
    r = grid.torus_radius()
    ball_2L = r <= 2.0 * L
    d = grid.d
    l1 = grid.l1(psi * ball_2L)
    l2 = grid.l2(psi * ball_2L)
    dens = energy_density(field, psi)
    grad_l2 = math.sqrt(grid.cell_volume * float(np.sum(dens[ball_2L])))
    disp = R ** (d / 2.0) * kappa**d * (1.0 + kappa * t) ** (eta - d) * l1
    band = (kappa + 1.0 / (kappa * L)) * l2
    grad = grad_l2 / kappa
    return disp + band + grad


def standing_wave_probe(field: CoefficientField, pair: Eigenpair, kappa: float, R: float,
                        L: float, periods: int, constant: float | None = None,
                        dt: float | None = None) -> ProbeResult:
    """Evolve chi_{2L} psi and compare the window norm against the assembled
    estimate at multiples of the discrete standing-wave period 2 pi / sqrt(lambda).

    Times are snapped to exact step multiples of the period computed from the
    *discrete* eigenvalue, so the standing-wave identity holds at the stencil
    level."""
    from .twoscale import build_cutoff

    grid = field.grid
    lam = pair.eigenvalue
    if lam <= 0:
        raise HomwaveError("probe needs a positive eigenvalue")
    period = 2.0 * math.pi / math.sqrt(lam)
    t_max = periods * period
    if 2.0 * L + field.max_speed * t_max >= 0.5 * grid.extent:
        raise HorizonError("probe horizon exceeds the torus: shrink periods or L")
    chi = build_cutoff(2.0 * L, grid)
    u0 = chi.chi * pair.psi
    # snap the period to an exact number of steps at (at most) the default dt
    from .hetwave import cfl_dt

    dt_req = dt or cfl_dt(field)
    steps_per_period = max(1, math.ceil(period / dt_req))
    dt_eff = period / steps_per_period
    times = [k * period for k in range(1, periods + 1)]
    states = evolve_with_snapshots(field, WaveState.from_rest(grid, u0), times, dt=dt_eff)

    r = grid.torus_radius()
    ball_R = r <= R
    tail = grid.l2(pair.psi * (r > L))
    lhs = grid.l2(pair.psi * ball_R) - tail
    C = probe_constant(grid.d) if constant is None else constant
    wins, rhss, slacks = [], [], []
    for st in states:
        win = grid.l2(st.u * ball_R)
        rhs = C * _probe_rhs_terms(field, pair.psi, kappa, R, L, st.t)
        wins.append(win)
        rhss.append(rhs)
        slacks.append(rhs - lhs)
    return ProbeResult(kappa=kappa, R=R, L=L, eigenvalue=lam,
                       times=tuple(st.t for st in states), window_norms=tuple(wins),
                       rhs_values=tuple(rhss), slacks=tuple(slacks), lhs=lhs, tail=tail,
                       constant=C)


def recenter_eigenpair(field: CoefficientField, pair: Eigenpair):
    """Torus-translate field and eigenstate so the state's mass centers at the
    origin (index roll; exact covariance of the discrete operator)."""
    grid = field.grid
    peak = np.unravel_index(int(np.argmax(np.abs(pair.psi))), grid.shape)
    shift = tuple(-int(p) for p in peak)
    axes = tuple(range(grid.d))
    values = np.roll(field.values, shift=shift, axis=axes)
    from .media import CoefficientField as CF

    field2 = CF(grid=grid, values=np.ascontiguousarray(values), kind=field.kind,
                params=dict(field.params), floor=field.floor, ceiling=field.ceiling)
    psi2 = np.roll(pair.psi, shift=shift, axis=axes)
    pair2 = Eigenpair(grid=grid, eigenvalue=pair.eigenvalue, psi=psi2, residual=pair.residual,
                      bc=pair.bc, participation_ratio=pair.participation_ratio)
    return field2, pair2


def predict_lower_bound(setting: str, lam: float, sigma: float | None = None,
                        d: int = 1, eps: float = 0.0):
    """Localization-length lower-bound predictor per setting.

    periodic -> None (no eigenvalue below the threshold at all);
    quasiperiodic -> exp(lam^-sigma); random -> lam^(eps - 2/3) in 1D,
    lam^(eps - (floor(d/2)+1)/2) above; hyperuniform1d -> lam^(eps-1)."""
    if lam <= 0:
        raise HomwaveError("predictor needs lambda > 0")
    if setting == "periodic":
        return None
    if setting == "quasiperiodic":
        if sigma is None or sigma <= 0:
            raise HomwaveError("quasiperiodic predictor needs sigma > 0 (Diophantine/Gevrey dependent)")
        return math.exp(lam ** (-sigma))
    if setting == "random":
        if d == 1:
            return lam ** (eps - 2.0 / 3.0)
        return lam ** (eps - 0.5 * (d // 2 + 1))
    if setting == "hyperuniform1d":
        return lam ** (eps - 1.0)
    raise HomwaveError(f"unknown setting {setting!r}")
