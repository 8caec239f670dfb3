"""Reference evolution of the heterogeneous wave equation.

Leapfrog in time on the flux-form second-order stencil: diagonal coefficients
harmonically averaged to half-nodes (which reproduces 1D homogenization limits
exactly on laminates), off-diagonal coupling by centered differences. The
eigen-solver assembles exactly this stencil, so standing-wave identities hold
at the discrete level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import CFLError, HomwaveError, HorizonError, SolverError
from .media import CoefficientField, Grid

__all__ = [
    "WaveState",
    "Eigenpair",
    "WaveOperator",
    "evolve_heterogeneous",
    "evolve_with_snapshots",
    "energy",
    "finite_speed_check",
    "energy_estimate_check",
    "discrete_eigenpairs",
    "cfl_dt",
]

NAN_CHECK_CHUNK = 256


@dataclass(frozen=True)
class WaveState:
    """Displacement/velocity pair at a time on a grid."""

    grid: Grid
    u: np.ndarray
    v: np.ndarray
    t: float

    @classmethod
    def from_rest(cls, grid: Grid, u0: np.ndarray, t: float = 0.0) -> "WaveState":
        return cls(grid=grid, u=np.asarray(u0, dtype=float).copy(), v=np.zeros(grid.shape), t=t)


@dataclass(frozen=True)
class Eigenpair:
    """Discrete eigenpair of -div(A grad .) with the evolution stencil."""

    grid: Grid
    eigenvalue: float
    psi: np.ndarray
    residual: float
    bc: str
    participation_ratio: float


def cfl_dt(field: CoefficientField) -> float:
    """Default step: half the stability bound h / (sqrt(C0) sqrt(d))."""
    g = field.grid
    return 0.5 * g.h / (math.sqrt(field.C0) * math.sqrt(g.d))


class WaveOperator:
    """div(A grad .) on the periodic grid in the evolution discretization."""

    def __init__(self, field: CoefficientField):
        self.field = field
        self.grid = field.grid
        g = self.grid
        self.inv_h2 = 1.0 / g.h**2
        if g.d == 1:
            a = field.comp(0, 0)
            self.ah = np.ascontiguousarray(2.0 / (1.0 / a + 1.0 / np.roll(a, -1)))
        else:
            a11 = field.comp(0, 0)
            a22 = field.comp(1, 1)
            self.a11h = np.ascontiguousarray(2.0 / (1.0 / a11 + 1.0 / np.roll(a11, -1, axis=0)))
            self.a22h = np.ascontiguousarray(2.0 / (1.0 / a22 + 1.0 / np.roll(a22, -1, axis=1)))
            self.a12 = np.ascontiguousarray(field.comp(0, 1))

    def apply(self, u: np.ndarray) -> np.ndarray:
        out = np.empty_like(u)
        if self.grid.d == 1:
            _kernels.lap1d(u, self.ah, self.inv_h2, out)
        else:
            _kernels.lap2d(u, self.a11h, self.a22h, self.a12, self.inv_h2, out)
        return out

    def run_leapfrog(self, u: np.ndarray, u_prev: np.ndarray, dt: float, nsteps: int):
        """Advance (u, u_prev) by nsteps in place, with periodic NaN checks."""
        done = 0
        while done < nsteps:
            chunk = min(NAN_CHECK_CHUNK, nsteps - done)
            if self.grid.d == 1:
                _kernels.leap1d(u, u_prev, self.ah, self.inv_h2, dt * dt, chunk)
            else:
                _kernels.leap2d(u, u_prev, self.a11h, self.a22h, self.a12, self.inv_h2, dt * dt, chunk)
            done += chunk
            if not np.isfinite(u).all():
                raise SolverError(f"NaN detected in leapfrog between steps {done - chunk} and {done}")
        return u, u_prev

    def max_dt(self) -> float:
        return self.grid.h / (math.sqrt(self.field.C0) * math.sqrt(self.grid.d))

    def pair_from_state(self, state: WaveState, dt: float):
        lu = self.apply(state.u)
        u_prev = state.u - dt * state.v + 0.5 * dt * dt * lu
        return state.u.copy(), u_prev

    def state_from_pair(self, u: np.ndarray, u_prev: np.ndarray, dt: float, t: float) -> WaveState:
        v = (u - u_prev) / dt + 0.5 * dt * self.apply(u)
        return WaveState(grid=self.grid, u=u, v=v, t=t)


def _resolve_steps(delta_t: float, dt: float | None, op: WaveOperator):
    dt_max = op.max_dt()
    if dt is None:
        dt = cfl_dt(op.field)
    if dt > dt_max * (1.0 + 1e-12):
        raise CFLError(f"dt={dt:.3e} exceeds the stability bound {dt_max:.3e}")
    if delta_t == 0.0:
        return dt, 0
    nsteps = max(1, math.ceil(delta_t / dt - 1e-12))
    return delta_t / nsteps, nsteps


def evolve_heterogeneous(field: CoefficientField, state: WaveState, t_end: float,
                         dt: float | None = None) -> WaveState:
    """Leapfrog evolution of the state to t_end (dt shrinks slightly if needed
    so that t_end is hit exactly; the default is half the CFL bound)."""
    if t_end < state.t:
        raise HomwaveError(f"t_end={t_end} earlier than state time {state.t}")
    op = WaveOperator(field)
    dt_eff, nsteps = _resolve_steps(t_end - state.t, dt, op)
    if nsteps == 0:
        return state
    u, u_prev = op.pair_from_state(state, dt_eff)
    op.run_leapfrog(u, u_prev, dt_eff, nsteps)
    return op.state_from_pair(u, u_prev, dt_eff, t_end)


def evolve_with_snapshots(field: CoefficientField, state: WaveState, times,
                          dt: float | None = None):
    """States at the requested times snapped to one uniform step lattice.

    Returns a list of WaveState whose .t are the snapped times; the trajectory
    is a single leapfrog run, so it matches evolve_heterogeneous segment by
    segment exactly."""
    op = WaveOperator(field)
    times = sorted(float(t) for t in times)
    if times and times[0] < state.t:
        raise HomwaveError("snapshot time earlier than state time")
    if dt is None:
        dt = cfl_dt(field)
    if dt > op.max_dt() * (1.0 + 1e-12):
        raise CFLError(f"dt={dt:.3e} exceeds the stability bound {op.max_dt():.3e}")
    steps = [int(round((t - state.t) / dt)) for t in times]
    u, u_prev = op.pair_from_state(state, dt)
    out = []
    done = 0
    for target in steps:
        if target > done:
            op.run_leapfrog(u, u_prev, dt, target - done)
            done = target
        out.append(op.state_from_pair(u.copy(), u_prev.copy(), dt, state.t + done * dt))
    return out


def energy(field: CoefficientField, state: WaveState) -> float:
    """Discrete wave energy 1/2 ||v||^2 + 1/2 <u, -Lu> (stencil quadratic form)."""
    op = WaveOperator(field)
    g = field.grid
    kinetic = 0.5 * g.cell_volume * float(np.sum(state.v**2))
    potential = -0.5 * g.cell_volume * float(np.sum(state.u * op.apply(state.u)))
    return kinetic + potential


def finite_speed_check(field: CoefficientField, u0: np.ndarray, support_radius: float,
                       t: float, dt: float | None = None) -> float:
    """Relative L2 mass of u(t) outside the sqrt(C0)-cone B_{r + c t}.

    Rejects configurations whose cone reaches the torus boundary (wrap-around
    would corrupt the measurement)."""
    g = field.grid
    c = field.max_speed
    reach = support_radius + c * t
    if reach >= 0.5 * g.extent:
        raise HorizonError(f"cone radius {reach:.2f} exceeds the torus half-width {0.5 * g.extent:.2f}")
    final = evolve_heterogeneous(field, WaveState.from_rest(g, u0), t, dt=dt)
    outside = g.torus_radius() > reach
    total = float(np.sum(final.u**2))
    if total == 0.0:
        return 0.0
    return float(np.sum(final.u[outside] ** 2)) / total


def energy_estimate_check(field: CoefficientField, f=None, g_force=None, h_force=None,
                          v0: np.ndarray | None = None, t_end: float = 1.0,
                          dt: float | None = None):
    """Forced evolution (d_tt - div A grad) v = div f + d_t g + h from rest.

    f/g_force/h_force are callables of time returning fields (f a stacked
    vector field); g must vanish at t = 0. Returns (lhs, rhs, ratio):
    lhs = ||v(t_end)||_L2, rhs the constant-free combination
    ||v0|| + t sup ||(f,g)|| + t sup ||int_0^s h||, ratio their quotient."""
    from .correctors import Spectral

    grid = field.grid
    op = WaveOperator(field)
    dt_eff, nsteps = _resolve_steps(t_end, dt, op)
    sp = Spectral(grid)

    if g_force is not None:
        g0 = np.asarray(g_force(0.0))
        if float(np.max(np.abs(g0))) > 1e-12:
            raise HomwaveError("g forcing must vanish at t = 0")

    def forcing(ti):
        F = np.zeros(grid.shape)
        if f is not None:
            F += np.real(grid.ifft(sp.div_hat(np.asarray(f(ti)))))
        if g_force is not None:
            hi, lo = min(ti + dt_eff, t_end), max(ti - dt_eff, 0.0)
            if hi > lo:
                F += (np.asarray(g_force(hi)) - np.asarray(g_force(lo))) / (hi - lo)
        if h_force is not None:
            F += np.asarray(h_force(ti))
        return F

    def fg_norm(ti):
        out = 0.0
        if f is not None:
            out += grid.l2(np.sqrt(np.sum(np.asarray(f(ti)) ** 2, axis=0)))
        if g_force is not None:
            out += grid.l2(np.asarray(g_force(ti)))
        return out

    u_cur = np.zeros(grid.shape) if v0 is None else np.asarray(v0, dtype=float).copy()
    v_init_norm = grid.l2(u_cur)
    u_prev = u_cur.copy()
    u_cur = u_cur + 0.5 * dt_eff**2 * (op.apply(u_cur) + forcing(0.0))

    sup_fg = fg_norm(0.0)
    sup_int_h = 0.0
    int_h = np.zeros(grid.shape)
    h_prev = np.asarray(h_force(0.0)) if h_force is not None else None
    for m in range(1, nsteps + 1):
        tm = m * dt_eff
        if m < nsteps:
            u_next = 2.0 * u_cur - u_prev + dt_eff**2 * (op.apply(u_cur) + forcing(tm))
            u_prev, u_cur = u_cur, u_next
        if h_force is not None:
            h_now = np.asarray(h_force(tm))
            int_h += 0.5 * dt_eff * (h_prev + h_now)
            h_prev = h_now
            sup_int_h = max(sup_int_h, grid.l2(int_h))
        sup_fg = max(sup_fg, fg_norm(tm))
    lhs = grid.l2(u_cur)
    rhs = v_init_norm + t_end * sup_fg + t_end * sup_int_h
    ratio = lhs / rhs if rhs > 0 else math.inf if lhs > 0 else 0.0
    return lhs, rhs, ratio


def _operator_matrix(op: WaveOperator, bc: str) -> np.ndarray:
    """Dense matrix of -div(A grad .) built by applying the evolution stencil
    to basis vectors (entry-for-entry consistency by construction)."""
    g = op.grid
    if g.d != 1:
        raise SolverError("dense eigen-assembly is 1D; use target-based 2D solves")
    n = g.points
    M = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[:] = 0.0
        e[j] = 1.0
        M[:, j] = -op.apply(e)
    if bc == "periodic":
        return M
    if bc == "dirichlet":
        return M[1:, 1:]
    raise SolverError(f"unknown boundary condition {bc!r}")


def _sparse_operator_2d(op: WaveOperator):
    """CSR matrix of -div(A grad .) mirroring the 2D kernel stencil exactly."""
    import scipy.sparse

    g = op.grid
    n = g.points
    ih2 = op.inv_h2
    a11h, a22h, a12 = op.a11h, op.a22h, op.a12
    rollm = lambda arr, dx, dy: np.roll(np.roll(arr, -dx, axis=0), -dy, axis=1)
    # coefficient of u[i+di, j+dj] in (L u)[i, j]
    coeffs = {
        (1, 0): ih2 * a11h,
        (-1, 0): ih2 * rollm(a11h, -1, 0),
        (0, 1): ih2 * a22h,
        (0, -1): ih2 * rollm(a22h, 0, -1),
        (0, 0): -ih2 * (a11h + rollm(a11h, -1, 0) + a22h + rollm(a22h, 0, -1)),
        (1, 1): 0.25 * ih2 * (rollm(a12, 1, 0) + rollm(a12, 0, 1)),
        (1, -1): -0.25 * ih2 * (rollm(a12, 1, 0) + rollm(a12, 0, -1)),
        (-1, 1): -0.25 * ih2 * (rollm(a12, -1, 0) + rollm(a12, 0, 1)),
        (-1, -1): 0.25 * ih2 * (rollm(a12, -1, 0) + rollm(a12, 0, -1)),
    }
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    rows_all, cols_all, data_all = [], [], []
    for (di, dj), C in coeffs.items():
        rows_all.append((ii * n + jj).ravel())
        cols_all.append((((ii + di) % n) * n + (jj + dj) % n).ravel())
        data_all.append(-C.ravel())  # eigenproblem is for -L
    M = scipy.sparse.coo_matrix(
        (np.concatenate(data_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(g.size, g.size),
    )
    return M.tocsr()


def _participation_ratio(grid: Grid, psi: np.ndarray) -> float:
    p4 = grid.cell_volume * float(np.sum(psi**4))
    return 1.0 / p4 if p4 > 0 else math.inf


def discrete_eigenpairs(field: CoefficientField, count: int, target: float | None = None,
                        bc: str = "periodic"):
    """Eigenpairs of the discretized operator, sorted by eigenvalue.

    1D uses a dense solve (optionally Dirichlet on the box [0, extent] with
    the torus node at 0 as the boundary); 2D uses shift-invert iteration near
    the target eigenvalue on the periodic torus."""
    g = field.grid
    op = WaveOperator(field)
    if g.d == 1:
        M = _operator_matrix(op, bc)
        M = 0.5 * (M + M.T)
        vals, vecs = np.linalg.eigh(M)
        if bc == "dirichlet":
            full = np.zeros((g.points, vals.size))
            full[1:, :] = vecs
            vecs = full
    else:
        if bc != "periodic":
            raise SolverError("2D eigenpairs support periodic boundary conditions only")
        import scipy.sparse.linalg

        A = _sparse_operator_2d(op)
        sigma = target if target is not None else 1e-8
        # deterministic start vector: all randomness must flow from config seeds
        v0 = np.cos(np.arange(g.size) * 0.37) + 0.5
        try:
            vals, vecs = scipy.sparse.linalg.eigsh(A, k=count + 2, sigma=sigma, which="LM", v0=v0)
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            # stagnation: hand back whatever converged, with diagnostics
            vals, vecs = exc.eigenvalues, exc.eigenvectors
            if vals.size == 0:
                raise SolverError("2D eigen-iteration stagnated with no converged pairs") from exc

    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    pairs = []
    pos = [i for i in range(vals.size) if vals[i] > 1e-10]
    if target is not None:
        pos.sort(key=lambda i: abs(vals[i] - target))
        pos = sorted(pos[:count], key=lambda i: vals[i])
    else:
        pos = pos[:count]
    for i in pos:
        lam = float(vals[i])
        psi = vecs[:, i].reshape(g.shape).astype(float)
        nrm = g.l2(psi)
        psi = psi / nrm
        res = g.l2(-op.apply(psi) - lam * psi)
        pairs.append(Eigenpair(grid=g, eigenvalue=lam, psi=psi, residual=res, bc=bc,
                               participation_ratio=_participation_ratio(g, psi)))
    return pairs
