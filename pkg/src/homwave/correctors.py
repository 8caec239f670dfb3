"""Corrector hierarchy on the periodic cell.

Solves, for each order n and ordered index block, the cell problem

    -div(A grad phi^n) = div(A phi^{n-1} e) + e.A(grad phi^{n-1} + phi^{n-2} e')
                         - sum_m e.Abar^m phi^{n-m-1} e',

extracts the homogenized tensors Abar^n as mean fluxes, and builds flux
potentials Phi^n (vector Poisson problems) whose gradients sigma^n = grad Phi^n
satisfy the divergence identity for the centered flux. Quasiperiodic and
random media are handled by treating the full torus as the cell.

The hierarchy is solved block-by-block over ordered index tuples (the
inductive right-hand sides distinguish the trailing indices), while the public
CorrectorSet stores the symmetrized reductions: every downstream use contracts
against symmetric derivative stacks or frequency powers, so only those
survive. In particular the even-order vanishing of the homogenized tensors is
a statement about the fully symmetrized tensor.

The spectral solver is Fourier-Galerkin with inverse-Laplacian preconditioning
and fixed-point iteration on the contrast part of A. A quadrature-only 1D
oracle (two cumulative-trapezoid integrations per order) provides an
independent route for cross-checks.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import SolverError
from .media import CoefficientField, Grid
from .symtensor import SymTensor, msets, mset_key

__all__ = [
    "CorrectorSet",
    "build_corrector_set",
    "solve_corrector",
    "homogenized_tensor",
    "solve_flux_potential",
    "oracle_1d",
    "corrector_growth",
    "default_max_order",
]

DEFAULT_TOL = 1e-10
DEFAULT_MAXITER = 10_000


def default_max_order(d: int) -> int:
    """Default hierarchy depth: 4 in 1D, 3 in 2D."""
    return 4 if d == 1 else 3


def _cell_norm(f: np.ndarray, d: int) -> float:
    """Cell-averaged L2 norm; leading axes (if any) are summed pointwise."""
    f = np.asarray(f)
    if f.ndim > d:
        dens = np.sum(f**2, axis=tuple(range(f.ndim - d)))
    else:
        dens = f**2
    return math.sqrt(float(np.mean(dens)))


class Spectral:
    """Spectral derivative/Poisson helpers on a periodic grid.

    Derivatives act through i*xi multipliers followed by a real part, which on
    real fields is equivalent to zeroing the Nyquist row of the multiplier:
    the resulting discrete gradient is exactly skew-adjoint on the grid.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        self.d = grid.d
        fs = grid.freqs()
        nyq = -np.pi / grid.h
        self.dmult = []
        for k in range(self.d):
            xi = fs[k].copy()
            xi[np.isclose(xi, nyq)] = 0.0
            self.dmult.append(1j * xi)
        self.lap_symbol = sum(np.abs(m) ** 2 for m in self.dmult)

    def dx(self, fhat: np.ndarray, k: int) -> np.ndarray:
        return self.grid.ifft(self.dmult[k] * fhat)

    def grad(self, f: np.ndarray):
        fhat = self.grid.fft(f)
        return np.stack([self.dx(fhat, k) for k in range(self.d)])

    def div_hat(self, vec) -> np.ndarray:
        out = np.zeros(self.grid.shape, dtype=complex)
        for k in range(self.d):
            out += self.dmult[k] * self.grid.fft(vec[k])
        return out

    def hminus1_norm(self, fhat: np.ndarray) -> float:
        """Mean-normalized discrete H^-1 norm over the resolved modes.

        The zero mode and the Nyquist rows are excluded: the discrete gradient
        annihilates the latter, so the Galerkin problem neither sees nor can
        reduce content there (it is aliasing noise of the data, not solver
        error)."""
        safe = np.where(self.lap_symbol > 0, self.lap_symbol, 1.0)
        vals = np.where(self.lap_symbol > 0, np.abs(fhat) ** 2 / safe, 0.0)
        return math.sqrt(float(np.sum(vals))) / self.grid.size

    def solve_poisson(self, rhs: np.ndarray) -> np.ndarray:
        """Zero-mean solution of Laplacian(u) = rhs (rhs zero-mean)."""
        rhat = self.grid.fft(rhs)
        safe = np.where(self.lap_symbol > 0, self.lap_symbol, 1.0)
        uhat = np.where(self.lap_symbol > 0, -rhat / safe, 0.0)
        return self.grid.ifft(uhat)


def _apply_A_vec(field: CoefficientField, vec):
    """(A v)_i for a stacked vector field v of shape (d,)+grid.shape."""
    d = field.grid.d
    return np.stack([sum(field.comp(i, k) * vec[k] for k in range(d)) for i in range(d)])


def _solve_cell(field: CoefficientField, sp: Spectral, F, s, tol, maxiter):
    """Solve -div(A grad phi) = div(F) + s on the cell, zero-mean.

    F: stacked vector field or None; s: scalar field or None.
    Returns (phi, grad_phi, weak_residual).
    """
    grid = field.grid
    d = grid.d
    alpha = 0.5 * (field.floor + field.ceiling)
    rhs_hat = np.zeros(grid.shape, dtype=complex)
    if F is not None:
        rhs_hat += sp.div_hat(F)
    if s is not None:
        rhs_hat += grid.fft(s)
    mean_rhs = abs(rhs_hat.flat[0]) / grid.size
    if mean_rhs > 1e-8 * max(1.0, field.ceiling):
        raise SolverError(f"cell-problem right-hand side has nonzero mean {mean_rhs:.3e}")
    rhs_hat.flat[0] = 0.0

    rhs_norm = sp.hminus1_norm(rhs_hat)
    if rhs_norm == 0.0:
        return np.zeros(grid.shape), np.zeros((d,) + grid.shape), 0.0

    safe_lap = np.where(sp.lap_symbol > 0, sp.lap_symbol, 1.0)
    inv = np.where(sp.lap_symbol > 0, 1.0 / (alpha * safe_lap), 0.0)
    phihat = rhs_hat * inv
    res = math.inf
    history = []
    for _ in range(maxiter):
        gradphi = np.stack([sp.dx(phihat, k) for k in range(d)])
        contrast = _apply_A_vec(field, gradphi) - alpha * gradphi
        ghat = rhs_hat + sp.div_hat(contrast)
        rhat = alpha * sp.lap_symbol * phihat - ghat
        res = sp.hminus1_norm(rhat) / rhs_norm
        history.append(res)
        if res <= tol:
            break
        phihat = ghat * inv
    else:
        raise SolverError(
            f"cell solver stalled at residual {res:.3e} after {maxiter} iterations",
            diagnostics={"residual": res, "alpha": alpha,
                         "contrast_ratio": (field.ceiling - field.floor) / (field.ceiling + field.floor),
                         "tail": history[-5:]},
        )
    phihat.flat[0] = 0.0
    phi = grid.ifft(phihat)
    gradphi = np.stack([sp.dx(grid.fft(phi), k) for k in range(d)])
    return phi, gradphi, res


def _ordered_blocks(d: int, n: int):
    return list(itertools.product(range(d), repeat=n))


def _sym_average(ordered: dict, d: int, n: int) -> dict:
    """Average an ordered-tuple-keyed dict over permutations, per multiset."""
    out = {}
    for S in msets(d, n):
        perms = sorted(set(itertools.permutations(S)))
        out[S] = sum(ordered[t] for t in perms) / len(perms)
    return out


@dataclass
class CorrectorSet:
    """Correctors, flux potentials, homogenized tensors and growth constants
    for one coefficient field, complete through order N.

    Public fields hold symmetrized storage: phi[n][S] is the scalar corrector
    field for the index multiset S (the average of the ordered solutions,
    which is the only combination entering contractions against derivative
    stacks); dphi its gradient stack; Phi/sigma the flux potentials and flux
    correctors; abar[n][B] the d x d homogenized block per (n-1)-multiset with
    the block indices symmetrized. residual[n]/sigma_residual[n] are the worst
    weak residuals over the ordered blocks at order n. The ordered solutions
    themselves are kept on private attributes for hierarchy continuation.
    """

    field: CoefficientField
    N: int
    phi: dict = dc_field(default_factory=dict)
    dphi: dict = dc_field(default_factory=dict)
    Phi: dict = dc_field(default_factory=dict)
    sigma: dict = dc_field(default_factory=dict)
    abar: dict = dc_field(default_factory=dict)
    residual: dict = dc_field(default_factory=dict)
    sigma_residual: dict = dc_field(default_factory=dict)
    tol: float = DEFAULT_TOL
    method: str = "spectral"
    phi_ord: dict = dc_field(default_factory=dict, repr=False)
    dphi_ord: dict = dc_field(default_factory=dict, repr=False)
    abar_ord: dict = dc_field(default_factory=dict, repr=False)

    @property
    def grid(self) -> Grid:
        return self.field.grid

    def abar_full_sym(self, n: int) -> SymTensor:
        """Order-n tensor fully symmetrized over block, column and row slots:
        the combination seen by the homogenized operator and symbol."""
        d = self.grid.d
        out = {S: 0.0 for S in msets(d, n + 1)}
        counts = {S: 0 for S in msets(d, n + 1)}
        for B, M in self.abar_ord[n].items():
            for j in range(d):
                for i in range(d):
                    key = mset_key(B + (j, i))
                    out[key] += M[i, j]
                    counts[key] += 1
        comps = {S: out[S] / counts[S] for S in out}
        return SymTensor(d=d, order=n + 1, comps=comps)

    def abar_norm(self, n: int) -> float:
        """Frobenius norm of the expanded fully-symmetrized order-n tensor."""
        return self.abar_full_sym(n).frobenius()

    def growth_constants(self):
        """K_n = max over stored blocks of ||phi|| + ||sigma|| + ||grad phi||
        + ||grad sigma|| in cell-mean L2 norms; K_0 = 1 for phi^0 = 1."""
        Ks = {0: 1.0}
        sp = Spectral(self.grid)
        for n in range(1, self.N + 1):
            worst = 0.0
            for S in self.phi[n]:
                total = _cell_norm(self.phi[n][S], self.grid.d) + _cell_norm(self.dphi[n][S], self.grid.d)
                if n in self.sigma and S in self.sigma[n]:
                    sig = self.sigma[n][S]
                    total += _cell_norm(sig, self.grid.d)
                    dsig = np.stack([sp.grad(sig[i, k])
                                     for i in range(self.grid.d) for k in range(self.grid.d)])
                    total += _cell_norm(dsig, self.grid.d)
                worst = max(worst, total)
            Ks[n] = worst
        return Ks


def _rhs_for_tuple(field: CoefficientField, lower: CorrectorSet, n: int, t):
    """Right-hand side of the order-n cell problem for the ordered tuple t,
    split as (F, s) with RHS = div(F) + s."""
    grid = field.grid
    d = grid.d
    jn = t[-1]
    head = t[:-1]
    phi_nm1 = lower.phi_ord[n - 1][head]
    dphi_nm1 = lower.dphi_ord[n - 1][head]
    F = np.stack([field.comp(i, jn) * phi_nm1 for i in range(d)])
    s = sum(field.comp(jn, k) * dphi_nm1[k] for k in range(d))
    if n >= 2:
        jn1 = t[-2]
        s = s + field.comp(jn, jn1) * lower.phi_ord[n - 2][t[:-2]]
        for m in range(1, n):
            Ab = lower.abar_ord[m][t[: m - 1]]
            s = s - Ab[jn, jn1] * lower.phi_ord[n - m - 1][t[m - 1 : n - 2]]
    return F, s


def solve_corrector(field: CoefficientField, n: int, lower: CorrectorSet,
                    tol: float = DEFAULT_TOL, maxiter: int = DEFAULT_MAXITER):
    """Order-n correctors given the hierarchy through n-1.

    Returns (phi_ordered, dphi_ordered, residuals) keyed by ordered tuple."""
    sp = Spectral(field.grid)
    phis, dphis, res = {}, {}, {}
    for t in _ordered_blocks(field.grid.d, n):
        F, s = _rhs_for_tuple(field, lower, n, t)
        phi, dphi, r = _solve_cell(field, sp, F, s, tol, maxiter)
        phis[t], dphis[t], res[t] = phi, dphi, r
    return phis, dphis, res


def homogenized_tensor(field: CoefficientField, m: int, lower: CorrectorSet):
    """Abar^m as mean flux, per ordered (m-1)-block B:
    column j of Abar^m[B] = E[A(grad phi^m_{B+(j,)} + phi^{m-1}_B e_j)]."""
    d = field.grid.d
    out = {}
    for B in _ordered_blocks(d, m - 1):
        M = np.zeros((d, d))
        for j in range(d):
            dphi = lower.dphi_ord[m][B + (j,)]
            phi_b = lower.phi_ord[m - 1][B]
            for i in range(d):
                flux_i = sum(field.comp(i, k) * dphi[k] for k in range(d)) + field.comp(i, j) * phi_b
                M[i, j] = float(np.mean(flux_i))
        out[B] = M
    return out


def _centered_flux(field: CoefficientField, cset: CorrectorSet, n: int, t):
    """q^n_t = A(grad phi^n + phi^{n-1} e) - sum_m Abar^m phi^{n-m} e."""
    grid = field.grid
    d = grid.d
    jn = t[-1]
    q = _apply_A_vec(field, cset.dphi_ord[n][t])
    phi_nm1 = cset.phi_ord[n - 1][t[:-1]]
    for i in range(d):
        q[i] += field.comp(i, jn) * phi_nm1
    for m in range(1, n + 1):
        Ab = cset.abar_ord[m][t[: m - 1]]
        phi_rest = cset.phi_ord[n - m][t[m - 1 : n - 1]]
        for i in range(d):
            q[i] -= Ab[i, jn] * phi_rest
    return q


def solve_flux_potential(field: CoefficientField, n: int, cset: CorrectorSet,
                         mean_tol: float = 1e-8):
    """Flux potentials Phi^n (vector Poisson solves) and sigma^n = grad Phi^n
    per ordered block; aborts if the centered flux has nonzero mean beyond
    mean_tol (corrupted tensors). Returns (Phi, sigma, divergence_residuals)."""
    grid = field.grid
    d = grid.d
    sp = Spectral(grid)
    Phis, sigmas, res = {}, {}, {}
    for t in _ordered_blocks(d, n):
        q = _centered_flux(field, cset, n, t)
        means = [abs(float(np.mean(q[i]))) for i in range(d)]
        if max(means) > mean_tol:
            raise SolverError(
                f"flux RHS at order {n}, block {t} has mean {max(means):.3e} > {mean_tol:.0e}; tensors corrupted")
        Phi = np.stack([sp.solve_poisson(q[i] - np.mean(q[i])) for i in range(d)])
        sigma = np.stack([sp.grad(Phi[i]) for i in range(d)])  # sigma[i,k] = d_k Phi_i
        # divergence identity sum_k d_k sigma[i,k] = q_i, measured relative to
        # the uncentered flux scale (q itself may vanish identically, e.g. 1D n=1)
        flux_scale = max(_cell_norm(_apply_A_vec(field, cset.dphi_ord[n][t]), d), field.floor)
        worst = 0.0
        for i in range(d):
            div_hat = sp.div_hat(sigma[i])
            qhat = grid.fft(q[i] - np.mean(q[i]))
            worst = max(worst, sp.hminus1_norm(div_hat - qhat) / flux_scale)
        Phis[t], sigmas[t], res[t] = Phi, sigma, worst
    return Phis, sigmas, res


def build_corrector_set(field: CoefficientField, N: int | None = None,
                        tol: float = DEFAULT_TOL, maxiter: int = DEFAULT_MAXITER,
                        with_flux: bool = True) -> CorrectorSet:
    """Full hierarchy through order N (defaults to 4 in 1D, 3 in 2D)."""
    if N is None:
        N = default_max_order(field.grid.d)
    grid = field.grid
    d = grid.d
    cset = CorrectorSet(field=field, N=N, tol=tol)
    ones = np.ones(grid.shape)
    zvec = np.zeros((d,) + grid.shape)
    cset.phi_ord[0] = {(): ones}
    cset.dphi_ord[0] = {(): zvec}
    cset.phi[0] = {(): ones}
    cset.dphi[0] = {(): zvec}
    for n in range(1, N + 1):
        phis, dphis, res = solve_corrector(field, n, cset, tol=tol, maxiter=maxiter)
        cset.phi_ord[n], cset.dphi_ord[n] = phis, dphis
        cset.residual[n] = res
        cset.abar_ord[n] = homogenized_tensor(field, n, cset)
        cset.phi[n] = _sym_average(phis, d, n)
        cset.dphi[n] = _sym_average(dphis, d, n)
        cset.abar[n] = _sym_average(cset.abar_ord[n], d, n - 1)
        if with_flux:
            Phis, sigmas, sres = solve_flux_potential(field, n, cset)
            cset.Phi[n] = _sym_average(Phis, d, n)
            cset.sigma[n] = _sym_average(sigmas, d, n)
            cset.sigma_residual[n] = sres
    return cset


def _cumint_periodic(f: np.ndarray, h: float) -> np.ndarray:
    """Cumulative trapezoid antiderivative on a uniform periodic grid."""
    inc = 0.5 * h * (f + np.roll(f, 1))
    F = np.cumsum(inc)
    return F - F[0]


def oracle_1d(field: CoefficientField, N: int = 4) -> CorrectorSet:
    """Quadrature-only 1D corrector set: each order is two cumulative
    trapezoid integrations with periodicity and zero mean fixing the
    constants. Abar^1 is the harmonic mean of a by construction."""
    grid = field.grid
    if grid.d != 1:
        raise SolverError("oracle_1d requires a 1D field")
    a = field.comp(0, 0)
    h = grid.h
    mean = lambda f: float(np.mean(f))
    inv_mean = mean(1.0 / a)
    cset = CorrectorSet(field=field, N=N, method="oracle-quadrature")
    n_nodes = grid.points
    cset.phi[0] = {(): np.ones(n_nodes)}
    cset.dphi[0] = {(): np.zeros((1, n_nodes))}
    abar = {}
    phis = {0: np.ones(n_nodes)}
    dphis = {0: np.zeros(n_nodes)}
    for n in range(1, N + 1):
        if n == 1:
            abar[1] = 1.0 / inv_mean
            dphi = abar[1] / a - 1.0
        else:
            g = a * (dphis[n - 1] + phis[n - 2])
            for m in range(1, n):
                g = g - abar[m] * phis[n - m - 1]
            G = _cumint_periodic(g, h)
            c = -(mean(phis[n - 1]) + mean(G / a)) / inv_mean
            dphi = -(phis[n - 1] + (G + c) / a)
        phi = _cumint_periodic(dphi, h)
        phi -= mean(phi)
        phis[n], dphis[n] = phi, dphi
        if n >= 2:
            abar[n] = mean(a * (dphi + phis[n - 1]))
        key = (0,) * n
        cset.phi[n] = {key: phi}
        cset.dphi[n] = {key: dphi[None, :]}
        cset.phi_ord[n] = {key: phi}
        cset.dphi_ord[n] = {key: dphi[None, :]}
        cset.abar[n] = {(0,) * (n - 1): np.array([[abar[n]]])}
        cset.abar_ord[n] = cset.abar[n]
        # flux potential: sigma' = q, Phi' = sigma, both zero-mean periodic
        q = a * (dphi + phis[n - 1]) - sum(abar[m] * phis[n - m] for m in range(1, n + 1))
        sigma = _cumint_periodic(q - mean(q), h)
        sigma -= mean(sigma)
        Phi = _cumint_periodic(sigma, h)
        Phi -= mean(Phi)
        cset.Phi[n] = {key: Phi[None, :]}
        cset.sigma[n] = {key: sigma[None, None, :]}
        cset.residual[n] = {key: 0.0}
        cset.sigma_residual[n] = {key: 0.0}
    cset.phi_ord[0] = cset.phi[0]
    cset.dphi_ord[0] = cset.dphi[0]
    return cset


def corrector_growth(cset: CorrectorSet):
    """Growth constants K_1..K_N and the fitted geometric rate (slope of
    log K_n against n)."""
    Ks = cset.growth_constants()
    ns = [n for n in range(1, cset.N + 1) if Ks[n] > 0]
    if len(ns) >= 2:
        slope = float(np.polyfit(ns, [math.log(Ks[n]) for n in ns], 1)[0])
    else:
        slope = 0.0
    return Ks, slope
