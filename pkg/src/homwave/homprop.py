"""Dispersive homogenized propagator.

The symbol mu_N(i xi) = xi . (sum_n (i xi)^{(n-1)} Abar^n) xi is real because
even-order tensors vanish; it is evaluated in monomial form so that gradients
and Hessians (group velocity, group-map inversion) are exact. Admissibility of
a frequency band |xi| <= kappa is certified through smallness of the weighted
tail sums of the growth constants K_n; inside a certified band the wave flow
is a plain Fourier multiplier cos(t sqrt(mu)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from math import factorial

import numpy as np

from .correctors import CorrectorSet
from .errors import AdmissibilityError, FitError, IllPosedError, SolverError
from .media import Grid, build_grid
from .symtensor import SymTensor, multiplicity

__all__ = [
    "HomogenizedSymbol",
    "AdmissibilityCertificate",
    "symbol_from_correctors",
    "mu_symbol",
    "certify_kappa",
    "max_certified_kappa",
    "HomogenizedFlow",
    "evolve_homogenized",
    "green_function",
    "green_rescaled_identity_gap",
    "group_velocity",
    "invert_group_map",
    "DecayFit",
    "measure_decay",
    "run_green_decay",
]


def _monomials_from_tensor(tensor: SymTensor, d: int):
    """Collapse a fully-symmetrized tensor contracted against xi^{order} into
    monomial form: dict exponent-vector -> coefficient."""
    mono = {}
    for S, c in tensor.comps.items():
        e = tuple(S.count(k) for k in range(d))
        mono[e] = mono.get(e, 0.0) + multiplicity(S) * float(c)
    return mono


def _mono_eval(mono, xi):
    out = 0.0
    for e, c in mono.items():
        term = c
        for k, p in enumerate(e):
            if p:
                term = term * xi[k] ** p
        out = out + term
    return out


def _mono_grad(mono, d):
    grads = []
    for k in range(d):
        g = {}
        for e, c in mono.items():
            if e[k] == 0:
                continue
            e2 = tuple(p - 1 if i == k else p for i, p in enumerate(e))
            g[e2] = g.get(e2, 0.0) + c * e[k]
        grads.append(g)
    return grads


@dataclass(frozen=True)
class AdmissibilityCertificate:
    """Smallness certificate for a frequency band |xi| <= kappa.

    margin_basic is sum_{n>=2} K_n kappa^{n-1}; margin_derivative the
    factorial-weighted strengthening for derivative orders j <= k+1. The band
    passes iff both stay below 1/(2 C0)."""

    kappa: float
    N: int
    k: int
    margin_basic: float
    margin_derivative: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.margin_basic <= self.threshold and self.margin_derivative <= self.threshold


class HomogenizedSymbol:
    """Evaluator of mu_N(i xi) and its kappa-rescaling, with growth metadata."""

    def __init__(self, d: int, tensors: dict, K: dict, C0: float, even_tol: float = 1e-8):
        """tensors: {n: SymTensor(n+1)} fully symmetrized; K: {n: K_n}."""
        self.d = d
        self.N = max(tensors)
        self.C0 = float(C0)
        self.K = dict(K)
        self.even_norms = {}
        self._mono = {}
        for n, tens in tensors.items():
            if n % 2 == 0:
                norm = tens.frobenius()
                self.even_norms[n] = norm
                if norm > even_tol:
                    raise SolverError(
                        f"even-order tensor Abar^{n} has norm {norm:.3e} > {even_tol:.0e}; symbol would not be real")
                continue
            sign = (-1.0) ** ((n - 1) // 2)
            mono = _monomials_from_tensor(tens, d)
            self._mono[n] = {e: sign * c for e, c in mono.items()}
        self._grad = {n: _mono_grad(m, d) for n, m in self._mono.items()}
        self._hess = {n: [_mono_grad(g, d) for g in gs] for n, gs in self._grad.items()}
        self.abar1 = np.zeros((d, d))
        mono1 = self._mono[1]
        for e, c in mono1.items():
            idx = [k for k, p in enumerate(e) for _ in range(p)]
            i, j = idx[0], idx[1]
            if i == j:
                self.abar1[i, i] = c
            else:
                self.abar1[i, j] = c / 2.0
                self.abar1[j, i] = c / 2.0

    def mu(self, xi, N: int | None = None):
        """mu_N(i xi); xi is a tuple of coordinate arrays (or floats)."""
        N = self.N if N is None else N
        out = 0.0
        for n, mono in self._mono.items():
            if n <= N:
                out = out + _mono_eval(mono, xi)
        return out

    def mu_rescaled(self, kappa: float, xi, N: int | None = None):
        """mu_{kappa,N}(i xi) = kappa^{-2} mu_N(i kappa xi)."""
        N = self.N if N is None else N
        out = 0.0
        for n, mono in self._mono.items():
            if n <= N:
                out = out + kappa ** (n - 1) * _mono_eval(mono, xi)
        return out

    def grad_mu_rescaled(self, kappa: float, xi):
        return np.stack([
            sum(kappa ** (n - 1) * _mono_eval(self._grad[n][k], xi) for n in self._mono)
            for k in range(self.d)
        ])

    def hess_mu_rescaled(self, kappa: float, xi):
        H = np.zeros((self.d, self.d))
        for k in range(self.d):
            for l in range(self.d):
                H[k, l] = sum(kappa ** (n - 1) * _mono_eval(self._hess[n][k][l], xi) for n in self._mono)
        return H

    def band_bounds_margin(self, kappa: float, n_samples: int = 256):
        """Scan |xi| <= kappa for the two-sided bound
        |xi|^2 / (2 C0) <= mu_N(i xi) <= 3 C0 |xi|^2 / 2.

        Returns (min of mu/(lower), min of (upper)/mu); both >= 1 certify the
        bound over the sample."""
        if self.d == 1:
            pts = [(x,) for x in np.linspace(-kappa, kappa, n_samples) if x != 0.0]
        else:
            side = int(math.sqrt(n_samples))
            lin = np.linspace(-kappa, kappa, side)
            pts = [(x, y) for x in lin for y in lin if 0 < math.hypot(x, y) <= kappa]
        lo_margin = math.inf
        hi_margin = math.inf
        for xi in pts:
            norm2 = sum(x * x for x in xi)
            mu = self.mu(xi)
            lo_margin = min(lo_margin, mu / (norm2 / (2.0 * self.C0)))
            hi_margin = min(hi_margin, (1.5 * self.C0 * norm2) / mu if mu > 0 else -math.inf)
        return lo_margin, hi_margin


def symbol_from_correctors(cset: CorrectorSet, N: int | None = None, even_tol: float = 1e-8) -> HomogenizedSymbol:
    N = cset.N if N is None else N
    tensors = {n: cset.abar_full_sym(n) for n in range(1, N + 1)}
    return HomogenizedSymbol(d=cset.grid.d, tensors=tensors, K=cset.growth_constants(),
                             C0=cset.field.C0, even_tol=even_tol)


def mu_symbol(symbol: HomogenizedSymbol, xi, N: int | None = None):
    """Symbol value at a frequency (or frequency mesh)."""
    return symbol.mu(tuple(np.asarray(x) for x in np.atleast_1d(xi)) if np.isscalar(xi) else tuple(xi), N=N)


def certify_kappa(symbol: HomogenizedSymbol, kappa: float, k: int = 0) -> AdmissibilityCertificate:
    """Admissibility of the band |xi| <= kappa for derivative order k."""
    K = symbol.K
    N = symbol.N
    basic = sum(K.get(n, 0.0) * kappa ** (n - 1) for n in range(2, N + 1))
    deriv = 0.0
    for j in range(0, k + 2):
        tot = 0.0
        for n in range(max(2, j - 1), N + 1):
            if n + 1 - j < 0:
                continue
            tot += factorial(n + 1) / factorial(n + 1 - j) * K.get(n, 0.0) * kappa ** (n - 1)
        deriv = max(deriv, tot)
    return AdmissibilityCertificate(kappa=float(kappa), N=N, k=int(k),
                                    margin_basic=basic, margin_derivative=deriv,
                                    threshold=1.0 / (2.0 * symbol.C0))


def max_certified_kappa(symbol: HomogenizedSymbol, k: int = 0, hi: float = 16.0) -> float:
    """Largest certified kappa (bisection on the monotone margins)."""
    if certify_kappa(symbol, hi, k).passed:
        return hi
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if certify_kappa(symbol, mid, k).passed:
            lo = mid
        else:
            hi = mid
    return lo


class HomogenizedFlow:
    """Fourier-multiplier wave flow cos(t sqrt(mu)) on a grid.

    Also exposes the time derivative and the running time integral of the
    profile (the sin(t sqrt(mu))/sqrt(mu) formula), which the two-scale error
    budget consumes."""

    def __init__(self, grid: Grid, symbol: HomogenizedSymbol, certificate: AdmissibilityCertificate,
                 u0: np.ndarray, band_tol: float = 1e-12):
        if not certificate.passed:
            raise AdmissibilityError(
                f"band kappa={certificate.kappa} not certified (margins {certificate.margin_basic:.3e}, "
                f"{certificate.margin_derivative:.3e} > {certificate.threshold:.3e})")
        self.grid = grid
        self.symbol = symbol
        self.kappa = certificate.kappa
        self.u0hat = grid.fft(u0)
        mass = np.abs(self.u0hat) ** 2
        total = float(np.sum(mass))
        if total > 0:
            outside = float(np.sum(mass[grid.freq_norm() > self.kappa]))
            if outside > band_tol * total:
                raise AdmissibilityError(
                    f"initial data carries {outside / total:.3e} relative mass outside |xi| <= kappa")
        self.mu = symbol.mu(grid.freqs())
        bad = (self.mu <= 0) & (grid.freq_norm() > 0)
        if total > 0 and float(np.sum(mass[bad])) > band_tol * total:
            raise IllPosedError("symbol non-positive on frequencies carrying data mass")
        self.root = np.sqrt(np.maximum(self.mu, 0.0))

    def u(self, t: float) -> np.ndarray:
        return self.grid.ifft(np.cos(t * self.root) * self.u0hat)

    def ut(self, t: float) -> np.ndarray:
        return self.grid.ifft(-self.root * np.sin(t * self.root) * self.u0hat)

    def int_u_hat(self, t: float) -> np.ndarray:
        """Transform of int_0^t u ds: sin(t sqrt(mu))/sqrt(mu), with the zero
        mode's limit t."""
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(self.root > 0, np.sin(t * self.root) / np.where(self.root > 0, self.root, 1.0), t)
        return fac * self.u0hat

    def energy_split(self, t: float):
        """(||sqrt(mu) u_hat||^2, ||du/dt hat||^2) mean-normalized; their sum
        is conserved exactly."""
        c = np.cos(t * self.root) * self.u0hat
        s = -np.sin(t * self.root) * self.root * self.u0hat
        norm = self.grid.size**2
        return (float(np.sum(np.abs(self.root * c) ** 2)) / norm,
                float(np.sum(np.abs(s) ** 2)) / norm)


def evolve_homogenized(u0: np.ndarray, symbol: HomogenizedSymbol,
                       certificate: AdmissibilityCertificate, t: float, grid: Grid) -> np.ndarray:
    """Homogenized wave flow at time t for band-limited initial data."""
    return HomogenizedFlow(grid, symbol, certificate, u0).u(t)


def green_function(kappa: float, symbol: HomogenizedSymbol, rho: np.ndarray, t: float,
                   grid: Grid, certificate: AdmissibilityCertificate | None = None) -> np.ndarray:
    """Smoothened Green function: the flow started from the mollifier rho."""
    cert = certificate or certify_kappa(symbol, kappa, k=0)
    return HomogenizedFlow(grid, symbol, cert, rho).u(t)


def green_rescaled_identity_gap(kappa: float, symbol: HomogenizedSymbol, rho: np.ndarray,
                                t: float, grid: Grid) -> float:
    """Max-norm gap of G(t,x) = kappa^d Gtilde(kappa t, kappa x).

    Gtilde is computed on the kappa-rescaled grid with the rescaled symbol
    mu_{kappa,N}; node alignment makes the identity exact up to roundoff."""
    cert = certify_kappa(symbol, kappa, k=0)
    G = HomogenizedFlow(grid, symbol, cert, rho).u(t)

    scaled = build_grid(grid.d, grid.extent * kappa, grid.points)
    # rho_kappa(x) = kappa^d rho_unit(kappa x) pointwise, and grid node j maps
    # to scaled node j, so the unit mollifier's node values are rho / kappa^d
    rho_unit = rho / kappa**grid.d
    mu_s = symbol.mu_rescaled(kappa, scaled.freqs())
    root = np.sqrt(np.maximum(mu_s, 0.0))
    Gt = scaled.ifft(np.cos(kappa * t * root) * scaled.fft(rho_unit))
    return float(np.max(np.abs(G - kappa**grid.d * Gt)))


def group_velocity(symbol: HomogenizedSymbol, kappa: float, xi) -> np.ndarray:
    """nu_{kappa,N} = grad mu_{kappa,N} / (2 sqrt(mu_{kappa,N})) at a single xi."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if np.allclose(xi, 0.0):
        raise IllPosedError("group velocity undefined at xi = 0 (radial limit |nu| ~ 1)")
    mu = symbol.mu_rescaled(kappa, tuple(xi))
    if mu <= 0:
        raise IllPosedError(f"mu_(kappa,N)(i xi) = {mu:.3e} <= 0 at xi={xi}")
    return symbol.grad_mu_rescaled(kappa, tuple(xi)) / (2.0 * math.sqrt(mu))


def invert_group_map(symbol: HomogenizedSymbol, kappa: float, y, tol: float = 1e-10,
                     maxiter: int = 60) -> np.ndarray:
    """Newton inversion of H_{kappa,N} = grad mu_{kappa,N}(i .) at a point y."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if np.allclose(y, 0.0):
        return np.zeros(symbol.d)
    xi = np.linalg.solve(2.0 * symbol.abar1, y)
    for _ in range(maxiter):
        r = symbol.grad_mu_rescaled(kappa, tuple(xi)) - y
        if np.linalg.norm(r) <= tol * max(1.0, float(np.linalg.norm(y))):
            return xi
        H = symbol.hess_mu_rescaled(kappa, tuple(xi))
        try:
            step = np.linalg.solve(H, r)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"group-map Hessian singular at xi={xi}") from exc
        xi = xi - step
        if not np.all(np.isfinite(xi)) or np.linalg.norm(xi) > 1e6:
            raise SolverError("Newton inversion of the group map diverged (near-degenerate Hessian)")
    raise SolverError("Newton inversion did not reach tolerance")


@dataclass(frozen=True)
class DecayFit:
    """Least-squares power law sup-norm ~ prefactor * (1 + kappa t)^exponent."""

    exponent: float
    prefactor: float
    residual: float
    region: str
    kappa: float
    times: tuple
    sups: tuple

    @property
    def clean(self) -> bool:
        return self.residual <= 0.2


def measure_decay(times, snapshots, grid: Grid, kappa: float, region: str = "global",
                  interior_fraction: float = 0.25) -> DecayFit:
    """Fit the decay exponent of sup-norms against (1 + kappa t).

    region 'global': sup over the torus; 'interior': sup over |x| <= t/4
    (torus distance). Requires >= 8 times with kappa*t spanning two decades.
    """
    times = np.asarray(times, dtype=float)
    if len(times) < 8:
        raise FitError(f"need >= 8 sample times, got {len(times)}")
    span = (kappa * times.max()) / max(kappa * times.min(), 1e-300)
    if span < 99.0:
        raise FitError(f"kappa*t must span >= 2 decades, got factor {span:.1f}")
    radius = grid.torus_radius()
    sups = []
    for t, snap in zip(times, snapshots):
        if region == "global":
            sups.append(float(np.max(np.abs(snap))))
        elif region == "interior":
            mask = radius <= interior_fraction * t
            if not np.any(mask):
                mask = radius <= grid.h
            sups.append(float(np.max(np.abs(snap[mask]))))
        else:
            raise FitError(f"unknown region {region!r}")
    sups = np.asarray(sups)
    floor = np.finfo(float).tiny
    logs = np.log(np.maximum(sups, floor))
    logt = np.log1p(kappa * times)
    slope, intercept = np.polyfit(logt, logs, 1)
    resid = float(np.sqrt(np.mean((logs - (slope * logt + intercept)) ** 2)))
    return DecayFit(exponent=float(slope), prefactor=float(np.exp(intercept)), residual=resid,
                    region=region, kappa=float(kappa), times=tuple(times), sups=tuple(sups))


def run_green_decay(symbol: HomogenizedSymbol, kappa: float, d: int, region: str = "global",
                    kt_window=(10.0, 1000.0), n_times: int = 12, points: int | None = None,
                    oversample: float = 1.4, eta: float = 0.2) -> DecayFit:
    """Green-function decay experiment sized to stay inside the torus horizon.

    Builds a grid wide enough that the fastest group speed cannot wrap within
    the fit window, evolves the mollifier under the symbol, and fits the decay
    exponent in the requested region."""
    from .twoscale import build_mollifier  # local import; twoscale depends on this module

    cert = certify_kappa(symbol, kappa, k=max(0, d - 1))
    if not cert.passed:
        raise AdmissibilityError(f"kappa={kappa} not certified for the decay experiment")
    t_max = kt_window[1] / kappa
    c_max = math.sqrt(1.5 * symbol.C0)
    extent_needed = 2.0 * (c_max * t_max + 12.0 / kappa)
    h_max = math.pi / (oversample * kappa)
    min_points = extent_needed / h_max
    if points is None:
        points = int(2 ** math.ceil(math.log2(max(min_points, 64))))
    extent = points * h_max
    grid = build_grid(d, extent, points)
    rho = build_mollifier(kappa, grid).kernel
    flow = HomogenizedFlow(grid, symbol, cert, rho)
    times = np.geomspace(kt_window[0] / kappa, kt_window[1] / kappa, n_times)
    snaps = [flow.u(t) for t in times]
    return measure_decay(times, snaps, grid, kappa, region=region)
