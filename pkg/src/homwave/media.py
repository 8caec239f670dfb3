"""Grids, coefficient fields, and their validation.

Fields are symmetric d x d matrices sampled on a periodic grid. Three
generators are provided: exactly periodic profiles, quasiperiodic lifts
A(x) = A0(Fx), and seeded random realizations with an exact finite range of
dependence. Every constructor measures the ellipticity interval of the
produced field and rejects non-elliptic samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .errors import GridError, MediaError

__all__ = [
    "Grid",
    "CoefficientField",
    "DiophantineCertificate",
    "build_grid",
    "sample_periodic",
    "sample_quasiperiodic",
    "sample_random",
    "diophantine_margin",
    "ellipticity_constants",
    "PERIODIC_PROFILES",
]


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [0, extent)^d, d in {1, 2}.

    Spectral transforms assume points is a power of two; index arithmetic
    wraps modulo points.
    """

    d: int
    extent: float
    points: int

    @property
    def h(self) -> float:
        return self.extent / self.points

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.d

    @property
    def size(self) -> int:
        return self.points**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def axis(self) -> np.ndarray:
        return np.arange(self.points) * self.h

    def coords(self) -> tuple:
        """Node coordinate arrays, meshgrid with 'ij' indexing."""
        x = self.axis()
        if self.d == 1:
            return (x,)
        return tuple(np.meshgrid(x, x, indexing="ij"))

    def centered_coords(self) -> tuple:
        """Coordinates wrapped to [-extent/2, extent/2) (torus chart at 0)."""
        half = self.extent / 2.0
        return tuple((c + half) % self.extent - half for c in self.coords())

    def torus_radius(self) -> np.ndarray:
        """Torus distance of every node to the origin."""
        cc = self.centered_coords()
        if self.d == 1:
            return np.abs(cc[0])
        return np.hypot(cc[0], cc[1])

    def freqs(self) -> tuple:
        """Angular frequency meshes (2*pi*fftfreq per axis)."""
        xi = 2.0 * np.pi * np.fft.fftfreq(self.points, d=self.h)
        if self.d == 1:
            return (xi,)
        return tuple(np.meshgrid(xi, xi, indexing="ij"))

    def freq_norm(self) -> np.ndarray:
        fs = self.freqs()
        if self.d == 1:
            return np.abs(fs[0])
        return np.hypot(fs[0], fs[1])

    def fft(self, u: np.ndarray) -> np.ndarray:
        return np.fft.fftn(u)

    def ifft(self, uhat: np.ndarray) -> np.ndarray:
        return np.real(np.fft.ifftn(uhat))

    def l2(self, u: np.ndarray) -> float:
        return float(np.sqrt(self.cell_volume * np.sum(np.abs(u) ** 2)))

    def l1(self, u: np.ndarray) -> float:
        return float(self.cell_volume * np.sum(np.abs(u)))

    def mean(self, u: np.ndarray) -> float:
        return float(np.mean(u))


def build_grid(d: int, extent: float, points: int) -> Grid:
    """Validated grid constructor: d in {1,2}, points a power of two >= 8."""
    if d not in (1, 2):
        raise GridError(f"unsupported dimension d={d}; only 1 and 2")
    if not isinstance(points, (int, np.integer)) or not _is_power_of_two(int(points)) or points < 8:
        raise GridError(f"points must be a power of two >= 8, got {points}")
    if not (extent > 0):
        raise GridError(f"extent must be positive, got {extent}")
    return Grid(d=int(d), extent=float(extent), points=int(points))


def _sym_eig_bounds(values: np.ndarray, d: int):
    """Min/max eigenvalue fields of a symmetric d x d matrix field."""
    if d == 1:
        lam = values[..., 0, 0]
        return lam, lam
    a, b, c = values[..., 0, 0], values[..., 1, 1], values[..., 0, 1]
    mid = 0.5 * (a + b)
    rad = np.sqrt((0.5 * (a - b)) ** 2 + c**2)
    return mid - rad, mid + rad


@dataclass(frozen=True)
class CoefficientField:
    """Symmetric matrix field A(x) on a grid, with measured ellipticity.

    values has shape grid.shape + (d, d). kind tags provenance:
    ('periodic', params) / ('quasiperiodic', params) / ('random', params) /
    ('constant', params).
    """

    grid: Grid
    values: np.ndarray
    kind: str
    params: dict = dc_field(default_factory=dict)
    floor: float = 0.0
    ceiling: float = 0.0

    @property
    def C0(self) -> float:
        """Single ellipticity constant: a(x) in [1/C0, C0] at every node."""
        return max(self.ceiling, 1.0 / self.floor, 1.0)

    @property
    def max_speed(self) -> float:
        """Tight propagation-speed bound sqrt(max eigenvalue of A)."""
        return math.sqrt(self.ceiling)

    def comp(self, i: int, j: int) -> np.ndarray:
        return self.values[..., i, j]

    def is_identity(self, tol: float = 0.0) -> bool:
        eye = np.eye(self.grid.d)
        return bool(np.max(np.abs(self.values - eye)) <= tol)


def _validate_and_build(grid: Grid, values: np.ndarray, kind: str, params: dict) -> CoefficientField:
    d = grid.d
    values = np.ascontiguousarray(values, dtype=float)
    asym = np.max(np.abs(values - np.swapaxes(values, -1, -2)))
    if asym != 0.0:
        idx = np.unravel_index(
            np.argmax(np.abs(values - np.swapaxes(values, -1, -2)).reshape(grid.size, -1).max(axis=1)),
            grid.shape,
        )
        raise MediaError(f"field not symmetric at node {idx} (max asymmetry {asym:.3e})")
    lo, hi = _sym_eig_bounds(values, d)
    floor = float(lo.min())
    ceiling = float(hi.max())
    if floor <= 0.0:
        idx = np.unravel_index(np.argmin(lo), grid.shape)
        x = tuple(float(k) * grid.h for k in idx)
        raise MediaError(f"ellipticity violated: min eigenvalue {floor:.3e} at node {idx}, x={x}")
    return CoefficientField(grid=grid, values=values, kind=kind, params=dict(params), floor=floor, ceiling=ceiling)


def _smooth_2h(comp: np.ndarray) -> np.ndarray:
    """One pass of the discrete bump [1/4, 1/2, 1/4] along each axis (width 2h)."""
    out = comp
    for ax in range(out.ndim):
        out = 0.5 * out + 0.25 * (np.roll(out, 1, axis=ax) + np.roll(out, -1, axis=ax))
    return out


def _profile_constant(coords, d, value=1.0):
    shape = coords[0].shape
    out = np.zeros(shape + (d, d))
    for i in range(d):
        out[..., i, i] = value
    return out, False


def _profile_laminate(coords, d, low=1.0, high=4.0, fraction=0.5):
    x = coords[0] % 1.0
    a = np.where(x < fraction, low, high)
    out = np.zeros(x.shape + (d, d))
    for i in range(d):
        out[..., i, i] = a
    return out, True


def _profile_cosine(coords, d, base=2.0, amplitude=1.0):
    if d == 1:
        a = base + amplitude * np.cos(2 * np.pi * coords[0])
    else:
        a = base + amplitude * np.cos(2 * np.pi * coords[0]) * np.cos(2 * np.pi * coords[1])
    out = np.zeros(a.shape + (d, d))
    for i in range(d):
        out[..., i, i] = a
    return out, False


def _profile_diagonal(coords, d, a11=1.0, a22=2.0):
    shape = coords[0].shape
    out = np.zeros(shape + (d, d))
    out[..., 0, 0] = a11
    if d == 2:
        out[..., 1, 1] = a22
    return out, False


def _profile_anisotropic_cosine(coords, d, base=2.0, amplitude=0.5, cross=0.25):
    if d != 2:
        raise MediaError("anisotropic_cosine profile is 2D only")
    x, y = coords
    out = np.zeros(x.shape + (2, 2))
    out[..., 0, 0] = base + amplitude * np.cos(2 * np.pi * x)
    out[..., 1, 1] = base + amplitude * np.cos(2 * np.pi * y)
    c = cross * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    out[..., 0, 1] = c
    out[..., 1, 0] = c
    return out, False


PERIODIC_PROFILES: dict[str, Callable] = {
    "constant": _profile_constant,
    "laminate": _profile_laminate,
    "cosine": _profile_cosine,
    "diagonal": _profile_diagonal,
    "anisotropic_cosine": _profile_anisotropic_cosine,
}


def sample_periodic(grid: Grid, profile, cell: float = 1.0, smooth: bool | None = None, **params) -> CoefficientField:
    """Sample a cell-periodic profile onto the grid.

    profile is a registry name or a callable coords -> (values, discontinuous).
    The grid extent must be an integer multiple of the cell; discontinuous
    profiles are smoothed over 2h so spectral solvers see bounded tails.
    """
    ratio = grid.extent / cell
    n_cells = round(ratio)
    if abs(ratio - n_cells) > 1e-9 or n_cells < 1:
        raise MediaError(f"grid extent {grid.extent} is not an integer multiple of cell {cell}")
    ppc = grid.points // n_cells
    if ppc * n_cells != grid.points:
        raise MediaError(f"points {grid.points} not divisible by cell count {n_cells}")

    if callable(profile):
        fn = profile
        name = getattr(profile, "__name__", "custom")
    else:
        try:
            fn = PERIODIC_PROFILES[profile]
        except KeyError:
            raise MediaError(f"unknown profile {profile!r}; known: {sorted(PERIODIC_PROFILES)}") from None
        name = profile

    # sample a single cell, smooth there if needed, then tile node-exactly
    cell_grid = Grid(d=grid.d, extent=cell, points=ppc)
    coords = tuple(c / cell for c in cell_grid.coords())  # unit-cell coordinates
    vals, discontinuous = fn(coords, grid.d, **params)
    do_smooth = discontinuous if smooth is None else smooth
    if do_smooth:
        vals = np.stack(
            [
                np.stack([_smooth_2h(vals[..., i, j]) for j in range(grid.d)], axis=-1)
                for i in range(grid.d)
            ],
            axis=-2,
        )
    reps = (n_cells,) * grid.d + (1, 1)
    full = np.tile(vals, reps)
    return _validate_and_build(grid, full, "periodic", {"profile": name, "cell": cell, **params})


def sample_quasiperiodic(grid: Grid, lifted_profile: Callable, F: np.ndarray) -> CoefficientField:
    """Field A(x) = A0(Fx) for a profile A0 1-periodic on R^M, F of shape (M, d).

    lifted_profile(y) maps M coordinate arrays (tuple) to matrix values of
    shape y[0].shape + (d, d).
    """
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    M, d = F.shape
    if d != grid.d:
        raise MediaError(f"frequency matrix maps R^{d}, grid is {grid.d}D")
    if M <= d:
        raise MediaError(f"lifted dimension M={M} must exceed d={d}")
    coords = grid.coords()
    ys = tuple(sum(F[m, k] * coords[k] for k in range(d)) for m in range(M))
    vals = lifted_profile(ys)
    if vals.shape != coords[0].shape + (d, d):
        raise MediaError("lifted profile returned wrong shape")
    return _validate_and_build(grid, vals, "quasiperiodic", {"F": F.tolist()})


def default_lifted_profile(base=2.0, amplitude=0.5):
    """Scalar lift A0(y) = (base + amplitude * mean_m cos(2 pi y_m)) * Id."""

    def profile(ys):
        M = len(ys)
        a = base + amplitude * sum(np.cos(2 * np.pi * y) for y in ys) / M
        d = ys[0].ndim
        out = np.zeros(ys[0].shape + (d, d))
        for i in range(d):
            out[..., i, i] = a
        return out

    return profile


@dataclass(frozen=True)
class DiophantineCertificate:
    """Scanned non-resonance margin min |F^T z| * |z|^gamma over 0 < |z|_inf <= zmax."""

    F: np.ndarray
    gamma: float
    zmax: int
    margin: float
    argmin_z: tuple

    @property
    def resonant(self) -> bool:
        return self.margin <= 0.0


def diophantine_margin(F: np.ndarray, gamma: float, zmax: int) -> DiophantineCertificate:
    """Exhaustive lattice scan of the Diophantine ratio for a frequency matrix."""
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    M = F.shape[0]
    if zmax < 1:
        raise MediaError("zmax must be >= 1")
    rng = np.arange(-zmax, zmax + 1)
    mesh = np.meshgrid(*([rng] * M), indexing="ij")
    Z = np.stack([m.ravel() for m in mesh], axis=1)  # (count, M)
    Z = Z[np.any(Z != 0, axis=1)]
    Fz = Z @ F  # (count, d)
    ratio = np.linalg.norm(Fz, axis=1) * np.linalg.norm(Z, axis=1) ** gamma
    k = int(np.argmin(ratio))
    return DiophantineCertificate(F=F, gamma=float(gamma), zmax=int(zmax),
                                  margin=float(ratio[k]), argmin_z=tuple(int(v) for v in Z[k]))


def _bump_kernel(grid: Grid, radius: float) -> np.ndarray:
    """Compactly supported C^1 bump (1 - (r/radius)^2)^2, normalized mass 1."""
    r = grid.torus_radius()
    k = np.where(r < radius, (1.0 - (r / radius) ** 2) ** 2, 0.0)
    return k / (np.sum(k) * grid.cell_volume)


def sample_random(grid: Grid, seed: int, correlation_range: float, contrast: float = 4.0,
                  max_contrast: float = 16.0) -> CoefficientField:
    """Seeded realization with exact finite range of dependence.

    White lattice noise is convolved with a bump supported in radius
    correlation_range/2 and pushed through a fixed logistic map into
    [1/contrast, 1]; values at separation > correlation_range are functions
    of disjoint noise. Contrast is capped (default 16) to keep CFL steps and
    corrector iteration counts practical; raise max_contrast to override.
    """
    if correlation_range < 2 * grid.h:
        raise MediaError(f"correlation_range {correlation_range} < 2h = {2 * grid.h}")
    if contrast < 1.0:
        raise MediaError("contrast must be >= 1")
    if contrast > max_contrast:
        raise MediaError(f"contrast {contrast} above the cap {max_contrast}; pass max_contrast to override")
    rng = np.random.default_rng(int(seed))
    eta = rng.standard_normal(grid.shape)
    kern = _bump_kernel(grid, correlation_range / 2.0)
    w = grid.ifft(grid.fft(kern) * grid.fft(eta)) * grid.cell_volume
    # exact std of w under unit white noise: h^d * ||kern||_l2(counting)
    sigma = grid.cell_volume * math.sqrt(float(np.sum(kern**2)))
    if sigma == 0.0:
        raise MediaError("degenerate convolution kernel")
    s = 1.0 / (1.0 + np.exp(-w / sigma))
    a = 1.0 / contrast + (1.0 - 1.0 / contrast) * s
    vals = np.zeros(grid.shape + (grid.d, grid.d))
    for i in range(grid.d):
        vals[..., i, i] = a
    return _validate_and_build(
        grid, vals, "random",
        {"seed": int(seed), "correlation_range": float(correlation_range), "contrast": float(contrast)},
    )


def ellipticity_constants(fieldv: CoefficientField) -> tuple:
    """Measured (floor, ceiling): extreme eigenvalues of A over all nodes."""
    lo, hi = _sym_eig_bounds(fieldv.values, fieldv.grid.d)
    return float(lo.min()), float(hi.max())
