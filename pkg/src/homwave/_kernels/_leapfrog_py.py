"""Pure-numpy mirror of the compiled leapfrog kernels.

Same stencil, same update order; used when the extension is unavailable or
when HOMWAVE_FORCE_PY_KERNELS is set.
"""
import numpy as np


def lap1d(u, ah, inv_h2, out):
    up1 = np.roll(u, -1)
    um1 = np.roll(u, 1)
    ahm = np.roll(ah, 1)
    np.copyto(out, (ah * (up1 - u) - ahm * (u - um1)) * inv_h2)


def leap1d(u, up, ah, inv_h2, dt2, nsteps):
    lu = np.empty_like(u)
    for _ in range(nsteps):
        lap1d(u, ah, inv_h2, lu)
        nxt = 2.0 * u - up + dt2 * lu
        np.copyto(up, u)
        np.copyto(u, nxt)


def lap2d(u, a11h, a22h, a12, inv_h2, out):
    uxp = np.roll(u, -1, axis=0)
    uxm = np.roll(u, 1, axis=0)
    uyp = np.roll(u, -1, axis=1)
    uym = np.roll(u, 1, axis=1)
    a11m = np.roll(a11h, 1, axis=0)
    a22m = np.roll(a22h, 1, axis=1)
    diag = (a11h * (uxp - u) - a11m * (u - uxm)
            + a22h * (uyp - u) - a22m * (u - uym))
    dy0 = np.roll(u, -1, axis=1) - np.roll(u, 1, axis=1)
    dx0 = np.roll(u, -1, axis=0) - np.roll(u, 1, axis=0)
    p = a12 * dy0
    q = a12 * dx0
    mix = (np.roll(p, -1, axis=0) - np.roll(p, 1, axis=0)
           + np.roll(q, -1, axis=1) - np.roll(q, 1, axis=1))
    np.copyto(out, diag * inv_h2 + 0.25 * mix * inv_h2)


def leap2d(u, up, a11h, a22h, a12, inv_h2, dt2, nsteps):
    lu = np.empty_like(u)
    for _ in range(nsteps):
        lap2d(u, a11h, a22h, a12, inv_h2, lu)
        nxt = 2.0 * u - up + dt2 * lu
        np.copyto(up, u)
        np.copyto(u, nxt)
