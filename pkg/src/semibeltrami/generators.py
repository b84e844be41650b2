"""Built-in smooth data: bumps, mollified disks, tensor-product test functions."""
from __future__ import annotations

import numpy as np

from .grid import ComplexField, Grid, RealField

__all__ = [
    "smooth_step",
    "bump_profile",
    "radial_bump",
    "bump_field",
    "disk_profile",
    "disk_indicator",
    "tensor_bump",
]


def smooth_step(t):
    """C-infinity step: 0 for ``t <= 0``, 1 for ``t >= 1``."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


BUMP_SHARPNESS = 4.0


def bump_profile(r, R: float, c: float = BUMP_SHARPNESS):
    """``exp(-c s^2 / (1 - s^2))`` with ``s = r/R``; zero for ``r >= R``, peak 1.

    The edge behaves like ``exp(-c / (2(1 - s)))``, so larger ``c`` trades a
    narrower plateau for faster spectral decay. ``c = 4`` keeps the
    spectral roundtrip error of an ``R = 0.7`` bump near ``1e-11`` at ``dx = 1/64``.
    """
    s = np.asarray(r, dtype=float) / R
    inside = s < 1.0
    out = np.zeros_like(s)
    si = s[inside] ** 2
    out[inside] = np.exp(-c * si / (1.0 - si))
    return out


def radial_bump(grid: Grid, k: float, R: float, center: complex = 0.0) -> ComplexField:
    """``k * bump(|z - center| / R)`` as a compactly supported complex field."""
    r = np.abs(grid.z - center)
    return ComplexField(grid, k * bump_profile(r, R), support_radius=R + abs(center))


def bump_field(grid: Grid, amplitude: float, R: float, center: complex = 0.0) -> RealField:
    r = np.abs(grid.z - center)
    return RealField(grid, amplitude * bump_profile(r, R), support_radius=R + abs(center))


def disk_profile(r, R: float, width: float):
    """Radial profile of the disk indicator mollified across ``[R - w/2, R + w/2]``."""
    if width <= 0:
        return (np.asarray(r) < R).astype(float)
    return smooth_step((R + 0.5 * width - np.asarray(r, dtype=float)) / width)


def disk_indicator(grid: Grid, R: float = 1.0, mollify: bool = True,
                   collar: float | None = None) -> RealField:
    """Indicator of ``|z| < R``, by default smoothed over ``R +- 3 dx``."""
    width = (6.0 * grid.dx if collar is None else collar) if mollify else 0.0
    prof = disk_profile(np.abs(grid.z), R, width)
    return RealField(grid, prof, support_radius=R + 0.5 * width)


def tensor_bump(grid: Grid, center: complex, scale: float):
    """Tensor-product bump ``b(x) b(y)`` (profile of :func:`bump_profile`) and its exact gradient.

    Returns ``(psi, dpsi_dx, dpsi_dy)`` as plain arrays.
    """
    tx = (grid.z.real - center.real) / scale
    ty = (grid.z.imag - center.imag) / scale

    c = BUMP_SHARPNESS

    def prof(t):
        inside = np.abs(t) < 1
        val = np.zeros_like(t)
        der = np.zeros_like(t)
        ti = t[inside]
        d = 1.0 - ti**2
        e = np.exp(-c * ti**2 / d)
        val[inside] = e
        der[inside] = e * (-2.0 * c * ti / d**2) / scale
        return val, der

    bx, dbx = prof(tx)
    by, dby = prof(ty)
    return bx * by, dbx * by, bx * dby
