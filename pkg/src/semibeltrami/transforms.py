"""Cauchy transform, Beurling transform and the logarithmic potential.

All four operators are Fourier multipliers on the window with the
zero-frequency mode removed from the periodic part. The removed mean is
not lost: it is reinstated through the polynomial trend (``mean * z̄``
for the Cauchy transform, ``mean * |z|^2 / 4`` plus a first-moment
correction for the potential), so the outputs approximate the
free-space operators on the window core and satisfy the derivative
identities exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SupportError
from .grid import ComplexField, Field, Grid, Polynomial, RealField, d_zbar

__all__ = [
    "OperatorStats",
    "beurling_stats",
    "cauchy_transform",
    "beurling_transform",
    "log_potential",
    "potential_dbar",
    "log_potential_at",
    "check_source",
]

EULER_GAMMA = 0.5772156649015329


@dataclass(frozen=True)
class OperatorStats:
    zero_mode_policy: str
    l2_operator_norm_estimate: float


def beurling_stats(grid: Grid) -> OperatorStats:
    """Exact ``L^2`` norm of the discrete Beurling multiplier on ``grid``."""
    keep = ~grid.dropped_modes
    sym = np.abs(grid.zeta.conj()[keep] / grid.zeta[keep])
    return OperatorStats("drop", float(sym.max()))


def check_source(g: Field, *, compact: bool = False) -> None:
    """Refuse sources whose support (or trend) is undeclared."""
    if g.is_compact:
        if g.support_radius > 0.5 * g.grid.L * (1 + 1e-9):
            raise SupportError(
                f"support radius {g.support_radius:g} exceeds the guard band L/2 = {g.grid.L / 2:g}"
            )
        return
    if compact:
        raise SupportError("operator requires a compactly supported source (declare support_radius)")
    if not g.is_tracked:
        raise SupportError("source has no support declaration; refusing (aliasing hazard)")


def _inverse_symbol(sym: np.ndarray, grid: Grid) -> np.ndarray:
    out = np.zeros_like(sym, dtype=complex)
    keep = ~grid.dropped_modes
    out[keep] = 1.0 / sym[keep]
    return out


def cauchy_transform(g: Field) -> ComplexField:
    """Solve ``d_zbar w = g`` with ``w(0) = 0``.

    Parameters
    ----------
    g : Field
        Compactly supported (inside ``|z| <= L/2``) or carrying a trend.

    Returns
    -------
    ComplexField
        ``w`` with trend ``mean(g) z̄ + (primitive of g's trend)``.
    """
    check_source(g)
    grid = g.grid
    spec = np.fft.fft2(g.periodic)
    mean = spec[0, 0] / grid.n**2
    per = np.fft.ifft2(spec * _inverse_symbol(0.5j * grid.zeta, grid))
    trend = g.trend.antiderivative_zbar() + Polynomial({(0, 1): mean})
    data = per + trend(grid.z)
    shift = data[grid.origin]
    return ComplexField(grid, data - shift, None, trend - Polynomial({(0, 0): shift}))


def beurling_transform(g: Field) -> ComplexField:
    """Singular integral ``T g`` as the unimodular multiplier ``conj(zeta)/zeta``."""
    check_source(g)
    grid = g.grid
    sym = np.zeros(grid.zeta.shape, dtype=complex)
    keep = ~grid.dropped_modes
    sym[keep] = grid.zeta.conj()[keep] / grid.zeta[keep]
    per = np.fft.ifft2(np.fft.fft2(g.periodic) * sym)
    trend = g.trend.antiderivative_zbar().d_z()
    if not trend.is_zero:
        per = per + trend(grid.z)
    return ComplexField(grid, per, None, trend)


def log_potential_at(g: RealField, w0: complex = 0.0, width: float | None = None) -> float:
    """``(1/2pi) * integral ln|w0 - w| g(w) dm(w)`` by singularity-subtracted quadrature.

    The value ``g(w0)`` is carried by a Gaussian whose log-moment is known in
    closed form; the remainder vanishes at ``w0`` and is summed on the grid.
    ``w0`` must be a grid node.
    """
    grid = g.grid
    a = grid.L / 4 if width is None else width
    r = np.abs(grid.z - w0)
    at = np.unravel_index(np.argmin(r), r.shape)
    if r[at] > 1e-9 * grid.dx:
        raise ValueError("w0 must be a grid node")
    g0 = g.data[at]
    rem = g.data - g0 * np.exp(-(r**2) / a**2)
    with np.errstate(divide="ignore"):
        logr = np.where(r > 0, np.log(np.where(r > 0, r, 1.0)), 0.0)
    grid_part = np.sum(logr * rem) * grid.cell_area
    gauss_part = g0 * np.pi * a**2 * (np.log(a) - 0.5 * EULER_GAMMA)
    return float((grid_part + gauss_part) / (2 * np.pi))


def log_potential(g: RealField) -> RealField:
    """Logarithmic potential ``N^g`` with ``laplacian(N^g) == g``.

    The spectral inverse fixes the periodic part; the mean and first moment
    of ``g`` enter the quadratic/linear trend, and the additive constant is
    recalibrated so that ``N^g(0)`` equals the defining integral.
    """
    check_source(g, compact=True)
    grid = g.grid
    area = (2 * grid.L) ** 2
    spec = np.fft.fft2(g.data)
    mean = spec[0, 0].real / grid.n**2
    moment = complex(np.sum(g.data * grid.z) * grid.cell_area)
    per = np.fft.ifft2(spec * _inverse_symbol(-np.abs(grid.zeta) ** 2 + 0j, grid)).real
    trend = Polynomial({
        (1, 1): mean / 4,
        (1, 0): -np.conj(moment) / (4 * area),
        (0, 1): -moment / (4 * area),
    })
    data = per + trend(grid.z).real
    shift = log_potential_at(g) - data[grid.origin]
    return RealField(grid, data + shift, None, trend + Polynomial({(0, 0): shift}))


def potential_dbar(g: RealField) -> ComplexField:
    """``d_zbar N^g``; the density ``L[g]`` feeding σ."""
    return d_zbar(log_potential(g))
