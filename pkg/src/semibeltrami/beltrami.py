"""Linear Beltrami problems: ``w_zbar = mu w_z + sigma`` and µ-conformal maps.

The unknown iterated on is the density ``h = w_zbar``. Writing
``h = sigma + h1`` the correction ``h1`` is always supported in
``supp mu`` and solves ``h1 = mu T h1 + mu T sigma``; with ``|mu| <= k``
and the isometric discrete ``T`` this map contracts by ``k`` in ``L^2``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from scipy.spatial import cKDTree

from .errors import (CertificationError, ConfigurationError, ConvergenceError,
                     NondegeneracyError, OutOfRangeError, SupportError)
from .grid import (ComplexField, Field, Grid, Interpolant, Polynomial, RealField,
                   d_z, d_zbar, drop_checkerboard, norm_p)
from .transforms import beurling_transform, cauchy_transform, check_source

__all__ = [
    "BeltramiCoefficient",
    "LinearSolveConfig",
    "SolveReport",
    "QCMap",
    "solve_inhomogeneous",
    "solve_density",
    "principal_map",
    "cell_orientation",
    "invert_map",
    "holder_quotient",
    "residual_beltrami",
]

logger = logging.getLogger(__name__)

DEGENERACY_MARGIN = 1e-6


@dataclass(frozen=True, eq=False)
class BeltramiCoefficient:
    """Complex dilatation µ with certified ``k = max |µ| < 1``."""

    field: ComplexField
    k: float
    support_radius: float | None

    @classmethod
    def from_field(cls, f: Field) -> "BeltramiCoefficient":
        data = np.asarray(f.data, dtype=complex)
        k = float(np.abs(data).max(initial=0.0))
        if not np.isfinite(k) or k >= 1.0 - DEGENERACY_MARGIN:
            raise NondegeneracyError(f"nondegeneracy violated: max|mu| = {k:.6g} >= 1")
        sr = f.support_radius
        if sr is None:
            nz = np.abs(data) > 0
            if not nz.any():
                sr = 0.0
            else:
                r = float(np.abs(f.grid.z[nz]).max())
                sr = r if r <= 0.5 * f.grid.L else None
        field_ = ComplexField(f.grid, data, sr)
        return cls(field_, k, sr)

    @classmethod
    def zero(cls, grid: Grid) -> "BeltramiCoefficient":
        return cls(ComplexField(grid, np.zeros((grid.n, grid.n)), 0.0), 0.0, 0.0)

    @property
    def grid(self) -> Grid:
        return self.field.grid

    @property
    def data(self) -> np.ndarray:
        return self.field.data

    @property
    def is_zero(self) -> bool:
        return self.k == 0.0

    def distortion(self) -> RealField:
        """``K_mu = (1 + |mu|) / (1 - |mu|)``."""
        a = np.abs(self.data)
        return RealField(self.grid, (1 + a) / (1 - a))

    def require_compact(self) -> None:
        if self.support_radius is None or self.support_radius > 0.5 * self.grid.L * (1 + 1e-9):
            raise SupportError("Beltrami coefficient must vanish outside |z| <= L/2")


@dataclass(frozen=True)
class LinearSolveConfig:
    tol: float = 1e-12
    max_iter: int = 500

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")


@dataclass
class SolveReport:
    """Iteration trace of a solver run."""

    iterations: int = 0
    residual_history: list[float] = field(default_factory=list)
    contraction_ratio: float = 0.0
    converged: bool = False
    final_residual: float = 0.0
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        out = {
            "iterations": self.iterations,
            "residuals": [float(r) for r in self.residual_history],
            "contraction_ratio": float(self.contraction_ratio),
            "converged": bool(self.converged),
            "final_residual": float(self.final_residual),
        }
        out.update({k: _plain(v) for k, v in self.extra.items() if not k.startswith("_")})
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SolveReport":
        d = dict(d)
        rep = cls(
            iterations=int(d.pop("iterations")),
            residual_history=[float(r) for r in d.pop("residuals")],
            contraction_ratio=float(d.pop("contraction_ratio")),
            converged=bool(d.pop("converged")),
            final_residual=float(d.pop("final_residual", 0.0)),
        )
        rep.extra = d
        return rep


def _plain(v):
    """Convert numpy scalars/arrays nested in containers to JSON-friendly values."""
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


def _check_mu(mu: BeltramiCoefficient) -> None:
    if mu.k >= 1.0 - DEGENERACY_MARGIN:
        raise NondegeneracyError(f"nondegeneracy violated: k = {mu.k:.6g}")
    mu.require_compact()


def _beurling_compact(grid: Grid, data: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(np.fft.fft2(data) * symbol)


def _beurling_symbol(grid: Grid) -> np.ndarray:
    sym = np.zeros(grid.zeta.shape, dtype=complex)
    keep = ~grid.dropped_modes
    sym[keep] = grid.zeta.conj()[keep] / grid.zeta[keep]
    return sym


def solve_density(mu: BeltramiCoefficient, sigma: Field, cfg: LinearSolveConfig,
                  h1_init: np.ndarray | None = None):
    """Fixed point of ``h = mu T h + sigma`` split as ``h = sigma + h1``.

    Returns ``(h1, report)`` with ``h1`` a plain array supported in ``supp mu``.
    The residual recorded at step ``m`` is ``||h_m - mu T h_m - sigma|| / ||sigma||``.
    """
    _check_mu(mu)
    check_source(sigma)
    grid = mu.grid
    m = mu.data
    scale = norm_p(sigma, 2)
    rep = SolveReport()
    if mu.is_zero or scale == 0.0:
        rep.converged = True
        return np.zeros((grid.n, grid.n), dtype=complex), rep
    sym = _beurling_symbol(grid)
    b = m * beurling_transform(sigma).data
    h1 = np.zeros_like(b) if h1_init is None else np.array(h1_init, dtype=complex)
    prev_step = None
    ratios = []
    hist = rep.residual_history
    for it in range(cfg.max_iter + 1):
        new = m * _beurling_compact(grid, h1, sym) + b
        step = np.sqrt(np.sum(np.abs(new - h1) ** 2) * grid.cell_area)
        hist.append(step / scale)
        if prev_step is not None and prev_step > 0 and it >= 2:
            ratios.append(step / prev_step)
        if hist[-1] <= cfg.tol:
            rep.converged = True
            # keep the iterate whose residual was measured
            break
        if it == cfg.max_iter:
            break
        h1, prev_step = new, step
    rep.iterations = it
    rep.final_residual = hist[-1]
    rep.contraction_ratio = float(max(ratios)) if ratios else 0.0
    if not rep.converged:
        logger.warning("linear Beltrami iteration stopped at residual %.3e", hist[-1])
    return h1, rep


def solve_inhomogeneous(mu: BeltramiCoefficient, sigma: Field,
                        cfg: LinearSolveConfig | None = None,
                        h1_init: np.ndarray | None = None):
    """Solve ``w_zbar = mu w_z + sigma`` with ``w(0) = 0``.

    Parameters
    ----------
    mu : BeltramiCoefficient
        Compactly supported, ``k < 1``.
    sigma : Field
        Compactly supported inside ``|z| <= L/2`` or carrying a trend.
    cfg : LinearSolveConfig, optional
    h1_init : ndarray, optional
        Warm start for the correction ``h1 = w_zbar - sigma``.

    Returns
    -------
    omega : ComplexField
    report : SolveReport
        ``report.extra`` holds ``beltrami_residual`` recomputed from ``omega``
        and the final correction under ``"_h1"`` (not serialized).
    """
    cfg = cfg or LinearSolveConfig()
    h1, rep = solve_density(mu, sigma, cfg, h1_init)
    h = sigma + ComplexField(mu.grid, h1, mu.support_radius)
    omega = cauchy_transform(h)
    rep.extra["beltrami_residual"] = residual_beltrami(mu, sigma, omega)
    rep.extra["beltrami_residual_full"] = residual_beltrami(mu, sigma, omega, full=True)
    rep.extra["_h1"] = h1
    return omega, rep


def residual_beltrami(mu: BeltramiCoefficient, sigma: Field, omega: Field,
                      full: bool = False) -> float:
    """``||w_zbar - mu w_z - sigma||_2`` over ``max(||sigma||, k ||w_z||, floor)``.

    The residual is measured after removing the pure-Nyquist checkerboard
    modes, which no discrete derivative can produce. ``full=True`` keeps
    them; the two agree for well-resolved sources but differ when the
    source has a kink (e.g. ``exp(-|w|)`` at a zero of ``w``).
    """
    wz = d_z(omega)
    r = (d_zbar(omega) - mu.field * wz - sigma).data
    if not full:
        r = drop_checkerboard(mu.grid, r)
    denom = max(norm_p(sigma, 2), norm_p(wz, 2) * mu.k, 1e-300)
    num = float(np.sqrt(np.sum(np.abs(r) ** 2) * mu.grid.cell_area))
    return 0.0 if num == 0.0 else num / denom


# --------------------------------------------------------------------------
# principal µ-conformal map
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InverseSeed:
    """Coarse lookup from image points back to source nodes."""

    tree: cKDTree
    sources: np.ndarray
    spacing: float

    def lookup(self, w: np.ndarray):
        dist, idx = self.tree.query(np.column_stack([w.real.ravel(), w.imag.ravel()]))
        return self.sources[idx].reshape(w.shape), dist.reshape(w.shape)


@dataclass(frozen=True, eq=False)
class QCMap:
    """Principal solution ``f = z + w`` of ``f_zbar = mu f_z``."""

    forward: ComplexField
    jacobian: RealField
    mu: BeltramiCoefficient
    inverse_seed: InverseSeed
    f_z: ComplexField
    f_zbar: ComplexField
    report: SolveReport | None = None

    @property
    def grid(self) -> Grid:
        return self.forward.grid

    @property
    def is_identity(self) -> bool:
        return self.mu.is_zero

    def interpolants(self):
        cache = self.__dict__.get("_interp")
        if cache is None:
            cache = (Interpolant(self.forward), Interpolant(self.f_z), Interpolant(self.f_zbar))
            object.__setattr__(self, "_interp", cache)
        return cache

    def __call__(self, z) -> np.ndarray:
        return self.interpolants()[0](z)


def _build_seed(forward: ComplexField, stride: int = 4) -> InverseSeed:
    g = forward.grid
    src = g.z[::stride, ::stride].ravel()
    img = forward.data[::stride, ::stride].ravel()
    tree = cKDTree(np.column_stack([img.real, img.imag]))
    return InverseSeed(tree, src, stride * g.dx)


def cell_orientation(f: np.ndarray) -> float:
    """Smallest signed area of the images of the two triangles of each grid cell.

    Positive values mean the piecewise-linear interpolant of the node
    images preserves orientation cell by cell, a discrete local-injectivity
    certificate that does not rely on the spectral derivatives.
    """
    a, b, c, d = f[:-1, :-1], f[1:, :-1], f[1:, 1:], f[:-1, 1:]

    def area(p, q, r):
        return 0.5 * np.imag(np.conj(q - p) * (r - p))

    return float(min(area(a, b, c).min(), area(a, c, d).min()))


def principal_map(mu: BeltramiCoefficient, cfg: LinearSolveConfig | None = None) -> QCMap:
    """µ-conformal map ``f = z + w`` where ``w_zbar = mu w_z + mu``, ``f(0) = 0``."""
    cfg = cfg or LinearSolveConfig()
    grid = mu.grid
    z_poly = Polynomial({(1, 0): 1.0})
    if mu.is_zero:
        _check_mu(mu)
        fwd = ComplexField(grid, grid.z, None, z_poly)
        one = ComplexField(grid, np.ones((grid.n, grid.n)), None, Polynomial({(0, 0): 1.0}))
        zero = ComplexField(grid, np.zeros((grid.n, grid.n)), 0.0)
        jac = RealField(grid, np.ones((grid.n, grid.n)), None, Polynomial({(0, 0): 1.0}))
        rep = SolveReport(converged=True)
        return QCMap(fwd, jac, mu, _build_seed(fwd), one, zero, rep)
    omega, rep = solve_inhomogeneous(mu, mu.field, cfg)
    h1 = rep.extra.pop("_h1")
    h = mu.field + ComplexField(grid, h1, mu.support_radius)
    fwd = omega + ComplexField(grid, grid.z, None, z_poly)
    fz = beurling_transform(h) + 1.0
    fzb = ComplexField(grid, h.data, h.support_radius)
    jac_data = np.abs(fz.data) ** 2 - np.abs(fzb.data) ** 2
    orient = cell_orientation(fwd.data)
    if not np.all(jac_data > 0) or orient <= 0:
        raise CertificationError("resolution insufficient for homeomorphism certification")
    rep.extra["min_cell_area"] = orient / grid.cell_area
    jac = RealField(grid, jac_data)
    return QCMap(fwd, jac, mu, _build_seed(fwd), fz, fzb, rep)


def invert_map(qc: QCMap, w, tol: float | None = None, max_steps: int = 50,
               strict: bool = True):
    """Solve ``f(z) = w`` by seeded Newton iteration on the interpolated map.

    Accepts a scalar or an array of points. With ``strict=False`` the
    return value is ``(z, converged_mask)`` instead of raising on failure.
    """
    grid = qc.grid
    scalar = np.isscalar(w)
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    tol = 1e-10 * grid.L if tol is None else tol
    if qc.is_identity:
        inside = (np.abs(w.real) <= grid.L) & (np.abs(w.imag) <= grid.L)
        if strict and not inside.all():
            raise OutOfRangeError("point outside the image of the window")
        z = w.copy()
        return (z[0] if scalar else z) if strict else (z, inside)
    f_i, fz_i, fzb_i = qc.interpolants()
    z, dist = qc.inverse_seed.lookup(w)
    lip = float(np.abs(qc.f_z.data).max() + np.abs(qc.f_zbar.data).max())
    in_range = dist <= 2.0 * qc.inverse_seed.spacing * lip
    if strict and not in_range.all():
        raise OutOfRangeError("point outside the image of the window")
    z = z.astype(complex)
    done = np.zeros(w.shape, dtype=bool)
    active = in_range.copy()
    for _ in range(max_steps):
        idx = np.nonzero(active & ~done)
        if idx[0].size == 0:
            break
        zz = z[idx]
        r = w[idx] - f_i(zz)
        ok = np.abs(r) <= tol
        done[tuple(a[ok] for a in idx)] = True
        a = fz_i(zz)
        b = fzb_i(zz)
        jac = np.abs(a) ** 2 - np.abs(b) ** 2
        step = (np.conj(a) * r - b * np.conj(r)) / jac
        z[idx] = np.where(ok, zz, zz + step)
    outside = (np.abs(z.real) > grid.L) | (np.abs(z.imag) > grid.L)
    conv = done & ~outside
    if strict:
        if outside.any():
            raise OutOfRangeError("preimage lies outside the window")
        if not conv.all():
            raise ConvergenceError("Newton inversion stagnated")
        return z[0] if scalar else z
    return z, conv


def holder_quotient(omega: Field, p: float, sample_pairs: int = 20000, seed: int = 0) -> float:
    """Largest ``|w(z1) - w(z2)| / |z1 - z2|^(1 - 2/p)`` over random node pairs."""
    if not p > 2:
        raise ConfigurationError("p must exceed 2")
    grid = omega.grid
    rng = np.random.default_rng(seed)
    n2 = grid.n * grid.n
    i = rng.integers(0, n2, sample_pairs)
    j = rng.integers(0, n2, sample_pairs)
    keep = i != j
    data = omega.data.ravel()
    z = grid.z.ravel()
    num = np.abs(data[i[keep]] - data[j[keep]])
    den = np.abs(z[i[keep]] - z[j[keep]]) ** (1.0 - 2.0 / p)
    return float((num / den).max(initial=0.0))
