"""Divergence-form equations ``div(A grad u) = G Q(u)`` through Beltrami equations.

A symmetric matrix field with ``det A = 1`` corresponds pointwise to a
Beltrami coefficient; the source enters through the logarithmic
potential. Solving the semi-linear Beltrami problem and taking the real
part gives a weak solution, which is certified against smooth test
functions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson

from .beltrami import BeltramiCoefficient, LinearSolveConfig, QCMap
from .errors import (CertificationError, ConfigurationError, EllipticityError,
                     NondegeneracyError)
from .generators import smooth_step, tensor_bump
from .grid import (ComplexField, Field, Grid, Interpolant, Polynomial, RealField, core_mask,
                   d_x, d_y, laplacian, norm_p)
from .semilinear import (ContinuationConfig, FactorizationResult, Nonlinearity,
                         compose_solution, factorize, solve_semilinear_operator)
from .transforms import log_potential, potential_dbar

__all__ = [
    "MatrixField",
    "WeakTestSet",
    "mu_from_A",
    "A_from_mu",
    "matrix_preset",
    "sigma_from_source",
    "solve_poisson_semilinear",
    "PoissonArtifacts",
    "a_conjugate",
    "weak_residual",
    "harmonic_source_solve",
    "preset_Q",
    "verify_change_of_variables",
]

DET_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MatrixField:
    """Symmetric ``[[a11, a12], [a12, a22]]`` with ``det = 1`` and ``det(I + A) > 0``."""

    grid: Grid
    a11: RealField
    a12: RealField
    a22: RealField

    def __post_init__(self):
        for name in ("a11", "a12", "a22"):
            v = getattr(self, name)
            if not isinstance(v, RealField):
                v = RealField(self.grid, np.asarray(v, dtype=float))
                object.__setattr__(self, name, v)
            if v.grid != self.grid:
                raise ConfigurationError("matrix entries live on different grids")
        a11, a12, a22 = self.a11.data, self.a12.data, self.a22.data
        det = a11 * a22 - a12**2
        if not np.all(np.abs(det - 1.0) <= DET_TOL):
            raise EllipticityError(f"det A deviates from 1 by {np.abs(det - 1).max():.3e}")
        if not np.all((1 + a11) * (1 + a22) - a12**2 > 0):
            raise EllipticityError("ellipticity violated: det(I + A) <= 0")

    @classmethod
    def identity(cls, grid: Grid) -> "MatrixField":
        one, zero = np.ones((grid.n, grid.n)), np.zeros((grid.n, grid.n))
        return cls(grid, RealField(grid, one), RealField(grid, zero), RealField(grid, one))

    @classmethod
    def constant(cls, grid: Grid, a11: float, a12: float, a22: float) -> "MatrixField":
        full = lambda v: RealField(grid, np.full((grid.n, grid.n), float(v)))
        return cls(grid, full(a11), full(a12), full(a22))

    def det(self) -> np.ndarray:
        return self.a11.data * self.a22.data - self.a12.data**2

    def apply(self, vx: np.ndarray, vy: np.ndarray):
        """``A @ (vx, vy)`` pointwise."""
        return (self.a11.data * vx + self.a12.data * vy,
                self.a12.data * vx + self.a22.data * vy)

    def deviation_support(self) -> float | None:
        """Radius outside which ``A == I`` exactly, if it fits in the guard band."""
        dev = (np.abs(self.a11.data - 1) + np.abs(self.a12.data) + np.abs(self.a22.data - 1)) > 0
        if not dev.any():
            return 0.0
        r = float(np.abs(self.grid.z[dev]).max())
        return r if r <= 0.5 * self.grid.L else None


def mu_from_A(A: MatrixField) -> BeltramiCoefficient:
    """``mu = (a22 - a11 - 2i a12) / det(I + A)``, certified ``max|mu| < 1``."""
    a11, a12, a22 = A.a11.data, A.a12.data, A.a22.data
    mu = (a22 - a11 - 2j * a12) / ((1 + a11) * (1 + a22) - a12**2)
    try:
        return BeltramiCoefficient.from_field(ComplexField(A.grid, mu))
    except NondegeneracyError as exc:
        raise EllipticityError(f"ellipticity violation: {exc}") from exc


def _entries_from_mu(mu: np.ndarray):
    d = 1.0 - np.abs(mu) ** 2
    return np.abs(1 - mu) ** 2 / d, -2 * mu.imag / d, np.abs(1 + mu) ** 2 / d


def A_from_mu(mu: BeltramiCoefficient) -> MatrixField:
    """Symmetric det-one matrix field whose Beltrami coefficient is ``mu``."""
    a11, a12, a22 = _entries_from_mu(mu.data)
    g = mu.grid
    return MatrixField(g, RealField(g, a11), RealField(g, a12), RealField(g, a22))


def matrix_preset(grid: Grid, name: str, r_in: float | None = None,
                  r_out: float | None = None) -> MatrixField:
    """Built-in coefficient fields.

    ``identity``; ``diag_2_half`` and ``sqrt2`` equal ``diag(2, 1/2)`` and
    ``[[sqrt2, 1], [1, sqrt2]]`` on ``|z| <= r_in`` and blend to ``I`` by
    ``r_out`` (default ``0.25 L`` and ``0.45 L``) through a smooth plateau
    in the Beltrami coefficient, so ``det A = 1`` holds exactly.
    """
    if name == "identity":
        return MatrixField.identity(grid)
    targets = {"diag_2_half": -1.0 / 3.0, "sqrt2": -1j * (np.sqrt(2.0) - 1.0)}
    if name not in targets:
        raise ConfigurationError(f"unknown matrix preset {name!r}")
    r_in = 0.25 * grid.L if r_in is None else r_in
    r_out = 0.45 * grid.L if r_out is None else r_out
    if not 0 < r_in < r_out <= 0.5 * grid.L:
        raise ConfigurationError("need 0 < r_in < r_out <= L/2")
    plateau = smooth_step((r_out - np.abs(grid.z)) / (r_out - r_in))
    mu = BeltramiCoefficient.from_field(ComplexField(grid, targets[name] * plateau, r_out))
    return A_from_mu(mu)


def sigma_from_source(mu: BeltramiCoefficient, g: RealField) -> ComplexField:
    """``P + mu conj(P)`` with ``P = d_zbar N^g``."""
    P = potential_dbar(g)
    if mu.is_zero:
        return P
    return P + mu.field * P.conj()


# --------------------------------------------------------------------------
# nonlinearity presets
# --------------------------------------------------------------------------


def preset_Q(kind: str, lam: float | None = None, value: float = 1.0) -> Nonlinearity:
    """Reaction terms ``Q(u)``; ``q(w) = Q(Re w)``.

    Kinds: ``power`` (``max(u, 0)^lam``), ``signed_power`` (``|u|^(lam-1) u``),
    ``neg_exp`` (``exp(-|u|)``) and ``constant`` (``value``).
    """
    if kind in ("power", "signed_power"):
        if lam is None or not 0.0 < lam < 1.0:
            raise ConfigurationError(f"exponent lambda must lie in (0, 1), got {lam}")
    if kind == "power":
        return Nonlinearity.from_real(lambda u: np.maximum(u, 0.0) ** lam, "power", lam)
    if kind == "signed_power":
        return Nonlinearity.from_real(lambda u: np.sign(u) * np.abs(u) ** lam, "signed_power", lam)
    if kind == "neg_exp":
        return Nonlinearity.from_real(lambda u: np.exp(-np.abs(u)), "neg_exp")
    if kind == "constant":
        v = float(value)
        return Nonlinearity.from_real(lambda u: np.full(np.shape(u), v), "constant")
    raise ConfigurationError(f"unknown nonlinearity kind {kind!r}")


def _Q_values(Q: Nonlinearity, u: np.ndarray) -> np.ndarray:
    return np.real(Q(np.asarray(u, dtype=complex)))


# --------------------------------------------------------------------------
# weak-form certification
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WeakTestSet:
    """Tensor-product bumps with exact gradients.

    Centres are drawn in ``|x|, |y| <= 0.2 L`` and scales in
    ``[0.08 L, 0.15 L]``, so every support sits inside ``|x|, |y| <= 0.35 L``.
    """

    grid: Grid
    seed: int
    centers: np.ndarray
    scales: np.ndarray
    functions: tuple = field(repr=False)

    @classmethod
    def build(cls, grid: Grid, count: int = 20, seed: int = 0) -> "WeakTestSet":
        if count < 1:
            raise ConfigurationError("count must be >= 1")
        rng = np.random.default_rng(seed)
        L = grid.L
        c = rng.uniform(-0.2 * L, 0.2 * L, size=(count, 2))
        centers = c[:, 0] + 1j * c[:, 1]
        scales = rng.uniform(0.08 * L, 0.15 * L, size=count)
        funcs = tuple(tensor_bump(grid, complex(z0), float(s)) for z0, s in zip(centers, scales))
        return cls(grid, int(seed), centers, scales, funcs)

    @property
    def count(self) -> int:
        return len(self.functions)

    def __iter__(self):
        return iter(self.functions)


def _gradient(u: Field):
    return d_x(u).data.real, d_y(u).data.real


def weak_residual(u: RealField, A: MatrixField, G: RealField, Q: Nonlinearity | None,
                  tests: WeakTestSet) -> float:
    """Max over test functions of the normalized weak-form defect.

    ``|int <A grad u, grad psi> + int G Q(u) psi| / (||grad psi|| (||grad u|| + ||G||))``
    with ``||grad u||`` taken over the window core.
    """
    grid = u.grid
    dA = grid.cell_area
    ux, uy = _gradient(u)
    px, py = A.apply(ux, uy)
    core = core_mask(grid)
    gu = float(np.sqrt(np.sum((ux**2 + uy**2)[core]) * dA))
    src = G.data * (1.0 if Q is None else _Q_values(Q, u.data))
    scale_u = gu + norm_p(G, 2)
    worst = 0.0
    for psi, sx, sy in tests:
        val = np.sum(px * sx + py * sy) * dA + np.sum(src * psi) * dA
        gpsi = float(np.sqrt(np.sum(sx**2 + sy**2) * dA))
        if abs(val) == 0.0:
            continue
        worst = max(worst, abs(val) / (gpsi * max(scale_u, 1e-300)))
    return worst


# --------------------------------------------------------------------------
# potentials and conjugates
# --------------------------------------------------------------------------


def harmonic_source_solve(g: RealField, tol: float = 1e-8) -> RealField:
    """``h = N^g`` with ``laplacian(h) == g`` certified spectrally."""
    h = log_potential(g)
    gn = norm_p(g, 2)
    if gn > 0:
        err = norm_p(laplacian(h) - g, 2) / gn
        if err > tol:
            raise CertificationError(f"laplacian roundtrip error {err:.3e} exceeds {tol:g}")
    return h


def _flux(u: Field, A: MatrixField):
    """``A grad u`` split as ``grad u`` (tracked) plus a compact remainder."""
    ux, uy = d_x(u), d_y(u)
    if isinstance(ux, ComplexField):
        ux, uy = ux.real, uy.real
    sr = A.deviation_support()
    rx, ry = A.apply(ux.data, uy.data)
    rx, ry = rx - ux.data, ry - uy.data
    if sr is None:
        # A differs from I near the window edge: no decomposition available
        return RealField(u.grid, rx + ux.data), RealField(u.grid, ry + uy.data)
    return ux + RealField(u.grid, rx, sr), uy + RealField(u.grid, ry, sr)


def a_conjugate(u: RealField, A: MatrixField, g: RealField, domain: float | None = None,
                tol: float = 1e-4) -> RealField:
    """``v`` with ``grad v = Hodge(A grad u - grad N^g)`` and ``v(0) = 0``.

    Parameters
    ----------
    u : RealField
    A : MatrixField
    g : RealField
        Compactly supported source (may be zero).
    domain : float, optional
        If given, the compatibility check and the reconstruction are
        restricted to ``|x|, |y| <= domain * L`` and ``v`` is obtained by path
        integration there (zero elsewhere). Otherwise ``v`` is rebuilt on
        the whole window by inverting the gradient spectrally.
    tol : float
        Allowed relative size of ``div(A grad u) - g``.
    """
    grid = u.grid
    px, py = _flux(u, A)
    if norm_p(g, 2) > 0:
        N = log_potential(g)
        px, py = px - d_x(N), py - d_y(N)
    # Hodge rotation: (a, b) -> (-b, a)
    fx, fy = -py, px
    mask = core_mask(grid, 0.5 if domain is None else domain)
    div = (d_x(px) + d_y(py)).data.real
    ux, uy = _gradient(u)
    scale = np.sqrt(np.sum((ux**2 + uy**2)[mask]) * grid.cell_area) / grid.L + norm_p(g, 2)
    defect = np.sqrt(np.sum(div[mask] ** 2) * grid.cell_area)
    if scale > 0 and defect / scale > tol:
        raise CertificationError(
            f"not A-harmonic with source g: relative divergence defect {defect / scale:.3e}")
    if scale == 0:
        return RealField(grid, np.zeros((grid.n, grid.n)))
    if domain is not None:
        return _path_integrate(grid, fx.data.real, fy.data.real, mask)
    phi = (fx + fy * 1j) * 0.5
    if phi.trend is None:
        phi = ComplexField(grid, phi.data, None, Polynomial.zero())
    spec = np.fft.fft2(phi.periodic)
    mean = spec[0, 0] / grid.n**2
    inv = np.zeros_like(spec)
    keep = ~grid.dropped_modes
    inv[keep] = spec[keep] / (0.5j * grid.zeta[keep])
    per = np.fft.ifft2(inv).real
    trend = (phi.trend + Polynomial({(0, 0): mean})).real_primitive()
    v = per + trend(grid.z).real
    shift = v[grid.origin]
    return RealField(grid, v - shift, None, trend.with_constant(-shift))


def _path_integrate(grid: Grid, fx: np.ndarray, fy: np.ndarray, mask: np.ndarray) -> RealField:
    rows = np.nonzero(mask.any(axis=1))[0]
    cols = np.nonzero(mask.any(axis=0))[0]
    i0, i1, j0, j1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
    oi, oj = grid.origin
    bx = fx[i0:i1, j0:j1]
    by = fy[i0:i1, j0:j1]
    h = grid.dx
    # along y = 0 from the origin, then vertically
    line = bx[:, oj - j0]
    ci = oi - i0
    vx = np.zeros(i1 - i0)
    vx[ci:] = cumulative_simpson(line[ci:], dx=h, initial=0.0)
    vx[:ci + 1] = cumulative_simpson(line[:ci + 1][::-1], dx=-h, initial=0.0)[::-1]
    cj = oj - j0
    v = np.zeros_like(bx)
    up = cumulative_simpson(by[:, cj:], dx=h, axis=1, initial=0.0)
    down = cumulative_simpson(by[:, :cj + 1][:, ::-1], dx=-h, axis=1, initial=0.0)[:, ::-1]
    v[:, cj:] = up
    v[:, :cj + 1] = down
    v += vx[:, None]
    out = np.zeros((grid.n, grid.n))
    out[i0:i1, j0:j1] = v
    out[~mask] = 0.0
    return RealField(grid, out)


# --------------------------------------------------------------------------
# the semi-linear Poisson pipeline
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PoissonArtifacts:
    omega: ComplexField
    mu: BeltramiCoefficient
    sigma: ComplexField
    map: QCMap | None
    H: ComplexField | None
    h: RealField | None
    factorization: FactorizationResult | None


def solve_poisson_semilinear(A: MatrixField, G: RealField, Q: Nonlinearity,
                             cfg: ContinuationConfig | None = None,
                             tests: WeakTestSet | None = None, factor: bool = True):
    """Weak solution of ``div(A grad u) = G Q(u)`` as ``u = Re w``.

    ``w`` solves ``w_zbar = mu w_z + sigma(G Q(Re w))`` where ``mu`` comes
    from ``A`` and ``sigma`` from the logarithmic potential. The report
    carries ``weak_residual`` over ``tests`` (default: 20 bumps, seed 0).

    Returns
    -------
    u : RealField
    report : SolveReport
    artifacts : PoissonArtifacts
    """
    cfg = cfg or ContinuationConfig()
    if not G.is_compact:
        raise ConfigurationError("G must declare a compact support")
    mu = mu_from_A(A)
    q = Q if Q.real else Nonlinearity.from_real(lambda t: np.real(Q(t + 0j)), Q.kind, Q.lam)

    def L_op(rho: Field) -> ComplexField:
        return sigma_from_source(mu, RealField(rho.grid, rho.data.real, rho.support_radius))

    omega, rep = solve_semilinear_operator(mu, G, L_op, q, cfg)
    sigma = rep.extra.pop("_source")
    u = omega.real
    tests = tests or WeakTestSet.build(A.grid)
    rep.extra["weak_residual"] = weak_residual(u, A, G, q, tests)
    rep.extra["weak_test_seed"] = tests.seed
    fac = None
    if factor and rep.converged:
        fac = factorize(omega, mu, sigma, cfg.linear)
        h = fac.H.real
        back = compose_solution(h, fac.map)
        core = core_mask(A.grid)
        un = float(np.abs(u.data[core]).max())
        rep.extra["representation_error"] = (
            float(np.abs(back.data.real - u.data)[core].max()) / un if un > 0 else 0.0)
        art = PoissonArtifacts(omega, mu, sigma, fac.map, fac.H, h, fac)
    else:
        art = PoissonArtifacts(omega, mu, sigma, None, None, None, None)
    return u, rep, art


# --------------------------------------------------------------------------
# change of variables
# --------------------------------------------------------------------------


def _taper(grid: Grid, inner: float, outer: float) -> np.ndarray:
    x = np.maximum(np.abs(grid.z.real), np.abs(grid.z.imag))
    return smooth_step((outer - x) / (outer - inner))


def verify_change_of_variables(T: RealField, qc: QCMap, A: MatrixField,
                               tests: WeakTestSet) -> float:
    """Weak-form check of ``div(A grad(T o f)) = J (laplacian T) o f``.

    Compares ``int <A grad(T o f), grad psi>`` (gradient of the sampled
    composite, taken spectrally) with ``int J <M^-1 (grad T) o f, grad psi>``
    where ``M`` is the Jacobian matrix of ``f``. Returns the largest
    difference over ``tests``, normalized by ``||grad psi|| ||grad(T o f)||``.
    """
    grid = qc.grid
    dA = grid.cell_area
    if qc.is_identity and T.grid == grid:
        comp = T
        tx, ty = _gradient(T)
    else:
        img = T.grid
        if not T.is_tracked:
            T = RealField(img, T.data * _taper(img, 0.8 * img.L, 0.97 * img.L), None,
                          Polynomial.zero())
        Tx, Ty = d_x(T), d_y(T)
        mask = core_mask(grid)
        fw = qc.forward.data[mask]
        vals = np.zeros((grid.n, grid.n))
        vals[mask] = Interpolant(T)(fw)
        chi = _taper(grid, 0.38 * grid.L, 0.5 * grid.L)
        comp = RealField(grid, vals * chi, None, Polynomial.zero())
        f_all = qc.forward.data
        inside = (np.abs(f_all.real) <= img.L) & (np.abs(f_all.imag) <= img.L)
        tx = np.zeros((grid.n, grid.n))
        ty = np.zeros((grid.n, grid.n))
        tx[inside] = Interpolant(Tx)(f_all[inside]).real
        ty[inside] = Interpolant(Ty)(f_all[inside]).real
    cx, cy = _gradient(comp)
    lx, ly = A.apply(cx, cy)
    fz, fzb = qc.f_z.data, qc.f_zbar.data
    fx, fy = fz + fzb, 1j * (fz - fzb)
    # J M^-1 with M = [[Re f_x, Re f_y], [Im f_x, Im f_y]]
    rx = fy.imag * tx - fy.real * ty
    ry = -fx.imag * tx + fx.real * ty
    core = core_mask(grid, 0.35)
    gnorm = float(np.sqrt(np.sum((cx**2 + cy**2)[core]) * dA))
    worst = 0.0
    for psi, sx, sy in tests:
        lhs = np.sum(lx * sx + ly * sy) * dA
        rhs = np.sum(rx * sx + ry * sy) * dA
        gpsi = float(np.sqrt(np.sum(sx**2 + sy**2) * dA))
        d = abs(lhs - rhs)
        if d > 0:
            worst = max(worst, d / (gpsi * max(gnorm, 1e-300)))
    return worst
