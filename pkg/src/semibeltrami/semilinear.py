"""Semi-linear Beltrami equations ``w_zbar = mu w_z + sigma q(w)``.

Solutions are found by continuation in ``tau``: at each ``tau`` the
source ``g`` of the linear problem is relaxed toward ``tau * sigma * q(w^g)``
by damped Picard steps, warm-started from the previous ``tau``. The
factorization ``w = H o f`` through the principal map is built on an
image-side grid.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .beltrami import (BeltramiCoefficient, LinearSolveConfig, QCMap, SolveReport,
                       invert_map, principal_map, residual_beltrami, solve_inhomogeneous)
from .errors import BlowupError, ConfigurationError, ConvergenceError, SupportError
from .generators import smooth_step
from .grid import (ComplexField, Field, Grid, Interpolant, Polynomial, RealField, core_mask,
                   d_zbar, drop_checkerboard, make_grid, norm_p)

__all__ = [
    "Nonlinearity",
    "ContinuationConfig",
    "FactorizationResult",
    "q_star",
    "solve_semilinear",
    "solve_semilinear_operator",
    "factorize",
    "compose_solution",
    "vekua_residual",
    "image_grid",
]

logger = logging.getLogger(__name__)

PROBE_RADII = (1.0, 10.0, 1e2, 1e3, 1e4, 1e6)


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """Pointwise map ``q``; ``real=True`` means ``q(w) = Q(Re w)`` for a real ``Q``.

    ``eval`` always receives the complex argument ``w`` and acts elementwise.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    kind: str = "custom"
    lam: float | None = None
    real: bool = False
    sublinearity_probe: tuple[tuple[float, float], ...] = ()

    def __call__(self, w) -> np.ndarray:
        return self.eval(np.asarray(w))

    def with_probe(self, radii=PROBE_RADII) -> "Nonlinearity":
        probe = tuple((float(t), float(q_star(self, t)) / t) for t in radii)
        return Nonlinearity(self.eval, self.kind, self.lam, self.real, probe)

    def is_sublinear(self) -> bool:
        """Heuristic check that ``q_*(t)/t`` decreases toward zero along the probe."""
        vals = [v for _, v in (self.sublinearity_probe or self.with_probe().sublinearity_probe)]
        return vals[-1] < 1e-2 and all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))

    @classmethod
    def constant(cls, c: complex) -> "Nonlinearity":
        c = complex(c)
        return cls(lambda w: np.full(np.shape(w), c), "constant").with_probe()

    @classmethod
    def power_modulus(cls, lam: float, offset: float = 0.0) -> "Nonlinearity":
        """``q(w) = (offset^2 + |w|^2)^(lam/2)``; ``offset = 0`` gives ``|w|^lam``.

        With ``offset = 0`` the zero function is a fixed point, so
        continuation from ``g = 0`` stays there; a positive offset keeps the
        growth profile ``t^lam`` while making the trivial solution inadmissible.
        """
        _check_lambda(lam)
        if offset == 0.0:
            return cls(lambda w: np.abs(w) ** lam + 0j, "power", lam).with_probe()
        o2 = float(offset) ** 2
        return cls(lambda w: (o2 + np.abs(w) ** 2) ** (0.5 * lam) + 0j, "power", lam).with_probe()

    @classmethod
    def neg_exp_modulus(cls) -> "Nonlinearity":
        """``q(w) = exp(-|w|)``."""
        return cls(lambda w: np.exp(-np.abs(w)) + 0j, "neg_exp").with_probe()

    @classmethod
    def from_real(cls, Q: Callable[[np.ndarray], np.ndarray], kind: str = "custom",
                  lam: float | None = None) -> "Nonlinearity":
        """``q(w) = Q(Re w)`` for a real scalar map ``Q``."""
        return cls(lambda w: np.asarray(Q(np.real(w)), dtype=float) + 0j, kind, lam, True).with_probe()


def _check_lambda(lam: float) -> None:
    if not 0.0 < lam < 1.0:
        raise ConfigurationError(f"exponent lambda must lie in (0, 1), got {lam}")


_ANGLES = np.exp(2j * np.pi * np.arange(64) / 64)
_RADIAL = np.linspace(0.0, 1.0, 65)


def q_star(q: Nonlinearity, t):
    """``max |q(w)|`` over ``|w| <= t`` from an angular-radial sample.

    Array input is evaluated jointly: the result is a running maximum over
    the sorted radii, so it is nondecreasing in ``t`` by construction.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ConfigurationError("t must be nonnegative")
    order = np.argsort(ts)
    out = np.empty_like(ts)
    running = 0.0
    prev = 0.0
    for i in order:
        ti = ts[i]
        # sample the annulus prev <= |w| <= ti; the disk is covered cumulatively
        radii = prev + (ti - prev) * _RADIAL
        w = radii[:, None] * _ANGLES[None, :]
        running = max(running, float(np.max(np.abs(q(w)))))
        out[i] = running
        prev = ti
    return float(out[0]) if np.ndim(t) == 0 else out


@dataclass(frozen=True)
class ContinuationConfig:
    tau_steps: int = 8
    damping: float = 0.5
    inner_tol: float = 1e-9
    inner_max_iter: int = 400
    blowup_guard: float = 1e3
    linear: LinearSolveConfig = field(default_factory=lambda: LinearSolveConfig(tol=1e-13))

    def __post_init__(self):
        if self.tau_steps < 1:
            raise ConfigurationError("tau_steps must be >= 1")
        if not 0.0 < self.damping <= 1.0:
            raise ConfigurationError("damping must lie in (0, 1]")
        if not self.inner_tol > 0:
            raise ConfigurationError("inner_tol must be positive")
        if self.inner_max_iter < 1:
            raise ConfigurationError("inner_max_iter must be >= 1")
        if not self.blowup_guard > 0:
            raise ConfigurationError("blowup_guard must be positive")


def _exponents(p: float = 4.0) -> dict:
    """Integrability exponents of the factorization: ``p -> p_* -> p^*``, each in ``(2, prev)``."""
    ps = p * p / (2 * (p - 1))
    pss = ps * ps / (2 * (ps - 1))
    return {"p": p, "p_sub": ps, "p_sup": pss, "holder_alpha": 1 - 2 / pss}


def _apriori_radius(q: Nonlinearity, gain: float, scale: float) -> float:
    """Largest ``r`` on a log grid with ``r <= scale * q_*(gain * r)``."""
    rs = np.logspace(-8, 12, 201)
    qs = q_star(q, gain * rs)
    ok = rs <= scale * qs
    return float(rs[ok].max()) if ok.any() else float(rs[0])


def solve_semilinear_operator(mu: BeltramiCoefficient, G: Field,
                              L_op: Callable[[Field], ComplexField],
                              q: Nonlinearity, cfg: ContinuationConfig | None = None):
    """Continuation solve of ``w_zbar = mu w_z + L_op[G q(w)]``.

    Parameters
    ----------
    mu : BeltramiCoefficient
    G : Field
        Compactly supported weight.
    L_op : callable
        Linear map from fields on the grid to compactly supported (or
        trend-tracked) complex sources.
    q : Nonlinearity
    cfg : ContinuationConfig, optional

    Returns
    -------
    omega : ComplexField
    report : SolveReport
        ``extra`` carries ``tau_schedule``, ``tau_blocks``,
        ``fixed_point_residual``, ``beltrami_residual`` and ``exponents``.
        The last linear source is kept under ``"_source"`` (not serialized).
    """
    cfg = cfg or ContinuationConfig()
    grid = mu.grid
    rep = SolveReport()
    taus = [(i + 1) / cfg.tau_steps for i in range(cfg.tau_steps)]
    rep.extra.update(tau_schedule=taus, tau_blocks=[], exponents=_exponents(),
                     damping=cfg.damping)
    Gq_scale = norm_p(L_op(G), 2)
    if norm_p(G, 2) == 0.0 or Gq_scale == 0.0:
        zero = ComplexField(grid, np.zeros((grid.n, grid.n)), 0.0)
        rep.converged = True
        rep.extra.update(fixed_point_residual=0.0, beltrami_residual=0.0, _source=zero)
        return zero, rep

    # a priori guard: ||w||_inf <= M ||g||_2 empirically, ||g|| <= scale q_*(M ||g||)
    probe_src = L_op(G)
    w_probe, _ = solve_inhomogeneous(mu, probe_src, cfg.linear)
    gain = norm_p(w_probe, np.inf) / Gq_scale
    r_star = _apriori_radius(q, gain, Gq_scale)
    bound = cfg.blowup_guard * max(r_star, Gq_scale)
    rep.extra.update(apriori_radius=r_star, apriori_gain=gain)

    def source(w: ComplexField, tau: float) -> ComplexField:
        qv = q(w.data)
        weight = G * (RealField(grid, qv.real) if q.real else ComplexField(grid, qv))
        return L_op(weight) * tau

    g = ComplexField(grid, np.zeros((grid.n, grid.n)), 0.0)
    w = ComplexField(grid, np.zeros((grid.n, grid.n)), 0.0)
    h1 = None
    total = 0
    res = np.inf
    for tau in taus:
        block = []
        for it in range(cfg.inner_max_iter):
            w, lin = solve_inhomogeneous(mu, g, cfg.linear, h1)
            h1 = lin.extra.pop("_h1")
            target = source(w, tau)
            diff = target - g
            res = norm_p(diff, 2) / Gq_scale
            block.append(res)
            rep.residual_history.append(res)
            total += 1
            gn = norm_p(g, 2)
            if not np.isfinite(res) or gn > bound:
                rep.iterations = total
                raise BlowupError(
                    f"iterate norm {gn:.3e} exceeded a priori guard {bound:.3e} at tau={tau:g}")
            if res <= cfg.inner_tol:
                break
            g = g + diff * cfg.damping
        rep.extra["tau_blocks"].append({"tau": tau, "iterations": len(block),
                                        "residuals": block})
        if res > cfg.inner_tol:
            rep.iterations = total
            rep.final_residual = res
            rep.extra.update(fixed_point_residual=res, stalled_at_tau=tau, _source=g)
            logger.warning("continuation stalled at tau=%g (residual %.3e)", tau, res)
            return w, rep
    ratios = [b / a for a, b in zip(rep.residual_history[-6:-1], rep.residual_history[-5:])
              if a > 0]
    rep.iterations = total
    rep.converged = True
    rep.final_residual = res
    rep.contraction_ratio = float(np.median(ratios)) if ratios else 0.0
    # re-certify with the source actually attached to w
    rep.extra.update(fixed_point_residual=res,
                     beltrami_residual=residual_beltrami(mu, g, w),
                     beltrami_residual_full=residual_beltrami(mu, g, w, full=True), _source=g)
    return w, rep


def solve_semilinear(mu: BeltramiCoefficient, sigma: Field, q: Nonlinearity,
                     cfg: ContinuationConfig | None = None):
    """Solve ``w_zbar = mu w_z + sigma q(w)``, ``w(0) = 0``, by continuation in ``tau``.

    The fixed-point residual ``||g - sigma q(w^g)||_2 / ||sigma||_2`` is
    reported as ``extra["fixed_point_residual"]``.
    """
    grid = mu.grid
    if not sigma.is_compact:
        raise SupportError("sigma must declare a compact support")
    ones = RealField(grid, np.ones((grid.n, grid.n)), sigma.support_radius)
    return solve_semilinear_operator(mu, ones, lambda rho: sigma * rho, q, cfg)


# --------------------------------------------------------------------------
# factorization through the principal map
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FactorizationResult:
    map: QCMap
    H: ComplexField
    g_multiplier: ComplexField
    image_grid: Grid
    q: Nonlinearity | None = None
    failed_fraction: float = 0.0


def image_grid(qc: QCMap, n: int | None = None) -> Grid:
    """Square grid centred at 0 covering the image of the window core."""
    grid = qc.grid
    core = core_mask(grid, 0.5)
    f = qc.forward.data[core]
    ext = float(max(np.abs(f.real).max(), np.abs(f.imag).max()))
    # a few cells of margin keep core images away from the spline edge
    return make_grid(n or grid.n, ext + 4 * grid.dx)


def factorize(omega: Field, mu: BeltramiCoefficient, sigma_eff: Field,
              cfg: LinearSolveConfig | None = None, q: Nonlinearity | None = None,
              map: QCMap | None = None, max_failure: float = 1e-3) -> FactorizationResult:
    """Write ``omega = H o f`` with ``f`` the principal µ-conformal map.

    ``g_multiplier`` is ``((f_z / J) sigma_eff) o f^-1``; when ``omega``
    solves the semi-linear problem with ``sigma_eff * q(omega)`` as source,
    ``H`` satisfies ``H_wbar = g_multiplier * q(H)``.
    """
    cfg = cfg or LinearSolveConfig()
    grid = omega.grid
    if mu.is_zero:
        qc = map or principal_map(mu, cfg)
        H = ComplexField(grid, omega.data, omega.support_radius, omega.trend)
        gm = ComplexField(grid, sigma_eff.data, sigma_eff.support_radius)
        return FactorizationResult(qc, H, gm, grid, q, 0.0)
    qc = map or principal_map(mu, cfg)
    img = image_grid(qc)
    zs, ok = invert_map(qc, img.z.ravel(), strict=False)
    failed = 1.0 - ok.mean()
    if failed > max_failure:
        raise ConvergenceError(f"map inversion failed at {100 * failed:.2f}% of image nodes")
    zs = zs.reshape(img.z.shape)
    okm = ok.reshape(img.z.shape)
    H_vals = Interpolant(omega)(zs)
    mult = (qc.f_z.data / qc.jacobian.data) * sigma_eff.data
    g_vals = Interpolant(ComplexField(grid, mult))(zs)
    H_vals[~okm] = 0.0
    g_vals[~okm] = 0.0
    H = ComplexField(img, H_vals)
    gm = ComplexField(img, g_vals)
    return FactorizationResult(qc, H, gm, img, q, float(failed))


def compose_solution(H: Field, qc: QCMap, mask: np.ndarray | None = None) -> ComplexField:
    """``w(z) = H(f(z))`` by cubic interpolation on the image grid.

    Nodes outside ``mask`` (default: the window core) are set to zero.
    """
    grid = qc.grid
    mask = core_mask(grid, 0.5) if mask is None else mask
    if qc.is_identity and H.grid == grid:
        return ComplexField(grid, H.data, H.support_radius, H.trend)
    img = H.grid
    fw = qc.forward.data[mask]
    if (np.abs(fw.real) > img.L).any() or (np.abs(fw.imag) > img.L).any():
        raise ConfigurationError("image grid does not cover the mapped window core")
    out = np.zeros((grid.n, grid.n), dtype=complex)
    out[mask] = Interpolant(H)(fw)
    return ComplexField(grid, out)


def _taper(grid: Grid, inner: float, outer: float) -> np.ndarray:
    x = np.maximum(np.abs(grid.z.real), np.abs(grid.z.imag))
    return smooth_step((outer - x) / (outer - inner))


def vekua_residual(fac: FactorizationResult, q: Nonlinearity | None = None) -> float:
    """``||H_wbar - g q(H)||_2 / ||g||_2`` over the image core.

    An ``H`` sampled on the image grid is tapered to zero before the
    spectral derivative; the taper equals one on the image core, where the
    residual is measured. A tracked ``H`` (the ``mu = 0`` case) is
    differentiated as is. As in :func:`residual_beltrami`, the pure-Nyquist
    checkerboard modes are removed from the residual.
    """
    q = q or fac.q
    img = fac.image_grid
    H = fac.H
    core = core_mask(img, 0.5)
    if H.is_tracked:
        dH = d_zbar(H)
    else:
        chi = _taper(img, 0.5 * img.L, 0.85 * img.L)
        dH = d_zbar(ComplexField(img, H.data * chi, None, Polynomial.zero()))
    qH = np.ones_like(H.data) if q is None else q(H.data)
    rhs = fac.g_multiplier.data * qH
    r = ComplexField(img, drop_checkerboard(img, dH.data - rhs))
    gnorm = norm_p(fac.g_multiplier, 2)
    if gnorm == 0.0:
        return float(norm_p(r, 2, core))
    return norm_p(r, 2, core) / gnorm
