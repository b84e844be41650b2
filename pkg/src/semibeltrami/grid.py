"""Uniform periodic window, sampled fields and spectral calculus.

Every field lives on the square window ``[-L, L)^2`` sampled at ``n x n``
nodes ``z[j, k] = (-L + j dx) + i(-L + k dx)``; axis 0 runs along ``x``.

Operators such as the Cauchy transform or the logarithmic potential do
not map compactly supported data to periodic data: their outputs grow
like ``z̄`` or ``|z|^2`` away from the support. A field therefore carries
an optional :class:`Polynomial` *trend* in ``z`` and ``z̄``; its samples
are ``periodic part + trend(z)``. Derivatives act spectrally on the
periodic part and exactly on the trend, which keeps identities such as
``d_zbar(cauchy_transform(g)) == g`` valid for every ``g``, not only the
mean-zero ones.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError

__all__ = [
    "Grid",
    "Polynomial",
    "Field",
    "ComplexField",
    "RealField",
    "make_grid",
    "sample",
    "sample_real",
    "d_z",
    "d_zbar",
    "d_x",
    "d_y",
    "laplacian",
    "norm_p",
    "evaluate",
    "Interpolant",
    "as_complex",
    "polynomial_field",
    "core_mask",
    "drop_checkerboard",
]


@dataclass(frozen=True)
class Grid:
    """Square window ``[-L, L)^2`` with ``n`` samples per axis."""

    n: int
    L: float

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 16 or n & (n - 1):
            raise ConfigurationError(f"n must be a power of two >= 16, got {n!r}")
        if not np.isfinite(self.L) or self.L <= 0:
            raise ConfigurationError(f"L must be positive, got {self.L!r}")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def cell_area(self) -> float:
        return self.dx * self.dx

    @property
    def origin(self) -> tuple[int, int]:
        """Index of the node ``z = 0``."""
        return self.n // 2, self.n // 2

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.n)

    @cached_property
    def z(self) -> np.ndarray:
        x, y = np.meshgrid(self.axis, self.axis, indexing="ij")
        out = x + 1j * y
        out.flags.writeable = False
        return out

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Derivative wavenumbers ``(kx, ky)`` with the Nyquist mode zeroed.

        Zeroing the Nyquist mode keeps ``d_x`` real on real data and makes
        ``d_zbar(conj f) == conj(d_z f)`` hold exactly.
        """
        m = np.fft.fftfreq(self.n, d=1.0 / self.n)
        m[self.n // 2] = 0.0
        k = (np.pi / self.L) * m
        kx, ky = np.meshgrid(k, k, indexing="ij")
        kx.flags.writeable = False
        ky.flags.writeable = False
        return kx, ky

    @cached_property
    def zeta(self) -> np.ndarray:
        """Complex wavenumber ``kx + i ky``; ``d_zbar`` has symbol ``i zeta / 2``."""
        kx, ky = self.wavenumbers
        out = kx + 1j * ky
        out.flags.writeable = False
        return out

    @cached_property
    def dropped_modes(self) -> np.ndarray:
        """Modes with ``zeta == 0`` (zero mode and pure-Nyquist modes)."""
        out = self.zeta == 0
        out.flags.writeable = False
        return out


def drop_checkerboard(grid: Grid, data: np.ndarray) -> np.ndarray:
    """Remove the three pure-Nyquist modes from ``data``.

    These grid-scale checkerboards lie in the kernel of every discrete
    first derivative, so no discrete solution can match them; residuals
    are measured on their complement.
    """
    spec = np.fft.fft2(data)
    mask = grid.dropped_modes.copy()
    mask[0, 0] = False
    spec[mask] = 0.0
    out = np.fft.ifft2(spec)
    return out if np.iscomplexobj(data) else out.real


def make_grid(n: int, L: float) -> Grid:
    """Build a :class:`Grid`; raises :class:`ConfigurationError` on bad input."""
    return Grid(n, float(L))


def core_mask(grid: Grid, fraction: float = 0.5, shape: str = "square") -> np.ndarray:
    """Boolean mask of the window core ``|x|, |y| <= fraction * L`` (or a disk)."""
    r = fraction * grid.L + 1e-12
    if shape == "disk":
        return np.abs(grid.z) <= r
    return (np.abs(grid.z.real) <= r) & (np.abs(grid.z.imag) <= r)


# --------------------------------------------------------------------------
# polynomial trends
# --------------------------------------------------------------------------


class Polynomial:
    """Finite sum ``sum c[j, k] z^j z̄^k`` with exact calculus.

    Immutable; coefficients below ``1e-300`` in modulus are discarded.
    """

    __slots__ = ("_c",)

    def __init__(self, coeffs: Mapping[tuple[int, int], complex] | None = None):
        c = {}
        for (j, k), v in (coeffs or {}).items():
            v = complex(v)
            if abs(v) > 1e-300:
                c[(int(j), int(k))] = v
        self._c = c

    @classmethod
    def zero(cls) -> "Polynomial":
        return cls()

    @property
    def coeffs(self) -> dict[tuple[int, int], complex]:
        return dict(self._c)

    @property
    def is_zero(self) -> bool:
        return not self._c

    @property
    def degree(self) -> int:
        return max((j + k for j, k in self._c), default=-1)

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape, dtype=complex)
        if not self._c:
            return out
        zb = z.conj()
        for (j, k), v in self._c.items():
            out += v * z**j * zb**k
        return out

    def __add__(self, other: "Polynomial") -> "Polynomial":
        c = dict(self._c)
        for key, v in other._c.items():
            c[key] = c.get(key, 0.0) + v
        return Polynomial(c)

    def __neg__(self) -> "Polynomial":
        return Polynomial({key: -v for key, v in self._c.items()})

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def scale(self, alpha: complex) -> "Polynomial":
        return Polynomial({key: alpha * v for key, v in self._c.items()})

    def conj(self) -> "Polynomial":
        return Polynomial({(k, j): np.conj(v) for (j, k), v in self._c.items()})

    def real(self) -> "Polynomial":
        return (self + self.conj()).scale(0.5)

    def imag(self) -> "Polynomial":
        return (self - self.conj()).scale(-0.5j)

    def d_z(self) -> "Polynomial":
        return Polynomial({(j - 1, k): j * v for (j, k), v in self._c.items() if j})

    def d_zbar(self) -> "Polynomial":
        return Polynomial({(j, k - 1): k * v for (j, k), v in self._c.items() if k})

    def antiderivative_zbar(self) -> "Polynomial":
        """Primitive in ``z̄`` with no added holomorphic part."""
        return Polynomial({(j, k + 1): v / (k + 1) for (j, k), v in self._c.items()})

    def inverse_laplacian(self) -> "Polynomial":
        """A primitive of ``Δ = 4 d_z d_zbar``."""
        return Polynomial(
            {(j + 1, k + 1): v / (4 * (j + 1) * (k + 1)) for (j, k), v in self._c.items()}
        )

    def real_primitive(self) -> "Polynomial":
        """Real polynomial ``P`` with ``d_zbar P == self`` (if one exists).

        Existence needs ``self`` to be the ``d_zbar`` of a real function,
        i.e. the matching curl condition; the constant term is zero.
        """
        c = {}
        for (j, k), v in self._c.items():
            c[(j, k + 1)] = c.get((j, k + 1), 0.0) + v / (k + 1)
        for (j, k), v in self._c.items():
            if j == 0:
                c[(k + 1, 0)] = c.get((k + 1, 0), 0.0) + np.conj(v) / (k + 1)
        return Polynomial(c)

    def with_constant(self, value: complex) -> "Polynomial":
        c = dict(self._c)
        c[(0, 0)] = value
        return Polynomial(c)

    def __repr__(self) -> str:
        terms = " + ".join(f"({v:.3g}) z^{j} zb^{k}" for (j, k), v in sorted(self._c.items()))
        return f"Polynomial({terms or '0'})"


# --------------------------------------------------------------------------
# fields
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Field:
    """Samples of a function on a :class:`Grid`.

    ``support_radius`` declares that samples vanish for ``|z| > R``;
    ``trend`` (when not ``None``) is the exact non-periodic part of the
    function. A field with neither is an opaque set of samples.
    """

    grid: Grid
    data: np.ndarray
    support_radius: float | None = None
    trend: Polynomial | None = field(default=None)

    _dtype = complex

    def __post_init__(self):
        n = self.grid.n
        arr = np.array(self.data, dtype=self._dtype, copy=True)
        if arr.shape != (n, n):
            raise ConfigurationError(f"field data must have shape {(n, n)}, got {arr.shape}")
        if self.support_radius is not None:
            R = float(self.support_radius)
            if R < 0:
                raise ConfigurationError("support_radius must be nonnegative")
            object.__setattr__(self, "support_radius", R)
            arr[np.abs(self.grid.z) > R] = 0.0
            if self.trend is None:
                object.__setattr__(self, "trend", Polynomial.zero())
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    # structural queries --------------------------------------------------

    @property
    def is_compact(self) -> bool:
        return self.support_radius is not None

    @property
    def is_tracked(self) -> bool:
        """True when the periodic/trend decomposition is known."""
        return self.trend is not None

    @property
    def periodic(self) -> np.ndarray:
        """Samples minus the trend."""
        if self.trend is None or self.trend.is_zero:
            return self.data
        t = self.trend(self.grid.z)
        return self.data - (t.real if self._dtype is float else t)

    def with_data(self, data, support_radius=None, trend=None) -> "Field":
        return _wrap(self.grid, data, support_radius, trend)

    # arithmetic ------------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Field):
            _same_grid(self, other)
            sr = _max_support(self.support_radius, other.support_radius)
            tr = _sum_trend(self.trend, other.trend)
            return _wrap(self.grid, self.data + other.data, sr, tr)
        if np.isscalar(other):
            tr = None if self.trend is None else self.trend + Polynomial({(0, 0): other})
            return _wrap(self.grid, self.data + other, None, tr)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return _wrap(self.grid, -self.data, self.support_radius,
                     None if self.trend is None else -self.trend)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Field):
            _same_grid(self, other)
            data = self.data * other.data
            if self.is_compact or other.is_compact:
                sr = _min_support(self.support_radius, other.support_radius)
                return _wrap(self.grid, data, sr, Polynomial.zero())
            return _wrap(self.grid, data, None, None)
        if np.isscalar(other) or (isinstance(other, np.ndarray) and other.ndim == 0):
            tr = None if self.trend is None else self.trend.scale(complex(other))
            return _wrap(self.grid, self.data * other, self.support_radius, tr)
        return NotImplemented

    __rmul__ = __mul__

    def conj(self) -> "Field":
        tr = None if self.trend is None else self.trend.conj()
        return _wrap(self.grid, np.conj(self.data), self.support_radius, tr)

    @property
    def real(self) -> "RealField":
        tr = None if self.trend is None else self.trend.real()
        return RealField(self.grid, self.data.real, self.support_radius, tr)

    @property
    def imag(self) -> "RealField":
        tr = None if self.trend is None else self.trend.imag()
        return RealField(self.grid, self.data.imag, self.support_radius, tr)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "Field":
        """Apply a pointwise map; the decomposition is lost."""
        return _wrap(self.grid, fn(self.data), None, None)

    def value_at_origin(self) -> complex:
        return self.data[self.grid.origin]

    def sup(self, mask: np.ndarray | None = None) -> float:
        vals = np.abs(self.data if mask is None else self.data[mask])
        return float(vals.max()) if vals.size else 0.0


class ComplexField(Field):
    """Complex samples; the carrier for ω, σ, µ, H and f."""

    _dtype = complex


class RealField(Field):
    """Real samples; the carrier for u, v, h, G and N^g."""

    _dtype = float

    def __post_init__(self):
        data = np.asarray(self.data)
        if np.iscomplexobj(data):
            if np.any(np.abs(data.imag) > 1e-12 * max(1.0, float(np.abs(data).max(initial=0)))):
                raise ConfigurationError("RealField data has a nonzero imaginary part")
            object.__setattr__(self, "data", data.real)
        if self.trend is not None:
            object.__setattr__(self, "trend", self.trend.real())
        super().__post_init__()

    def __mul__(self, other):
        return Field.__mul__(self, other)

    __rmul__ = __mul__


def _wrap(grid, data, support_radius, trend) -> Field:
    data = np.asarray(data)
    if not np.iscomplexobj(data):
        return RealField(grid, data, support_radius, trend)
    return ComplexField(grid, data, support_radius, trend)


def _same_grid(a: Field, b: Field) -> None:
    if a.grid != b.grid:
        raise ConfigurationError("fields live on different grids")


def _max_support(a, b):
    return None if a is None or b is None else max(a, b)


def _min_support(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


def _sum_trend(a, b):
    if a is None or b is None:
        return None
    return a + b


def as_complex(f: Field) -> ComplexField:
    if isinstance(f, ComplexField):
        return f
    return ComplexField(f.grid, f.data.astype(complex), f.support_radius, f.trend)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


def sample(f: Callable[[np.ndarray], np.ndarray], grid: Grid,
           support_radius: float | None = None) -> ComplexField:
    """Sample ``f(z)`` at every node; zero outside a declared support."""
    data = np.broadcast_to(np.asarray(f(grid.z), dtype=complex), (grid.n, grid.n))
    return ComplexField(grid, data, support_radius)


def polynomial_field(grid: Grid, poly: Polynomial, real: bool = False) -> Field:
    """Field whose samples are exactly ``poly(z)`` (zero periodic part)."""
    vals = poly(grid.z)
    if real:
        return RealField(grid, vals.real, None, poly)
    return ComplexField(grid, vals, None, poly)


def sample_real(f: Callable[[np.ndarray], np.ndarray], grid: Grid,
                support_radius: float | None = None) -> RealField:
    data = np.broadcast_to(np.asarray(f(grid.z), dtype=float), (grid.n, grid.n))
    return RealField(grid, data, support_radius)


# --------------------------------------------------------------------------
# spectral calculus
# --------------------------------------------------------------------------


def _apply_symbol(f: Field, symbol: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(np.fft.fft2(f.periodic) * symbol)


def _derivative(f: Field, symbol: np.ndarray, poly_op: str, real_out: bool) -> Field:
    data = _apply_symbol(f, symbol)
    trend = None if f.trend is None else getattr(f.trend, poly_op)()
    if trend is not None and not trend.is_zero:
        data = data + trend(f.grid.z)
    if real_out:
        return RealField(f.grid, data.real, f.support_radius, trend)
    return ComplexField(f.grid, data, f.support_radius, trend)


def d_zbar(f: Field) -> ComplexField:
    """``(d_x + i d_y) / 2`` on the periodic part, exact on the trend."""
    return _derivative(f, 0.5j * f.grid.zeta, "d_zbar", False)


def d_z(f: Field) -> ComplexField:
    """``(d_x - i d_y) / 2`` on the periodic part, exact on the trend."""
    return _derivative(f, 0.5j * f.grid.zeta.conj(), "d_z", False)


def d_x(f: Field) -> Field:
    kx, _ = f.grid.wavenumbers
    g = d_z(f) + d_zbar(f) if f.trend is not None and not f.trend.is_zero else None
    if g is not None:
        return g.real if isinstance(f, RealField) else g
    data = _apply_symbol(f, 1j * kx)
    if isinstance(f, RealField):
        return RealField(f.grid, data.real, f.support_radius)
    return ComplexField(f.grid, data, f.support_radius, f.trend)


def d_y(f: Field) -> Field:
    _, ky = f.grid.wavenumbers
    if f.trend is not None and not f.trend.is_zero:
        g = (d_z(f) - d_zbar(f)) * 1j
        return g.real if isinstance(f, RealField) else g
    data = _apply_symbol(f, 1j * ky)
    if isinstance(f, RealField):
        return RealField(f.grid, data.real, f.support_radius)
    return ComplexField(f.grid, data, f.support_radius, f.trend)


def laplacian(f: Field) -> Field:
    """``4 d_z d_zbar`` with the same discrete symbols."""
    sym = -np.abs(f.grid.zeta) ** 2
    trend = None
    data = _apply_symbol(f, sym)
    if f.trend is not None:
        trend = f.trend.d_zbar().d_z().scale(4.0)
        if not trend.is_zero:
            data = data + trend(f.grid.z)
    if isinstance(f, RealField):
        return RealField(f.grid, data.real, f.support_radius, trend)
    return ComplexField(f.grid, data, f.support_radius, trend)


def norm_p(f: Field, p: float = 2.0, mask: np.ndarray | None = None) -> float:
    """Discrete ``L_p`` norm ``(sum |f|^p dx^2)^(1/p)``; ``p = inf`` gives the max."""
    if p != np.inf and p < 1:
        raise ConfigurationError("p must be >= 1 or inf")
    a = np.abs(f.data if mask is None else f.data[mask])
    if a.size == 0:
        return 0.0
    if p == np.inf:
        return float(a.max())
    return float((np.sum(a**p) * f.grid.cell_area) ** (1.0 / p))


# --------------------------------------------------------------------------
# off-grid evaluation
# --------------------------------------------------------------------------


class Interpolant:
    """Cubic-spline evaluator for a field at arbitrary complex points.

    The periodic part is interpolated with wraparound and the trend added
    exactly, so tracked fields can be evaluated anywhere in the plane.
    Opaque fields are interpolated as-is (clamped at the window edge).
    Spline coefficients are computed once.
    """

    def __init__(self, f: Field):
        self.grid = f.grid
        self.trend = f.trend
        self.real_valued = isinstance(f, RealField)
        tracked = f.trend is not None
        base = f.periodic if tracked else f.data
        self.mode = "grid-wrap" if tracked else "nearest"
        self._re = ndimage.spline_filter(np.real(base), order=3, mode=self.mode)
        self._im = None
        if np.iscomplexobj(base):
            self._im = ndimage.spline_filter(np.imag(base), order=3, mode=self.mode)

    def __call__(self, points) -> np.ndarray:
        g = self.grid
        pts = np.asarray(points, dtype=complex)
        coords = np.stack([(pts.real + g.L) / g.dx, (pts.imag + g.L) / g.dx])
        kw = dict(order=3, mode=self.mode, prefilter=False)
        out = ndimage.map_coordinates(self._re, coords, **kw)
        if self._im is not None:
            out = out + 1j * ndimage.map_coordinates(self._im, coords, **kw)
        if self.trend is not None and not self.trend.is_zero:
            t = self.trend(pts)
            out = out + (t.real if self.real_valued else t)
        return out


def evaluate(f: Field, points) -> np.ndarray:
    """Evaluate ``f`` at arbitrary complex points (see :class:`Interpolant`)."""
    return Interpolant(f)(points)
