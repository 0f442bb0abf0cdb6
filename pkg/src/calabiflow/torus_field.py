"""Periodic sampled fields on the fundamental domain ``scale * [-1/2, 1/2)^n``.

Grid points are ``x_k = scale * (k / N - 1/2)`` on every axis; the right
endpoint is the periodic alias of the left one and is not stored.

Axes are numbered from 0, as in numpy.  Derivatives are fourth-order
centred finite differences with periodic wrap; a spectral backend is
available through ``method="spectral"``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.ndimage import correlate1d, map_coordinates

from .errors import AliasedModeError, NonFiniteSampleError, UnsupportedOrderError

__all__ = [
    "GridSpec",
    "PeriodicField",
    "sample_function",
    "derivative",
    "diff",
    "integrate",
    "interpolate",
    "interpolate_values",
    "TrigInterpolant",
    "fourier_mode",
]

# Centred fourth-order stencils, offsets -r..r, without the 1/h^k factor.
STENCILS = {
    1: np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0,
    2: np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0,
    3: np.array([1.0, -8.0, 13.0, 0.0, -13.0, 8.0, -1.0]) / 8.0,
    4: np.array([-1.0, 12.0, -39.0, 56.0, -39.0, 12.0, -1.0]) / 6.0,
}
MAX_ORDER = 4


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid with ``N`` points per axis in ``n`` dimensions."""

    n: int
    N: int
    scale: float = 1.0

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"n must be 1, 2 or 3, got {self.n}")
        if int(self.N) != self.N or self.N < 16 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 16, got {self.N}")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def h(self) -> float:
        return self.scale / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def volume(self) -> float:
        return self.scale**self.n

    @property
    def origin(self) -> float:
        return -0.5 * self.scale

    def coords(self) -> np.ndarray:
        """Coordinates of the grid points along one axis."""
        return self.scale * (np.arange(self.N) / self.N - 0.5)

    def mesh(self) -> np.ndarray:
        """Array of shape ``(n, N, ..., N)`` holding the grid point coordinates."""
        c = self.coords()
        return np.stack(np.meshgrid(*([c] * self.n), indexing="ij"))

    def point(self, idx) -> np.ndarray:
        idx = np.atleast_1d(np.asarray(idx))
        return self.scale * (idx / self.N - 0.5)

    def wrap(self, point) -> np.ndarray:
        """Map a point into the fundamental domain."""
        p = np.asarray(point, dtype=float)
        return (p + 0.5 * self.scale) % self.scale - 0.5 * self.scale

    def nearest_index(self, point) -> tuple:
        s = (self.wrap(point) - self.origin) / self.h
        return tuple(int(i) % self.N for i in np.rint(np.atleast_1d(s)))


@dataclass(frozen=True, eq=False)
class PeriodicField:
    """Real samples of a periodic function; ``values`` has shape ``spec.shape``."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.spec.shape:
            if v.size == self.spec.N**self.spec.n:
                v = v.reshape(self.spec.shape)
            else:
                raise ValueError(
                    f"values shape {v.shape} does not match grid {self.spec.shape}"
                )
        if not np.all(np.isfinite(v)):
            bad = np.argwhere(~np.isfinite(v))[0]
            raise NonFiniteSampleError(self.spec.point(bad), v[tuple(bad)])
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, spec: GridSpec) -> "PeriodicField":
        return cls(spec, np.zeros(spec.shape))

    def _coerce(self, other):
        if isinstance(other, PeriodicField):
            if other.spec != self.spec:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return PeriodicField(self.spec, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return PeriodicField(self.spec, self.values - self._coerce(other))

    def __mul__(self, other):
        return PeriodicField(self.spec, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return PeriodicField(self.spec, -self.values)

    def max(self) -> float:
        return float(self.values.max())

    def min(self) -> float:
        return float(self.values.min())


def sample_function(f: Callable, spec: GridSpec) -> PeriodicField:
    """Sample ``f`` at the grid points.

    ``f`` is called once with the coordinate array from ``spec.mesh()`` (shape
    ``(n, N, ..., N)``) and must act pointwise, e.g.
    ``lambda x: np.cos(2 * np.pi * x[0])``.  Periodicity is not checked.
    """
    x = spec.mesh()
    vals = np.broadcast_to(np.asarray(f(x), dtype=float), spec.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        idx = tuple(np.argwhere(bad)[0])
        raise NonFiniteSampleError(x[(slice(None),) + idx], vals[idx])
    return PeriodicField(spec, vals)


def _canonical_orders(axes: Sequence[int], n: int) -> tuple:
    axes = tuple(int(a) for a in axes)
    if len(axes) > MAX_ORDER:
        raise UnsupportedOrderError(
            f"derivative order {len(axes)} exceeds the supported maximum {MAX_ORDER}"
        )
    for a in axes:
        if not 0 <= a < n:
            raise ValueError(f"axis {a} out of range for n={n}")
    counts = Counter(axes)
    return tuple(counts.get(a, 0) for a in range(n))


@lru_cache(maxsize=64)
def _scaled_stencil(k: int, h: float) -> np.ndarray:
    w = STENCILS[k] / h**k
    w.flags.writeable = False
    return w


def diff(a: np.ndarray, orders: Sequence[int], h: float) -> np.ndarray:
    """Apply finite-difference derivatives along the trailing ``len(orders)`` axes.

    ``orders[k]`` is the derivative count on grid axis ``k``.  Leading axes
    of ``a`` (tensor components) are carried along untouched.  Axes are
    processed in ascending order, so the result does not depend on how the
    caller listed a mixed derivative.
    """
    n = len(orders)
    lead = a.ndim - n
    out = a
    for ax, k in enumerate(orders):
        if k == 0:
            continue
        if k > MAX_ORDER:
            raise UnsupportedOrderError(f"order {k} on one axis is not supported")
        out = correlate1d(out, _scaled_stencil(k, h), axis=lead + ax, mode="wrap")
    if out is a:
        out = a.copy()
    return out


def _spectral_diff(a: np.ndarray, orders: Sequence[int], spec: GridSpec) -> np.ndarray:
    n = len(orders)
    lead = a.ndim - n
    F = np.fft.fftn(a, axes=tuple(range(lead, a.ndim)))
    for ax, k in enumerate(orders):
        if k == 0:
            continue
        m = np.fft.fftfreq(spec.N, d=1.0 / spec.N)
        sym = (2j * np.pi * m / spec.scale) ** k
        if k % 2:
            sym[spec.N // 2] = 0.0
        shape = [1] * a.ndim
        shape[lead + ax] = spec.N
        F = F * sym.reshape(shape)
    return np.real(np.fft.ifftn(F, axes=tuple(range(lead, a.ndim))))


def derivative(field: PeriodicField, axes: Sequence[int], method: str = "fd") -> PeriodicField:
    """Partial derivative of ``field`` along the multi-index ``axes``.

    ``axes=(0, 0)`` is the second derivative in the first coordinate,
    ``axes=(0, 1)`` the mixed derivative; the order of entries is
    irrelevant.  At most four derivatives in total.
    """
    orders = _canonical_orders(axes, field.spec.n)
    if method == "fd":
        vals = diff(field.values, orders, field.spec.h)
    elif method == "spectral":
        vals = _spectral_diff(field.values, orders, field.spec)
    else:
        raise ValueError(f"unknown method {method!r}")
    return PeriodicField(field.spec, vals)


def integrate(field: PeriodicField) -> float:
    """Rectangle rule over the fundamental domain (pairwise summation)."""
    return float(field.spec.h**field.spec.n * np.sum(field.values.ravel()))


def interpolate_values(values: np.ndarray, spec: GridSpec, points) -> np.ndarray:
    """Periodic tensor-product cubic spline interpolation at many points.

    ``points`` has shape ``(m, n)`` (or ``(n,)`` for a single point).
    Points lying on grid nodes return the stored value exactly.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != spec.n:
        raise ValueError(f"points must have {spec.n} coordinates")
    s = (pts - spec.origin) / spec.h
    r = np.rint(s)
    on_node = np.abs(s - r) <= 1e-12 * np.maximum(1.0, np.abs(s))
    out = map_coordinates(
        np.asarray(values, dtype=float), s.T, order=3, mode="grid-wrap"
    )
    exact = on_node.all(axis=1)
    if exact.any():
        idx = r[exact].astype(np.int64) % spec.N
        out[exact] = values[tuple(idx.T)]
    return out[0] if single else out


def interpolate(field: PeriodicField, point) -> float:
    """Value of ``field`` at an arbitrary point (wrapped into the domain)."""
    return float(interpolate_values(field.values, field.spec, np.asarray(point, float)))


class TrigInterpolant:
    """Trigonometric interpolant of grid values, with exact derivatives.

    The Nyquist coefficient is split evenly between ``+N/2`` and ``-N/2`` so
    the interpolant is real and reproduces the samples at the nodes.
    Spectrally accurate for smooth periodic data.
    """

    def __init__(self, values: np.ndarray, spec: GridSpec):
        N, n = spec.N, spec.n
        F = np.fft.fftn(np.asarray(values, dtype=float)) / N**n
        # reorder to wavenumbers -N/2..N/2 along each axis (Nyquist duplicated)
        idx = np.concatenate([np.arange(N // 2, N), np.arange(0, N // 2 + 1)])
        C = F[np.ix_(*([idx] * n))]
        for ax in range(n):
            sl = [slice(None)] * n
            for end in (0, -1):
                sl[ax] = end
                C[tuple(sl)] *= 0.5
        self.spec = spec
        self.coef = C
        self.k = np.arange(-(N // 2), N // 2 + 1) * (2 * np.pi / spec.scale)

    def __call__(self, points, orders=None) -> np.ndarray:
        """Values (or the partial derivative ``orders``) at points ``(m, n)``."""
        spec = self.spec
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if orders is None:
            orders = (0,) * spec.n
        out = None
        for ax in range(spec.n):
            x = pts[:, ax] - spec.origin
            E = np.exp(1j * np.outer(x, self.k)) * (1j * self.k) ** orders[ax]
            if out is None:
                out = E @ self.coef.reshape(len(self.k), -1)
                out = out.reshape((pts.shape[0],) + self.coef.shape[1:])
            else:
                out = np.einsum("mk,mk...->m...", E, out)
        return out.real


def fourier_mode(field: PeriodicField, k) -> complex:
    """Discrete Fourier coefficient ``N^-n * sum values * exp(-2 pi i k.idx/N)``."""
    spec = field.spec
    k = np.atleast_1d(np.asarray(k, dtype=int))
    if k.shape != (spec.n,):
        raise ValueError(f"k must have {spec.n} components")
    if np.any(np.abs(k) >= spec.N // 2):
        raise AliasedModeError(f"mode {tuple(k)} is aliased on an N={spec.N} grid")
    F = np.fft.fftn(field.values)
    return complex(F[tuple(k % spec.N)] / spec.N**spec.n)
