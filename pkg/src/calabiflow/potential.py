"""Symplectic potentials ``u(x) = c|x|^2/2 + b.x + a + psi(x)`` with periodic ``psi``.

The affine part ``b.x + a`` is zero for every potential produced by the
flow; it only appears after :func:`rescale`, which normalises ``u`` to
vanish to first order at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import product
from typing import Optional

import numpy as np

from .errors import ConvexityError
from .torus_field import GridSpec, PeriodicField, diff, integrate, interpolate_values

__all__ = [
    "SymplecticPotential",
    "HessianData",
    "MConditionReport",
    "hessian_data",
    "m_condition_estimate",
    "rescale",
    "sup_norms",
    "hessian_arrays",
    "invert_sym",
    "eig_extremes",
]


def _unit(n, i):
    o = [0] * n
    o[i] += 1
    return o


def hessian_arrays(psi: np.ndarray, c: float, spec: GridSpec) -> np.ndarray:
    """``c*I + D^2 psi`` as an array of shape ``(n, n) + grid``."""
    n = spec.n
    H = np.empty((n, n) + spec.shape)
    for i in range(n):
        for j in range(i, n):
            o = _unit(n, i)
            o[j] += 1
            H[i, j] = diff(psi, o, spec.h)
            if i == j:
                H[i, i] += c
            else:
                H[j, i] = H[i, j]
    return H


def invert_sym(H: np.ndarray):
    """Pointwise inverse and determinant of a symmetric matrix field."""
    n = H.shape[0]
    if n == 1:
        det = H[0, 0].copy()
        return (1.0 / H[0, 0])[None, None], det
    if n == 2:
        a, b, d = H[0, 0], H[0, 1], H[1, 1]
        det = a * d - b * b
        G = np.empty_like(H)
        G[0, 0] = d / det
        G[1, 1] = a / det
        G[0, 1] = G[1, 0] = -b / det
        return G, det
    M = np.moveaxis(H, (0, 1), (-2, -1))
    G = np.moveaxis(np.linalg.inv(M), (-2, -1), (0, 1))
    return G, np.linalg.det(M)


def eig_extremes(H: np.ndarray):
    n = H.shape[0]
    if n == 1:
        return H[0, 0].copy(), H[0, 0].copy()
    if n == 2:
        m = 0.5 * (H[0, 0] + H[1, 1])
        r = np.hypot(0.5 * (H[0, 0] - H[1, 1]), H[0, 1])
        return m - r, m + r
    w = np.linalg.eigvalsh(np.moveaxis(H, (0, 1), (-2, -1)))
    return w[..., 0], w[..., -1]


@dataclass(frozen=True, eq=False)
class HessianData:
    """Pointwise Hessian bundle; tensor indices lead, grid axes trail."""

    hess: np.ndarray
    inv: np.ndarray
    det: np.ndarray
    eig_min: np.ndarray
    eig_max: np.ndarray


@dataclass(frozen=True)
class MConditionReport:
    M_estimate: float
    worst_segment: tuple
    samples: int


@dataclass(frozen=True, eq=False)
class SymplecticPotential:
    """Convex potential on the grid ``spec``.

    Construction fails with :class:`ConvexityError` unless the Hessian is
    positive definite at every grid node.
    """

    spec: GridSpec
    c: float
    psi: PeriodicField
    offset: float = 0.0
    slope: Optional[tuple] = None

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise ValueError(f"quadratic coefficient must be positive, got {self.c}")
        if not isinstance(self.psi, PeriodicField):
            object.__setattr__(self, "psi", PeriodicField(self.spec, self.psi))
        if self.psi.spec != self.spec:
            raise ValueError("psi is sampled on a different grid")
        slope = (0.0,) * self.spec.n if self.slope is None else self.slope
        slope = tuple(float(s) for s in slope)
        if len(slope) != self.spec.n:
            raise ValueError("slope must have n components")
        object.__setattr__(self, "slope", slope)
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "offset", float(self.offset))
        self.hessian  # validates convexity

    @classmethod
    def flat(cls, spec: GridSpec, c: float = 1.0) -> "SymplecticPotential":
        return cls(spec, c, PeriodicField.zeros(spec))

    @classmethod
    def from_values(cls, spec: GridSpec, psi_values, c: float = 1.0) -> "SymplecticPotential":
        return cls(spec, c, PeriodicField(spec, psi_values))

    @cached_property
    def hessian(self) -> HessianData:
        H = hessian_arrays(self.psi.values, self.c, self.spec)
        lo, hi = eig_extremes(H)
        if not np.all(lo > 0):
            k = np.unravel_index(np.argmin(lo), lo.shape)
            raise ConvexityError(self.spec.point(k), lo[k])
        G, det = invert_sym(H)
        return HessianData(H, G, det, lo, hi)

    @property
    def is_flat(self) -> bool:
        return not np.any(self.psi.values)

    def quadratic(self, x: np.ndarray) -> np.ndarray:
        """Non-periodic part ``c|x|^2/2 + b.x + a`` at points of shape ``(n, ...)``."""
        b = np.asarray(self.slope).reshape((-1,) + (1,) * (x.ndim - 1))
        return 0.5 * self.c * np.sum(x * x, axis=0) + np.sum(b * x, axis=0) + self.offset

    def values(self) -> np.ndarray:
        """``u`` at the grid nodes."""
        return self.quadratic(self.spec.mesh()) + self.psi.values

    def psi_gradient(self) -> np.ndarray:
        n = self.spec.n
        return np.stack([diff(self.psi.values, _unit(n, i), self.spec.h) for i in range(n)])

    def gradient(self) -> np.ndarray:
        """``grad u`` at the nodes, shape ``(n,) + grid``."""
        x = self.spec.mesh()
        b = np.asarray(self.slope).reshape((-1,) + (1,) * self.spec.n)
        return self.c * x + b + self.psi_gradient()

    def gradient_at(self, points: np.ndarray, psi_grad: Optional[np.ndarray] = None) -> np.ndarray:
        """Interpolated ``grad u`` at points of shape ``(m, n)``."""
        pts = np.atleast_2d(points)
        if psi_grad is None:
            psi_grad = self.psi_gradient()
        g = np.stack(
            [interpolate_values(psi_grad[i], self.spec, pts) for i in range(self.spec.n)],
            axis=-1,
        )
        return self.c * pts + np.asarray(self.slope) + g

    def value_at(self, point) -> float:
        p = np.asarray(point, dtype=float)
        return float(
            self.quadratic(p.reshape(self.spec.n))
            + interpolate_values(self.psi.values, self.spec, p)
        )


def hessian_data(u: SymplecticPotential) -> HessianData:
    return u.hessian


@lru_cache(maxsize=32)
def _segments(spec: GridSpec, n_segments: int, rng_seed: int):
    p0, p3 = _axis_segments(spec)
    rng = np.random.default_rng(rng_seed)
    r0 = rng.uniform(-0.5, 0.5, size=(n_segments, spec.n)) * spec.scale
    r3 = rng.uniform(-0.5, 0.5, size=(n_segments, spec.n)) * spec.scale
    p0 = np.concatenate([p0, r0])
    p3 = np.concatenate([p3, r3])
    d = p3 - p0
    length = np.linalg.norm(d, axis=1)
    keep = length > 0
    p0, d, length = p0[keep], d[keep], length[keep]
    nu = d / length[:, None]
    pts = np.concatenate([p0 + d / 3.0, p0 + 2.0 * d / 3.0])
    for a in (p0, d, nu, pts):
        a.setflags(write=False)
    return p0, d, nu, pts


def _axis_segments(spec: GridSpec):
    n, L = spec.n, spec.scale
    c = spec.coords()
    p0s, p3s = [], []
    for ax in range(n):
        others = [c] * (n - 1)
        for rest in product(*others) if n > 1 else [()]:
            a = list(rest)
            a.insert(ax, -0.5 * L)
            b = list(rest)
            b.insert(ax, 0.5 * L)
            p0s.append(a)
            p3s.append(b)
    # main diagonals of the cube
    for signs in product((-1.0, 1.0), repeat=n - 1):
        a = np.array((-1.0,) + signs) * 0.5 * L
        p0s.append(list(a))
        p3s.append(list(-a))
    if n == 1:
        p0s, p3s = p0s[:1], p3s[:1]
    return np.array(p0s, dtype=float), np.array(p3s, dtype=float)


def m_condition_estimate(u: SymplecticPotential, n_segments: int = 64, rng_seed: int = 0) -> MConditionReport:
    """Largest ``|d_nu u(p1) - d_nu u(p2)|`` over the tested segments.

    Tested: every full-length axis-parallel segment through a grid row, the
    main diagonals of the domain, and ``n_segments`` random segments drawn
    from ``rng_seed``.
    """
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    p0, d, nu, pts = _segments(u.spec, n_segments, rng_seed)
    g = u.gradient_at(pts)
    m = p0.shape[0]
    vals = np.abs(np.sum(nu * (g[:m] - g[m:]), axis=1))
    k = int(np.argmax(vals))
    return MConditionReport(
        float(vals[k]), (tuple(p0[k]), tuple(p0[k] + d[k])), int(vals.size)
    )


def rescale(u: SymplecticPotential, lam: float, p=None) -> SymplecticPotential:
    """Blow-up rescaling ``x -> lam * u(p + x/lam)``, affinely normalised at 0.

    The domain grows to ``lam * scale`` with the same ``N``, ``c`` becomes
    ``c/lam``, and the result satisfies ``u(0) = 0`` and ``grad u(0) = 0``.
    """
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError(f"rescaling factor must be positive, got {lam}")
    spec = u.spec
    p = np.zeros(spec.n) if p is None else np.asarray(p, dtype=float).reshape(spec.n)
    if np.any(np.abs(p) > 0.5 * spec.scale * (1 + 1e-12)):
        raise ValueError(f"p={tuple(p)} lies outside the fundamental domain")
    new = GridSpec(spec.n, spec.N, spec.scale * lam)
    q = p + np.moveaxis(new.mesh(), 0, -1).reshape(-1, spec.n) / lam
    psi = lam * interpolate_values(u.psi.values, spec, q).reshape(new.shape)
    origin = (spec.N // 2,) * spec.n
    grad0 = [
        diff(psi, _unit(spec.n, i), new.h)[origin] for i in range(spec.n)
    ]
    return SymplecticPotential(
        new, u.c / lam, PeriodicField(new, psi), -psi[origin], tuple(-g for g in grad0)
    )


def sup_norms(u: SymplecticPotential) -> dict:
    g = u.gradient()
    return {
        "sup_u": float(np.max(np.abs(u.values()))),
        "sup_grad_u": float(np.max(np.sqrt(np.sum(g * g, axis=0)))),
        "psi_mean": integrate(u.psi) / u.spec.volume,
    }
