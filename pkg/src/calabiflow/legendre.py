"""Legendre duality between Kähler-side and symplectic potentials.

Both sides are ``|.|^2/2`` plus a periodic perturbation sampled on the same
grid.  For every dual node ``w`` we solve ``z + grad p(z) = w`` by damped
Newton on the trigonometric interpolant of ``p``, which is spectrally
accurate for smooth data.  The dual perturbation is then
``-|w - z|^2/2 - p(z)``, i.e. ``w.z - f(z) - |w|^2/2`` rearranged to avoid
cancellation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations_with_replacement, permutations

import numpy as np

from .errors import ConvexityError, NonConvergenceError, PreconditionError
from .geometry import derivative_tensor
from .potential import SymplecticPotential, eig_extremes, hessian_arrays
from .torus_field import GridSpec, PeriodicField, TrigInterpolant

__all__ = [
    "KahlerPotential",
    "to_symplectic",
    "to_kahler",
    "phi_third_derivatives",
    "legendre_dual",
]

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50


@dataclass(frozen=True, eq=False)
class KahlerPotential:
    """``v(xi) = |xi|^2/2 + phi(xi)`` with periodic ``phi``."""

    spec: GridSpec
    phi: PeriodicField

    def __post_init__(self):
        if not isinstance(self.phi, PeriodicField):
            object.__setattr__(self, "phi", PeriodicField(self.spec, self.phi))
        if self.phi.spec != self.spec:
            raise ValueError("phi is sampled on a different grid")
        lo, _ = eig_extremes(self.hessian)
        if not np.all(lo > 0):
            k = np.unravel_index(np.argmin(lo), lo.shape)
            raise ConvexityError(self.spec.point(k), lo[k])

    @cached_property
    def hessian(self) -> np.ndarray:
        return hessian_arrays(self.phi.values, 1.0, self.spec)


def _unit(n, i):
    o = [0] * n
    o[i] = 1
    return o


def legendre_dual(spec: GridSpec, p: np.ndarray):
    """Dual of ``|z|^2/2 + p(z)`` on the nodes of ``spec``.

    Returns ``(q, z)``: the dual periodic perturbation on the grid and the
    matched primal points, shape ``(N**n, n)`` in row-major node order.
    """
    n = spec.n
    w = np.moveaxis(spec.mesh(), 0, -1).reshape(-1, n)
    P = TrigInterpolant(p, spec)

    def residual(z):
        g = np.stack([P(z, _unit(n, i)) for i in range(n)], axis=-1)
        return z + g - w

    def jacobian(z):
        J = np.empty((z.shape[0], n, n))
        for i, j in combinations_with_replacement(range(n), 2):
            o = _unit(n, i)
            o[j] += 1
            J[:, i, j] = J[:, j, i] = P(z, o)
        J += np.eye(n)
        return J

    z = w.copy()
    r = residual(z)
    res = np.linalg.norm(r, axis=1)
    for _ in range(NEWTON_MAXITER):
        active = res > NEWTON_TOL
        if not active.any():
            break
        za, ra, resa = z[active], r[active], res[active]
        step = np.linalg.solve(jacobian(za), ra[..., None])[..., 0]
        alpha = np.ones(za.shape[0])
        wa = w[active]
        for _ in range(30):
            trial = za - alpha[:, None] * step
            rt = trial + np.stack([P(trial, _unit(n, i)) for i in range(n)], axis=-1) - wa
            rest = np.linalg.norm(rt, axis=1)
            worse = rest > resa
            if not worse.any():
                break
            alpha = np.where(worse, 0.5 * alpha, alpha)
        z[active], r[active], res[active] = trial, rt, rest
    if np.any(res > NEWTON_TOL):
        k = int(np.argmax(res))
        raise NonConvergenceError(w[k], res[k])
    q = -0.5 * np.sum((w - z) ** 2, axis=1) - P(z)
    return q.reshape(spec.shape), z


def to_symplectic(v: KahlerPotential) -> SymplecticPotential:
    q, _ = legendre_dual(v.spec, v.phi.values)
    return SymplecticPotential(v.spec, 1.0, PeriodicField(v.spec, q))


def to_kahler(u: SymplecticPotential) -> KahlerPotential:
    if u.c != 1.0 or u.offset != 0.0 or any(u.slope):
        raise PreconditionError("to_kahler needs c = 1 and no affine part")
    q, _ = legendre_dual(u.spec, u.psi.values)
    return KahlerPotential(u.spec, PeriodicField(u.spec, q))


def phi_third_derivatives(u: SymplecticPotential):
    """Third derivatives of ``phi`` at the dual points ``xi = grad u(x)``.

    Returns ``(D3, xi)``: ``D3[j, k, l]`` is a grid field and ``xi`` has
    shape ``(n,) + grid``.  Only sorted index triples are computed; the
    rest are copies, so the tensor is exactly symmetric.
    """
    if u.c != 1.0:
        raise PreconditionError("phi_third_derivatives needs c = 1")
    spec = u.spec
    n = spec.n
    G = u.hessian.inv
    T = derivative_tensor(u.psi.values, 3, spec)
    D3 = np.empty((n, n, n) + spec.shape)
    for j, k, l in combinations_with_replacement(range(n), 3):
        val = -np.einsum("a...,b...,c...,abc...->...", G[j], G[k], G[l], T)
        for perm in set(permutations((j, k, l))):
            D3[perm] = val
    return D3, u.gradient()
