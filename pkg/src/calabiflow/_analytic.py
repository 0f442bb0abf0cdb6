"""Single-point evaluation of the closed-form ``d^2u/dt^2`` on an analytic potential.

The formula involves fourth derivatives of the scalar curvature, i.e. eighth
derivatives of ``u``.  Plain float64 finite differences cannot resolve
those, so ``u`` is sampled on a local lattice in mpmath extended precision
and differentiated with 9-point centred stencils: derivatives of ``u`` up to
order four give ``S`` on the inner lattice, and the same stencils applied to
``S`` give its derivatives at the centre.  The assembled tensors are then
rounded to float64 and fed to :func:`calabiflow.geometry.star_terms`.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations_with_replacement, permutations, product

import mpmath
import numpy as np

from .errors import PreconditionError

RADIUS = 4  # stencil half-width


def check_orthogonal(R, tol: float = 1e-12) -> np.ndarray:
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape[0] != R.shape[1]:
        raise PreconditionError("rotation must be a square matrix")
    err = np.max(np.abs(R.T @ R - np.eye(R.shape[0])))
    if err > tol:
        raise PreconditionError(f"matrix is not orthogonal (|R^T R - I| = {err:.3g})")
    return R


@lru_cache(maxsize=None)
def _weights(order: int, dps: int):
    """Centred 9-point weights (unit spacing) for the ``order``-th derivative."""
    with mpmath.workdps(dps):
        m = 2 * RADIUS + 1
        offs = list(range(-RADIUS, RADIUS + 1))
        A = mpmath.matrix(m, m)
        b = mpmath.matrix(m, 1)
        for p in range(m):
            for j, o in enumerate(offs):
                A[p, j] = mpmath.mpf(o) ** p / mpmath.factorial(p)
        b[order] = 1
        w = mpmath.lu_solve(A, b)
        return tuple(w[j] for j in range(m))


def _apply(arr: np.ndarray, axis: int, order: int, h, dps: int) -> np.ndarray:
    """Stencil along ``axis``; the axis shrinks by ``2*RADIUS``."""
    L = arr.shape[axis] - 2 * RADIUS
    w = _weights(order, dps)
    scale = h**order
    out = None
    for j, wj in enumerate(w):
        if order == 0 and j != RADIUS:
            continue
        sl = [slice(None)] * arr.ndim
        sl[axis] = slice(j, j + L)
        term = arr[tuple(sl)] * (wj if order else 1)
        out = term if out is None else out + term
    return out if order == 0 else out / scale


def _partial(arr, orders, h, dps):
    for ax, k in enumerate(orders):
        arr = _apply(arr, ax, k, h, dps)
    return arr


def _orders(n, idx):
    o = [0] * n
    for i in idx:
        o[i] += 1
    return o


def _tensor(arr, k, n, h, dps):
    """All order-``k`` partials of a lattice function, as an object tensor."""
    first = None
    out = {}
    for idx in combinations_with_replacement(range(n), k):
        d = _partial(arr, _orders(n, idx), h, dps)
        for perm in set(permutations(idx)):
            out[perm] = d
        first = d
    T = np.empty((n,) * k + first.shape, dtype=object)
    for key, d in out.items():
        T[key] = d
    return T


def _mp_inverse(H):
    n = H.shape[0]
    M = mpmath.matrix([[H[i, j] for j in range(n)] for i in range(n)])
    Mi = M**-1
    return np.array([[Mi[i, j] for j in range(n)] for i in range(n)], dtype=object)


def star_at_point(u, x, h: float = 1e-3, dps: int = 50) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    with mpmath.workdps(dps):
        hm = mpmath.mpf(h)
        xm = [mpmath.mpf(float(v)) for v in x]
        R2 = 2 * RADIUS
        offs = range(-R2, R2 + 1)
        U = np.empty((2 * R2 + 1,) * n, dtype=object)
        for a in product(offs, repeat=n):
            U[tuple(o + R2 for o in a)] = u(tuple(xm[i] + a[i] * hm for i in range(n)))

        # derivatives of u on the inner lattice
        H = _tensor(U, 2, n, hm, dps)
        T = _tensor(U, 3, n, hm, dps)
        Q = _tensor(U, 4, n, hm, dps)
        inner = H.shape[2:]
        S = np.empty(inner, dtype=object)
        for p in product(*[range(s) for s in inner]):
            sl = (Ellipsis,) + p
            G = _mp_inverse(H[sl])
            Tp, Qp = T[sl], Q[sl]
            acc = mpmath.mpf(0)
            for i in range(n):
                for j in range(n):
                    Ti = np.array([[Tp[a, b, i] for b in range(n)] for a in range(n)], dtype=object)
                    Tj = np.array([[Tp[a, b, j] for b in range(n)] for a in range(n)], dtype=object)
                    Qij = np.array([[Qp[a, b, i, j] for b in range(n)] for a in range(n)], dtype=object)
                    d2G = G @ Ti @ G @ Tj @ G + G @ Tj @ G @ Ti @ G - G @ Qij @ G
                    acc += d2G[i, j]
            S[p] = -acc

        centre = (RADIUS,) * n
        sl = (Ellipsis,) + centre
        Gc = _mp_inverse(H[sl])
        S2 = _tensor(S, 2, n, hm, dps)
        S3 = _tensor(S, 3, n, hm, dps)
        S4 = _tensor(S, 4, n, hm, dps)

        def f64(a):
            return np.vectorize(float, otypes=[float])(a)

        # S tensors carry a trailing singleton lattice of shape (1,)*n
        args = [f64(Gc), f64(T[sl]), f64(Q[sl])]
        args += [f64(D.reshape((n,) * k)) for k, D in ((2, S2), (3, S3), (4, S4))]

    from .geometry import star_terms

    return float(star_terms(*args))
