"""Curvature and energy functionals of symplectic potentials.

All fields use the tensor-first layout of :mod:`calabiflow.potential`:
``G[i, j]`` is the inverse Hessian ``u^{ij}`` sampled on the grid.
"""

from __future__ import annotations

import weakref
from itertools import combinations_with_replacement, permutations, product

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import FormulaAnomalyError, PreconditionError
from .potential import SymplecticPotential
from .torus_field import GridSpec, PeriodicField, diff, integrate, interpolate_values

__all__ = [
    "scalar_curvature",
    "riemann_norm",
    "energies",
    "trace_pairing",
    "covariant_norm",
    "riemannian_distance",
    "hessian_comparison_margin",
    "d2u_dt2_star",
    "star_terms",
    "star_rotation_invariance",
    "derivative_tensor",
    "curvature_from_inverse",
    "calabi_dissipation_density",
]

RM_NEGATIVE_TOL = 1e-10


def _orders(n, idx):
    o = [0] * n
    for i in idx:
        o[i] += 1
    return o


def derivative_tensor(values: np.ndarray, k: int, spec: GridSpec) -> np.ndarray:
    """Symmetric tensor of all order-``k`` partials, shape ``(n,)*k + grid``."""
    n = spec.n
    out = np.empty((n,) * k + spec.shape)
    for idx in combinations_with_replacement(range(n), k):
        d = diff(values, _orders(n, idx), spec.h)
        for perm in set(permutations(idx)):
            out[perm] = d
    return out


def curvature_from_inverse(G: np.ndarray, spec: GridSpec) -> np.ndarray:
    """``S = -sum_ij d_i d_j u^{ij}`` from the inverse-Hessian field."""
    n = spec.n
    S = np.zeros(spec.shape)
    for i in range(n):
        for j in range(i, n):
            d = diff(G[i, j], _orders(n, (i, j)), spec.h)
            S -= d if i == j else 2.0 * d
    return S


def scalar_curvature(u: SymplecticPotential, method: str = "direct") -> PeriodicField:
    """Abreu scalar curvature.

    ``direct`` differentiates the inverse Hessian; ``cofactor`` uses
    ``S = -U^{ij} (1/det)_{ij}`` with ``U`` the cofactor matrix and exists
    as an independent cross-check.
    """
    hd = u.hessian
    spec = u.spec
    if method == "direct":
        S = curvature_from_inverse(hd.inv, spec)
    elif method == "cofactor":
        n = spec.n
        U = hd.inv * hd.det
        w = 1.0 / hd.det
        S = np.zeros(spec.shape)
        for i in range(n):
            for j in range(i, n):
                d = diff(w, _orders(n, (i, j)), spec.h)
                S -= (1.0 if i == j else 2.0) * U[i, j] * d
    else:
        raise ValueError(f"unknown method {method!r}")
    return PeriodicField(spec, S)


def _inverse_second_derivatives(G: np.ndarray, spec: GridSpec) -> np.ndarray:
    n = spec.n
    pairs = list(combinations_with_replacement(range(n), 2))
    # one stacked derivative call per (k, l) instead of one per component
    stack = np.stack([G[i, j] for i, j in pairs])
    W = np.empty((n, n, n, n) + spec.shape)
    for k, l in pairs:
        d = diff(stack, _orders(n, (k, l)), spec.h)
        for m, (i, j) in enumerate(pairs):
            W[i, j, k, l] = W[j, i, k, l] = W[i, j, l, k] = W[j, i, l, k] = d[m]
    return W


def riemann_norm_squared(G: np.ndarray, spec: GridSpec) -> np.ndarray:
    """``sum u^{ij}_{,kl} u^{kl}_{,ij}`` with tiny negatives clamped to zero.

    Values below ``-1e-10 * (1 + sum W^2)`` raise :class:`FormulaAnomalyError`.
    """
    W = _inverse_second_derivatives(G, spec)
    sq = np.einsum("ijkl...,klij...->...", W, W)
    tol = RM_NEGATIVE_TOL * (1.0 + np.einsum("ijkl...,ijkl...->...", W, W))
    bad = sq < -tol
    if np.any(bad):
        k = np.unravel_index(np.argmin(np.where(bad, sq, np.inf)), sq.shape)
        raise FormulaAnomalyError(spec.point(k), sq[k])
    return np.maximum(sq, 0.0)


def riemann_norm(u: SymplecticPotential) -> PeriodicField:
    """Pointwise curvature norm ``|Rm|``."""
    return PeriodicField(u.spec, np.sqrt(riemann_norm_squared(u.hessian.inv, u.spec)))


def energies(u: SymplecticPotential) -> dict:
    """Calabi, Mabuchi and L2 energies plus the mean of ``psi``.

    ``L2`` is measured against ``c|x|^2/2``, i.e. it is ``int psi^2`` for
    potentials without an affine part.
    """
    spec = u.spec
    S = curvature_from_inverse(u.hessian.inv, spec)
    x = spec.mesh()
    b = np.asarray(u.slope).reshape((-1,) + (1,) * spec.n)
    dev = u.psi.values + u.offset + np.sum(b * x, axis=0)
    return {
        "Ca": integrate(PeriodicField(spec, S * S)),
        "Ma": 0.0 - integrate(PeriodicField(spec, np.log(u.hessian.det))),
        "L2": integrate(PeriodicField(spec, dev * dev)),
        "psi_mean": integrate(u.psi) / spec.volume,
    }


def trace_pairing_values(hess: np.ndarray, inv: np.ndarray, c: float = 1.0) -> np.ndarray:
    """``sum_ij (inv_ij - delta_ij/c)(hess_ij - c delta_ij)`` for stacked matrices."""
    n = hess.shape[0]
    eye = np.eye(n).reshape((n, n) + (1,) * (hess.ndim - 2))
    return np.einsum("ij...,ij...->...", inv - eye / c, hess - c * eye)


def trace_pairing(u: SymplecticPotential) -> PeriodicField:
    """Pointwise trace pairing; nonpositive for convex ``u``."""
    hd = u.hessian
    return PeriodicField(u.spec, trace_pairing_values(hd.hess, hd.inv, u.c))


def covariant_norm(f: PeriodicField, u: SymplecticPotential, k: int) -> PeriodicField:
    """Squared metric norm of the ``k``-th derivative of a torus-invariant ``f``."""
    if k not in (1, 2, 3):
        raise ValueError("k must be 1, 2 or 3")
    G = u.hessian.inv
    D = derivative_tensor(f.values, k, u.spec)
    if k == 1:
        val = np.einsum("i...,j...,ij...->...", D, D, G)
    elif k == 2:
        val = np.einsum("ij...,kl...,ik...,jl...->...", D, D, G, G, optimize=True)
    else:
        val = np.einsum(
            "ijk...,lmn...,il...,jm...,kn...->...", D, D, G, G, G, optimize=True
        )
    return PeriodicField(u.spec, val)


def calabi_dissipation_density(S: np.ndarray, G: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Integrand ``S_ij u^{ia} S_ab u^{bj}`` of the Calabi energy decay."""
    S2 = derivative_tensor(S, 2, spec)
    return np.einsum("ij...,ia...,ab...,bj...->...", S2, G, S2, G, optimize=True)


# --- Riemannian distance -----------------------------------------------------

_graph_cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _metric_graph(u: SymplecticPotential):
    g = _graph_cache.get(u)
    if g is not None:
        return g
    spec = u.spec
    n, N = spec.n, spec.N
    H = u.hessian.hess
    ids = np.arange(N**n).reshape(spec.shape)
    rows, cols, wts = [], [], []
    offsets = [o for o in product((-1, 0, 1), repeat=n) if o > (0,) * n]
    grid_axes = tuple(range(2, 2 + n))
    for o in offsets:
        o = np.array(o)

        def shifted(s):
            return np.roll(H, tuple(-s * o), axis=grid_axes)

        Hmid = (-shifted(-1) + 9.0 * H + 9.0 * shifted(1) - shifted(2)) / 16.0
        dx = o * spec.h
        q = np.einsum("i,ij...,j->...", dx, Hmid, dx)
        w = np.sqrt(np.maximum(q, 0.0))
        rows.append(ids.ravel())
        cols.append(np.roll(ids, tuple(-o), axis=tuple(range(n))).ravel())
        wts.append(w.ravel())
    graph = coo_matrix(
        (np.concatenate(wts), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N**n, N**n),
    ).tocsr()
    _graph_cache[u] = graph
    return graph


def _leg(u: SymplecticPotential, point, node_idx):
    spec = u.spec
    node = spec.point(node_idx)
    d = spec.wrap(np.asarray(point, float) - node)
    H = u.hessian.hess[(slice(None), slice(None)) + tuple(node_idx)]
    return float(np.sqrt(max(d @ H @ d, 0.0)))


def riemannian_distance(u: SymplecticPotential, x, y) -> float:
    """Upper bound on the distance in the metric ``u_ij dx^i dx^j``.

    Shortest path (Dijkstra) in the periodic grid graph with all
    ``3^n - 1`` neighbours, plus straight legs from ``x`` and ``y`` to their
    nearest nodes.
    """
    spec = u.spec
    x = spec.wrap(np.atleast_1d(np.asarray(x, float)))
    y = spec.wrap(np.atleast_1d(np.asarray(y, float)))
    if np.array_equal(x, y):
        return 0.0
    ix, iy = spec.nearest_index(x), spec.nearest_index(y)
    if ix == iy:
        d = spec.wrap(y - x)
        H = u.hessian.hess[(slice(None), slice(None)) + ix]
        return float(np.sqrt(max(d @ H @ d, 0.0)))
    graph = _metric_graph(u)
    N = spec.N
    src = int(np.ravel_multi_index(ix, (N,) * spec.n))
    dst = int(np.ravel_multi_index(iy, (N,) * spec.n))
    dist = dijkstra(graph, directed=False, indices=src)
    return float(dist[dst] + _leg(u, x, ix) + _leg(u, y, iy))


def hessian_at(u: SymplecticPotential, point) -> np.ndarray:
    n = u.spec.n
    H = u.hessian.hess
    p = np.asarray(point, float).reshape(n)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            out[i, j] = out[j, i] = interpolate_values(H[i, j], u.spec, p)
    return out


def hessian_comparison_margin(u: SymplecticPotential, x, y, rm_tol: float = 1e-9) -> float:
    """Smallest eigenvalue of ``u_ij(y) - exp(-2d) u_ij(x)``.

    Requires ``max|Rm| <= 1`` (up to ``rm_tol``); normalise with
    :func:`calabiflow.flow.blowup_extract` or :func:`calabiflow.potential.rescale`.
    """
    rm = riemann_norm(u).max()
    if rm > 1.0 + rm_tol:
        raise PreconditionError(f"max|Rm| = {rm:.6g} exceeds 1; rescale first")
    d = riemannian_distance(u, x, y)
    M = hessian_at(u, y) - np.exp(-2.0 * d) * hessian_at(u, x)
    return float(np.linalg.eigvalsh(M)[0])


# --- closed-form second time derivative -------------------------------------

_STAR = [
    (+1, "ic,cdj,da,abi,bk,kl,jl", "G T G T G S2 G"),
    (-1, "ia,abij,bk,kl,jl", "G Q G S2 G"),
    (+1, "ia,abi,bc,cdj,dk,kl,jl", "G T G T G S2 G"),
    (-1, "ia,abi,bk,klj,jl", "G T G S3 G"),
    (+1, "ia,abi,bk,kl,jc,cdj,dl", "G T G S2 G T G"),
    (-1, "ia,abj,bk,kli,jl", "G T G S3 G"),
    (+1, "ik,klij,jl", "G S4 G"),
    (-1, "ik,kli,ja,abj,bl", "G S3 G T G"),
    (+1, "ic,cdj,dk,kl,ja,abi,bl", "G T G S2 G T G"),
    (-1, "ik,klj,ja,abi,bl", "G S3 G T G"),
    (+1, "ik,kl,jc,cdj,da,abi,bl", "G S2 G T G T G"),
    (-1, "ik,kl,ja,abij,bl", "G S2 G Q G"),
    (+1, "ik,kl,ja,abi,bc,cdj,dl", "G S2 G T G T G"),
]


def star_terms(G, T, Q, S2, S3, S4) -> np.ndarray:
    """Sum of the 13 terms of the second time derivative of ``u``.

    ``T``/``Q`` are the third/fourth derivative tensors of ``u``;
    ``S2``/``S3``/``S4`` those of the scalar curvature.  Works on grids
    (trailing axes) and on single points.
    """
    ops = {"G": G, "T": T, "Q": Q, "S2": S2, "S3": S3, "S4": S4}
    total = 0.0
    for sign, subs, names in _STAR:
        operands = [ops[k] for k in names.split()]
        expr = ",".join(s + "..." for s in subs.split(",")) + "->..."
        total = total + sign * np.einsum(expr, *operands, optimize=True)
    return total


def d2u_dt2_star(u: SymplecticPotential) -> PeriodicField:
    """Second time derivative of ``u`` along the flow, from the closed formula."""
    spec = u.spec
    G = u.hessian.inv
    S = curvature_from_inverse(G, spec)
    psi = u.psi.values
    val = star_terms(
        G,
        derivative_tensor(psi, 3, spec),
        derivative_tensor(psi, 4, spec),
        derivative_tensor(S, 2, spec),
        derivative_tensor(S, 3, spec),
        derivative_tensor(S, 4, spec),
    )
    return PeriodicField(spec, val)


def star_rotation_invariance(u_analytic, R, x, h: float = 1e-3, dps: int = 50):
    """Evaluate the closed-form ``d^2u/dt^2`` for ``u`` at ``x`` and for ``v(y) = u(y R)`` at ``y = x R^T``.

    ``u_analytic`` receives a tuple of :class:`mpmath.mpf` coordinates and
    must use mpmath-compatible operations.  Returns ``(value_u, value_v)``.
    """
    from ._analytic import check_orthogonal, star_at_point

    R = check_orthogonal(R)
    x = np.asarray(x, dtype=float).reshape(R.shape[0])

    def v(y):
        n = len(y)
        return u_analytic(tuple(sum(y[i] * R[i, b] for i in range(n)) for b in range(n)))

    a = star_at_point(u_analytic, x, h=h, dps=dps)
    b = star_at_point(v, x @ R.T, h=h, dps=dps)
    return a, b
