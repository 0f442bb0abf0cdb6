"""Initial potentials: flat, explicit cosine sums, seeded random band-limited."""

from __future__ import annotations

from typing import Iterable, Sequence, Tuple

import numpy as np

from .potential import SymplecticPotential
from .torus_field import GridSpec, PeriodicField

__all__ = ["flat", "cosine", "random_bandlimited", "band_modes"]


def flat(spec: GridSpec, c: float = 1.0) -> SymplecticPotential:
    return SymplecticPotential.flat(spec, c)


def _phase(spec: GridSpec, k) -> np.ndarray:
    k = np.asarray(k, dtype=float).reshape(spec.n)
    x = spec.mesh()
    return 2 * np.pi * np.tensordot(k, x, axes=1) / spec.scale


def cosine(
    spec: GridSpec,
    modes: Iterable[Tuple[Sequence[int], float, float]],
    c: float = 1.0,
) -> SymplecticPotential:
    """``psi = sum amp * cos(2 pi k.x / scale + phase)`` over ``(k, amp, phase)``.

    Raises :class:`~calabiflow.errors.ConvexityError` (with the offending
    ``eig_min``) when the result is not convex.
    """
    psi = np.zeros(spec.shape)
    for k, amp, phase in modes:
        if len(k) != spec.n:
            raise ValueError(f"wave vector {k} does not have {spec.n} components")
        psi += float(amp) * np.cos(_phase(spec, k) + float(phase))
    return SymplecticPotential(spec, c, PeriodicField(spec, psi))


def band_modes(n: int, kmax: float) -> list:
    """Nonzero integer wave vectors with ``|k| <= kmax``, one of each ``+-k`` pair."""
    r = int(np.floor(kmax))
    out = []
    for k in np.ndindex(*([2 * r + 1] * n)):
        k = tuple(int(v) - r for v in k)
        if not any(k) or sum(v * v for v in k) > kmax * kmax:
            continue
        first = next(v for v in k if v)
        if first > 0:
            out.append(k)
    return out


def random_bandlimited(
    spec: GridSpec,
    kmax: float,
    amplitude: float,
    seed: int,
    c: float = 1.0,
) -> SymplecticPotential:
    """Random real trigonometric polynomial with modes ``0 < |k| <= kmax``.

    Coefficients are drawn from ``numpy.random.default_rng(seed)`` and scaled
    so that ``sum (2 pi |k| / scale)^2 |a_k| = amplitude``.  Every second
    derivative of ``psi`` is then bounded by ``amplitude`` in absolute value,
    so ``eig_min >= c - amplitude``.
    """
    if not 0 <= amplitude:
        raise ValueError("amplitude must be nonnegative")
    modes = band_modes(spec.n, kmax)
    if not modes:
        raise ValueError(f"no modes with 0 < |k| <= {kmax}")
    if 2 * np.max(np.abs(modes)) >= spec.N:
        raise ValueError(f"kmax={kmax} is not resolved on N={spec.N}")
    rng = np.random.default_rng(seed)
    mags = rng.standard_normal(len(modes))
    phases = rng.uniform(0.0, 2 * np.pi, len(modes))
    weight = sum(
        (2 * np.pi / spec.scale) ** 2 * sum(v * v for v in k) * abs(a)
        for k, a in zip(modes, mags)
    )
    mags = mags * (amplitude / weight)
    return cosine(spec, zip(modes, mags, phases), c)
