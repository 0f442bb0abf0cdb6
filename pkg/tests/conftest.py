"""Shared fixtures and exact one-dimensional oracles.

For ``u = x^2/2 + eps*cos(2 pi x)`` every curvature quantity reduces to
derivatives of ``g = 1/u''``; the oracles below differentiate ``g`` in
mpmath extended precision, independent of the package's stencils.
"""

import mpmath
import numpy as np
import pytest

from calabiflow import GridSpec, PeriodicField, SymplecticPotential

mpmath.mp.dps = 40


def cos_potential(spec, eps, c=1.0):
    x = spec.mesh()[0]
    return SymplecticPotential(spec, c, PeriodicField(spec, eps * np.cos(2 * np.pi * x)))


def _g(eps):
    two_pi = 2 * mpmath.pi
    return lambda x: 1 / (1 - eps * two_pi**2 * mpmath.cos(two_pi * x))


def exact_S(eps, xs):
    """``S = -(1/u'')''``."""
    g = _g(mpmath.mpf(eps))
    return np.array([float(-mpmath.diff(g, mpmath.mpf(x), 2)) for x in xs])


def exact_rm(eps, xs):
    """``|Rm| = |(1/u'')''|`` in one dimension."""
    return np.abs(exact_S(eps, xs))


def exact_star(eps, xs):
    """``d^2u/dt^2 = (S''/u''^2)''`` with ``S = -g''``, ``g = 1/u''``."""
    g = _g(mpmath.mpf(eps))

    def inner(x):
        return -mpmath.diff(g, x, 4) * g(x) ** 2

    return np.array([float(mpmath.diff(inner, mpmath.mpf(x), 2)) for x in xs])


@pytest.fixture
def spec1():
    return GridSpec(1, 64, 1.0)


@pytest.fixture
def spec2():
    return GridSpec(2, 32, 1.0)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
