import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calabiflow.errors import PreconditionError
from calabiflow.geometry import (
    covariant_norm,
    d2u_dt2_star,
    energies,
    hessian_comparison_margin,
    riemann_norm,
    riemannian_distance,
    scalar_curvature,
    star_rotation_invariance,
    trace_pairing,
    trace_pairing_values,
)
from calabiflow.initial import random_bandlimited
from calabiflow.potential import SymplecticPotential, rescale
from calabiflow.torus_field import GridSpec, PeriodicField, derivative, integrate

from conftest import cos_potential, exact_rm, exact_S, exact_star

TWO_PI = 2 * np.pi


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def product_potential(spec, eps):
    x, y = spec.mesh()
    psi = eps * (np.cos(TWO_PI * x) + np.cos(TWO_PI * y))
    return SymplecticPotential.from_values(spec, psi)


class TestScalarCurvature:
    @pytest.mark.parametrize("method", ["direct", "cofactor"])
    def test_flat(self, method):
        u = SymplecticPotential.flat(GridSpec(2, 16, 1.0))
        assert np.max(np.abs(scalar_curvature(u, method).values)) < 1e-12

    @pytest.mark.parametrize("method", ["direct", "cofactor"])
    def test_1d_origin(self, method):
        eps = 1e-6
        S = scalar_curvature(cos_potential(GridSpec(1, 128, 1.0), eps), method)
        assert S.values[64] == pytest.approx(exact_S(eps, [0.0])[0], rel=1e-3)
        assert S.values[64] == pytest.approx(eps * TWO_PI**4, rel=1e-3)

    def test_product_separates(self):
        spec = GridSpec(2, 128, 1.0)
        S = scalar_curvature(product_potential(spec, 1e-4)).values
        s1 = exact_S(1e-4, spec.coords())
        assert np.max(np.abs(S - (s1[:, None] + s1[None, :]))) < 1e-6

    def test_forms_converge(self):
        errs = []
        for N in (32, 64):
            spec = GridSpec(2, N, 1.0)
            u = random_bandlimited(spec, 2, 0.5, seed=3)
            d = scalar_curvature(u, "direct").values - scalar_curvature(u, "cofactor").values
            errs.append(np.max(np.abs(d)))
        assert errs[0] / errs[1] >= 12

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10_000), amp=st.floats(0.05, 0.9))
    def test_mean_zero(self, seed, amp):
        u = random_bandlimited(GridSpec(2, 16, 1.0), 3, amp, seed)
        S = scalar_curvature(u)
        Ca = energies(u)["Ca"]
        assert abs(integrate(S)) <= 1e-10 * (1 + Ca)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            scalar_curvature(SymplecticPotential.flat(GridSpec(1, 16, 1.0)), "bogus")


class TestRiemannNorm:
    def test_flat(self):
        assert not np.any(riemann_norm(SymplecticPotential.flat(GridSpec(2, 16, 1.0))).values)

    def test_1d_oracle(self):
        eps = 1e-4
        rm = riemann_norm(cos_potential(GridSpec(1, 128, 1.0), eps)).values
        assert rm[64] == pytest.approx(exact_rm(eps, [0.0])[0], rel=1e-4)

    @pytest.mark.parametrize("lam", [2.0, 4.0])
    def test_rescale_law(self, lam):
        spec = GridSpec(2, 64, 1.0)
        u = product_potential(spec, 1e-3)
        ratio = riemann_norm(rescale(u, lam)).max() / riemann_norm(u).max()
        assert ratio == pytest.approx(1 / lam, rel=0.01)


class TestEnergies:
    def test_flat(self):
        e = energies(SymplecticPotential.flat(GridSpec(2, 16, 1.0)))
        assert e == {"Ca": 0.0, "Ma": 0.0, "L2": 0.0, "psi_mean": 0.0}

    def test_mabuchi_constant_det(self):
        e = energies(SymplecticPotential.flat(GridSpec(1, 16, 1.0), c=2.0))
        assert e["Ma"] == pytest.approx(-np.log(2.0), rel=1e-14)

    def test_calabi_linearised(self):
        eps = 1e-4
        Ca = energies(cos_potential(GridSpec(1, 128, 1.0), eps))["Ca"]
        assert Ca == pytest.approx(eps**2 * TWO_PI**8 / 2, rel=0.01)

    def test_l2_is_psi_squared(self):
        spec = GridSpec(1, 64, 1.0)
        e = energies(cos_potential(spec, 1e-3))
        assert e["L2"] == pytest.approx(0.5e-6, rel=1e-12)


class TestTracePairing:
    def test_flat(self):
        assert not np.any(trace_pairing(SymplecticPotential.flat(GridSpec(2, 16, 1.0))).values)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000), amp=st.floats(0.0, 0.95))
    def test_nonpositive(self, seed, amp):
        u = random_bandlimited(GridSpec(2, 16, 1.0), 3, amp, seed)
        assert trace_pairing(u).max() <= 1e-12

    def test_hand_value(self):
        H = np.diag([2.0, 0.5])
        assert trace_pairing_values(H, np.linalg.inv(H)) == pytest.approx(-1.0, abs=1e-15)


class TestCovariantNorm:
    def test_flat_gradient(self):
        spec = GridSpec(2, 32, 1.0)
        x, y = spec.mesh()
        f = PeriodicField(spec, np.sin(TWO_PI * x) * np.cos(TWO_PI * y))
        g = [derivative(f, (i,)).values for i in range(2)]
        val = covariant_norm(f, SymplecticPotential.flat(spec), 1).values
        np.testing.assert_allclose(val, g[0] ** 2 + g[1] ** 2, rtol=1e-14)

    def test_flat_second(self):
        spec = GridSpec(1, 64, 1.0)
        x = spec.mesh()[0]
        f = PeriodicField(spec, np.cos(TWO_PI * x))
        val = covariant_norm(f, SymplecticPotential.flat(spec), 2).values
        assert np.max(np.abs(val - TWO_PI**4 * np.cos(TWO_PI * x) ** 2)) < 1e-4 * TWO_PI**4

    def test_scaled_metric(self):
        spec = GridSpec(1, 64, 1.0)
        x = spec.mesh()[0]
        f = PeriodicField(spec, np.cos(TWO_PI * x))
        val = covariant_norm(f, SymplecticPotential.flat(spec, c=2.0), 1).values
        expect = 0.5 * TWO_PI**2 * np.sin(TWO_PI * x) ** 2
        assert np.max(np.abs(val - expect)) < 1e-4 * TWO_PI**2

    def test_matches_inverse_hessian(self):
        spec = GridSpec(2, 16, 1.0)
        u = random_bandlimited(spec, 2, 0.6, seed=11)
        x, y = spec.mesh()
        f = PeriodicField(spec, np.cos(TWO_PI * (x - 2 * y)))
        g = np.stack([derivative(f, (i,)).values for i in range(2)])
        G = u.hessian.inv
        direct = sum(G[i, j] * g[i] * g[j] for i in range(2) for j in range(2))
        val = covariant_norm(f, u, 1).values
        assert np.max(np.abs(val - direct)) <= 1e-12 * np.max(np.abs(direct))

    def test_bad_order(self):
        spec = GridSpec(1, 16, 1.0)
        with pytest.raises(ValueError):
            covariant_norm(PeriodicField.zeros(spec), SymplecticPotential.flat(spec), 4)


class TestDistance:
    def test_flat_straight(self):
        u = SymplecticPotential.flat(GridSpec(2, 64, 1.0))
        assert riemannian_distance(u, (0, 0), (0.25, 0)) == pytest.approx(0.25, rel=0.02)

    def test_same_point(self):
        u = random_bandlimited(GridSpec(2, 16, 1.0), 2, 0.5, seed=0)
        assert riemannian_distance(u, (0.13, -0.2), (0.13, -0.2)) == 0.0

    def test_scaled_metric(self):
        u = SymplecticPotential.flat(GridSpec(1, 64, 1.0), c=4.0)
        assert riemannian_distance(u, (0,), (0.25,)) == pytest.approx(0.5, rel=0.02)

    def test_upper_bound_of_straight_line(self):
        # in the flat metric the straight segment is the geodesic
        u = SymplecticPotential.flat(GridSpec(2, 32, 1.0))
        d = riemannian_distance(u, (-0.2, 0.1), (0.3, -0.15))
        assert d >= np.hypot(0.5, 0.25) - 1e-12


class TestHessianComparison:
    def test_flat(self):
        u = SymplecticPotential.flat(GridSpec(2, 32, 1.0))
        d = riemannian_distance(u, (0, 0), (0.25, 0.125))
        m = hessian_comparison_margin(u, (0, 0), (0.25, 0.125))
        assert m == pytest.approx(1 - np.exp(-2 * d), rel=1e-12)
        assert m > 0

    def test_same_point(self):
        u = SymplecticPotential.flat(GridSpec(1, 32, 1.0))
        assert hessian_comparison_margin(u, (0.1,), (0.1,)) == 0.0

    def test_precondition(self):
        u = cos_potential(GridSpec(1, 64, 1.0), 1e-2)
        with pytest.raises(PreconditionError):
            hessian_comparison_margin(u, (0.0,), (0.1,))

    def test_normalised_1d(self):
        u = cos_potential(GridSpec(1, 128, 1.0), 1e-2)
        lam = riemann_norm(u).max()
        v = rescale(u, lam)
        rng = np.random.default_rng(5)
        half = 0.5 * v.spec.scale
        pts = rng.uniform(-half, half, (40, 2))
        margins = [hessian_comparison_margin(v, (a,), (b,)) for a, b in pts]
        assert min(margins) >= -1e-6


class TestStar:
    def test_flat(self):
        assert not np.any(d2u_dt2_star(SymplecticPotential.flat(GridSpec(2, 16, 1.0))).values)

    def test_1d_exact_oracle(self):
        eps = 1e-4
        # N=64 balances truncation against roundoff amplified by h^-8
        spec = GridSpec(1, 64, 1.0)
        val = d2u_dt2_star(cos_potential(spec, eps)).values
        idx = np.arange(0, 64, 4)
        exact = exact_star(eps, spec.coords()[idx])
        scale = np.max(np.abs(exact))
        assert np.max(np.abs(val[idx] - exact)) < 1e-3 * scale

    def test_linearisation(self):
        # second time derivative of psi is the fourth power of the Laplacian
        eps = 1e-6
        spec = GridSpec(1, 64, 1.0)
        x = spec.mesh()[0]
        val = d2u_dt2_star(cos_potential(spec, eps)).values
        lin = eps * TWO_PI**8 * np.cos(TWO_PI * x)
        assert np.max(np.abs(val - lin)) < 0.01 * eps * TWO_PI**8


def _analytic(p):
    eps = mpmath.mpf(1) / 1000
    two_pi = 2 * mpmath.pi
    return (p[0] ** 2 + p[1] ** 2) / 2 + eps * mpmath.cos(two_pi * p[0]) * mpmath.cos(two_pi * p[1])


class TestRotationInvariance:
    def test_identity_bitwise(self):
        a, b = star_rotation_invariance(_analytic, np.eye(2), (0.1, 0.2))
        assert a == b

    def test_flat(self):
        a, b = star_rotation_invariance(lambda p: (p[0] ** 2 + p[1] ** 2) / 2, rotation(0.7), (0.1, 0.0))
        assert abs(a) < 1e-20 and abs(b) < 1e-20

    def test_rotation_pi_over_six(self):
        a, b = star_rotation_invariance(_analytic, rotation(np.pi / 6), (0.0, 0.0))
        assert abs(a - b) <= 1e-6 * abs(a)
        assert a > 0

    def test_non_orthogonal(self):
        with pytest.raises(PreconditionError):
            star_rotation_invariance(_analytic, np.array([[1.0, 0.1], [0.0, 1.0]]), (0, 0))
