from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phgame.checks import central_difference, gradient_error, spring_gradient_suite
from phgame.couplings import (
    CouplingSet,
    CouplingSpec,
    SpringModel,
    _branch_potential,
    _branch_slope_factor,
    edge_force,
    spring_gradient,
    spring_potential,
)
from phgame.errors import DomainViolation, SingularConfiguration

from conftest import BARRIER_PARAMS, random_couplings

K1, K2, R, RC = (Fraction(v) for v in ("0.8", "0.06", "0.6", "1"))


def barrier_oracle(L):
    """Exact rational value and slope of the reference barrier potential."""
    L = Fraction(L)
    e = L - R
    if L <= R:
        return K1 * e * e, 2 * K1 * e
    gap = RC - L
    return K2 * e * e / gap, K2 * (2 * e / gap + e * e / (gap * gap))


@pytest.mark.parametrize("L", ["0.05", "0.3", "0.6", "0.61", "0.8", "0.95", "0.999"])
def test_barrier_matches_rational_oracle(barrier_spring, L):
    h, dh = barrier_oracle(L)
    z = np.array([float(Fraction(L)), 0.0])
    assert spring_potential(barrier_spring, z) == pytest.approx(float(h), rel=1e-13, abs=1e-16)
    g = spring_gradient(barrier_spring, z)
    assert g[0] == pytest.approx(float(dh), rel=1e-12, abs=1e-15)
    assert g[1] == 0.0


def test_barrier_known_values(barrier_spring):
    assert spring_potential(barrier_spring, [0.8, 0.0]) == pytest.approx(0.012, rel=1e-14)
    assert spring_potential(barrier_spring, [0.0, 0.3]) == pytest.approx(0.072, rel=1e-14)
    np.testing.assert_allclose(spring_gradient(barrier_spring, [0.8, 0.0]), [0.18, 0.0], rtol=1e-13)
    np.testing.assert_allclose(spring_gradient(barrier_spring, [0.0, -0.3]), [0.0, 0.48], rtol=1e-13)


def test_constant_spring_zero_rest_length_is_linear():
    spring = SpringModel.constant(k=2.0, rest_length=0.0)
    z = np.array([3.0, 4.0])
    assert spring_potential(spring, z) == pytest.approx(25.0)
    np.testing.assert_allclose(spring_gradient(spring, z), 2.0 * z)
    np.testing.assert_array_equal(spring_gradient(spring, np.zeros(2)), np.zeros(2))


def test_barrier_branches_meet_with_zero_value_and_slope(barrier_spring):
    r = barrier_spring.rest_length
    assert _branch_potential(barrier_spring, r, True) == 0.0
    assert _branch_potential(barrier_spring, r, False) == 0.0
    # both branches have dh/dL = phi * (L - r), which vanishes at L = r
    for L in (r - 1e-7, r + 1e-7):
        for inner in (True, False):
            slope = _branch_slope_factor(barrier_spring, L, inner) * (L - r)
            assert abs(slope) < 1e-6
    np.testing.assert_array_equal(spring_gradient(barrier_spring, [0.0, r]), [0.0, 0.0])


def test_barrier_blows_up_towards_critical_distance(barrier_spring):
    lengths = [0.9, 0.99, 0.999, 0.9999, 0.99999]
    values = [spring_potential(barrier_spring, [L, 0.0]) for L in lengths]
    assert all(b > 5 * a for a, b in zip(values, values[1:]))
    assert values[-1] > 900.0


def test_domain_violation_at_and_beyond_critical_distance(barrier_spring):
    for L in (1.0, 1.5):
        with pytest.raises(DomainViolation):
            spring_potential(barrier_spring, [L, 0.0])
        with pytest.raises(DomainViolation):
            spring_gradient(barrier_spring, [0.0, L])


def test_coincident_agents_are_singular(barrier_spring):
    with pytest.raises(SingularConfiguration):
        spring_gradient(barrier_spring, np.zeros(2))
    cs = CouplingSet.uniform(CouplingSpec.scalar(barrier_spring, 1.0, 2), 2)
    with pytest.raises(SingularConfiguration) as info:
        cs.gradient(np.array([0.5, 0.0, 0.0, 0.0]))
    assert list(info.value.edges) == [1]


@pytest.mark.parametrize("kwargs", [
    dict(k1=-1.0, k2=0.1, rest_length=0.5, critical_distance=1.0),
    dict(k1=1.0, k2=0.1, rest_length=1.0, critical_distance=1.0),
    dict(k1=1.0, k2=0.1, rest_length=0.5, critical_distance=float("inf")),
    dict(k1=1.0, k2=0.1, rest_length=0.5, critical_distance=1.0, domain_radius=1.2),
])
def test_invalid_barrier_parameters(kwargs):
    with pytest.raises(ValueError):
        SpringModel.barrier(**kwargs)


def test_default_domain_radius_sits_inside_the_pole(barrier_spring):
    assert barrier_spring.domain_radius < barrier_spring.critical_distance
    assert SpringModel.constant(1.0, 0.5).domain_radius == float("inf")


@pytest.mark.parametrize("matrix, message", [
    (((1.0, 0.5), (0.0, 1.0)), "symmetric"),
    (((1.0, 0.0), (0.0, 0.0)), "positive definite"),
    (((1.0, 2.0), (2.0, 1.0)), "positive definite"),
])
def test_damping_must_be_symmetric_positive_definite(barrier_spring, matrix, message):
    with pytest.raises(ValueError, match=message):
        CouplingSpec(barrier_spring, matrix)


def test_edge_force_adds_damper_term(barrier_spring):
    c = CouplingSpec(barrier_spring, ((2.0, 0.5), (0.5, 1.0)))
    z, w = np.array([0.8, 0.0]), np.array([1.0, -2.0])
    np.testing.assert_allclose(edge_force(c, z, w), [0.18 + 1.0, -1.5], rtol=1e-13)


def test_batch_evaluation_matches_scalar_helpers():
    rng = np.random.default_rng(3)
    cs = random_couplings(rng, 12)
    z = np.concatenate([
        rng.uniform(0.2, 0.7) * c.spring.critical_distance * rng.normal(size=2) / np.sqrt(2)
        if np.isfinite(c.spring.critical_distance) else rng.normal(size=2)
        for c in cs.specs
    ])
    zz = z.reshape(12, 2)
    zz /= np.maximum(1.0, np.linalg.norm(zz, axis=1) / (0.9 * cs.critical_distances))[:, None]
    z = zz.reshape(-1)
    np.testing.assert_allclose(
        cs.potentials(z), [spring_potential(c.spring, zj) for c, zj in zip(cs.specs, zz)],
        rtol=1e-14, atol=1e-16)
    np.testing.assert_allclose(
        cs.gradient(z), np.concatenate([spring_gradient(c.spring, zj) for c, zj in zip(cs.specs, zz)]),
        rtol=1e-13, atol=1e-16)
    w = rng.normal(size=24)
    np.testing.assert_allclose(
        cs.forces(z, w),
        np.concatenate([edge_force(c, zj, wj) for c, zj, wj in zip(cs.specs, zz, w.reshape(12, 2))]),
        rtol=1e-13, atol=1e-15)


def test_feasibility_flags(barrier_spring):
    cs = CouplingSet.uniform(CouplingSpec.scalar(barrier_spring, 1.0, 2), 3)
    z = np.array([0.5, 0.0, 0.0, 0.99, 0.0, 1.5])
    assert list(cs.feasible(z)) == [True, True, False]


edge_vectors = st.lists(st.floats(-0.7, 0.7, allow_nan=False), min_size=2, max_size=2).map(np.array)


@settings(max_examples=200, deadline=None)
@given(edge_vectors)
def test_spring_potential_even_and_nonnegative(z):
    spring = SpringModel.barrier(**BARRIER_PARAMS)
    h = spring_potential(spring, z)
    assert h >= 0.0
    assert spring_potential(spring, -z) == h
    if np.linalg.norm(z) > 1e-9:
        np.testing.assert_array_equal(spring_gradient(spring, -z), -spring_gradient(spring, z))


@settings(max_examples=200, deadline=None)
@given(edge_vectors)
def test_gradient_is_radial(z):
    spring = SpringModel.barrier(**BARRIER_PARAMS)
    if np.linalg.norm(z) < 1e-6:
        return
    g = spring_gradient(spring, z)
    assert abs(g[0] * z[1] - g[1] * z[0]) <= 1e-12 * max(1.0, np.abs(g).max())


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 0.99))
def test_potential_vanishes_only_at_rest_length(L):
    spring = SpringModel.barrier(**BARRIER_PARAMS)
    h = spring_potential(spring, [L, 0.0])
    assert (h == 0.0) == (L == spring.rest_length)


def test_finite_difference_agreement_single_spring(barrier_spring):
    rng = np.random.default_rng(7)
    for _ in range(200):
        z = rng.uniform(-0.7, 0.7, 2)
        if np.linalg.norm(z) < 1e-3:
            continue
        g_fd = central_difference(lambda v: spring_potential(barrier_spring, v), z)
        assert gradient_error(g_fd, spring_gradient(barrier_spring, z)) <= 1e-6


def test_spring_suite_covers_mixed_models():
    cs = random_couplings(np.random.default_rng(9), 6)
    result = spring_gradient_suite(cs, samples=300, seed=1)
    assert result.passed, result
