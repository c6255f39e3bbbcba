"""Tests for the spectral analysis service."""

import math

import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st
from scipy.sparse.csgraph import connected_components

from app.core.exceptions import (
    BlowUp,
    DomainError,
    NoPositiveRightEigenvector,
    NonPositiveLambda,
    PreconditionViolation,
)
from app.services import spectral

FRIEDMAN_H = [[5, 1], [1, 5]]
POLYA_H = [[1, 0], [0, 1]]


def boolean_matrices(max_d=8):
    return st.integers(min_value=1, max_value=max_d).flatmap(
        lambda d: st.lists(st.lists(st.booleans(), min_size=d, max_size=d), min_size=d, max_size=d)
    )


# --- Classes ---

@given(boolean_matrices())
def test_classes_partition_and_topological_order(nonzero):
    classes = spectral.strongly_connected_classes(nonzero)
    d = len(nonzero)
    assert sorted(k for c in classes for k in c) == list(range(d))

    position = {k: i for i, c in enumerate(classes) for k in c}
    for k in range(d):
        for q in range(d):
            if k != q and nonzero[k][q]:
                assert position[k] <= position[q]


@given(boolean_matrices())
def test_class_count_matches_csgraph(nonzero):
    graph = np.array(nonzero, dtype=float)
    count, _ = connected_components(graph, directed=True, connection="strong")
    classes = spectral.strongly_connected_classes(nonzero)
    assert len(classes) == count
    assert spectral.is_irreducible(nonzero) == (count == 1)


def test_classes_chain_order():
    # 2 -> 1 -> 0
    nonzero = [[True, False, False], [True, True, False], [False, True, True]]
    assert spectral.strongly_connected_classes(nonzero) == [[2], [1], [0]]
    assert not spectral.is_irreducible(nonzero)
    assert spectral.is_irreducible([[False, True], [True, False]])
    assert spectral.is_irreducible([[True]])


def test_structure_matrix_validation():
    with pytest.raises(PreconditionViolation):
        spectral.as_structure_matrix([[True, False]])
    with pytest.raises(PreconditionViolation):
        spectral.as_structure_matrix(np.ones((65, 65), dtype=bool))


def test_mean_sign_conditions():
    assert spectral.check_mean_sign_conditions(FRIEDMAN_H) == []
    problems = spectral.check_mean_sign_conditions([[1, -2], [-1, 1]])
    assert len(problems) == 2
    assert "negative off-diagonal" in problems[0]
    assert "nonnegative off-diagonal condition" in problems[0]
    with pytest.raises(PreconditionViolation):
        spectral.as_mean_matrix([[1, -2], [0, 1]])


# --- Perron data ---

def test_analyze_friedman():
    profile = spectral.analyze(FRIEDMAN_H)
    assert profile.lambda_h == pytest.approx(6.0, abs=1e-10)
    assert profile.nu1 == 1
    assert profile.irreducible
    np.testing.assert_allclose(profile.v_basis, [[0.5, 0.5]], atol=1e-10)
    np.testing.assert_allclose(profile.u_basis, [[1.0, 1.0]], atol=1e-10)
    np.testing.assert_allclose(profile.u_projection, [[0.5, 0.5], [0.5, 0.5]], atol=1e-10)
    assert profile.rho == pytest.approx(2.0 / 3.0, abs=1e-10)
    assert profile.nu_sec == 1


def test_analyze_polya():
    profile = spectral.analyze(POLYA_H)
    assert profile.lambda_h == pytest.approx(1.0)
    assert profile.nu1 == 2
    assert not profile.irreducible
    assert profile.rho is None
    assert profile.classes == [[0], [1]]
    np.testing.assert_allclose(profile.u_projection, np.eye(2), atol=1e-12)


def test_analyze_reducible_with_transient_class():
    # Color 0 feeds color 1; only class [1] attains lambda_H = 2.
    profile = spectral.analyze([[1, 1], [0, 2]])
    assert profile.lambda_h == pytest.approx(2.0)
    assert profile.nu1 == 1
    assert not profile.irreducible
    np.testing.assert_allclose(profile.v_basis, [[0.0, 1.0]], atol=1e-12)
    np.testing.assert_allclose(profile.u_basis, [[1.0, 1.0]], atol=1e-12)
    assert profile.rho == pytest.approx(0.5)


def test_lambda_class_feeding_others_has_no_positive_right_eigenvector():
    with pytest.raises(NoPositiveRightEigenvector):
        spectral.analyze([[2, 1], [0, 1]])


def test_non_positive_lambda():
    with pytest.raises(NonPositiveLambda):
        spectral.analyze([[-1, 0], [0, -2]])


def test_single_color():
    profile = spectral.analyze([[3.0]])
    assert profile.lambda_h == 3.0
    assert profile.irreducible
    assert profile.rho is None
    np.testing.assert_allclose(profile.v_basis, [[1.0]])


def test_structure_overrides_h_pattern():
    # H is diagonal but the declared structure is strongly connected.
    profile = spectral.analyze([[2, 0], [0, 2]], structure=[[True, True], [True, True]])
    assert profile.irreducible
    assert profile.nu1 == 1
    with pytest.raises(PreconditionViolation):
        spectral.analyze(FRIEDMAN_H, structure=[[True]])


def test_perron_data_matches_dense_eigensolver():
    rng = np.random.default_rng(7)
    for _ in range(300):
        d = int(rng.integers(1, 9))
        h = rng.uniform(0.0, 1.0, size=(d, d))
        np.fill_diagonal(h, rng.uniform(-1.0, 3.0, size=d))
        expected = float(np.max(np.linalg.eigvals(h).real))
        if expected <= 0.1:
            continue
        profile = spectral.perron_data(h, spectral.strongly_connected_classes(h != 0))
        assert abs(profile.lambda_h - expected) < 1e-8
        v = profile.v_basis[0]
        assert np.linalg.norm(v @ h - profile.lambda_h * v) < 1e-8
        assert np.all(v > 0)
        assert v.sum() == pytest.approx(1.0)


def test_perron_data_two_color_example():
    profile = spectral.analyze([[1, 2], [3, 0]])
    assert profile.lambda_h == pytest.approx(3.0, abs=1e-12)
    np.testing.assert_allclose(profile.v_basis[0], [0.6, 0.4], atol=1e-12)
    np.testing.assert_allclose(profile.u_basis[0], [1.0, 1.0], atol=1e-12)
    assert profile.v_basis[0] @ profile.u_basis[0] == pytest.approx(1.0)
    assert profile.rho == pytest.approx(-2.0 / 3.0)


def test_perron_data_nearly_decoupled_class():
    h = np.array([[50.0, 0.01], [0.02, 50.0]])
    profile = spectral.perron_data(h, spectral.strongly_connected_classes(h != 0))
    assert profile.lambda_h == pytest.approx(50.0 + math.sqrt(2e-4), abs=1e-9)
    v, u = profile.v_basis[0], profile.u_basis[0]
    assert np.linalg.norm(v @ h - profile.lambda_h * v) < 1e-8
    assert np.linalg.norm(h @ u - profile.lambda_h * u) < 1e-8
    assert v[1] / v[0] == pytest.approx(math.sqrt(0.5), rel=1e-8)


def test_projection_is_idempotent():
    for h in (FRIEDMAN_H, POLYA_H, [[1, 1], [0, 2]], [[2, 0, 0], [0, 2, 0], [1, 1, 1]]):
        U = spectral.analyze(h).u_projection
        np.testing.assert_allclose(U @ U, U, atol=1e-10)


# --- Secondary spectrum ---

def test_jordan_block_index():
    jordan = [[3, 0, 0], [0, 1, 1], [0, 0, 1]]
    rho, nu_sec = spectral.second_eigen_structure(jordan, 3.0)
    assert rho == pytest.approx(1.0 / 3.0)
    assert nu_sec == 2

    rho, nu_sec = spectral.second_eigen_structure(np.diag([3.0, 1.0, 1.0]), 3.0)
    assert rho == pytest.approx(1.0 / 3.0)
    assert nu_sec == 1


def test_nu_sec_override():
    assert spectral.second_eigen_structure(FRIEDMAN_H, 6.0, 3) == (pytest.approx(2.0 / 3.0), 3)
    assert spectral.analyze(FRIEDMAN_H, nu_sec_override=2).nu_sec == 2


def test_complex_secondary_pair():
    # Rotation block with eigenvalues 1 +- i next to a dominant 4.
    h = [[4, 0, 0], [0, 1, 1], [0, -1, 1]]
    rho, nu_sec = spectral.second_eigen_structure(h, 4.0)
    assert rho == pytest.approx(0.25)
    assert nu_sec == 1


def test_rate_bn_branches():
    n = 1e6
    log_n = math.log(n)
    assert spectral.rate_bn(0.75, 1, n) == pytest.approx(n ** -0.25)
    assert spectral.rate_bn(0.75, 2, n) == pytest.approx(n ** -0.25 * log_n)
    assert spectral.rate_bn(0.5, 1, n) == pytest.approx(n ** -0.5 * math.sqrt(math.log(log_n)))
    assert spectral.rate_bn(None, 1, n) == pytest.approx(n ** -0.5 * math.sqrt(math.log(log_n)))
    assert spectral.rate_bn(0.2, 3, n) == pytest.approx(n ** -0.5 * math.sqrt(math.log(log_n)))


def test_rate_bn_domain():
    with pytest.raises(DomainError):
        spectral.rate_bn(0.75, 1, 15)
    with pytest.raises(DomainError):
        spectral.rate_bn(1.0, 1, 100)


@pytest.mark.parametrize("rho,nu_sec", [(0.75, 1), (0.75, 2), (0.9, 3), (0.5, 2), (None, 1), (0.3, 1)])
def test_rate_bn_decreasing_past_its_peak(rho, nu_sec):
    ratio = rho if rho is not None and rho > 0.5 else 0.5
    start = max(16.0, math.exp((nu_sec - 1) / (1 - ratio)) * 10)
    ns = start * np.logspace(0, 6, 25)
    values = [spectral.rate_bn(rho, nu_sec, n) for n in ns]
    assert all(b < a for a, b in zip(values, values[1:]))


# --- Geometry ---

@given(st.lists(st.floats(min_value=-100, max_value=100), min_size=1, max_size=10))
def test_project_to_simplex(values):
    p = spectral.project_to_simplex(np.array(values))
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(spectral.project_to_simplex(p), p, atol=1e-9)


def test_distance_to_reducible_limit_set():
    profile = spectral.analyze(POLYA_H)
    assert spectral.dist_to_limit_set([0.3, 0.7], profile, 1.0) == pytest.approx(0.0, abs=1e-9)
    assert spectral.dist_to_limit_set([1.0, 1.0], profile, 1.0) == pytest.approx(math.sqrt(0.5), abs=1e-7)
    assert spectral.dist_to_limit_set([2.0, 0.0], profile, 1.0) == pytest.approx(1.0, abs=1e-7)
    assert spectral.dist_to_limit_set([2.0, 2.0], profile, 2.0) == pytest.approx(math.sqrt(2.0), abs=1e-7)


def test_distance_to_irreducible_limit_point():
    profile = spectral.analyze(FRIEDMAN_H)
    assert spectral.dist_to_limit_set([3.0, 3.0], profile, 6.0) == pytest.approx(0.0, abs=1e-12)
    assert spectral.dist_to_limit_set([4.0, 3.0], profile, 6.0) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        spectral.dist_to_limit_set([1.0, 1.0], profile, 0.0)


def simplex_grid(m, step=1e-3):
    """All weight vectors of length m on the simplex with coordinates on a step grid."""
    ticks = np.arange(0.0, 1.0 + step / 2, step)
    if m == 1:
        return np.ones((1, 1))
    if m == 2:
        return np.column_stack([ticks, 1.0 - ticks])
    a, b = np.meshgrid(ticks, ticks, indexing="ij")
    a, b = a.ravel(), b.ravel()
    keep = a + b <= 1.0 + step / 2
    return np.column_stack([a[keep], b[keep], np.maximum(1.0 - a[keep] - b[keep], 0.0)])


def block_profile(rng, nu1):
    """Block-diagonal mean whose nu1 two-color blocks all have Perron root 1."""
    d = 2 * nu1
    h = np.zeros((d, d))
    for j in range(nu1):
        block = rng.uniform(0.1, 2.0, size=(2, 2))
        h[2 * j:2 * j + 2, 2 * j:2 * j + 2] = block / np.max(np.linalg.eigvals(block).real)
    return spectral.analyze(h)


def test_distance_matches_grid_search():
    rng = np.random.default_rng(23)
    grids = {m: simplex_grid(m) for m in (1, 2, 3)}
    for _ in range(100):
        nu1 = int(rng.integers(1, 4))
        profile = block_profile(rng, nu1)
        assert profile.nu1 == nu1
        x = rng.uniform(0.0, 1.0, size=2 * nu1)
        points = grids[nu1] @ profile.v_basis
        brute = float(np.min(np.linalg.norm(points - x, axis=1)))
        assert spectral.dist_to_limit_set(x, profile, 1.0) == pytest.approx(brute, abs=2e-3)


# --- Mean ODE ---

def test_regression_field_vanishes_on_limit_set():
    np.testing.assert_allclose(spectral.regression_field([3.0, 3.0], FRIEDMAN_H), [0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(spectral.regression_field([0.2, 0.8], POLYA_H), [0.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("H", [FRIEDMAN_H, POLYA_H, [[1, 1], [0, 2]]])
def test_mean_ode_converges_to_limit_set(H):
    profile = spectral.analyze(H)
    rng = np.random.default_rng(11)
    for _ in range(5):
        start = rng.uniform(0.05, 10.0, size=2)
        trajectory = spectral.integrate_mean_ode(start, H, T=100.0)
        assert trajectory.times[-1] == pytest.approx(100.0)
        assert len(trajectory.states) == 101
        assert spectral.dist_to_limit_set(trajectory.final, profile, profile.lambda_h) < 1e-6


def test_mean_ode_keeps_direction_for_identity_mean():
    trajectory = spectral.integrate_mean_ode([0.2, 0.6], POLYA_H, T=50.0)
    np.testing.assert_allclose(trajectory.final, [0.25, 0.75], atol=1e-9)
    ratios = [state[1] / state[0] for state in trajectory.states]
    np.testing.assert_allclose(ratios, 3.0, rtol=1e-9)


def test_mean_ode_preconditions():
    with pytest.raises(PreconditionViolation):
        spectral.integrate_mean_ode([0.0, 1.0], FRIEDMAN_H, T=1.0)
    with pytest.raises(PreconditionViolation):
        spectral.integrate_mean_ode([1.0, 1.0], FRIEDMAN_H, T=1.0, dt=0.1)
    with pytest.raises(PreconditionViolation):
        spectral.integrate_mean_ode([1.0, 1.0], FRIEDMAN_H, T=0.0)
    with pytest.raises(BlowUp):
        spectral.integrate_mean_ode([1e-11, 1e-11], FRIEDMAN_H, T=1.0)


def test_profile_model_round_trip():
    profile = spectral.analyze([[1, 1], [0, 2]])
    model = spectral.profile_to_model(profile)
    assert model.nu1 == 1
    restored = spectral.profile_from_model(model)
    assert restored.lambda_h == profile.lambda_h
    assert restored.lambda_classes == profile.lambda_classes
    np.testing.assert_array_equal(restored.u_projection, profile.u_projection)
    assert spectral.profile_to_model(restored) == model


@hypothesis_settings(max_examples=50, deadline=None)
@given(st.integers(min_value=2, max_value=5), st.integers(min_value=0, max_value=2**32 - 1))
def test_random_irreducible_limit_point_is_fixed_by_h(d, seed):
    rng = np.random.default_rng(seed)
    h = rng.uniform(0.1, 2.0, size=(d, d))
    profile = spectral.analyze(h)
    v = profile.v_basis[0]
    np.testing.assert_allclose(v @ h, profile.lambda_h * v, atol=1e-8)
    assert spectral.dist_to_limit_set(profile.lambda_h * v, profile, profile.lambda_h) < 1e-9
