import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causalaug.equivariance import (
    LinearCausalProcess, PermutationMatrix, augment_linear, check_equivariance, generate_x,
    induced_intervention, invariant_process,
)
from causalaug.errors import InvalidDimensionError, SingularMatrixError
from oracles import linear_process_loop


def _well_conditioned(n, rng):
    while True:
        C = rng.standard_normal((n, n))
        if np.linalg.cond(C) < 1e6:
            return C


def test_generate_x_trivial():
    u, v = np.array([1.0, 2.0]), np.array([3.0, -1.0])
    proc = LinearCausalProcess(np.eye(2), np.eye(2), np.zeros(2))
    np.testing.assert_array_equal(generate_x(proc, u, v), u + v)
    proc = LinearCausalProcess(np.eye(2), np.eye(2), np.array([5.0, 6.0]))
    np.testing.assert_array_equal(generate_x(proc, np.zeros(2), np.zeros(2)), [5.0, 6.0])


def test_generate_x_matches_loop(rng):
    C, D, e = rng.standard_normal((3, 3)), rng.standard_normal((3, 2)), rng.standard_normal(3)
    h_d, h_y = rng.standard_normal(3), rng.standard_normal(2)
    got = generate_x(LinearCausalProcess(C, D, e), h_d, h_y)
    np.testing.assert_allclose(got, linear_process_loop(C.tolist(), D.tolist(), e, h_d, h_y), atol=1e-12)


def test_generate_x_dimension_mismatch(rng):
    proc = LinearCausalProcess(np.eye(3), np.ones((3, 2)), np.zeros(3))
    with pytest.raises(InvalidDimensionError):
        generate_x(proc, np.zeros(2), np.zeros(2))
    with pytest.raises(InvalidDimensionError):
        LinearCausalProcess(np.eye(3), np.ones((2, 2)), np.zeros(3))


def test_augment_linear_examples():
    x = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(augment_linear(PermutationMatrix((1, 0, 2)), x), [2.0, 1.0, 3.0])
    np.testing.assert_array_equal(augment_linear(PermutationMatrix.identity(3), x), x)
    A = PermutationMatrix((2, 0, 1))
    np.testing.assert_array_equal(augment_linear(A.inverse(), augment_linear(A, x)), x)
    np.testing.assert_array_equal(A.matrix() @ x, augment_linear(A, x))
    with pytest.raises(InvalidDimensionError):
        augment_linear(A, np.zeros(4))
    with pytest.raises(InvalidDimensionError):
        PermutationMatrix((0, 0, 1))


def test_group_action_all_pairs():
    x = np.arange(4.0) * 1.5 - 2
    perms = [PermutationMatrix(p) for p in itertools.permutations(range(4))]
    for A1 in perms:
        for A2 in perms[::5]:
            np.testing.assert_array_equal(
                augment_linear(A1, augment_linear(A2, x)), augment_linear(A1 @ A2, x))
            np.testing.assert_array_equal((A1 @ A2).matrix(), A1.matrix() @ A2.matrix())


def test_induced_intervention_trivial(rng):
    h = rng.standard_normal(4)
    proc = LinearCausalProcess(_well_conditioned(4, rng), np.ones((4, 1)), np.zeros(4))
    np.testing.assert_allclose(induced_intervention(proc, PermutationMatrix.identity(4), h), h, atol=1e-12)
    A = PermutationMatrix((3, 1, 0, 2))
    eye = LinearCausalProcess(np.eye(4), np.ones((4, 1)), np.zeros(4))
    np.testing.assert_allclose(induced_intervention(eye, A, h), augment_linear(A, h), atol=1e-15)


def test_induced_intervention_defining_equation(rng):
    C = _well_conditioned(4, rng)
    proc = LinearCausalProcess(C, np.ones((4, 2)), np.zeros(4))
    A = PermutationMatrix.random(4, rng)
    h = rng.standard_normal(4)
    out = induced_intervention(proc, A, h)
    np.testing.assert_allclose(C @ out, A.matrix() @ C @ h, atol=1e-9)


def test_induced_intervention_composes(rng):
    proc = LinearCausalProcess(_well_conditioned(5, rng), np.ones((5, 1)), np.zeros(5))
    A1, A2 = PermutationMatrix.random(5, rng), PermutationMatrix.random(5, rng)
    h = rng.standard_normal((20, 5))
    lhs = induced_intervention(proc, A1, induced_intervention(proc, A2, h))
    np.testing.assert_allclose(lhs, induced_intervention(proc, A1 @ A2, h), atol=1e-9)


def test_singular_c_rejected():
    C = np.array([[1.0, 2.0], [2.0, 4.0]])
    proc = LinearCausalProcess(C, np.ones((2, 1)), np.zeros(2))
    with pytest.raises(SingularMatrixError) as info:
        induced_intervention(proc, PermutationMatrix((1, 0)), np.ones(2))
    assert info.value.rcond < 1e-10
    nearly = LinearCausalProcess(np.diag([1.0, 1e-13]), np.ones((2, 1)), np.zeros(2))
    with pytest.raises(SingularMatrixError):
        induced_intervention(nearly, PermutationMatrix((1, 0)), np.ones(2))


def test_invariant_process_holds(rng):
    proc = invariant_process(6, 3, rng)
    for _ in range(20):
        A = PermutationMatrix.random(6, rng)
        rep = check_equivariance(proc, A, 1000, 1e-9, rng)
        assert rep.condition_AD_eq_D and rep.condition_Ae_eq_e
        assert rep.holds and rep.max_abs_residual < 1e-9


def test_identity_always_holds(rng):
    proc = LinearCausalProcess(_well_conditioned(4, rng), rng.standard_normal((4, 2)), rng.standard_normal(4))
    rep = check_equivariance(proc, PermutationMatrix.identity(4), 100, 1e-12, rng)
    assert rep.holds and rep.max_abs_residual == 0.0


def test_generic_d_violates(rng):
    proc = LinearCausalProcess(_well_conditioned(5, rng), rng.standard_normal((5, 3)), rng.standard_normal(5))
    rep = check_equivariance(proc, PermutationMatrix((1, 0, 2, 3, 4)), 100, 1e-9, rng)
    assert not rep.condition_AD_eq_D and not rep.holds
    assert rep.to_dict()["holds"] is False


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 7), m=st.integers(1, 4))
def test_residual_bound_property(seed, n, m):
    rng = np.random.default_rng(seed)
    proc = invariant_process(n, m, rng)
    A = PermutationMatrix.random(n, rng)
    rep = check_equivariance(proc, A, 200, 1e-9, rng)
    scale = 1 + np.abs(proc.C).max() * 6 + np.abs(proc.D).max() * 6 + np.abs(proc.e).max()
    assert rep.max_abs_residual <= 1e-9 * scale
