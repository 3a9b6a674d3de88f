import math

import numpy as np
import pytest

from ttsa.core import (PROJECTION_INDICES, IterateState, MatrixSpec, NoiseRecord,
                       ProjectionConfig, StepSchedule, check_assumptions, derive_system,
                       is_projection_index, next_projection_index, project_ball,
                       random_spec, require_assumptions, sa_step, sparse_project, stepsizes,
                       validate_noise_bound)
from ttsa.errors import (AssumptionViolated, DegenerateTimescales, NonFinite, SingularMatrix,
                         ValidationError)


def test_identity_system(identity_spec):
    sy = derive_system(identity_spec)
    np.testing.assert_array_equal(sy.x1, np.eye(2))
    np.testing.assert_array_equal(sy.b1, [1, 2])
    np.testing.assert_allclose(sy.theta_star, [1, 2], atol=1e-15)
    np.testing.assert_allclose(sy.w_star, [3, 4], atol=1e-15)
    assert sy.q1 == 0.5 and sy.q2 == 0.5 and sy.q_min == 0.5


def test_gtd0_x1_is_ata(gtd0):
    sy = derive_system(gtd0.spec)
    np.testing.assert_allclose(sy.x1, gtd0.A.T @ gtd0.A, atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_fixed_point_matches_stacked_solve(seed):
    spec = random_spec(2, seed)
    sy = derive_system(spec)
    big = np.block([[spec.gamma1, spec.w1], [spec.gamma2, spec.w2]])
    z = np.linalg.solve(big, np.concatenate([spec.v1, spec.v2]))
    np.testing.assert_allclose(sy.theta_star, z[:2], atol=1e-10)
    np.testing.assert_allclose(sy.w_star, z[2:], atol=1e-10)


def test_singular_w2_is_named():
    I, Z = np.eye(2), np.zeros((2, 2))
    spec = MatrixSpec(I, Z, [1, 1], Z, np.array([[1, 1], [1, 1.0]]), [1, 1])
    with pytest.raises(SingularMatrix, match="W2"):
        derive_system(spec)


def test_singular_x1_is_named():
    I, Z = np.eye(2), np.zeros((2, 2))
    spec = MatrixSpec(Z, Z, [1, 1], Z, I, [1, 1])
    with pytest.raises(SingularMatrix, match="X1"):
        derive_system(spec)


def test_spec_shape_checked():
    with pytest.raises(ValidationError):
        MatrixSpec(np.eye(2), np.eye(3), [1, 1], np.eye(2), np.eye(2), [1, 1])


def test_spec_arrays_read_only(identity_spec):
    with pytest.raises(ValueError):
        identity_spec.gamma1[0, 0] = 5.0


def test_spec_dict_round_trip(identity_spec):
    assert MatrixSpec.from_dict(identity_spec.to_dict()) == identity_spec


def test_assumptions_identity(identity_spec):
    rep = check_assumptions(identity_spec)
    assert rep.passed and rep.lam_min_w2 == 1 and rep.lam_min_x1 == 1


def test_assumptions_skew_x1():
    Z, I = np.zeros((2, 2)), np.eye(2)
    skew = np.array([[0.0, 1.0], [-1.0, 0.0]])
    rep = check_assumptions(MatrixSpec(skew, Z, [0, 0], Z, I, [0, 0]))
    assert not rep.x1_ok and rep.w2_ok
    assert rep.lam_min_x1 == 0.0
    with pytest.raises(AssumptionViolated, match="X1"):
        require_assumptions(MatrixSpec(skew, Z, [0, 0], Z, I, [0, 0]))


def test_assumptions_gtd2(gtd2):
    rep = check_assumptions(gtd2.spec)
    assert rep.passed
    sy = derive_system(gtd2.spec)
    np.testing.assert_allclose(sy.x1, sy.x1.T, atol=1e-12)


def test_stepsizes():
    assert stepsizes(StepSchedule(0.8, 0.5), 0) == (1.0, 1.0)
    assert stepsizes(StepSchedule(0.7, 0.5), 15)[1] == 0.25
    assert stepsizes(StepSchedule(0.8, 0.5), 99)[0] == pytest.approx(0.025118864315095794, rel=1e-14)


@pytest.mark.parametrize("a,b", [(0.5, 0.5), (0.4, 0.5), (1.0, 0.5), (0.8, 0.0)])
def test_schedule_rejects_bad_exponents(a, b):
    with pytest.raises(DegenerateTimescales, match="A2"):
        StepSchedule(a, b)


def test_projection_indices_examples():
    for n in (0, 3, 26, 255, 3124, 46655):
        assert is_projection_index(n)
    assert not is_projection_index(4)
    assert not is_projection_index(-1)
    assert PROJECTION_INDICES[-1] == 15 ** 15 - 1
    assert next_projection_index(27) == 255


def test_sparse_project_examples():
    np.testing.assert_array_equal(sparse_project(3, 1, [2, 0]), [1, 0])
    np.testing.assert_array_equal(sparse_project(4, 1, [2, 0]), [2, 0])
    np.testing.assert_array_equal(sparse_project(26, 5, [3, 4]), [3, 4])
    with pytest.raises(ValidationError):
        sparse_project(3, 0, [1, 0])


def test_step_at_fixed_point_is_stationary(identity_spec, sched):
    sy = derive_system(identity_spec)
    st = IterateState(5, sy.theta_star, sy.w_star)
    out = sa_step(st, identity_spec, sched, NoiseRecord.zero(2), ProjectionConfig.off())
    assert out.n == 6
    np.testing.assert_allclose(out.theta, sy.theta_star, atol=1e-15)
    np.testing.assert_allclose(out.w, sy.w_star, atol=1e-15)


def test_step_hand_evaluation():
    spec = MatrixSpec([[0.0]], [[-1.0]], [0.0], [[1.0]], [[1.0]], [0.0])
    out = sa_step(IterateState(0, np.array([0.0]), np.array([1.0])), spec,
                  StepSchedule(0.8, 0.5), NoiseRecord.zero(1), ProjectionConfig.off())
    assert out.theta[0] == 1.0 and out.w[0] == 0.0


def test_step_is_synchronous():
    # theta update must read w_n, not w_{n+1}
    spec = MatrixSpec([[0.0]], [[-1.0]], [0.0], [[0.0]], [[1.0]], [5.0])
    out = sa_step(IterateState(0, np.array([0.0]), np.array([2.0])), spec,
                  StepSchedule(0.8, 0.5), NoiseRecord.zero(1), ProjectionConfig.off())
    assert out.theta[0] == 2.0 and out.w[0] == 5.0


def test_step_projection_at_index_three(identity_spec, sched):
    spec = MatrixSpec(np.zeros((2, 2)), np.zeros((2, 2)), [0, 0], np.zeros((2, 2)),
                      np.eye(2), [0, 0])
    ev = []
    st = IterateState(2, np.array([0.0, 0.0]), np.zeros(2))
    noise = NoiseRecord(np.array([1.0, 0.0]) * 3 ** 0.8, np.zeros(2))
    out = sa_step(st, spec, sched, noise, ProjectionConfig(0.1, 10.0, True), ev)
    assert np.linalg.norm(out.theta) == pytest.approx(0.1, rel=1e-15)
    assert ev == [(3, "theta")]


def test_step_nonfinite_raises(identity_spec, sched):
    st = IterateState(0, np.array([np.inf, 0.0]), np.zeros(2))
    with pytest.raises(NonFinite) as e:
        sa_step(st, identity_spec, sched, NoiseRecord.zero(2), ProjectionConfig.off())
    assert e.value.index == 1


def test_noise_bound_examples():
    assert validate_noise_bound(NoiseRecord.zero(2), [5, 5], [1, 1], 0, 0)
    assert not validate_noise_bound(NoiseRecord(np.array([3.0]), np.array([0.0])), [0], [0], 1, 1)


def test_project_ball_returns_copy():
    x = np.array([0.1, 0.0])
    y = project_ball(1.0, x)
    y[0] = 7
    assert x[0] == 0.1


def test_random_spec_passes_assumptions():
    for seed in range(10):
        assert check_assumptions(random_spec(3, seed)).passed
