import math

import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ttsa.analysis import fit_rate
from ttsa.config import ExperimentConfig
from ttsa.core import (MatrixSpec, ProjectionConfig, StepSchedule, derive_system,
                       is_projection_index, project_ball, random_spec, stepsizes,
                       validate_noise_bound)
from ttsa.engine import run_trajectory
from ttsa.gtd import MdpSpec, random_mdp
from ttsa.noise import SphereNoise

KK = {k ** k - 1 for k in range(1, 16)}
finite = st.floats(-1e6, 1e6, allow_nan=False)
vectors = st.integers(1, 5).flatmap(lambda d: arrays(float, d, elements=finite))
schedules = st.tuples(st.floats(0.02, 0.98), st.floats(0.01, 0.97)).filter(
    lambda ab: ab[0] > ab[1] + 1e-6).map(lambda ab: StepSchedule(*ab))
fast = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@given(st.integers(0, 15 ** 15))
def test_projection_index_membership(n):
    assert is_projection_index(n) == (n in KK)


@given(vectors, st.floats(1e-3, 1e6))
def test_ball_projection_norm_and_idempotence(x, r):
    y = project_ball(r, x)
    assert math.isclose(np.linalg.norm(y), min(np.linalg.norm(x), r), rel_tol=1e-12, abs_tol=1e-300)
    np.testing.assert_array_equal(project_ball(r, y), y)


@given(schedules, st.integers(0, 10 ** 9))
def test_step_ratio_non_increasing(s, n):
    a0, b0 = stepsizes(s, n)
    a1, b1 = stepsizes(s, n + 1)
    assert a1 / b1 <= a0 / b0 * (1 + 1e-15)
    assert 0 < a0 <= b0 <= 1


@fast
@given(st.integers(1, 4), st.integers(0, 10 ** 6))
def test_fixed_point_residual(d, seed):
    spec = random_spec(d, seed)
    sy = derive_system(spec)
    for h, v in ((spec.h1, spec.v1), (spec.h2, spec.v2)):
        assert np.linalg.norm(h(sy.theta_star, sy.w_star)) <= 1e-10 * (1 + np.linalg.norm(v))


@fast
@given(st.integers(0, 10 ** 6), st.integers(1, 400), st.floats(0, 2))
def test_disabled_projection_is_bitwise_noop(seed, H, c):
    spec = random_spec(2, seed % 50)
    s = StepSchedule(0.8, 0.5)
    nm = SphereNoise(2, c)
    ck = np.arange(H + 1)
    a = run_trajectory(spec, s, ProjectionConfig.off(), nm, H, seed, checkpoints=ck)
    b = run_trajectory(spec, s, ProjectionConfig(math.inf, math.inf, True), nm, H, seed,
                       checkpoints=ck)
    np.testing.assert_array_equal(a.thetas, b.thetas)
    np.testing.assert_array_equal(a.ws, b.ws)


@fast
@given(st.integers(0, 2 ** 63), st.integers(0, 10 ** 6), st.floats(0, 5),
       arrays(float, 3, elements=st.floats(-100, 100)), arrays(float, 3, elements=st.floats(-100, 100)))
def test_sphere_noise_dominated(seed, n, c, th, w):
    rec = SphereNoise(3, c)(seed, n, th, w)
    assert validate_noise_bound(rec, th, w, c * (1 + 1e-12), c * (1 + 1e-12))


@fast
@given(st.integers(0, 10 ** 6))
def test_determinism(seed):
    spec = random_spec(2, 3)
    s = StepSchedule(0.7, 0.4)
    nm = SphereNoise(2, 0.3)
    assert run_trajectory(spec, s, None, nm, 300, seed) == run_trajectory(spec, s, None, nm, 300, seed)


@given(st.floats(-2, -0.01), st.floats(1e-3, 1e3))
def test_fit_recovers_power(p, scale):
    n = np.round(np.geomspace(10, 1e6, 25))
    assert abs(fit_rate(n, scale * (n + 1) ** p).slope_theta - p) <= 1e-10


@fast
@given(st.integers(1, 4), st.integers(0, 10 ** 6))
def test_matrix_spec_round_trip(d, seed):
    spec = random_spec(d, seed)
    assert MatrixSpec.from_dict(spec.to_dict()) == spec


@fast
@given(st.integers(2, 8), st.integers(0, 10 ** 6))
def test_mdp_round_trip_and_invariants(S, seed):
    m = random_mdp(S, min(2, S), seed, ensure_assumptions=False)
    assert MdpSpec.from_dict(m.to_dict()) == m
    assert np.all(np.abs(m.transitions.sum(axis=1) - 1) <= 1e-12)
    assert np.all(np.linalg.norm(m.phi, axis=1) <= 1 + 1e-12)


@fast
@given(st.sampled_from(["run", "rates", "constants", "decompose"]), st.integers(1, 10 ** 7),
       st.integers(1, 500), st.integers(0, 1000), schedules, st.booleans())
def test_config_round_trip(mode, horizon, count, base, s, proj):
    cfg = ExperimentConfig(mode=mode, horizon=horizon, seeds={"count": count, "base": base},
                           schedule={"alpha": s.alpha, "beta": s.beta},
                           projection={"enabled": proj, "r_theta": 5.0, "r_w": None})
    assert ExperimentConfig.loads(cfg.dumps()) == cfg
