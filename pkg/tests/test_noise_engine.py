import numpy as np
import pytest

from ttsa.core import ProjectionConfig, StepSchedule, derive_system, random_spec, validate_noise_bound
from ttsa.engine import log_checkpoints, run_batch, run_trajectory, worker_count
from ttsa.errors import NonFinite, ValidationError
from ttsa.gtd import build_gtd, random_mdp
from ttsa.noise import (GtdSamplingNoise, NoiseModel, SphereNoise, ZeroNoise, box_muller,
                        cumulative, uniform_block)


def test_uniform_block_addressable():
    whole = uniform_block(3, 0, 100, 6)
    np.testing.assert_array_equal(whole[40:70], uniform_block(3, 40, 30, 6))
    assert whole.shape == (100, 6) and np.all((whole >= 0) & (whole < 1))


def test_uniform_block_seeds_differ():
    assert not np.array_equal(uniform_block(0, 0, 5, 2), uniform_block(1, 0, 5, 2))


def test_box_muller_moments():
    z = box_muller(uniform_block(0, 0, 50000, 2).reshape(-1))
    assert abs(z.mean()) < 0.02 and abs(z.std() - 1) < 0.02


def test_sphere_noise_norm_exact():
    nm = SphereNoise(3, 0.25)
    th, w = np.array([1.0, 2.0, 2.0]), np.array([0.0, 3.0, 4.0])
    rec = nm(7, 11, th, w)
    assert np.linalg.norm(rec.m1) == pytest.approx(0.25 * 9, rel=1e-14)
    assert np.linalg.norm(rec.m2) == pytest.approx(0.25 * 9, rel=1e-14)
    assert validate_noise_bound(rec, th, w, 0.25 * (1 + 1e-12), 0.25 * (1 + 1e-12))


def test_cumulative_pins_last():
    c = cumulative([[0.1] * 10])
    assert c[0, -1] == 1.0


def test_zero_noise_at_fixed_point(identity_spec, sched):
    sy = derive_system(identity_spec)
    t = run_trajectory(identity_spec, sched, None, ZeroNoise(2), 1000, 0,
                       theta0=sy.theta_star, w0=sy.w_star)
    assert np.all(t.errors_theta == 0) and np.all(t.errors_w == 0)


def test_determinism(gtd0, sched):
    nm = gtd0.noise_model()
    a = run_trajectory(gtd0.spec, sched, None, nm, 5000, 3, record_noise=True)
    b = run_trajectory(gtd0.spec, sched, None, nm, 5000, 3, record_noise=True)
    assert a == b


def test_golden_gtd0_trajectory(gtd0, sched):
    t = run_trajectory(gtd0.spec, sched, None, gtd0.noise_model(), 1000, 7, checkpoints=[1000])
    np.testing.assert_allclose(t.thetas[0], [-0.52856037, 0.24980419], atol=1e-8)
    np.testing.assert_allclose(t.ws[0], [-0.03045647, -0.02452325], atol=1e-8)


@pytest.mark.parametrize("variant", ["gtd0", "gtd2", "tdc"])
def test_kernel_matches_python_gtd(rate_mdp, sched, variant):
    inst = build_gtd(variant, rate_mdp)
    nm = inst.noise_model()
    ck = np.arange(0, 301)
    kw = dict(checkpoints=ck, record_noise=True)
    proj = ProjectionConfig(0.3, 0.3, True)
    a = run_trajectory(inst.spec, sched, proj, nm, 300, 5, engine="kernel", **kw)
    b = run_trajectory(inst.spec, sched, proj, nm, 300, 5, engine="python", **kw)
    np.testing.assert_allclose(a.thetas, b.thetas, rtol=0, atol=1e-13)
    np.testing.assert_allclose(a.noise_m1, b.noise_m1, rtol=0, atol=1e-13)
    assert a.projections_applied == b.projections_applied


def test_kernel_matches_python_sphere(sched):
    spec = random_spec(3, 1)
    nm = SphereNoise(3, 0.2)
    a = run_trajectory(spec, sched, None, nm, 500, 2, checkpoints=np.arange(501), engine="kernel")
    b = run_trajectory(spec, sched, None, nm, 500, 2, checkpoints=np.arange(501), engine="python")
    np.testing.assert_allclose(a.thetas, b.thetas, rtol=0, atol=1e-13)


def test_chunk_boundaries_do_not_matter(gtd0, sched):
    from ttsa import engine
    nm = gtd0.noise_model()
    ref = run_trajectory(gtd0.spec, sched, None, nm, 70000, 1, checkpoints=[70000])
    old = engine.CHUNK
    try:
        engine.CHUNK = 977
        other = run_trajectory(gtd0.spec, sched, None, nm, 70000, 1, checkpoints=[70000])
    finally:
        engine.CHUNK = old
    np.testing.assert_array_equal(ref.thetas, other.thetas)


def test_custom_noise_model_uses_python_engine(identity_spec, sched):
    class Const(NoiseModel):
        draws_per_step = 1

        def from_variates(self, u, theta, w):
            from ttsa.core import NoiseRecord
            return NoiseRecord(np.full(2, u[0] - 0.5), np.zeros(2))
    t = run_trajectory(identity_spec, sched, None, Const(2), 200, 0)
    assert np.all(np.isfinite(t.errors_theta))


def test_divergence_is_flagged(sched):
    from ttsa.core import MatrixSpec
    bad = MatrixSpec([[-50.0]], [[0.0]], [1.0], [[0.0]], [[1.0]], [0.0])
    t = run_trajectory(bad, sched, None, ZeroNoise(1), 5000, 0, checkpoints=[10, 4999])
    assert t.diverged and t.diverged_at > 10
    assert np.isnan(t.errors_theta[-1])
    with pytest.raises(NonFinite):
        run_trajectory(bad, sched, None, ZeroNoise(1), 5000, 0, raise_on_nonfinite=True)


def test_horizon_limits(identity_spec, sched):
    with pytest.raises(ValidationError):
        run_trajectory(identity_spec, sched, None, ZeroNoise(2), 15 ** 15, 0, checkpoints=[1])
    with pytest.raises(ValidationError):
        run_trajectory(identity_spec, sched, None, ZeroNoise(2), 10, 0, checkpoints=[11])


def test_log_checkpoints_default():
    ck = log_checkpoints(10 ** 5)
    assert ck[0] == 100 and ck[-1] == 10 ** 5 and len(ck) == 40


def test_batch_sorted_and_thread_invariant(gtd0, sched, monkeypatch):
    nm = gtd0.noise_model()
    one = run_batch(gtd0.spec, sched, None, nm, 2000, [4, 1, 3], threads=1)
    many = run_batch(gtd0.spec, sched, None, nm, 2000, [3, 4, 1], threads=3)
    assert [t.seed for t in one] == [1, 3, 4]
    assert all(a == b for a, b in zip(one, many))
    monkeypatch.setenv("TTSA_THREADS", "2")
    assert worker_count(8) == 2


def test_gtd0_converges_in_most_seeds(sched):
    inst = build_gtd("gtd0", random_mdp(3, 2, 11))
    trajs = run_batch(inst.spec, sched, None, inst.noise_model(), 10 ** 5, range(100),
                      checkpoints=[10 ** 3, 10 ** 5])
    frac = np.mean([t.errors_theta[1] < t.errors_theta[0] for t in trajs])
    assert frac >= 0.95
