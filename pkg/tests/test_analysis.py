import numpy as np
import pytest

from ttsa.analysis import (CSV_COLUMNS, coupling_check, decompose, fit_rate, fmt,
                           lower_bound_mc, scaled_table, window_checkpoints)
from ttsa.core import ProjectionConfig, StepSchedule, derive_system
from ttsa.engine import run_trajectory
from ttsa.errors import DegenerateWindow, MissingNoise, ValidationError
from ttsa.gtd import build_gtd, random_mdp
from ttsa.noise import SphereNoise, ZeroNoise


def full_run(inst, sched, H=1000, seed=0, noise=None, **kw):
    return run_trajectory(inst.spec, sched, None, noise or inst.noise_model(), H, seed,
                          checkpoints=np.arange(H + 1), record_noise=True, **kw)


def test_decomposition_reconstructs(gtd2, sched):
    sy = derive_system(gtd2.spec)
    t = full_run(gtd2, sched, theta0=[1.0, -1.0], w0=[0.5, 0.5])
    for n0 in (0, 100):
        D = decompose(t, sy, n0=n0)
        assert D.within()
        assert D.residual_theta <= 1e-8 and D.residual_w <= 1e-8
        assert D.delta_theta.shape == (1001 - n0, 2)


def test_decomposition_zero_noise_has_no_martingale_part(gtd2, sched):
    sy = derive_system(gtd2.spec)
    t = full_run(gtd2, sched, noise=ZeroNoise(2), theta0=[1.0, 2.0])
    D = decompose(t, sy)
    assert np.all(D.l_theta == 0) and np.all(D.l_w == 0)


def test_decomposition_at_fixed_point_is_zero(gtd2, sched):
    sy = derive_system(gtd2.spec)
    t = full_run(gtd2, sched, noise=ZeroNoise(2), theta0=sy.theta_star, w0=sy.w_star)
    D = decompose(t, sy)
    for part in (D.delta_theta, D.l_theta, D.r_theta_term, D.delta_w, D.l_w, D.r_w_term):
        assert np.max(np.abs(part)) <= 1e-12


def test_decomposition_needs_noise(gtd2, sched):
    t = run_trajectory(gtd2.spec, sched, None, gtd2.noise_model(), 100, 0,
                       checkpoints=np.arange(101))
    with pytest.raises(MissingNoise):
        decompose(t, derive_system(gtd2.spec))


def test_fit_exact_power_law():
    n = np.round(np.geomspace(1e2, 1e6, 30))
    rep = fit_rate(n, (n + 1) ** -0.5, (n + 1) ** -0.25)
    assert abs(rep.slope_theta + 0.5) <= 1e-12 and abs(rep.slope_w + 0.25) <= 1e-12


def test_fit_log_corrected_power_law():
    n = window_checkpoints((1e4, 1e6), 10 ** 6)
    rep = fit_rate(n, 3 * (n + 1) ** -0.4 * np.sqrt(np.log(n + 2)))
    # local slope is -0.4 + 1/(2 ln n), between the window ends
    assert -0.4 + 1 / (2 * np.log(1e6)) < rep.slope_theta < -0.4 + 1 / (2 * np.log(1e4))
    assert rep.slope_theta == pytest.approx(-0.35618, abs=1e-4)


def test_fit_drops_divergent_seeds():
    n = np.array([10.0, 100.0, 1000.0])
    e = np.vstack([(n + 1) ** -0.5, [1.0, np.nan, np.nan]])
    rep = fit_rate(n, e)
    assert rep.num_seeds == 1 and rep.diverged_fraction == 0.5
    assert rep.slope_theta == pytest.approx(-0.5, abs=1e-12)


def test_fit_window_errors():
    n = np.array([10.0, 100.0, 1000.0])
    with pytest.raises(DegenerateWindow):
        fit_rate(n, n ** -0.5, window=(500, 100))
    with pytest.raises(DegenerateWindow):
        fit_rate(n, n ** -0.5, window=(500, 2000))


def test_coupling_infinite_radii(gtd0, sched):
    res = coupling_check(gtd0.spec, sched, ProjectionConfig(np.inf, np.inf, True),
                         gtd0.noise_model(), 3000, 0)
    assert res == (None, None) and res.identical


def test_coupling_large_radii(gtd0, sched):
    sy = derive_system(gtd0.spec)
    r = 10 * (1 + np.linalg.norm(sy.theta_star) + np.linalg.norm(sy.w_star))
    res = coupling_check(gtd0.spec, sched, ProjectionConfig(r, r, True), SphereNoise(2, 0.1),
                         20000, 3)
    assert res.first_divergence is None and res.last_effective_projection is None


def test_coupling_small_radii_diverge_at_three(gtd0, sched):
    res = coupling_check(gtd0.spec, sched, ProjectionConfig(0.01, 0.01, True),
                         SphereNoise(2, 0.1), 5000, 3, theta0=[50.0, 50.0])
    assert res.first_divergence == 3
    assert res.last_effective_projection in (3, 26, 255, 3124)


def test_lower_bound_trivial_cases(gtd2, sched):
    sy = derive_system(gtd2.spec)
    ck = [10, 100, 1000]
    tab = lower_bound_mc(gtd2, sched, range(30), ck, 0.0)
    assert np.all(tab.frac_theta == 0) and np.all(tab.frac_w == 0)
    tab = lower_bound_mc(gtd2, sched, range(30), ck, 1e-6, noise_model=ZeroNoise(2),
                         theta0=sy.theta_star, w0=sy.w_star)
    assert np.all(tab.frac_theta == 1) and np.all(tab.frac_w == 1)
    with pytest.raises(ValidationError):
        lower_bound_mc(gtd2, sched, range(10), ck, 0.1)


def test_table_csv_format(gtd2, sched):
    tab = lower_bound_mc(gtd2, sched, range(30), [10, 100], 0.5)
    text = tab.to_csv()
    lines = text.split("\r\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 4 and lines[-1] == ""
    assert lines[1].startswith("10,")


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(3) == "3" and fmt(float("nan")) == ""
