"""Trajectory diagnostics: error decomposition, rate fits, coupling, lower bound."""
from dataclasses import dataclass, field
import csv
import io
import math
from typing import NamedTuple

import numpy as np

from .core import ProjectionConfig, derive_system
from .engine import run_batch, run_trajectory
from .errors import DegenerateWindow, MissingNoise, ValidationError

CSV_COLUMNS = ("n", "mean_err_theta", "mean_err_w", "median_scaled_theta",
               "median_scaled_w", "frac_below_c_theta", "frac_below_c_w")


def fmt(x):
    """17 significant digits, '' for missing values."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


# --- decomposition -------------------------------------------------------------

@dataclass(eq=False)
class Decomposition:
    n0: int
    delta_theta: np.ndarray      # row i is the value at n0 + i
    l_theta: np.ndarray
    r_theta_term: np.ndarray
    t_term: np.ndarray
    delta_w: np.ndarray
    l_w: np.ndarray
    r_w_term: np.ndarray
    residual_theta: float
    residual_w: float
    residual_telescoping: float
    scale: float                 # max iterate norm, for relative tolerances

    def within(self, tol=1e-8):
        lim = tol * max(1.0, self.scale)
        return (self.residual_theta <= lim and self.residual_w <= lim
                and self.residual_telescoping <= lim)


def decompose(traj, system, n0=0, schedule=None) -> Decomposition:
    """Split theta_n - theta* and w_n - w* into their transient, martingale and
    coupling parts by forward recursion, and measure how well they add up.

    Needs every iterate from n0 to the horizon (checkpoints = range(H+1)) and
    the recorded noise. Only valid on a stretch with no effective projection.
    """
    if traj.noise_m1 is None:
        raise MissingNoise()
    schedule = schedule or traj.schedule
    H = traj.horizon if traj.diverged_at is None else traj.diverged_at - 1
    ck = traj.checkpoints
    if not (n0 >= 0 and n0 < H):
        raise ValidationError(f"n0 must lie in [0, {H})")
    pos = np.searchsorted(ck, n0)
    if pos + (H - n0) >= len(ck) or ck[pos] != n0 or ck[pos + H - n0] != H:
        raise ValidationError("decomposition needs every iterate from n0 to the horizon")
    if any(n > n0 for n, _ in traj.projections_applied):
        raise ValidationError("trajectory has effective projections after n0")
    th = traj.thetas[pos:pos + H - n0 + 1]
    w = traj.ws[pos:pos + H - n0 + 1]
    spec = system.spec
    X, K, G2, W2 = system.x1, system.coupling, spec.gamma2, spec.w2
    ts, ws = system.theta_star, system.w_star
    d = spec.dim
    m = H - n0 + 1
    dth, lth, rth, tt, pp = (np.zeros((m, d)) for _ in range(5))
    dw, lw, rw = (np.zeros((m, d)) for _ in range(3))
    dth[0] = th[0] - ts
    dw[0] = w[0] - ws
    I = np.eye(d)
    ratio_prev = None
    for i in range(m - 1):
        n = n0 + i
        a = (n + 1.0) ** (-schedule.alpha)
        b = (n + 1.0) ** (-schedule.beta)
        ratio = a / b
        Ja = I - a * X
        Jb = I - b * W2
        m1, m2 = traj.noise_m1[n], traj.noise_m2[n]
        dth[i + 1] = Ja @ dth[i]
        lth[i + 1] = Ja @ lth[i] + a * (m1 - K @ m2)
        rth[i + 1] = Ja @ rth[i] + a * (K @ (w[i + 1] - w[i])) / b
        dw[i + 1] = Jb @ dw[i]
        rw[i + 1] = Jb @ rw[i] - b * (G2 @ (th[i] - ts))
        lw[i + 1] = Jb @ lw[i] + b * m2
        if i == 0:
            pp[1] = ratio * (K @ (w[0] - ws))
        else:
            pp[i + 1] = Ja @ pp[i]
            tt[i + 1] = Ja @ tt[i] + (ratio * I - ratio_prev * Ja) @ (K @ (w[i] - ws))
        ratio_prev = ratio
    res_th = np.max(np.linalg.norm(th - ts - (dth + lth + rth), axis=1))
    res_w = np.max(np.linalg.norm(w - ws - (dw + rw + lw), axis=1))
    # R^theta_{n+1} = (alpha_n/beta_n) K (w_{n+1} - w*) - p_{n+1} - T_{n+1}
    n = np.arange(n0, H, dtype=float)
    ratios = ((n + 1) ** (-schedule.alpha) / (n + 1) ** (-schedule.beta))[:, None]
    tele = ratios * ((w[1:] - ws) @ K.T) - pp[1:] - tt[1:]
    res_tel = float(np.max(np.linalg.norm(rth[1:] - tele, axis=1))) if m > 1 else 0.0
    scale = float(max(np.max(np.linalg.norm(th, axis=1)), np.max(np.linalg.norm(w, axis=1))))
    return Decomposition(n0, dth, lth, rth, tt, dw, lw, rw, float(res_th), float(res_w),
                         res_tel, scale)


# --- rate fitting ---------------------------------------------------------------

@dataclass
class RateReport:
    slope_theta: float
    slope_w: float
    stderr_theta: float
    stderr_w: float
    window: tuple
    num_seeds: int
    predicted: tuple
    diverged_fraction: float = 0.0
    checkpoints: np.ndarray = field(default=None, repr=False)
    mean_theta: np.ndarray = field(default=None, repr=False)
    mean_w: np.ndarray = field(default=None, repr=False)
    median_theta: np.ndarray = field(default=None, repr=False)
    median_w: np.ndarray = field(default=None, repr=False)

    def summary(self):
        return {"slope_theta": self.slope_theta, "slope_w": self.slope_w,
                "stderr_theta": self.stderr_theta, "stderr_w": self.stderr_w,
                "window": list(self.window), "num_seeds": self.num_seeds,
                "predicted": list(self.predicted) if self.predicted else None,
                "diverged_fraction": self.diverged_fraction}


def _ols_slope(x, y):
    xm = x - x.mean()
    sxx = float(xm @ xm)
    slope = float(xm @ (y - y.mean())) / sxx
    if len(x) > 2:
        resid = y - y.mean() - slope * xm
        se = math.sqrt(float(resid @ resid) / (len(x) - 2) / sxx)
    else:
        se = math.nan
    return slope, se


def fit_rate(checkpoints, errors_theta, errors_w=None, window=None, predicted=None) -> RateReport:
    """Least-squares slope of log(mean error over seeds) against log(n+1).

    errors_* have shape (seeds, checkpoints) or (checkpoints,). Seeds with any
    non-finite error are dropped and counted in `diverged_fraction`.
    """
    ck = np.asarray(checkpoints, dtype=float)
    et = np.atleast_2d(np.asarray(errors_theta, dtype=float))
    ew = et if errors_w is None else np.atleast_2d(np.asarray(errors_w, dtype=float))
    if et.shape[1] != ck.size or ew.shape != et.shape:
        raise ValidationError("error arrays must have one column per checkpoint")
    ok = np.all(np.isfinite(et), axis=1) & np.all(np.isfinite(ew), axis=1)
    if not ok.any():
        raise DegenerateWindow("no seed has finite errors")
    lo, hi = (ck.min(), ck.max()) if window is None else window
    if not lo < hi:
        raise DegenerateWindow(f"window ({lo}, {hi}) is empty")
    sel = (ck >= lo) & (ck <= hi)
    if sel.sum() < 2:
        raise DegenerateWindow(f"fewer than two checkpoints in [{lo}, {hi}]")
    mt, mw = et[ok].mean(axis=0), ew[ok].mean(axis=0)
    if np.any(mt[sel] <= 0) or np.any(mw[sel] <= 0):
        raise DegenerateWindow("mean error is zero inside the window")
    x = np.log(ck[sel] + 1)
    st, set_ = _ols_slope(x, np.log(mt[sel]))
    sw, sew = _ols_slope(x, np.log(mw[sel]))
    return RateReport(st, sw, set_, sew, (float(lo), float(hi)), int(ok.sum()), predicted,
                      float(1 - ok.mean()), ck, mt, mw,
                      np.median(et[ok], axis=0), np.median(ew[ok], axis=0))


def rate_sweep(spec, schedule, noise_model, horizon, seeds, window=None, checkpoints=None,
               proj=None, threads=None, **kw):
    """Monte Carlo over seeds followed by fit_rate; returns (report, trajectories)."""
    if window is None:
        window = (horizon / 100, horizon)
    if checkpoints is None:
        checkpoints = window_checkpoints(window, horizon)
    trajs = run_batch(spec, schedule, proj, noise_model, horizon, seeds,
                      checkpoints=checkpoints, threads=threads, **kw)
    ck = trajs[0].checkpoints
    et = np.array([t.errors_theta for t in trajs])
    ew = np.array([t.errors_w for t in trajs])
    rep = fit_rate(ck, et, ew, window, predicted=(-schedule.alpha / 2, -schedule.beta / 2))
    return rep, trajs


def window_checkpoints(window, horizon, count=21):
    lo, hi = window
    return np.unique(np.round(np.geomspace(max(lo, 1), min(hi, horizon), count)).astype(np.int64))


# --- coupling -----------------------------------------------------------------------

class CouplingResult(NamedTuple):
    first_divergence: int = None
    last_effective_projection: int = None

    @property
    def identical(self):
        return self.first_divergence is None


def coupling_check(spec, schedule, proj, noise_model, horizon, seed, theta0=None, w0=None,
                   system=None) -> CouplingResult:
    """Run projected and unprojected iterations on one noise stream and compare
    the full state streams bit for bit."""
    if not proj.enabled:
        proj = ProjectionConfig(proj.r_theta, proj.r_w, True)
    system = system or derive_system(spec)
    ck = np.arange(horizon + 1)
    kw = dict(checkpoints=ck, theta0=theta0, w0=w0, system=system)
    a = run_trajectory(spec, schedule, proj, noise_model, horizon, seed, **kw)
    b = run_trajectory(spec, schedule, None, noise_model, horizon, seed, **kw)
    same = np.all((a.thetas == b.thetas) | (np.isnan(a.thetas) & np.isnan(b.thetas)), axis=1)
    same &= np.all((a.ws == b.ws) | (np.isnan(a.ws) & np.isnan(b.ws)), axis=1)
    bad = np.nonzero(~same)[0]
    first = int(ck[bad[0]]) if bad.size else None
    last = max((n for n, _ in a.projections_applied), default=None)
    return CouplingResult(first, last)


# --- lower bound ----------------------------------------------------------------------

@dataclass
class LowerBoundTable:
    c: float
    checkpoints: np.ndarray
    frac_theta: np.ndarray
    frac_w: np.ndarray
    mean_err_theta: np.ndarray
    mean_err_w: np.ndarray
    median_scaled_theta: np.ndarray
    median_scaled_w: np.ndarray
    num_seeds: int

    @property
    def rows(self):
        return [(int(n), float(ft), float(fw))
                for n, ft, fw in zip(self.checkpoints, self.frac_theta, self.frac_w)]

    def to_csv(self):
        return table_csv(self.checkpoints, self.mean_err_theta, self.mean_err_w,
                         self.median_scaled_theta, self.median_scaled_w,
                         self.frac_theta, self.frac_w)


def scaled_table(trajs, schedule, c=None):
    """Per-checkpoint means, scaled medians and below-c fractions over seeds."""
    ck = trajs[0].checkpoints
    et = np.array([t.errors_theta for t in trajs])
    ew = np.array([t.errors_w for t in trajs])
    ok = np.all(np.isfinite(et), axis=1) & np.all(np.isfinite(ew), axis=1)
    et, ew = et[ok], ew[ok]
    st = et * (ck + 1.0) ** (schedule.alpha / 2)
    sw = ew * (ck + 1.0) ** (schedule.beta / 2)
    if c is None:
        ft = fw = np.full(len(ck), np.nan)
    else:
        ft, fw = np.mean(st < c, axis=0), np.mean(sw < c, axis=0)
    return LowerBoundTable(c, ck, ft, fw, et.mean(axis=0), ew.mean(axis=0),
                           np.median(st, axis=0), np.median(sw, axis=0), int(ok.sum()))


def lower_bound_mc(instance, schedule, seeds, checkpoints, c, noise_model=None, proj=None,
                   theta0=None, w0=None, threads=None) -> LowerBoundTable:
    """Fraction of seeds whose scaled error (n+1)^{alpha/2}|theta_n - theta*|
    (and the beta/2 analogue for w) falls below c at each checkpoint."""
    seeds = list(seeds)
    if len(seeds) < 30:
        raise ValidationError("lower_bound_mc needs at least 30 seeds")
    if not c >= 0:
        raise ValidationError("c must be non-negative")
    spec = instance.spec
    nm = noise_model or instance.noise_model()
    ck = np.asarray(checkpoints, dtype=np.int64)
    trajs = run_batch(spec, schedule, proj, nm, int(ck.max()), seeds, checkpoints=ck,
                      theta0=theta0, w0=w0, threads=threads)
    return scaled_table(trajs, schedule, c)


def table_csv(ck, mt, mw, st, sw, ft, fw):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\r\n")
    wr.writerow(CSV_COLUMNS)
    for row in zip(ck, mt, mw, st, sw, ft, fw):
        wr.writerow([fmt(v) for v in row])
    return buf.getvalue()
