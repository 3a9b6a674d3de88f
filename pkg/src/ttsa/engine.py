"""Seeded trajectory runner.

Two interchangeable engines:
  * "python": loops over core.sa_step, works with any NoiseModel;
  * "kernel": a numba loop over chunks of pre-drawn variates, available for
    the built-in noise kinds (zero, sphere, GTD sampling).
Both consume the same per-step variates, so they agree up to floating-point
summation order. Within one engine runs are bit-reproducible per seed, and
a run never depends on which other seeds are in the same batch.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
import os

import numpy as np
from numba import njit

from .core import (MAX_HORIZON, PROJECTION_INDICES, IterateState, NoiseRecord,
                   ProjectionConfig, StepSchedule, derive_system, sa_step)
from .errors import NonFinite, ValidationError

CHUNK = 1 << 15


@dataclass(eq=False)
class Trajectory:
    schedule: StepSchedule
    seed: int
    horizon: int
    checkpoints: np.ndarray          # strictly increasing indices
    thetas: np.ndarray               # (len(checkpoints), d); NaN after divergence
    ws: np.ndarray
    errors_theta: np.ndarray
    errors_w: np.ndarray
    projections_applied: list = field(default_factory=list)
    noise_m1: np.ndarray = None      # (horizon, d): row n holds M1_{n+1}
    noise_m2: np.ndarray = None
    diverged_at: int = None          # first index with a non-finite iterate
    theta0: np.ndarray = None
    w0: np.ndarray = None

    @property
    def states(self):
        return [IterateState(int(n), self.thetas[i], self.ws[i])
                for i, n in enumerate(self.checkpoints)]

    @property
    def noise(self):
        if self.noise_m1 is None:
            return None
        return [NoiseRecord(a, b) for a, b in zip(self.noise_m1, self.noise_m2)]

    @property
    def diverged(self):
        return self.diverged_at is not None

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        arrays = ("checkpoints", "thetas", "ws", "errors_theta", "errors_w",
                  "noise_m1", "noise_m2")
        for name in arrays:
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b, equal_nan=True):
                return False
        return (self.schedule == other.schedule and self.seed == other.seed
                and self.horizon == other.horizon and self.diverged_at == other.diverged_at
                and self.projections_applied == other.projections_applied)

    __hash__ = None


def log_checkpoints(horizon, count=40, lo=100):
    """`count` log-uniform integer indices in [lo, horizon] (duplicates merged)."""
    lo = min(lo, horizon)
    pts = np.unique(np.round(np.geomspace(max(lo, 1), horizon, count)).astype(np.int64))
    return pts


def _normalize_checkpoints(checkpoints, horizon):
    if checkpoints is None:
        checkpoints = log_checkpoints(horizon)
    ck = np.unique(np.asarray(checkpoints, dtype=np.int64).reshape(-1))
    if ck.size == 0:
        raise ValidationError("at least one checkpoint is required")
    if ck[0] < 0 or ck[-1] > horizon:
        raise ValidationError(f"checkpoints must lie in [0, {horizon}]")
    return ck


@njit(cache=True, nogil=True)
def _advance(theta, w, n_start, n_end, U, g1, w1, v1, g2, w2, v2, alpha, beta,
             proj_on, r_th, r_w, proj_idx, kind, c, phi, rewards, cum_pi, cum_p,
             gamma, variant, ck, ck_theta, ck_w, ev_n, ev_which, rec_noise,
             noise1, noise2, status):
    # status: [diverged_at or -1, checkpoint cursor, event count, projection cursor]
    d = theta.shape[0]
    h1 = np.empty(d)
    h2 = np.empty(d)
    m1 = np.zeros(d)
    m2 = np.zeros(d)
    t1 = np.empty(d)
    t2 = np.empty(d)
    z = np.empty(2 * d)
    nth = np.empty(d)
    nw = np.empty(d)
    ncap = ck.shape[0]
    for n in range(n_start, n_end):
        cp = status[1]
        if cp < ncap and ck[cp] == n:
            for i in range(d):
                ck_theta[cp, i] = theta[i]
                ck_w[cp, i] = w[i]
            status[1] = cp + 1
        m = float(n + 1)
        a = m ** (-alpha)
        b = m ** (-beta)
        for i in range(d):
            s1 = v1[i]
            s2 = v2[i]
            for j in range(d):
                s1 -= g1[i, j] * theta[j]
                s2 -= g2[i, j] * theta[j]
            for j in range(d):
                s1 -= w1[i, j] * w[j]
                s2 -= w2[i, j] * w[j]
            h1[i] = s1
            h2[i] = s2
        u = U[n - n_start]
        if kind == 1:
            for i in range(0, 2 * d - 1, 2):
                rad = math.sqrt(-2.0 * math.log(1.0 - u[i]))
                ang = 2.0 * math.pi * u[i + 1]
                z[i] = rad * math.cos(ang)
                z[i + 1] = rad * math.sin(ang)
            nt = 0.0
            nwn = 0.0
            for i in range(d):
                nt += theta[i] * theta[i]
                nwn += w[i] * w[i]
            scale = c * (1.0 + math.sqrt(nt) + math.sqrt(nwn))
            na = 0.0
            nb = 0.0
            for i in range(d):
                na += z[i] * z[i]
                nb += z[d + i] * z[d + i]
            na = math.sqrt(na)
            nb = math.sqrt(nb)
            for i in range(d):
                m1[i] = z[i] * (scale / na) if na > 0 else 0.0
                m2[i] = z[d + i] * (scale / nb) if nb > 0 else 0.0
        elif kind == 2:
            ns = cum_pi.shape[0]
            s = 0
            while s < ns - 1 and cum_pi[s] <= u[0]:
                s += 1
            s2i = 0
            while s2i < ns - 1 and cum_p[s, s2i] <= u[1]:
                s2i += 1
            r = rewards[s]
            dot_td = 0.0
            fw = 0.0
            for j in range(d):
                dot_td += (gamma * phi[s2i, j] - phi[s, j]) * theta[j]
                fw += phi[s, j] * w[j]
            for i in range(d):
                td = r * phi[s, i] + phi[s, i] * dot_td
                if variant == 0:
                    t1[i] = (phi[s, i] - gamma * phi[s2i, i]) * fw
                    t2[i] = td - w[i]
                elif variant == 1:
                    t1[i] = (phi[s, i] - gamma * phi[s2i, i]) * fw
                    t2[i] = td - phi[s, i] * fw
                else:
                    t1[i] = td - gamma * phi[s2i, i] * fw
                    t2[i] = td - phi[s, i] * fw
                m1[i] = t1[i] - h1[i]
                m2[i] = t2[i] - h2[i]
        if rec_noise:
            for i in range(d):
                noise1[n, i] = m1[i]
                noise2[n, i] = m2[i]
        finite = True
        for i in range(d):
            nth[i] = theta[i] + a * (h1[i] + m1[i])
            nw[i] = w[i] + b * (h2[i] + m2[i])
        pp = status[3]
        if proj_on and pp < proj_idx.shape[0] and proj_idx[pp] == n + 1:
            status[3] = pp + 1
            for which in range(2):
                vec = nth if which == 0 else nw
                rad_lim = r_th if which == 0 else r_w
                sq = 0.0
                for i in range(d):
                    sq += vec[i] * vec[i]
                nrm = math.sqrt(sq)
                if nrm > rad_lim:
                    f = rad_lim / nrm
                    while True:     # shrink until the rounded norm is inside the ball
                        sq = 0.0
                        for i in range(d):
                            sq += (vec[i] * f) * (vec[i] * f)
                        if math.sqrt(sq) <= rad_lim:
                            break
                        f = f * (1.0 - 2.0 ** -52)
                    for i in range(d):
                        vec[i] = vec[i] * f
                    ec = status[2]
                    ev_n[ec] = n + 1
                    ev_which[ec] = which
                    status[2] = ec + 1
        for i in range(d):
            if not (math.isfinite(nth[i]) and math.isfinite(nw[i])):
                finite = False
            theta[i] = nth[i]
            w[i] = nw[i]
        if not finite:
            status[0] = n + 1
            return


def _start(system, theta0, w0, d):
    th = np.zeros(d) if theta0 is None else np.array(theta0, dtype=float).reshape(-1)
    w = np.zeros(d) if w0 is None else np.array(w0, dtype=float).reshape(-1)
    if th.shape != (d,) or w.shape != (d,):
        raise ValidationError(f"initial iterates must have length {d}")
    return th, w


def run_trajectory(spec, schedule, proj, noise_model, horizon, seed, checkpoints=None,
                   theta0=None, w0=None, record_noise=False, engine="auto",
                   raise_on_nonfinite=False, system=None):
    """Run one seeded trajectory of `horizon` steps.

    Initial iterates default to zero and are never projected. Errors are
    measured against the fixed point of `spec`. A non-finite iterate ends the
    run with `diverged_at` set (remaining checkpoints are NaN) unless
    `raise_on_nonfinite` is set, in which case NonFinite is raised.
    """
    horizon = int(horizon)
    if horizon < 1:
        raise ValidationError("horizon must be at least 1")
    if horizon >= MAX_HORIZON:
        raise ValidationError(f"horizon must be below 15^15 = {MAX_HORIZON}")
    if proj is None:
        proj = ProjectionConfig.off()
    if system is None:
        system = derive_system(spec)
    d = spec.dim
    if noise_model.dim != d:
        raise ValidationError(f"noise model dimension {noise_model.dim} != {d}")
    ck = _normalize_checkpoints(checkpoints, horizon)
    th, w = _start(system, theta0, w0, d)
    theta0_, w0_ = th.copy(), w.copy()
    if engine == "auto":
        engine = "kernel" if noise_model.kind is not None else "python"
    if engine == "kernel" and noise_model.kind is None:
        raise ValidationError("kernel engine needs a built-in noise model")
    ck_theta = np.full((len(ck), d), np.nan)
    ck_w = np.full((len(ck), d), np.nan)
    n1 = np.zeros((horizon, d)) if record_noise else None
    n2 = np.zeros((horizon, d)) if record_noise else None
    if engine == "kernel":
        events, diverged = _run_kernel(spec, schedule, proj, noise_model, horizon, seed, ck,
                                       th, w, ck_theta, ck_w, n1, n2)
    elif engine == "python":
        events, diverged = _run_python(spec, schedule, proj, noise_model, horizon, seed, ck,
                                       th, w, ck_theta, ck_w, n1, n2)
    else:
        raise ValidationError(f"unknown engine {engine!r}")
    if diverged is not None and raise_on_nonfinite:
        raise NonFinite(diverged)
    et = np.linalg.norm(ck_theta - system.theta_star, axis=1)
    ew = np.linalg.norm(ck_w - system.w_star, axis=1)
    return Trajectory(schedule=schedule, seed=int(seed), horizon=horizon, checkpoints=ck,
                      thetas=ck_theta, ws=ck_w, errors_theta=et, errors_w=ew,
                      projections_applied=events, noise_m1=n1, noise_m2=n2,
                      diverged_at=diverged, theta0=theta0_, w0=w0_)


def _run_kernel(spec, schedule, proj, noise_model, horizon, seed, ck, th, w,
                ck_theta, ck_w, n1, n2):
    d = spec.dim
    k = noise_model.draws_per_step
    kargs = noise_model.kernel_args()
    proj_idx = np.array(PROJECTION_INDICES, dtype=np.int64)
    ev_n = np.zeros(2 * len(proj_idx) + 2, dtype=np.int64)
    ev_which = np.zeros_like(ev_n)
    rec = n1 is not None
    noise1 = n1 if rec else np.zeros((1, d))
    noise2 = n2 if rec else np.zeros((1, d))
    status = np.array([-1, 0, 0, 1], dtype=np.int64)   # projection cursor skips index 0
    r_th = float(proj.r_theta) if proj.enabled else math.inf
    r_w = float(proj.r_w) if proj.enabled else math.inf
    dummy_u = np.zeros((CHUNK, max(k, 1)))
    for start in range(0, horizon, CHUNK):
        stop = min(start + CHUNK, horizon)
        U = noise_model.variates(seed, start, stop - start) if k else dummy_u
        _advance(th, w, start, stop, U, spec.gamma1, spec.w1, spec.v1, spec.gamma2,
                 spec.w2, spec.v2, schedule.alpha, schedule.beta, proj.enabled, r_th, r_w,
                 proj_idx, noise_model.kind, kargs["c"], kargs["phi"], kargs["rewards"],
                 kargs["cum_pi"], kargs["cum_p"], kargs["gamma"], kargs["variant"], ck,
                 ck_theta, ck_w, ev_n, ev_which, rec, noise1, noise2, status)
        if status[0] >= 0:
            break
    diverged = int(status[0]) if status[0] >= 0 else None
    if diverged is None and status[1] < len(ck) and ck[status[1]] == horizon:
        ck_theta[status[1]] = th
        ck_w[status[1]] = w
    events = [(int(ev_n[i]), "theta" if ev_which[i] == 0 else "w")
              for i in range(int(status[2]))]
    return events, diverged


def _run_python(spec, schedule, proj, noise_model, horizon, seed, ck, th, w,
                ck_theta, ck_w, n1, n2):
    events = []
    state = IterateState(0, th, w)
    cp = 0
    k = noise_model.draws_per_step
    for start in range(0, horizon, CHUNK):
        stop = min(start + CHUNK, horizon)
        U = noise_model.variates(seed, start, stop - start) if k else None
        for n in range(start, stop):
            if cp < len(ck) and ck[cp] == n:
                ck_theta[cp], ck_w[cp] = state.theta, state.w
                cp += 1
            u = U[n - start] if k else np.zeros(0)
            rec = noise_model.from_variates(u, state.theta, state.w)
            if n1 is not None:
                n1[n], n2[n] = rec.m1, rec.m2
            try:
                state = sa_step(state, spec, schedule, rec, proj, events)
            except NonFinite as e:
                return events, e.index
    if cp < len(ck) and ck[cp] == horizon:
        ck_theta[cp], ck_w[cp] = state.theta, state.w
    return events, None


def worker_count(requested=None):
    env = os.environ.get("TTSA_THREADS")
    n = requested if requested is not None else (os.cpu_count() or 1)
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise ValidationError(f"TTSA_THREADS must be an integer, got {env!r}") from None
    return max(1, int(n))


def run_batch(spec, schedule, proj, noise_model, horizon, seeds, threads=None, **kw):
    """Independent trajectories for each seed, returned sorted by seed."""
    seeds = sorted(int(s) for s in seeds)
    system = kw.pop("system", None) or derive_system(spec)
    job = lambda s: run_trajectory(spec, schedule, proj, noise_model, horizon, s,
                                   system=system, **kw)
    nt = worker_count(threads)
    if nt == 1 or len(seeds) < 2:
        return [job(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=nt) as pool:
        return list(pool.map(job, seeds))
