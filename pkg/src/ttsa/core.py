"""Linear two-timescale stochastic approximation: system types and single steps.

The iteration is

    theta_{n+1} = P(theta_n + alpha_n * (h1(theta_n, w_n) + M1_{n+1}))
    w_{n+1}     = P(w_n     + beta_n  * (h2(theta_n, w_n) + M2_{n+1}))

with h_i(theta, w) = v_i - Gamma_i theta - W_i w, alpha_n = (n+1)^-alpha,
beta_n = (n+1)^-beta and P the sparse projection (active only on k^k - 1).
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import (AssumptionViolated, DegenerateTimescales, NonFinite,
                     SingularMatrix, ValidationError)

# condition number above which a matrix is treated as singular
COND_LIMIT = 1e13


def _as_matrix(x, d, name):
    a = np.array(x, dtype=float)
    if a.ndim == 0 and d == 1:
        a = a.reshape(1, 1)
    if a.shape != (d, d):
        raise ValidationError(f"{name} must be {d}x{d}, got shape {a.shape}")
    a.setflags(write=False)
    return a


def _as_vector(x, d, name):
    a = np.array(x, dtype=float).reshape(-1)
    if a.shape != (d,):
        raise ValidationError(f"{name} must have length {d}, got shape {a.shape}")
    a.setflags(write=False)
    return a


def spectral_norm(a):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return float(np.linalg.norm(a, 2))


def sym_min_eig(a):
    """Smallest eigenvalue of a + a^T."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return float(np.linalg.eigvalsh(a + a.T)[0])


@dataclass(frozen=True, eq=False)
class MatrixSpec:
    gamma1: np.ndarray
    w1: np.ndarray
    v1: np.ndarray
    gamma2: np.ndarray
    w2: np.ndarray
    v2: np.ndarray

    def __post_init__(self):
        v1 = np.array(self.v1, dtype=float).reshape(-1)
        d = v1.shape[0]
        if d < 1:
            raise ValidationError("dimension must be positive")
        for name in ("gamma1", "w1", "gamma2", "w2"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), d, name))
        for name in ("v1", "v2"):
            object.__setattr__(self, name, _as_vector(getattr(self, name), d, name))
        for name in ("gamma1", "w1", "v1", "gamma2", "w2", "v2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"{name} has non-finite entries")

    @property
    def dim(self):
        return self.v1.shape[0]

    def h1(self, theta, w):
        return self.v1 - self.gamma1 @ theta - self.w1 @ w

    def h2(self, theta, w):
        return self.v2 - self.gamma2 @ theta - self.w2 @ w

    def to_dict(self):
        return {k: getattr(self, k).tolist()
                for k in ("gamma1", "w1", "v1", "gamma2", "w2", "v2")}

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(*(doc[k] for k in ("gamma1", "w1", "v1", "gamma2", "w2", "v2")))
        except KeyError as e:
            raise ValidationError(f"matrix spec is missing field {e.args[0]}") from None

    def __eq__(self, other):
        if not isinstance(other, MatrixSpec):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("gamma1", "w1", "v1", "gamma2", "w2", "v2"))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DerivedSystem:
    x1: np.ndarray
    b1: np.ndarray
    theta_star: np.ndarray
    w_star: np.ndarray
    q1: float
    q2: float
    q_min: float
    spec: MatrixSpec = field(repr=False)
    # W1 W2^{-1}, used by the decomposition and several constants
    coupling: np.ndarray = field(repr=False)
    w2_inv: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class AssumptionReport:
    lam_min_w2: float    # lambda_min(W2 + W2^T) / 2
    lam_min_x1: float    # lambda_min(X1 + X1^T) / 2
    w2_ok: bool
    x1_ok: bool

    @property
    def passed(self):
        return self.w2_ok and self.x1_ok

    def failing(self):
        out = []
        if not self.w2_ok:
            out.append(("W2", self.lam_min_w2))
        if not self.x1_ok:
            out.append(("X1", self.lam_min_x1))
        return out


def _checked_inverse(m, name):
    if not np.all(np.isfinite(m)):
        raise SingularMatrix(name, "non-finite entries")
    c = np.linalg.cond(m)
    if not np.isfinite(c) or c > COND_LIMIT:
        raise SingularMatrix(name, f"condition number {c:.3g}")
    return np.linalg.inv(m)


def _x1_and_coupling(spec):
    w2_inv = _checked_inverse(spec.w2, "W2")
    coupling = spec.w1 @ w2_inv
    x1 = spec.gamma1 - coupling @ spec.gamma2
    b1 = spec.v1 - coupling @ spec.v2
    return x1, b1, coupling, w2_inv


def derive_system(spec: MatrixSpec) -> DerivedSystem:
    """Fixed point and contraction margins of a linear two-timescale system.

    q1, q2 are returned as computed even when not positive; use
    check_assumptions (or the ledger) to reject such systems.
    """
    x1, b1, coupling, w2_inv = _x1_and_coupling(spec)
    _checked_inverse(x1, "X1")
    theta = np.linalg.solve(x1, b1)
    w = np.linalg.solve(spec.w2, spec.v2 - spec.gamma2 @ theta)
    # one round of refinement against the joint linear system
    d = spec.dim
    big = np.block([[spec.gamma1, spec.w1], [spec.gamma2, spec.w2]])
    rhs = np.concatenate([spec.v1, spec.v2])
    z = np.concatenate([theta, w])
    resid = rhs - big @ z
    if np.any(resid != 0):
        z = z + np.linalg.solve(big, resid)
    theta, w = z[:d].copy(), z[d:].copy()
    theta.setflags(write=False)
    w.setflags(write=False)
    q1 = sym_min_eig(x1) / 4
    q2 = sym_min_eig(spec.w2) / 4
    return DerivedSystem(x1=x1, b1=b1, theta_star=theta, w_star=w, q1=q1, q2=q2,
                         q_min=min(q1, q2), spec=spec, coupling=coupling, w2_inv=w2_inv)


def check_assumptions(spec: MatrixSpec) -> AssumptionReport:
    lw = sym_min_eig(spec.w2) / 2
    try:
        x1 = _x1_and_coupling(spec)[0]
        lx = sym_min_eig(x1) / 2
    except SingularMatrix:
        lx = float("nan")
    return AssumptionReport(lam_min_w2=lw, lam_min_x1=lx,
                            w2_ok=bool(lw > 0), x1_ok=bool(lx > 0))


def require_assumptions(spec):
    rep = check_assumptions(spec)
    for name, val in rep.failing():
        raise AssumptionViolated(name, val)
    return rep


def random_spec(d, seed, eig_range=(0.5, 2.0), skew=0.3, coupling=0.5) -> MatrixSpec:
    """Seeded random spec with W2 and X1 = sym PD (eigenvalues in eig_range)
    plus a skew part of size `skew`; Gamma1 is solved for so that X1 comes out
    as drawn. v1, v2 are standard normal."""
    rng = np.random.default_rng(seed)
    lo, hi = eig_range

    def draw():
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        sym = (q * rng.uniform(lo, hi, d)) @ q.T
        s = rng.standard_normal((d, d))
        return sym + skew * (s - s.T) / 2
    w2, x1 = draw(), draw()
    w1 = coupling * rng.standard_normal((d, d))
    g2 = coupling * rng.standard_normal((d, d))
    g1 = x1 + w1 @ np.linalg.solve(w2, g2)
    return MatrixSpec(g1, w1, rng.standard_normal(d), g2, w2, rng.standard_normal(d))


@dataclass(frozen=True)
class StepSchedule:
    alpha: float
    beta: float

    def __post_init__(self):
        a, b = float(self.alpha), float(self.beta)
        if not (math.isfinite(a) and math.isfinite(b)) or not (1 > a > b > 0):
            raise DegenerateTimescales(self.alpha, self.beta)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)


def stepsizes(schedule: StepSchedule, n):
    m = float(n + 1)
    return m ** (-schedule.alpha), m ** (-schedule.beta)


# k^k - 1 for k = 1..15; 16^16 no longer fits in a signed 64-bit index
PROJECTION_INDICES = tuple(k ** k - 1 for k in range(1, 16))
MAX_HORIZON = PROJECTION_INDICES[-1] + 1
_PROJ_SET = frozenset(PROJECTION_INDICES)


def is_projection_index(n) -> bool:
    return n in _PROJ_SET      # numpy integers hash like ints


def next_projection_index(n):
    """Smallest k^k - 1 that is >= n, or None past the table."""
    for p in PROJECTION_INDICES:
        if p >= n:
            return p
    return None


def _norm(x):
    sq = 0.0
    for v in x:
        sq += v * v
    return math.sqrt(sq)


def project_ball(r, x):
    """Radial projection onto the closed ball of radius r.

    The result's rounded norm never exceeds r, so projecting twice is a no-op.
    """
    x = np.asarray(x, dtype=float)
    nrm = _norm(x)
    if nrm > r:
        f = r / nrm
        while _norm(x * f) > r:
            f *= 1.0 - 2.0 ** -52
        return x * f
    return x.copy()


def sparse_project(n, r, x):
    if r <= 0:
        raise ValidationError("projection radius must be positive")
    if is_projection_index(n):
        return project_ball(r, x)
    return np.array(x, dtype=float)


@dataclass(frozen=True)
class ProjectionConfig:
    r_theta: float = math.inf
    r_w: float = math.inf
    enabled: bool = False

    def __post_init__(self):
        if self.enabled and not (self.r_theta > 0 and self.r_w > 0):
            raise ValidationError("projection radii must be strictly positive")

    @classmethod
    def off(cls):
        return cls()


@dataclass(frozen=True, eq=False)
class IterateState:
    n: int
    theta: np.ndarray
    w: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, IterateState):
            return NotImplemented
        return (self.n == other.n and np.array_equal(self.theta, other.theta)
                and np.array_equal(self.w, other.w))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class NoiseRecord:
    m1: np.ndarray
    m2: np.ndarray

    @classmethod
    def zero(cls, d):
        return cls(np.zeros(d), np.zeros(d))


def validate_noise_bound(noise: NoiseRecord, theta, w, m1, m2) -> bool:
    scale = 1.0 + np.linalg.norm(theta) + np.linalg.norm(w)
    return bool(np.linalg.norm(noise.m1) <= m1 * scale
                and np.linalg.norm(noise.m2) <= m2 * scale)


def sa_step(state: IterateState, spec: MatrixSpec, schedule: StepSchedule,
            noise: NoiseRecord, proj: ProjectionConfig, events=None) -> IterateState:
    """One synchronous update. Both h1 and h2 read the same (theta_n, w_n).

    If `events` is a list, (n+1, 'theta'|'w') is appended whenever the
    projection moved an iterate.
    """
    n = state.n
    a, b = stepsizes(schedule, n)
    th, w = state.theta, state.w
    with np.errstate(over="ignore", invalid="ignore"):   # non-finite is checked below
        th_new = th + a * (spec.h1(th, w) + noise.m1)
        w_new = w + b * (spec.h2(th, w) + noise.m2)
    if proj.enabled and is_projection_index(n + 1):
        pt = project_ball(proj.r_theta, th_new)
        pw = project_ball(proj.r_w, w_new)
        if events is not None:
            if not np.array_equal(pt, th_new):
                events.append((n + 1, "theta"))
            if not np.array_equal(pw, w_new):
                events.append((n + 1, "w"))
        th_new, w_new = pt, pw
    if not (np.all(np.isfinite(th_new)) and np.all(np.isfinite(w_new))):
        raise NonFinite(n + 1)
    return IterateState(n + 1, th_new, w_new)
