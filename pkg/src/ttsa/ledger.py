"""Explicit finite-time constants and thresholds of the two-timescale bounds.

Everything is computed from a DerivedSystem plus a LedgerConfig. Thresholds
that are only known to exist are found by forward scan (cap 1e8). Constants
that overflow a double (the double-exponential projection thresholds and
anything downstream) are kept as natural logarithms.
"""
from dataclasses import dataclass, field, replace
from functools import lru_cache
import json
import math

import numpy as np
from scipy.special import zeta

from .core import (PROJECTION_INDICES, DerivedSystem, StepSchedule, spectral_norm,
                   stepsizes)
from .errors import AssumptionViolated, CapExceeded, DegenerateTimescales, ValidationError

SCAN_CAP = 10 ** 8
_SCAN_CHUNK = 1 << 20
LN10 = math.log(10.0)


@dataclass(frozen=True)
class LedgerConfig:
    schedule: StepSchedule
    delta: float = 0.05
    p: float = 2.0
    r_theta: float = None     # default 10 * (1 + |theta*| + |w*|)
    r_w: float = None
    m1: float = 1.0
    m2: float = 1.0
    d: int = None             # taken from the system when missing

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValidationError("delta must lie in (0, 1)")
        if not self.p > 1:
            raise ValidationError("p must be greater than 1")
        for name in ("r_theta", "r_w"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValidationError(f"{name} must be positive")
        for name in ("m1", "m2"):
            if not getattr(self, name) >= 0:
                raise ValidationError(f"{name} must be non-negative")

    def resolved(self, system: DerivedSystem):
        radius = 10.0 * (1.0 + np.linalg.norm(system.theta_star) + np.linalg.norm(system.w_star))
        return replace(self,
                       r_theta=float(radius) if self.r_theta is None else float(self.r_theta),
                       r_w=float(radius) if self.r_w is None else float(self.r_w),
                       d=system.spec.dim if self.d is None else int(self.d))

    def to_dict(self):
        return {"alpha": self.schedule.alpha, "beta": self.schedule.beta, "delta": self.delta,
                "p": self.p, "r_theta": self.r_theta, "r_w": self.r_w, "m1": self.m1,
                "m2": self.m2, "d": self.d}


# --- elementary pieces -------------------------------------------------------

def q_values(system: DerivedSystem):
    if not system.q1 > 0:
        raise AssumptionViolated("X1", 2 * system.q1)
    if not system.q2 > 0:
        raise AssumptionViolated("W2", 2 * system.q2)
    return system.q1, system.q2, system.q_min


def ell_star(schedule: StepSchedule):
    gap = schedule.alpha - schedule.beta
    if not gap > 0:
        raise DegenerateTimescales(schedule.alpha, schedule.beta)
    return int(math.ceil(schedule.beta / (2 * gap)))


def log_nu(n, gamma, cfg):
    d = cfg.d if cfg.d is not None else 1
    inner = math.log(4 * d * d / cfg.delta) + cfg.p * math.log(n + 1)
    return -0.5 * gamma * math.log(n + 1) + 0.5 * math.log(inner)


def nu(n, gamma, cfg):
    """(n+1)^(-gamma/2) * sqrt(ln(4 d^2 (n+1)^p / delta))."""
    d = cfg.d if cfg.d is not None else 1
    return (n + 1) ** (-gamma / 2) * math.sqrt(math.log(4 * d * d * (n + 1) ** cfg.p / cfg.delta))


def nu_array(n, gamma, cfg):
    n = np.asarray(n, dtype=float)
    d = cfg.d if cfg.d is not None else 1
    return (n + 1) ** (-gamma / 2) * np.sqrt(np.log(4 * d * d / cfg.delta) + cfg.p * np.log(n + 1))


def power_sum(s, lo, hi):
    """sum_{m=lo}^{hi} m^(-s) for 0 < s < 1 and integers 1 <= lo <= hi."""
    lo, hi = int(lo), int(hi)
    if hi < lo:
        return 0.0
    if hi - lo <= 2_000_000:
        m = np.arange(lo, hi + 1, dtype=float)
        return float(np.sum(m ** (-s)))

    def head(N):   # sum_{m=1}^N m^-s, Euler-Maclaurin
        if N <= 0:
            return 0.0
        if N <= 1000:
            return float(np.sum(np.arange(1, N + 1, dtype=float) ** (-s)))
        return (float(zeta(s)) + N ** (1 - s) / (1 - s) + 0.5 * N ** (-s)
                - s * N ** (-s - 1) / 12 + s * (s + 1) * (s + 2) * N ** (-s - 3) / 720)
    return head(hi) - head(lo - 1)


def _ceil(x):
    return int(math.ceil(x)) if math.isfinite(x) else math.inf


@lru_cache(maxsize=256)
def anbn_threshold(e, qhat, cap=SCAN_CAP):
    """(K, C) of the a_n / b_n lemma for exponent e and rate qhat.

    K is the smallest K >= 1 with exp(-qhat sum_{k=1}^{n-1} (k+1)^-e) <= n^-e
    for every n >= K; C = max_{1<=i<=K} i^e exp(-qhat sum_{k=1}^{i-1} (k+1)^-e).
    The scan stops once the condition holds and its log-margin is increasing
    from then on (qhat n (n+1)^-e >= e, monotone in n).
    """
    last_fail = 0
    carry = 0.0          # sum_{k=1}^{n-1} (k+1)^-e at the chunk start
    start = 1
    done = False
    while start <= cap and not done:
        n = np.arange(start, min(start + _SCAN_CHUNK, cap + 1), dtype=float)
        # S_n for n in chunk: S_{start} = carry, S_{n+1} = S_n + (n+1)^-e
        incr = (n + 1) ** (-e)
        S = carry + np.concatenate(([0.0], np.cumsum(incr[:-1])))
        margin = qhat * S - e * np.log(n)
        bad = np.nonzero(margin < 0)[0]
        if bad.size:
            last_fail = int(n[bad[-1]])
        nl = n[-1]
        if margin[-1] >= 0 and qhat * nl * (nl + 1) ** (-e) >= e:
            done = True
        carry = S[-1] + incr[-1]
        start = int(nl) + 1
    if not done:
        raise CapExceeded(f"K_anbn(e={e:g}, q={qhat:.4g})", cap)
    K = last_fail + 1
    i = np.arange(1, K + 1, dtype=float)
    S = np.concatenate(([0.0], np.cumsum((i[:-1] + 1) ** (-e))))
    C = float(np.max(np.exp(e * np.log(i) - qhat * S)))
    return K, C


def an_bn_prefix(N, system, schedule):
    """Arrays a[0..N], b[0..N] via a_{n+1} = a_n exp(-2 q1 alpha_n) + alpha_n^2."""
    q1, q2 = system.q1, system.q2
    n = np.arange(N, dtype=float)
    al = (n + 1) ** (-schedule.alpha)
    be = (n + 1) ** (-schedule.beta)
    a = np.zeros(N + 1)
    b = np.zeros(N + 1)
    fa, fb = np.exp(-2 * q1 * al), np.exp(-2 * q2 * be)
    for k in range(N):
        a[k + 1] = a[k] * fa[k] + al[k] * al[k]
        b[k + 1] = b[k] * fb[k] + be[k] * be[k]
    return a, b


def an_bn(n, system, schedule):
    """(a_n, b_n, C_anbn_theta n^-alpha, C_anbn_w n^-beta) for n >= 1."""
    if n < 1:
        raise ValidationError("an_bn needs n >= 1")
    a, b = an_bn_prefix(n, system, schedule)
    ca = anbn_constant(schedule.alpha, system.q1)
    cb = anbn_constant(schedule.beta, system.q2)
    return a[n], b[n], ca * n ** (-schedule.alpha), cb * n ** (-schedule.beta)


def anbn_constant(e, q):
    K, C = anbn_threshold(float(e), float(q))
    return C * math.exp(q) / q


def _product_constant(mat, q, exponent):
    """(C_Dn, K_Dn, mu) for prod ||I - a_k M|| <= C exp(-q sum a_k)."""
    lam_sym = float(np.linalg.eigvalsh(mat + mat.T)[0])
    lam_sq = float(np.linalg.eigvalsh(mat.T @ mat)[-1])
    mu = -lam_sym + lam_sq
    K = _ceil((lam_sq / (lam_sym - 2 * q)) ** (1 / exponent))
    rate = mu + 2 * q
    # max over l1 <= l2 <= K of rate * sum_{l1}^{l2} a_l; every term has rate's sign
    if rate <= 0:
        best = 0.0
    else:
        best = rate * power_sum(exponent, 1, K + 1)
    return max(1.0, math.exp(0.5 * best)) if best < 1400 else math.inf, K, mu


def smalleig_threshold(mat, q, exponent):
    """Smallest n with (n+1)^-exponent <= (lambda_min(M+M^T) - 2q)/lambda_max(M^T M)."""
    lam_sym = float(np.linalg.eigvalsh(mat + mat.T)[0])
    lam_sq = float(np.linalg.eigvalsh(mat.T @ mat)[-1])
    c = (lam_sym - 2 * q) / lam_sq
    if c >= 1:
        return 0
    n = max(0, _ceil(c ** (-1 / exponent) - 1))
    while n > 0 and (n) ** (-exponent) <= c:      # guard against rounding up
        n -= 1
    while (n + 1) ** (-exponent) > c:
        n += 1
    return n


def moderateness_check(u, kind, k0, system, schedule, tol=1e-12):
    """Definitions of alpha-/beta-moderate sequences, checked on a finite stretch.

    `u` is an array with u[i] = u_{k0+i} (or a callable n -> u_n together with
    an explicit range via a (callable, k_end) tuple). Checks
    u_k / u_{k+1} <= (alpha_{k+1}/alpha_k)(beta_k/beta_{k+1}) exp(c_k)
    with c_k = (q1/2) alpha_{k+1} (alpha kind) or (q2/2) beta_{k+2} (beta kind),
    for every k in the stretch, comparing logarithms with slack `tol`.
    """
    if isinstance(u, tuple):
        fn, k_end = u
        u = np.array([fn(k) for k in range(k0, k_end + 1)], dtype=float)
    u = np.asarray(u, dtype=float)
    if u.size < 2:
        return True
    if np.any(~(u > 0)):
        return False
    k = np.arange(k0, k0 + u.size - 1, dtype=float)
    a, b = schedule.alpha, schedule.beta
    # log of the step-size ratio (alpha_{k+1}/alpha_k)(beta_k/beta_{k+1})
    step = (b - a) * (np.log(k + 2) - np.log(k + 1))
    if kind == "alpha":
        extra = (system.q1 / 2) * (k + 2) ** (-a)
    elif kind == "beta":
        extra = (system.q2 / 2) * (k + 3) ** (-b)
    else:
        raise ValidationError("kind must be 'alpha' or 'beta'")
    lhs = np.log(u[:-1]) - np.log(u[1:])
    return bool(np.all(lhs <= step + extra + tol))


# --- the ledger ---------------------------------------------------------------

@dataclass
class Entry:
    name: str
    value: float            # math.inf when only the logarithm is representable
    source: str
    reconstructed: bool = False
    ln_value: float = None  # natural log, set whenever value > 0

    @property
    def log_space(self):
        return not math.isfinite(self.value)

    def to_json(self):
        out = {"name": self.name, "paper_source": self.source,
               "reconstructed": self.reconstructed}
        if self.log_space and self.ln_value is not None and math.isfinite(self.ln_value):
            out["log10_value"] = self.ln_value / LN10
            out["log_space"] = True
        else:
            v = self.value
            out["value"] = v if math.isfinite(v) else None
            out["log_space"] = False
        return out


def _ln(x):
    return math.log(x) if x > 0 else (-math.inf if x == 0 else math.nan)


SOURCES = {
    "q1": "contraction margin of X1: lambda_min(X1 + X1^T)/4",
    "q2": "contraction margin of W2: lambda_min(W2 + W2^T)/4",
    "q_min": "min(q1, q2)",
    "K_anbn_theta": "a_n/b_n lemma: scan threshold K(alpha, q1)",
    "K_anbn_w": "a_n/b_n lemma: scan threshold K(beta, q2)",
    "C_anbn_theta": "a_n/b_n lemma: C(alpha, q1) e^q1 / q1",
    "C_anbn_w": "a_n/b_n lemma: C(beta, q2) e^q2 / q2",
    "K_smalleig_alpha": "small-eigenvalue lemma: ||I - alpha_n X1|| <= 1 beyond this index",
    "K_smalleig_beta": "small-eigenvalue lemma: ||I - beta_n W2|| <= 1 beyond this index",
    "K_Dn1": "product-norm lemma: index after which theta factors contract",
    "K_Dn2": "product-norm lemma: index after which w factors contract",
    "mu1": "product-norm lemma: -lambda_min(X1+X1^T) + lambda_max(X1^T X1)",
    "mu2": "product-norm lemma: -lambda_min(W2+W2^T) + lambda_max(W2^T W2)",
    "C_Dn_theta": "product-norm lemma: prod ||I - alpha_k X1|| <= C e^{-q1 sum alpha_k}",
    "C_Dn_w": "product-norm lemma: prod ||I - beta_k W2|| <= C e^{-q2 sum beta_k}",
    "C_R_theta": "iterate-radius multiplier for theta (fixed at 3)",
    "C_R_w": "iterate-radius multiplier for w",
    "L_theta": "Azuma-Hoeffding increment constant for L^theta (reconstructed)",
    "L_w": "Azuma-Hoeffding increment constant for L^w (reconstructed)",
    "C_T": "T-term lemma: ||X1|| + 2(alpha - beta)(1 + ||X1||)",
    "C_Int": "sum-integral lemma: 2 e^{q2/2} / q2",
    "K_Int_a": "sum-integral lemma: 2^{1/(alpha-beta)}",
    "K_Int_b": "sum-integral lemma: (3 alpha / q2)^{1/(1-beta)} - 2",
    "K_epsdom_a": "epsilon-domination lemma: eps_theta <= eps_w beyond this index",
    "K_epsdom_b": "epsilon-domination lemma: exponential vs polynomial decay threshold",
    "K_alpha(0)": "moderateness-threshold lemma, alpha form at z = 0",
    "K_alpha(beta/2)": "moderateness-threshold lemma, alpha form at z = beta/2",
    "K_beta(beta/2)": "moderateness-threshold lemma, beta form at z = beta/2",
    "K_consteps_alpha": "constant-epsilon lemma: eps_theta <= r_theta/2 beyond this index",
    "K_consteps_beta": "constant-epsilon lemma: eps_w <= r_w/2 beyond this index",
    "C_Ra": "R^w-bound lemma: C_Dn_theta max(||W1 W2^-1||, 1)",
    "C_Rb": "R^w-bound lemma: ||W1 W2^-1|| (1 + 2 e^{q1/2}/q1 C_T C_Dn_theta)",
    "C_Rc(n0)": "R^w-bound lemma: initial-condition constant at n0 (radii as distances)",
    "C_Rtheta_theta": "R^theta-bound lemma: theta-radius coefficient",
    "C_Rtheta_w": "R^theta-bound lemma: w-radius coefficient",
    "K_largetheta": "large-iterate lemma threshold",
    "A1(n0)": "w-ladder constant A1 at n0",
    "A2": "w-ladder ratio A2",
    "A3": "w-ladder constant A3 = C_R_w r_w",
    "ell_star": "ladder length ceil(beta / (2(alpha - beta)))",
    "A4(n0)": "w-rate constant A4 at n0",
    "A5(n0)": "theta-rate constant A5 at n0",
    "A4C1": "simplified-constant lemma: A4C1",
    "A5C1": "simplified-constant lemma: A5C1",
    "A4_prime": "simplified-constant lemma: A4' = A4C1 + 1",
    "A5_prime": "simplified-constant lemma: A5' = 4 + 2 A5C1 + 2 C_Rb A4C1",
    "A1_double_prime": "simplified-constant lemma: C_Dn_w ||Gamma2|| C_Int",
    "A4C0": "simplified-constant lemma: A4C0",
    "A5C0": "simplified-constant lemma: sqrt(4 d^3 L_theta C_anbn_theta)",
    "K_A4A5_a": "simplified-constant lemma: threshold a",
    "K_A4A5_b": "simplified-constant lemma: threshold b",
    "K_proj_w": "projected-iterate theorem: [(A4'/r_w)^{2/beta}]^{(A4'/r_w)^{2/beta}}",
    "K_proj_theta": "projected-iterate theorem: [(A5'/r_theta)^{2/alpha}]^{(A5'/r_theta)^{2/alpha}}",
    "N_thm3": "n0 lower-bound table: bad-event probability bound",
    "N_thm4": "n0 lower-bound table: w-rate bound",
    "N_thm2": "n0 lower-bound table: unprojected main result, max(N_thm3, N_thm4)",
    "N_prime": "n0 lower-bound table: N' for the projected iterates",
    "N_final": "n0 lower-bound table: first k^k - 1 at or beyond N'",
    "C_final_theta": "projected-iterate theorem: A5' / nu(N_final, alpha)",
    "C_final_w": "projected-iterate theorem: A4' / nu(N_final, beta)",
}

REQUIRED = tuple(SOURCES)
RECONSTRUCTED = {"L_theta", "L_w", "C_Dn_w"}


class ConstantsLedger:
    """Named constants plus the evaluable sequences they define."""

    def __init__(self, system, cfg):
        self.system = system
        self.cfg = cfg
        self.entries = {}

    # map-like access
    def __getitem__(self, name):
        return self.entries[name].value

    def __contains__(self, name):
        return name in self.entries

    def ln(self, name):
        return self.entries[name].ln_value

    def _put(self, name, value, ln_value=None):
        value = float(value)
        if ln_value is None and value > 0 and math.isfinite(value):
            ln_value = math.log(value)
        self.entries[name] = Entry(name, value, SOURCES[name], name in RECONSTRUCTED, ln_value)
        return value

    # sequences ----------------------------------------------------------------
    def nu(self, n, gamma):
        return nu(n, gamma, self.cfg)

    def eps_theta(self, n):
        return self._eps_scale_theta * nu_array(n, self.cfg.schedule.alpha, self.cfg)

    def eps_w(self, n):
        return self._eps_scale_w * nu_array(n, self.cfg.schedule.beta, self.cfg)

    def K_alpha(self, z):
        return _k_alpha(z, self.system.q1, self.cfg.schedule)

    def K_beta(self, z):
        return _k_beta(z, self.system.q2, self.cfg.schedule)

    def C_Rc(self, n0, dist_theta=None, dist_w=None):
        c = self.cfg
        dt = c.r_theta if dist_theta is None else dist_theta
        dw = c.r_w if dist_w is None else dist_w
        a, b = stepsizes(c.schedule, n0)
        return b * dt + self["C_Ra"] * math.exp(self.system.q1) * (2 / self.system.q_min) * (dt + a / b * dw)

    def A1(self, n0, dist_theta=None, dist_w=None):
        dw = self.cfg.r_w if dist_w is None else dist_w
        cdw, g2 = self["C_Dn_w"], self._norm_gamma2
        num = cdw * g2 * self.C_Rc(n0, dist_theta, dist_w) + cdw * dw
        return math.e + math.e * num / float(self.eps_w(n0)) + math.e ** 2 * cdw * g2 * self["C_Int"]

    def A4(self, n0, dist_theta=None, dist_w=None):
        ls = self["ell_star"]
        geo = sum(self["A2"] ** i for i in range(int(ls)))
        return (self.A1(n0, dist_theta, dist_w) * geo * self._sqrt_dlw
                + self["A3"] * self["A2"] ** ls)

    def A5(self, n0, dist_theta=None, dist_w=None):
        c = self.cfg
        inner = self["C_Ra"] * (self["C_R_theta"] * c.r_theta + self["C_R_w"] * c.r_w)
        return (2 * (inner / float(self.eps_theta(n0 - 1)) + 1) * math.sqrt(4) * self._sqrt_dlt
                + 2 * self["C_Rb"] * self.A4(n0, dist_theta, dist_w))

    def u_ladder(self, n, ell, n0, dist_theta=None, dist_w=None):
        """u_n(ell) = [A1(n0) sum_{i<ell} A2^i] eps_w(n) + A3 A2^ell (alpha_n/beta_n)^ell."""
        ls = self["ell_star"]
        if not 0 <= ell <= ls:
            raise ValidationError(f"ell must lie in [0, {ls}]")
        geo = sum(self["A2"] ** i for i in range(int(ell)))
        s = self.cfg.schedule
        n = np.asarray(n, dtype=float)
        ratio = (n + 1) ** (-(s.alpha - s.beta))
        first = self.A1(n0, dist_theta, dist_w) * geo * self.eps_w(n) if ell else 0.0 * n
        return first + self["A3"] * self["A2"] ** ell * ratio ** ell

    def to_json(self):
        rows = [self.entries[k].to_json() for k in self.entries]
        flat = {r["name"]: r.get("value", r.get("log10_value")) for r in rows}
        return {"config": self.cfg.to_dict(), "constants": rows, "values": flat}

    def dumps(self):
        return json.dumps(self.to_json(), indent=1, allow_nan=False)


def _k_alpha(z, q1, s):
    g = s.alpha - s.beta + z
    return max(_ceil((q1 / (2 * g)) ** (1 / s.alpha)), _ceil((4 * g / q1) ** (1 / (1 - s.alpha))))


def _k_beta(z, q2, s):
    g = s.alpha - s.beta + z
    return max(_ceil((q2 / g) ** (1 / s.beta)), _ceil((4 * g / q2) ** (1 / (1 - s.beta))))


def _consteps_threshold(X, e, cfg):
    """[X]^{1/e} [2 ln(2 X (4d^2/delta)^{e/p})]^{1/e}; 0 when the log is not positive."""
    d = cfg.d
    arg = 2 * X * (4 * d * d / cfg.delta) ** (e / cfg.p)
    lg = math.log(arg) if arg > 0 else -math.inf
    if lg <= 0:
        return 0.0
    return X ** (1 / e) * (2 * lg) ** (1 / e)


def build_ledger(system: DerivedSystem, cfg: LedgerConfig) -> ConstantsLedger:
    s = cfg.schedule
    al, be = s.alpha, s.beta
    if not al > be:
        raise DegenerateTimescales(al, be)
    q1, q2, qmin = q_values(system)
    cfg = cfg.resolved(system)
    spec = system.spec
    d = cfg.d
    L = ConstantsLedger(system, cfg)
    put = L._put
    put("q1", q1)
    put("q2", q2)
    put("q_min", qmin)

    Ka, Ca = anbn_threshold(al, q1)
    Kb, Cb = anbn_threshold(be, q2)
    put("K_anbn_theta", Ka)
    put("K_anbn_w", Kb)
    c_th = put("C_anbn_theta", Ca * math.exp(q1) / q1)
    c_w = put("C_anbn_w", Cb * math.exp(q2) / q2)

    x1, w2 = system.x1, spec.w2
    put("K_smalleig_alpha", smalleig_threshold(x1, q1, al))
    put("K_smalleig_beta", smalleig_threshold(w2, q2, be))
    cdt, k1, mu1 = _product_constant(x1, q1, al)
    cdw, k2, mu2 = _product_constant(w2, q2, be)
    put("K_Dn1", k1)
    put("K_Dn2", k2)
    put("mu1", mu1)
    put("mu2", mu2)
    put("C_Dn_theta", cdt)
    put("C_Dn_w", cdw)

    n_w1, n_w2inv = spectral_norm(spec.w1), spectral_norm(system.w2_inv)
    n_g2, n_x1 = spectral_norm(spec.gamma2), spectral_norm(x1)
    n_cpl = spectral_norm(system.coupling)
    L._norm_gamma2 = n_g2
    rt, rw = cfg.r_theta, cfg.r_w
    crt = put("C_R_theta", 3.0)
    crw = put("C_R_w", 1.5 + (math.exp(q2) / q2) * n_g2 * cdw * crt * rt / rw)

    radius_term = (1 + crt * rt + crw * rw + np.linalg.norm(system.theta_star)
                   + np.linalg.norm(system.w_star))
    lt = put("L_theta", 2 * (cdt * radius_term * (cfg.m2 + cfg.m1 * n_w1 * n_w2inv)) ** 2)
    lw = put("L_w", 2 * (cdw * radius_term * cfg.m2) ** 2)
    L._sqrt_dlt = math.sqrt(d ** 3 * lt * c_th)
    L._sqrt_dlw = math.sqrt(d ** 3 * lw * c_w)
    L._eps_scale_theta = L._sqrt_dlt
    L._eps_scale_w = L._sqrt_dlw

    ct = put("C_T", n_x1 + 2 * (al - be) * (1 + n_x1))
    cint = put("C_Int", 2 * math.exp(q2 / 2) / q2)
    put("K_Int_a", 2 ** (1 / (al - be)))
    put("K_Int_b", (3 * al / q2) ** (1 / (1 - be)) - 2)
    put("K_epsdom_a", ((lt * c_th) / (lw * c_w)) ** (1 / (al - be)))
    put("K_epsdom_b", (1 + al / (2 * qmin)) ** (1 / (1 - al)))
    put("K_alpha(0)", L.K_alpha(0.0))
    put("K_alpha(beta/2)", L.K_alpha(be / 2))
    put("K_beta(beta/2)", L.K_beta(be / 2))
    p = cfg.p
    put("K_consteps_alpha", _consteps_threshold(4 * d ** 3 * lt * c_th * p / (al * rt ** 2), al, cfg))
    put("K_consteps_beta", _consteps_threshold(4 * d ** 3 * lw * c_w * p / (be * rw ** 2), be, cfg))

    cra = put("C_Ra", cdt * max(n_cpl, 1.0))
    crb = put("C_Rb", n_cpl * (1 + 2 * math.exp(q1 / 2) / q1 * ct * cdt))
    c_rtt = put("C_Rtheta_theta", n_w1 * n_w2inv * (math.exp(q2) / q2) * crt * n_g2 * cdw)
    c_rtw = put("C_Rtheta_w", n_w1 * n_w2inv * (2.5 + 2 * math.exp(q1 / 2) / q1 * ct * cdt * crw))
    put("K_largetheta", ((2 / 3) * c_rtt + (2 / 3) * c_rtw * rw / rt) ** (1 / (al - be)))

    a2 = put("A2", math.exp(q1 + 2 * (al - be)) * cdw * n_g2 * crb * 2 * math.exp(q2 / 2) / q2)
    a3 = put("A3", crw * rw)
    ls = put("ell_star", ell_star(s))
    ls = int(ls)
    geo = sum(a2 ** i for i in range(ls))

    a4c1 = put("A4C1", d ** 3 * lw * c_w * (cdw * n_g2 * (rt + cra * math.exp(q1) * (2 / qmin) * (rt + rw))
                                            + cdw * rw) * math.e * geo)
    a5c1 = put("A5C1", cra * (crt * rt + crw * rw))
    a4p = put("A4_prime", a4c1 + 1)
    a5p = put("A5_prime", 4 + 2 * a5c1 + 2 * crb * a4c1)
    a1pp = put("A1_double_prime", cdw * n_g2 * cint)
    a4c0 = put("A4C0", (math.e + math.e ** 2 * a1pp) * geo * L._sqrt_dlw + a3 * a2 ** ls)
    a5c0 = put("A5C0", math.sqrt(4) * L._sqrt_dlt)
    put("K_A4A5_a", _consteps_threshold(p / (be * a4c0 ** 2), be, cfg))
    # a zero coefficient makes its inequality hold trivially, so it drops out of the min
    live = [v for v in (crb * a4c0, a5c0) if v > 0]
    put("K_A4A5_b", _consteps_threshold(p / (al * min(live) ** 2), al, cfg) if live else 0.0)

    for name, ap, r, e in (("K_proj_w", a4p, rw, be), ("K_proj_theta", a5p, rt, al)):
        # K = x^x with x = (A'/R)^(2/e); ln K = x ln x, infinite past double range
        ln_x = (2 / e) * math.log(ap / r) if ap > 0 else -math.inf
        if ln_x > 700:
            ln_k = math.inf
        else:
            x = math.exp(ln_x)
            ln_k = x * ln_x if x > 0 else 0.0
        put(name, math.exp(ln_k) if ln_k < 700 else math.inf, ln_value=ln_k)

    n3 = max(L["K_smalleig_alpha"], L["K_smalleig_beta"], L["K_alpha(0)"],
             L["K_consteps_beta"], L["K_largetheta"], (p - 1) ** (-1 / (p - 1)))
    b2 = (4 * d * d / cfg.delta) ** (1 / p)
    n4 = max(L["K_alpha(beta/2)"], L["K_beta(beta/2)"], math.exp(1 / be) / b2,
             L["K_Int_a"], L["K_Int_b"], L["K_epsdom_a"], L["K_epsdom_b"]) + 1
    put("N_thm3", n3)
    put("N_thm4", n4)
    n2 = put("N_thm2", max(n3, n4))

    # n0 = N_thm2 for the n0-dependent constants (radii as the starting distances)
    n0 = max(1, _ceil(n2))
    L.n0 = n0
    put("C_Rc(n0)", L.C_Rc(n0))
    put("A1(n0)", L.A1(n0))
    put("A4(n0)", L.A4(n0))
    put("A5(n0)", L.A5(n0))

    candidates = [_ln(n2), L.ln("K_A4A5_a") if L["K_A4A5_a"] > 0 else -math.inf,
                  L.ln("K_A4A5_b") if L["K_A4A5_b"] > 0 else -math.inf,
                  L.ln("K_proj_w"), L.ln("K_proj_theta"), 1 / be, (2 / be) * math.log(2 / be)]
    ln_np = max(c for c in candidates if not math.isnan(c))
    put("N_prime", math.exp(ln_np) if ln_np < 700 else math.inf, ln_value=ln_np)

    # N_final = min{k^k - 1 >= N'}, i.e. smallest k with k ln k >= ln(N' + 1)
    ln_np1 = ln_np if ln_np > 40 else math.log(math.exp(ln_np) + 1)
    k = 1
    if not math.isfinite(ln_np1):
        k = math.inf
    elif ln_np1 > 0:
        k = 2
        while k * math.log(k) < ln_np1:
            k = k * 2
        lo, hi = k // 2, k
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if mid * math.log(mid) >= ln_np1:
                hi = mid
            else:
                lo = mid
        k = hi if hi >= 2 else 1
    if k <= len(PROJECTION_INDICES):
        nf = PROJECTION_INDICES[k - 1]
        while nf < math.exp(min(ln_np, 700)) and k < len(PROJECTION_INDICES):
            k += 1
            nf = PROJECTION_INDICES[k - 1]
        put("N_final", float(nf))
        ln_nf1 = math.log(nf + 1)
    else:
        ln_nf1 = k * math.log(k)
        put("N_final", math.inf, ln_value=ln_nf1)
    L.k_final = k

    def ln_nu_at(gamma):
        inner = math.log(4 * d * d / cfg.delta) + p * ln_nf1
        return -0.5 * gamma * ln_nf1 + 0.5 * math.log(inner)
    for name, ap, gam in (("C_final_theta", a5p, al), ("C_final_w", a4p, be)):
        # nu -> 0 as N_final -> inf, so an unrepresentable N_final gives C_final = inf
        lv = math.log(ap) - ln_nu_at(gam) if math.isfinite(ln_nf1) else math.inf
        put(name, math.exp(lv) if lv < 700 else math.inf, ln_value=lv)

    missing = set(REQUIRED) - set(L.entries)
    assert not missing, missing
    return L


def default_config(system, schedule, **kw):
    return LedgerConfig(schedule=schedule, **kw).resolved(system)


# --- pointwise verification -------------------------------------------------------

@dataclass
class BoundCheck:
    name: str
    threshold: float
    checked: int          # number of indices actually evaluated
    ok: bool
    worst: float          # max of lhs - rhs (log scale where noted); <= 0 means ok


def _start(th):
    return max(1, _ceil(th)) if math.isfinite(th) else math.inf


def _norms_i_minus(mat, steps):
    d = mat.shape[0]
    stack = np.eye(d)[None, :, :] - steps[:, None, None] * mat[None, :, :]
    return np.linalg.norm(stack, 2, axis=(1, 2))


def _max_window_sum(g):
    """max over i <= n of g[i] + ... + g[n]."""
    G = np.concatenate(([0.0], np.cumsum(g)))
    prev_min = np.minimum.accumulate(G[:-1])
    return float(np.max(G[1:] - prev_min))


def verify_bounds(L: ConstantsLedger, n_max=10 ** 5, n0_list=None, tol=1e-9):
    """Evaluate every pointwise lemma bound of the ledger on n <= n_max.

    Returns a list of BoundCheck; a check whose threshold exceeds n_max has
    checked == 0 and ok == True (nothing to evaluate).
    """
    sy, cfg = L.system, L.cfg
    s = cfg.schedule
    al, be = s.alpha, s.beta
    N = int(n_max)
    n = np.arange(N + 1, dtype=float)
    a_n, b_n = (n + 1) ** (-al), (n + 1) ** (-be)
    out = []

    def add(name, th, lhs, rhs, idx_from, log=False):
        k0 = _start(th) if idx_from is None else idx_from
        if k0 > N:
            out.append(BoundCheck(name, th, 0, True, -math.inf))
            return
        l, r = lhs[k0:], rhs[k0:]
        diff = (l - r) if log else (l - r) / np.maximum(np.abs(r), 1e-300)
        worst = float(np.max(diff))
        out.append(BoundCheck(name, th, int(l.size), worst <= tol, worst))

    # a_n, b_n: bounded by C n^-e for every n >= 1
    a, b = an_bn_prefix(N, sy, s)
    with np.errstate(divide="ignore"):
        add("anbn_theta", 1, a, L["C_anbn_theta"] * n ** (-al), None)
        add("anbn_w", 1, b, L["C_anbn_w"] * n ** (-be), None)

    # products of ||I - alpha_k X1|| against C exp(-q sum alpha_k), all windows i..n
    for name, mat, q, steps, c in (("prod_theta", sy.x1, sy.q1, a_n, L["C_Dn_theta"]),
                                   ("prod_w", sy.spec.w2, sy.q2, b_n, L["C_Dn_w"])):
        nm = _norms_i_minus(mat, steps)
        worst = _max_window_sum(np.log(nm) + q * steps) - math.log(c)
        out.append(BoundCheck(name, 0, N + 1, worst <= tol, worst))
        key = "K_smalleig_alpha" if name == "prod_theta" else "K_smalleig_beta"
        add("smalleig_" + name[5:], L[key], nm, np.ones_like(nm), None)

    et, ew = L.eps_theta(n), L.eps_w(n)
    add("epsdom_a", L["K_epsdom_a"], et, ew, None)
    add("consteps_theta", L["K_consteps_alpha"], et, np.full_like(et, cfg.r_theta / 2), None)
    add("consteps_w", L["K_consteps_beta"], ew, np.full_like(ew, cfg.r_w / 2), None)

    # exp(-q2 sum_{j=n0}^{n-1} beta_j) <= eps_theta(n)/eps_theta(n0) for n >= n0 >= K
    k = _start(L["K_epsdom_b"])
    if n0_list is None:
        n0_list = [k, 2 * k, 10 * k, 100 * k] if math.isfinite(k) else []
    cum = np.concatenate(([0.0], np.cumsum(b_n)))
    worst, cnt = -math.inf, 0
    for n0 in (x for x in n0_list if x <= N):
        idx = np.arange(n0, N + 1)
        lhs = -sy.q2 * (cum[idx] - cum[n0])
        rhs = np.log(et[idx]) - math.log(et[n0])
        worst = max(worst, float(np.max(lhs - rhs)))
        cnt += idx.size
    out.append(BoundCheck("epsdom_b", L["K_epsdom_b"], cnt, worst <= tol, worst))

    # u_n(ell): monotone decreasing and alpha-/beta-moderate beyond their thresholds
    n0 = L.n0 if n0_list is None else max(1, min(n0_list))
    n0 = min(n0, N) if math.isfinite(n0) else 1
    b2 = (4 * cfg.d ** 2 / cfg.delta) ** (1 / cfg.p)
    mono_th = math.exp(1 / be) / b2
    for ell in range(int(L["ell_star"]) + 1):
        u = L.u_ladder(n, ell, n0)
        k0 = _start(mono_th)
        if k0 < N:
            worst = float(np.max(np.diff(u[k0:]) / u[k0 + 1:]))
            out.append(BoundCheck(f"u_monotone[{ell}]", mono_th, N - k0, worst <= tol, worst))
        for kind, th in (("alpha", L["K_alpha(beta/2)"]), ("beta", L["K_beta(beta/2)"])):
            k0 = _start(th)
            if k0 >= N:
                out.append(BoundCheck(f"u_{kind}_moderate[{ell}]", th, 0, True, -math.inf))
                continue
            ok = moderateness_check(u[k0:], kind, k0, sy, s)
            out.append(BoundCheck(f"u_{kind}_moderate[{ell}]", th, N - k0, ok, 0.0 if ok else 1.0))
    return out
