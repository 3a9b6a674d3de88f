"""Finite-MDP policy evaluation with linear features: GTD(0), GTD2, TDC.

Transitions are sampled iid (s ~ pi, s' ~ P(s, .)) each step, and rewards
are a deterministic function of the current state.
"""
from dataclasses import dataclass, field
import json

import numpy as np

from .core import MatrixSpec, check_assumptions, spectral_norm
from .errors import (AssumptionViolated, GenerationFailed, NotErgodic, RankDeficient,
                     ValidationError)
from .noise import MDP_STREAM, GtdSamplingNoise, philox_key

VARIANTS = ("gtd0", "gtd2", "tdc")


@dataclass(frozen=True, eq=False)
class MdpSpec:
    transitions: np.ndarray   # S x S, row-stochastic
    rewards: np.ndarray       # S
    gamma: float
    phi: np.ndarray           # S x d

    def __post_init__(self):
        P = np.array(self.transitions, dtype=float)
        r = np.array(self.rewards, dtype=float).reshape(-1)
        phi = np.array(self.phi, dtype=float)
        if phi.ndim == 1:
            phi = phi.reshape(-1, 1)
        S = r.shape[0]
        if P.shape != (S, S):
            raise ValidationError(f"transitions must be {S}x{S}, got {P.shape}")
        if phi.shape[0] != S:
            raise ValidationError(f"features must have {S} rows, got {phi.shape[0]}")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1)) > 1e-12:
            raise ValidationError("transitions must be non-negative with rows summing to 1")
        if np.any(np.abs(r) > 1):
            raise ValidationError("rewards must satisfy |r(s)| <= 1")
        if np.any(np.linalg.norm(phi, axis=1) > 1 + 1e-12):
            raise ValidationError("feature rows must have norm <= 1")
        if not 0 <= self.gamma < 1:
            raise ValidationError("discount gamma must lie in [0, 1)")
        rank = np.linalg.matrix_rank(phi)
        if rank < phi.shape[1]:
            raise RankDeficient(rank, phi.shape[1])
        for name, val in (("transitions", P), ("rewards", r), ("phi", phi)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def num_states(self):
        return self.rewards.shape[0]

    @property
    def dim(self):
        return self.phi.shape[1]

    def to_dict(self):
        return {"transitions": self.transitions.tolist(), "rewards": self.rewards.tolist(),
                "gamma": self.gamma, "phi": self.phi.tolist()}

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(doc["transitions"], doc["rewards"], doc["gamma"], doc["phi"])
        except KeyError as e:
            raise ValidationError(f"MDP document is missing field {e.args[0]}") from None

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def __eq__(self, other):
        if not isinstance(other, MdpSpec):
            return NotImplemented
        return (self.gamma == other.gamma
                and np.array_equal(self.transitions, other.transitions)
                and np.array_equal(self.rewards, other.rewards)
                and np.array_equal(self.phi, other.phi))

    __hash__ = None


def _is_primitive(P):
    """Some power of P is strictly positive (Wielandt bound (S-1)^2 + 1)."""
    S = P.shape[0]
    pattern = (P > 0).astype(np.int64)
    reach = pattern.copy()
    for _ in range((S - 1) ** 2 + 1):
        if np.all(reach > 0):
            return True
        reach = np.minimum(reach @ pattern, 1)
    return bool(np.all(reach > 0))


def stationary_distribution(P):
    P = np.asarray(P, dtype=float)
    S = P.shape[0]
    if not _is_primitive(P):
        raise NotErgodic()
    # pi^T (P - I) = 0 with sum(pi) = 1: replace one equation by normalization
    M = P.T - np.eye(S)
    M[-1, :] = 1.0
    rhs = np.zeros(S)
    rhs[-1] = 1.0
    pi = np.linalg.solve(M, rhs)
    for _ in range(3):
        pi = pi @ P
        pi = pi / pi.sum()
    if np.any(pi <= 0):
        raise NotErgodic("stationary distribution has non-positive entries")
    return pi


def expected_matrices(mdp: MdpSpec, pi=None):
    """A = E[phi (phi - gamma phi')^T], C = E[phi phi^T], b = E[r phi] under pi."""
    if pi is None:
        pi = stationary_distribution(mdp.transitions)
    phi = mdp.phi
    next_phi = mdp.transitions @ phi       # E[phi(s') | s]
    D = phi.T * pi
    C = D @ phi
    C = (C + C.T) / 2
    A = C - mdp.gamma * (D @ next_phi)
    b = D @ mdp.rewards
    return A, C, b


def td_error(mdp, theta, s, s_next):
    """TD error r(s) + gamma phi(s')^T theta - phi(s)^T theta (diagnostic)."""
    return mdp.rewards[s] + mdp.gamma * mdp.phi[s_next] @ theta - mdp.phi[s] @ theta


def gtd_matrix_spec(variant, A, C, b):
    d = A.shape[0]
    Z, I, z = np.zeros((d, d)), np.eye(d), np.zeros(d)
    if variant == "gtd0":
        return MatrixSpec(Z, -A.T, z, A, I, b)
    if variant == "gtd2":
        return MatrixSpec(Z, -A.T, z, A, C, b)
    if variant == "tdc":
        return MatrixSpec(A, C - A.T, b, A, C, b)
    raise ValidationError(f"unknown GTD variant {variant!r}; expected one of {VARIANTS}")


def noise_parameters(variant, A, C, b, gamma):
    nA, nC, nb = spectral_norm(A), spectral_norm(C), float(np.linalg.norm(b))
    if variant == "gtd0":
        return 1 + gamma + nA, 1 + max(nb, gamma + nA)
    if variant == "gtd2":
        return 1 + gamma + nA, 1 + max(nb, gamma + nA, nC)
    m = 2 + gamma + nA + nC
    return m, m


@dataclass(frozen=True, eq=False)
class GtdInstance:
    variant: str
    A: np.ndarray
    C: np.ndarray
    b: np.ndarray
    spec: MatrixSpec
    m1: float
    m2: float
    pi: np.ndarray
    mdp: MdpSpec = field(repr=False)

    def noise_model(self):
        return GtdSamplingNoise(self.variant, self.spec, self.mdp.phi, self.mdp.rewards,
                                self.mdp.gamma, self.pi, self.mdp.transitions,
                                m1=self.m1, m2=self.m2)


def build_gtd(variant, mdp: MdpSpec) -> GtdInstance:
    variant = variant.lower()
    pi = stationary_distribution(mdp.transitions)
    A, C, b = expected_matrices(mdp, pi)
    spec = gtd_matrix_spec(variant, A, C, b)
    rep = check_assumptions(spec)
    for name, val in rep.failing():
        raise AssumptionViolated(f"{name} of {variant}", val)
    m1, m2 = noise_parameters(variant, A, C, b, mdp.gamma)
    return GtdInstance(variant, A, C, b, spec, m1, m2, pi, mdp)


def sample_noise(instance: GtdInstance, theta, w, seed, n):
    """Noise pair at step n of seed `seed`, evaluated at (theta, w)."""
    return instance.noise_model()(seed, n, np.asarray(theta, float), np.asarray(w, float))


def _draw_mdp(rng, S, d, gamma, floor):
    P = floor + (1 - S * floor) * rng.dirichlet(np.ones(S), size=S)
    P = P / P.sum(axis=1, keepdims=True)
    r = rng.uniform(-1, 1, size=S)
    phi = rng.standard_normal((S, d))
    phi /= np.linalg.norm(phi, axis=1, keepdims=True)
    return MdpSpec(P, r, gamma, phi)


def random_mdp(S, d, seed, ensure_assumptions=True, gamma=0.9, max_tries=100) -> MdpSpec:
    """Seeded random ergodic MDP with unit-bounded rewards and features.

    Rows of P are Dirichlet(1) draws mixed with a floor probability of 0.01
    per entry (0.5/S when S >= 50, so the floor never exceeds half the mass).
    Feature rows are iid Gaussian directions of unit norm.
    """
    if not (S >= d >= 1):
        raise ValidationError("random_mdp needs S >= d >= 1")
    floor = 0.01 if S < 50 else 0.5 / S
    rng = np.random.Generator(np.random.Philox(key=philox_key(seed, MDP_STREAM)))
    for _ in range(max_tries):
        try:
            mdp = _draw_mdp(rng, S, d, gamma, floor)
        except RankDeficient:
            continue
        if not ensure_assumptions:
            return mdp
        A, C, b = expected_matrices(mdp)
        if np.linalg.eigvalsh(A + A.T)[0] <= 0 or np.linalg.eigvalsh(C)[0] <= 0:
            continue
        if all(check_assumptions(gtd_matrix_spec(v, A, C, b)).passed for v in VARIANTS):
            return mdp
    raise GenerationFailed(max_tries)
