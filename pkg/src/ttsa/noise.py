"""Martingale-difference noise models.

A noise model is a deterministic function of (seed, n, theta_n, w_n). All
randomness comes from uniform variates produced by a Philox4x64 counter
generator keyed by (seed, stream). Step n consumes a fixed block of
4*ceil(k/4) doubles (k = draws_per_step) starting at counter block
n*ceil(k/4), so the variates of any step can be generated directly without
replaying the earlier ones. Doubles are numpy's `Generator.random`, one
64-bit Philox output each.
"""
import math

import numpy as np

from .core import NoiseRecord
from .errors import ValidationError

# Philox key = seed + stream * 2**64; keeps noise separate from MDP generation
NOISE_STREAM = 1
MDP_STREAM = 2

KIND_ZERO = 0
KIND_SPHERE = 1
KIND_GTD = 2

VARIANT_CODES = {"gtd0": 0, "gtd2": 1, "tdc": 2}


def philox_key(seed, stream):
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValidationError(f"seed must be in [0, 2^64), got {seed}")
    return seed + (int(stream) << 64)


def uniform_block(seed, n_start, count, k, stream=NOISE_STREAM):
    """Variates for steps n_start .. n_start+count-1, shape (count, k)."""
    if k == 0:
        return np.zeros((count, 0))
    blocks = (k + 3) // 4
    bg = np.random.Philox(key=philox_key(seed, stream))
    if n_start:
        bg.advance(int(n_start) * blocks)
    u = np.random.Generator(bg).random((count, 4 * blocks))
    return np.ascontiguousarray(u[:, :k])


def box_muller(u):
    """Pairs of uniforms in [0,1) to standard normals (same count)."""
    z = np.empty(len(u))
    for i in range(0, len(u) - 1, 2):
        rad = math.sqrt(-2.0 * math.log(1.0 - u[i]))
        ang = 2.0 * math.pi * u[i + 1]
        z[i] = rad * math.cos(ang)
        z[i + 1] = rad * math.sin(ang)
    return z


class NoiseModel:
    kind = None           # kernel code, None means python engine only
    draws_per_step = 0
    m1 = None             # domination parameters, if known
    m2 = None

    def __init__(self, dim):
        self.dim = int(dim)

    def variates(self, seed, n_start, count):
        return uniform_block(seed, n_start, count, self.draws_per_step)

    def from_variates(self, u, theta, w) -> NoiseRecord:
        raise NotImplementedError

    def __call__(self, seed, n, theta, w) -> NoiseRecord:
        return self.from_variates(self.variates(seed, n, 1)[0], theta, w)

    def kernel_args(self):
        d = self.dim
        return dict(c=0.0, phi=np.zeros((1, d)), rewards=np.zeros(1),
                    cum_pi=np.ones(1), cum_p=np.ones((1, 1)), gamma=0.0, variant=0)

    def describe(self):
        return {"model": type(self).__name__}


class ZeroNoise(NoiseModel):
    kind = KIND_ZERO
    m1 = 0.0
    m2 = 0.0

    def from_variates(self, u, theta, w):
        return NoiseRecord.zero(self.dim)

    def describe(self):
        return {"model": "zero"}


class SphereNoise(NoiseModel):
    """Independent uniform directions scaled by c * (1 + |theta| + |w|).

    Each step uses 2d uniforms turned into 2d normals by Box-Muller; the first
    d give the theta direction, the rest the w direction.
    """
    kind = KIND_SPHERE

    def __init__(self, dim, c):
        super().__init__(dim)
        if not c >= 0:
            raise ValidationError("sphere noise scale c must be non-negative")
        self.c = float(c)
        self.m1 = self.m2 = self.c
        self.draws_per_step = 2 * self.dim

    def from_variates(self, u, theta, w):
        d = self.dim
        z = box_muller(u)
        scale = self.c * (1.0 + math.sqrt(np.dot(theta, theta)) + math.sqrt(np.dot(w, w)))
        out = []
        for part in (z[:d], z[d:2 * d]):
            nz = math.sqrt(np.dot(part, part))
            out.append(part * (scale / nz) if nz > 0 else np.zeros(d))
        return NoiseRecord(out[0], out[1])

    def kernel_args(self):
        args = super().kernel_args()
        args["c"] = self.c
        return args

    def describe(self):
        return {"model": "sphere", "c": self.c}


def cumulative(p):
    """Row-wise cumulative sums with the last column pinned to exactly 1."""
    c = np.cumsum(np.asarray(p, dtype=float), axis=-1)
    c[..., -1] = 1.0
    return c


class GtdSamplingNoise(NoiseModel):
    """iid transition sampling s ~ pi, s' ~ P(s, .) for a GTD-family spec.

    The noise is the sampled update term minus its expectation h_i, with h_i
    taken from the matrix spec.
    """
    kind = KIND_GTD
    draws_per_step = 2

    def __init__(self, variant, spec, phi, rewards, gamma, pi, transitions, m1=None, m2=None):
        phi = np.asarray(phi, dtype=float)
        super().__init__(phi.shape[1])
        if variant not in VARIANT_CODES:
            raise ValidationError(f"unknown GTD variant {variant!r}")
        self.variant = variant
        self.spec = spec
        self.phi = np.ascontiguousarray(phi)
        self.rewards = np.ascontiguousarray(rewards, dtype=float)
        self.gamma = float(gamma)
        self.cum_pi = cumulative(pi)
        self.cum_p = np.ascontiguousarray(cumulative(transitions))
        self.m1, self.m2 = m1, m2

    def draw_states(self, u):
        s = int(np.searchsorted(self.cum_pi, u[0], side="right"))
        s2 = int(np.searchsorted(self.cum_p[s], u[1], side="right"))
        return s, s2

    def sampled_terms(self, s, s2, theta, w):
        """Raw sampled updates for theta and w at the transition (s, s2)."""
        phi, phi2 = self.phi[s], self.phi[s2]
        r, g = self.rewards[s], self.gamma
        td_part = r * phi + phi * np.dot(g * phi2 - phi, theta)
        fw = np.dot(phi, w)
        if self.variant == "gtd0":
            t1 = (phi - g * phi2) * fw
            t2 = td_part - w
        elif self.variant == "gtd2":
            t1 = (phi - g * phi2) * fw
            t2 = td_part - phi * fw
        else:
            t1 = td_part - g * phi2 * fw
            t2 = td_part - phi * fw
        return t1, t2

    def from_variates(self, u, theta, w):
        s, s2 = self.draw_states(u)
        t1, t2 = self.sampled_terms(s, s2, theta, w)
        return NoiseRecord(t1 - self.spec.h1(theta, w), t2 - self.spec.h2(theta, w))

    def kernel_args(self):
        return dict(c=0.0, phi=self.phi, rewards=self.rewards, cum_pi=self.cum_pi,
                    cum_p=self.cum_p, gamma=self.gamma, variant=VARIANT_CODES[self.variant])

    def describe(self):
        return {"model": "gtd", "variant": self.variant}
