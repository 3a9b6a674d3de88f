"""Experiment configuration: a single JSON document.

Schema (all keys optional except where a mode needs them):

    {
      "mode": "run" | "constants" | "rates" | "lower-bound" | "decompose" | "mdp-gen",
      "system": exactly one of
          {"inline": {"gamma1": [[..]], "w1": .., "v1": [..], "gamma2": .., "w2": .., "v2": ..}}
          {"gtd": {"variant": "gtd0"|"gtd2"|"tdc", "mdp_file": "path.json"}}
          {"random_mdp": {"S": 5, "d": 2, "seed": 249, "gamma": 0.9, "variant": "gtd0"}},
      "noise": {"model": "auto"|"zero"|"sphere"|"gtd", "c": 0.1},
      "schedule": {"alpha": 0.8, "beta": 0.5},
      "projection": {"enabled": false, "r_theta": null, "r_w": null},
      "ledger": {"delta": 0.05, "p": 2.0, "r_theta": null, "r_w": null, "m1": null, "m2": null},
      "horizon": 100000,
      "checkpoints": {"log_uniform": 40} or {"explicit": [100, 1000]},
      "seeds": {"count": 1, "base": 0},
      "initial": {"theta0": null, "w0": null},
      "window": null or [lo, hi],
      "c": 0.001,
      "n0": 0
    }

Noise "auto" means GTD sampling noise for GTD systems and sphere noise with
c = 0.1 for inline systems. Ledger m1/m2 default to the noise model's
domination parameters, or 1.0 when the model has none.
"""
from dataclasses import asdict, dataclass, field
import json
import math

import numpy as np

from .core import MatrixSpec, ProjectionConfig, StepSchedule
from .errors import ValidationError

MODES = ("run", "constants", "rates", "lower-bound", "decompose", "mdp-gen")
SOURCES = ("inline", "gtd", "random_mdp")


@dataclass
class ExperimentConfig:
    mode: str = "run"
    system: dict = field(default_factory=lambda: {
        "random_mdp": {"S": 5, "d": 2, "seed": 249, "gamma": 0.9, "variant": "gtd0"}})
    noise: dict = field(default_factory=lambda: {"model": "auto", "c": 0.1})
    schedule: dict = field(default_factory=lambda: {"alpha": 0.8, "beta": 0.5})
    projection: dict = field(default_factory=lambda: {"enabled": False, "r_theta": None, "r_w": None})
    ledger: dict = field(default_factory=lambda: {"delta": 0.05, "p": 2.0, "r_theta": None,
                                                  "r_w": None, "m1": None, "m2": None})
    horizon: int = 100000
    checkpoints: dict = field(default_factory=lambda: {"log_uniform": 40})
    seeds: dict = field(default_factory=lambda: {"count": 1, "base": 0})
    initial: dict = field(default_factory=lambda: {"theta0": None, "w0": None})
    window: list = None
    c: float = 1e-3
    n0: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode: must be one of {MODES}, got {self.mode!r}")
        if not isinstance(self.system, dict) or len(self.system) != 1 \
                or next(iter(self.system)) not in SOURCES:
            raise ValidationError(f"system: needs exactly one of {SOURCES}")
        if not isinstance(self.horizon, int) or self.horizon < 1:
            raise ValidationError("horizon: must be a positive integer")
        sc = self.seeds
        if int(sc.get("count", 1)) < 1 or int(sc.get("base", 0)) < 0:
            raise ValidationError("seeds: count must be >= 1 and base >= 0")
        ck = self.checkpoints
        if not (("log_uniform" in ck) ^ ("explicit" in ck)):
            raise ValidationError("checkpoints: give exactly one of log_uniform or explicit")
        if self.noise.get("model", "auto") not in ("auto", "zero", "sphere", "gtd"):
            raise ValidationError("noise.model: must be auto, zero, sphere or gtd")
        if self.window is not None and (len(self.window) != 2 or not self.window[0] < self.window[1]):
            raise ValidationError("window: must be [lo, hi] with lo < hi")
        if not (isinstance(self.c, (int, float)) and self.c >= 0):
            raise ValidationError("c: must be a non-negative number")

    # (de)serialization -------------------------------------------------------
    def to_dict(self):
        return asdict(self)

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ValidationError("config: top level must be a JSON object")
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ValidationError(f"config: unknown field(s) {sorted(extra)}")
        base = cls()
        kw = {}
        for k in known:
            if k not in doc:
                continue
            v = doc[k]
            default = getattr(base, k)
            if isinstance(default, dict) and k != "system" and k != "checkpoints":
                merged = dict(default)
                merged.update(v or {})
                v = merged
            kw[k] = v
        if "horizon" in kw:
            kw["horizon"] = _as_int(kw["horizon"], "horizon")
        if "n0" in kw:
            kw["n0"] = _as_int(kw["n0"], "n0")
        return cls(**kw)

    @classmethod
    def loads(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ValidationError(f"config: invalid JSON ({e})") from None

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                return cls.loads(f.read())
        except OSError as e:
            raise ValidationError(f"--config: cannot read {path} ({e.strerror})") from None

    # typed views ---------------------------------------------------------------
    def step_schedule(self):
        try:
            return StepSchedule(float(self.schedule["alpha"]), float(self.schedule["beta"]))
        except KeyError as e:
            raise ValidationError(f"schedule.{e.args[0]}: missing") from None

    def projection_config(self, default_radius=None):
        p = self.projection
        if not p.get("enabled", False):
            return ProjectionConfig.off()
        rt = p.get("r_theta") if p.get("r_theta") is not None else default_radius
        rw = p.get("r_w") if p.get("r_w") is not None else default_radius
        if rt is None or rw is None:
            raise ValidationError("projection: radii required when enabled")
        return ProjectionConfig(float(rt), float(rw), True)

    def seed_list(self):
        base, count = int(self.seeds.get("base", 0)), int(self.seeds.get("count", 1))
        return list(range(base, base + count))

    def checkpoint_list(self):
        from .engine import log_checkpoints
        if "explicit" in self.checkpoints:
            return np.asarray(self.checkpoints["explicit"], dtype=np.int64)
        return log_checkpoints(self.horizon, int(self.checkpoints["log_uniform"]))


def _as_int(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not float(v).is_integer():
        raise ValidationError(f"{name}: must be an integer, got {v!r}")
    return int(v)


def inline_spec(doc):
    return MatrixSpec.from_dict(doc)
