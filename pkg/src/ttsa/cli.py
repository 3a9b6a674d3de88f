"""Command-line front end.

    ttsa <mode> [--config cfg.json] [--out DIR] [--seeds N] [--horizon N]
                [--alpha x --beta y] [--variant gtd0|gtd2|tdc]

Exit codes: 0 success, 1 validation error, 2 numerical failure.
Worker threads are capped by the TTSA_THREADS environment variable.
"""
import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import analysis, ledger
from .config import MODES, ExperimentConfig, inline_spec
from .core import derive_system, require_assumptions
from .engine import run_batch, worker_count
from .errors import NumericalError, TTSAError, ValidationError
from .gtd import MdpSpec, build_gtd, random_mdp
from .noise import SphereNoise, ZeroNoise


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"arguments: {message}")


def build_parser():
    p = _Parser(prog="ttsa", description="Two-timescale stochastic approximation experiments.")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--seeds", type=int, help="number of seeds")
    p.add_argument("--horizon", type=int, help="number of iterations")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--variant", choices=("gtd0", "gtd2", "tdc"))
    return p


def load_config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    doc = cfg.to_dict()
    doc["mode"] = args.mode
    if args.seeds is not None:
        doc["seeds"]["count"] = args.seeds
    if args.horizon is not None:
        doc["horizon"] = args.horizon
    if args.alpha is not None:
        doc["schedule"]["alpha"] = args.alpha
    if args.beta is not None:
        doc["schedule"]["beta"] = args.beta
    if args.variant is not None:
        src = next(iter(doc["system"]))
        if src == "inline":
            raise ValidationError("--variant: only applies to GTD systems")
        doc["system"][src]["variant"] = args.variant
    return ExperimentConfig.from_dict(doc)


def resolve_system(cfg):
    """(spec, noise model, gtd instance or None, mdp or None)."""
    src, body = next(iter(cfg.system.items()))
    inst = mdp = None
    if src == "inline":
        spec = inline_spec(body)
    elif src == "gtd":
        if "mdp_file" not in body:
            raise ValidationError("system.gtd.mdp_file: missing")
        try:
            mdp = MdpSpec.load(body["mdp_file"])
        except OSError as e:
            raise ValidationError(f"system.gtd.mdp_file: cannot read ({e.strerror})") from None
        inst = build_gtd(body.get("variant", "gtd0"), mdp)
        spec = inst.spec
    else:
        mdp = _random_mdp(body)
        inst = build_gtd(body.get("variant", "gtd0"), mdp)
        spec = inst.spec
    model = cfg.noise.get("model", "auto")
    if model == "auto":
        model = "gtd" if inst is not None else "sphere"
    if model == "gtd":
        if inst is None:
            raise ValidationError("noise.model: gtd noise needs a GTD system")
        noise = inst.noise_model()
    elif model == "sphere":
        noise = SphereNoise(spec.dim, float(cfg.noise.get("c", 0.1)))
    else:
        noise = ZeroNoise(spec.dim)
    return spec, noise, inst, mdp


def _random_mdp(body):
    try:
        return random_mdp(int(body.get("S", 5)), int(body.get("d", 2)), int(body.get("seed", 0)),
                          ensure_assumptions=bool(body.get("ensure_assumptions", True)),
                          gamma=float(body.get("gamma", 0.9)))
    except (TypeError, ValueError) as e:
        if isinstance(e, TTSAError):
            raise
        raise ValidationError(f"system.random_mdp: {e}") from None


def ledger_config(cfg, system, noise):
    lc = cfg.ledger
    m1 = lc.get("m1") if lc.get("m1") is not None else (noise.m1 if noise.m1 is not None else 1.0)
    m2 = lc.get("m2") if lc.get("m2") is not None else (noise.m2 if noise.m2 is not None else 1.0)
    return ledger.LedgerConfig(schedule=cfg.step_schedule(), delta=float(lc.get("delta", 0.05)),
                               p=float(lc.get("p", 2.0)), r_theta=lc.get("r_theta"),
                               r_w=lc.get("r_w"), m1=float(m1), m2=float(m2)).resolved(system)


def _initial(cfg):
    ini = cfg.initial or {}
    return ini.get("theta0"), ini.get("w0")


def _default_radius(system):
    return 10.0 * (1 + np.linalg.norm(system.theta_star) + np.linalg.norm(system.w_star))


def _writer(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    root = os.path.realpath(out_dir)

    def write(name, text):
        path = os.path.realpath(os.path.join(root, name))
        if os.path.dirname(path) != root:
            raise ValidationError(f"--out: refusing to write {name} outside {out_dir}")
        with open(path, "w", newline="") as f:
            f.write(text)
        return path
    return write


def cmd_run(cfg, write):
    spec, noise, _, _ = resolve_system(cfg)
    system = derive_system(spec)
    th0, w0 = _initial(cfg)
    trajs = run_batch(spec, cfg.step_schedule(), cfg.projection_config(_default_radius(system)),
                      noise, cfg.horizon, cfg.seed_list(), checkpoints=cfg.checkpoint_list(),
                      theta0=th0, w0=w0, threads=worker_count(), system=system)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\r\n")
    wr.writerow(("seed", "n", "err_theta", "err_w", "diverged_at"))
    for t in trajs:
        for n, a, b in zip(t.checkpoints, t.errors_theta, t.errors_w):
            wr.writerow((t.seed, int(n), analysis.fmt(a), analysis.fmt(b),
                         "" if t.diverged_at is None else t.diverged_at))
    write("run.csv", buf.getvalue())
    div = sum(t.diverged for t in trajs)
    return f"{len(trajs)} trajectories, {div} diverged"


def cmd_constants(cfg, write):
    spec, noise, _, _ = resolve_system(cfg)
    require_assumptions(spec)
    system = derive_system(spec)
    led = ledger.build_ledger(system, ledger_config(cfg, system, noise))
    write("constants.json", led.dumps())
    return f"{len(led.entries)} constants, C_R_theta = {led['C_R_theta']}"


def cmd_rates(cfg, write):
    spec, noise, _, _ = resolve_system(cfg)
    system = derive_system(spec)
    sched = cfg.step_schedule()
    window = tuple(cfg.window) if cfg.window else (cfg.horizon / 100, cfg.horizon)
    ck = cfg.checkpoint_list() if "explicit" in cfg.checkpoints else \
        analysis.window_checkpoints(window, cfg.horizon)
    th0, w0 = _initial(cfg)
    rep, trajs = analysis.rate_sweep(spec, sched, noise, cfg.horizon, cfg.seed_list(), window, ck,
                                     proj=cfg.projection_config(_default_radius(system)),
                                     threads=worker_count(), theta0=th0, w0=w0, system=system)
    tab = analysis.scaled_table(trajs, sched, cfg.c)
    write("rates.csv", tab.to_csv())
    write("rates.json", json.dumps(rep.summary(), indent=1))
    return f"slope_theta = {rep.slope_theta:.4f}, slope_w = {rep.slope_w:.4f}"


def cmd_lower_bound(cfg, write):
    spec, noise, inst, _ = resolve_system(cfg)
    system = derive_system(spec)
    sched = cfg.step_schedule()
    th0, w0 = _initial(cfg)
    seeds = cfg.seed_list()
    if len(seeds) < 30:
        raise ValidationError("seeds.count: lower-bound needs at least 30 seeds")
    trajs = run_batch(spec, sched, cfg.projection_config(_default_radius(system)), noise,
                      cfg.horizon, seeds, checkpoints=cfg.checkpoint_list(), theta0=th0, w0=w0,
                      threads=worker_count(), system=system)
    tab = analysis.scaled_table(trajs, sched, cfg.c)
    write("lower_bound.csv", tab.to_csv())
    write("lower_bound.json", json.dumps({"c": cfg.c, "num_seeds": tab.num_seeds,
                                          "rows": tab.rows}, indent=1))
    return f"max fraction below c: theta {np.max(tab.frac_theta):.3f}, w {np.max(tab.frac_w):.3f}"


def cmd_decompose(cfg, write):
    spec, noise, _, _ = resolve_system(cfg)
    system = derive_system(spec)
    th0, w0 = _initial(cfg)
    trajs = run_batch(spec, cfg.step_schedule(), None, noise, cfg.horizon, cfg.seed_list(),
                      checkpoints=np.arange(cfg.horizon + 1), record_noise=True,
                      theta0=th0, w0=w0, threads=worker_count(), system=system)
    rows = []
    for t in trajs:
        if t.diverged:
            rows.append({"seed": t.seed, "diverged_at": t.diverged_at})
            continue
        D = analysis.decompose(t, system, n0=cfg.n0)
        rows.append({"seed": t.seed, "residual_theta": D.residual_theta,
                     "residual_w": D.residual_w, "residual_telescoping": D.residual_telescoping,
                     "max_iterate_norm": D.scale, "within_tolerance": D.within()})
    write("decompose.json", json.dumps({"n0": cfg.n0, "horizon": cfg.horizon, "seeds": rows},
                                       indent=1))
    ok = sum(r.get("within_tolerance", False) for r in rows)
    return f"{ok}/{len(rows)} seeds within tolerance"


def cmd_mdp_gen(cfg, write):
    src, body = next(iter(cfg.system.items()))
    if src != "random_mdp":
        raise ValidationError("system: mdp-gen needs a random_mdp source")
    mdp = _random_mdp(body)
    write("mdp.json", json.dumps(mdp.to_dict(), indent=1))
    return f"{mdp.num_states}-state MDP with d={mdp.dim}"


COMMANDS = {"run": cmd_run, "constants": cmd_constants, "rates": cmd_rates,
            "lower-bound": cmd_lower_bound, "decompose": cmd_decompose, "mdp-gen": cmd_mdp_gen}


def run_cli(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args)
        msg = COMMANDS[cfg.mode](cfg, _writer(args.out))
        print(msg, file=stdout)
        return 0
    except ValidationError as e:
        print(f"error: {e}", file=stderr)
        return 1
    except NumericalError as e:
        print(f"numerical failure: {e}", file=stderr)
        return 2
    except SystemExit as e:        # --help
        return int(e.code or 0)


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
