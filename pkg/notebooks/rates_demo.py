"""Empirical convergence rates of GTD(0) on a small random MDP.

Runs 20 seeds to n = 1e6 for two step-size schedules and prints the fitted
log-log slopes next to the predicted -alpha/2 and -beta/2.

    python3 notebooks/rates_demo.py
"""
from ttsa.analysis import rate_sweep, window_checkpoints
from ttsa.core import StepSchedule
from ttsa.gtd import build_gtd, random_mdp

inst = build_gtd("gtd0", random_mdp(5, 2, 249, gamma=0.9))
window = (1e4, 1e6)
ck = window_checkpoints(window, 10 ** 6)

for alpha, beta in ((0.8, 0.5), (0.8, 0.3)):
    rep, _ = rate_sweep(inst.spec, StepSchedule(alpha, beta), inst.noise_model(), 10 ** 6,
                        range(20), window, ck)
    print(f"alpha={alpha} beta={beta}: slow slope {rep.slope_theta:+.3f} (pred {-alpha / 2:+.3f}), "
          f"fast slope {rep.slope_w:+.3f} (pred {-beta / 2:+.3f})")
