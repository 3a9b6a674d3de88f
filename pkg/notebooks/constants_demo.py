"""Constants ledger for a two-dimensional linear system.

Builds the ledger, prints a handful of entries and checks the lemma
inequalities pointwise up to n = 1e5.

    python3 notebooks/constants_demo.py
"""
from ttsa.core import StepSchedule, derive_system, random_spec
from ttsa.ledger import LedgerConfig, build_ledger, verify_bounds

system = derive_system(random_spec(2, 1, (0.5, 2.0), skew=0.1, coupling=0.3))
L = build_ledger(system, LedgerConfig(StepSchedule(0.8, 0.5), m1=1e-3, m2=1e-3))

for name in ("q1", "q2", "ell_star", "C_R_theta", "C_R_w", "K_Int_a", "N_final"):
    print(f"{name:>10} = {L[name]}")

for chk in verify_bounds(L, n_max=10 ** 5):
    print(f"{chk.name:>24}: {'ok' if chk.ok else 'FAILED'} over {chk.checked} points")
