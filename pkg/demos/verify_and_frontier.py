"""Check the computed policy by simulation, then trace the efficient frontier.

The optimal feedback policy is simulated together with simpler rules.
None of the simple rules should beat the optimal cost. The frontier then
turns the penalised value into (expected terminal wealth, standard
deviation) pairs. Path counts here are smaller than in the acceptance
run so the script finishes in a few seconds.
"""

from gapfolio import BASELINE, SimConfig, dual_surface, efficient_frontier, solve_w, validate_params
from gapfolio.simulate import OptimalPolicy, all_in_stock, classical_no_gap, verify_value, zero_policy

p = BASELINE
ds = dual_surface(solve_w(validate_params(p), p))
cfg = SimConfig(x0=1.0, n_paths=20_000, n_steps=300, seed=7)
pols = [OptimalPolicy(ds), all_in_stock(), zero_policy(), classical_no_gap(p, p.r1)]
print(verify_value(ds, pols, p, cfg))

print("\nefficient frontier from x0 = 1 at t = 0")
print(f"{'d':>8} {'E[X_T]':>8} {'std':>8}")
for q in efficient_frontier(p, 1.0, 0.0):
    print(f"{q.d:8.3f} {q.z_mean:8.4f} {q.std_dev:8.4f}")
