"""Trading regions when borrowing costs more than saving.

For the baseline market (r1 = 2%, r2 = 8%) the wealth axis splits into
three bands: borrow to buy more stock below B(t), hold exactly all wealth
in the stock between B(t) and L(t), and keep some cash above L(t). The
script prints the boundaries and then shows how the band shrinks as the
rate gap closes.
"""

import numpy as np

from gapfolio import BASELINE, dual_surface, extract_z_boundaries, map_to_wealth, solve_w, validate_params


def wealth_boundaries(p):
    sol = solve_w(validate_params(p), p)
    return map_to_wealth(extract_z_boundaries(sol), dual_surface(sol))


bc = wealth_boundaries(BASELINE)
t = bc.t_nodes
print("baseline boundaries")
print(f"{'t':>5} {'B(t)':>8} {'L(t)':>8} {'target':>8}")
for tq in (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0):
    j = int(np.argmin(np.abs(t - tq)))
    print(f"{t[j]:5.2f} {bc.B[j]:8.4f} {bc.L[j]:8.4f} {BASELINE.discounted_target(t[j]):8.4f}")

print("\nband width L - B at t = 0 as the rates move together")
for r1, r2 in ((0.02, 0.08), (0.03, 0.07), (0.04, 0.06), (0.05, 0.05)):
    b = wealth_boundaries(BASELINE.replace(r1=r1, r2=r2))
    j = int(np.argmin(b.t_nodes))
    print(f"  r1={r1:.2f} r2={r2:.2f}: B={b.B[j]:.4f} L={b.L[j]:.4f} width={b.L[j] - b.B[j]:.4f}")
