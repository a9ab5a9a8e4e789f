"""Equal borrowing and saving rates: the solver against the closed form.

With r1 = r2 the problem reduces to the classical one, where
V(x, t) = e^{-theta tau} (d e^{-r tau} - x)^2 and the optimal holding is
a (d e^{-r tau} - x). This script solves the dual PDE on the default grid
and prints the largest errors at a handful of times.
"""

import numpy as np

from gapfolio import EQUAL_RATES, dual_surface, feedback_policy, legendre_V, solve_w, validate_params

p = EQUAL_RATES
c = validate_params(p)
ds = dual_surface(solve_w(c, p))

a = (p.mu - p.r1) / p.sigma2
theta = (p.mu - p.r1) ** 2 / p.sigma2 - 2 * p.r1
xs = np.linspace(-5.0, 8.0, 131)

print(f"{'t':>5} {'max rel V err':>14} {'max |pi err|':>13}")
for t in (0.0, 1.0, 2.0, 2.9):
    tau = p.T - t
    gap = p.d * np.exp(-p.r1 * tau) - xs
    V_exact = np.exp(-theta * tau) * gap**2
    pi_exact = a * gap
    V = legendre_V(ds, xs, t).V
    pi = feedback_policy(ds, xs, t)
    print(f"{t:5.1f} {np.max(np.abs(V / V_exact - 1)):14.2e} {np.max(np.abs(pi - pi_exact)):13.2e}")
