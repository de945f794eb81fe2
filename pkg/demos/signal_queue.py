"""Waiting at a fixed-cycle signal across red shares and cycle lengths.

Run from the repository root: ``python demos/signal_queue.py``.
"""

from __future__ import annotations

from lightgame.costs import LightCycle, eval_fitted_journey
from lightgame.lightsim import SimConfig, correlation_report, fit_affine, run_grid, simulate

cells = run_grid()
print("mean wait (s) by red share (rows) and cycle length (columns)")
Ts = sorted({c.T for c in cells})
print("  p   " + "".join(f"{T:>8.0f}" for T in Ts))
for p in sorted({c.p for c in cells}):
    row = {c.T: c.mean_wait for c in cells if c.p == p}
    print(f" {p:.1f}  " + "".join(f"{row[T]:8.2f}" for T in Ts))

rep = correlation_report(cells)
print(f"\nSpearman over the grid: wait vs p {rep.rho_p:.3f}, wait vs T {rep.rho_T:.3f}")
print("within one red share, longer cycles still mean longer waits:",
      ", ".join(f"p={p}: {r:.2f}" for p, r in rep.rho_T_within_p.items() if r == r))

# Journey time against congestion with the light always green.
pts = []
for lam in (0.02, 0.05, 0.1, 0.2, 0.3):
    res = simulate(SimConfig(LightCycle.from_p(0.0, 60), arrival_rate=lam))
    pts.append((res.mean_x, res.mean_journey))
a, b, r2 = fit_affine(pts)
print(f"\nno light: journey = {a:.3f} x + {b:.2f} (R^2 {r2:.3f}); free-flow time is 44 s")

print("fitted junction cost at x=10:", ", ".join(f"p={p}: {eval_fitted_journey(10, p):.1f}" for p in (0.0, 0.3, 0.6, 0.8)))
