"""Braess' paradox on the bridge network, and what a single light does to it.

Run from the repository root: ``python demos/braess_with_lights.py``.
"""

from __future__ import annotations

import numpy as np

from lightgame.braess import GamePair, detect_braess, immunize, wheatstone_sweep
from lightgame.equilibrium import solve_so, solve_tlue
from lightgame.io import load_network

before = load_network("braess_before")
after = load_network("braess")

# Adding a free bridge makes everyone slower.
rep = detect_braess(GamePair(before, after))
print(f"equilibrium cost without bridge {rep.sc_baseline:.4f}, with bridge {rep.sc_modified:.4f}")
print(f"paradox: {rep.paradox}")

ue, so = solve_tlue(after), solve_so(after)
print(f"optimum with bridge {so.social_cost:.4f}, price of anarchy {ue.social_cost / so.social_cost:.4f}")
for path, x in ue.used_paths("1").items():
    print("  equilibrium route", " ".join(path), f"carries {x:.3f}")

# A light at the lower junction shows red to the bridge for 1-p of the cycle
# and to the lower road for p of it.
print("\n p     SC equilibrium   SC optimum   PoA     bridge flow")
for pt in wheatstone_sweep(np.linspace(0, 0.9, 10)).points:
    print(f" {pt.p:.1f}   {pt.sc_tlue:.4f}           {pt.sc_so:.4f}       {pt.poa:.4f}  {pt.mid_flow:.4f}")

# Holding the bridge at permanent red removes the paradox altogether.
imm = immunize(load_network("wheatstone_light"))
print(f"\nclosing {', '.join(imm.removed)} gives equilibrium cost {solve_tlue(imm.network).social_cost:.4f}")

# With red capped at 85% the dashed links into the square junction stay usable.
junction5 = immunize(load_network("junction5"), mode="bounded", p_max=0.85)
print(f"capped at 85% red, {len(junction5.removed)} links held at {max(junction5.assigned.values())}; immune: {junction5.immune}")
