"""Best Hardy constant on the horn domain across meshes and truncations, for several s.

Shows that s = 1.5 is stable while s = 10 keeps falling under refinement at
every w_min, so its w_min trend cannot be separated from discretization error.
"""

import numpy as np

from cusplab.fem import hardy_constant_2d
from cusplab.geometry import CuspDomain, CuspProfile

P = CuspProfile.canonical(1.0, 2.0)


def horn(w):
    return CuspDomain(P, w_min=w, side="above")


for s in (1.5, 10.0):
    res = hardy_constant_2d(horn, s)
    print(f"s = {s:g}: verdict {res.verdict}")
    ws = sorted({r["w_min"] for r in res.table}, reverse=True)
    hs = sorted({r["h0"] for r in res.table}, reverse=True)
    print("  w_min \\ h0 " + "".join(f"{h:>12.5g}" for h in hs))
    for w in ws:
        vals = [r["b_inv"] for r in res.table if r["w_min"] == w]
        print(f"  {w:<10g} " + "".join(f"{v:12.4e}" for v in vals))
    finest = np.array([res.b_inv_by_w_min[w] for w in ws])
    print(f"  finest-mesh ratios across w_min: {np.round(finest[1:] / finest[:-1], 3)}")
