"""Sup-norm traces of the first nonconstant radial branch for alpha = 1 and 2.

For alpha = 2 the branch behaves like exp(-lambda / log u) near the truncation,
so with lambda near 12 the sup norm still grows by tens of percent per decade
of U_max. The last column compares the observed growth with that prediction.
"""

import math

from cusplab.manifold import supnorm_trace

U = [1e3, 1e4, 1e5, 1e6, 1e7]
for alpha in (1.0, 2.0):
    sol = supnorm_trace(alpha, U)
    print(f"alpha = {alpha:g}")
    for i, u in enumerate(U):
        lam, s = sol.lam_trace[i], sol.trace[i]
        line = f"  U_max {u:8.0e}  lambda {lam:9.5f}  sup {s:10.4f}"
        if i:
            obs = s / sol.trace[i - 1]
            if alpha == 2:
                pred = math.exp(-lam / math.log(u) + lam / math.log(U[i - 1]))
                line += f"  growth {obs:6.3f}  exp-law {pred:6.3f}"
            else:
                pred = (math.log(u) / math.log(U[i - 1])) ** lam
                line += f"  growth {obs:6.3f}  (log U)^lambda {pred:6.3f}"
        print(line)
    if sol.fit_slope is not None:
        print(f"  fitted exponent {sol.fit_slope:.4f} vs lambda {sol.fit_lambda:.4f}")
