"""Ratio of the ball volume to 2 pi (log eta)^-alpha / eta as eps shrinks.

The ratio behaves like 1 - alpha / log eta, so it enters the 10% band only
once log eta exceeds about 10 alpha.
"""

from cusplab.manifold import ball_volume

alpha = 4.0
print(f"{'eps':>8} {'log eta':>10} {'ratio':>10} {'1 - a/log eta':>14} {'cross diff':>11}")
for eps in (0.5, 0.1, 0.05, 0.03, 0.025, 0.02, 0.01, 0.005):
    b = ball_volume(alpha, eps)
    print(f"{eps:8.3g} {b.log_eta:10.4g} {b.ratio_derived:10.4f} {1 - alpha / b.log_eta:14.4f} {b.cross_rel_diff:11.1e}")
