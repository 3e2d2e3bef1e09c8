"""
Watching cutoff happen exactly
==============================

The magnetization chain has polynomially many states, so its total
variation distance to equilibrium can be computed exactly for thousands of
spins. Rescaling time by ``n ln n`` makes the drop from 1 to 0 sharpen as
``n`` grows.
"""

import math

from mpglauber.magchain import MagnetizationChain
from mpglauber.partition import PartitionSpec
from mpglauber.spectral import perron

ns = [64, 128, 256, 512]
grid = [0.6, 0.8, 0.9, 1.0, 1.1, 1.2, 1.4, 1.8]  # multiples of t_n

print("t / t_n  " + "  ".join(f"n={n:<5d}" for n in ns))
curves = {}
for n in ns:
    spec = PartitionSpec.equal(2, n, 1.0)
    t_n = spec.cutoff_time(perron(spec).upsilon)  # equals n ln n at beta = 1
    times = [round(c * t_n) for c in grid]
    curves[n] = [v for _, v in MagnetizationChain(spec).tv_curve("all-plus", times)]
for j, c in enumerate(grid):
    print(f"{c:7.2f}  " + "  ".join(f"{curves[n][j]:7.4f}" for n in ns))

# The width of the drop, measured between TV = 0.75 and TV = 0.25.
print()
for n in ns:
    mc = MagnetizationChain(PartitionSpec.equal(2, n, 1.0))
    tm = mc.mixing_times("all-plus", [0.25, 0.75])
    window = tm[0.25] - tm[0.75]
    print(f"n={n:4d}  tmix(.25)={tm[0.25]:6d}  window/n={window / n:.3f}  "
          f"window/(n ln n)={window / (n * math.log(n)):.3f}")
