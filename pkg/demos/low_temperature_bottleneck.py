"""
A bottleneck at low temperature
===============================

Above the critical inverse temperature the equilibrium splits into a
positive and a negative phase. The probability flow between them, measured
by the conductance of the set of positive total magnetization, is
exponentially small in ``n`` and forces exponentially slow mixing.
"""

import math

from mpglauber.bounds import conductance_bruteforce, conductance_cut, log_fit
from mpglauber.partition import PartitionSpec

# Small systems: the lumped computation equals the full 2^n chain.
for n in (8, 10, 12):
    spec = PartitionSpec.equal(2, n, 3.0)
    print(f"n={n:2d}  lumped {conductance_cut(spec).phi_A:.6e}  full chain {conductance_bruteforce(spec):.6e}")

# Larger systems, in the log domain.
ns = [16, 32, 64, 128, 256, 512]
rows = [conductance_cut(PartitionSpec.equal(2, n, 3.0)) for n in ns]
for r in rows:
    print(f"n={r.n:4d}  ln(1/phi) = {-r.log_phi_A:8.3f}  mixing time >= {r.tmix_lower:.3e}")
slope, icept, r2 = log_fit(ns, [-r.log_phi_A for r in rows])
print(f"ln(1/phi) ~ {slope:.4f} n + {icept:.3f}  (R^2 = {r2:.5f})")
print(f"so the mixing time grows at least like exp({slope:.3f} n); compare n ln n = {512 * math.log(512):.0f} at n=512")
