"""
Where the interaction wins: the critical inverse temperature
============================================================

The Perron root of the interaction matrix fixes the critical inverse
temperature. Below it the paramagnetic point is a strict maximum of the
free-energy profile; above it the curvature along the Perron direction
turns positive.
"""

import numpy as np

from mpglauber.bounds import critical_beta_scan, curvature_at_origin
from mpglauber.partition import PartitionSpec
from mpglauber.spectral import perron

# A few partition shapes, from balanced to lopsided.
shapes = ["1/2,1/2", "1/4,3/4", "1/3,1/3,1/3", "1/4,1/4,1/2", "1/8,1/8,1/4,1/2"]

print(f"{'p':>20s} {'lambda':>10s} {'beta_cr':>10s} {'scan':>10s}")
for p in shapes:
    spec = PartitionSpec.parse(p, 24, 1.0)
    sd = perron(spec)
    # The zero of the curvature along a is the same number, found independently.
    found = critical_beta_scan(spec.p_float, np.asarray(sd.a), np.linspace(0.1, 10, 100))
    print(f"{p:>20s} {sd.lam:10.6f} {sd.beta_cr:10.6f} {found:10.6f}")

# Any other direction needs a larger beta before it curves upward.
spec = PartitionSpec.parse("1/4,3/4", 16, 1.0)
sd = perron(spec)
for v in (np.asarray(sd.a), np.array([0.5, 0.5]), np.array([0.9, 0.1])):
    b = critical_beta_scan(spec.p_float, v, np.linspace(0.1, 50, 500))
    print(f"direction {np.round(v, 3)} turns at beta = {b:.6f}")

# Curvature at the origin along a, across beta.
for beta in (0.5 * sd.beta_cr, sd.beta_cr, 1.5 * sd.beta_cr):
    print(f"beta = {beta:.4f}: f''(0) = {curvature_at_origin(spec.p_float, beta, sd.a):+.3e}")
