#!/usr/bin/env python3
"""
Graph Laplacian at the edge of the unit ball.

At the centre of the ball the operator applied to f = x + y + z vanishes.  At
the boundary point (1, 0, 0) it blows up like 1/sqrt(t), and sqrt(t) times the
operator tends to 3/8.  This script prints the discrete estimate, the
continuum value and the predictor side by side.
"""

import math

from kinklap import Ball, CoordinateSum, KernelParams, UniformDensity
from kinklap import asymptotic_predictor, gauss_operator, graph_laplacian, sample_uniform
from kinklap.operators import sector_moments_at

ball = Ball(3, 1.0)
density = UniformDensity(ball.volume)
f = CoordinateSum(3)
x = (1.0, 0.0, 0.0)

samples = sample_uniform(ball, 1_000_000, seed=1)
_, _, moments = sector_moments_at(ball, x)
p = density.derivatives(x, 1)
fd = f.derivatives(x, 2)

print(f"{'t':>8} {'discrete':>18} {'continuum':>10} {'predictor':>10} {'sqrt(t) L_t':>12}")
for t in (0.05, 0.03, 0.02, 0.01, 0.005):
    disc = graph_laplacian(samples, f, x, t)
    cont = gauss_operator(ball, density, f, x, KernelParams(t)).value
    pred = asymptotic_predictor(moments, p[0], p[1], fd[1], fd[2], t)
    print(f"{t:8.4f} {disc.value:9.4f} ± {disc.error:6.4f} {cont:10.4f} {pred:10.4f} "
          f"{math.sqrt(t) * cont:12.6f}")

# The exact boundary value is 0.375/sqrt(t) - 0.1875 sqrt(t) up to e^(-4/t).
print("\nsqrt(t) L_t approaches", 0.375)
