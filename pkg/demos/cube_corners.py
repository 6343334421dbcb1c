#!/usr/bin/env python3
"""
Face, edge and vertex of the unit cube.

The leading boundary term depends only on the inward sector: a half-sphere at
a face, a quarter-sphere at an edge, an eighth at a vertex.  For f = x + y + z
the scaled predictor is pi/2, -pi/2 and -3 pi/8.
"""

import math

from kinklap import Box, CoordinateSum, KernelParams, UniformDensity, classify, gauss_operator
from kinklap.operators import asymptotic_predictor, sector_moments_at

cube = Box.unit(3)
density = UniformDensity(1.0)
f = CoordinateSum(3)
points = {"face": (0.5, 0.5, 1.0), "edge": (0.5, 0.0, 0.0), "vertex": (0.0, 0.0, 0.0)}

for label, x in points.items():
    _, _, moments = sector_moments_at(cube, x)
    print(f"{label}: {type(classify(cube, x)).__name__}, sector measure {moments.measure:.4f}")
    p = density.derivatives(x, 1)
    fd = f.derivatives(x, 2)
    for t in (0.05, 0.02, 0.01):
        cont = gauss_operator(cube, density, f, x, KernelParams(t)).value
        pred = asymptotic_predictor(moments, p[0], p[1], fd[1], fd[2], t)
        print(f"   t={t:<5} L_t={cont:9.4f}  sqrt(t) L_t={math.sqrt(t) * cont:8.5f}  "
              f"sqrt(t) predictor={math.sqrt(t) * pred:8.5f}")
