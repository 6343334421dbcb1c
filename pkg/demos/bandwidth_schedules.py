#!/usr/bin/env python3
"""
Which bandwidth schedules make the discrete operator converge?

t_n = n^(-beta) works in probability when sqrt(n) t_n^(d/2+1) diverges, i.e.
beta < 1/(d+2).  The deviation experiment shows the median error shrinking for
beta = 1/8 in three dimensions, and the checker flags beta = 1/4.
"""

from kinklap import Box, CoordinateSum, UniformDensity
from kinklap.concentration import (
    PowerLaw, check_as_condition, check_probability_condition, deviation_experiment,
)

for beta in (1 / 8, 1 / 5, 1 / 4):
    schedule = PowerLaw(1.0, beta, 3)
    in_prob = check_probability_condition(schedule)
    almost_sure = check_as_condition(schedule, alpha=2.0)
    print(f"beta={beta:.3f}: in probability {in_prob.status}, almost surely {almost_sure.status}")

cube = Box.unit(3)
table = deviation_experiment(cube, UniformDensity(1.0), CoordinateSum(3), (0.5, 0.5, 0.5),
                             PowerLaw(1.0, 1 / 8, 3), [1000, 10_000, 100_000], trials=20, seed=5)
print()
print(table.to_csv())
