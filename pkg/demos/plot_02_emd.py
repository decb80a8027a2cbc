"""
Earth Mover's Distance between two histograms
=============================================

The distance is the cheapest way to move one color distribution onto
another, with RGB distance as the ground cost.
"""

import numpy as np

from sigtree import cost_matrix, default_palette, emd, oracle_transport, solve_transport

palette = default_palette()
cost = cost_matrix(palette)
names = palette.names

# mostly red vs mostly orange with a bit of white on both sides
a = np.zeros(len(palette))
b = np.zeros(len(palette))
a[names.index("RED")], a[names.index("WHITE")] = 0.75, 0.25
b[names.index("ORANGE")], b[names.index("WHITE")] = 0.5, 0.5

plan = solve_transport(a, b, cost)
print("EMD:", plan.emd)
for i, j in zip(*np.nonzero(plan.flows)):
    print(f"  {names[i]:>8} -> {names[j]:<8} {plan.flows[i, j]:.2f} x {cost[i, j]:.1f}")

# unequal totals: only the smaller mass is shipped
print("partial match:", emd(a, 0.5 * b, cost))

# the slow exact enumeration agrees on a tiny integer instance
x = np.array([3, 5, 2])
y = np.array([4, 4])
c = np.array([[1.0, 7.0], [2.0, 3.0], [9.0, 1.0]])
print("solver:", solve_transport(x, y, c).total_cost, "oracle:", oracle_transport(x, y, c))
