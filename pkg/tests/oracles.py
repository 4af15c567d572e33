"""Brute-force reference computations shared by the tests.

Nothing here imports the code paths it is used to check.
"""

import itertools
import math

import numpy as np


def lp_vertex_enumeration(objective, sense, constraints, bounds):
    """Best objective over all basic feasible points of a bounded LP.

    Every vertex is the solution of ``n`` tight constraints drawn from the
    rows and the finite variable bounds.
    """
    n = len(objective)
    planes = []
    for row, rel, rhs in constraints:
        planes.append((np.asarray(row, float), rhs))
    for i, (lo, hi) in enumerate(bounds):
        e = np.zeros(n)
        e[i] = 1.0
        if math.isfinite(lo):
            planes.append((e, lo))
        if math.isfinite(hi):
            planes.append((e, hi))

    def feasible(x):
        for row, rel, rhs in constraints:
            lhs = float(np.dot(row, x))
            if rel == "<=" and lhs > rhs + 1e-9:
                return False
            if rel == ">=" and lhs < rhs - 1e-9:
                return False
            if rel == "=" and abs(lhs - rhs) > 1e-9:
                return False
        return all(lo - 1e-9 <= xi <= hi + 1e-9 for xi, (lo, hi) in zip(x, bounds))

    P = np.array([pl[0] for pl in planes])
    q = np.array([pl[1] for pl in planes])
    combos = np.array(list(itertools.combinations(range(len(planes)), n)))
    if combos.size == 0:
        return None
    A = P[combos]
    b = q[combos]
    ok = np.abs(np.linalg.det(A)) > 1e-10
    X = np.linalg.solve(A[ok], b[ok][..., None])[..., 0]
    best = None
    for x in X:
        if not feasible(x):
            continue
        v = float(np.dot(objective, x))
        if best is None or (v > best if sense == "max" else v < best):
            best = v
    return best


def dkw_radius(n, delta):
    """Two-sided DKW band half-width holding w.p. 1 - delta for n draws."""
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n))
