"""Simplex quadrature rules in barycentric form.

Weights are normalised to sum to one; multiply by the cell measure.
"""
import numpy as np


def _keast4():
    a = (1 + np.sqrt(5 / 14)) / 4
    b = (1 - np.sqrt(5 / 14)) / 4
    pts = [[0.25, 0.25, 0.25, 0.25]]
    wts = [-74 / 5625]
    for k in range(4):
        p = [1 / 14] * 4
        p[k] = 11 / 14
        pts.append(p)
        wts.append(343 / 45000)
    for i in range(4):
        for j in range(i + 1, 4):
            p = [b] * 4
            p[i] = p[j] = a
            pts.append(p)
            wts.append(56 / 2250)
    w = np.array(wts) * 6.0
    return np.array(pts), w


# Keast 11-point rule, exact for polynomials of degree <= 4 on tetrahedra
TET_POINTS, TET_WEIGHTS = _keast4()

# edge-midpoint rule, exact for degree <= 2 on triangles
TRI_POINTS = np.array([[0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]])
TRI_WEIGHTS = np.full(3, 1.0 / 3.0)
