"""Spray, Chern connection, curvature operator, flag curvature and Ricci scalar."""
from __future__ import annotations

import numpy as np

from .errors import DegenerateFlagError, NumericalDegeneracyError
from .metric import FinslerMetric, check_convex, point_bundle


def _checked(metric, chart, x, y):
    F, g, G, gam, R = point_bundle(metric, chart, x, y)
    check_convex(g, x, y)
    return F, g, G, gam, R


def spray(metric: FinslerMetric, chart: int, x, y) -> np.ndarray:
    """Geodesic spray ``G^i``: geodesics solve ``x'' + 2 G(x, x') = 0``."""
    return _checked(metric, chart, x, y)[2]


def chern_coefficients(metric: FinslerMetric, chart: int, x, y) -> np.ndarray:
    """Chern connection ``Gamma[i, j, k] = Gamma^i_jk(x, y)``, symmetric in j, k."""
    return _checked(metric, chart, x, y)[3]


def curvature_operator(metric: FinslerMetric, chart: int, x, y) -> np.ndarray:
    """``R[i, k] = R^i_k(x, y)``; for unit ``y = T`` this is ``V -> R(V, T)T``.

    Homogeneous of degree two in ``y``.
    """
    return _checked(metric, chart, x, y)[4]


def flag_curvature_from(g, R, y, V) -> float:
    """Flag curvature from a precomputed ``g`` and ``R`` at ``(x, y)``.

    ``K = g(R V, V) / (F^2 g(V, V) - g(y, V)^2)``. The ratio is unchanged by
    rescaling ``y`` or ``V`` and by adding multiples of ``y`` to ``V``.
    """
    y = np.asarray(y, float)
    V = np.asarray(V, float)
    gyy = y @ g @ y
    gvv = V @ g @ V
    gyv = y @ g @ V
    denom = gyy * gvv - gyv**2
    if denom <= 1e-14 * gyy * gvv:
        raise DegenerateFlagError("transverse edge V is parallel to the flagpole y")
    return float(V @ g @ R @ V / denom)


def flag_curvature(metric: FinslerMetric, chart: int, x, y, V) -> float:
    _, g, _, _, R = _checked(metric, chart, x, y)
    return flag_curvature_from(g, R, y, V)


def orthonormal_completion(g, y, seed=None) -> np.ndarray:
    """Columns ``e_1..e_{n-1}, l`` forming a ``g``-orthonormal basis with ``l = y/F``.

    ``seed`` (n x n) supplies the vectors Gram-Schmidt starts from; the
    coordinate basis by default.
    """
    n = len(y)
    l = np.asarray(y, float) / np.sqrt(y @ g @ y)
    seed = np.eye(n) if seed is None else np.asarray(seed, float)
    basis = []
    # largest residual first keeps the process well conditioned
    remaining = [seed[:, j] for j in range(seed.shape[1])]
    while len(basis) < n - 1 and remaining:
        best, best_norm, best_j = None, 0.0, -1
        for j, v in enumerate(remaining):
            w = v - (l @ g @ v) * l
            for e in basis:
                w = w - (e @ g @ w) * e
            nrm = np.sqrt(max(w @ g @ w, 0.0))
            if nrm > best_norm:
                best, best_norm, best_j = w, nrm, j
        if best is None or best_norm < 1e-10:
            break
        remaining.pop(best_j)
        w = best / best_norm
        for e in basis + [l]:
            w = w - (e @ g @ w) * e
        basis.append(w / np.sqrt(w @ g @ w))
    if len(basis) < n - 1:
        raise NumericalDegeneracyError("g-Gram-Schmidt breakdown: seed vectors do not span the complement of y")
    return np.column_stack(basis + [l])


def ricci_from(g, R, y, basis=None) -> float:
    """Sum of flag curvatures over a ``g``-orthonormal completion of ``l = y/F``."""
    E = orthonormal_completion(g, y, basis)
    F2 = y @ g @ y
    return float(sum(E[:, a] @ g @ R @ E[:, a] for a in range(len(y) - 1)) / F2)


def ricci_scalar(metric: FinslerMetric, chart: int, x, y, basis=None) -> float:
    """``Ric(x, y) = sum_a K(x, y, l ^ e_a)``."""
    _, g, _, _, R = _checked(metric, chart, x, y)
    return ricci_from(g, R, np.asarray(y, float), basis)
