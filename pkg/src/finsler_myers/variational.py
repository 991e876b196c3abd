"""Index forms, Jacobi fields, conjugate points and the two trial-field sums.

Fields built from a parallel frame, ``W = sum_a f_a(t) e_a``, carry exact
covariant derivatives ``D_T W = sum_a f_a' e_a`` (the frame is parallel). Any
other field falls back to finite covariant differences
``D_T W = dW/dt + Gamma(W, T)``, with ``dW/dt`` from 5-point local polynomial
fits that never straddle a breakpoint or a chart switch.

All integrals are composite Simpson over the cells (left, midpoint, right).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    AlignmentError,
    DegenerateFamilyError,
    IntegrationAccuracyError,
    NumericalError,
    RangeError,
)
from .geodesic import (
    GeodesicTrajectory,
    ParallelFrame,
    VectorFieldAlongGeodesic,
    _rk4_linear,
    parallel_frame,
)
from .numerics import POLICY, NumericsPolicy

log = logging.getLogger(__name__)

__all__ = [
    "Profile",
    "VectorFieldAlongGeodesic",
    "frame_field",
    "field_jump",
    "covariant_derivative_along",
    "index_form",
    "index_form_flag",
    "index_form_parts",
    "jacobi_integrate",
    "jacobi_matrix",
    "JacobiMatrixSolution",
    "ConjugateReport",
    "first_conjugate_point",
    "SineTrialTerms",
    "sine_trial_terms",
    "sine_trial_sum",
    "AmbroseTrialTerms",
    "ambrose_trial_terms",
    "ambrose_trial_sum",
    "ambrose_profile",
    "sine_profile",
    "simpson",
]


# ---------------------------------------------------------------- quadrature


def simpson(traj: GeodesicTrajectory, f: np.ndarray, mask=None) -> float:
    """Composite Simpson of cell samples ``f`` (shape ``(N, 3)``) over the trajectory."""
    w = traj.widths
    per_cell = w / 6.0 * (f[:, 0] + 4.0 * f[:, 1] + f[:, 2])
    if mask is not None:
        per_cell = per_cell[mask]
    return float(np.sum(per_cell))


def _node_index(traj: GeodesicTrajectory, t: float) -> int:
    nodes = np.append(traj.t[:, 0], traj.t[-1, 2])
    k = int(np.argmin(np.abs(nodes - t)))
    if abs(nodes[k] - t) > 1e-9 * max(1.0, abs(t)):
        raise AlignmentError(
            f"breakpoint t={t} is not a grid node; integrate the geodesic with nodes=({t},)"
        )
    return k


# ---------------------------------------------------------------- profiles


@dataclass(frozen=True)
class Profile:
    """Scalar piecewise-smooth function of arc length.

    ``pieces[i]`` is ``(f, df, d2f)`` (vectorized callables) on
    ``[breaks[i-1], breaks[i]]``; the piece owning a cell is picked by the
    cell midpoint, so breakpoints must be grid nodes.
    """

    pieces: tuple
    breaks: tuple = ()

    @staticmethod
    def smooth(f, df, d2f) -> "Profile":
        return Profile(((f, df, d2f),))

    @staticmethod
    def polynomial(coeffs) -> "Profile":
        p = np.polynomial.Polynomial(coeffs)
        return Profile.smooth(p, p.deriv(1), p.deriv(2))

    def evaluate(self, tcells: np.ndarray):
        idx = np.searchsorted(np.asarray(self.breaks, float), tcells[:, 1])
        out = np.zeros((3,) + tcells.shape)
        for i, fns in enumerate(self.pieces):
            sel = idx == i
            if not sel.any():
                continue
            for d in range(3):
                out[d][sel] = np.broadcast_to(fns[d](tcells[sel]), tcells[sel].shape)
        return out


def sine_profile(r: float) -> Profile:
    k = np.pi / r
    return Profile.smooth(lambda t: np.sin(k * t), lambda t: k * np.cos(k * t), lambda t: -k * k * np.sin(k * t))


def ambrose_profile(b: float, r: float) -> Profile:
    """``t`` on [0, 1], ``1`` on [1, b], ``(r - t)/(r - b)`` on [b, r]."""
    c = 1.0 / (r - b)
    zero = lambda t: np.zeros_like(t)  # noqa: E731
    return Profile(
        (
            (lambda t: t, lambda t: np.ones_like(t), zero),
            (lambda t: np.ones_like(t), zero, zero),
            (lambda t: (r - t) * c, lambda t: -c * np.ones_like(t), zero),
        ),
        (1.0, float(b)),
    )


def frame_field(frame: ParallelFrame, profiles: Sequence[Profile | None]) -> VectorFieldAlongGeodesic:
    """``W = sum_i f_i(t) e_i`` for the frame vectors ``e_1..e_n`` (``None`` means zero).

    ``profiles`` may have length ``n - 1`` (transverse only) or ``n``.
    """
    traj = frame.trajectory
    n = frame.n
    if len(profiles) not in (n - 1, n):
        raise AlignmentError(f"expected {n - 1} or {n} profiles, got {len(profiles)}")
    comp = np.zeros((3, traj.cells, 3, n))
    bps = set()
    for i, prof in enumerate(profiles):
        if prof is None:
            continue
        comp[..., i] = prof.evaluate(traj.t)
        bps.update(b for b in prof.breaks if 0 < b < traj.length)
    vals, cov, cov2 = (np.einsum("cpij,cpj->cpi", frame.E, comp[d]) for d in range(3))
    return VectorFieldAlongGeodesic(traj.t, vals, cov, cov2, tuple(sorted(bps)))


def _check_aligned(traj: GeodesicTrajectory, *fields: VectorFieldAlongGeodesic):
    for W in fields:
        if W.values.shape != traj.x.shape or not np.array_equal(W.t, traj.t):
            raise AlignmentError("vector field is not sampled on this trajectory's grid")


def field_jump(traj: GeodesicTrajectory, values: np.ndarray) -> np.ndarray:
    """Mismatch of cell samples across each interior node (right of k vs left of k + 1)."""
    _, _, jac = traj.propagators
    right = values[:-1, 2].copy()
    for k, J in jac.items():
        right[k] = J @ right[k]
    return values[1:, 0] - right


# ---------------------------------------------------------------- covariant derivative


def _stencil_derivative(tt: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Derivative at each sample from the 5-point (or shorter) local polynomial fit."""
    M = len(tt)
    p = min(5, M)
    start = np.clip(np.arange(M) - p // 2, 0, M - p)
    idx = start[:, None] + np.arange(p)
    scale = np.max(np.diff(tt)) if M > 1 else 1.0
    d = (tt[idx] - tt[:, None]) / scale
    V = d[:, None, :] ** np.arange(p)[None, :, None]
    rhs = np.zeros((M, p))
    rhs[:, 1] = 1.0
    w = np.linalg.solve(V, rhs[..., None])[..., 0] / scale
    return np.einsum("ij,ij...->i...", w, f[idx])


def _segments(traj: GeodesicTrajectory, breakpoints) -> list:
    """Runs of cells with one chart and no interior breakpoint."""
    cuts = set(traj.switches())
    for tb in breakpoints:
        k = _node_index(traj, tb)
        if 0 < k < traj.cells:
            cuts.add(k - 1)
    edges = [0] + sorted(k + 1 for k in cuts) + [traj.cells]
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _finite_cov(traj: GeodesicTrajectory, values: np.ndarray, breakpoints=()) -> np.ndarray:
    d = np.empty_like(values)
    for a, b in _segments(traj, breakpoints):
        tt = np.append(traj.t[a:b, :2].ravel(), traj.t[b - 1, 2])
        ff = np.concatenate([values[a:b, :2].reshape((-1,) + values.shape[2:]), values[b - 1:b, 2]])
        df = _stencil_derivative(tt, ff)
        m = b - a
        d[a:b, 0] = df[0:2 * m:2]
        d[a:b, 1] = df[1:2 * m:2]
        d[a:b, 2] = df[2:2 * m + 1:2]
    gam = traj.connection.gamma
    return d + np.einsum("cpijk,cpj,cpk->cpi", gam, values, traj.T)


def covariant_derivative_along(traj: GeodesicTrajectory, W: VectorFieldAlongGeodesic) -> VectorFieldAlongGeodesic:
    """``D_T W`` with reference vector ``T``.

    Exact when ``W`` carries its derivative (frame-built fields), otherwise a
    local fourth-degree polynomial derivative on each smooth single-chart stretch.
    """
    _check_aligned(traj, W)
    if W.cov is not None:
        return VectorFieldAlongGeodesic(W.t, W.cov, W.cov2, None, W.breakpoints)
    return VectorFieldAlongGeodesic(W.t, _finite_cov(traj, W.values, W.breakpoints), None, None, W.breakpoints)


def _cov(traj, W):
    return W.cov if W.cov is not None else _finite_cov(traj, W.values, W.breakpoints)


def _cov2(traj, W):
    if W.cov2 is not None:
        return W.cov2
    return _finite_cov(traj, _cov(traj, W), W.breakpoints)


# ---------------------------------------------------------------- index forms


def _gdot(g, u, v):
    return np.einsum("cpi,cpij,cpj->cp", u, g, v)


def index_form(traj: GeodesicTrajectory, V: VectorFieldAlongGeodesic, W: VectorFieldAlongGeodesic) -> float:
    """``I(V, W) = int g_T(D_T V, D_T W) - g_T(R(V, T)T, W) dt`` over the whole trajectory."""
    _check_aligned(traj, V, W)
    c = traj.connection
    dV, dW = _cov(traj, V), _cov(traj, W)
    RV = np.einsum("cpij,cpj->cpi", c.R, V.values)
    RW = np.einsum("cpij,cpj->cpi", c.R, W.values)
    curv = 0.5 * (_gdot(c.g, RV, W.values) + _gdot(c.g, RW, V.values))
    return simpson(traj, _gdot(c.g, dV, dW) - curv)


def index_form_flag(traj: GeodesicTrajectory, W: VectorFieldAlongGeodesic) -> float:
    """``I(W, W) = int g_T(D_T W, D_T W) - K(T, W)(g_T(W, W) - g_T(T, W)^2) dt``.

    The tangential part of ``W`` is projected out before the flag curvature is
    taken; samples where ``W`` is (numerically) parallel to ``T`` contribute no
    curvature term.
    """
    _check_aligned(traj, W)
    c = traj.connection
    T = traj.T
    gTW = _gdot(c.g, T, W.values)
    perp = W.values - gTW[..., None] * T
    gpp = _gdot(c.g, perp, perp)
    gTT = _gdot(c.g, T, T)
    denom = gTT * gpp - _gdot(c.g, T, perp) ** 2
    Rp = np.einsum("cpij,cpj->cpi", c.R, perp)
    num = _gdot(c.g, Rp, perp)
    ok = denom > 1e-14 * np.maximum(gTT * gpp, 1e-300)
    K = np.where(ok, num / np.where(ok, denom, 1.0), 0.0)
    skipped = int(np.count_nonzero(~ok))
    if skipped:
        log.debug("index_form_flag: %d degenerate flag samples carry no curvature term", skipped)
    dW = _cov(traj, W)
    weight = _gdot(c.g, W.values, W.values) - gTW**2
    return simpson(traj, _gdot(c.g, dW, dW) - K * weight)


@dataclass(frozen=True)
class IndexParts:
    boundary: float
    jumps: float
    integral: float

    @property
    def total(self) -> float:
        return self.boundary - self.jumps - self.integral


def index_form_terms(traj, V, W, partition=None) -> IndexParts:
    """The three pieces of the integrated-by-parts index form."""
    _check_aligned(traj, V, W)
    c = traj.connection
    dV = _cov(traj, V)
    ddV = _cov2(traj, V)
    boundary = float(
        dV[-1, 2] @ c.g[-1, 2] @ W.values[-1, 2] - dV[0, 0] @ c.g[0, 0] @ W.values[0, 0]
    )
    if partition is None:
        partition = sorted(set(V.breakpoints) | set(W.breakpoints))
    jumps = 0.0
    if len(partition):
        delta = field_jump(traj, dV)
        for tb in partition:
            k = _node_index(traj, tb)
            if not 0 < k < traj.cells:
                raise AlignmentError(f"partition point {tb} is not interior")
            jumps += float(delta[k - 1] @ c.g[k, 0] @ W.values[k, 0])
    RV = np.einsum("cpij,cpj->cpi", c.R, V.values)
    integral = simpson(traj, _gdot(c.g, ddV + RV, W.values))
    return IndexParts(boundary, jumps, integral)


def index_form_parts(traj: GeodesicTrajectory, V, W, partition=None) -> float:
    """``g(D_T V, W)|_0^L - sum_i g(Delta D_T V, W)(t_i) - int g(D_T D_T V + R(V, T)T, W) dt``."""
    return index_form_terms(traj, V, W, partition).total


# ---------------------------------------------------------------- Jacobi fields


@dataclass(frozen=True, eq=False)
class JacobiMatrixSolution:
    """Frame-reduced Jacobi matrices ``Y``, ``Y'`` at every cell sample, shape ``(N, 3, m, m)``."""

    frame: ParallelFrame
    Y: np.ndarray
    Yp: np.ndarray
    residual: float

    @property
    def t(self) -> np.ndarray:
        return self.frame.trajectory.t

    def det(self) -> np.ndarray:
        return np.linalg.det(self.Y)


def _jacobi_propagate(frame: ParallelFrame, Z0: np.ndarray, policy: NumericsPolicy):
    """Propagate ``z = (y, y')`` (columns of ``Z0``) through ``z' = [[0, I], [-K, 0]] z``."""
    traj = frame.trajectory
    K = frame.curvature_matrix
    m = K.shape[-1]
    A = np.zeros(K.shape[:2] + (2 * m, 2 * m))
    A[..., :m, m:] = np.eye(m)
    A[..., m:, :m] = -K
    M = _rk4_linear(A[:, 0], A[:, 1], A[:, 2], traj.widths)
    out = np.empty((traj.cells, 3) + Z0.shape)
    Z = Z0
    for k in range(traj.cells):
        Zr = M[k] @ Z
        out[k, 0] = Z
        out[k, 2] = Zr
        out[k, 1] = 0.5 * (Z + Zr) + traj.widths[k] / 8.0 * (A[k, 0] @ Z - A[k, 2] @ Zr)
        Z = Zr
    y, yp = out[..., :m, :], out[..., m:, :]
    # residual of y'' + K y = 0: midpoint slope of y' against -K y at the midpoint
    w = traj.widths[:, None, None]
    ypp = (yp[:, 2] - yp[:, 0]) / w
    res = ypp + K[:, 1] @ y[:, 1]
    scale = max(1.0, float(np.max(np.abs(out))))
    residual = float(np.max(np.abs(res))) / scale
    if residual > policy.jacobi_residual:
        raise IntegrationAccuracyError(
            f"Jacobi residual {residual:.3e} exceeds {policy.jacobi_residual:g}; use a smaller step h"
        )
    return y, yp, residual


def _frame_of(obj) -> ParallelFrame:
    if isinstance(obj, ParallelFrame):
        return obj
    if isinstance(obj, GeodesicTrajectory):
        return parallel_frame(obj)
    raise TypeError("expected a GeodesicTrajectory or ParallelFrame")


def jacobi_matrix(traj_or_frame, policy: NumericsPolicy = POLICY) -> JacobiMatrixSolution:
    """Matrix solution with ``Y(0) = 0``, ``Y'(0) = I``."""
    frame = _frame_of(traj_or_frame)
    m = frame.n - 1
    Z0 = np.vstack([np.zeros((m, m)), np.eye(m)])
    y, yp, res = _jacobi_propagate(frame, Z0, policy)
    return JacobiMatrixSolution(frame, y, yp, res)


def jacobi_integrate(traj_or_frame, J0, J0p, policy: NumericsPolicy = POLICY) -> VectorFieldAlongGeodesic:
    """Jacobi field with ``J(0)``, ``D_T J(0)`` given in frame components.

    Components are ``n - 1`` transverse values or ``n`` values including the
    tangential one, which evolves linearly.
    """
    frame = _frame_of(traj_or_frame)
    traj = frame.trajectory
    n, m = frame.n, frame.n - 1
    J0 = np.asarray(J0, float)
    J0p = np.asarray(J0p, float)
    if J0.shape != J0p.shape or J0.shape[0] not in (m, n):
        raise AlignmentError(f"initial data must have {m} or {n} frame components")
    Z0 = np.concatenate([J0[:m], J0p[:m]])[:, None]
    y, yp, _ = _jacobi_propagate(frame, Z0, policy)
    comp = np.zeros((traj.cells, 3, n))
    dcomp = np.zeros_like(comp)
    comp[..., :m] = y[..., 0]
    dcomp[..., :m] = yp[..., 0]
    if J0.shape[0] == n:
        comp[..., m] = J0[m] + J0p[m] * traj.t
        dcomp[..., m] = J0p[m]
    ddcomp = np.zeros_like(comp)
    ddcomp[..., :m] = -np.einsum("cpab,cpb->cpa", frame.curvature_matrix, comp[..., :m])
    vals, cov, cov2 = (np.einsum("cpij,cpj->cpi", frame.E, c) for c in (comp, dcomp, ddcomp))
    return VectorFieldAlongGeodesic(traj.t, vals, cov, cov2)


# ---------------------------------------------------------------- conjugate points


@dataclass(frozen=True)
class ConjugateReport:
    """First conjugate point along a geodesic, or ``t_c = None`` when none occurs up to ``L``."""

    L: float
    t_c: float | None
    bracket: tuple | None = None
    det_values: tuple | None = None
    multiplicity: int = 0

    @property
    def found(self) -> bool:
        return self.t_c is not None

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "t_c": "none" if self.t_c is None else self.t_c,
            "bracket": None if self.bracket is None else list(self.bracket),
            "det_values": None if self.det_values is None else list(self.det_values),
            "multiplicity": self.multiplicity,
        }


def _phases(Y, Yp):
    """Eigenphases of the unitary ``(Y' - iY)(Y' + iY)^-1``.

    An eigenvalue equals 1 exactly when ``Y`` is singular; phases turn
    clockwise, so a conjugate point is a phase crossing 0 from above.
    """
    U = np.linalg.solve(np.swapaxes(Yp + 1j * Y, -1, -2), np.swapaxes(Yp - 1j * Y, -1, -2))
    return np.angle(np.linalg.eigvals(U))


def _lead(ph):
    """Phase closest to 0 per sample."""
    idx = np.argmin(np.abs(ph), axis=-1)
    return np.take_along_axis(ph, idx[..., None], axis=-1)[..., 0]


def _hermite(t0, t1, a, b, da, db, t):
    s = (t - t0) / (t1 - t0)
    h = t1 - t0
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * a + h10 * h * da + h01 * b + h11 * h * db


def first_conjugate_point(traj_or_frame, policy: NumericsPolicy = POLICY) -> ConjugateReport:
    """First zero of ``det Y`` on ``(0, L]``, bracketed to ``policy.conjugate_bracket``."""
    sol = jacobi_matrix(traj_or_frame, policy)
    frame = sol.frame
    traj = frame.trajectory
    K = frame.curvature_matrix
    # flatten samples in time order: left, mid of each cell, then the final right end
    ts = np.append(traj.t[:, :2].ravel(), traj.t[-1, 2])
    Y = np.concatenate([sol.Y[:, :2].reshape((-1,) + sol.Y.shape[2:]), sol.Y[-1:, 2]])
    Yp = np.concatenate([sol.Yp[:, :2].reshape((-1,) + sol.Yp.shape[2:]), sol.Yp[-1:, 2]])
    Ks = np.concatenate([K[:, :2].reshape((-1,) + K.shape[2:]), K[-1:, 2]])
    ph = _phases(Y, Yp)
    s = _lead(ph)
    L = traj.length

    near = np.abs(s) < 1e-9
    near[:2] = False
    if near.any():
        run = np.diff(np.flatnonzero(np.diff(np.concatenate([[0], near.astype(int), [0]]))))[::2]
        if run.size and run.max() >= 20:
            raise DegenerateFamilyError("det Y vanishes identically over an interval; the Jacobi family is degenerate")

    cross = np.flatnonzero((s[1:-1] > 0) & (s[2:] <= 0) & (np.abs(s[1:-1]) < 0.5) & (np.abs(s[2:]) < 0.5))
    if cross.size == 0:
        return ConjugateReport(L, None)
    j = int(cross[0]) + 1
    t0, t1 = ts[j], ts[j + 1]

    def state(t):
        Yt = _hermite(t0, t1, Y[j], Y[j + 1], Yp[j], Yp[j + 1], t)
        Ypt = _hermite(t0, t1, Yp[j], Yp[j + 1], -Ks[j] @ Y[j], -Ks[j + 1] @ Y[j + 1], t)
        return Yt, Ypt

    lo, hi = t0, t1
    while hi - lo >= policy.conjugate_bracket:
        mid = 0.5 * (lo + hi)
        Ym, Ypm = state(mid)
        if _lead(_phases(Ym[None], Ypm[None]))[0] > 0:
            lo = mid
        else:
            hi = mid
    t_c = 0.5 * (lo + hi)
    Yc, Ypc = state(t_c)
    mult = int(np.count_nonzero(np.abs(_phases(Yc[None], Ypc[None])[0]) < 1e-4))
    det_lo = float(np.linalg.det(state(lo)[0]))
    det_hi = float(np.linalg.det(state(hi)[0]))
    return ConjugateReport(L, float(t_c), (float(lo), float(hi)), (det_lo, det_hi), max(mult, 1))


# ---------------------------------------------------------------- trial sums


def _frame_on(traj_or_frame, r: float) -> ParallelFrame:
    frame = _frame_of(traj_or_frame)
    L = frame.trajectory.length
    if not 0 < r <= L + 1e-12:
        raise RangeError(f"r = {r} must lie in (0, L] with L = {L}")
    if abs(r - L) <= 1e-12 * max(1.0, L):
        return frame
    return frame.truncate(r)


@dataclass(frozen=True)
class SineTrialTerms:
    r: float
    per_alpha: tuple
    direct: float
    formula: float
    ric_integral: float

    @property
    def discrepancy(self) -> float:
        return abs(self.direct - self.formula)


def sine_trial_terms(traj_or_frame, r: float, policy: NumericsPolicy = POLICY) -> SineTrialTerms:
    """Both evaluations of ``sum_a I(W_a, W_a)`` for ``W_a = sin(pi t / r) e_a`` on ``[0, r]``."""
    frame = _frame_on(traj_or_frame, r)
    traj = frame.trajectory
    n = frame.n
    prof = sine_profile(r)
    per = []
    for a in range(n - 1):
        profiles = [None] * (n - 1)
        profiles[a] = prof
        W = frame_field(frame, profiles)
        per.append(index_form(traj, W, W))
    direct = float(sum(per))
    ric = frame.ricci
    ric_int = simpson(traj, ric)
    cos2 = np.cos(np.pi * traj.t / r) ** 2
    formula = (n - 1) * np.pi**2 / (2 * r) - ric_int + simpson(traj, ric * cos2)
    terms = SineTrialTerms(float(r), tuple(per), direct, float(formula), ric_int)
    if terms.discrepancy > policy.trial_sum_agreement:
        raise NumericalError(
            f"sine trial sum: direct {direct!r} and Ricci formula {formula!r} differ by {terms.discrepancy:.3e}"
        )
    return terms


def sine_trial_sum(traj_or_frame, r: float, policy: NumericsPolicy = POLICY) -> float:
    return sine_trial_terms(traj_or_frame, r, policy).direct


@dataclass(frozen=True)
class AmbroseTrialTerms:
    b: float
    r: float
    first: float
    middle: float
    last: float
    direct: float
    ric_integral: float

    @property
    def total(self) -> float:
        return self.first - self.middle + self.last

    @property
    def discrepancy(self) -> float:
        return abs(self.total - self.direct)


def ambrose_trial_terms(traj_or_frame, b: float, r: float, policy: NumericsPolicy = POLICY) -> AmbroseTrialTerms:
    """Three-integral sum for ``f = t`` on [0, 1], ``1`` on [1, b], ``(r - t)/(r - b)`` on [b, r]."""
    if not 1 < b < r:
        raise RangeError(f"need 1 < b < r, got b={b}, r={r}")
    frame = _frame_on(traj_or_frame, r)
    traj = frame.trajectory
    n = frame.n
    k1, kb = _node_index(traj, 1.0), _node_index(traj, b)
    cells = np.arange(traj.cells)
    ric = frame.ricci
    t = traj.t
    first = simpson(traj, (n - 1) - t**2 * ric, cells < k1)
    middle = simpson(traj, ric, (cells >= k1) & (cells < kb))
    last = simpson(traj, (n - 1) / (r - b) ** 2 - ((r - t) / (r - b)) ** 2 * ric, cells >= kb)
    prof = ambrose_profile(b, r)
    direct = 0.0
    for a in range(n - 1):
        profiles = [None] * (n - 1)
        profiles[a] = prof
        W = frame_field(frame, profiles)
        direct += index_form(traj, W, W)
    terms = AmbroseTrialTerms(float(b), float(r), first, middle, last, float(direct), simpson(traj, ric))
    if terms.discrepancy > policy.ambrose_agreement:
        raise NumericalError(
            f"Ambrose trial sum: integrals {terms.total!r} and index form {direct!r} differ by {terms.discrepancy:.3e}"
        )
    return terms


def ambrose_trial_sum(traj_or_frame, b: float, r: float, policy: NumericsPolicy = POLICY) -> float:
    return ambrose_trial_terms(traj_or_frame, b, r, policy).total
