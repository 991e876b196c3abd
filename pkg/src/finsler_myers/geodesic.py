"""Unit-speed geodesics, parallel frames and parallel transport.

A trajectory is stored cell by cell: each RK4 step ``[t_k, t_k + w_k]`` keeps
three samples (left, midpoint, right) in the chart the step was taken in. The
midpoint sample comes from an RK4 half-step, so composite Simpson on the cells
and the RK4 stages of the linear transport equations line up exactly.

Transport solves ``dW/dt = -Gamma(x(t), T(t))[W, T]`` (covariant derivative
with reference vector T) by RK4 on the cached connection samples; because the
equation is linear in W, each cell reduces to an n x n propagator.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .connection import orthonormal_completion
from .errors import (
    AlignmentError,
    AtlasCoverageError,
    DomainError,
    IntegrationAccuracyError,
    NumericalDegeneracyError,
)
from .kernels import CHUNK
from .metric import FinslerMetric, chart_switch, check_convex, eval_F
from .numerics import POLICY, NumericsPolicy

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConnectionSamples:
    """Connection data cached at every cell sample, shapes ``(N, 3, ...)``."""

    F: np.ndarray
    g: np.ndarray
    G: np.ndarray
    gamma: np.ndarray
    R: np.ndarray

    def concat(self, other: "ConnectionSamples") -> "ConnectionSamples":
        return ConnectionSamples(*(np.concatenate([a, b]) for a, b in zip(self.astuple(), other.astuple())))

    def slice(self, sl) -> "ConnectionSamples":
        return ConnectionSamples(*(a[sl] for a in self.astuple()))

    def astuple(self):
        return self.F, self.g, self.G, self.gamma, self.R


@dataclass(frozen=True, eq=False)
class GeodesicTrajectory:
    """Arc-length sampled unit-speed geodesic.

    ``t``, ``x``, ``T`` have shapes ``(N, 3)``, ``(N, 3, n)``, ``(N, 3, n)``:
    samples at the left end, midpoint and right end of each of the N cells,
    in chart ``chart[k]``.
    """

    metric: FinslerMetric
    t: np.ndarray
    chart: np.ndarray
    x: np.ndarray
    T: np.ndarray
    h: float
    start: tuple

    @property
    def n(self) -> int:
        return self.metric.dim

    @property
    def cells(self) -> int:
        return len(self.t)

    @property
    def widths(self) -> np.ndarray:
        return self.t[:, 2] - self.t[:, 0]

    @property
    def length(self) -> float:
        return float(self.t[-1, 2])

    def nodes(self):
        """``(t, chart, x, T)`` at the N + 1 cell boundaries, each in its own chart."""
        t = np.append(self.t[:, 0], self.t[-1, 2])
        chart = np.append(self.chart, self.chart[-1])
        x = np.concatenate([self.x[:, 0], self.x[-1:, 2]])
        T = np.concatenate([self.T[:, 0], self.T[-1:, 2]])
        return t, chart, x, T

    def switches(self) -> list[int]:
        """Cell indices k whose right end is re-expressed in a new chart for cell k + 1."""
        return [int(k) for k in np.nonzero(self.chart[1:] != self.chart[:-1])[0]]

    @cached_property
    def connection(self) -> ConnectionSamples:
        return _connection_samples(self.metric, self.chart, self.x, self.T)

    @cached_property
    def propagators(self):
        """Per-cell RK4 transport maps ``M_k`` and chart-switch Jacobians ``{k: J_k}``."""
        gam = self.connection.gamma
        # A[..., i, j] = -Gamma^i_jk T^k
        A = -np.einsum("cpijk,cpk->cpij", gam, self.T)
        M = _rk4_linear(A[:, 0], A[:, 1], A[:, 2], self.widths)
        jac = {}
        for k in self.switches():
            jac[k] = self.metric.chart(int(self.chart[k])).jacobian(int(self.chart[k + 1]), self.x[k, 2])
        return A, M, jac

    def cell_at(self, r: float) -> int:
        k = int(np.searchsorted(self.t[:, 0], r, side="right")) - 1
        return min(max(k, 0), self.cells - 1)

    def truncate(self, r: float) -> "GeodesicTrajectory":
        """The same geodesic on ``[0, r]``; a partial last cell is recomputed from its left node."""
        if not 0 < r <= self.length + 1e-12:
            raise DomainError(f"cannot truncate a trajectory of length {self.length} at r={r}")
        k = self.cell_at(r)
        tol = 1e-12 * max(1.0, r)
        if abs(r - self.t[k, 0]) <= tol and k > 0:
            return self._sliced(k)
        if abs(r - self.t[k, 2]) <= tol:
            return self._sliced(k + 1)
        s = r - self.t[k, 0]
        cid = int(self.chart[k])
        kern = self.metric.kernel(cid)
        xm, vm, x1, v1, _ = kern.chunk(self.metric.jparams(), self.x[k, 0], self.T[k, 0], [s])
        t_new = np.array([[self.t[k, 0], self.t[k, 0] + 0.5 * s, r]])
        x_new = np.stack([self.x[k, 0], xm[0], x1[0]])[None]
        T_new = np.stack([self.T[k, 0], vm[0], v1[0]])[None]
        out = GeodesicTrajectory(
            self.metric,
            np.concatenate([self.t[:k], t_new]),
            np.append(self.chart[:k], cid),
            np.concatenate([self.x[:k], x_new]),
            np.concatenate([self.T[:k], T_new]),
            self.h,
            self.start,
        )
        if "connection" in self.__dict__:
            tail = _connection_samples(self.metric, out.chart[k:], x_new, T_new)
            out.__dict__["connection"] = self.connection.slice(slice(0, k)).concat(tail)
        return out

    def _sliced(self, k: int) -> "GeodesicTrajectory":
        out = GeodesicTrajectory(self.metric, self.t[:k], self.chart[:k], self.x[:k], self.T[:k], self.h, self.start)
        if "connection" in self.__dict__:
            out.__dict__["connection"] = self.connection.slice(slice(0, k))
        return out

    def speed_defect(self) -> float:
        return float(np.max(np.abs(self.connection.F - 1.0)))

    def to_csv(self, stream) -> None:
        """Write node samples as CSV: ``t, chart, x1..xn, T1..Tn``."""
        t, chart, x, T = self.nodes()
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["t", "chart"] + [f"x{i + 1}" for i in range(self.n)] + [f"T{i + 1}" for i in range(self.n)])
        for k in range(len(t)):
            w.writerow([repr(float(t[k])), int(chart[k])] + [repr(float(v)) for v in x[k]] + [repr(float(v)) for v in T[k]])


def _connection_samples(metric, charts, x, T) -> ConnectionSamples:
    N, _, n = x.shape
    F = np.empty((N, 3))
    g = np.empty((N, 3, n, n))
    G = np.empty((N, 3, n))
    gam = np.empty((N, 3, n, n, n))
    R = np.empty((N, 3, n, n))
    for cid in np.unique(charts):
        idx = np.nonzero(charts == cid)[0]
        kern = metric.kernel(int(cid))
        out = kern.bundle(metric.jparams(), x[idx].reshape(-1, n), T[idx].reshape(-1, n))
        for dst, src in zip((F, g, G, gam, R), out):
            dst[idx] = src.reshape((len(idx), 3) + src.shape[1:])
    return ConnectionSamples(F, g, G, gam, R)


def _rk4_linear(Al, Am, Ar, w):
    """RK4 one-step maps for ``z' = A(t) z`` given A at left, middle, right of each cell."""
    n = Al.shape[-1]
    eye = np.eye(n)
    hw = (0.5 * w)[:, None, None]
    ww = w[:, None, None]
    P1 = Al
    P2 = Am + hw * Am @ P1
    P3 = Am + hw * Am @ P2
    P4 = Ar + ww * Ar @ P3
    return eye + ww / 6.0 * (P1 + 2 * P2 + 2 * P3 + P4)


def _grid(L: float, h: float, nodes) -> np.ndarray:
    m = int(np.floor(L / h + 1e-9))
    ts = np.arange(m + 1) * h
    if L - ts[-1] > 1e-9 * max(1.0, L):
        ts = np.append(ts, L)
    else:
        ts[-1] = L
    for node in sorted(set(float(v) for v in nodes)):
        if not 0 < node < L:
            continue
        j = int(np.argmin(np.abs(ts - node)))
        if abs(ts[j] - node) <= 1e-9 * max(1.0, node):
            ts[j] = node
        else:
            ts = np.sort(np.append(ts, node))
    return ts


def integrate_geodesic(
    metric: FinslerMetric,
    chart: int,
    x0,
    y0,
    L: float,
    h: float | None = None,
    nodes=(),
    policy: NumericsPolicy = POLICY,
) -> GeodesicTrajectory:
    """Integrate ``x'' + 2 G(x, x') = 0`` forward over arc length ``[0, L]``.

    ``y0`` must be F-unit. ``nodes`` are extra times inserted into the grid so
    that breakpoints of trial fields fall on cell boundaries. Charts switch
    between steps whenever the current chart stops preferring the point.
    """
    h = policy.h if h is None else float(h)
    if not (0 < h <= policy.h_max):
        raise DomainError(f"step h must satisfy 0 < h <= {policy.h_max}, got {h}")
    if not L > 0:
        raise DomainError(f"length must be positive, got {L}")
    x0 = np.asarray(x0, float)
    y0 = np.asarray(y0, float)
    speed = eval_F(metric, chart, x0, y0)
    if abs(speed - 1.0) > 1e-9:
        raise DomainError(f"initial velocity must be F-unit (F = {speed!r}); normalize y0 first")
    start = (int(chart), x0.copy(), y0.copy())
    cid, x, v = chart_switch(metric, chart, x0, y0)
    widths = np.diff(_grid(float(L), h, nodes))
    params = metric.jparams()

    charts, xs, Ts = [], [], []
    i = 0
    while i < len(widths):
        c = metric.chart(cid)
        w = widths[i:i + CHUNK]
        xm, vm, x1, v1, F1 = metric.kernel(cid).chunk(params, x, v, w)
        dom = c.contains(x1)
        pref = c.prefers(x1)
        bad = ~(np.abs(F1 - 1.0) <= policy.speed_error)
        flags = ~dom | ~pref | bad
        stop = int(np.argmax(flags)) if flags.any() else None
        accept = len(w) if stop is None else stop + 1
        left_x = np.concatenate([x[None], x1[:accept - 1]])
        left_v = np.concatenate([v[None], v1[:accept - 1]])
        xs.append(np.stack([left_x, xm[:accept], x1[:accept]], axis=1))
        Ts.append(np.stack([left_v, vm[:accept], v1[:accept]], axis=1))
        charts.append(np.full(accept, cid))
        t_hit = float(np.sum(widths[:i + accept]))
        if stop is not None and not dom[stop]:
            raise AtlasCoverageError(
                f"geodesic left chart {cid} of {metric.name} at t={t_hit:.6g}, x={x1[stop].tolist()}",
                point=x1[stop], t=t_hit,
            )
        if stop is not None and bad[stop]:
            raise IntegrationAccuracyError(
                f"unit-speed drift |F - 1| = {abs(F1[stop] - 1.0):.3e} at t={t_hit:.6g} exceeds "
                f"{policy.speed_error:g}; use a smaller step h (now {h:g})"
            )
        i += accept
        x, v = x1[accept - 1], v1[accept - 1]
        if stop is not None and i < len(widths):
            try:
                cid, x, v = chart_switch(metric, cid, x, v)
            except AtlasCoverageError as err:
                raise AtlasCoverageError(f"{err} at t={t_hit:.6g}", point=x, t=t_hit) from None
    left = np.concatenate([[0.0], np.cumsum(widths)[:-1]])
    t = np.stack([left, left + 0.5 * widths, left + widths], axis=1)
    t[-1, 2] = float(L)
    return GeodesicTrajectory(metric, t, np.concatenate(charts), np.concatenate(xs), np.concatenate(Ts), h, start)


# ---------------------------------------------------------------- vector fields


@dataclass(frozen=True, eq=False)
class VectorFieldAlongGeodesic:
    """Vector field sampled on a trajectory's cells (coordinates of each cell's chart).

    ``cov`` and ``cov2`` hold ``D_T W`` and ``D_T D_T W`` when they are known
    exactly (fields built from a parallel frame); otherwise they are ``None`` and
    are obtained by finite covariant differences. ``breakpoints`` lists interior
    times where the field is only continuous.
    """

    t: np.ndarray
    values: np.ndarray
    cov: np.ndarray | None = None
    cov2: np.ndarray | None = None
    breakpoints: tuple = field(default=())

    def _combine(self, other, a, b):
        if not np.array_equal(self.t, other.t):
            raise AlignmentError("fields live on different grids")

        def lin(u, v):
            return None if u is None or v is None else a * u + b * v

        bps = tuple(sorted(set(self.breakpoints) | set(other.breakpoints)))
        return VectorFieldAlongGeodesic(self.t, a * self.values + b * other.values,
                                        lin(self.cov, other.cov), lin(self.cov2, other.cov2), bps)

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, c):
        c = float(c)

        def sc(u):
            return None if u is None else c * u

        return VectorFieldAlongGeodesic(self.t, c * self.values, sc(self.cov), sc(self.cov2), self.breakpoints)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


# ---------------------------------------------------------------- frames


@dataclass(frozen=True, eq=False)
class ParallelFrame:
    """``g_T``-orthonormal parallel frame; ``E[k, p][:, i]`` is ``e_{i+1}``, ``e_n = T``."""

    trajectory: GeodesicTrajectory
    E: np.ndarray
    corrections: tuple = ()

    @property
    def n(self) -> int:
        return self.trajectory.n

    @cached_property
    def curvature_matrix(self) -> np.ndarray:
        """``K[k, p, a, b] = g_T(R(e_b, T)T, e_a)`` for the transverse vectors, symmetrized."""
        c = self.trajectory.connection
        m = self.n - 1
        Et = self.E[..., :m]
        K = np.einsum("cpia,cpij,cpjk,cpkb->cpab", Et, c.g, c.R, Et)
        return 0.5 * (K + np.swapaxes(K, -1, -2))

    @cached_property
    def ricci(self) -> np.ndarray:
        return np.trace(self.curvature_matrix, axis1=-2, axis2=-1)

    def truncate(self, r: float) -> "ParallelFrame":
        traj = self.trajectory
        k = traj.cell_at(r)
        short = traj.truncate(r)
        if short.cells <= k or short.t[k, 2] == traj.t[k, 2]:
            return ParallelFrame(short, self.E[:short.cells], self.corrections)
        E_tail = _transport(short, self.E[k, 0], first=k)
        return ParallelFrame(short, np.concatenate([self.E[:k], E_tail]), self.corrections)


def _transport(traj: GeodesicTrajectory, Z0, first: int = 0, repair_every: int = 0, policy=POLICY):
    """Transport the columns of ``Z0`` from the left of cell ``first`` to the end.

    Returns samples of shape ``(N - first, 3, n, m)``. With ``repair_every`` the
    columns are re-orthonormalized (frame use only) every that many cells.
    """
    A, M, jac = traj.propagators
    Z = np.array(Z0, float)
    N = traj.cells
    out = np.empty((N - first, 3) + Z.shape)
    corrections = []
    for k in range(first, N):
        Zl = Z
        Zr = M[k] @ Zl
        w = traj.widths[k]
        out[k - first, 0] = Zl
        out[k - first, 2] = Zr
        out[k - first, 1] = 0.5 * (Zl + Zr) + w / 8.0 * (A[k, 0] @ Zl - A[k, 2] @ Zr)
        Z = jac[k] @ Zr if k in jac else Zr
        if repair_every and (k + 1) % repair_every == 0 and k + 1 < N:
            g = traj.connection.g[k + 1, 0]
            T = traj.T[k + 1, 0]
            fixed = _reorthonormalize(g, T, Z)
            delta = float(np.max(np.abs(fixed - Z)))
            corrections.append((float(traj.t[k + 1, 0]), delta))
            log.debug("frame repair at t=%.6g: correction %.3e", traj.t[k + 1, 0], delta)
            if delta > policy.frame_repair_max:
                raise NumericalDegeneracyError(
                    f"frame drift correction {delta:.3e} at t={traj.t[k + 1, 0]:.6g} exceeds {policy.frame_repair_max:g}"
                )
            Z = fixed
    if repair_every:
        return out, tuple(corrections)
    return out


def _reorthonormalize(g, T, Z):
    """In-order ``g``-Gram-Schmidt of the transverse columns against ``l = T/F``; last column becomes ``l``."""
    l = T / np.sqrt(T @ g @ T)
    cols = []
    for a in range(Z.shape[1] - 1):
        w = Z[:, a] - (l @ g @ Z[:, a]) * l
        for e in cols:
            w = w - (e @ g @ w) * e
        cols.append(w / np.sqrt(w @ g @ w))
    return np.column_stack(cols + [l])


def initial_frame(traj: GeodesicTrajectory) -> np.ndarray:
    g0 = traj.connection.g[0, 0]
    check_convex(g0, traj.x[0, 0], traj.T[0, 0])
    return orthonormal_completion(g0, traj.T[0, 0])


def parallel_frame(traj: GeodesicTrajectory, policy: NumericsPolicy = POLICY) -> ParallelFrame:
    """Parallel ``g_T``-orthonormal frame seeded by ``g_T``-Gram-Schmidt on ``T`` and the coordinate basis."""
    E0 = initial_frame(traj)
    E, corrections = _transport(traj, E0, repair_every=policy.frame_repair_every, policy=policy)
    return ParallelFrame(traj, E, corrections)


def parallel_transport(traj: GeodesicTrajectory, W0) -> VectorFieldAlongGeodesic:
    """Parallel transport of ``W0`` (coordinates of the starting chart) along the trajectory."""
    W0 = np.asarray(W0, float)
    if W0.shape != (traj.n,):
        raise AlignmentError(f"expected a vector with {traj.n} components")
    vals = _transport(traj, W0[:, None])[..., 0]
    return VectorFieldAlongGeodesic(traj.t, vals)
