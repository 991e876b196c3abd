"""Finsler structures on coordinate charts and the built-in example metrics."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping

import jax
import jax.numpy as jnp
import numpy as np

from .errors import AtlasCoverageError, ConvexityError, DomainError, SingularInputError
from .kernels import get_kernel


@dataclass(frozen=True, eq=False)
class Chart:
    """One coordinate chart.

    ``domain`` and ``preferred`` are predicates on points (they also accept a
    stack of points, shape ``(..., n)``). ``preferred`` marks the region where
    integration stays in this chart; outside it the atlas switches charts.
    ``transitions`` maps another chart id to the point map into that chart.
    """

    id: int
    dim: int
    evaluator: Callable
    domain: Callable
    preferred: Callable | None = None
    transitions: Mapping[int, Callable] = field(default_factory=dict)

    def contains(self, x) -> np.ndarray:
        return np.asarray(self.domain(jnp.asarray(x, float)))

    def prefers(self, x) -> np.ndarray:
        pred = self.preferred or self.domain
        return np.asarray(pred(jnp.asarray(x, float))) & self.contains(x)

    def push(self, target: int, x, y=None):
        """Map ``x`` (and tangent vectors ``y``, columns allowed) into chart ``target``."""
        phi = self.transitions[target]
        x = jnp.asarray(x, float)
        x_new = np.asarray(phi(x))
        if y is None:
            return x_new
        jac = np.asarray(jax.jacfwd(phi)(x))
        return x_new, jac @ np.asarray(y, float)

    def jacobian(self, target: int, x) -> np.ndarray:
        return np.asarray(jax.jacfwd(self.transitions[target])(jnp.asarray(x, float)))


@dataclass(frozen=True, eq=False)
class FinslerMetric:
    """An atlas plus a Finsler function on each chart. Immutable after construction."""

    name: str
    charts: tuple
    params: np.ndarray
    riemannian: bool = False
    spec: Mapping = field(default_factory=dict)

    def __post_init__(self):
        p = np.array(self.params, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "params", p)

    @property
    def dim(self) -> int:
        return self.charts[0].dim

    def chart(self, cid: int) -> Chart:
        for c in self.charts:
            if c.id == cid:
                return c
        raise DomainError(f"metric {self.name!r} has no chart {cid}")

    def kernel(self, cid: int):
        return get_kernel(self.chart(cid).evaluator)

    def jparams(self):
        return jnp.asarray(self.params)

    def __repr__(self):
        return f"FinslerMetric({self.name!r}, dim={self.dim}, charts={len(self.charts)})"


def _check_point(metric: FinslerMetric, chart: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (metric.dim,):
        raise DomainError(f"expected a point of dimension {metric.dim}, got shape {x.shape}")
    if not metric.chart(chart).contains(x):
        raise DomainError(f"point {x.tolist()} outside the domain of chart {chart} of {metric.name}")
    return x


def eval_F(metric: FinslerMetric, chart: int, x, y) -> float:
    x = _check_point(metric, chart, x)
    y = np.asarray(y, dtype=float)
    if not np.any(y):
        return 0.0
    return metric.kernel(chart).F(metric.jparams(), x, y)


def point_bundle(metric: FinslerMetric, chart: int, x, y):
    """``(F, g, G, Gamma, R)`` at a single point of the slit tangent bundle."""
    x = _check_point(metric, chart, x)
    y = np.asarray(y, dtype=float)
    if not np.any(y):
        raise SingularInputError("y = 0: the fundamental tensor is undefined on the zero section")
    out = metric.kernel(chart).bundle(metric.jparams(), x[None], y[None])
    return tuple(a[0] for a in out)


def check_convex(g: np.ndarray, x, y) -> None:
    if not np.all(np.isfinite(g)):
        raise ConvexityError(f"fundamental tensor not finite at x={np.asarray(x).tolist()}, y={np.asarray(y).tolist()}")
    w = np.linalg.eigvalsh(g)
    if w[0] <= 0:
        raise ConvexityError(
            f"fundamental tensor not positive definite at x={np.asarray(x).tolist()}, "
            f"y={np.asarray(y).tolist()} (min eigenvalue {w[0]:.3e})"
        )


def fundamental_tensor(metric: FinslerMetric, chart: int, x, y) -> np.ndarray:
    """``g_ij = (1/2) d2(F^2)/dy^i dy^j``, symmetric positive definite."""
    _, g, *_ = point_bundle(metric, chart, x, y)
    check_convex(g, x, y)
    return g


def chart_switch(metric: FinslerMetric, chart: int, x, y, target: int | None = None):
    """Move a state ``(chart, x, y)`` to a chart that prefers ``x``.

    Returns the state unchanged when the current chart already prefers ``x`` and
    no explicit ``target`` is given, or when ``target`` is the current chart.
    ``y`` may be a vector or a matrix of column vectors.
    """
    c = metric.chart(chart)
    x = np.asarray(x, float)
    if target == chart:
        if not c.contains(x):
            raise AtlasCoverageError(f"chart {chart} of {metric.name} does not contain x={x.tolist()}", point=x)
        return chart, x, np.asarray(y, float)
    if target is None:
        if c.prefers(x):
            return chart, x, np.asarray(y, float)
        candidates = list(c.transitions)
    else:
        candidates = [target]
    for tid in candidates:
        if tid not in c.transitions:
            raise AtlasCoverageError(f"no transition from chart {chart} to chart {tid}", point=x)
        x_new, y_new = c.push(tid, x, y)
        dest = metric.chart(tid)
        ok = dest.contains(x_new) if target is not None else dest.prefers(x_new)
        if ok:
            return tid, x_new, y_new
    raise AtlasCoverageError(f"no chart of {metric.name} covers x={x.tolist()} (chart {chart})", point=x)


# ---------------------------------------------------------------- built-ins


def _euclid_F(p, x, y):
    return jnp.sqrt(jnp.sum(y * y))


def _everywhere(x):
    return jnp.all(jnp.isfinite(x), axis=-1)


def euclidean(n: int = 2) -> FinslerMetric:
    if n < 2:
        raise DomainError("dimension must be >= 2")
    chart = Chart(0, n, _euclid_F, _everywhere)
    return FinslerMetric("euclidean", (chart,), np.zeros(1), riemannian=True,
                         spec={"name": "euclidean", "n": n})


def _sphere_F(p, x, y):
    # stereographic model of the sphere of radius 1/sqrt(a): g = 4 delta / (1 + a|x|^2)^2
    return 2.0 * jnp.sqrt(jnp.sum(y * y)) / (1.0 + p[0] * jnp.sum(x * x))


def _stereo_atlas(n, a, evaluator, factor=2.0):
    limit = factor / np.sqrt(a)

    def preferred(x):
        return jnp.sum(x * x, axis=-1) <= limit**2

    def flip(x):
        return x / (a * jnp.sum(x * x))

    north = Chart(0, n, evaluator, _everywhere, preferred, {1: flip})
    south = Chart(1, n, evaluator, _everywhere, preferred, {0: flip})
    return north, south


def sphere(n: int = 2, a: float = 1.0, switch_factor: float = 2.0) -> FinslerMetric:
    """Round sphere of constant curvature ``a`` in north/south stereographic charts.

    Chart 0 projects from the south pole; chart 1 from the north pole; the
    transition is ``x -> x / (a |x|^2)``. Each chart is preferred while
    ``|x| <= switch_factor / sqrt(a)``.
    """
    if n < 2:
        raise DomainError("dimension must be >= 2")
    if not a > 0:
        raise DomainError("sphere curvature a must be > 0")
    if not switch_factor > 1:
        raise DomainError("switch_factor must exceed 1 so the preferred regions overlap")
    charts = _stereo_atlas(n, float(a), _sphere_F, float(switch_factor))
    spec = {"name": "sphere", "n": n, "a": float(a)}
    if switch_factor != 2.0:
        spec["switch_factor"] = float(switch_factor)
    return FinslerMetric(f"sphere(n={n}, a={a:g})", charts, np.array([a], float), riemannian=True, spec=spec)


@lru_cache(maxsize=None)
def _randers_evaluator(base_evaluator, n_base_params, n):
    def F(p, x, y):
        pb = p[:n_base_params]
        b = p[n_base_params:n_base_params + n]
        omega = p[n_base_params + n]
        alpha = base_evaluator(pb, x, y)
        rot = jnp.zeros(n).at[0].set(-x[1]).at[1].set(x[0])

        # alpha-dual of the rotation field, g_alpha(rot, y), by polarization
        rot_y = 0.25 * (base_evaluator(pb, x, rot + y) ** 2 - base_evaluator(pb, x, rot - y) ** 2)
        return alpha + b @ y + omega * rot_y

    return F


def randers(base: FinslerMetric, b=None, rotation: float = 0.0) -> FinslerMetric:
    """Randers metric ``F = alpha + beta`` over a Riemannian ``base``.

    ``beta = b + rotation * alpha(R, .)`` where ``b`` is a constant covector and
    ``R = (-x^2, x^1, 0, ...)`` is the coordinate rotation field. A constant ``b``
    is only chart-invariant on single-chart bases. On the stereographic sphere the
    rotation field is a Killing field in both charts, so ``rotation`` gives a
    globally smooth non-Riemannian example; strong convexity needs
    ``|rotation| < sqrt(a)``.
    """
    if not base.riemannian:
        raise DomainError("randers base must be Riemannian")
    n = base.dim
    b = np.zeros(n) if b is None else np.asarray(b, float)
    if b.shape != (n,):
        raise DomainError(f"beta covector must have {n} components")
    if np.any(b) and len(base.charts) > 1:
        raise DomainError("a constant beta covector is only allowed on single-chart bases")
    if base.spec.get("name") == "sphere" and abs(rotation) >= np.sqrt(base.spec["a"]):
        raise DomainError("rotation strength must satisfy |rotation| < sqrt(a) (||beta|| < 1)")
    if base.spec.get("name") == "euclidean" and rotation != 0.0:
        raise DomainError("rotation one-form is unbounded on euclidean space")
    if np.linalg.norm(b) >= 1.0 and base.spec.get("name") == "euclidean":
        raise DomainError("need ||beta||_alpha < 1")
    ev = _randers_evaluator(base.charts[0].evaluator, len(base.params), n)
    charts = tuple(
        Chart(c.id, n, ev, c.domain, c.preferred, dict(c.transitions)) for c in base.charts
    )
    params = np.concatenate([base.params, b, [rotation]])
    spec = {"name": "randers", "base": dict(base.spec), "b": b.tolist(), "rotation": float(rotation)}
    return FinslerMetric(f"randers({base.name}, b={b.tolist()}, rotation={rotation:g})", charts, params,
                         riemannian=False, spec=spec)


WARPING = {
    "cosh": jnp.cosh,
    "sin": jnp.sin,
    "exp": jnp.exp,
}


@lru_cache(maxsize=None)
def _warped_evaluator(phi):
    def F(p, x, y):
        return jnp.sqrt(y[0] ** 2 + (phi(x[0]) * y[1]) ** 2)

    return F


def warped_surface(phi="cosh") -> FinslerMetric:
    """2-D warped product ``F^2 = (y^1)^2 + phi(x^1)^2 (y^2)^2`` on ``{phi(x^1) > 0}``.

    Lines ``x^2 = const`` are unit-speed geodesics and the curvature is
    ``-phi''/phi``: ``cosh`` gives -1, ``sin`` gives +1 (the round sphere
    without its poles).
    """
    if isinstance(phi, str):
        if phi not in WARPING:
            raise DomainError(f"unknown warping function {phi!r}; choose from {sorted(WARPING)}")
        name, fn = phi, WARPING[phi]
    else:
        name, fn = getattr(phi, "__name__", "phi"), phi

    def domain(x):
        return fn(x[..., 0]) > 0

    chart = Chart(0, 2, _warped_evaluator(fn), domain)
    return FinslerMetric(f"warped_surface({name})", (chart,), np.zeros(1), riemannian=True,
                         spec={"name": "warped_surface", "phi": name})


BUILTINS = {
    "euclidean": euclidean,
    "sphere": sphere,
    "randers": randers,
    "warped_surface": warped_surface,
}


def metric_from_spec(spec: Mapping) -> FinslerMetric:
    """Build a metric from ``{"name": ..., **params}`` (the CLI config form)."""
    spec = dict(spec)
    name = spec.pop("name", None)
    if name not in BUILTINS:
        raise DomainError(f"unknown metric {name!r}; choose from {sorted(BUILTINS)}")
    if name == "randers":
        base = metric_from_spec(spec.pop("base", {"name": "euclidean", "n": 2}))
        return randers(base, **spec)
    return BUILTINS[name](**spec)
