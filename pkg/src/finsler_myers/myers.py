"""Myers-type bounds, hypothesis checkers and per-ray verification.

Bounds are closed forms in ``(a, n, Lambda, eps)``. The checkers work on
sampled Ricci curvature along a geodesic; the verifiers integrate geodesics in a
set of directions, sample ``Ric(t)`` from a parallel frame and compare the
first conjugate distance with the bound.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson as _simpson

from .errors import AtlasCoverageError, DomainError, FinslerError, RangeError
from .geodesic import integrate_geodesic, parallel_frame
from .metric import FinslerMetric, eval_F
from .numerics import POLICY, NumericsPolicy
from .variational import ambrose_trial_terms, first_conjugate_point

log = logging.getLogger(__name__)

HOLDS = "holds"
FAILS = "fails"
INFEASIBLE = "infeasible-as-stated"

CONFIRMED = "confirmed"
VACUOUS = "vacuous"
COUNTEREXAMPLE = "counterexample-flag"
ERROR = "error"


# ---------------------------------------------------------------- bounds


@dataclass(frozen=True)
class BoundParams:
    a: float
    n: int
    Lambda: float = 0.0
    epsilon: int = -1

    def __post_init__(self):
        if not (np.isfinite(self.a) and self.a > 0):
            raise DomainError(f"curvature scale a must be positive, got {self.a}")
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"dimension n must be an integer >= 2, got {self.n}")
        if not (np.isfinite(self.Lambda) and self.Lambda >= 0):
            raise DomainError(f"Lambda must be nonnegative, got {self.Lambda}")
        if self.epsilon not in (1, -1):
            raise DomainError(f"epsilon must be +1 or -1, got {self.epsilon}")

    @property
    def shift(self) -> float:
        """``Lambda / (a (n - 1))``."""
        return self.Lambda / (self.a * (self.n - 1))

    def to_dict(self) -> dict:
        return {"a": self.a, "n": self.n, "Lambda": self.Lambda, "epsilon": self.epsilon}


def bound_classical(a: float) -> float:
    """Bonnet-Myers conjugate distance ``pi / sqrt(a)``."""
    BoundParams(a, 2)
    return math.pi / math.sqrt(a)


def _root(p: BoundParams) -> float:
    # sqrt(pi^2/a + c^2) written so that c = 0 gives pi/sqrt(a) bit for bit
    return math.hypot(math.pi / math.sqrt(p.a), p.shift)


def bound_theorem2(a: float, n: int, Lambda: float) -> float:
    p = BoundParams(a, n, Lambda)
    return p.shift + _root(p)


def bound_theoremA(a: float, n: int, Lambda: float, epsilon: int) -> float:
    """``-eps Lambda / (a(n-1)) + sqrt(pi^2/a + Lambda^2 / (a^2 (n-1)^2))``."""
    p = BoundParams(a, n, Lambda, epsilon)
    if p.epsilon == -1 or p.shift == 0.0:
        return p.shift + _root(p)
    # root - shift without cancellation for large Lambda
    s = math.pi / math.sqrt(p.a)
    return s * s / (_root(p) + p.shift)


def bound_wu(a: float, n: int, Lambda: float) -> float:
    p = BoundParams(a, n, Lambda)
    return math.pi / math.sqrt(p.a) + p.shift


def bound_table(params: BoundParams) -> list[tuple[str, float]]:
    a, n, lam = params.a, params.n, params.Lambda
    return [
        ("classical", bound_classical(a)),
        ("theorem2", bound_theorem2(a, n, lam)),
        ("theoremA_eps_minus", bound_theoremA(a, n, lam, -1)),
        ("theoremA_eps_plus", bound_theoremA(a, n, lam, 1)),
        ("wu", bound_wu(a, n, lam)),
    ]


# ---------------------------------------------------------------- hypothesis checks


@dataclass(frozen=True)
class Condition:
    name: str
    verdict: str
    margin: float
    witness: tuple = ()
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "margin": self.margin,
            "witness": list(self.witness),
            "detail": self.detail,
        }


@dataclass(frozen=True)
class HypothesisReport:
    theorem: str
    conditions: tuple
    L: float
    ric_integral: float
    ric_sup: float
    extra: dict = field(default_factory=dict)

    def condition(self, name: str) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def holds(self) -> bool:
        return all(c.verdict == HOLDS for c in self.conditions)

    @property
    def infeasible(self) -> bool:
        return any(c.verdict == INFEASIBLE for c in self.conditions)

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "L": self.L,
            "ric_integral": self.ric_integral,
            "ric_sup": self.ric_sup,
            "conditions": [c.to_dict() for c in self.conditions],
            **self.extra,
        }


def _samples(t, ric):
    t = np.asarray(t, float).ravel()
    ric = np.asarray(ric, float).ravel()
    if t.size == 0 or ric.size == 0:
        raise DomainError("no Ricci samples given")
    if t.shape != ric.shape:
        raise DomainError("t and Ric samples differ in length")
    if np.any(np.diff(t) <= 0):
        raise DomainError("sample times must be strictly increasing")
    return t, ric


def check_theoremA_hypotheses(t, ric, params: BoundParams, policy: NumericsPolicy = POLICY) -> HypothesisReport:
    """Theorem A: a) ``sup Ric < (n-1)a``; b) ``int_0^L Ric dt >= a(n-1)L + eps Lambda``.

    ``t`` runs from 0 to ``L``. With ``eps = +1``, ``Lambda > 0`` and a)
    holding, b) cannot hold (the integral is below ``a(n-1)L``); that case is
    reported as infeasible as stated rather than as an ordinary failure.
    """
    t, ric = _samples(t, ric)
    a, n, lam, eps = params.a, params.n, params.Lambda, params.epsilon
    L = float(t[-1] - t[0])
    cap = (n - 1) * a
    sup_i = int(np.argmax(ric))
    sup = float(ric[sup_i])
    margin_a = cap - sup
    if margin_a >= policy.strict_margin:
        cond_a = Condition("a", HOLDS, margin_a)
    else:
        cond_a = Condition("a", FAILS, margin_a, (float(t[sup_i]),), "sup Ric reaches (n-1)a")
    integral = float(_simpson(ric, x=t)) if t.size > 1 else 0.0
    target = a * (n - 1) * L + eps * lam
    margin_b = integral - target
    if eps == 1 and lam > 0 and cond_a.verdict == HOLDS:
        cond_b = Condition(
            "b", INFEASIBLE, margin_b, (L,),
            f"int Ric = {integral!r} < a(n-1)L = {a * (n - 1) * L!r} whenever a) holds, "
            f"so int Ric >= a(n-1)L + Lambda is impossible",
        )
    elif margin_b >= -policy.quadrature_abs:
        cond_b = Condition("b", HOLDS, margin_b)
    else:
        cond_b = Condition("b", FAILS, margin_b, (L,), "int_0^L Ric below a(n-1)L + eps Lambda")
    return HypothesisReport("A", (cond_a, cond_b), L, integral, sup)


def check_theorem2_hypotheses(t, ric, f, a: float, n: int, Lambda: float,
                              policy: NumericsPolicy = POLICY) -> HypothesisReport:
    """Theorem 2: a) ``Ric >= (n-1)a + f'`` with ``|f| <= Lambda/pi``.

    ``f'`` is taken by second-order differences on the sample grid. The report
    also records where the window ``(n-1)a + f' <= Ric < (n-1)a`` is occupied.
    """
    t, ric = _samples(t, ric)
    f = np.asarray(f, float).ravel()
    if f.shape != t.shape:
        raise DomainError("f must be sampled on the same grid as Ric")
    p = BoundParams(a, n, Lambda)
    df = np.gradient(f, t, edge_order=2) if t.size > 2 else np.zeros_like(t)
    lower = (n - 1) * p.a + df
    gap = ric - lower
    i = int(np.argmin(gap))
    margin_a = float(gap[i])
    if margin_a >= -policy.derivative_tol:
        cond_a = Condition("a", HOLDS, margin_a)
    else:
        cond_a = Condition("a", FAILS, margin_a, (float(t[i]),), "Ric below (n-1)a + df/dt")
    excess = np.abs(f) - Lambda / math.pi
    j = int(np.argmax(excess))
    if excess[j] <= policy.derivative_tol:
        cond_f = Condition("f_bound", HOLDS, float(-excess[j]))
    else:
        cond_f = Condition("f_bound", FAILS, float(-excess[j]), (float(t[j]),), "|f| exceeds Lambda/pi")
    window = (gap >= -policy.derivative_tol) & (ric < (n - 1) * p.a)
    L = float(t[-1] - t[0])
    integral = float(_simpson(ric, x=t)) if t.size > 1 else 0.0
    extra = {
        "window_occupied": bool(window.any()),
        "window_fraction": float(window.mean()),
        "window_first_t": float(t[np.argmax(window)]) if window.any() else None,
        "ric_min": float(ric.min()),
    }
    return HypothesisReport("2", (cond_a, cond_f), L, integral, float(ric.max()), extra)


# ---------------------------------------------------------------- directions


def default_directions(metric: FinslerMetric, chart: int, x0, count: int = 64, seed: int = 0) -> np.ndarray:
    """``count`` F-unit vectors at ``x0``.

    In dimension two they are evenly spread in angle; in higher dimension
    seeded Gaussian samples. Each is rescaled onto the indicatrix.
    """
    n = metric.dim
    if count < 1:
        raise DomainError("direction count must be positive")
    if n == 2:
        ang = 2 * np.pi * np.arange(count) / count
        raw = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        rng = np.random.default_rng(seed)
        raw = rng.standard_normal((count, n))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    return np.array([v / eval_F(metric, chart, x0, v) for v in raw])


def _run(worker, items, workers: int):
    if workers <= 1:
        return [worker(i, v) for i, v in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda iv: worker(*iv), items))


# ---------------------------------------------------------------- Theorem A verification


@dataclass(frozen=True)
class MyersReport:
    index: int
    metric: str
    chart: int
    x0: tuple
    y0: tuple
    params: BoundParams
    bound: float
    L: float
    hypotheses: HypothesisReport | None
    hypotheses_at_bound: HypothesisReport | None
    t_c: float | None
    verdict: str
    message: str = ""
    samples: tuple | None = None

    def to_dict(self, include_samples: bool = False) -> dict:
        out = {
            "index": self.index,
            "chart": self.chart,
            "x0": list(self.x0),
            "y0": list(self.y0),
            "bound": self.bound,
            "L": self.L,
            "t_c": "none" if self.t_c is None else self.t_c,
            "verdict": self.verdict,
            "hypotheses": None if self.hypotheses is None else self.hypotheses.to_dict(),
            "hypotheses_at_bound": None if self.hypotheses_at_bound is None else self.hypotheses_at_bound.to_dict(),
        }
        if self.message:
            out["message"] = self.message
        if include_samples and self.samples is not None:
            out["samples"] = {"t": list(self.samples[0]), "ric": list(self.samples[1])}
        return out


def _ric_samples(frame):
    tr = frame.trajectory
    t = np.append(tr.t[:, :2].ravel(), tr.t[-1, 2])
    ric = np.append(frame.ricci[:, :2].ravel(), frame.ricci[-1, 2])
    return t, ric


def _verdict(hyp, hyp_bound, t_c, bound, policy) -> str:
    if hyp.infeasible or (hyp_bound is not None and hyp_bound.infeasible):
        return INFEASIBLE
    if hyp.holds and (hyp_bound is None or hyp_bound.holds):
        if t_c is not None and t_c <= bound + policy.confirm_slack:
            return CONFIRMED
        return COUNTEREXAMPLE
    return VACUOUS


def myers_verify(
    metric: FinslerMetric,
    chart: int,
    x0,
    directions,
    params: BoundParams,
    L_max: float,
    h: float | None = None,
    workers: int = 1,
    policy: NumericsPolicy = POLICY,
) -> list[MyersReport]:
    """Theorem A along each direction: hypotheses, bound and first conjugate distance.

    Each geodesic runs to ``min(L_max, 1.1 bound)``. Hypothesis b) is checked on
    ``[0, L]`` and, when ``bound <= L``, again on ``[0, bound]``. Integration
    failures are recorded as ``error`` verdicts for that direction only.
    """
    bound = bound_theoremA(params.a, params.n, params.Lambda, params.epsilon)
    L = min(float(L_max), 1.1 * bound)
    x0 = np.asarray(x0, float)

    def one(i, y0):
        y0 = np.asarray(y0, float)
        base = dict(index=i, metric=metric.name, chart=chart, x0=tuple(x0.tolist()), y0=tuple(y0.tolist()),
                    params=params, bound=bound, L=L)
        try:
            nodes = (bound,) if bound < L else ()
            traj = integrate_geodesic(metric, chart, x0, y0, L, h=h, nodes=nodes, policy=policy)
            frame = parallel_frame(traj, policy)
            t, ric = _ric_samples(frame)
            hyp = check_theoremA_hypotheses(t, ric, params, policy)
            hyp_b = None
            if bound <= L:
                keep = t <= bound + 1e-12
                hyp_b = check_theoremA_hypotheses(t[keep], ric[keep], params, policy)
            conj = first_conjugate_point(frame, policy)
        except (FinslerError, np.linalg.LinAlgError) as err:
            log.warning("direction %d: %s", i, err)
            return MyersReport(hypotheses=None, hypotheses_at_bound=None, t_c=None, verdict=ERROR,
                               message=f"{type(err).__name__}: {err}", **base)
        verdict = _verdict(hyp, hyp_b, conj.t_c, bound, policy)
        return MyersReport(hypotheses=hyp, hypotheses_at_bound=hyp_b, t_c=conj.t_c, verdict=verdict,
                           samples=(tuple(t.tolist()), tuple(ric.tolist())), **base)

    return _run(one, list(enumerate(directions)), workers)


def myers_json(metric: FinslerMetric, params: BoundParams, reports, include_samples: bool = False) -> str:
    doc = {
        "metric": dict(metric.spec) or {"name": metric.name},
        "params": params.to_dict(),
        "bound": reports[0].bound if reports else None,
        "directions": [r.to_dict(include_samples) for r in reports],
    }
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def myers_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["direction", "t_c", "bound", "verdict", "hyp_a", "hyp_b", "hyp_b_at_bound", "ric_integral"])
    for r in reports:
        h = r.hypotheses
        hb = r.hypotheses_at_bound
        w.writerow([
            r.index,
            "none" if r.t_c is None else repr(r.t_c),
            repr(r.bound),
            r.verdict,
            "" if h is None else h.condition("a").verdict,
            "" if h is None else h.condition("b").verdict,
            "" if hb is None else hb.condition("b").verdict,
            "" if h is None else repr(h.ric_integral),
        ])
    return buf.getvalue()


# ---------------------------------------------------------------- Theorem B probe


@dataclass(frozen=True)
class ProbeReport:
    index: int
    y0: tuple
    b: float
    r_max: float
    r_hit: float | None
    sum_at_hit: float | None
    t_c: float | None
    agrees: bool | None
    rows: tuple
    verdict: str
    message: str = ""

    @property
    def conclusive(self) -> bool:
        return self.r_hit is not None


def _cumsimpson(traj, f):
    """Running Simpson integral at every node (length N + 1)."""
    w = traj.widths
    per = w / 6.0 * (f[:, 0] + 4.0 * f[:, 1] + f[:, 2])
    return np.concatenate([[0.0], np.cumsum(per)])


def theoremB_probe(
    metric: FinslerMetric,
    chart: int,
    x0,
    directions,
    r_max: float,
    b: float,
    r_step: float = 0.1,
    h: float | None = None,
    workers: int = 1,
    policy: NumericsPolicy = POLICY,
) -> list[ProbeReport]:
    """Finite-horizon Ambrose-type probe along each ray.

    For ``r`` on a grid of spacing ``r_step`` in ``(b, r_max]`` the three-integral
    trial sum is evaluated from running integrals; the first ``r`` where it is
    ``<= 0`` is re-evaluated in full (including the direct index-form cross
    check) and compared with the first conjugate point. Rays whose sum stays
    positive are ``inconclusive``; nothing is ever claimed about compactness.
    """
    if not 1 < b < r_max:
        raise RangeError(f"need 1 < b < r_max, got b={b}, r_max={r_max}")
    x0 = np.asarray(x0, float)
    k = int(math.floor((r_max - b) / r_step + 1e-9))
    rs = np.round(b + r_step * np.arange(1, k + 1), 12)
    if rs.size == 0 or r_max - rs[-1] > 1e-9:
        rs = np.append(rs, r_max)
    rs[-1] = min(rs[-1], r_max)

    def one(i, y0):
        y0 = np.asarray(y0, float)
        try:
            traj = integrate_geodesic(metric, chart, x0, y0, r_max, h=h, nodes=(1.0, b, *rs), policy=policy)
            frame = parallel_frame(traj, policy)
            n = frame.n
            ric = frame.ricci
            t = traj.t
            nodes = np.append(t[:, 0], t[-1, 2])
            I0 = _cumsimpson(traj, ric)
            I1 = _cumsimpson(traj, t * ric)
            I2 = _cumsimpson(traj, t * t * ric)
            Q = _cumsimpson(traj, (n - 1) - t * t * ric)
            k1 = int(np.argmin(np.abs(nodes - 1.0)))
            kb = int(np.argmin(np.abs(nodes - b)))
            first = Q[k1]
            middle = I0[kb] - I0[k1]
            rows, hit = [], None
            for r in rs:
                kr = int(np.argmin(np.abs(nodes - r)))
                d = r - b
                tail = (I0[kr] - I0[kb]) * r * r - 2 * r * (I1[kr] - I1[kb]) + (I2[kr] - I2[kb])
                total = first - middle + (n - 1) / d - tail / (d * d)
                rows.append((float(r), float(total), float(I0[kr])))
                if hit is None and total <= 0:
                    hit = float(r)
            conj = first_conjugate_point(frame, policy)
        except (FinslerError, np.linalg.LinAlgError) as err:
            log.warning("probe direction %d: %s", i, err)
            return ProbeReport(i, tuple(y0.tolist()), b, r_max, None, None, None, None, (), ERROR,
                               f"{type(err).__name__}: {err}")
        if hit is None:
            return ProbeReport(i, tuple(y0.tolist()), b, r_max, None, None, conj.t_c, None, tuple(rows), "inconclusive")
        terms = ambrose_trial_terms(frame, b, hit, policy)
        agrees = conj.t_c is not None and conj.t_c <= hit
        return ProbeReport(i, tuple(y0.tolist()), b, r_max, hit, terms.total, conj.t_c, agrees, tuple(rows),
                           "conjugate" if agrees else "disagreement")

    return _run(one, list(enumerate(directions)), workers)


def probe_csv(reports, rows: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if rows:
        w.writerow(["direction", "r", "trial_sum", "ric_integral"])
        for rep in reports:
            for r, s, ri in rep.rows:
                w.writerow([rep.index, repr(r), repr(s), repr(ri)])
    else:
        w.writerow(["direction", "verdict", "r_hit", "sum_at_hit", "t_c", "agrees"])
        for rep in reports:
            w.writerow([
                rep.index, rep.verdict,
                "" if rep.r_hit is None else repr(rep.r_hit),
                "" if rep.sum_at_hit is None else repr(rep.sum_at_hit),
                "none" if rep.t_c is None else repr(rep.t_c),
                "" if rep.agrees is None else str(rep.agrees).lower(),
            ])
    return buf.getvalue()
