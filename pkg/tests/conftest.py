import numpy as np
import pytest

from finsler_myers import euclidean, eval_F, randers, sphere, warped_surface
from finsler_myers.variational import Profile, frame_field

ACCEPTANCE_LINES = []


def builtin_metrics():
    """One representative of every built-in family (plus variants), keyed by a short id."""
    return {
        "euclidean2": euclidean(2),
        "euclidean3": euclidean(3),
        "sphere2": sphere(2, 1.0),
        "sphere3a4": sphere(3, 4.0),
        "randers_flat": randers(euclidean(2), b=[0.1, 0.0]),
        "randers_sphere": randers(sphere(2, 1.0), rotation=0.3),
        "randers_sphere3": randers(sphere(3, 1.0), rotation=0.4),
        "warped_cosh": warped_surface("cosh"),
        "warped_sin": warped_surface("sin"),
        "warped_exp": warped_surface("exp"),
    }


METRICS = builtin_metrics()


def sample_point(key, rng):
    m = METRICS[key]
    n = m.dim
    if key.startswith("warped"):
        x = np.array([rng.uniform(0.4, 2.6), rng.uniform(-2, 2)])
    else:
        x = rng.uniform(-0.8, 0.8, n)
    y = rng.standard_normal(n)
    return x, y


def unit(metric, x, y, chart=0):
    y = np.asarray(y, float)
    return y / eval_F(metric, chart, x, y)


def geodesic_start(key):
    """Start point and unit direction away from chart trouble for each metric id."""
    m = METRICS[key]
    if key.startswith("warped"):
        x0 = np.array([np.pi / 2, 0.0]) if key == "warped_sin" else np.array([0.2, 0.0])
        y0 = np.array([0.3, 1.0]) if key == "warped_sin" else np.array([1.0, 0.4])
    else:
        x0 = np.zeros(m.dim)
        x0[0] = 0.1
        y0 = np.ones(m.dim)
        y0[0] = 1.5
    return m, x0, unit(m, x0, y0)


def random_profile(rng, breaks=(), vanish_at=None, degree=3):
    """Continuous piecewise-cubic profile with a kink at each break.

    With ``vanish_at = (0, r)`` the profile is multiplied by ``t (r - t)``.
    """
    P = np.polynomial.Polynomial
    pieces = [P(rng.normal(size=degree + 1))]
    for b in breaks:
        pieces.append(pieces[-1] + P([-b, 1.0]) * P(rng.normal(size=degree)))
    if vanish_at is not None:
        lo, hi = vanish_at
        pieces = [p * P([-lo, 1.0]) * P([hi, -1.0]) for p in pieces]
    return Profile(tuple((p, p.deriv(1), p.deriv(2)) for p in pieces), tuple(breaks))


def random_field(frame, rng, breaks=(), vanish_at=None, tangential=True):
    """Random piecewise field in the parallel frame (optionally with a T component)."""
    count = frame.n if tangential else frame.n - 1
    return frame_field(frame, [random_profile(rng, breaks, vanish_at) for _ in range(count)])


@pytest.fixture(scope="session")
def metrics():
    return METRICS


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
