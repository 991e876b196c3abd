import numpy as np
import pytest

import oracles
from conftest import METRICS, geodesic_start, random_field, random_profile
from finsler_myers import euclidean, sphere, warped_surface
from finsler_myers.errors import AlignmentError, RangeError
from finsler_myers.geodesic import VectorFieldAlongGeodesic, integrate_geodesic, parallel_frame, parallel_transport
from finsler_myers.variational import (
    Profile,
    ambrose_trial_sum,
    ambrose_trial_terms,
    covariant_derivative_along,
    field_jump,
    first_conjugate_point,
    frame_field,
    index_form,
    index_form_flag,
    index_form_parts,
    jacobi_integrate,
    jacobi_matrix,
    sine_profile,
    sine_trial_sum,
    sine_trial_terms,
)

PI = np.pi


def frame_for(metric, L, x0=None, y0=None, nodes=(), h=None):
    n = metric.dim
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, float)
    if y0 is None:
        y0 = np.eye(n)[0] * (0.5 if metric.name.startswith("sphere") else 1.0)
    traj = integrate_geodesic(metric, 0, x0, y0, L, h=h, nodes=nodes)
    return traj, parallel_frame(traj)


def scalar_field(frame, f, df, d2f, alpha=0):
    profiles = [None] * (frame.n - 1)
    profiles[alpha] = Profile.smooth(f, df, d2f)
    return frame_field(frame, profiles)


def strip(W):
    """Forget the exact derivatives so the finite-difference path is used."""
    return VectorFieldAlongGeodesic(W.t, W.values, breakpoints=W.breakpoints)


@pytest.fixture(scope="module")
def sphere_pi():
    return frame_for(sphere(2, 1.0), PI)


@pytest.fixture(scope="module")
def euclid_1():
    return frame_for(euclidean(2), 1.0, nodes=(0.5,))


# ---------------------------------------------------------------- covariant derivative


def test_cov_of_parallel_field_vanishes(sphere_pi):
    traj, _ = sphere_pi
    W = parallel_transport(traj, [0.1, 0.4])
    assert W.cov is None
    assert np.max(np.abs(covariant_derivative_along(traj, W).values)) < 1e-6


def test_cov_of_scaled_frame_vector(sphere_pi):
    traj, frame = sphere_pi
    W = scalar_field(frame, np.sin, np.cos, lambda t: -np.sin(t))
    expected = np.cos(traj.t)[..., None] * frame.E[..., 0]
    assert np.max(np.abs(covariant_derivative_along(traj, W).values - expected)) < 1e-7
    # the finite-difference path reproduces the same derivative
    assert np.max(np.abs(covariant_derivative_along(traj, strip(W)).values - expected)) < 1e-6


def test_cov_of_velocity_vanishes():
    for key in ("sphere2", "randers_sphere", "warped_exp"):
        m, x0, y0 = geodesic_start(key)
        traj = integrate_geodesic(m, 0, x0, y0, 2.0)
        D = covariant_derivative_along(traj, VectorFieldAlongGeodesic(traj.t, traj.T))
        assert np.max(np.abs(D.values)) < 1e-7, key


def test_misaligned_field_rejected(sphere_pi, euclid_1):
    traj, _ = sphere_pi
    with pytest.raises(AlignmentError):
        covariant_derivative_along(traj, VectorFieldAlongGeodesic(euclid_1[0].t, euclid_1[0].T))
    with pytest.raises(AlignmentError):
        parallel_transport(traj, [1.0, 0.0]) + parallel_transport(euclid_1[0], [1.0, 0.0])


# ---------------------------------------------------------------- index forms


def test_index_form_euclidean_sine(euclid_1):
    traj, frame = euclid_1
    W = frame_field(frame, [sine_profile(1.0)])
    assert index_form(traj, W, W) == pytest.approx(PI**2 / 2, abs=1e-9)
    assert index_form_flag(traj, W) == pytest.approx(PI**2 / 2, abs=1e-9)


def test_index_form_sphere_jacobi_sine(sphere_pi):
    traj, frame = sphere_pi
    W = scalar_field(frame, np.sin, np.cos, lambda t: -np.sin(t))
    assert abs(index_form(traj, W, W)) < 1e-8
    assert abs(index_form_flag(traj, W) - index_form(traj, W, W)) < 1e-7


def test_index_form_of_velocity(sphere_pi):
    traj, _ = sphere_pi
    T = VectorFieldAlongGeodesic(traj.t, traj.T)
    assert abs(index_form(traj, T, T)) < 1e-8
    assert abs(index_form_flag(traj, T)) < 1e-8


def test_index_form_flag_sphere_quarter():
    traj, frame = frame_for(sphere(2, 1.0), PI / 2)
    W = scalar_field(frame, lambda t: np.sin(2 * t), lambda t: 2 * np.cos(2 * t), lambda t: -4 * np.sin(2 * t))
    assert index_form_flag(traj, W) == pytest.approx(3 * PI / 4, abs=1e-7)
    assert index_form(traj, W, W) == pytest.approx(3 * PI / 4, abs=1e-7)


def test_index_form_flag_linear_field(euclid_1):
    traj, frame = euclid_1
    W = frame_field(frame, [Profile.polynomial([0.0, 1.0])])
    assert index_form_flag(traj, W) == pytest.approx(1.0, abs=1e-12)


def test_index_form_flag_projects_tangential_part(sphere_pi):
    traj, frame = sphere_pi
    W = frame_field(frame, [sine_profile(PI), Profile.polynomial([0.0, 0.0, 1.0])])
    # the T component t^2 adds int (2t)^2 = 4 pi^3 / 3 and nothing else
    assert index_form_flag(traj, W) == pytest.approx(4 * PI**3 / 3, abs=1e-7)
    assert index_form(traj, W, W) == pytest.approx(4 * PI**3 / 3, abs=1e-7)


def test_parts_jacobi_against_vanishing_field(sphere_pi, rng):
    traj, frame = sphere_pi
    V = scalar_field(frame, np.sin, np.cos, lambda t: -np.sin(t))
    W = random_field(frame, rng, vanish_at=(0, PI))
    assert abs(index_form_parts(traj, V, W)) < 1e-6


def test_parts_smooth_matches_index_form(sphere_pi, rng):
    traj, frame = sphere_pi
    V, W = random_field(frame, rng), random_field(frame, rng)
    assert abs(index_form_parts(traj, V, W) - index_form(traj, V, W)) < 1e-6


def test_parts_kink_jump_term(euclid_1, rng):
    traj, frame = euclid_1
    # |t - 1/2| e_1 has a derivative jump of 2 at L/2
    kink = Profile(((lambda t: 0.5 - t, lambda t: -np.ones_like(t), lambda t: 0 * t),
                    (lambda t: t - 0.5, lambda t: np.ones_like(t), lambda t: 0 * t)), (0.5,))
    V = frame_field(frame, [kink])
    W = frame_field(frame, [sine_profile(1.0)])
    with_jump = index_form_parts(traj, V, W)
    without = index_form_parts(traj, V, W, partition=())
    assert with_jump == pytest.approx(index_form(traj, V, W), abs=1e-6)
    # the jump term -g(Delta D_T V, W)(1/2) = -2 sin(pi/2) closes the gap
    assert without - with_jump == pytest.approx(2.0, abs=1e-6)


def test_parts_finite_difference_path(sphere_pi, rng):
    traj, frame = sphere_pi
    V, W = random_field(frame, rng), random_field(frame, rng)
    assert abs(index_form_parts(traj, strip(V), W) - index_form(traj, V, W)) < 1e-6


def test_fields_are_continuous_across_breaks(rng):
    m, x0, y0 = geodesic_start("randers_sphere")
    traj = integrate_geodesic(m, 0, x0, y0, 4.0, nodes=(1.3, 2.7))
    frame = parallel_frame(traj)
    W = random_field(frame, rng, breaks=(1.3, 2.7))
    assert W.breakpoints == (1.3, 2.7)
    assert np.max(np.abs(field_jump(traj, W.values))) < 1e-8


def test_breakpoint_off_grid_is_rejected(sphere_pi, rng):
    traj, frame = sphere_pi
    W = frame_field(frame, [random_profile(rng, breaks=(1.0005,))])
    with pytest.raises(AlignmentError, match="nodes="):
        index_form_parts(traj, W, W)


@pytest.fixture(scope="module")
def frames_with_breaks():
    out = {}
    for key in sorted(METRICS):
        m, x0, y0 = geodesic_start(key)
        traj = integrate_geodesic(m, 0, x0, y0, 3.0, nodes=(1.0, 2.0))
        out[key] = parallel_frame(traj)
    return out


@pytest.mark.parametrize("key", sorted(METRICS))
def test_three_index_forms_agree(key, frames_with_breaks):
    frame = frames_with_breaks[key]
    traj = frame.trajectory
    rng = np.random.default_rng(abs(hash(key)) % 2**32)
    for _ in range(20):
        V = random_field(frame, rng, breaks=(1.0, 2.0))
        W = random_field(frame, rng, breaks=(1.0, 2.0))
        I = index_form(traj, W, W)
        scale = max(1.0, abs(I))
        assert abs(I - index_form_flag(traj, W)) < 1e-6 * scale
        assert abs(I - index_form_parts(traj, W, W)) < 1e-6 * scale
        assert abs(index_form(traj, V, W) - index_form_parts(traj, V, W)) < 1e-6 * scale
        assert abs(index_form(traj, V, W) - index_form(traj, W, V)) < 1e-9 * scale
        U = random_field(frame, rng, breaks=(1.0, 2.0))
        lhs = index_form(traj, 2.0 * V - 0.5 * U, W)
        rhs = 2.0 * index_form(traj, V, W) - 0.5 * index_form(traj, U, W)
        assert abs(lhs - rhs) < 1e-9 * scale


# ---------------------------------------------------------------- Jacobi fields


def test_jacobi_euclidean():
    traj, frame = frame_for(euclidean(3), 2.0)
    J = jacobi_integrate(frame, [0, 0], [1, 0])
    assert np.max(np.abs(J.values - traj.t[..., None] * frame.E[..., 0])) < 1e-12
    J = jacobi_integrate(frame, [0, 1], [0, 0])
    assert np.max(np.abs(J.values - frame.E[0, 0, :, 1])) < 1e-12


def test_jacobi_sphere_returns_to_zero(sphere_pi):
    traj, frame = sphere_pi
    J = jacobi_integrate(frame, [0], [1])
    assert np.max(np.abs(J.values[-1, 2])) < 1e-4
    assert abs(index_form(traj, J, J)) < 1e-6


@pytest.mark.parametrize("n,a", [(2, 1.0), (2, 4.0), (3, 1.0), (3, 4.0)])
def test_jacobi_sphere_closed_form(n, a):
    traj, frame = frame_for(sphere(n, a), 3.0)
    sol = jacobi_matrix(frame)
    assert sol.residual < 1e-5
    expected = np.sin(np.sqrt(a) * traj.t) / np.sqrt(a)
    for alpha in range(n - 1):
        e = np.zeros(n - 1)
        e[alpha] = 1.0
        J = jacobi_integrate(frame, np.zeros(n - 1), e)
        assert np.max(np.abs(J.values - expected[..., None] * frame.E[..., alpha])) < 1e-4


def test_jacobi_tangential_component_is_linear(sphere_pi):
    traj, frame = sphere_pi
    J = jacobi_integrate(frame, [0, 2.0], [0, -0.5])
    assert np.max(np.abs(J.values - (2.0 - 0.5 * traj.t)[..., None] * traj.T)) < 1e-9


# ---------------------------------------------------------------- conjugate points


@pytest.mark.parametrize("n,a", [(2, 1.0), (2, 4.0), (3, 1.0), (3, 4.0)])
def test_conjugate_point_sphere(n, a):
    traj, frame = frame_for(sphere(n, a), 3.5)
    rep = first_conjugate_point(frame)
    assert rep.t_c == pytest.approx(PI / np.sqrt(a), abs=1e-4)
    lo, hi = rep.bracket
    assert hi - lo < 1e-6 and lo <= rep.t_c <= hi
    assert rep.multiplicity == n - 1
    if n == 2:
        assert rep.det_values[0] * rep.det_values[1] <= 0


def test_no_conjugate_point_euclidean():
    traj, frame = frame_for(euclidean(2), 100.0, h=1e-2)
    rep = first_conjugate_point(frame)
    assert rep.t_c is None and rep.to_dict()["t_c"] == "none"
    assert np.all(jacobi_matrix(frame).det()[1:] > 0)


def test_no_conjugate_point_negative_curvature():
    traj, frame = frame_for(warped_surface("cosh"), 10.0, x0=[0.2, 0.0], y0=[1.0, 0.0])
    assert first_conjugate_point(frame).t_c is None


def test_randers_conjugate_point_exists():
    m, x0, y0 = geodesic_start("randers_sphere")
    traj = integrate_geodesic(m, 0, x0, y0, 5.0)
    rep = first_conjugate_point(traj)
    assert rep.found
    # det Y changes sign across the reported bracket on a surface
    assert rep.det_values[0] * rep.det_values[1] <= 0


# ---------------------------------------------------------------- trial sums


def test_sine_sum_examples():
    _, frame = frame_for(sphere(2, 1.0), PI + 0.01)
    assert abs(sine_trial_sum(frame, PI)) < 1e-5
    assert sine_trial_sum(frame, PI / 2) == pytest.approx(3 * PI / 4, abs=1e-6)
    _, flat = frame_for(euclidean(3), 1.0)
    assert sine_trial_sum(flat, 1.0) == pytest.approx(2 * PI**2 / 2, abs=1e-9)
    with pytest.raises(RangeError):
        sine_trial_sum(flat, 1.5)


@pytest.mark.parametrize("key", sorted(METRICS))
def test_sine_sum_two_paths_agree(key):
    m, x0, y0 = geodesic_start(key)
    frame = parallel_frame(integrate_geodesic(m, 0, x0, y0, 4.0))
    for r in (1.0, 2.5, 4.0):
        terms = sine_trial_terms(frame, r)
        assert terms.discrepancy < 1e-6
        assert sum(terms.per_alpha) == terms.direct


def test_sine_sum_constant_ricci_closed_form():
    _, frame = frame_for(sphere(3, 4.0), 2.0)
    for r in (0.5, 1.0, 1.5, 2.0):
        assert sine_trial_sum(frame, r) == pytest.approx(oracles.sine_constant_ric(3, 8.0, r), abs=1e-6)


def test_ambrose_euclidean():
    for n, b, r in ((2, 2.0, 5.0), (3, 1.5, 3.0)):
        _, frame = frame_for(euclidean(n), r, nodes=(1.0, b))
        terms = ambrose_trial_terms(frame, b, r)
        assert terms.total == pytest.approx((n - 1) * (1 + 1 / (r - b)), abs=1e-9)
        assert terms.discrepancy < 1e-9


def test_ambrose_sphere_against_symbolic_oracle():
    _, frame = frame_for(sphere(2, 1.0), 20.0, nodes=(1.0, 2.0), h=2e-3)
    s = ambrose_trial_sum(frame, 2.0, 20.0)
    assert s < 0
    assert s == pytest.approx(oracles.ambrose_constant_ric(2, 1.0, 2.0, 20.0), abs=1e-5)


def test_ambrose_continuity_at_b_one():
    _, frame = frame_for(sphere(2, 1.0), 6.0, nodes=(1.0, 1.001, 1.01))
    assert abs(ambrose_trial_sum(frame, 1.001, 6.0) - ambrose_trial_sum(frame, 1.01, 6.0)) < 1e-2


def test_ambrose_range_errors():
    _, frame = frame_for(euclidean(2), 3.0, nodes=(1.0, 2.0))
    for b, r in ((1.0, 2.0), (0.5, 2.0), (2.0, 2.0), (2.0, 4.0)):
        with pytest.raises(RangeError):
            ambrose_trial_sum(frame, b, r)


# ---------------------------------------------------------------- properties


def test_index_form_minimizing_before_conjugate_point(rng):
    """Fields vanishing at 0 and r < pi have positive index (the Jacobi field with those ends is 0)."""
    r = 3.0
    traj, frame = frame_for(sphere(2, 1.0), r, nodes=(1.0, 2.0))
    for i in range(10):
        W = random_field(frame, rng, breaks=(1.0, 2.0) if i % 2 else (), vanish_at=(0, r), tangential=False)
        assert np.max(np.abs(W.values)) > 0
        assert index_form(traj, W, W) > 0


def test_negative_sine_sum_implies_conjugate_point():
    r = PI + 0.01
    _, frame = frame_for(sphere(2, 1.0), r)
    assert sine_trial_sum(frame, r) < 0
    rep = first_conjugate_point(frame)
    assert rep.found and rep.t_c <= r
