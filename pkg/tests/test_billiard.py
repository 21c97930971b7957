import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import wrap
from obl.billiard import (
    LiftedPhasePoint,
    MapError,
    forward_lift,
    forward_map,
    inverse_map,
    iterate,
    measure_pushforward,
    measure_weight,
    orbit_array,
    read_orbit_csv,
    reverse,
    tangent_map,
    tangent_maps,
    write_orbit_csv,
)
from obl.curve import FourierOval

TWO_PI = 2 * math.pi


def random_points(n, seed, margin=0.05):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, TWO_PI, n), rng.uniform(margin, math.pi - margin, n)


def fd_jacobian(oval, phi, theta, h=1e-6):
    """Central differences of the lifted forward map."""
    J = np.empty((len(phi), 2, 2))
    for j, (dp, dt) in enumerate(((h, 0.0), (0.0, h))):
        pa, ta = forward_lift(oval, phi + dp, theta + dt)
        pb, tb = forward_lift(oval, phi - dp, theta - dt)
        J[:, 0, j] = (pa - pb) / (2 * h)
        J[:, 1, j] = (ta - tb) / (2 * h)
    return J


@pytest.mark.parametrize("phi,theta", [(0.0, 0.3), (1.0, math.pi / 2), (5.0, 2.9), (3.0, 1e-3)])
def test_circle_rotation(circle, phi, theta):
    p, t = forward_map(circle, phi, theta)
    assert abs(wrap(p - (phi + 2 * theta))) < 1e-12
    assert t == pytest.approx(theta, abs=1e-12)
    q, s = inverse_map(circle, phi, theta)
    assert abs(wrap(q - (phi - 2 * theta))) < 1e-12
    assert s == pytest.approx(theta, abs=1e-12)


def test_ellipse_vertex_bounce(ellipse):
    # the vertex t = 0, i.e. (2, 0), has tangent angle pi/2
    p, t = forward_map(ellipse, math.pi / 2, math.pi / 2)
    assert p == pytest.approx(3 * math.pi / 2, abs=1e-12)
    assert t == pytest.approx(math.pi / 2, abs=1e-12)


def test_ellipse_minor_axis_inverse(ellipse):
    # (0, 1) has tangent angle pi, (0, -1) has tangent angle 0
    p, t = inverse_map(ellipse, math.pi, math.pi / 2)
    assert abs(wrap(p)) < 1e-12
    assert t == pytest.approx(math.pi / 2, abs=1e-12)


def test_equilateral_triangle(circle):
    traj = orbit_array(circle, 0.0, math.pi / 3, 3)
    assert traj[-1, 0] == pytest.approx(TWO_PI, abs=1e-12)
    assert traj[-1, 1] == pytest.approx(math.pi / 3, abs=1e-12)


def test_boundary_theta_rejected(circle):
    for bad in (0.0, 1e-13, math.pi, math.pi - 1e-13, float("nan")):
        with pytest.raises(ValueError):
            forward_map(circle, 0.0, bad)


def test_inverse_round_trip(oval_zoo):
    phi, theta = random_points(1000, 1, margin=1e-3)
    for oval in oval_zoo:
        p, t = forward_map(oval, phi, theta)
        q, s = inverse_map(oval, p, t)
        assert np.max(np.abs(wrap(q - phi))) < 1e-9
        assert np.max(np.abs(s - theta)) < 1e-9
        p2, t2 = forward_map(oval, *inverse_map(oval, phi, theta))
        assert np.max(np.abs(wrap(p2 - phi))) < 1e-9
        assert np.max(np.abs(t2 - theta)) < 1e-9


def test_reversibility(oval_zoo):
    # H o T = T^-1 o H
    phi, theta = random_points(500, 2, margin=1e-3)
    for oval in oval_zoo:
        a = reverse(*forward_map(oval, phi, theta))
        b = inverse_map(oval, *reverse(phi, theta))
        assert np.max(np.abs(wrap(a[0] - b[0]))) < 1e-9
        assert np.max(np.abs(a[1] - b[1])) < 1e-9


def test_iterate_lift_sequence(circle):
    pts = iterate(circle, LiftedPhasePoint(0.0, math.pi / 2), 4)
    np.testing.assert_allclose([p.phi for p in pts], [0, math.pi, 2 * math.pi, 3 * math.pi, 4 * math.pi], atol=1e-12)


def test_iterate_zero_steps(trefoil):
    start = LiftedPhasePoint(0.3, 1.1)
    assert iterate(trefoil, start, 0) == [start]


def test_forward_backward_100(trefoil):
    fwd = orbit_array(trefoil, 0.7, 1.2, 100)
    back = orbit_array(trefoil, fwd[-1, 0], fwd[-1, 1], -100)
    assert abs(back[-1, 0] - 0.7) < 1e-8
    assert abs(back[-1, 1] - 1.2) < 1e-8
    # twist orientation: lift increments inside (0, 2 pi)
    d = np.diff(fwd[:, 0])
    assert np.all((d > 0) & (d < TWO_PI))
    assert np.all(np.diff(back[:, 0]) < 0)


def test_circle_no_drift(circle):
    traj = orbit_array(circle, 0.2, 1.0, 10000)
    k = np.arange(len(traj))
    assert np.max(np.abs(traj[:, 0] - (0.2 + 2.0 * k))) < 1e-9 * len(traj)
    assert np.max(np.abs(traj[:, 1] - 1.0)) < 1e-12


def test_circle_tangent_map(circle):
    for phi, theta in ((0.0, 0.4), (2.0, math.pi / 2), (4.0, 2.5)):
        tm = tangent_map(circle, phi, theta)
        np.testing.assert_allclose(tm.matrix, [[1, 2], [0, 1]], atol=1e-12)
        assert tm.x0 == pytest.approx(math.sin(theta), abs=1e-14)
        assert tm.chord == pytest.approx(2 * math.sin(theta), abs=1e-12)


def test_ellipse_axis_tangent_map(ellipse):
    tm = tangent_map(ellipse, math.pi / 2, math.pi / 2)
    assert tm.x0 == pytest.approx(0.5, abs=1e-12)
    assert tm.x1 == pytest.approx(0.5, abs=1e-12)
    assert tm.chord == pytest.approx(4.0, abs=1e-12)
    np.testing.assert_allclose(tm.matrix, [[7, 8], [6, 7]], atol=1e-10)
    np.testing.assert_allclose(tm.matrix, fd_jacobian(ellipse, np.array([math.pi / 2]), np.array([math.pi / 2]))[0], rtol=1e-6)


def test_tangent_map_finite_differences(oval_zoo):
    for k, oval in enumerate(oval_zoo):
        phi, theta = random_points(200, 10 + k)
        J, x0, x1, _ = tangent_maps(oval, phi, theta)
        F = fd_jacobian(oval, phi, theta)
        scale = np.maximum(np.abs(J), 1.0)
        assert np.max(np.abs(J - F) / scale) < 1e-5
        assert np.max(np.abs(np.linalg.det(J) - x0 / x1)) < 1e-10
        assert np.all(J[:, 0, 1] > 0)


def test_chord_consistency(oval_zoo):
    phi, theta = random_points(300, 3)
    for oval in oval_zoo:
        _, _, _, chords = tangent_maps(oval, phi, theta)
        p1, _ = forward_map(oval, phi, theta)
        d = oval.position(p1) - oval.position(phi)
        assert np.max(np.abs(np.hypot(d[:, 0], d[:, 1]) - chords)) < 1e-10


@settings(max_examples=50, deadline=None)
@given(st.floats(0, TWO_PI), st.floats(0.01, math.pi - 0.01))
def test_outgoing_ray_makes_angle_theta(phi, theta):
    oval = FourierOval(1.0, ((2, 0.2, 0.1), (5, -0.05, 0.03)))
    p1, _ = forward_map(oval, phi, theta)
    d = oval.position(p1)[0] - oval.position(phi)[0]
    assert abs(wrap(math.atan2(d[1], d[0]) - phi - theta)) < 1e-9


def test_measure_weight(circle, trefoil):
    assert measure_weight(circle, 0.3, math.pi / 2) == pytest.approx(1.0, abs=1e-14)
    w = measure_weight(trefoil, np.full(4, 0.5), np.array([1e-2, 1e-4, 1e-6, 1e-8]))
    assert np.all(np.diff(w) < 0) and w[-1] < 1e-7
    assert measure_weight(trefoil, 0.0, math.pi / 2) == pytest.approx(1.1, abs=1e-12)


def test_measure_pushforward_small(trefoil):
    # the full 1e7-sample run lives in the acceptance suite
    r = measure_pushforward(trefoil, (1.0, 1.6, 0.8, 1.4), samples=2**18, chunk=2**18)
    assert r.relative_error < 1e-3


def test_map_error_is_runtime_error():
    assert issubclass(MapError, RuntimeError)


def test_orbit_csv_round_trip(tmp_path, trefoil):
    traj = orbit_array(trefoil, 0.3, 1.1, 20)
    path = tmp_path / "o.csv"
    write_orbit_csv(path, traj)
    assert path.read_text().splitlines()[0] == "step,phi_lifted,phi_mod,theta"
    np.testing.assert_array_equal(read_orbit_csv(path), traj)
