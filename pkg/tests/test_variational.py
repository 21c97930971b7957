import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obl.billiard import orbit_array
from obl.curve import Ellipse, FourierOval
from obl.variational import (
    ClosureError,
    PolygonConfig,
    action,
    action_gradient,
    action_hessian,
    config_to_orbit,
    critical_point,
    find_orbits,
    perimeter,
    same_orbit,
)

TWO_PI = 2 * math.pi


def regular(m, n, rot=0.0):
    return PolygonConfig(m, n, rot + TWO_PI * m * np.arange(n) / n)


def random_config(m, n, rng):
    gaps = rng.dirichlet(np.full(n, 3.0)) * TWO_PI * m
    return PolygonConfig(m, n, rng.uniform(0, 1) + np.concatenate([[0.0], np.cumsum(gaps[:-1])]))


def test_actions(circle, ellipse):
    assert action(circle, regular(1, 3)) == pytest.approx(-3 * math.sqrt(3), abs=1e-12)
    assert action(circle, regular(1, 2)) == pytest.approx(-4.0, abs=1e-12)
    # major axis: tangent angles pi/2 and 3 pi/2
    assert action(ellipse, regular(1, 2, math.pi / 2)) == pytest.approx(-8.0, abs=1e-12)
    assert perimeter(ellipse, regular(1, 2, math.pi / 2)) == pytest.approx(8.0, abs=1e-12)


@pytest.mark.parametrize("m,n", [(1, 3), (2, 5), (3, 7), (1, 6)])
def test_circle_closed_form(circle, m, n):
    assert action(circle, regular(m, n, 0.4)) == pytest.approx(-2 * n * math.sin(m * math.pi / n), abs=1e-12)
    assert np.linalg.norm(action_gradient(circle, regular(m, n, 0.4))) < 1e-13


def test_gradient_finite_differences(oval_zoo):
    rng = np.random.default_rng(0)
    for oval in oval_zoo:
        for m, n in ((1, 3), (2, 5)):
            cfg = random_config(m, n, rng)
            g = action_gradient(oval, cfg)
            h = 1e-6
            fd = np.empty(n)
            for i in range(n):
                e = np.zeros(n)
                e[i] = h
                fd[i] = (action(oval, PolygonConfig(m, n, cfg.psi + e)) - action(oval, PolygonConfig(m, n, cfg.psi - e))) / (2 * h)
            assert np.max(np.abs(g - fd)) <= 1e-6 * max(1.0, np.abs(g).max())


def test_hessian_finite_differences(trefoil):
    cfg = random_config(2, 5, np.random.default_rng(1))
    H = action_hessian(trefoil, cfg)
    h = 1e-6
    fd = np.empty_like(H)
    for i in range(5):
        e = np.zeros(5)
        e[i] = h
        fd[:, i] = (action_gradient(trefoil, PolygonConfig(2, 5, cfg.psi + e)) - action_gradient(trefoil, PolygonConfig(2, 5, cfg.psi - e))) / (2 * h)
    np.testing.assert_allclose(H, fd, atol=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 6))
def test_action_cyclic_invariance(seed, k):
    oval = FourierOval(1.3, ((2, 0.2, 0.1), (5, -0.05, 0.03)))
    cfg = random_config(2, 7, np.random.default_rng(seed))
    assert action(oval, cfg.shifted(k)) == pytest.approx(action(oval, cfg), abs=1e-12)
    assert same_orbit(cfg, cfg.shifted(k))


def test_config_validation():
    with pytest.raises(ValueError):
        PolygonConfig(2, 2, [0.0, 1.0])
    with pytest.raises(ValueError):
        PolygonConfig(1, 3, [0.0, 2.0, 1.0])
    with pytest.raises(ValueError):
        PolygonConfig(1, 3, [0.0, 1.0])


def test_coincident_vertices_rejected(circle):
    with pytest.raises(ValueError):
        action_gradient(circle, PolygonConfig(1, 3, [0.0, 1e-16, 3.0]))


def test_circle_triangle_degenerate(circle):
    cps = find_orbits(circle, 1, 3, starts=20)
    assert cps
    for cp in cps:
        assert cp.action == pytest.approx(-3 * math.sqrt(3), abs=1e-9)
        assert not cp.nondegenerate
        assert cp.hessian_signature[1] >= 1
        np.testing.assert_allclose(cp.config.gaps(), TWO_PI / 3, atol=1e-7)
    orb = config_to_orbit(circle, cps[0].config)
    np.testing.assert_allclose(orb.theta, math.pi / 3, atol=1e-9)


def test_ellipse_two_axes(ellipse):
    cps = find_orbits(ellipse, 1, 2, starts=40)
    assert len(cps) == 2
    perimeters = sorted(-cp.action for cp in cps)
    assert perimeters == pytest.approx([4.0, 8.0], abs=1e-9)
    major = next(cp for cp in cps if cp.action < -6)
    assert major.is_minimum
    orb = config_to_orbit(ellipse, major.config)
    np.testing.assert_allclose(orb.theta, math.pi / 2, atol=1e-9)
    for cp in cps:
        # reflection law at both vertices
        assert cp.gradient_norm < 1e-10


def test_trefoil_two_bounce_family(trefoil):
    # odd harmonics only: constant width 2, every normal is a double normal
    cps = find_orbits(trefoil, 1, 2)
    assert cps and all(not cp.nondegenerate for cp in cps)
    assert all(cp.action == pytest.approx(-4.0, abs=1e-9) for cp in cps)
    assert action(trefoil, regular(1, 2, 0.37)) == pytest.approx(-4.0, abs=1e-12)


def test_two_bounce_nondegenerate():
    oval = FourierOval(1.3, ((2, 0.2, 0.1), (5, -0.05, 0.03)))
    cps = find_orbits(oval, 1, 2)
    assert 2 <= len(cps) < 10
    for cp in cps:
        assert cp.nondegenerate
        assert cp.gradient_norm <= 1e-10
        orb = config_to_orbit(oval, cp.config, closure_tol=1e-8)
        assert orb.closure_error < 1e-8


def test_critical_iff_periodic(trefoil):
    for m, n in ((1, 3), (2, 5)):
        for cp in find_orbits(trefoil, m, n, starts=30):
            orb = config_to_orbit(trefoil, cp.config)
            traj = orbit_array(trefoil, orb.phi[0], orb.theta[0], n)
            assert abs(traj[-1, 0] - orb.phi[0] - TWO_PI * m) < 1e-9
            # band: at least one vertex angle inside [pi/n, (n-1) pi/n]
            assert np.any((orb.theta >= math.pi / n) & (orb.theta <= (n - 1) * math.pi / n))
    # a non-critical configuration does not close
    with pytest.raises(ClosureError):
        config_to_orbit(trefoil, PolygonConfig(1, 3, [0.0, 2.0, 4.5]))


def test_mackay_meiss(trefoil):
    for m, n in ((1, 3), (1, 4), (2, 5)):
        for cp in find_orbits(trefoil, m, n, starts=30):
            if not cp.nondegenerate or cp.is_repetition:
                continue
            orb = config_to_orbit(trefoil, cp.config, closure_tol=1e-8)
            assert cp.is_minimum == (orb.trace > 2)


def test_repetition_tagged(trefoil):
    cps = find_orbits(trefoil, 2, 4, starts=20)
    assert cps and all(cp.primitive_period == 2 for cp in cps)


def test_critical_point_signature(ellipse):
    minor = critical_point(ellipse, regular(1, 2, 0.0))
    major = critical_point(ellipse, regular(1, 2, math.pi / 2))
    assert major.hessian_signature == (0, 0, 2)
    assert minor.hessian_signature[0] >= 1


def test_same_orbit_tolerance():
    a = regular(1, 4, 0.1)
    assert same_orbit(a, PolygonConfig(1, 4, a.psi + 1e-8))
    assert not same_orbit(a, PolygonConfig(1, 4, a.psi + 1e-3))
    assert not same_orbit(a, regular(1, 5))


def test_ellipse_search_is_seeded(ellipse):
    a = find_orbits(Ellipse(2.0, 1.0), 1, 3, starts=20, seed=3)
    b = find_orbits(Ellipse(2.0, 1.0), 1, 3, starts=20, seed=3)
    assert [c.action for c in a] == [c.action for c in b]
