import math

import numpy as np
import pytest

from obl.billiard import advance
from obl.curve import FourierOval
from obl.manifolds import (
    Budget,
    HeteroclinicPoint,
    _segment_pairs,
    find_intersections,
    focusing_distances,
    grow_branch,
    point_monodromy,
    tangency_splitting_prediction,
    traced_focus,
)
from obl.stability import eigen_directions
from obl.variational import config_to_orbit, find_orbits

TWO_PI = 2 * math.pi


def polyline_distance(P, Q):
    """Distance from each point of P to the polyline Q."""
    a, b = Q[:-1], Q[1:]
    d = b - a
    L2 = np.maximum((d**2).sum(1), 1e-300)
    out = np.empty(len(P))
    for j, p in enumerate(P):
        t = np.clip(((p - a) * d).sum(1) / L2, 0, 1)
        out[j] = np.sqrt(((a + t[:, None] * d - p) ** 2).sum(1)).min()
    return out


def hausdorff(P, Q):
    return max(polyline_distance(P, Q).max(), polyline_distance(Q, P).max())


def upto(br, length):
    return br.points[br.arc <= length]


@pytest.fixture(scope="module")
def oval2():
    return FourierOval(1.0, ((2, 0.05, 0.0),))


@pytest.fixture(scope="module")
def hyp(oval2):
    orbs = [config_to_orbit(oval2, c.config) for c in find_orbits(oval2, 1, 2)]
    (h,) = [o for o in orbs if o.cls == "hyperbolic"]
    return h


@pytest.fixture(scope="module")
def branches(oval2, hyp):
    out = {}
    for i in (0, 1):
        for k in ("unstable+", "unstable-", "stable+", "stable-"):
            out[i, k] = grow_branch(oval2, hyp, i, k, Budget(max_arclength=3.0))
    return out


def test_fundamental_domain(branches):
    for br in branches.values():
        # T^n of the seed start lands on the seed end
        assert np.linalg.norm(br.point_at([1.0])[0] - br.seed([1.0])[0]) < 1e-6
        assert np.linalg.norm(br.points[0] - br.base_point) == pytest.approx(br.epsilon, rel=1e-9)


def test_branch_resolution(branches):
    tol = branches[0, "unstable+"].tol
    for br in branches.values():
        d = np.diff(br.points, axis=0)
        assert np.hypot(d[:, 0], d[:, 1]).max() <= tol.max_step * (1 + 1e-9)
        assert br.unresolved == 0
        # first segment along the eigendirection
        seg = br.points[1] - br.points[0]
        assert abs(seg[0] * br.direction[1] - seg[1] * br.direction[0]) / np.linalg.norm(seg) < 1e-6


def test_contraction_rate(oval2, hyp, branches):
    br = branches[0, "unstable+"]
    _, _, lu, ls = eigen_directions(point_monodromy(hyp, 0))
    # a point well inside the linear zone, pulled back ten periods
    u = br.u[np.searchsorted(br.arc, 1e-3)]
    p = br.point_at([u])[0]
    d0 = np.linalg.norm(p - br.base_point)
    q = advance(oval2, p[0], p[1], -10 * hyp.n)
    q = np.array([q[0][0] + 10 * br.lift_per_level, q[1][0]])
    rate = (np.linalg.norm(q - br.base_point) / d0) ** (1 / 10)
    assert rate == pytest.approx(abs(ls), rel=0.05)


def test_epsilon_independence(oval2, hyp):
    a = grow_branch(oval2, hyp, 0, "unstable+", Budget(max_arclength=1.0))
    b = grow_branch(oval2, hyp, 0, "unstable+", Budget(max_arclength=1.0), epsilon=a.epsilon / 2)
    L = min(a.length, b.length) - 1e-3
    # compare beyond the seed zone where the two seeds differ by epsilon
    pa = a.points[(a.arc <= L) & (a.arc > 1e-6)]
    pb = b.points[(b.arc <= L) & (b.arc > 1e-6)]
    assert polyline_distance(pa, b.points).max() < 1e-5
    assert polyline_distance(pb, a.points).max() < 1e-5


def test_invariance(branches):
    rng = np.random.default_rng(0)
    for br in branches.values():
        u = rng.uniform(0, br.u[-1] - 1.0, 300)
        x = br.point_at(u)
        y = br.point_at(u + 1.0)  # the exact image under T^n of X(u)
        assert polyline_distance(y, br.points).max() < 1e-5
        # and X(u + 1) really is the pushed point
        im = advance(br.oval, x[:, 0], x[:, 1], -br.power if br.stable else br.power)
        shift = br.lift_per_level if br.stable else -br.lift_per_level
        np.testing.assert_allclose(np.column_stack([im[0] + shift, im[1]]), y, atol=1e-9)


def test_reversibility(branches):
    # H(W^u) = W^s at a symmetric orbit point (theta = pi/2)
    for i in (0, 1):
        for sign in "+-":
            u = branches[i, "unstable" + sign].points.copy()
            u[:, 1] = math.pi - u[:, 1]
            cands = [branches[i, "stable+"], branches[i, "stable-"]]
            best = min(cands, key=lambda s: np.linalg.norm(s.points[100] - u[100]))
            L = min(best.length, branches[i, "unstable" + sign].length) - 0.01
            assert hausdorff(u[branches[i, "unstable" + sign].arc <= L], upto(best, L)) < 1e-5


def test_self_intersection_empty(branches):
    br = branches[0, "unstable+"]
    assert find_intersections(br, br) == []


def test_prefix_superset(oval2, hyp):
    small = grow_branch(oval2, hyp, 0, "unstable+", Budget(max_arclength=0.8))
    big = grow_branch(oval2, hyp, 0, "unstable+", Budget(max_arclength=1.6))
    assert len(big.points) > len(small.points)
    np.testing.assert_array_equal(big.points[: len(small.points)], small.points)


@pytest.fixture(scope="module")
def hetero(branches):
    return find_intersections(branches[0, "unstable+"], branches[1, "stable-"])


def test_symmetric_heteroclinic_point(hetero):
    assert hetero
    # the symmetric crossing sits on phi = pi, the axis of the table's mirror symmetry
    sym = [h for h in hetero if abs(h.location[0] - math.pi) < 1e-8]
    assert len(sym) == 1
    h = sym[0]
    # both branches belong to one orbit, so the connection is homoclinic to it
    assert h.refined and h.kind == "homoclinic"
    # exponentially small splitting: transversal, but below the default 1e-4 threshold
    assert 1e-7 < h.crossing_angle < 1e-4
    assert not h.transversal


def test_intersections_on_both_branches(branches, hetero):
    A, B = branches[0, "unstable+"], branches[1, "stable-"]
    assert sum(h.refined for h in hetero) >= len(hetero) - 1
    for h in (h for h in hetero if h.refined):
        pa = A.point_at([h.u[0]])[0]
        pb = B.point_at([h.u[1]])[0]
        assert abs(((pa[0] - pb[0]) + math.pi) % TWO_PI - math.pi) < 1e-9
        assert abs(pa[1] - pb[1]) < 1e-9


def test_crossings_even_per_lobe_pair(branches, hetero):
    # a fundamental domain of W^u closes a pair of lobes with W^s: two crossings
    u = np.sort([h.u[0] for h in hetero if h.refined])
    u0 = u[len(u) // 2] + 0.1
    k = int(np.sum((u >= u0) & (u < u0 + 1.0)))
    assert k % 2 == 0 and k > 0


def test_parity_around_a_loop(branches):
    # a circle around the periodic point: the branch starts inside, ends outside
    br = branches[0, "unstable+"]
    c = br.base_point
    r = 0.05
    s = np.linspace(0, TWO_PI, 2001)
    loop = np.column_stack([c[0] + r * np.cos(s), c[1] + r * np.sin(s)])
    ia, ib, _, _ = _segment_pairs(br.points, loop)
    tip_out = np.linalg.norm(br.points[-1] - c) > r
    assert tip_out
    assert len(ia) % 2 == 1
    # drop the part inside the circle: even count
    out = br.points[np.argmax(np.linalg.norm(br.points - c, axis=1) > r) :]
    ia, _, _, _ = _segment_pairs(out, loop)
    assert len(ia) % 2 == 0


def test_focusing_examples():
    f = focusing_distances(1.0, math.pi / 2, 0.0)
    assert f.d_plus == f.d_minus == pytest.approx(1.0, abs=1e-15)
    f = focusing_distances(1.0, math.pi / 2, 0.5)
    assert f.d_plus == pytest.approx(2 / 3, rel=1e-14)
    assert f.d_minus == pytest.approx(2.0, rel=1e-14)
    f = focusing_distances(2.0, 1.0, 1.0)
    assert f.minus_infinite and math.isinf(f.d_minus)


def test_focusing_ray_trace():
    rng = np.random.default_rng(7)
    done = 0
    while done < 100:
        R0, th, s = rng.uniform(0.3, 3.0), rng.uniform(0.2, math.pi - 0.2), rng.uniform(-3, 3)
        if min(abs(1 + s), abs(1 - s)) <= 0.1:
            continue
        f = focusing_distances(R0, th, s)
        dp, dm = traced_focus(R0, th, s)
        assert dp == pytest.approx(f.d_plus, abs=1e-3)
        assert dm == pytest.approx(f.d_minus, abs=1e-3)
        done += 1
    dp, dm = traced_focus(1.3, 0.9, 0.0)
    assert dp == pytest.approx(1.3 * math.sin(0.9), abs=1e-9)


def test_splitting_prediction():
    assert tangency_splitting_prediction(1.0, 1.0, 0.3, 0.0) == (0.3, 0.3)
    su, ss = tangency_splitting_prediction(1.0, 1.0, 0.0, 0.01)
    assert su == pytest.approx(0.01) and ss == pytest.approx(-0.01)
    rng = np.random.default_rng(1)
    for _ in range(50):
        R0, s, h = rng.uniform(0.2, 4), rng.uniform(-5, 5), rng.uniform(-0.1, 0.1)
        su, ss = tangency_splitting_prediction(R0, 1.0, s, h)
        assert su - ss == pytest.approx(2 * h / R0, rel=1e-12, abs=1e-15)


def test_heteroclinic_dict(hetero):
    d = hetero[0].to_dict()
    assert set(d) >= {"phi", "theta", "crossing_angle", "transversal", "kind"}
    assert isinstance(hetero[0], HeteroclinicPoint)


def test_bad_kind(oval2, hyp):
    with pytest.raises(ValueError):
        grow_branch(oval2, hyp, 0, "sideways")
