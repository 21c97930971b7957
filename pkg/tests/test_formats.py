import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obl.curve import Ellipse, FourierOval, NormalBump, PerturbedOval, oval_from_dict
from obl.formats import (
    FORMAT,
    FormatError,
    branch_document,
    branch_from_document,
    document,
    dumps,
    intersection_from_dict,
    library_document,
    library_orbits,
    load,
    orbit_from_record,
    orbit_record,
    phase_svg,
    region_svg,
)
from obl.manifolds import Budget, find_intersections, grow_branch
from obl.regions import RegionBudget, build_instability_region
from obl.variational import config_to_orbit, find_orbits


def roundtrip(doc):
    return json.loads(dumps(doc))


@pytest.fixture(scope="module")
def oval2():
    return FourierOval(1.0, ((2, 0.05, 0.0),))


@pytest.fixture(scope="module")
def hyp(oval2):
    orbs = [config_to_orbit(oval2, c.config) for c in find_orbits(oval2, 1, 2)]
    return next(o for o in orbs if o.cls == "hyperbolic")


@pytest.mark.parametrize(
    "oval",
    [
        FourierOval(1.0),
        FourierOval(1.3, ((2, 0.2, 0.1), (5, -0.05, 0.03))),
        Ellipse(2.0, 1.0),
        PerturbedOval(Ellipse(1.5, 1.0), (NormalBump(1.0, 0.4, 0.05),)),
    ],
)
def test_curve_roundtrip(oval):
    again = oval_from_dict(roundtrip(oval.to_dict()))
    assert again == oval
    phi = np.linspace(0, 2 * math.pi, 50)
    np.testing.assert_array_equal(again.position(phi), oval.position(phi))


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e6, 1e6, allow_nan=False), st.floats(1e-300, 1e300))
def test_float_precision(a, b):
    doc = roundtrip(document("x", a=a, b=b, arr=np.array([a, b])))
    assert doc["a"] == a and doc["b"] == b and doc["arr"] == [a, b]


def test_header():
    doc = document("orbit_library", orbits=[])
    assert doc["format"] == FORMAT == "obl/1"
    assert doc["type"] == "orbit_library" and "version" in doc


def test_library_roundtrip(ellipse):
    pts = find_orbits(ellipse, 1, 2)
    orbs = [config_to_orbit(ellipse, cp.config) for cp in pts]
    doc = roundtrip(library_document(ellipse, pts, orbs))
    oval, back = library_orbits(doc)
    assert oval == ellipse
    for a, b in zip(orbs, back):
        np.testing.assert_array_equal(a.phi, b.phi)
        np.testing.assert_array_equal(a.theta, b.theta)
        assert b.trace == pytest.approx(a.trace, rel=1e-12, abs=1e-12)
        assert b.cls == a.cls


def test_orbit_record_errors(ellipse, hyp):
    rec = orbit_record(hyp)
    with pytest.raises(FormatError, match="'psi'"):
        orbit_from_record(ellipse, {**rec, "psi": rec["psi"][:1]})
    with pytest.raises(FormatError, match="'m'"):
        orbit_from_record(ellipse, {k: v for k, v in rec.items() if k != "m"})
    with pytest.raises(FormatError, match="'type'"):
        library_orbits(document("branch", curve=ellipse.to_dict(), orbits=[]))


def test_branch_roundtrip(oval2, hyp):
    br = grow_branch(oval2, hyp, 0, "unstable+", Budget(max_arclength=1.0))
    back = branch_from_document(roundtrip(branch_document(br)))
    np.testing.assert_array_equal(back.points, br.points)
    np.testing.assert_array_equal(back.u, br.u)
    assert (back.kind, back.index, back.power) == (br.kind, br.index, br.power)
    assert back.eigenvalue == br.eigenvalue and back.epsilon == br.epsilon
    # the parameterization is usable after reloading
    np.testing.assert_allclose(back.point_at([1.5]), br.point_at([1.5]), atol=1e-12)


def test_intersection_roundtrip(oval2, hyp):
    a = grow_branch(oval2, hyp, 0, "unstable+", Budget(max_arclength=3.0))
    b = grow_branch(oval2, hyp, 1, "stable-", Budget(max_arclength=3.0))
    pts = find_intersections(a, b)
    for p in pts:
        q = intersection_from_dict(roundtrip(p.to_dict()))
        np.testing.assert_array_equal(q.location, p.location)
        assert (q.crossing_angle, q.transversal, q.kind, q.refined) == (p.crossing_angle, p.transversal, p.kind, p.refined)


def test_load_errors(tmp_path):
    with pytest.raises(FormatError, match="cannot read"):
        load(tmp_path / "nope.json")
    f = tmp_path / "x.json"
    f.write_text("[1, 2")
    with pytest.raises(FormatError, match="line 1"):
        load(f)
    f.write_text(json.dumps(document("curve")))
    with pytest.raises(FormatError, match="'type'"):
        load(f, "branch")


def test_region_document(trefoil):
    orbs = [config_to_orbit(trefoil, c.config) for c in find_orbits(trefoil, 1, 3)]
    hyp = next(o for o in orbs if o.cls == "hyperbolic")
    r = build_instability_region(trefoil, hyp, RegionBudget(arclength=5, iterations=60), bins=(64, 64))
    doc = roundtrip(document("region", curve=trefoil.to_dict(), **r.to_dict()))
    assert doc["orbit"]["trace"] == pytest.approx(hyp.trace)
    np.testing.assert_array_equal(doc["upper"], r.upper)
    svg = region_svg(r, "t")
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")


def test_phase_svg(trefoil):
    traj = np.column_stack([np.linspace(0, 7, 20), np.full(20, 1.0)])
    svg = phase_svg([traj], title="a < b")
    assert "a &lt; b" in svg and svg.rstrip().endswith("</svg>")
