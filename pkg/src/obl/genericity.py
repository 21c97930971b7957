"""Constructive perturbations: breaking a degenerate orbit and splitting a tangency.

Both procedures add one normal bump with second-order contact at a chosen
boundary point, so every trajectory that touches the table only at that
point (and away from the support elsewhere) survives unchanged while the
curvature there moves by roughly ``-h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .billiard import forward_lift, orbit_array, tangent_maps
from .config import DEFAULT, Tolerances
from .curve import InvalidOval, NormalBump, Oval, PerturbedOval, perturbed_radius_at_center
from .manifolds import HeteroclinicPoint, tangency_splitting_prediction
from .stability import PeriodicOrbit, fallback_trace, trace_decomposition
from .variational import PolygonConfig, config_to_orbit, refine_config

TWO_PI = 2.0 * math.pi
H_CAP = 1e-2

__all__ = [
    "SupportConflict",
    "SiteReport",
    "DegeneracyBreak",
    "TangencySplit",
    "select_perturbation_site",
    "break_degeneracy",
    "split_tangency",
    "c1_distance",
    "angular_gap",
]


class SupportConflict(ValueError):
    """A bump support would touch trajectory points it must avoid."""


def angular_gap(a, b) -> np.ndarray:
    return np.abs(np.remainder(np.asarray(a, dtype=float) - b + math.pi, TWO_PI) - math.pi)


@dataclass(frozen=True)
class SiteReport:
    site: int
    b: float
    c: float
    fallback: bool
    fallback_trace: float | None = None
    scanned: tuple = ()

    def to_dict(self) -> dict:
        return {
            "site": self.site,
            "b": self.b,
            "c": self.c,
            "fallback": self.fallback,
            "fallback_trace": self.fallback_trace,
        }


def select_perturbation_site(
    orbit: PeriodicOrbit, threshold: float | None = None, tol: Tolerances = DEFAULT, x=None, chords=None
) -> SiteReport:
    """First site ``i >= 1`` with ``|b_i| > threshold``, else the perimeter fallback at site 0."""
    threshold = tol.b_threshold if threshold is None else threshold
    x = orbit.x if x is None else np.asarray(x, dtype=float)
    chords = orbit.chords if chords is None else np.asarray(chords, dtype=float)
    scanned = []
    for i in range(1, len(x)):
        d = trace_decomposition(orbit, i, tol, x=x, chords=chords)
        scanned.append((i, d.b))
        if abs(d.b) > threshold:
            return SiteReport(i, d.b, d.c, False, None, tuple(scanned))
    d0 = trace_decomposition(orbit, 0, tol, x=x, chords=chords)
    return SiteReport(0, d0.b, d0.c, True, fallback_trace(x[0], chords), tuple(scanned))


@dataclass(frozen=True)
class DegeneracyBreak:
    oval: Oval
    site: int
    b: float
    c: float
    h: float
    half_width: float
    R_before: float
    R_after: float
    x_before: float
    x_after: float
    trace_before: float
    trace_predicted: float  # affine model with the first-order curvature R0 - h
    trace_affine_exact: float  # affine model with the exact perturbed curvature
    trace_measured: float | None = None
    closure_error: float | None = None
    orbit: PeriodicOrbit | None = field(default=None, repr=False)

    @property
    def prediction_error(self) -> float | None:
        if self.trace_measured is None:
            return None
        return abs(self.trace_measured - self.trace_predicted)

    def report(self) -> dict:
        return {
            "site": self.site,
            "b": self.b,
            "c": self.c,
            "h": self.h,
            "half_width": self.half_width,
            "trace_before": self.trace_before,
            "trace_predicted": self.trace_predicted,
            "trace_affine_exact": self.trace_affine_exact,
            "trace_measured": self.trace_measured,
            "closure_error": self.closure_error,
        }


def _clear_half_width(center: float, others, cap: float = 0.5) -> float:
    others = np.asarray(others, dtype=float)
    if len(others) == 0:
        return cap
    return float(min(cap, 0.5 * angular_gap(others, center).min()))


def _bumped(oval: Oval, center: float, delta: float, h: float) -> Oval:
    return PerturbedOval(oval, (NormalBump(center, delta, h),))


def _valid_h(oval, center, delta, h) -> bool:
    try:
        _bumped(oval, center, delta, h)
    except InvalidOval:
        return False
    return True


def _default_h(oval: Oval, center: float, delta: float, sign: float) -> float:
    """Half of the largest curvature-safe amplitude, capped at ``H_CAP``."""
    if _valid_h(oval, center, delta, sign * 2 * H_CAP):
        return sign * H_CAP
    lo, hi = 0.0, 2 * H_CAP
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if _valid_h(oval, center, delta, sign * mid):
            lo = mid
        else:
            hi = mid
    return sign * 0.5 * lo


def break_degeneracy(
    oval: Oval,
    orbit: PeriodicOrbit,
    h: float | None = None,
    site: int | None = None,
    half_width: float | None = None,
    threshold: float | None = None,
    require_degenerate: bool = True,
    measure: bool = True,
    tol: Tolerances = DEFAULT,
) -> DegeneracyBreak:
    """Bump the table at one orbit vertex so the trace leaves ``+-2``.

    The polygon is unchanged (the bump vanishes to second order at the vertex),
    only ``x_i`` moves, and the affine model ``b_i / x_i + c_i`` predicts the
    new trace.
    """
    if require_degenerate and orbit.cls != "degenerate":
        raise ValueError(f"orbit is not degenerate (trace {orbit.trace:.12g})")
    if site is None:
        rep = select_perturbation_site(orbit, threshold, tol)
        site, b, c = rep.site, rep.b, rep.c
    else:
        d = trace_decomposition(orbit, site, tol)
        b, c = d.b, d.c
    center = float(orbit.phi[site] % TWO_PI)
    others = np.delete(np.mod(orbit.phi, TWO_PI), site)
    if half_width is None:
        half_width = _clear_half_width(center, others)
    hits = others[angular_gap(others, center) < half_width]
    if len(hits):
        raise SupportConflict(f"bump support around phi={center:.6f} also contains vertices {hits.tolist()}")
    if half_width <= 0.0:
        raise SupportConflict("orbit vertices coincide; no support isolates the site")

    R0 = float(orbit.R[site])
    th = float(orbit.theta[site])
    if h is None:
        nearest = 2.0 if orbit.trace >= 0 else -2.0
        away = math.copysign(1.0, orbit.trace - nearest) if orbit.trace != nearest else math.copysign(1.0, nearest)
        # d(trace)/dh has the sign of b
        h = _default_h(oval, center, half_width, away * math.copysign(1.0, b))
    new_oval = oval if h == 0.0 else _bumped(oval, center, half_width, h)
    R1 = perturbed_radius_at_center(R0, h) if h != 0.0 else R0
    x0 = R0 * math.sin(th)
    x1 = R1 * math.sin(th)
    x_first = (R0 - h) * math.sin(th)
    out = DegeneracyBreak(
        oval=new_oval,
        site=site,
        b=b,
        c=c,
        h=h,
        half_width=half_width,
        R_before=R0,
        R_after=R1,
        x_before=x0,
        x_after=x1,
        trace_before=orbit.trace,
        trace_predicted=b / x_first + c,
        trace_affine_exact=b / x1 + c,
    )
    if not measure:
        return out
    config = PolygonConfig(orbit.m, orbit.n, orbit.phi)
    refined = refine_config(new_oval, config, tol) or config
    new_orbit = config_to_orbit(new_oval, refined, tol, closure_tol=1e-8)
    return replace(out, trace_measured=new_orbit.trace, closure_error=new_orbit.closure_error, orbit=new_orbit)


@dataclass(frozen=True)
class TangencySplit:
    oval: Oval
    center: float
    half_width: float
    h: float
    R0: float
    theta0: float
    slope: float
    slope_u: float
    slope_s: float

    @property
    def slope_gap(self) -> float:
        return self.slope_u - self.slope_s

    @property
    def predicted_angle(self) -> float:
        return abs(math.atan(self.slope_u) - math.atan(self.slope_s))

    def report(self) -> dict:
        return {
            "center": self.center,
            "half_width": self.half_width,
            "h": self.h,
            "R0": self.R0,
            "theta0": self.theta0,
            "slope": self.slope,
            "slope_u": self.slope_u,
            "slope_s": self.slope_s,
            "predicted_angle": self.predicted_angle,
        }


def tangency_footprints(oval: Oval, phi: float, theta: float, steps: int, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Boundary points visited by the trajectory through ``(phi, theta)``, excluding the point itself."""
    fwd = orbit_array(oval, phi, theta, steps, tol)[1:, 0]
    bwd = orbit_array(oval, phi, theta, -steps, tol)[1:, 0]
    return np.mod(np.concatenate([fwd, bwd]), TWO_PI)


def split_tangency(
    oval: Oval,
    tangency: HeteroclinicPoint,
    h: float,
    orbits: tuple = (),
    half_width: float | None = None,
    footprint_steps: int = 40,
    slope: float | None = None,
    tol: Tolerances = DEFAULT,
) -> TangencySplit:
    """Bump the table at the tangency's boundary point to make the crossing transversal."""
    if tangency.transversal:
        raise ValueError("the intersection is already transversal")
    phi0 = float(tangency.location[0] % TWO_PI)
    theta0 = float(tangency.location[1])
    slope = tangency.slope if slope is None else slope
    feet = tangency_footprints(oval, phi0, theta0, footprint_steps, tol)
    verts = [np.mod(o.phi, TWO_PI) for o in orbits]
    avoid = np.concatenate([feet, *verts]) if verts else feet
    if half_width is None:
        half_width = _clear_half_width(phi0, avoid)
    bad = avoid[angular_gap(avoid, phi0) < half_width]
    if len(bad):
        raise SupportConflict(
            f"bump support (center {phi0:.6f}, half width {half_width:.3g}) contains footprints {np.unique(bad).tolist()}"
        )
    R0 = float(oval.radius(np.array([phi0]))[0])
    su, ss = tangency_splitting_prediction(R0, theta0, slope, h)
    new_oval = oval if h == 0.0 else _bumped(oval, phi0, half_width, h)
    return TangencySplit(new_oval, phi0, half_width, h, R0, theta0, slope, su, ss)


def c1_distance(A: Oval, B: Oval, grid: tuple[int, int] = (48, 24), margin: float = 0.1, tol: Tolerances = DEFAULT) -> float:
    """Sup distance of the two maps plus sup distance of their Jacobian entries on a phase grid."""
    phi = np.linspace(0.0, TWO_PI, grid[0], endpoint=False)
    theta = np.linspace(margin, math.pi - margin, grid[1])
    P, Th = (a.ravel() for a in np.meshgrid(phi, theta, indexing="ij"))
    pa, ta = forward_lift(A, P, Th, tol)
    pb, tb = forward_lift(B, P, Th, tol)
    image = float(np.max(np.hypot(pa - pb, ta - tb)))
    ma, *_ = tangent_maps(A, P, Th, tol)
    mb, *_ = tangent_maps(B, P, Th, tol)
    jac = float(np.max(np.abs(ma - mb)))
    return image + jac
