"""Versioned JSON documents, their loaders, and self-contained SVG drawings.

Every document carries ``"format": "obl/1"``, the package version and a
``"type"`` tag. Floats are written with ``repr`` precision so re-reading a
document gives back the same numbers bit for bit.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .config import DEFAULT, Tolerances
from .curve import Oval, oval_from_dict
from .manifolds import HeteroclinicPoint, ManifoldBranch
from .stability import PeriodicOrbit
from .variational import PolygonConfig

FORMAT = "obl/1"
TWO_PI = 2.0 * math.pi

__all__ = [
    "FORMAT",
    "FormatError",
    "document",
    "dump",
    "load",
    "require",
    "orbit_record",
    "orbit_from_record",
    "library_document",
    "library_orbits",
    "branch_document",
    "branch_from_document",
    "intersection_from_dict",
    "phase_svg",
    "region_svg",
]


class FormatError(ValueError):
    """Malformed input document; the message names the offending field."""


def document(doc_type: str, /, **payload) -> dict:
    return {"format": FORMAT, "version": __version__, "type": doc_type, **payload}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(doc: dict) -> str:
    return json.dumps(_plain(doc), indent=1, allow_nan=True) + "\n"


def dump(path: str | Path, doc: dict) -> None:
    Path(path).write_text(dumps(doc))


def load(path: str | Path, kind: str | None = None) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if kind is not None:
        check_header(doc, kind, str(path))
    return doc


def check_header(doc, kind: str, where: str = "document") -> None:
    if not isinstance(doc, dict):
        raise FormatError(f"{where}: expected a JSON object")
    if doc.get("format") != FORMAT:
        raise FormatError(f"{where}: field 'format' must be {FORMAT!r}, got {doc.get('format')!r}")
    if doc.get("type") != kind:
        raise FormatError(f"{where}: field 'type' must be {kind!r}, got {doc.get('type')!r}")


def require(data: dict, key: str, where: str, cast=None):
    if not isinstance(data, dict) or key not in data:
        raise FormatError(f"{where}: missing field {key!r}")
    value = data[key]
    if cast is None:
        return value
    try:
        return cast(value)
    except (TypeError, ValueError):
        raise FormatError(f"{where}: field {key!r} has invalid value {value!r}") from None


def _float_array(value, where: str, key: str) -> np.ndarray:
    try:
        a = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise FormatError(f"{where}: field {key!r} must be a list of numbers") from None
    return a


# ------------------------------------------------------------------ orbits


def orbit_record(orbit: PeriodicOrbit, **extra) -> dict:
    rec = {
        "m": orbit.m,
        "n": orbit.n,
        "psi": orbit.phi.tolist(),
        "theta": orbit.theta.tolist(),
        "trace": orbit.trace,
        "class": orbit.cls,
        "closure_error": orbit.closure_error,
    }
    rec.update(extra)
    return rec


def orbit_from_record(oval: Oval, rec: dict, where: str = "orbit") -> PeriodicOrbit:
    m = require(rec, "m", where, int)
    n = require(rec, "n", where, int)
    psi = _float_array(require(rec, "psi", where), where, "psi")
    theta = _float_array(require(rec, "theta", where), where, "theta")
    if psi.shape != (n,) or theta.shape != (n,):
        raise FormatError(f"{where}: fields 'psi' and 'theta' must have length n={n}")
    try:
        config = PolygonConfig(m, n, psi)
    except ValueError as exc:
        raise FormatError(f"{where}: field 'psi': {exc}") from None
    return PeriodicOrbit.from_config(oval, config, theta, float(rec.get("closure_error", 0.0)))


def library_document(oval: Oval, points, orbits) -> dict:
    """Orbit library from matching critical points and phase orbits."""
    entries = []
    for k, (cp, orb) in enumerate(zip(points, orbits)):
        entries.append(
            orbit_record(
                orb,
                id=k,
                action=cp.action,
                gradient_norm=cp.gradient_norm,
                hessian_signature=list(cp.hessian_signature),
                minimum=cp.is_minimum,
            )
        )
    return document("orbit_library", curve=oval.to_dict(), orbits=entries)


def library_orbits(doc: dict, oval: Oval | None = None, where: str = "orbit library") -> tuple[Oval, list[PeriodicOrbit]]:
    check_header(doc, "orbit_library", where)
    if oval is None:
        oval = oval_from_dict(require(doc, "curve", where))
    items = require(doc, "orbits", where)
    if not isinstance(items, list):
        raise FormatError(f"{where}: field 'orbits' must be a list")
    return oval, [orbit_from_record(oval, rec, f"{where}: orbits[{k}]") for k, rec in enumerate(items)]


# ---------------------------------------------------------------- branches


def branch_document(br: ManifoldBranch, budget=None) -> dict:
    return document(
        "branch",
        curve=br.oval.to_dict(),
        orbit=orbit_record(br.orbit),
        index=br.index,
        kind=br.kind,
        eigenvalue=br.eigenvalue,
        direction=br.direction.tolist(),
        power=br.power,
        growth=br.growth,
        epsilon=br.epsilon,
        truncated=br.truncated,
        unresolved=br.unresolved,
        length=br.length,
        budget=None if budget is None else {"max_points": budget.max_points, "max_arclength": budget.max_arclength},
        u=br.u.tolist(),
        points=br.points.tolist(),
    )


def branch_from_document(doc: dict, where: str = "branch", tol: Tolerances = DEFAULT) -> ManifoldBranch:
    check_header(doc, "branch", where)
    oval = oval_from_dict(require(doc, "curve", where))
    orbit = orbit_from_record(oval, require(doc, "orbit", where), f"{where}: orbit")
    pts = _float_array(require(doc, "points", where), where, "points").reshape(-1, 2)
    return ManifoldBranch(
        oval=oval,
        orbit=orbit,
        index=require(doc, "index", where, int),
        kind=require(doc, "kind", where, str),
        eigenvalue=require(doc, "eigenvalue", where, float),
        direction=_float_array(require(doc, "direction", where), where, "direction"),
        power=require(doc, "power", where, int),
        growth=require(doc, "growth", where, float),
        epsilon=require(doc, "epsilon", where, float),
        u=_float_array(require(doc, "u", where), where, "u"),
        points=pts,
        truncated=bool(doc.get("truncated", True)),
        unresolved=int(doc.get("unresolved", 0)),
        tol=tol,
    )


def intersection_from_dict(rec: dict, where: str = "intersection") -> HeteroclinicPoint:
    slope = rec.get("slope")
    tangents = None
    if slope is not None:
        t = np.array([1.0, float(slope)]) / math.hypot(1.0, float(slope))
        tangents = (t, t)
    return HeteroclinicPoint(
        location=np.array([require(rec, "phi", where, float), require(rec, "theta", where, float)]),
        branches=tuple(require(rec, "branches", where)),
        u=tuple(require(rec, "u", where)),
        crossing_angle=require(rec, "crossing_angle", where, float),
        transversal=bool(require(rec, "transversal", where)),
        kind=require(rec, "kind", where, str),
        tangents=tangents,
        refined=bool(rec.get("refined", True)),
    )


# --------------------------------------------------------------------- SVG

PALETTE = ("#1f5fa8", "#c0392b", "#2e8b57", "#8e44ad", "#d68910", "#117a65", "#6e2c00", "#555555")


class _Canvas:
    """Phase cylinder ``[0, 2pi) x (0, pi)`` drawn into a fixed-size SVG."""

    def __init__(self, width: int = 900, height: int = 450, pad: int = 40):
        self.w, self.h, self.pad = width, height, pad
        self.items: list[str] = []

    def xy(self, phi, theta):
        x = self.pad + np.mod(phi, TWO_PI) / TWO_PI * (self.w - 2 * self.pad)
        y = self.h - self.pad - np.asarray(theta) / math.pi * (self.h - 2 * self.pad)
        return x, y

    def dots(self, pts: np.ndarray, color: str, size: float = 0.8) -> None:
        if len(pts) == 0:
            return
        x, y = self.xy(pts[:, 0], pts[:, 1])
        d = "".join(f"M{a:.2f} {b:.2f}h{size}" for a, b in zip(x, y))
        self.items.append(f'<path d="{d}" stroke="{color}" stroke-width="{size}" fill="none"/>')

    def polyline(self, pts: np.ndarray, color: str, width: float = 1.0) -> None:
        """Polyline that breaks wherever it wraps around the seam."""
        if len(pts) < 2:
            return
        x, y = self.xy(pts[:, 0], pts[:, 1])
        jump = np.abs(np.diff(x)) > 0.5 * (self.w - 2 * self.pad)
        parts, cmd = [], "M"
        for k, (a, b) in enumerate(zip(x, y)):
            if k and jump[k - 1]:
                cmd = "M"
            parts.append(f"{cmd}{a:.2f} {b:.2f}")
            cmd = "L"
        self.items.append(f'<path d="{"".join(parts)}" stroke="{color}" stroke-width="{width}" fill="none"/>')

    def cells(self, mask: np.ndarray, color: str, opacity: float = 0.5) -> None:
        n_phi, n_theta = mask.shape
        cw = (self.w - 2 * self.pad) / n_phi
        ch = (self.h - 2 * self.pad) / n_theta
        parts = []
        for i, j in np.argwhere(mask):
            x = self.pad + i * cw
            y = self.h - self.pad - (j + 1) * ch
            parts.append(f"M{x:.2f} {y:.2f}h{cw:.2f}v{ch:.2f}h{-cw:.2f}z")
        if parts:
            self.items.append(f'<path d="{"".join(parts)}" fill="{color}" fill-opacity="{opacity}" stroke="none"/>')

    def markers(self, pts: np.ndarray, color: str, r: float = 3.5) -> None:
        x, y = self.xy(pts[:, 0], pts[:, 1])
        for a, b in zip(x, y):
            self.items.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="{r}" fill="{color}" stroke="black" stroke-width="0.5"/>')

    def render(self, title: str = "") -> str:
        p, w, h = self.pad, self.w, self.h
        frame = [
            f'<rect x="{p}" y="{p}" width="{w - 2 * p}" height="{h - 2 * p}" fill="white" stroke="black"/>',
            f'<text x="{w / 2}" y="{h - 8}" font-size="13" text-anchor="middle">phi (0 to 2 pi)</text>',
            f'<text x="12" y="{h / 2}" font-size="13" text-anchor="middle" transform="rotate(-90 12 {h / 2})">theta (0 to pi)</text>',
        ]
        if title:
            frame.append(f'<text x="{w / 2}" y="22" font-size="14" text-anchor="middle">{escape(title)}</text>')
        body = "\n".join(frame[:1] + self.items + frame[1:])
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">\n'
            f"<!-- {FORMAT} {__version__} -->\n{body}\n</svg>\n"
        )


def phase_svg(trajectories=(), orbits=(), curves=(), title: str = "") -> str:
    """Phase portrait: point clouds, periodic-orbit markers and polylines (e.g. manifold branches)."""
    c = _Canvas()
    for k, traj in enumerate(trajectories):
        c.dots(np.asarray(traj), PALETTE[k % len(PALETTE)])
    for k, pts in enumerate(curves):
        c.polyline(np.asarray(pts), PALETTE[(k + 1) % len(PALETTE)])
    for orb in orbits:
        c.markers(orb.phase_points, "#ffcc00" if orb.cls == "elliptic" else "#e74c3c")
    return c.render(title)


def region_svg(region, title: str = "") -> str:
    """Occupied cells, island cells, both envelopes and the orbits involved."""
    c = _Canvas()
    c.cells(region.occupied, "#1f5fa8", 0.6)
    for k, isl in enumerate(region.islands):
        mask = np.zeros_like(region.occupied)
        mask[isl.cells[:, 0], isl.cells[:, 1]] = True
        c.cells(mask, PALETTE[(k + 2) % len(PALETTE)], 0.35)
    phis = region.phi_centers
    for env in (region.lower, region.upper):
        c.polyline(np.column_stack([phis, env]), "black", 1.2)
    c.markers(region.orbit.phase_points, "#e74c3c")
    for isl in region.islands:
        if isl.center_orbit is not None:
            c.markers(isl.center_orbit.phase_points, "#ffcc00")
    return c.render(title)
