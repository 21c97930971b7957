"""Ovals: closed, strictly convex C^2 curves and their normal bump perturbations.

Three families are supported:

``FourierOval``
    radius of curvature ``R(phi) = a0 + sum_k (a_k cos k phi + b_k sin k phi)``
    as a function of the tangent angle ``phi``, position
    ``alpha(phi) = int_0^phi R(psi) (cos psi, sin psi) dpsi``.
``Ellipse``
    ``(a cos t, b sin t)``, the analytic oracle family.
``PerturbedOval``
    ``base(phi) + lambda(phi) eta(phi)`` where ``eta`` is the inward normal and
    ``lambda`` a sum of :class:`NormalBump` profiles.

Whatever the family, the billiard phase coordinate of a boundary point is its
tangent angle in ``[0, 2 pi)``; :meth:`Oval.geometry` evaluates there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import legendre
from scipy.optimize import minimize_scalar

from . import _kernels as K

TWO_PI = 2.0 * math.pi

__all__ = [
    "InvalidOval",
    "Oval",
    "FourierOval",
    "Ellipse",
    "NormalBump",
    "PerturbedOval",
    "CurvePoint",
    "eval_point",
    "bump_displacement",
    "perturbed_radius_at_center",
    "closure_defect",
    "curvature_minimum",
    "check_oval",
    "oval_from_dict",
]


class InvalidOval(ValueError):
    """Raised when a curve spec is not a strictly convex closed C^2 curve."""


@dataclass(frozen=True)
class CurvePoint:
    param: float
    position: np.ndarray
    tangent: np.ndarray
    inward_normal: np.ndarray
    tangent_angle: float
    R: float


class Oval:
    """Common interface; subclasses are frozen dataclasses."""

    kind: str

    # packed representation for the compiled kernels
    def geo(self):
        raise NotImplementedError

    def geometry(self, phi):
        """Position (n, 2), radius of curvature and dR/dphi at tangent angles ``phi``."""
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        out = K.geom_many(self.geo(), np.ascontiguousarray(phi.ravel()))
        return out[:, :2], out[:, 2], out[:, 3]

    def position(self, phi):
        return self.geometry(phi)[0]

    def radius(self, phi):
        return self.geometry(phi)[1]

    def to_dict(self) -> dict:
        raise NotImplementedError


def _validate(oval: Oval, n_grid: int = 4096) -> None:
    rmin, at = curvature_minimum(oval, n_grid)
    if not rmin > 0.0:
        raise InvalidOval(f"radius of curvature {rmin:.3e} <= 0 at phi = {at:.6f}")


@dataclass(frozen=True)
class FourierOval(Oval):
    a0: float
    harmonics: tuple = ()
    check: bool = field(default=True, repr=False, compare=False)

    kind = "fourier"

    def __post_init__(self):
        hs = tuple((int(k), float(a), float(b)) for k, a, b in self.harmonics)
        object.__setattr__(self, "harmonics", hs)
        object.__setattr__(self, "a0", float(self.a0))
        if not self.check:
            return
        for k, _, _ in hs:
            if k < 2:
                raise InvalidOval(f"harmonic k={k} not allowed (need k >= 2 for closure)")
        if len({k for k, _, _ in hs}) != len(hs):
            raise InvalidOval("repeated harmonic index")
        _validate(self)

    def geo(self):
        g = self.__dict__.get("_geo")
        if g is None:
            hs = self.harmonics
            g = (
                K.KIND_FOURIER,
                np.array([self.a0, 0.0, 0.0]),
                np.array([h[0] for h in hs], dtype=np.int64),
                np.array([h[1] for h in hs], dtype=float),
                np.array([h[2] for h in hs], dtype=float),
                np.zeros((0, 3)),
            )
            object.__setattr__(self, "_geo", g)
        return g

    def radius_series(self, phi):
        """R(phi) straight from the series (no kernels)."""
        phi = np.asarray(phi, dtype=float)
        r = np.full_like(phi, self.a0)
        for k, a, b in self.harmonics:
            r = r + a * np.cos(k * phi) + b * np.sin(k * phi)
        return r

    def to_dict(self) -> dict:
        return {
            "kind": "fourier",
            "a0": self.a0,
            "harmonics": [[k, a, b] for k, a, b in self.harmonics],
        }


@dataclass(frozen=True)
class Ellipse(Oval):
    a: float
    b: float

    kind = "ellipse"

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        if not (0.0 < self.b <= self.a):
            raise InvalidOval(f"ellipse needs 0 < b <= a, got a={self.a}, b={self.b}")

    def geo(self):
        g = self.__dict__.get("_geo")
        if g is None:
            g = (
                K.KIND_ELLIPSE,
                np.array([0.0, self.a, self.b]),
                np.zeros(0, dtype=np.int64),
                np.zeros(0),
                np.zeros(0),
                np.zeros((0, 3)),
            )
            object.__setattr__(self, "_geo", g)
        return g

    def tangent_angle_of(self, t):
        t = np.asarray(t, dtype=float)
        return np.mod(np.arctan2(self.b * np.cos(t), -self.a * np.sin(t)), TWO_PI)

    def param_of(self, phi):
        phi = np.asarray(phi, dtype=float)
        return np.arctan2(-np.cos(phi) / self.a, np.sin(phi) / self.b)

    def to_dict(self) -> dict:
        return {"kind": "ellipse", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class NormalBump:
    """C^2 bump ``lambda(phi) = (h/2) u^2 B(u/delta)``, ``u = phi - center``.

    ``B(s) = (1 - s^2)^3 (1 + 3 s^2)`` so that ``lambda(center) =
    lambda'(center) = 0``, ``lambda''(center) = h`` and the profile vanishes to
    second order at ``center +- delta``.
    """

    center: float
    half_width: float
    h: float

    def __post_init__(self):
        if not (0.0 < self.half_width <= math.pi):
            raise InvalidOval(f"bump half width must lie in (0, pi], got {self.half_width}")

    def to_dict(self) -> dict:
        return {"center": self.center, "half_width": self.half_width, "h": self.h}

    def contains(self, phi) -> np.ndarray:
        u = np.mod(np.asarray(phi, dtype=float) - self.center + math.pi, TWO_PI) - math.pi
        return np.abs(u) < self.half_width


@dataclass(frozen=True)
class PerturbedOval(Oval):
    base: Oval
    bumps: tuple = ()
    check: bool = field(default=True, repr=False, compare=False)

    kind = "perturbed"

    def __post_init__(self):
        base = self.base
        bumps = tuple(self.bumps)
        if isinstance(base, PerturbedOval):
            # flatten; only valid while the new supports avoid the old ones
            for nb in bumps:
                for ob in base.bumps:
                    gap = abs(math.remainder(nb.center - ob.center, TWO_PI))
                    if ob.h != 0.0 and nb.h != 0.0 and gap < nb.half_width + ob.half_width:
                        raise InvalidOval(
                            "nested perturbation overlaps an existing bump support"
                        )
            bumps = base.bumps + bumps
            base = base.base
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "bumps", bumps)
        if self.check:
            _validate(self)

    def geo(self):
        g = self.__dict__.get("_geo")
        if g is None:
            kind, scal, ks, ak, bk, _ = self.base.geo()
            rows = np.array(
                [[b.center, b.half_width, b.h] for b in self.bumps], dtype=float
            ).reshape(-1, 3)
            g = (kind, scal, ks, ak, bk, rows)
            object.__setattr__(self, "_geo", g)
        return g

    def to_dict(self) -> dict:
        return {
            "kind": "perturbed",
            "base": self.base.to_dict(),
            "bumps": [b.to_dict() for b in self.bumps],
        }


def oval_from_dict(data: dict) -> Oval:
    """Build an oval from its JSON form; raises :class:`InvalidOval` with the field name."""
    if not isinstance(data, dict) or "kind" not in data:
        raise InvalidOval("curve spec: missing field 'kind'")
    kind = data["kind"]
    try:
        if kind == "fourier":
            return FourierOval(float(data["a0"]), tuple(tuple(h) for h in data.get("harmonics", [])))
        if kind == "ellipse":
            return Ellipse(float(data["a"]), float(data["b"]))
        if kind == "perturbed":
            base = oval_from_dict(data["base"])
            bumps = tuple(
                NormalBump(float(b["center"]), float(b["half_width"]), float(b["h"]))
                for b in data.get("bumps", [])
            )
            return PerturbedOval(base, bumps)
    except KeyError as exc:
        raise InvalidOval(f"curve spec ({kind}): missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidOval):
            raise
        raise InvalidOval(f"curve spec ({kind}): {exc}") from None
    raise InvalidOval(f"curve spec: unknown kind {kind!r} (field 'kind')")


# -- operations --------------------------------------------------------------


def _frame(tangent_angle: float):
    t = np.array([math.cos(tangent_angle), math.sin(tangent_angle)])
    return t, np.array([-t[1], t[0]])


def _radius_from_derivatives(d1, d2) -> float:
    cross = d1[0] * d2[1] - d1[1] * d2[0]
    return float(np.hypot(d1[0], d1[1]) ** 3 / cross)


def eval_point(spec: Oval, param: float) -> CurvePoint:
    """Evaluate the curve at its native parameter.

    The native parameter is the tangent angle for Fourier ovals, the angle
    ``t`` of ``(a cos t, b sin t)`` for ellipses and the base tangent angle for
    perturbed ovals.
    """
    param = float(np.mod(param, TWO_PI))
    if isinstance(spec, FourierOval):
        pos, r, _ = spec.geometry(param)
        if not r[0] > 0.0:
            raise InvalidOval(f"non-positive curvature at parameter {param}")
        t, n = _frame(param)
        return CurvePoint(param, pos[0], t, n, param, float(r[0]))
    if isinstance(spec, Ellipse):
        a, b = spec.a, spec.b
        pos = np.array([a * math.cos(param), b * math.sin(param)])
        d1 = np.array([-a * math.sin(param), b * math.cos(param)])
        d2 = np.array([-a * math.cos(param), -b * math.sin(param)])
        r = _radius_from_derivatives(d1, d2)
        phi = float(math.atan2(d1[1], d1[0]) % TWO_PI)
        t, n = _frame(phi)
        return CurvePoint(param, pos, t, n, phi, r)
    if isinstance(spec, PerturbedOval):
        geo = spec.geo()
        x, y, r, dr = K.base_eval(geo, param)
        l0, l1, l2, _ = K.bumps_eval(geo[5], param)
        t0, n0 = _frame(param)
        d1 = (r - l0) * t0 + l1 * n0
        d2 = (dr - 2.0 * l1) * t0 + (r - l0 + l2) * n0
        cross = d1[0] * d2[1] - d1[1] * d2[0]
        if not cross > 0.0:
            raise InvalidOval(f"non-positive curvature at parameter {param}")
        rt = _radius_from_derivatives(d1, d2)
        pos = np.array([x, y]) + l0 * n0
        phi = float(math.atan2(d1[1], d1[0]) % TWO_PI)
        t, n = _frame(phi)
        return CurvePoint(param, pos, t, n, phi, rt)
    raise TypeError(f"unsupported oval type {type(spec).__name__}")


def bump_displacement(bump: NormalBump, phi):
    """``(lambda, lambda', lambda'')`` of one bump at ``phi`` (arrays broadcast)."""
    phi = np.asarray(phi, dtype=float)
    flat = np.atleast_1d(phi).ravel()
    out = np.array([K.bump_eval(bump.center, bump.half_width, bump.h, p)[:3] for p in flat])
    out = out.reshape(flat.shape + (3,))
    if phi.ndim == 0:
        return tuple(float(v) for v in out[0])
    shape = phi.shape
    return tuple(out[:, j].reshape(shape) for j in range(3))


def perturbed_radius_at_center(R0: float, h: float, dR0: float = 0.0) -> float:
    """Exact radius of curvature at the center of a bump with ``lambda'' = h``.

    Evaluated from the first and second derivatives of ``alpha + lambda eta``
    in the local tangent frame, where ``lambda = lambda' = 0``.
    """
    d1 = np.array([R0, 0.0])
    d2 = np.array([dR0, R0 + h])
    cross = d1[0] * d2[1] - d1[1] * d2[0]
    if not cross > 0.0:
        raise InvalidOval(f"bump h={h} flips the curvature sign (R0={R0})")
    return _radius_from_derivatives(d1, d2)


def _gauss_panels(n_panels: int, order: int = 16):
    x, w = legendre.leggauss(order)
    edges = np.linspace(0.0, TWO_PI, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def closure_defect(spec: Oval, n_panels: int = 64) -> np.ndarray:
    """``int_0^2pi R(phi) (cos phi, sin phi) dphi`` by composite Gauss-Legendre."""
    if isinstance(spec, PerturbedOval):
        # phi is no longer the tangent angle there; a periodic normal
        # displacement cannot open the curve, so the base decides closure
        return closure_defect(spec.base, n_panels)
    nodes, weights = _gauss_panels(n_panels)
    if isinstance(spec, FourierOval):
        r = spec.radius_series(nodes)
    else:
        r = spec.radius(nodes)
    return np.array([np.sum(weights * r * np.cos(nodes)), np.sum(weights * r * np.sin(nodes))])


def curvature_minimum(spec: Oval, n_grid: int = 4096) -> tuple[float, float]:
    """Minimum radius of curvature on a grid, refined near the grid minimum."""
    phi = np.linspace(0.0, TWO_PI, n_grid, endpoint=False)
    if isinstance(spec, FourierOval):
        r = spec.radius_series(phi)
        fun = lambda p: float(spec.radius_series(np.array([p]))[0])  # noqa: E731
    else:
        r = _radius_or_nan(spec, phi)
        fun = lambda p: float(_radius_or_nan(spec, np.array([p]))[0])  # noqa: E731
    if np.any(~np.isfinite(r)) or np.any(r <= 0.0):
        bad = np.flatnonzero(~(r > 0.0))[0]
        return -1.0, float(phi[bad])
    i = int(np.argmin(r))
    step = TWO_PI / n_grid
    res = minimize_scalar(
        fun, bounds=(phi[i] - step, phi[i] + step), method="bounded", options={"xatol": 1e-12}
    )
    if res.fun < r[i]:
        return float(res.fun), float(res.x % TWO_PI)
    return float(r[i]), float(phi[i])


def _radius_or_nan(spec: Oval, phi):
    if isinstance(spec, PerturbedOval):
        # check on the base parameter so that folds are caught before inversion
        geo = spec.geo()
        out = np.empty(len(phi))
        for i, p in enumerate(phi):
            x, y, r, dr = K.base_eval(geo, p)
            l0, l1, l2, _ = K.bumps_eval(geo[5], p)
            cross = (r - l0) * (r - l0 + l2) - l1 * (dr - 2.0 * l1)
            out[i] = ((r - l0) ** 2 + l1**2) ** 1.5 / cross if cross > 0 else -1.0
        return out
    return spec.radius(phi)


def check_oval(spec: Oval, tol: float = 1e-10) -> dict:
    """Validation report: curvature positivity and closure defect."""
    rmin, at = curvature_minimum(spec)
    defect = closure_defect(spec)
    closed = True if isinstance(spec, Ellipse) else bool(np.hypot(*defect) < tol)
    issues = []
    if rmin <= 0.0:
        issues.append(f"non-positive radius of curvature at phi={at:.6f}")
    if not closed:
        issues.append(f"closure defect {np.hypot(*defect):.3e} exceeds {tol:.1e}")
    if isinstance(spec, FourierOval):
        for k, a, b in spec.harmonics:
            if k < 2:
                issues.append(f"harmonic k={k} not allowed")
    return {
        "valid": not issues,
        "kind": spec.kind,
        "min_radius": rmin,
        "min_radius_at": at,
        "closure_defect": [float(defect[0]), float(defect[1])],
        "issues": issues,
        "normalized": spec.to_dict(),
    }


def diameter(spec: Oval, n: int = 2048) -> float:
    pos = spec.position(np.linspace(0.0, TWO_PI, n, endpoint=False))
    d = pos[:, None, :] - pos[None, ::8, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def bumps_support_hits(bumps: Sequence[NormalBump], phis) -> list[int]:
    """Indices of ``phis`` lying inside any bump support."""
    phis = np.asarray(phis, dtype=float)
    hit = np.zeros(phis.shape, dtype=bool)
    for b in bumps:
        hit |= b.contains(phis)
    return [int(i) for i in np.flatnonzero(hit)]
