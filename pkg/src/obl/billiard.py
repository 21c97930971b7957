"""The billiard map on the cylinder ``[0, 2pi) x (0, pi)``.

Phase points are ``(phi, theta)``: ``phi`` the tangent angle of the impact
point, ``theta`` the angle from the oriented tangent to the outgoing ray. The
map functions are vectorized: pass scalars or equally shaped arrays.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels as K
from .config import DEFAULT, Tolerances
from .curve import Oval

TWO_PI = 2.0 * math.pi

__all__ = [
    "MapError",
    "PhasePoint",
    "LiftedPhasePoint",
    "TangentMap",
    "forward_map",
    "inverse_map",
    "forward_lift",
    "inverse_lift",
    "reverse",
    "step_matrix",
    "tangent_map",
    "iterate",
    "orbit_array",
    "advance",
    "measure_weight",
    "MeasureCheck",
    "measure_pushforward",
    "write_orbit_csv",
]


class MapError(RuntimeError):
    """The next-impact solver failed; carries the offending phase point."""


@dataclass(frozen=True)
class PhasePoint:
    phi: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)
        if not (0.0 < self.theta < math.pi):
            raise ValueError(f"theta={self.theta} outside (0, pi)")


@dataclass(frozen=True)
class LiftedPhasePoint:
    phi: float
    theta: float

    def project(self) -> PhasePoint:
        return PhasePoint(self.phi, self.theta)


@dataclass(frozen=True)
class TangentMap:
    """Jacobian of one billiard step in ``(phi, theta)`` coordinates."""

    matrix: np.ndarray
    x0: float
    x1: float
    chord: float

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))


def _admissible(theta, tol: Tolerances) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    bad = (theta <= tol.theta_reject) | (theta >= math.pi - tol.theta_reject)
    if np.any(bad) or np.any(~np.isfinite(theta)):
        raise ValueError("theta within the boundary circles {0, pi} is not admissible")
    return np.clip(theta, tol.theta_clamp, math.pi - tol.theta_clamp)


def _run(oval: Oval, phi, theta, inverse: bool, tol: Tolerances):
    phi = np.asarray(phi, dtype=float)
    theta = _admissible(theta, tol)
    phi, theta = np.broadcast_arrays(phi, theta)
    shape = phi.shape
    out, status = K.forward_many(
        oval.geo(),
        np.ascontiguousarray(phi.ravel()),
        np.ascontiguousarray(theta.ravel()),
        inverse,
        tol.root_tol,
        tol.root_maxiter,
    )
    if np.any(status != K.OK):
        i = int(np.flatnonzero(status != K.OK)[0])
        raise MapError(
            f"next-impact solver failed (status {int(status[i])}) at "
            f"phi={phi.ravel()[i]!r}, theta={theta.ravel()[i]!r}"
        )
    return out, shape


def _shape(a, shape):
    return float(a[0]) if shape == () else a.reshape(shape)


def forward_lift(oval: Oval, phi, theta, tol: Tolerances = DEFAULT):
    """Forward step keeping the unreduced angle: ``phi1`` in ``(phi, phi + 2pi)``."""
    out, shape = _run(oval, phi, theta, False, tol)
    return _shape(out[:, 0], shape), _shape(out[:, 1], shape)


def inverse_lift(oval: Oval, phi, theta, tol: Tolerances = DEFAULT):
    """Backward step with ``phi_prev`` in ``(phi - 2pi, phi)``."""
    out, shape = _run(oval, phi, theta, True, tol)
    return _shape(out[:, 0], shape), _shape(out[:, 1], shape)


def forward_map(oval: Oval, phi, theta, tol: Tolerances = DEFAULT):
    """Next impact ``(phi1 mod 2pi, theta1)``."""
    p, t = forward_lift(oval, phi, theta, tol)
    return _mod(p), t


def inverse_map(oval: Oval, phi, theta, tol: Tolerances = DEFAULT):
    """Previous impact; equals ``H o T o H`` with ``H(phi, theta) = (phi, pi - theta)``."""
    p, t = inverse_lift(oval, phi, theta, tol)
    return _mod(p), t


def _mod(p):
    return p % TWO_PI if isinstance(p, float) else np.mod(p, TWO_PI)


def reverse(phi, theta):
    """The reversing symmetry ``H``."""
    return phi, math.pi - theta


def step_matrix(x0, x1, chord) -> np.ndarray:
    """``(1/x1) [[l - x0, l], [l - x0 - x1, l - x1]]`` for arrays of steps."""
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    l = np.asarray(chord, dtype=float)
    m = np.stack(
        [
            np.stack([l - x0, l], axis=-1),
            np.stack([l - x0 - x1, l - x1], axis=-1),
        ],
        axis=-2,
    )
    return m / x1[..., None, None]


def tangent_map(oval: Oval, phi: float, theta: float, tol: Tolerances = DEFAULT) -> TangentMap:
    """Jacobian of the forward map at one phase point."""
    out, _ = _run(oval, phi, theta, False, tol)
    _, th1, r0, r1, l = out[0]
    th0 = float(np.clip(theta, tol.theta_clamp, math.pi - tol.theta_clamp))
    x0 = r0 * math.sin(th0)
    x1 = r1 * math.sin(th1)
    return TangentMap(step_matrix(x0, x1, l), float(x0), float(x1), float(l))


def tangent_maps(oval: Oval, phi, theta, tol: Tolerances = DEFAULT):
    """Vectorized Jacobians: returns matrices (n, 2, 2), x0, x1, chords."""
    out, _ = _run(oval, phi, theta, False, tol)
    th0 = np.clip(np.asarray(theta, dtype=float).ravel(), tol.theta_clamp, math.pi - tol.theta_clamp)
    x0 = out[:, 2] * np.sin(th0)
    x1 = out[:, 3] * np.sin(out[:, 1])
    return step_matrix(x0, x1, out[:, 4]), x0, x1, out[:, 4]


def orbit_array(oval: Oval, phi: float, theta: float, n: int, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Lifted orbit as an array ``(|n| + 1, 2)``; negative ``n`` runs backwards."""
    theta = float(_admissible(theta, tol))
    traj, worst = K.trajectory(
        oval.geo(), float(phi), theta, abs(int(n)), n < 0, tol.root_tol, tol.root_maxiter
    )
    if worst != K.OK:
        bad = _first_failure(oval, traj, n, tol)
        raise MapError(f"map failed at step {bad} of orbit from phi={phi!r}, theta={theta!r}")
    return traj


def _first_failure(oval, traj, n, tol):
    for k in range(len(traj) - 1):
        _, st = K.forward_many(
            oval.geo(),
            traj[k : k + 1, 0].copy(),
            traj[k : k + 1, 1].copy(),
            n < 0,
            tol.root_tol,
            tol.root_maxiter,
        )
        if st[0] != K.OK:
            return k
    return len(traj) - 1


def iterate(oval: Oval, p: LiftedPhasePoint, n: int, tol: Tolerances = DEFAULT) -> list[LiftedPhasePoint]:
    """``|n|`` applications of the map (inverse map for ``n < 0``) with lift bookkeeping."""
    traj = orbit_array(oval, p.phi, p.theta, n, tol)
    return [LiftedPhasePoint(float(a), float(b)) for a, b in traj]


def advance(oval: Oval, phi, theta, steps: int, tol: Tolerances = DEFAULT):
    """Apply the map ``steps`` times to every point (inverse if ``steps < 0``)."""
    phi = np.ascontiguousarray(np.asarray(phi, dtype=float).ravel())
    theta = np.ascontiguousarray(_admissible(theta, tol).ravel())
    pf, tf, worst = K.iterate_many(
        oval.geo(), phi, theta, abs(int(steps)), steps < 0, tol.root_tol, tol.root_maxiter
    )
    if worst != K.OK:
        raise MapError(f"map failed while advancing {len(phi)} points by {steps} steps")
    return pf, tf


def measure_weight(oval: Oval, phi, theta):
    """Invariant density ``R(phi) sin(theta)`` in ``(phi, theta)`` coordinates."""
    phi = np.asarray(phi, dtype=float)
    r = oval.radius(phi).reshape(phi.shape)
    w = r * np.sin(theta)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class MeasureCheck:
    """Invariant-measure mass of a box and of its forward image."""

    box: tuple[float, float, float, float]
    mu_box: float
    mu_image: float
    samples: int

    @property
    def relative_error(self) -> float:
        return abs(self.mu_image - self.mu_box) / self.mu_box


def _box_mass(oval: Oval, box) -> float:
    from scipy.integrate import quad

    pa, pb, ta, tb = box
    arc, _ = quad(lambda p: float(oval.radius(np.array([p]))[0]), pa, pb, epsabs=1e-13, epsrel=1e-13, limit=200)
    return arc * (math.cos(ta) - math.cos(tb))


def measure_pushforward(
    oval: Oval, box, samples: int = 10**7, seed: int = 0, chunk: int = 2**20, tol: Tolerances = DEFAULT
) -> MeasureCheck:
    """Compare ``mu(B)`` with ``mu(T(B))`` for ``B = [pa, pb] x [ta, tb]``.

    ``mu(B)`` is integrated by quadrature. ``mu(T(B))`` is a scrambled-Sobol
    estimate over a bounding box of the image: a sample ``x`` counts, with
    weight ``R sin(theta)``, when ``T^-1(x)`` lands in ``B``.
    """
    from scipy.stats import qmc

    pa, pb, ta, tb = map(float, box)
    if not (pb > pa and pb - pa < TWO_PI and 0.0 < ta < tb < math.pi):
        raise ValueError(f"not a phase-space box: {box!r}")
    # bounding box of the image from its boundary curve
    k = 2000
    edge_p = np.concatenate([np.linspace(pa, pb, k), np.full(k, pb), np.linspace(pb, pa, k), np.full(k, pa)])
    edge_t = np.concatenate([np.full(k, ta), np.linspace(ta, tb, k), np.full(k, tb), np.linspace(tb, ta, k)])
    ip, it = forward_lift(oval, edge_p, edge_t, tol)
    lo_p, hi_p = ip.min(), ip.max()
    lo_t, hi_t = it.min(), it.max()
    pad_p = 0.02 * (hi_p - lo_p)
    pad_t = 0.02 * (hi_t - lo_t)
    lo_p, hi_p = lo_p - pad_p, hi_p + pad_p
    lo_t, hi_t = max(lo_t - pad_t, 1e-6), min(hi_t + pad_t, math.pi - 1e-6)
    area = (hi_p - lo_p) * (hi_t - lo_t)

    sobol = qmc.Sobol(2, scramble=True, seed=seed)
    total = 0.0
    drawn = 0
    while drawn < samples:
        u = sobol.random(chunk)
        p = lo_p + (hi_p - lo_p) * u[:, 0]
        t = lo_t + (hi_t - lo_t) * u[:, 1]
        q, s = inverse_lift(oval, p, t, tol)
        q = pa + np.mod(q - pa, TWO_PI)
        inside = (q <= pb) & (s >= ta) & (s <= tb)
        total += float(np.sum(measure_weight(oval, p[inside], t[inside])))
        drawn += chunk
    return MeasureCheck((pa, pb, ta, tb), _box_mass(oval, (pa, pb, ta, tb)), float(area * total / drawn), drawn)


def write_orbit_csv(path: str | Path, traj: np.ndarray) -> None:
    """Orbit CSV: ``step, phi_lifted, phi_mod, theta`` with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "phi_lifted", "phi_mod", "theta"])
        for k, (p, t) in enumerate(traj):
            w.writerow([k, f"{p:.17g}", f"{p % TWO_PI:.17g}", f"{t:.17g}"])


def read_orbit_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([[float(r["phi_lifted"]), float(r["theta"])] for r in rows])
