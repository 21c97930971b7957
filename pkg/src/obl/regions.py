"""Rotation numbers, invariant-curve candidates, instability regions and islands.

The region attached to a hyperbolic orbit is approximated on a phase grid
from a finite piece of its unstable curve: the branches are grown to an
arclength budget and their points are pushed forward, which keeps them on the
curve while filling its closure. Envelopes are the per-bin extremes of the
collected points, and islands are the complement components that return onto
themselves.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _kernels as K
from .billiard import MapError, orbit_array
from .config import DEFAULT, Tolerances
from .curve import Oval
from .manifolds import Budget, grow_branch
from .stability import PeriodicOrbit
from .variational import PolygonConfig, config_to_orbit, refine_config, ClosureError

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

log = logging.getLogger(__name__)

__all__ = [
    "RotationEstimate",
    "RICCandidate",
    "RICSearch",
    "RegionBudget",
    "InstabilityRegion",
    "Island",
    "CoverageError",
    "rotation_number",
    "detect_ric",
    "build_instability_region",
    "analyze_islands",
]


class CoverageError(RuntimeError):
    """The unstable curve does not project onto the whole circle within budget."""


@dataclass(frozen=True)
class RotationEstimate:
    value: float
    iterations: int
    error: float

    def to_dict(self) -> dict:
        return {"value": self.value, "iterations": self.iterations, "error": self.error}


def rotation_number(oval: Oval, phi: float, theta: float, N: int = 1000, tol: Tolerances = DEFAULT) -> RotationEstimate:
    """``(phi_N - phi_0) / (2 pi N)`` with a tail-based error estimate."""
    if N < 100:
        raise ValueError("rotation_number needs N >= 100")
    traj = orbit_array(oval, phi, theta, N, tol)
    disp = traj[:, 0] - traj[0, 0]
    value = disp[-1] / (TWO_PI * N)
    half = N // 2
    tail = abs(value - disp[half] / (TWO_PI * half))
    return RotationEstimate(float(value % 1.0 if value >= 1.0 else value), N, float(max(tail, 1.0 / N)))


@dataclass(frozen=True)
class RICCandidate:
    phi_bins: np.ndarray  # bin centers
    theta: np.ndarray  # per-bin mean
    spread: np.ndarray  # per-bin max - min
    lipschitz_estimate: float
    rotation: RotationEstimate
    crosses_midline: bool

    def distance_to(self, points: np.ndarray) -> np.ndarray:
        """Vertical distance from phase points to the binned graph."""
        nb = len(self.phi_bins)
        idx = np.floor(np.mod(points[:, 0], TWO_PI) / (TWO_PI / nb)).astype(int) % nb
        return np.abs(points[:, 1] - self.theta[idx])


@dataclass(frozen=True)
class RICSearch:
    candidate: RICCandidate | None
    reason: str
    min_count: int
    max_spread: float

    def __bool__(self) -> bool:
        return self.candidate is not None


def detect_ric(
    oval: Oval,
    phi: float,
    theta: float,
    N: int = 20000,
    bins: int = 256,
    tol: Tolerances = DEFAULT,
    max_lipschitz: float = 1e3,
) -> RICSearch:
    """Test whether the orbit of ``(phi, theta)`` looks like a rotational invariant graph."""
    traj = orbit_array(oval, phi, theta, N, tol)
    ph = np.mod(traj[:, 0], TWO_PI)
    th = traj[:, 1]
    idx = np.minimum((ph / (TWO_PI / bins)).astype(int), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    if counts.min() < 5:
        return RICSearch(None, "insufficient coverage: some bins have fewer than 5 points", int(counts.min()), math.nan)
    lo = np.full(bins, np.inf)
    hi = np.full(bins, -np.inf)
    np.minimum.at(lo, idx, th)
    np.maximum.at(hi, idx, th)
    mean = np.bincount(idx, weights=th, minlength=bins) / counts
    spread = hi - lo
    if spread.max() >= tol.ric_gap:
        return RICSearch(None, "not single valued: bin spread exceeds the gap threshold", int(counts.min()), float(spread.max()))
    width = TWO_PI / bins
    lip = float(np.max(np.abs(np.roll(mean, -1) - mean)) / width)
    if not np.isfinite(lip) or lip > max_lipschitz:
        return RICSearch(None, "Lipschitz estimate too large", int(counts.min()), float(spread.max()))
    straddle = (lo <= HALF_PI) & (hi >= HALF_PI)
    nxt = np.roll(mean, -1)
    sign_change = (mean - HALF_PI) * (nxt - HALF_PI) < 0
    disp = traj[-1, 0] - traj[0, 0]
    rot = RotationEstimate(
        float(disp / (TWO_PI * N)),
        N,
        float(max(abs(disp / (TWO_PI * N) - (traj[N // 2, 0] - traj[0, 0]) / (TWO_PI * (N // 2))), 1.0 / N)),
    )
    cand = RICCandidate(
        phi_bins=(np.arange(bins) + 0.5) * width,
        theta=mean,
        spread=spread,
        lipschitz_estimate=lip,
        rotation=rot,
        crosses_midline=bool(np.any(straddle) or np.any(sign_change)),
    )
    return RICSearch(cand, "ok", int(counts.min()), float(spread.max()))


# ---------------------------------------------------------------- regions


@dataclass(frozen=True)
class RegionBudget:
    arclength: float = 20.0
    iterations: int = 300
    max_points: int = 400_000


@dataclass
class Island:
    cells: np.ndarray = field(repr=False)  # (k, 2) grid indices (phi bin, theta cell)
    period: int
    m: int
    consistent: bool
    rotation_estimates: np.ndarray = field(repr=False)
    center_orbit: PeriodicOrbit | None = field(default=None, repr=False)
    center_period_ok: bool | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def rotation_type(self) -> tuple[int, int]:
        return (self.m, self.period)

    @property
    def area(self) -> int:
        return len(self.cells)

    def to_dict(self) -> dict:
        return {
            "period": self.period,
            "rotation_type": [self.m, self.period],
            "cells": int(len(self.cells)),
            "consistent": self.consistent,
            "center": None
            if self.center_orbit is None
            else {"psi": self.center_orbit.phi.tolist(), "theta": self.center_orbit.theta.tolist(), "trace": self.center_orbit.trace},
            "diagnostics": self.diagnostics,
        }


@dataclass
class InstabilityRegion:
    orbit: PeriodicOrbit
    n_phi: int
    n_theta: int
    lower: np.ndarray  # per-bin inf of theta (0 where the lower boundary is B_0)
    upper: np.ndarray  # per-bin sup of theta (pi where the upper boundary is B_pi)
    lower_is_boundary: bool
    upper_is_boundary: bool
    occupied: np.ndarray = field(repr=False)  # (n_phi, n_theta) cells hit by the unstable curve
    labels: np.ndarray = field(repr=False)  # complement components inside the region
    component_sizes: np.ndarray = field(repr=False)
    budget: RegionBudget = field(default_factory=RegionBudget)
    n_points: int = 0
    islands: list = field(default_factory=list)
    speckles: int = 0
    points: np.ndarray | None = field(default=None, repr=False)

    @property
    def phi_width(self) -> float:
        return TWO_PI / self.n_phi

    @property
    def theta_width(self) -> float:
        return math.pi / self.n_theta

    @property
    def phi_centers(self) -> np.ndarray:
        return (np.arange(self.n_phi) + 0.5) * self.phi_width

    def cell_of(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        i = np.floor(np.mod(points[:, 0], TWO_PI) / self.phi_width).astype(int) % self.n_phi
        j = np.clip(np.floor(points[:, 1] / self.theta_width).astype(int), 0, self.n_theta - 1)
        return i, j

    def region_mask(self) -> np.ndarray:
        """Cells whose centers lie between the envelopes (inclusive of the envelope cells)."""
        lo = np.floor(self.lower / self.theta_width).astype(int)
        hi = np.floor(self.upper / self.theta_width).astype(int)
        j = np.arange(self.n_theta)[None, :]
        return (j >= lo[:, None]) & (j <= np.minimum(hi, self.n_theta - 1)[:, None])

    def contains(self, region: "InstabilityRegion", slack_cells: int = 1) -> bool:
        """Whether this region's cell set contains ``region``'s (within ``slack_cells``)."""
        a = self.region_mask()
        b = region.region_mask()
        if slack_cells:
            a = ndimage.binary_dilation(a, iterations=slack_cells)
        return bool(np.all(a | ~b))

    def to_dict(self) -> dict:
        return {
            "orbit": self.orbit.to_dict(),
            "n_phi": self.n_phi,
            "n_theta": self.n_theta,
            "lower": None if self.lower_is_boundary else self.lower.tolist(),
            "upper": None if self.upper_is_boundary else self.upper.tolist(),
            "lower_boundary": "B_0" if self.lower_is_boundary else "curve",
            "upper_boundary": "B_pi" if self.upper_is_boundary else "curve",
            "budget": {"arclength": self.budget.arclength, "iterations": self.budget.iterations},
            "n_points": self.n_points,
            "speckles": self.speckles,
            "islands": [isl.to_dict() for isl in self.islands],
        }


def _unstable_points(
    oval: Oval, orbit: PeriodicOrbit, budget: RegionBudget, cell: float, tol: Tolerances
) -> np.ndarray:
    """Both unstable branches of vertex 0, thinned to about three points per grid cell."""
    pts = []
    per = Budget(max_points=budget.max_points, max_arclength=budget.arclength)
    stride = max(1, int(cell / (3.0 * tol.max_step)))
    for kind in ("unstable+", "unstable-"):
        br = grow_branch(oval, orbit, 0, kind, per, tol)
        pts.append(br.points[::stride])
    return np.vstack(pts)


def _occupancy(points, n_phi, n_theta, occupied):
    i = np.floor(np.mod(points[:, 0], TWO_PI) / (TWO_PI / n_phi)).astype(int) % n_phi
    j = np.clip(np.floor(points[:, 1] / (math.pi / n_theta)).astype(int), 0, n_theta - 1)
    occupied[i, j] = True
    return i, j


def build_instability_region(
    oval: Oval,
    orbit: PeriodicOrbit,
    budget: RegionBudget = RegionBudget(),
    bins: tuple[int, int] | None = None,
    tol: Tolerances = DEFAULT,
    keep_points: bool = False,
) -> InstabilityRegion:
    """Smallest-cylinder approximation from the closure of the unstable curve.

    Raises :class:`CoverageError` when some phi bin receives no point.
    """
    if orbit.cls not in ("hyperbolic", "inverse_hyperbolic"):
        raise ValueError(f"orbit is {orbit.cls}, not hyperbolic")
    n_phi, n_theta = bins if bins is not None else (tol.grid_phi, tol.grid_theta)
    seeds = _unstable_points(oval, orbit, budget, min(TWO_PI / n_phi, math.pi / n_theta), tol)
    occupied = np.zeros((n_phi, n_theta), dtype=bool)
    lo = np.full(n_phi, np.inf)
    hi = np.full(n_phi, -np.inf)
    p = np.ascontiguousarray(seeds[:, 0])
    t = np.ascontiguousarray(seeds[:, 1])
    geo = oval.geo()
    kept = [] if keep_points else None
    total = 0
    for step in range(budget.iterations + 1):
        if step:
            p, t, worst = K.iterate_many(geo, p, t, 1, False, tol.root_tol, tol.root_maxiter)
            if worst != K.OK:
                raise MapError("map failed while pushing the unstable curve")
        pts = np.column_stack([p, t])
        i, _ = _occupancy(pts, n_phi, n_theta, occupied)
        np.minimum.at(lo, i, t)
        np.maximum.at(hi, i, t)
        total += len(p)
        if kept is not None:
            kept.append(np.column_stack([np.mod(p, TWO_PI), t]))
    if not np.all(np.isfinite(lo)):
        missing = int(np.sum(~np.isfinite(lo)))
        raise CoverageError(
            f"unstable curve misses {missing} of {n_phi} phi bins; raise the arclength or iteration budget"
        )
    cell = math.pi / n_theta
    lower_boundary = bool(lo.min() < cell)
    upper_boundary = bool(hi.max() > math.pi - cell)
    lower = np.zeros(n_phi) if lower_boundary else lo
    upper = np.full(n_phi, math.pi) if upper_boundary else hi
    region = InstabilityRegion(
        orbit=orbit,
        n_phi=n_phi,
        n_theta=n_theta,
        lower=lower,
        upper=upper,
        lower_is_boundary=lower_boundary,
        upper_is_boundary=upper_boundary,
        occupied=occupied,
        labels=np.zeros((n_phi, n_theta), dtype=int),
        component_sizes=np.zeros(0, dtype=int),
        budget=budget,
        n_points=total,
        points=np.vstack(kept) if kept is not None else None,
    )
    _label_complement(region, tol)
    return region


def _label_complement(region: InstabilityRegion, tol: Tolerances) -> None:
    free = region.region_mask() & ~region.occupied
    labels, count = ndimage.label(free)
    # glue components across the phi = 0 / 2 pi seam
    if count:
        parent = np.arange(count + 1)

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        first, last = labels[0], labels[-1]
        for a, b in zip(first[(first > 0) & (last > 0)], last[(first > 0) & (last > 0)]):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        roots = np.array([find(a) for a in range(count + 1)])
        _, compact = np.unique(roots, return_inverse=True)
        labels = compact[labels]
        count = int(labels.max())
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    sizes[0] = 0
    region.labels = labels
    region.component_sizes = sizes
    region.speckles = int(np.sum((sizes > 0) & (sizes < tol.speckle_cells)))


def _cell_centers(region: InstabilityRegion, cells: np.ndarray) -> np.ndarray:
    return np.column_stack(
        [(cells[:, 0] + 0.5) * region.phi_width, (cells[:, 1] + 0.5) * region.theta_width]
    )


def analyze_islands(
    oval: Oval,
    region: InstabilityRegion,
    samples: int = 20,
    max_period: int = 30,
    rotation_iterations: int = 2000,
    seed: int = 0,
    tol: Tolerances = DEFAULT,
    find_centers: bool = True,
) -> list[Island]:
    """Classify complement components: period, rotation type and an optional center orbit.

    Components that never return onto themselves within ``max_period`` steps
    are gaps in the finite manifold sample rather than islands and are skipped.
    """
    rng = np.random.default_rng(seed)
    geo = oval.geo()
    islands: list[Island] = []
    for label in np.flatnonzero(region.component_sizes >= tol.speckle_cells):
        cells = np.argwhere(region.labels == label)
        pick = cells[rng.choice(len(cells), size=min(samples, len(cells)), replace=False)]
        start = _cell_centers(region, pick)
        p = np.ascontiguousarray(start[:, 0])
        t = np.ascontiguousarray(start[:, 1])
        period = None
        for k in range(1, max_period + 1):
            p, t, worst = K.iterate_many(geo, p, t, 1, False, tol.root_tol, tol.root_maxiter)
            if worst != K.OK:
                break
            i, j = region.cell_of(np.column_stack([p, t]))
            if np.mean(region.labels[i, j] == label) >= 0.5:
                period = k
                break
        if period is None or period < 2:
            continue
        turns = (p - start[:, 0]) / TWO_PI
        ms = np.rint(turns).astype(int)
        m = int(np.bincount(ms - ms.min()).argmax() + ms.min())
        consistent = bool(np.all(ms == m))
        # rotation estimates from ten samples
        est = []
        for q in start[:10]:
            try:
                traj = orbit_array(oval, q[0], q[1], rotation_iterations, tol)
            except MapError:
                continue
            est.append((traj[-1, 0] - traj[0, 0]) / (TWO_PI * rotation_iterations))
        est = np.array(est)
        island = Island(
            cells=cells,
            period=period,
            m=m,
            consistent=consistent,
            rotation_estimates=est,
            diagnostics={
                "label": int(label),
                "return_fraction_ok": True,
                "rotation_max_deviation": float(np.max(np.abs(est - m / period))) if len(est) else None,
            },
        )
        if find_centers:
            _locate_center(oval, region, island, start, label, tol)
        islands.append(island)
    region.islands = islands
    return islands


def _locate_center(oval, region, island: Island, start, label, tol, tries: int = 5) -> None:
    """Variational search for a period-n orbit seeded from the island samples.

    Samples are tried in order of how nearly they return after ``n`` steps.
    """
    n, m = island.period, island.m
    if not 1 <= m < n:
        island.diagnostics["center"] = "rotation type outside the variational range"
        return
    seeds = []
    for q in start:
        try:
            traj = orbit_array(oval, q[0], q[1], n, tol)
        except MapError:
            continue
        miss = math.hypot(traj[-1, 0] - traj[0, 0] - TWO_PI * m, traj[-1, 1] - traj[0, 1])
        seeds.append((miss, traj[:-1, 0]))
    seeds.sort(key=lambda item: item[0])
    reason = "could not seed a configuration"
    for _, psi in seeds[:tries]:
        try:
            cfg = PolygonConfig(m, n, psi)
        except ValueError:
            continue
        sol = refine_config(oval, cfg, tol)
        if sol is None:
            reason = "variational search did not converge"
            continue
        try:
            orbit = config_to_orbit(oval, sol, tol, closure_tol=1e-8)
        except ClosureError:
            reason = "closure failure"
            continue
        i, j = region.cell_of(orbit.phase_points)
        if not (region.labels[i, j] == label).any():
            reason = "converged orbit lies outside the island"
            continue
        island.center_orbit = orbit
        island.center_period_ok = orbit.n % island.period == 0
        island.diagnostics["center"] = "found"
        return
    island.diagnostics["center"] = reason
