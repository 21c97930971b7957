"""Stable and unstable curves of hyperbolic periodic orbits.

A branch is a curve ``u -> X(u)`` with ``u = k + sigma``: the seed point
``p + eps * Lambda**sigma * v`` on the fundamental segment, pushed ``k``
times by ``P = T^q`` (``P = T^-q`` for stable kinds). Keeping the exact
parameterization lets intersections and tangents be recomputed to map
precision instead of being read off the polyline.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .billiard import MapError
from .config import DEFAULT, Tolerances
from .curve import Oval
from .stability import PeriodicOrbit, chain_monodromy, eigen_directions

TWO_PI = 2.0 * math.pi
PHASE_DIAMETER = math.hypot(TWO_PI, math.pi)
MIN_STEP_FRACTION = 1e-3
THIN_FRACTION = 0.1
KINDS = ("unstable+", "unstable-", "stable+", "stable-")

__all__ = [
    "Budget",
    "ManifoldBranch",
    "HeteroclinicPoint",
    "PencilSlopes",
    "KINDS",
    "grow_branch",
    "find_intersections",
    "focusing_distances",
    "traced_focus",
    "tangency_splitting_prediction",
    "eigen_directions",
    "point_monodromy",
    "write_branch_csv",
]


@dataclass(frozen=True)
class Budget:
    max_points: int = 200_000
    max_arclength: float = 10.0
    max_levels: int = 200
    max_unresolved: int = 1000  # growth stops once this many intervals are below resolution


def point_monodromy(orbit: PeriodicOrbit, index: int) -> np.ndarray:
    """Monodromy based at orbit vertex ``index``."""
    k = index % orbit.n
    return chain_monodromy(np.roll(orbit.x, -k), np.roll(orbit.chords, -k))


@dataclass
class ManifoldBranch:
    oval: Oval
    orbit: PeriodicOrbit
    index: int
    kind: str
    eigenvalue: float  # multiplier of T^n along the branch direction
    direction: np.ndarray
    power: int  # map steps per level (n, or 2n for a negative eigenvalue)
    growth: float  # Lambda > 1: stretching per level in the growth direction
    epsilon: float
    u: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)  # (N, 2) lifted phi, theta
    truncated: bool = False
    unresolved: int = 0
    tol: Tolerances = field(default=DEFAULT, repr=False)

    @property
    def complete(self) -> bool:
        """Grown to the end of its budget with every interval resolved."""
        return not self.truncated and self.unresolved == 0

    @property
    def base_point(self) -> np.ndarray:
        return np.array([self.orbit.phi[self.index], self.orbit.theta[self.index]])

    @property
    def stable(self) -> bool:
        return self.kind.startswith("stable")

    @property
    def arc(self) -> np.ndarray:
        d = np.diff(self.points, axis=0)
        return np.concatenate([[0.0], np.cumsum(np.hypot(d[:, 0], d[:, 1]))])

    @property
    def length(self) -> float:
        return float(self.arc[-1])

    @property
    def lift_per_level(self) -> float:
        return TWO_PI * self.orbit.m * self.power / self.orbit.n

    def seed(self, sigma) -> np.ndarray:
        sigma = np.asarray(sigma, dtype=float)
        r = self.epsilon * self.growth ** sigma
        return self.base_point[None, :] + r[:, None] * self.direction[None, :]

    def point_at(self, u) -> np.ndarray:
        """Exact branch points ``X(u)`` (shape ``(len(u), 2)``)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        k = np.floor(u).astype(int)
        out = np.empty((len(u), 2))
        for level in np.unique(k):
            sel = k == level
            out[sel] = _evaluate(self, u[sel] - level, int(level))
        return out

    def tangent_at(self, u: float) -> np.ndarray:
        """Unit tangent ``dX/du`` by central differences scaled to the local speed."""
        j = int(np.clip(np.searchsorted(self.u, u), 1, len(self.u) - 1))
        du_seg = self.u[j] - self.u[j - 1]
        ds = np.hypot(*(self.points[j] - self.points[j - 1]))
        speed = ds / du_seg if du_seg > 0 and ds > 0 else 1.0
        h = min(1e-5 / speed, 0.25 * du_seg if du_seg > 0 else 1e-7)
        h = max(h, 1e-13 * max(1.0, abs(u)))
        p = self.point_at([u - h, u + h])
        t = p[1] - p[0]
        return t / np.linalg.norm(t)

    def mapped(self, steps: int) -> np.ndarray:
        """Branch points pushed by ``T^steps`` (lifted)."""
        pf, tf, worst = K.iterate_many(
            self.oval.geo(),
            np.ascontiguousarray(self.points[:, 0]),
            np.ascontiguousarray(self.points[:, 1]),
            abs(steps),
            steps < 0,
            self.tol.root_tol,
            self.tol.root_maxiter,
        )
        if worst != K.OK:
            raise MapError("map failed while pushing a manifold branch")
        return np.column_stack([pf, tf])


def _evaluate(br: ManifoldBranch, sigma: np.ndarray, level: int) -> np.ndarray:
    s = br.seed(sigma)
    if level == 0:
        return s
    steps = level * br.power
    pf, tf, worst = K.iterate_many(
        br.oval.geo(),
        np.ascontiguousarray(s[:, 0]),
        np.ascontiguousarray(s[:, 1]),
        steps,
        br.stable,
        br.tol.root_tol,
        br.tol.root_maxiter,
    )
    if worst != K.OK:
        raise MapError(f"map failed while evaluating manifold level {level}")
    shift = level * br.lift_per_level
    pf = pf + shift if br.stable else pf - shift
    return np.column_stack([pf, tf])


def _turn(a: np.ndarray, m: np.ndarray, b: np.ndarray) -> np.ndarray:
    v1 = m - a
    v2 = b - m
    cross = v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]
    dot = (v1 * v2).sum(1)
    return np.abs(np.arctan2(cross, dot))


def _refine(br: ManifoldBranch, level: int, sa, sb, pa, pb, cap: int | None = None, max_unresolved: int | None = None):
    """Split intervals until the chord is short and the midpoint turn is small.

    Splitting stops early once ``cap`` intervals exist or more than
    ``max_unresolved`` intervals hit the resolution floor; whatever is left
    is accepted as it stands and counted as unresolved.
    """
    tol = br.tol
    done_s, done_p = [sa[:0]], [pa[:0]]
    unresolved = 0
    n_done = 0
    while len(sa):
        over = max_unresolved is not None and unresolved > max_unresolved
        if over or (cap is not None and n_done + len(sa) >= cap):
            unresolved += len(sa)
            done_s.append(sa)
            done_p.append(pa)
            break
        sm = 0.5 * (sa + sb)
        pm = _evaluate(br, sm, level)
        chord = np.hypot(*(pb - pa).T)
        long_ = chord > tol.max_step
        bent = _turn(pa, pm, pb) > tol.max_turn
        # folds sharper than the resolution floor are left as they are
        tiny = ((sb - sa) <= 1e-14 * np.maximum(1.0, sb)) | (~long_ & (chord < MIN_STEP_FRACTION * tol.max_step))
        unresolved += int(np.sum(tiny & (long_ | bent)))
        split = (long_ | bent) & ~tiny
        n_done += int(np.sum(~split))
        done_s.append(sa[~split])
        done_p.append(pa[~split])
        sa, sb, pa, pb, sm, pm = sa[split], sb[split], pa[split], pb[split], sm[split], pm[split]
        sa, sb = np.concatenate([sa, sm]), np.concatenate([sm, sb])
        pa, pb = np.concatenate([pa, pm]), np.concatenate([pm, pb])
    s = np.concatenate(done_s)
    p = np.concatenate(done_p)
    order = np.argsort(s)
    return s[order], p[order], unresolved


def _smooth_junctions(br, level, s, p, s_end, p_end, cap: int | None = None):
    """Insert points where two accepted intervals meet at a sharp turn."""
    unresolved = 0
    for _ in range(30):
        if cap is not None and len(s) >= cap:
            break
        ss = np.append(s, s_end)
        pp = np.vstack([p, p_end])
        if len(ss) < 3:
            break
        turn = _turn(pp[:-2], pp[1:-1], pp[2:])
        bad = np.flatnonzero(turn > br.tol.max_turn)
        if len(bad) == 0:
            break
        # split both intervals adjacent to each bad vertex
        idx = np.unique(np.concatenate([bad, bad + 1]))
        gaps = ss[idx + 1] - ss[idx]
        chord = np.hypot(*(pp[idx + 1] - pp[idx]).T)
        ok = (gaps > 1e-14 * np.maximum(1.0, ss[idx + 1])) & (chord >= MIN_STEP_FRACTION * br.tol.max_step)
        unresolved += int(np.sum(~ok))
        idx = idx[ok]
        if len(idx) == 0:
            break
        sm = 0.5 * (ss[idx] + ss[idx + 1])
        pm = _evaluate(br, sm, level)
        s = np.concatenate([s, sm])
        p = np.vstack([p, pm])
        order = np.argsort(s)
        s, p = s[order], p[order]
    return s, p, unresolved


def _thin(s: np.ndarray, p: np.ndarray, spacing: float):
    """Drop seed points packed closer than ``spacing`` along the polyline (ends kept).

    Points crowd wherever the curve runs into another saddle; refinement
    puts them back wherever the next level stretches the curve again.
    """
    if len(s) < 3:
        return s, p
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(p, axis=0).T))])
    b = np.floor(cum / spacing)
    keep = np.concatenate([[True], b[1:] != b[:-1]])
    keep[-1] = True
    return s[keep], p[keep]


def grow_branch(
    oval: Oval,
    orbit: PeriodicOrbit,
    index: int,
    kind: str,
    budget: Budget = Budget(),
    tol: Tolerances = DEFAULT,
    epsilon: float | None = None,
    chunk: int = 256,
) -> ManifoldBranch:
    """Grow one branch of the unstable or stable curve of orbit vertex ``index``.

    Levels are processed in order and, inside a level, in fixed chunks of
    intervals, so a larger budget always yields a superset (the smaller run is
    a prefix of the larger one).
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    M = point_monodromy(orbit, index)
    vu, vs, lu, ls = eigen_directions(M)
    stable = kind.startswith("stable")
    lam = ls if stable else lu
    v = vs if stable else vu
    sign = 1.0 if kind.endswith("+") else -1.0
    power = orbit.n if lam > 0 else 2 * orbit.n
    growth = abs(lam) ** (-power / orbit.n if stable else power / orbit.n)
    eps = tol.seed_offset * PHASE_DIAMETER if epsilon is None else epsilon
    br = ManifoldBranch(
        oval=oval,
        orbit=orbit,
        index=index % orbit.n,
        kind=kind,
        eigenvalue=float(lam),
        direction=sign * v,
        power=power,
        growth=float(growth),
        epsilon=float(eps),
        u=np.empty(0),
        points=np.empty((0, 2)),
        tol=tol,
    )
    us, ps = [], []
    total_len = 0.0
    npts = 0
    last = None
    grid = np.linspace(0.0, 1.0, 17)
    grid_p = _evaluate(br, grid, 0)
    for level in range(budget.max_levels):
        stop = False
        level_s = []
        for c0 in range(0, len(grid) - 1, chunk):
            c1 = min(c0 + chunk, len(grid) - 1)
            cap = min(
                budget.max_points - npts + 1,
                int(10 * (budget.max_arclength - total_len) / tol.max_step) + 2 * chunk,
            )
            s, p, bad = _refine(
                br,
                level,
                grid[c0:c1],
                grid[c0 + 1 : c1 + 1],
                grid_p[c0:c1],
                grid_p[c0 + 1 : c1 + 1],
                cap=cap,
                max_unresolved=budget.max_unresolved - br.unresolved,
            )
            bad2 = 0
            if br.unresolved + bad <= budget.max_unresolved:
                s, p, bad2 = _smooth_junctions(br, level, s, p, grid[c1], grid_p[c1], cap=cap)
            br.unresolved += bad + bad2
            pts = p if last is None else np.vstack([last[None, :], p])
            seg = np.hypot(*np.diff(pts, axis=0).T)
            cum = total_len + np.cumsum(seg)
            if last is None:
                cum = np.concatenate([[total_len], cum])
            keep = (cum <= budget.max_arclength) & (np.arange(len(s)) < budget.max_points - npts)
            if not keep.all():
                k = int(np.argmin(keep))
                s, p, cum = s[:k], p[:k], cum[:k]
                stop = True
            us.append(level + s)
            ps.append(p)
            level_s.append(s)
            npts += len(s)
            if len(s):
                total_len = float(cum[-1])
                last = p[-1]
            if br.unresolved > budget.max_unresolved:
                # the curve is no longer resolvable (e.g. it runs along a saddle connection)
                stop = True
            if stop:
                break
        if stop:
            break
        # the next level starts from the images of this level's points
        grid = np.append(np.concatenate(level_s), 1.0)
        grid_p = _evaluate(br, grid, level + 1)
        grid, grid_p = _thin(grid, grid_p, THIN_FRACTION * tol.max_step)
    br.u = np.concatenate(us) if us else np.empty(0)
    br.points = np.vstack(ps) if ps else np.empty((0, 2))
    # the curves are unbounded, so every finite run ends on its budget
    br.truncated = True
    return br


def write_branch_csv(path, branch: ManifoldBranch) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["arc", "phi_lifted", "theta"])
        for a, (p, t) in zip(branch.arc, branch.points):
            w.writerow([f"{a:.17g}", f"{p:.17g}", f"{t:.17g}"])


# ---------------------------------------------------------------- intersections


@dataclass(frozen=True)
class HeteroclinicPoint:
    location: np.ndarray  # (phi mod 2pi, theta)
    branches: tuple[str, str]
    u: tuple[float, float]
    crossing_angle: float
    transversal: bool
    kind: str  # "homoclinic" | "heteroclinic"
    tangents: tuple[np.ndarray, np.ndarray] = field(repr=False, default=None)
    refined: bool = True

    @property
    def slope(self) -> float:
        """``dtheta/dphi`` of the first branch at the point."""
        t = self.tangents[0]
        return float(t[1] / t[0])

    def to_dict(self) -> dict:
        return {
            "phi": float(self.location[0]),
            "theta": float(self.location[1]),
            "branches": list(self.branches),
            "u": list(self.u),
            "crossing_angle": self.crossing_angle,
            "transversal": self.transversal,
            "kind": self.kind,
            "slope": self.slope if self.tangents is not None else None,
            "refined": self.refined,
        }


def _label(br: ManifoldBranch) -> str:
    return f"({br.orbit.m},{br.orbit.n})#{br.index}:{br.kind}"


def _same_orbit(a: PeriodicOrbit, b: PeriodicOrbit) -> bool:
    if a is b:
        return True
    if (a.m, a.n) != (b.m, b.n):
        return False
    pa = np.sort(np.mod(a.phi, TWO_PI))
    pb = np.sort(np.mod(b.phi, TWO_PI))
    return bool(np.allclose(pa, pb, atol=1e-8))


def _cells(P0: np.ndarray, P1: np.ndarray, cell: float):
    """(cell key pair, segment index) for every grid cell a segment's bounding box touches."""
    lo = np.floor(np.minimum(P0, P1) / cell).astype(np.int64)
    hi = np.floor(np.maximum(P0, P1) / cell).astype(np.int64)
    nx = hi[:, 0] - lo[:, 0] + 1
    ny = hi[:, 1] - lo[:, 1] + 1
    cnt = nx * ny
    seg = np.repeat(np.arange(len(P0)), cnt)
    k = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    cx = lo[seg, 0] + k % nx[seg]
    cy = lo[seg, 1] + k // nx[seg]
    return cx, cy, seg


def _segment_pairs(A: np.ndarray, B: np.ndarray, long_cells: int = 16):
    """Candidate crossing segment pairs by spatial hashing, then exact tests.

    Segments spanning more than ``long_cells`` grid cells are few (budget
    truncation, unresolved folds) and are tested by bounding-box overlap
    against every segment of the other curve instead.
    """
    a0, a1 = A[:-1], A[1:]
    b0, b1 = B[:-1], B[1:]
    empty = np.empty(0, int), np.empty(0, int), np.empty(0), np.empty(0)
    if len(a0) == 0 or len(b0) == 0:
        return empty
    la = np.hypot(*(a1 - a0).T)
    lb = np.hypot(*(b1 - b0).T)
    both = np.vstack([A, B])
    extent = float(np.max(both.max(0) - both.min(0)))
    # typical length, so a few long segments do not coarsen the whole grid
    cell = max(4.0 * float(np.median(np.concatenate([la, lb]))), 1e-4 * extent, 1e-12)
    short_a = la <= long_cells * cell
    short_b = lb <= long_cells * cell
    ia_parts, ib_parts = [], []
    ax, ay, sa = _cells(a0[short_a], a1[short_a], cell)
    bx, by, sb = _cells(b0[short_b], b1[short_b], cell)
    sa = np.flatnonzero(short_a)[sa]
    sb = np.flatnonzero(short_b)[sb]
    if len(sa) and len(sb):
        ybase = min(ay.min(), by.min())
        span = int(max(ay.max(), by.max()) - ybase + 1)
        ka = ax * span + (ay - ybase)
        kb = bx * span + (by - ybase)
        order = np.argsort(kb, kind="stable")
        kb_sorted = kb[order]
        lo = np.searchsorted(kb_sorted, ka, "left")
        cnt = np.searchsorted(kb_sorted, ka, "right") - lo
        if cnt.sum():
            within = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
            ia_parts.append(np.repeat(sa, cnt))
            ib_parts.append(sb[order[np.repeat(lo, cnt) + within]])
    lo_a, hi_a = np.minimum(a0, a1), np.maximum(a0, a1)
    lo_b, hi_b = np.minimum(b0, b1), np.maximum(b0, b1)
    for i in np.flatnonzero(~short_a):
        j = np.flatnonzero(np.all((lo_b <= hi_a[i]) & (hi_b >= lo_a[i]), axis=1))
        ia_parts.append(np.full(len(j), i))
        ib_parts.append(j)
    for j in np.flatnonzero(~short_b):
        i = np.flatnonzero(np.all((lo_a <= hi_b[j]) & (hi_a >= lo_b[j]), axis=1))
        ia_parts.append(i)
        ib_parts.append(np.full(len(i), j))
    if not ia_parts:
        return empty
    ia = np.concatenate(ia_parts).astype(np.int64)
    ib = np.concatenate(ib_parts).astype(np.int64)
    pair = np.unique(ia * len(b0) + ib)
    ia, ib = pair // len(b0), pair % len(b0)
    p, r = a0[ia], a1[ia] - a0[ia]
    q, s = b0[ib], b1[ib] - b0[ib]
    denom = r[:, 0] * s[:, 1] - r[:, 1] * s[:, 0]
    qp = q - p
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]) / denom
        w = (qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]) / denom
    hit = (denom != 0) & (t >= 0) & (t < 1) & (w >= 0) & (w < 1)
    return ia[hit], ib[hit], t[hit], w[hit]


def _collapse_runs(ia: np.ndarray, ib: np.ndarray, gap: int = 3) -> np.ndarray:
    """Indices of one hit per run of hits in nearby segments of both curves.

    Runs appear where the two polylines overlap to within roundoff and
    cross back and forth; they stand for a single (tangential) contact.
    """
    if len(ia) == 0:
        return np.empty(0, int)
    order = np.lexsort((ib, ia))
    keep = [order[0]]
    run_start = 0
    for k in range(1, len(order)):
        prev, cur = order[k - 1], order[k]
        if ia[cur] - ia[prev] <= gap and abs(int(ib[cur]) - int(ib[prev])) <= gap:
            # same run: keep its middle element
            keep[-1] = order[(run_start + k) // 2]
            continue
        run_start = k
        keep.append(cur)
    return np.asarray(keep, dtype=int)


def _newton_uv(A: ManifoldBranch, B: ManifoldBranch, ua, ub, shift, box=None):
    """Refine ``X_A(ua) = X_B(ub) + shift`` with finite-difference tangents.

    ``box = (ua_lo, ua_hi, ub_lo, ub_hi)`` confines the iterates; leaving it
    ends the iteration with the last error.
    """
    err = np.inf
    for _ in range(30):
        pa = A.point_at(ua)[0]
        pb = B.point_at(ub)[0] + shift
        F = pa - pb
        err = float(np.hypot(*F))
        if err < 1e-11:
            break
        ta = _raw_tangent(A, ua)
        tb = _raw_tangent(B, ub)
        J = np.column_stack([ta, -tb])
        try:
            d = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        na, nb = ua + d[0], ub + d[1]
        if not np.all(np.isfinite(d)) or (box is not None and not (box[0] <= na <= box[1] and box[2] <= nb <= box[3])):
            err = np.inf
            break
        ua, ub = na, nb
    return ua, ub, err


def _raw_tangent(br: ManifoldBranch, u: float) -> np.ndarray:
    """Unnormalized ``dX/du``."""
    j = int(np.clip(np.searchsorted(br.u, u), 1, len(br.u) - 1))
    du_seg = br.u[j] - br.u[j - 1]
    ds = np.hypot(*(br.points[j] - br.points[j - 1]))
    speed = ds / du_seg if du_seg > 0 and ds > 0 else 1.0
    h = max(min(1e-5 / speed, 0.25 * du_seg if du_seg > 0 else 1e-7), 1e-13 * max(1.0, abs(u)))
    p = br.point_at([u - h, u + h])
    return (p[1] - p[0]) / (2 * h)


def find_intersections(
    A: ManifoldBranch,
    B: ManifoldBranch,
    angle_threshold: float | None = None,
    refine: bool = True,
    max_hits: int = 2000,
) -> list[HeteroclinicPoint]:
    """All crossings of two branches, refined on the exact parameterizations."""
    if A is B or (A.kind == B.kind and A.index == B.index and _same_orbit(A.orbit, B.orbit)):
        return []
    thr = A.tol.tangency_angle if angle_threshold is None else angle_threshold
    kind = "homoclinic" if _same_orbit(A.orbit, B.orbit) else "heteroclinic"
    PA, PB = A.points, B.points
    if len(PA) < 2 or len(PB) < 2:
        return []
    jlo = int(np.floor((PA[:, 0].min() - PB[:, 0].max()) / TWO_PI))
    jhi = int(np.ceil((PA[:, 0].max() - PB[:, 0].min()) / TWO_PI))
    found: list[HeteroclinicPoint] = []
    seen: set = set()
    for j in range(jlo, jhi + 1):
        shift = np.array([TWO_PI * j, 0.0])
        ia, ib, t, w = _segment_pairs(PA, PB + shift)
        keep = _collapse_runs(ia, ib)
        if len(keep) > max_hits:
            warnings.warn(
                f"{len(keep)} crossings found (branches overlap); keeping an even subsample of {max_hits}",
                stacklevel=2,
            )
            keep = keep[np.linspace(0, len(keep) - 1, max_hits).astype(int)]
        for i_a, i_b, ta_, tb_ in zip(ia[keep], ib[keep], t[keep], w[keep]):
            ua = A.u[i_a] + ta_ * (A.u[i_a + 1] - A.u[i_a])
            ub = B.u[i_b] + tb_ * (B.u[i_b + 1] - B.u[i_b])
            ok = True
            if refine:
                box = (
                    A.u[max(i_a - 2, 0)],
                    A.u[min(i_a + 3, len(A.u) - 1)],
                    B.u[max(i_b - 2, 0)],
                    B.u[min(i_b + 3, len(B.u) - 1)],
                )
                ua2, ub2, err = _newton_uv(A, B, ua, ub, shift, box)
                # accept a refinement only if it stayed near the detected crossing
                if err < 1e-9 and abs(ua2 - ua) < 2 * (A.u[i_a + 1] - A.u[i_a]) + 1e-12:
                    ua, ub = ua2, ub2
                else:
                    ok = False
            loc = A.point_at(ua)[0]
            key = (round((loc[0] % TWO_PI) / 1e-8), round(loc[1] / 1e-8))
            if any((key[0] + dx, key[1] + dy) in seen for dx in (-1, 0, 1) for dy in (-1, 0, 1)):
                continue
            seen.add(key)
            tA = A.tangent_at(ua)
            tB = B.tangent_at(ub)
            angle = math.atan2(abs(tA[0] * tB[1] - tA[1] * tB[0]), abs(float(tA @ tB)))
            found.append(
                HeteroclinicPoint(
                    location=np.array([loc[0] % TWO_PI, loc[1]]),
                    branches=(_label(A), _label(B)),
                    u=(float(ua), float(ub)),
                    crossing_angle=float(angle),
                    transversal=bool(angle > thr),
                    kind=kind,
                    tangents=(tA, tB),
                    refined=ok,
                )
            )
    return found


# ---------------------------------------------------------------- pencils


@dataclass(frozen=True)
class PencilSlopes:
    R0: float
    theta0: float
    slope: float
    d_plus: float
    d_minus: float
    plus_infinite: bool = False
    minus_infinite: bool = False


def focusing_distances(R0: float, theta0: float, slope: float) -> PencilSlopes:
    """Forward and backward focusing distances of the ray pencil with ``dtheta/dphi = slope``."""
    base = R0 * math.sin(theta0)
    dp, dm = 1.0 + slope, 1.0 - slope
    pinf, minf = abs(dp) < 1e-12, abs(dm) < 1e-12
    return PencilSlopes(
        R0=R0,
        theta0=theta0,
        slope=slope,
        d_plus=math.inf if pinf else base / dp,
        d_minus=math.inf if minf else base / dm,
        plus_infinite=pinf,
        minus_infinite=minf,
    )


def traced_focus(R0: float, theta0: float, slope: float, sep: float = 1e-5) -> tuple[float, float]:
    """Focusing distances from two explicit rays on the osculating circle.

    Rays leave the circle of radius ``R0`` at tangent angles ``+-sep`` with
    angles ``theta0 +- slope*sep``; the signed distance of their intersection
    along the central ray gives ``d_plus`` (outgoing rays) and ``d_minus``
    (incoming rays, measured backwards).
    """

    def foot(phi):
        return np.array([R0 * math.sin(phi), -R0 * math.cos(phi)])

    def meet(dir_angle):
        p1, p2 = foot(-sep), foot(sep)
        e1 = np.array([math.cos(dir_angle(-sep)), math.sin(dir_angle(-sep))])
        e2 = np.array([math.cos(dir_angle(sep)), math.sin(dir_angle(sep))])
        A = np.column_stack([e1, -e2])
        s = np.linalg.solve(A, p2 - p1)
        x = p1 + s[0] * e1
        return x

    out = meet(lambda p: p + theta0 + slope * p)
    e0 = np.array([math.cos(theta0), math.sin(theta0)])
    d_plus = float((out - foot(0.0)) @ e0)
    inc = meet(lambda p: p - (theta0 + slope * p))
    f0 = np.array([math.cos(-theta0), math.sin(-theta0)])
    d_minus = float((foot(0.0) - inc) @ f0)
    return d_plus, d_minus


def tangency_splitting_prediction(R0: float, theta0: float, slope: float, h: float) -> tuple[float, float]:
    """Slopes of the unstable and stable curves after a bump of size ``h`` at the tangency."""
    su = slope + h * (1.0 - slope) / R0
    ss = slope - h * (1.0 + slope) / R0
    return su, ss
