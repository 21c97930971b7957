"""Periodic orbits as critical points of the polygon action.

For ``1 <= m < n`` the action of an inscribed polygon with lifted vertex angles
``psi_0 < ... < psi_{n-1} < psi_0 + 2 pi m`` is minus its perimeter,

    G(psi) = -sum_i |alpha(psi_i) - alpha(psi_{i+1})|,  psi_n = psi_0 + 2 pi m.

Critical points are exactly the (m, n) billiard orbits. With this sign a
maximal-perimeter (Birkhoff) polygon is a *minimum* of ``G``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import root

from .billiard import orbit_array
from .config import DEFAULT, Tolerances
from .curve import Oval

TWO_PI = 2.0 * math.pi

log = logging.getLogger(__name__)

__all__ = [
    "PolygonConfig",
    "CriticalPoint",
    "ClosureError",
    "action",
    "perimeter",
    "action_gradient",
    "action_hessian",
    "vertex_angles",
    "find_orbits",
    "refine_config",
    "critical_point",
    "config_to_orbit",
    "same_orbit",
]


class ClosureError(RuntimeError):
    """A supposed critical configuration does not close under the billiard map."""


@dataclass(frozen=True)
class PolygonConfig:
    m: int
    n: int
    psi: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=float).copy()
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)
        if self.n < 2 or not (1 <= self.m < self.n):
            raise ValueError(f"need 1 <= m < n and n >= 2, got (m, n) = ({self.m}, {self.n})")
        if psi.shape != (self.n,):
            raise ValueError(f"expected {self.n} angles, got shape {psi.shape}")
        gaps = self.gaps()
        if not np.all(gaps > 0.0):
            raise ValueError("vertex angles must be strictly increasing within one winding")
        if not np.all(gaps < TWO_PI):
            raise ValueError("consecutive vertices must advance by less than one turn")

    def closed(self) -> np.ndarray:
        return np.append(self.psi, self.psi[0] + TWO_PI * self.m)

    def gaps(self) -> np.ndarray:
        return np.diff(self.closed())

    def shifted(self, k: int) -> "PolygonConfig":
        """Cyclic relabeling starting from vertex ``k``."""
        k %= self.n
        psi = np.concatenate([self.psi[k:], self.psi[:k] + TWO_PI * self.m])
        return PolygonConfig(self.m, self.n, psi)


@dataclass(frozen=True)
class CriticalPoint:
    config: PolygonConfig
    action: float
    gradient_norm: float
    hessian_signature: tuple[int, int, int]
    nondegenerate: bool
    primitive_period: int = 0
    theta: np.ndarray = field(default=None, repr=False)

    @property
    def is_minimum(self) -> bool:
        neg, zero, pos = self.hessian_signature
        return neg == 0 and zero == 0

    @property
    def is_repetition(self) -> bool:
        return self.primitive_period < self.config.n


def _chords(oval: Oval, config: PolygonConfig):
    closed = config.closed()
    pos, r, dr = oval.geometry(closed)
    d = pos[1:] - pos[:-1]
    length = np.hypot(d[:, 0], d[:, 1])
    if np.any(length <= 1e-14):
        raise ValueError("coincident consecutive vertices")
    return closed, pos, r, dr, d, length


def perimeter(oval: Oval, config: PolygonConfig) -> float:
    return float(_chords(oval, config)[5].sum())


def action(oval: Oval, config: PolygonConfig) -> float:
    """``G_{m,n}``: the negative total chord length."""
    return -perimeter(oval, config)


def vertex_angles(oval: Oval, config: PolygonConfig):
    """Incoming and outgoing chord angles (measured from the tangent) at each vertex."""
    closed, pos, r, dr, d, length = _chords(oval, config)
    e = d / length[:, None]
    t = np.column_stack([np.cos(closed[:-1]), np.sin(closed[:-1])])
    out = np.arctan2(t[:, 0] * e[:, 1] - t[:, 1] * e[:, 0], (t * e).sum(1))
    e_in = np.roll(e, 1, axis=0)
    into = np.arctan2(e_in[:, 0] * t[:, 1] - e_in[:, 1] * t[:, 0], (t * e_in).sum(1))
    return into, out


def action_gradient(oval: Oval, config: PolygonConfig) -> np.ndarray:
    """``dG/dpsi_i = -R_i (cos theta_in,i - cos theta_out,i)``."""
    closed, pos, r, dr, d, length = _chords(oval, config)
    e = d / length[:, None]
    t = np.column_stack([np.cos(closed[:-1]), np.sin(closed[:-1])])
    e_in = np.roll(e, 1, axis=0)
    return -r[:-1] * ((t * e_in).sum(1) - (t * e).sum(1))


def action_hessian(oval: Oval, config: PolygonConfig) -> np.ndarray:
    """Analytic Hessian of ``G`` (cyclic tridiagonal)."""
    closed, pos, r, dr, d, length = _chords(oval, config)
    n = config.n
    e = d / length[:, None]
    t = np.column_stack([np.cos(closed), np.sin(closed)])
    nn = np.column_stack([-t[:, 1], t[:, 0]])
    d1 = r[:, None] * t
    d2 = dr[:, None] * t + r[:, None] * nn
    H = np.zeros((n, n))
    for j in range(n):
        a, b = j, (j + 1) % n
        ej = e[j]
        L = length[j]
        ca = d1[j, 0] * ej[1] - d1[j, 1] * ej[0]
        cb = d1[j + 1, 0] * ej[1] - d1[j + 1, 1] * ej[0]
        laa = -(d2[j] @ ej) + ca * ca / L
        lbb = d2[j + 1] @ ej + cb * cb / L
        lab = -ca * cb / L
        H[a, a] -= laa
        H[b, b] -= lbb
        H[a, b] -= lab
        H[b, a] -= lab
    return H


def _signature(H: np.ndarray, tol: float) -> tuple[int, int, int]:
    ev = np.linalg.eigvalsh(0.5 * (H + H.T))
    scale = max(1.0, float(np.abs(ev).max()))
    zero = np.abs(ev) <= tol * scale
    return int(np.sum((ev < 0) & ~zero)), int(np.sum(zero)), int(np.sum((ev > 0) & ~zero))


def _try_config(m, n, psi):
    try:
        return PolygonConfig(m, n, psi)
    except ValueError:
        return None


def _safe_gradient(oval, cfg):
    try:
        return action_gradient(oval, cfg)
    except ValueError:
        return None


def refine_config(
    oval: Oval, config: PolygonConfig, tol: Tolerances = DEFAULT
) -> PolygonConfig | None:
    """Damped Newton on the gradient with a trust-region fallback.

    Returns ``None`` when no ordered critical configuration is reached.
    """
    m, n = config.m, config.n
    x = config.psi.copy()
    cfg = config
    g = action_gradient(oval, cfg)
    gn = np.linalg.norm(g)
    polish = 0
    rescued = False
    for it in range(tol.newton_maxiter):
        if gn <= tol.gradient_tol:
            polish += 1
            if polish > 2 or gn == 0.0:
                break
        elif it >= tol.newton_maxiter // 2 and gn > 1e-4:
            break  # not heading anywhere useful
        H = action_hessian(oval, cfg)
        step = np.linalg.lstsq(H, -g, rcond=1e-13)[0]
        # keep the vertex ordering: cap the step by the smallest gap
        limit = 0.5 * cfg.gaps().min()
        big = np.abs(step).max()
        if big > limit:
            step *= limit / big
        accepted = False
        alpha = 1.0
        for _ in range(8):
            trial = _try_config(m, n, x + alpha * step)
            gt = None if trial is None else _safe_gradient(oval, trial)
            if gt is not None:
                gtn = np.linalg.norm(gt)
                if gtn < gn or (gn <= tol.gradient_tol and gtn <= tol.gradient_tol):
                    x, cfg, g, gn = trial.psi.copy(), trial, gt, gtn
                    accepted = True
                    break
            alpha *= 0.5
        if accepted:
            continue
        if gn <= tol.gradient_tol or rescued:
            break
        rescued = True
        cfg_tr = _trust_region(oval, cfg)
        g_tr = None if cfg_tr is None else _safe_gradient(oval, cfg_tr)
        if g_tr is None or np.linalg.norm(g_tr) >= gn:
            break
        cfg, x, g, gn = cfg_tr, cfg_tr.psi.copy(), g_tr, np.linalg.norm(g_tr)
    if gn > tol.gradient_tol:
        return None
    return cfg


def _trust_region(oval: Oval, cfg: PolygonConfig) -> PolygonConfig | None:
    m, n = cfg.m, cfg.n

    def fun(x):
        c = _try_config(m, n, x)
        g = None if c is None else _safe_gradient(oval, c)
        return np.full(n, 1e3) if g is None else g

    def jac(x):
        c = _try_config(m, n, x)
        try:
            return np.eye(n) if c is None else action_hessian(oval, c)
        except ValueError:
            return np.eye(n)

    sol = root(fun, cfg.psi, jac=jac, method="hybr")
    return _try_config(m, n, sol.x)


def _primitive_period(config: PolygonConfig, tol: float) -> int:
    n = config.n
    closed_ext = np.concatenate([config.psi, config.psi + TWO_PI * config.m])
    for p in range(1, n):
        if n % p:
            continue
        diff = closed_ext[p : p + n] - config.psi
        wrapped = np.abs(np.remainder(diff + math.pi, TWO_PI) - math.pi)
        if wrapped.max() < tol:
            return p
    return n


def critical_point(oval: Oval, config: PolygonConfig, tol: Tolerances = DEFAULT) -> CriticalPoint:
    g = action_gradient(oval, config)
    H = action_hessian(oval, config)
    sig = _signature(H, tol.hessian_zero_tol)
    _, out = vertex_angles(oval, config)
    return CriticalPoint(
        config=config,
        action=action(oval, config),
        gradient_norm=float(np.linalg.norm(g)),
        hessian_signature=sig,
        nondegenerate=sig[1] == 0,
        primitive_period=_primitive_period(config, tol.dedup_tol),
        theta=out,
    )


def _canonical(config: PolygonConfig) -> np.ndarray:
    return np.sort(np.mod(config.psi, TWO_PI))


def same_orbit(a: PolygonConfig, b: PolygonConfig, tol: float = 1e-6) -> bool:
    """Vertex sets agree within ``tol`` after the best cyclic shift."""
    if a.n != b.n or a.m != b.m:
        return False
    ca, cb = _canonical(a), _canonical(b)
    for s in range(a.n):
        diff = ca - np.roll(cb, s)
        if np.abs(np.remainder(diff + math.pi, TWO_PI) - math.pi).max() < tol:
            return True
    return False


def _same_family(a: CriticalPoint, b: CriticalPoint) -> bool:
    """Degenerate critical points on one continuum share action and signature."""
    return (
        not b.nondegenerate
        and a.hessian_signature == b.hessian_signature
        and abs(a.action - b.action) <= 1e-9 * max(1.0, abs(a.action))
    )


def _in_band(theta: np.ndarray, n: int) -> bool:
    slack = 1e-9
    return bool(np.any((theta >= math.pi / n - slack) & (theta <= (n - 1) * math.pi / n + slack)))


def _starts(m: int, n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Stratified samples of the ordered simplex of lifted vertex angles."""
    strata = (np.arange(count) + rng.random(count)) / count
    psi0 = strata * TWO_PI / n
    gaps = rng.dirichlet(np.full(n, 4.0), size=count) * TWO_PI * m
    psi = psi0[:, None] + np.concatenate([np.zeros((count, 1)), np.cumsum(gaps[:, :-1], 1)], 1)
    return psi


def find_orbits(
    oval: Oval,
    m: int,
    n: int,
    starts: int | None = None,
    seed: int = 0,
    tol: Tolerances = DEFAULT,
    include_regular: bool = True,
) -> list[CriticalPoint]:
    """Multistart search for the (m, n) critical points of the action.

    Returns deduplicated critical points (modulo cyclic relabeling) sorted by
    action. Solutions that are repetitions of a shorter orbit keep their tag
    in ``primitive_period``. An empty list is returned (with a warning) when
    nothing converges.
    """
    if not (1 <= m < n):
        raise ValueError(f"need 1 <= m < n, got ({m}, {n})")
    count = 50 * n if starts is None else int(starts)
    rng = np.random.default_rng(seed)
    seeds = _starts(m, n, count, rng)
    if include_regular:
        # equally spaced polygons at a few rotations
        base = TWO_PI * m * np.arange(n) / n
        rot = np.linspace(0.0, TWO_PI / n, 8, endpoint=False)
        seeds = np.vstack([base[None, :] + rot[:, None], seeds])
    found: list[CriticalPoint] = []
    for psi in seeds:
        cfg = _try_config(m, n, psi)
        if cfg is None:
            continue
        sol = refine_config(oval, cfg, tol)
        if sol is None:
            continue
        if any(same_orbit(sol, c.config, tol.dedup_tol) for c in found):
            continue
        cp = critical_point(oval, sol, tol)
        if not cp.nondegenerate and any(_same_family(cp, c) for c in found):
            continue
        if not _in_band(cp.theta, n):
            log.debug("rejecting (%d,%d) solution outside the angle band", m, n)
            continue
        found.append(cp)
    if not found:
        log.warning("no (%d, %d) critical point found after %d starts", m, n, len(seeds))
    found.sort(key=lambda c: c.action)
    return found


def config_to_orbit(oval: Oval, config: PolygonConfig, tol: Tolerances = DEFAULT, closure_tol: float | None = None):
    """Phase-space orbit of a critical configuration, checked by re-iteration."""
    from .stability import PeriodicOrbit

    _, out = vertex_angles(oval, config)
    closure_tol = 10.0 * tol.gradient_tol if closure_tol is None else closure_tol
    traj = orbit_array(oval, float(config.psi[0]), float(out[0]), config.n, tol)
    err_phi = abs(traj[-1, 0] - (config.psi[0] + TWO_PI * config.m))
    err_theta = abs(traj[-1, 1] - out[0])
    err = max(err_phi, err_theta)
    if not err <= closure_tol:
        raise ClosureError(
            f"(m,n)=({config.m},{config.n}) configuration fails to close: error {err:.3e}"
        )
    return PeriodicOrbit.from_config(oval, config, out, closure_error=err)
