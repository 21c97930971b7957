"""Monodromy, trace classification and the affine trace decomposition.

For an n-periodic orbit with vertex data ``x_j = R_j sin theta_j`` and chords
``l_j``, the monodromy is the product of the per-step Jacobians. The quantity
``x_i`` enters only two consecutive factors, and the trace turns out to be an
exactly affine function of ``1/x_i`` when everything else is held fixed:
``tr = b_i / x_i + c_i``. The pair ``(b_i, c_i)`` is recovered here by
evaluating the trace at synthetic values of ``x_i``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .billiard import step_matrix, tangent_maps
from .config import DEFAULT, Tolerances
from .curve import Oval

TWO_PI = 2.0 * math.pi

ELLIPTIC = "elliptic"
HYPERBOLIC = "hyperbolic"
INVERSE_HYPERBOLIC = "inverse_hyperbolic"
DEGENERATE = "degenerate"

__all__ = [
    "PeriodicOrbit",
    "TraceDecomposition",
    "AffinityError",
    "NotHyperbolic",
    "classify",
    "monodromy",
    "chain_monodromy",
    "chain_trace",
    "trace_decomposition",
    "fallback_trace",
    "reduced_trace",
    "eigen_directions",
    "ELLIPTIC",
    "HYPERBOLIC",
    "INVERSE_HYPERBOLIC",
    "DEGENERATE",
]


class AffinityError(ArithmeticError):
    """The trace failed to be affine in 1/x_i; this indicates a bug."""


class NotHyperbolic(ValueError):
    pass


def classify(trace: float, tol: float = DEFAULT.degenerate_tol) -> str:
    if abs(trace - 2.0) <= tol or abs(trace + 2.0) <= tol:
        return DEGENERATE
    if abs(trace) < 2.0:
        return ELLIPTIC
    return HYPERBOLIC if trace > 0 else INVERSE_HYPERBOLIC


def chain_monodromy(x: np.ndarray, l: np.ndarray) -> np.ndarray:
    """``DT_{n-1} ... DT_0`` for cyclic vertex data (``x_n = x_0``)."""
    x = np.asarray(x, dtype=float)
    l = np.asarray(l, dtype=float)
    steps = step_matrix(x, np.roll(x, -1), l)
    M = np.eye(2)
    for S in steps:
        M = S @ M
    return M


def chain_trace(x: np.ndarray, l: np.ndarray) -> float:
    return float(np.trace(chain_monodromy(x, l)))


@dataclass(frozen=True)
class PeriodicOrbit:
    m: int
    n: int
    phi: np.ndarray  # lifted vertex angles psi_0 < ... < psi_{n-1}
    theta: np.ndarray
    R: np.ndarray
    chords: np.ndarray
    closure_error: float = 0.0
    monodromy: np.ndarray = field(init=False, repr=False)
    trace: float = field(init=False)
    cls: str = field(init=False)

    def __post_init__(self):
        for name in ("phi", "theta", "R", "chords"):
            a = np.asarray(getattr(self, name), dtype=float).copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        M = chain_monodromy(self.x, self.chords)
        object.__setattr__(self, "monodromy", M)
        object.__setattr__(self, "trace", float(np.trace(M)))
        object.__setattr__(self, "cls", classify(self.trace))

    @property
    def x(self) -> np.ndarray:
        return self.R * np.sin(self.theta)

    @property
    def phase_points(self) -> np.ndarray:
        return np.column_stack([np.mod(self.phi, TWO_PI), self.theta])

    @property
    def perimeter(self) -> float:
        return float(self.chords.sum())

    def reclassify(self, tol: float) -> str:
        return classify(self.trace, tol)

    @classmethod
    def from_config(cls, oval: Oval, config, theta, closure_error: float = 0.0) -> "PeriodicOrbit":
        closed = config.closed()
        pos, r, _ = oval.geometry(closed)
        d = pos[1:] - pos[:-1]
        return cls(
            m=config.m,
            n=config.n,
            phi=config.psi,
            theta=np.asarray(theta, dtype=float),
            R=r[:-1],
            chords=np.hypot(d[:, 0], d[:, 1]),
            closure_error=closure_error,
        )

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "psi": self.phi.tolist(),
            "theta": self.theta.tolist(),
            "trace": self.trace,
            "class": self.cls,
        }


def monodromy(oval: Oval, orbit: PeriodicOrbit, start: int = 0, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Product of the forward-map Jacobians along the orbit, beginning at vertex ``start``.

    Unlike ``orbit.monodromy`` (built from the stored vertex data) this
    recomputes every step from the billiard map itself.
    """
    k = start % orbit.n
    phi = np.roll(orbit.phi, -k)
    theta = np.roll(orbit.theta, -k)
    mats, *_ = tangent_maps(oval, phi, theta, tol)
    M = np.eye(2)
    for S in mats:
        M = S @ M
    return M


@dataclass(frozen=True)
class TraceDecomposition:
    site: int
    b: float
    c: float
    x: float
    residual: float
    all_b_zero_fallback: float | None = None

    def reconstruct(self, x: float | None = None) -> float:
        x = self.x if x is None else x
        return self.b / x + self.c

    def to_dict(self) -> dict:
        return {"i": self.site, "b": self.b, "c": self.c, "x": self.x}


def _trace_with(x: np.ndarray, l: np.ndarray, i: int, value: float) -> float:
    xs = np.array(x, dtype=float)
    xs[i] = value
    return chain_trace(xs, l)


def trace_decomposition(
    orbit: PeriodicOrbit, i: int, tol: Tolerances = DEFAULT, x=None, chords=None
) -> TraceDecomposition:
    """Affine pair ``(b_i, c_i)`` with ``trace = b_i / x_i + c_i``.

    ``x``/``chords`` override the orbit's vertex data (used for synthetic chains).
    """
    x = orbit.x if x is None else np.asarray(x, dtype=float)
    l = orbit.chords if chords is None else np.asarray(chords, dtype=float)
    n = len(x)
    if not 0 <= i < n:
        raise IndexError(f"site {i} outside 0..{n - 1}")
    xi = float(x[i])
    xa, xb, xc = xi, 2.0 * xi, 0.5 * xi
    ta, tb, tc = (_trace_with(x, l, i, v) for v in (xa, xb, xc))
    b = (ta - tb) / (1.0 / xa - 1.0 / xb)
    c = ta - b / xa
    residual = tc - (b / xc + c)
    scale = max(1.0, abs(ta), abs(tb), abs(tc))
    if abs(residual) > tol.affinity_tol * scale:
        raise AffinityError(f"trace not affine in 1/x at site {i}: residual {residual:.3e}")
    return TraceDecomposition(site=i, b=float(b), c=float(c), x=xi, residual=float(residual / scale))


def fallback_trace(x0: float, chords) -> float:
    """Trace left when every ``b_1..b_{n-1}`` vanishes: ``(-1)^(n-1) 2 (perimeter / x_0 - 1)``."""
    chords = np.asarray(chords, dtype=float)
    n = len(chords)
    return float((-1) ** (n - 1) * 2.0 * (chords.sum() / x0 - 1.0))


def reduced_trace(x, chords) -> float:
    """Trace with ``1/x_1 = ... = 1/x_{n-1} = 0`` (``x_0`` kept).

    The trace is multi-affine in the reciprocals ``1/x_j``, so the constant
    term is recovered exactly by extrapolating from the corners of a box.
    Cost is ``2^(n-1)`` chain evaluations.
    """
    x = np.asarray(x, dtype=float)
    l = np.asarray(chords, dtype=float)
    n = len(x)
    total = 0.0
    for corner in itertools.product((0, 1), repeat=n - 1):
        xs = x.copy()
        w = 1.0
        for j, bit in enumerate(corner, start=1):
            # y = a (weight 2) or y = 2a (weight -1), extrapolating to y = 0
            if bit:
                xs[j] = x[j] / 2.0
                w *= -1.0
            else:
                w *= 2.0
        total += w * chain_trace(xs, l)
    return float(total)


def eigen_directions(M: np.ndarray):
    """Unstable/stable unit eigenvectors and eigenvalues of a hyperbolic 2x2 matrix."""
    M = np.asarray(M, dtype=float)
    tr = float(np.trace(M))
    det = float(np.linalg.det(M))
    disc = tr * tr / 4.0 - det
    if disc <= 0:
        raise NotHyperbolic(f"trace {tr} is not hyperbolic")
    root = math.sqrt(disc)
    # numerically stable pair: the large root directly, the small one from the determinant
    lam_u = tr / 2.0 + math.copysign(root, tr)
    lam_s = det / lam_u
    vu = _eigvec(M, lam_u)
    vs = _eigvec(M, lam_s)
    return vu, vs, lam_u, lam_s


def _eigvec(M: np.ndarray, lam: float) -> np.ndarray:
    a, b = M[0, 0] - lam, M[0, 1]
    c, d = M[1, 0], M[1, 1] - lam
    # pick the better conditioned row of (M - lam I)
    if math.hypot(a, b) >= math.hypot(c, d):
        v = np.array([-b, a])
    else:
        v = np.array([-d, c])
    v /= np.linalg.norm(v)
    return v if v[0] > 0 or (v[0] == 0 and v[1] > 0) else -v
