"""Numerical tolerances shared by every module.

All defaults live in :class:`Tolerances`; the CLI can override any of them
from a JSON file (``--config``).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class Tolerances:
    # billiard map
    theta_reject: float = 1e-12
    theta_clamp: float = 1e-9
    root_tol: float = 1e-12
    root_maxiter: int = 200
    # curve validation
    curvature_grid: int = 4096
    closure_tol: float = 1e-10
    # variational search
    gradient_tol: float = 1e-10
    dedup_tol: float = 1e-6
    hessian_zero_tol: float = 1e-7
    newton_maxiter: int = 60
    # stability
    degenerate_tol: float = 1e-8
    affinity_tol: float = 1e-8
    b_threshold: float = 1e-9
    # manifolds
    seed_offset: float = 1e-7
    max_step: float = 1e-3
    max_turn: float = 0.2
    tangency_angle: float = 1e-4
    # regions
    grid_phi: int = 512
    grid_theta: int = 512
    speckle_cells: int = 10
    ric_gap: float = 0.05

    def replace(self, **changes) -> "Tolerances":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Tolerances":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown tolerance keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "Tolerances":
        return cls.from_dict(json.loads(Path(path).read_text()))


DEFAULT = Tolerances()
