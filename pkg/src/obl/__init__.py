"""Numerical laboratory for billiards inside convex ovals."""

__version__ = "0.1.0"

from .billiard import forward_map, inverse_map, orbit_array, tangent_map  # noqa: E402
from .config import DEFAULT, Tolerances  # noqa: E402
from .curve import Ellipse, FourierOval, NormalBump, PerturbedOval, oval_from_dict  # noqa: E402
from .stability import PeriodicOrbit, classify  # noqa: E402
from .variational import find_orbits  # noqa: E402

__all__ = [
    "__version__",
    "DEFAULT",
    "Tolerances",
    "Ellipse",
    "FourierOval",
    "NormalBump",
    "PerturbedOval",
    "oval_from_dict",
    "forward_map",
    "inverse_map",
    "orbit_array",
    "tangent_map",
    "PeriodicOrbit",
    "classify",
    "find_orbits",
]
