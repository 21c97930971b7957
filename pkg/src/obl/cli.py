"""Command-line interface.

Every command reads a curve JSON (``--curve``), writes to ``--out`` and is
deterministic given its inputs, ``--seed`` and the tolerance file
(``--config``). Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import math
import sys
from pathlib import Path

import numpy as np
from numpy.linalg import LinAlgError

from . import __version__
from .billiard import MapError, orbit_array, write_orbit_csv
from .config import DEFAULT, Tolerances
from .curve import InvalidOval, check_oval, oval_from_dict
from .formats import (
    FORMAT,
    FormatError,
    branch_document,
    branch_from_document,
    document,
    dump,
    intersection_from_dict,
    library_document,
    library_orbits,
    load,
    orbit_from_record,
    orbit_record,
    phase_svg,
    region_svg,
)
from .genericity import break_degeneracy, split_tangency
from .manifolds import KINDS, Budget, find_intersections, grow_branch, write_branch_csv
from .regions import RegionBudget, analyze_islands, build_instability_region
from .stability import trace_decomposition
from .variational import config_to_orbit, find_orbits

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
CLASSES = ("elliptic", "hyperbolic", "inverse_hyperbolic", "degenerate")


class UsageError(ValueError):
    pass


_stage = ["setup"]


@contextlib.contextmanager
def stage(name: str):
    # on failure the name stays on the stack so main() can report it
    _stage.append(name)
    yield
    _stage.pop()


def _sibling(out: str, suffix: str) -> Path:
    p = Path(out)
    q = p.with_suffix(suffix)
    return q if q != p else p.with_name(p.name + suffix)


# ---------------------------------------------------------------- inputs


def _tolerances(args) -> Tolerances:
    if not args.config:
        return DEFAULT
    doc = load(args.config)
    if not isinstance(doc, dict):
        raise FormatError(f"{args.config}: expected a JSON object of tolerances")
    doc = {k: v for k, v in doc.items() if k not in ("format", "version", "type")}
    try:
        return Tolerances.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{args.config}: {exc}") from None


def _curve_from(data, where: str):
    if not isinstance(data, dict):
        raise FormatError(f"{where}: expected a JSON object")
    if "format" in data and data["format"] != FORMAT:
        raise FormatError(f"{where}: field 'format' must be {FORMAT!r}, got {data['format']!r}")
    try:
        return oval_from_dict({k: v for k, v in data.items() if k not in ("format", "version", "type")})
    except InvalidOval as exc:
        raise InvalidOval(f"{where}: {exc}") from None


def _curve(args, required: bool = True):
    if not args.curve:
        if required:
            raise UsageError("--curve is required for this command")
        return None
    return _curve_from(load(args.curve), args.curve)


def _find(oval, m, n, args, tol):
    with stage("find_orbits"):
        pts = find_orbits(oval, m, n, starts=args.starts, seed=args.seed, tol=tol)
    with stage("config_to_orbit"):
        orbits = [config_to_orbit(oval, cp.config, tol) for cp in pts]
    return pts, orbits


def _select_orbit(args, oval, tol):
    """``--orbit ID``: an index into ``--orbits FILE``, or ``m/n[/k|class]`` searched on the fly."""
    ident = args.orbit
    if args.orbits:
        doc = load(args.orbits)
        lib_oval, orbits = library_orbits(doc, None, args.orbits)
        if oval is None:
            oval = lib_oval
        elif oval.to_dict() != lib_oval.to_dict():
            raise FormatError(f"{args.orbits}: field 'curve' differs from --curve")
        try:
            k = int(ident)
        except ValueError:
            raise UsageError(f"--orbit must be an index into {args.orbits}, got {ident!r}") from None
        if not 0 <= k < len(orbits):
            raise UsageError(f"--orbit {k} outside 0..{len(orbits) - 1}")
        return oval, orbits[k]
    if oval is None:
        raise UsageError("--curve is required unless --orbits supplies a library")
    parts = str(ident).split("/")
    if len(parts) not in (2, 3):
        raise UsageError(f"--orbit must look like m/n, m/n/k or m/n/class, got {ident!r}")
    try:
        m, n = int(parts[0]), int(parts[1])
    except ValueError:
        raise UsageError(f"--orbit: m and n must be integers, got {ident!r}") from None
    _, orbits = _find(oval, m, n, args, tol)
    if not orbits:
        raise UsageError(f"no ({m},{n}) orbit found")
    sel = parts[2] if len(parts) == 3 else "0"
    if sel in CLASSES:
        hits = [o for o in orbits if o.cls == sel]
        if not hits:
            raise UsageError(f"no {sel} ({m},{n}) orbit found; classes present: {[o.cls for o in orbits]}")
        return oval, hits[0]
    try:
        return oval, orbits[int(sel)]
    except (ValueError, IndexError):
        raise UsageError(f"--orbit selector {sel!r} is neither a class nor an index below {len(orbits)}") from None


def _branch(path: str, tol) -> object:
    p = Path(path)
    if p.suffix == ".csv":
        p = _sibling(path, ".json")
    return branch_from_document(load(p), str(p), tol)


# -------------------------------------------------------------- commands


def cmd_oval_check(args, tol):
    oval = _curve(args)
    with stage("check_oval"):
        rep = check_oval(oval, tol.closure_tol)
    dump(args.out, document("oval_report", **rep))
    return EXIT_OK if rep["valid"] else EXIT_INVALID


def cmd_map_iterate(args, tol):
    oval = _curve(args)
    if not 0.0 < args.theta < math.pi:
        raise UsageError("--theta must lie strictly between 0 and pi")
    with stage("orbit_array"):
        traj = orbit_array(oval, args.phi, args.theta, args.n, tol)
    write_orbit_csv(args.out, traj)
    return EXIT_OK


def cmd_portrait(args, tol):
    oval = _curve(args)
    rng = np.random.default_rng(args.seed)
    margin = args.margin
    starts = np.column_stack([rng.uniform(0.0, 2 * math.pi, args.samples), rng.uniform(margin, math.pi - margin, args.samples)])
    trajs = []
    with stage("orbit_array"):
        for p, t in starts:
            trajs.append(orbit_array(oval, float(p), float(t), args.iters, tol))
    orbits = []
    if args.orbits:
        _, orbits = library_orbits(load(args.orbits), oval, args.orbits)
    curves = [_branch(b, tol).points for b in args.branches or ()]
    csv_path = _sibling(args.out, ".csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "step", "phi_mod", "theta"])
        for s, traj in enumerate(trajs):
            for k, (p, t) in enumerate(traj):
                w.writerow([s, k, f"{p % (2 * math.pi):.17g}", f"{t:.17g}"])
    Path(args.out).write_text(phase_svg(trajs, orbits, curves, "phase portrait"))
    return EXIT_OK


def cmd_orbits_find(args, tol):
    oval = _curve(args)
    if not 1 <= args.m < args.n:
        raise UsageError("need 1 <= m < n")
    pts, orbits = _find(oval, args.m, args.n, args, tol)
    dump(args.out, library_document(oval, pts, orbits))
    return EXIT_OK


def cmd_orbits_classify(args, tol):
    oval, orbits = library_orbits(load(args.orbits), _curve(args, required=False), args.orbits)
    report = []
    with stage("trace_decomposition"):
        for k, orb in enumerate(orbits):
            dec = [trace_decomposition(orb, i, tol).to_dict() for i in range(orb.n)]
            report.append({"id": k, "m": orb.m, "n": orb.n, "trace": orb.trace, "class": orb.cls, "decomposition": dec})
    dump(args.out, document("classification", curve=oval.to_dict(), orbits=report))
    return EXIT_OK


def cmd_break_degeneracy(args, tol):
    oval, orbit = _select_orbit(args, _curve(args, required=False), tol)
    with stage("break_degeneracy"):
        res = break_degeneracy(
            oval, orbit, h=args.h, site=args.site, half_width=args.half_width, require_degenerate=not args.force, tol=tol
        )
    dump(args.out, document("curve", **res.oval.to_dict()))
    rep = res.report()
    rep["orbit"] = orbit_record(orbit)
    rep["perturbed_orbit"] = None if res.orbit is None else orbit_record(res.orbit)
    dump(args.report or _sibling(args.out, ".report.json"), document("degeneracy_break", **rep))
    return EXIT_OK


def cmd_split_tangency(args, tol):
    doc = load(args.tangle, "intersections")
    oval = _curve(args, required=False) or _curve_from(doc.get("curve"), f"{args.tangle}: curve")
    points = doc.get("points")
    if not isinstance(points, list) or not points:
        raise FormatError(f"{args.tangle}: field 'points' must be a non-empty list")
    if args.point is None:
        cand = [k for k, p in enumerate(points) if isinstance(p, dict) and not p.get("transversal", True)]
        if not cand:
            raise UsageError(f"{args.tangle}: no non-transversal intersection; pass --point")
        idx = cand[0]
    else:
        idx = args.point
        if not 0 <= idx < len(points):
            raise UsageError(f"--point {idx} outside 0..{len(points) - 1}")
    tangency = intersection_from_dict(points[idx], f"{args.tangle}: points[{idx}]")
    orbits = tuple(orbit_from_record(oval, r, f"{args.tangle}: orbits[{k}]") for k, r in enumerate(doc.get("orbits", [])))
    with stage("split_tangency"):
        res = split_tangency(oval, tangency, args.h, orbits, half_width=args.half_width, tol=tol)
    dump(args.out, document("curve", **res.oval.to_dict()))
    dump(args.report or _sibling(args.out, ".report.json"), document("tangency_split", **res.report()))
    return EXIT_OK


def cmd_manifold_grow(args, tol):
    oval, orbit = _select_orbit(args, _curve(args, required=False), tol)
    budget = Budget(max_points=args.max_points, max_arclength=args.budget)
    with stage("grow_branch"):
        br = grow_branch(oval, orbit, args.index, args.kind, budget, tol)
    write_branch_csv(args.out, br)
    dump(_sibling(args.out, ".json"), branch_document(br, budget))
    return EXIT_OK


def cmd_intersections(args, tol):
    A = _branch(args.a, tol)
    B = _branch(args.b, tol)
    if A.oval.to_dict() != B.oval.to_dict():
        raise FormatError("branches were grown on different curves (field 'curve')")
    with stage("find_intersections"):
        pts = find_intersections(A, B, args.angle_threshold)
    doc = document(
        "intersections",
        curve=A.oval.to_dict(),
        branches=[f"{br.kind}@{br.index}" for br in (A, B)],
        orbits=[orbit_record(A.orbit), orbit_record(B.orbit)],
        points=[p.to_dict() for p in pts],
    )
    dump(args.out, doc)
    return EXIT_OK


def cmd_region_build(args, tol):
    oval, orbit = _select_orbit(args, _curve(args, required=False), tol)
    budget = RegionBudget(arclength=args.budget, iterations=args.iterations)
    bins = (args.bins, args.bins) if args.bins else None
    with stage("build_instability_region"):
        region = build_instability_region(oval, orbit, budget, bins, tol)
    with stage("analyze_islands"):
        analyze_islands(oval, region, seed=args.seed, tol=tol)
    dump(args.out, document("region", curve=oval.to_dict(), **region.to_dict()))
    _sibling(args.out, ".svg").write_text(region_svg(region, f"instability region of ({orbit.m},{orbit.n})"))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--curve", help="curve JSON file")
    p.add_argument("--out", required=True, help=out_help)
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--config", help="tolerance JSON file overriding the defaults")


def _orbit_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--orbit", required=True, help="index into --orbits, or m/n, m/n/k, m/n/<class>")
    p.add_argument("--orbits", help="orbit library JSON")
    p.add_argument("--starts", type=int, default=None, help="multistart count when searching")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="obl", description="Billiards in convex ovals: orbits, manifolds, regions.")
    ap.add_argument("--version", action="version", version=f"obl {__version__}")
    top = ap.add_subparsers(dest="group", required=True)

    oval = top.add_parser("oval", help="curve validation").add_subparsers(dest="cmd", required=True)
    p = oval.add_parser("check", help="curvature positivity and closure defect")
    _common(p, "validation report JSON")
    p.set_defaults(func=cmd_oval_check)

    mp = top.add_parser("map", help="billiard map").add_subparsers(dest="cmd", required=True)
    p = mp.add_parser("iterate", help="iterate one phase point")
    _common(p, "orbit CSV (step, phi_lifted, phi_mod, theta)")
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--n", type=int, required=True, help="steps (negative: inverse map)")
    p.set_defaults(func=cmd_map_iterate)

    p = top.add_parser("portrait", help="phase portrait SVG plus points CSV")
    _common(p, "SVG file; the CSV goes next to it")
    p.add_argument("--samples", type=int, default=40)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--margin", type=float, default=0.05, help="keep initial theta this far from 0 and pi")
    p.add_argument("--orbits", help="orbit library to mark")
    p.add_argument("--branches", nargs="*", help="branch files to overlay")
    p.set_defaults(func=cmd_portrait)

    orb = top.add_parser("orbits", help="periodic orbits").add_subparsers(dest="cmd", required=True)
    p = orb.add_parser("find", help="variational search for (m,n) orbits")
    _common(p, "orbit library JSON")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--starts", type=int, default=None, help="random starts (default 50 n)")
    p.set_defaults(func=cmd_orbits_find)
    p = orb.add_parser("classify", help="traces, classes and trace decompositions")
    _common(p, "classification report JSON")
    p.add_argument("--orbits", required=True, help="orbit library JSON")
    p.set_defaults(func=cmd_orbits_classify)

    per = top.add_parser("perturb", help="local bump perturbations").add_subparsers(dest="cmd", required=True)
    p = per.add_parser("break-degeneracy", help="move a degenerate trace off +-2")
    _common(p, "perturbed curve JSON")
    _orbit_options(p)
    p.add_argument("--h", type=float, default=None, help="bump amplitude (default: automatic)")
    p.add_argument("--site", type=int, default=None)
    p.add_argument("--half-width", type=float, default=None)
    p.add_argument("--force", action="store_true", help="allow a nondegenerate orbit")
    p.add_argument("--report", help="experiment report JSON (default next to --out)")
    p.set_defaults(func=cmd_break_degeneracy)
    p = per.add_parser("split-tangency", help="make a tangential intersection transversal")
    _common(p, "perturbed curve JSON")
    p.add_argument("--tangle", required=True, help="intersections JSON")
    p.add_argument("--point", type=int, default=None, help="index into its points (default: first tangency)")
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--half-width", type=float, default=None)
    p.add_argument("--report", help="predicted slopes JSON (default next to --out)")
    p.set_defaults(func=cmd_split_tangency)

    man = top.add_parser("manifold", help="invariant curves of hyperbolic orbits").add_subparsers(dest="cmd", required=True)
    p = man.add_parser("grow", help="grow one branch")
    _common(p, "branch CSV (arc, phi_lifted, theta); a JSON twin goes next to it")
    _orbit_options(p)
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--index", type=int, default=0, help="orbit vertex")
    p.add_argument("--budget", type=float, default=10.0, help="arclength budget")
    p.add_argument("--max-points", type=int, default=200_000)
    p.set_defaults(func=cmd_manifold_grow)

    tg = top.add_parser("tangle", help="homoclinic and heteroclinic points").add_subparsers(dest="cmd", required=True)
    p = tg.add_parser("intersections", help="intersections of two branches")
    _common(p, "intersections JSON")
    p.add_argument("--a", required=True, help="branch file")
    p.add_argument("--b", required=True, help="branch file")
    p.add_argument("--angle-threshold", type=float, default=None)
    p.set_defaults(func=cmd_intersections)

    reg = top.add_parser("region", help="instability regions").add_subparsers(dest="cmd", required=True)
    p = reg.add_parser("build", help="region and islands around a hyperbolic orbit")
    _common(p, "region JSON; an SVG goes next to it")
    _orbit_options(p)
    p.add_argument("--budget", type=float, default=20.0, help="arclength per unstable branch")
    p.add_argument("--iterations", type=int, default=300)
    p.add_argument("--bins", type=int, default=None, help="grid cells per axis")
    p.set_defaults(func=cmd_region_build)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _stage[:] = ["setup"]
    try:
        tol = _tolerances(args)
        return args.func(args, tol)
    except (MapError, ArithmeticError, RuntimeError, LinAlgError, FloatingPointError) as exc:
        print(f"obl: numerical failure in {_stage[-1]}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, InvalidOval, UsageError, ValueError, OSError) as exc:
        print(f"obl: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
