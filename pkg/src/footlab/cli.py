"""Command-line front end: ``python -m footlab <subcommand>`` or ``footlab``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import design_space, report
from .assembly import LABELS, build_foot, describe, unloaded_footprint
from .protocol import (DEFAULT_STEPS, TrialSpec, foot_from_params, run_sweep, run_trial,
                       sweep_hash)
from .statics import DEFAULT_SETTINGS
from .terrain import ascii_map, make_terrain, terrain_from_config

log = logging.getLogger("footlab")


def _write(text: str, out: str | None):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def load_foot_definition(arg: str, spring_set: str = "soft") -> dict:
    """A label, or a JSON file ``{label, spring_set, geometry, materials}``."""
    if arg in LABELS:
        return {"label": arg, "spring_set": spring_set, "geometry": {}, "materials": {}}
    d = json.loads(Path(arg).read_text())
    if d.get("label") not in LABELS:
        raise ValueError(f"unknown foot label {d.get('label')!r}")
    return {"label": d["label"], "spring_set": d.get("spring_set", spring_set),
            "geometry": dict(d.get("geometry", {})), "materials": dict(d.get("materials", {}))}


def _overrides(d: dict) -> tuple:
    return tuple(sorted(d.items()))


def _load_terrain(arg: str):
    if Path(arg).suffix == ".json" and Path(arg).exists():
        return terrain_from_config(arg)
    return make_terrain(arg)


# --- subcommands ----------------------------------------------------------------------

def cmd_enumerate(args) -> int:
    """Final designs by default; ``--all`` streams every raw assignment."""
    recs = design_space.design_records(include_rejected=args.all)
    if args.all:
        out = sys.stdout
        out.write("[\n")
        for i, r in enumerate(recs):
            out.write(json.dumps(r, separators=(",", ":")) + (",\n" if i < len(recs) - 1 else "\n"))
        out.write("]\n")
        return 0
    final = []
    for r in recs:
        if r["canonical"] == r["label"]:
            r["merged"] = sorted(q["label"] for q in recs if q["canonical"] == r["label"] and q is not r)
            final.append(r)
    print(json.dumps(final, indent=1))
    return 0


def cmd_describe(args) -> int:
    d = load_foot_definition(args.foot, args.springs)
    foot = foot_from_params(d["label"], d["spring_set"], _overrides(d["materials"]), _overrides(d["geometry"]))
    info = describe(foot)
    info["spring_set"] = d["spring_set"]
    info["coil_spring_k"] = foot.materials.coil_spring_k
    print(json.dumps(info, indent=1))
    return 0


def cmd_terrain_show(args) -> int:
    terr = _load_terrain(args.terrain)
    if args.svg:
        m = report.MapRender([(float(x), float(y), False) for x, y in report.grid_points(terr.plate)],
                             _footprint_tuple(), [(o.x, o.y, o.radius) for o in terr.obstacles],
                             f"terrain {terr.name}")
        _write(report.render_svg(m), args.svg)
    print(f"terrain {terr.name}: {len(terr.obstacles)} obstacles, mu = {terr.friction_mu}")
    print(ascii_map(terr, unloaded_footprint(build_foot("RIGID"))))
    return 0


def _footprint_tuple():
    fp = unloaded_footprint(build_foot("RIGID"))
    return (fp.x_min, fp.x_max, fp.y_min, fp.y_max)


def cmd_run(args) -> int:
    man = report.StudyManifest.load(args.manifest)
    if args.springs:
        man.spring_set = args.springs
    if args.steps:
        man.steps = args.steps
    if not man.feet or not man.terrains:
        log.info("empty manifest, nothing to do")
        return 0
    root = Path(args.out or man.out or "results")
    root.mkdir(parents=True, exist_ok=True)
    index = []
    n_errors = 0
    t_start = time.time()
    for foot in man.feet:
        mats, geo = _overrides(foot.materials), _overrides(foot.geometry)
        for tid in man.terrains:
            h = sweep_hash(foot.label, tid, man.spring_set, man.steps, DEFAULT_SETTINGS, mats, geo)
            p = report.sweep_path(root, foot.name, tid)
            sweep = None
            if p.exists():
                old = report.read_sweep(p)
                if old.meta.get("hash") == h:
                    sweep = old
                    log.info("skip %s/%s (up to date)", foot.name, tid)
            if sweep is None:
                t0 = time.time()
                sweep = run_sweep(foot.label, tid, man.spring_set, man.steps, args.jobs, DEFAULT_SETTINGS,
                                  mats, geo)
                sweep.meta["hash"] = h
                sweep.meta["wall_s"] = round(time.time() - t0, 1)
                report.write_sweep(root, foot.name, sweep)
                log.info("%s/%s: %d stable, %.0f s", foot.name, tid, int(sweep.stable_mask().sum()),
                         time.time() - t0)
            n_errors += sweep.n_internal_errors
            index.append({"foot": foot.name, "label": foot.label, "terrain": tid, "spring_set": man.spring_set,
                          "steps": man.steps, "hash": h, "path": str(p.relative_to(root)),
                          "n_stable": int(sweep.stable_mask().sum()),
                          "internal_errors": sweep.n_internal_errors,
                          "wall_s": sweep.meta.get("wall_s")})
    study = {"name": man.name, "spring_set": man.spring_set, "steps": man.steps,
             "n_trials": man.n_trials, "sweeps": index}
    (root / "study.json").write_text(json.dumps(study, indent=1, sort_keys=True) + "\n")
    results = {(e["foot"], e["terrain"]): report.read_sweep(root / e["path"]) for e in index}
    (root / "outcomes.csv").write_text(report.outcomes_csv(results))
    log.info("study %s done in %.0f s, %d internal errors", man.name, time.time() - t_start, n_errors)
    return 2 if n_errors else 0


def cmd_table(args) -> int:
    _write(report.format_table(report.load_results(args.results), args.format), args.out)
    return 0


def cmd_map(args) -> int:
    src = Path(args.sweep)
    if src.is_dir():
        if not (args.foot and args.terrain):
            raise SystemExit("map: give a sweep.json or a results dir with --foot and --terrain")
        src = report.sweep_path(src, args.foot, args.terrain)
    if not src.exists():
        raise SystemExit(f"map: no sweep at {src}")
    _write(report.render_svg(report.map_render(report.read_sweep(src))), args.out)
    return 0


def cmd_bars(args) -> int:
    _write(report.bars_csv(report.load_results(args.results)), args.out)
    return 0


def cmd_trace(args) -> int:
    d = load_foot_definition(args.foot, args.springs)
    spec = TrialSpec(d["label"], args.terrain, tuple(args.point), None, args.steps or DEFAULT_STEPS,
                     d["spring_set"], _overrides(d["materials"]), _overrides(d["geometry"]))
    out = run_trial(spec)
    if out.trace is None:
        print(out.internal_error, file=sys.stderr)
        return 2
    _write(out.trace.to_csv(), args.out)
    print(f"# {out.classification.value} {out.mode or ''} final force {out.final_force:.2f} N",
          file=sys.stderr)
    return 0


def cmd_trends(args) -> int:
    soft = report.load_results(args.results)
    stiff = report.load_results(args.stiff) if args.stiff else None
    _write(report.trends_report(soft, stiff), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="footlab", description="Soft foot design space, quasi-static "
                                "stability sweeps and reports.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("enumerate", help="feasible connection designs as JSON")
    s.add_argument("--all", action="store_true", help="include rejected assignments with traces")
    s.set_defaults(func=cmd_enumerate)

    s = sub.add_parser("describe", help="DoF count, mass and footprint of a foot")
    s.add_argument("foot", help="label or foot definition JSON")
    s.add_argument("--springs", choices=("soft", "stiff"), default="soft")
    s.set_defaults(func=cmd_describe)

    s = sub.add_parser("terrain", help="terrain utilities")
    tsub = s.add_subparsers(dest="terrain_cmd", required=True)
    t = tsub.add_parser("show", help="ASCII map of holes and obstacles")
    t.add_argument("terrain", help="terrain id (flat, heel_S, ..., toes_L) or config JSON")
    t.add_argument("--svg", help="also write an SVG map here")
    t.set_defaults(func=cmd_terrain_show)

    s = sub.add_parser("run", help="run the sweeps of a study manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", help="results directory (default: manifest 'out' or ./results)")
    s.add_argument("--springs", choices=("soft", "stiff"))
    s.add_argument("--steps", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("table", help="stable-count table from a results directory")
    s.add_argument("results")
    s.add_argument("--format", choices=("md", "csv"), default="md")
    s.add_argument("--out")
    s.set_defaults(func=cmd_table)

    s = sub.add_parser("map", help="SVG stability map of one sweep")
    s.add_argument("sweep", help="sweep.json, or a results dir with --foot/--terrain")
    s.add_argument("--foot")
    s.add_argument("--terrain")
    s.add_argument("--out")
    s.set_defaults(func=cmd_map)

    s = sub.add_parser("bars", help="per-foot share of rigid and ideal counts, CSV")
    s.add_argument("results")
    s.add_argument("--out")
    s.set_defaults(func=cmd_bars)

    s = sub.add_parser("trace", help="per-step CSV of a single trial")
    s.add_argument("--foot", required=True)
    s.add_argument("--terrain", default="flat")
    s.add_argument("--point", type=float, nargs=2, required=True, metavar=("X", "Y"))
    s.add_argument("--springs", choices=("soft", "stiff"), default="soft")
    s.add_argument("--steps", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_trace)

    s = sub.add_parser("trends", help="model-vs-bench comparison (informational)")
    s.add_argument("results", help="soft-spring results directory")
    s.add_argument("--stiff", help="stiff-spring results directory")
    s.add_argument("--out")
    s.set_defaults(func=cmd_trends)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for old in list(log.handlers):
        log.removeHandler(old)
    h = logging.StreamHandler()   # bound to the current stderr
    h.setFormatter(logging.Formatter("%(asctime)s %(message)s"))
    log.addHandler(h)
    log.propagate = False
    log.setLevel(logging.INFO if args.verbose or args.cmd == "run" else logging.WARNING)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"footlab {args.cmd}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
