"""Result persistence, summary tables, bar data, stability maps and the
model-vs-bench trend report.

Everything here reads immutable sweep records; the numbers in every table
cell come from ``protocol.compute_stats``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import bench_counts
from .assembly import LABELS, build_foot, unloaded_footprint
from .protocol import (DEFAULT_STEPS, IDEAL_STABLE, SweepResult, compute_stats, n_average,
                       round_half_up)
from .terrain import TERRAIN_IDS, Plate, grid_points, make_terrain

REFERENCE = "RIGID"
FOOT_ORDER = ("RIGID", "KKF", "KKK", "KRF", "KRK", "KRR", "RRR")
COLUMN_NAMES = {"heel_S": "Heel S", "heel_M": "Heel M", "heel_L": "Heel L",
                "toes_S": "Toes S", "toes_M": "Toes M", "toes_L": "Toes L", "flat": "Flat"}


# --- manifests and result layout ---------------------------------------------------

@dataclass
class FootEntry:
    label: str
    name: str
    materials: dict = field(default_factory=dict)
    geometry: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown foot label {self.label!r}")


@dataclass
class StudyManifest:
    feet: list
    terrains: list
    spring_set: str = "soft"
    steps: int = DEFAULT_STEPS
    out: str | None = None
    name: str = "study"
    deterministic: bool = True   # no seeds anywhere; kept for the record

    def __post_init__(self):
        if self.spring_set not in ("soft", "stiff"):
            raise ValueError("spring_set must be 'soft' or 'stiff'")
        for t in self.terrains:
            make_terrain(t)
        names = [f.name for f in self.feet]
        if len(set(names)) != len(names):
            raise ValueError("foot names in a manifest must be unique")

    @property
    def n_trials(self) -> int:
        return len(self.feet) * len(self.terrains) * Plate().n_points

    @classmethod
    def from_dict(cls, d: dict) -> "StudyManifest":
        feet = []
        for f in d.get("feet", []):
            if isinstance(f, str):
                feet.append(FootEntry(f, f))
            else:
                feet.append(FootEntry(f["label"], f.get("name", f["label"]),
                                      dict(f.get("materials", {})), dict(f.get("geometry", {}))))
        return cls(feet, list(d.get("terrains", [])), d.get("spring_set", "soft"),
                   int(d.get("steps", DEFAULT_STEPS)), d.get("out"), d.get("name", "study"))

    @classmethod
    def load(cls, path) -> "StudyManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))


def sweep_path(root, foot_name: str, terrain_id: str) -> Path:
    return Path(root) / foot_name / terrain_id / "sweep.json"


def write_sweep(root, foot_name: str, sweep: SweepResult) -> Path:
    p = sweep_path(root, foot_name, sweep.terrain_id)
    p.parent.mkdir(parents=True, exist_ok=True)
    tmp = p.with_suffix(".tmp")
    tmp.write_text(sweep.to_json())
    tmp.replace(p)
    return p


def read_sweep(path) -> SweepResult:
    return SweepResult.from_dict(json.loads(Path(path).read_text()))


def load_results(root) -> dict:
    """All sweeps under ``root`` keyed by (foot name, terrain)."""
    root = Path(root)
    out = {}
    for p in sorted(root.glob("*/*/sweep.json")):
        s = read_sweep(p)
        out[(p.parent.parent.name, s.terrain_id)] = s
    return out


OUTCOME_FIELDS = ["foot", "terrain", "spring_set", "x", "y", "classification", "mode", "final_force",
                  "target_force", "max_displacement", "max_rotation_deg", "steps_run", "internal_error"]


def outcomes_csv(results: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(OUTCOME_FIELDS)
    for (name, tid), s in sorted(results.items()):
        for o in s.as_dict()["outcomes"]:
            w.writerow([name, tid, s.spring_set, o["point"][0], o["point"][1], o["classification"],
                        o["mode"] or "", f"{o['final_force']:.6g}", f"{o['target_force']:.6g}",
                        f"{o['max_displacement']:.6g}", f"{o['max_rotation_deg']:.6g}",
                        o["steps_run"], (o["internal_error"] or "").splitlines()[0] if o["internal_error"] else ""])
    return buf.getvalue()


# --- summary table ------------------------------------------------------------------

def _feet_in(results: dict) -> list:
    names = {k[0] for k in results}
    known = [f for f in FOOT_ORDER if f in names]
    return known + sorted(names - set(known))


def _terrains_in(results: dict) -> list:
    tids = {k[1] for k in results}
    return [t for t in TERRAIN_IDS + ("flat",) if t in tids] + sorted(tids - set(TERRAIN_IDS) - {"flat"})


def stats_table(results: dict, reference: str = REFERENCE) -> dict:
    """{foot: {terrain: StabilityStats}} against the reference foot on the same terrain."""
    footprint = unloaded_footprint(build_foot(REFERENCE))
    table = {}
    for foot in _feet_in(results):
        row = {}
        for tid in _terrains_in(results):
            if (foot, tid) not in results:
                continue
            ref = results.get((reference, tid))
            if ref is None:
                raise KeyError(f"missing reference sweep {reference}/{tid}")
            row[tid] = compute_stats(results[(foot, tid)], ref, footprint)
        table[foot] = row
    return table


def table_records(results: dict) -> list[dict]:
    recs = []
    for foot, row in stats_table(results).items():
        for tid, st in row.items():
            recs.append({"foot": foot, "terrain": tid, **st.as_dict()})
    return recs


def _row_average(row: dict) -> float:
    """Mean n over the obstacle terrains (all terrains if only flat is present)."""
    ns = [st.n for t, st in row.items() if t != "flat"] or [st.n for st in row.values()]
    return n_average(ns) if ns else 0.0


def format_table(results: dict, fmt: str = "md") -> str:
    """Rows per foot, columns per terrain with ``% (n)`` and ``%_E (n_E)``
    cells, the colour class of each cell and the mean stable count."""
    table = stats_table(results)
    tids = _terrains_in(results)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["foot", "terrain", "n", "pct", "n_E", "pct_E", "color", "pct_raw", "pct_E_raw", "n_average"])
        for foot, row in table.items():
            avg = _row_average(row)
            for t in tids:
                if t in row:
                    st = row[t]
                    w.writerow([foot, t, st.n, st.pct, st.n_E, st.pct_E, st.color.value,
                                f"{st.pct_raw:.6f}", f"{st.pct_E_raw:.6f}", f"{avg:.1f}"])
        return buf.getvalue()
    if fmt != "md":
        raise ValueError(f"unknown table format {fmt!r}")
    head = ["Foot"] + [f"{COLUMN_NAMES.get(t, t)} % (n)" for t in tids] \
        + [f"{COLUMN_NAMES.get(t, t)} %_E (n_E)" for t in tids] + ["n_average"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for foot, row in table.items():
        main = [f"{row[t].pct} ({row[t].n}) {row[t].color.value}" if t in row else "-" for t in tids]
        ext = [f"{row[t].pct_E} ({row[t].n_E})" if t in row else "-" for t in tids]
        avg = _row_average(row)
        lines.append("| " + " | ".join([foot] + main + ext + [f"{avg:.1f}"]) + " |")
    return "\n".join(lines) + "\n"


# --- bar data ------------------------------------------------------------------------

def bars_csv(results: dict) -> str:
    """Per foot and terrain: share of the rigid count, share of the ideal
    50 points, and the external (non-filled) part of the bar."""
    table = stats_table(results)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["foot", "terrain", "n", "n_E", "pct_vs_rigid", "pct_vs_ideal", "external_share_pct"])
    for foot, row in table.items():
        for t, st in row.items():
            w.writerow([foot, t, st.n, st.n_E, st.pct, pct_vs_ideal(st.n), st.pct_E])
    return buf.getvalue()


def pct_vs_ideal(n: int) -> int:
    return round_half_up(Fraction(100 * n, IDEAL_STABLE))


# --- SVG stability map ------------------------------------------------------------------

GREEN, RED = "#2ca02c", "#d62728"


@dataclass
class MapRender:
    dots: list                 # [(x, y, stable)]
    footprint: tuple           # (x_min, x_max, y_min, y_max)
    obstacles: list            # [(x, y, r)]
    title: str = ""

    def __post_init__(self):
        if len(self.dots) != Plate().n_points:
            raise ValueError("a map needs one dot per grid point")


def map_render(sweep: SweepResult) -> MapRender:
    fp = unloaded_footprint(build_foot(REFERENCE))
    terr = make_terrain(sweep.terrain_id)
    dots = [(float(x), float(y), bool(s)) for (x, y), s in zip(grid_points(), sweep.stable_mask())]
    obst = [(o.x, o.y, o.radius) for o in terr.obstacles]
    title = f"{sweep.foot_label} on {sweep.terrain_id} ({sweep.spring_set} springs): {int(sweep.stable_mask().sum())} stable"
    return MapRender(dots, (fp.x_min, fp.x_max, fp.y_min, fp.y_max), obst, title)


def render_svg(m: MapRender, scale: float = 2.0) -> str:
    """Top view, toes toward +x (right), y up, origin at the ankle projection."""
    plate = Plate()
    pad = 20.0
    x0, x1 = plate.center_x - plate.size_x / 2, plate.center_x + plate.size_x / 2
    y0, y1 = plate.center_y - plate.size_y / 2, plate.center_y + plate.size_y / 2
    W = (x1 - x0 + 2 * pad) * scale
    H = (y1 - y0 + 2 * pad) * scale + 24

    def X(x):
        return f"{(x - x0 + pad) * scale:.2f}"

    def Y(y):
        return f"{(y1 - y + pad) * scale + 24:.2f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}" '
           f'viewBox="0 0 {W:.0f} {H:.0f}">',
           f'<text x="8" y="16" font-family="sans-serif" font-size="13">{m.title}</text>',
           f'<rect x="{X(x0)}" y="{Y(y1)}" width="{(x1 - x0) * scale:.2f}" height="{(y1 - y0) * scale:.2f}" '
           f'fill="#f4f4f4" stroke="#888"/>']
    fx0, fx1, fy0, fy1 = m.footprint
    out.append(f'<rect class="footprint" x="{X(fx0)}" y="{Y(fy1)}" width="{(fx1 - fx0) * scale:.2f}" '
               f'height="{(fy1 - fy0) * scale:.2f}" fill="#cfe8ff" fill-opacity="0.6" stroke="#4a90d9"/>')
    if m.obstacles:
        xs = [o[0] for o in m.obstacles]
        r = m.obstacles[0][2]
        out.append(f'<rect class="obstacle-band" x="{X(min(xs) - r)}" y="{Y(y1)}" '
                   f'width="{(max(xs) - min(xs) + 2 * r) * scale:.2f}" height="{(y1 - y0) * scale:.2f}" '
                   f'fill="#999" fill-opacity="0.15"/>')
        for ox, oy, r in m.obstacles:
            out.append(f'<circle class="obstacle" cx="{X(ox)}" cy="{Y(oy)}" r="{r * scale:.2f}" '
                       f'fill="#777" fill-opacity="0.5"/>')
    # ankle-origin axes, +x toward the toes
    out.append(f'<line x1="{X(0)}" y1="{Y(0)}" x2="{X(30)}" y2="{Y(0)}" stroke="black"/>')
    out.append(f'<line x1="{X(0)}" y1="{Y(0)}" x2="{X(0)}" y2="{Y(30)}" stroke="black"/>')
    out.append(f'<text x="{X(32)}" y="{Y(-3)}" font-size="10" font-family="sans-serif">x</text>')
    out.append(f'<text x="{X(2)}" y="{Y(32)}" font-size="10" font-family="sans-serif">y</text>')
    for x, y, ok in m.dots:
        cls = "stable" if ok else "unstable"
        out.append(f'<circle class="{cls}" cx="{X(x)}" cy="{Y(y)}" r="{4 * scale / 2:.2f}" '
                   f'fill="{GREEN if ok else RED}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# --- comparison with the bench counts ------------------------------------------------

def trend_checks(soft: dict, stiff: dict | None = None) -> list[dict]:
    """Qualitative comparisons between simulated and bench stable counts.

    ``soft`` and ``stiff`` map (foot, terrain) to SweepResult. Each check has
    the bench verdict, the model verdict and whether they agree.
    """
    checks = []

    def n(res, foot, tid):
        s = res.get((foot, tid))
        return None if s is None else int(s.stable_mask().sum())

    bench = {k: dict(zip(TERRAIN_IDS, v)) for k, v in bench_counts.COUNTS.items()}
    forefoot = [t for t in TERRAIN_IDS if t.startswith("toes")]
    for foot in FOOT_ORDER[1:]:
        for tid in forefoot:
            m_soft, m_ref = n(soft, foot, tid), n(soft, REFERENCE, tid)
            b_soft, b_ref = bench[("soft", foot)][tid][0], bench[("soft", REFERENCE)][tid][0]
            if m_soft is None or m_ref is None:
                continue
            checks.append({"claim": "soft foot beats rigid on forefoot obstacles", "case": f"{foot} {tid}",
                           "bench": f"{b_soft} vs {b_ref}", "model": f"{m_soft} vs {m_ref}",
                           "bench_holds": b_soft > b_ref, "model_holds": m_soft > m_ref})
    if stiff:
        for tid in TERRAIN_IDS:
            m_st, m_so = n(stiff, "KRK", tid), n(soft, "KRK", tid)
            b_st, b_so = bench[("stiff", "KRK")][tid][0], bench[("soft", "KRK")][tid][0]
            if m_st is None or m_so is None:
                continue
            checks.append({"claim": "stiffer coil springs raise KRK stable counts", "case": f"KRK {tid}",
                           "bench": f"{b_st} vs {b_so}", "model": f"{m_st} vs {m_so}",
                           "bench_holds": b_st > b_so, "model_holds": m_st > m_so})
    for c in checks:
        c["agree"] = c["bench_holds"] == c["model_holds"]
    return checks


def trends_report(soft: dict, stiff: dict | None = None) -> str:
    """Markdown report of model validation against the bench. Informational
    only: the bench counts are hardware results, not targets."""
    checks = trend_checks(soft, stiff)
    lines = ["# Model validation against bench counts (informational, not pass/fail)", ""]
    lines.append("| claim | case | bench | model | bench holds | model holds | agree |")
    lines.append("|---|---|---|---|---|---|---|")
    for c in checks:
        lines.append(f"| {c['claim']} | {c['case']} | {c['bench']} | {c['model']} | "
                     f"{'yes' if c['bench_holds'] else 'no'} | {'yes' if c['model_holds'] else 'no'} | "
                     f"{'yes' if c['agree'] else 'no'} |")
    agree = sum(c["agree"] for c in checks)
    lines += ["", f"agreement: {agree}/{len(checks)} checks", ""]
    lines += ["## Stable counts, model vs bench (soft springs)", "",
              "| foot | " + " | ".join(COLUMN_NAMES[t] for t in TERRAIN_IDS) + " | model mean | bench mean |",
              "|---|" + "---|" * (len(TERRAIN_IDS) + 2)]
    for foot in FOOT_ORDER:
        cells, ms = [], []
        for i, t in enumerate(TERRAIN_IDS):
            s = soft.get((foot, t))
            b = bench_counts.COUNTS[("soft", foot)][i][0]
            if s is None:
                cells.append(f"- / {b}")
            else:
                m = int(s.stable_mask().sum())
                ms.append(m)
                cells.append(f"{m} / {b}")
        mm = f"{n_average(ms):.1f}" if ms else "-"
        lines.append(f"| {foot} | " + " | ".join(cells) + f" | {mm} | {bench_counts.AVERAGES[('soft', foot)]:.1f} |")
    return "\n".join(lines) + "\n"


def counts_array(results: dict, feet=FOOT_ORDER, terrains=TERRAIN_IDS) -> np.ndarray:
    """Stable counts as a (feet, terrains) array, -1 where a sweep is missing."""
    a = -np.ones((len(feet), len(terrains)), dtype=int)
    for i, f in enumerate(feet):
        for j, t in enumerate(terrains):
            if (f, t) in results:
                a[i, j] = int(results[(f, t)].stable_mask().sum())
    return a
