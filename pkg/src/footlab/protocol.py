"""Trials, sweeps over the load grid, and the stability statistics."""

from __future__ import annotations

import enum
import hashlib
import json
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
import multiprocessing as mp

import numpy as np

from . import __version__
from .assembly import (FootAssembly, MaterialParams, ModuleGeometry, Rectangle, build_foot,
                       materials_for, unloaded_footprint)
from .statics import (DEFAULT_SETTINGS, RampTrace, SolverSettings, default_target_force,
                      detect_instability, ramp_load)
from .terrain import Plate, Terrain, grid_points, make_terrain

DEFAULT_STEPS = 20
LOAD_MASS = 2.0
IDEAL_STABLE = 50   # grid points inside the default unloaded footprint


class Classification(enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"


@dataclass(frozen=True)
class TrialSpec:
    foot_label: str
    terrain_id: str
    point: tuple
    target_force: float | None = None
    steps: int = DEFAULT_STEPS
    spring_set: str = "soft"
    material_overrides: tuple = ()   # sorted (name, value) pairs
    geometry_overrides: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "point", (float(self.point[0]), float(self.point[1])))
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        grid = grid_points(Plate())
        if not np.any(np.all(np.abs(grid - np.array(self.point)) < 1e-6, axis=1)):
            raise ValueError(f"point {self.point} is not on the load grid")
        if self.target_force is not None and self.target_force <= self.foot().total_mass * 9.81:
            raise ValueError("target force must exceed the foot weight")

    def foot(self) -> FootAssembly:
        return foot_from_params(self.foot_label, self.spring_set, self.material_overrides,
                                self.geometry_overrides)

    def terrain(self) -> Terrain:
        return make_terrain(self.terrain_id)

    def resolved_target(self) -> float:
        return default_target_force(self.foot(), LOAD_MASS) if self.target_force is None else self.target_force


_FOOT_CACHE: dict = {}


def foot_from_params(label: str, spring_set: str = "soft", material_overrides=(),
                     geometry_overrides=()) -> FootAssembly:
    key = (label, spring_set, tuple(material_overrides), tuple(geometry_overrides))
    if key not in _FOOT_CACHE:
        mat = materials_for(spring_set, **dict(material_overrides))
        geo = ModuleGeometry(**dict(geometry_overrides))
        _FOOT_CACHE[key] = build_foot(label, geo, mat)
    return _FOOT_CACHE[key]


@dataclass
class TrialOutcome:
    spec: TrialSpec
    classification: Classification
    mode: str | None
    final_force: float
    target_force: float
    max_displacement: float
    max_rotation_deg: float
    steps_run: int
    internal_error: str | None = None
    trace: RampTrace | None = field(default=None, repr=False, compare=False)

    @property
    def stable(self) -> bool:
        return self.classification is Classification.STABLE

    def as_dict(self) -> dict:
        return {
            "point": list(self.spec.point),
            "classification": self.classification.value,
            "mode": self.mode,
            "final_force": self.final_force,
            "target_force": self.target_force,
            "max_displacement": self.max_displacement,
            "max_rotation_deg": self.max_rotation_deg,
            "steps_run": self.steps_run,
            "internal_error": self.internal_error,
        }


def run_trial(spec: TrialSpec, settings: SolverSettings = DEFAULT_SETTINGS) -> TrialOutcome:
    """Reach (settle), push (ramp) and classify one application point.

    Homing and withdrawing only reset the rig and carry no physics here.
    """
    target = spec.resolved_target()
    try:
        trace = ramp_load(spec.foot(), spec.terrain(), spec.point, target, spec.steps, settings)
    except Exception as exc:  # surfaced as Unstable(Diverged), never raised out of a sweep
        msg = f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"
        return TrialOutcome(spec, Classification.UNSTABLE, "Diverged", 0.0, target, float("nan"),
                            float("nan"), 0, internal_error=msg)
    verdict = detect_instability(trace, settings)
    disp = max(s.displacement for s in trace.steps)
    rot = max(float(np.max(np.abs(s.rotation_deg))) for s in trace.steps)
    cls = Classification.UNSTABLE if verdict.unstable else Classification.STABLE
    final_force = trace.steps[-1].force if verdict.unstable else trace.reached_force
    return TrialOutcome(spec, cls, verdict.mode, float(final_force), float(target), float(disp),
                        rot, len(trace.steps) - 1, trace=trace)


# --- sweeps --------------------------------------------------------------------

@dataclass
class SweepResult:
    foot_label: str
    terrain_id: str
    spring_set: str
    steps: int
    outcomes: dict            # (x, y) -> TrialOutcome or dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        grid = {tuple(p) for p in grid_points().tolist()}
        if set(self.outcomes) != grid:
            raise ValueError("a sweep needs exactly one outcome per grid point")

    def ordered(self) -> list:
        return [self.outcomes[tuple(p)] for p in grid_points().tolist()]

    def stable_points(self) -> np.ndarray:
        return np.array([p for p in grid_points().tolist() if _is_stable(self.outcomes[tuple(p)])]).reshape(-1, 2)

    def stable_mask(self) -> np.ndarray:
        return np.array([_is_stable(o) for o in self.ordered()])

    @property
    def n_internal_errors(self) -> int:
        return sum(1 for o in self.ordered() if _record(o).get("internal_error"))

    def as_dict(self) -> dict:
        return {
            "foot": self.foot_label,
            "terrain": self.terrain_id,
            "spring_set": self.spring_set,
            "steps": self.steps,
            "meta": self.meta,
            "outcomes": [_record(o) for o in self.ordered()],
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=1, sort_keys=True, allow_nan=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepResult":
        outs = {tuple(float(v) for v in o["point"]): o for o in d["outcomes"]}
        return cls(d["foot"], d["terrain"], d["spring_set"], d["steps"], outs, d.get("meta", {}))


def _record(o) -> dict:
    return o if isinstance(o, dict) else o.as_dict()


def _is_stable(o) -> bool:
    return _record(o)["classification"] == Classification.STABLE.value


def _run_points(args):
    specs, settings = args
    return [run_trial(s, settings) for s in specs]


def _spawn_pool(jobs: int) -> ProcessPoolExecutor:
    # JAX is not fork-safe
    return ProcessPoolExecutor(max_workers=jobs, mp_context=mp.get_context("spawn"))


def sweep_specs(foot_label: str, terrain_id: str, spring_set: str = "soft", steps: int = DEFAULT_STEPS,
                material_overrides=(), geometry_overrides=()) -> list[TrialSpec]:
    return [TrialSpec(foot_label, terrain_id, tuple(p), None, steps, spring_set,
                      tuple(material_overrides), tuple(geometry_overrides)) for p in grid_points().tolist()]


def run_trials(specs: list[TrialSpec], jobs: int = 1, settings: SolverSettings = DEFAULT_SETTINGS,
               keep_traces: bool = False) -> list[TrialOutcome]:
    """Run trials, serially or on ``jobs`` processes; output order = input order."""
    if jobs <= 1 or len(specs) <= 1:
        outs = [run_trial(s, settings) for s in specs]
    else:
        # contiguous chunks keep one compiled model per worker and foot
        n_chunks = min(len(specs), jobs * 4)
        bounds = np.linspace(0, len(specs), n_chunks + 1).astype(int)
        chunks = [specs[a:b] for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with _spawn_pool(jobs) as pool:
            outs = [o for part in pool.map(_run_points, [(c, settings) for c in chunks]) for o in part]
    if not keep_traces:
        for o in outs:
            o.trace = None
    return outs


def run_sweep(foot_label: str, terrain_id: str, spring_set: str = "soft", steps: int = DEFAULT_STEPS,
              jobs: int = 1, settings: SolverSettings = DEFAULT_SETTINGS, material_overrides=(),
              geometry_overrides=()) -> SweepResult:
    """All 91 grid points of one (foot, terrain) pair. Trial errors are
    embedded in the outcomes; the sweep itself never aborts."""
    specs = sweep_specs(foot_label, terrain_id, spring_set, steps, material_overrides, geometry_overrides)
    outs = run_trials(specs, jobs, settings)
    meta = {"material_overrides": dict(material_overrides), "geometry_overrides": dict(geometry_overrides),
            "version": __version__}
    return SweepResult(foot_label, terrain_id, spring_set, steps,
                       {o.spec.point: o for o in outs}, meta)


def sweep_hash(foot_label: str, terrain_id: str, spring_set: str, steps: int,
               settings: SolverSettings = DEFAULT_SETTINGS, material_overrides=(),
               geometry_overrides=()) -> str:
    """Content hash of everything that determines a sweep's result."""
    payload = {
        "foot": foot_label, "terrain": terrain_id, "spring_set": spring_set, "steps": steps,
        "settings": asdict(settings), "materials": dict(material_overrides),
        "geometry": dict(geometry_overrides), "version": __version__,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


# --- statistics ------------------------------------------------------------------

def round_half_up(x) -> int:
    return int(math.floor(Fraction(x) + Fraction(1, 2)))


class ColorBucket(enum.Enum):
    RED = "Red"
    ORANGE = "Orange"
    YELLOW = "Yellow"
    GREEN = "Green"


def color_bucket(pct: float) -> ColorBucket:
    if pct < 0:
        raise ValueError("percentage must be >= 0")
    if pct < 90:
        return ColorBucket.RED
    if pct < 110:
        return ColorBucket.ORANGE
    if pct <= 130:
        return ColorBucket.YELLOW
    return ColorBucket.GREEN


@dataclass(frozen=True)
class StabilityStats:
    n: int
    n_E: int
    n_ref: int
    pct_raw: float
    pct_E_raw: float

    @property
    def pct(self) -> int:
        return round_half_up(Fraction(100 * self.n, self.n_ref)) if self.n_ref else 0

    @property
    def pct_E(self) -> int:
        return round_half_up(Fraction(100 * self.n_E, self.n)) if self.n else 0

    @property
    def color(self) -> ColorBucket:
        return color_bucket(self.pct)

    def as_dict(self) -> dict:
        return {"n": self.n, "n_E": self.n_E, "n_ref": self.n_ref, "pct": self.pct, "pct_E": self.pct_E,
                "pct_raw": self.pct_raw, "pct_E_raw": self.pct_E_raw, "color": self.color.value}


def stats_from_counts(n: int, n_ref: int, n_E: int = 0) -> StabilityStats:
    if n_ref <= 0:
        raise ValueError("reference foot has no stable point")
    if not 0 <= n_E <= n:
        raise ValueError("need 0 <= n_E <= n")
    return StabilityStats(n, n_E, n_ref, 100.0 * n / n_ref, 100.0 * n_E / n if n else 0.0)


def count_external(points: np.ndarray, footprint: Rectangle) -> int:
    """Stable points strictly outside the footprint; the boundary counts as inside."""
    if len(points) == 0:
        return 0
    return int(np.sum(~footprint.contains(points[:, 0], points[:, 1])))


def compute_stats(sweep: SweepResult, reference: SweepResult, footprint: Rectangle | None = None) -> StabilityStats:
    if sweep.terrain_id != reference.terrain_id:
        raise ValueError(f"terrain mismatch: {sweep.terrain_id} vs {reference.terrain_id}")
    footprint = footprint or unloaded_footprint(build_foot("RIGID"))
    pts = sweep.stable_points()
    n = len(pts)
    n_ref = len(reference.stable_points())
    return stats_from_counts(n, n_ref, count_external(pts, footprint))


def n_average(counts) -> float:
    """Mean stable count over terrains, one decimal."""
    counts = list(counts)
    return round_half_up(Fraction(10 * sum(counts), len(counts))) / 10


def reclassify(trace: RampTrace, displacement_limit: float, rotation_limit_deg: float) -> bool:
    """Stable under other thresholds, from a stored trace (True = stable).

    A run cut short never reached the target, so it stays unstable; a run
    that did is stable iff every recorded step is below the new limits.
    """
    if trace.stopped is not None or trace.reached_force < 0.99 * trace.target_force:
        return False
    return all(s.converged and s.displacement < displacement_limit
               and float(np.max(np.abs(s.rotation_deg))) < rotation_limit_deg for s in trace.steps)
