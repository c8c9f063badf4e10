"""Test plate, load grid and obstacle layouts."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

OBSTACLE_DIAMETER = 25.0
OBSTACLE_HEIGHT = 22.0


@dataclass(frozen=True)
class Plate:
    size_x: float = 400.0
    size_y: float = 200.0
    nx: int = 13
    ny: int = 7
    pitch_x: float = 30.0
    pitch_y: float = 30.0
    # plate centre in the foot frame (origin at the ankle projection)
    center_x: float = 30.0
    center_y: float = 0.0
    cover_thickness: float = 1.0

    def __post_init__(self):
        if (self.nx - 1) * self.pitch_x > self.size_x or (self.ny - 1) * self.pitch_y > self.size_y:
            raise ValueError("hole grid does not fit on the plate")

    @property
    def n_points(self) -> int:
        return self.nx * self.ny

    def column_x(self, i: int) -> float:
        return self.center_x + (i - (self.nx - 1) / 2) * self.pitch_x

    def row_y(self, j: int) -> float:
        return self.center_y + (j - (self.ny - 1) / 2) * self.pitch_y

    def contains(self, x, y) -> bool:
        return (abs(x - self.center_x) <= self.size_x / 2) and (abs(y - self.center_y) <= self.size_y / 2)


def grid_points(plate: Plate | None = None) -> np.ndarray:
    """Hole centres, row-major (y rows, x fastest), shape (nx*ny, 2)."""
    plate = plate or Plate()
    xs = np.array([plate.column_x(i) for i in range(plate.nx)])
    ys = np.array([plate.row_y(j) for j in range(plate.ny)])
    Y, X = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1)


class SizeClass(enum.Enum):
    S = 1
    M = 3
    L = 5


class Region(enum.Enum):
    HEEL = "heel"
    FOREFOOT = "toes"


# x of the obstacle row for each region: heel pad and metatarsal band of the
# default footprint, snapped to plate holes
REGION_ROWS = {Region.HEEL: -90.0, Region.FOREFOOT: 150.0}


@dataclass(frozen=True)
class Obstacle:
    x: float
    y: float
    diameter: float = OBSTACLE_DIAMETER
    height: float = OBSTACLE_HEIGHT

    @property
    def radius(self) -> float:
        return self.diameter / 2


@dataclass(frozen=True)
class ObstacleLayout:
    size_class: SizeClass
    region: Region
    obstacles: tuple

    def validate(self, plate: Plate | None = None):
        plate = plate or Plate()
        holes = {tuple(np.round(p, 6)) for p in grid_points(plate)}
        if len(self.obstacles) != self.size_class.value:
            raise ValueError("obstacle count does not match size class")
        for o in self.obstacles:
            if (round(o.x, 6), round(o.y, 6)) not in holes:
                raise ValueError(f"obstacle at ({o.x}, {o.y}) is not on a hole")
        ys = sorted(round(o.y - plate.center_y, 6) for o in self.obstacles)
        if ys != sorted(-y for y in ys):
            raise ValueError("layout not symmetric about the longitudinal axis")
        for i, a in enumerate(self.obstacles):
            for b in self.obstacles[i + 1:]:
                if np.hypot(a.x - b.x, a.y - b.y) < a.radius + b.radius:
                    raise ValueError("obstacles overlap")
        return True


def build_layout(size_class: SizeClass | str, region: Region | str, plate: Plate | None = None,
                 row_x: float | None = None) -> ObstacleLayout:
    """Symmetric transverse row of 1, 3 or 5 obstacles on adjacent holes."""
    plate = plate or Plate()
    size_class = SizeClass[size_class] if isinstance(size_class, str) else size_class
    region = Region(region) if isinstance(region, str) else region
    x = REGION_ROWS[region] if row_x is None else row_x
    half = size_class.value // 2
    obstacles = tuple(Obstacle(x, plate.center_y + k * plate.pitch_y) for k in range(-half, half + 1))
    layout = ObstacleLayout(size_class, region, obstacles)
    layout.validate(plate)
    return layout


@dataclass(frozen=True)
class Terrain:
    plate: Plate = field(default_factory=Plate)
    layout: ObstacleLayout | None = None
    friction_mu: float = 0.8
    name: str = "flat"

    @property
    def obstacles(self) -> tuple:
        return () if self.layout is None else self.layout.obstacles


TERRAIN_IDS = ("heel_S", "heel_M", "heel_L", "toes_S", "toes_M", "toes_L")


def make_terrain(terrain_id: str = "flat", plate: Plate | None = None, friction_mu: float = 0.8,
                 row_x: float | None = None) -> Terrain:
    plate = plate or Plate()
    if terrain_id == "flat":
        return Terrain(plate, None, friction_mu, "flat")
    region, size = terrain_id.split("_")
    return Terrain(plate, build_layout(size, region, plate, row_x), friction_mu, terrain_id)


def terrain_from_config(cfg: dict | str | Path) -> Terrain:
    """Build a terrain from ``{size_class, region, pitch_x, pitch_y, mu, row_x}``."""
    if not isinstance(cfg, dict):
        cfg = json.loads(Path(cfg).read_text())
    plate_kw = {k: cfg[k] for k in ("pitch_x", "pitch_y", "center_x", "center_y") if k in cfg}
    plate = Plate(**plate_kw)
    mu = cfg.get("mu", 0.8)
    if cfg.get("size_class") is None:
        return Terrain(plate, None, mu, "flat")
    tid = f"{Region(cfg['region']).value}_{cfg['size_class']}"
    return make_terrain(tid, plate, mu, cfg.get("row_x"))


def height_at(terrain: Terrain, x: float, y: float) -> float:
    """Exact height field (mm): obstacle height on the disks, 0 elsewhere.

    The neoprene cover sits on both plate and obstacles, so it drops out.
    """
    if not terrain.plate.contains(x, y):
        raise ValueError(f"point ({x}, {y}) is off the plate")
    for o in terrain.obstacles:
        if (x - o.x) ** 2 + (y - o.y) ** 2 <= o.radius ** 2:
            return o.height
    return 0.0


def heights(terrain: Terrain, xy: np.ndarray) -> np.ndarray:
    """Vectorized height field without the plate bounds check."""
    xy = np.atleast_2d(xy)
    h = np.zeros(len(xy))
    for o in terrain.obstacles:
        inside = (xy[:, 0] - o.x) ** 2 + (xy[:, 1] - o.y) ** 2 <= o.radius ** 2
        h = np.where(inside, np.maximum(h, o.height), h)
    return h


def ascii_map(terrain: Terrain, footprint=None) -> str:
    """Hole grid as text: ``o`` obstacle, ``+`` hole inside the footprint, ``.`` other."""
    plate = terrain.plate
    obst = {(round(o.x, 6), round(o.y, 6)) for o in terrain.obstacles}
    lines = []
    for j in reversed(range(plate.ny)):
        row = []
        for i in range(plate.nx):
            x, y = plate.column_x(i), plate.row_y(j)
            if (round(x, 6), round(y, 6)) in obst:
                row.append("o")
            elif footprint is not None and footprint.contains(x, y):
                row.append("+")
            else:
                row.append(".")
        lines.append(f"{plate.row_y(j):7.1f} " + " ".join(row))
    return "\n".join(lines)
