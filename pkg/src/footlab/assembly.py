"""Parametric mechanical models of the tested feet.

A soft foot is five identical planar modules side by side. Each module lives
in its own sagittal plane (x forward, z up, y = module offset) and is made of

* a rear arch and a frontal arch hinged on a common ankle axis,
* a heel body (heel pad + rearmost sole body) pinned to the rear arch and
  held by a coil spring,
* a chain of sole bodies closing the loop onto the frontal arch tip (MTP),
* three phalanges hanging off the MTP joint.

All lengths are mm, masses kg, forces N. The foot frame has its origin at the
ankle projection on the ground, which is also rigidly attached to the central
rear arch (the root body).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .design_space import ConnectionType, F, K, R

G = 9.81  # m/s^2
G_MM = G  # N/kg; with mm lengths, m*g*z is in N*mm

SOFT_MASS = 1.115
RIGID_MASS = 1.13
N_MODULES = 5
SOFT_LABELS = ("KKF", "KKK", "KRF", "KRK", "KRR")
LABELS = SOFT_LABELS + ("RRR", "RIGID")
SITES = ("FrontalArch", "RearArch", "Heel")


@dataclass(frozen=True)
class ModuleGeometry:
    sole_body_count: int = 8
    sole_body_length: float = 28.0
    module_width: float = 26.0
    rear_arch_length: float = 83.8
    heel_length: float = 35.0
    toe_lengths: tuple = (14.0, 14.0, 13.0)
    ankle_height: float = 70.0
    root_height: float = 100.0      # proximal end of the central rear arch
    heel_joint_height: float = 24.0
    sole_thickness: float = 12.0
    sole_arch_rise: float = 5.0     # unloaded sole curvature, mid-chain lift
    tendon_offset: float = 4.0      # tendon routing below the pin line
    band_offset: float = 5.0        # elastic band lever above the pin line
    coil_spring_lever: float = 30.0  # unpublished; anchor distance along rear arch
    heel_stop_angle: float = 0.26   # rad, heel joint travel before rear arch meets the heel
    sample_spacing: float = 7.0
    sample_rows: int = 5

    def __post_init__(self):
        if self.sole_body_count < 2:
            raise ValueError("sole_body_count must be >= 2")
        lengths = (self.sole_body_length, self.module_width, self.rear_arch_length,
                   self.heel_length, *self.toe_lengths, self.ankle_height, self.root_height,
                   self.heel_joint_height, self.sole_thickness, self.coil_spring_lever,
                   self.sample_spacing)
        if any(v <= 0 for v in lengths):
            raise ValueError("geometry lengths must be positive")
        if len(self.toe_lengths) != 3:
            raise ValueError("three phalanges expected")
        if self.rear_arch_length <= self.ankle_height - self.heel_joint_height:
            raise ValueError("rear arch too short to reach the heel joint")
        if self.sole_arch_rise < 0:
            raise ValueError("sole_arch_rise must be >= 0")
        if self.heel_stop_angle <= 0:
            raise ValueError("heel_stop_angle must be positive")

    @property
    def frontal_arch_length(self) -> float:
        return float(np.linalg.norm(module_layout(self).mtp - module_layout(self).ankle))

    @property
    def joint_pivot_offsets(self) -> tuple[float, float]:
        return (self.tendon_offset, self.band_offset)


@dataclass(frozen=True)
class MaterialParams:
    coil_spring_k: float = 0.125     # N/mm, soft set; stiff set is 1.7
    band_k: float = 1.5              # N/mm per band pair, estimate (not measured)
    band_rest_length: float = 10.0
    tendon_stiffness: float = 100.0  # N/mm engagement stiffness
    tendon_pretension: float = 0.0   # N applied in simulation, see compute_tendon_pretension
    sheet_k_trans: float = 10.0      # N/mm, lumped nitrile sheet
    sheet_k_rot: float = 500.0       # N*mm/rad
    ip_k_rot: float = 200.0          # N*mm/rad, elastic elements between phalanges
    mtp_k_rot: float = 50.0          # N*mm/rad
    stop_k_rot: float = 1.0e5        # N*mm/rad, penalty of the heel joint end stop
    friction_mu: float = 0.8

    def __post_init__(self):
        stiff = (self.coil_spring_k, self.band_k, self.band_rest_length, self.tendon_stiffness,
                 self.sheet_k_trans, self.sheet_k_rot, self.ip_k_rot, self.mtp_k_rot, self.stop_k_rot)
        if any(v <= 0 for v in stiff):
            raise ValueError("stiffnesses must be positive")
        if self.tendon_pretension < 0 or self.friction_mu < 0:
            raise ValueError("pretension and friction must be non-negative")


SPRING_SETS = {"soft": 0.125, "stiff": 1.7}


def materials_for(spring_set: str = "soft", **overrides) -> MaterialParams:
    return MaterialParams(coil_spring_k=SPRING_SETS[spring_set], **overrides)


@dataclass(frozen=True)
class CouplingSpec:
    site: str
    type: ConnectionType
    pairs: tuple

    def __post_init__(self):
        if self.site not in SITES:
            raise ValueError(f"unknown coupling site {self.site!r}")
        for i, j in self.pairs:
            if j != i + 1:
                raise ValueError("couplings only join adjacent modules")


# --- planar module layout ---------------------------------------------------

# body indices inside a module
REAR, FRONT, HEEL = 0, 1, 2


@dataclass(frozen=True)
class ModuleLayout:
    """Rest geometry of one module in its sagittal plane, (x, z) pairs."""

    ankle: np.ndarray
    heel_joint: np.ndarray
    pins: np.ndarray            # (n+1, 2) sole pin line, pins[0] under the heel joint
    toe_pins: np.ndarray        # (4, 2) MTP, IP1, IP2, toe tip
    heel_back: float
    rest_bend: float            # turning angle between consecutive sole bodies
    n_bodies: int               # rear, front, heel, sole 2..n, toes 1..3

    @property
    def mtp(self) -> np.ndarray:
        return self.pins[-1]

    @property
    def toe_tip(self) -> float:
        return float(self.toe_pins[-1, 0])

    def sole_body(self, k: int) -> int:
        """Body index of sole body k (1-based); body 1 is part of the heel."""
        return HEEL if k == 1 else 2 + (k - 1)

    def toe_body(self, j: int) -> int:
        return 2 + (len(self.pins) - 2) + j


def _rest_bend(g: ModuleGeometry) -> float:
    n, L, s = g.sole_body_count, g.sole_body_length, g.sole_arch_rise
    if s == 0:
        return 0.0

    def rise(d):
        # symmetric polyline arc with n chords of length L and turn d per joint
        phis = (n - 1) * d / 2 - d * np.arange(n)
        z = np.concatenate([[0.0], np.cumsum(L * np.sin(phis))])
        return z.max() - s

    return float(brentq(rise, 1e-9, math.pi / n))


_LAYOUT_CACHE: dict = {}


def module_layout(g: ModuleGeometry) -> ModuleLayout:
    if g in _LAYOUT_CACHE:
        return _LAYOUT_CACHE[g]
    n, L = g.sole_body_count, g.sole_body_length
    ankle = np.array([0.0, g.ankle_height])
    dz = g.ankle_height - g.heel_joint_height
    heel_joint = np.array([-math.sqrt(g.rear_arch_length ** 2 - dz ** 2), g.heel_joint_height])
    bend = _rest_bend(g)
    phis = (n - 1) * bend / 2 - bend * np.arange(n)
    steps = L * np.stack([np.cos(phis), np.sin(phis)], axis=1)
    p0 = np.array([heel_joint[0], g.sole_thickness / 2])
    pins = np.vstack([p0, p0 + np.cumsum(steps, axis=0)])
    toe_x = pins[-1, 0] + np.concatenate([[0.0], np.cumsum(g.toe_lengths)])
    toe_pins = np.stack([toe_x, np.full(4, pins[-1, 1])], axis=1)
    lay = ModuleLayout(ankle=ankle, heel_joint=heel_joint, pins=pins, toe_pins=toe_pins,
                       heel_back=float(heel_joint[0] - g.heel_length), rest_bend=bend,
                       n_bodies=3 + (n - 1) + 3)
    _LAYOUT_CACHE[g] = lay
    return lay


def _along(a, b, fracs):
    fracs = np.asarray(fracs, dtype=float)[:, None]
    return a[None, :] + fracs * (b - a)[None, :]


def _spaced(length, spacing, include_start=True):
    m = max(1, math.ceil(length / spacing))
    f = np.linspace(0.0, 1.0, m + 1)
    return f if include_start else f[1:]


def _below(a, b, offset):
    """Shift segment a-b by ``offset`` along its downward normal."""
    t = (b - a) / np.linalg.norm(b - a)
    down = np.array([t[1], -t[0]])
    return a + offset * down, b + offset * down


def contact_samples(g: ModuleGeometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sole sampling points of one module.

    Returns (body index, rest (x, z), lateral offset) arrays. Bottom faces get
    ``sample_rows`` lateral rows across the module width; the arches only the
    mid-plane row, for the collapsed case.
    """
    lay = module_layout(g)
    half = g.sole_thickness / 2
    bodies, pts = [], []
    # heel pad
    xs = lay.heel_back + _spaced(g.heel_length, g.sample_spacing) * g.heel_length
    pad = np.stack([xs, np.zeros_like(xs)], axis=1)
    bodies.append(np.full(len(pad), HEEL)); pts.append(pad)
    # sole bodies
    for k in range(1, g.sole_body_count + 1):
        a, b = _below(lay.pins[k - 1], lay.pins[k], half)
        f = _spaced(g.sole_body_length, g.sample_spacing, include_start=(k == 1))
        bodies.append(np.full(len(f), lay.sole_body(k))); pts.append(_along(a, b, f))
    # phalanges; the tip also gets a point on the front face
    for j in range(3):
        a, b = lay.toe_pins[j] - [0, half], lay.toe_pins[j + 1] - [0, half]
        f = _spaced(g.toe_lengths[j], g.sample_spacing, include_start=False)
        bodies.append(np.full(len(f), lay.toe_body(j + 1))); pts.append(_along(a, b, f))
    bottom_b = np.concatenate(bodies)
    bottom_p = np.vstack(pts)
    rows = np.linspace(-g.module_width / 2, g.module_width / 2, g.sample_rows)
    b_all = np.repeat(bottom_b, len(rows))
    p_all = np.repeat(bottom_p, len(rows), axis=0)
    y_all = np.tile(rows, len(bottom_b))
    extra_b = [lay.toe_body(3)]
    extra_p = [lay.toe_pins[-1]]
    for body, (a, b) in ((REAR, (lay.ankle, lay.heel_joint)), (FRONT, (lay.ankle, lay.mtp))):
        for f in (0.4, 0.6, 0.8):
            extra_b.append(body); extra_p.append(a + f * (b - a))
    b_all = np.concatenate([b_all, extra_b])
    p_all = np.vstack([p_all, np.array(extra_p)])
    y_all = np.concatenate([y_all, np.zeros(len(extra_b))])
    return b_all.astype(int), p_all, y_all


def tendon_route(g: ModuleGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Routing points (body, rest xz) from the rearmost sole body to the toe tip."""
    lay = module_layout(g)
    d = g.tendon_offset
    bodies, pts = [], []
    for k in range(1, g.sole_body_count + 1):
        a, b = _below(lay.pins[k - 1], lay.pins[k], d)
        e = 0.2
        bodies += [lay.sole_body(k)] * 2
        pts += [a + e * (b - a), a + (1 - e) * (b - a)]
    for j in range(3):
        a, b = lay.toe_pins[j] - [0, d], lay.toe_pins[j + 1] - [0, d]
        bodies += [lay.toe_body(j + 1)] * 2
        pts += [a + 0.2 * (b - a), b if j == 2 else a + 0.8 * (b - a)]
    return np.array(bodies), np.array(pts)


def coil_anchors(g: ModuleGeometry) -> np.ndarray:
    """Rest anchors (rear-arch point, heel-body point) of the coil spring."""
    lay = module_layout(g)
    H, A = lay.heel_joint, lay.ankle
    on_arch = H + g.coil_spring_lever * (A - H) / np.linalg.norm(A - H)
    p0, p1 = lay.pins[0], lay.pins[1]
    on_heel = 0.5 * (p0 + p1) + np.array([0.0, g.sole_thickness / 2])
    return np.stack([on_arch, on_heel])


def coupling_refs(g: ModuleGeometry) -> dict[str, tuple[int, np.ndarray]]:
    """Sheet attachment point per coupling site (body, rest xz)."""
    lay = module_layout(g)
    return {
        "FrontalArch": (FRONT, 0.5 * (lay.ankle + lay.mtp)),
        "RearArch": (REAR, 0.5 * (lay.ankle + lay.heel_joint)),
        "Heel": (HEEL, np.array([lay.heel_back + g.heel_length / 2, g.sole_thickness / 2])),
    }


def _module_parts(g: ModuleGeometry):
    """(body, segment midpoint xz, length) of every massive part of a module."""
    lay = module_layout(g)
    parts = [(REAR, lay.ankle, lay.heel_joint), (FRONT, lay.ankle, lay.mtp),
             (HEEL, np.array([lay.heel_back, g.sole_thickness / 2]), lay.pins[0])]
    for k in range(1, g.sole_body_count + 1):
        parts.append((lay.sole_body(k), lay.pins[k - 1], lay.pins[k]))
    for j in range(3):
        parts.append((lay.toe_body(j + 1), lay.toe_pins[j], lay.toe_pins[j + 1]))
    return [(b, 0.5 * (a + c), float(np.linalg.norm(c - a))) for b, a, c in parts]


# --- assembly ----------------------------------------------------------------

@dataclass(frozen=True)
class ModuleDescription:
    index: int
    y: float
    is_central: bool


@dataclass(frozen=True)
class FootAssembly:
    label: str
    geometry: ModuleGeometry
    materials: MaterialParams
    modules: tuple
    couplings: tuple
    site_types: dict
    # per-module coordinate -> reduced index, -1 when eliminated (rigid lock / root)
    coord_index: np.ndarray
    coord_names: tuple
    mass_points: np.ndarray     # (n, 3) foot-frame positions at rest
    mass_values: np.ndarray     # (n,)
    # solver-facing descriptions of the soft module (None for the rigid foot)
    mass_bodies: np.ndarray | None = None
    mass_modules: np.ndarray | None = None
    root_frame: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def is_rigid(self) -> bool:
        return self.label == "RIGID"

    @property
    def n_modules(self) -> int:
        return len(self.modules)

    @property
    def internal_dof(self) -> int:
        return int(self.coord_index.max() + 1) if self.coord_index.size and self.coord_index.max() >= 0 else 0

    @property
    def total_mass(self) -> float:
        return float(self.mass_values.sum())

    @property
    def com_position(self) -> np.ndarray:
        return self.mass_values @ self.mass_points / self.mass_values.sum()

    @property
    def attachment_point(self) -> np.ndarray:
        """Proximal end of the central rear arch (end effector mount), foot frame."""
        return np.array([0.0, 0.0, self.geometry.root_height])

    @property
    def band_k_rot(self) -> float:
        """Rotational stiffness of one band pair about its sole joint (N*mm/rad)."""
        return self.materials.band_k * self.geometry.band_offset ** 2

    def coupling(self, site: str) -> CouplingSpec:
        return next(c for c in self.couplings if c.site == site)


def module_coord_names(g: ModuleGeometry) -> tuple[str, ...]:
    n = g.sole_body_count
    return ("rear_arch", "frontal_arch", "heel_joint",
            *[f"sole_{k}" for k in range(1, n)], "mtp", "ip1", "ip2")


def _site_types(label: str) -> dict[str, ConnectionType]:
    if label not in LABELS:
        raise ValueError(f"unknown foot label {label!r}; expected one of {LABELS}")
    if label == "RIGID":
        return {s: R for s in SITES}
    return {s: ConnectionType.from_letter(c) for s, c in zip(SITES, label)}


def _coordinate_map(label: str, g: ModuleGeometry, n_modules: int, central: int) -> np.ndarray:
    names = module_coord_names(g)
    idx = -np.ones((n_modules, len(names)), dtype=int)
    if label == "RIGID":
        return idx
    types = _site_types(label)
    counter = 0

    def new():
        nonlocal counter
        counter += 1
        return counter - 1

    # column order is per-coordinate so that shared (rigid) coordinates sit together
    for c, name in enumerate(names):
        site = {"rear_arch": "RearArch", "frontal_arch": "FrontalArch", "heel_joint": "Heel"}.get(name)
        if site is not None and types[site] is R:
            if name == "rear_arch":
                continue  # all rear arches locked to the root
            shared = new()
            idx[:, c] = shared
            continue
        for m in range(n_modules):
            if name == "rear_arch" and m == central:
                continue  # the central rear arch is the root body
            idx[m, c] = new()
    return idx


def build_foot(label: str, geometry: ModuleGeometry | None = None,
               materials: MaterialParams | None = None, n_modules: int = N_MODULES,
               mass: float | None = None) -> FootAssembly:
    geometry = geometry or ModuleGeometry()
    materials = materials or materials_for("soft")
    if label == "MODULE":
        n_modules, label_types = 1, {s: F for s in SITES}
    else:
        label_types = _site_types(label)
    if n_modules < 1 or n_modules % 2 == 0:
        raise ValueError("odd number of modules expected (central module carries the root)")
    central = n_modules // 2
    w = geometry.module_width
    modules = tuple(ModuleDescription(i, (i - central) * w, i == central) for i in range(n_modules))
    pairs = tuple((i, i + 1) for i in range(n_modules - 1))
    couplings = tuple(CouplingSpec(s, label_types[s], () if label_types[s] is F else pairs) for s in SITES)
    if label == "MODULE":
        idx = _coordinate_map("KKF", geometry, 1, 0)
    else:
        idx = _coordinate_map(label, geometry, n_modules, central)

    if label == "RIGID":
        pts, vals = _rigid_mass(geometry, n_modules)
        mass = RIGID_MASS if mass is None else mass
        return FootAssembly(label, geometry, materials, modules, couplings, label_types, idx,
                            module_coord_names(geometry), pts, vals * mass / vals.sum())

    mass = SOFT_MASS if mass is None else mass
    parts = _module_parts(geometry)
    lay = module_layout(geometry)
    pts, vals, bodies, mods = [], [], [], []
    for md in modules:
        for b, mid, length in parts:
            pts.append([mid[0], md.y, mid[1]]); vals.append(length); bodies.append(b); mods.append(md.index)
    # rear arch extension up to the user attachment, central module only
    ext = geometry.root_height - lay.ankle[1]
    pts.append([0.0, 0.0, lay.ankle[1] + ext / 2]); vals.append(ext); bodies.append(REAR); mods.append(central)
    vals = np.array(vals)
    return FootAssembly(label, geometry, materials, modules, couplings, label_types, idx,
                        module_coord_names(geometry), np.array(pts), vals * mass / vals.sum(),
                        np.array(bodies), np.array(mods))


def _rigid_mass(g: ModuleGeometry, n_modules: int):
    """One plate (heel, sole, forefoot), three frontal arches and the central rear arch."""
    lay = module_layout(g)
    central = n_modules // 2
    pts, vals = [], []
    plate_len = lay.toe_tip - lay.heel_back
    ys = [(i - central) * g.module_width for i in range(n_modules)]
    for y in ys:
        pts.append([0.5 * (lay.heel_back + lay.toe_tip), y, g.sole_thickness / 2]); vals.append(plate_len)
    fa = 0.5 * (lay.ankle + lay.mtp)
    la = float(np.linalg.norm(lay.mtp - lay.ankle))
    for y in ys[central - 1:central + 2]:
        pts.append([fa[0], y, fa[1]]); vals.append(la * n_modules / 3)
    ra = 0.5 * (lay.ankle + lay.heel_joint)
    pts.append([ra[0], 0.0, ra[1]]); vals.append(g.rear_arch_length * n_modules)
    ext = g.root_height - lay.ankle[1]
    pts.append([0.0, 0.0, lay.ankle[1] + ext / 2]); vals.append(ext)
    return np.array(pts), np.array(vals, dtype=float)


def rigid_contact_samples(g: ModuleGeometry, n_modules: int = N_MODULES) -> np.ndarray:
    """Bottom-face grid of the rigid plate, corners included, foot frame xyz."""
    lay = module_layout(g)
    half_w = n_modules * g.module_width / 2
    xs = lay.heel_back + _spaced(lay.toe_tip - lay.heel_back, g.sample_spacing) * (lay.toe_tip - lay.heel_back)
    ys = -half_w + _spaced(2 * half_w, g.module_width / (g.sample_rows - 1)) * 2 * half_w
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1)


def compute_tendon_pretension(user_mass: float, safety: float = 1.0) -> float:
    """Per-slip plantar tension (N) for a user of ``user_mass`` kg.

    The share is 1.5 body weights spread over five slips; ``safety`` scales it
    (1 reproduces the ~294 N per slip of a 100 kg user).
    """
    if user_mass <= 0:
        raise ValueError("user mass must be positive")
    if safety < 1:
        raise ValueError("safety coefficient must be >= 1")
    return 1.5 * user_mass * G / N_MODULES * safety


@dataclass(frozen=True)
class Rectangle:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    @property
    def width(self) -> float:
        return self.y_max - self.y_min

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    def contains(self, x, y, strict: bool = False):
        x = np.asarray(x); y = np.asarray(y)
        if strict:
            return (x > self.x_min) & (x < self.x_max) & (y > self.y_min) & (y < self.y_max)
        return (x >= self.x_min) & (x <= self.x_max) & (y >= self.y_min) & (y <= self.y_max)


def unloaded_footprint(foot: FootAssembly) -> Rectangle:
    """Ground projection of the unloaded foot, origin at the ankle projection."""
    lay = module_layout(foot.geometry)
    half = foot.n_modules * foot.geometry.module_width / 2
    return Rectangle(lay.heel_back, lay.toe_tip, -half, half)


def mass_properties(foot: FootAssembly) -> dict:
    return {"mass": foot.total_mass, "com": foot.com_position}


def describe(foot: FootAssembly) -> dict:
    fp = unloaded_footprint(foot)
    return {
        "label": foot.label,
        "internal_dof": foot.internal_dof,
        "total_dof": foot.internal_dof + 6,
        "mass_kg": round(foot.total_mass, 6),
        "com_mm": [round(float(v), 3) for v in foot.com_position],
        "footprint_mm": {"x": [round(fp.x_min, 3), round(fp.x_max, 3)], "y": [fp.y_min, fp.y_max]},
        "couplings": {c.site: {"type": c.type.value, "pairs": [list(p) for p in c.pairs]} for c in foot.couplings},
    }


def with_overrides(geometry: ModuleGeometry, **kw) -> ModuleGeometry:
    return replace(geometry, **kw)
