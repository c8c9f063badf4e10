"""Quasi-static equilibrium of a foot on a terrain.

Equilibria are local minima of the total potential energy over the reduced
coordinates ``q = [t (3), euler xyz (3), internal...]``. Contacts, loop
closure and the friction surrogate are penalty terms, the tendon is a
tension-only spring. Energy, gradient and Hessian come from JAX (float64);
the minimizer is a damped Newton method with step caps and a backtracking
line search.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.linalg
from scipy.spatial import ConvexHull
from scipy.spatial.transform import Rotation

import jax

jax.config.update("jax_enable_x64", True)
import jax.numpy as jnp  # noqa: E402

from . import assembly as asm  # noqa: E402
from .assembly import FootAssembly, G, module_layout  # noqa: E402
from .terrain import Terrain, heights  # noqa: E402

MAX_OBSTACLES = 5
N_ROOT = 6


@dataclass(frozen=True)
class SolverSettings:
    contact_k: float = 300.0        # N/mm
    obstacle_fillet: float = 2.0    # mm, rounding of the obstacle top edge
    closure_k: float = 2000.0       # N/mm
    anchor_k: float = 2.0           # N/mm, horizontal friction surrogate at the foot origin
    anchor_yaw_k: float = 1.0e4     # N*mm/rad
    grad_tol: float = 1e-3          # 2-norm of the reduced gradient
    closure_tol: float = 0.1        # mm
    penetration_tol: float = 0.1    # mm, deepest contact allowed in a converged result
    max_iter: int = 5000
    safety_box: float = 500.0       # mm, beyond this the run is declared diverged
    max_step_trans: float = 10.0    # mm per Newton step, root translation
    max_step_rot: float = 0.1       # rad per Newton step, every angle
    eig_tol: float = 1e-8           # relative; below this a converged point is a saddle
    displacement_limit: float = 100.0
    rotation_limit_deg: float = 45.0


DEFAULT_SETTINGS = SolverSettings()


# --- small rotation helpers -------------------------------------------------

def _rot2(a):
    c, s = jnp.cos(a), jnp.sin(a)
    return jnp.stack([jnp.stack([c, -s], -1), jnp.stack([s, c], -1)], -2)


def _apply2(a, v):
    c, s = jnp.cos(a), jnp.sin(a)
    return jnp.stack([c * v[..., 0] - s * v[..., 1], s * v[..., 0] + c * v[..., 1]], -1)


def euler_matrix(e, xp=np):
    """R = Rz(e2) Ry(e1) Rx(e0)."""
    cx, sx = xp.cos(e[0]), xp.sin(e[0])
    cy, sy = xp.cos(e[1]), xp.sin(e[1])
    cz, sz = xp.cos(e[2]), xp.sin(e[2])
    return xp.array([
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ]) if xp is np else jnp.stack([
        jnp.stack([cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx]),
        jnp.stack([sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx]),
        jnp.stack([-sy, cy * sx, cy * cx]),
    ])


def euler_rate_matrix(e) -> np.ndarray:
    """Columns map (x, y, z) Euler-angle rates to world angular velocity."""
    cz, sz = np.cos(e[2]), np.sin(e[2])
    cy, sy = np.cos(e[1]), np.sin(e[1])
    return np.array([[cz * cy, -sz, 0.0], [sz * cy, cz, 0.0], [-sy, 0.0, 1.0]])


# --- scene -------------------------------------------------------------------

def make_scene(terrain: Terrain | None, load_force: float = 0.0, load_point=(0.0, 0.0, 0.0),
               anchor=(0.0, 0.0, 0.0), fillet: float = 2.0) -> dict:
    """Numeric description of everything outside the foot.

    ``terrain=None`` removes every support (free fall). ``load_force`` is the
    downward arm force (N) applied at ``load_point`` (foot frame).
    """
    obst = np.zeros((MAX_OBSTACLES, 4))
    active = np.zeros(MAX_OBSTACLES)
    if terrain is not None:
        if len(terrain.obstacles) > MAX_OBSTACLES:
            raise ValueError(f"at most {MAX_OBSTACLES} obstacles supported")
        for i, o in enumerate(terrain.obstacles):
            obst[i] = (o.x, o.y, o.radius, o.height)
            active[i] = 1.0
    return {
        "obstacles": jnp.asarray(obst),
        "active": jnp.asarray(active),
        "ground": jnp.asarray(0.0 if terrain is None else 1.0),
        "load_force": jnp.asarray(float(load_force)),
        "load_point": jnp.asarray(np.asarray(load_point, dtype=float)),
        "anchor": jnp.asarray(np.asarray(anchor, dtype=float)),
        "fillet": jnp.asarray(float(fillet)),
    }


def _penetrations(p, scene):
    """(N, 1+MAX_OBSTACLES) penetration depths of world points p.

    Obstacles are cylinders whose top edge is rounded with radius
    ``fillet``: the signed distance to a shrunken core cylinder minus the
    fillet. Normals then vary continuously for any penetration shallower than
    the fillet, instead of jumping between the top and the side at the rim.
    """
    pen_ground = jax.nn.relu(-p[:, 2]) * scene["ground"]
    o = scene["obstacles"]
    rho = scene["fillet"]
    dx = p[:, None, 0] - o[None, :, 0]
    dy = p[:, None, 1] - o[None, :, 1]
    r = jnp.sqrt(dx * dx + dy * dy + 1e-12)
    dr = r - (o[None, :, 2] - rho)
    dz = p[:, None, 2] - (o[None, :, 3] - rho)
    outside = jnp.sqrt(jnp.maximum(jax.nn.relu(dr) ** 2 + jax.nn.relu(dz) ** 2, 1e-18))
    sdf_core = outside + jnp.minimum(jnp.maximum(dr, dz), 0.0)
    pen_obst = jax.nn.relu(rho - sdf_core) * scene["active"][None, :]
    return jnp.concatenate([pen_ground[:, None], pen_obst], axis=1)


# --- model -------------------------------------------------------------------

class FootModel:
    """Energy model of one assembled foot, compiled once per foot."""

    def __init__(self, foot: FootAssembly, settings: SolverSettings = DEFAULT_SETTINGS):
        self.foot = foot
        self.settings = settings
        self.n_internal = foot.internal_dof
        self.n = N_ROOT + self.n_internal
        self.mass_total = foot.total_mass
        self.weight = self.mass_total * G
        g = foot.geometry
        self.attach = foot.attachment_point
        if foot.is_rigid:
            self._build_rigid(foot)
        else:
            self._build_soft(foot)
        total = lambda q, s: sum(self._energy_terms(q, s).values())  # noqa: E731
        self._terms = jax.jit(self._energy_terms)
        self.energy = jax.jit(total)
        self.gradient = jax.jit(jax.grad(total))
        self._full_hessian = jax.jit(jax.hessian(total))

        def eg_active(q, s):
            E, g = jax.value_and_grad(total)(q, s)
            pen = _penetrations(self._contact_world(q), s)
            return E, g, jnp.max(pen, axis=1)

        self._eg_active = jax.jit(eg_active)
        no_contact = lambda q, s: sum(v for k, v in self._energy_terms(q, s).items() if k != "contact")  # noqa: E731
        self._hess_smooth = jax.jit(jax.hessian(no_contact))
        self._hess_contact = jax.jit(jax.hessian(self._contact_subset_energy))
        self._contact_points = jax.jit(self._contact_world)
        self._contact_forces = jax.jit(self._contact_force_fn)
        self._com = jax.jit(self._com_fn)
        if not foot.is_rigid:
            self._closure = jax.jit(lambda q: self._module_state(q)[2])
            self._tendon_len = jax.jit(self._tendon_length)
        self._rest_z = float(g.root_height)

    # ---- construction ----
    def _build_rigid(self, foot):
        self.contact_local = jnp.asarray(asm.rigid_contact_samples(foot.geometry, foot.n_modules))
        self.mass_local = jnp.asarray(foot.mass_points)
        self.mass_vals = jnp.asarray(foot.mass_values)

    def _build_soft(self, foot):
        g = foot.geometry
        lay = module_layout(g)
        n = g.sole_body_count
        self.nm = foot.n_modules
        self.n_sole = n
        self.idx = np.where(foot.coord_index >= 0, foot.coord_index, self.n_internal)
        self.module_y = np.array([m.y for m in foot.modules])
        self.A = lay.ankle
        self.H0 = lay.heel_joint
        self.pins_rest = lay.pins
        self.toe_rest = lay.toe_pins
        self.chords = np.diff(lay.pins, axis=0)          # (n, 2)
        self.toe_chords = np.diff(lay.toe_pins, axis=0)  # (3, 2)
        nb = lay.n_bodies
        pivot_rest = np.zeros((nb, 2))
        pivot_rest[asm.REAR] = lay.ankle
        pivot_rest[asm.FRONT] = lay.ankle
        pivot_rest[asm.HEEL] = lay.heel_joint
        for k in range(2, n + 1):
            pivot_rest[lay.sole_body(k)] = lay.pins[k - 1]
        for j in range(1, 4):
            pivot_rest[lay.toe_body(j)] = lay.toe_pins[j - 1]
        self.pivot_rest = pivot_rest
        # contact samples, flattened over modules
        b, p, y = asm.contact_samples(g)
        nm = self.nm
        self.c_mod = np.repeat(np.arange(nm), len(b))
        self.c_body = np.tile(b, nm)
        self.c_rest = np.tile(p, (nm, 1))
        self.c_y = np.concatenate([self.module_y[m] + y for m in range(nm)])
        # mass points
        self.m_mod = foot.mass_modules
        self.m_body = foot.mass_bodies
        self.m_rest = foot.mass_points[:, [0, 2]]
        self.m_y = foot.mass_points[:, 1]
        self.mass_vals = jnp.asarray(foot.mass_values)
        # tendon, coil spring, couplings
        self.t_body, self.t_rest = asm.tendon_route(g)
        mat = foot.materials
        L_rest = float(np.sum(np.linalg.norm(np.diff(self.t_rest, axis=0), axis=1)))
        self.tendon_rest = L_rest
        self.tendon_engage = L_rest - mat.tendon_pretension / mat.tendon_stiffness
        self.coil_rest_pts = asm.coil_anchors(g)
        self.coil_rest = float(np.linalg.norm(self.coil_rest_pts[0] - self.coil_rest_pts[1]))
        refs = asm.coupling_refs(g)
        self.sheets = []
        for site in asm.SITES:
            if foot.site_types[site] is asm.K and foot.n_modules > 1:
                body, pt = refs[site]
                self.sheets.append((site, body, pt))

    # ---- kinematics ----
    def _module_state(self, q):
        """Per-module body pivots, angles and the loop-closure residual."""
        qi = jnp.concatenate([q[N_ROOT:], jnp.zeros(1)])
        C = qi[self.idx]                      # (nm, nc)
        n = self.n_sole
        a_r, a_f, beta = C[:, 0], C[:, 1], C[:, 2]
        theta = C[:, 3:3 + n - 1]
        gam = C[:, 3 + n - 1:]
        A = jnp.asarray(self.A)
        H = A[None, :] + _apply2(a_r, jnp.broadcast_to(jnp.asarray(self.H0 - self.A), (len(a_r), 2)))
        heel_ang = a_r + beta
        sole_ang = heel_ang[:, None] + jnp.cumsum(theta, axis=1)       # bodies 2..n
        p0 = H + _apply2(heel_ang, jnp.broadcast_to(jnp.asarray(self.pins_rest[0] - self.H0), H.shape))
        p1 = H + _apply2(heel_ang, jnp.broadcast_to(jnp.asarray(self.pins_rest[1] - self.H0), H.shape))
        steps = _apply2(sole_ang, jnp.asarray(self.chords[1:])[None, :, :])  # (nm, n-1, 2)
        pk = p1[:, None, :] + jnp.cumsum(steps, axis=1)
        pins = jnp.concatenate([p0[:, None], p1[:, None], pk], axis=1)   # (nm, n+1, 2)
        M = A[None, :] + _apply2(a_f, jnp.broadcast_to(jnp.asarray(self.pins_rest[-1] - self.A), H.shape))
        toe_ang = a_f[:, None] + jnp.cumsum(gam, axis=1)
        tsteps = _apply2(toe_ang, jnp.asarray(self.toe_chords)[None, :, :])
        toes = M[:, None, :] + jnp.concatenate([jnp.zeros_like(tsteps[:, :1]), jnp.cumsum(tsteps, axis=1)], axis=1)
        nm = C.shape[0]
        piv = [jnp.broadcast_to(A, (nm, 2)), jnp.broadcast_to(A, (nm, 2)), H]
        ang = [a_r, a_f, heel_ang]
        for k in range(2, n + 1):
            piv.append(pins[:, k - 1]); ang.append(sole_ang[:, k - 2])
        for j in range(3):
            piv.append(toes[:, j]); ang.append(toe_ang[:, j])
        pivots = jnp.stack(piv, axis=1)   # (nm, nb, 2)
        angles = jnp.stack(ang, axis=1)   # (nm, nb)
        residual = pins[:, -1] - M
        return pivots, angles, residual, C

    def _place(self, pivots, angles, mods, bodies, rest):
        pv = pivots[mods, bodies]
        an = angles[mods, bodies]
        return pv + _apply2(an, jnp.asarray(rest - self.pivot_rest[bodies]))

    @staticmethod
    def _to_world(q, xyz):
        R = euler_matrix(q[3:6], xp=jnp)
        return q[:3][None, :] + xyz @ R.T

    def _contact_local(self, q):
        if self.foot.is_rigid:
            return self.contact_local
        pivots, angles, _, _ = self._module_state(q)
        xz = self._place(pivots, angles, self.c_mod, self.c_body, self.c_rest)
        return jnp.stack([xz[:, 0], jnp.asarray(self.c_y), xz[:, 1]], axis=1)

    def _contact_world(self, q):
        return self._to_world(q, self._contact_local(q))

    def _contact_subset_energy(self, q, scene, idx, w):
        if self.foot.is_rigid:
            local = self.contact_local[idx]
        else:
            pivots, angles, _, _ = self._module_state(q)
            mods = jnp.asarray(self.c_mod)[idx]
            bodies = jnp.asarray(self.c_body)[idx]
            rest = jnp.asarray(self.c_rest)[idx] - jnp.asarray(self.pivot_rest)[bodies]
            xz = pivots[mods, bodies] + _apply2(angles[mods, bodies], rest)
            local = jnp.stack([xz[:, 0], jnp.asarray(self.c_y)[idx], xz[:, 1]], axis=1)
        pen = _penetrations(self._to_world(q, local), scene)
        return 0.5 * self.settings.contact_k * jnp.sum(w[:, None] * pen * pen)

    def _contact_force_fn(self, q, scene):
        p = self._contact_world(q)

        def e(pp):
            pen = _penetrations(pp, scene)
            return 0.5 * self.settings.contact_k * jnp.sum(pen * pen)

        return p, -jax.grad(e)(p), _penetrations(p, scene)

    # ---- energy ----
    def _energy_terms(self, q, scene) -> dict:
        s = self.settings
        R = euler_matrix(q[3:6], xp=jnp)
        t = q[:3]
        terms = {}
        if self.foot.is_rigid:
            masses = self.mass_local
            contacts = self.contact_local
        else:
            pivots, angles, residual, C = self._module_state(q)
            xz = self._place(pivots, angles, self.m_mod, self.m_body, self.m_rest)
            masses = jnp.stack([xz[:, 0], jnp.asarray(self.m_y), xz[:, 1]], axis=1)
            cxz = self._place(pivots, angles, self.c_mod, self.c_body, self.c_rest)
            contacts = jnp.stack([cxz[:, 0], jnp.asarray(self.c_y), cxz[:, 1]], axis=1)
        mw = t[None, :] + masses @ R.T
        terms["gravity"] = G * jnp.dot(self.mass_vals, mw[:, 2])
        lp = t + R @ scene["load_point"]
        terms["load"] = scene["load_force"] * lp[2]
        pw = t[None, :] + contacts @ R.T
        pen = _penetrations(pw, scene)
        terms["contact"] = 0.5 * s.contact_k * jnp.sum(pen * pen)
        a = scene["anchor"]
        terms["anchor"] = (0.5 * s.anchor_k * ((t[0] - a[0]) ** 2 + (t[1] - a[1]) ** 2)
                           + 0.5 * s.anchor_yaw_k * (q[5] - a[2]) ** 2) * scene["ground"]
        if self.foot.is_rigid:
            return terms
        mat = self.foot.materials
        n = self.n_sole
        terms["closure"] = 0.5 * s.closure_k * jnp.sum(residual * residual)
        nm = self.nm
        # coil spring between rear arch and heel body
        ca = self._place(pivots, angles, np.arange(nm), np.full(nm, asm.REAR),
                         np.broadcast_to(self.coil_rest_pts[0], (nm, 2)))
        ch = self._place(pivots, angles, np.arange(nm), np.full(nm, asm.HEEL),
                         np.broadcast_to(self.coil_rest_pts[1], (nm, 2)))
        ext = jnp.sqrt(jnp.sum((ca - ch) ** 2, axis=1)) - self.coil_rest
        terms["coil"] = 0.5 * mat.coil_spring_k * jnp.sum(ext * ext)
        theta = C[:, 3:3 + n - 1]
        gam = C[:, 3 + n - 1:]
        terms["bands"] = 0.5 * self.foot.band_k_rot * jnp.sum(theta * theta)
        over = jax.nn.relu(jnp.abs(C[:, 2]) - self.foot.geometry.heel_stop_angle)
        terms["stops"] = 0.5 * mat.stop_k_rot * jnp.sum(over * over)
        terms["toes"] = 0.5 * (mat.mtp_k_rot * jnp.sum(gam[:, 0] ** 2)
                               + mat.ip_k_rot * jnp.sum(gam[:, 1:] ** 2))
        # tension-only tendon
        nt = len(self.t_body)
        tp = self._place(pivots, angles, np.repeat(np.arange(nm), nt), np.tile(self.t_body, nm),
                         np.tile(self.t_rest, (nm, 1))).reshape(nm, nt, 2)
        L = jnp.sum(jnp.sqrt(jnp.sum(jnp.diff(tp, axis=1) ** 2, axis=2)), axis=1)
        stretch = jax.nn.relu(L - self.tendon_engage)
        terms["tendon"] = 0.5 * mat.tendon_stiffness * jnp.sum(stretch * stretch)
        sheet = 0.0
        for _, body, pt in self.sheets:
            xz = self._place(pivots, angles, np.arange(nm), np.full(nm, body), np.broadcast_to(pt, (nm, 2)))
            dxz = jnp.diff(xz, axis=0)
            dan = jnp.diff(angles[:, body])
            sheet = sheet + 0.5 * mat.sheet_k_trans * jnp.sum(dxz * dxz) + 0.5 * mat.sheet_k_rot * jnp.sum(dan * dan)
        terms["sheets"] = jnp.asarray(sheet, dtype=jnp.float64)
        return terms

    # ---- numpy-facing helpers ----
    def energy_breakdown(self, q, scene) -> dict:
        return {k: float(v) for k, v in self._terms(jnp.asarray(q, dtype=float), scene).items()}

    def egh(self, q, scene):
        """Energy, gradient and Hessian.

        Inactive samples add nothing to the contact Hessian, so it is
        assembled over the penetrating samples only, padded to a power of two
        to bound the number of compiled shapes.
        """
        q = jnp.asarray(q, dtype=float)
        E, g, pen = self._eg_active(q, scene)
        active = np.flatnonzero(np.asarray(pen) > 0.0)
        size = max(16, 1 << int(math.ceil(math.log2(max(len(active), 1)))))
        idx = np.zeros(size, dtype=int)
        w = np.zeros(size)
        idx[:len(active)] = active
        w[:len(active)] = 1.0
        H = self._hess_smooth(q, scene) + self._hess_contact(q, scene, jnp.asarray(idx), jnp.asarray(w))
        return float(E), np.asarray(g), np.asarray(H)

    def full_hessian(self, q, scene) -> np.ndarray:
        return np.asarray(self._full_hessian(jnp.asarray(q, dtype=float), scene))

    def contact_points(self, q) -> np.ndarray:
        return np.asarray(self._contact_points(jnp.asarray(q, dtype=float)))

    def contact_state(self, q, scene):
        p, f, pen = self._contact_forces(jnp.asarray(q, dtype=float), scene)
        return np.asarray(p), np.asarray(f), np.asarray(pen)

    def closure_residual(self, q) -> np.ndarray:
        if self.foot.is_rigid:
            return np.zeros((0, 2))
        return np.asarray(self._closure(jnp.asarray(q, dtype=float)))

    def _tendon_length(self, q):
        pivots, angles, _, _ = self._module_state(q)
        nm, nt = self.nm, len(self.t_body)
        tp = self._place(pivots, angles, np.repeat(np.arange(nm), nt), np.tile(self.t_body, nm),
                         np.tile(self.t_rest, (nm, 1))).reshape(nm, nt, 2)
        return jnp.sum(jnp.sqrt(jnp.sum(jnp.diff(tp, axis=1) ** 2, axis=2)), axis=1)

    def tendon_length(self, q) -> np.ndarray:
        if self.foot.is_rigid:
            return np.zeros(0)
        return np.asarray(self._tendon_len(jnp.asarray(q, dtype=float)))

    def tendon_tension(self, q) -> np.ndarray:
        L = self.tendon_length(q)
        if L.size == 0:
            return L
        return self.foot.materials.tendon_stiffness * np.maximum(L - self.tendon_engage, 0.0)

    def _com_fn(self, q):
        R = euler_matrix(q[3:6], xp=jnp)
        if self.foot.is_rigid:
            masses = self.mass_local
        else:
            pivots, angles, _, _ = self._module_state(q)
            xz = self._place(pivots, angles, self.m_mod, self.m_body, self.m_rest)
            masses = jnp.stack([xz[:, 0], jnp.asarray(self.m_y), xz[:, 1]], axis=1)
        mw = q[:3][None, :] + masses @ R.T
        return self.mass_vals @ mw / jnp.sum(self.mass_vals)

    def world_com(self, q) -> np.ndarray:
        return np.asarray(self._com(jnp.asarray(q, dtype=float)))

    def rest_q(self) -> np.ndarray:
        return np.zeros(self.n)


_MODEL_CACHE: dict = {}


def get_model(foot: FootAssembly, settings: SolverSettings = DEFAULT_SETTINGS) -> FootModel:
    key = (foot.label, foot.geometry, foot.materials, foot.n_modules, round(foot.total_mass, 12), settings)
    if key not in _MODEL_CACHE:
        _MODEL_CACHE[key] = FootModel(foot, settings)
    return _MODEL_CACHE[key]


# --- minimizer ---------------------------------------------------------------

@dataclass
class MinimizeResult:
    q: np.ndarray
    energy: float
    grad_norm: float
    iterations: int
    status: str          # converged | max_iter | stalled | diverged | threshold
    min_eig: float = float("nan")
    message: str = ""


def _cap_step(dq, s: SolverSettings):
    lim = np.full(len(dq), s.max_step_rot)
    lim[:3] = s.max_step_trans
    ratio = np.max(np.abs(dq) / lim)
    return dq / ratio if ratio > 1 else dq


def minimize_energy(model: FootModel, q0, scene, settings: SolverSettings | None = None,
                    monitor: Callable | None = None) -> MinimizeResult:
    """Damped Newton descent to a local minimum with a positive definite Hessian.

    ``monitor(q)`` is called after each accepted step; a non-None return value
    stops the descent with status ``threshold`` and that message.
    """
    s = settings or model.settings
    q = np.array(q0, dtype=float)
    E, g, H = model.egh(q, scene)
    lam = 1e-10
    min_eig = float("nan")
    for it in range(1, s.max_iter + 1):
        if not np.isfinite(E) or np.linalg.norm(q[:3]) > s.safety_box:
            return MinimizeResult(q, E, float(np.linalg.norm(g)), it, "diverged", message="left the safety box")
        gn = float(np.linalg.norm(g))
        scale = max(float(np.max(np.abs(np.diag(H)))), 1.0)
        if gn <= s.grad_tol:
            w, V = np.linalg.eigh(H)
            min_eig = float(w[0])
            if w[0] >= -s.eig_tol * scale:
                return MinimizeResult(q, E, gn, it, "converged", min_eig)
            # saddle: leave along the negative curvature direction
            v = V[:, 0] * (1.0 if g @ V[:, 0] <= 0 else -1.0)
            dq = _cap_step(v * 1e3, s)
            alpha = 1.0
            while alpha > 1e-6:
                En = float(model.energy(jnp.asarray(q + alpha * dq), scene))
                if En < E:
                    break
                alpha *= 0.5
            else:
                return MinimizeResult(q, E, gn, it, "converged", min_eig, "flat negative curvature")
        else:
            diag = np.maximum(np.abs(np.diag(H)), 1e-6 * scale)
            while True:
                try:
                    cf = scipy.linalg.cho_factor(H + lam * np.diag(diag) + 1e-12 * scale * np.eye(len(q)))
                    break
                except np.linalg.LinAlgError:
                    lam = max(lam * 10.0, 1e-8)
            dq = _cap_step(-scipy.linalg.cho_solve(cf, g), s)
            slope = float(g @ dq)
            alpha = 1.0
            accepted = False
            while alpha > 1e-10:
                En = float(model.energy(jnp.asarray(q + alpha * dq), scene))
                if En <= E + 1e-4 * alpha * slope:
                    accepted = True
                    break
                if alpha == 1.0 and abs(En - E) <= 1e-11 * max(1.0, abs(E)):
                    # round-off regime: accept when the gradient improves
                    _, gt, _ = model.egh(q + dq, scene)
                    if np.linalg.norm(gt) < gn:
                        accepted = True
                        break
                alpha *= 0.5
            if not accepted:
                lam = max(lam * 100.0, 1e-6)
                if lam > 1e12:
                    return MinimizeResult(q, E, gn, it, "stalled", message="line search failed")
                continue
            lam = max(lam * 0.1, 1e-12) if alpha == 1.0 else min(lam * 10.0, 1e6)
        q = q + alpha * dq
        E, g, H = model.egh(q, scene)
        if monitor is not None:
            msg = monitor(q)
            if msg is not None:
                return MinimizeResult(q, E, float(np.linalg.norm(g)), it, "threshold", message=msg)
    return MinimizeResult(q, E, float(np.linalg.norm(g)), s.max_iter, "max_iter")


# --- equilibrium -------------------------------------------------------------

@dataclass
class EquilibriumResult:
    q: np.ndarray
    energy: float
    grad_norm: float
    converged: bool
    status: str
    iterations: int
    closure_residual: float
    max_penetration: float
    contact_points: np.ndarray      # active contacts, world xyz
    contact_forces: np.ndarray      # matching forces on the foot
    reaction_force: np.ndarray      # total force of the plate on the foot
    reaction_moment: np.ndarray     # about the world origin
    anchor_force: np.ndarray        # friction surrogate, horizontal
    anchor_moment: np.ndarray       # world moment of the yaw surrogate, N*mm
    friction_ok: bool
    tendon_tension: np.ndarray
    min_eig: float = float("nan")
    message: str = ""

    @property
    def normal_force(self) -> float:
        return float(self.reaction_force[2])


def initial_pose(model: FootModel, terrain: Terrain | None) -> np.ndarray:
    """Rest shape lifted so that its lowest sample just touches the terrain."""
    q = model.rest_q()
    if terrain is None:
        return q
    p = model.contact_points(q)
    lift = float(np.max(heights(terrain, p[:, :2]) - p[:, 2]))
    q[2] = max(lift, 0.0)
    return q


def _finish(model, res: MinimizeResult, scene, terrain) -> EquilibriumResult:
    s = model.settings
    q = res.q
    p, f, pen = model.contact_state(q, scene)
    active = np.any(pen > 0, axis=1)
    F = f[active].sum(axis=0) if active.any() else np.zeros(3)
    Mo = np.cross(p[active], f[active]).sum(axis=0) if active.any() else np.zeros(3)
    a = np.asarray(scene["anchor"])
    ground = float(scene["ground"])
    anchor_f = -ground * s.anchor_k * np.array([q[0] - a[0], q[1] - a[1]])
    # the yaw spring acts on an Euler angle: its generalized force (0, 0, tau)
    # is the world moment M with J^T M = (0, 0, tau)
    tau = -ground * s.anchor_yaw_k * float(q[5] - a[2])
    anchor_m = np.linalg.solve(euler_rate_matrix(q[3:6]).T, np.array([0.0, 0.0, tau]))
    mu = terrain.friction_mu if terrain is not None else 0.0
    friction_ok = bool(np.linalg.norm(anchor_f) <= mu * max(F[2], 0.0) + 1e-9)
    closure = model.closure_residual(q)
    closure_max = float(np.max(np.linalg.norm(closure, axis=1))) if closure.size else 0.0
    max_pen = float(pen.max()) if pen.size else 0.0
    converged = res.status == "converged" and closure_max <= s.closure_tol and max_pen <= s.penetration_tol
    return EquilibriumResult(
        q=q, energy=res.energy, grad_norm=res.grad_norm, converged=converged, status=res.status,
        iterations=res.iterations, closure_residual=closure_max,
        max_penetration=max_pen,
        contact_points=p[active], contact_forces=f[active], reaction_force=F, reaction_moment=Mo,
        anchor_force=anchor_f, anchor_moment=anchor_m, friction_ok=friction_ok, tendon_tension=model.tendon_tension(q),
        min_eig=res.min_eig, message=res.message)


def solve_equilibrium(foot: FootAssembly, terrain: Terrain | None, load_force: float = 0.0,
                      load_point=None, q0=None, settings: SolverSettings = DEFAULT_SETTINGS,
                      monitor: Callable | None = None, anchor=None) -> EquilibriumResult:
    """Local energy minimum of ``foot`` on ``terrain`` under a dead arm load.

    ``load_point`` is a foot-frame point (defaults to the attachment point).
    """
    model = get_model(foot, settings)
    if load_point is None:
        load_point = model.attach
    if q0 is None:
        q0 = initial_pose(model, terrain)
    if anchor is None:
        anchor = (q0[0], q0[1], q0[5])
    scene = make_scene(terrain, load_force, load_point, anchor, settings.obstacle_fillet)
    res = minimize_energy(model, q0, scene, settings, monitor)
    return _finish(model, res, scene, terrain)


# --- load ramp and instability -----------------------------------------------

DISPLACEMENT, ROTATION, DIVERGED = "Displacement", "Rotation", "Diverged"


@dataclass
class RampStep:
    step: int
    force: float              # total vertical load carried (arm + own weight), N
    displacement: float       # attachment point, mm from the undisturbed pose
    rotation_deg: np.ndarray  # rotation vector of the root relative to undisturbed, deg
    converged: bool
    iterations: int
    status: str
    energy: float
    max_penetration: float
    closure_residual: float
    n_contacts: int = 0
    tendon_max: float = 0.0


def _step(k, force, d, rv, res) -> RampStep:
    tt = np.asarray(res.tendon_tension)
    return RampStep(k, force, d, rv, res.converged, res.iterations, res.status, res.energy,
                    res.max_penetration, res.closure_residual, len(res.contact_points),
                    float(tt.max()) if tt.size else 0.0)


@dataclass
class RampTrace:
    steps: list = field(default_factory=list)
    reached_force: float = 0.0
    target_force: float = 0.0
    undisturbed_q: np.ndarray | None = None
    final_q: np.ndarray | None = None
    load_point_foot: np.ndarray | None = None
    settle: EquilibriumResult | None = None
    final: EquilibriumResult | None = None
    stopped: str | None = None   # None if the full load was reached
    states: list = field(default_factory=list, repr=False)   # EquilibriumResult per step

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["step", "force_N", "displacement_mm", "rot_x_deg", "rot_y_deg", "rot_z_deg",
                    "converged", "iterations", "status", "energy", "max_penetration_mm",
                    "closure_residual_mm", "n_contacts", "tendon_max_N"])
        for s in self.steps:
            w.writerow([s.step, f"{s.force:.6g}", f"{s.displacement:.6g}",
                        *[f"{v:.6g}" for v in s.rotation_deg], int(s.converged), s.iterations,
                        s.status, f"{s.energy:.9g}", f"{s.max_penetration:.6g}",
                        f"{s.closure_residual:.6g}", s.n_contacts, f"{s.tendon_max:.6g}"])
        return buf.getvalue()


def _pose_change(q, q_ref, attach):
    R = euler_matrix(q[3:6])
    R0 = euler_matrix(q_ref[3:6])
    d = np.linalg.norm((q[:3] + R @ attach) - (q_ref[:3] + R0 @ attach))
    rv = Rotation.from_matrix(R @ R0.T).as_rotvec()
    return float(d), np.degrees(rv)


def load_attachment_point(model: FootModel, q_u: np.ndarray, target_xy, arm_force: float) -> np.ndarray:
    """Foot-frame point (at attachment height) where the arm pushes so that
    arm force plus weight act along the vertical through ``target_xy``."""
    com = model.world_com(q_u)
    W = model.weight
    total = arm_force + W
    want = (total * np.asarray(target_xy, dtype=float) - W * com[:2]) / arm_force
    R = euler_matrix(q_u[3:6])
    h = model.attach[2]
    rhs = want - q_u[:2] - R[:2, 2] * h
    xy = np.linalg.solve(R[:2, :2], rhs)
    return np.array([xy[0], xy[1], h])


def default_target_force(foot: FootAssembly, load_mass: float = 2.0) -> float:
    """Total vertical load at the end of the ramp: 2 kg plus the foot itself."""
    return (load_mass + foot.total_mass) * G


def ramp_load(foot: FootAssembly, terrain: Terrain | None, point_xy, target_force: float | None = None,
              steps: int = 20, settings: SolverSettings = DEFAULT_SETTINGS) -> RampTrace:
    """Settle the foot, then raise the vertical load through ``point_xy`` in
    equal increments, warm-starting every solve from the previous pose.

    The ramp stops early when a displacement or rotation threshold is crossed
    or a solve fails.
    """
    model = get_model(foot, settings)
    W = model.weight
    target = default_target_force(foot) if target_force is None else float(target_force)
    if target <= W:
        raise ValueError("target force must exceed the foot weight")
    trace = RampTrace(target_force=target, reached_force=0.0)
    q0 = initial_pose(model, terrain)
    anchor = (q0[0], q0[1], q0[5])
    settle = settle_foot(foot, terrain, settings)
    trace.settle = settle
    rot0 = np.zeros(3)
    trace.steps.append(_step(0, W, 0.0, rot0, settle))
    trace.states.append(settle)
    if not settle.converged:
        trace.stopped = DIVERGED if settle.status in ("diverged", "threshold") else "settle_failed"
        trace.final_q = settle.q
        trace.final = settle
        return trace
    q_u = settle.q
    trace.undisturbed_q = q_u
    trace.reached_force = W
    arm = target - W
    a = load_attachment_point(model, q_u, point_xy, arm)
    trace.load_point_foot = a
    q = q_u
    s = settings

    def monitor(qc):
        d, rv = _pose_change(qc, q_u, model.attach)
        if d > s.safety_box:
            return DIVERGED
        if d >= s.displacement_limit:
            return DISPLACEMENT
        if np.max(np.abs(rv)) >= s.rotation_limit_deg:
            return ROTATION
        return None

    for k in range(1, steps + 1):
        f_arm = arm * k / steps
        res = solve_equilibrium(foot, terrain, f_arm, a, q, settings, monitor=monitor, anchor=anchor)
        d, rv = _pose_change(res.q, q_u, model.attach)
        trace.steps.append(_step(k, W + f_arm, d, rv, res))
        trace.states.append(res)
        trace.final = res
        trace.final_q = res.q
        if res.status == "threshold":
            trace.stopped = res.message
            return trace
        if res.status == "diverged":
            trace.stopped = DIVERGED
            return trace
        if not res.converged or not res.friction_ok:
            trace.stopped = DIVERGED
            return trace
        if d >= s.displacement_limit:
            trace.stopped = DISPLACEMENT
            return trace
        if np.max(np.abs(rv)) >= s.rotation_limit_deg:
            trace.stopped = ROTATION
            return trace
        trace.reached_force = W + f_arm
        q = res.q
    return trace


_SETTLE_CACHE: dict = {}


def settle_foot(foot: FootAssembly, terrain: Terrain | None,
                settings: SolverSettings = DEFAULT_SETTINGS) -> EquilibriumResult:
    """Undisturbed pose: equilibrium under the foot's own weight.

    The result depends only on (foot, terrain, settings), so it is memoized;
    a repeated solve would return the same bits.
    """
    model = get_model(foot, settings)
    key = (id(model), terrain)
    if key not in _SETTLE_CACHE:
        q0 = initial_pose(model, terrain)
        _SETTLE_CACHE[key] = solve_equilibrium(foot, terrain, 0.0, model.attach, q0, settings,
                                               anchor=(q0[0], q0[1], q0[5]),
                                               monitor=lambda q: _box_monitor(q, q0, model))
    return _SETTLE_CACHE[key]


def _box_monitor(q, q0, model):
    if np.linalg.norm(q[:3] - q0[:3]) > model.settings.safety_box:
        return DIVERGED
    return None


@dataclass(frozen=True)
class InstabilityVerdict:
    unstable: bool
    mode: str | None       # Displacement | Rotation | Diverged
    step: int | None
    force: float | None


def detect_instability(trace: RampTrace, settings: SolverSettings = DEFAULT_SETTINGS) -> InstabilityVerdict:
    """Classify a ramp trace: first step crossing a threshold, or failure."""
    for st in trace.steps:
        if st.displacement > settings.safety_box:
            return InstabilityVerdict(True, DIVERGED, st.step, st.force)
        if st.displacement >= settings.displacement_limit:
            return InstabilityVerdict(True, DISPLACEMENT, st.step, st.force)
        if np.max(np.abs(st.rotation_deg)) >= settings.rotation_limit_deg:
            return InstabilityVerdict(True, ROTATION, st.step, st.force)
        if not st.converged:
            mode = DIVERGED
            return InstabilityVerdict(True, mode, st.step, st.force)
    if trace.stopped is not None:
        last = trace.steps[-1] if trace.steps else None
        mode = trace.stopped if trace.stopped in (DISPLACEMENT, ROTATION) else DIVERGED
        return InstabilityVerdict(True, mode, last.step if last else None, last.force if last else None)
    return InstabilityVerdict(False, None, None, None)


# --- rigid-foot oracle ----------------------------------------------------------

def support_polygon(contact_xy: np.ndarray) -> np.ndarray:
    """Convex hull of contact points, counter-clockwise vertices (k, 2)."""
    pts = np.unique(np.round(np.asarray(contact_xy, dtype=float), 9), axis=0)
    if len(pts) < 3:
        return pts
    hull = ConvexHull(pts)
    return pts[hull.vertices]


def hull_check(poly: np.ndarray, point, tol: float = 1e-6) -> bool:
    """True if ``point`` lies inside or on the counter-clockwise polygon."""
    poly = np.asarray(poly, dtype=float)
    if len(poly) < 3:
        return False
    p = np.asarray(point, dtype=float)
    e = np.roll(poly, -1, axis=0) - poly
    r = p[None, :] - poly
    cross = e[:, 0] * r[:, 1] - e[:, 1] * r[:, 0]
    scale = np.linalg.norm(e, axis=1)
    return bool(np.all(cross / scale >= -tol))
