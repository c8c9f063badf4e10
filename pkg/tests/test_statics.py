import jax
import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from footlab import statics
from footlab.assembly import G, build_foot, module_coord_names, unloaded_footprint
from footlab.statics import (DISPLACEMENT, DIVERGED, ROTATION, RampStep, RampTrace, default_target_force,
                             detect_instability, get_model, hull_check, initial_pose, make_scene,
                             minimize_energy, ramp_load, solve_equilibrium, support_polygon)
from footlab.terrain import make_terrain

from physics import (balance_errors, complementarity_residual, fd_gradient_error,
                     feasible_configurations)

ELASTIC = ("closure", "coil", "bands", "stops", "toes", "tendon", "sheets")
FLAT = make_terrain("flat")


def _elastic(model):
    return jax.jit(jax.grad(lambda q, s: sum(v for k, v in model._energy_terms(q, s).items() if k in ELASTIC)))


def _centroid():
    fp = unloaded_footprint(build_foot("RIGID"))
    return ((fp.x_min + fp.x_max) / 2, (fp.y_min + fp.y_max) / 2)


# --- energy ---------------------------------------------------------------------

def test_rigid_rest_energy_is_gravity_only():
    m = get_model(build_foot("RIGID"))
    q = initial_pose(m, FLAT)
    sc = make_scene(FLAT)
    terms = m.energy_breakdown(q, sc)
    assert terms["contact"] == 0.0 and terms["anchor"] == 0.0 and terms["load"] == 0.0
    assert float(m.energy(jnp.asarray(q), sc)) == pytest.approx(terms["gravity"], rel=1e-12)


def test_lifting_costs_weight_times_height():
    foot = build_foot("RIGID")
    m = get_model(foot)
    q = initial_pose(m, FLAT)
    sc = make_scene(FLAT)
    q2 = q.copy()
    q2[2] += 10.0
    dE = float(m.energy(jnp.asarray(q2), sc) - m.energy(jnp.asarray(q), sc))
    assert dE == pytest.approx(foot.total_mass * G * 10.0, rel=1e-10)
    assert foot.total_mass * G * 10.0 == pytest.approx(1.115 * 9.81 * 10, rel=0.02)


def test_sole_angle_band_energy():
    foot = build_foot("KRK")
    m = get_model(foot)
    names = module_coord_names(foot.geometry)
    k = int(foot.coord_index[0, names.index("sole_2")])
    q = m.rest_q()
    q[6 + k] = 0.1
    bands = m.energy_breakdown(q, make_scene(FLAT))["bands"]
    assert bands == pytest.approx(0.5 * foot.band_k_rot * 0.1 ** 2, rel=1e-12)


@pytest.mark.parametrize("label", ["RIGID", "KRK", "KKF", "RRR"])
def test_gradient_matches_finite_differences(label):
    m = get_model(build_foot(label))
    rng = np.random.default_rng(7)
    for tid in ("flat", "toes_M"):
        for q, sc, h in feasible_configurations(m, make_terrain(tid), rng, 4):
            assert fd_gradient_error(m, q, sc, h) <= 1e-5


@pytest.mark.parametrize("label", ["KRK", "KKK", "KRR"])
def test_rest_elastic_gradient_vanishes(label):
    m = get_model(build_foot(label))
    g = np.asarray(_elastic(m)(jnp.asarray(m.rest_q()), make_scene(FLAT)))
    assert np.abs(g).max() < 1e-9


@pytest.mark.parametrize("label", ["KKK", "KRK"])
def test_internal_forces_do_not_push_the_root(label):
    # couplings and internal springs are invariant under a common rigid motion,
    # so their reactions on adjacent modules cancel
    m = get_model(build_foot(label))
    grad = _elastic(m)
    rng = np.random.default_rng(3)
    sc = make_scene(FLAT)
    for _ in range(5):
        q = np.r_[rng.uniform(-20, 20, 3), rng.uniform(-0.3, 0.3, 3), rng.uniform(-0.1, 0.1, m.n - 6)]
        g = np.asarray(grad(jnp.asarray(q), sc))
        assert np.abs(g[:6]).max() <= 1e-9 * max(1.0, np.abs(g).max())


def test_tendon_is_tension_only():
    m = get_model(build_foot("KRK"))
    q = m.rest_q()
    names = module_coord_names(m.foot.geometry)
    for sign in (-1, 1):
        q2 = q.copy()
        q2[6 + int(m.foot.coord_index[0, names.index("sole_1")])] = 0.2 * sign
        L, T = m.tendon_length(q2), m.tendon_tension(q2)
        assert np.all(T >= 0)
        assert np.all(T[L <= m.tendon_engage] == 0)


# --- equilibrium ----------------------------------------------------------------

def test_rigid_flat_centroid_carries_total_weight():
    foot = build_foot("RIGID")
    m = get_model(foot)
    cx, cy = _centroid()
    res = solve_equilibrium(foot, FLAT, 2.0 * G, (cx, cy, m.attach[2]))
    assert res.converged and res.grad_norm <= 1e-3 and res.max_penetration <= 0.1
    assert res.normal_force == pytest.approx((2.0 + foot.total_mass) * G, rel=1e-2)
    assert res.normal_force == pytest.approx(30.7, rel=1e-2)


def test_free_fall_diverges():
    foot = build_foot("RIGID")
    q0 = get_model(foot).rest_q()
    q0[2] = 100.0
    res = solve_equilibrium(foot, None, 0.0, q0=q0)
    assert not res.converged and res.status == "diverged"


def test_energy_decreases_along_iterations():
    foot = build_foot("KRK")
    m = get_model(foot)
    q0 = initial_pose(m, make_terrain("toes_M"))
    sc = make_scene(make_terrain("toes_M"), 10.0, m.attach + [60, 0, 0], (q0[0], q0[1], q0[5]))
    seen = [float(m.energy(jnp.asarray(q0), sc))]
    res = minimize_energy(m, q0, sc, monitor=lambda q: seen.append(float(m.energy(jnp.asarray(q), sc))))
    assert res.status == "converged"
    assert np.all(np.diff(seen) <= 1e-9 * np.abs(seen[:-1]).max())


# --- ramp -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def rigid_centroid_trace():
    return ramp_load(build_foot("RIGID"), FLAT, _centroid(), steps=20)


def test_rigid_centroid_ramp(rigid_centroid_trace):
    tr = rigid_centroid_trace
    assert tr.stopped is None and len(tr.steps) == 21
    assert all(s.converged for s in tr.steps)
    assert max(s.displacement for s in tr.steps) < 1.0
    assert tr.reached_force == pytest.approx(default_target_force(build_foot("RIGID")))
    assert not detect_instability(tr).unstable


def test_single_step_matches_direct_solve(rigid_centroid_trace):
    foot = build_foot("RIGID")
    one = ramp_load(foot, FLAT, _centroid(), steps=1)
    tr = rigid_centroid_trace
    direct = solve_equilibrium(foot, FLAT, tr.target_force - get_model(foot).weight, tr.load_point_foot,
                               tr.undisturbed_q, anchor=(0.0, 0.0, 0.0))
    assert one.final.converged and direct.converged
    np.testing.assert_allclose(one.final_q, direct.q, atol=1e-6)
    np.testing.assert_allclose(one.final_q, tr.final_q, atol=1e-4)


def test_corner_load_is_unstable():
    fp = unloaded_footprint(build_foot("RIGID"))
    tr = ramp_load(build_foot("RIGID"), FLAT, (fp.x_max + 1.0, fp.y_max + 1.0), steps=20)
    v = detect_instability(tr)
    assert v.unstable and v.mode in (ROTATION, DISPLACEMENT, DIVERGED)
    assert v.force is not None and v.force < tr.target_force


def test_balances_and_complementarity_on_obstacles():
    foot = build_foot("KRK")
    m = get_model(foot)
    terr = make_terrain("toes_M")
    tr = ramp_load(foot, terr, (120.0, 0.0), steps=10)
    half = (lambda fp: (fp.x_max - fp.x_min) / 2)(unloaded_footprint(foot))
    errs = balance_errors(m, tr, half)
    assert errs and max(e[0] for e in errs) <= 1e-2 and max(e[1] for e in errs) <= 1e-2
    for res in tr.states:
        assert complementarity_residual(m, res, terr) <= 0.01
        assert np.all(res.tendon_tension >= 0)


def test_mirror_symmetric_contact_forces():
    foot = build_foot("KRK")
    res = ramp_load(foot, make_terrain("heel_M"), (60.0, 0.0), steps=5).final
    assert res.converged
    p, f = res.contact_points, res.contact_forces
    mp = p * [1, -1, 1]
    mf = f * [1, -1, 1]
    for i in range(len(p)):
        j = np.argmin(np.linalg.norm(p - mp[i], axis=1))
        assert np.linalg.norm(p[j] - mp[i]) < 1e-3
        assert np.linalg.norm(f[j] - mf[i]) <= 1e-2 * max(np.linalg.norm(f[i]), 1e-3)


def test_repeated_ramp_is_bitwise_identical():
    foot = build_foot("KKF")
    terr = make_terrain("heel_S")
    a = ramp_load(foot, terr, (30.0, 30.0), steps=5)
    statics._SETTLE_CACHE.clear()
    b = ramp_load(foot, terr, (30.0, 30.0), steps=5)
    assert a.to_csv() == b.to_csv()
    assert a.final_q.tobytes() == b.final_q.tobytes()


# --- instability classification --------------------------------------------------

def _trace(rows, reached=30.7, stopped=None):
    steps = [RampStep(k, f, d, np.array(r, float), True, 3, "converged", 0.0, 0.0, 0.0)
             for k, (f, d, r) in enumerate(rows)]
    return RampTrace(steps=steps, reached_force=reached, target_force=30.7, stopped=stopped)


def test_small_motion_is_stable():
    tr = _trace([(11.0, 0.0, (0, 0, 0)), (30.7, 3.0, (2, 0, 0))])
    assert detect_instability(tr) == statics.InstabilityVerdict(False, None, None, None)


def test_rotation_over_limit():
    v = detect_instability(_trace([(11.0, 0.0, (0, 0, 0)), (20.0, 5.0, (46, 0, 0))], reached=11.0,
                                  stopped=ROTATION))
    assert v.unstable and v.mode == ROTATION and v.step == 1 and v.force == 20.0


def test_strict_threshold_boundary():
    tr = _trace([(11.0, 0.0, (0, 0, 0)), (30.7, 99.9, (44.9, -44.9, 0))])
    assert not detect_instability(tr).unstable
    tr = _trace([(11.0, 0.0, (0, 0, 0)), (30.7, 100.0, (0, 0, 0))], reached=11.0, stopped=DISPLACEMENT)
    assert detect_instability(tr).mode == DISPLACEMENT


def test_unconverged_step_is_diverged():
    tr = _trace([(11.0, 0.0, (0, 0, 0)), (20.0, 1.0, (0, 0, 0))], reached=11.0, stopped=DIVERGED)
    tr.steps[1].converged = False
    assert detect_instability(tr).mode == DIVERGED


# --- support polygon ------------------------------------------------------------

def test_unit_square_hull():
    poly = support_polygon(np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]]))
    assert len(poly) == 4
    assert hull_check(poly, (0.5, 0.5))
    assert hull_check(poly, (1.0, 0.5))
    assert not hull_check(poly, (2.0, 0.5))
    assert not hull_check(poly, (0.5, -1.0))


@settings(max_examples=200)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=20),
       st.floats(0, 1), st.floats(0, 1))
def test_hull_contains_convex_combinations(pts, a, b):
    pts = np.array(pts)
    if np.linalg.matrix_rank(pts - pts[0]) < 2:
        return
    poly = support_polygon(pts)
    i, j, k = 0, len(poly) // 3, 2 * len(poly) // 3
    w = np.array([a, (1 - a) * b, (1 - a) * (1 - b)])
    p = w @ poly[[i, j, k]]
    assert hull_check(poly, p, tol=1e-6 * max(1.0, np.abs(pts).max()))
