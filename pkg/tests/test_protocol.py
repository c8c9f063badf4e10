import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from footlab import bench_counts
from footlab.assembly import Rectangle, build_foot, unloaded_footprint
from footlab.protocol import (Classification, ColorBucket, SweepResult, TrialSpec, color_bucket,
                              compute_stats, count_external, n_average, reclassify, round_half_up,
                              run_trial, run_trials, stats_from_counts, sweep_hash, sweep_specs)
from footlab.statics import DEFAULT_SETTINGS, RampStep, RampTrace
from footlab.terrain import grid_points


def _sweep(stable_pts, terrain="flat", foot="KRK"):
    stable = {tuple(map(float, p)) for p in stable_pts}
    outs = {}
    for p in grid_points().tolist():
        p = tuple(p)
        outs[p] = {"point": list(p), "classification": "Stable" if p in stable else "Unstable",
                   "mode": None if p in stable else "Rotation", "final_force": 30.7, "target_force": 30.7,
                   "max_displacement": 1.0, "max_rotation_deg": 1.0, "steps_run": 20, "internal_error": None}
    return SweepResult(foot, terrain, "soft", 20, outs)


# --- statistics -----------------------------------------------------------------

def test_percentage_examples():
    assert stats_from_counts(41, 38).pct == 108
    s = stats_from_counts(33, 38, 3)
    assert (s.pct, s.pct_E) == (87, 9)
    z = stats_from_counts(0, 38)
    assert (z.pct, z.pct_E, z.pct_E_raw) == (0, 0, 0.0)


def test_stats_errors():
    with pytest.raises(ValueError):
        stats_from_counts(3, 0)
    with pytest.raises(ValueError):
        stats_from_counts(3, 10, 4)


def test_bench_cells_reproduce():
    for spring, foot, tid, n, n_e, n_ref, pct, pct_e, color in bench_counts.rows():
        s = stats_from_counts(n, n_ref, n_e)
        assert (s.pct, s.pct_E, s.color.value) == (pct, pct_e, color), (spring, foot, tid)


def test_bench_averages_reproduce():
    for key, cells in bench_counts.COUNTS.items():
        assert n_average(n for n, _ in cells) == bench_counts.AVERAGES[key]
    assert n_average([38, 36, 47, 33, 27, 35]) == 36.0


def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.4999)] == [1, 2, 3, 2]
    assert round_half_up(Fraction(300, 38) * 1) == 8


@pytest.mark.parametrize("pct, bucket", [(0, ColorBucket.RED), (89, ColorBucket.RED), (90, ColorBucket.ORANGE),
                                         (108, ColorBucket.ORANGE), (110, ColorBucket.YELLOW),
                                         (130, ColorBucket.YELLOW), (131, ColorBucket.GREEN),
                                         (148, ColorBucket.GREEN)])
def test_color_buckets(pct, bucket):
    assert color_bucket(pct) is bucket


def test_color_rejects_negative():
    with pytest.raises(ValueError):
        color_bucket(-1)


@given(st.floats(0, 300), st.floats(0, 300))
def test_color_is_monotone(a, b):
    order = list(ColorBucket)
    lo, hi = sorted((a, b))
    assert order.index(color_bucket(lo)) <= order.index(color_bucket(hi))


def test_compute_stats_counts_external_strictly_outside():
    fp = unloaded_footprint(build_foot("RIGID"))
    g = grid_points()
    inside = g[fp.contains(g[:, 0], g[:, 1])]
    outside = g[~fp.contains(g[:, 0], g[:, 1])]
    soft = _sweep(np.r_[inside[:30], outside[:4]])
    ref = _sweep(inside, foot="RIGID")
    s = compute_stats(soft, ref, fp)
    assert (s.n, s.n_E, s.n_ref) == (34, 4, 50)
    assert s.pct == 68 and s.pct_E == 12
    # a point on the boundary is inside
    box = Rectangle(0.0, 30.0, 0.0, 30.0)
    assert count_external(np.array([[30.0, 30.0], [0.0, 0.0], [30.0, 60.0]]), box) == 1


def test_reference_identity_and_mismatch():
    ref = _sweep(grid_points()[:20], foot="RIGID")
    assert compute_stats(ref, ref).pct == 100
    with pytest.raises(ValueError):
        compute_stats(_sweep(grid_points()[:3], "heel_S"), ref)
    with pytest.raises(ValueError):
        compute_stats(ref, _sweep([], foot="RIGID"))


@given(st.lists(st.booleans(), min_size=91, max_size=91), st.lists(st.booleans(), min_size=91, max_size=91))
def test_stats_invariants(a, b):
    g = grid_points()
    fp = unloaded_footprint(build_foot("RIGID"))
    sw, ref = _sweep(g[np.array(a)]), _sweep(g[np.array(b)], foot="RIGID")
    if not any(b):
        return
    s = compute_stats(sw, ref, fp)
    assert 0 <= s.n_E <= s.n <= 91
    assert s.pct_E == (round_half_up(Fraction(100 * s.n_E, s.n)) if s.n else 0)


# --- sweep records ----------------------------------------------------------------

def test_sweep_needs_every_point():
    outs = dict(list(_sweep([]).outcomes.items())[:90])
    with pytest.raises(ValueError):
        SweepResult("KRK", "flat", "soft", 20, outs)


def test_sweep_json_round_trip():
    s = _sweep(grid_points()[::3], "toes_M")
    back = SweepResult.from_dict(json.loads(s.to_json()))
    assert back.to_json() == s.to_json()
    np.testing.assert_array_equal(back.stable_mask(), s.stable_mask())


def test_sweep_hash_tracks_inputs():
    h = sweep_hash("KRK", "flat", "soft", 20)
    assert h == sweep_hash("KRK", "flat", "soft", 20)
    assert h != sweep_hash("KRK", "flat", "stiff", 20)
    assert h != sweep_hash("KRK", "flat", "soft", 40)
    assert h != sweep_hash("KRK", "flat", "soft", 20, DEFAULT_SETTINGS, (("band_k", 2.0),))


def test_trial_spec_validation():
    with pytest.raises(ValueError):
        TrialSpec("RIGID", "flat", (31.0, 0.0))
    with pytest.raises(ValueError):
        TrialSpec("RIGID", "flat", (30.0, 0.0), steps=0)
    with pytest.raises(ValueError):
        TrialSpec("RIGID", "flat", (30.0, 0.0), target_force=5.0)
    assert len(sweep_specs("KRK", "toes_S")) == 91


# --- trials ------------------------------------------------------------------------

def test_rigid_centre_trial_is_stable():
    out = run_trial(TrialSpec("RIGID", "flat", (30.0, 0.0)))
    assert out.classification is Classification.STABLE and out.mode is None
    assert out.final_force == pytest.approx((2.0 + build_foot("RIGID").total_mass) * 9.81)
    assert out.final_force == pytest.approx(30.7, rel=1e-2)
    assert out.final_force >= 0.99 * out.target_force


def test_rigid_outside_corner_is_unstable():
    out = run_trial(TrialSpec("RIGID", "flat", (210.0, 90.0)))
    assert out.classification is Classification.UNSTABLE and out.mode is not None
    assert out.final_force < out.target_force


def test_repeated_trial_is_identical():
    spec = TrialSpec("KRK", "toes_S", (150.0, 30.0), steps=8)
    a, b = run_trial(spec), run_trial(spec)
    assert a.as_dict() == b.as_dict()
    assert a.trace.to_csv() == b.trace.to_csv()


def test_parallel_schedule_does_not_change_results():
    specs = [TrialSpec("RIGID", "heel_S", tuple(p), steps=5) for p in grid_points()[40:44]]
    serial = [o.as_dict() for o in run_trials(specs, jobs=1)]
    parallel = [o.as_dict() for o in run_trials(specs, jobs=2)]
    assert serial == parallel


def test_solver_errors_surface_as_diverged(monkeypatch):
    import footlab.protocol as protocol

    def boom(*a, **k):
        raise FloatingPointError("synthetic")

    monkeypatch.setattr(protocol, "ramp_load", boom)
    out = run_trial(TrialSpec("RIGID", "flat", (30.0, 0.0)))
    assert out.classification is Classification.UNSTABLE and out.mode == "Diverged"
    assert "synthetic" in out.internal_error


# --- reclassification ----------------------------------------------------------------

@st.composite
def traces(draw):
    n = draw(st.integers(1, 6))
    steps = [RampStep(k, 11.0 + k, draw(st.floats(0, 150)), np.array([draw(st.floats(-60, 60)), 0.0, 0.0]),
                      True, 1, "converged", 0.0, 0.0, 0.0) for k in range(n)]
    reached = draw(st.sampled_from([30.7, 15.0]))
    return RampTrace(steps=steps, reached_force=reached, target_force=30.7,
                     stopped=None if reached == 30.7 else "Rotation")


@given(traces(), st.floats(1, 150), st.floats(1, 60), st.floats(0, 50), st.floats(0, 30))
def test_relaxing_thresholds_never_shrinks_stable_set(tr, d, r, dd, dr):
    if reclassify(tr, d, r):
        assert reclassify(tr, d + dd, r + dr)
