import csv
import io
import json

import numpy as np
import pytest

from footlab import cli, report
from footlab.assembly import build_foot, unloaded_footprint
from footlab.protocol import SweepResult
from footlab.terrain import grid_points

from test_protocol import _sweep


def _inside_outside():
    fp = unloaded_footprint(build_foot("RIGID"))
    g = grid_points()
    m = fp.contains(g[:, 0], g[:, 1])
    return g[m], g[~m]


@pytest.fixture()
def results_dir(tmp_path):
    ins, out = _inside_outside()
    root = tmp_path / "res"
    report.write_sweep(root, "RIGID", _sweep(ins[:38], "heel_S", "RIGID"))
    report.write_sweep(root, "KRK", _sweep(np.r_[ins[:41]], "heel_S", "KRK"))
    report.write_sweep(root, "RIGID", _sweep(ins[:27], "toes_M", "RIGID"))
    report.write_sweep(root, "KRK", _sweep(np.r_[ins[:38], out[:2]], "toes_M", "KRK"))
    return root


def _run(argv, capsys):
    code = cli.main(argv)
    return code, capsys.readouterr()


def test_table_markdown(results_dir, capsys):
    code, out = _run(["table", str(results_dir)], capsys)
    assert code == 0
    lines = out.out.splitlines()
    assert lines[0].startswith("| Foot | Heel S % (n) | Toes M % (n)")
    krk = next(l for l in lines if l.startswith("| KRK"))
    assert "108 (41) Orange" in krk and "148 (40) Green" in krk and "5 (2)" in krk
    assert krk.rstrip(" |").endswith("40.5")
    rigid = next(l for l in lines if l.startswith("| RIGID"))
    assert "100 (38) Orange" in rigid and "0 (0)" in rigid


def test_table_csv(results_dir, capsys):
    code, out = _run(["table", str(results_dir), "--format", "csv"], capsys)
    rows = list(csv.DictReader(io.StringIO(out.out)))
    assert len(rows) == 4
    r = next(r for r in rows if r["foot"] == "KRK" and r["terrain"] == "toes_M")
    assert (r["n"], r["pct"], r["n_E"], r["pct_E"], r["color"]) == ("40", "148", "2", "5", "Green")
    assert float(r["pct_raw"]) == pytest.approx(100 * 40 / 27, abs=1e-6)


def test_missing_reference_is_an_error(tmp_path, capsys):
    report.write_sweep(tmp_path, "KRK", _sweep([], "heel_S"))
    code, out = _run(["table", str(tmp_path)], capsys)
    assert code == 1 and "RIGID" in out.err


def test_flat_only_average():
    ins, _ = _inside_outside()
    res = {("RIGID", "flat"): _sweep(ins, "flat", "RIGID")}
    line = report.format_table(res).splitlines()[-1]
    assert line.rstrip(" |").endswith("50.0")


def test_bars(results_dir, capsys):
    code, out = _run(["bars", str(results_dir)], capsys)
    rows = list(csv.DictReader(io.StringIO(out.out)))
    r = next(r for r in rows if r["foot"] == "KRK" and r["terrain"] == "heel_S")
    assert (r["pct_vs_rigid"], r["pct_vs_ideal"], r["external_share_pct"]) == ("108", "82", "0")
    assert report.pct_vs_ideal(50) == 100


def test_regeneration_is_byte_identical(results_dir, tmp_path):
    for cmd in (["table"], ["table", "--format", "csv"], ["bars"]):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        assert cli.main([cmd[0], str(results_dir), *cmd[1:], "--out", str(a)]) == 0
        assert cli.main([cmd[0], str(results_dir), *cmd[1:], "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


def test_map_svg(results_dir, tmp_path):
    out = tmp_path / "m.svg"
    assert cli.main(["map", str(results_dir), "--foot", "KRK", "--terrain", "toes_M", "--out", str(out)]) == 0
    svg = out.read_text()
    assert svg.count('class="stable"') == 40 and svg.count('class="unstable"') == 51
    assert svg.count('class="obstacle"') == 3 and 'class="footprint"' in svg
    direct = tmp_path / "d.svg"
    cli.main(["map", str(report.sweep_path(results_dir, "KRK", "toes_M")), "--out", str(direct)])
    assert direct.read_text() == svg


def test_map_render_needs_all_points():
    with pytest.raises(ValueError):
        report.MapRender([(0.0, 0.0, True)], (0, 1, 0, 1), [])


def test_trends_report_is_labelled(results_dir, capsys):
    code, out = _run(["trends", str(results_dir)], capsys)
    assert code == 0
    assert "informational, not pass/fail" in out.out
    assert "| soft foot beats rigid on forefoot obstacles | KRK toes_M | 40 vs 27 | 40 vs 27 | yes | yes | yes |" \
        in out.out


def test_load_results_keys(results_dir):
    res = report.load_results(results_dir)
    assert set(res) == {("RIGID", "heel_S"), ("KRK", "heel_S"), ("RIGID", "toes_M"), ("KRK", "toes_M")}
    text = report.outcomes_csv(res)
    assert len(text.splitlines()) == 1 + 4 * 91


# --- other subcommands ----------------------------------------------------------------

def test_enumerate(capsys):
    code, out = _run(["enumerate"], capsys)
    recs = json.loads(out.out)
    assert code == 0 and [r["label"] for r in recs] == ["KKF", "KKK", "KRF", "KRK", "KRR"]
    assert next(r for r in recs if r["label"] == "KRR")["merged"] == ["KKR"]


def test_describe(capsys, tmp_path):
    code, out = _run(["describe", "KRK"], capsys)
    info = json.loads(out.out)
    assert code == 0 and info["label"] == "KRK" and info["spring_set"] == "soft"
    d = tmp_path / "foot.json"
    d.write_text(json.dumps({"label": "KRK", "spring_set": "stiff", "materials": {"band_k": 2.0}}))
    code, out = _run(["describe", str(d)], capsys)
    info2 = json.loads(out.out)
    assert info2["spring_set"] == "stiff" and info2["coil_spring_k"] > info["coil_spring_k"]
    code, out = _run(["describe", "XYZ"], capsys)
    assert code == 1


def test_terrain_show(capsys, tmp_path):
    code, out = _run(["terrain", "show", "toes_M", "--svg", str(tmp_path / "t.svg")], capsys)
    assert code == 0 and "toes_M: 3 obstacles" in out.out
    assert (tmp_path / "t.svg").read_text().count('class="obstacle"') == 3


def test_empty_manifest(tmp_path, capsys):
    m = tmp_path / "empty.json"
    m.write_text(json.dumps({"feet": [], "terrains": [], "out": str(tmp_path / "out")}))
    code, _ = _run(["run", "--manifest", str(m)], capsys)
    assert code == 0 and not (tmp_path / "out").exists()


def test_bad_manifest(tmp_path, capsys):
    m = tmp_path / "bad.json"
    m.write_text(json.dumps({"feet": ["XYZ"], "terrains": ["flat"]}))
    assert _run(["run", "--manifest", str(m)], capsys)[0] == 1


def test_run_and_resume(tmp_path, capsys):
    m = tmp_path / "m.json"
    m.write_text(json.dumps({"name": "tiny", "feet": ["RIGID"], "terrains": ["flat"], "steps": 2,
                             "out": str(tmp_path / "out")}))
    assert _run(["run", "--manifest", str(m)], capsys)[0] == 0
    p = report.sweep_path(tmp_path / "out", "RIGID", "flat")
    first = p.read_bytes()
    study = json.loads((tmp_path / "out" / "study.json").read_text())
    assert study["n_trials"] == 91 and study["sweeps"][0]["n_stable"] == 50
    code, out = _run(["run", "--manifest", str(m)], capsys)
    assert code == 0 and "skip RIGID/flat" in out.err
    assert p.read_bytes() == first
    rows = (tmp_path / "out" / "outcomes.csv").read_text().splitlines()
    assert len(rows) == 92


def test_trace_csv(tmp_path, capsys):
    out = tmp_path / "t.csv"
    code, cap = _run(["trace", "--foot", "RIGID", "--terrain", "flat", "--point", "30", "0", "--steps", "4",
                      "--out", str(out)], capsys)
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert code == 0 and len(rows) == 5 and "Stable" in cap.err
    assert {"force_N", "displacement_mm", "rot_x_deg", "n_contacts"} <= set(rows[0])
    assert float(rows[-1]["force_N"]) == pytest.approx(30.7, rel=1e-2)
