"""Summarize a results directory: stable-count table, bar data, the
counts next to the bench counts, and one SVG map per sweep."""

import sys
from pathlib import Path

from footlab import bench_counts, report
from footlab.terrain import TERRAIN_IDS


def main(root="results/replication", maps="results/maps"):
    res = report.load_results(root)
    if not res:
        print(f"no sweeps under {root}; run: footlab run --manifest manifests/replication.json")
        return
    print(report.format_table(res))
    print(report.bars_csv(res))

    counts = report.counts_array(res)
    print("model / bench stable counts")
    for foot, row in zip(report.FOOT_ORDER, counts):
        bench = [n for n, _ in bench_counts.COUNTS[("soft", foot)]]
        cells = [f"{m:3d}/{b:2d}" if m >= 0 else f"  -/{b:2d}" for m, b in zip(row, bench)]
        print(f"  {foot:6s} " + " ".join(cells))
    print("  terrains:", " ".join(TERRAIN_IDS))

    out = Path(maps)
    out.mkdir(parents=True, exist_ok=True)
    for (foot, tid), sweep in sorted(res.items()):
        (out / f"{foot}_{tid}.svg").write_text(report.render_svg(report.map_render(sweep)))
    print(f"{len(res)} maps in {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])
