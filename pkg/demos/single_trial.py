"""One loading trial: settle a foot on a terrain, ramp the vertical load
through a grid point and print the per-step trace."""

import sys

import numpy as np

from footlab.assembly import build_foot, describe
from footlab.protocol import TrialSpec, run_trial
from footlab.statics import get_model


def main(label="KRK", terrain="toes_M", x=150.0, y=0.0):
    foot = build_foot(label)
    info = describe(foot)
    print(f"{label}: {info['internal_dof']} internal dof, {info['mass_kg']} kg")

    out = run_trial(TrialSpec(label, terrain, (x, y)))
    tr = out.trace
    print(f"{out.classification.value} {out.mode or ''} at {out.final_force:.2f} N "
          f"(target {out.target_force:.2f} N)")
    print(" step  force   disp   max|rot|  contacts  tendon")
    for s in tr.steps:
        print(f" {s.step:4d} {s.force:6.2f} {s.displacement:6.2f} {np.abs(s.rotation_deg).max():8.2f}"
              f" {s.n_contacts:9d} {s.tendon_max:7.2f}")

    # where the plate pushes back at the last converged pose
    done = [r for r in tr.states if r.converged]
    res = done[-1] if done else None
    if res is not None and len(res.contact_points):
        f = res.contact_forces[:, 2]
        cop = (res.contact_points[:, :2] * f[:, None]).sum(0) / f.sum()
        print(f"centre of pressure {cop.round(1)}, total normal force {f.sum():.2f} N")
    model = get_model(foot)
    print(f"foot weight {model.weight:.2f} N")


if __name__ == "__main__":
    args = sys.argv[1:]
    main(*(args[:2] + [float(v) for v in args[2:4]]))
