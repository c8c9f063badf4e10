"""Walk the connection design space: raw count, rule trace of a few
assignments, the accepted set and the equivalence merge."""

import numpy as np

from footlab import design_space as ds


def main():
    codes = ds.raw_space_codes()
    mask = ds.feasible_mask(codes)
    print(f"{len(codes)} raw assignments, {mask.sum()} pass every rule")

    for a in ds.accepted_assignments():
        print(f"  {ds.label(a)} -> {ds.label(ds._canonical(a))}")

    # rules that reject a handful of random assignments
    rng = np.random.default_rng(0)
    for row in codes[rng.choice(len(codes), 5, replace=False)]:
        a = ds.ConnectionAssignment(tuple(ds.CONNECTION_TYPES[i] for i in row))
        _, trace = ds.apply_constraints(a)
        rej = [v.rule_id.value for v in trace if v.outcome is ds.Outcome.REJECT]
        print(f"  {ds.label(a)}: rejected by {rej}")

    print("final designs:", ds.final_designs())


if __name__ == "__main__":
    main()
