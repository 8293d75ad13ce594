#!/usr/bin/env python3
"""Reference objectives for the convex least-squares instances.

Solves each tests/data/lse_instance_*.csv with cvxpy at tight tolerances:

    minimize    sum((yhat - y)^2)
    subject to  yhat[j] >= yhat[i] + g[i] * (x[j] - x[i])   for all i != j

and writes tests/data/lse_reference.csv. Run from the repository root after
regenerating the instances (cargo test --test solver_reference -- --ignored).
"""

import csv
import glob
import os
import re
import sys

import cvxpy as cp
import numpy as np

DATA_DIR = os.path.join("crates", "mbcr", "tests", "data")


def solve_instance(path: str) -> float:
    with open(path) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["x1", "y"], f"{path}: unexpected header {rows[0]}"
    x = np.array([float(r[0]) for r in rows[1:]])
    y = np.array([float(r[1]) for r in rows[1:]])
    n = len(x)

    yhat = cp.Variable(n)
    g = cp.Variable(n)
    constraints = [
        yhat[j] >= yhat[i] + g[i] * (x[j] - x[i])
        for i in range(n)
        for j in range(n)
        if i != j
    ]
    problem = cp.Problem(cp.Minimize(cp.sum_squares(yhat - y)), constraints)
    problem.solve(
        solver=cp.CLARABEL,
        tol_gap_abs=1e-12,
        tol_gap_rel=1e-12,
        tol_feas=1e-12,
        max_iter=200_000,
    )
    assert problem.status == cp.OPTIMAL, f"{path}: status {problem.status}"
    return float(problem.value)


def main() -> int:
    paths = sorted(glob.glob(os.path.join(DATA_DIR, "lse_instance_*.csv")))
    assert len(paths) == 20, f"expected 20 instances, found {len(paths)}"
    out_path = os.path.join(DATA_DIR, "lse_reference.csv")
    with open(out_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["instance", "objective"])
        for path in paths:
            index = int(re.search(r"lse_instance_(\d+)\.csv", path).group(1))
            objective = solve_instance(path)
            writer.writerow([index, repr(objective)])
            print(f"instance {index:02d}: objective {objective:.12e}")
    print(f"wrote {out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
