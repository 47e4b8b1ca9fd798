#!/usr/bin/env python3
"""Writes tests/data/acs_counties.csv: a synthetic county-level table shaped
like published ACS poverty estimates (point estimate, 90% margin of error,
sample size, SNAP and population covariates). Deterministic for a fixed seed.
"""

import argparse
import csv
from pathlib import Path

import numpy as np


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests/data/acs_counties.csv"))
    ap.add_argument("--rows", type=int, default=560)
    ap.add_argument("--seed", type=int, default=20240601)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    m = args.rows
    pep = np.round(np.exp(rng.normal(10.3, 1.3, m))).astype(int)
    snap = np.round(pep * np.exp(rng.normal(-2.6, 0.5, m))).astype(int)
    n = np.maximum(np.round(pep * np.exp(rng.normal(-3.3, 0.4, m))), 10).astype(int)

    beta = np.array([0.4, 0.35, 0.55])
    gamma = np.array([1.2, -0.75])
    theta = beta[0] + beta[1] * np.log1p(snap) + beta[2] * np.log1p(pep) + rng.normal(0, np.sqrt(0.05), m)
    sigma2 = np.exp(gamma[0] + gamma[1] * np.log(n) + rng.normal(0, np.sqrt(0.3), m))
    d = 0.36 * np.sqrt(n)
    y = rng.normal(theta, np.sqrt(sigma2))
    s2 = sigma2 * rng.chisquare(d) / d
    est = np.maximum(np.round(np.exp(y)), 1).astype(int)
    moe = np.maximum(np.round(1.645 * np.sqrt(s2) * est), 1).astype(int)

    # Rows the loader must drop: zero estimates and tiny samples (d < 1).
    est[rng.choice(m, 4, replace=False)] = 0
    tiny = rng.choice(m, 3, replace=False)
    n[tiny] = rng.integers(2, 7, 3)
    snap_missing = set(rng.choice(m, 6, replace=False).tolist())

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fips", "county", "poverty_est", "poverty_moe", "sample_size", "snap", "pep"])
        for i in range(m):
            w.writerow([f"{10001 + 2 * i:05d}", f"County {i + 1}", est[i], moe[i], n[i],
                        "" if i in snap_missing else snap[i], pep[i]])


if __name__ == "__main__":
    main()
