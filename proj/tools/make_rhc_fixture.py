#!/usr/bin/env python3
"""Generate tests/data/rhc_fixture.csv: synthetic rows in the data/rhc.csv schema.

Values are random draws, not patient records. Deterministic for a given --seed.
"""

import argparse
import csv
import math
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))
from fetch_rhc import COVARIATES  # noqa: E402

LEVELS = {
    "sex": ["Female", "Male"],
    "race": ["black", "other", "white"],
    "income": ["$11-$25k", "$25-$50k", "> $50k", "Under $11k"],
    "ninsclas": ["Medicaid", "Medicare", "Medicare & Medicaid", "No insurance",
                 "Private", "Private & Medicare"],
    "cat1": ["ARF", "CHF", "COPD", "Cirrhosis", "Colon Cancer", "Coma",
             "Lung Cancer", "MOSF w/Malignancy", "MOSF w/Sepsis"],
    "ca": ["Metastatic", "No", "Yes"],
    "dnr1": ["No", "Yes"],
}
YES_NO = {"resp", "card", "neuro", "gastr", "renal", "meta", "hema", "seps",
          "trauma", "ortho"}
CONTINUOUS = {
    "age": (61.0, 16.0), "edu": (11.7, 3.1), "das2d3pc": (20.5, 5.3),
    "surv2md1": (0.59, 0.2), "aps1": (54.7, 19.9), "scoma1": (21.0, 30.0),
    "wtkilo1": (67.8, 29.0), "temp1": (37.6, 1.8), "meanbp1": (78.5, 38.0),
    "resp1": (28.1, 14.0), "hrt1": (115.0, 41.0), "pafi1": (222.0, 114.0),
    "paco21": (38.7, 13.0), "ph1": (7.39, 0.11), "wblc1": (15.6, 11.9),
    "hema1": (31.9, 8.4), "sod1": (136.8, 7.7), "pot1": (4.07, 1.0),
    "crea1": (2.13, 2.05), "bili1": (2.27, 4.8), "alb1": (3.09, 0.78),
}


def draw(rng):
    row = {}
    for name in COVARIATES:
        if name in LEVELS:
            row[name] = rng.choice(LEVELS[name])
        elif name in YES_NO:
            row[name] = "Yes" if rng.random() < 0.15 else "No"
        elif name in CONTINUOUS:
            mu, sd = CONTINUOUS[name]
            row[name] = "%.4g" % rng.gauss(mu, sd)
        else:
            row[name] = "1" if rng.random() < 0.12 else "0"
    score = (-0.6 + 0.02 * (float(row["aps1"]) - 55.0) - 0.004 * (float(row["pafi1"]) - 222.0)
             + 0.5 * (row["cat1"] in ("MOSF w/Sepsis", "CHF")) - 0.4 * (row["dnr1"] == "Yes"))
    z = 1 if rng.random() < 1.0 / (1.0 + math.exp(-score)) else 0
    log_los = 2.5 + 0.1 * z + 0.006 * (float(row["aps1"]) - 55.0) + rng.gauss(0.0, 0.8)
    row["los"] = "%d" % max(1, round(math.exp(log_los)))
    row["rhc"] = str(z)
    return row


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=400)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="tests/data/rhc_fixture.csv")
    args = ap.parse_args()

    rng = random.Random(args.seed)
    rows = [draw(rng) for _ in range(args.rows)]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["los", "rhc"] + COVARIATES, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
