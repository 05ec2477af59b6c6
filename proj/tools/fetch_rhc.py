#!/usr/bin/env python3
"""Download the SUPPORT right heart catheterization data and write data/rhc.csv.

Output columns: los (days, >= 1), rhc (0/1), then the baseline covariates.
Categorical covariates stay as text; `drvar estimate` dummy codes them.

    python3 tools/fetch_rhc.py [--url URL] [--out data/rhc.csv]
"""

import argparse
import csv
import io
import sys
import urllib.request
from pathlib import Path

URL = "https://hbiostat.org/data/repo/rhc.csv"

COVARIATES = [
    "age", "sex", "race", "edu", "income", "ninsclas", "cat1", "cat2_present",
    "ca", "das2d3pc", "dnr1", "surv2md1", "aps1", "scoma1", "wtkilo1", "temp1",
    "meanbp1", "resp1", "hrt1", "pafi1", "paco21", "ph1", "wblc1", "hema1",
    "sod1", "pot1", "crea1", "bili1", "alb1",
    "resp", "card", "neuro", "gastr", "renal", "meta", "hema", "seps",
    "trauma", "ortho",
    "cardiohx", "chfhx", "dementhx", "psychhx", "chrpulhx", "renalhx",
    "liverhx", "gibledhx", "malighx", "immunhx", "transhx", "amihx",
]


def los_days(row):
    start = float(row["sadmdt"])
    for end in ("dschdt", "dthdt", "lstctdt"):
        value = row.get(end, "").strip()
        if value not in ("", "NA"):
            return max(1.0, float(value) - start)
    raise ValueError("no end date for row %s" % row.get("", "?"))


def convert(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        rec = {"los": "%g" % los_days(row),
               "rhc": "1" if row["swang1"].strip() == "RHC" else "0"}
        for name in COVARIATES:
            if name == "cat2_present":
                rec[name] = "0" if row["cat2"].strip() in ("", "NA") else "1"
            else:
                rec[name] = row[name].strip()
        out.append(rec)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--url", default=URL)
    ap.add_argument("--input", help="use a local copy of rhc.csv instead of downloading")
    ap.add_argument("--out", default="data/rhc.csv")
    args = ap.parse_args()

    if args.input:
        text = Path(args.input).read_text()
    else:
        with urllib.request.urlopen(args.url, timeout=60) as resp:
            text = resp.read().decode("utf-8")

    rows = convert(text)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["los", "rhc"] + COVARIATES, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    treated = sum(r["rhc"] == "1" for r in rows)
    print("wrote %s: %d rows, %d treated, %d control"
          % (out, len(rows), treated, len(rows) - treated), file=sys.stderr)


if __name__ == "__main__":
    main()
