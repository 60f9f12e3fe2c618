"""Check the CSVs written by figure_data.sh against the oracle relations and figure shapes."""

import csv
import math
import sys
from pathlib import Path

from unext.sweep import relation_holds

SLACK = {"depolarizing": 1e-5, "erasure": 1e-4}


def load(path: Path) -> list[dict]:
    with path.open() as fh:
        next(fh)
        rows = list(csv.DictReader(fh))
    for r in rows:
        for key in ("d", "ell"):
            r[key] = int(r[key])
        for key in ("p", "q", "alpha", "value_bits", "oracle_bits"):
            r[key] = float(r[key])
    return rows


def check(name: str, rows: list[dict]) -> list[str]:
    # "inaccurate" rows carry a value at reduced solver accuracy and are checked like optimal ones
    problems = [f"{name}: status {r['status']} at p={r['p']} q={r['q']}" for r in rows
                if r["status"] not in ("optimal", "inaccurate")]
    family = rows[0]["family"]
    for r in rows:
        if relation_holds(r, SLACK.get(family, 1e-4)) is False:
            problems.append(f"{name}: {r['oracle_relation']} fails at p={r['p']}: {r['value_bits']} vs {r['oracle_bits']}")
    if family == "depolarizing":
        d = rows[0]["d"]
        thr = d / (2 * (d + 1))
        for r in rows:
            if r["p"] < thr and r["value_bits"] - r["oracle_bits"] > 0.02:
                problems.append(f"{name}: gap above 0.02 at p={r['p']}")
            if r["p"] >= thr - 1e-9 and r["value_bits"] > 1e-4:
                problems.append(f"{name}: nonzero beyond the threshold at p={r['p']}")
    if family == "erasure":
        problems += [f"{name}: nonzero at p={r['p']}" for r in rows if r["p"] >= 0.5 - 1e-12 and r["value_bits"] > 1e-4]
    if family == "flagged_erasure":
        problems += [f"{name}: p=0 value {r['value_bits']} at q={r['q']}" for r in rows
                     if r["p"] == 0 and abs(r["value_bits"] - 1) > 0.02]
        row = [r["value_bits"] for r in rows if r["q"] == 0]
        if any(b > a + 1e-5 for a, b in zip(row, row[1:])):
            problems.append(f"{name}: q=0 row increases in p")
    return problems


def main(folder: str) -> int:
    problems = []
    for path in sorted(Path(folder).glob("*.csv")):
        rows = load(path)
        found = check(path.stem, rows)
        worst = max((abs(r["value_bits"] - r["oracle_bits"]) for r in rows if not math.isnan(r["oracle_bits"])),
                    default=math.nan)
        loose = sum(r["status"] == "inaccurate" for r in rows)
        print(f"{'ok  ' if not found else 'FAIL'} {path.stem}: {len(rows)} rows ({loose} inaccurate), "
              f"max |SDP - oracle| {worst:.3g}")
        problems += found
    for line in problems:
        print("  " + line)
    return 1 if problems else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1] if len(sys.argv) > 1 else "results"))
