#!/usr/bin/env python3
"""Run every scenario under scenarios/ and summarise verdicts and exit codes."""
from __future__ import annotations

import argparse
from pathlib import Path

from greenkam.cli import parse_scenario, run, write_report

ROOT = Path(__file__).resolve().parents[1]


def main(out: Path, pattern: str):
    for path in sorted((ROOT / "scenarios").glob(pattern)):
        rep = run(parse_scenario(path))
        write_report(rep, out / path.stem)
        verdicts = ", ".join(f"{k}={v}" for k, v in sorted(rep.verdicts.items()))
        print(f"{path.stem:28s} exit {rep.exit_code}  {rep.wall_time:6.1f}s  {verdicts}")
        for err in rep.errors:
            print(f"{'':28s} error in {err['task']}: {err['message']}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=ROOT / "out")
    ap.add_argument("--pattern", default="*.ini")
    a = ap.parse_args()
    main(a.out, a.pattern)
