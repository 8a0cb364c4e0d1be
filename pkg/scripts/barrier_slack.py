#!/usr/bin/env python3
"""Barrier comparison slack at the pendulum Mather point as t grows.

u- lies below a_t^+ and a_t^- below u+ to second order at the equality
set; the minimal slack and the tolerance are printed for each t.
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass

from greenkam.model import make_model
from greenkam.weakkam import barrier_comparison_check, weak_kam_pair


@dataclass
class Config:
    times: tuple = (0.5, 1.0, 2.0, 5.0, 10.0)
    grid: int = 512
    patch_radius: float = 0.05


def main(cfg: Config):
    pen = make_model("Pendulum")
    pair = weak_kam_pair(pen, m=cfg.grid)
    for q0 in pair.equality_nodes():
        for t in cfg.times:
            cmp = barrier_comparison_check(pen, pair, q0, t, cfg.patch_radius)
            bp, bm = cmp.barriers
            print(f"q0={q0[0]:.4f} t={t:5.1f}  min slack + {cmp.slack_plus.min():+.2e}  "
                  f"- {cmp.slack_minus.min():+.2e}  tol {cmp.tol:.2e}  d2+ {bp.d2[0, 0]:.6f}  "
                  f"d2- {bm.d2[0, 0]:.6f}  {cmp.verdict}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--times", type=float, nargs="+", default=list(Config.times))
    ap.add_argument("--grid", type=int, default=Config.grid)
    a = ap.parse_args()
    main(Config(tuple(a.times), a.grid))
