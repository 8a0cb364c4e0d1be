#!/usr/bin/env python3
"""Pendulum weak KAM solutions against the closed form, over grid sizes and tau.

    python scripts/weakkam_convergence.py --grids 128 256 512 --taus 0.1 0.2

Prints one row per (m, tau): critical value, sup error of u-, sup |u+ + u-|,
iterations and wall time.
"""
from __future__ import annotations

import argparse
import time
from dataclasses import dataclass

import numpy as np

from greenkam.model import make_model
from greenkam.weakkam import weak_kam_pair


@dataclass
class Config:
    grids: tuple = (128, 256, 512)
    taus: tuple = (0.1, 0.2, 0.4)
    amplitude: float = 1.0


def closed_form(q, a=1.0):
    # 1/2 u'^2 + a cos(2 pi q) = a, glued at the kink q = 1/2
    q = np.mod(q, 1.0)
    s = 2 * np.sqrt(a) / np.pi
    return np.where(q <= 0.5, s * (1 - np.cos(np.pi * q)), s * (1 + np.cos(np.pi * q)))


def main(cfg: Config):
    model = make_model("Pendulum", amplitude=cfg.amplitude)
    print(f"{'m':>5} {'tau':>5} {'c':>18} {'sup|u- - ref|':>14} {'sup|u+ + u-|':>13} {'sec':>6}")
    for m in cfg.grids:
        for tau in cfg.taus:
            t0 = time.perf_counter()
            pair = weak_kam_pair(model, m=m, tau=tau)
            q = pair.u_minus.nodes()[:, 0]
            err = np.max(np.abs(pair.u_minus.values - closed_form(q, cfg.amplitude)))
            sym = np.max(np.abs(pair.u_plus.values + pair.u_minus.values))
            print(f"{m:5d} {tau:5.2f} {pair.c:18.15f} {err:14.3e} {sym:13.3e} {time.perf_counter() - t0:6.1f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grids", type=int, nargs="+", default=list(Config.grids))
    ap.add_argument("--taus", type=float, nargs="+", default=list(Config.taus))
    ap.add_argument("--amplitude", type=float, default=Config.amplitude)
    a = ap.parse_args()
    main(Config(tuple(a.grids), tuple(a.taus), a.amplitude))
