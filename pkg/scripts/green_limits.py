#!/usr/bin/env python3
"""Convergence of the pushed verticals S_{+-t} towards the Green bundles.

At the pendulum saddle S_t = 2 pi coth(2 pi t) converges exponentially;
for the free rotor S_t = 1/t converges like 1/t, which is why the limit
is extrapolated.  Prints S_t, the closed form and the doubling tail.
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass

import numpy as np

from greenkam.green import green_bundles, pushed_vertical
from greenkam.model import make_model


@dataclass
class Config:
    times: tuple = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)


def main(cfg: Config):
    pen, fr = make_model("Pendulum"), make_model("FreeRotor")
    k = 2 * np.pi
    print(f"{'t':>6} {'pendulum S_t':>16} {'2pi coth':>16} {'free rotor S_t':>16} {'1/t':>10}")
    for t in cfg.times:
        sp = pushed_vertical(pen, [0.0, 0.0], t).S[0, 0]
        sf = pushed_vertical(fr, [0.0, 0.5], t).S[0, 0]
        print(f"{t:6.2f} {sp:16.10f} {k / np.tanh(k * t):16.10f} {sf:16.10f} {1 / t:10.6f}")
    for name, model, x in (("pendulum", pen, [0.0, 0.0]), ("free rotor", fr, [0.0, 0.5]),
                           ("mane rotor", make_model("ManeRotor"), [0.0, 0.0, 0.0, 0.0])):
        pair = green_bundles(model, x)
        print(f"{name}: s- = {np.round(pair.s_minus.S, 8).tolist()}, s+ = {np.round(pair.s_plus.S, 8).tolist()}, "
              f"p = {pair.p_dim}, certificate = {pair.certificate}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--times", type=float, nargs="+", default=list(Config.times))
    main(Config(tuple(ap.parse_args().times)))
