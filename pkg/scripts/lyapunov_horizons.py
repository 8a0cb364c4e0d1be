#!/usr/bin/env python3
"""Finite-horizon Lyapunov exponents against T for a few orbits.

The saddle converges fast after burn-in.  On a periodic elliptic or
rotating orbit the exponents decay like log(T)/T, the bias that the
zero tolerance has to absorb.
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass

import numpy as np

from greenkam.flow import FlowConfig
from greenkam.lyapunov import lyapunov_spectrum
from greenkam.model import make_model


@dataclass
class Config:
    horizons: tuple = (25.0, 50.0, 100.0, 200.0)
    step: float = 0.5


ORBITS = [
    ("Pendulum", [0.0, 0.0], "saddle"),
    ("Pendulum", [0.5, 1.0], "libration"),
    ("Pendulum", [0.0, 2.5], "rotation"),
    ("MechanicalT2", [0.0, 0.0, 0.0, 0.0], "T2 saddle"),
    ("ManeRotor", [0.1, 0.2, 0.0, 0.0], "flat torus"),
]


def main(cfg: Config):
    fine = FlowConfig(step=2.5e-3)
    for name, x, label in ORBITS:
        model = make_model(name)
        for T in cfg.horizons:
            spec = lyapunov_spectrum(model, x, T, cfg.step, fine)
            print(f"{label:>11} T={T:6.0f}  exponents {np.round(spec.exponents, 5).tolist()}  "
                  f"zero_tol {spec.zero_tol:.3g}  log(T)/T {np.log(T) / T:.3g}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizons", type=float, nargs="+", default=list(Config.horizons))
    ap.add_argument("--step", type=float, default=Config.step)
    a = ap.parse_args()
    main(Config(tuple(a.horizons), a.step))
