"""Pseudographs, semiconcavity, the Mather set proxy and the Lipschitz graph check."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..model import TonelliModel, torus_delta
from .grid import GridFunction
from .laxoleinik import WeakKamPair


@dataclass(frozen=True)
class Pseudograph:
    q: np.ndarray
    du: np.ndarray
    mask: np.ndarray
    jump: np.ndarray

    def states(self, only_differentiable: bool = True) -> np.ndarray:
        sel = self.mask if only_differentiable else np.ones_like(self.mask)
        return np.concatenate([self.q[sel], self.du[sel]], axis=-1)


def _shift(v, k, axis):
    return np.roll(v, -k, axis=axis)


def pseudograph(model: TonelliModel | None, u: GridFunction, kink_factor: float = 10.0,
                floor: float = 1e-8) -> Pseudograph:
    """Centred-difference du with a mask of differentiable nodes.

    Along each axis the jump between one-sided derivatives at a node is
    compared with kink_factor * dx * s, where s is the largest second
    difference quotient at the neighbours two and three nodes away (outside
    the reach of a kink sitting at the node).  ``model`` is accepted for
    signature symmetry and unused: differences need only the grid.
    """
    v = u.values
    dx = u.spacing
    du, jumps, kinks = [], [], np.zeros(v.shape, dtype=bool)
    for ax in range(u.n):
        fwd = (_shift(v, 1, ax) - v) / dx
        bwd = (v - _shift(v, -1, ax)) / dx
        du.append(0.5 * (fwd + bwd))
        jump = np.abs(fwd - bwd)
        curv = jump / dx
        scale = np.max([_shift(curv, k, ax) for k in (-3, -2, 2, 3)], axis=0)
        kinks |= jump > np.maximum(kink_factor * dx * scale, floor)
        jumps.append(jump)
    du = np.stack([d.ravel() for d in du], -1)
    return Pseudograph(u.nodes(), du, ~kinks.ravel(), np.stack([j.ravel() for j in jumps], -1))


def _offsets(n, reach, least=1):
    r = np.arange(-reach, reach + 1)
    offs = np.stack(np.meshgrid(*([r] * n), indexing="ij"), -1).reshape(-1, n)
    norm = np.linalg.norm(offs, axis=-1)
    offs = offs[(norm >= least) & (norm <= reach)]
    # one of each +-pair is enough for symmetric second differences
    first = np.array([o[np.nonzero(o)[0][0]] > 0 for o in offs])
    return offs[first]


def semiconcavity_constant(u: GridFunction, radius: float = 0.1, min_cells: int = 4) -> float:
    """Smallest K >= 0 with u(x+h) - 2u(x) + u(x-h) <= 2K|h|^2 on the grid.

    Offsets h range over grid vectors with min_cells <= |h| / dx and
    |h| <= radius.  Solutions produced by a monotone scheme carry an O(dx^2)
    interpolation error whose second differences at h = dx are O(1); from
    four cells on that noise stays at the percent level.
    """
    v = u.values
    reach = int(np.floor(radius * u.m + 1e-9))
    least = max(1, min(int(min_cells), reach))
    K = 0.0
    axes = tuple(range(u.n))
    for o in _offsets(u.n, reach, least):
        second = np.roll(v, tuple(-o), axes) - 2 * v + np.roll(v, tuple(o), axes)
        h2 = float(np.sum((o / u.m) ** 2))
        K = max(K, float(np.max(second)) / (2 * h2))
    return K


@dataclass(frozen=True)
class MatherApprox:
    states: np.ndarray
    mismatch: float
    consistent: bool


def mather_set_approx(pair: WeakKamPair) -> MatherApprox:
    """Equality-set nodes lifted by du-; du+ is compared there."""
    gm = pseudograph(None, pair.u_minus)
    gp = pseudograph(None, pair.u_plus)
    sel = pair.equality_set.ravel()
    mismatch = float(np.max(np.abs(gm.du[sel] - gp.du[sel]), initial=0.0))
    ok = mismatch <= 10 * pair.eq_tol
    if not ok:
        warnings.warn(f"du- and du+ differ by {mismatch:.2e} on the equality set", RuntimeWarning)
    states = np.concatenate([gm.q[sel], gm.du[sel]], axis=-1)
    return MatherApprox(states, mismatch, ok)


class LipschitzReport(NamedTuple):
    K_fit: float
    verdict: str
    K_semiconcave: float


def lipschitz_graph_check(pair: WeakKamPair, radius: float = 0.2, tol: float = 1e-6) -> LipschitzReport:
    """Fit |du-(y) - du-(x)| <= K_fit d(y, x), y on the equality set, x differentiable nearby."""
    g = pseudograph(None, pair.u_minus)
    K = semiconcavity_constant(pair.u_minus)
    ys = np.nonzero(pair.equality_set.ravel())[0]
    xs = np.nonzero(g.mask)[0]
    fit = 0.0
    for i in ys:
        d = torus_distance_rows(g.q[xs], g.q[i])
        near = (d > 0) & (d <= radius)
        if np.any(near):
            diff = np.linalg.norm(g.du[xs[near]] - g.du[i], axis=-1)
            fit = max(fit, float(np.max(diff / d[near])))
    verdict = "PASS" if fit <= 6 * K + tol * (1 + 6 * K) else "FAIL"
    return LipschitzReport(fit, verdict, K)


def torus_distance_rows(a, b):
    return np.linalg.norm(torus_delta(b, a), axis=-1)
