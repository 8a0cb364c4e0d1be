"""Lax-Oleinik semigroups on grids, weak KAM solutions and conjugate pairs.

The operator T_tau is applied through a precomputed stencil: for every
target node x_i and every lifted displacement delta in a window, the value
A_tau(x_i - delta, x_i) is stored once.  Sources are the nodes of a grid
refined ``refine`` times, where u is extended by linear interpolation, so
that each sweep is a gather followed by a min (or max).  Interpolation with
non-negative weights keeps the operator monotone, non-expansive and
commuting with constants.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import ActionError, ConjugacyError, NonConvergenceError
from ..model import MechanicalModel, TonelliModel, torus_delta
from .action import default_sub_steps, min_sub_steps, minimize_arcs
from .grid import GridFunction

SIGNS = ("negative", "positive")


def _velocity_bound(model: TonelliModel) -> float | None:
    if not isinstance(model, MechanicalModel):
        return None
    q = np.stack(np.meshgrid(*([np.linspace(0, 1, 65)] * model.n), indexing="ij"), -1).reshape(-1, model.n)
    V = model.potential(q)
    return float(np.linalg.norm(model.omega) + np.sqrt(2.0 * (V.max() - V.min())))


def default_window(model: TonelliModel, tau: float, m: int) -> float:
    """Radius of the displacement window searched by T_tau.

    Calibrated curves of a mechanical model have speed at most
    |omega| + sqrt(2 osc V); the window covers that bound with a margin.
    """
    vb = _velocity_bound(model)
    if vb is None:
        return 0.5 if model.n == 1 else 0.25
    return float(min(0.5, 1.25 * tau * vb + 2.0 / m))


class LaxOleinik:
    """Discrete T_tau (negative) and its dual (positive) on an m^n grid."""

    def __init__(self, model: TonelliModel, m: int, tau: float = 0.2, refine: int | None = None,
                 window: float | None = None, sub_steps: int | None = None, tol: float = 1e-10,
                 chunk: int = 1 << 15):
        if not 0.05 <= tau <= 0.5:
            raise ValueError("tau must lie in [0.05, 0.5]")
        self.model, self.m, self.tau = model, int(m), float(tau)
        self.n = n = model.n
        self.refine = r = (2 if n == 1 else 1) if refine is None else int(refine)
        self.window = default_window(model, tau, m) if window is None else float(window)
        self.sub_steps = default_sub_steps(tau) if sub_steps is None else int(sub_steps)
        if self.sub_steps < min_sub_steps(tau):
            raise ValueError(f"sub_steps must be at least {min_sub_steps(tau)}")
        M = r * self.m
        self.M = M
        reach = int(np.floor(self.window * M + 1e-9))
        rng = np.arange(-reach, reach + 1)
        offs = np.stack(np.meshgrid(*([rng] * n), indexing="ij"), -1).reshape(-1, n)
        offs = offs[np.linalg.norm(offs, axis=-1) <= self.window * M + 1e-9]
        self.offsets = offs
        self.displacements = offs / M
        K = len(offs)
        # index of -o for every offset o (the set is symmetric)
        lookup = {tuple(o): j for j, o in enumerate(offs)}
        self._reverse = np.array([lookup[tuple(-o)] for o in offs])
        idx = np.stack(np.meshgrid(*([np.arange(self.m)] * n), indexing="ij"), -1).reshape(-1, n)
        self.node_index = idx
        self.src_neg = self._flat((r * idx[:, None, :] - offs[None]) % M)
        self.src_pos = self._flat((r * idx[:, None, :] + offs[None]) % M)
        self.translation_invariant = bool(getattr(model, "translation_invariant", False))
        self.reversible = bool(getattr(model, "even_in_p", False))
        x = idx / self.m
        self.A_neg = self._stencil(x, -self.displacements, chunk, tol)
        if self.reversible:
            self.A_pos = self.A_neg[:, self._reverse]
        else:
            # A_tau(x_i, x_i + delta): arcs leaving the node
            self.A_pos = self._stencil(x, self.displacements, chunk, tol, leaving=True)
        self.shape = (self.m,) * n
        self.size = K

    def _flat(self, I):
        out = I[..., 0]
        for k in range(1, self.n):
            out = out * self.M + I[..., k]
        return out

    def _stencil(self, x, shift, chunk, tol, leaving=False):
        if self.translation_invariant:
            x = np.zeros((1, self.n))
        starts = np.repeat(x, len(shift), axis=0) if not leaving else np.repeat(x, len(shift), axis=0)
        moved = (x[:, None, :] + shift[None]).reshape(-1, self.n)
        a, b = (starts, moved) if leaving else (moved, starts)
        values = np.empty(len(a))
        bad = 0
        worst = 0.0
        for s in range(0, len(a), chunk):
            batch = minimize_arcs(self.model, a[s:s + chunk], b[s:s + chunk], self.tau, self.sub_steps, tol)
            values[s:s + chunk] = batch.values
            bad += int(np.sum(~batch.converged))
            worst = max(worst, float(np.max(batch.residual)))
        if bad:
            raise ActionError(f"{bad} stencil arcs did not converge (worst residual {worst:.2e})")
        return values.reshape(len(x), len(shift))

    # -- sweeps -------------------------------------------------------------
    def refined(self, values) -> np.ndarray:
        """Values on the refined source grid (flat), by linear interpolation."""
        v = np.asarray(values, dtype=float).reshape(self.shape)
        r = self.refine
        if r == 1:
            return v.ravel()
        if self.n == 1:
            ext = np.append(v, v[0])
            w = np.arange(r) / r
            fine = (1 - w)[None, :] * ext[:-1, None] + w[None, :] * ext[1:, None]
            return fine.ravel()
        g = GridFunction(v, "linear")
        q = np.stack(np.meshgrid(*([np.arange(self.M) / self.M] * 2), indexing="ij"), -1)
        return g(q).ravel()

    def _gather(self, values, sign):
        fine = self.refined(values)
        if sign == "negative":
            return fine[self.src_neg] + self.A_neg
        return fine[self.src_pos] - self.A_pos

    def negative(self, values) -> np.ndarray:
        """(T u)(x_i) = min over sources of u(x_i - delta) + A_tau(x_i - delta, x_i)."""
        return self._gather(values, "negative").min(axis=1).reshape(self.shape)

    def positive(self, values) -> np.ndarray:
        """(T' u)(x_i) = max over targets of u(x_i + delta) - A_tau(x_i, x_i + delta)."""
        return self._gather(values, "positive").max(axis=1).reshape(self.shape)

    def apply(self, values, sign: str) -> np.ndarray:
        if sign not in SIGNS:
            raise ValueError(f"sign must be one of {SIGNS}")
        return self.negative(values) if sign == "negative" else self.positive(values)

    def selectors(self, values, sign: str) -> np.ndarray:
        """Lifted displacement chosen at every node (backward for negative, forward for positive)."""
        G = self._gather(values, sign)
        j = G.argmin(axis=1) if sign == "negative" else G.argmax(axis=1)
        d = self.displacements[j]
        return -d if sign == "negative" else d

    def boundary_hits(self, values, sign: str) -> float:
        """Fraction of nodes whose optimal displacement lies on the window rim."""
        d = self.selectors(values, sign)
        rim = np.linalg.norm(d, axis=-1) >= self.window - 1.0 / self.M
        return float(np.mean(rim))

    def calibrated_path(self, values, q0, steps: int, sign: str) -> np.ndarray:
        """Follow the optimal displacements from q0 for ``steps`` sweeps.

        For a negative solution this walks backward along a calibrated curve,
        for a positive one forward.  Each step snaps to the nearest node.
        Returns the lifted points, shape (steps + 1, n).
        """
        d = self.selectors(values, sign)
        q = np.atleast_1d(np.asarray(q0, dtype=float)).copy()
        path = [q.copy()]
        for _ in range(steps):
            I = np.round(q * self.m).astype(int) % self.m
            k = I[0]
            for i in range(1, self.n):
                k = k * self.m + I[i]
            q = q + d[k]
            path.append(q.copy())
        return np.array(path)


_CACHE: dict = {}


def operator_for(model: TonelliModel, m: int, tau: float = 0.2, **kw) -> LaxOleinik:
    """Memoised LaxOleinik stencil (models are immutable)."""
    key = (type(model).__name__, tuple(sorted(model.parameters.items())), int(m), float(tau),
           tuple(sorted(kw.items())))
    op = _CACHE.get(key)
    if op is None:
        if len(_CACHE) >= 8:
            _CACHE.pop(next(iter(_CACHE)))
        op = _CACHE[key] = LaxOleinik(model, m, tau, **kw)
    return op


def lax_oleinik(model: TonelliModel, u: GridFunction, tau: float = 0.2, sign: str = "negative",
                operator: LaxOleinik | None = None, **kw) -> GridFunction:
    """One sweep of T_tau (negative) or of the dual semigroup (positive)."""
    op = operator or operator_for(model, u.m, tau, **kw)
    if op.m != u.m or op.n != u.n:
        raise ValueError("operator grid does not match the function")
    return u.with_values(op.apply(u.values, sign))


# -- weak KAM solutions -------------------------------------------------------

@dataclass
class WeakKamSolution:
    u: GridFunction
    c: float
    residual: float
    iterations: int
    history: list = field(repr=False, default_factory=list)
    operator: LaxOleinik | None = field(repr=False, default=None)

    def __iter__(self):
        return iter((self.u, self.c))


def _check_grid(n, m):
    need = 128 if n == 1 else 64
    if m < need:
        raise ValueError(f"grid must have at least {need} nodes per axis")


def solve_weak_kam(model: TonelliModel, sign: str = "negative", m: int | None = None,
                   tau: float = 0.2, tol: float = 1e-9, max_iter: int = 2000,
                   operator: LaxOleinik | None = None, u0: GridFunction | None = None,
                   interpolation: str = "linear", **kw) -> WeakKamSolution:
    """Fixed point of u -> T_tau u + c tau with the critical value c found on the fly.

    Each sweep sets c_k = -mean(T u - u) / tau (for the positive semigroup,
    c_k = mean(T' u - u) / tau and the shift is -c_k tau), then normalises
    min u = 0.  Stops when the sup-norm change is at most ``tol``.
    """
    if sign not in SIGNS:
        raise ValueError(f"sign must be one of {SIGNS}")
    if m is None:
        m = 512 if model.n == 1 else 64
    _check_grid(model.n, m)
    op = operator or operator_for(model, m, tau, **kw)
    u = np.zeros(op.shape) if u0 is None else u0.values.copy()
    history = []
    c = 0.0
    for k in range(1, max_iter + 1):
        w = op.apply(u, sign)
        drift = np.mean(w - u) / tau
        c = -drift if sign == "negative" else drift
        new = w + c * tau if sign == "negative" else w - c * tau
        new -= new.min()
        change = float(np.max(np.abs(new - u)))
        history.append((c, change))
        u = new
        if change <= tol:
            w = op.apply(u, sign)
            shift = c * tau if sign == "negative" else -c * tau
            res = float(np.max(np.abs(w + shift - u)))
            return WeakKamSolution(GridFunction(u, interpolation), float(c), res, k, history, op)
    raise NonConvergenceError(f"weak KAM iteration did not reach tol={tol} in {max_iter} sweeps "
                              f"(last change {history[-1][1]:.2e})", history=history)


@dataclass
class WeakKamPair:
    u_minus: GridFunction
    u_plus: GridFunction
    c: float
    residual_minus: float
    residual_plus: float
    equality_set: np.ndarray
    eq_tol: float
    tau: float
    operator: LaxOleinik | None = field(repr=False, default=None)

    def equality_nodes(self) -> np.ndarray:
        return self.u_minus.nodes()[self.equality_set.ravel()]


def conjugate_pair(model: TonelliModel, u_minus: GridFunction, c: float, tau: float = 0.2,
                   tol: float = 1e-9, max_iter: int = 2000, operator: LaxOleinik | None = None,
                   eq_tol: float | None = None, **kw) -> WeakKamPair:
    """Positive solution u+ conjugate to u-.

    Iterates u -> T'_tau u - c tau from u-, with the additive constant
    fixed by max(u - u-) = 0, which holds for the conjugate solution
    (u+ <= u- with equality on the Mather set).
    """
    op = operator or operator_for(model, u_minus.m, tau, **kw)
    eq_tol = 5 * tol if eq_tol is None else eq_tol
    um = u_minus.values
    u = um.copy()
    for k in range(1, max_iter + 1):
        new = op.positive(u) - c * tau
        new -= np.max(new - um)
        change = float(np.max(np.abs(new - u)))
        u = new
        if change <= tol:
            break
    else:
        raise NonConvergenceError(f"conjugate iteration did not reach tol={tol} in {max_iter} sweeps")
    res_plus = float(np.max(np.abs(op.positive(u) - c * tau - u)))
    res_minus = float(np.max(np.abs(op.negative(um) + c * tau - um)))
    eq = (um - u) <= eq_tol
    if not np.any(eq):
        raise ConjugacyError("empty equality set: refine the grid or recheck c")
    if np.any(u > um + eq_tol):
        warnings.warn("u+ exceeds u- beyond eq_tol", RuntimeWarning)
    return WeakKamPair(u_minus, GridFunction(u, u_minus.interpolation), float(c),
                       res_minus, res_plus, eq, eq_tol, tau, op)


def weak_kam_pair(model: TonelliModel, m: int | None = None, tau: float = 0.2, tol: float = 1e-9,
                  max_iter: int = 2000, **kw) -> WeakKamPair:
    """Negative solution, critical value and its conjugate in one call."""
    sol = solve_weak_kam(model, "negative", m, tau, tol, max_iter, **kw)
    return conjugate_pair(model, sol.u, sol.c, tau, tol, max_iter, operator=sol.operator)
