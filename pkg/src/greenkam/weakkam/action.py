"""Discrete action of broken paths and its minimisation.

A path with N segments of length h = t / N has action
    S = sum_k h/2 [L(x_k, v_k) + L(x_{k+1}, v_k)],  v_k = (x_{k+1} - x_k) / h,
the trapezoidal rule on each segment.  Interior nodes are found by damped
Newton iteration; the Hessian is block tridiagonal and is solved by block
elimination, batched over many independent arcs at once.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..errors import ActionError
from ..model import TonelliModel, TorusPoint

TAU_MIN = 0.05
T_MAX = 10.0


@dataclass(frozen=True)
class MinimizingArc:
    nodes: np.ndarray
    value: float
    p_start: np.ndarray
    p_end: np.ndarray
    t: float
    lift: tuple
    certified: bool = True
    residual: float = 0.0
    momenta: np.ndarray | None = None

    @property
    def step(self) -> float:
        return self.t / (len(self.nodes) - 1)

    def states(self) -> np.ndarray:
        """Phase-space states (q_k, p_k) along the arc, shape (N + 1, 2n)."""
        return np.concatenate([self.nodes, self.momenta], axis=-1)


def min_sub_steps(t: float) -> int:
    return max(4, int(np.ceil(t / 0.1 - 1e-9)))


def default_sub_steps(t: float) -> int:
    return max(8, int(np.ceil(t / 0.025 - 1e-9)))


def _segments(model, X, h):
    a, b = X[..., :-1, :], X[..., 1:, :]
    v = (b - a) / h
    return model.lagrangian_jet(a, v), model.lagrangian_jet(b, v)


def discrete_action(model: TonelliModel, X, h: float) -> np.ndarray:
    ja, jb = _segments(model, X, h)
    return 0.5 * h * np.sum(ja.L + jb.L, axis=-1)


def _derivatives(model, X, h):
    """Action, full nodal gradient and block-tridiagonal Hessian (diag D, upper U)."""
    ja, jb = _segments(model, X, h)
    S = 0.5 * h * np.sum(ja.L + jb.L, axis=-1)
    pv = 0.5 * (ja.Lv + jb.Lv)
    ga = 0.5 * h * ja.Lq - pv
    gb = 0.5 * h * jb.Lq + pv
    g = np.zeros_like(X)
    g[..., :-1, :] += ga
    g[..., 1:, :] += gb
    T = lambda A: np.swapaxes(A, -1, -2)
    vv = (ja.Lvv + jb.Lvv) / (2 * h)
    Haa = 0.5 * h * ja.Lqq - 0.5 * (ja.Lqv + T(ja.Lqv)) + vv
    Hbb = 0.5 * h * jb.Lqq + 0.5 * (jb.Lqv + T(jb.Lqv)) + vv
    Hab = 0.5 * ja.Lqv - 0.5 * T(jb.Lqv) - vv
    n = X.shape[-1]
    D = np.zeros(X.shape + (n,))
    D[..., :-1, :, :] += Haa
    D[..., 1:, :, :] += Hbb
    return S, g, D, Hab


def block_thomas(D, U, g):
    """Solve the symmetric block-tridiagonal system; also return the smallest pivot eigenvalue.

    ``D`` has shape (B, M, n, n), ``U`` (B, M - 1, n, n) with ``U[:, j]`` the
    block coupling unknowns j and j + 1, ``g`` (B, M, n).
    """
    B, M, n = g.shape
    Cp = np.empty((B, max(M - 1, 0), n, n))
    dp = np.empty((B, M, n))
    low = np.full(B, np.inf)
    P = D[:, 0]
    for j in range(M):
        if j > 0:
            Ut = np.swapaxes(U[:, j - 1], -1, -2)
            P = D[:, j] - Ut @ Cp[:, j - 1]
            rhs = g[:, j] - (Ut @ dp[:, j - 1, :, None])[..., 0]
        else:
            rhs = g[:, 0]
        low = np.minimum(low, np.linalg.eigvalsh(P)[:, 0] if n > 1 else P[:, 0, 0])
        if j < M - 1:
            sol = np.linalg.solve(P, np.concatenate([U[:, j], rhs[..., None]], axis=-1))
            Cp[:, j] = sol[..., :n]
            dp[:, j] = sol[..., n]
        else:
            dp[:, j] = np.linalg.solve(P, rhs[..., None])[..., 0]
    x = np.empty_like(dp)
    x[:, -1] = dp[:, -1]
    for j in range(M - 2, -1, -1):
        x[:, j] = dp[:, j] - (Cp[:, j] @ x[:, j + 1, :, None])[..., 0]
    return x, low


@dataclass
class ArcBatch:
    nodes: np.ndarray
    values: np.ndarray
    converged: np.ndarray
    residual: np.ndarray
    min_pivot: np.ndarray

    def momenta(self, model: TonelliModel, h: float) -> np.ndarray:
        return arc_momenta(model, self.nodes, h)


def arc_momenta(model: TonelliModel, X, h: float) -> np.ndarray:
    """Discrete Legendre momenta: p_0 = -dS/dx_0 and p_k = d s_{k-1}/dx_k for k >= 1."""
    ja, jb = _segments(model, X, h)
    pv = 0.5 * (ja.Lv + jb.Lv)
    P = np.empty_like(X)
    P[..., 0, :] = -(0.5 * h * ja.Lq[..., 0, :] - pv[..., 0, :])
    P[..., 1:, :] = 0.5 * h * jb.Lq + pv
    return P


def minimize_arcs(model: TonelliModel, a, b, t: float, sub_steps: int, tol: float = 1e-10,
                  max_iter: int = 100, seed_nodes=None) -> ArcBatch:
    """Minimise the discrete action for a batch of lifted endpoints a, b of shape (B, n)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    a, b = np.broadcast_arrays(a, b)
    N = int(sub_steps)
    h = t / N
    if seed_nodes is None:
        s = np.linspace(0.0, 1.0, N + 1)[None, :, None]
        X = a[:, None, :] + s * (b - a)[:, None, :]
    else:
        X = np.array(seed_nodes, dtype=float)
    B = X.shape[0]
    mu = np.zeros(B)
    mu0 = 1e-3 / h
    converged = np.zeros(B, dtype=bool)
    residual = np.full(B, np.inf)
    low = np.full(B, np.nan)
    if N < 2:
        values = discrete_action(model, X, h)
        return ArcBatch(X, values, np.ones(B, bool), np.zeros(B), np.full(B, np.inf))
    active = np.arange(B)
    for _ in range(max_iter):
        Xa = X[active]
        S, g, D, U = _derivatives(model, Xa, h)
        gi = g[:, 1:-1]
        res = np.max(np.abs(gi), axis=(-2, -1))
        residual[active] = res
        done = res <= tol
        if np.any(done):
            _, piv = block_thomas(D[done][:, 1:-1], U[done][:, 1:-1], gi[done])
            low[active[done]] = piv
            converged[active[done]] = True
        keep = ~done
        active, Xa, S, gi = active[keep], Xa[keep], S[keep], gi[keep]
        if active.size == 0:
            break
        D, U = D[keep][:, 1:-1], U[keep][:, 1:-1]
        n = X.shape[-1]
        Dm = D + mu[active, None, None, None] * np.eye(n)
        step, piv = block_thomas(Dm, U, gi)
        slope = np.sum(gi * step, axis=(-2, -1))
        trial = Xa.copy()
        trial[:, 1:-1] -= step
        S_new = discrete_action(model, trial, h)
        ok = (slope > 0) & (piv > 0) & (S_new <= S + 1e-13 * (1.0 + np.abs(S)))
        X[active[ok]] = trial[ok]
        mu[active[ok]] = np.where(mu[active[ok]] > mu0, mu[active[ok]] / 4, 0.0)
        bad = active[~ok]
        mu[bad] = np.maximum(4 * mu[bad], mu0)
    values = discrete_action(model, X, h)
    return ArcBatch(X, values, converged, residual, low)


def _lifted_endpoints(q0, q1, n, lifts):
    q0 = q0.coords if isinstance(q0, TorusPoint) else np.atleast_1d(np.asarray(q0, dtype=float))
    q1 = q1.coords if isinstance(q1, TorusPoint) else np.atleast_1d(np.asarray(q1, dtype=float))
    if lifts is None:
        # shortest representative of q1 - q0 plus its neighbours
        base = q0 + (q1 - q0) - np.round(q1 - q0)
        lifts = list(itertools.product((-1, 0, 1), repeat=n))
        return q0, base, [tuple(k) for k in lifts]
    return q0, q1, [tuple(k) for k in lifts]


def action(model: TonelliModel, q0, q1, t: float, sub_steps: int | None = None,
           lifts=None, tol: float = 1e-10, max_iter: int = 100) -> MinimizingArc:
    """A_t(q0, q1): minimal discrete action over interior nodes and integer lifts of q1.

    Lifts are offsets k in {-1, 0, 1}^n added to the representative of q1
    nearest to q0; pass ``lifts`` explicitly to fix them (q1 is then used
    as given).  Raises ActionError carrying the best uncertified arc when
    Newton fails to converge.
    """
    if not TAU_MIN <= t <= T_MAX:
        raise ValueError(f"t must lie in [{TAU_MIN}, {T_MAX}]")
    N = default_sub_steps(t) if sub_steps is None else int(sub_steps)
    if N < min_sub_steps(t):
        raise ValueError(f"sub_steps must be at least {min_sub_steps(t)} for t={t}")
    n = model.n
    a, b, lifts = _lifted_endpoints(q0, q1, n, lifts)
    ends = np.array([b + np.array(k, dtype=float) for k in lifts])
    batch = minimize_arcs(model, np.broadcast_to(a, ends.shape), ends, t, N, tol, max_iter)
    values = np.where(batch.converged, batch.values, np.inf)
    i = int(np.argmin(values)) if np.any(batch.converged) else int(np.argmin(batch.values))
    h = t / N
    P = arc_momenta(model, batch.nodes[i:i + 1], h)[0]
    arc = MinimizingArc(batch.nodes[i], float(batch.values[i]), P[0], P[-1], t, lifts[i],
                        bool(batch.converged[i]), float(batch.residual[i]), P)
    if not arc.certified:
        raise ActionError(f"action minimisation did not converge (residual {arc.residual:.2e}); "
                          "best value is UNCERTIFIED", arc=arc)
    return arc
