"""Images of the vertical, Green bundles and the dynamical criterion.

Lagrangian subspaces transverse to the vertical are stored as symmetric
matrices S (graph {(X, S X)}).  The pushed vertical G_t(x) is obtained by
solving the matrix Riccati equation in its linear form: a 2n x n frame is
transported by the cocycle and re-based onto [I; S] every ``restart``
time units, which keeps the frame well conditioned and exposes conjugate
points as sign changes of det X.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConjugatePointError, GreenKamError, LimitNotReachedError
from .flow import FlowConfig, flow_states, step_map
from .model import PhasePoint, TangentVector, TonelliModel, as_state


@dataclass(frozen=True)
class LagrangianGraph:
    S: np.ndarray
    base: PhasePoint | None = None

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        if np.max(np.abs(S - S.T), initial=0.0) > 1e-9 * (1.0 + np.max(np.abs(S), initial=0.0)):
            raise GreenKamError("graph matrix is not symmetric")
        object.__setattr__(self, "S", 0.5 * (S + S.T))

    def basis(self) -> np.ndarray:
        """Orthonormal basis (2n x n) of the subspace."""
        n = self.S.shape[0]
        Q, _ = np.linalg.qr(np.vstack([np.eye(n), self.S]))
        return Q

    def distance(self, v) -> float:
        """Sine of the angle between the unit vector along ``v`` and the subspace."""
        v = v.vector if isinstance(v, TangentVector) else np.asarray(v, dtype=float)
        u = v / np.linalg.norm(v)
        Q = self.basis()
        return float(np.linalg.norm(u - Q @ (Q.T @ u)))


@dataclass(frozen=True)
class GreenPair:
    s_minus: LagrangianGraph
    s_plus: LagrangianGraph
    delta: np.ndarray
    p_dim: int
    tilde_minus: np.ndarray
    tilde_plus: np.ndarray
    projector: np.ndarray
    lam: float
    rank_tol: float
    certificate: dict = field(default_factory=dict)

    def order_margins(self) -> dict:
        """Smallest eigenvalues of consecutive gaps in tilde- <= s- <= s+ <= tilde+."""
        lo = lambda A: float(np.min(np.linalg.eigvalsh(A)))
        sm, sp = self.s_minus.S, self.s_plus.S
        return {
            "tilde_minus<=s_minus": lo(sm - self.tilde_minus),
            "s_minus<=s_plus": lo(sp - sm),
            "s_plus<=tilde_plus": lo(self.tilde_plus - sp),
        }


def assemble_pair(s_minus, s_plus, base=None, rank_tol=None, certificate=None) -> GreenPair:
    sm = LagrangianGraph(s_minus, base)
    sp = LagrangianGraph(s_plus, base)
    delta = sp.S - sm.S
    w, U = np.linalg.eigh(delta)
    lam = float(max(w.max(), 0.0))
    if w.min() < -1e-7 * (1.0 + lam):
        raise GreenKamError(f"Green bundles out of order: min eig of s+ - s- is {w.min():.3e}")
    if rank_tol is None:
        rank_tol = 1e-6 * (1.0 + lam)
    keep = w > rank_tol
    proj = U[:, keep] @ U[:, keep].T
    return GreenPair(
        s_minus=sm, s_plus=sp, delta=delta, p_dim=int(np.sum(~keep)),
        tilde_minus=2 * sm.S - sp.S, tilde_plus=2 * sp.S - sm.S,
        projector=proj, lam=lam, rank_tol=float(rank_tol),
        certificate=dict(certificate or {}),
    )


def riccati_rhs(model: TonelliModel, x, S):
    """Right-hand side -H_qq - H_qp S - S H_pq - S H_pp S of the Riccati equation."""
    q, p = model.split(x)
    qq, qp, pp = model.h_qq(q, p), model.h_qp(q, p), model.h_pp(q, p)
    pq = np.swapaxes(qp, -1, -2)
    return -qq - qp @ S - S @ pq - S @ pp @ S


def _frame_to_graph(F, n):
    X, Y = F[..., :n, :], F[..., n:, :]
    S = np.swapaxes(np.linalg.solve(np.swapaxes(X, -1, -2), np.swapaxes(Y, -1, -2)), -1, -2)
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def pushed_vertical_along(model: TonelliModel, states, dt: float, cfg: FlowConfig = FlowConfig(),
                          eps: float | None = None, restart: float = 0.5,
                          blowup: float = 1e6) -> np.ndarray:
    """Graph of the image of the vertical at ``states[0]`` transported along ``states``.

    ``states`` has shape (K + 1, ..., 2n) with ``states[k + 1]`` the image of
    ``states[k]`` after a step of signed length ``dt``.  The transport starts
    at time ``eps`` from the asymptotic graph H_pp^-1 / eps and every later
    step applies the tangent map of the integrator anchored at ``states[k]``.
    Returns S with shape (..., n, n).
    """
    states = np.asarray(states, dtype=float)
    n = model.n
    K = states.shape[0] - 1
    total = K * dt
    if eps is None:
        eps = 1e-4 * abs(total)
    eps = min(abs(eps), 0.5 * abs(dt)) * np.sign(dt)
    batch = states.shape[1:-1]
    eye = np.broadcast_to(np.eye(n), batch + (n, n))

    y0 = states[0]
    q0, p0 = y0[..., :n], y0[..., n:]
    S = np.linalg.inv(model.h_pp(q0, p0)) / eps
    threshold = max(blowup, 10.0 * float(np.max(np.abs(S))))
    y_eps, _ = step_map(model, y0, eps, cfg)

    F = np.concatenate([eye, S], axis=-2)
    _, F = step_map(model, y_eps, dt - eps, cfg, F)

    # tangent maps of the anchored steps, all at once
    eye2 = np.broadcast_to(np.eye(2 * n), states.shape[1:-1] + (2 * n, 2 * n))
    elapsed = abs(dt)
    since_restart = abs(dt)
    every = max(1, int(round(restart / abs(dt))))
    chunk = 256
    k = 1
    while k < K:
        stop = min(K, k + chunk)
        _, maps = step_map(model, states[k:stop], dt, cfg, np.broadcast_to(eye2, (stop - k,) + eye2.shape).copy())
        for M in maps:
            F = M @ F
            elapsed += abs(dt)
            since_restart += 1
            X = F[..., :n, :]
            if np.any(np.linalg.det(X) <= 0):
                raise ConjugatePointError(
                    f"conjugate vector: vertical frame degenerate at |s| = {elapsed:.4g}", time=elapsed)
            if since_restart >= every:
                S = _frame_to_graph(F, n)
                if np.max(np.abs(S)) > threshold:
                    raise ConjugatePointError(
                        f"Riccati blow-up (|S| > {threshold:.3g}) at |s| = {elapsed:.4g}", time=elapsed)
                F = np.concatenate([eye, S], axis=-2)
                since_restart = 0
        k = stop
    S = _frame_to_graph(F, n)
    if np.max(np.abs(S)) > threshold or not np.all(np.isfinite(S)):
        raise ConjugatePointError(f"Riccati blow-up at |s| = {elapsed:.4g}", time=elapsed)
    return S


def _pushed_vertical_states(model, x, t, cfg, **kw):
    x = np.asarray(as_state(x), dtype=float)
    back, _ = flow_states(model, x, -t, cfg, keep=True)
    states = back[::-1]
    K = states.shape[0] - 1
    return pushed_vertical_along(model, states, t / K, cfg, **kw)


def pushed_vertical(model: TonelliModel, x, t: float, cfg: FlowConfig = FlowConfig(),
                    eps: float | None = None, restart: float = 0.5) -> LagrangianGraph | np.ndarray:
    """Graph of G_t(x) = D phi_t V(phi_{-t} x).

    For a single phase point returns a LagrangianGraph; for a batch of
    states (..., 2n) returns the stacked matrices.
    """
    if t == 0:
        raise ValueError("t must be non-zero")
    S = _pushed_vertical_states(model, x, t, cfg, eps=eps, restart=restart)
    if np.ndim(as_state(x)) == 1:
        return LagrangianGraph(S, PhasePoint.from_state(as_state(x)))
    return S


def _spectral(A):
    return np.linalg.norm(A, ord=2, axis=(-2, -1))


def _side_limit(model, x, sign, T_max, tol, cfg, t0):
    """Doubling limit of S_{sign t}; per-element acceptance over a batch."""
    batch = x.shape[:-1]
    hist = []
    t = t0
    result = None
    done = np.zeros(batch, dtype=bool)
    how = np.full(batch, "", dtype=object)
    tail = np.full(batch, np.inf)
    t_used = np.full(batch, np.nan)
    while t <= T_max:
        S = _pushed_vertical_states(model, x, sign * t, cfg)
        hist.append(S)
        if result is None:
            result = np.array(S)
        if len(hist) >= 2:
            prev = hist[-2]
            # family must be monotone: S_t decreasing (sign +), increasing (sign -)
            gap = sign * (prev - S)
            low = np.min(np.linalg.eigvalsh(gap), axis=-1)
            if np.any(low[~done] < -1e-7 * (1.0 + _spectral(S)[~done])):
                raise GreenKamError(f"non-monotone Riccati family at t={t} (margin {low.min():.3e})")
            raw = _spectral(S - prev)
            new = (~done) & (raw <= tol)
            result[new] = S[new]
            how[new] = "raw"
            tail[new] = raw[new]
            t_used[new] = t
            done |= new
            if len(hist) >= 3:
                E = 2 * S - prev
                E_prev = 2 * prev - hist[-3]
                ext = _spectral(E - E_prev)
                new = (~done) & (ext <= tol)
                result[new] = E[new]
                how[new] = "extrapolated"
                tail[new] = ext[new]
                t_used[new] = t
                done |= new
            tail[~done] = raw[~done]
        if np.all(done):
            return result, how, tail, t_used
        t *= 2
    raise LimitNotReachedError(
        f"Green limit not reached by T_max={T_max} (tail {np.max(tail):.3e})",
        tail=float(np.max(tail)), horizon=T_max)


def green_bundles_batch(model: TonelliModel, xs, T_max: float = 256.0, tol: float = 1e-6,
                        cfg: FlowConfig = FlowConfig(), t0: float = 1.0,
                        rank_tol: float | None = None) -> list[GreenPair]:
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    sp, how_p, tail_p, tp = _side_limit(model, xs, +1, T_max, tol, cfg, t0)
    sm, how_m, tail_m, tm = _side_limit(model, xs, -1, T_max, tol, cfg, t0)
    pairs = []
    for i, x in enumerate(xs):
        cert = {
            "T_plus": float(tp[i]), "T_minus": float(tm[i]),
            "tail_plus": float(tail_p[i]), "tail_minus": float(tail_m[i]),
            "limit_plus": how_p[i], "limit_minus": how_m[i], "tol": tol,
        }
        pairs.append(assemble_pair(sm[i], sp[i], PhasePoint.from_state(x), rank_tol, cert))
    return pairs


def green_bundles(model: TonelliModel, x, T_max: float = 256.0, tol: float = 1e-6,
                  cfg: FlowConfig = FlowConfig(), t0: float = 1.0,
                  rank_tol: float | None = None) -> GreenPair:
    """Green bundles s-(x), s+(x) as limits of S_{-t}, S_t under doubling of t.

    A side is accepted when consecutive doubled values differ by at most
    ``tol`` (spectral norm).  Families converging only like 1/t (zero
    exponents) are accepted on their Richardson extrapolant 2 S_2t - S_t,
    whose doubling differences are tested the same way.
    """
    return green_bundles_batch(model, as_state(x), T_max, tol, cfg, t0, rank_tol)[0]


# -- diagnostics ------------------------------------------------------------

@dataclass
class GrowthReport:
    times: np.ndarray
    forward: np.ndarray
    backward: np.ndarray
    dist_minus: float
    dist_plus: float
    in_minus: bool
    in_plus: bool
    forward_verdict: str
    backward_verdict: str

    @property
    def growth_factor(self) -> float:
        return float(self.forward[-1] / self.forward[0]) if self.forward[0] > 0 else np.inf

    @property
    def consistent(self) -> bool:
        """Divergence exactly when v is off the corresponding Green bundle."""
        return ((self.forward_verdict == "DIVERGES") == (not self.in_minus)
                and (self.backward_verdict == "DIVERGES") == (not self.in_plus))


def _horizontal_growth(model, x, v, t, cfg, samples):
    x = as_state(x)
    xs, Fs = flow_states(model, x, t, cfg, frame=v[:, None].copy(), keep=True)
    idx = np.unique(np.linspace(0, len(Fs) - 1, samples).round().astype(int))
    norms = np.linalg.norm(Fs[idx, : model.n, 0], axis=-1)
    times = idx * (abs(t) / (len(Fs) - 1))
    return times, norms


def dynamical_criterion_check(model: TonelliModel, x, v, T: float, cfg: FlowConfig = FlowConfig(),
                              pair: GreenPair | None = None, member_tol: float = 1e-5,
                              samples: int = 21, factor: float = 1e3) -> GrowthReport:
    """Horizontal growth of D phi_{+-t} v compared with membership of v in G-/G+."""
    v = v.vector if isinstance(v, TangentVector) else np.asarray(v, dtype=float)
    if pair is None:
        pair = green_bundles(model, x, cfg=cfg)
    times, fwd = _horizontal_growth(model, x, v, T, cfg, samples)
    _, bwd = _horizontal_growth(model, x, v, -T, cfg, samples)

    def verdict(norms):
        return "DIVERGES" if norms[-1] > factor * norms[0] else "BOUNDED"

    dm, dp = pair.s_minus.distance(v), pair.s_plus.distance(v)
    return GrowthReport(times, fwd, bwd, dm, dp, dm <= member_tol, dp <= member_tol,
                        verdict(fwd), verdict(bwd))


@dataclass
class MonotonicityReport:
    times: tuple
    graphs: dict
    margins: list
    verdict: str
    offending: tuple | None = None


def monotonicity_scan(model: TonelliModel, x, times, cfg: FlowConfig = FlowConfig()) -> MonotonicityReport:
    """Check S_{-s} < S_{-t} < S_t < S_s for every 0 < s < t in ``times``.

    Margins are the smallest eigenvalues of the three gaps; the verdict is
    PASS when every margin is positive.
    """
    times = tuple(sorted(float(t) for t in times))
    if not times or times[0] <= 0:
        raise ValueError("times must be positive")
    graphs = {}
    for t in times:
        graphs[t] = pushed_vertical(model, x, t, cfg).S
        graphs[-t] = pushed_vertical(model, x, -t, cfg).S
    lo = lambda A: float(np.min(np.linalg.eigvalsh(A)))
    margins = []
    offending = None
    for i, s in enumerate(times):
        for t in times[i + 1:]:
            m = (lo(graphs[-t] - graphs[-s]), lo(graphs[t] - graphs[-t]), lo(graphs[s] - graphs[t]))
            margins.append({"s": s, "t": t, "margins": m})
            if offending is None and min(m) <= 0:
                offending = (s, t)
    verdict = "PASS" if offending is None else "FAIL"
    return MonotonicityReport(times, graphs, margins, verdict, offending)
