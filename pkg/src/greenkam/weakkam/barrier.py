"""Barrier functions a_t^+(q) = A_t(q_{-t}, q), a_t^-(q) = -A_t(q, q_t) and the comparison with u-, u+.

Both barriers are evaluated on a small patch around q0 from minimising
arcs with fine sub-steps.  Their first derivative at q0 is the discrete
boundary momentum of the central arc; the second derivative is obtained by
transporting the vertical along that arc with the Riccati frame, and is
cross-checked against centred differences of boundary momenta.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import GreenKamError
from ..flow import FlowConfig, flow_states
from ..green import pushed_vertical_along
from ..model import TonelliModel, as_state
from .action import arc_momenta, minimize_arcs
from .analysis import pseudograph
from .laxoleinik import WeakKamPair

SIGNS = ("+", "-")


@dataclass(frozen=True)
class BarrierFunction:
    base: np.ndarray
    t: float
    sign: str
    radius: float
    points: np.ndarray
    values: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d2_fd: np.ndarray
    endpoint: np.ndarray
    notes: list = field(default_factory=list)

    @property
    def center_value(self) -> float:
        i = int(np.argmin(np.linalg.norm(self.points - self.base, axis=-1)))
        return float(self.values[i])

    @property
    def agreement(self) -> float:
        """|d2 (Riccati) - d2 (differences of boundary momenta)|, max entry."""
        return float(np.max(np.abs(self.d2 - self.d2_fd)))

    def remainder(self) -> np.ndarray:
        """a(q) - a(q0) - da(q0).(q - q0) at the patch points."""
        return self.values - self.center_value - (self.points - self.base) @ self.d1


def _patch(q0, radius, per_axis, n):
    s = np.linspace(-radius, radius, 2 * per_axis + 1)
    offs = np.stack(np.meshgrid(*([s] * n), indexing="ij"), -1).reshape(-1, n)
    offs = offs[np.linalg.norm(offs, axis=-1) <= radius + 1e-12]
    return q0 + offs


def _arc_values(model, a, b, t, N, tol):
    batch = minimize_arcs(model, a, b, t, N, tol)
    if not np.all(batch.converged):
        raise GreenKamError(f"barrier arcs did not converge (residual {batch.residual.max():.2e})")
    return batch


def barrier(model: TonelliModel, x0, t: float, sign: str = "+", patch_radius: float = 0.05,
            cfg: FlowConfig = FlowConfig(), sub_step: float = 0.0025, endpoint=None,
            points=None, per_axis: int = 10, fd_step: float = 1e-3,
            tol: float = 1e-10) -> BarrierFunction:
    """a_t^+ (sign '+') or a_t^- (sign '-') on a patch around q0.

    The far endpoint q_{-t} (resp. q_t) is the projection of phi_{-t}(x0)
    (resp. phi_t(x0)) unless ``endpoint`` supplies it as a lifted point.
    Patch points whose arcs carry a conjugate point (non-positive discrete
    Jacobi pivots) are dropped and the radius shrinks accordingly.
    """
    if sign not in SIGNS:
        raise ValueError(f"sign must be one of {SIGNS}")
    if t <= 0:
        raise ValueError("t must be positive")
    x0 = as_state(x0)
    n = model.n
    q0 = x0[:n]
    if endpoint is None:
        xe, _ = flow_states(model, x0, -t if sign == "+" else t, cfg)
        endpoint = xe[:n]
    e = np.atleast_1d(np.asarray(endpoint, dtype=float))
    N = max(8, int(np.ceil(t / sub_step - 1e-9)))
    h = t / N
    pts = _patch(q0, patch_radius, per_axis, n) if points is None else np.atleast_2d(points)
    eye = np.eye(n)
    probes = np.concatenate([q0[None], q0 + fd_step * eye, q0 - fd_step * eye, pts])
    ends = np.broadcast_to(e, probes.shape)
    a, b = (ends, probes) if sign == "+" else (probes, ends)
    batch = _arc_values(model, a, b, t, N, tol)
    notes = []
    # patch points must be reached without conjugate points
    bad = batch.min_pivot[1 + 2 * n:] <= 0
    radius = patch_radius
    if np.any(bad):
        radius = float(np.min(np.linalg.norm(pts[bad] - q0, axis=-1))) * 0.999
        notes.append(f"conjugate point inside patch; radius shrunk to {radius:.4g}")
        warnings.warn(notes[-1], RuntimeWarning)
    if batch.min_pivot[0] <= 0:
        raise GreenKamError("central arc carries a conjugate point")
    keep = np.linalg.norm(pts - q0, axis=-1) <= radius
    P = arc_momenta(model, batch.nodes, h)
    s = 1.0 if sign == "+" else -1.0
    values = s * batch.values
    if sign == "+":
        mom = P[:, -1]
        states = np.concatenate([batch.nodes[0], P[0]], axis=-1)
        S = pushed_vertical_along(model, states, h, cfg)
    else:
        mom = P[:, 0]
        states = np.concatenate([batch.nodes[0], P[0]], axis=-1)[::-1]
        S = pushed_vertical_along(model, states, -h, cfg)
    d2_fd = (mom[1:1 + n] - mom[1 + n:1 + 2 * n]).T / (2 * fd_step)
    d2_fd = 0.5 * (d2_fd + d2_fd.T)
    sel = np.concatenate([[0], 1 + 2 * n + np.nonzero(keep)[0]])
    return BarrierFunction(q0, float(t), sign, radius, probes[sel], values[sel], mom[0],
                           0.5 * (S + S.T), d2_fd, e, notes)


@dataclass
class BarrierComparison:
    q0: np.ndarray
    t: float
    points: np.ndarray
    slack_plus: np.ndarray
    slack_minus: np.ndarray
    tol: float
    verdict: str
    barriers: tuple = field(repr=False, default=())

    @property
    def min_slack(self) -> float:
        return float(min(self.slack_plus.min(), self.slack_minus.min()))


def _node_of(u, q):
    I = np.round(np.atleast_1d(q) * u.m).astype(int) % u.m
    k = I[0]
    for i in range(1, u.n):
        k = k * u.m + I[i]
    return int(k)


def barrier_comparison_check(model: TonelliModel, pair: WeakKamPair, q0, t: float,
                             patch_radius: float = 0.05, cfg: FlowConfig = FlowConfig(),
                             sub_step: float = 0.0025) -> BarrierComparison:
    """Check u- below a_t^+ and a_t^- below u+, both to second order at q0.

    The far endpoints come from following calibrated curves through the
    Lax-Oleinik selectors (round(t / tau) sweeps), which is well conditioned
    where backward integration of a hyperbolic orbit is not.  PASS iff no
    slack is below -5 x (grid interpolation error + fixed-point residuals),
    the interpolation error being estimated by second differences on the patch.
    """
    u_m, u_p = pair.u_minus, pair.u_plus
    gm, gp = pseudograph(model, u_m), pseudograph(model, u_p)
    k0 = _node_of(u_m, q0)
    q0 = u_m.nodes()[k0]
    op = pair.operator
    if op is None:
        raise ValueError("pair carries no Lax-Oleinik operator")
    steps = max(1, int(round(t / pair.tau)))
    e_plus = op.calibrated_path(u_m.values, q0, steps, "negative")[-1]
    e_minus = op.calibrated_path(u_p.values, q0, steps, "positive")[-1]

    # patch = grid nodes around q0, lifted next to it
    reach = int(np.floor(patch_radius * u_m.m + 1e-9))
    r = np.arange(-reach, reach + 1)
    offs = np.stack(np.meshgrid(*([r] * u_m.n), indexing="ij"), -1).reshape(-1, u_m.n)
    offs = offs[np.linalg.norm(offs, axis=-1) <= reach]
    pts = q0 + offs / u_m.m
    idx = np.array([_node_of(u_m, p) for p in pts])

    x_m = np.concatenate([q0, gm.du[k0]])
    x_p = np.concatenate([q0, gp.du[k0]])
    bp = barrier(model, x_m, t, "+", patch_radius, cfg, sub_step, endpoint=e_plus, points=pts)
    bm = barrier(model, x_p, t, "-", patch_radius, cfg, sub_step, endpoint=e_minus, points=pts)
    if len(bp.points) != len(pts) + 1 or len(bm.points) != len(pts) + 1:
        raise GreenKamError("barrier patch shrunk below the comparison patch")

    um, up = u_m.flat(), u_p.flat()
    lhs_plus = um[idx] - um[k0] - (pts - q0) @ gm.du[k0]
    rhs_plus = bp.remainder()[1:]
    lhs_minus = bm.remainder()[1:]
    rhs_minus = up[idx] - up[k0] - (pts - q0) @ gp.du[k0]

    interp = 0.0
    for g in (u_m, u_p):
        v = g.values
        for ax in range(g.n):
            sd = np.abs(np.roll(v, -1, ax) - 2 * v + np.roll(v, 1, ax)).ravel()[idx]
            interp = max(interp, 0.5 * float(sd.max()))
    tol = 5.0 * (interp + pair.residual_minus + pair.residual_plus)
    sp, sm = rhs_plus - lhs_plus, rhs_minus - lhs_minus
    verdict = "PASS" if min(sp.min(), sm.min()) >= -tol else "FAIL"
    return BarrierComparison(q0, float(t), pts, sp, sm, tol, verdict, (bp, bm))
