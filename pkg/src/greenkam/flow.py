"""Hamiltonian flow and its linearisation (the cocycle D phi_t).

Separable models are stepped with a splitting scheme (leapfrog or its
fourth-order triple-jump composition); everything else uses the implicit
midpoint rule.  Tangent frames are pushed with the exact derivative of the
numerical step, so the discrete cocycle is symplectic to round-off and is
consistent with the base orbit by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IntegrationAccuracyError
from .model import PhasePoint, TangentVector, TonelliModel, as_state

_CBRT2 = 2.0 ** (1.0 / 3.0)
_YOSHIDA = (1.0 / (2.0 - _CBRT2), -_CBRT2 / (2.0 - _CBRT2), 1.0 / (2.0 - _CBRT2))

METHODS = ("auto", "leapfrog", "yoshida4", "implicit-midpoint")


@dataclass(frozen=True)
class FlowConfig:
    step: float = 1e-2
    method: str = "auto"
    max_energy_drift: float = 1e-6
    horizon: float = 1e3

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")

    def resolve(self, model: TonelliModel) -> str:
        if self.method == "auto":
            return "yoshida4" if model.separable else "implicit-midpoint"
        if self.method in ("leapfrog", "yoshida4") and not model.separable:
            raise ValueError(f"{self.method} needs a separable Hamiltonian")
        return self.method


@dataclass(frozen=True)
class CocycleMatrix:
    """Matrix of D phi_t in the block order (delta q, delta p)."""

    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[-1] // 2

    @property
    def blocks(self):
        n = self.n
        M = self.entries
        return M[..., :n, :n], M[..., :n, n:], M[..., n:, :n], M[..., n:, n:]

    def symplectic_defect(self, relative: bool = False) -> float:
        """max |M^T J M - J|; with ``relative``, divided by max(1, |M|^2).

        Round-off in M^T J M scales with |M|^2, so along hyperbolic orbits
        only the relative defect measures loss of symplecticity.
        """
        J = symplectic_form(self.n)
        M = self.entries
        d = np.max(np.abs(np.swapaxes(M, -1, -2) @ J @ M - J), axis=(-2, -1))
        if relative:
            d = d / np.maximum(1.0, np.linalg.norm(M, ord=2, axis=(-2, -1)) ** 2)
        return float(np.max(d))


def symplectic_form(n: int) -> np.ndarray:
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return J


# -- one-step maps ----------------------------------------------------------

def _leapfrog(model, x, dt, F=None):
    n = model.n
    q, p = x[..., :n], x[..., n:]
    h = dt[..., None]
    p = p - 0.5 * h * model.potential_grad(q)
    if F is not None:
        Fq, Fp = F[..., :n, :], F[..., n:, :]
        Fp = Fp - 0.5 * h[..., None] * (model.potential_hess(q) @ Fq)
    q = q + h * model.kinetic_grad(p)
    if F is not None:
        Fq = Fq + h[..., None] * Fp
    p = p - 0.5 * h * model.potential_grad(q)
    x = np.concatenate([q, p], axis=-1)
    if F is None:
        return x, None
    Fp = Fp - 0.5 * h[..., None] * (model.potential_hess(q) @ Fq)
    return x, np.concatenate([Fq, Fp], axis=-2)


def _yoshida4(model, x, dt, F=None):
    for w in _YOSHIDA:
        x, F = _leapfrog(model, x, w * dt, F)
    return x, F


def _implicit_midpoint(model, x, dt, F=None, tol=1e-14, max_iter=50):
    n = model.n
    J = symplectic_form(n)
    h = dt[..., None]
    y = x + h * (J @ model.gradient(x[..., :n], x[..., n:])[..., None])[..., 0]
    eye = np.eye(2 * n)
    for _ in range(max_iter):
        m = 0.5 * (x + y)
        g = model.gradient(m[..., :n], m[..., n:])
        r = y - x - h * (J @ g[..., None])[..., 0]
        if np.max(np.abs(r), initial=0.0) < tol * (1.0 + np.max(np.abs(y), initial=0.0)):
            break
        A = eye - 0.5 * h[..., None] * (J @ model.hessian(m[..., :n], m[..., n:]))
        y = y - np.linalg.solve(A, r[..., None])[..., 0]
    else:
        raise IntegrationAccuracyError("implicit midpoint iteration did not converge")
    if F is None:
        return y, None
    m = 0.5 * (x + y)
    JH = J @ model.hessian(m[..., :n], m[..., n:])
    A = eye - 0.5 * h[..., None] * JH
    B = eye + 0.5 * h[..., None] * JH
    return y, np.linalg.solve(A, B @ F)


_STEPPERS = {"leapfrog": _leapfrog, "yoshida4": _yoshida4, "implicit-midpoint": _implicit_midpoint}


def step_map(model: TonelliModel, x, dt, cfg: FlowConfig, F=None):
    """Advance states ``x`` (..., 2n) by ``dt`` and push the frame ``F`` (..., 2n, k)."""
    x = np.asarray(x, dtype=float)
    dt = np.broadcast_to(np.asarray(dt, dtype=float), x.shape[:-1])
    return _STEPPERS[cfg.resolve(model)](model, x, dt, F)


def _n_steps(t, cfg: FlowConfig) -> int:
    t_abs = float(np.max(np.abs(t), initial=0.0))
    if t_abs > cfg.horizon:
        raise ValueError(f"|t|={t_abs} exceeds the configured horizon {cfg.horizon}")
    return max(1, int(np.ceil(t_abs / cfg.step - 1e-9)))


def _check_energy(model, x0, x1, t, cfg: FlowConfig):
    n = model.n
    e0 = model.hamiltonian(x0[..., :n], x0[..., n:])
    e1 = model.hamiltonian(x1[..., :n], x1[..., n:])
    drift = np.abs(e1 - e0)
    budget = cfg.max_energy_drift * np.maximum(np.abs(t), cfg.step)
    if np.any(drift > budget):
        worst = float(np.max(drift - budget))
        raise IntegrationAccuracyError(
            f"energy drift exceeds budget by {worst:.3e} over t={t}",
            drift=float(np.max(drift)), budget=float(np.min(budget)))


def flow_states(model: TonelliModel, x, t, cfg: FlowConfig = FlowConfig(), *,
                frame=None, keep: bool = False, check: bool = True):
    """Integrate lifted states over time ``t`` (scalar or per-state array).

    Returns ``(x_t, F_t)`` or, with ``keep``, the full trajectories
    ``(xs, Fs)`` stacked on a new leading axis of length ``steps + 1``.
    """
    x0 = np.asarray(as_state(x), dtype=float)
    t = np.asarray(t, dtype=float)
    steps = _n_steps(t, cfg)
    dt = np.broadcast_to(t / steps, x0.shape[:-1])
    x, F = x0, frame
    xs, Fs = [x], [F]
    for _ in range(steps):
        x, F = step_map(model, x, dt, cfg, F)
        if keep:
            xs.append(x)
            Fs.append(F)
    if not np.all(np.isfinite(x)):
        raise IntegrationAccuracyError("orbit left the finite domain")
    if check:
        _check_energy(model, x0, x, t, cfg)
    if keep:
        return np.stack(xs), (np.stack(Fs) if frame is not None else None)
    return x, F


def integrate(model: TonelliModel, x, t: float, cfg: FlowConfig = FlowConfig()) -> PhasePoint:
    """phi_t(x), reported with q reduced to [0, 1)^n."""
    xt, _ = flow_states(model, x, t, cfg)
    return PhasePoint.from_state(xt)


def linearized_flow(model: TonelliModel, x, t: float, cfg: FlowConfig = FlowConfig()) -> CocycleMatrix:
    """D phi_t(x) from joint integration of orbit and variational system."""
    x0 = as_state(x)
    eye = np.broadcast_to(np.eye(2 * model.n), x0.shape[:-1] + (2 * model.n, 2 * model.n))
    _, F = flow_states(model, x0, t, cfg, frame=eye.copy())
    return CocycleMatrix(F)


def flow_vector(model: TonelliModel, x) -> TangentVector:
    """Hamiltonian vector field X_H = (dH/dp, -dH/dq)."""
    q, p = model.split(x)
    return TangentVector(model.dh_dp(q, p), -model.dh_dq(q, p))


def graph_transform(M, S):
    """Image of the graph of ``S`` under the linear map ``M``: (C + D S)(A + B S)^-1."""
    n = S.shape[-1]
    A, B, C, D = M[..., :n, :n], M[..., :n, n:], M[..., n:, :n], M[..., n:, n:]
    X = A + B @ S
    Y = C + D @ S
    return np.swapaxes(np.linalg.solve(np.swapaxes(X, -1, -2), np.swapaxes(Y, -1, -2)), -1, -2)
