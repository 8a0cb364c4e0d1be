"""Tonelli Hamiltonians on flat tori and the Legendre correspondence.

All evaluators broadcast over leading axes: ``q`` and ``p`` have shape
``(..., n)``, scalar outputs have shape ``(...)`` and Hessian blocks
``(..., n, n)``.  The built-in catalog is made of mechanical Hamiltonians
``H = 1/2 |p|^2 + omega.p + V(q)``, which are separable and therefore
admit explicit symplectic splitting schemes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConvexityError, GreenKamError, ModelDomainError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TorusPoint:
    """Point of the unit torus, stored by its representative in [0, 1)^n."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coords, dtype=float))
        object.__setattr__(self, "coords", wrap(c))

    @property
    def n(self) -> int:
        return self.coords.shape[-1]


def wrap(q):
    """Canonical representative of ``q`` modulo 1, in [0, 1)."""
    r = np.mod(q, 1.0)
    # np.mod can return exactly 1.0 for tiny negative inputs
    return np.where(r >= 1.0, 0.0, r)


def torus_delta(a, b):
    """Shortest lifted displacement ``b - a`` (each component in [-1/2, 1/2))."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    return d - np.floor(d + 0.5)


def torus_distance(a, b):
    """Flat distance on the unit torus."""
    return np.linalg.norm(torus_delta(a, b), axis=-1)


@dataclass(frozen=True)
class PhasePoint:
    """Point (q, p) of the cotangent bundle of the torus."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if q.shape != p.shape:
            raise ValueError(f"q and p shapes differ: {q.shape} vs {p.shape}")
        object.__setattr__(self, "q", wrap(q))
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.q.shape[-1]

    @property
    def state(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_state(cls, x) -> "PhasePoint":
        x = np.asarray(x, dtype=float)
        n = x.shape[-1] // 2
        return cls(x[:n], x[n:])


@dataclass(frozen=True)
class TangentVector:
    """Tangent vector (X, Y) = (delta q, delta p); X is the horizontal part."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "X", np.atleast_1d(np.asarray(self.X, dtype=float)))
        object.__setattr__(self, "Y", np.atleast_1d(np.asarray(self.Y, dtype=float)))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.X, self.Y])

    def is_transverse(self, tol: float = 0.0) -> bool:
        return bool(np.linalg.norm(self.X) > tol)


def as_state(x) -> np.ndarray:
    """Array view ``(..., 2n)`` of a PhasePoint or an array-like state."""
    if isinstance(x, PhasePoint):
        return x.state
    return np.asarray(x, dtype=float)


class LagrangianJet(NamedTuple):
    """Value and derivatives of L at (q, v); ``Lqv[..., i, j] = d2L/dq_i dv_j``."""

    L: np.ndarray
    Lq: np.ndarray
    Lv: np.ndarray
    Lqq: np.ndarray
    Lqv: np.ndarray
    Lvv: np.ndarray


class TonelliModel:
    """Base class: subclasses provide H, its gradient and its Hessian blocks.

    Only ``hamiltonian``, ``dh_dq``, ``dh_dp``, ``h_qq``, ``h_qp`` and ``h_pp``
    must be overridden.  ``h_qp[..., i, j]`` is d2H/dq_i dp_j.
    """

    name: str = "abstract"
    n: int = 1
    separable: bool = False
    translation_invariant: bool = False
    even_in_p: bool = False

    def __init__(self, **parameters):
        self.parameters = dict(parameters)

    # -- evaluators -------------------------------------------------------
    def hamiltonian(self, q, p):
        raise NotImplementedError

    def dh_dq(self, q, p):
        raise NotImplementedError

    def dh_dp(self, q, p):
        raise NotImplementedError

    def h_qq(self, q, p):
        raise NotImplementedError

    def h_qp(self, q, p):
        raise NotImplementedError

    def h_pp(self, q, p):
        raise NotImplementedError

    def gradient(self, q, p):
        return np.concatenate([self.dh_dq(q, p), self.dh_dp(q, p)], axis=-1)

    def hessian(self, q, p):
        qq, qp, pp = self.h_qq(q, p), self.h_qp(q, p), self.h_pp(q, p)
        top = np.concatenate([qq, qp], axis=-1)
        bottom = np.concatenate([np.swapaxes(qp, -1, -2), pp], axis=-1)
        return np.concatenate([top, bottom], axis=-2)

    def split(self, x):
        x = as_state(x)
        return x[..., : self.n], x[..., self.n :]

    # -- Lagrangian side --------------------------------------------------
    def lagrangian_jet(self, q, v) -> LagrangianJet:
        """L and its derivatives through the Legendre transform."""
        p = _newton_momentum(self, q, v)
        hpp_inv = np.linalg.inv(self.h_pp(q, p))
        hqp = self.h_qp(q, p)
        L = np.einsum("...i,...i->...", p, v) - self.hamiltonian(q, p)
        Lqv = -hqp @ hpp_inv
        Lqq = -self.h_qq(q, p) + hqp @ hpp_inv @ np.swapaxes(hqp, -1, -2)
        return LagrangianJet(L, -self.dh_dq(q, p), p, Lqq, Lqv, hpp_inv)

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self.parameters.items())
        return f"{self.name}({params})"


class MechanicalModel(TonelliModel):
    """H(q, p) = 1/2 |p|^2 + omega.p + V(q)."""

    separable = True

    def __init__(self, n: int, omega=None, **parameters):
        super().__init__(**parameters)
        self.n = n
        self.omega = np.zeros(n) if omega is None else np.asarray(omega, dtype=float)
        self.even_in_p = not np.any(self.omega)

    def potential(self, q):
        raise NotImplementedError

    def potential_grad(self, q):
        raise NotImplementedError

    def potential_hess(self, q):
        raise NotImplementedError

    def kinetic_grad(self, p):
        return p + self.omega

    def hamiltonian(self, q, p):
        p = np.asarray(p, dtype=float)
        return 0.5 * np.sum(p * p, axis=-1) + p @ self.omega + self.potential(q)

    def dh_dq(self, q, p):
        return self.potential_grad(q) + np.zeros_like(np.asarray(p, dtype=float))

    def dh_dp(self, q, p):
        return self.kinetic_grad(np.asarray(p, dtype=float)) + 0.0 * np.asarray(q, dtype=float)

    def h_qq(self, q, p):
        return self.potential_hess(q) + np.zeros(np.shape(p)[:-1] + (self.n, self.n))

    def h_qp(self, q, p):
        shape = np.broadcast_shapes(np.shape(q)[:-1], np.shape(p)[:-1])
        return np.zeros(shape + (self.n, self.n))

    def h_pp(self, q, p):
        shape = np.broadcast_shapes(np.shape(q)[:-1], np.shape(p)[:-1])
        return np.broadcast_to(np.eye(self.n), shape + (self.n, self.n)).copy()

    def lagrangian_jet(self, q, v):
        # closed form: L = 1/2 |v - omega|^2 - V(q)
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        w = v - self.omega
        shape = np.broadcast_shapes(q.shape[:-1], v.shape[:-1])
        L = 0.5 * np.sum(w * w, axis=-1) - self.potential(q)
        eye = np.broadcast_to(np.eye(self.n), shape + (self.n, self.n)).copy()
        Lq = -self.potential_grad(q) + np.zeros_like(w)
        Lqq = -self.potential_hess(q) + np.zeros(shape + (self.n, self.n))
        return LagrangianJet(L, Lq, w + 0.0 * q, Lqq, np.zeros_like(eye), eye)


class FreeRotor(MechanicalModel):
    name = "FreeRotor"
    translation_invariant = True

    def __init__(self, n: int = 1):
        super().__init__(int(n))
        self.parameters = {"n": int(n)}

    def potential(self, q):
        return np.zeros(np.shape(q)[:-1])

    def potential_grad(self, q):
        return np.zeros(np.shape(q))

    def potential_hess(self, q):
        return np.zeros(np.shape(q)[:-1] + (self.n, self.n))


class Pendulum(MechanicalModel):
    """H = 1/2 p^2 + amplitude * cos(2 pi q)."""

    name = "Pendulum"

    def __init__(self, amplitude: float = 1.0):
        super().__init__(1)
        self.amplitude = float(amplitude)
        self.parameters = {"amplitude": self.amplitude}

    def potential(self, q):
        return self.amplitude * np.cos(TWO_PI * np.asarray(q, dtype=float)[..., 0])

    def potential_grad(self, q):
        return -self.amplitude * TWO_PI * np.sin(TWO_PI * np.asarray(q, dtype=float))

    def potential_hess(self, q):
        q = np.asarray(q, dtype=float)
        return (-self.amplitude * TWO_PI**2 * np.cos(TWO_PI * q))[..., None]


class ManeRotor(MechanicalModel):
    """H = 1/2 |p|^2 + p.omega on T^2, i.e. L = 1/2 |v - omega|^2."""

    name = "ManeRotor"
    translation_invariant = True

    def __init__(self, omega1: float = 1.0, omega2: float = float(np.sqrt(2.0))):
        super().__init__(2, omega=[omega1, omega2])
        self.parameters = {"omega1": float(omega1), "omega2": float(omega2)}

    def potential(self, q):
        return np.zeros(np.shape(q)[:-1])

    def potential_grad(self, q):
        return np.zeros(np.shape(q))

    def potential_hess(self, q):
        return np.zeros(np.shape(q)[:-1] + (2, 2))


class MechanicalT2(MechanicalModel):
    """H = 1/2 |p|^2 + a1 cos(2 pi q1) + a2 cos(2 pi q2) + b cos(2 pi (q1 + q2))."""

    name = "MechanicalT2"

    def __init__(self, a1: float = 1.0, a2: float = 0.5, b: float = 0.2):
        super().__init__(2)
        self.a1, self.a2, self.b = float(a1), float(a2), float(b)
        self.parameters = {"a1": self.a1, "a2": self.a2, "b": self.b}

    def potential(self, q):
        q = TWO_PI * np.asarray(q, dtype=float)
        return (
            self.a1 * np.cos(q[..., 0])
            + self.a2 * np.cos(q[..., 1])
            + self.b * np.cos(q[..., 0] + q[..., 1])
        )

    def potential_grad(self, q):
        q = TWO_PI * np.asarray(q, dtype=float)
        s = self.b * np.sin(q[..., 0] + q[..., 1])
        g1 = self.a1 * np.sin(q[..., 0]) + s
        g2 = self.a2 * np.sin(q[..., 1]) + s
        return -TWO_PI * np.stack([g1, g2], axis=-1)

    def potential_hess(self, q):
        q = TWO_PI * np.asarray(q, dtype=float)
        c = self.b * np.cos(q[..., 0] + q[..., 1])
        h11 = self.a1 * np.cos(q[..., 0]) + c
        h22 = self.a2 * np.cos(q[..., 1]) + c
        out = np.stack([np.stack([h11, c], -1), np.stack([c, h22], -1)], -2)
        return -TWO_PI**2 * out


MODELS: dict[str, Callable[..., TonelliModel]] = {
    "FreeRotor": FreeRotor,
    "Pendulum": Pendulum,
    "ManeRotor": ManeRotor,
    "MechanicalT2": MechanicalT2,
}


def list_models() -> list[str]:
    return sorted(MODELS)


def make_model(name: str, validate: bool = True, **parameters) -> TonelliModel:
    """Instantiate a catalog model; derivatives are checked unless ``validate`` is off."""
    try:
        factory = MODELS[name]
    except KeyError:
        raise GreenKamError(f"unknown model {name!r}; known: {list_models()}") from None
    model = factory(**parameters)
    if validate:
        check_derivatives(model)
    return model


def check_derivatives(model: TonelliModel, samples: int = 16, step: float = 1e-5,
                      rtol: float = 1e-6, seed: int = 0) -> float:
    """Compare analytic derivatives with centred finite differences.

    Returns the worst relative error; raises if it exceeds ``rtol`` or if
    H_pp fails to be positive definite at a sample.
    """
    rng = np.random.default_rng(seed)
    n = model.n
    q = rng.random((samples, n))
    p = rng.normal(scale=2.0, size=(samples, n))
    worst = 0.0

    def rel(a, b):
        return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))

    eye = np.eye(n)
    for k in range(n):
        dq = step * eye[k]
        fd_h = (model.hamiltonian(q + dq, p) - model.hamiltonian(q - dq, p)) / (2 * step)
        worst = max(worst, rel(fd_h, model.dh_dq(q, p)[:, k]))
        fd_h = (model.hamiltonian(q, p + dq) - model.hamiltonian(q, p - dq)) / (2 * step)
        worst = max(worst, rel(fd_h, model.dh_dp(q, p)[:, k]))
        fd = (model.gradient(q + dq, p) - model.gradient(q - dq, p)) / (2 * step)
        worst = max(worst, rel(fd, model.hessian(q, p)[:, k, :]))
        fd = (model.gradient(q, p + dq) - model.gradient(q, p - dq)) / (2 * step)
        worst = max(worst, rel(fd, model.hessian(q, p)[:, n + k, :]))
    if worst > rtol:
        raise GreenKamError(f"{model.name}: derivative check failed (rel err {worst:.2e})")
    if np.min(np.linalg.eigvalsh(model.h_pp(q, p))) <= 0:
        raise GreenKamError(f"{model.name}: H_pp not positive definite")
    return worst


# -- operations ------------------------------------------------------------

def eval_hamiltonian(model: TonelliModel, x) -> float | np.ndarray:
    q, p = model.split(x)
    h = model.hamiltonian(q, p)
    if not np.all(np.isfinite(h)):
        raise ModelDomainError(f"{model.name}: non-finite energy at {x!r}")
    return float(h) if np.ndim(h) == 0 else h


def _newton_momentum(model: TonelliModel, q, v, max_iter: int = 50, tol: float = 1e-13):
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    p = np.array(np.broadcast_to(v, np.broadcast_shapes(q.shape, v.shape)), dtype=float)
    for _ in range(max_iter):
        r = model.dh_dp(q, p) - v
        if np.max(np.abs(r), initial=0.0) <= tol * (1.0 + np.max(np.abs(v), initial=0.0)):
            return p
        p = p - np.linalg.solve(model.h_pp(q, p), r[..., None])[..., 0]
    r = model.dh_dp(q, p) - v
    if np.max(np.abs(r), initial=0.0) <= 1e3 * tol * (1.0 + np.max(np.abs(v), initial=0.0)):
        return p
    raise ConvexityError(f"{model.name}: Legendre inversion did not converge in {max_iter} steps")


def legendre(model: TonelliModel, q, v):
    """Momentum p with dH/dp(q, p) = v, and L(q, v) = p.v - H(q, p)."""
    q = q.coords if isinstance(q, TorusPoint) else np.asarray(q, dtype=float)
    q = np.atleast_1d(q)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    p = _newton_momentum(model, q, v)
    L = np.einsum("...i,...i->...", p, v) - model.hamiltonian(q, p)
    if np.ndim(L) == 0:
        L = float(L)
    return p, L


def legendre_inverse(model: TonelliModel, x) -> np.ndarray:
    """Velocity v = dH/dp(q, p)."""
    q, p = model.split(x)
    return model.dh_dp(q, p)
