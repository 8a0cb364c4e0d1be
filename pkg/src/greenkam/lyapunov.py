"""Lyapunov spectra by discrete QR and the zero-exponent count against Green bundles."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UnderflowError
from .flow import FlowConfig, _check_energy, flow_states, flow_vector
from .green import GreenPair, green_bundles
from .model import TonelliModel, as_state


@dataclass(frozen=True)
class LyapunovSpectrum:
    exponents: np.ndarray
    T: float
    slope: np.ndarray
    zero_tol: float
    times: np.ndarray = field(repr=False, default=None)
    history: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return len(self.exponents) // 2

    def pairing_defect(self) -> float:
        return float(np.max(np.abs(self.exponents + self.exponents[::-1])))

    def sum_defect(self) -> float:
        return float(abs(np.sum(self.exponents)))


def _qr_positive(F):
    Q, R = np.linalg.qr(F)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    s = np.where(d < 0, -1.0, 1.0)
    return Q * s[..., None, :], np.abs(d)


def lyapunov_spectra(model: TonelliModel, xs, T: float = 100.0, step: float = 0.5,
                     cfg: FlowConfig = FlowConfig(), burn_in: float = 0.1) -> list[LyapunovSpectrum]:
    """Spectra for a batch of states (B, 2n), orbits advanced together.

    The first ``burn_in`` fraction of the horizon only aligns the frame and
    is not averaged; it removes the O(1/T) bias of the transient.
    """
    if not 0.1 <= step <= 1.0:
        raise ValueError("QR step must lie in [0.1, 1]")
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    B, d = xs.shape
    segments = max(4, int(round(T / step)))
    skip = int(round(burn_in * segments))
    if segments - skip < 4:
        raise ValueError("horizon too short for the burn-in fraction")
    Q = np.broadcast_to(np.eye(d), (B, d, d)).copy()
    x = xs
    acc = np.zeros((B, d))
    times, history = [], []
    for k in range(segments):
        x, F = flow_states(model, x, step, cfg, frame=Q, check=False)
        Q, diag = _qr_positive(F)
        if np.any(diag < 1e-300):
            raise UnderflowError(f"QR diagonal underflow after t={(k + 1) * step}; use a smaller step")
        if k >= skip:
            acc += np.log(diag)
            elapsed = (k + 1 - skip) * step
            times.append(elapsed)
            history.append(np.sort(acc / elapsed, axis=-1)[:, ::-1])
    _check_energy(model, xs, x, segments * step, cfg)
    times = np.asarray(times)
    history = np.stack(history, axis=1)  # (B, K, d)
    i34 = int(np.searchsorted(times, 0.75 * times[-1]))
    out = []
    for b in range(B):
        lam = history[b, -1]
        slope = np.abs(lam - history[b, i34])
        zero_tol = max(1e-2, 5.0 * float(np.max(slope)))
        out.append(LyapunovSpectrum(lam, segments * step, slope, zero_tol, times, history[b]))
    return out


def lyapunov_spectrum(model: TonelliModel, x, T: float = 100.0, step: float = 0.5,
                      cfg: FlowConfig = FlowConfig(), burn_in: float = 0.1) -> LyapunovSpectrum:
    return lyapunov_spectra(model, as_state(x), T, step, cfg, burn_in)[0]


@dataclass(frozen=True)
class SpectrumClasses:
    zero: int
    pos: int
    neg: int
    indeterminate: bool

    def counts(self) -> tuple:
        return (self.zero, self.pos, self.neg)


def classify_spectrum(spec, zero_tol: float | None = None) -> SpectrumClasses:
    """Count zero, positive and negative exponents.

    ``spec`` is a LyapunovSpectrum or a bare sequence of exponents.  An
    exponent within a factor 2 of ``zero_tol`` marks the result indeterminate.
    """
    if isinstance(spec, LyapunovSpectrum):
        lam = spec.exponents
        zero_tol = spec.zero_tol if zero_tol is None else zero_tol
    else:
        lam = np.asarray(spec, dtype=float)
        zero_tol = 1e-2 if zero_tol is None else zero_tol
    a = np.abs(lam)
    zero = a <= zero_tol
    ambiguous = bool(np.any((a > 0.5 * zero_tol) & (a < 2.0 * zero_tol)))
    return SpectrumClasses(int(zero.sum()), int(np.sum(~zero & (lam > 0))),
                           int(np.sum(~zero & (lam < 0))), ambiguous)


@dataclass
class TheoremTwoReport:
    p_from_green: int
    zero_count: int
    pos_count: int
    neg_count: int
    verdict: str
    lower_bound_ok: bool
    caveats: list
    spectrum: LyapunovSpectrum = field(repr=False)
    pair: GreenPair = field(repr=False)

    @property
    def counts(self) -> tuple:
        return (self.zero_count, self.pos_count, self.neg_count)


def verify_theorem_two(model: TonelliModel, x, T: float = 100.0, cfg: FlowConfig = FlowConfig(),
                       step: float = 0.5, pair: GreenPair | None = None,
                       spectrum: LyapunovSpectrum | None = None,
                       critical_tol: float = 1e-9) -> TheoremTwoReport:
    """Compare dim(G- cap G+) with the number of zero Lyapunov exponents.

    Consistency means 2p zero exponents and n - p of each sign.  At a rest
    point the verdict carries a caveat: the Dirac measure there is outside
    the range of the equivalence being tested.
    """
    x = as_state(x)
    if pair is None:
        pair = green_bundles(model, x, cfg=cfg)
    if spectrum is None:
        spectrum = lyapunov_spectrum(model, x, T, step, cfg)
    cls = classify_spectrum(spectrum)
    p, n = pair.p_dim, model.n
    lower = cls.zero >= 2 * p
    caveats = []
    if not lower:
        verdict = "INCONSISTENT"
    elif cls.indeterminate:
        verdict = "INDETERMINATE"
    elif cls.zero == 2 * p and cls.pos == cls.neg == n - p:
        verdict = "CONSISTENT"
    else:
        verdict = "INCONSISTENT"
    if np.linalg.norm(flow_vector(model, x).vector) <= critical_tol:
        caveats.append("base point is a critical point of H: Dirac measure at a rest point")
        if verdict == "CONSISTENT":
            verdict = "CONSISTENT-WITH-CAVEAT"
    caveats.append("invariant measure fixed by construction; continuous-time averages")
    return TheoremTwoReport(p, cls.zero, cls.pos, cls.neg, verdict, lower, caveats, spectrum, pair)


def stable_direction(model: TonelliModel, x, T: float = 20.0, step: float = 0.5,
                     cfg: FlowConfig = FlowConfig(), k: int = 1) -> np.ndarray:
    """Orthonormal basis (2n x k) of the k most contracted directions at x.

    A frame started at phi_T(x) is pulled back to x with QR re-orthonormalisation;
    its leading columns align with the directions expanded by the backward
    flow, i.e. the forward-stable ones.
    """
    x = as_state(x)
    d = x.shape[-1]
    y, _ = flow_states(model, x, T, cfg)
    segments = max(1, int(round(T / step)))
    Q = np.eye(d)
    for _ in range(segments):
        y, F = flow_states(model, y, -T / segments, cfg, frame=Q, check=False)
        Q, _ = _qr_positive(F)
    return Q[:, :k]
