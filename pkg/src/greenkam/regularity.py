"""Contingent cones of sampled sets and the cone-versus-Green-bundle inequalities.

A cone is estimated from secants (sample - base) / |sample - base| grouped
by distance shells.  Within a shell, directions are clustered by complete
linkage at a fixed angle; a direction enters the cone only if clusters
matching it (within ``drift_tol``) are found in at least three shells, and
it is reported at its smallest scale.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .flow import FlowConfig
from .green import GreenPair, green_bundles, green_bundles_batch
from .lyapunov import classify_spectrum, lyapunov_spectra
from .model import PhasePoint, TangentVector, TonelliModel, as_state, torus_delta

CLUSTER_ANGLE = 0.05
MAX_PER_SHELL = 400


@dataclass(frozen=True)
class ConeEstimate:
    base: np.ndarray
    directions: np.ndarray
    scales: list
    drift: np.ndarray
    radii: np.ndarray
    status: str = "OK"

    @property
    def n(self) -> int:
        return self.base.shape[-1] // 2

    def tangent_vectors(self) -> list:
        n = self.n
        return [TangentVector(d[:n], d[n:]) for d in self.directions]


def _samples_array(samples):
    if isinstance(samples, np.ndarray):
        return np.atleast_2d(samples.astype(float))
    return np.array([as_state(s) for s in samples], dtype=float)


def _secants(samples, base):
    n = base.shape[-1] // 2
    d = samples - base
    d[:, :n] = torus_delta(base[:n], samples[:, :n])
    return d


def _angle_clusters(units, angle):
    if len(units) == 1:
        return np.array([1])
    cos_dist = pdist(units, "cosine")
    Z = linkage(np.clip(cos_dist, 0.0, 2.0), method="complete")
    return fcluster(Z, 1.0 - np.cos(angle), criterion="distance")


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def contingent_cone(samples, base, radii, drift_tol: float = 0.05, min_shells: int = 3,
                    angle: float = CLUSTER_ANGLE, rng: np.random.Generator | None = None,
                    min_samples: int = 20, min_cluster: int = 3) -> ConeEstimate:
    """Estimate the contingent cone of the sampled set at ``base``.

    ``radii`` are decreasing and must span at least two decades; shell j is
    (radii[j+1], radii[j]].  Directions keep their sign, so one-sided cones
    are resolved.  Shell clusters with fewer than ``min_cluster`` secants are
    ignored.  A base without enough nearby samples gives an empty cone with
    status INSUFFICIENT-SAMPLES.
    """
    base = np.asarray(as_state(base), dtype=float)
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    if len(radii) < 2 or radii[0] / radii[-1] < 100 * (1 - 1e-9):
        raise ValueError("radii must span at least two decades")
    rng = rng if rng is not None else np.random.default_rng(0)
    X = _samples_array(samples)
    d = _secants(X, base)
    dist = np.linalg.norm(d, axis=-1)
    empty = ConeEstimate(base, np.zeros((0, base.size)), [], np.zeros(0), radii, "INSUFFICIENT-SAMPLES")
    inside = (dist > 0) & (dist <= radii[0])
    if inside.sum() < min_samples:
        return empty
    cents, shell_of = [], []
    for j in range(len(radii) - 1):
        sel = np.nonzero((dist > radii[j + 1]) & (dist <= radii[j]))[0]
        if sel.size == 0:
            continue
        if sel.size > MAX_PER_SHELL:
            sel = np.sort(rng.choice(sel, MAX_PER_SHELL, replace=False))
        u = _unit(d[sel])
        labels = _angle_clusters(u, angle)
        for lab in np.unique(labels):
            if np.sum(labels == lab) < min_cluster:
                continue
            cents.append(_unit(u[labels == lab].mean(axis=0)))
            shell_of.append(j)
    if not cents:
        return empty
    cents = np.array(cents)
    shell_of = np.array(shell_of)
    groups = _angle_clusters(cents, drift_tol)
    dirs, scales, drift = [], [], []
    for g in np.unique(groups):
        members = np.nonzero(groups == g)[0]
        shells = np.unique(shell_of[members])
        if shells.size < min_shells:
            continue
        finest = members[shell_of[members] == shells.max()]
        dirs.append(_unit(cents[finest].mean(axis=0)))
        scales.append([float(radii[s + 1]) for s in shells])
        cosines = np.clip(cents[members] @ dirs[-1], -1.0, 1.0)
        drift.append(float(np.max(np.arccos(cosines))))
    if not dirs:
        return empty
    order = np.lexsort(np.array(dirs).T[::-1])
    return ConeEstimate(base, np.array(dirs)[order], [scales[i] for i in order],
                        np.array(drift)[order], radii, "OK")


# -- inequalities ---------------------------------------------------------------

@dataclass
class RegularityReport:
    side: str
    directions: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    rhs_projected: np.ndarray
    sampling_error: float
    verdict: str
    pair: GreenPair | None = field(repr=False, default=None)
    notes: list = field(default_factory=list)

    @property
    def slack(self) -> np.ndarray:
        return self.rhs - self.lhs

    @property
    def slack_projected(self) -> np.ndarray:
        return self.rhs_projected - self.lhs

    @property
    def min_slack(self) -> float:
        return float(np.min(self.slack)) if self.slack.size else float("nan")


def cone_inequality(pair: GreenPair, X, Y, side: str = "minus"):
    """LHS |Y - s~ X| and the two bounds 2 sqrt(|ds|) sqrt(ds(X,X)) and 2 Lambda |p X|."""
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    st = pair.tilde_minus if side == "minus" else pair.tilde_plus
    ds = pair.delta
    lam = pair.lam
    lhs = np.linalg.norm(Y - X @ st.T, axis=-1)
    quad = np.maximum(np.einsum("ki,ij,kj->k", X, ds, X), 0.0)
    rhs = 2.0 * np.sqrt(lam) * np.sqrt(quad)
    rhs_p = 2.0 * lam * np.linalg.norm(X @ pair.projector.T, axis=-1)
    return lhs, rhs, rhs_p


def theorem_three_check(model: TonelliModel, base, cone: ConeEstimate, pair_side: str = "minus",
                        cfg: FlowConfig = FlowConfig(), pair: GreenPair | None = None,
                        spacing: float = 0.0) -> RegularityReport:
    """Slack of |Y - s~(x) X| <= 2 sqrt(|ds|) sqrt(ds(X, X)) over the cone directions.

    The sampling error is (1 + |s~| + 2 Lambda) times the larger of the
    measured cone drift and ``spacing`` (pass the grid spacing when the
    samples come from a pseudograph), plus the error 3 tol of s~ carried over
    from the Green limits; INEQUALITY-VIOLATION is declared only below -5
    times that error.
    """
    if pair_side not in ("minus", "plus"):
        raise ValueError("pair_side must be 'minus' or 'plus'")
    base = as_state(base)
    if pair is None:
        pair = green_bundles(model, base, cfg=cfg)
    n = model.n
    dirs = cone.directions
    if cone.status != "OK" or len(dirs) == 0:
        z = np.zeros(0)
        return RegularityReport(pair_side, dirs, z, z, z, float("nan"), "INSUFFICIENT-SAMPLES", pair)
    lhs, rhs, rhs_p = cone_inequality(pair, dirs[:, :n], dirs[:, n:], pair_side)
    st = pair.tilde_minus if pair_side == "minus" else pair.tilde_plus
    err = (1.0 + np.linalg.norm(st, 2) + 2.0 * pair.lam) * max(float(np.max(cone.drift)), spacing)
    # s~ = 2 s- - s+ inherits three times the accuracy of the Green limits
    err += 3.0 * float(pair.certificate.get("tol", pair.rank_tol))
    worst = min(float(np.min(rhs - lhs)), float(np.min(rhs_p - lhs)))
    verdict = "INEQUALITY-VIOLATION" if worst < -5.0 * err else "C1-REGULAR-CONSISTENT"
    notes = ["verdict states consistency with C1-regularity at the sampled scales, not a proof"]
    return RegularityReport(pair_side, dirs, lhs, rhs, rhs_p, float(err), verdict, pair, notes)


# -- C1 diagnostic ----------------------------------------------------------------

@dataclass
class BaseVerdict:
    base: np.ndarray
    verdict: str
    max_angle: float
    directions: int
    exponents: np.ndarray


@dataclass
class C1Report:
    bases: list
    fraction_pass: float
    verdict: str
    angle_tol: float
    notes: list = field(default_factory=list)

    def counts(self) -> dict:
        out: dict = {}
        for b in self.bases:
            out[b.verdict] = out.get(b.verdict, 0) + 1
        return out


def default_radii(samples, k: int = 9) -> np.ndarray:
    """Two-decade geometric schedule starting at 1.5 x the typical sample spacing."""
    X = _samples_array(samples)
    n = X.shape[1] // 2
    tree = cKDTree(np.mod(X[:, :n], 1.0), boxsize=1.0)
    probe = X[:: max(1, len(X) // 200), :n]
    dd, _ = tree.query(np.mod(probe, 1.0), k=2)
    h = float(np.median(dd[:, 1]))
    lo = 1.5 * h
    return np.geomspace(100.0 * lo * 1.0001, lo, k)


def _neighbours(tree, X, base, r, n):
    idx = tree.query_ball_point(np.mod(base[:n], 1.0), r)
    return X[np.asarray(idx, dtype=int)]


def c1_diagnostic(model: TonelliModel, support_samples, bases=None, n_bases: int = 100,
                  cfg: FlowConfig = FlowConfig(), seed: int = 0, radii=None,
                  T_lyap: float = 100.0, angle_tol: float = 0.05,
                  drift_tol: float = 0.05) -> C1Report:
    """Check that cones of the sampled support lie in the common Green graph.

    Bases are drawn from the samples with the seeded generator unless given.
    The check applies only where every Lyapunov exponent is numerically
    zero; elsewhere the base is NOT-APPLICABLE.
    """
    rng = np.random.default_rng(seed)
    X = _samples_array(support_samples)
    n = model.n
    if bases is None:
        k = min(n_bases, len(X))
        bases = X[np.sort(rng.choice(len(X), k, replace=False))]
    else:
        bases = _samples_array(bases)
    if radii is None:
        radii = default_radii(X)
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    tree = cKDTree(np.mod(X[:, :n], 1.0), boxsize=1.0)
    spectra = lyapunov_spectra(model, bases, T_lyap, 0.5, cfg)
    pairs = green_bundles_batch(model, bases, cfg=cfg)
    sin_tol = np.sin(angle_tol)
    out = []
    for b, spec, pair in zip(bases, spectra, pairs):
        cls = classify_spectrum(spec)
        if cls.zero != 2 * n:
            out.append(BaseVerdict(b, "NOT-APPLICABLE", float("nan"), 0, spec.exponents))
            continue
        near = _neighbours(tree, X, b, radii[0], n)
        cone = contingent_cone(near, b, radii, drift_tol, rng=rng)
        if cone.status != "OK":
            out.append(BaseVerdict(b, "INSUFFICIENT-SAMPLES", float("nan"), 0, spec.exponents))
            continue
        worst = max(max(pair.s_minus.distance(d), pair.s_plus.distance(d)) for d in cone.directions)
        verdict = "PASS" if worst <= sin_tol else "FAIL"
        out.append(BaseVerdict(b, verdict, float(np.arcsin(min(worst, 1.0))), len(cone.directions),
                               spec.exponents))
    applicable = [b for b in out if b.verdict != "NOT-APPLICABLE"]
    passed = sum(b.verdict == "PASS" for b in out)
    frac = passed / len(out) if out else 0.0
    if not applicable:
        verdict = "NOT-APPLICABLE"
    elif any(b.verdict == "FAIL" for b in out):
        verdict = "INEQUALITY-VIOLATION"
    elif passed == 0:
        verdict = "INSUFFICIENT-SAMPLES"
    else:
        verdict = "C1-REGULAR-CONSISTENT"
    notes = ["consistent with C1-regularity at the sampled scales; not a proof"]
    return C1Report(out, frac, verdict, angle_tol, notes)


# -- analytic supports ---------------------------------------------------------------

def circle_samples(p: float = 0.5, count: int = 1000) -> np.ndarray:
    """Equally spaced points of the invariant circle {p = const} of the free rotor."""
    q = np.arange(count) / count
    return np.stack([q, np.full(count, p)], axis=-1)


def torus_lattice(count_per_axis: int = 512, p=(0.0, 0.0)) -> np.ndarray:
    """Lattice on the invariant torus {p = const} in T^2 x R^2."""
    g = np.arange(count_per_axis) / count_per_axis
    q1, q2 = np.meshgrid(g, g, indexing="ij")
    P = np.broadcast_to(np.asarray(p, dtype=float), (q1.size, 2))
    return np.concatenate([np.stack([q1.ravel(), q2.ravel()], -1), P], axis=-1)


def pseudograph_samples(pseudo, base_q=None) -> np.ndarray:
    """Differentiable pseudograph nodes as phase-space samples."""
    return pseudo.states(True)
