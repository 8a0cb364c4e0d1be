"""Functions sampled on uniform periodic grids of [0, 1)^n."""
from __future__ import annotations

import io
import json
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from ..model import wrap

INTERPOLATIONS = ("linear", "cubic-periodic")
_HEADER = re.compile(r"#\s*greenkam-grid\s+n=(\d+)\s+m=(\d+)\s+interpolation=([\w-]+)")


def grid_nodes(m: int, n: int) -> np.ndarray:
    """Nodes of the m^n grid, shape (m^n, n), axis 0 varying slowest."""
    axes = np.meshgrid(*([np.arange(m) / m] * n), indexing="ij")
    return np.stack([a.ravel() for a in axes], axis=-1)


@dataclass(frozen=True, eq=False)
class GridFunction:
    values: np.ndarray
    interpolation: str = "linear"
    _spline: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim not in (1, 2) or len(set(v.shape)) != 1:
            raise ValueError(f"values must be an m or m x m array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.ndim

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> float:
        return 1.0 / self.m

    def nodes(self) -> np.ndarray:
        return grid_nodes(self.m, self.n)

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def with_values(self, values) -> "GridFunction":
        return GridFunction(np.asarray(values, dtype=float).reshape(self.values.shape), self.interpolation)

    # -- interpolation ------------------------------------------------------
    def _cubic(self):
        if self._spline is None:
            m = self.m
            if self.n == 1:
                x = np.arange(m + 1) / m
                spline = CubicSpline(x, np.append(self.values, self.values[0]), bc_type="periodic")
            else:
                pad = 3
                idx = np.arange(-pad, m + pad)
                x = idx / m
                padded = self.values[np.ix_(idx % m, idx % m)]
                spline = RectBivariateSpline(x, x, padded, kx=3, ky=3, s=0)
            object.__setattr__(self, "_spline", spline)
        return self._spline

    def __call__(self, q) -> np.ndarray:
        q = wrap(np.asarray(q, dtype=float))
        if q.shape[-1] != self.n:
            raise ValueError(f"expected points with {self.n} coordinates")
        if self.interpolation == "cubic-periodic":
            s = self._cubic()
            if self.n == 1:
                return s(q[..., 0])
            return s.ev(q[..., 0], q[..., 1])
        return self._linear(q)

    def _linear(self, q):
        m = self.m
        x = q * m
        i0 = np.floor(x).astype(int)
        w = x - i0
        i0 %= m
        i1 = (i0 + 1) % m
        v = self.values
        if self.n == 1:
            return (1 - w[..., 0]) * v[i0[..., 0]] + w[..., 0] * v[i1[..., 0]]
        a, b = w[..., 0], w[..., 1]
        return ((1 - a) * (1 - b) * v[i0[..., 0], i0[..., 1]] + a * (1 - b) * v[i1[..., 0], i0[..., 1]]
                + (1 - a) * b * v[i0[..., 0], i1[..., 1]] + a * b * v[i1[..., 0], i1[..., 1]])

    def gradient(self, q) -> np.ndarray:
        """Derivative of the interpolant (one-sided from the right on linear cells)."""
        q = wrap(np.asarray(q, dtype=float))
        if self.interpolation == "cubic-periodic":
            s = self._cubic()
            if self.n == 1:
                return s(q[..., 0], 1)[..., None]
            return np.stack([s.ev(q[..., 0], q[..., 1], dx=1), s.ev(q[..., 0], q[..., 1], dy=1)], -1)
        h = 1e-7
        eye = np.eye(self.n)
        return np.stack([(self._linear(q + h * e) - self._linear(q)) / h for e in eye], -1)

    def seam_defect(self) -> float:
        """Jump of the interpolant across q_i = 0 (should be round-off)."""
        eps = 1e-13
        t = np.linspace(0, 1, 17, endpoint=False)
        worst = 0.0
        for k in range(self.n):
            pts_lo = np.full((len(t), self.n), 0.37)
            pts_lo[:, k] = 1.0 - eps
            pts_hi = pts_lo.copy()
            pts_hi[:, k] = 0.0
            if self.n == 2:
                pts_lo[:, 1 - k] = pts_hi[:, 1 - k] = t
            worst = max(worst, float(np.max(np.abs(self(pts_lo) - self(pts_hi)))))
        return worst

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {"format": "greenkam-grid", "n": self.n, "m": self.m,
                "interpolation": self.interpolation, "values": self.flat().tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "GridFunction":
        if d.get("format") != "greenkam-grid":
            raise ValueError("not a greenkam grid document")
        n, m = int(d["n"]), int(d["m"])
        values = np.asarray(d["values"], dtype=float)
        if values.size != m**n:
            raise ValueError(f"expected {m**n} values, got {values.size}")
        return cls(values.reshape((m,) * n), d["interpolation"])

    @classmethod
    def from_json(cls, text: str) -> "GridFunction":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(f"# greenkam-grid n={self.n} m={self.m} interpolation={self.interpolation}\n")
        cols = ["q"] if self.n == 1 else ["q1", "q2"]
        out.write(",".join(cols + ["u"]) + "\n")
        for q, u in zip(self.nodes(), self.flat()):
            out.write(",".join(repr(float(c)) for c in (*q, u)) + "\n")
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "GridFunction":
        lines = text.splitlines()
        match = _HEADER.match(lines[0]) if lines else None
        if not match:
            raise ValueError("missing '# greenkam-grid' header line")
        n, m, interp = int(match.group(1)), int(match.group(2)), match.group(3)
        rows = np.loadtxt(io.StringIO("\n".join(lines[2:])), delimiter=",", ndmin=2)
        if rows.shape != (m**n, n + 1):
            raise ValueError(f"expected {m**n} rows of {n + 1} columns")
        return cls(rows[:, -1].reshape((m,) * n), interp)
