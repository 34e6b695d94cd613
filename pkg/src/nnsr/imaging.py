"""Measurement windows and the tensor-product imaging operator.

A window is a family of M continuous functions on [0, 1].  The imaging
operator maps a point (t, s) to the M x M matrix of products of window values
in t and s; integrating it against an atomic measure produces the observed
image.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .measures import AtomicMeasure

__all__ = [
    "Window",
    "ImageObservation",
    "basis_eval",
    "basis_deriv",
    "collocation",
    "collocation_deriv",
    "forward",
    "add_noise",
    "lipschitz_constant",
    "design_matrix",
]

_FD_STEP = 1e-6


class Window:
    """Family of M continuous measurement functions on [0, 1].

    Kinds:
      * ``gaussian``: translated Gaussians exp(-((t - c_m)/sigma)^2) with
        distinct ascending centers and width sigma > 0 (analytic derivative);
      * ``monomial``: 1, t, ..., t^(M-1) (analytic derivative);
      * ``tabulated``: sampled values with linear interpolation and central
        finite-difference derivatives (step 1e-6).
    """

    def __init__(self, kind, M, centers=None, sigma=None, ts=None, table=None):
        self.kind = kind
        self.M = int(M)
        if self.M < 1:
            raise ValueError("window needs M >= 1 functions")
        self.centers = None
        self.sigma = None
        self.ts = None
        self.table = None
        if kind == "gaussian":
            c = np.asarray(centers, dtype=float).ravel()
            if c.size != self.M:
                raise ValueError("need one center per function")
            if np.any(np.diff(c) <= 0):
                raise ValueError("gaussian centers must be distinct and ascending")
            if c.min() < 0 or c.max() > 1:
                raise ValueError("gaussian centers must lie in [0, 1]")
            if sigma is None or sigma <= 0:
                raise ValueError("sigma must be positive")
            self.centers = c
            self.sigma = float(sigma)
        elif kind == "monomial":
            pass
        elif kind == "tabulated":
            ts = np.asarray(ts, dtype=float).ravel()
            tab = np.asarray(table, dtype=float)
            if tab.shape != (self.M, ts.size):
                raise ValueError("table must have shape (M, len(ts))")
            if np.any(np.diff(ts) <= 0):
                raise ValueError("tabulation nodes must be ascending")
            if not np.all(np.isfinite(tab)):
                raise ValueError("non-finite table values")
            self.ts = ts
            self.table = tab
        else:
            raise ValueError(f"unknown window kind {kind!r}")

    @classmethod
    def gaussian(cls, centers, sigma):
        centers = np.asarray(centers, dtype=float).ravel()
        return cls("gaussian", centers.size, centers=centers, sigma=sigma)

    @classmethod
    def monomial(cls, M):
        return cls("monomial", M)

    @classmethod
    def tabulated(cls, ts, table):
        table = np.asarray(table, dtype=float)
        return cls("tabulated", table.shape[0], ts=ts, table=table)

    @property
    def has_derivative(self):
        return True  # analytic for gaussian/monomial, finite-difference otherwise

    # -- serialization -----------------------------------------------------

    def to_json_dict(self):
        if self.kind == "gaussian":
            return {
                "kind": "gaussian",
                "sigma": self.sigma,
                "centers": [float(c) for c in self.centers],
            }
        if self.kind == "monomial":
            return {"kind": "monomial", "m": self.M}
        return {
            "kind": "tabulated",
            "ts": [float(t) for t in self.ts],
            "values": [[float(v) for v in row] for row in self.table],
        }

    @classmethod
    def from_json_dict(cls, d):
        kind = d["kind"]
        if kind == "gaussian":
            return cls.gaussian(d["centers"], d["sigma"])
        if kind == "monomial":
            return cls.monomial(d["m"])
        if kind == "tabulated":
            return cls.tabulated(d["ts"], d["values"])
        raise ValueError(f"unknown window kind {kind!r}")

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))

    def __repr__(self):
        return f"Window(kind={self.kind!r}, M={self.M})"


def collocation(w: Window, ts) -> np.ndarray:
    """(M, n) matrix of window values at the points ``ts``."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if w.kind == "gaussian":
        return kernels.gaussian_colloc(w.centers, w.sigma, ts)
    if w.kind == "monomial":
        return np.vstack([ts**m for m in range(w.M)])
    return np.vstack([np.interp(ts, w.ts, row) for row in w.table])


def collocation_deriv(w: Window, ts) -> np.ndarray:
    """(M, n) matrix of first derivatives of the window functions at ``ts``."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if w.kind == "gaussian":
        vals = collocation(w, ts)
        return vals * (-2.0 * (ts[None, :] - w.centers[:, None]) / w.sigma**2)
    if w.kind == "monomial":
        rows = [np.zeros_like(ts)]
        rows += [m * ts ** (m - 1) for m in range(1, w.M)]
        return np.vstack(rows)
    hi = collocation(w, np.clip(ts + _FD_STEP, 0.0, 1.0))
    lo = collocation(w, np.clip(ts - _FD_STEP, 0.0, 1.0))
    dt = np.clip(ts + _FD_STEP, 0.0, 1.0) - np.clip(ts - _FD_STEP, 0.0, 1.0)
    return (hi - lo) / dt[None, :]


def basis_eval(w: Window, m: int, t: float) -> float:
    """Value of the m-th window function (1-based index) at t."""
    if not 1 <= m <= w.M:
        raise IndexError(f"window index {m} out of range 1..{w.M}")
    return float(collocation(w, [t])[m - 1, 0])


def basis_deriv(w: Window, m: int, t: float) -> float:
    """First derivative of the m-th window function (1-based index) at t."""
    if not 1 <= m <= w.M:
        raise IndexError(f"window index {m} out of range 1..{w.M}")
    return float(collocation_deriv(w, [t])[m - 1, 0])


@dataclass
class ImageObservation:
    """M x M image matrix with its noise level (Frobenius bound)."""

    y: np.ndarray
    delta: float

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 2 or self.y.shape[0] != self.y.shape[1]:
            raise ValueError("observation must be a square matrix")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("non-finite observation")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        self.delta = float(self.delta)

    def save(self, csv_path, sidecar_path=None):
        np.savetxt(csv_path, self.y, delimiter=",")
        if sidecar_path is None:
            sidecar_path = str(csv_path) + ".json"
        with open(sidecar_path, "w") as fh:
            json.dump({"delta": self.delta}, fh, sort_keys=True)

    @classmethod
    def load(cls, csv_path, sidecar_path=None):
        y = np.loadtxt(csv_path, delimiter=",", ndmin=2)
        if sidecar_path is None:
            sidecar_path = str(csv_path) + ".json"
        with open(sidecar_path) as fh:
            delta = json.load(fh)["delta"]
        return cls(y, delta)


def forward(w: Window, x: AtomicMeasure) -> np.ndarray:
    """Noise-free image: y[m, n] = sum_k a_k * phi_m(t_k) * phi_n(s_k)."""
    if x.n_atoms == 0:
        return np.zeros((w.M, w.M))
    ct = collocation(w, x.points[:, 0])
    cs = collocation(w, x.points[:, 1])
    return (ct * x.weights[None, :]) @ cs.T


def add_noise(y, delta, seed) -> ImageObservation:
    """Add a pseudorandom perturbation of exact Frobenius norm ``delta``.

    The direction is a seeded standard-normal matrix normalized to unit
    Frobenius norm, so the same seed gives the same direction at every noise
    level.
    """
    y = np.asarray(y, dtype=float)
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0:
        return ImageObservation(y.copy(), 0.0)
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(y.shape)
    e *= delta / np.linalg.norm(e)
    return ImageObservation(y + e, float(delta))


def lipschitz_constant(w: Window, grid_n=201) -> float:
    """Sensitivity constant of the imaging operator.

    Gaussian windows use the closed form sqrt(2 M / (sigma^2 e)); other
    windows are estimated on a dense grid as the larger of the pointwise
    operator norm ||Phi(theta)||_F (mass sensitivity) and the finite-difference
    gradient norm of theta -> Phi(theta) (transport sensitivity).
    """
    if w.kind == "gaussian":
        return float(np.sqrt(2.0 * w.M / (w.sigma**2 * np.e)))
    ts = np.linspace(0.0, 1.0, grid_n)
    vals = collocation(w, ts)
    dvals = collocation_deriv(w, ts)
    nrm = np.linalg.norm(vals, axis=0)
    dnrm = np.linalg.norm(dvals, axis=0)
    # ||Phi(t,s)||_F = ||phi(t)|| * ||phi(s)||; grad stacks the two partials
    mass = np.max(nrm) ** 2
    grad = np.max(
        np.sqrt(
            (dnrm[:, None] * nrm[None, :]) ** 2 + (nrm[:, None] * dnrm[None, :]) ** 2
        )
    )
    return float(max(mass, grad))


def design_matrix(w: Window, points) -> np.ndarray:
    """(M^2, N) matrix whose column j is vec(Phi(theta_j)), row-major vec.

    Equals the Kronecker product of the per-axis collocation columns:
    vec(Phi(t, s)) = phi-column(t) (x) phi-column(s).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("design_matrix needs a nonempty grid")
    ct = collocation(w, pts[:, 0])
    cs = collocation(w, pts[:, 1])
    return (ct[:, None, :] * cs[None, :, :]).reshape(w.M * w.M, pts.shape[0])
