"""Nonnegative atomic measures on the unit square.

An atomic measure is a finite list of weighted point masses.  This module
provides the measure container plus the geometric quantities the rest of the
package is built on: minimum separation, total mass, box neighbourhoods, and
the sparse well-separated approximation with its mismatch residual.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AtomicMeasure",
    "Neighborhood",
    "SparseApprox",
    "sep",
    "tv_norm",
    "approximate_sparse",
    "sparse_approx_oracle",
    "box_masses",
    "random_separated_measure",
]

_MERGE_TOL = 1e-12


class AtomicMeasure:
    """Finite nonnegative weighted point set on [0, 1]^2.

    Zero-weight atoms are dropped and coincident atoms (coordinates within
    1e-12 on both axes) are merged by summing weights.  Negative weights and
    locations outside the unit square are rejected.
    """

    __slots__ = ("points", "weights")

    def __init__(self, points, weights):
        pts = np.asarray(points, dtype=float)
        w = np.asarray(weights, dtype=float).ravel()
        if pts.size == 0:
            pts = np.zeros((0, 2))
        pts = np.atleast_2d(pts)
        if pts.shape[1] != 2:
            raise ValueError("points must have shape (n, 2)")
        if pts.shape[0] != w.shape[0]:
            raise ValueError("points and weights length mismatch")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(w))):
            raise ValueError("non-finite atom data")
        if np.any(w < 0):
            raise ValueError("atom weights must be nonnegative")
        if pts.size and (pts.min() < 0.0 or pts.max() > 1.0):
            raise ValueError("atom locations must lie in [0, 1]^2")
        keep = w > 0.0
        pts, w = pts[keep], w[keep]
        if pts.shape[0] > 1:
            pts, w = _merge_coincident(pts, w)
        self.points = np.ascontiguousarray(pts)
        self.weights = np.ascontiguousarray(w)

    # -- constructors -----------------------------------------------------

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 2)), np.zeros(0))

    @classmethod
    def from_atoms(cls, atoms):
        """Build from an iterable of (t, s, w) triples."""
        atoms = list(atoms)
        if not atoms:
            return cls.empty()
        arr = np.asarray(atoms, dtype=float)
        return cls(arr[:, :2], arr[:, 2])

    @classmethod
    def single(cls, t, s, w=1.0):
        return cls(np.array([[t, s]]), np.array([w]))

    # -- basic queries -----------------------------------------------------

    @property
    def n_atoms(self):
        return self.points.shape[0]

    @property
    def interior(self):
        """True iff every coordinate lies strictly inside (0, 1)."""
        if self.n_atoms == 0:
            return True
        return bool(self.points.min() > 0.0 and self.points.max() < 1.0)

    def tv(self):
        return float(self.weights.sum())

    def union(self, other):
        """Measure sum: concatenate atom lists (coincident atoms re-merge)."""
        return AtomicMeasure(
            np.vstack([self.points, other.points]),
            np.concatenate([self.weights, other.weights]),
        )

    __add__ = union

    def __repr__(self):
        return f"AtomicMeasure(n_atoms={self.n_atoms}, tv={self.tv():.6g})"

    # -- serialization -----------------------------------------------------

    def to_json_dict(self):
        return {
            "atoms": [
                {"t": float(t), "s": float(s), "w": float(w)}
                for (t, s), w in zip(self.points, self.weights)
            ]
        }

    @classmethod
    def from_json_dict(cls, d):
        atoms = [(a["t"], a["s"], a["w"]) for a in d["atoms"]]
        return cls.from_atoms(atoms)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def _merge_coincident(pts, w):
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts, w = pts[order], w[order]
    out_p, out_w = [pts[0]], [w[0]]
    for p, wi in zip(pts[1:], w[1:]):
        q = out_p[-1]
        if abs(p[0] - q[0]) <= _MERGE_TOL and abs(p[1] - q[1]) <= _MERGE_TOL:
            out_w[-1] += wi
        else:
            out_p.append(p)
            out_w.append(wi)
    return np.array(out_p), np.array(out_w)


class Neighborhood:
    """Closed boxes around a set of centers.

    With ``axis=None`` membership is the joint max-norm test
    ``||theta - c||_inf <= radius``; with ``axis=0`` or ``axis=1`` it is the
    per-coordinate interval test on that axis alone.
    """

    def __init__(self, centers, radius, axis=None):
        if radius <= 0:
            raise ValueError("radius must be positive")
        if axis not in (None, 0, 1):
            raise ValueError("axis must be None, 0 or 1")
        self.radius = float(radius)
        self.axis = axis
        c = np.asarray(centers, dtype=float)
        if axis is None:
            c = np.atleast_2d(c)
            if c.size and c.shape[1] != 2:
                raise ValueError("joint neighborhoods need 2-D centers")
        else:
            c = np.atleast_1d(c).ravel()
        self.centers = c

    def contains(self, pts):
        """Boolean membership for an (n, 2) array (joint) or length-n array (axis)."""
        if self.axis is None:
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            if self.centers.size == 0:
                return np.zeros(pts.shape[0], dtype=bool)
            d = np.abs(pts[:, None, :] - self.centers[None, :, :]).max(axis=2)
            return (d <= self.radius).any(axis=1)
        vals = np.atleast_1d(np.asarray(pts, dtype=float))
        if self.axis == 1 and vals.ndim == 2:
            vals = vals[:, 1]
        elif vals.ndim == 2:
            vals = vals[:, 0]
        if self.centers.size == 0:
            return np.zeros(vals.shape[0], dtype=bool)
        d = np.abs(vals[:, None] - self.centers[None, :])
        return (d <= self.radius).any(axis=1)


def sep(x: AtomicMeasure) -> float:
    """Minimum separation: the largest nu such that every pairwise
    per-coordinate gap and every gap to the boundary of [0,1]^2 is >= nu.
    """
    if x.n_atoms == 0:
        raise ValueError("undefined separation: measure has no atoms")
    if not x.interior:
        raise ValueError("separation requires interior support")
    t = x.points[:, 0]
    s = x.points[:, 1]
    gaps = [t.min(), 1.0 - t.max(), s.min(), 1.0 - s.max()]
    if x.n_atoms > 1:
        dt = np.abs(t[:, None] - t[None, :])
        ds = np.abs(s[:, None] - s[None, :])
        off = ~np.eye(x.n_atoms, dtype=bool)
        gaps.append(dt[off].min())
        gaps.append(ds[off].min())
    return float(min(gaps))


def tv_norm(x: AtomicMeasure) -> float:
    """Total mass (sum of weights); zero for the empty measure."""
    return x.tv()


def box_masses(x: AtomicMeasure, centers, eps):
    """Mass of ``x`` inside the closed max-norm box of half-width ``eps``
    around each center; returns one value per center."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if x.n_atoms == 0:
        return np.zeros(centers.shape[0])
    d = np.abs(x.points[None, :, :] - centers[:, None, :]).max(axis=2)
    return (d <= eps) @ x.weights


@dataclass
class SparseApprox:
    """Result of :func:`approximate_sparse`."""

    measure: AtomicMeasure
    residual: float
    certified: bool | None = None
    oracle_value: float | None = None

    def __iter__(self):  # allow tuple unpacking (measure, residual)
        return iter((self.measure, self.residual))


def approximate_sparse(x, K, eps, lam=1.5, oracle_grid=None, ground_norm="l2"):
    """Greedy K-sparse, eps-separated approximation of ``x``.

    Atoms are clustered by descending weight: each atom joins the nearest
    existing cluster center when strictly within ``eps`` in both coordinates,
    otherwise it opens a new cluster (up to ``K``; beyond that it joins the
    nearest center unconditionally).  Cluster centers are weighted centroids,
    nudged coordinate-wise to the nearest eps-separated interior
    configuration; total weight is preserved.  The residual is the
    generalized Wasserstein distance from ``x`` to the approximation.

    When ``oracle_grid`` is given (small instances only) a brute-force grid
    oracle is run and ``certified`` is set when
    ``residual <= lam * oracle_value``.
    """
    from . import transport  # local import: transport depends on measures

    if K < 1:
        raise ValueError("K must be >= 1")
    if not (0.0 < eps <= 0.5):
        raise ValueError("eps must lie in (0, 1/2]")
    if lam <= 1.0:
        raise ValueError("lam must exceed 1")
    if (K + 1) * eps > 1.0 + 1e-12:
        raise ValueError(
            f"infeasible geometry: {K} atoms cannot be {eps}-separated in the interior"
        )
    if x.n_atoms and not x.interior:
        raise ValueError("approximate_sparse requires interior support")

    if x.n_atoms == 0:
        return SparseApprox(AtomicMeasure.empty(), 0.0)

    order = np.argsort(-x.weights, kind="stable")
    centers: list[np.ndarray] = []
    masses: list[float] = []
    for idx in order:
        p = x.points[idx]
        w = float(x.weights[idx])
        if centers:
            d = np.abs(np.array(centers) - p).max(axis=1)
            j = int(np.argmin(d))
        else:
            d, j = None, -1
        if centers and (d[j] < eps or len(centers) >= K):
            tot = masses[j] + w
            centers[j] = (centers[j] * masses[j] + p * w) / tot
            masses[j] = tot
        else:
            centers.append(p.copy())
            masses.append(w)

    c = np.array(centers)
    c[:, 0] = _nudge_separated(c[:, 0], eps)
    c[:, 1] = _nudge_separated(c[:, 1], eps)
    approx = AtomicMeasure(c, np.array(masses))
    residual, _ = transport.gen_wasserstein(x, approx, ground_norm=ground_norm)

    certified = None
    oracle_value = None
    if oracle_grid is not None:
        oracle_value = sparse_approx_oracle(
            x, K, eps, grid_n=oracle_grid, ground_norm=ground_norm
        )
        certified = residual <= lam * oracle_value + 1e-9
    return SparseApprox(approx, residual, certified, oracle_value)


def _nudge_separated(vals, eps):
    """Project sorted 1-D positions to pairwise gaps >= eps inside [eps, 1-eps].

    Already-feasible configurations are returned unchanged.
    """
    k = vals.size
    order = np.argsort(vals, kind="stable")
    v = vals[order]
    out = np.empty_like(v)
    prev = -np.inf
    for i in range(k):
        lo = max(v[i], prev + eps, eps)
        hi = 1.0 - (k - i) * eps
        out[i] = min(lo, hi)
        prev = out[i]
    res = np.empty_like(out)
    res[order] = out
    return res


def sparse_approx_oracle(x, K, eps, grid_n=50, ground_norm="l2", top_j=60):
    """Brute-force lower-complexity oracle for the sparse approximation value.

    Searches candidate placements on a ``grid_n x grid_n`` grid for at most
    ``K`` eps-separated interior nodes.  For a fixed placement P the optimal
    generalized Wasserstein value has the closed form
    ``sum_i a_i * min(1, dist(x_i, P))`` (create nothing, transport each unit
    to its nearest placed node or destroy it), so only the placement search
    is combinatorial.  Exact for 1- and 2-node placements; 3-node placements
    use a partition-guided search keeping the ``top_j`` best nodes per atom
    group, which is exhaustive for the geometries used in tests.
    """
    if x.n_atoms > 6:
        raise ValueError("oracle limited to small instances (<= 6 atoms)")
    nodes_1d = np.linspace(0.0, 1.0, grid_n)
    nodes_1d = nodes_1d[(nodes_1d >= eps) & (nodes_1d <= 1.0 - eps)]
    tt, ss = np.meshgrid(nodes_1d, nodes_1d, indexing="ij")
    cand = np.column_stack([tt.ravel(), ss.ravel()])
    nc = cand.shape[0]
    if nc == 0:
        raise ValueError("no interior grid nodes for this eps")

    a = x.weights
    diff = x.points[:, None, :] - cand[None, :, :]
    if ground_norm == "l2":
        D = np.sqrt((diff**2).sum(axis=2))
    elif ground_norm == "l1":
        D = np.abs(diff).sum(axis=2)
    elif ground_norm == "linf":
        D = np.abs(diff).max(axis=2)
    else:
        raise ValueError(f"unknown ground norm {ground_norm!r}")
    D = np.minimum(D, 1.0)  # destroying a unit costs 1

    best = float(a.sum())  # empty placement: destroy everything

    def value(cols):
        return float(a @ np.min(D[:, cols], axis=1))

    # exact single placements
    single = a @ D
    best = min(best, float(single.min()))
    if K == 1:
        return best

    sep_ok = (
        np.abs(cand[:, None, 0] - cand[None, :, 0]) >= eps - 1e-12
    ) & (np.abs(cand[:, None, 1] - cand[None, :, 1]) >= eps - 1e-12)

    # exact pairs
    for j1 in range(nc):
        ok = np.nonzero(sep_ok[j1, j1 + 1 :])[0] + j1 + 1
        if ok.size == 0:
            continue
        pair_vals = a @ np.minimum(D[:, [j1]], D[:, ok])
        m = float(pair_vals.min())
        if m < best:
            best = m
    if K == 2 or x.n_atoms == 0:
        return best

    # partition-guided triples: each group of atoms nominates its top nodes
    n = x.n_atoms
    for parts in _partitions(list(range(n)), 3):
        pools = []
        for g in parts:
            cost = a[g] @ D[g, :]
            pools.append(np.argsort(cost, kind="stable")[:top_j])
        for combo in itertools.product(*pools):
            combo = list(dict.fromkeys(combo))
            ok = all(
                sep_ok[combo[i], combo[j]]
                for i in range(len(combo))
                for j in range(i + 1, len(combo))
            )
            if not ok:
                continue
            m = value(list(combo))
            if m < best:
                best = m
    return best


def _partitions(items, max_groups):
    """All partitions of ``items`` into at most ``max_groups`` nonempty groups."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _partitions(rest, max_groups):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]
        if len(part) < max_groups:
            yield part + [[first]]


def random_separated_measure(K, sep_floor, weight_range, rng, max_tries=20000):
    """Draw K atoms with sep >= sep_floor, weights uniform in weight_range."""
    lo, hi = weight_range
    for _ in range(max_tries):
        pts = rng.uniform(sep_floor, 1.0 - sep_floor, size=(K, 2))
        ok = True
        for i in range(K):
            for j in range(i + 1, K):
                if (
                    abs(pts[i, 0] - pts[j, 0]) < sep_floor
                    or abs(pts[i, 1] - pts[j, 1]) < sep_floor
                ):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            w = rng.uniform(lo, hi, size=K)
            return AtomicMeasure(pts, w)
    raise RuntimeError("could not draw a separated measure; relax sep_floor")
