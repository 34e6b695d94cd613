"""Wasserstein and generalized Wasserstein distances between atomic measures.

The generalized distance allows mass creation and destruction at unit cost
per unit of mass, which makes it finite for measures of unequal total mass.
Both distances are solved as linear programs; a brute-force oracle based on
exhaustive enumeration of transportation bases is provided for tiny
instances (tests only).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .measures import AtomicMeasure

__all__ = [
    "TransportPlan",
    "UnequalMassError",
    "wasserstein",
    "gen_wasserstein",
    "gw_bruteforce",
    "ground_cost",
]

COST_CAP = 2.0  # moving is never cheaper than destroy+create beyond cost 2
_GROUND_NORMS = ("l2", "l1", "linf")


class UnequalMassError(ValueError):
    """Raised when the balanced Wasserstein distance is asked for measures of
    different total mass; use gen_wasserstein instead."""


def ground_cost(p1, p2, ground_norm="l2"):
    """Pairwise ground distances between two point arrays, capped at 2."""
    if ground_norm not in _GROUND_NORMS:
        raise ValueError(f"ground_norm must be one of {_GROUND_NORMS}")
    d = p1[:, None, :] - p2[None, :, :]
    if ground_norm == "l2":
        c = np.sqrt((d**2).sum(axis=2))
    elif ground_norm == "l1":
        c = np.abs(d).sum(axis=2)
    else:
        c = np.abs(d).max(axis=2)
    return np.minimum(c, COST_CAP)


@dataclass
class TransportPlan:
    """Coupling between two atomic measures with creation/destruction slacks.

    Row sums of ``coupling`` plus ``destroyed`` reproduce the first measure's
    weights; column sums plus ``created`` reproduce the second's.
    """

    coupling: np.ndarray
    destroyed: np.ndarray
    created: np.ndarray
    objective: float

    def mass(self):
        return float(self.coupling.sum())

    def check_feasible(self, x1: AtomicMeasure, x2: AtomicMeasure, tol=1e-8):
        row = self.coupling.sum(axis=1) + self.destroyed
        col = self.coupling.sum(axis=0) + self.created
        ok = (
            np.all(self.coupling >= -tol)
            and np.all(self.destroyed >= -tol)
            and np.all(self.created >= -tol)
            and np.allclose(row, x1.weights, atol=tol)
            and np.allclose(col, x2.weights, atol=tol)
        )
        return bool(ok)


def _empty_plan(n1, n2):
    return TransportPlan(
        np.zeros((n1, n2)), np.zeros(n1), np.zeros(n2), 0.0
    )


def wasserstein(x1, x2, ground_norm="l2"):
    """Balanced optimal-transport distance (earth mover's distance).

    Requires equal total mass (within 1e-9); the returned plan has no
    creation or destruction.
    """
    if abs(x1.tv() - x2.tv()) > 1e-9:
        raise UnequalMassError(
            "wasserstein needs equal masses; use gen_wasserstein for the "
            "unbalanced distance"
        )
    n1, n2 = x1.n_atoms, x2.n_atoms
    if n1 == 0 and n2 == 0:
        return 0.0, _empty_plan(0, 0)
    c = ground_cost(x1.points, x2.points, ground_norm)
    a_eq = np.zeros((n1 + n2, n1 * n2))
    for i in range(n1):
        a_eq[i, i * n2 : (i + 1) * n2] = 1.0
    for j in range(n2):
        a_eq[n1 + j, j::n2] = 1.0
    b_eq = np.concatenate([x1.weights, x2.weights])
    res = linprog(c.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    gamma = res.x.reshape(n1, n2)
    dist = float((c * gamma).sum())
    plan = TransportPlan(gamma, np.zeros(n1), np.zeros(n2), dist)
    return dist, plan


def gen_wasserstein(x1, x2, ground_norm="l2"):
    """Generalized (unbalanced) Wasserstein distance.

    Minimizes transport cost plus unit-cost destruction of untransported mass
    of ``x1`` and unit-cost creation of unmatched mass of ``x2``:
    row sums of the coupling may not exceed the first measure's weights and
    column sums the second's.
    """
    n1, n2 = x1.n_atoms, x2.n_atoms
    if n1 == 0 or n2 == 0:
        plan = TransportPlan(
            np.zeros((n1, n2)),
            x1.weights.copy(),
            x2.weights.copy(),
            x1.tv() + x2.tv(),
        )
        return plan.objective, plan
    c = ground_cost(x1.points, x2.points, ground_norm)
    # objective: c.gamma + (tv1 - mass) + (tv2 - mass) = tv1 + tv2 + (c-2).gamma
    a_ub = np.zeros((n1 + n2, n1 * n2))
    for i in range(n1):
        a_ub[i, i * n2 : (i + 1) * n2] = 1.0
    for j in range(n2):
        a_ub[n1 + j, j::n2] = 1.0
    b_ub = np.concatenate([x1.weights, x2.weights])
    res = linprog(
        (c - 2.0).ravel(), A_ub=a_ub, b_ub=b_ub, bounds=(0, None), method="highs"
    )
    if res.status != 0:
        raise RuntimeError(f"partial transport LP failed: {res.message}")
    gamma = res.x.reshape(n1, n2)
    destroyed = np.maximum(x1.weights - gamma.sum(axis=1), 0.0)
    created = np.maximum(x2.weights - gamma.sum(axis=0), 0.0)
    dist = float((c * gamma).sum() + destroyed.sum() + created.sum())
    return dist, TransportPlan(gamma, destroyed, created, dist)


# -- brute-force oracle ------------------------------------------------------

# memoized per (m, n) shape; values are immutable after publication and
# recomputation is idempotent, so concurrent use is safe
_TREE_CACHE: dict[tuple[int, int], list] = {}


def _spanning_trees(m, n):
    """All spanning trees of the complete bipartite graph K_{m,n} with a
    precomputed leaf-elimination schedule per tree.

    Each schedule entry is (edge=(i, j), node_side, node_index): strip the
    named leaf node, setting the edge flow from its remaining supply/demand.
    """
    key = (m, n)
    if key in _TREE_CACHE:
        return _TREE_CACHE[key]
    edges = [(i, j) for i in range(m) for j in range(n)]
    n_nodes = m + n
    trees = []
    for subset in itertools.combinations(range(len(edges)), n_nodes - 1):
        parent = list(range(n_nodes))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        acyclic = True
        for e in subset:
            i, j = edges[e]
            ra, rb = find(i), find(m + j)
            if ra == rb:
                acyclic = False
                break
            parent[ra] = rb
        if not acyclic:
            continue
        # n_nodes-1 acyclic edges on n_nodes vertices => spanning tree
        adj = {v: [] for v in range(n_nodes)}
        for e in subset:
            i, j = edges[e]
            adj[i].append((e, m + j))
            adj[m + j].append((e, i))
        degree = {v: len(adj[v]) for v in adj}
        removed_edges = set()
        done_nodes = set()
        schedule = []
        leaves = [v for v in adj if degree[v] == 1]
        while leaves:
            v = leaves.pop()
            if v in done_nodes:
                continue
            live = [(e, u) for (e, u) in adj[v] if e not in removed_edges]
            if len(live) != 1:
                continue
            e, u = live[0]
            removed_edges.add(e)
            done_nodes.add(v)
            i, j = edges[e]
            side = 0 if v < m else 1
            idx = v if v < m else v - m
            schedule.append((i, j, side, idx))
            degree[u] -= 1
            if degree[u] == 1:
                leaves.append(u)
        if len(schedule) == n_nodes - 1:
            trees.append(schedule)
    _TREE_CACHE[key] = trees
    return trees


def gw_bruteforce(x1, x2, ground_norm="l2"):
    """Exhaustive oracle for the generalized Wasserstein distance.

    Augments the problem with a destruction sink and a creation source to a
    balanced transportation problem, then enumerates every basis (spanning
    tree of the bipartite supply/demand graph), solves each by leaf
    elimination, and returns the cheapest feasible basic solution.  Exact,
    but exponential: limited to measures with at most 4 atoms each.
    """
    if x1.n_atoms > 4 or x2.n_atoms > 4:
        raise ValueError("gw_bruteforce is limited to measures with <= 4 atoms")
    n1, n2 = x1.n_atoms, x2.n_atoms
    if n1 == 0 or n2 == 0:
        return float(x1.tv() + x2.tv())
    c = ground_cost(x1.points, x2.points, ground_norm)
    m, n = n1 + 1, n2 + 1
    cost = np.ones((m, n))
    cost[:n1, :n2] = c
    cost[n1, n2] = 0.0  # unused mass may flow source-dummy -> sink-dummy freely
    supplies = np.concatenate([x1.weights, [x2.tv()]])
    demands = np.concatenate([x2.weights, [x1.tv()]])
    best = np.inf
    for schedule in _spanning_trees(m, n):
        sup = supplies.copy()
        dem = demands.copy()
        total = 0.0
        feasible = True
        for i, j, side, idx in schedule:
            flow = sup[idx] if side == 0 else dem[idx]
            if flow < -1e-12:
                feasible = False
                break
            if side == 0:
                sup[idx] = 0.0
                dem[j] -= flow
            else:
                dem[idx] = 0.0
                sup[i] -= flow
            total += flow * cost[i, j]
        if feasible and total < best:
            best = total
    return float(best)
