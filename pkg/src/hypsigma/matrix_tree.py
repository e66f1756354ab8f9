"""Weighted lattice Laplacians, spanning trees and Hamiltonian cycles.

Edges are the rows of :attr:`Lattice.bonds`, so the double bonds of an
``L == 2`` lattice are two distinct edges and trees using either of them are
counted separately.  Tree weights use the positive bond factors
``exp(-theta_x - theta_y)``, i.e. minus the off-diagonal entries of ``W``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import dual_action as da
from .latmat import delete_site, int_det, logdet
from .lattice import Lattice, laplacian


class EnumerationBudgetError(RuntimeError):
    pass


def weighted_laplacian(lat: Lattice, theta) -> np.ndarray:
    """``W = diag(e^-theta) M(theta) diag(e^-theta)``, built from the bond weights.

    Off-diagonal entries are ``-exp(-theta_x - theta_y)`` per bond, the
    diagonal is ``exp(-theta_x) * sum_slots exp(-theta_y)``; rows sum to zero.
    """
    r = np.exp(-np.asarray(theta, dtype=float))
    V = lat.V
    W = np.zeros((V, V))
    u, v = lat.bonds[:, 0], lat.bonds[:, 1]
    w = r[u] * r[v]
    np.add.at(W, (u, v), -w)
    np.add.at(W, (v, u), -w)
    W[np.arange(V), np.arange(V)] = r * r[lat.neighbors].sum(axis=1)
    return W


def count_spanning_trees(lat: Lattice, x0: int = 0) -> int:
    """Exact ``det(-Delta_hat)`` (Kirchhoff), independent of ``x0``."""
    lap = np.rint(laplacian(lat)).astype(np.int64)
    return int_det(delete_site(lap, x0).astype(np.int64))


def _find(parent, x):
    while parent[x] != x:
        x = parent[x]
    return x


@lru_cache(maxsize=16)
def _trees(lat: Lattice) -> np.ndarray:
    edges = [tuple(e) for e in lat.bonds.tolist()]
    E, need = len(edges), lat.V - 1
    found: list[tuple[int, ...]] = []
    chosen: list[int] = []

    def rec(i, parent):
        if len(chosen) == need:
            found.append(tuple(chosen))
            return
        if E - i < need - len(chosen):
            return
        u, v = edges[i]
        ru, rv = _find(parent, u), _find(parent, v)
        if ru != rv:
            merged = list(parent)
            merged[ru] = rv
            chosen.append(i)
            rec(i + 1, merged)
            chosen.pop()
        rec(i + 1, parent)

    rec(0, list(range(lat.V)))
    return np.array(found, dtype=np.int64).reshape(len(found), need)


def enumerate_spanning_trees(lat: Lattice, budget: int = 100_000) -> np.ndarray:
    """All spanning trees as rows of ``V - 1`` edge indices into ``lat.bonds``.

    Backtracks over the edges (include / skip) with a union-find cycle test.
    Raises :class:`EnumerationBudgetError` if Kirchhoff's count exceeds
    ``budget``.
    """
    n = count_spanning_trees(lat)
    if n > budget:
        raise EnumerationBudgetError(f"{n} spanning trees exceed the budget of {budget}")
    trees = _trees(lat)
    if len(trees) != n:
        raise RuntimeError(f"enumerated {len(trees)} trees, Kirchhoff count is {n}")
    return trees


def enumerate_tree_sum(lat: Lattice, theta, budget: int = 100_000) -> float:
    """``sum_T prod_{<xy> in T} exp(-theta_x - theta_y)`` by explicit enumeration."""
    trees = enumerate_spanning_trees(lat, budget)
    r = np.exp(-np.asarray(theta, dtype=float))
    w = r[lat.bonds[:, 0]] * r[lat.bonds[:, 1]]
    return float(np.sum(np.prod(w[trees], axis=1)))


def tree_identity_residual(lat: Lattice, theta, x0: int = 0, budget: int = 100_000) -> float:
    """Relative difference between ``det W_hat`` and the spanning-tree sum."""
    det_w = np.exp(logdet(delete_site(weighted_laplacian(lat, theta), x0)))
    tree_sum = enumerate_tree_sum(lat, theta, budget)
    return abs(det_w - tree_sum) / abs(tree_sum)


@dataclass
class ConvexityReport:
    t: np.ndarray
    values: np.ndarray
    second_differences: np.ndarray
    tolerance: float = 1e-9

    @property
    def min_second_difference(self) -> float:
        return float(np.min(self.second_differences)) if self.second_differences.size else 0.0

    @property
    def passed(self) -> bool:
        return self.min_second_difference >= -self.tolerance


def segment_convexity(fun, theta1, theta2, grid: int = 21, tolerance: float = 1e-9) -> ConvexityReport:
    """Sample ``g(t) = fun(theta1 + t (theta2 - theta1))`` on ``grid`` points of ``[0, 1]``
    and collect the discrete second differences."""
    theta1 = np.asarray(theta1, dtype=float)
    delta = np.asarray(theta2, dtype=float) - theta1
    t = np.linspace(0.0, 1.0, grid)
    g = np.array([fun(theta1 + s * delta) for s in t])
    return ConvexityReport(t=t, values=g, second_differences=g[:-2] - 2 * g[1:-1] + g[2:],
                           tolerance=tolerance)


def log_sum_exp_convexity(lat: Lattice, theta1, theta2, grid: int = 21, x0: int = 0,
                          tolerance: float = 1e-9) -> ConvexityReport:
    """Discrete convexity of ``ln det W_hat`` along a segment of pinned fields."""
    theta1 = da.pinned(theta1, x0)
    theta2 = da.pinned(theta2, x0)

    def fun(th):
        return logdet(delete_site(weighted_laplacian(lat, th), x0))

    return segment_convexity(fun, theta1, theta2, grid, tolerance)


def hamiltonian_cycles(lat: Lattice, x0: int = 0, H=None, beta: float = 1.0,
                       budget: int = 10_000_000) -> tuple[int, float]:
    """Oriented nearest-neighbor Hamiltonian cycles through ``x0``.

    Returns ``(count, weighted)`` where ``weighted`` sums
    ``prod_{<xy> in C} (1 - H_xy / beta)`` over the same cycles.  Each
    undirected cycle is counted once per orientation.
    """
    if lat.L < 3:
        raise ValueError("cycle enumeration needs L >= 3 (no double bonds)")
    H = da.validate_source(H, lat.V)
    nb = lat.neighbors.tolist()
    V = lat.V
    visited = [False] * V
    visited[x0] = True
    count = 0
    weighted = 0.0
    steps = 0

    def rec(x, depth, weight):
        nonlocal count, weighted, steps
        steps += 1
        if steps > budget:
            raise EnumerationBudgetError(f"cycle search exceeded {budget} steps")
        for y in nb[x]:
            if depth == V and y == x0:
                count += 1
                weighted += weight * (1.0 - float(H[x, y]) / beta)
            elif not visited[y]:
                visited[y] = True
                rec(y, depth + 1, weight * (1.0 - float(H[x, y]) / beta))
                visited[y] = False

    rec(x0, 1, 1.0)
    return count, weighted


@dataclass
class CycleBoundReport:
    R: float
    oriented_cycles: int
    unoriented_cycles: int
    weighted_cycle_sum: float

    @property
    def passed(self) -> bool:
        return self.R >= self.weighted_cycle_sum and self.R >= self.oriented_cycles


def cycle_bound_check(lat: Lattice, a, H, params: da.ModelParams,
                      budget: int = 10_000_000) -> CycleBoundReport:
    """Compare ``R = (2d + a_x0) det A_hat - det A`` with the Hamiltonian-cycle count.

    ``R`` does not depend on ``a_x0``; it is evaluated as
    ``det A_hat * b^T A_hat^-1 b`` with ``b`` the off-diagonal ``x0`` column.
    """
    if not da.in_domain(lat, a, H, params):
        raise da.DomainError("a-field outside the domain")
    mats = da.build_A(lat, a, H, params)
    x0 = params.x0
    b = np.delete(mats.tilde[:, x0], x0)
    R = float(np.exp(logdet(mats.hat)) * (b @ np.linalg.solve(mats.hat, b)))
    count, weighted = hamiltonian_cycles(lat, x0, H, params.beta, budget)
    return CycleBoundReport(R=R, oriented_cycles=count, unoriented_cycles=count // 2,
                            weighted_cycle_sum=weighted)


__all__ = [
    "ConvexityReport",
    "CycleBoundReport",
    "EnumerationBudgetError",
    "count_spanning_trees",
    "cycle_bound_check",
    "enumerate_spanning_trees",
    "enumerate_tree_sum",
    "hamiltonian_cycles",
    "log_sum_exp_convexity",
    "segment_convexity",
    "tree_identity_residual",
    "weighted_laplacian",
]
