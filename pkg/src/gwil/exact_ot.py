"""Exact linear optimal transport on dense cost matrices.

This is the inner workhorse shared by the Frank-Wolfe solver (linear
minimization oracle) and the Wasserstein baseline. All paths return an
exact vertex of the transport polytope and are deterministic functions
of their inputs:

* uniform marginals with equal sizes reduce to an assignment problem,
  solved by ``scipy.optimize.linear_sum_assignment``;
* everything else goes through the transportation simplex kernel, run
  in a canonical orientation (rows <= cols) so that transposed problems
  produce transposed plans.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._transport_simplex import STATUS_OPTIMAL, transport_simplex

__all__ = ["solve_transport", "random_vertex"]


def _is_uniform(w: np.ndarray) -> bool:
    return bool(np.all(np.abs(w - 1.0 / w.size) <= 1e-12 / w.size + 1e-15))


def solve_transport(
    cost: np.ndarray,
    row_mass: np.ndarray,
    col_mass: np.ndarray,
    *,
    validate: bool = True,
) -> tuple[float, np.ndarray]:
    """Exactly solve min <cost, plan> over couplings of (row_mass, col_mass).

    Returns ``(value, plan)`` where ``plan`` is a vertex of the transport
    polytope. Raises ``ValueError`` on malformed inputs.
    """
    cost = np.asarray(cost, dtype=float)
    a = np.asarray(row_mass, dtype=float)
    b = np.asarray(col_mass, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-d matrix")
    n, m = cost.shape
    if a.shape != (n,) or b.shape != (m,):
        raise ValueError(
            f"marginal shapes {a.shape}/{b.shape} do not match cost {cost.shape}"
        )
    if validate:
        if not np.all(np.isfinite(cost)):
            raise ValueError("cost contains non-finite entries")
        if np.any(a < 0) or np.any(b < 0):
            raise ValueError("marginals must be nonnegative")
        if abs(a.sum() - b.sum()) > 1e-9 * max(1.0, a.sum()):
            raise ValueError(
                f"marginal totals differ: {a.sum()!r} vs {b.sum()!r}"
            )
    total = a.sum()
    if total <= 0:
        raise ValueError("marginals carry no mass")
    # remove the tiny residual imbalance left by serialization round-off
    b = b * (total / b.sum())

    if n == 1:
        plan = b[None, :].copy()
    elif m == 1:
        plan = a[:, None].copy()
    elif n == m and _is_uniform(a) and _is_uniform(b):
        rows, cols = linear_sum_assignment(cost)
        plan = np.zeros((n, m))
        plan[rows, cols] = 1.0 / n
    elif n <= m:
        plan = _simplex(cost, a, b)
    else:
        plan = _simplex(cost.T, b, a).T
    return float(np.sum(cost * plan)), plan


def _simplex(cost: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    scale = float(np.max(np.abs(cost))) if cost.size else 1.0
    tol_pivot = 1e-11 * max(1.0, scale)
    plan, status, _ = transport_simplex(cost, a, b, tol_pivot)
    if status != STATUS_OPTIMAL:
        raise RuntimeError("transportation simplex exceeded its pivot budget")
    return plan


def random_vertex(
    rng: np.random.Generator, row_mass: np.ndarray, col_mass: np.ndarray
) -> np.ndarray:
    """A random extreme point of the transport polytope (seeded via rng)."""
    cost = rng.standard_normal((row_mass.size, col_mass.size))
    _, plan = solve_transport(cost, row_mass, col_mass, validate=False)
    return plan
