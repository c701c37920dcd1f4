"""Dense linear and quadratic programming, self-contained.

Sized for control horizons of a few hundred steps: every iteration
refactors the basis or the active-set Schur complement from scratch,
which is cubic but small, and buys simplicity and numerical robustness
over factorization updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LpResult",
    "QpResult",
    "simplex_solve",
    "active_set_qp",
    "lp_kkt_residual",
    "qp_kkt_residual",
]

_TOL = 1e-9


@dataclass
class LpResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray | None
    objective: float
    duals: np.ndarray | None
    iterations: int


@dataclass
class QpResult:
    status: str  # optimal | iteration_limit
    x: np.ndarray
    objective: float
    duals: np.ndarray
    iterations: int


def _simplex_core(a, b, c, basis, max_iter, bland_after):
    """Revised simplex on min c'x, Ax=b, x>=0 from a given basis.

    Returns (status, x, duals, iterations, basis).  The basis inverse is
    carried across pivots by rank-one updates and rebuilt periodically
    or when the primal residual drifts, so a pivot costs O(m^2) plus one
    pricing pass.  Switches to Bland's rule after `bland_after`
    consecutive degenerate pivots to break cycles.
    """
    m, n = a.shape
    degenerate_run = 0
    bland = False
    it = 0
    since_refresh = 0

    def refreshed():
        try:
            return np.linalg.inv(a[:, basis])
        except np.linalg.LinAlgError:
            return None

    b_inv = refreshed()
    if b_inv is None:
        return "iteration_limit", None, None, it, basis
    while it < max_iter:
        it += 1
        since_refresh += 1
        if since_refresh >= 64:
            b_inv = refreshed()
            if b_inv is None:
                return "iteration_limit", None, None, it, basis
            since_refresh = 0
        xb = b_inv @ b
        if it % 16 == 0:
            drift = np.abs(a[:, basis] @ xb - b).max()
            if drift > 1e-7 * (1.0 + np.abs(b).max()):
                b_inv = refreshed()
                if b_inv is None:
                    return "iteration_limit", None, None, it, basis
                since_refresh = 0
                xb = b_inv @ b
        y = b_inv.T @ c[basis]
        reduced = c - a.T @ y
        reduced[basis] = 0.0
        if bland:
            candidates = np.flatnonzero(reduced < -_TOL)
            if candidates.size == 0:
                x = np.zeros(n)
                x[basis] = xb
                return "optimal", x, y, it, basis
            j = int(candidates[0])
        else:
            j = int(np.argmin(reduced))
            if reduced[j] >= -_TOL:
                x = np.zeros(n)
                x[basis] = xb
                return "optimal", x, y, it, basis
        d = b_inv @ a[:, j]
        pos = d > _TOL
        if not pos.any():
            return "unbounded", None, None, it, basis
        ratios = np.full(m, np.inf)
        ratios[pos] = xb[pos] / d[pos]
        theta = ratios.min()
        ties = np.flatnonzero(ratios <= theta + 1e-12)
        if bland:
            leave = int(ties[np.argmin(np.asarray(basis)[ties])])
        else:
            leave = int(ties[0])
        if theta < 1e-11:
            degenerate_run += 1
            if degenerate_run >= bland_after:
                bland = True
        else:
            degenerate_run = 0
        piv = d[leave]
        pivot_row = b_inv[leave].copy()
        b_inv -= np.outer(d / piv, pivot_row)
        b_inv[leave] = pivot_row / piv
        basis[leave] = j
    return "iteration_limit", None, None, it, basis


def simplex_solve(c, a_eq, b_eq, max_iter: int | None = None) -> LpResult:
    """Two-phase revised simplex for min c'x s.t. a_eq x = b_eq, x >= 0."""
    a = np.array(a_eq, dtype=np.float64)
    b = np.array(b_eq, dtype=np.float64)
    c = np.array(c, dtype=np.float64)
    m, n = a.shape
    if max_iter is None:
        max_iter = 50 * (m + n)
    flip = b < 0
    a[flip] *= -1.0
    b[flip] *= -1.0
    row_ids = np.arange(m)

    # phase 1: artificial basis
    a1 = np.hstack([a, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))
    status, x1, _, it1, basis = _simplex_core(a1, b, c1, basis, max_iter, bland_after=2 * m)
    if status != "optimal":
        return LpResult(status, None, np.nan, None, it1)
    if float(c1 @ x1) > 1e-7:
        return LpResult("infeasible", None, np.nan, None, it1)

    # drive leftover artificials out of the basis; a row that cannot
    # pivot onto a structural column is redundant and gets dropped
    keep_rows = np.ones(m, dtype=bool)
    for row, col in enumerate(list(basis)):
        if col < n:
            continue
        b_mat = a1[:, basis]
        tableau_row = np.linalg.solve(b_mat, a)[row]
        pivots = np.flatnonzero(np.abs(tableau_row) > 1e-8)
        pivots = [j for j in pivots if j not in basis]
        if pivots:
            basis[row] = int(pivots[0])
        else:
            keep_rows[row] = False
    if not keep_rows.all():
        rows = [i for i in range(m) if keep_rows[i]]
        a = a[rows]
        b = b[rows]
        basis = [basis[i] for i in rows]
        row_ids = row_ids[rows]
        m = len(rows)

    status, x, y, it2, basis = _simplex_core(a, b, c, basis, max_iter, bland_after=2 * m)
    if status != "optimal":
        return LpResult(status, None, np.nan, None, it1 + it2)
    # duals back in original row order and orientation: dropped rows get
    # zero, sign-flipped rows flip back
    duals = np.zeros(flip.size)
    duals[row_ids] = y
    duals[flip] *= -1.0
    return LpResult("optimal", x, float(c @ x), duals, it1 + it2)


def active_set_qp(
    h_diag, g, a_ub, b_ub, x0, max_iter: int | None = None
) -> QpResult:
    """Primal active-set method for min 0.5 x'Hx + g'x s.t. a_ub x <= b_ub.

    H = diag(h_diag) must be positive definite and x0 feasible; every
    iterate stays feasible.  Multipliers come back as a full-length
    vector, zero on inactive constraints.
    """
    h = np.asarray(h_diag, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    a = np.asarray(a_ub, dtype=np.float64)
    b = np.asarray(b_ub, dtype=np.float64)
    x = np.array(x0, dtype=np.float64)
    m, n = a.shape if a.size else (0, x.size)
    if (h <= 0).any():
        raise ValueError("h_diag must be strictly positive")
    if m and (a @ x - b).max() > 1e-7:
        raise ValueError("x0 must be feasible")
    if max_iter is None:
        max_iter = 50 * (n + m + 1)
    active: list[int] = []
    lam_full = np.zeros(m)
    for it in range(1, max_iter + 1):
        grad = h * x + g
        if active:
            aw = a[active]
            schur = (aw / h) @ aw.T
            rhs = -aw @ (grad / h)
            try:
                lam = np.linalg.solve(schur, rhs)
            except np.linalg.LinAlgError:
                lam = np.linalg.lstsq(schur, rhs, rcond=None)[0]
            d = -(grad + aw.T @ lam) / h
        else:
            lam = np.zeros(0)
            d = -grad / h
        # stationarity via the step's predicted decrease, which is scale
        # free where a norm test on d drowns in working-set solve noise
        decrease = 0.5 * float(d @ (h * d))
        obj_now = float(0.5 * x @ (h * x) + g @ x)
        if decrease <= 1e-14 * (1.0 + abs(obj_now)):
            if lam.size == 0 or lam.min() >= -1e-9:
                lam_full[:] = 0.0
                lam_full[active] = np.maximum(lam, 0.0)
                obj = float(0.5 * x @ (h * x) + g @ x)
                return QpResult("optimal", x, obj, lam_full, it)
            active.pop(int(np.argmin(lam)))
            continue
        alpha = 1.0
        blocking = -1
        if m:
            inactive = np.setdiff1d(np.arange(m), active, assume_unique=False)
            ad = a[inactive] @ d
            movable = ad > _TOL
            if movable.any():
                gaps = (b[inactive] - a[inactive] @ x)[movable]
                steps = np.maximum(gaps, 0.0) / ad[movable]
                k = int(np.argmin(steps))
                if steps[k] < alpha:
                    alpha = float(steps[k])
                    blocking = int(inactive[np.flatnonzero(movable)[k]])
        x = x + alpha * d
        if blocking >= 0:
            active.append(blocking)
    obj = float(0.5 * x @ (h * x) + g @ x)
    return QpResult("iteration_limit", x, obj, lam_full, max_iter)


def lp_kkt_residual(c, a_eq, b_eq, x, duals) -> float:
    """Max violation over primal/dual feasibility and complementarity."""
    a = np.asarray(a_eq, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    reduced = c - a.T @ np.asarray(duals, dtype=np.float64)
    return float(
        max(
            np.abs(a @ x - b_eq).max(),
            max(0.0, -np.min(x)),
            max(0.0, -np.min(reduced)),
            np.abs(x * reduced).max(),
        )
    )


def qp_kkt_residual(h_diag, g, a_ub, b_ub, x, duals) -> float:
    a = np.asarray(a_ub, dtype=np.float64)
    lam = np.asarray(duals, dtype=np.float64)
    slack = a @ x - np.asarray(b_ub, dtype=np.float64)
    return float(
        max(
            np.abs(np.asarray(h_diag) * x + g + a.T @ lam).max(),
            max(0.0, slack.max() if slack.size else 0.0),
            max(0.0, -lam.min() if lam.size else 0.0),
            np.abs(lam * slack).max() if slack.size else 0.0,
        )
    )
