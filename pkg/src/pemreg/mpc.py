"""Receding-horizon precompensator for the packetized fleet.

Each control step: re-linearize the aggregate model at the observed
state, build the horizon matrices, and minimize the p-norm tracking
error of the predicted output against a reference window (recent past
plus forecast), subject to the down-ramp constraint that admitted power
can fall no faster than running packets expire.

The solve substitutes v = M_y dU + d (the predicted tracking error):
M_y is invertible lower-triangular, so the constraint set becomes
T v <= b_tilde with T = M_u M_y^-1, and v = 0 is exact tracking.  When
b_tilde is nonnegative the constraint is slack at v = 0 and no
optimization is needed; otherwise the problem goes to the dense LP
(p=1, split positive/negative error parts) or QP (p=2, active set).
A large-penalty slack on the constraint rows keeps transient
infeasibility graceful; slack_weight=None enforces the rows exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fleet import request_probability
from .solvers import lp_kkt_residual, qp_kkt_residual, simplex_solve
from .vbmodel import LinModel, VbParams, VbState, feasible_input_bounds

__all__ = [
    "MpcConfig",
    "MpcProblem",
    "Solution",
    "HorizonCache",
    "assemble",
    "solve",
    "step_controller",
    "down_ramp_anticipation_check",
]

FORECAST_MODES = ("perfect", "ar", "delay-precompensator", "passthrough")


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 90
    p: int = 1
    t_d: int = 0
    forecast_mode: str = "perfect"
    slack_penalty: float | None = 2.0e4  # per MW of constraint violation

    def __post_init__(self):
        if self.p not in (1, 2):
            raise ValueError(f"p must be 1 or 2, got {self.p}")
        if not (self.horizon > self.t_d >= 0):
            raise ValueError(
                f"need horizon > t_d >= 0, got horizon={self.horizon}, t_d={self.t_d}"
            )
        if self.forecast_mode not in FORECAST_MODES:
            raise ValueError(
                f"forecast_mode must be one of {FORECAST_MODES}, got "
                f"{self.forecast_mode!r}"
            )
        if self.slack_penalty is not None and self.slack_penalty <= 0:
            raise ValueError("slack_penalty must be positive or None")


@dataclass
class _Blocks:
    """State-drift-independent horizon matrices for one linearization.

    w_y and w_u2 are the row-sum matrices that turn the drift vector
    into G_y and G_u2 with a single matmul each; t_mat maps predicted
    tracking error to the ramp rows.  The gram pieces for the dual
    solver are filled lazily on first use.
    """

    m_y: np.ndarray
    m_u: np.ndarray
    m_y_inv: np.ndarray
    t_mat: np.ndarray
    w_y: np.ndarray
    w_u2: np.ndarray
    dual_m: np.ndarray | None = None  # set on first p=2 solve
    g_tt: np.ndarray | None = None  # T T', T E', E E' for pooled rows
    g_te: np.ndarray | None = None
    g_ee: np.ndarray | None = None


def _build_blocks(lin: LinModel, n: int) -> _Blocks:
    k = lin.a.shape[0]
    rows = np.vstack([lin.c, lin.cm])
    cab = np.empty(n)
    cmb = np.empty(n)
    w_y = np.empty((n, k))
    w_u2 = np.zeros((n, k))
    acc_y = np.zeros(k)
    for i in range(n):
        cab[i] = rows[0] @ lin.b
        cmb[i] = rows[1] @ lin.b
        acc_y = acc_y + rows[0]
        w_y[i] = acc_y
        if i + 1 < n:
            w_u2[i + 1] = w_u2[i] + rows[1]
            rows = rows @ lin.a
    m_y = np.zeros((n, n))
    m_u = -np.eye(n)
    for i in range(n):
        m_y[i:, i] = cab[: n - i]
        if i + 1 < n:
            m_u[i + 1 :, i] = cmb[: n - i - 1]
    m_y_inv = np.linalg.inv(m_y)
    t_mat = m_u @ m_y_inv
    return _Blocks(m_y=m_y, m_u=m_u, m_y_inv=m_y_inv, t_mat=t_mat, w_y=w_y, w_u2=w_u2)


class HorizonCache:
    """Reuses horizon blocks across controller steps.

    The matrices depend on the linearization point only through the
    request probability and its slope (the mean temperature) and the
    on-count, both of which move slowly relative to the control step.
    Blocks are keyed on those two scalars quantized; the drift-dependent
    vectors are rebuilt from the cached row sums every step.  One cache
    serves one (model parameters, horizon) pairing.
    """

    def __init__(self, x1_step_c: float = 0.02, x_on_step: float = 64.0,
                 max_entries: int = 48):
        self.x1_step_c = x1_step_c
        self.x_on_step = x_on_step
        self.max_entries = max_entries
        self._store: dict = {}
        self.hits = 0
        self.misses = 0

    def blocks(self, lin: LinModel, n: int) -> _Blocks:
        x1 = float(lin.x0[0])
        x_on = float(lin.x0[1] + lin.x0[2] - lin.x0[-1])
        key = (n, round(x1 / self.x1_step_c), round(x_on / self.x_on_step))
        hit = self._store.get(key)
        if hit is not None:
            self.hits += 1
            return hit
        self.misses += 1
        blk = _build_blocks(lin, n)
        if len(self._store) >= self.max_entries:
            self._store.pop(next(iter(self._store)))
        self._store[key] = blk
        return blk


@dataclass
class MpcProblem:
    m_y: np.ndarray
    g_y: np.ndarray
    m_u: np.ndarray
    g_u1: np.ndarray
    g_u2: np.ndarray
    r: np.ndarray
    y0_vec: np.ndarray
    blocks: _Blocks | None = None
    # (p_req, cap_mw, u0): admission-pool ceiling rows when present
    pool: tuple[float, float, float] | None = None

    @property
    def n(self) -> int:
        return self.r.size


@dataclass
class Solution:
    du: np.ndarray | None
    objective: float
    penalty: float
    status: str  # optimal | infeasible | iteration-limit
    kkt_residual: float
    iterations: int
    fast_path: bool = False

    @property
    def total_objective(self) -> float:
        return self.objective + self.penalty


def assemble(
    lin: LinModel,
    r_window: np.ndarray,
    cfg: MpcConfig,
    cache: HorizonCache | None = None,
    pool: tuple[float, float] | None = None,
) -> MpcProblem:
    """Horizon matrices from one linearization.

    M_y stacks C A^i B below the diagonal of CB; G_y accumulates the
    drift partial sums; M_u carries the unit negative diagonal with
    C_m A^i B below; G_u2 leads with a zero row.  `pool`, when given as
    (p_req, cap_mw), adds the admission ceiling to the constraint set:
    planned input cannot exceed the running floor plus the expected
    request volume of the OFF population.
    """
    r = np.asarray(r_window, dtype=np.float64)
    n = cfg.horizon
    if r.shape != (n,):
        raise ValueError(f"reference window must have length {n}, got {r.shape}")
    blk = cache.blocks(lin, n) if cache is not None else _build_blocks(lin, n)
    drift = lin.f0 - lin.x0
    g_y = blk.w_y @ drift
    g_u2 = blk.w_u2 @ drift
    g_u1 = np.full(n, lin.u0 - float(lin.cm @ lin.x0))
    y0_vec = np.full(n, lin.y0)
    return MpcProblem(
        m_y=blk.m_y, g_y=g_y, m_u=blk.m_u, g_u1=g_u1, g_u2=g_u2,
        r=r, y0_vec=y0_vec, blocks=blk,
        pool=(float(pool[0]), float(pool[1]), lin.u0) if pool is not None else None,
    )


def _du_from_v(prob: MpcProblem, v: np.ndarray, d_vec: np.ndarray) -> np.ndarray:
    if prob.blocks is not None:
        return prob.blocks.m_y_inv @ (v - d_vec)
    return np.linalg.solve(prob.m_y, v - d_vec)


def solve(
    prob: MpcProblem,
    p: int,
    slack_weight: float | None = 2.0e4,
    max_iter: int | None = None,
) -> Solution:
    """Minimize ||Y0 + dY - R||_p^p over dU subject to the ramp rows."""
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    n = prob.n
    d_vec = prob.y0_vec + prob.g_y - prob.r
    b0 = prob.g_u1 - prob.g_u2
    if prob.blocks is not None:
        t_mat = prob.blocks.t_mat
        e_mat = prob.blocks.m_y_inv
    else:
        t_mat = np.linalg.solve(prob.m_y.T, prob.m_u.T).T
        e_mat = None
    b_tilde = b0 + t_mat @ d_vec

    if prob.pool is None:
        t_all, b_all = t_mat, b_tilde
    else:
        # Ceiling rows.  The floor row slack is u[i] - Cm x[i], so the
        # ceiling u[i] <= cap + (1 - p_req) Cm x[i] folds into existing
        # pieces: p_req E v - alpha T v <= cap - p_req u0 + p_req E d - alpha b~
        # with E = M_y^-1 recovering dU from v.
        p_req, cap, u0 = prob.pool
        alpha = 1.0 - p_req
        if e_mat is None:
            e_mat = np.linalg.inv(prob.m_y)
        t_up = p_req * e_mat - alpha * t_mat
        b_up = (cap - p_req * u0) + p_req * (e_mat @ d_vec) - alpha * b_tilde
        t_all = np.vstack([t_mat, t_up])
        b_all = np.concatenate([b_tilde, b_up])

    if b_all.min() >= -1e-12:
        # exact tracking is feasible: v = 0 satisfies every ramp row
        du = _du_from_v(prob, np.zeros(n), d_vec)
        resid = float(np.abs(prob.m_y @ du + d_vec).max())
        return Solution(
            du=du, objective=0.0, penalty=0.0, status="optimal",
            kkt_residual=resid, iterations=0, fast_path=True,
        )

    if p == 1:
        return _solve_l1(prob, d_vec, t_all, b_all, slack_weight, max_iter)
    return _solve_l2(prob, d_vec, t_all, b_all, slack_weight, max_iter)


def _solve_l1(prob, d_vec, t_all, b_all, w, max_iter) -> Solution:
    n = prob.n
    m = b_all.size
    if w is not None:
        # columns: v+ | v- | s | sigma ; rows: T(v+ - v-) - s + sigma = b~
        a_eq = np.hstack([t_all, -t_all, -np.eye(m), np.eye(m)])
        cost = np.concatenate([np.ones(2 * n), np.full(m, w), np.zeros(m)])
    else:
        a_eq = np.hstack([t_all, -t_all, np.eye(m)])
        cost = np.concatenate([np.ones(2 * n), np.zeros(m)])
    res = simplex_solve(cost, a_eq, b_all, max_iter=max_iter)
    if res.status != "optimal":
        status = "infeasible" if res.status == "infeasible" else "iteration-limit"
        return Solution(
            du=None, objective=np.nan, penalty=np.nan, status=status,
            kkt_residual=np.inf, iterations=res.iterations,
        )
    v = res.x[:n] - res.x[n : 2 * n]
    s_total = float(res.x[2 * n : 2 * n + m].sum()) if w is not None else 0.0
    du = _du_from_v(prob, v, d_vec)
    kkt = lp_kkt_residual(cost, a_eq, b_all, res.x, res.duals)
    return Solution(
        du=du,
        objective=float(np.abs(v).sum()),
        penalty=(w or 0.0) * s_total,
        status="optimal",
        kkt_residual=kkt,
        iterations=res.iterations,
    )


def _box_qp(m_mat, b, upper, max_iter=None):
    """min 0.5 x'Mx + b'x over 0 <= x <= upper, M symmetric PD.

    Primal active set on the bounds: walk to each working-partition
    minimizer, fix whichever bound blocks first, and release the worst
    bound multiplier once the partition is solved.  Returns
    (x, iterations, converged).
    """
    n = b.size
    if max_iter is None:
        max_iter = 30 * (n + 10)
    x = np.zeros(n)
    free = np.zeros(n, dtype=bool)
    at_upper = np.zeros(n, dtype=bool)
    tol = 1e-11 * max(1.0, float(np.abs(b).max()))
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(free)
        d = np.zeros(n)
        if idx.size:
            rhs = -b[idx]
            up_idx = np.flatnonzero(at_upper)
            if up_idx.size:
                rhs = rhs - m_mat[np.ix_(idx, up_idx)] @ x[up_idx]
            sub = m_mat[np.ix_(idx, idx)]
            rhs_scale = max(1.0, float(np.linalg.norm(rhs)))
            sol = None
            try:
                cand = np.linalg.solve(sub, rhs)
                if (
                    np.isfinite(cand).all()
                    and np.linalg.norm(sub @ cand - rhs) <= 1e-8 * rhs_scale
                ):
                    sol = cand
            except np.linalg.LinAlgError:
                pass
            if sol is not None:
                d[idx] = sol - x[idx]
            else:
                ls = np.linalg.lstsq(sub, rhs, rcond=None)[0]
                resid = rhs - sub @ ls
                r_norm = float(np.linalg.norm(resid))
                if r_norm > 1e-10 * rhs_scale:
                    # singular face with a linear term in its null space:
                    # the objective falls without bound along the residual
                    # direction, so ride it until a bound blocks
                    span = (upper if upper is not None else 1.0) + 1.0
                    d[idx] = resid * (span * (n + 1) / r_norm)
                else:
                    d[idx] = ls - x[idx]
        alpha = 1.0
        hit = -1
        hit_up = False
        if idx.size:
            df = d[idx]
            xf = x[idx]
            down = df < -1e-14
            if down.any():
                steps = xf[down] / (-df[down])
                k = int(np.argmin(steps))
                if steps[k] < alpha:
                    alpha = float(steps[k])
                    hit = int(idx[np.flatnonzero(down)[k]])
                    hit_up = False
            if upper is not None:
                up = df > 1e-14
                if up.any():
                    steps = (upper - xf[up]) / df[up]
                    k = int(np.argmin(steps))
                    if steps[k] < alpha:
                        alpha = float(steps[k])
                        hit = int(idx[np.flatnonzero(up)[k]])
                        hit_up = True
        x = x + alpha * d
        if hit >= 0:
            x[hit] = upper if hit_up else 0.0
            free[hit] = False
            at_upper[hit] = hit_up
            continue
        grad = m_mat @ x + b
        viol = np.where(~free & ~at_upper, -grad, -np.inf)
        if upper is not None:
            viol = np.maximum(viol, np.where(at_upper, grad, -np.inf))
        j = int(np.argmax(viol))
        if viol[j] <= tol:
            return x, it, True
        free[j] = True
        at_upper[j] = False
    return x, max_iter, False


def _dual_hessian(prob, t_all) -> np.ndarray:
    """0.5 T T' for the dual box QP, from cached gram pieces when the
    problem carries ceiling rows (the scalars p_req/alpha change every
    step but the underlying T and M_y^-1 products do not)."""
    blk = prob.blocks
    if prob.pool is None:
        if blk is not None:
            if blk.dual_m is None:
                blk.dual_m = 0.5 * (blk.t_mat @ blk.t_mat.T)
            return blk.dual_m
        return 0.5 * (t_all @ t_all.T)
    if blk is None:
        return 0.5 * (t_all @ t_all.T)
    if blk.g_tt is None:
        blk.g_tt = blk.t_mat @ blk.t_mat.T
        blk.g_te = blk.t_mat @ blk.m_y_inv.T
        blk.g_ee = blk.m_y_inv @ blk.m_y_inv.T
    p_req, _, _ = prob.pool
    alpha = 1.0 - p_req
    ur = p_req * blk.g_te - alpha * blk.g_tt
    lr = (
        p_req * p_req * blk.g_ee
        - p_req * alpha * (blk.g_te + blk.g_te.T)
        + alpha * alpha * blk.g_tt
    )
    return 0.5 * np.block([[blk.g_tt, ur], [ur.T, lr]])


def _solve_l2(prob, d_vec, t_all, b_all, w, max_iter) -> Solution:
    """Dual of the slack-penalized tracking QP: the row multipliers live
    in the box [0, w] with Hessian T T', and the primal error vector is
    recovered as v = -T'lam/2, which certifies the exact linear-penalty
    objective."""
    n = prob.n
    m = b_all.size
    m_half = _dual_hessian(prob, t_all)
    lam, iters, ok = _box_qp(m_half, b_all, w, max_iter)
    if not ok:
        return Solution(
            du=None, objective=np.nan, penalty=np.nan, status="iteration-limit",
            kkt_residual=np.inf, iterations=iters,
        )
    v = -0.5 * (t_all.T @ lam)
    viol = t_all @ v - b_all
    du = _du_from_v(prob, v, d_vec)
    if w is None:
        if viol.max() > 1e-7 * max(1.0, float(np.abs(b_all).max())):
            # hard rows cannot all hold; the dual ran off toward its
            # unbounded ray before the iteration cap stopped it
            return Solution(
                du=None, objective=np.nan, penalty=np.nan, status="infeasible",
                kkt_residual=np.inf, iterations=iters,
            )
        s_total = 0.0
        kkt = qp_kkt_residual(
            np.full(n, 2.0), np.zeros(n), t_all, b_all, v, lam
        )
    else:
        s = np.where(lam >= w - 1e-9 * max(1.0, w), np.maximum(viol, 0.0), 0.0)
        s_total = float(s.sum())
        h_full = np.concatenate([np.full(n, 2.0), np.zeros(m)])
        g_full = np.concatenate([np.zeros(n), np.full(m, w)])
        a_full = np.vstack(
            [
                np.hstack([t_all, -np.eye(m)]),
                np.hstack([np.zeros((m, n)), -np.eye(m)]),
            ]
        )
        b_full = np.concatenate([b_all, np.zeros(m)])
        kkt = qp_kkt_residual(
            h_full, g_full, a_full, b_full,
            np.concatenate([v, s]), np.concatenate([lam, w - lam]),
        )
    return Solution(
        du=du,
        objective=float(v @ v),
        penalty=(w or 0.0) * s_total,
        status="optimal",
        kkt_residual=kkt,
        iterations=iters,
    )


def step_controller(
    plant_obs: VbState,
    history: np.ndarray,
    forecaster,
    cfg: MpcConfig,
    lin_provider,
    params: VbParams,
    events: list[str] | None = None,
    cache: HorizonCache | None = None,
    supply_mw: float | None = None,
) -> float:
    """One controller step; returns the input u[k] in MW.

    `history` holds realized reference samples up to and including the
    current step.  `forecaster(history, steps)` supplies the future part
    of the window;  `lin_provider(plant_obs)` returns a fresh
    linearization whose (x0, u0) anchor is the observed state and last
    applied input.  The returned input is clamped to the plant's
    feasible band; clamps and solver fallbacks are appended to `events`.

    `supply_mw` is the observed request supply per step (power the
    coordinator could admit if asked).  When given it caps planned
    admissions directly; otherwise the ceiling falls back to the model's
    expected request volume, which runs well short of the real supply
    whenever denied devices re-request.
    """
    history = np.asarray(history, dtype=np.float64)
    if history.size == 0:
        raise ValueError("history must contain at least the current reference")
    if cfg.forecast_mode == "passthrough":
        return float(history[-1])
    if cfg.forecast_mode == "delay-precompensator":
        idx = max(0, history.size - 1 - cfg.t_d)
        return float(history[idx])

    lin = lin_provider(plant_obs)
    if cfg.t_d:
        past = history[max(0, history.size - cfg.t_d) :]
        if past.size < cfg.t_d:
            past = np.concatenate([np.full(cfg.t_d - past.size, history[0]), past])
    else:
        past = np.empty(0)
    future = np.asarray(forecaster(history, cfg.horizon - cfg.t_d), dtype=np.float64)
    r_window = np.concatenate([past, future])
    if supply_mw is not None:
        pool = (0.0, max(0.0, float(supply_mw)))
    else:
        p_req = request_probability(float(lin.x0[0]), params, params.dt)
        pool = (p_req, params.p_dev_mw * params.n * p_req)
    prob = assemble(lin, r_window, cfg, cache=cache, pool=pool)
    sol = solve(prob, cfg.p, slack_weight=cfg.slack_penalty)
    if sol.status != "optimal":
        if events is not None:
            events.append(f"solver_fallback:{sol.status}")
        u = float(history[-1])
    else:
        u = lin.u0 + float(sol.du[0])
    lo, hi = feasible_input_bounds(plant_obs, params)
    if supply_mw is not None:
        # the observed supply outranks the mean-field ceiling: commands
        # up to it are deliverable even when the model disagrees
        hi = max(hi, lo + max(0.0, float(supply_mw)))
    if u < lo:
        if events is not None:
            events.append("clamped_to_floor")
        u = lo
    elif u > hi:
        if events is not None:
            events.append("clamped_to_ceiling")
        u = hi
    return float(u)


def down_ramp_anticipation_check(
    r_mw: np.ndarray,
    y_mpc_mw: np.ndarray,
    y_baseline_mw: np.ndarray,
    min_drop_mw: float = 0.3,
) -> dict:
    """Qualitative report: does the compensated output cross the
    reference inside each sustained down-ramp, where the baseline lags?

    A segment is a maximal run of nonincreasing reference with total
    drop of at least `min_drop_mw`.  Crossing means the tracking error
    changes sign inside the segment.
    """
    r = np.asarray(r_mw, dtype=np.float64)
    if not (r.shape == np.shape(y_mpc_mw) == np.shape(y_baseline_mw)):
        raise ValueError("series must share one length")
    dr = np.diff(r)
    segments = []
    start = None
    for k in range(dr.size):
        if dr[k] < -1e-12:
            if start is None:
                start = k
        else:
            if start is not None:
                segments.append((start, k))
                start = None
    if start is not None:
        segments.append((start, dr.size))

    def crosses(y, a, b):
        err = y[a : b + 1] - r[a : b + 1]
        return bool(np.any(np.signbit(err[:-1]) != np.signbit(err[1:])))

    report = {"segments": [], "mpc_crossings": 0, "baseline_crossings": 0}
    for a, b in segments:
        if r[a] - r[b] < min_drop_mw:
            continue
        seg = {
            "start": int(a),
            "end": int(b),
            "drop_mw": float(r[a] - r[b]),
            "mpc_crosses": crosses(np.asarray(y_mpc_mw, dtype=np.float64), a, b),
            "baseline_crosses": crosses(np.asarray(y_baseline_mw, dtype=np.float64), a, b),
        }
        report["segments"].append(seg)
        report["mpc_crossings"] += int(seg["mpc_crosses"])
        report["baseline_crossings"] += int(seg["baseline_crosses"])
    return report
