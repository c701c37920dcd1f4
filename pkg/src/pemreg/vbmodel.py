"""Virtual battery model of the packetized water heater fleet.

Aggregate state [x1, x2, x3, z_1..z_np]: mean tank temperature, count of
devices charging on accepted packets, count of opted-out devices, and a
conveyor of packet timers (z_1 newest, z_np expiring).  The input u is
the admitted power in MW; dividing by the per-device rating turns power
into device counts, which is how every balance below is written.

Accepted packets are uninterruptible, so u is floor-limited by the
devices already running (their packets must play out), and ceiling-
limited by the request volume the coordinator can draw on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fleet import (
    SPECIFIC_HEAT_KJ,
    WATER_DENSITY_KG_L,
    CHARGING,
    OPT_OUT,
    DeviceParams,
    Fleet,
    WaterDrawProcess,
    request_probability,
)

__all__ = [
    "VbParams",
    "VbState",
    "LinModel",
    "DownRampViolation",
    "InsufficientRequests",
    "vb_step",
    "feasible_input_bounds",
    "nominal_point",
    "linearize",
    "observe_fleet",
]


class DownRampViolation(ValueError):
    """Input below the power already locked into running packets."""

    def __init__(self, u_mw: float, floor_mw: float):
        self.u_mw = u_mw
        self.floor_mw = floor_mw
        super().__init__(
            f"input {u_mw:.6f} MW is below the running-packet floor "
            f"{floor_mw:.6f} MW; packets cannot be interrupted"
        )


class InsufficientRequests(ValueError):
    """Input above what current request volume can supply."""

    def __init__(self, u_mw: float, ceiling_mw: float):
        self.u_mw = u_mw
        self.ceiling_mw = ceiling_mw
        super().__init__(
            f"input {u_mw:.6f} MW exceeds the request-limited ceiling "
            f"{ceiling_mw:.6f} MW"
        )


@dataclass(frozen=True)
class VbParams:
    """Aggregate model parameters.

    `p_rate_fleet_mw` is the fleet's total rated power; per-device
    quantities are derived from it and `n`.  `q_mean_kw` is the mean
    thermal draw per device: the model sees only the mean, the agent
    fleet sees the full pulse process.
    """

    n: int = 6000
    p_rate_fleet_mw: float = 27.0
    tau_s: float = 108_000.0
    x_amb_c: float = 20.0
    tank_liters: float = 200.0
    c_kj: float = SPECIFIC_HEAT_KJ
    rho_kg_l: float = WATER_DENSITY_KG_L
    q_mean_kw: float = 4.637 * 300.0 / 3600.0
    a1: float = 1.0 / 300.0
    a2: float = 1.0 / 300.0
    n_p: int = 90
    t_d: int = 0
    dt: float = 2.0
    z_lo_c: float = 43.0
    z_hi_c: float = 57.0
    z_set_c: float = 50.0
    m_r_hz: float = 1.0 / 300.0

    def __post_init__(self):
        if self.n_p < 1 or self.n_p != int(self.n_p):
            raise ValueError(f"n_p must be a positive integer, got {self.n_p}")
        if not (0.0 <= self.a1 <= 1.0 and 0.0 <= self.a2 <= 1.0):
            raise ValueError(f"a1, a2 must lie in [0, 1], got {self.a1}, {self.a2}")
        if self.t_d < 0:
            raise ValueError(f"t_d must be >= 0, got {self.t_d}")
        if self.n < 1 or self.p_rate_fleet_mw <= 0 or self.tau_s <= 0 or self.dt <= 0:
            raise ValueError("n, p_rate_fleet_mw, tau_s, dt must be positive")
        if self.tank_liters <= 0 or self.q_mean_kw < 0:
            raise ValueError("tank_liters must be positive, q_mean_kw nonnegative")
        if not (self.z_lo_c < self.z_set_c < self.z_hi_c):
            raise ValueError("deadband must satisfy z_lo < z_set < z_hi")

    @property
    def p_dev_mw(self) -> float:
        return self.p_rate_fleet_mw / self.n

    @property
    def heat_capacity_kj_per_c(self) -> float:
        return self.c_kj * self.rho_kg_l * self.tank_liters

    @property
    def n_states(self) -> int:
        return 3 + self.n_p

    @classmethod
    def from_fleet(
        cls,
        dev: DeviceParams,
        draw: WaterDrawProcess,
        n: int,
        dt: float = 2.0,
        n_p: int = 90,
        t_d: int = 0,
        a1: float = 1.0 / 300.0,
        a2: float = 1.0 / 300.0,
    ) -> "VbParams":
        return cls(
            n=n,
            p_rate_fleet_mw=n * dev.p_rate_kw / 1000.0,
            tau_s=dev.tau_s,
            x_amb_c=dev.amb_c,
            tank_liters=dev.tank_liters,
            q_mean_kw=draw.mean_kw(),
            a1=a1,
            a2=a2,
            n_p=n_p,
            t_d=t_d,
            dt=dt,
            z_lo_c=dev.z_lo_c,
            z_hi_c=dev.z_hi_c,
            z_set_c=dev.z_set_c,
            m_r_hz=dev.m_r_hz,
        )


@dataclass(frozen=True)
class VbState:
    """Aggregate state; x2, x3 and the z conveyor are device counts."""

    x1: float
    x2: float
    x3: float
    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64).copy()
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        vec = np.concatenate(([self.x1, self.x2, self.x3], z))
        if not np.isfinite(vec).all():
            raise ValueError("state must be finite")

    @property
    def x_on(self) -> float:
        return self.x2 + self.x3 - float(self.z[-1])

    def as_vector(self) -> np.ndarray:
        return np.concatenate(([self.x1, self.x2, self.x3], self.z))

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "VbState":
        v = np.asarray(v, dtype=np.float64)
        return cls(x1=float(v[0]), x2=float(v[1]), x3=float(v[2]), z=v[3:])


def output_mw(st: VbState, params: VbParams) -> float:
    """Fleet power: per-device rating times the total count heating."""
    return params.p_dev_mw * (st.x2 + st.x3)


def feasible_input_bounds(st: VbState, params: VbParams) -> tuple[float, float]:
    """(floor, ceiling) on u in MW.

    Floor: packets already running cannot be interrupted.  Ceiling:
    admissions are limited to the expected request volume from the OFF
    population at the current mean temperature.
    """
    p_dev = params.p_dev_mw
    x_on = st.x_on
    lo = p_dev * x_on
    p_req = request_probability(st.x1, params, params.dt)
    hi = lo + p_dev * p_req * (params.n - x_on)
    return lo, hi


def vb_step(
    st: VbState, u_mw: float, params: VbParams, validate: bool = True
) -> VbState:
    """One aggregate step under admitted power u (already delay-shifted).

    With validate=True the input is checked against the running-packet
    floor and the request ceiling; the prediction path disables the
    check because linearization explores unconstrained perturbations.
    """
    if not np.isfinite(u_mw):
        raise ValueError("input must be finite")
    lo, hi = feasible_input_bounds(st, params)
    if validate:
        if u_mw < lo - 1e-9:
            raise DownRampViolation(u_mw, lo)
        if u_mw > hi + 1e-9:
            raise InsufficientRequests(u_mw, hi)
    p_dev = params.p_dev_mw
    c = u_mw / p_dev
    x_on = st.x_on
    p_req = request_probability(st.x1, params, params.dt)
    dt = params.dt
    # per-device heat balance; expiring devices still heat through their
    # final step, hence x2 + x3 rather than x_on
    heat_kw = (1000.0 * p_dev) * (st.x2 + st.x3) / params.n
    x1 = (
        st.x1 * (1.0 - dt / params.tau_s)
        + dt * params.x_amb_c / params.tau_s
        + (dt / params.heat_capacity_kj_per_c) * (heat_kw - params.q_mean_kw)
    )
    x2 = c - st.x3
    x3 = (
        st.x3 * (1.0 - params.a2)
        + params.a1 * p_req * (params.n - x_on)
        - params.a1 * (c - x_on)
    )
    z = np.empty_like(st.z)
    z[0] = c - x_on
    z[1:] = st.z[:-1]
    return VbState(x1=x1, x2=x2, x3=x3, z=z)


def nominal_point(params: VbParams, u_nominal_mw: float) -> tuple[VbState, float]:
    """Fixed point of the aggregate dynamics under constant input.

    Seeded with the closed-form balance (thermal equilibrium pins x1,
    the opt-out balance pins x3, and the conveyor carries x2/n_p per
    slot), then polished by damped fixed-point iteration: the thermal
    pole is too close to 1 for plain iteration to converge from afar.
    """
    p_dev = params.p_dev_mw
    c = u_nominal_mw / p_dev
    if not 0.0 <= c <= params.n:
        raise ValueError(
            f"u_nominal {u_nominal_mw} MW outside [0, {params.p_rate_fleet_mw}] MW"
        )
    x1 = params.x_amb_c + (params.tau_s / params.heat_capacity_kj_per_c) * (
        1000.0 * p_dev * c / params.n - params.q_mean_kw
    )
    if not (params.z_lo_c < x1 < params.z_hi_c):
        raise ValueError(
            f"u_nominal {u_nominal_mw} MW implies mean temperature "
            f"{x1:.2f} C outside the operating band "
            f"({params.z_lo_c}, {params.z_hi_c})"
        )
    p_req = request_probability(x1, params, params.dt)
    beta = 1.0 / params.n_p
    den = params.a2 - params.a1 * beta * (1.0 - p_req)
    if den <= 0:
        raise ValueError("opt-out parameters admit no stable operating point")
    x3 = params.a1 * (p_req * (params.n - c) - beta * c * (1.0 - p_req)) / den
    z_slot = (c - x3) / params.n_p
    x = VbState(x1=x1, x2=c - x3, x3=x3, z=np.full(params.n_p, z_slot))
    gamma = 0.5
    for _ in range(10_000):
        fx = vb_step(x, u_nominal_mw, params, validate=False)
        residual = np.max(np.abs(fx.as_vector() - x.as_vector()))
        if residual < 1e-10:
            lo, hi = feasible_input_bounds(x, params)
            if u_nominal_mw > hi + 1e-9:
                need = (u_nominal_mw - lo) / p_dev
                pool = (hi - lo) / p_dev
                raise ValueError(
                    f"u_nominal {u_nominal_mw} MW cannot be sustained: holding "
                    f"it needs {need:.1f} admissions per step but the expected "
                    f"request pool supplies {pool:.1f}; lengthen the packets or "
                    f"lower the operating point"
                )
            return x, output_mw(x, params)
        blended = (1.0 - gamma) * x.as_vector() + gamma * fx.as_vector()
        x = VbState.from_vector(blended)
    raise RuntimeError(
        "nominal point iteration did not converge within 10000 iterations"
    )


@dataclass(frozen=True)
class LinModel:
    """Linearization around (x0, u0): dx' = (f0 - x0) + A dx + B du."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    cm: np.ndarray
    f0: np.ndarray
    x0: np.ndarray
    u0: float
    y0: float


def linearize(st: VbState, u0_mw: float, params: VbParams) -> LinModel:
    """Analytic Jacobians of the aggregate step at (st, u0).

    Valid only with the mean temperature strictly inside the deadband,
    where the request probability is differentiable.
    """
    x1 = st.x1
    if not (params.z_lo_c < x1 < params.z_hi_c):
        raise ValueError(
            f"mean temperature {x1:.3f} C is at or beyond a deadband edge; "
            "the request curve is not differentiable there"
        )
    k = params.n_states
    n_p = params.n_p
    p_dev = params.p_dev_mw
    dt = params.dt
    k0 = (params.z_set_c - params.z_lo_c) / (params.z_hi_c - params.z_set_c)
    mu = params.m_r_hz * k0 * (params.z_hi_c - x1) / (x1 - params.z_lo_c)
    dmu = -params.m_r_hz * k0 * (params.z_hi_c - params.z_lo_c) / (x1 - params.z_lo_c) ** 2
    p_req = -np.expm1(-mu * dt)
    dp_req = dt * dmu * np.exp(-mu * dt)
    x_on = st.x_on

    a = np.zeros((k, k))
    iz = 3  # first conveyor slot
    a[0, 0] = 1.0 - dt / params.tau_s
    heat_per_count = dt * (1000.0 * p_dev) / (params.n * params.heat_capacity_kj_per_c)
    a[0, 1] = heat_per_count
    a[0, 2] = heat_per_count
    a[1, 2] = -1.0
    a[2, 0] = params.a1 * dp_req * (params.n - x_on)
    a[2, 1] = params.a1 * (1.0 - p_req)
    a[2, 2] = (1.0 - params.a2) + params.a1 * (1.0 - p_req)
    a[2, iz + n_p - 1] = -params.a1 * (1.0 - p_req)
    a[iz, 1] = -1.0
    a[iz, 2] = -1.0
    a[iz, iz + n_p - 1] = 1.0
    for i in range(1, n_p):
        a[iz + i, iz + i - 1] = 1.0

    b = np.zeros(k)
    b[1] = 1.0 / p_dev
    b[2] = -params.a1 / p_dev
    b[iz] = 1.0 / p_dev

    c = np.zeros(k)
    c[1] = p_dev
    c[2] = p_dev
    cm = np.zeros(k)
    cm[1] = p_dev
    cm[2] = p_dev
    cm[iz + n_p - 1] = -p_dev

    x0 = st.as_vector()
    f0 = vb_step(st, u0_mw, params, validate=False).as_vector()
    return LinModel(
        a=a, b=b, c=c, cm=cm, f0=f0, x0=x0, u0=float(u0_mw),
        y0=float(c @ x0),
    )


def observe_fleet(fl: Fleet, params: VbParams) -> VbState:
    """Aggregate state read off the agent fleet.

    Conveyor slot i holds the charging devices with n_p - i + 1 timer
    steps left; packets longer than the conveyor (randomized lengths)
    are clamped into the newest slot.
    """
    x1 = float(fl.soc_c.mean())
    x2 = float(np.count_nonzero(fl.mode == CHARGING))
    x3 = float(np.count_nonzero(fl.mode == OPT_OUT))
    charging = fl.mode == CHARGING
    timers = fl.timer_steps[charging]
    slots = np.clip(params.n_p - timers + 1, 1, params.n_p)
    z = np.bincount(slots, minlength=params.n_p + 1)[1:].astype(np.float64)
    return VbState(x1=x1, x2=x2, x3=x3, z=z)
