"""Agent-level simulation of an electric water heater fleet under
packetized control.

Devices request fixed-duration energy packets with a rate that depends
on their state of charge (tank temperature); a coordinator elsewhere
accepts or denies each request.  Accepted devices heat for the full
packet, uninterrupted by the coordinator; local thermostat protection
still applies at the deadband edges.  All stochastic draws come from
counter-based per-device streams, so results do not depend on fleet
partitioning or on the presence of other devices.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import rng

__all__ = [
    "DeviceParams",
    "WaterDrawProcess",
    "DeviceState",
    "Fleet",
    "OFF",
    "CHARGING",
    "OPT_OUT",
    "request_rate",
    "request_probability",
    "step_device",
    "fleet_step",
    "make_fleet",
    "nominal_power_kw",
]

OFF = 0
CHARGING = 1
OPT_OUT = 2

SPECIFIC_HEAT_KJ = 4.186   # kJ/(kg C)
WATER_DENSITY_KG_L = 0.990  # kg/L


@dataclass(frozen=True)
class DeviceParams:
    """Water heater parameters shared across the fleet.

    Defaults are calibrated so that 6000 devices in steady operation
    draw about 3.7 MW: per-device standby loss at the setpoint
    (tank_heat_capacity * (z_set - amb) / tau ~= 0.23 kW) plus the mean
    water-draw load (~0.39 kW) comes to 3.7 MW / 6000.
    """

    z_lo_c: float = 43.0
    z_hi_c: float = 57.0
    z_set_c: float = 50.0
    tank_liters: float = 200.0
    tau_s: float = 108_000.0   # ~1 C/h standby loss at setpoint over 20 C ambient
    p_rate_kw: float = 4.5
    m_r_hz: float = 1.0 / 300.0
    amb_c: float = 20.0

    def __post_init__(self):
        if not (self.z_lo_c < self.z_set_c < self.z_hi_c):
            raise ValueError(
                f"deadband must satisfy z_lo < z_set < z_hi, got "
                f"{self.z_lo_c}, {self.z_set_c}, {self.z_hi_c}"
            )
        if self.tau_s <= 0 or self.p_rate_kw <= 0 or self.m_r_hz <= 0 or self.tank_liters <= 0:
            raise ValueError("tau_s, p_rate_kw, m_r_hz, tank_liters must be positive")

    @property
    def heat_capacity_kj_per_c(self) -> float:
        return SPECIFIC_HEAT_KJ * WATER_DENSITY_KG_L * self.tank_liters


@dataclass(frozen=True)
class WaterDrawProcess:
    """Poisson pulse model of hot water usage, in thermal kW."""

    events_per_hour: float = 1.0
    pulse_kw: float = 4.637
    duration_s: float = 300.0

    def mean_kw(self) -> float:
        return self.events_per_hour * self.pulse_kw * self.duration_s / 3600.0


def nominal_power_kw(params: DeviceParams, draw: WaterDrawProcess, n: int) -> float:
    """Fleet power that balances standby loss at setpoint plus mean draw."""
    loss = params.heat_capacity_kj_per_c * (params.z_set_c - params.amb_c) / params.tau_s
    return n * (loss + draw.mean_kw())


def request_rate(soc, params: DeviceParams):
    """Packet request rate in Hz as a function of state of charge.

    Zero at or above z_hi, infinite at or below z_lo, and in between a
    hyperbolic profile equal to m_r at the setpoint.
    """
    soc = np.asarray(soc, dtype=np.float64)
    k0 = (params.z_set_c - params.z_lo_c) / (params.z_hi_c - params.z_set_c)
    with np.errstate(divide="ignore", invalid="ignore"):
        mid = params.m_r_hz * k0 * (params.z_hi_c - soc) / (soc - params.z_lo_c)
    out = np.where(soc >= params.z_hi_c, 0.0, np.where(soc <= params.z_lo_c, np.inf, mid))
    return out if out.ndim else float(out)


def request_probability(soc, params: DeviceParams, dt: float):
    """Probability of emitting a request within one step of length dt."""
    mu = np.asarray(request_rate(soc, params))
    with np.errstate(invalid="ignore"):
        p = -np.expm1(-mu * dt)
    p = np.where(np.isinf(mu), 1.0, p)
    return p if p.ndim else float(p)


@dataclass(frozen=True)
class DeviceState:
    """One device: state of charge, control mode, packet timer, cycles."""

    soc_c: float
    mode: int = OFF
    timer_steps: int = 0
    cycles: int = 0


def step_device(
    st: DeviceState,
    params: DeviceParams,
    accepted: int | None,
    draw_kw: float,
    dt: float,
) -> DeviceState:
    """Advance one device one step.

    `accepted` is the packet length in steps when the coordinator granted
    this device a packet for this step, else None.  `draw_kw` is the
    thermal water-draw power over the step.  Single-device reference
    semantics; `fleet_step` is the vectorized equivalent.
    """
    mode, timer, cycles = st.mode, st.timer_steps, st.cycles
    if accepted is not None:
        if accepted < 1:
            raise ValueError(f"packet length must be >= 1 step, got {accepted}")
        if mode == OFF:
            mode = CHARGING
            timer = int(accepted)
            cycles += 1
    heat = params.p_rate_kw if mode != OFF else 0.0
    soc = st.soc_c + dt * (
        -(st.soc_c - params.amb_c) / params.tau_s
        + (heat - draw_kw) / params.heat_capacity_kj_per_c
    )
    if mode == CHARGING:
        timer -= 1
        if timer <= 0:
            mode, timer = OFF, 0
    if soc <= params.z_lo_c and mode != OPT_OUT:
        if mode == OFF:
            cycles += 1
        mode, timer = OPT_OUT, 0
    elif mode == CHARGING and soc >= params.z_hi_c:
        # local thermostat cutout; the coordinator never interrupts
        mode, timer = OFF, 0
    elif mode == OPT_OUT and soc >= params.z_set_c:
        mode = OFF
    return DeviceState(soc_c=soc, mode=mode, timer_steps=timer, cycles=cycles)


@dataclass
class Fleet:
    """Vectorized fleet state.  Arrays are indexed by device id."""

    params: DeviceParams
    draw: WaterDrawProcess
    seed: int
    dt: float
    soc_c: np.ndarray
    mode: np.ndarray
    timer_steps: np.ndarray
    draw_timer_steps: np.ndarray
    cycles: np.ndarray
    request_counts: np.ndarray
    step_index: int = 0

    @property
    def n(self) -> int:
        return self.soc_c.size

    def aggregate_kw(self) -> float:
        return self.params.p_rate_kw * float(np.count_nonzero(self.mode != OFF))

    def copy(self) -> "Fleet":
        return Fleet(
            params=self.params,
            draw=self.draw,
            seed=self.seed,
            dt=self.dt,
            soc_c=self.soc_c.copy(),
            mode=self.mode.copy(),
            timer_steps=self.timer_steps.copy(),
            draw_timer_steps=self.draw_timer_steps.copy(),
            cycles=self.cycles.copy(),
            request_counts=self.request_counts.copy(),
            step_index=self.step_index,
        )

    def device_ids(self) -> np.ndarray:
        return np.arange(self.n, dtype=np.uint64)


def make_fleet(
    n: int,
    params: DeviceParams,
    draw: WaterDrawProcess,
    seed: int,
    dt: float = 2.0,
    packet_steps: int = 90,
    target_kw: float | None = None,
    id_offset: int = 0,
) -> Fleet:
    """Fleet initialized near steady operation.

    SoC is spread around the setpoint, a `target_kw` worth of devices
    start mid-packet with staggered timers, and draw events are seeded at
    their stationary activity level.  `id_offset` shifts only the
    initialization streams, to decorrelate fleets built from one seed.
    """
    ids = np.arange(id_offset, id_offset + n, dtype=np.uint64)
    u_soc = rng.uniform(seed, rng.STREAM_INIT, ids, 0)
    u_on = rng.uniform(seed, rng.STREAM_INIT, ids, 1)
    u_timer = rng.uniform(seed, rng.STREAM_INIT, ids, 2)
    u_draw = rng.uniform(seed, rng.STREAM_INIT, ids, 3)
    u_draw_t = rng.uniform(seed, rng.STREAM_INIT, ids, 4)
    soc = params.z_set_c + (u_soc - 0.5) * 5.0
    if target_kw is None:
        target_kw = nominal_power_kw(params, draw, n)
    on_frac = min(0.95, target_kw / (n * params.p_rate_kw))
    mode = np.where(u_on < on_frac, CHARGING, OFF).astype(np.int8)
    timer = np.where(
        mode == CHARGING, 1 + (u_timer * packet_steps).astype(np.int64), 0
    )
    active_frac = min(0.95, draw.events_per_hour * draw.duration_s / 3600.0)
    dur_steps = max(1, int(round(draw.duration_s / dt)))
    draw_timer = np.where(
        u_draw < active_frac, 1 + (u_draw_t * dur_steps).astype(np.int64), 0
    )
    return Fleet(
        params=params,
        draw=draw,
        seed=seed,
        dt=dt,
        soc_c=soc,
        mode=mode,
        timer_steps=timer,
        draw_timer_steps=draw_timer,
        cycles=np.zeros(n, dtype=np.int64),
        request_counts=np.zeros(n, dtype=np.int64),
        step_index=0,
    )


def fleet_step(
    fl: Fleet,
    decisions: dict[int, int] | None,
    device_ids: np.ndarray | None = None,
) -> tuple[np.ndarray, float, int]:
    """Advance the fleet one step, in place.

    `decisions` maps device id to granted packet length in steps, for
    requests the fleet emitted on the previous step; denied requests are
    simply absent.  Returns (requesting device ids, aggregate kW after
    the step, opt-out count).  A decision for a device that is not
    eligible to start a packet (not OFF) is ignored; a decision for an id
    outside the fleet is an error.

    `device_ids` restricts the step to a subset of devices (used to
    partition work); draws depend only on (seed, device id, step), so a
    partitioned step equals a whole-fleet step.
    """
    p = fl.params
    dt = fl.dt
    if device_ids is None:
        ids = fl.device_ids()
        sl = slice(None)
    else:
        ids = np.asarray(device_ids, dtype=np.uint64)
        sl = ids.astype(np.int64)
        if sl.size > 1 and not (np.diff(sl) > 0).all():
            raise ValueError("device_ids must be sorted and unique")
        if sl.size and (sl[0] < 0 or sl[-1] >= fl.n):
            raise ValueError(f"device id out of range: {sl[0] if sl[0] < 0 else sl[-1]}")
    mode = fl.mode[sl]
    timer = fl.timer_steps[sl]
    soc = fl.soc_c[sl]
    draw_timer = fl.draw_timer_steps[sl]
    cycles = fl.cycles[sl]

    if decisions:
        acc_ids = np.asarray(sorted(decisions.keys()), dtype=np.int64)
        if acc_ids.min() < 0 or acc_ids.max() >= fl.n:
            bad = acc_ids[(acc_ids < 0) | (acc_ids >= fl.n)][0]
            raise ValueError(f"decision for nonexistent device id {bad}")
        if device_ids is not None:
            keep = np.isin(acc_ids, sl)
            acc_ids = acc_ids[keep]
        lengths = np.asarray([decisions[int(i)] for i in acc_ids], dtype=np.int64)
        if lengths.size and lengths.min() < 1:
            raise ValueError("packet length must be >= 1 step")
        local = acc_ids if device_ids is None else np.searchsorted(sl, acc_ids)
        ok = mode[local] == OFF
        mode[local[ok]] = CHARGING
        timer[local[ok]] = lengths[ok]
        cycles[local[ok]] += 1

    # water draw events start, draw power applies, timers count down
    dur_steps = max(1, int(round(fl.draw.duration_s / dt)))
    p_event = fl.draw.events_per_hour * dt / 3600.0
    u_ev = rng.uniform(fl.seed, rng.STREAM_DRAW_EVENT, ids, fl.step_index)
    start = (draw_timer <= 0) & (u_ev < p_event)
    draw_timer[start] = dur_steps
    drawing = draw_timer > 0
    draw_kw = np.where(drawing, fl.draw.pulse_kw, 0.0)
    draw_timer[drawing] -= 1

    heat_kw = np.where(mode != OFF, p.p_rate_kw, 0.0)
    soc += dt * (
        -(soc - p.amb_c) / p.tau_s + (heat_kw - draw_kw) / p.heat_capacity_kj_per_c
    )

    chg = mode == CHARGING
    timer[chg] -= 1
    expired = chg & (timer <= 0)
    mode[expired] = OFF
    timer[expired] = 0

    cold = (soc <= p.z_lo_c) & (mode != OPT_OUT)
    cycles[cold & (mode == OFF)] += 1
    mode[cold] = OPT_OUT
    timer[cold] = 0
    hot_cut = (mode == CHARGING) & (soc >= p.z_hi_c)
    mode[hot_cut] = OFF
    timer[hot_cut] = 0
    recovered = (mode == OPT_OUT) & (soc >= p.z_set_c) & ~cold
    mode[recovered] = OFF

    off_band = (mode == OFF) & (soc > p.z_lo_c) & (soc < p.z_hi_c)
    u_req = rng.uniform(fl.seed, rng.STREAM_REQUEST, ids, fl.step_index)
    prob = request_probability(soc, p, dt)
    requesting = off_band & (u_req < prob)

    if device_ids is None:
        fl.soc_c = soc
        fl.mode = mode
        fl.timer_steps = timer
        fl.draw_timer_steps = draw_timer
        fl.cycles = cycles
        req_ids = np.flatnonzero(requesting)
        fl.request_counts[req_ids] += 1
        fl.step_index += 1
        agg = p.p_rate_kw * float(np.count_nonzero(mode != OFF))
        n_opt = int(np.count_nonzero(mode == OPT_OUT))
        return req_ids, agg, n_opt
    else:
        fl.soc_c[sl] = soc
        fl.mode[sl] = mode
        fl.timer_steps[sl] = timer
        fl.draw_timer_steps[sl] = draw_timer
        fl.cycles[sl] = cycles
        req_ids = sl[np.flatnonzero(requesting)]
        fl.request_counts[req_ids] += 1
        return req_ids, p.p_rate_kw * float(np.count_nonzero(mode != OFF)), int(
            np.count_nonzero(mode == OPT_OUT)
        )
