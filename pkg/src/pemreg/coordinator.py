"""Packet coordinator: greedy admission of device energy requests
against a power reference.

Each control step the coordinator receives the ids of devices that
requested a packet, shuffles them with a seeded per-device draw (so the
outcome does not depend on arrival order), and accepts requests while
the measured aggregate plus the newly committed power stays at or below
the reference.  Packet lengths are either fixed or randomized, at the
coordinator (fresh draw per accept) or at the device (a short string of
pre-drawn lengths the device cycles through).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .fleet import DeviceParams, Fleet

__all__ = [
    "PacketPolicy",
    "CoordinatorState",
    "Coordinator",
    "draw_packet_length",
    "cycling_report",
]

_RANDOMIZE_MODES = ("none", "coordinator", "device")


@dataclass(frozen=True)
class PacketPolicy:
    """Packet length policy.

    `delta_p_s` is the mean packet length and `delta_a_s` the half-width
    of the uniform band [delta_p - delta_a, delta_p + delta_a] that
    lengths are drawn from when `randomize_at` is not "none"; zero keeps
    every packet at `delta_p_s`.  Lengths land on the step grid with the
    boundary points included.  In "device" mode each device owns a
    string of `string_len` pre-drawn lengths and cycles through it with
    its request count, so the coordinator can reproduce the length
    without a round trip.
    """

    delta_p_s: float = 180.0
    delta_a_s: float = 0.0
    randomize_at: str = "none"
    string_len: int = 8

    def __post_init__(self):
        if self.delta_p_s <= 0:
            raise ValueError(f"delta_p_s must be positive, got {self.delta_p_s}")
        if not 0.0 <= self.delta_a_s < self.delta_p_s:
            raise ValueError(
                "half-width must satisfy 0 <= delta_a_s < delta_p_s, got "
                f"{self.delta_a_s} against {self.delta_p_s}"
            )
        if self.randomize_at not in _RANDOMIZE_MODES:
            raise ValueError(
                f"randomize_at must be one of {_RANDOMIZE_MODES}, got "
                f"{self.randomize_at!r}"
            )
        if self.string_len < 1:
            raise ValueError("string_len must be >= 1")

    def packet_steps(self, dt: float) -> int:
        return max(1, round(self.delta_p_s / dt))

    def support_steps(self, dt: float) -> tuple[int, int]:
        """Inclusive step-count range the uniform draw can return."""
        lo = math.ceil((self.delta_p_s - self.delta_a_s) / dt - 1e-9)
        hi = math.floor((self.delta_p_s + self.delta_a_s) / dt + 1e-9)
        return max(1, lo), max(1, hi)


def draw_packet_length(
    policy: PacketPolicy, dt: float, seed: int, device_id: int, counter: int
) -> int:
    """Packet length in steps, uniform over the grid points of the
    policy band; a zero half-width returns the mean length exactly.

    Counter-keyed so any party holding the seed reproduces the draw.
    """
    if policy.delta_a_s <= 0.0:
        return policy.packet_steps(dt)
    lo, hi = policy.support_steps(dt)
    if hi <= lo:
        # band narrower than one grid step; nothing to randomize
        return policy.packet_steps(dt)
    u = rng.uniform_scalar(seed, rng.STREAM_PACKET_LEN, device_id, counter)
    return lo + min(int(u * (hi - lo + 1)), hi - lo)


@dataclass
class CoordinatorState:
    step: int = 0
    locked_kw: float = 0.0
    expiries: dict[int, float] = field(default_factory=dict)
    accepts: int = 0
    denies: int = 0


@dataclass
class Coordinator:
    """Greedy admission against a kW reference.

    `locked_kw` tracks power committed to granted packets that have not
    yet expired; thermostat cutouts can release devices early, so it is
    an upper bound on coordinator-granted load, kept for diagnostics.
    """

    params: DeviceParams
    policy: PacketPolicy = field(default_factory=PacketPolicy)
    dt: float = 2.0
    seed: int = 0
    state: CoordinatorState = field(default_factory=CoordinatorState)

    def decide(
        self,
        requests: np.ndarray,
        reference_kw: float,
        measured_kw: float,
        request_counts: np.ndarray | None = None,
    ) -> dict[int, int]:
        """One control step: grant packets to a subset of `requests`.

        `measured_kw` is the aggregate before this step's grants take
        effect.  `request_counts` (per-device totals including the
        pending request) is required in device-randomized mode.
        Returns {device_id: packet length in steps}; denied requests are
        absent.  Advances the coordinator state by one step.
        """
        k = self.state.step
        self.state.locked_kw -= self.state.expiries.pop(k, 0.0)
        ids = np.unique(np.asarray(requests, dtype=np.int64))
        p_rate = self.params.p_rate_kw
        # Ledger entries keyed one step ahead are packets in their final
        # measured step: still present in measured_kw, gone from the next
        # sample.  Crediting them back lets replacements start the moment
        # the old packets lapse; without the credit every expiry eats one
        # grant and the aggregate sags below the reference by the expiry
        # rate.
        expiring_kw = self.state.expiries.get(k + 1, 0.0)
        headroom = reference_kw - measured_kw + expiring_kw
        n_fit = int(max(0.0, headroom) // p_rate)
        n_acc = min(n_fit, ids.size)
        decisions: dict[int, int] = {}
        if n_acc > 0:
            u = rng.uniform(self.seed, rng.STREAM_COORDINATOR, ids.astype(np.uint64), k)
            chosen = ids[np.argsort(u, kind="stable")][:n_acc]
            for i in chosen:
                length = self._packet_length(int(i), request_counts)
                decisions[int(i)] = length
                self.state.locked_kw += p_rate
                key = k + length
                self.state.expiries[key] = self.state.expiries.get(key, 0.0) + p_rate
        self.state.accepts += n_acc
        self.state.denies += ids.size - n_acc
        self.state.step += 1
        return decisions

    def _packet_length(self, device_id: int, request_counts: np.ndarray | None) -> int:
        mode = self.policy.randomize_at
        if mode == "none":
            return self.policy.packet_steps(self.dt)
        if mode == "coordinator":
            return draw_packet_length(
                self.policy, self.dt, self.seed, device_id, self.state.step
            )
        if request_counts is None:
            raise ValueError("device-randomized packet lengths need request_counts")
        # the request being decided is the device's latest, already counted
        idx = (int(request_counts[device_id]) - 1) % self.policy.string_len
        return draw_packet_length(self.policy, self.dt, self.seed, device_id, idx)


def cycling_report(fl: Fleet, elapsed_s: float) -> dict[str, float]:
    """Compressor starts per device per day, from fleet cycle counters."""
    if elapsed_s <= 0:
        raise ValueError("elapsed_s must be positive")
    per_day = fl.cycles * (86400.0 / elapsed_s)
    return {
        "mean_cycles_per_day": float(per_day.mean()),
        "p95_cycles_per_day": float(np.percentile(per_day, 95.0)),
        "max_cycles_per_day": float(per_day.max()),
    }
