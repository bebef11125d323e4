"""Battery-free sensing node: storage bookkeeping and cycle scheduling.

A cycle is charge -> backscatter the key -> sense + BLE broadcast. Storage
charges at constant dc power from the PMU cutoff level up to the wake
threshold; backscattering draws nothing from storage (only the per-toggle
cost, 0 J by default); the sense/broadcast task drains ``task_energy``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .codec import PvkFrame, frame_chips
from .errors import NoHarvest

DEFAULT_TASK_DELAY = 10e-3
DEFAULT_MAX_CHIP_RATE = 40e3


class Mode(enum.Enum):
    CHARGING = "Charging"
    BACKSCATTERING = "Backscattering"
    TASKING = "Tasking"


@dataclass(frozen=True)
class NodeConfig:
    node_id: str
    key: PvkFrame
    storage_capacitance: float = 220e-6
    v_start: float = 3.0
    v_stop: float = 2.2
    # None -> the whole budget between v_start and v_stop
    task_energy: float | None = None
    position_distance: float | None = None
    channel: int = 0
    phase_jitter: float = 0.0
    task_delay: float = DEFAULT_TASK_DELAY
    toggle_energy: float = 0.0
    max_chip_rate: float = DEFAULT_MAX_CHIP_RATE

    def __post_init__(self):
        if self.storage_capacitance <= 0:
            raise ValueError("storage_capacitance must be positive")
        if not self.v_start > self.v_stop > 0:
            raise ValueError("require v_start > v_stop > 0")
        budget = cycle_energy_budget(self)
        if self.task_energy is None:
            object.__setattr__(self, "task_energy", budget)
        if not 0 < self.task_energy <= budget * (1 + 1e-12):
            raise ValueError(f"task_energy must lie in (0, {budget:.6g}] J")
        if self.key.chip_rate > self.max_chip_rate:
            raise ValueError(f"chip_rate {self.key.chip_rate:g} Hz exceeds max_chip_rate {self.max_chip_rate:g} Hz")
        if self.channel < 0:
            raise ValueError("channel must be >= 0")
        if not 0 <= self.phase_jitter <= 1:
            raise ValueError("phase_jitter must lie in [0, 1]")
        if self.task_delay < 0 or self.toggle_energy < 0:
            raise ValueError("task_delay and toggle_energy must be >= 0")
        if self.toggle_energy * self.key.n_chips + self.task_energy > budget * (1 + 1e-12):
            raise ValueError("toggle and task energy together exceed the cycle budget")

    @property
    def full_energy(self) -> float:
        """Stored energy at the wake threshold."""
        return 0.5 * self.storage_capacitance * self.v_start**2

    @property
    def frame_energy(self) -> float:
        return self.toggle_energy * self.key.n_chips


@dataclass(frozen=True)
class NodeState:
    stored_energy: float
    mode: Mode = Mode.CHARGING
    cycle_count: int = 0

    @classmethod
    def initial(cls, cfg: NodeConfig) -> NodeState:
        """Freshly drained node: storage sits where a completed cycle leaves it."""
        return cls(stored_energy=cfg.full_energy - cfg.frame_energy - cfg.task_energy)


@dataclass(frozen=True)
class Event:
    kind: str  # "BackscatterFrame" | "BleBroadcast"
    time: float
    node_id: str
    cycle: int
    stored_energy: float
    end_time: float | None = None


BACKSCATTER_FRAME = "BackscatterFrame"
BLE_BROADCAST = "BleBroadcast"


@dataclass(frozen=True)
class Waveform:
    """Timed chip sequence driving one node's BR.

    Chip ``k`` occupies ``[start + k/chip_rate, start + (k+1)/chip_rate)``.
    Level 1 selects the high-reflection state; outside the span the node
    sits in the low-reflection (harvesting) state.
    """

    node_id: str
    start: float
    chip_rate: float
    chips: np.ndarray = field(repr=False)
    channel: int = 0
    distance: float | None = None

    @property
    def end(self) -> float:
        return self.start + len(self.chips) / self.chip_rate

    @property
    def times(self) -> np.ndarray:
        return self.start + np.arange(len(self.chips)) / self.chip_rate

    def transitions(self) -> list[tuple[float, int]]:
        return list(zip(self.times.tolist(), self.chips.tolist()))

    def level_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        # small guard so sample instants that land on a chip edge round into the later chip
        idx = np.floor((t - self.start) * self.chip_rate + 1e-9).astype(np.int64)
        inside = (idx >= 0) & (idx < len(self.chips))
        out = np.zeros(t.shape, dtype=np.uint8)
        out[inside] = self.chips[idx[inside]]
        return out


def cycle_energy_budget(cfg: NodeConfig) -> float:
    return 0.5 * cfg.storage_capacitance * (cfg.v_start**2 - cfg.v_stop**2)


def charge_time(budget: float, harvest_dc_power: float) -> float:
    if harvest_dc_power <= 0:
        raise NoHarvest(f"harvested dc power {harvest_dc_power} W")
    return budget / harvest_dc_power


def emit_waveform(cfg: NodeConfig, start_time: float) -> Waveform:
    return Waveform(
        node_id=cfg.node_id,
        start=start_time,
        chip_rate=cfg.key.chip_rate,
        chips=frame_chips(cfg.key),
        channel=cfg.channel,
        distance=cfg.position_distance,
    )


def nominal_period(cfg: NodeConfig, harvest_dc_power: float) -> float:
    """Cycle period with no jitter and no slot waiting."""
    recharge = cfg.frame_energy + cfg.task_energy
    return charge_time(recharge, harvest_dc_power) + cfg.key.duration + cfg.task_delay


def next_cycle(
    state: NodeState,
    cfg: NodeConfig,
    harvest_dc_power: float,
    now: float,
    rng: np.random.Generator | None = None,
    align: Callable[[float], float] | None = None,
) -> tuple[list[Event], NodeState]:
    """Run one charge -> backscatter -> task cycle starting at ``now``.

    ``align`` maps the wake time to the actual frame start (slotted access);
    the node holds its charge while it waits. The returned state is back in
    Charging mode at the post-task energy; the next cycle starts at the
    broadcast time.
    """
    if state.mode is not Mode.CHARGING:
        raise ValueError(f"node {cfg.node_id} is {state.mode.value}, expected Charging")
    t_wake = now + charge_time(cfg.full_energy - state.stored_energy, harvest_dc_power)
    if cfg.phase_jitter > 0:
        if rng is None:
            raise ValueError("phase_jitter > 0 needs an rng")
        t_wake += rng.uniform(0.0, cfg.phase_jitter * nominal_period(cfg, harvest_dc_power))
    t_frame = align(t_wake) if align is not None else t_wake
    cycle = state.cycle_count + 1
    energy = cfg.full_energy
    t_end = t_frame + cfg.key.duration
    energy -= cfg.frame_energy
    t_ble = t_end + cfg.task_delay
    events = [
        Event(BACKSCATTER_FRAME, t_frame, cfg.node_id, cycle, cfg.full_energy, end_time=t_end),
        Event(BLE_BROADCAST, t_ble, cfg.node_id, cycle, energy),
    ]
    return events, replace(state, stored_energy=energy - cfg.task_energy, mode=Mode.CHARGING, cycle_count=cycle)
