"""Deterministic multi-node simulation of the backscatter identification link.

The run has three phases. Node cycles are scheduled through a time-ordered
event queue; every backscatter frame then gets its own trace window (frame
plus 25% guard either side) synthesized from all nodes sharing its channel
and decoded by the monitor; finally each BLE broadcast goes through the
accept/reject gate. Traces are only built around frames, so memory stays
bounded however long the run.
"""

from __future__ import annotations

import heapq
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from . import rng as rngmod
from .errors import ChannelOutOfRange, ConfigError
from .monitor import DecodeResult, KeyRegistry, PowerTrace, Status, authenticate, decode_frame
from .node import (
    BACKSCATTER_FRAME,
    NodeConfig,
    NodeState,
    Waveform,
    emit_waveform,
    next_cycle,
)
from .rf_link import HIGH, LOW, RfParams, backscatter_power_dbm, dbm_to_mw, harvest_dc_power_w, mw_to_dbm

GUARD_FRACTION = 0.25
DEFAULT_SAMPLE_RATE = 1e6


@dataclass(frozen=True)
class FreeRunning:
    pass


@dataclass(frozen=True)
class Slotted:
    """Frames start only on slot boundaries.

    Slots repeat in a superframe of ``max(slot) + 1`` slots; a node that
    wakes early holds its charge until its own slot opens.
    """

    slot_period: float
    slot_assignments: dict[str, int]

    def next_slot_start(self, node_id: str, t: float) -> float:
        n_slots = max(self.slot_assignments.values()) + 1
        superframe = n_slots * self.slot_period
        offset = self.slot_assignments[node_id] * self.slot_period
        m = math.ceil((t - offset) / superframe - 1e-12)
        return max(m, 0) * superframe + offset


@dataclass(frozen=True)
class Fdm:
    channels: int


@dataclass(frozen=True)
class ScenarioConfig:
    rf: RfParams
    nodes: tuple[NodeConfig, ...]
    duration: float
    seed: int = 0
    mode: FreeRunning | Slotted | Fdm = field(default_factory=FreeRunning)
    sample_rate: float = DEFAULT_SAMPLE_RATE
    attacker_nodes: tuple[str, ...] = ()
    auth_window: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "attacker_nodes", tuple(self.attacker_nodes))
        validate_scenario(self)


def validate_scenario(cfg: ScenarioConfig) -> None:
    if not cfg.duration > 0:
        raise ConfigError("duration_s", "must be > 0")
    if not cfg.nodes:
        raise ConfigError("nodes", "at least one node")
    ids = [n.node_id for n in cfg.nodes]
    seen = set()
    for i, node_id in enumerate(ids):
        if node_id in seen:
            raise ConfigError(f"nodes[{i}].id", f"duplicate node id {node_id!r}")
        seen.add(node_id)
    for i, node_id in enumerate(cfg.attacker_nodes):
        if node_id not in seen:
            raise ConfigError(f"attackers[{i}]", f"unknown node id {node_id!r}")
    if cfg.sample_rate <= 0:
        raise ConfigError("sample_rate_hz", "must be > 0")
    for i, n in enumerate(cfg.nodes):
        if cfg.sample_rate < 4 * n.key.chip_rate:
            raise ConfigError("sample_rate_hz", f"needs >= 4x chip rate of nodes[{i}]")
    if isinstance(cfg.mode, Slotted):
        if cfg.mode.slot_period <= 0:
            raise ConfigError("mode.slot_period_s", "must be > 0")
        for i, node_id in enumerate(ids):
            if node_id not in cfg.mode.slot_assignments:
                raise ConfigError("mode.slot_assignments", f"no slot for nodes[{i}] ({node_id!r})")
        for node_id, slot in cfg.mode.slot_assignments.items():
            if slot < 0:
                raise ConfigError(f"mode.slot_assignments.{node_id}", "slot must be >= 0")
    if isinstance(cfg.mode, Fdm):
        if cfg.mode.channels < 1:
            raise ConfigError("mode.channels", "must be >= 1")
        for n in cfg.nodes:
            if n.channel >= cfg.mode.channels:
                raise ChannelOutOfRange(n.node_id, n.channel, cfg.mode.channels)


# --- trace synthesis -------------------------------------------------------


def superpose_trace(
    rf: RfParams,
    waveforms: Iterable[Waveform],
    window: tuple[float, float],
    sample_rate: float,
    channel: int = 0,
    rng: np.random.Generator | None = None,
) -> PowerTrace:
    """Received power at the monitor over ``[t0, t1)``.

    Every waveform's node contributes its low-state backscatter whenever it
    is not presenting a high chip. Several waveforms with the same node id
    are one node (high if any of them is high). Gaussian noise of
    ``rf.noise_sigma_db`` is added in dB.
    """
    t0, t1 = window
    n = int(round((t1 - t0) * sample_rate))
    t = t0 + np.arange(n) / sample_rate
    total = np.full(n, dbm_to_mw(rf.effective_leakage))

    by_node: dict[str, list[Waveform]] = {}
    for w in waveforms:
        if w.channel != channel:
            raise ValueError(f"waveform of {w.node_id} is on channel {w.channel}, trace is channel {channel}")
        by_node.setdefault(w.node_id, []).append(w)
    for node_id in sorted(by_node):
        group = by_node[node_id]
        link = rf.with_distance(group[0].distance)
        p_high = dbm_to_mw(backscatter_power_dbm(link, HIGH))
        p_low = dbm_to_mw(backscatter_power_dbm(link, LOW))
        high = np.zeros(n, dtype=bool)
        for w in group:
            high |= w.level_at(t).astype(bool)
        total += np.where(high, p_high, p_low)

    samples = mw_to_dbm(total)
    if rf.noise_sigma_db > 0 and rng is not None:
        samples = samples + rng.normal(0.0, rf.noise_sigma_db, n)
    return PowerTrace(sample_rate=sample_rate, samples=samples, start_time=t0, channel=channel)


def idle_waveform(cfg: NodeConfig, channel: int) -> Waveform:
    return Waveform(cfg.node_id, 0.0, cfg.key.chip_rate, np.zeros(0, dtype=np.uint8), channel, cfg.position_distance)


# --- collision statistics --------------------------------------------------


def collision_prob_analytic(n: int, frame_dur: float, cycle_period: float) -> float:
    """Probability that at least two of ``n`` frames overlap.

    Phases are independent and uniform on a circle of circumference
    ``cycle_period``. Exact for two nodes (``min(1, 2*tau/T)``); for more it
    is the product approximation 1 - prod_k max(0, 1 - 2*k*tau/T).
    """
    if n < 2:
        raise ValueError("need at least two nodes")
    if frame_dur < 0 or cycle_period <= 0:
        raise ValueError("frame_dur must be >= 0 and cycle_period > 0")
    ratio = 2.0 * frame_dur / cycle_period
    survive = 1.0
    for k in range(1, n):
        survive *= max(0.0, 1.0 - k * ratio)
    return 1.0 - survive


MC_CHUNK = 1 << 16


def collision_prob_mc(n: int, frame_dur: float, cycle_period: float, trials: int, seed: int) -> tuple[float, float]:
    """Monte Carlo estimate and binomial standard error.

    Trials run in fixed-size chunks, each with its own derived stream, so the
    result depends only on ``(seed, trials)`` and not on how chunks are
    scheduled.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if n < 2:
        raise ValueError("need at least two nodes")
    hits = 0
    for chunk, lo in enumerate(range(0, trials, MC_CHUNK)):
        size = min(MC_CHUNK, trials - lo)
        gen = rngmod.derive_rng(seed, rngmod.MONTE_CARLO, chunk)
        phases = np.sort(gen.uniform(0.0, cycle_period, size=(size, n)), axis=1)
        gaps = np.diff(phases, axis=1)
        wrap = cycle_period - (phases[:, -1] - phases[:, 0])
        closest = np.minimum(gaps.min(axis=1), wrap)
        hits += int(np.count_nonzero(closest < frame_dur))
    p = hits / trials
    return p, math.sqrt(p * (1.0 - p) / trials)


# --- scenario run ----------------------------------------------------------


@dataclass
class NodeReport:
    cycles_completed: int = 0
    frames_emitted: int = 0
    frames_decoded: int = 0
    frames_corrupted: int = 0
    frames_missed: int = 0
    ble_broadcasts: int = 0
    accepts: int = 0
    rejects: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "cycles_completed": self.cycles_completed,
            "frames_emitted": self.frames_emitted,
            "frames_decoded": self.frames_decoded,
            "frames_corrupted": self.frames_corrupted,
            "frames_missed": self.frames_missed,
            "ble_broadcasts": self.ble_broadcasts,
            "accepts": self.accepts,
            "rejects": dict(sorted(self.rejects.items())),
        }


@dataclass
class FrameRecord:
    node_id: str
    cycle: int
    channel: int
    waveform: Waveform
    trace: PowerTrace | None = None
    result: DecodeResult | None = None


@dataclass
class SimReport:
    nodes: dict[str, NodeReport]
    collision_events: int = 0
    mean_measured_dr_db: float | None = None
    trace_files: list[str] = field(default_factory=list)
    frames: list[FrameRecord] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "nodes": {k: self.nodes[k].to_json() for k in sorted(self.nodes)},
            "collision_events": self.collision_events,
            "mean_measured_dr_db": self.mean_measured_dr_db,
            "trace_files": list(self.trace_files),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def fdm_channelize(cfg: ScenarioConfig) -> dict[int, ScenarioConfig]:
    """Split an FDM scenario into one free-running view per occupied channel."""
    if not isinstance(cfg.mode, Fdm):
        raise ConfigError("mode", "fdm_channelize needs Fdm mode")
    views: dict[int, ScenarioConfig] = {}
    for ch in sorted({n.channel for n in cfg.nodes}):
        members = tuple(n for n in cfg.nodes if n.channel == ch)
        ids = {n.node_id for n in members}
        views[ch] = replace(
            cfg,
            nodes=members,
            mode=FreeRunning(),
            attacker_nodes=tuple(a for a in cfg.attacker_nodes if a in ids),
        )
    return views


def _schedule(cfg: ScenarioConfig) -> list:
    """All frame and broadcast events up to ``cfg.duration``, in time order."""
    powers = {n.node_id: harvest_dc_power_w(cfg.rf.with_distance(n.position_distance)) for n in cfg.nodes}
    states = {n.node_id: NodeState.initial(n) for n in cfg.nodes}
    streams = {n.node_id: rngmod.derive_rng(cfg.seed, rngmod.JITTER, rngmod.name_key(n.node_id)) for n in cfg.nodes}
    by_id = {n.node_id: n for n in cfg.nodes}
    slotted = cfg.mode if isinstance(cfg.mode, Slotted) else None

    queue = [(0.0, i, n.node_id) for i, n in enumerate(cfg.nodes) if powers[n.node_id] > 0]
    heapq.heapify(queue)
    events = []
    while queue:
        now, order, node_id = heapq.heappop(queue)
        node = by_id[node_id]
        align = (lambda t, nid=node_id: slotted.next_slot_start(nid, t)) if slotted else None
        cycle_events, states[node_id] = next_cycle(states[node_id], node, powers[node_id], now, streams[node_id], align)
        ble = cycle_events[-1]
        if ble.time > cfg.duration:
            # the frame may still fall inside the run; the cycle does not complete
            frame = cycle_events[0]
            if frame.end_time <= cfg.duration:
                events.append(frame)
            continue
        events.extend(cycle_events)
        heapq.heappush(queue, (ble.time, order, node_id))
    events.sort(key=lambda e: (e.time, e.node_id, e.kind))
    return events


def _simulate(cfg: ScenarioConfig, channel_of) -> SimReport:
    attackers = set(cfg.attacker_nodes)
    by_id = {n.node_id: n for n in cfg.nodes}
    reports = {n.node_id: NodeReport() for n in cfg.nodes}
    registry = KeyRegistry({n.node_id: n.key.key for n in cfg.nodes}, cfg.auth_window)

    events = _schedule(cfg)
    frames: list[FrameRecord] = []
    frame_of: dict[tuple[str, int], FrameRecord] = {}
    for ev in events:
        if ev.kind != BACKSCATTER_FRAME or ev.node_id in attackers:
            continue
        node = by_id[ev.node_id]
        ch = channel_of(node)
        rec = FrameRecord(ev.node_id, ev.cycle, ch, replace(emit_waveform(node, ev.time), channel=ch))
        frames.append(rec)
        frame_of[(ev.node_id, ev.cycle)] = rec

    # pairwise overlaps within a channel
    collisions = 0
    by_channel: dict[int, list[FrameRecord]] = {}
    for rec in frames:
        by_channel.setdefault(rec.channel, []).append(rec)
    for recs in by_channel.values():
        recs.sort(key=lambda r: r.waveform.start)
        for i, a in enumerate(recs):
            for b in recs[i + 1 :]:
                if b.waveform.start >= a.waveform.end:
                    break
                collisions += 1

    drs = []
    for rec in frames:
        w = rec.waveform
        guard = GUARD_FRACTION * (w.end - w.start)
        t0, t1 = w.start - guard, w.end + guard
        # attackers own no backscattering rectifier
        members = [n for n in cfg.nodes if channel_of(n) == rec.channel and n.node_id not in attackers]
        active = [
            other.waveform
            for other in by_channel[rec.channel]
            if other.waveform.start < t1 and other.waveform.end > t0
        ]
        idle = [idle_waveform(n, rec.channel) for n in members if n.node_id not in {a.node_id for a in active}]
        noise = rngmod.derive_rng(cfg.seed, rngmod.NOISE, rngmod.name_key(rec.node_id), rec.cycle)
        rec.trace = superpose_trace(cfg.rf, active + idle, (t0, t1), cfg.sample_rate, rec.channel, noise)
        rec.result = decode_frame(rec.trace, by_id[rec.node_id].key)
        rep = reports[rec.node_id]
        rep.frames_emitted += 1
        if rec.result.status is Status.DECODED:
            rep.frames_decoded += 1
        elif rec.result.status is Status.CHIP_ERRORS:
            rep.frames_corrupted += 1
        else:
            rep.frames_missed += 1
        if rec.result.status is not Status.NO_FRAME:
            drs.append(rec.result.measured_dr)

    for ev in events:
        if ev.kind == BACKSCATTER_FRAME:
            continue
        rep = reports[ev.node_id]
        rep.cycles_completed += 1
        rep.ble_broadcasts += 1
        rec = frame_of.get((ev.node_id, ev.cycle))
        verdict = authenticate(ev.node_id, rec.result if rec else None, ev.time, registry)
        if verdict.accepted:
            rep.accepts += 1
        else:
            rep.rejects[verdict.reason.value] = rep.rejects.get(verdict.reason.value, 0) + 1

    report = SimReport(reports, collision_events=collisions, frames=frames)
    report.mean_measured_dr_db = float(np.mean(drs)) if drs else None
    return report


def _merge(parts: list[SimReport]) -> SimReport:
    nodes: dict[str, NodeReport] = {}
    frames: list[FrameRecord] = []
    weighted, count = 0.0, 0
    for part in parts:
        nodes.update(part.nodes)
        frames.extend(part.frames)
        n = sum(1 for f in part.frames if f.result.status is not Status.NO_FRAME)
        if part.mean_measured_dr_db is not None:
            weighted += part.mean_measured_dr_db * n
            count += n
    frames.sort(key=lambda f: (f.waveform.start, f.node_id))
    return SimReport(
        nodes,
        collision_events=sum(p.collision_events for p in parts),
        mean_measured_dr_db=weighted / count if count else None,
        frames=frames,
    )


def run_scenario(cfg: ScenarioConfig, out_dir: str | os.PathLike | None = None) -> SimReport:
    """Simulate ``cfg`` end to end; optionally write per-frame trace CSVs.

    The report depends only on ``cfg``: node jitter and trace noise come
    from streams keyed by (seed, node id, cycle).
    """
    validate_scenario(cfg)
    if isinstance(cfg.mode, Fdm):
        views = fdm_channelize(cfg)
        report = _merge([_simulate(view, lambda n, ch=ch: ch) for ch, view in views.items()])
    else:
        report = _simulate(cfg, lambda n: 0)
    if out_dir is not None:
        report.trace_files = write_traces(report, out_dir)
    return report


def write_trace_csv(trace: PowerTrace, path: str | os.PathLike) -> None:
    t = trace.times
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("time_s,power_dbm\n")
        fh.writelines(f"{ti!r},{pi!r}\n" for ti, pi in zip(t.tolist(), trace.samples.tolist()))


def read_trace_csv(path: str | os.PathLike, channel: int = 0) -> PowerTrace:
    """Load a ``time_s,power_dbm`` CSV; the sample rate comes from the time column."""
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    if data.dtype.names is None or set(data.dtype.names) != {"time_s", "power_dbm"}:
        raise ValueError(f"{path}: expected header 'time_s,power_dbm'")
    data = np.atleast_1d(data)
    t = data["time_s"]
    if t.size < 2:
        raise ValueError(f"{path}: need at least two samples")
    # whole-span estimate; per-sample diffs lose ~1e-9 relative at t ~ 10 s
    rate = float(f"{(t.size - 1) / (t[-1] - t[0]):.9g}")
    return PowerTrace(sample_rate=rate, samples=data["power_dbm"], start_time=float(t[0]), channel=channel)


def write_traces(report: SimReport, out_dir: str | os.PathLike) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    names = []
    for rec in report.frames:
        name = f"{rec.node_id}_cycle{rec.cycle}.csv"
        write_trace_csv(rec.trace, os.path.join(out_dir, name))
        names.append(name)
    return names
