"""JSON scenario documents.

Top-level keys: ``rf``, ``nodes``, ``duration_s``, ``seed``, ``mode``,
``sample_rate_hz``, ``attackers``. Anything optional that is omitted takes
the bench default (see ``RfParams`` / ``NodeConfig``). When
``rf.effective_leakage_dbm`` is absent the leakage is calibrated so the
dynamic range equals ``rf.target_dr_db`` (0.15 dB unless given).
"""

from __future__ import annotations

import json
import os
from importlib import resources

from .codec import PvkFrame
from .engine import DEFAULT_SAMPLE_RATE, Fdm, FreeRunning, ScenarioConfig, Slotted
from .errors import ConfigError, ParseError, UnreachableTarget
from .rf_link import MEASURED_DYNAMIC_RANGE_DB, RfParams, calibrate_leakage
from .node import DEFAULT_MAX_CHIP_RATE, NodeConfig

BUNDLED = ("paper_default.json",)

_RF_KEYS = {
    "tx_power_dbm": "tx_power",
    "freq_hz": "freq",
    "distance_m": "distance",
    "gain_cn_dbi": "gain_cn",
    "gain_node_dbi": "gain_node",
    "circulator_isolation_db": "circulator_isolation",
    "effective_leakage_dbm": "effective_leakage",
    "gamma_high": "gamma_high",
    "gamma_low": "gamma_low",
    "rectifier_efficiency": "rectifier_efficiency",
    "noise_sigma_db": "noise_sigma_db",
}

_NODE_KEYS = {
    "storage_capacitance_f": "storage_capacitance",
    "v_start_v": "v_start",
    "v_stop_v": "v_stop",
    "task_energy_j": "task_energy",
    "distance_m": "position_distance",
    "channel": "channel",
    "phase_jitter": "phase_jitter",
    "task_delay_s": "task_delay",
    "toggle_energy_j": "toggle_energy",
    "max_chip_rate_hz": "max_chip_rate",
}

_TOP_KEYS = {"rf", "nodes", "duration_s", "seed", "mode", "sample_rate_hz", "attackers", "auth_window_s"}


def resolve_path(path: str | os.PathLike) -> str:
    """Filesystem path, or a bundled scenario by bare file name."""
    path = os.fspath(path)
    if not os.path.exists(path) and os.path.basename(path) == path and path in BUNDLED:
        return str(resources.files("wptsec").joinpath("scenarios", path))
    return path


def _number(value, where: str, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, "must be a number")
    if integer and not isinstance(value, int):
        raise ConfigError(where, "must be an integer")
    return value


def _check_keys(doc: dict, allowed, where: str) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(where or "<root>", "must be an object")
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}" if where else key, "unknown field")


def _parse_rf(doc: dict) -> RfParams:
    _check_keys(doc, set(_RF_KEYS) | {"target_dr_db"}, "rf")
    kwargs = {attr: _number(doc[key], f"rf.{key}") for key, attr in _RF_KEYS.items() if key in doc}
    target = _number(doc.get("target_dr_db", MEASURED_DYNAMIC_RANGE_DB), "rf.target_dr_db")
    try:
        # placeholder leakage, replaced by the calibrated value just below
        rf = RfParams(**{**kwargs, "effective_leakage": kwargs.get("effective_leakage", 0.0)})
        if "effective_leakage" not in kwargs:
            rf = RfParams(**{**kwargs, "effective_leakage": calibrate_leakage(rf, target)})
    except UnreachableTarget as exc:
        raise ConfigError("rf.target_dr_db", str(exc)) from exc
    except ValueError as exc:
        raise ConfigError("rf", str(exc)) from exc
    return rf


def _parse_hex(value, where: str) -> bytes:
    if not isinstance(value, str):
        raise ConfigError(where, "must be a hex string")
    try:
        return bytes.fromhex(value)
    except ValueError as exc:
        raise ConfigError(where, "invalid hex") from exc


def _parse_node(doc: dict, i: int) -> NodeConfig:
    where = f"nodes[{i}]"
    _check_keys(doc, set(_NODE_KEYS) | {"id", "key_hex", "preamble_hex", "chip_rate_hz"}, where)
    if "id" not in doc or not isinstance(doc["id"], str) or not doc["id"]:
        raise ConfigError(f"{where}.id", "required non-empty string")
    if "key_hex" not in doc:
        raise ConfigError(f"{where}.key_hex", "required")
    key = _parse_hex(doc["key_hex"], f"{where}.key_hex")
    if not key:
        raise ConfigError(f"{where}.key_hex", "at least one byte")
    preamble = _parse_hex(doc.get("preamble_hex", ""), f"{where}.preamble_hex")
    chip_rate = _number(doc.get("chip_rate_hz", 40e3), f"{where}.chip_rate_hz")
    if chip_rate <= 0:
        raise ConfigError(f"{where}.chip_rate_hz", "must be > 0")
    kwargs = {}
    for key_name, attr in _NODE_KEYS.items():
        if key_name in doc:
            kwargs[attr] = _number(doc[key_name], f"{where}.{key_name}", integer=(attr == "channel"))
    max_rate = kwargs.get("max_chip_rate", DEFAULT_MAX_CHIP_RATE)
    if chip_rate > max_rate:
        raise ConfigError(
            f"{where}.chip_rate_hz",
            f"{chip_rate:g} Hz exceeds max_chip_rate {max_rate:g} Hz (GPIO toggling distorts above 40 kHz)",
        )
    try:
        return NodeConfig(node_id=doc["id"], key=PvkFrame(key, chip_rate, preamble), **kwargs)
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from exc


def _parse_mode(doc) -> FreeRunning | Slotted | Fdm:
    if doc is None:
        return FreeRunning()
    if not isinstance(doc, dict) or "type" not in doc:
        raise ConfigError("mode", "object with a 'type' field")
    kind = doc["type"]
    if kind == "free_running":
        _check_keys(doc, {"type"}, "mode")
        return FreeRunning()
    if kind == "slotted":
        _check_keys(doc, {"type", "slot_period_s", "slot_assignments"}, "mode")
        period = _number(doc.get("slot_period_s"), "mode.slot_period_s")
        slots = doc.get("slot_assignments")
        if not isinstance(slots, dict):
            raise ConfigError("mode.slot_assignments", "object mapping node id to slot index")
        return Slotted(period, {k: _number(v, f"mode.slot_assignments.{k}", integer=True) for k, v in slots.items()})
    if kind == "fdm":
        _check_keys(doc, {"type", "channels"}, "mode")
        return Fdm(_number(doc.get("channels"), "mode.channels", integer=True))
    raise ConfigError("mode.type", f"unknown mode {kind!r} (free_running, slotted, fdm)")


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    _check_keys(doc, _TOP_KEYS, "")
    rf = _parse_rf(doc.get("rf", {}))
    nodes_doc = doc.get("nodes")
    if not isinstance(nodes_doc, list) or not nodes_doc:
        raise ConfigError("nodes", "at least one node")
    nodes = tuple(_parse_node(n, i) for i, n in enumerate(nodes_doc))
    if "duration_s" not in doc:
        raise ConfigError("duration_s", "required")
    duration = _number(doc["duration_s"], "duration_s")
    seed = _number(doc.get("seed", 0), "seed", integer=True)
    if not 0 <= seed < 2**64:
        raise ConfigError("seed", "must be a 64-bit unsigned integer")
    attackers = doc.get("attackers", [])
    if not isinstance(attackers, list) or not all(isinstance(a, str) for a in attackers):
        raise ConfigError("attackers", "list of node ids")
    return ScenarioConfig(
        rf=rf,
        nodes=nodes,
        duration=duration,
        seed=seed,
        mode=_parse_mode(doc.get("mode")),
        sample_rate=_number(doc.get("sample_rate_hz", DEFAULT_SAMPLE_RATE), "sample_rate_hz"),
        attacker_nodes=tuple(attackers),
        auth_window=_number(doc.get("auth_window_s", 1.0), "auth_window_s"),
    )


def parse_scenario(path: str | os.PathLike) -> ScenarioConfig:
    """Load and validate a scenario file (bundled names such as ``paper_default.json`` work too)."""
    with open(resolve_path(path), encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from exc
    return scenario_from_dict(doc)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    rf = cfg.rf
    doc = {
        "rf": {key: getattr(rf, attr) for key, attr in _RF_KEYS.items()},
        "nodes": [],
        "duration_s": cfg.duration,
        "seed": cfg.seed,
        "sample_rate_hz": cfg.sample_rate,
        "attackers": list(cfg.attacker_nodes),
        "auth_window_s": cfg.auth_window,
    }
    for n in cfg.nodes:
        entry = {"id": n.node_id, "key_hex": n.key.key.hex(), "chip_rate_hz": n.key.chip_rate}
        if n.key.preamble:
            entry["preamble_hex"] = n.key.preamble.hex()
        for key, attr in _NODE_KEYS.items():
            value = getattr(n, attr)
            if value is not None:
                entry[key] = value
        doc["nodes"].append(entry)
    if isinstance(cfg.mode, Slotted):
        doc["mode"] = {"type": "slotted", "slot_period_s": cfg.mode.slot_period, "slot_assignments": dict(cfg.mode.slot_assignments)}
    elif isinstance(cfg.mode, Fdm):
        doc["mode"] = {"type": "fdm", "channels": cfg.mode.channels}
    else:
        doc["mode"] = {"type": "free_running"}
    return doc


__all__ = ["parse_scenario", "scenario_from_dict", "scenario_to_dict", "resolve_path"]
