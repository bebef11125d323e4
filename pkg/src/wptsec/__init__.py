"""Simulator for backscatter-based node identification over a WPT link.

Battery-free nodes harvest a continuous RF power wave, and on every charge
cycle toggle their rectifier's reflection state to send a Manchester-coded
key that the communicating node reads off the reflected carrier's power
before accepting the node's BLE data.
"""

from .codec import PvkFrame, decode_manchester, encode_manchester, frame_chips, frame_duration
from .engine import (
    Fdm,
    FreeRunning,
    ScenarioConfig,
    SimReport,
    Slotted,
    collision_prob_analytic,
    collision_prob_mc,
    fdm_channelize,
    run_scenario,
    superpose_trace,
)
from .monitor import DecodeResult, KeyRegistry, PowerTrace, authenticate, decode_frame
from .node import NodeConfig, NodeState, charge_time, cycle_energy_budget, emit_waveform, next_cycle
from .rf_link import (
    RfParams,
    backscatter_power_dbm,
    calibrate_leakage,
    dynamic_range_db,
    fspl_db,
    harvest_power_dbm,
)
from .scenario import parse_scenario

__version__ = "0.1.0"
