"""``wptsec`` command line.

Exit codes: 0 success, 1 domain/config/usage error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import codec, engine, monitor, rf_link
from .errors import ParseError, WptSecError
from .scenario import parse_scenario

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IO = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _style(text: str, code: str) -> str:
    if os.environ.get("NO_COLOR") or not sys.stdout.isatty():
        return text
    return f"\033[{code}m{text}\033[0m"


def _emit_json(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _rf_from_args(args) -> rf_link.RfParams:
    rf = rf_link.RfParams(
        tx_power=args.tx_power,
        freq=args.freq,
        distance=args.distance,
        gain_cn=args.gain_cn,
        gain_node=args.gain_node,
        circulator_isolation=args.isolation,
        effective_leakage=0.0,
        gamma_high=args.gamma_high,
        gamma_low=args.gamma_low,
        rectifier_efficiency=args.efficiency,
    )
    if args.leakage is not None:
        leak = args.leakage
    else:
        leak = rf_link.calibrate_leakage(rf, getattr(args, "target_dr", None) or rf_link.MEASURED_DYNAMIC_RANGE_DB)
    return replace(rf, effective_leakage=leak)


def _add_rf_flags(p: argparse.ArgumentParser) -> None:
    d = rf_link.RfParams()
    p.add_argument("--tx-power", type=float, default=d.tx_power, help="RF source output, dBm")
    p.add_argument("--freq", type=float, default=d.freq, help="carrier frequency, Hz")
    p.add_argument("--distance", type=float, default=d.distance, help="CN-to-node distance, m")
    p.add_argument("--gain-cn", type=float, default=d.gain_cn, help="CN antenna gain, dBi")
    p.add_argument("--gain-node", type=float, default=d.gain_node, help="node antenna gain, dBi")
    p.add_argument("--isolation", type=float, default=d.circulator_isolation, help="circulator isolation, dB")
    p.add_argument("--gamma-high", type=float, default=d.gamma_high)
    p.add_argument("--gamma-low", type=float, default=d.gamma_low)
    p.add_argument("--efficiency", type=float, default=d.rectifier_efficiency, help="rectifier efficiency")
    p.add_argument("--leakage", type=float, default=None, help="effective leakage, dBm (default: calibrated)")
    p.add_argument("--json", action="store_true", help="machine-readable output")


def cmd_linkbudget(args) -> int:
    rf = _rf_from_args(args)
    doc = {
        "fspl_db": rf_link.fspl_db(rf.freq, rf.distance),
        "harvest_power_dbm": rf_link.harvest_power_dbm(rf),
        "harvest_dc_power_w": rf_link.harvest_dc_power_w(rf),
        "backscatter_high_dbm": rf_link.backscatter_power_dbm(rf, rf_link.HIGH),
        "backscatter_low_dbm": rf_link.backscatter_power_dbm(rf, rf_link.LOW),
        "effective_leakage_dbm": rf.effective_leakage,
        "dynamic_range_db": rf_link.dynamic_range_db(rf),
    }
    if args.json:
        _emit_json(doc)
        return EXIT_OK
    print(_style("link budget", "1"))
    print(f"  free-space path loss   {doc['fspl_db']:8.2f} dB")
    print(f"  harvest power          {doc['harvest_power_dbm']:8.2f} dBm")
    print(f"  backscatter (high)     {doc['backscatter_high_dbm']:8.2f} dBm")
    print(f"  backscatter (low)      {doc['backscatter_low_dbm']:8.2f} dBm")
    print(f"  effective leakage      {doc['effective_leakage_dbm']:8.2f} dBm")
    print(f"  dynamic range          {doc['dynamic_range_db']:8.3f} dB")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    args.leakage = 0.0
    rf = _rf_from_args(args)
    leak = rf_link.calibrate_leakage(rf, args.target_dr)
    if args.json:
        _emit_json({"target_dr_db": args.target_dr, "effective_leakage_dbm": leak})
    else:
        print(f"effective leakage {leak:.2f} dBm for {args.target_dr:g} dB dynamic range")
    return EXIT_OK


def cmd_encode(args) -> int:
    try:
        key = bytes.fromhex(args.key)
    except ValueError as exc:
        raise UsageError(f"--key: invalid hex ({exc})") from exc
    chips = codec.encode_manchester(codec.bytes_to_bits(key))
    out = sys.stdout
    if args.chip_rate is None:
        out.writelines(f"{c}\n" for c in chips.tolist())
    else:
        if args.chip_rate <= 0:
            raise UsageError("--chip-rate must be > 0")
        out.write("time_s,chip\n")
        times = np.arange(chips.size) / args.chip_rate
        out.writelines(f"{t!r},{c}\n" for t, c in zip(times.tolist(), chips.tolist()))
    return EXIT_OK


def cmd_decode(args) -> int:
    trace = engine.read_trace_csv(args.trace)
    preamble = bytes.fromhex(args.preamble) if args.preamble else b""
    spec = codec.PvkFrame(bytes(args.key_len), args.chip_rate, preamble)
    result = monitor.decode_frame(trace, spec, detection_floor=args.detection_floor)
    _emit_json(result.to_json())
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = parse_scenario(args.scenario)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    report = engine.run_scenario(cfg, out_dir=args.out)
    text = report.dumps()
    if args.out is not None:
        with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_collide(args) -> int:
    tau = args.frame_ms * 1e-3
    analytic = engine.collision_prob_analytic(args.nodes, tau, args.period_s)
    est, se = engine.collision_prob_mc(args.nodes, tau, args.period_s, args.trials, args.seed)
    doc = {
        "nodes": args.nodes,
        "frame_s": tau,
        "period_s": args.period_s,
        "trials": args.trials,
        "seed": args.seed,
        "analytic": analytic,
        "monte_carlo": est,
        "stderr": se,
    }
    if args.json:
        _emit_json(doc)
    else:
        print(f"{'analytic':>12}  {'monte carlo':>12}  {'stderr':>10}")
        print(f"{analytic:12.6g}  {est:12.6g}  {se:10.3g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wptsec", description="Backscatter identification link simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("linkbudget", help="harvest/backscatter powers and dynamic range")
    _add_rf_flags(p)
    p.set_defaults(func=cmd_linkbudget)

    p = sub.add_parser("calibrate", help="effective leakage for a target dynamic range")
    _add_rf_flags(p)
    p.add_argument("--target-dr", type=float, default=rf_link.MEASURED_DYNAMIC_RANGE_DB, help="dB")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("encode", help="Manchester chips for a hex key")
    p.add_argument("--key", required=True, help="key as hex")
    p.add_argument("--chip-rate", type=float, default=None, help="Hz; emits a timestamped CSV")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a trace CSV (time_s,power_dbm)")
    p.add_argument("--trace", required=True)
    p.add_argument("--chip-rate", type=float, required=True)
    p.add_argument("--key-len", type=int, required=True, help="key length in bytes")
    p.add_argument("--preamble", default="", help="preamble as hex")
    p.add_argument("--detection-floor", type=float, default=monitor.DEFAULT_DETECTION_FLOOR_DB)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("simulate", help="run a scenario and emit a JSON report")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", default=None, help="directory for trace CSVs and report.json")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("collide", help="frame collision probability, analytic and Monte Carlo")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--frame-ms", type=float, required=True)
    p.add_argument("--period-s", type=float, required=True)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_collide)
    return parser


def run_cli(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_DOMAIN
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (WptSecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
