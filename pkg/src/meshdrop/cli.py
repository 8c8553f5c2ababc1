"""Command-line front end: scenario runs, path-loss fitting, connectivity maps.

Exit codes: 0 success, 2 validation/degenerate input, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import sim as sim_mod
from .propagation import (
    DegenerateFitError,
    PathLossModel,
    RadioSpec,
    build_connectivity_map,
    fit_path_loss,
    fit_residual_rms,
    grid_to_csv,
    grid_to_svg,
    read_snr_samples,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3


def scenario_to_dict(scenario: sim_mod.Scenario) -> dict:
    """Serialize a scenario to the JSON document format the CLI accepts."""

    def radio(params):
        return {
            "tx_power": params.tx_power,
            "noise_level": params.noise_level,
            "bandwidth": params.bandwidth,
        }

    def topic(config):
        return {
            "topic_id": config.topic_id,
            "class": config.data_class.value,
            "token_rate": config.token_rate,
            "bucket_depth": config.bucket_depth,
            "max_payload": config.max_payload,
            "compression_ratio": config.compression_ratio,
        }

    return {
        "irm": json.loads(scenario.irm_seed_graph.to_json()),
        "base_node": scenario.base_node,
        "base_radio": radio(scenario.base_radio),
        "drop_radio": radio(scenario.drop_radio),
        "robots": [
            {
                "id": r.id,
                "start": r.start,
                "speed": r.speed,
                "radio": radio(r.radio),
                "slots": r.slots,
            }
            for r in scenario.robots
        ],
        "traffic": {
            source: [
                {
                    "topic": topic(spec.topic),
                    "rate": spec.rate,
                    "message_bytes": spec.message_bytes,
                    "bursts": [list(b) for b in spec.bursts],
                    **({"to": spec.to} if spec.to else {}),
                }
                for spec in specs
            ]
            for source, specs in scenario.traffic.items()
        },
        "model": {
            "pl_d0": scenario.model.pl_d0,
            "eta": scenario.model.eta,
            "d0": scenario.model.d0,
        },
        "channel": {
            "efficiency": scenario.channel.efficiency,
            "loss_snr_lo": scenario.channel.loss_snr_lo,
            "loss_snr_hi": scenario.channel.loss_snr_hi,
        },
        "drop_scheduler": {
            "snr_floor": scenario.drop_scheduler.snr_floor,
            "slots_total": scenario.drop_scheduler.slots_total,
            "overlap_radius": scenario.drop_scheduler.overlap_radius,
            "jam_probability": scenario.drop_scheduler.jam_probability,
            "backtrack_limit": scenario.drop_scheduler.backtrack_limit,
        },
        "return_to_comms": {
            "upper_bytes": scenario.return_to_comms.upper_bytes,
            "lower_bytes": scenario.return_to_comms.lower_bytes,
            "wait_timeout": scenario.return_to_comms.wait_timeout,
        },
        "outages": [list(o) for o in scenario.outages],
        "duration": scenario.duration,
        "tick": scenario.tick,
        "seed": scenario.seed,
        "base_radio_id": scenario.base_radio_id,
        "refresh_interval": scenario.refresh_interval,
        "retransmit_timeout": scenario.retransmit_timeout,
        "snapshot_interval": scenario.snapshot_interval,
    }


def cmd_run(args) -> int:
    scenario_path = Path(args.scenario)
    try:
        text = scenario_path.read_text()
    except OSError as err:
        print(f"cannot read scenario: {err}", file=sys.stderr)
        return EXIT_IO
    try:
        scenario = sim_mod.Scenario.from_dict(json.loads(text))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
        print(f"invalid scenario: {err}", file=sys.stderr)
        return EXIT_INVALID
    if args.seed is not None:
        scenario.seed = args.seed
    problems = scenario.validate()
    if problems:
        for problem in problems:
            print(f"invalid scenario: {problem}", file=sys.stderr)
        return EXIT_INVALID

    result = sim_mod.run(scenario)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(
            json.dumps(result.metrics.to_dict(), sort_keys=True, indent=2) + "\n"
        )
        (out / "events.jsonl").write_text(sim_mod.events_to_jsonl(result.events))
        (out / "buffers.csv").write_text(sim_mod.buffer_series_to_csv(result.metrics))
        (out / "topology.jsonl").write_text(sim_mod.snapshots_to_jsonl(result.snapshots))
        if args.svg:
            (out / "connectivity.svg").write_text(_final_map_svg(scenario))
    except OSError as err:
        print(f"cannot write outputs: {err}", file=sys.stderr)
        return EXIT_IO
    print(f"metrics written to {out / 'metrics.json'}")
    return EXIT_OK


def _final_map_svg(scenario: sim_mod.Scenario) -> str:
    """Connectivity heatmap over the scenario's roadmap extent (base radio only)."""
    positions = [n.position for n in scenario.irm_seed_graph.nodes.values()]
    xs = [p[0] for p in positions]
    ys = [p[1] for p in positions]
    margin = 20.0
    res = max((max(xs) - min(xs) + 2 * margin) / 100.0, 1.0)
    base_pos = scenario.irm_seed_graph.nodes[scenario.base_node].position
    radio = scenario.base_radio.at(scenario.base_radio_id, base_pos)
    grid = build_connectivity_map(
        [radio],
        {scenario.base_radio_id: math.inf},
        origin=(min(xs) - margin, min(ys) - margin),
        resolution=res,
        width=int((max(xs) - min(xs) + 2 * margin) / res) + 1,
        height=int((max(ys) - min(ys) + 2 * margin) / res) + 1,
        rx_noise=scenario.base_radio.noise_level,
        model=scenario.model,
    )
    return grid_to_svg(grid)


def cmd_fit(args) -> int:
    try:
        samples = read_snr_samples(args.csv)
    except OSError as err:
        print(f"cannot read samples: {err}", file=sys.stderr)
        return EXIT_IO
    except ValueError as err:
        print(f"bad sample file: {err}", file=sys.stderr)
        return EXIT_INVALID
    try:
        model = fit_path_loss(samples, d0=args.d0)
    except (DegenerateFitError, ValueError) as err:
        print(f"cannot fit: {err}", file=sys.stderr)
        return EXIT_INVALID
    print(
        json.dumps(
            {
                "d0": model.d0,
                "pl_d0": model.pl_d0,
                "eta": model.eta,
                "residual_rms_db": fit_residual_rms(samples, model),
                "samples": len(samples),
            },
            sort_keys=True,
        )
    )
    return EXIT_OK


def cmd_map(args) -> int:
    try:
        entries = json.loads(Path(args.radios).read_text())
    except OSError as err:
        print(f"cannot read radios: {err}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as err:
        print(f"bad radios file: {err}", file=sys.stderr)
        return EXIT_INVALID
    if not entries:
        print("no radios given", file=sys.stderr)
        return EXIT_INVALID
    try:
        radios = [
            RadioSpec(
                id=entry["id"],
                position=tuple(entry["position"]),
                tx_power=entry["tx_power"],
                noise_level=entry.get("noise_level", args.tx_noise),
                bandwidth=entry.get("bandwidth", 1e6),
            )
            for entry in entries
        ]
        bottlenecks = {
            entry["id"]: entry.get("bottleneck_db", math.inf) for entry in entries
        }
    except (KeyError, TypeError) as err:
        print(f"bad radio entry: {err}", file=sys.stderr)
        return EXIT_INVALID

    xs = [r.position[0] for r in radios]
    ys = [r.position[1] for r in radios]
    half = args.extent / 2.0
    center = ((max(xs) + min(xs)) / 2.0, (max(ys) + min(ys)) / 2.0)
    cells = max(1, int(args.extent / args.res))
    model = PathLossModel(pl_d0=args.pl_d0, eta=args.eta, d0=args.d0)
    grid = build_connectivity_map(
        radios,
        bottlenecks,
        origin=(center[0] - half, center[1] - half),
        resolution=args.res,
        width=cells,
        height=cells,
        rx_noise=args.tx_noise,
        model=model,
    )
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "connectivity.csv").write_text(grid_to_csv(grid))
        (out / "connectivity.svg").write_text(grid_to_svg(grid))
    except OSError as err:
        print(f"cannot write outputs: {err}", file=sys.stderr)
        return EXIT_IO
    print(f"map written to {out / 'connectivity.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meshdrop",
        description="Mesh-comms simulator for multi-robot exploration: run "
        "scenarios, fit propagation models, render connectivity maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and write metrics/logs")
    run_p.add_argument("--scenario", required=True, help="scenario JSON path")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run_p.add_argument("--svg", action="store_true", help="also render a connectivity SVG")
    run_p.set_defaults(func=cmd_run)

    fit_p = sub.add_parser("fit", help="fit the log-distance model to sampled path loss")
    fit_p.add_argument("--csv", required=True, help="CSV with distance_m,path_loss_db")
    fit_p.add_argument("--d0", type=float, default=1.0, help="reference distance (m)")
    fit_p.set_defaults(func=cmd_fit)

    map_p = sub.add_parser("map", help="render a predicted-SNR connectivity map")
    map_p.add_argument("--radios", required=True, help="radios JSON path")
    map_p.add_argument("--res", type=float, required=True, help="cell edge (m)")
    map_p.add_argument("--extent", type=float, required=True, help="map side length (m)")
    map_p.add_argument("--tx-noise", type=float, default=-69.0,
                       help="receiver noise term (dB) used in the SNR budget")
    map_p.add_argument("--out", default=".", help="output directory")
    map_p.add_argument("--pl-d0", type=float, default=34.0, help="reference path loss (dB)")
    map_p.add_argument("--eta", type=float, default=3.83, help="path loss exponent")
    map_p.add_argument("--d0", type=float, default=1.0, help="reference distance (m)")
    map_p.set_defaults(func=cmd_map)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
