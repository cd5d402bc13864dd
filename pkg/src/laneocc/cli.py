"""Command-line entry point wiring the full pipeline.

Subcommands: mapgen, simulate, dataset, train, predict, eval, render,
modes. Every run writes a `<output>.manifest.json` next to its primary
output recording the command, resolved settings, seeds, paths, tool
version, and wall time. All randomness flows from explicit --seed flags
(absent means seed 0). Exit codes: 0 success, 1 usage error, 2
data/validation error.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import LaneoccError, ValidationError
from .evaluation import (
    DEFAULT_RING_RADII,
    DEFAULT_TAU,
    OccupancyGrid,
    count_modes,
    read_pgm,
    write_metrics_csv,
    write_pgm,
)
from .lane_graph import LaneGraph, discretize_path, roll_out_paths
from .lon import LonDataset, desk_preset, load_model, lon_forward, lon_train, paper_preset, save_model
from .lon.features import build_bundle
from .pipeline import EvalSettings, evaluate_scenarios, summarize
from .simgen import (
    BehaviorSpec,
    MapSpec,
    Scenario,
    emit_dataset,
    generate_map,
    intersection_scenario,
    lane_change_scenario,
    simulate_actor,
)

HORIZONS = (3.0, 6.0, 9.0)

TEMPLATE_ALIASES = {
    "straight": ("straight", {}),
    "curve": ("curve", {}),
    "branch": ("branch", {}),
    "lane_change": ("lane_change_corridor", {}),
    "lane_change_corridor": ("lane_change_corridor", {}),
    "three_way": ("n_way_intersection", {"arms": 3}),
    "four_way": ("n_way_intersection", {"arms": 4}),
    "n_way": ("n_way_intersection", {}),
    "n_way_intersection": ("n_way_intersection", {}),
}


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 on usage errors (argparse defaults to 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def write_manifest(primary_output, command: str, args: dict, inputs, outputs,
                   started: float) -> None:
    manifest = {
        "command": command,
        "settings": {k: v for k, v in sorted(args.items())},
        "seed": args.get("seed", 0),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "tool_version": __version__,
        "wall_time_s": round(time.time() - started, 3),
        "created": datetime.now(timezone.utc).isoformat(),
    }
    path = str(primary_output) + ".manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, default=str)
        fh.write("\n")


def _expand_scenarios(patterns):
    files = []
    for pattern in patterns:
        if os.path.isdir(pattern):
            files.extend(sorted(glob.glob(os.path.join(pattern, "*.json"))))
        else:
            hits = sorted(glob.glob(pattern))
            if not hits:
                raise ValidationError(f"no scenario files match {pattern!r}")
            files.extend(hits)
    files = [f for f in files if not f.endswith(".manifest.json")]
    if not files:
        raise ValidationError("no scenario files found")
    return files


def _load_scenarios(patterns):
    return [Scenario.load(f) for f in _expand_scenarios(patterns)]


def _preset(name: str, seed: int = 0, iterations: int | None = None,
            learning_rate: float | None = None):
    from dataclasses import replace

    base = desk_preset(seed=seed) if name == "desk" else paper_preset()
    over = {"seed": seed}
    if iterations is not None:
        over["iterations"] = iterations
    if learning_rate is not None:
        over["learning_rate"] = learning_rate
    return replace(base, **over)


# ---------------------------------------------------------------------------
# subcommands


def cmd_mapgen(args) -> int:
    started = time.time()
    template, extra = TEMPLATE_ALIASES[args.template]
    spec_kwargs = dict(
        template=template, lanes=args.lanes, lane_width=args.lane_width,
        length=args.length, segments=args.segments, radius=args.radius,
        arc=np.deg2rad(args.arc_deg), seed=args.seed, **extra)
    if args.arms is not None:
        spec_kwargs["arms"] = args.arms
    graph = generate_map(MapSpec(**spec_kwargs))
    graph.save(args.output)
    write_manifest(args.output, "mapgen", vars(args), [], [args.output], started)
    print(f"wrote {args.output} ({len(graph)} lanes)")
    return 0


def cmd_simulate(args) -> int:
    started = time.time()
    outputs = []
    if args.map is None:
        # batch generation of self-contained scenarios
        os.makedirs(args.out_dir, exist_ok=True)
        makers = {"intersection": intersection_scenario,
                  "lane_change": lane_change_scenario}
        for k in range(args.count):
            seed = args.seed + k
            if args.kind == "mix":
                maker = makers["intersection"] if k % 2 == 0 else makers["lane_change"]
            else:
                maker = makers[args.kind]
            scen = maker(seed=seed, duration=args.duration, tick=args.tick)
            path = os.path.join(args.out_dir, f"{scen.name}.json")
            scen.save(path)
            outputs.append(path)
        primary = os.path.join(args.out_dir, "scenarios")
        write_manifest(primary, "simulate", vars(args), [], outputs, started)
        print(f"wrote {len(outputs)} scenarios to {args.out_dir}")
        return 0
    graph = LaneGraph.load(args.map)
    behavior = BehaviorSpec(
        behavior=args.behavior, start_lane=args.start_lane,
        start_s=args.start_s, cruise_speed=args.cruise,
        lateral_noise_sigma=args.lateral_noise, turn_choice=args.turn_choice,
        lane_change_t_start=args.maneuver_t, nudge_t_start=args.maneuver_t,
        lane_change_direction=args.direction, actor_id=args.actor_id,
        seed=args.seed)
    track = simulate_actor(graph, behavior, duration=args.duration, tick=args.tick)
    scen = Scenario(graph=graph, tracks=[track],
                    name=os.path.splitext(os.path.basename(args.output))[0])
    scen.save(args.output)
    write_manifest(args.output, "simulate", vars(args), [args.map],
                   [args.output], started)
    print(f"wrote {args.output}")
    return 0


def cmd_dataset(args) -> int:
    started = time.time()
    files = _expand_scenarios(args.scenarios)
    scenarios = [Scenario.load(f) for f in files]
    cfg = _preset(args.preset, seed=args.seed)
    data = emit_dataset(scenarios, horizon=args.horizon, cfg=cfg,
                        frame_stride=args.frame_stride)
    data.save(args.output)
    write_manifest(args.output, "dataset", vars(args), files, [args.output], started)
    print(f"wrote {args.output} ({len(data)} records)")
    return 0


def cmd_train(args) -> int:
    started = time.time()
    data = LonDataset.load(args.data)
    cfg = _preset(args.preset, seed=args.seed, iterations=args.iterations,
                  learning_rate=args.lr)
    model, trace = lon_train(data, cfg, log_every=args.log_every)
    save_model(model, args.output)
    outputs = [args.output]
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write("step,loss\n")
            for step, loss in enumerate(trace):
                fh.write(f"{step},{loss:.10g}\n")
        outputs.append(args.trace)
    write_manifest(args.output, "train", vars(args), [args.data], outputs, started)
    print(f"wrote {args.output} (final loss {trace[-1]:.4f})")
    return 0


def cmd_predict(args) -> int:
    started = time.time()
    model = load_model(args.model)
    scenario = Scenario.load(args.scenario)
    track = scenario.track(args.actor)
    pos, _ = track.pose_at(args.t0)
    cfg = model.config
    paths = roll_out_paths(scenario.graph, pos, radius=args.query_radius,
                           max_length=cfg.path_length)
    result = {"actor": args.actor, "t0": args.t0, "paths": []}
    rendered = []
    for path in paths:
        bundle = build_bundle(scenario.graph, scenario.tracks, args.actor,
                              args.t0, path, cfg, sdv_id=scenario.sdv_id)
        probs = lon_forward(model, bundle)
        cells = discretize_path(path, cfg.cell_length, cfg.num_cells)
        result["paths"].append({
            "lane_sequence": list(path.lane_sequence),
            "probabilities": [round(float(p), 6) for p in probs],
            "valid": cells.valid_mask.astype(int).tolist(),
        })
        rendered.append((path, cells, probs))
    with open(args.output, "w") as fh:
        json.dump(result, fh, indent=1)
        fh.write("\n")
    outputs = [args.output]
    if args.figure:
        from .render import render_scenario

        render_scenario(scenario, args.figure, t0=args.t0,
                        paths=[p for p, _, _ in rendered])
        outputs.append(args.figure)
    write_manifest(args.output, "predict", vars(args),
                   [args.model, args.scenario], outputs, started)
    print(f"wrote {args.output} ({len(paths)} paths)")
    return 0


def cmd_eval(args) -> int:
    started = time.time()
    files = _expand_scenarios(args.scenarios)
    scenarios = [Scenario.load(f) for f in files]
    model = load_model(args.model) if args.model else None
    radii = tuple(args.radii) if args.radii else ()
    want_grids = bool(args.pgm_dir or args.figures_dir)
    settings = EvalSettings(
        method=args.method, horizon=args.horizon, grid_size=args.grid_size,
        grid_resolution=args.grid_res, mc_samples=args.mc_samples,
        frame_stride=args.frame_stride, seed=args.seed, tau=args.tau,
        ring_radii=radii, model=model, keep_grids=want_grids)
    rows = evaluate_scenarios(scenarios, settings, jobs=args.jobs)
    if not rows:
        raise ValidationError("no evaluable frames (moving, fully observed)")
    write_metrics_csv([fe.csv_row for fe in rows], args.output)
    outputs = [args.output]

    if args.modes_csv and radii:
        with open(args.modes_csv, "w") as fh:
            fh.write("actor_id,frame,method,radius,modes\n")
            for fe in rows:
                for radius in sorted(fe.mode_counts):
                    fh.write(f"{fe.actor_id},{fe.t0:.10g},{fe.method},"
                             f"{radius:.10g},{fe.mode_counts[radius]}\n")
        outputs.append(args.modes_csv)

    if args.pgm_dir:
        os.makedirs(args.pgm_dir, exist_ok=True)
        for fe in rows:
            stem = f"{fe.scenario}_{fe.actor_id}_t{fe.t0:g}_{fe.method}"
            write_pgm(fe.pred, os.path.join(args.pgm_dir, stem + ".pgm"))
            write_pgm(fe.truth, os.path.join(args.pgm_dir, stem + "_truth.pgm"))
        outputs.append(args.pgm_dir)

    if args.figures_dir:
        from .render import render_grid, render_metrics_summary

        os.makedirs(args.figures_dir, exist_ok=True)
        by_scenario = {s.name: s for s in scenarios}
        for fe in rows:
            track = by_scenario[fe.scenario].track(fe.actor_id)
            pose = track.pose_at(fe.t0)
            stem = f"{fe.scenario}_{fe.actor_id}_t{fe.t0:g}_{fe.method}"
            render_grid(fe.pred, os.path.join(args.figures_dir, stem + ".png"),
                        truth=fe.truth, actor_pose=(pose[0], float(pose[1])),
                        title=stem)
        try:
            render_metrics_summary(rows, os.path.join(args.figures_dir,
                                                      "summary.png"))
        except ValueError:
            pass
        outputs.append(args.figures_dir)

    write_manifest(args.output, "eval", {**vars(args), "model": args.model},
                   files, outputs, started)
    stats = summarize(rows)
    print(json.dumps(stats, indent=1))
    return 0


def cmd_render(args) -> int:
    started = time.time()
    inputs = []
    if args.grid:
        grid = read_pgm(args.grid)
        from .render import render_grid

        render_grid(grid, args.output, title=os.path.basename(args.grid))
        inputs.append(args.grid)
    else:
        scenario = Scenario.load(args.scenario)
        from .render import render_scenario

        paths = None
        if args.t0 is not None and args.actor:
            track = scenario.track(args.actor)
            pos, _ = track.pose_at(args.t0)
            paths = roll_out_paths(scenario.graph, pos, max_length=192.0)
        render_scenario(scenario, args.output, t0=args.t0, paths=paths)
        inputs.append(args.scenario)
    write_manifest(args.output, "render", vars(args), inputs, [args.output], started)
    print(f"wrote {args.output}")
    return 0


def cmd_modes(args) -> int:
    started = time.time()
    grid = read_pgm(args.grid)
    radii = args.radii if args.radii else list(DEFAULT_RING_RADII)
    rows = []
    for radius in radii:
        rows.append((radius, count_modes(grid, args.pos, args.heading,
                                         radius, tau=args.tau)))
    with open(args.output, "w") as fh:
        fh.write("radius,modes\n")
        for radius, count in rows:
            fh.write(f"{radius:.10g},{count}\n")
    outputs = [args.output]
    if args.figure:
        from .render import render_ring_traces

        render_ring_traces(grid, args.pos, args.heading, radii, args.tau,
                           args.figure)
        outputs.append(args.figure)
    write_manifest(args.output, "modes", vars(args), [args.grid], outputs, started)
    for radius, count in rows:
        print(f"r={radius:g} m: {count} mode(s)")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="laneocc",
                     description="Lane-graph spatial occupancy prediction pipeline")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mapgen", help="generate a procedural lane map")
    p.add_argument("--template", required=True, choices=sorted(TEMPLATE_ALIASES))
    p.add_argument("--lanes", type=int, default=1)
    p.add_argument("--segments", type=int, default=1)
    p.add_argument("--arms", type=int, default=None)
    p.add_argument("--length", type=float, default=300.0)
    p.add_argument("--radius", type=float, default=40.0)
    p.add_argument("--arc-deg", type=float, default=90.0)
    p.add_argument("--lane-width", type=float, default=3.6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_mapgen)

    p = sub.add_parser("simulate",
                       help="simulate actors (batch kinds or a custom map)")
    p.add_argument("--map", default=None, help="map file for custom simulation")
    p.add_argument("--kind", choices=["intersection", "lane_change", "mix"],
                   default="mix", help="batch mode scenario family")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out-dir", default="scenarios")
    p.add_argument("--behavior", choices=list(BehaviorSpec.BEHAVIORS),
                   default="follow")
    p.add_argument("--start-lane", default=None)
    p.add_argument("--start-s", type=float, default=0.0)
    p.add_argument("--cruise", type=float, default=10.0)
    p.add_argument("--turn-choice", choices=["left", "straight", "right"],
                   default="straight")
    p.add_argument("--direction", choices=["left", "right"], default="left")
    p.add_argument("--maneuver-t", type=float, default=4.0)
    p.add_argument("--lateral-noise", type=float, default=0.05)
    p.add_argument("--actor-id", default="actor")
    p.add_argument("--duration", type=float, default=14.0)
    p.add_argument("--tick", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default="scenario.json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dataset", help="emit a training dataset from scenarios")
    p.add_argument("--scenarios", nargs="+", required=True)
    p.add_argument("--horizon", type=float, default=9.0, choices=HORIZONS)
    p.add_argument("--preset", choices=["desk", "paper"], default="desk")
    p.add_argument("--frame-stride", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="train the occupancy network")
    p.add_argument("--data", required=True)
    p.add_argument("--preset", choices=["desk", "paper"], default="desk")
    p.add_argument("--iterations", type=int, default=3000)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--log-every", type=int, default=0)
    p.add_argument("--trace", default=None, help="write per-step loss CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="per-path cell probabilities for one frame")
    p.add_argument("--model", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--actor", required=True)
    p.add_argument("--t0", type=float, required=True)
    p.add_argument("--query-radius", type=float, default=2.0)
    p.add_argument("--figure", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="evaluate a predictor over scenarios")
    p.add_argument("--method", required=True, choices=["ukf", "mixture", "lon"])
    p.add_argument("--scenarios", nargs="+", required=True)
    p.add_argument("--horizon", type=float, default=9.0, choices=HORIZONS)
    p.add_argument("--model", default=None, help="model file (method lon)")
    p.add_argument("--grid-size", type=float, default=150.0)
    p.add_argument("--grid-res", type=float, default=1.0)
    p.add_argument("--mc-samples", type=int, default=1000)
    p.add_argument("--frame-stride", type=float, default=3.0)
    p.add_argument("--radii", type=float, nargs="*", default=None,
                   help="ring radii for mode counting")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--modes-csv", default=None)
    p.add_argument("--pgm-dir", default=None)
    p.add_argument("--figures-dir", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="render a scenario or grid figure")
    p.add_argument("--scenario", default=None)
    p.add_argument("--grid", default=None, help="PGM heatmap to render")
    p.add_argument("--t0", type=float, default=None)
    p.add_argument("--actor", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("modes", help="count spatial modes of a grid heatmap")
    p.add_argument("--grid", required=True)
    p.add_argument("--pos", type=float, nargs=2, required=True)
    p.add_argument("--heading", type=float, required=True)
    p.add_argument("--radii", type=float, nargs="*", default=None)
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--figure", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_modes)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "render" and not (args.scenario or args.grid):
        print("laneocc render: error: need --scenario or --grid", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"laneocc {args.command}: {exc}", file=sys.stderr)
        return 2
    except LaneoccError as exc:
        print(f"laneocc {args.command}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"laneocc {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
