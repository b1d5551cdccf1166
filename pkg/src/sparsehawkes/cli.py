"""Command-line interface.

Subcommands:
  simulate  --config F --seed S --out events.csv [--horizon T]
  estimate  --config F --events events.csv --method {qmle|po|elastic-net} --out fit.json
  mc        --config F --out DIR [--parallel N] [--no-figures]
  graph     --fit fit.json --out graph.json [--no-figure]

Exit codes: 0 success, 1 usage, 2 config/validation, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsehawkes", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one path to an events CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--horizon", type=float, default=None,
                   help="override the largest configured horizon")

    p = sub.add_parser("estimate", help="fit one method on an events CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--method", required=True, choices=["qmle", "po", "elastic-net"])
    p.add_argument("--out", required=True)

    p = sub.add_parser("mc", help="run the Monte Carlo experiment and export the report")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("graph", help="emit the excitation graph of a fit")
    p.add_argument("--fit", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figure", action="store_true")
    return parser


def _cmd_simulate(args) -> int:
    from .config import load_config
    from .simulate import simulate, write_events

    config = load_config(args.config)
    T = args.horizon if args.horizon is not None else config.horizons[-1]
    log = simulate(
        config.params,
        config.mark_kernel,
        float(T),
        np.random.default_rng(args.seed),
        max_expected_events=config.max_expected_events,
    )
    write_events(log, args.out)
    print(f"wrote {log.n_events} events on (0, {T:g}] to {args.out}")
    return 0


def _cmd_estimate(args) -> int:
    from .config import load_config
    from .experiments import fit_method
    from .simulate import read_events

    config = load_config(args.config)
    method = args.method.replace("-", "_")
    log = read_events(args.events)
    fit = fit_method(log, config, method)
    doc = fit.to_dict()
    if config.params.mark_dim:
        doc["mark_mean"] = [float(v) for v in config.mark_kernel.mean()]
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    zeros = fit.zero_names()
    extra = f", selected zero: {', '.join(zeros)}" if zeros else ""
    print(f"fit {method} on {log.n_events} events{extra}; wrote {args.out}")
    return 0


def _cmd_mc(args) -> int:
    from .config import load_config
    from .experiments import export_report, run_mc

    config = load_config(args.config)
    report = run_mc(config, parallel=max(1, args.parallel))
    written = export_report(report, args.out, figures=not args.no_figures)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_graph(fit: dict) -> dict:
    """Excitation-graph adjacency from a fit document; zero edges omitted."""
    d = int(fit["model"]["dim"])
    mark_dim = int(fit["model"]["mark_dim"])
    est = fit["estimate"]
    nodes = [{"id": i + 1, "mu": float(est[f"mu_{i + 1}"])} for i in range(d)]
    mark_mean = fit.get("mark_mean")
    edges = []
    for i in range(d):
        for j in range(d):
            if mark_dim:
                ws = [float(est[f"m_{i + 1}_{j + 1}_{l + 1}"]) for l in range(mark_dim)]
                weight = (
                    float(np.dot(ws, mark_mean)) if mark_mean is not None else float(np.sum(ws))
                )
            else:
                weight = float(est[f"alpha_{i + 1}_{j + 1}"])
            if weight == 0.0:
                continue
            beta = est[f"beta_{i + 1}_{j + 1}"]
            edge = {"source": j + 1, "target": i + 1, "weight": weight}
            if beta != "*":
                edge["beta"] = float(beta)
                edge["ratio"] = weight / float(beta)
            else:
                edge["ratio"] = 0.0
            edges.append(edge)
    return {"nodes": nodes, "edges": edges}


def _cmd_graph(args) -> int:
    with open(args.fit, "r", encoding="utf-8") as fh:
        fit = json.load(fh)
    graph = build_graph(fit)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(graph, fh, indent=2)
        fh.write("\n")
    print(f"wrote {len(graph['nodes'])} nodes, {len(graph['edges'])} edges to {args.out}")
    if not args.no_figure:
        from . import plots

        png = Path(args.out).with_suffix(".png")
        plots.render_graph(graph, png)
        print(f"wrote {png}")
    return 0


def main(argv=None) -> int:
    from .config import ConfigError
    from .model import ModelError, StabilityError
    from .optimize import OptimizeError
    from .simulate import SimulationBudgetError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "estimate":
            return _cmd_estimate(args)
        if args.command == "mc":
            return _cmd_mc(args)
        if args.command == "graph":
            return _cmd_graph(args)
        raise _UsageError(f"unknown command {args.command!r}")
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OptimizeError, StabilityError, SimulationBudgetError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ModelError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
