"""Command-line interface.

    finsler-lab run <config> [--out DIR] [--format csv|json|both] [--seed N]
    finsler-lab entropy|content|cheeger|verify-iso|bm-check|eigen|verify-cb|
               cd-check|curvature-report <config> [same options]

<config> is a TOML file path or the name of a bundled scenario
(exp-line, euclid-2d, randers-2d, hyperbolic-2d). Exit status is 0 iff
every gated assertion passed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .curvature import curvature_report
from .errors import FinslerLabError
from .geometry import minkowski_content
from .harness import ScenarioRun
from .report import ReportRecord, all_gated_pass, emit_report

SUBCOMMAND_STEPS = {
    "run": None,  # all
    "entropy": ["entropy"],
    "cheeger": ["cheeger"],
    "verify-iso": ["isoperimetric"],
    "bm-check": ["brunn_minkowski"],
    "eigen": ["eigen"],
    "verify-cb": ["cheeger_buser"],
    "cd-check": ["cd"],
}


def _add_common(p):
    p.add_argument("config", help="TOML config path or bundled scenario name")
    p.add_argument("--out", default="reports", help="output directory (default: reports)")
    p.add_argument("--format", default="both", choices=["csv", "json", "both"], help="report format")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def build_parser():
    parser = argparse.ArgumentParser(prog="finsler-lab", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ["run", "entropy", "content", "cheeger", "verify-iso", "bm-check", "eigen", "verify-cb", "cd-check", "curvature-report"]:
        p = sub.add_parser(name)
        _add_common(p)
        if name == "content":
            p.add_argument("--mask", default=None, help="run-length-encoded mask file to measure")
    return parser


def _formats(arg):
    return ("csv", "json") if arg == "both" else (arg,)


def _print_records(records):
    for r in records:
        err = f" +- {r.error:.3g}" if r.error else ""
        print(f"[{r.status:4s}] {r.scenario}/{r.quantity} = {r.value:.6g}{err}")


def _content_records(run, mask_path):
    from .grid import BorelMask

    records = []
    if mask_path:
        with open(mask_path) as fh:
            masks = [("mask_file", BorelMask.from_rle(run.domain, fh.read()), None)]
    else:
        balls, ball_contents, others = run.cheeger_candidates()
        masks = [(f"ball_{k}", m, c) for k, (m, c) in enumerate(zip(balls, ball_contents))]
        masks += [(f"superlevel_{k}", m, None) for k, m in enumerate(others)]
    for label, mask, pre in masks:
        est = pre if pre is not None else minkowski_content(run.metric, run.measure, run.domain, mask, graph=run.graph)
        records.append(
            ReportRecord(
                scenario=run.config.name,
                quantity=f"content_{label}",
                value=est.value,
                error=est.error,
                claim="content:forward-boundary-measure",
                provenance="fit" if pre is not None else "quadrature",
                witness={"mass": mask.mass(run.measure), "cells": mask.count},
            )
        )
    return records


def _curvature_report_files(run, out_dir, basename):
    cfg = run.config.curvature
    n = run.domain.n
    per_axis = max(2, int(round(cfg["base_points"] ** (1.0 / n))))
    axes = []
    for ax in range(n):
        a, b = run.domain.bounds[ax]
        pad = cfg["margin"] * (b - a)
        axes.append(np.linspace(a + pad, b - pad, per_axis))
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    if n == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        thetas = np.linspace(0, 2 * np.pi, cfg["directions"], endpoint=False)
        dirs = np.stack([np.cos(thetas), np.sin(thetas)], axis=-1)
        if n == 3:
            dirs = np.concatenate([np.eye(3), -np.eye(3)])
    N_extra = n + 1
    rep = curvature_report(
        run.metric, run.measure, points, dirs, N_values=(N_extra, np.inf), bounds=list(run.domain.bounds)
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{basename}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = [f"x{i+1}" for i in range(n)] + [f"y{i+1}" for i in range(n)]
        header += ["tau", "S", "Sdot", "ric", "ric_inf", f"ric_N{N_extra:g}"]
        writer.writerow(header)
        for s in rep.samples:
            row = [f"{v:.12g}" for v in s.x] + [f"{v:.12g}" for v in s.y]
            row += [f"{v:.12g}" for v in (s.tau, s.s, s.s_dot, s.ric, s.ric_inf, s.ric_n[N_extra])]
            writer.writerow(row)
    summary = {
        "scenario": run.config.name,
        "samples": rep.length,
        "min_ric_inf": rep.min_ric_inf,
        "witness": {
            "x": [float(f"{v:.12g}") for v in rep.witness.x],
            "y": [float(f"{v:.12g}") for v in rep.witness.y],
        },
    }
    json_path = out_dir / f"{basename}-summary.json"
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"wrote {csv_path} and {json_path}")
    return rep


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        run = ScenarioRun(config)
        out_dir = Path(args.out)
        basename = f"{config.name}-{args.command}"
        if args.command == "curvature-report":
            _curvature_report_files(run, out_dir, basename)
            return 0
        if args.command == "content":
            records = _content_records(run, args.mask)
        else:
            records = run.run(steps=SUBCOMMAND_STEPS[args.command])
        _print_records(records)
        meta = {"config": config.name, "seed": config.seed, "command": args.command}
        emit_report(records, out_dir, basename, formats=_formats(args.format), scenario_meta=meta)
        if args.command == "verify-cb":
            summary_path = out_dir / f"{basename}-summary.json"
            summary_path.write_text(json.dumps(run.cheeger_buser_summary(), indent=2, sort_keys=True) + "\n")
            print(f"wrote {summary_path}")
        ok = all_gated_pass(records)
        print("ALL GATED CHECKS PASS" if ok else "GATED CHECK FAILURES PRESENT")
        return 0 if ok else 1
    except FinslerLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
