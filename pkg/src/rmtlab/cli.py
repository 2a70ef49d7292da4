"""Command-line front end: one subcommand per probe, JSON config files with
CLI overrides, CSV/JSON reports, plot-data emission, and figure rendering.

Exit codes: 0 success, 2 configuration/usage error, 3 numeric failure.
``RMTLAB_WORKERS`` sets the default worker count; an explicit ``--workers``
flag (or a ``workers`` key in the config) wins over it.  Figures are rendered
next to the report unless ``--no-plot`` is given; a figure-rendering failure
is reported as a warning and does not change the exit code.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Sequence

from .plans import (
    PROBE_NAMES,
    NumericError,
    OutputError,
    SchemaError,
    UnknownProbeError,
    build_plan,
    execute_plan,
    load_config,
    write_report,
)
from .report import emit_plot_data, render_figure, _plot_xy
from .stats import fit_log_slope

_PROBE_HELP = {
    "smallball": "one-point small-ball probability over a delta grid",
    "joint": "two-point joint small-ball probability and decoupling ratio",
    "gaps": "minimal singular-value gap law over an epsilon grid",
    "linstat": "distant-pair linear eigenvalue statistic law",
    "rigidity": "normalized inverse-gap profile mu_k * k / sqrt(n)",
    "locallaw": "windowed eigenvalue-count deviation frequencies",
    "hw": "quadratic-form deviation tail with predicted regimes",
    "ilo": "conditioned rank-event frequency on the sparse rectangular matrix",
    "deloc": "all-eigenvectors delocalization frequency",
    "lcd": "eigenvector essential-LCD threshold frequency",
    "tau": "threshold function of the zeroed-out matrix image pair",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmtlab",
        description="Monte Carlo laboratory for spectral statistics of random symmetric matrices",
    )
    sub = parser.add_subparsers(dest="probe", required=True, metavar="PROBE")
    for name in PROBE_NAMES:
        p = sub.add_parser(name, help=_PROBE_HELP[name])
        p.add_argument("--config", required=True, type=Path, help="JSON config file")
        p.add_argument("--n", type=int, help="override matrix dimension")
        p.add_argument("--replicas", type=int, help="override replica/trial count")
        p.add_argument("--seed", type=int, help="override master seed")
        p.add_argument("--out", type=str, help="override output path")
        p.add_argument("--format", choices=("csv", "json"), help="override output format")
        p.add_argument("--workers", type=int, help="override worker count")
        p.add_argument(
            "--no-plot",
            action="store_true",
            help="skip figure rendering (report and plot data are still written)",
        )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        raw = load_config(args.config)
        overrides = {
            "n": args.n,
            "replicas": args.replicas,
            "seed": args.seed,
            "out": args.out,
            "format": args.format,
            "workers": args.workers,
        }
        if args.workers is None and "workers" not in raw:
            env = os.environ.get("RMTLAB_WORKERS")
            if env is not None:
                try:
                    overrides["workers"] = int(env)
                except ValueError as exc:
                    raise SchemaError(
                        f"RMTLAB_WORKERS must be an integer, got {env!r}"
                    ) from exc
        plan = build_plan(args.probe, raw, overrides)
        output = execute_plan(plan)
        report_path = write_report(output)
        print(f"wrote {report_path}")
        plot_path = report_path.parent / (report_path.stem + ".plot.csv")
        emit_plot_data(output.plot_records, output.plot_kind, plot_path, output.x_key)
        print(f"wrote {plot_path}")
        _summarize(output)
        if not args.no_plot:
            _render(output, report_path)
    except (UnknownProbeError, SchemaError, OutputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    return 0


def _summarize(output) -> None:
    if output.plot_kind == "scaling" and len(output.plot_records) >= 2:
        quads = [_plot_xy(r, output.x_key) for r in output.plot_records]
        try:
            fit = fit_log_slope([q[0] for q in quads], [q[1] for q in quads])
        except ValueError:
            return
        print(
            f"log-log slope {fit.slope:.4f} (stderr {fit.stderr:.4f}, "
            f"r^2 {fit.r_squared:.4f}, {fit.points_used} points)"
        )
    for row in output.rows:
        if row.probe == "tau_estimate":
            print(f"tau estimate {row.extra['tau']!r} over {row.trials} trials")


def _render(output, report_path: Path) -> None:
    fig_path = report_path.parent / (report_path.stem + ".png")
    try:
        quads = [_plot_xy(r, output.x_key) for r in output.plot_records]
        fit = None
        if output.plot_kind == "scaling" and len(quads) >= 2:
            try:
                fit = fit_log_slope([q[0] for q in quads], [q[1] for q in quads])
            except ValueError:
                fit = None
        render_figure(
            fig_path,
            output.plot_kind,
            quads,
            fit=fit,
            overlays=output.overlays,
            title=f"{output.plan.probe} (n={output.plan.params['n']})",
            xlabel=output.x_label,
            ylabel="frequency" if output.plot_kind != "profile" else "mu_k k / sqrt(n)",
            logx=output.log_axes[0],
            logy=output.log_axes[1],
        )
        print(f"wrote {fig_path}")
    except Exception as exc:  # rendering is best-effort by design
        print(f"warning: figure rendering failed: {exc}", file=sys.stderr)


if __name__ == "__main__":
    raise SystemExit(main())
