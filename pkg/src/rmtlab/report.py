"""Persistence and plotting: fixed-column CSV/JSON result files with a
commented metadata header, (x, y, lo, hi) plot-data emission with optional
slope-fit rows, and matplotlib figure rendering.

Byte determinism: float cells are written with ``repr`` and JSON fragments
with sorted keys, so rerunning an identical plan reproduces the data section
byte for byte.  The data section starts at the column header row; everything
above it is ``#``-prefixed metadata (which may legitimately differ in the
worker count).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .arithmetic import TauPoint
from .probes import RigidityRow, TailRow
from .stats import EstimateRecord, SlopeFit, fit_log_slope

VERSION = "0.1.0"

CSV_COLUMNS = (
    "probe",
    "n",
    "lambda1",
    "lambda2",
    "delta1",
    "delta2",
    "eps",
    "successes",
    "trials",
    "phat",
    "lo",
    "hi",
    "seed",
    "extra",
)


def _json_safe(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in sorted(value.items())}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def _compact_json(value: Any) -> str:
    return json.dumps(_json_safe(value), sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class ResultRow:
    """One output row in the fixed column layout; inapplicable cells stay
    None and serialize as empty CSV cells / JSON nulls."""

    probe: str
    n: int
    seed: int
    lambda1: float | None = None
    lambda2: float | None = None
    delta1: float | None = None
    delta2: float | None = None
    eps: float | None = None
    successes: int | None = None
    trials: int | None = None
    phat: float | None = None
    lo: float | None = None
    hi: float | None = None
    extra: Mapping[str, Any] = field(default_factory=dict)

    def cells(self) -> list[str]:
        def fmt(v: Any) -> str:
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)

        return [
            self.probe,
            str(self.n),
            fmt(self.lambda1),
            fmt(self.lambda2),
            fmt(self.delta1),
            fmt(self.delta2),
            fmt(self.eps),
            fmt(self.successes),
            fmt(self.trials),
            fmt(self.phat),
            fmt(self.lo),
            fmt(self.hi),
            str(self.seed),
            _compact_json(dict(self.extra)),
        ]

    def as_dict(self) -> dict[str, Any]:
        return {
            "probe": self.probe,
            "n": self.n,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "eps": self.eps,
            "successes": self.successes,
            "trials": self.trials,
            "phat": self.phat,
            "lo": self.lo,
            "hi": self.hi,
            "seed": self.seed,
            "extra": _json_safe(dict(self.extra)),
        }


def data_section(text: str) -> str:
    """The worker-independent part of a CSV report: everything from the
    column header row down."""
    lines = text.splitlines(keepends=True)
    return "".join(line for line in lines if not line.startswith("#"))


def write_rows(
    path: Path,
    rows: Sequence[ResultRow],
    metadata: Mapping[str, Any],
    fmt: str = "csv",
) -> Path:
    path = Path(path)
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(f"# rmtlab {VERSION}\n")
        for key in sorted(metadata):
            buf.write(f"# {key}: {_meta_value(metadata[key])}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row.cells())
        path.write_text(buf.getvalue())
    elif fmt == "json":
        doc = {
            "metadata": {"version": VERSION, **_json_safe(dict(metadata))},
            "rows": [r.as_dict() for r in rows],
        }
        path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    return path


def _meta_value(v: Any) -> str:
    if isinstance(v, str):
        return v
    return _compact_json(v)


def _plot_xy(record: Any, x_key: str | None) -> tuple[float, float, float, float]:
    if isinstance(record, EstimateRecord):
        if x_key is None:
            for key in ("delta1", "eps", "delta", "t", "tau", "threshold", "k"):
                if key in record.params:
                    x_key = key
                    break
            else:
                raise ValueError("record has no recognizable x-axis parameter")
        x = float(record.params[x_key])
        return x, record.p_hat, record.ci_lo, record.ci_hi
    if isinstance(record, RigidityRow):
        return float(record.k), record.mean, record.p5, record.p95
    if isinstance(record, TailRow):
        return record.t, record.frequency, record.ci_lo, record.ci_hi
    if isinstance(record, TauPoint):
        return record.t, record.p_hat, record.ci_lo, record.ci_hi
    raise ValueError(f"unsupported record type {type(record).__name__}")


def emit_plot_data(
    records: Sequence[Any],
    kind: str,
    path: Path,
    x_key: str | None = None,
) -> Path:
    """Write (x, y, lo, hi) rows for external plotting; ``scaling`` also
    appends a ``fit`` row (slope with a one-stderr band) when at least two
    points carry log-log information.

    Records must be homogeneous: one record class and, for estimate records,
    one probe name.
    """
    if kind not in ("scaling", "profile", "curve"):
        raise ValueError(f"unknown plot kind {kind!r}")
    records = list(records)
    if not records:
        raise ValueError("no records to emit")
    first_type = type(records[0])
    if any(type(r) is not first_type for r in records):
        raise ValueError("records are not homogeneous")
    if first_type is EstimateRecord:
        probes = {r.probe for r in records}
        if len(probes) > 1:
            raise ValueError(f"records mix probes {sorted(probes)}")
    quads = [_plot_xy(r, x_key) for r in records]
    fit: SlopeFit | None = None
    if kind == "scaling":
        try:
            fit = fit_log_slope([q[0] for q in quads], [q[1] for q in quads])
        except ValueError:
            fit = None
    path = Path(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("x", "y", "lo", "hi"))
    for x, y, lo, hi in quads:
        writer.writerow((repr(float(x)), repr(float(y)), repr(float(lo)), repr(float(hi))))
    if kind == "scaling":
        if fit is not None:
            buf.write(
                f"# fit slope={fit.slope!r} intercept={fit.intercept!r} "
                f"stderr={fit.stderr!r} r2={fit.r_squared!r} points={fit.points_used}\n"
            )
            writer.writerow(
                (
                    "fit",
                    repr(fit.slope),
                    repr(fit.slope - fit.stderr),
                    repr(fit.slope + fit.stderr),
                )
            )
        else:
            buf.write("# fit unavailable: fewer than two positive points\n")
    path.write_text(buf.getvalue())
    return path


def render_figure(
    path: Path,
    kind: str,
    quads: Sequence[tuple[float, float, float, float]],
    fit: SlopeFit | None = None,
    overlays: Sequence[tuple[str, Sequence[float], Sequence[float]]] = (),
    title: str = "",
    xlabel: str = "x",
    ylabel: str = "frequency",
    logx: bool = False,
    logy: bool = False,
) -> Path:
    """Render one figure for a probe run: points with their interval band,
    an optional fitted power law, and optional overlay curves."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = [q[0] for q in quads]
    ys = [q[1] for q in quads]
    lo_err = [max(0.0, y - lo) for (_, y, lo, _) in quads]
    hi_err = [max(0.0, hi - y) for (_, y, _, hi) in quads]
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    if kind == "profile":
        ax.fill_between(
            xs,
            [q[2] for q in quads],
            [q[3] for q in quads],
            alpha=0.25,
            label="p5-p95 band",
        )
        ax.plot(xs, ys, marker="o", markersize=3, linewidth=1.0, label="mean")
    else:
        ax.errorbar(
            xs,
            ys,
            yerr=(lo_err, hi_err),
            fmt="o",
            markersize=4,
            capsize=2,
            linewidth=1.0,
            label="estimate",
        )
    if fit is not None and len(xs) >= 2:
        import numpy as np

        positives = [x for x in xs if x > 0]
        if positives:
            grid = np.geomspace(min(positives), max(positives), 64)
            ax.plot(
                grid,
                np.exp(fit.intercept) * grid**fit.slope,
                "--",
                linewidth=1.0,
                label=f"slope {fit.slope:.2f}",
            )
    for label, ox, oy in overlays:
        ax.plot(ox, oy, linewidth=1.0, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return Path(path)
