"""Experiment plans: config ingestion with strict per-probe schemas, probe
dispatch, conversion to fixed-column rows, and report writing.

A plan's config is one JSON object.  Unknown keys are rejected by name;
missing required keys are reported by name; values are validated before any
sampling starts.  ``run_plan`` executes the probe and writes the report; the
data section of that report is a pure function of the plan minus its
``workers`` field.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from .arithmetic import TauResult, threshold_tau
from .ensemble import DistributionSpec, ZeroedSpec
from .probes import (
    HwTail,
    ProbeConfig,
    RigidityProfile,
    delocalization_frequency,
    gap_law,
    hanson_wright_tail,
    ilo_event_frequency,
    lcd_frequency,
    linear_statistic,
    local_law_deviation,
    rigidity_profile,
    smallball_curve,
    smallball_joint_curve,
)
from .report import ResultRow, write_rows
from .rng import RngHandle
from .stats import EstimateRecord

PROBE_NAMES = (
    "smallball",
    "joint",
    "gaps",
    "linstat",
    "rigidity",
    "locallaw",
    "hw",
    "ilo",
    "deloc",
    "lcd",
    "tau",
)


class HarnessError(Exception):
    """Base for harness-level failures with a CLI exit-code mapping."""


class UnknownProbeError(HarnessError):
    pass


class SchemaError(HarnessError):
    pass


class OutputError(HarnessError):
    pass


class NumericError(HarnessError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    probe: str
    params: Mapping[str, Any]
    output: Path
    format: str
    workers: int

    def echo(self) -> dict[str, Any]:
        """The plan content that determines the data section (no workers)."""
        return {"probe": self.probe, "params": dict(self.params), "out": str(self.output), "format": self.format}


def _expect(cond: bool, message: str) -> None:
    if not cond:
        raise SchemaError(message)


def _as_number(raw: Any, key: str) -> float:
    _expect(isinstance(raw, (int, float)) and not isinstance(raw, bool), f"field '{key}' must be a number")
    value = float(raw)
    _expect(math.isfinite(value), f"field '{key}' must be finite")
    return value


def _as_int(raw: Any, key: str) -> int:
    _expect(isinstance(raw, int) and not isinstance(raw, bool), f"field '{key}' must be an integer")
    return int(raw)


def _as_number_list(raw: Any, key: str) -> list[float]:
    _expect(isinstance(raw, list) and len(raw) > 0, f"field '{key}' must be a nonempty list")
    return [_as_number(v, key) for v in raw]


def _parse_ensemble(raw: Any) -> DistributionSpec:
    if raw is None:
        return DistributionSpec.rademacher()
    _expect(isinstance(raw, dict), "field 'ensemble' must be an object")
    allowed = {"kind", "values", "probs", "subgaussian_b"}
    for key in raw:
        _expect(key in allowed, f"unknown ensemble key '{key}'")
    kind = raw.get("kind")
    _expect(kind in ("rademacher", "gaussian", "discrete"), "ensemble 'kind' must be rademacher, gaussian, or discrete")
    try:
        b = float(raw.get("subgaussian_b", 1.0))
        if kind == "discrete":
            return DistributionSpec(
                "discrete",
                tuple(_as_number_list(raw.get("values"), "ensemble.values")),
                tuple(_as_number_list(raw.get("probs"), "ensemble.probs")),
                subgaussian_b=b,
            )
        _expect("values" not in raw and "probs" not in raw, f"{kind} ensemble takes no values/probs")
        return DistributionSpec(kind, subgaussian_b=b)
    except ValueError as exc:
        raise SchemaError(f"invalid ensemble: {exc}") from exc


# Per-probe field schemas: name -> (parser, required).  Parsers see the raw
# value and return the cleaned one; cross-field checks run afterwards.
_Field = tuple[Callable[[Any, str], Any], bool]


def _num(required: bool) -> _Field:
    return (_as_number, required)


def _posnum(required: bool) -> _Field:
    def parse(raw: Any, key: str) -> float:
        v = _as_number(raw, key)
        _expect(v > 0, f"field '{key}' must be positive")
        return v

    return (parse, required)


def _nonneg(required: bool) -> _Field:
    def parse(raw: Any, key: str) -> float:
        v = _as_number(raw, key)
        _expect(v >= 0, f"field '{key}' must be nonnegative")
        return v

    return (parse, required)


def _unit_open(required: bool) -> _Field:
    def parse(raw: Any, key: str) -> float:
        v = _as_number(raw, key)
        _expect(0.0 < v < 1.0, f"field '{key}' must lie strictly in (0, 1)")
        return v

    return (parse, required)


def _unit_closed(required: bool) -> _Field:
    def parse(raw: Any, key: str) -> float:
        v = _as_number(raw, key)
        _expect(0.0 <= v <= 1.0, f"field '{key}' must lie in [0, 1]")
        return v

    return (parse, required)


def _posint(required: bool) -> _Field:
    def parse(raw: Any, key: str) -> int:
        v = _as_int(raw, key)
        _expect(v >= 1, f"field '{key}' must be a positive integer")
        return v

    return (parse, required)


def _poslist(required: bool) -> _Field:
    def parse(raw: Any, key: str) -> list[float]:
        vals = _as_number_list(raw, key)
        _expect(all(v > 0 for v in vals), f"field '{key}' entries must be positive")
        return vals

    return (parse, required)


def _nonneglist(required: bool) -> _Field:
    def parse(raw: Any, key: str) -> list[float]:
        vals = _as_number_list(raw, key)
        _expect(all(v >= 0 for v in vals), f"field '{key}' entries must be nonnegative")
        return vals

    return (parse, required)


def _numlist(required: bool) -> _Field:
    return (_as_number_list, required)


def _pair(required: bool) -> _Field:
    def parse(raw: Any, key: str) -> list[float]:
        vals = _as_number_list(raw, key)
        _expect(len(vals) == 2 and vals[0] <= vals[1], f"field '{key}' must be [lo, hi] with lo <= hi")
        return vals

    return (parse, required)


def _enum(options: tuple[str, ...], required: bool) -> _Field:
    def parse(raw: Any, key: str) -> str:
        _expect(isinstance(raw, str) and raw in options, f"field '{key}' must be one of {options}")
        return raw

    return (parse, required)


def _veclists(required: bool) -> _Field:
    def parse(raw: Any, key: str) -> list[list[float]]:
        _expect(isinstance(raw, list), f"field '{key}' must be a list of vectors")
        return [_as_number_list(v, key) for v in raw]

    return (parse, required)


_SCHEMAS: dict[str, dict[str, _Field]] = {
    "smallball": {"lambda1": _num(True), "deltas": _poslist(True)},
    "joint": {
        "lambda1": _num(True),
        "lambda2": _num(True),
        "deltas": _poslist(False),
        "delta1": _posnum(False),
        "delta2": _posnum(False),
    },
    "gaps": {"interval": _pair(True), "eps": _nonneglist(True)},
    "linstat": {
        "a2": _num(True),
        "target": _num(True),
        "separation": _nonneg(True),
        "eps": _nonneglist(True),
    },
    "rigidity": {"lambda1": _num(True), "k_lo": _posint(True), "k_hi": _posint(True)},
    "locallaw": {"energy": _num(True), "eta": _posnum(True), "deltas": _poslist(True)},
    "hw": {
        "source": _enum(("identity", "resolvent"), False),
        "t_grid": _nonneglist(True),
        "lambda1": _num(False),
    },
    "ilo": {
        "d": _posint(True),
        "k": _posint(True),
        "c0": _posnum(True),
        "nu": _unit_open(True),
        "xs": _veclists(False),
    },
    "deloc": {"tau": _nonneg(True), "frac_threshold": _unit_closed(True)},
    "lcd": {
        "alpha": _unit_open(True),
        "gamma": _unit_open(True),
        "phi_max": _posnum(True),
        "resolution": _posnum(True),
        "threshold": _posnum(True),
        "k_lo": _posint(True),
        "k_hi": _posint(True),
    },
    "tau": {
        "v": _numlist(True),
        "w": _numlist(True),
        "big_l": _posnum(True),
        "eps1": _nonneg(True),
        "nu": _unit_open(True),
        "d": _posint(True),
        "l0": _posnum(False),
    },
}

_COMMON_KEYS = ("probe", "ensemble", "n", "replicas", "seed", "tolerances", "out", "format", "workers")


def _cross_validate(probe: str, p: dict[str, Any]) -> None:
    n = p["n"]
    if probe == "joint":
        has_grid = "deltas" in p
        has_pair = "delta1" in p or "delta2" in p
        _expect(has_grid != has_pair, "joint needs either 'deltas' or both 'delta1' and 'delta2'")
        if has_pair:
            _expect("delta1" in p and "delta2" in p, "joint needs both 'delta1' and 'delta2'")
    if probe in ("rigidity", "lcd"):
        _expect(
            1 <= p["k_lo"] <= p["k_hi"] <= n,
            "rank window [k_lo, k_hi] must satisfy 1 <= k_lo <= k_hi <= n",
        )
    if probe == "lcd":
        _expect(
            p["resolution"] <= p["phi_max"] / 100.0,
            "field 'resolution' must be at most phi_max/100",
        )
        _expect(p["threshold"] <= p["phi_max"], "field 'threshold' must not exceed phi_max")
    if probe == "ilo":
        _expect(3 * p["d"] <= n, "ilo needs 3*d <= n")
        _expect(p["d"] <= p["c0"] ** 2 * n, "ilo needs d <= c0^2 * n")
        _expect(p["k"] <= 2 * p["d"], "ilo needs k <= 2*d")
        for vec in p.get("xs", []):
            _expect(len(vec) == p["d"], "each ilo conditioning vector must have length d")
    if probe == "tau":
        _expect(len(p["v"]) == n and len(p["w"]) == n, "tau vectors v, w must have length n")
        _expect(3 * p["d"] <= n, "tau needs 3*d <= n")
        if p["eps1"] == 0.0:
            _expect("l0" in p, "the eps1=0 variant requires field 'l0'")
    if probe == "hw":
        _expect(len(p["t_grid"]) >= 1, "field 't_grid' must be nonempty")


def load_config(path: Path) -> dict[str, Any]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read config file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config file {path} is not valid JSON: {exc}") from exc
    _expect(isinstance(raw, dict), "config root must be a JSON object")
    return raw


def build_plan(
    probe: str,
    raw: Mapping[str, Any],
    overrides: Mapping[str, Any] | None = None,
) -> ExperimentPlan:
    """Validate a raw config dict (plus CLI overrides) into a plan.

    Unknown keys and missing required keys are rejected by name; the probe
    named in the config, when present, must agree with the requested one.
    """
    if probe not in PROBE_NAMES:
        raise UnknownProbeError(f"unknown probe '{probe}'")
    raw = dict(raw)
    overrides = dict(overrides or {})
    if "probe" in raw:
        _expect(
            raw["probe"] == probe,
            f"config names probe '{raw['probe']}' but '{probe}' was requested",
        )
    schema = _SCHEMAS[probe]
    for key in raw:
        _expect(key in schema or key in _COMMON_KEYS, f"unknown config key '{key}'")
    merged: dict[str, Any] = {**raw, **{k: v for k, v in overrides.items() if v is not None}}

    params: dict[str, Any] = {}
    params["ensemble"] = _parse_ensemble(merged.get("ensemble"))
    for key, label in (("n", "n"), ("replicas", "replicas"), ("seed", "seed")):
        _expect(key in merged, f"missing required field '{label}'")
    n = _as_int(merged["n"], "n")
    _expect(n >= 1, "field 'n' must be a positive integer")
    replicas = _as_int(merged["replicas"], "replicas")
    _expect(replicas >= 1, "field 'replicas' must be a positive integer")
    seed = _as_int(merged["seed"], "seed")
    _expect(0 <= seed < 2**64, "field 'seed' must be a 64-bit unsigned integer")
    params.update(n=n, replicas=replicas, seed=seed)
    tolerances = merged.get("tolerances", {})
    _expect(isinstance(tolerances, dict), "field 'tolerances' must be an object")
    params["tolerances"] = {str(k): _as_number(v, f"tolerances.{k}") for k, v in tolerances.items()}

    for key, (parse, required) in schema.items():
        if key in merged:
            params[key] = parse(merged[key], key)
        elif required:
            raise SchemaError(f"missing required field '{key}'")
    _cross_validate(probe, params)

    fmt = merged.get("format", "csv")
    _expect(fmt in ("csv", "json"), "field 'format' must be 'csv' or 'json'")
    out = merged.get("out", f"rmtlab_{probe}.{fmt}")
    _expect(isinstance(out, str) and out, "field 'out' must be a nonempty path string")
    workers = merged.get("workers", 1)
    workers = _as_int(workers, "workers")
    _expect(workers >= 1, "field 'workers' must be a positive integer")
    return ExperimentPlan(probe, params, Path(out), fmt, workers)


@dataclass(frozen=True)
class ProbeOutput:
    """Everything a caller needs after a probe ran: the fixed-column rows,
    the typed records for plot emission, and the plot kind/x-axis hints."""

    plan: ExperimentPlan
    rows: tuple[ResultRow, ...]
    plot_records: tuple[Any, ...]
    plot_kind: str
    x_key: str | None
    x_label: str
    log_axes: tuple[bool, bool]
    overlays: tuple[tuple[str, tuple[float, ...], tuple[float, ...]], ...] = ()
    seed_lineage: str = ""


def _config_for(plan: ExperimentPlan, lambdas: tuple[float, ...] = ()) -> ProbeConfig:
    p = plan.params
    return ProbeConfig(
        ensemble=p["ensemble"],
        n=p["n"],
        replicas=p["replicas"],
        master_seed=p["seed"],
        lambdas=lambdas,
        tolerances=p["tolerances"],
    )


def _estimate_row(plan: ExperimentPlan, rec: EstimateRecord) -> ResultRow:
    params = dict(rec.params)
    cols = {
        "lambda1": params.pop("lambda1", None),
        "lambda2": params.pop("lambda2", None),
        "delta1": params.pop("delta1", None),
        "delta2": params.pop("delta2", None),
    }
    eps = params.pop("eps", None)
    if eps is None and rec.probe == "locallaw":
        eps = params.pop("delta", None)
    return ResultRow(
        probe=rec.probe,
        n=rec.n,
        seed=plan.params["seed"],
        eps=eps,
        successes=rec.successes,
        trials=rec.trials,
        phat=rec.p_hat,
        lo=rec.ci_lo,
        hi=rec.ci_hi,
        extra=params,
        **cols,
    )


def execute_plan(plan: ExperimentPlan) -> ProbeOutput:
    """Run the probe described by the plan and shape its typed results."""
    p = dict(plan.params)
    probe = plan.probe
    workers = plan.workers
    try:
        if probe == "smallball":
            cfg = _config_for(plan, (p["lambda1"],))
            records = smallball_curve(cfg, p["lambda1"], p["deltas"], workers)
            rows = tuple(_estimate_row(plan, r) for r in records)
            return ProbeOutput(
                plan, rows, tuple(records), "scaling", "delta1", "delta",
                (True, True), seed_lineage=records[0].seed_lineage,
            )
        if probe == "joint":
            cfg = _config_for(plan, (p["lambda1"], p["lambda2"]))
            pairs = (
                [(d, d) for d in p["deltas"]]
                if "deltas" in p
                else [(p["delta1"], p["delta2"])]
            )
            records = smallball_joint_curve(cfg, p["lambda1"], p["lambda2"], pairs, workers)
            rows = tuple(_estimate_row(plan, r) for r in records)
            return ProbeOutput(
                plan, rows, tuple(records), "scaling", "delta1", "delta",
                (True, True), seed_lineage=records[0].seed_lineage,
            )
        if probe == "gaps":
            cfg = _config_for(plan)
            records = gap_law(cfg, tuple(p["interval"]), p["eps"], workers)
            rows = tuple(_estimate_row(plan, r) for r in records)
            scaling = tuple(r for r in records if r.probe == "gaps")
            return ProbeOutput(
                plan, rows, scaling, "scaling", "eps", "eps",
                (True, True), seed_lineage=records[0].seed_lineage,
            )
        if probe == "linstat":
            cfg = _config_for(plan)
            records = linear_statistic(
                cfg, p["a2"], p["target"], p["eps"], p["separation"], workers
            )
            rows = tuple(_estimate_row(plan, r) for r in records)
            return ProbeOutput(
                plan, rows, tuple(records), "scaling", "eps", "eps",
                (True, True), seed_lineage=records[0].seed_lineage,
            )
        if probe == "rigidity":
            cfg = _config_for(plan, (p["lambda1"],))
            profile = rigidity_profile(
                cfg, p["lambda1"], range(p["k_lo"], p["k_hi"] + 1), workers
            )
            rows = tuple(
                ResultRow(
                    probe="rigidity",
                    n=profile.n,
                    seed=p["seed"],
                    lambda1=profile.lam,
                    trials=profile.replicas,
                    extra={"k": r.k, "mean": r.mean, "p5": r.p5, "p95": r.p95},
                )
                for r in profile.rows
            )
            return ProbeOutput(
                plan, rows, tuple(profile.rows), "profile", None, "rank k",
                (False, False), seed_lineage=profile.seed_lineage,
            )
        if probe == "locallaw":
            cfg = _config_for(plan)
            records = local_law_deviation(cfg, p["energy"], p["eta"], p["deltas"], workers)
            rows = tuple(_estimate_row(plan, r) for r in records)
            return ProbeOutput(
                plan, rows, tuple(records), "curve", "delta", "deviation delta",
                (False, False), seed_lineage=records[0].seed_lineage,
            )
        if probe == "hw":
            cfg = _config_for(plan, (p["lambda1"],) if "lambda1" in p else ())
            tail = hanson_wright_tail(cfg, p.get("source", "identity"), p["t_grid"], workers)
            rows = tuple(
                ResultRow(
                    probe="hw",
                    n=tail.n,
                    seed=p["seed"],
                    eps=r.t,
                    successes=r.successes,
                    trials=r.trials,
                    phat=r.frequency,
                    lo=r.ci_lo,
                    hi=r.ci_hi,
                    extra={
                        "gaussian_shape": r.gaussian_shape,
                        "exponential_shape": r.exponential_shape,
                        "hs": tail.hs,
                        "op": tail.op,
                        "source": tail.matrix_source,
                    },
                )
                for r in tail.rows
            )
            overlays = (
                ("gaussian regime", tuple(r.t for r in tail.rows), tuple(r.gaussian_shape for r in tail.rows)),
                ("exponential regime", tuple(r.t for r in tail.rows), tuple(r.exponential_shape for r in tail.rows)),
            )
            return ProbeOutput(
                plan, rows, tail.rows, "curve", None, "t", (False, True),
                overlays=overlays, seed_lineage=tail.seed_lineage,
            )
        if probe == "ilo":
            xs = [np.asarray(v, dtype=np.float64) for v in p.get("xs", [])]
            record = ilo_event_frequency(
                p["n"], p["d"], p["k"], p["c0"], p["nu"], p["ensemble"],
                xs, p["replicas"], RngHandle(p["seed"]),
            )
            rows = (_estimate_row(plan, record),)
            return ProbeOutput(
                plan, rows, (record,), "curve", "k", "rank k", (False, False),
                seed_lineage=record.seed_lineage,
            )
        if probe == "deloc":
            cfg = _config_for(plan)
            record = delocalization_frequency(cfg, p["tau"], p["frac_threshold"], workers)
            rows = (_estimate_row(plan, record),)
            return ProbeOutput(
                plan, rows, (record,), "curve", "tau", "tau", (False, False),
                seed_lineage=record.seed_lineage,
            )
        if probe == "lcd":
            cfg = _config_for(plan)
            record = lcd_frequency(
                cfg, p["alpha"], p["gamma"], p["phi_max"], p["resolution"],
                p["threshold"], p["k_lo"], p["k_hi"], workers,
            )
            rows = (_estimate_row(plan, record),)
            return ProbeOutput(
                plan, rows, (record,), "curve", "threshold", "LCD threshold",
                (False, False), seed_lineage=record.seed_lineage,
            )
        if probe == "tau":
            spec = ZeroedSpec(p["n"], p["d"], p["nu"], p["ensemble"])
            result = threshold_tau(
                np.asarray(p["v"], dtype=np.float64),
                np.asarray(p["w"], dtype=np.float64),
                p["big_l"], p["eps1"], spec, p["replicas"],
                RngHandle(p["seed"]), p.get("l0"),
            )
            rows = _tau_rows(plan, result)
            overlays = (
                (
                    "benchmark",
                    tuple(pt.t for pt in result.curve),
                    tuple(pt.benchmark for pt in result.curve),
                ),
            )
            return ProbeOutput(
                plan, rows, tuple(result.curve), "curve", None, "t", (True, True),
                overlays=overlays, seed_lineage=result.seed_lineage,
            )
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        raise NumericError(f"probe '{probe}' failed numerically: {exc}") from exc
    raise UnknownProbeError(f"unknown probe '{probe}'")


def _tau_rows(plan: ExperimentPlan, result: TauResult) -> tuple[ResultRow, ...]:
    p = plan.params
    rows = [
        ResultRow(
            probe="tau_curve",
            n=p["n"],
            seed=p["seed"],
            eps=pt.t,
            successes=pt.successes,
            trials=pt.trials,
            phat=pt.p_hat,
            lo=pt.ci_lo,
            hi=pt.ci_hi,
            extra={"benchmark": pt.benchmark},
        )
        for pt in result.curve
    ]
    rows.append(
        ResultRow(
            probe="tau_estimate",
            n=p["n"],
            seed=p["seed"],
            trials=result.trials,
            extra={
                "tau": result.tau,
                "big_l": p["big_l"],
                "eps1": p["eps1"],
                "nu": p["nu"],
                "d": p["d"],
            },
        )
    )
    return tuple(rows)


def run_plan(plan: ExperimentPlan) -> Path:
    """Execute the plan and write its report; returns the report path."""
    output = execute_plan(plan)
    return write_report(output)


def write_report(output: ProbeOutput) -> Path:
    plan = output.plan
    metadata = {
        "probe": plan.probe,
        "plan": _echo_params(plan),
        "seed-lineage": output.seed_lineage,
        "workers": plan.workers,
    }
    try:
        return write_rows(plan.output, output.rows, metadata, plan.format)
    except OSError as exc:
        raise OutputError(f"cannot write report to {plan.output}: {exc}") from exc


def _echo_params(plan: ExperimentPlan) -> dict[str, Any]:
    echo: dict[str, Any] = {}
    for key, value in plan.params.items():
        if isinstance(value, DistributionSpec):
            spec: dict[str, Any] = {"kind": value.kind, "subgaussian_b": value.subgaussian_b}
            if value.kind == "discrete":
                spec["values"] = list(value.values)
                spec["probs"] = list(value.probs)
            echo[key] = spec
        else:
            echo[key] = value
    return echo
