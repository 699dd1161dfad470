"""Command-line runner: single studies, method comparisons, plot-ready reports.

One JSON config file declares the whole experiment (space, objective, study
settings, optional compare section) so a run is reproducible from that file
alone. Environment: BIBO_OUT overrides the output directory, BIBO_LOG sets
the log level. Exit codes: 0 ok, 2 config/input error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from bibo.acquisition import AcqVariant, AcquisitionKind
from bibo.bilevel import (
    RESULT_SCHEMA,
    STATUS_OK,
    MethodResult,
    MethodSpec,
    StudyConfig,
    StudyFailure,
    StudyMode,
    TrialRecord,
    compare_configs,
    improvement_rate,
    make_objective,
    run_study,
    study_result_to_dict,
)
from bibo.objective import CANONICAL_SPACES, ObjectiveKind, ObjectiveSpec, ProtocolError
from bibo.space import Level, ParamKind, ParamSpec, SearchSpace

logger = logging.getLogger(__name__)

COMPARE_SCHEMA = "bilevel-bo/compare/1"
DEFAULT_OUT = "bibo-out"

_KINDS = {k.value: k for k in ParamKind}
_LEVELS = {v.value: v for v in Level}
_MODES = {m.value: m for m in StudyMode}
_VARIANTS = {v.value: v for v in AcqVariant}

# pairing names follow the inner-outer convention: "EI-UCB" = EI inner, UCB outer
_PAIRING_NAMES = ("EI-EI", "EI-UCB", "UCB-EI", "UCB-UCB")

_RATE_FOOTNOTE = (
    "Note: improvement rates are recomputed as 100*(avg - baseline_avg)/baseline_avg,\n"
    "rounded half-up to 2 decimals. Reference arithmetic: (76.82, 74.80) -> 2.70 and\n"
    "(75.98, 74.80) -> 1.58; a previously circulated figure of 1.18 for the latter pair\n"
    "does not match the formula, so recomputed values are printed rather than matched."
)


class ConfigError(ValueError):
    """Invalid config or input file; maps to exit code 2."""


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


# ---------------------------------------------------------------- config file


@dataclass(frozen=True)
class CompareSpec:
    objectives: tuple[tuple[str, ObjectiveSpec], ...]  # (label, spec)
    methods: tuple[MethodSpec, ...]
    baseline: str
    seeds: tuple[int, ...]


@dataclass(frozen=True)
class Experiment:
    space: SearchSpace
    objective: ObjectiveSpec
    study: StudyConfig
    out: str | None
    compare: CompareSpec | None
    raw: dict


def _parse_param(entry, i: int) -> ParamSpec:
    _require(isinstance(entry, dict), f"space[{i}] must be an object")
    unknown = set(entry) - {"name", "kind", "level", "bounds", "choices"}
    _require(not unknown, f"space[{i}]: unknown keys {sorted(unknown)}")
    name = entry.get("name")
    _require(isinstance(name, str) and bool(name), f"space[{i}] needs a non-empty name")
    kind = entry.get("kind")
    _require(kind in _KINDS, f"param {name!r}: kind must be one of {sorted(_KINDS)}")
    level = entry.get("level")
    _require(level in _LEVELS, f"param {name!r}: level must be one of {sorted(_LEVELS)}")
    bounds = entry.get("bounds")
    if bounds is not None:
        _require(
            isinstance(bounds, list) and len(bounds) == 2 and all(_is_number(b) for b in bounds),
            f"param {name!r}: bounds must be [low, high]",
        )
        bounds = (float(bounds[0]), float(bounds[1]))
    choices = entry.get("choices")
    if choices is not None:
        _require(
            isinstance(choices, list) and len(choices) > 0,
            f"param {name!r}: choices must be a non-empty list",
        )
        choices = tuple(choices)
    return ParamSpec(name=name, kind=_KINDS[kind], level=_LEVELS[level],
                     bounds=bounds, choices=choices)


def _parse_space(doc) -> SearchSpace:
    _require(isinstance(doc, list) and len(doc) > 0, "space must be a non-empty list")
    space = SearchSpace(params=tuple(_parse_param(e, i) for i, e in enumerate(doc)))
    problems = space.validate()
    if problems:
        raise ConfigError("; ".join(problems))
    return space


def _parse_objective(doc) -> ObjectiveSpec:
    _require(isinstance(doc, dict), "objective must be an object")
    kind = doc.get("kind")
    _require(kind in ("builtin", "external"), "objective.kind must be builtin or external")
    try:
        if kind == "builtin":
            unknown = set(doc) - {"kind", "name", "noise_std"}
            _require(not unknown, f"objective: unknown keys {sorted(unknown)}")
            name = doc.get("name")
            _require(isinstance(name, str) and bool(name), "builtin objective needs a name")
            noise = doc.get("noise_std", 0.0)
            _require(_is_number(noise), "objective.noise_std must be a number")
            return ObjectiveSpec(kind=ObjectiveKind.BUILTIN, builtin_name=name,
                                 noise_std=float(noise))
        unknown = set(doc) - {"kind", "command", "timeout"}
        _require(not unknown, f"objective: unknown keys {sorted(unknown)}")
        command = doc.get("command")
        _require(
            isinstance(command, list) and command and all(isinstance(c, str) for c in command),
            "external objective needs a command list of strings",
        )
        timeout = doc.get("timeout", 3600.0)
        _require(_is_number(timeout), "objective.timeout must be a number")
        return ObjectiveSpec(kind=ObjectiveKind.EXTERNAL, command=tuple(command),
                             timeout=float(timeout))
    except ValueError as err:
        raise ConfigError(str(err)) from None


def _parse_acq(doc, field: str) -> AcquisitionKind:
    _require(isinstance(doc, dict), f"{field} must be an object")
    unknown = set(doc) - {"variant", "kappa"}
    _require(not unknown, f"{field}: unknown keys {sorted(unknown)}")
    variant = doc.get("variant")
    _require(variant in _VARIANTS, f"{field}.variant must be one of {sorted(_VARIANTS)}")
    kappa = doc.get("kappa", 2.0)
    _require(_is_number(kappa) and kappa > 0, f"{field}.kappa must be a positive number")
    try:
        return AcquisitionKind(variant=_VARIANTS[variant], kappa=float(kappa))
    except ValueError as err:
        raise ConfigError(str(err)) from None


def _parse_study(doc) -> StudyConfig:
    _require(isinstance(doc, dict), "study must be an object")
    known = {
        "mode", "outer_budget", "inner_budget", "init_outer", "init_inner",
        "acq_inner", "acq_outer", "candidates", "seed",
    }
    unknown = set(doc) - known
    _require(not unknown, f"study: unknown keys {sorted(unknown)}")
    kwargs: dict = {}
    if "mode" in doc:
        _require(doc["mode"] in _MODES, f"study.mode must be one of {sorted(_MODES)}")
        kwargs["mode"] = _MODES[doc["mode"]]
    for field in ("outer_budget", "inner_budget", "init_outer", "init_inner",
                  "candidates", "seed"):
        if field in doc:
            _require(
                isinstance(doc[field], int) and not isinstance(doc[field], bool),
                f"study.{field} must be an integer",
            )
            kwargs[field] = doc[field]
    if "acq_inner" in doc:
        kwargs["acq_inner"] = _parse_acq(doc["acq_inner"], "study.acq_inner")
    if "acq_outer" in doc:
        kwargs["acq_outer"] = _parse_acq(doc["acq_outer"], "study.acq_outer")
    return StudyConfig(**kwargs)


def _method_from_name(name: str, study: StudyConfig) -> MethodSpec:
    if name in _PAIRING_NAMES:
        inner_name, outer_name = name.split("-")
        return MethodSpec(
            name,
            StudyMode.BILEVEL,
            AcquisitionKind(variant=_VARIANTS[inner_name]),
            AcquisitionKind(variant=_VARIANTS[outer_name]),
        )
    if name == "random":
        return MethodSpec(name, StudyMode.RANDOM)
    if name == "single-level":
        return MethodSpec(name, StudyMode.SINGLE_LEVEL, None, study.acq_outer)
    raise ConfigError(
        f"unknown pairing {name!r}; expected one of "
        f"{list(_PAIRING_NAMES) + ['random', 'single-level']}"
    )


def _parse_compare(doc, study: StudyConfig, default_objective: ObjectiveSpec | None) -> CompareSpec:
    _require(isinstance(doc, dict), "compare must be an object")
    unknown = set(doc) - {"objectives", "pairings", "baseline", "seeds"}
    _require(not unknown, f"compare: unknown keys {sorted(unknown)}")

    if "objectives" in doc:
        _require(
            isinstance(doc["objectives"], list) and doc["objectives"],
            "compare.objectives must be a non-empty list",
        )
        specs = [_parse_objective(o) for o in doc["objectives"]]
    else:
        _require(default_objective is not None,
                 "compare needs compare.objectives or a top-level objective")
        specs = [default_objective]
    labels = []
    for i, spec in enumerate(specs):
        label = spec.builtin_name if spec.builtin_name else f"external-{i}"
        _require(label not in labels, f"duplicate compare objective {label!r}")
        labels.append(label)

    pairings = doc.get("pairings")
    _require(
        isinstance(pairings, list) and pairings and all(isinstance(p, str) for p in pairings),
        "compare.pairings must be a non-empty list of method names",
    )
    _require(len(set(pairings)) == len(pairings), "compare.pairings has duplicates")
    methods = tuple(_method_from_name(p, study) for p in pairings)

    baseline = doc.get("baseline")
    _require(isinstance(baseline, str) and baseline in pairings,
             "compare.baseline must name one of compare.pairings")

    seeds = doc.get("seeds")
    _require(
        isinstance(seeds, list) and seeds
        and all(isinstance(s, int) and not isinstance(s, bool) for s in seeds),
        "compare.seeds must be a non-empty list of integers",
    )
    return CompareSpec(
        objectives=tuple(zip(labels, specs)),
        methods=methods,
        baseline=baseline,
        seeds=tuple(seeds),
    )


def load_experiment(path: str | Path) -> Experiment:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"{path}: {err.strerror or err}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from None
    _require(isinstance(raw, dict), f"{path}: top level must be an object")
    unknown = set(raw) - {"space", "objective", "study", "out", "compare"}
    _require(not unknown, f"{path}: unknown keys {sorted(unknown)}")

    objective = _parse_objective(raw["objective"]) if "objective" in raw else None
    if "space" in raw:
        space = _parse_space(raw["space"])
    else:
        # builtins ship a canonical space; externals must declare theirs
        _require(
            objective is not None and objective.builtin_name in CANONICAL_SPACES,
            f"{path}: a space declaration is required",
        )
        space = CANONICAL_SPACES[objective.builtin_name]()

    study = _parse_study(raw.get("study", {}))
    problems = study.validate(space)
    if problems:
        raise ConfigError("; ".join(problems))

    compare = None
    if "compare" in raw:
        compare = _parse_compare(raw["compare"], study, objective)
        for _, spec in compare.objectives:
            _check_objective_space(spec, space, path)
    else:
        _require(objective is not None, f"{path}: an objective is required")
        _check_objective_space(objective, space, path)

    out = raw.get("out")
    if out is not None:
        _require(isinstance(out, str) and bool(out), f"{path}: out must be a path string")

    assert objective is not None or compare is not None
    return Experiment(
        space=space,
        objective=objective if objective is not None else compare.objectives[0][1],
        study=study,
        out=out,
        compare=compare,
        raw=raw,
    )


def _check_objective_space(spec: ObjectiveSpec, space: SearchSpace, path: Path) -> None:
    """Builtin objectives constrain the space shape; surface that at load time."""
    if spec.kind is ObjectiveKind.BUILTIN:
        try:
            make_objective(spec, space)
        except ValueError as err:
            raise ConfigError(f"{path}: {err}") from None


# ------------------------------------------------------------------- writers


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _dump_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def trials_csv_header(space: SearchSpace) -> list[str]:
    return (["outer_index", "inner_index"] + space.names()
            + ["train_loss", "val_metric", "status", "wall_time"])


def write_trials_csv(path: Path, trials, space: SearchSpace) -> None:
    names = space.names()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trials_csv_header(space))
        for t in trials:
            writer.writerow(
                [str(t.outer_index), str(t.inner_index)]
                + [_fmt(t.config[n]) for n in names]
                + [_fmt(t.train_loss), _fmt(t.val_metric), t.status, _fmt(t.wall_time)]
            )


def read_trials_csv(path: Path, space: SearchSpace) -> list[TrialRecord]:
    """Exact inverse of write_trials_csv for the given space."""
    by_name = {p.name: p for p in space.params}
    out: list[TrialRecord] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != trials_csv_header(space):
            raise ConfigError(f"{path}: unexpected trials.csv header")
        names = space.names()
        for row in reader:
            fixed, params, tail = row[:2], row[2 : 2 + len(names)], row[2 + len(names) :]
            config = {}
            for name, cell in zip(names, params):
                spec = by_name[name]
                if spec.kind is ParamKind.CATEGORICAL:
                    assert spec.choices is not None
                    matches = [c for c in spec.choices if str(c) == cell]
                    if not matches:
                        raise ConfigError(f"{path}: {cell!r} is not a choice of {name!r}")
                    config[name] = matches[0]
                else:
                    config[name] = float(cell)
            out.append(
                TrialRecord(
                    outer_index=int(fixed[0]),
                    inner_index=int(fixed[1]),
                    config=config,
                    train_loss=float(tail[0]) if tail[0] else None,
                    val_metric=float(tail[1]) if tail[1] else None,
                    status=tail[2],
                    wall_time=float(tail[3]),
                )
            )
    return out


def write_cumulative_csv(path: Path, series) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["evaluation_index", "value"])
        for i, v in enumerate(series):
            writer.writerow([str(i), _fmt(float(v))])


# ------------------------------------------------------------------ commands


def _resolve_out(cli_out: str | None, config_out: str | None, fallback: str) -> Path:
    out = cli_out or os.environ.get("BIBO_OUT") or config_out or fallback
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _experiment_echo(raw: dict, seed: int) -> dict:
    echo = json.loads(json.dumps(raw))  # deep copy of plain JSON data
    echo.setdefault("study", {})["seed"] = seed
    return echo


def cmd_run(args) -> int:
    exp = load_experiment(args.config)
    cfg = exp.study if args.seed is None else _reseeded(exp.study, args.seed)
    problems = cfg.validate(exp.space)
    if problems:
        raise ConfigError("; ".join(problems))
    out = _resolve_out(args.out, exp.out, DEFAULT_OUT)

    with make_objective(exp.objective, exp.space, study_seed=cfg.seed) as objective:
        result = run_study(objective, exp.space, cfg)

    doc = study_result_to_dict(result)
    doc["experiment"] = _experiment_echo(exp.raw, cfg.seed)
    _write_text(out / "study.json", _dump_json(doc))
    write_trials_csv(out / "trials.csv", result.trials, exp.space)
    write_cumulative_csv(out / "cumulative_best.csv", result.cumulative_best)
    print(f"ok: {len(result.trials)} trials, best_val={result.best_val!r} -> {out}")
    return 0


def _reseeded(cfg: StudyConfig, seed: int) -> StudyConfig:
    from dataclasses import replace

    return replace(cfg, seed=seed)


def _mean_or_none(values) -> float | None:
    vals = [v for v in values if v is not None]
    if len(vals) != len(list(values)) or not vals:
        return None
    return float(np.mean(vals))


def build_compare_doc(
    labels: list[str],
    per_objective_rows: dict[str, list[MethodResult]],
    methods,
    seeds,
    baseline: str,
) -> dict:
    method_docs = []
    for i, method in enumerate(methods):
        per_obj = {}
        for label in labels:
            r = per_objective_rows[label][i]
            per_obj[label] = {
                "best_vals": list(r.best_vals),
                "final_losses": list(r.final_losses),
                "median_best_val": r.median_best_val(),
                "median_final_loss": r.median_final_loss(),
                "series": [list(s) if s is not None else None for s in r.series],
            }
        method_docs.append(
            {
                "name": method.name,
                "per_objective": per_obj,
                "avg_median_best_val": _mean_or_none(
                    [per_obj[l]["median_best_val"] for l in labels]
                ),
                "avg_median_final_loss": _mean_or_none(
                    [per_obj[l]["median_final_loss"] for l in labels]
                ),
            }
        )
    base_doc = next(m for m in method_docs if m["name"] == baseline)
    base_avg = base_doc["avg_median_best_val"]
    for m in method_docs:
        if m["name"] == baseline or m["avg_median_best_val"] is None or not base_avg:
            m["improvement_rate"] = None
        else:
            m["improvement_rate"] = improvement_rate(m["avg_median_best_val"], base_avg)
    return {
        "schema": COMPARE_SCHEMA,
        "objectives": labels,
        "seeds": list(seeds),
        "baseline": baseline,
        "methods": method_docs,
    }


def _table(headers: list[str], rows: list[list[str]], best: dict[int, str]) -> str:
    """Aligned text table; best[col] marks that column's best cell with '*'."""
    marked = [list(r) for r in rows]
    for col, best_cell in best.items():
        for row in marked:
            if row[col] == best_cell and best_cell != "":
                row[col] = row[col] + " *"
    widths = [
        max(len(headers[c]), *(len(r[c]) for r in marked)) for c in range(len(headers))
    ]
    lines = [
        "  ".join(h.ljust(widths[c]) for c, h in enumerate(headers)),
        "  ".join("-" * widths[c] for c in range(len(headers))),
    ]
    for row in marked:
        lines.append("  ".join(row[c].ljust(widths[c]) for c in range(len(row))))
    return "\n".join(lines)


def _num(v, digits=6) -> str:
    return "" if v is None else f"{v:.{digits}g}"


def render_compare_tables(doc: dict) -> str:
    labels = doc["objectives"]
    methods = doc["methods"]

    val_headers = ["method"] + [f"{l} best_val" for l in labels] + ["AVG", "imp_rate_%"]
    val_rows, val_cols = [], {c: [] for c in range(1, len(val_headers))}
    for m in methods:
        row = [m["name"]]
        for l in labels:
            row.append(_num(m["per_objective"][l]["median_best_val"]))
        row.append(_num(m["avg_median_best_val"]))
        rate = m["improvement_rate"]
        row.append("-" if m["name"] == doc["baseline"] else
                   ("" if rate is None else f"{rate:.2f}"))
        val_rows.append(row)
    best_val_marks = {}
    for c in range(1, len(val_headers)):
        cells = [(float(r[c]), r[c]) for r in val_rows if r[c] not in ("", "-")]
        if cells:
            best_val_marks[c] = max(cells)[1]

    loss_headers = ["method"] + [f"{l} final_loss" for l in labels] + ["AVG"]
    loss_rows = []
    for m in methods:
        row = [m["name"]]
        for l in labels:
            row.append(_num(m["per_objective"][l]["median_final_loss"]))
        row.append(_num(m["avg_median_final_loss"]))
        loss_rows.append(row)
    best_loss_marks = {}
    for c in range(1, len(loss_headers)):
        cells = [(float(r[c]), r[c]) for r in loss_rows if r[c] != ""]
        if cells:
            best_loss_marks[c] = min(cells)[1]

    parts = [
        "validation metric (median best_val per objective; higher is better)",
        _table(val_headers, val_rows, best_val_marks),
        "",
        "train loss at the best-val trial (median; lower is better)",
        _table(loss_headers, loss_rows, best_loss_marks),
        "",
        _RATE_FOOTNOTE,
    ]
    return "\n".join(parts) + "\n"


def write_compare_csv(path: Path, doc: dict) -> None:
    labels = doc["objectives"]
    header = (
        ["method"]
        + [f"{l}_best_val" for l in labels]
        + ["avg_best_val", "imp_rate_pct"]
        + [f"{l}_final_loss" for l in labels]
        + ["avg_final_loss"]
    )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for m in doc["methods"]:
            row = [m["name"]]
            row += [_fmt(m["per_objective"][l]["median_best_val"]) for l in labels]
            row.append(_fmt(m["avg_median_best_val"]))
            row.append(_fmt(m["improvement_rate"]))
            row += [_fmt(m["per_objective"][l]["median_final_loss"]) for l in labels]
            row.append(_fmt(m["avg_median_final_loss"]))
            writer.writerow(row)


def cmd_compare(args) -> int:
    exp = load_experiment(args.config)
    _require(exp.compare is not None, f"{args.config}: compare section is required")
    compare = exp.compare
    seeds = (args.seed,) if args.seed is not None else compare.seeds
    out = _resolve_out(args.out, exp.out, DEFAULT_OUT)

    labels = [label for label, _ in compare.objectives]
    per_objective_rows = {}
    for label, spec in compare.objectives:
        per_objective_rows[label] = compare_configs(
            spec, exp.space, exp.study, list(compare.methods), list(seeds),
            jobs=max(1, args.jobs),
        )

    doc = build_compare_doc(labels, per_objective_rows, compare.methods, seeds,
                            compare.baseline)
    text = render_compare_tables(doc)
    _write_text(out / "compare.json", _dump_json(doc))
    write_compare_csv(out / "compare.csv", doc)
    _write_text(out / "compare.txt", text)
    print(text, end="")
    print(f"-> {out}")
    return 0


def _recomputed_cumulative(trials: list[dict]) -> list[float]:
    series: list[float] = []
    for t in trials:
        if t["status"] == STATUS_OK:
            prev = series[-1] if series else -np.inf
            series.append(max(prev, t["val_metric"]))
        elif series:
            series.append(series[-1])
    return series


def cmd_report(args) -> int:
    path = Path(args.input)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as err:
        raise ConfigError(f"{path}: {err.strerror or err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from None

    out = _resolve_out(args.out, None, str(path.parent))
    schema = doc.get("schema") if isinstance(doc, dict) else None
    if schema == RESULT_SCHEMA:
        trials = doc.get("trials", [])
        _require(bool(trials), f"{path}: study has no trials")
        series = _recomputed_cumulative(trials)
        stored = doc.get("cumulative_best")
        _require(
            stored is None or [float(v) for v in stored] == series,
            f"{path}: stored cumulative_best disagrees with trials",
        )
        write_cumulative_csv(out / "report_cumulative.csv", series)
        with open(out / "report_trials.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["evaluation_index", "outer_index", "inner_index", "train_loss", "val_metric"]
            )
            for i, t in enumerate(trials):
                if t["status"] == STATUS_OK:
                    writer.writerow(
                        [str(i), str(t["outer_index"]), str(t["inner_index"]),
                         _fmt(t["train_loss"]), _fmt(t["val_metric"])]
                    )
        print(f"ok: {len(series)} cumulative points -> {out}")
        return 0
    if schema == COMPARE_SCHEMA:
        with open(out / "report_series.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["method", "objective", "evaluation_index", "median_value"])
            for m in doc["methods"]:
                for label in doc["objectives"]:
                    series_list = [
                        s for s in m["per_objective"][label]["series"] if s is not None
                    ]
                    if not series_list:
                        continue
                    n = min(len(s) for s in series_list)
                    stacked = np.array([s[:n] for s in series_list], dtype=float)
                    medians = np.median(stacked, axis=0)
                    for i, v in enumerate(medians):
                        writer.writerow([m["name"], label, str(i), _fmt(float(v))])
        print(f"ok: report series -> {out}")
        return 0
    raise ConfigError(f"{path}: unsupported document schema {schema!r}")


# ---------------------------------------------------------------- entrypoint


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bibo",
        description="Nested Bayesian-optimization studies over split search spaces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one study from a config file")
    run_p.add_argument("config")
    run_p.add_argument("--out", help="output directory (default: config 'out' or bibo-out)")
    run_p.add_argument("--seed", type=int, help="override the study seed")
    run_p.set_defaults(fn=cmd_run)

    cmp_p = sub.add_parser("compare", help="run the comparison grid from a config file")
    cmp_p.add_argument("config")
    cmp_p.add_argument("--out")
    cmp_p.add_argument("--seed", type=int, help="replace the seed list with one seed")
    cmp_p.add_argument("--jobs", type=int, default=1,
                       help="cells to run in parallel (default 1)")
    cmp_p.set_defaults(fn=cmd_compare)

    rep_p = sub.add_parser("report", help="emit plot-ready CSV from a result JSON")
    rep_p.add_argument("input", help="study.json or compare.json")
    rep_p.add_argument("--out", help="output directory (default: next to the input)")
    rep_p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("BIBO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (StudyFailure, ProtocolError) as err:
        print(f"study failed: {err}", file=sys.stderr)
        return 3
    except ValueError as err:  # ConfigError plus validation raised in lower layers
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
