"""Nested optimization studies.

The bilevel mode runs the four-step loop: propose outer params, optimize the
inner level against train_loss with a fresh GP, feed the inner argmin's
val_metric back to the outer GP, repeat. Single-level and random modes share
the same record/result types so they compare directly.

Everything here internally maximizes: the inner loop fits on -train_loss.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum

import numpy as np

from bibo import surrogate
from bibo.acquisition import AcqVariant, AcquisitionKind, Incumbent, propose
from bibo.objective import EvaluationFailed, Objective, ObjectiveSpec, make_objective
from bibo.space import Config, Level, SearchSpace
from bibo.surrogate import NumericalFailure

logger = logging.getLogger(__name__)

_SEED_MASK = (1 << 64) - 1

STATUS_OK = "ok"
STATUS_FAILED = "failed"

RESULT_SCHEMA = "bilevel-bo/study/1"


class StudyMode(Enum):
    BILEVEL = "bilevel"
    SINGLE_LEVEL = "single-level"
    RANDOM = "random"


@dataclass(frozen=True)
class StudyConfig:
    mode: StudyMode = StudyMode.BILEVEL
    outer_budget: int = 50
    inner_budget: int = 8
    init_outer: int = 5
    init_inner: int = 3
    acq_inner: AcquisitionKind = AcquisitionKind(variant=AcqVariant.EI)
    acq_outer: AcquisitionKind = AcquisitionKind(variant=AcqVariant.UCB)
    candidates: int = 1024
    seed: int = 0

    def validate(self, space: SearchSpace) -> list[str]:
        problems = []
        for name in ("outer_budget", "inner_budget", "init_outer", "init_inner", "candidates"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be a positive integer")
        # init bounds apply only where the init phase runs; init == budget is
        # the legal degenerate all-random study
        if self.mode is not StudyMode.RANDOM and self.init_outer > self.outer_budget:
            problems.append("init_outer must not exceed outer_budget")
        if self.mode is StudyMode.BILEVEL and self.init_inner > self.inner_budget:
            problems.append("init_inner must not exceed inner_budget")
        if self.mode is StudyMode.BILEVEL:
            if not space.has_level(Level.INNER) or not space.has_level(Level.OUTER):
                problems.append("bilevel mode requires both inner and outer params in the space")
        return problems


@dataclass(frozen=True)
class TrialRecord:
    """One objective evaluation. inner_index is -1 outside bilevel mode."""

    outer_index: int
    inner_index: int
    config: Config
    train_loss: float | None
    val_metric: float | None
    status: str
    wall_time: float


@dataclass(frozen=True)
class StudyResult:
    trials: tuple[TrialRecord, ...]
    best_config: Config
    best_val: float
    cumulative_best: tuple[float, ...]


class StudyFailure(RuntimeError):
    """Zero evaluations succeeded; carries the full record log."""

    def __init__(self, message: str, trials: tuple[TrialRecord, ...]):
        super().__init__(message)
        self.trials = trials


def study_generators(
    seed: int, outer_budget: int
) -> tuple[np.random.Generator, list[np.random.Generator]]:
    """Outer-loop generator plus one generator per outer trial.

    Pure in (seed, outer_budget) so tests can replay any stream in isolation.
    """
    root = np.random.SeedSequence(seed & _SEED_MASK)
    children = root.spawn(outer_budget + 1)
    outer = np.random.default_rng(children[0])
    inners = [np.random.default_rng(c) for c in children[1:]]
    return outer, inners


def _run_trial(
    objective: Objective, config: Config, outer_index: int, inner_index: int
) -> TrialRecord:
    measured = objective.measures_wall_time
    start = time.monotonic() if measured else 0.0
    try:
        ev = objective.evaluate(config)
    except EvaluationFailed as err:
        logger.warning("evaluation failed at %s: %s", config, err)
        wall = time.monotonic() - start if measured else 0.0
        return TrialRecord(outer_index, inner_index, dict(config), None, None,
                           STATUS_FAILED, wall)
    wall = time.monotonic() - start if measured else 0.0
    return TrialRecord(outer_index, inner_index, dict(config), ev.train_loss,
                       ev.val_metric, STATUS_OK, wall)


def _best_loss_record(records) -> TrialRecord | None:
    best = None
    for rec in records:
        if rec.status == STATUS_OK and (best is None or rec.train_loss < best.train_loss):
            best = rec
    return best


def _best_val_record(records) -> TrialRecord | None:
    best = None
    for rec in records:
        if rec.status == STATUS_OK and (best is None or rec.val_metric > best.val_metric):
            best = rec
    return best


def _propose_next(
    space: SearchSpace,
    level: Level | None,
    acq: AcquisitionKind,
    X: list[np.ndarray],
    y: list[float],
    candidates: int,
    rng: np.random.Generator,
) -> Config:
    """BO proposal from the observations so far; random draw if the fit fails."""
    fit_seed = int(rng.integers(0, 2**63))
    try:
        model = surrogate.fit(np.asarray(X), np.asarray(y), seed=fit_seed)
        incumbent = Incumbent(value=float(max(y)))
        return propose(model, space, level, acq, incumbent, candidates, rng)
    except NumericalFailure:
        logger.warning("surrogate fit failed, falling back to a random draw")
        return space.sample(level, rng)


def run_inner(
    theta: Config,
    objective: Objective,
    space: SearchSpace,
    cfg: StudyConfig,
    rng: np.random.Generator,
    outer_index: int = 0,
) -> tuple[Config | None, list[TrialRecord]]:
    """Minimize train_loss over inner params at fixed theta.

    Returns the inner config with minimal train_loss among ok records, or
    None when every evaluation failed, plus all records in call order.
    """
    records: list[TrialRecord] = []
    X: list[np.ndarray] = []
    y: list[float] = []  # -train_loss: the loop maximizes internally
    for t in range(cfg.inner_budget):
        if t < cfg.init_inner or not y:
            phi = space.sample(Level.INNER, rng)
        else:
            phi = _propose_next(space, Level.INNER, cfg.acq_inner, X, y,
                                cfg.candidates, rng)
        rec = _run_trial(objective, {**theta, **phi}, outer_index, t)
        records.append(rec)
        if rec.status == STATUS_OK:
            X.append(space.encode(rec.config, Level.INNER))
            y.append(-rec.train_loss)
    best = _best_loss_record(records)
    if best is None:
        return None, records
    phi_star = {name: best.config[name] for name in space.names(Level.INNER)}
    return phi_star, records


def run_study(objective: Objective, space: SearchSpace, cfg: StudyConfig) -> StudyResult:
    problems = space.validate() + cfg.validate(space)
    if problems:
        raise ValueError("; ".join(problems))

    trials: list[TrialRecord] = []
    cumulative: list[float] = []

    def log_trial(rec: TrialRecord) -> None:
        trials.append(rec)
        if rec.status == STATUS_OK:
            prev = cumulative[-1] if cumulative else -np.inf
            cumulative.append(max(prev, rec.val_metric))
        elif cumulative:
            # failed evaluations consume budget but cannot improve the best
            cumulative.append(cumulative[-1])

    outer_rng, inner_rngs = study_generators(cfg.seed, cfg.outer_budget)

    if cfg.mode is StudyMode.BILEVEL:
        outer_X: list[np.ndarray] = []
        outer_y: list[float] = []  # val_metric of each theta's inner argmin
        for k in range(cfg.outer_budget):
            if k < cfg.init_outer or not outer_y:
                theta = space.sample(Level.OUTER, outer_rng)
            else:
                theta = _propose_next(space, Level.OUTER, cfg.acq_outer, outer_X,
                                      outer_y, cfg.candidates, outer_rng)
            _, records = run_inner(theta, objective, space, cfg, inner_rngs[k], k)
            for rec in records:
                log_trial(rec)
            best_rec = _best_loss_record(records)
            if best_rec is not None:
                # exact reuse of the stored field: no re-evaluation
                outer_X.append(space.encode(best_rec.config, Level.OUTER))
                outer_y.append(best_rec.val_metric)
    elif cfg.mode is StudyMode.SINGLE_LEVEL:
        X: list[np.ndarray] = []
        y: list[float] = []
        for k in range(cfg.outer_budget):
            if k < cfg.init_outer or not y:
                config = space.sample(None, outer_rng)
            else:
                config = _propose_next(space, None, cfg.acq_outer, X, y,
                                       cfg.candidates, outer_rng)
            rec = _run_trial(objective, config, k, -1)
            log_trial(rec)
            if rec.status == STATUS_OK:
                X.append(space.encode(rec.config))
                y.append(rec.val_metric)
    else:
        for k in range(cfg.outer_budget):
            rec = _run_trial(objective, space.sample(None, outer_rng), k, -1)
            log_trial(rec)

    best = _best_val_record(trials)
    if best is None:
        raise StudyFailure("no evaluation succeeded", tuple(trials))
    return StudyResult(
        trials=tuple(trials),
        best_config=dict(best.config),
        best_val=best.val_metric,
        cumulative_best=tuple(cumulative),
    )


def final_train_loss(result: StudyResult) -> float:
    """train_loss of the trial that achieved best_val."""
    best = _best_val_record(result.trials)
    assert best is not None and best.train_loss is not None
    return best.train_loss


def improvement_rate(avg_method: float, avg_baseline: float) -> float:
    """Percent gain over the baseline, rounded half-up to 2 decimals."""
    if avg_baseline == 0:
        raise ValueError("zero baseline")
    rate = (
        Decimal(100)
        * (Decimal(repr(avg_method)) - Decimal(repr(avg_baseline)))
        / Decimal(repr(avg_baseline))
    )
    return float(rate.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def study_result_to_dict(result: StudyResult) -> dict:
    return {
        "schema": RESULT_SCHEMA,
        "best_config": dict(result.best_config),
        "best_val": result.best_val,
        "cumulative_best": list(result.cumulative_best),
        "trials": [
            {
                "outer_index": t.outer_index,
                "inner_index": t.inner_index,
                "config": dict(t.config),
                "train_loss": t.train_loss,
                "val_metric": t.val_metric,
                "status": t.status,
                "wall_time": t.wall_time,
            }
            for t in result.trials
        ],
    }


def study_result_from_dict(doc: dict) -> StudyResult:
    if doc.get("schema") != RESULT_SCHEMA:
        raise ValueError(f"unsupported study schema: {doc.get('schema')!r}")
    trials = tuple(
        TrialRecord(
            outer_index=t["outer_index"],
            inner_index=t["inner_index"],
            config=t["config"],
            train_loss=t["train_loss"],
            val_metric=t["val_metric"],
            status=t["status"],
            wall_time=t["wall_time"],
        )
        for t in doc["trials"]
    )
    return StudyResult(
        trials=trials,
        best_config=doc["best_config"],
        best_val=doc["best_val"],
        cumulative_best=tuple(doc["cumulative_best"]),
    )


@dataclass(frozen=True)
class MethodSpec:
    """One comparison row: a mode plus its acquisition pairing (if any)."""

    name: str
    mode: StudyMode
    acq_inner: AcquisitionKind | None = None
    acq_outer: AcquisitionKind | None = None


def standard_pairings() -> list[MethodSpec]:
    """The four inner-outer acquisition pairings plus the random baseline."""
    ei = AcquisitionKind(variant=AcqVariant.EI)
    ucb = AcquisitionKind(variant=AcqVariant.UCB)
    out = []
    for inner_name, inner_acq in (("EI", ei), ("UCB", ucb)):
        for outer_name, outer_acq in (("EI", ei), ("UCB", ucb)):
            out.append(
                MethodSpec(f"{inner_name}-{outer_name}", StudyMode.BILEVEL,
                           inner_acq, outer_acq)
            )
    out.append(MethodSpec("random", StudyMode.RANDOM))
    return out


def method_study_config(method: MethodSpec, base: StudyConfig, seed: int) -> StudyConfig:
    kwargs: dict = {"mode": method.mode, "seed": seed}
    if method.acq_inner is not None:
        kwargs["acq_inner"] = method.acq_inner
    if method.acq_outer is not None:
        kwargs["acq_outer"] = method.acq_outer
    if method.mode is StudyMode.RANDOM:
        # the baseline spends the same total evaluation count as bilevel rows
        kwargs["outer_budget"] = base.outer_budget * base.inner_budget
    return replace(base, **kwargs)


@dataclass(frozen=True)
class MethodResult:
    """Per-seed study outcomes for one method; None marks a failed study."""

    method: MethodSpec
    seeds: tuple[int, ...]
    best_vals: tuple[float | None, ...]
    final_losses: tuple[float | None, ...]
    series: tuple[tuple[float, ...] | None, ...]

    def median_best_val(self) -> float | None:
        vals = [v for v in self.best_vals if v is not None]
        return float(np.median(vals)) if vals else None

    def median_final_loss(self) -> float | None:
        vals = [v for v in self.final_losses if v is not None]
        return float(np.median(vals)) if vals else None


def compare_configs(
    spec: ObjectiveSpec,
    space: SearchSpace,
    base_cfg: StudyConfig,
    methods: list[MethodSpec],
    seeds: list[int],
    jobs: int = 1,
) -> list[MethodResult]:
    """Run every (method, seed) study; cells merge in (method, seed) order.

    Each cell owns its objective handle and generator, so cells are safe to
    run on separate threads.
    """
    if not methods or not seeds:
        raise ValueError("compare needs at least one method and one seed")

    def run_cell(method: MethodSpec, seed: int):
        cfg = method_study_config(method, base_cfg, seed)
        with make_objective(spec, space, study_seed=seed) as objective:
            try:
                result = run_study(objective, space, cfg)
            except StudyFailure as err:
                logger.warning("study failed for %s seed %d: %s", method.name, seed, err)
                return None
        return result

    cells: list[StudyResult | None]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(run_cell, method, seed)
                for method in methods
                for seed in seeds
            ]
            cells = [f.result() for f in futures]
    else:
        cells = [run_cell(method, seed) for method in methods for seed in seeds]

    out = []
    for i, method in enumerate(methods):
        row = cells[i * len(seeds) : (i + 1) * len(seeds)]
        out.append(
            MethodResult(
                method=method,
                seeds=tuple(seeds),
                best_vals=tuple(r.best_val if r else None for r in row),
                final_losses=tuple(final_train_loss(r) if r else None for r in row),
                series=tuple(r.cumulative_best if r else None for r in row),
            )
        )
    return out
