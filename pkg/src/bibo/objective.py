"""Black-box objectives: builtin synthetic problems and external subprocess workers.

Every evaluation returns both a training loss (lower is better) and a
validation metric (higher is better) so the nested loops never re-evaluate
a configuration. External objectives speak a line-delimited JSON protocol
on the child's standard input/output; see PROTOCOL_VERSION below.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import queue
import subprocess
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from bibo.space import Config, Level, ParamKind, ParamSpec, SearchSpace

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = "bilevel-bo/1"


class EvaluationFailed(RuntimeError):
    """A single evaluation failed; the study may continue."""


class ProtocolError(RuntimeError):
    """The external child broke the wire contract; the study cannot continue."""


@dataclass(frozen=True)
class Evaluation:
    """One black-box result: train_loss (minimize) and val_metric (maximize)."""

    train_loss: float
    val_metric: float
    aux: dict[str, float] | None = None


class ObjectiveKind(Enum):
    BUILTIN = "builtin"
    EXTERNAL = "external"


@dataclass(frozen=True)
class ObjectiveSpec:
    """Declarative pointer to an objective implementation."""

    kind: ObjectiveKind
    builtin_name: str | None = None
    command: tuple[str, ...] | None = None
    timeout: float = 3600.0
    noise_std: float = 0.0  # builtin-only: Gaussian noise on both outputs

    def __post_init__(self) -> None:
        if self.kind is ObjectiveKind.BUILTIN:
            if not self.builtin_name or self.command is not None:
                raise ValueError("builtin objective takes builtin_name and no command")
        else:
            if not self.command or self.builtin_name is not None:
                raise ValueError("external objective takes command and no builtin_name")
            object.__setattr__(self, "command", tuple(self.command))
            if not self.timeout > 0:
                raise ValueError("external timeout must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


def _level_coordinate(space: SearchSpace, config: Config, level: Level) -> float:
    """Collapse one level's encoded dims to a scalar in [0, 1] (their mean)."""
    return float(np.mean(space.encode(config, level)))


def _quadratic_bilevel(theta: float, phi: float) -> tuple[float, float]:
    train_loss = (phi - theta) ** 2
    val_metric = -((theta - 0.5) ** 2 + (phi - 0.5) ** 2)
    return train_loss, val_metric


MISALIGNED_LOSS_OPT = 0.2  # inner argmin of the training loss
MISALIGNED_METRIC_OPT = 0.8  # inner argmax of the validation metric
_MISALIGNED_THETA_WEIGHT = 2.5


def _misaligned(theta: float, phi: float) -> tuple[float, float]:
    # the two bowls are deliberately 0.6 apart along phi: the loss minimizer
    # sits >= 0.36 below the metric optimum, so loss-following alone loses
    train_loss = (phi - MISALIGNED_LOSS_OPT) ** 2
    val_metric = (
        -((phi - MISALIGNED_METRIC_OPT) ** 2)
        - _MISALIGNED_THETA_WEIGHT * (theta - 0.5) ** 2
    )
    return train_loss, val_metric


BRANIN_OPTIMUM = 0.397887  # value at the three global minimizers

_BRANIN_X1 = (-5.0, 10.0)
_BRANIN_X2 = (0.0, 15.0)


def _branin_raw(x1: float, x2: float) -> float:
    b = 5.1 / (4.0 * math.pi**2)
    c = 5.0 / math.pi
    t = 1.0 / (8.0 * math.pi)
    return (x2 - b * x1**2 + c * x1 - 6.0) ** 2 + 10.0 * (1.0 - t) * math.cos(x1) + 10.0


def quadratic_bilevel_space() -> SearchSpace:
    return SearchSpace(
        params=(
            ParamSpec("theta", ParamKind.UNIFORM, Level.OUTER, bounds=(0.0, 1.0)),
            ParamSpec("phi", ParamKind.UNIFORM, Level.INNER, bounds=(0.0, 1.0)),
        )
    )


def misaligned_space() -> SearchSpace:
    return SearchSpace(
        params=(
            ParamSpec("theta", ParamKind.UNIFORM, Level.OUTER, bounds=(0.0, 1.0)),
            ParamSpec("phi", ParamKind.UNIFORM, Level.INNER, bounds=(0.0, 1.0)),
        )
    )


def branin_space() -> SearchSpace:
    return SearchSpace(
        params=(
            ParamSpec("x1", ParamKind.UNIFORM, Level.OUTER, bounds=_BRANIN_X1),
            ParamSpec("x2", ParamKind.UNIFORM, Level.OUTER, bounds=_BRANIN_X2),
        )
    )


CANONICAL_SPACES: dict[str, Callable[[], SearchSpace]] = {
    "quadratic-bilevel": quadratic_bilevel_space,
    "misaligned": misaligned_space,
    "branin": branin_space,
}


class Objective:
    """Base contract: evaluate full configurations, release resources on close."""

    # builtins report wall_time 0.0 so study artifacts stay byte-deterministic;
    # external children get measured clock time
    measures_wall_time = False

    def evaluate(self, config: Config) -> Evaluation:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self) -> "Objective":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def _derived_rng(config: Config, study_seed: int) -> np.random.Generator:
    """Noise generator keyed on (config content, study seed): replays exactly."""
    payload = json.dumps(
        {k: config[k] for k in sorted(config)}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    entropy = [int.from_bytes(digest, "big"), study_seed & 0xFFFFFFFFFFFFFFFF]
    return np.random.default_rng(np.random.SeedSequence(entropy))


class BuiltinObjective(Objective):
    """Synthetic problem evaluated in-process against a bound space."""

    def __init__(self, spec: ObjectiveSpec, space: SearchSpace, study_seed: int = 0):
        self.spec = spec
        self.space = space
        self.study_seed = study_seed
        name = spec.builtin_name
        if name in ("quadratic-bilevel", "misaligned"):
            if not (space.has_level(Level.INNER) and space.has_level(Level.OUTER)):
                raise ValueError(f"builtin {name!r} requires both inner and outer params")
        elif name == "branin":
            if space.dim() != 2 or any(
                p.kind is ParamKind.CATEGORICAL for p in space.params
            ):
                raise ValueError("builtin 'branin' requires exactly 2 continuous params")
        else:
            raise ValueError(f"unknown builtin objective {name!r}")
        self.name = name

    def evaluate(self, config: Config) -> Evaluation:
        if self.name == "branin":
            u = self.space.encode(config)
            x1 = _BRANIN_X1[0] + u[0] * (_BRANIN_X1[1] - _BRANIN_X1[0])
            x2 = _BRANIN_X2[0] + u[1] * (_BRANIN_X2[1] - _BRANIN_X2[0])
            raw = _branin_raw(float(x1), float(x2))
            train_loss, val_metric = raw, -raw
        else:
            theta = _level_coordinate(self.space, config, Level.OUTER)
            phi = _level_coordinate(self.space, config, Level.INNER)
            fn = _quadratic_bilevel if self.name == "quadratic-bilevel" else _misaligned
            train_loss, val_metric = fn(theta, phi)
        if self.spec.noise_std > 0:
            noise = _derived_rng(config, self.study_seed).normal(0.0, self.spec.noise_std, 2)
            train_loss += float(noise[0])
            val_metric += float(noise[1])
        if not (math.isfinite(train_loss) and math.isfinite(val_metric)):
            raise EvaluationFailed(f"builtin {self.name!r} produced non-finite outputs")
        return Evaluation(train_loss=float(train_loss), val_metric=float(val_metric))


class ExternalObjective(Objective):
    """Client for one child process speaking the line-delimited JSON protocol.

    The child prints a handshake line at startup, then answers one request
    line with one response line, ids in request order. Requests here are
    strictly serialized; a study owns exactly one child.
    """

    measures_wall_time = True

    def __init__(self, spec: ObjectiveSpec):
        assert spec.command is not None
        self.spec = spec
        self._next_id = 0
        self._proc = subprocess.Popen(
            list(spec.command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        logger.debug("spawned external objective pid=%d: %s", self._proc.pid, spec.command)
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        handshake = self._read_json(what="handshake")
        if handshake.get("protocol") != PROTOCOL_VERSION:
            self.close()
            raise ProtocolError(f"bad handshake: {handshake!r}")

    def _pump(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF marker

    def _read_json(self, what: str) -> dict:
        try:
            line = self._lines.get(timeout=self.spec.timeout)
        except queue.Empty:
            self._proc.kill()
            raise ProtocolError(f"timed out after {self.spec.timeout}s waiting for {what}")
        if line is None:
            code = self._proc.wait()
            if code != 0:
                raise ProtocolError(f"child exited with code {code} before {what}")
            raise ProtocolError(f"child closed its output before {what}")
        try:
            parsed = json.loads(line)
        except json.JSONDecodeError as err:
            raise ProtocolError(f"unparseable {what} line: {line!r}") from err
        if not isinstance(parsed, dict):
            raise ProtocolError(f"{what} line is not a JSON object: {line!r}")
        return parsed

    def evaluate(self, config: Config) -> Evaluation:
        if self._proc.poll() is not None:
            raise ProtocolError(f"child already exited with code {self._proc.returncode}")
        request_id = self._next_id
        self._next_id += 1
        request = json.dumps(
            {"id": request_id, "params": dict(config)}, separators=(",", ":")
        )
        assert self._proc.stdin is not None
        try:
            self._proc.stdin.write(request + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as err:
            raise ProtocolError("child closed its input") from err

        response = self._read_json(what=f"response {request_id}")
        if response.get("id") != request_id:
            raise ProtocolError(
                f"response id {response.get('id')!r} does not match request {request_id}"
            )
        status = response.get("status")
        if status == "error":
            raise EvaluationFailed(str(response.get("message", "unspecified error")))
        if status != "ok":
            raise ProtocolError(f"unknown status {status!r}")
        try:
            train_loss = float(response["train_loss"])
            val_metric = float(response["val_metric"])
        except (KeyError, TypeError, ValueError) as err:
            raise ProtocolError(f"malformed ok response: {response!r}") from err
        if not (math.isfinite(train_loss) and math.isfinite(val_metric)):
            raise EvaluationFailed("child reported non-finite objective values")
        aux = response.get("aux")
        if aux is not None and not isinstance(aux, dict):
            raise ProtocolError("aux must be a JSON object when present")
        return Evaluation(train_loss=train_loss, val_metric=val_metric, aux=aux)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                if self._proc.stdin is not None:
                    self._proc.stdin.close()
                self._proc.wait(timeout=5.0)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
                self._proc.wait()


def make_objective(
    spec: ObjectiveSpec, space: SearchSpace, study_seed: int = 0
) -> Objective:
    """Instantiate the objective behind a spec, bound to its search space."""
    if spec.kind is ObjectiveKind.BUILTIN:
        return BuiltinObjective(spec, space, study_seed)
    return ExternalObjective(spec)
