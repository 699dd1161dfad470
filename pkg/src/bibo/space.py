"""Hyperparameter search spaces split into inner and outer optimization levels.

A space is an ordered list of parameter specs. Each parameter belongs to
exactly one level: the inner level is searched against training loss, the
outer level against the validation metric. Encoding maps configurations
onto the unit cube [0, 1]^d (one dimension per parameter, categoricals as
a scaled choice index), which is the representation the surrogate sees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

Value = float | int | str
Config = dict[str, Value]


class Level(Enum):
    """Which optimization loop owns a parameter."""

    INNER = "inner"
    OUTER = "outer"


class ParamKind(Enum):
    UNIFORM = "uniform"
    LOG_UNIFORM = "log-uniform"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class ParamSpec:
    """One tunable parameter: continuous (linear or log scale) or categorical.

    Continuous kinds take ``bounds``; categorical takes an ordered tuple of
    distinct ``choices`` (numbers or strings).
    """

    name: str
    kind: ParamKind
    level: Level
    bounds: tuple[float, float] | None = None
    choices: tuple[Value, ...] | None = None

    def validate(self) -> list[str]:
        """Return every constraint violation for this parameter, [] if none."""
        errors: list[str] = []
        if not self.name:
            errors.append("parameter name must be non-empty")
        if self.kind is ParamKind.CATEGORICAL:
            if not self.choices:
                errors.append(f"{self.name}: categorical requires at least 1 choice")
            elif len(set(self.choices)) != len(self.choices):
                errors.append(f"{self.name}: categorical choices must be distinct")
            if self.bounds is not None:
                errors.append(f"{self.name}: categorical takes choices, not bounds")
        else:
            if self.choices is not None:
                errors.append(f"{self.name}: continuous takes bounds, not choices")
            if self.bounds is None:
                errors.append(f"{self.name}: continuous requires (low, high) bounds")
            else:
                low, high = self.bounds
                if not (math.isfinite(low) and math.isfinite(high)):
                    errors.append(f"{self.name}: bounds must be finite")
                elif low >= high:
                    errors.append(f"{self.name}: requires low < high, got ({low}, {high})")
                elif self.kind is ParamKind.LOG_UNIFORM and low <= 0:
                    errors.append(f"{self.name}: log-uniform requires positive lower bound")
        return errors

    def encode_value(self, value: Value) -> float:
        """Map a raw value to its [0, 1] coordinate."""
        if self.kind is ParamKind.CATEGORICAL:
            assert self.choices is not None
            try:
                index = self.choices.index(value)
            except ValueError:
                raise ValueError(
                    f"{self.name}: {value!r} is not one of {list(self.choices)}"
                ) from None
            return (index + 0.5) / len(self.choices)
        assert self.bounds is not None
        low, high = self.bounds
        v = float(value)
        if not low <= v <= high:
            raise ValueError(f"{self.name}: {v} outside [{low}, {high}]")
        if self.kind is ParamKind.LOG_UNIFORM:
            return (math.log(v) - math.log(low)) / (math.log(high) - math.log(low))
        return (v - low) / (high - low)

    def decode_value(self, u: float) -> Value:
        """Inverse of :meth:`encode_value` for a coordinate in [0, 1]."""
        if not 0.0 <= u <= 1.0:
            raise ValueError(f"{self.name}: encoded component {u} outside [0, 1]")
        if self.kind is ParamKind.CATEGORICAL:
            assert self.choices is not None
            k = len(self.choices)
            return self.choices[min(int(u * k), k - 1)]
        assert self.bounds is not None
        low, high = self.bounds
        if self.kind is ParamKind.LOG_UNIFORM:
            v = math.exp(math.log(low) + u * (math.log(high) - math.log(low)))
        else:
            v = low + u * (high - low)
        # clamp fp overshoot so round-trips stay in-domain
        return min(max(v, low), high)


@dataclass(frozen=True)
class SearchSpace:
    """Ordered collection of parameters; dimension order follows declaration order."""

    params: tuple[ParamSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", tuple(self.params))

    def subset(self, level: Level | None = None) -> tuple[ParamSpec, ...]:
        """Parameters at ``level``, or all of them when level is None."""
        if level is None:
            return self.params
        return tuple(p for p in self.params if p.level is level)

    def names(self, level: Level | None = None) -> list[str]:
        return [p.name for p in self.subset(level)]

    def dim(self, level: Level | None = None) -> int:
        return len(self.subset(level))

    def has_level(self, level: Level) -> bool:
        return any(p.level is level for p in self.params)

    def validate(self) -> list[str]:
        """Collect violations across all parameters plus cross-param checks."""
        errors: list[str] = []
        for p in self.params:
            errors.extend(p.validate())
        seen: set[str] = set()
        for p in self.params:
            if p.name in seen:
                errors.append(f"duplicate parameter name: {p.name}")
            seen.add(p.name)
        return errors

    def encode(self, config: Mapping[str, Value], level: Level | None = None) -> np.ndarray:
        """Encode the assignments matching ``level`` as a vector in [0, 1]^d.

        Raises ValueError on a missing assignment or an out-of-domain value.
        """
        specs = self.subset(level)
        out = np.empty(len(specs))
        for i, p in enumerate(specs):
            if p.name not in config:
                raise ValueError(f"missing assignment for parameter {p.name!r}")
            out[i] = p.encode_value(config[p.name])
        return out

    def decode(self, vector: Iterable[float], level: Level | None = None) -> Config:
        """Inverse of :meth:`encode`; raises ValueError on dimension mismatch."""
        specs = self.subset(level)
        vec = np.asarray(vector, dtype=float)
        if vec.shape != (len(specs),):
            raise ValueError(f"expected {len(specs)} components, got shape {vec.shape}")
        return {p.name: p.decode_value(float(u)) for p, u in zip(specs, vec)}

    def encode_many(
        self, configs: list[Mapping[str, Value]], level: Level | None = None
    ) -> np.ndarray:
        """Encode a batch of configurations as rows; vectorized per parameter."""
        specs = self.subset(level)
        out = np.empty((len(configs), len(specs)))
        for j, p in enumerate(specs):
            try:
                values = [c[p.name] for c in configs]
            except KeyError:
                raise ValueError(f"missing assignment for parameter {p.name!r}") from None
            if p.kind is ParamKind.CATEGORICAL:
                assert p.choices is not None
                index = {choice: i for i, choice in enumerate(p.choices)}
                k = len(p.choices)
                try:
                    out[:, j] = [(index[v] + 0.5) / k for v in values]
                except KeyError as err:
                    raise ValueError(
                        f"{p.name}: {err.args[0]!r} is not one of {list(p.choices)}"
                    ) from None
            else:
                assert p.bounds is not None
                low, high = p.bounds
                col = np.asarray(values, dtype=float)
                if np.any(col < low) or np.any(col > high):
                    raise ValueError(f"{p.name}: value outside [{low}, {high}]")
                if p.kind is ParamKind.LOG_UNIFORM:
                    out[:, j] = (np.log(col) - math.log(low)) / (
                        math.log(high) - math.log(low)
                    )
                else:
                    out[:, j] = (col - low) / (high - low)
        return out

    def sample(self, level: Level | None, rng: np.random.Generator) -> Config:
        """Draw each parameter uniformly in encoded space, then decode."""
        return {p.name: p.decode_value(rng.uniform()) for p in self.subset(level)}
