"""
Scenario run configuration for Newtonian Worlds.

A configuration is a JSON document merged with command-line overrides. Every
value is checked, and the scenario is built once, before anything runs.
"""
import dataclasses
import json
import re
from pathlib import Path
from typing import Any

from newtonian_worlds.core import Boundary
from newtonian_worlds.exceptions import ConfigError, ParameterError
from newtonian_worlds.scenarios import Scenario, registry
from newtonian_worlds.utils import parse_axis
from newtonian_worlds.worlds import DensityEstimatorSpec

MODES = ("oracle", "hydro", "worlds")
CHECKS = ("quantization", "symmetry", "born")

key_re = re.compile(r'"((?:[^"\\]|\\.)*)"\s*:')


@dataclasses.dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    modes: tuple[str, ...] = ("oracle",)
    axes: tuple[tuple[float, float, int], ...] | None = None
    boundary: str | None = None
    params: dict = dataclasses.field(default_factory=dict)
    worlds: int = 1000
    estimator: dict = dataclasses.field(default_factory=dict)
    dt: float | None = None
    time: float | None = None
    stride: int = 10
    seed: int = 0
    out: str = "out"
    checks: tuple[str, ...] = ()
    lines: dict = dataclasses.field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.scenario not in registry:
            names = ", ".join(registry.names())
            raise self.error("scenario", f"unknown scenario '{self.scenario}'; choose from {names}")
        modes = _as_tuple(self.modes)
        if not modes or any(m not in MODES for m in modes):
            raise self.error("modes", f"modes must be a non-empty subset of {', '.join(MODES)}, got {self.modes}")
        object.__setattr__(self, "modes", tuple(dict.fromkeys(modes)))
        checks = _as_tuple(self.checks)
        if any(c not in CHECKS for c in checks):
            raise self.error("checks", f"checks must be drawn from {', '.join(CHECKS)}, got {self.checks}")
        object.__setattr__(self, "checks", tuple(dict.fromkeys(checks)))
        if "born" in checks and "worlds" not in modes:
            raise self.error("checks", "the born check compares worlds with the reference; add the worlds mode")
        if self.axes is not None:
            object.__setattr__(self, "axes", self._parse_axes(self.axes))
        if self.boundary is not None and self.boundary not in {b.value for b in Boundary}:
            raise self.error("boundary", f"boundary must be 'periodic' or 'box', got {self.boundary!r}")
        if not isinstance(self.params, dict):
            raise self.error("params", "params must be an object")
        if not isinstance(self.estimator, dict):
            raise self.error("estimator", "estimator must be an object")
        for key in ("worlds", "stride", "seed"):
            value = getattr(self, key)
            if isinstance(value, bool) or not isinstance(value, int) or value < (0 if key == "seed" else 1):
                raise self.error(key, f"{key} must be a {'non-negative' if key == 'seed' else 'positive'} integer")
        for key in ("dt", "time"):
            value = getattr(self, key)
            if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0):
                raise self.error(key, f"{key} must be a positive number, got {value!r}")
        if not isinstance(self.out, str) or not self.out:
            raise self.error("out", "out must name a directory")

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(message, self.lines.get(key))

    def _parse_axes(self, axes) -> tuple[tuple[float, float, int], ...]:
        if not isinstance(axes, (list, tuple)) or not axes:
            raise self.error("axes", "axes must be a non-empty list")
        parsed = []
        for axis in axes:
            try:
                if isinstance(axis, str):
                    parsed.append(parse_axis(axis))
                else:
                    lower, upper, points = axis
                    parsed.append((float(lower), float(upper), int(points)))
            except (TypeError, ValueError) as e:
                raise self.error("axes", f"invalid axis {axis!r}: {e}") from e
        return tuple(parsed)

    def estimator_spec(self) -> DensityEstimatorSpec:
        settings = dict(self.estimator)
        kind = settings.pop("kind", "gaussian_kernel")
        allowed = {"histogram": {"bins"}, "gaussian_kernel": {"bandwidth"}}.get(kind)
        if allowed is None:
            raise self.error("estimator", f"estimator kind must be 'gaussian_kernel' or 'histogram', got {kind!r}")
        if set(settings) - allowed:
            raise self.error("estimator", f"unknown estimator keys: {', '.join(sorted(set(settings) - allowed))}")
        try:
            if kind == "histogram":
                return DensityEstimatorSpec.histogram(settings.get("bins"))
            return DensityEstimatorSpec.gaussian_kernel(settings.get("bandwidth", "auto"))
        except (ParameterError, TypeError, ValueError) as e:
            raise self.error("estimator", str(e)) from e

    def build(self) -> Scenario:
        """The scenario this configuration describes, with the time step and duration overrides applied."""
        try:
            scenario = registry.build(self.scenario, self.axes, self.boundary, self.params)
        except ParameterError as e:
            raise self.error("params", str(e)) from e
        if self.dt is not None:
            scenario.dt = float(self.dt)
        if self.time is not None:
            scenario.duration = float(self.time)
        self.estimator_spec()
        return scenario


def _as_tuple(value) -> tuple:
    if isinstance(value, str):
        return tuple(v.strip() for v in value.split(",") if v.strip())
    return tuple(value)


def key_lines(text: str) -> dict[str, int]:
    """Line of the first occurrence of every object key in a JSON document."""
    lines = {}
    for match in key_re.finditer(text):
        lines.setdefault(match[1], text.count("\n", 0, match.start()) + 1)
    return lines


def apply_overrides(document: dict, overrides: dict[str, Any]) -> dict:
    """Merge dotted ``section.key`` overrides into a configuration document."""
    merged = {k: (dict(v) if isinstance(v, dict) else v) for k, v in document.items()}
    for dotted, value in overrides.items():
        if value is None:
            continue
        *path, key = dotted.split(".")
        target = merged
        for part in path:
            nested = target.setdefault(part, {})
            if not isinstance(nested, dict):
                raise ConfigError(f"cannot set '{dotted}': '{part}' is not an object")
            target = nested
        target[key] = value
    return merged


def parse_config(text: str, overrides: dict[str, Any] | None = None) -> ScenarioConfig:
    try:
        document = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", e.lineno) from e
    if not isinstance(document, dict):
        raise ConfigError("a configuration must be a JSON object", 1)
    lines = key_lines(text)
    fields = {f.name for f in dataclasses.fields(ScenarioConfig)} - {"lines"}
    document = apply_overrides(document, overrides or {})
    unknown = sorted(set(document) - fields)
    if unknown:
        raise ConfigError(f"unknown configuration key '{unknown[0]}'", lines.get(unknown[0]))
    if "scenario" not in document:
        raise ConfigError("a configuration must name a scenario")
    return ScenarioConfig(**document, lines=lines)


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> ScenarioConfig:
    """Read a configuration file (or none) and apply overrides."""
    if path is None:
        return parse_config("", overrides)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read configuration '{path}': {e.strerror}") from e
    return parse_config(text, overrides)
