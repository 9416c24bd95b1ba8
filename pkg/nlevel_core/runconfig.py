"""Run configuration: a YAML file resolved into a frozen ``RunConfig``.

Indices in config files are 1-based, like every report; ``RunConfig``
stores them 0-based.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from config import SETTINGS

from .errors import ConfigError
from .geometry import Region
from .models import (
    GeneratorModel,
    TANH_STRIP,
    channel_potential,
    constant_model,
    custom_model,
    three_level_adiabatic,
    two_channel_schrodinger,
    two_level_avoided,
)

log = logging.getLogger(__name__)

TASKS = ("validate", "smatrix", "sweep", "degeneracies", "loops", "predict", "compare", "superasym", "symmetry")
FAMILIES = ("two_level_avoided", "three_level_adiabatic", "two_channel_schrodinger", "constant", "custom")

REQUIRED = {
    "smatrix": ("epsilon",),
    "sweep": ("epsilon", "index"),
    "compare": ("epsilon", "index"),
    "predict": ("index",),
    "superasym": ("epsilon", "index"),
    "symmetry": ("epsilon",),
}


@dataclass(frozen=True)
class ModelSpec:
    family: str
    params: Mapping[str, Any] = field(default_factory=dict)
    entries: tuple[tuple[str, ...], ...] = ()
    strip_alpha: float = TANH_STRIP
    decay_a: float = 1.0
    metric_J: tuple[tuple[float, ...], ...] | None = None

    def build(self) -> GeneratorModel:
        p = dict(self.params)
        try:
            if self.family == "two_level_avoided":
                return two_level_avoided(float(p["delta"]))
            if self.family == "three_level_adiabatic":
                return three_level_adiabatic(float(p["delta"]))
            if self.family == "two_channel_schrodinger":
                V, dV = channel_potential(float(p.get("scale", 0.3)), complex(p.get("coupling", 0.1)),
                                          float(p.get("twist", 0.0)))
                return two_channel_schrodinger(float(p["energy"]), V, dV)
            if self.family == "constant":
                return constant_model(np.array(p["matrix"], dtype=complex))
            if self.family == "custom":
                J = None if self.metric_J is None else np.array(self.metric_J, dtype=complex)
                return custom_model(self.entries, p, strip_alpha=self.strip_alpha, decay_a=self.decay_a,
                                    metric_J=J)
        except KeyError as exc:
            raise ConfigError(f"model family {self.family!r} needs parameter {exc.args[0]!r}",
                              field=f"model.params.{exc.args[0]}") from exc
        raise ConfigError(f"unknown model family {self.family!r}", field="model.family")


@dataclass(frozen=True)
class RunConfig:
    task: str
    model: ModelSpec
    epsilons: tuple[float, ...] = ()
    index: int | None = None
    other_index: int | None = None
    ode_tol: float = SETTINGS.ODE_TOL
    threads: int = SETTINGS.THREADS
    region: Region | None = None
    grid_step: float = 0.05
    q_max: int = 12
    half_line: float | None = None
    out_dir: str = "results"
    source: str | None = None

    def with_overrides(self, epsilons=None, threads=None, out_dir=None) -> "RunConfig":
        changes: dict[str, Any] = {}
        if epsilons:
            changes["epsilons"] = _epsilons(list(epsilons), None)
        if threads:
            changes["threads"] = int(threads)
        if out_dir:
            changes["out_dir"] = str(out_dir)
        return replace(self, **changes) if changes else self

    def resolved(self) -> dict:
        """Plain-data form embedded in every report."""
        d = asdict(self)
        d["index"] = None if self.index is None else self.index + 1
        d["other_index"] = None if self.other_index is None else self.other_index + 1
        d["epsilons"] = list(self.epsilons)
        d.pop("source")
        return d


# ===== parsing =====
def _key_lines(text: str) -> dict[str, int]:
    """1-based line of every top-level key (and of ``model.*`` keys)."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    lines: dict[str, int] = {}
    if isinstance(root, yaml.MappingNode):
        for k, v in root.value:
            lines[str(k.value)] = k.start_mark.line + 1
            if isinstance(v, yaml.MappingNode):
                for kk, _ in v.value:
                    lines[f"{k.value}.{kk.value}"] = kk.start_mark.line + 1
    return lines


def _epsilons(raw, line) -> tuple[float, ...]:
    values = raw if isinstance(raw, (list, tuple)) else [raw]
    try:
        eps = tuple(float(e) for e in values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"epsilon values must be numbers, got {raw!r}", field="epsilon", line=line) from exc
    if not eps:
        raise ConfigError("epsilon list is empty", field="epsilon", line=line)
    if any(not e > 0 for e in eps):
        raise ConfigError(f"epsilon values must be positive, got {list(eps)}", field="epsilon", line=line)
    return eps


def _index(raw, name: str, line) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int) or raw < 1:
        raise ConfigError(f"{name} must be a positive 1-based integer, got {raw!r}", field=name, line=line)
    return raw - 1


def _model(raw, lines) -> ModelSpec:
    if not isinstance(raw, Mapping):
        raise ConfigError("model must be a mapping", field="model", line=lines.get("model"))
    family = raw.get("family")
    if family not in FAMILIES:
        raise ConfigError(f"model.family must be one of {', '.join(FAMILIES)}; got {family!r}",
                          field="model.family", line=lines.get("model.family", lines.get("model")))
    params = raw.get("params") or {}
    if not isinstance(params, Mapping):
        raise ConfigError("model.params must be a mapping", field="model.params", line=lines.get("model.params"))
    entries = raw.get("entries") or ()
    if family == "custom" and not entries:
        raise ConfigError("custom models need model.entries", field="model.entries", line=lines.get("model"))
    metric = raw.get("metric_J")
    return ModelSpec(
        family=family,
        params=dict(params),
        entries=tuple(tuple(str(e) for e in row) for row in entries),
        strip_alpha=float(raw.get("strip_alpha", TANH_STRIP)),
        decay_a=float(raw.get("decay_a", 1.0)),
        metric_J=None if metric is None else tuple(tuple(float(x) for x in row) for row in metric),
    )


def _region(raw, line) -> Region | None:
    if raw is None:
        return None
    try:
        (r0, r1), (i0, i1) = raw["re"], raw["im"]
        return Region(float(r0), float(r1), float(i0), float(i1))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("region needs re: [min, max] and im: [min, max]", field="region", line=line) from exc


def parse_config(text: str, source: str | None = None, task: str | None = None) -> RunConfig:
    """Parse YAML text; ``task`` (the CLI subcommand) overrides the file's own task field."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        col = f", column {mark.column + 1}" if mark is not None else ""
        raise ConfigError(f"YAML syntax error{col}: {getattr(exc, 'problem', exc)}", line=line) from exc
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a mapping at the top level")
    lines = _key_lines(text)

    task = task or data.get("task")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {', '.join(TASKS)}; got {task!r}", field="task",
                          line=lines.get("task"))
    for name in REQUIRED.get(task, ()):
        if data.get(name) is None:
            raise ConfigError(f"task {task!r} needs the field {name!r}", field=name)
    if "model" not in data:
        raise ConfigError("missing required field 'model'", field="model")

    out = data.get("output") or {}
    cfg = RunConfig(
        task=task,
        model=_model(data["model"], lines),
        epsilons=_epsilons(data["epsilon"], lines.get("epsilon")) if data.get("epsilon") is not None else (),
        index=_index(data["index"], "index", lines.get("index")) if data.get("index") is not None else None,
        other_index=(_index(data["other_index"], "other_index", lines.get("other_index"))
                     if data.get("other_index") is not None else None),
        ode_tol=float(data.get("ode_tol", SETTINGS.ODE_TOL)),
        threads=int(data.get("threads", SETTINGS.THREADS)),
        region=_region(data.get("region"), lines.get("region")),
        grid_step=float(data.get("grid_step", 0.05)),
        q_max=int(data.get("q_max", 12)),
        half_line=None if data.get("half_line") is None else float(data["half_line"]),
        out_dir=str(out.get("dir", "results")) if isinstance(out, Mapping) else str(out),
        source=source,
    )
    if not cfg.ode_tol > 0:
        raise ConfigError("ode_tol must be positive", field="ode_tol", line=lines.get("ode_tol"))
    log.debug("parsed %s config for %s", cfg.task, cfg.model.family)
    return cfg


def load_config(path: str | Path, task: str | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, source=str(path), task=task)


__all__ = ["TASKS", "FAMILIES", "ModelSpec", "RunConfig", "parse_config", "load_config"]
