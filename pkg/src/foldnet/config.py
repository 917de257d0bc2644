"""Experiment configuration: dataclasses, profiles and strict JSON loading."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .network import TrainSchedule


class ConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    kind: str = "poker"  # poker | egg | uci
    n_samples: int = 1_000_000
    mode: str = "uniform_ordered"  # poker sampling mode
    path: str | None = None  # uci file
    standardize: bool = True
    eval_split: float | None = None  # fraction held out for analysis; None analyses the training set
    seed_offset: int = 1000  # data seed = run seed + offset
    egg_dim: int = 2

    def validate(self) -> None:
        if self.kind not in ("poker", "egg", "uci"):
            raise ConfigError(f"dataset.kind: unknown dataset {self.kind!r}")
        if self.kind == "uci" and not self.path:
            raise ConfigError("dataset.path: required for kind 'uci'")
        if self.kind != "uci" and self.n_samples < 2:
            raise ConfigError("dataset.n_samples: need at least 2 samples")
        if self.mode not in ("uniform_ordered", "exhaustive_combinations"):
            raise ConfigError(f"dataset.mode: unknown sampling mode {self.mode!r}")
        if self.eval_split is not None and not 0 < self.eval_split < 1:
            raise ConfigError("dataset.eval_split: must lie in (0, 1)")


@dataclass
class TrainConfig:
    phases: list[tuple[float, int]] = field(default_factory=lambda: [(0.1, 50), (0.01, 50)])
    momentum: float = 0.9
    batch_size: int = 500

    def schedule(self, shuffle_seed: int) -> TrainSchedule:
        return TrainSchedule([tuple(p) for p in self.phases], self.momentum, self.batch_size, shuffle_seed)

    def validate(self) -> None:
        try:
            self.schedule(0)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"train: {exc}") from exc


@dataclass
class AnalysisConfig:
    eps_rel: float = 1e-6
    bins: int = 61
    k: int = 10
    classes: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4, 6, 7])
    excluded: list[int] = field(default_factory=lambda: [5, 8, 9])
    surrogate_seeds: list[int] = field(default_factory=lambda: [0])
    max_per_class: int = 50_000
    angle_space: str = "preactivation"
    chunk: int = 50_000

    def validate(self) -> None:
        if not 0 < self.eps_rel < 1:
            raise ConfigError("analysis.eps_rel: must lie in (0, 1)")
        if self.bins < 2:
            raise ConfigError("analysis.bins: need at least 2 bins")
        if self.k < 0:
            raise ConfigError("analysis.k: must be >= 0")
        if not self.classes:
            raise ConfigError("analysis.classes: need at least one class")
        if self.angle_space not in ("preactivation", "input"):
            raise ConfigError(f"analysis.angle_space: unknown space {self.angle_space!r}")
        if self.max_per_class < 2 or self.chunk < 1:
            raise ConfigError("analysis: max_per_class >= 2 and chunk >= 1 required")


@dataclass
class ExperimentConfig:
    name: str = "poker"
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    widths: list[int] = field(default_factory=lambda: [10, 100, 100, 10])
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    out_dir: str = "runs/poker"

    def validate(self) -> "ExperimentConfig":
        if not self.seeds:
            raise ConfigError("seeds: need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds: duplicate seeds")
        if len(self.widths) < 2 or any(w < 1 for w in self.widths):
            raise ConfigError("widths: need input and output widths >= 1")
        self.dataset.validate()
        self.train.validate()
        self.analysis.validate()
        n_classes = self.widths[-1]
        bad = [c for c in self.analysis.classes if not 0 <= c < n_classes]
        if bad:
            raise ConfigError(f"analysis.classes: {bad} outside 0..{n_classes - 1}")
        for w in self.widths[1:-1]:
            if 2 * self.analysis.k > w:
                raise ConfigError(f"analysis.k: 2k={2 * self.analysis.k} exceeds hidden width {w}")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["train"]["phases"] = [list(p) for p in self.train.phases]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def paper_profile() -> ExperimentConfig:
    return ExperimentConfig()


def desk_profile() -> ExperimentConfig:
    cfg = ExperimentConfig(name="poker-desk", seeds=[0, 1, 2], out_dir="runs/poker-desk")
    cfg.dataset.n_samples = 200_000
    cfg.train.phases = [(0.1, 15), (0.01, 15)]
    return cfg


PROFILES = {"paper": paper_profile, "desk": desk_profile}


def _build(cls, obj: Any, where: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where or 'config'}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(obj) - set(known))
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown keys {unknown}")
    kwargs = {}
    for key, value in obj.items():
        sub = {"dataset": DatasetConfig, "train": TrainConfig, "analysis": AnalysisConfig}.get(key) if cls is ExperimentConfig else None
        kwargs[key] = _build(sub, value, key) if sub else value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def config_from_dict(obj: Any, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Build a config; keys absent from ``obj`` take the value from ``base`` (default: paper profile)."""
    merged = (base or paper_profile()).to_dict()
    if not isinstance(obj, dict):
        raise ConfigError("config: expected an object")
    for key, value in obj.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            unknown = sorted(set(value) - set(merged[key]))
            if unknown:
                raise ConfigError(f"{key}: unknown keys {unknown}")
            merged[key].update(value)
        else:
            merged[key] = value
    cfg = _build(ExperimentConfig, merged, "")
    cfg.train.phases = [tuple(p) for p in cfg.train.phases]
    return cfg.validate()


def load_config(path: str | os.PathLike, profile: str | None = None) -> ExperimentConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    base = PROFILES[profile]() if profile else None
    return config_from_dict(obj, base)


def resolve_config(path: str | os.PathLike | None = None, profile: str | None = None) -> ExperimentConfig:
    if path is not None:
        return load_config(path, profile)
    if profile is not None and profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    return PROFILES[profile or "paper"]().validate()
