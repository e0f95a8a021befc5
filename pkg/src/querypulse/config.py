"""Pipeline configuration: one file (TOML or JSON) drives every command.

The seed is mandatory; no stage ever falls back to wall-clock randomness.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .forest import HyperParams
from .synth import GeneratorConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

#: Grid used when the config does not narrow it down. Twelve points; a real
#: tuning run over this grid is minutes, not seconds, so example configs for
#: quick synthetic runs pin a single point instead.
DEFAULT_GRID: tuple[dict, ...] = tuple(
    {"n_trees": t, "max_depth": d, "min_samples_leaf": m}
    for t in (100, 300)
    for d in (8, 16, None)
    for m in (1, 5)
)


@dataclass
class PipelineConfig:
    seed: int
    events_path: str = "data/events.jsonl"
    labels_path: str = "data/labels.csv"
    lexicons_dir: str | None = None  # None -> packaged defaults
    workdir: str = "run"
    min_count: int = 100
    lm_order: int = 2
    lm_smoothing_k: float = 0.1
    test_fraction: float = 0.2
    interactions: list[list[str]] = field(
        default_factory=lambda: [["click_success_rate", "query_count"]]
    )
    head_pct: float = 0.05
    torso_pct: float = 0.50
    grid: list[dict] = field(default_factory=lambda: [dict(g) for g in DEFAULT_GRID])
    cv_folds: int = 5
    rfe_enabled: bool = False
    rfe_drop_fraction: float = 0.3
    rfe_min_features: int = 20
    target_precision: float = 0.85
    render_figures: bool = True
    generator: GeneratorConfig | None = None

    # -- loading -------------------------------------------------------------

    _SECTION_KEYS = {
        "paths": {"events", "labels", "lexicons", "workdir"},
        "ingest": {"min_count"},
        "lm": {"order", "smoothing_k"},
        "featurize": {"test_fraction", "interactions"},
        "segments": {"head_pct", "torso_pct"},
        "train": {"grid", "cv_folds", "rfe"},
        "eval": {"target_precision", "render_figures"},
    }

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineConfig":
        if "seed" not in obj:
            raise ConfigError("config must set an explicit seed")
        unknown = set(obj) - {"seed", "generator", *cls._SECTION_KEYS}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        for section, allowed in cls._SECTION_KEYS.items():
            extra = set(obj.get(section, {})) - allowed
            if extra:
                raise ConfigError(f"unknown keys in [{section}]: {sorted(extra)}")

        paths = obj.get("paths", {})
        train = obj.get("train", {})
        rfe = train.get("rfe", {})
        extra_rfe = set(rfe) - {"enabled", "drop_fraction", "min_features"}
        if extra_rfe:
            raise ConfigError(f"unknown keys in [train.rfe]: {sorted(extra_rfe)}")
        generator = None
        if "generator" in obj:
            gen = dict(obj["generator"])
            gen.setdefault("seed", obj["seed"])
            generator = GeneratorConfig.from_dict(gen)

        config = cls(
            seed=int(obj["seed"]),
            events_path=paths.get("events", cls.events_path),
            labels_path=paths.get("labels", cls.labels_path),
            lexicons_dir=paths.get("lexicons"),
            workdir=paths.get("workdir", cls.workdir),
            min_count=int(obj.get("ingest", {}).get("min_count", cls.min_count)),
            lm_order=int(obj.get("lm", {}).get("order", cls.lm_order)),
            lm_smoothing_k=float(
                obj.get("lm", {}).get("smoothing_k", cls.lm_smoothing_k)
            ),
            test_fraction=float(
                obj.get("featurize", {}).get("test_fraction", cls.test_fraction)
            ),
            interactions=[
                [str(a), str(b)]
                for a, b in obj.get("featurize", {}).get(
                    "interactions", [["click_success_rate", "query_count"]]
                )
            ],
            head_pct=float(obj.get("segments", {}).get("head_pct", cls.head_pct)),
            torso_pct=float(obj.get("segments", {}).get("torso_pct", cls.torso_pct)),
            grid=[dict(g) for g in train.get("grid", [dict(g) for g in DEFAULT_GRID])],
            cv_folds=int(train.get("cv_folds", cls.cv_folds)),
            rfe_enabled=bool(rfe.get("enabled", False)),
            rfe_drop_fraction=float(rfe.get("drop_fraction", cls.rfe_drop_fraction)),
            rfe_min_features=int(rfe.get("min_features", cls.rfe_min_features)),
            target_precision=float(
                obj.get("eval", {}).get("target_precision", cls.target_precision)
            ),
            render_figures=bool(obj.get("eval", {}).get("render_figures", True)),
            generator=generator,
        )
        config.validate()
        return config

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        raw = path.read_bytes()
        if path.suffix.lower() == ".toml":
            try:
                obj = tomllib.loads(raw.decode("utf-8"))
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"bad TOML in {path}: {exc}") from exc
        else:
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"bad JSON in {path}: {exc}") from exc
        if not isinstance(obj, dict):
            raise ConfigError(f"config root in {path} must be a table/object")
        return cls.from_dict(_null_to_none(obj))

    # -- validation and identity ----------------------------------------------

    def validate(self) -> None:
        if self.min_count < 1:
            raise ConfigError("ingest.min_count must be >= 1")
        if not (0.0 < self.test_fraction < 1.0):
            raise ConfigError("featurize.test_fraction must be in (0, 1)")
        if not (0.0 < self.head_pct < self.torso_pct < 1.0):
            raise ConfigError("segments need 0 < head_pct < torso_pct < 1")
        if self.cv_folds < 2:
            raise ConfigError("train.cv_folds must be >= 2")
        if not self.grid:
            raise ConfigError("train.grid must be non-empty")
        for point in self.grid:
            HyperParams.from_dict(point)  # raises ConfigError on bad values
        if not (0.0 < self.rfe_drop_fraction < 1.0):
            raise ConfigError("train.rfe.drop_fraction must be in (0, 1)")
        if self.rfe_min_features < 1:
            raise ConfigError("train.rfe.min_features must be >= 1")
        if not (0.0 < self.target_precision <= 1.0):
            raise ConfigError("eval.target_precision must be in (0, 1]")

    def hyper_grid(self) -> list[HyperParams]:
        return [HyperParams.from_dict(point) for point in self.grid]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "paths": {
                "events": self.events_path,
                "labels": self.labels_path,
                "lexicons": self.lexicons_dir,
                "workdir": self.workdir,
            },
            "ingest": {"min_count": self.min_count},
            "lm": {"order": self.lm_order, "smoothing_k": self.lm_smoothing_k},
            "featurize": {
                "test_fraction": self.test_fraction,
                "interactions": self.interactions,
            },
            "segments": {"head_pct": self.head_pct, "torso_pct": self.torso_pct},
            "train": {
                "grid": self.grid,
                "cv_folds": self.cv_folds,
                "rfe": {
                    "enabled": self.rfe_enabled,
                    "drop_fraction": self.rfe_drop_fraction,
                    "min_features": self.rfe_min_features,
                },
            },
            "eval": {
                "target_precision": self.target_precision,
                "render_figures": self.render_figures,
            },
            "generator": None if self.generator is None else self.generator.to_dict(),
        }

    def content_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def _null_to_none(obj):
    """TOML has no null; the string 'none' stands in for it."""
    if isinstance(obj, dict):
        return {k: _null_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_null_to_none(v) for v in obj]
    if isinstance(obj, str) and obj.lower() == "none":
        return None
    return obj
