"""Run configuration: key=value manifest files and the resolved RunConfig."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .blend import AttackConfig
from .errors import ConfigError
from .model import TrainConfig

DEFAULT_SEEDS = (1, 2, 3)


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Keys use ``-`` or ``_``."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        values[key.replace("-", "_")] = value
    return values


def parse_seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise ConfigError("at least one seed is required")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"seeds must be distinct, got {text!r}")
    return seeds


def parse_ratios(text: str) -> tuple[float, ...]:
    try:
        ratios = tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"ratios must be comma-separated numbers, got {text!r}") from None
    if not ratios:
        raise ConfigError("ratio grid is empty")
    for r in ratios:
        if not 0 < r <= 1:
            raise ConfigError(f"perturbation ratio must be in (0, 1], got {r}")
    return ratios


def parse_languages(text: str) -> tuple[str, ...]:
    langs = tuple(dict.fromkeys(s.strip() for s in text.split(",") if s.strip()))
    if not langs:
        raise ConfigError("at least one embedded language is required")
    return langs


@dataclass
class RunConfig:
    data: Path
    out: Path
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    train: TrainConfig = field(default_factory=TrainConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    languages: tuple[str, ...] = ()
    lexicons: dict[str, Path] = field(default_factory=dict)
    model_dir: Path | None = None
    source_language: str = "id"
    translator: str = "lexicon"
    endpoint: str | None = None
    timeout: float = 10.0
    cache: Path | None = None
    n_features: int = 1 << 18
    hasher_seed: int = 0

    def __post_init__(self):
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be non-empty and distinct")
        if self.translator not in ("lexicon", "http"):
            raise ConfigError(f"translator must be 'lexicon' or 'http', got {self.translator!r}")
        if self.translator == "http" and not self.endpoint:
            raise ConfigError("--endpoint is required with --translator http")

    def seed_dir(self, seed: int, root: Path | None = None) -> Path:
        return (root or self.out) / f"seed-{seed}"

    def model_path(self, seed: int) -> Path:
        return self.seed_dir(seed, self.model_dir or self.out) / "model.json"
