"""Adversarial fine-tuning on code-mixed data.

Three regimes, all built on :func:`codemix.model.train`:

* ``cm_only``  - train on the code-mixed dataset alone
* ``two_step`` - train on the original data, then continue on the code-mixed data
* ``joint``    - train once on the union of both
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .corpus import Dataset
from .errors import ConfigError
from .model import PRESETS, ClassifierModel, TrainConfig, TrainHistory, train


class Strategy(str, enum.Enum):
    CM_ONLY = "cm_only"
    TWO_STEP = "two_step"
    JOINT = "joint"

    @classmethod
    def parse(cls, name: str) -> "Strategy":
        key = name.replace("-", "_").lower()
        for s in cls:
            if s.value == key:
                return s
        raise ConfigError(f"unknown strategy {name!r}; valid: cm-only, two-step, joint")


@dataclass(frozen=True)
class DefenseStrategy:
    kind: Strategy
    train_config: TrainConfig = PRESETS["adv"]


@dataclass
class DefenseResult:
    model: ClassifierModel
    histories: list[TrainHistory]


def _require_train(ds: Dataset, what: str) -> None:
    if not ds.train:
        raise ConfigError(f"{what} train split is empty")


def _check_compatible(original: Dataset, codemixed: Dataset) -> None:
    if tuple(original.labels) != tuple(codemixed.labels):
        raise ConfigError("original and code-mixed datasets have different label sets")


def tune_cm_only(initial: ClassifierModel | None, codemixed: Dataset,
                 config: TrainConfig = PRESETS["adv"], **train_kwargs) -> DefenseResult:
    _require_train(codemixed, "code-mixed")
    model, history = train(codemixed, config, init=initial, **train_kwargs)
    return DefenseResult(model, [history])


def tune_two_step(initial: ClassifierModel | None, original: Dataset, codemixed: Dataset,
                  config: TrainConfig = PRESETS["adv"], first_config: TrainConfig | None = None,
                  **train_kwargs) -> DefenseResult:
    """Train on ``original`` (with ``first_config``, default ``config``), then on ``codemixed``."""
    _require_train(original, "original")
    _require_train(codemixed, "code-mixed")
    _check_compatible(original, codemixed)
    base, h1 = train(original, first_config or config, init=initial, **train_kwargs)
    second = tune_cm_only(base, codemixed, config)
    return DefenseResult(second.model, [h1] + second.histories)


def joint_dataset(original: Dataset, codemixed: Dataset, seed: int) -> Dataset:
    """Union of both datasets' train and valid splits, shuffled by ``seed``."""
    _check_compatible(original, codemixed)
    rng = np.random.default_rng(int(seed) % (1 << 64))
    splits = {}
    for split in ("train", "valid"):
        merged = list(original.splits.get(split, ())) + list(codemixed.splits.get(split, ()))
        splits[split] = tuple(merged[i] for i in rng.permutation(len(merged)))
    splits["test"] = original.test
    return Dataset(f"{original.name}+{codemixed.name}", original.labels, splits)


def tune_joint(initial: ClassifierModel | None, original: Dataset, codemixed: Dataset,
               config: TrainConfig = PRESETS["adv"], **train_kwargs) -> DefenseResult:
    _require_train(original, "original")
    _require_train(codemixed, "code-mixed")
    combined = joint_dataset(original, codemixed, config.seed)
    model, history = train(combined, config, init=initial, **train_kwargs)
    return DefenseResult(model, [history])


def run_strategy(strategy: DefenseStrategy, initial: ClassifierModel | None, original: Dataset,
                 codemixed: Dataset, first_config: TrainConfig | None = None,
                 **train_kwargs) -> DefenseResult:
    cfg = strategy.train_config
    if strategy.kind is Strategy.CM_ONLY:
        return tune_cm_only(initial, codemixed, cfg, **train_kwargs)
    if strategy.kind is Strategy.TWO_STEP:
        return tune_two_step(initial, original, codemixed, cfg, first_config, **train_kwargs)
    return tune_joint(initial, original, codemixed, cfg, **train_kwargs)
