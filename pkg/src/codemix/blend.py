"""Code-mixed adversarial example generation.

Words are ranked by how much masking them moves the model's scores, the
top fraction is swapped for embedded-language translations, and a repair
loop backs off substitutions until the code-mixed sentence stays close
enough to the original.
"""

from __future__ import annotations

import enum
import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import LabeledExample, Lexicon, Sentence
from .errors import ConfigError, NumericalError
from .model import MASK_TOKEN, Scorer, mask_at, score_batch

VARIANTS = ("paper", "textfooler")


class Status(str, enum.Enum):
    PERTURBED = "perturbed"
    PASSTHROUGH_MISCLASSIFIED = "passthrough_misclassified"
    NO_TRANSLATABLE_WORDS = "no_translatable_words"
    SIMILARITY_FALLBACK = "similarity_fallback"


@dataclass(frozen=True)
class AttackConfig:
    perturb_ratio: float = 0.4
    similarity_threshold: float = 0.8
    target_language: str = "en"
    importance_variant: str = "paper"
    seed: int = 0
    mask_mode: str = "mask"

    def __post_init__(self):
        if not (0 < self.perturb_ratio <= 1):
            raise ConfigError(f"perturb ratio must be in (0, 1], got {self.perturb_ratio}")
        if not (0 <= self.similarity_threshold <= 1):
            raise ConfigError(f"similarity threshold must be in [0, 1], got {self.similarity_threshold}")
        if self.importance_variant not in VARIANTS:
            raise ConfigError(f"importance variant must be one of {VARIANTS}, got {self.importance_variant!r}")
        if self.mask_mode not in ("mask", "delete"):
            raise ConfigError(f"mask mode must be 'mask' or 'delete', got {self.mask_mode!r}")


@dataclass(frozen=True)
class ImportanceScore:
    position: int
    word: str
    score: float
    case: str  # "stable" or "shifted"


@dataclass(frozen=True)
class Perturbation:
    position: int
    original: str
    replacement: str
    rank: int

    def to_dict(self) -> dict:
        return {"position": self.position, "original": self.original,
                "replacement": self.replacement, "rank": self.rank}


@dataclass(frozen=True)
class AttackOutcome:
    original: LabeledExample
    adversarial: Sentence
    perturbations: tuple[Perturbation, ...]
    similarity: float
    status: Status
    selected: tuple[int, ...] = ()
    resample_steps: int = 0

    def to_record(self, index: int) -> dict:
        return {
            "index": index,
            "status": self.status.value,
            "similarity": self.similarity,
            "perturbations": [p.to_dict() for p in self.perturbations],
        }


def _check_scores(scores: np.ndarray, n_labels: int) -> None:
    if scores.ndim != 2 or scores.shape[1] != n_labels:
        raise NumericalError(f"scorer returned shape {scores.shape}, expected (*, {n_labels})")
    if not np.isfinite(scores).all() or (scores < 0).any() or (scores > 1).any():
        raise NumericalError("scorer returned values outside [0, 1]")
    if (np.abs(scores.sum(axis=1) - 1.0) > 1e-9).any():
        raise NumericalError("scorer probabilities do not sum to 1")


def _importance(base: np.ndarray, masked: np.ndarray, y: int, variant: str) -> tuple[float, str]:
    s, s_masked = base[y], masked[y]
    if int(np.argmax(base)) == y and int(np.argmax(masked)) == y:
        return float(s - s_masked), "stable"
    others = masked.copy()
    others[y] = -np.inf
    y_bar = int(np.argmax(others))
    if variant == "paper":
        extra = base[y_bar] - masked[y_bar]
    else:
        extra = masked[y_bar] - base[y_bar]
    return float((s - s_masked) + extra), "shifted"


def _mask_token(scorer) -> str:
    return getattr(scorer, "mask_token", MASK_TOKEN)


def _label_index(scorer: Scorer, label: str) -> int:
    try:
        return scorer.labels.index(label)
    except ValueError:
        raise ConfigError(f"label {label!r} not in scorer labels {scorer.labels}") from None


def word_importance(scorer: Scorer, sentence: Sentence, label: str, position: int,
                    variant: str = "paper", mask_mode: str = "mask") -> ImportanceScore:
    """Importance of the word at ``position`` for predicting ``label``."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown importance variant {variant!r}")
    masked = mask_at(sentence, position, _mask_token(scorer), mask_mode)
    scores = score_batch(scorer, [sentence, masked])
    _check_scores(scores, len(scorer.labels))
    value, case = _importance(scores[0], scores[1], _label_index(scorer, label), variant)
    return ImportanceScore(position, sentence.tokens[position], value, case)


def rank_words(scorer: Scorer, sentence: Sentence, label: str, variant: str = "paper",
               mask_mode: str = "mask") -> list[ImportanceScore]:
    """Score every position and sort by descending importance (ties: lower position first)."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown importance variant {variant!r}")
    token = _mask_token(scorer)
    variants = [sentence] + [mask_at(sentence, i, token, mask_mode) for i in range(len(sentence))]
    scores = score_batch(scorer, variants)
    _check_scores(scores, len(scorer.labels))
    y = _label_index(scorer, label)
    ranked = []
    for i, word in enumerate(sentence.tokens):
        value, case = _importance(scores[0], scores[i + 1], y, variant)
        ranked.append(ImportanceScore(i, word, value, case))
    ranked.sort(key=lambda r: (-r.score, r.position))
    return ranked


def perturbation_budget(ratio: float, length: int) -> int:
    return max(1, math.ceil(ratio * length))


def select_perturbation_set(ranked: Sequence[ImportanceScore], ratio: float,
                            lexicon: Lexicon) -> list[int]:
    """Positions to translate: the first ``max(1, ceil(R*M))`` ranked words that
    have a lexicon translation different from themselves."""
    k = perturbation_budget(ratio, len(ranked))
    chosen = []
    for item in ranked:
        if len(chosen) == k:
            break
        candidates = lexicon.lookup(item.word)
        if not candidates or candidates[0] == item.word.lower():
            continue
        chosen.append(item.position)
    return chosen


def translate_word(lexicon: Lexicon, word: str, candidate_rank: int = 1) -> str | None:
    if candidate_rank < 1:
        raise ValueError(f"candidate rank starts at 1, got {candidate_rank}")
    candidates = lexicon.lookup(word)
    if candidate_rank > len(candidates):
        return None
    return candidates[candidate_rank - 1].lower()


def _trigrams(sentence: Sentence) -> Counter:
    text = "^" + " ".join(sentence.tokens).lower() + "$"
    return Counter(text[i:i + 3] for i in range(len(text) - 2))


def sentence_similarity(a: Sentence, b: Sentence) -> float:
    """Cosine similarity of character-trigram counts over ``^text$``."""
    if a.tokens == b.tokens:
        return 1.0
    ca, cb = _trigrams(a), _trigrams(b)
    dot = sum(n * cb[g] for g, n in ca.items() if g in cb)
    if dot == 0:
        return 0.0
    norm = math.sqrt(sum(n * n for n in ca.values())) * math.sqrt(sum(n * n for n in cb.values()))
    return min(1.0, dot / norm)


@dataclass
class _Slot:
    position: int
    original: str
    candidates: tuple[str, ...]
    rank: int = 1


def _next_rank(slot: _Slot) -> int:
    """Next usable candidate rank after the current one, skipping identity translations."""
    r = slot.rank + 1
    while r <= len(slot.candidates) and slot.candidates[r - 1] == slot.original.lower():
        r += 1
    return r


def _apply(sentence: Sentence, slots: Sequence[_Slot]) -> Sentence:
    tokens = list(sentence.tokens)
    for slot in slots:
        tokens[slot.position] = slot.candidates[slot.rank - 1]
    return Sentence(tuple(tokens), " ".join(tokens))


def generate_codemixed(scorer: Scorer, sentence: Sentence, label: str, config: AttackConfig,
                       lexicon: Lexicon, ranked: Sequence[ImportanceScore] | None = None) -> AttackOutcome:
    """Build one code-mixed adversarial sentence.

    Misclassified inputs are returned untouched. Otherwise the selected
    words get their rank-1 translations; while the similarity to the input
    is below the threshold, the least important perturbed word moves to its
    next candidate, and is reverted once its candidates run out.
    """
    if lexicon.target_language != config.target_language:
        raise ConfigError(f"lexicon targets {lexicon.target_language!r} but attack targets "
                          f"{config.target_language!r}")
    example = LabeledExample(sentence, label)
    scores = score_batch(scorer, [sentence])
    _check_scores(scores, len(scorer.labels))
    if int(np.argmax(scores[0])) != _label_index(scorer, label):
        return AttackOutcome(example, sentence, (), 1.0, Status.PASSTHROUGH_MISCLASSIFIED)

    if ranked is None:
        ranked = rank_words(scorer, sentence, label, config.importance_variant, config.mask_mode)
    positions = select_perturbation_set(ranked, config.perturb_ratio, lexicon)
    if not positions:
        return AttackOutcome(example, sentence, (), 1.0, Status.NO_TRANSLATABLE_WORDS)

    # positions are in descending importance, so the last slot is the least important
    slots = [_Slot(p, sentence.tokens[p], lexicon.lookup(sentence.tokens[p])) for p in positions]
    adversarial = _apply(sentence, slots)
    similarity = sentence_similarity(sentence, adversarial)
    steps = 0
    while similarity < config.similarity_threshold and slots:
        steps += 1
        slot = slots[-1]
        slot.rank = _next_rank(slot)
        if slot.rank > len(slot.candidates):
            slots.pop()
        adversarial = _apply(sentence, slots)
        similarity = sentence_similarity(sentence, adversarial)

    selected = tuple(positions)
    if not slots:
        return AttackOutcome(example, sentence, (), 1.0, Status.SIMILARITY_FALLBACK, selected, steps)
    perturbations = tuple(
        Perturbation(s.position, s.original, s.candidates[s.rank - 1], s.rank)
        for s in sorted(slots, key=lambda s: s.position))
    return AttackOutcome(example, adversarial, perturbations, similarity, Status.PERTURBED, selected, steps)


def generate_dataset(scorer: Scorer, examples: Sequence[LabeledExample], config: AttackConfig,
                     lexicon: Lexicon) -> tuple[list[LabeledExample], list[AttackOutcome]]:
    """Attack every example in order; gold labels are kept."""
    outcomes = [generate_codemixed(scorer, ex.sentence, ex.label, config, lexicon) for ex in examples]
    attacked = [LabeledExample(o.adversarial, ex.label) for ex, o in zip(examples, outcomes)]
    return attacked, outcomes


def codemix_dataset(scorer: Scorer, dataset, config: AttackConfig, lexicon: Lexicon,
                    splits: Sequence[str] = ("train", "valid", "test")):
    """Code-mixed copy of ``dataset`` with the named splits attacked."""
    attacked = {}
    for split in splits:
        attacked[split], _ = generate_dataset(scorer, dataset.splits.get(split, ()), config, lexicon)
    return dataset.with_splits(name=f"{dataset.name}-cm-{config.target_language}", **attacked)


def outcomes_to_jsonl(outcomes: Sequence[AttackOutcome]) -> str:
    return "".join(json.dumps(o.to_record(i), ensure_ascii=False, separators=(",", ":")) + "\n"
                   for i, o in enumerate(outcomes))


def write_outcomes(path, outcomes: Sequence[AttackOutcome]) -> None:
    Path(path).write_text(outcomes_to_jsonl(outcomes), encoding="utf-8", newline="\n")


def read_outcome_records(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
