"""Accuracy, delta accuracy, robustness reports, ratio sweeps and IF/DF analysis."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .blend import AttackConfig, AttackOutcome, generate_dataset
from .corpus import LabeledExample, Lexicon
from .errors import ConfigError
from .model import Scorer, score_batch


def accuracy(scorer: Scorer, examples: Sequence[LabeledExample]) -> float:
    """Percentage of examples whose argmax label equals the gold label."""
    if not examples:
        raise ConfigError("cannot compute accuracy on an empty split")
    scores = score_batch(scorer, [ex.sentence for ex in examples])
    pred = np.argmax(scores, axis=1)
    gold = np.array([scorer.labels.index(ex.label) for ex in examples])
    return 100.0 * int((pred == gold).sum()) / len(examples)


def delta_accuracy(acc_orig: float, acc_cm: float) -> float:
    return acc_orig - acc_cm


def _mean(values: Sequence[float]) -> float:
    # fsum is correctly rounded, so the mean does not depend on seed order
    return math.fsum(values) / len(values) if values else float("nan")


def _spread(values: Sequence[float]) -> float:
    return statistics.pstdev(sorted(values)) if len(values) > 1 else 0.0


@dataclass(frozen=True)
class LanguageEntry:
    language: str
    cm_accuracy: float
    delta: float
    cm_accuracy_std: float = 0.0
    delta_std: float = 0.0


@dataclass(frozen=True)
class RobustnessReport:
    model_id: str
    task_id: str
    ratio: float
    alpha: float
    seeds: tuple[int, ...]
    original_accuracy: float
    entries: tuple[LanguageEntry, ...]
    original_accuracy_std: float = 0.0

    @property
    def average_delta(self) -> float:
        return _mean([e.delta for e in self.entries])

    def entry(self, language: str) -> LanguageEntry:
        for e in self.entries:
            if e.language == language:
                return e
        raise KeyError(language)

    def to_dict(self) -> dict:
        return {
            "model": self.model_id,
            "task": self.task_id,
            "R": self.ratio,
            "alpha": self.alpha,
            "seeds": list(self.seeds),
            "orig_acc": self.original_accuracy,
            "orig_acc_std": self.original_accuracy_std,
            "languages": [
                {"lang": e.language, "cm_acc": e.cm_accuracy, "delta": e.delta,
                 "cm_acc_std": e.cm_accuracy_std, "delta_std": e.delta_std}
                for e in self.entries
            ],
            "avg_delta": self.average_delta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def format_table(self) -> str:
        langs = [e.language for e in self.entries]
        head = "Model".ljust(16) + "Orig.".rjust(8) + "".join(l.rjust(8) for l in langs) + "avg".rjust(8)
        row = (self.model_id[:16].ljust(16) + f"{self.original_accuracy:8.2f}"
               + "".join(f"{e.delta:8.2f}" for e in self.entries) + f"{self.average_delta:8.2f}")
        return head + "\n" + row


def report_from_accuracies(model_id: str, task_id: str, ratio: float, alpha: float,
                           seeds: Sequence[int], original: Sequence[float],
                           codemixed: Mapping[str, Sequence[float]]) -> RobustnessReport:
    """Build a report from per-seed accuracies.

    The stored delta is exactly ``orig_acc - cm_acc`` of the stored means
    (the mean of per-seed deltas, up to float rounding); its spread is taken
    over the per-seed deltas.
    """
    if not seeds or len(original) != len(seeds):
        raise ConfigError("need one original accuracy per seed")
    entries = []
    for lang, cm in codemixed.items():
        if len(cm) != len(seeds):
            raise ConfigError(f"language {lang!r}: need one code-mixed accuracy per seed")
        deltas = [delta_accuracy(o, c) for o, c in zip(original, cm)]
        cm_mean = _mean(cm)
        orig_mean = _mean(original)
        entries.append(LanguageEntry(lang, cm_mean, delta_accuracy(orig_mean, cm_mean),
                                     _spread(cm), _spread(deltas)))
    return RobustnessReport(model_id, task_id, ratio, alpha, tuple(seeds), _mean(original),
                            tuple(entries), _spread(original))


@dataclass
class SeedRun:
    """One seed's model plus its attacked copies of the test split, per language."""

    seed: int
    scorer: Scorer
    attacked: Mapping[str, Sequence[LabeledExample]]


def robustness_report(runs: Sequence[SeedRun], test: Sequence[LabeledExample], *,
                      model_id: str = "model", task_id: str = "task", ratio: float = 0.4,
                      alpha: float = 0.8) -> RobustnessReport:
    if not runs:
        raise ConfigError("robustness report needs at least one run")
    languages = list(runs[0].attacked)
    original, codemixed = [], {lang: [] for lang in languages}
    for run in runs:
        if list(run.attacked) != languages:
            raise ConfigError("every seed must cover the same languages")
        original.append(accuracy(run.scorer, test))
        for lang, split in run.attacked.items():
            if len(split) != len(test):
                raise ConfigError(f"attacked split for {lang!r} has {len(split)} examples, test has {len(test)}")
            codemixed[lang].append(accuracy(run.scorer, split))
    return report_from_accuracies(model_id, task_id, ratio, alpha, [r.seed for r in runs],
                                  original, codemixed)


def language_averages(reports: Iterable[RobustnessReport]) -> dict[str, float]:
    """Mean delta per language across models (the bottom "Avg" row of a delta table)."""
    per_lang: dict[str, list[float]] = {}
    for rep in reports:
        for e in rep.entries:
            per_lang.setdefault(e.language, []).append(e.delta)
    return {lang: _mean(v) for lang, v in per_lang.items()}


# ---------------------------------------------------------------------------
# perturbation-ratio sweep


@dataclass
class SweepResult:
    rows: list[tuple[float, float]]
    outcomes: dict[tuple[float, int], list[AttackOutcome]] = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("R,accuracy\n")
        for r, acc in self.rows:
            buf.write(f"{r:g},{acc:.4f}\n")
        return buf.getvalue()


def ratio_sweep(scorers: Mapping[int, Scorer], test: Sequence[LabeledExample], lexicon: Lexicon,
                alpha: float, language: str, ratios: Sequence[float],
                variant: str = "paper") -> SweepResult:
    """Code-mixed accuracy (mean over seeds) for every perturbation ratio."""
    if not ratios:
        raise ConfigError("ratio grid is empty")
    if not scorers:
        raise ConfigError("ratio sweep needs at least one scorer")
    result = SweepResult([])
    for r in ratios:
        accs = []
        for seed, scorer in scorers.items():
            cfg = AttackConfig(r, alpha, language, variant, seed)
            attacked, outcomes = generate_dataset(scorer, test, cfg, lexicon)
            accs.append(accuracy(scorer, attacked))
            result.outcomes[(r, seed)] = outcomes
        result.rows.append((r, _mean(accs)))
    return result


# ---------------------------------------------------------------------------
# informative frequency


@dataclass(frozen=True)
class IfdfRecord:
    word: str
    informative_frequency: int
    document_frequency: int
    translations: Mapping[str, str | None] = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.informative_frequency / self.document_frequency


def ifdf_counts(contexts: Iterable[Sequence[AttackOutcome]]) -> tuple[Counter, Counter]:
    """Tally IF and DF over attack runs.

    Every outcome of every run is one context. A word counts once per
    context for DF if it occurs there, and once for IF if any of its
    occurrences was selected for perturbation.
    """
    informative, document = Counter(), Counter()
    for outcomes in contexts:
        for outcome in outcomes:
            tokens = outcome.original.sentence.tokens
            document.update(set(tokens))
            informative.update({tokens[p] for p in outcome.selected})
    return informative, document


def ifdf_analysis(contexts: Iterable[Sequence[AttackOutcome]], top_k: int | None = 20,
                  lexicons: Mapping[str, Lexicon] | None = None) -> list[IfdfRecord]:
    """Words ranked by IF/DF (ties: higher IF, then alphabetical)."""
    informative, document = ifdf_counts(contexts)
    lexicons = lexicons or {}
    records = []
    for word, df in document.items():
        trans = {}
        for lang, lex in lexicons.items():
            cands = lex.lookup(word)
            trans[lang] = cands[0] if cands else None
        records.append(IfdfRecord(word, informative.get(word, 0), df, trans))
    records.sort(key=lambda r: (-r.ratio, -r.informative_frequency, r.word))
    return records if top_k is None else records[:top_k]


def ifdf_csv(records: Sequence[IfdfRecord], languages: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["word", "IF", "DF", "IFDF"] + [f"trans_{lang}" for lang in languages])
    for r in records:
        writer.writerow([r.word, r.informative_frequency, r.document_frequency, f"{r.ratio:.3f}"]
                        + [r.translations.get(lang) or "" for lang in languages])
    return buf.getvalue()
