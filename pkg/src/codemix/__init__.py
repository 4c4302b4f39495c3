"""Code-mixing robustness toolkit.

Generate code-mixed adversarial text by translating the words a classifier
relies on most, measure the resulting accuracy drop, and harden the
classifier with adversarial fine-tuning.
"""

__version__ = "0.1.0"

from .blend import AttackConfig, AttackOutcome, generate_codemixed, generate_dataset, rank_words, word_importance
from .corpus import Dataset, LabeledExample, Lexicon, Sentence, load_dataset, load_lexicon, synth_benchmark, tokenize
from .errors import (CodemixError, ConfigError, EmptyText, NumericalError, ParseError, PersistenceError,
                     TranslatorError)
from .metrics import accuracy, delta_accuracy, ifdf_analysis, ratio_sweep, robustness_report
from .model import ClassifierModel, TrainConfig, load_model, save_model, train
from .shot import tune_cm_only, tune_joint, tune_two_step

__all__ = [
    "AttackConfig", "AttackOutcome", "generate_codemixed", "generate_dataset", "rank_words", "word_importance",
    "Dataset", "LabeledExample", "Lexicon", "Sentence", "load_dataset", "load_lexicon", "synth_benchmark",
    "tokenize", "CodemixError", "ConfigError", "EmptyText", "NumericalError", "ParseError", "PersistenceError",
    "TranslatorError", "accuracy", "delta_accuracy", "ifdf_analysis", "ratio_sweep", "robustness_report",
    "ClassifierModel", "TrainConfig", "load_model", "save_model", "train", "tune_cm_only", "tune_joint",
    "tune_two_step",
]
