"""Hashed bag-of-n-grams softmax classifier trained with Adam.

The classifier is deliberately small: unigram and bigram counts are hashed
into ``n_features`` buckets and fed to a linear softmax layer, so a whole
attack/defense cycle runs in seconds on a laptop. Anything implementing
:class:`Scorer` can stand in for it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
import scipy.sparse as sp

from .corpus import Dataset, LabeledExample, Sentence, detokenize
from .errors import ConfigError, NumericalError, PersistenceError

logger = logging.getLogger(__name__)

MASK_TOKEN = "<mask>"
CHECKPOINT_VERSION = 1
DEFAULT_FEATURES = 1 << 18


@runtime_checkable
class Scorer(Protocol):
    """Anything that maps a sentence to a probability vector over ``labels``."""

    labels: tuple[str, ...]

    def predict_scores(self, sentence: Sentence) -> np.ndarray: ...


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    max_epochs: int = 10
    patience: int = 0
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be positive")
        if self.patience < 0:
            raise ConfigError("patience must be non-negative")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ConfigError("Adam betas must lie in (0, 1)")
        if not self.adam_epsilon > 0:
            raise ConfigError("adam_epsilon must be positive")


# lr=3e-6 is the value used for BERT-scale fine-tuning; on the built-in model it barely moves.
PRESETS: dict[str, TrainConfig] = {
    "default": TrainConfig(),
    "adv": TrainConfig(max_epochs=15, patience=5),
    "paper-smsa": TrainConfig(learning_rate=3e-6, batch_size=32, max_epochs=5),
    "paper-emot": TrainConfig(learning_rate=3e-6, batch_size=32, max_epochs=10),
    "paper-adv": TrainConfig(learning_rate=3e-6, batch_size=32, max_epochs=15, patience=5),
}


def preset(name: str, task: str | None = None, **overrides) -> TrainConfig:
    """Look up a named TrainConfig. ``paper`` resolves to the sentiment or emotion
    protocol from the task name (sentiment when it mentions smsa/sent)."""
    if name == "paper":
        t = (task or "").lower()
        name = "paper-smsa" if ("smsa" in t or "sent" in t) else "paper-emot"
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS) + ['paper']}")
    return replace(PRESETS[name], **overrides)


@dataclass
class TrainHistory:
    initial_loss: float
    train_loss: list[float] = field(default_factory=list)
    valid_accuracy: list[float] = field(default_factory=list)
    stopped_epoch: int | None = None
    best_epoch: int = 0

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)

    @property
    def best_valid_accuracy(self) -> float:
        return self.valid_accuracy[self.best_epoch] if self.valid_accuracy else float("nan")

    def to_dict(self) -> dict:
        return {
            "initial_loss": self.initial_loss,
            "train_loss": self.train_loss,
            "valid_accuracy": self.valid_accuracy,
            "stopped_epoch": self.stopped_epoch,
            "best_epoch": self.best_epoch,
            "epochs_run": self.epochs_run,
        }


@lru_cache(maxsize=1 << 20)
def _hash64(text: str, seed: int) -> int:
    key = (seed % (1 << 64)).to_bytes(8, "little")
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8, key=key).digest(), "little")


def _ngrams(tokens: Sequence[str]) -> list[str]:
    grams = ["u:" + t for t in tokens]
    grams += [f"b:{a} {b}" for a, b in zip(tokens, tokens[1:])]
    return grams


class ClassifierModel:
    """Linear softmax over hashed unigram+bigram counts."""

    def __init__(self, labels: Sequence[str], n_features: int = DEFAULT_FEATURES,
                 hasher_seed: int = 0, mask_token: str = MASK_TOKEN,
                 weights: np.ndarray | None = None, bias: np.ndarray | None = None):
        if n_features < 1 or n_features & (n_features - 1):
            raise ConfigError(f"n_features must be a power of two, got {n_features}")
        self.labels = tuple(labels)
        if len(self.labels) < 2:
            raise ConfigError("a classifier needs at least 2 labels")
        self.n_features = n_features
        self.hasher_seed = int(hasher_seed)
        self.mask_token = mask_token
        shape = (len(self.labels), n_features)
        self.weights = np.zeros(shape) if weights is None else np.array(weights, dtype=float)
        self.bias = np.zeros(len(self.labels)) if bias is None else np.array(bias, dtype=float)
        if self.weights.shape != shape or self.bias.shape != (len(self.labels),):
            raise ConfigError("weight/bias shape does not match labels and n_features")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise NumericalError("model parameters must be finite")

    def copy(self) -> "ClassifierModel":
        return ClassifierModel(self.labels, self.n_features, self.hasher_seed, self.mask_token,
                               self.weights.copy(), self.bias.copy())

    def feature_index(self, ngram: str) -> int:
        """Bucket of an already-prefixed n-gram (``u:word`` or ``b:w1 w2``)."""
        return _hash64(ngram, self.hasher_seed) & (self.n_features - 1)

    def featurize(self, sentence: Sentence) -> dict[int, float]:
        feats: dict[int, float] = {}
        for gram in _ngrams(sentence.tokens):
            idx = self.feature_index(gram)
            feats[idx] = feats.get(idx, 0.0) + 1.0
        return feats

    def feature_matrix(self, sentences: Sequence[Sentence]) -> sp.csr_matrix:
        rows, cols = [], []
        for r, s in enumerate(sentences):
            for gram in _ngrams(s.tokens):
                rows.append(r)
                cols.append(self.feature_index(gram))
        data = np.ones(len(rows))
        mat = sp.csr_matrix((data, (rows, cols)), shape=(len(sentences), self.n_features))
        mat.sum_duplicates()
        return mat

    def logits_batch(self, X: sp.csr_matrix) -> np.ndarray:
        return _linear(self.weights, self.bias, X)

    def predict_scores(self, sentence: Sentence) -> np.ndarray:
        return self.predict_scores_batch([sentence])[0]

    def predict_scores_batch(self, sentences: Sequence[Sentence]) -> np.ndarray:
        if not sentences:
            return np.zeros((0, len(self.labels)))
        return softmax(self.logits_batch(self.feature_matrix(sentences)))

    def predict_label(self, sentence: Sentence) -> str:
        return self.labels[int(np.argmax(self.predict_scores(sentence)))]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def score_batch(scorer: Scorer, sentences: Sequence[Sentence]) -> np.ndarray:
    """Score many sentences, using the scorer's batch path when it has one."""
    batch = getattr(scorer, "predict_scores_batch", None)
    if batch is not None:
        return np.asarray(batch(sentences), dtype=float)
    return np.array([scorer.predict_scores(s) for s in sentences], dtype=float).reshape(
        len(sentences), len(scorer.labels))


def predict_label(scorer: Scorer, sentence: Sentence) -> str:
    # np.argmax returns the first maximum, i.e. the lowest label index on ties
    return scorer.labels[int(np.argmax(scorer.predict_scores(sentence)))]


def mask_at(sentence: Sentence, i: int, mask_token: str = MASK_TOKEN, mode: str = "mask") -> Sentence:
    """Return ``sentence`` with token ``i`` masked (or dropped when ``mode='delete'``)."""
    if not 0 <= i < len(sentence.tokens):
        raise IndexError(f"position {i} out of range for sentence of length {len(sentence.tokens)}")
    tokens = list(sentence.tokens)
    if mode == "delete" and len(tokens) > 1:
        del tokens[i]
    elif mode in ("mask", "delete"):
        tokens[i] = mask_token
    else:
        raise ConfigError(f"unknown mask mode {mode!r}")
    return Sentence(tuple(tokens), detokenize(tokens))


# ---------------------------------------------------------------------------
# optimisation


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
              hyper: TrainConfig, t: int) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update. Returns fresh arrays; inputs are not modified."""
    if t < 1:
        raise ValueError(f"Adam step counter starts at 1, got {t}")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state must align")
    b1, b2 = hyper.adam_beta1, hyper.adam_beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError("shape mismatch between params, grads and state")
        if not np.isfinite(g).all():
            raise NumericalError("non-finite gradient entries")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        new_params.append(p - hyper.learning_rate * m_hat / (np.sqrt(v_hat) + hyper.adam_epsilon))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v)


def _row_ids(X: sp.csr_matrix) -> np.ndarray:
    return np.repeat(np.arange(X.shape[0]), np.diff(X.indptr))


def _linear(weights: np.ndarray, bias: np.ndarray, X: sp.csr_matrix) -> np.ndarray:
    # gather instead of X @ W.T: scipy would copy the transposed (C, F) matrix per call
    n = X.shape[0]
    rows = _row_ids(X)
    contrib = weights[:, X.indices] * X.data
    out = np.empty((n, weights.shape[0]))
    for c in range(weights.shape[0]):
        out[:, c] = np.bincount(rows, weights=contrib[c], minlength=n)
    return out + bias


def loss_and_grad(weights: np.ndarray, bias: np.ndarray, X: sp.csr_matrix,
                  y: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy of a linear softmax and its gradient w.r.t. (weights, bias)."""
    n = X.shape[0]
    logits = _linear(weights, bias, X)
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(log_norm - z[np.arange(n), y]))
    probs = np.exp(z - log_norm[:, None])
    probs[np.arange(n), y] -= 1.0
    probs /= n
    rows = _row_ids(X)
    grad_w = np.empty_like(weights)
    for c in range(weights.shape[0]):
        grad_w[c] = np.bincount(X.indices, weights=probs[rows, c] * X.data, minlength=weights.shape[1])
    grad_b = probs.sum(axis=0)
    return loss, grad_w, grad_b


def _encode(model: ClassifierModel, examples: Sequence[LabeledExample]):
    index = {label: i for i, label in enumerate(model.labels)}
    X = model.feature_matrix([ex.sentence for ex in examples])
    y = np.array([index[ex.label] for ex in examples], dtype=np.int64)
    return X, y


def _accuracy(model: ClassifierModel, X, y) -> float:
    if len(y) == 0:
        return float("nan")
    pred = np.argmax(model.logits_batch(X), axis=1)
    return 100.0 * float(np.mean(pred == y))


def train(dataset: Dataset, config: TrainConfig = TrainConfig(), *,
          init: ClassifierModel | None = None, n_features: int = DEFAULT_FEATURES,
          hasher_seed: int = 0) -> tuple[ClassifierModel, TrainHistory]:
    """Minimise mean cross-entropy on ``dataset.train`` with mini-batch Adam.

    Starts from ``init`` (copied, never mutated) or from all-zero weights.
    Validation accuracy on ``dataset.valid`` drives early stopping when
    ``config.patience > 0``; with an empty valid split the train split is
    monitored instead.
    """
    if not dataset.train:
        raise ConfigError(f"train split of {dataset.name!r} is empty")
    if init is not None:
        if tuple(init.labels) != tuple(dataset.labels):
            raise ConfigError(f"initial model labels {init.labels} do not match dataset labels {dataset.labels}")
        model = init.copy()
    else:
        model = ClassifierModel(dataset.labels, n_features=n_features, hasher_seed=hasher_seed)

    X, y = _encode(model, dataset.train)
    valid = dataset.valid or dataset.train
    Xv, yv = _encode(model, valid)
    n = len(y)
    rng = np.random.default_rng(int(config.seed) % (1 << 64))

    # Columns absent from the train split have zero gradient and zero moments,
    # so Adam leaves them untouched; optimising only the active columns is exact.
    active = np.unique(X.indices)
    Xc = sp.csr_matrix((X.data, np.searchsorted(active, X.indices), X.indptr),
                       shape=(n, len(active)))
    params = [model.weights[:, active].copy(), model.bias.copy()]
    state = AdamState.zeros_like(params)
    t = 0

    history = TrainHistory(initial_loss=loss_and_grad(params[0], params[1], Xc, y)[0])
    best = None
    best_acc = -math.inf
    since_best = 0
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            _, gw, gb = loss_and_grad(params[0], params[1], Xc[idx], y[idx])
            t += 1
            params, state = adam_step(params, [gw, gb], state, config, t)
        model.weights[:, active] = params[0]
        model.bias = params[1].copy()
        history.train_loss.append(loss_and_grad(params[0], params[1], Xc, y)[0])
        acc = _accuracy(model, Xv, yv)
        history.valid_accuracy.append(acc)
        if acc > best_acc:
            best_acc, since_best = acc, 0
            history.best_epoch = epoch
            best = (model.weights.copy(), model.bias.copy())
        else:
            since_best += 1
        logger.debug("epoch %d loss %.5f valid acc %.2f", epoch, history.train_loss[-1], acc)
        if config.patience and since_best >= config.patience:
            history.stopped_epoch = epoch
            break

    if config.patience and best is not None:
        model.weights, model.bias = best
    elif not config.patience:
        history.best_epoch = int(np.argmax(history.valid_accuracy))
    if not (np.isfinite(model.weights).all() and np.isfinite(model.bias).all()):
        raise NumericalError("training diverged to non-finite weights")
    return model, history


# ---------------------------------------------------------------------------
# persistence


def model_to_json(model: ClassifierModel) -> str:
    rows = [None if not row.any() else [float(x) for x in row] for row in model.weights]
    doc = {
        "version": CHECKPOINT_VERSION,
        "labels": list(model.labels),
        "n_features": model.n_features,
        "hasher_seed": model.hasher_seed,
        "mask_token": model.mask_token,
        "bias": [float(b) for b in model.bias],
        "weights": rows,
    }
    return json.dumps(doc, separators=(",", ":"))


def model_from_json(text: str) -> ClassifierModel:
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise PersistenceError(f"corrupted checkpoint: {exc}") from None
    if not isinstance(doc, dict):
        raise PersistenceError("corrupted checkpoint: not a JSON object")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise PersistenceError(f"unsupported checkpoint version {doc.get('version')!r}, expected {CHECKPOINT_VERSION}")
    try:
        labels = doc["labels"]
        n_features = int(doc["n_features"])
        rows = doc["weights"]
        if len(rows) != len(labels):
            raise PersistenceError("corrupted checkpoint: weights rows do not match labels")
        weights = np.zeros((len(labels), n_features))
        for i, row in enumerate(rows):
            if row is not None:
                if len(row) != n_features:
                    raise PersistenceError(f"corrupted checkpoint: row {i} has {len(row)} entries")
                weights[i] = row
        return ClassifierModel(labels, n_features, int(doc["hasher_seed"]), doc["mask_token"],
                               weights, np.array(doc["bias"], dtype=float))
    except PersistenceError:
        raise
    except (KeyError, TypeError, ValueError, ConfigError, NumericalError) as exc:
        raise PersistenceError(f"corrupted checkpoint: {exc}") from None


def save_model(model: ClassifierModel, path) -> None:
    Path(path).write_text(model_to_json(model), encoding="utf-8")


def load_model(path) -> ClassifierModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise PersistenceError(f"checkpoint not found: {path}") from None
    except UnicodeDecodeError as exc:
        raise PersistenceError(f"corrupted checkpoint {path}: {exc}") from None
    return model_from_json(text)
