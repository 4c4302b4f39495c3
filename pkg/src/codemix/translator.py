"""Client for an external word-translation service, with an append-only disk cache.

Protocol: ``POST <endpoint>`` with ``{"source": .., "target": .., "words": [..]}``;
the reply is ``{"translations": [[candidate, ...], ...]}`` aligned with ``words``.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import requests

from .corpus import Lexicon
from .errors import ConfigError, TranslatorError

logger = logging.getLogger(__name__)

CACHE_ENV = "CODEMIX_CACHE_DIR"
CACHE_FILE = "translations.tsv"


def default_cache_path() -> Path:
    base = os.environ.get(CACHE_ENV) or os.path.join(os.path.expanduser("~"), ".cache", "codemix")
    return Path(base) / CACHE_FILE


@dataclass(frozen=True)
class TranslatorClientConfig:
    endpoint: str
    source_language: str
    target_language: str
    timeout: float = 10.0
    cache_path: str | None = None
    batch_size: int = 256

    def __post_init__(self):
        if not self.timeout > 0:
            raise ConfigError(f"translator timeout must be positive, got {self.timeout}")
        if self.batch_size < 1:
            raise ConfigError("translator batch size must be positive")


class TranslationCache:
    """``source<TAB>target<TAB>word<TAB>cand1;cand2`` lines, appended one whole line per write.

    One writer per file: concurrent runs should point at different cache files.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._data: dict[tuple[str, str, str], tuple[str, ...]] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.endswith("\n"):
                        continue  # torn trailing line from an interrupted run
                    parts = line.rstrip("\n").split("\t")
                    if len(parts) != 4:
                        continue
                    src, tgt, word, cands = parts
                    self._data[(src, tgt, word)] = tuple(c for c in cands.split(";") if c)

    def get(self, source: str, target: str, word: str) -> tuple[str, ...] | None:
        return self._data.get((source, target, word))

    def put_many(self, source: str, target: str, items: Iterable[tuple[str, Sequence[str]]]) -> None:
        lines = []
        for word, cands in items:
            cands = tuple(cands)
            self._data[(source, target, word)] = cands
            lines.append(f"{source}\t{target}\t{word}\t{';'.join(cands)}\n")
        if not lines:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
            for line in lines:
                fh.write(line)
            fh.flush()


def _clean(candidates: Sequence[str]) -> tuple[str, ...]:
    # only single-token candidates keep substitution length-preserving
    out = []
    for c in candidates:
        c = c.strip().lower()
        if c and not any(ch.isspace() for ch in c) and ";" not in c:
            out.append(c)
        elif c:
            logger.debug("dropping multi-token translation candidate %r", c)
    return tuple(dict.fromkeys(out))


class HttpTranslator:
    def __init__(self, config: TranslatorClientConfig, session: requests.Session | None = None):
        self.config = config
        self.cache = TranslationCache(config.cache_path or default_cache_path())
        self.session = session or requests.Session()
        self.requests_made = 0

    def _request(self, words: list[str]) -> list[tuple[str, ...]]:
        payload = {"source": self.config.source_language, "target": self.config.target_language,
                   "words": words}
        try:
            resp = self.session.post(self.config.endpoint, json=payload, timeout=self.config.timeout)
            self.requests_made += 1
            resp.raise_for_status()
            body = resp.json()
        except requests.RequestException as exc:
            raise TranslatorError(f"translator request to {self.config.endpoint} failed: {exc}") from exc
        except ValueError as exc:
            raise TranslatorError(f"translator returned invalid JSON: {exc}") from exc
        translations = body.get("translations") if isinstance(body, dict) else None
        if not isinstance(translations, list):
            raise TranslatorError("translator response lacks a 'translations' list")
        if len(translations) != len(words):
            raise TranslatorError(f"translator returned {len(translations)} entries for {len(words)} words")
        out = []
        for word, cands in zip(words, translations):
            if not isinstance(cands, list) or not all(isinstance(c, str) for c in cands):
                raise TranslatorError(f"malformed candidates for {word!r}: {cands!r}")
            out.append(_clean(cands))
        return out

    def translate(self, words: Sequence[str]) -> list[tuple[str, ...]]:
        """Candidates per word (possibly empty), aligned with ``words``."""
        src, tgt = self.config.source_language, self.config.target_language
        words = [w.lower() for w in words]
        missing = list(dict.fromkeys(w for w in words if self.cache.get(src, tgt, w) is None))
        for start in range(0, len(missing), self.config.batch_size):
            chunk = missing[start:start + self.config.batch_size]
            self.cache.put_many(src, tgt, zip(chunk, self._request(chunk)))
        return [self.cache.get(src, tgt, w) for w in words]

    def build_lexicon(self, vocabulary: Iterable[str]) -> Lexicon:
        vocab = sorted({w.lower() for w in vocabulary})
        entries = {w: c for w, c in zip(vocab, self.translate(vocab)) if c}
        return Lexicon(self.config.source_language, self.config.target_language, entries)


def http_translate(config: TranslatorClientConfig, words: Sequence[str]) -> list[tuple[str, ...]]:
    return HttpTranslator(config).translate(words)
