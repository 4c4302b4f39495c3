import math

import numpy as np
import pytest

from codemix.blend import AttackConfig, codemix_dataset
from codemix.corpus import Sentence, synth_benchmark
from codemix.model import ClassifierModel, TrainConfig, train

BENCH_SEED = 0
TRAIN_SEEDS = (1, 2, 3)


def sent(*tokens):
    return Sentence(tuple(tokens), " ".join(tokens))


def manual_scores(model: ClassifierModel, tokens) -> list[float]:
    """Softmax probabilities computed with plain Python loops (no numpy/scipy paths)."""
    grams = ["u:" + t for t in tokens] + [f"b:{a} {b}" for a, b in zip(tokens, tokens[1:])]
    logits = []
    for c in range(len(model.labels)):
        z = float(model.bias[c])
        for g in grams:
            z += float(model.weights[c, model.feature_index(g)])
        logits.append(z)
    top = max(logits)
    exps = [math.exp(z - top) for z in logits]
    total = sum(exps)
    return [e / total for e in exps]


def random_model(rng, n_labels=3, n_features=64, scale=2.0) -> ClassifierModel:
    labels = [f"l{i}" for i in range(n_labels)]
    return ClassifierModel(labels, n_features=n_features, hasher_seed=int(rng.integers(1 << 31)),
                           weights=rng.normal(0, scale, (n_labels, n_features)),
                           bias=rng.normal(0, 0.5, n_labels))


@pytest.fixture(scope="session")
def bench():
    return synth_benchmark(600, 200, 3, seed=BENCH_SEED)


@pytest.fixture(scope="session")
def trained(bench):
    """Baseline models on the synthetic benchmark, one per training seed."""
    dataset, _ = bench
    return {s: train(dataset, TrainConfig(max_epochs=10, seed=s))[0] for s in TRAIN_SEEDS}


@pytest.fixture(scope="session")
def codemixed(bench, trained):
    dataset, lexicon = bench
    cfg = AttackConfig(0.4, 0.8, lexicon.target_language)
    return {s: codemix_dataset(m, dataset, cfg, lexicon) for s, m in trained.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance summary ------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = "PASS" if rep.outcome == "passed" else "FAIL"
        prev = _CRITERIA.get(number)
        if prev is None or prev[0] == "PASS":
            _CRITERIA[number] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title = _CRITERIA[number]
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")


# --- stub translation service ----------------------------------------------------

class StubTranslator:
    """Local HTTP translation service answering from lexicons keyed by target language."""

    def __init__(self, lexicons, misalign=False):
        import http.server
        import json
        import threading

        self.lexicons = lexicons
        self.hits = 0
        self.words_seen = 0
        stub = self

        class Handler(http.server.BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                stub.hits += 1
                stub.words_seen += len(body["words"])
                lex = stub.lexicons[body["target"]]
                out = [list(lex.lookup(w)) for w in body["words"]]
                if misalign:
                    out = out[:-1]
                data = json.dumps({"translations": out}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/translate"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_factory():
    stubs = []

    def make(lexicons, **kw):
        stub = StubTranslator(lexicons, **kw)
        stubs.append(stub)
        return stub

    yield make
    for s in stubs:
        s.close()
