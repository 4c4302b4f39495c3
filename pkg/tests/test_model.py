import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codemix.corpus import Dataset, LabeledExample, tokenize
from codemix.errors import ConfigError, NumericalError, PersistenceError
from codemix.model import (PRESETS, AdamState, ClassifierModel, TrainConfig, adam_step, load_model,
                           loss_and_grad, mask_at, model_from_json, model_to_json, predict_label, preset,
                           save_model, softmax, train)

from conftest import manual_scores, random_model, sent


# --- features ----------------------------------------------------------------

def test_featurize_unigrams_and_bigrams():
    m = ClassifierModel(["a", "b"], n_features=1 << 20)
    feats = m.featurize(sent("sate", "enak", "sate"))
    expected = {}
    for g in ["u:sate", "u:enak", "u:sate", "b:sate enak", "b:enak sate"]:
        idx = m.feature_index(g)
        expected[idx] = expected.get(idx, 0) + 1
    assert feats == expected
    assert feats[m.feature_index("u:sate")] == 2


def test_hasher_seed_changes_buckets():
    a = ClassifierModel(["a", "b"], n_features=1 << 20, hasher_seed=0)
    b = ClassifierModel(["a", "b"], n_features=1 << 20, hasher_seed=1)
    grams = [f"u:w{i}" for i in range(20)]
    assert [a.feature_index(g) for g in grams] != [b.feature_index(g) for g in grams]


def test_n_features_must_be_power_of_two():
    with pytest.raises(ConfigError):
        ClassifierModel(["a", "b"], n_features=100)


# --- scoring -----------------------------------------------------------------

def test_zero_model_is_uniform():
    m = ClassifierModel(["a", "b", "c"], n_features=64)
    np.testing.assert_allclose(m.predict_scores(sent("x", "y")), [1 / 3] * 3, atol=1e-15)


def test_bias_only_closed_form():
    m = ClassifierModel(["a", "b"], n_features=64, bias=[1.0, 0.0])
    p = m.predict_scores(sent("x"))
    assert p[0] == pytest.approx(math.e / (math.e + 1), abs=1e-12)
    assert p[0] == pytest.approx(0.7311, abs=1e-4)


def test_two_feature_hand_oracle():
    m = ClassifierModel(["a", "b"], n_features=1 << 20)
    w = np.zeros_like(m.weights)
    w[:, m.feature_index("u:x")] = [0.7, -0.4]
    w[:, m.feature_index("u:y")] = [-1.2, 0.3]
    w[:, m.feature_index("b:x y")] = [0.5, 0.5]
    m.weights = w
    m.bias = np.array([0.1, -0.2])
    za = 0.1 + 0.7 - 1.2 + 0.5
    zb = -0.2 - 0.4 + 0.3 + 0.5
    expected = [math.exp(za) / (math.exp(za) + math.exp(zb)), math.exp(zb) / (math.exp(za) + math.exp(zb))]
    np.testing.assert_allclose(m.predict_scores(sent("x", "y")), expected, rtol=0, atol=1e-12)


def test_scores_match_loop_oracle(rng):
    for _ in range(20):
        m = random_model(rng, n_labels=int(rng.integers(2, 6)))
        toks = [f"w{int(i)}" for i in rng.integers(0, 10, size=int(rng.integers(1, 8)))]
        np.testing.assert_allclose(m.predict_scores(sent(*toks)), manual_scores(m, toks), atol=1e-12)


class _Fixed:
    def __init__(self, labels, scores):
        self.labels = tuple(labels)
        self._scores = np.asarray(scores, dtype=float)

    def predict_scores(self, sentence):
        return self._scores


def test_predict_label_argmax_and_ties():
    assert predict_label(_Fixed("abc", [0.1, 0.7, 0.2]), sent("x")) == "b"
    assert predict_label(_Fixed("abc", [1 / 3] * 3), sent("x")) == "a"
    assert predict_label(_Fixed("abc", [0.2, 0.4, 0.4]), sent("x")) == "b"


def test_predict_label_brute_force(rng):
    for _ in range(100):
        m = random_model(rng)
        s = sent(*[f"w{int(i)}" for i in rng.integers(0, 10, size=4)])
        probs = manual_scores(m, s.tokens)
        best = max(range(len(probs)), key=lambda c: (probs[c], -c))
        assert m.predict_label(s) == m.labels[best]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=2, max_size=6))
def test_softmax_sums_to_one_and_order_preserving(logits):
    p = softmax(np.array(logits))
    assert abs(p.sum() - 1.0) <= 1e-9
    assert ((p >= 0) & (p <= 1)).all()
    for i in range(len(logits)):
        for j in range(len(logits)):
            if logits[i] <= logits[j]:
                assert p[i] <= p[j]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10), st.floats(-5, 5))
def test_argmax_invariant_under_positive_affine_logit_map(seed, a, b):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    s = sent("w1", "w2", "w3")
    scaled = m.copy()
    scaled.weights = scaled.weights * a
    scaled.bias = scaled.bias * a + b
    p, q = m.predict_scores(s), scaled.predict_scores(s)
    assert abs(q.sum() - 1) <= 1e-9
    if np.sort(p)[-1] - np.sort(p)[-2] > 1e-9:
        assert m.predict_label(s) == scaled.predict_label(s)


# --- masking -----------------------------------------------------------------

def test_mask_at():
    s = sent("a", "b", "c")
    assert mask_at(s, 1, "<mask>").tokens == ("a", "<mask>", "c")
    assert mask_at(s, 0, "<mask>").tokens == ("<mask>", "b", "c")
    assert mask_at(s, 1, mode="delete").tokens == ("a", "c")
    assert s.tokens == ("a", "b", "c")
    with pytest.raises(IndexError):
        mask_at(s, 3)
    with pytest.raises(IndexError):
        mask_at(s, -1)


# --- Adam --------------------------------------------------------------------

HYPER = TrainConfig(learning_rate=0.01)


def test_adam_zero_gradient_is_identity():
    p = [np.array([1.0, -2.0])]
    new, _ = adam_step(p, [np.zeros(2)], AdamState.zeros_like(p), HYPER, 1)
    np.testing.assert_array_equal(new[0], p[0])


def test_adam_first_step_magnitude():
    p = [np.array([0.0])]
    new, _ = adam_step(p, [np.array([1.0])], AdamState.zeros_like(p), HYPER, 1)
    assert new[0][0] == pytest.approx(-0.01 / (1 + 1e-8), abs=1e-15)


def test_adam_two_steps_match_scalar_recurrence():
    b1, b2, lr, eps = 0.9, 0.999, 0.01, 1e-8
    grads = [0.5, -1.5]
    theta, m, v = 0.3, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    params = [np.array([0.3])]
    state = AdamState.zeros_like(params)
    for t, g in enumerate(grads, start=1):
        params, state = adam_step(params, [np.array([g])], state, HYPER, t)
    assert params[0][0] == pytest.approx(theta, abs=1e-12)


def test_adam_does_not_mutate_inputs():
    p = [np.array([1.0])]
    state = AdamState.zeros_like(p)
    adam_step(p, [np.array([2.0])], state, HYPER, 1)
    assert p[0][0] == 1.0 and state.m[0][0] == 0.0


def test_adam_rejects_non_finite_gradient():
    p = [np.array([1.0])]
    with pytest.raises(NumericalError):
        adam_step(p, [np.array([np.nan])], AdamState.zeros_like(p), HYPER, 1)


# --- loss and training --------------------------------------------------------

def test_loss_of_zero_model_is_log_c():
    m = ClassifierModel(["a", "b", "c"], n_features=64)
    X = m.feature_matrix([sent("x"), sent("y", "z")])
    loss, _, gb = loss_and_grad(m.weights, m.bias, X, np.array([0, 2]))
    assert loss == pytest.approx(math.log(3), abs=1e-12)
    np.testing.assert_allclose(gb, [(1 / 3 - 1 + 1 / 3) / 2, 1 / 3, (1 / 3 + 1 / 3 - 1) / 2], atol=1e-12)


def test_gradient_matches_finite_differences(rng):
    m = random_model(rng, n_labels=3, n_features=32, scale=0.5)
    sents = [sent(*[f"w{int(i)}" for i in rng.integers(0, 12, size=5)]) for _ in range(8)]
    X = m.feature_matrix(sents)
    y = rng.integers(0, 3, size=8)
    _, gw, gb = loss_and_grad(m.weights, m.bias, X, y)
    h = 1e-6
    for c in range(3):
        for f in np.unique(X.indices)[:5]:
            wp, wm = m.weights.copy(), m.weights.copy()
            wp[c, f] += h
            wm[c, f] -= h
            num = (loss_and_grad(wp, m.bias, X, y)[0] - loss_and_grad(wm, m.bias, X, y)[0]) / (2 * h)
            assert gw[c, f] == pytest.approx(num, rel=1e-4, abs=1e-8)
        bp, bm = m.bias.copy(), m.bias.copy()
        bp[c] += h
        bm[c] -= h
        num = (loss_and_grad(m.weights, bp, X, y)[0] - loss_and_grad(m.weights, bm, X, y)[0]) / (2 * h)
        assert gb[c] == pytest.approx(num, rel=1e-4, abs=1e-8)


def _toy_dataset():
    rows = [("sate enak sekali", "pos"), ("makanan enak", "pos"), ("enak banget", "pos"),
            ("sate jelek", "neg"), ("jelek sekali", "neg"), ("makanan jelek banget", "neg")]
    ex = tuple(LabeledExample(tokenize(t), l) for t, l in rows)
    return Dataset("toy", ("pos", "neg"), {"train": ex, "valid": ex, "test": ex})


def test_training_reduces_loss_and_fits():
    ds = _toy_dataset()
    model, hist = train(ds, TrainConfig(learning_rate=0.1, max_epochs=20, batch_size=2), n_features=1 << 10)
    assert hist.train_loss[-1] < hist.initial_loss
    assert all(model.predict_label(ex.sentence) == ex.label for ex in ds.train)


def test_training_is_deterministic():
    ds = _toy_dataset()
    cfg = TrainConfig(learning_rate=0.05, max_epochs=5, batch_size=2, seed=3)
    a, _ = train(ds, cfg, n_features=1 << 10)
    b, _ = train(ds, cfg, n_features=1 << 10)
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(a.bias, b.bias)


def test_training_does_not_mutate_init():
    ds = _toy_dataset()
    init = ClassifierModel(ds.labels, n_features=1 << 10)
    train(ds, TrainConfig(max_epochs=2), init=init)
    assert not init.weights.any()


def test_early_stopping_restores_best_epoch(bench):
    dataset, _ = bench
    model, hist = train(dataset, TrainConfig(max_epochs=15, patience=2, seed=1))
    assert hist.epochs_run <= 15
    if hist.stopped_epoch is not None:
        assert hist.stopped_epoch - hist.best_epoch == 2
    assert hist.best_valid_accuracy == max(hist.valid_accuracy)
    from codemix.metrics import accuracy
    assert accuracy(model, dataset.valid) == pytest.approx(hist.best_valid_accuracy)


def test_train_rejects_empty_and_mismatched():
    ds = _toy_dataset()
    with pytest.raises(ConfigError):
        train(ds.with_splits(train=()), TrainConfig())
    with pytest.raises(ConfigError):
        train(ds, TrainConfig(), init=ClassifierModel(["x", "y"], n_features=64))


def test_train_config_validation():
    for bad in [dict(learning_rate=0), dict(batch_size=0), dict(max_epochs=0), dict(patience=-1),
                dict(adam_beta1=1.0), dict(adam_epsilon=0)]:
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


def test_presets():
    adv = PRESETS["paper-adv"]
    assert (adv.learning_rate, adv.batch_size, adv.max_epochs, adv.patience) == (3e-6, 32, 15, 5)
    assert preset("paper", task="smsa").max_epochs == 5
    assert preset("paper", task="emot").max_epochs == 10
    assert preset("adv", learning_rate=0.5).learning_rate == 0.5
    with pytest.raises(ConfigError):
        preset("nope")


# --- persistence ---------------------------------------------------------------

def test_save_load_roundtrip(tmp_path, rng):
    m = random_model(rng, n_features=128)
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.labels == m.labels and back.hasher_seed == m.hasher_seed
    np.testing.assert_array_equal(back.weights, m.weights)
    s = sent("w1", "w2")
    np.testing.assert_allclose(back.predict_scores(s), m.predict_scores(s), atol=1e-12)


def test_zero_model_roundtrip_stays_uniform():
    m = ClassifierModel(["a", "b", "c", "d"], n_features=64)
    back = model_from_json(model_to_json(m))
    np.testing.assert_allclose(back.predict_scores(sent("x")), [0.25] * 4, atol=1e-15)


def test_version_mismatch_and_corruption(tmp_path):
    import json
    doc = json.loads(model_to_json(ClassifierModel(["a", "b"], n_features=8)))
    doc["version"] = "0"
    with pytest.raises(PersistenceError, match="version"):
        model_from_json(json.dumps(doc))
    with pytest.raises(PersistenceError):
        model_from_json("{not json")
    doc["version"] = 1
    doc["weights"] = [[0.0] * 3, None]
    with pytest.raises(PersistenceError):
        model_from_json(json.dumps(doc))
    with pytest.raises(PersistenceError):
        load_model(tmp_path / "missing.json")
