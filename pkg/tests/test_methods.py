import numpy as np
import pytest

from ovnni.data import rng_from_seed, synth_blobs
from ovnni.errors import ConfigError, ShapeError
from ovnni.methods import (
    OvnniBundle,
    confidence,
    deep_ensemble_probs,
    load_bundle,
    mc_dropout_probs,
    mcp,
    ova_only,
    ova_positive_probs,
    ovnni_scores,
    predict,
    save_bundle,
    train_bundle,
)
from ovnni.nn import TrainConfig, TrainedModel, init_params, mlp, predict_proba


def blob_fixture():
    # unit-scale features, means 120 sigma apart
    return synth_blobs([[0.2, 0.2], [0.8, 0.8]], std=0.005, n_per_class=40, seed=2)


@pytest.fixture(scope="module")
def blob_bundle():
    data = blob_fixture()
    spec = mlp(2, [8, 8], 2)
    return train_bundle(data, spec, TrainConfig(epochs=30, batch_size=20, seed=11))


# -- score fusion ----------------------------------------------------------------

def test_scores_are_products_of_factors(blob_bundle):
    data = blob_fixture()
    x = data.features[:10]
    ava = predict_proba(blob_bundle.ava, x)
    ova = ova_positive_probs(blob_bundle.ova, x)
    assert np.allclose(ovnni_scores(blob_bundle, x), ova * ava)


def test_score_bounds_hold_for_extreme_inputs(blob_bundle):
    rng = rng_from_seed(4)
    x = rng.standard_normal((50, 2)) * np.array([1e9, 1e-9])
    p = ovnni_scores(blob_bundle, x)
    ava = predict_proba(blob_bundle.ava, x)
    ova = ova_positive_probs(blob_bundle.ova, x)
    assert (p >= 0).all() and (p <= 1).all()
    assert (p <= np.minimum(ova, ava) + 1e-15).all()
    conf = confidence(p)
    assert (conf >= 0).all() and (conf <= 1).all()
    assert (conf <= np.minimum(ova.max(axis=1), ava.max(axis=1)) + 1e-15).all()


def test_one_hot_ava_kills_other_scores():
    # score fusion with a degenerate multi-class row keeps only that class
    ava_row = np.array([0.0, 1.0, 0.0])
    ova_row = np.array([0.3, 0.8, 0.9])
    p = ova_row * ava_row
    assert p[0] == 0.0 and p[2] == 0.0 and p[1] == 0.8
    # and unit factors on every class give the all-ones score vector
    assert (np.ones(3) * np.ones(3) == 1.0).all()


def test_hand_product_example():
    assert np.allclose(np.array([0.9, 0.2]) * np.array([0.6, 0.4]), [0.54, 0.08])


def test_confidence_and_predict_hand_values():
    p = np.array([0.54, 0.08])
    assert confidence(p) == pytest.approx(0.54)
    assert predict(p) == 0
    zeros = np.zeros(4)
    assert confidence(zeros) == 0.0
    assert predict(zeros) == 0  # tie toward lowest index


def test_bundle_shape_validation(blob_bundle):
    with pytest.raises(ShapeError):
        OvnniBundle(blob_bundle.ava, blob_bundle.ova[:1])


def test_train_bundle_counts_and_accuracy(blob_bundle):
    data = blob_fixture()
    assert len(blob_bundle.ova) == 2
    for model in [blob_bundle.ava] + blob_bundle.ova:
        assert model.spec.in_dim == 2
    p = ovnni_scores(blob_bundle, data.features)
    assert (predict(p) == data.labels).mean() == 1.0
    for j, member in enumerate(blob_bundle.ova):
        preds = predict_proba(member, data.features).argmax(axis=1)
        assert (preds == (data.labels == j)).mean() == 1.0


def test_train_bundle_deterministic(tmp_path):
    data = blob_fixture()
    spec = mlp(2, [6], 2)
    config = TrainConfig(epochs=3, batch_size=16, seed=9)
    a = train_bundle(data, spec, config)
    b = train_bundle(data, spec, config)
    save_bundle(a, tmp_path / "a")
    save_bundle(b, tmp_path / "b")
    for name in ["ava.json", "ova_0.json", "ova_1.json", "bundle.json"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_bundle_round_trip(tmp_path, blob_bundle):
    save_bundle(blob_bundle, tmp_path / "bundle")
    loaded = load_bundle(tmp_path / "bundle")
    x = blob_fixture().features[:5]
    assert np.array_equal(ovnni_scores(loaded, x), ovnni_scores(blob_bundle, x))
    assert loaded.seeds == {"ava": 11, "ova": [12, 13]}


# -- baselines ---------------------------------------------------------------------

def test_mcp_hand_values():
    conf, cls = mcp(np.array([0.1, 0.7, 0.2]))
    assert conf == pytest.approx(0.7) and cls == 1
    conf, cls = mcp(np.full(4, 0.25))
    assert conf == pytest.approx(0.25) and cls == 0
    rng = rng_from_seed(3)
    rows = rng.dirichlet(np.ones(5), size=30)
    assert (confidence(rows) >= 1 / 5 - 1e-12).all()


def test_deep_ensemble_single_member_is_identity(blob_bundle):
    x = blob_fixture().features[:8]
    assert np.array_equal(deep_ensemble_probs([blob_bundle.ava], x),
                          predict_proba(blob_bundle.ava, x))


def test_deep_ensemble_mean_of_two():
    spec = mlp(2, [3], 2)
    a = TrainedModel(spec, init_params(spec, rng_from_seed(0)))
    b = TrainedModel(spec, init_params(spec, rng_from_seed(1)))
    x = rng_from_seed(2).standard_normal((6, 2))
    mean = deep_ensemble_probs([a, b], x)
    assert np.allclose(mean, (predict_proba(a, x) + predict_proba(b, x)) / 2)
    assert np.abs(mean.sum(axis=1) - 1.0).max() < 1e-9


def test_mc_dropout_zero_rate_matches_predict_proba():
    data = blob_fixture()
    spec = mlp(2, [8], 2, dropout_rate=0.0)
    # a model without dropout layers is a configuration error
    model = TrainedModel(spec, init_params(spec, rng_from_seed(0)))
    with pytest.raises(ConfigError):
        mc_dropout_probs(model, data.features[:4], passes=3, seed=0)
    spec_rate0 = mlp(2, [8], 2, dropout_rate=1e-9)
    model = TrainedModel(spec_rate0, init_params(spec_rate0, rng_from_seed(0)))
    out = mc_dropout_probs(model, data.features[:4], passes=3, seed=0)
    ref = predict_proba(model, data.features[:4])
    assert np.allclose(out, ref, atol=1e-6)


def test_mc_dropout_deterministic_per_seed():
    spec = mlp(2, [16], 2, dropout_rate=0.3)
    model = TrainedModel(spec, init_params(spec, rng_from_seed(5)))
    x = rng_from_seed(6).standard_normal((7, 2))
    a = mc_dropout_probs(model, x, passes=1, seed=123)
    b = mc_dropout_probs(model, x, passes=1, seed=123)
    assert np.array_equal(a, b)
    c = mc_dropout_probs(model, x, passes=1, seed=124)
    assert not np.array_equal(a, c)


def test_mc_dropout_running_mean_stabilizes():
    spec = mlp(2, [32, 32], 3, dropout_rate=0.4)
    model = TrainedModel(spec, init_params(spec, rng_from_seed(8)))
    x = rng_from_seed(9).standard_normal((1, 2))
    deltas = []
    for t in (8, 16, 32):
        m_t = mc_dropout_probs(model, x, passes=t, seed=55)
        m_2t = mc_dropout_probs(model, x, passes=2 * t, seed=55)
        deltas.append(np.abs(m_t - m_2t).max())
    assert deltas[2] < deltas[0]


def test_ova_only_hand_values_and_bound(blob_bundle):
    scores = np.array([[0.9, 0.2, 0.1]])
    conf = confidence(scores)
    cls = predict(scores)
    assert conf[0] == pytest.approx(0.9) and cls[0] == 0
    tie = np.full((1, 3), 0.4)
    assert predict(tie)[0] == 0
    x = blob_fixture().features[:20]
    conf_ova, _ = ova_only(blob_bundle.ova, x)
    conf_fused = confidence(ovnni_scores(blob_bundle, x))
    assert (conf_ova >= conf_fused - 1e-15).all()
