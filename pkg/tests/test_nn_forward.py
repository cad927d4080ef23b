import numpy as np
import pytest

from ovnni.errors import EmptyInputError, ShapeError
from ovnni.nn import (
    BATCH_NORM,
    DENSE,
    DROPOUT,
    EVAL,
    RELU,
    SOFTMAX_OUTPUT,
    TRAIN,
    BatchNormParams,
    DenseParams,
    LayerSpec,
    MlpSpec,
    ModelParams,
    TrainedModel,
    forward,
    init_params,
    mlp,
    penultimate_features,
    predict_proba,
    weighted_ce_loss,
)
from ovnni.data import rng_from_seed


def softmax_only(n):
    return MlpSpec((LayerSpec(SOFTMAX_OUTPUT, n, n),))


def identity_dense_net(d):
    spec = MlpSpec((
        LayerSpec(DENSE, d, d),
        LayerSpec(SOFTMAX_OUTPUT, d, d),
    ))
    params = ModelParams([DenseParams(np.eye(d), np.zeros(d)), None])
    return spec, params


def test_softmax_symmetry_on_zero_logits():
    spec = softmax_only(3)
    probs, _ = forward(ModelParams([None]), spec, np.zeros((1, 3)))
    assert np.allclose(probs, [[1 / 3, 1 / 3, 1 / 3]])


def test_identity_dense_preserves_logits():
    spec, params = identity_dense_net(2)
    probs, cache = forward(params, spec, np.array([[1.0, 2.0]]))
    # pre-softmax activations are the inputs themselves
    z = np.array([[1.0, 2.0]])
    expected = np.exp(z - 2.0) / np.exp(z - 2.0).sum()
    assert np.allclose(probs, expected)


def test_batch_norm_eval_identity_parameters():
    d = 4
    spec = MlpSpec((LayerSpec(BATCH_NORM, d, d), LayerSpec(DENSE, d, d),
                    LayerSpec(SOFTMAX_OUTPUT, d, d)))
    bn = BatchNormParams(np.ones(d), np.zeros(d), np.zeros(d), np.ones(d))
    params = ModelParams([bn, DenseParams(np.eye(d), np.zeros(d)), None])
    x = np.array([[0.5, -1.0, 2.0, 0.0]])
    _, cache = forward(params, spec, x, EVAL)
    # epsilon only rescales by 1/sqrt(1 + eps)
    assert np.allclose(cache.penultimate, x / np.sqrt(1 + bn.epsilon))


def test_batch_norm_eval_is_affine_per_feature():
    d = 3
    rng = rng_from_seed(2)
    bn = BatchNormParams(rng.random(d) + 0.5, rng.standard_normal(d),
                         rng.standard_normal(d), rng.random(d) + 0.2)
    spec = MlpSpec((LayerSpec(BATCH_NORM, d, d), LayerSpec(DENSE, d, d),
                    LayerSpec(SOFTMAX_OUTPUT, d, d)))
    params = ModelParams([bn, DenseParams(np.eye(d), np.zeros(d)), None])
    x = rng.standard_normal((8, d))
    _, cache = forward(params, spec, x, EVAL)
    slope = bn.gamma / np.sqrt(bn.running_var + bn.epsilon)
    intercept = bn.beta - slope * bn.running_mean
    assert np.allclose(cache.penultimate, slope * x + intercept)


def test_dropout_eval_is_identity():
    spec = mlp(3, [5], 2, batch_norm=False, dropout_rate=0.5)
    params = init_params(spec, rng_from_seed(0))
    x = rng_from_seed(1).standard_normal((4, 3))
    a, _ = forward(params, spec, x, EVAL)
    no_drop = mlp(3, [5], 2, batch_norm=False)
    b, _ = forward(params_without_dropout(params, spec, no_drop), no_drop, x, EVAL)
    assert np.array_equal(a, b)


def params_without_dropout(params, spec, target_spec):
    blocks = [b for layer, b in zip(spec.layers, params.blocks) if layer.kind != DROPOUT]
    assert len(blocks) == len(target_spec.layers)
    return ModelParams(blocks)


def test_train_mode_dropout_masks_are_seeded():
    spec = mlp(3, [16], 2, batch_norm=False, dropout_rate=0.4)
    params = init_params(spec, rng_from_seed(0))
    x = rng_from_seed(1).standard_normal((4, 3))
    a, _ = forward(params, spec, x, TRAIN, rng_from_seed(7))
    b, _ = forward(params, spec, x, TRAIN, rng_from_seed(7))
    c, _ = forward(params, spec, x, TRAIN, rng_from_seed(8))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_forward_rows_sum_to_one_even_for_extreme_inputs():
    spec = mlp(6, [8, 8], 4, batch_norm=True)
    params = init_params(spec, rng_from_seed(3))
    rng = rng_from_seed(4)
    x = rng.standard_normal((32, 6)) * np.array([1e-12, 1e-6, 1.0, 1e3, 1e6, 1e12])
    probs, _ = forward(params, spec, x, EVAL)
    assert np.isfinite(probs).all()
    assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-9
    assert probs.min() >= 0.0 and probs.max() <= 1.0


def test_forward_shape_errors():
    spec = mlp(3, [4], 2)
    params = init_params(spec, rng_from_seed(0))
    with pytest.raises(ShapeError):
        forward(params, spec, np.zeros((2, 5)))
    with pytest.raises(EmptyInputError):
        forward(params, spec, np.zeros((0, 3)))


def test_train_mode_batch_stats_staged_not_applied():
    spec = mlp(3, [4], 2, batch_norm=True)
    params = init_params(spec, rng_from_seed(0))
    bn_idx = next(i for i, l in enumerate(spec.layers) if l.kind == BATCH_NORM)
    before = params.blocks[bn_idx].running_mean.copy()
    _, cache = forward(params, spec, rng_from_seed(1).standard_normal((8, 3)), TRAIN,
                       rng_from_seed(2))
    assert np.array_equal(params.blocks[bn_idx].running_mean, before)
    assert cache.bn_updates and cache.bn_updates[0][0] == bn_idx


# -- predict_proba and penultimate features ------------------------------------

def test_zero_weight_model_is_uniform():
    spec = mlp(4, [5], 3, batch_norm=False)
    params = init_params(spec, rng_from_seed(0))
    for block in params.blocks:
        if isinstance(block, DenseParams):
            block.weights[:] = 0.0
            block.bias[:] = 0.0
    model = TrainedModel(spec, params)
    probs = predict_proba(model, rng_from_seed(1).standard_normal((5, 4)))
    assert np.allclose(probs, 1 / 3)


def test_predict_proba_permutation_equivariant_and_pure():
    spec = mlp(4, [6, 6], 3)
    model = TrainedModel(spec, init_params(spec, rng_from_seed(5)))
    x = rng_from_seed(6).standard_normal((10, 4))
    probs = predict_proba(model, x)
    perm = rng_from_seed(7).permutation(10)
    assert np.array_equal(predict_proba(model, x[perm]), probs[perm])
    dup = np.vstack([x[:1], x[:1]])
    probs_dup = predict_proba(model, dup)
    assert np.array_equal(probs_dup[0], probs_dup[1])


def test_penultimate_width_and_determinism():
    spec = mlp(4, [7, 5], 3)
    model = TrainedModel(spec, init_params(spec, rng_from_seed(5)))
    x = rng_from_seed(6).standard_normal((9, 4))
    feats = penultimate_features(model, x)
    assert feats.shape == (9, 5)
    assert np.array_equal(feats, penultimate_features(model, x))


def test_penultimate_of_identity_hidden_layer_is_relu():
    d = 3
    spec = MlpSpec((
        LayerSpec(DENSE, d, d),
        LayerSpec(RELU, d, d),
        LayerSpec(DENSE, d, 2),
        LayerSpec(SOFTMAX_OUTPUT, 2, 2),
    ))
    params = ModelParams([
        DenseParams(np.eye(d), np.zeros(d)),
        None,
        DenseParams(np.ones((2, d)), np.zeros(2)),
        None,
    ])
    model = TrainedModel(spec, params)
    x = np.array([[1.0, -2.0, 0.5], [-1.0, 3.0, -0.1]])
    assert np.array_equal(penultimate_features(model, x), np.maximum(x, 0.0))


# -- weighted cross entropy -----------------------------------------------------

def test_loss_perfect_prediction_is_zero():
    assert weighted_ce_loss(np.array([[1.0, 0.0]]), [0], [1.0, 1.0]) == 0.0


def test_loss_fifty_fifty_is_ln2():
    loss = weighted_ce_loss(np.array([[0.5, 0.5]]), [0], [1.0, 1.0])
    assert loss == pytest.approx(np.log(2.0), abs=1e-12)


def test_loss_weights_cancel_when_rows_match():
    probs = np.array([[0.5, 0.5], [0.5, 0.5]])
    loss = weighted_ce_loss(probs, [0, 1], [0.9, 0.1])
    assert loss == pytest.approx(np.log(2.0), abs=1e-12)


def test_uniform_weights_equal_plain_mean():
    rng = rng_from_seed(8)
    logits = rng.standard_normal((16, 5))
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    labels = rng.integers(0, 5, size=16)
    weighted = weighted_ce_loss(probs, labels, np.ones(5))
    plain = float(np.mean(-np.log(probs[np.arange(16), labels])))
    assert weighted == pytest.approx(plain, rel=1e-15)


def test_loss_label_out_of_range():
    with pytest.raises(IndexError):
        weighted_ce_loss(np.array([[0.5, 0.5]]), [2], [1.0, 1.0])
