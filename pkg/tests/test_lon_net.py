import numpy as np
import pytest

from laneocc.errors import TrainingDiverged, ValidationError
from laneocc.lon import (
    LonConfig,
    LonDataset,
    desk_preset,
    init_model,
    learning_rate_at,
    load_model,
    lon_forward,
    lon_loss,
    lon_train,
    paper_preset,
    save_model,
    zero_model,
)
from laneocc.lon.config import ACTOR_FEATURE_DIM, PATH_FEATURE_DIM
from laneocc.lon.features import FeatureBundle
from laneocc.lon.net import (
    backward_pass,
    conv_backward,
    conv_forward,
    dense_backward,
    dense_forward,
    forward_logits,
    latent_hw,
    masked_sigmoid_ce,
    sigmoid,
)
from laneocc.labeling import CellLabels


def tiny_config(**over):
    base = dict(
        raster_size=8, raster_resolution=1.0, extent_behind=2.0, extent_ahead=6.0,
        conv1_channels=(4, 4), conv2_channels=(4,), proj_channels=3,
        fc_widths=(8,), num_cells=5, learning_rate=0.05, iterations=10,
        batch_size=2, seed=0)
    base.update(over)
    return LonConfig(**base)


def random_inputs(cfg, B=2, seed=0):
    rng = np.random.default_rng(seed)
    rasters = rng.random((B, 3, cfg.raster_size, cfg.raster_size))
    actor = rng.normal(size=(B, ACTOR_FEATURE_DIM))
    path = rng.normal(size=(B, PATH_FEATURE_DIM))
    labels = rng.choice([-1, 0, 1], size=(B, cfg.num_cells), p=[0.2, 0.4, 0.4])
    return rasters, actor, path, labels


def rel_err(a, b):
    return abs(a - b) / max(abs(a) + abs(b), 1e-8)


# ---------------------------------------------------------------------------
# forward contract


def test_zero_weights_output_half():
    cfg = tiny_config()
    model = zero_model(cfg)
    bundle = FeatureBundle(
        raster=np.random.default_rng(1).random((3, 8, 8)),
        actor=np.ones(ACTOR_FEATURE_DIM),
        path=np.ones(PATH_FEATURE_DIM),
    )
    probs = lon_forward(model, bundle)
    assert probs.shape == (5,)
    assert np.all(probs == 0.5)


def test_output_length_is_forty_under_defaults():
    cfg = desk_preset()
    assert cfg.num_cells == 40
    model = init_model(cfg)
    rng = np.random.default_rng(0)
    bundle = FeatureBundle(
        raster=rng.random((3, cfg.raster_size, cfg.raster_size)),
        actor=rng.normal(size=ACTOR_FEATURE_DIM),
        path=rng.normal(size=PATH_FEATURE_DIM),
    )
    probs = lon_forward(model, bundle)
    assert probs.shape == (40,)
    assert np.all((probs > 0) & (probs < 1))


def test_forward_deterministic_bit_identical():
    cfg = tiny_config()
    model = init_model(cfg)
    rasters, actor, path, _ = random_inputs(cfg, B=3, seed=5)
    a = forward_logits(model, rasters, actor, path)
    b = forward_logits(model, rasters, actor, path)
    assert np.array_equal(a, b)


def test_latent_hw_matches_conv_chain():
    assert latent_hw(desk_preset()) == (4, 4)
    assert latent_hw(paper_preset()) == (19, 19)
    cfg = tiny_config()
    model = init_model(cfg)
    rasters, actor, path, _ = random_inputs(cfg)
    logits = forward_logits(model, rasters, actor, path)
    assert logits.shape == (2, 5)


def test_forward_rejects_bad_shapes():
    cfg = tiny_config()
    model = init_model(cfg)
    with pytest.raises(ValidationError):
        forward_logits(model, np.zeros((2, 3, 9, 9)), np.zeros((2, 7)), np.zeros((2, 15)))


# ---------------------------------------------------------------------------
# loss contract


def test_loss_half_prediction_all_zero_labels():
    probs = np.full(5, 0.5)
    labels = CellLabels(labels=np.zeros(5, dtype=int), horizon=9.0)
    assert lon_loss(probs, labels) == pytest.approx(np.log(2.0), abs=1e-12)


def test_loss_all_sentinels_is_zero():
    probs = np.random.default_rng(0).random(5)
    labels = CellLabels(labels=-np.ones(5, dtype=int), horizon=9.0)
    assert lon_loss(probs, labels) == 0.0


def test_loss_mixed_matches_hand_computed():
    probs = np.array([0.9, 0.2, 0.5, 0.7, 0.4])
    labels = np.array([1, 0, -1, 1, 0])
    want = -(np.log(0.9) + np.log(0.8) + np.log(0.7) + np.log(0.6)) / 4.0
    assert lon_loss(probs, labels) == pytest.approx(want, abs=1e-12)


def test_sentinel_invariance_of_loss_and_gradient():
    logits = np.array([[0.3, -1.2, 2.0, 0.0, -0.5]])
    labels = np.array([[1, -1, 0, 1, -1]])
    loss_a, grad_a = masked_sigmoid_ce(logits, labels)
    logits_b = logits.copy()
    logits_b[0, 1] = 100.0
    logits_b[0, 4] = -50.0
    loss_b, grad_b = masked_sigmoid_ce(logits_b, labels)
    assert loss_a == loss_b
    assert np.array_equal(grad_a[labels >= 0], grad_b[labels >= 0])
    assert np.all(grad_a[labels < 0] == 0.0)
    # the masked CE on logits agrees with the probability-space loss
    assert loss_a == pytest.approx(lon_loss(sigmoid(logits[0]), labels[0]), abs=1e-12)


# ---------------------------------------------------------------------------
# gradient checks


def test_conv_layer_gradients_finite_difference():
    rng = np.random.default_rng(3)
    for stride, pad in ((1, 1), (2, 1), (1, 0)):
        x = rng.normal(size=(2, 3, 6, 6))
        W = rng.normal(size=(4, 3, 3, 3)) * 0.5
        b = rng.normal(size=4) * 0.1
        proj = rng.normal(size=conv_forward(x, W, b, stride, pad)[0].shape)

        def loss_fn(Wv, bv, xv):
            y, _ = conv_forward(xv, Wv, bv, stride, pad)
            return float((y * proj).sum())

        y, cache = conv_forward(x, W, b, stride, pad)
        dx, dW, db = conv_backward(proj, cache)
        h = 1e-6
        for arr, grad in ((W, dW), (b, db), (x, dx)):
            flat = arr.ravel()
            for idx in rng.choice(flat.size, size=min(8, flat.size), replace=False):
                orig = flat[idx]
                flat[idx] = orig + h
                up = loss_fn(W, b, x)
                flat[idx] = orig - h
                dn = loss_fn(W, b, x)
                flat[idx] = orig
                num = (up - dn) / (2 * h)
                assert rel_err(num, grad.ravel()[idx]) < 1e-5


def test_dense_layer_gradients_finite_difference():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 6))
    W = rng.normal(size=(4, 6))
    b = rng.normal(size=4)
    proj = rng.normal(size=(3, 4))
    y, cache = dense_forward(x, W, b)
    dx, dW, db = dense_backward(proj, cache)
    h = 1e-6
    for arr, grad in ((W, dW), (b, db), (x, dx)):
        flat = arr.ravel()
        for idx in rng.choice(flat.size, size=min(6, flat.size), replace=False):
            orig = flat[idx]
            flat[idx] = orig + h
            up = float((dense_forward(x, W, b)[0] * proj).sum())
            flat[idx] = orig - h
            dn = float((dense_forward(x, W, b)[0] * proj).sum())
            flat[idx] = orig
            assert rel_err((up - dn) / (2 * h), grad.ravel()[idx]) < 1e-5


def test_sigmoid_ce_gradient_finite_difference():
    rng = np.random.default_rng(6)
    logits = rng.normal(size=(3, 7))
    labels = rng.choice([-1, 0, 1], size=(3, 7))
    labels[2] = -1  # one fully-ignored sample
    _, grad = masked_sigmoid_ce(logits, labels)
    h = 1e-6
    for _ in range(30):
        i = rng.integers(3)
        j = rng.integers(7)
        logits[i, j] += h
        up, _ = masked_sigmoid_ce(logits, labels)
        logits[i, j] -= 2 * h
        dn, _ = masked_sigmoid_ce(logits, labels)
        logits[i, j] += h
        num = (up - dn) / (2 * h)
        if labels[i, j] < 0:
            assert grad[i, j] == 0.0 and abs(num) < 1e-9
        else:
            assert rel_err(num, grad[i, j]) < 1e-5


def test_full_network_gradients_100_random_parameters():
    # covers every layer type in situ: strided conv, the dense->reshape->
    # 1x1-conv fusion add, stride-1 convs, the FC head, and the masked CE
    cfg = tiny_config()
    model = init_model(cfg)
    rasters, actor, path, labels = random_inputs(cfg, B=2, seed=9)

    def total_loss():
        logits = forward_logits(model, rasters, actor, path)
        return masked_sigmoid_ce(logits, labels)[0]

    logits, caches = forward_logits(model, rasters, actor, path, want_cache=True)
    _, dlogits = masked_sigmoid_ce(logits, labels)
    grads = backward_pass(model, caches, dlogits)
    assert set(grads) == set(model.params)

    rng = np.random.default_rng(123)
    names = list(model.params)
    h = 1e-6
    checked = 0
    while checked < 100:
        name = names[rng.integers(len(names))]
        arr = model.params[name]
        idx = int(rng.integers(arr.size))
        orig = arr.ravel()[idx]
        arr.ravel()[idx] = orig + h
        up = total_loss()
        arr.ravel()[idx] = orig - h
        dn = total_loss()
        arr.ravel()[idx] = orig
        num = (up - dn) / (2 * h)
        ana = grads[name].ravel()[idx]
        assert rel_err(num, ana) < 1e-5, f"{name}[{idx}]: {num} vs {ana}"
        checked += 1


# ---------------------------------------------------------------------------
# training


def _synthetic_dataset(cfg, n, rng, separable=False):
    records_r = rng.random((n, 3, cfg.raster_size, cfg.raster_size))
    actor = rng.normal(size=(n, ACTOR_FEATURE_DIM))
    path = rng.normal(size=(n, PATH_FEATURE_DIM))
    if separable:
        sign = rng.choice([-1.0, 1.0], size=n)
        actor[:, 0] = sign * 2.0
        labels = np.where(sign[:, None] > 0, 1, 0) * np.ones((n, cfg.num_cells), int)
    else:
        labels = rng.choice([0, 1], size=(n, cfg.num_cells))
    rasters = np.round(records_r * 255).astype(np.uint8)
    return LonDataset((3, cfg.raster_size, cfg.raster_size), rasters, actor, path,
                      labels.astype(np.int8))


def test_overfit_identical_samples_strictly_decreases():
    cfg = tiny_config(iterations=50, batch_size=10, learning_rate=0.1, seed=1)
    rng = np.random.default_rng(2)
    one = _synthetic_dataset(cfg, 1, rng)
    data = LonDataset((3, 8, 8),
                      np.repeat(one.rasters, 10, axis=0),
                      np.repeat(one.actor, 10, axis=0),
                      np.repeat(one.path, 10, axis=0),
                      np.repeat(one.labels, 10, axis=0))
    _, trace = lon_train(data, cfg)
    assert len(trace) == 50
    assert all(b < a for a, b in zip(trace[:-1], trace[1:]))


def test_linearly_separable_reaches_low_loss():
    cfg = tiny_config(iterations=600, batch_size=16, learning_rate=0.3, seed=3)
    data = _synthetic_dataset(cfg, 64, np.random.default_rng(7), separable=True)
    model, trace = lon_train(data, cfg)
    assert np.mean(trace[-20:]) < 0.1


def test_learning_rate_schedule():
    cfg = paper_preset()
    assert learning_rate_at(cfg, 0) == pytest.approx(1e-4)
    assert learning_rate_at(cfg, 10999) == pytest.approx(1e-4)
    assert learning_rate_at(cfg, 11000) == pytest.approx(0.9e-4)
    assert learning_rate_at(cfg, 22000) == pytest.approx(0.81e-4)


def test_training_determinism():
    cfg = tiny_config(iterations=30, batch_size=4, seed=11)
    data = _synthetic_dataset(cfg, 12, np.random.default_rng(0))
    m1, t1 = lon_train(data, cfg)
    m2, t2 = lon_train(data, cfg)
    assert t1 == t2
    for name in m1.params:
        assert np.array_equal(m1.params[name], m2.params[name])


def test_divergence_raises():
    cfg = tiny_config(iterations=200, batch_size=4, learning_rate=1e9, seed=0)
    data = _synthetic_dataset(cfg, 8, np.random.default_rng(1))
    with pytest.raises(TrainingDiverged):
        with np.errstate(all="ignore"):
            lon_train(data, cfg)


def test_empty_dataset_rejected():
    cfg = tiny_config()
    with pytest.raises(ValidationError):
        lon_train(LonDataset((3, 8, 8)), cfg)


# ---------------------------------------------------------------------------
# io


def test_model_round_trip(tmp_path):
    cfg = tiny_config()
    model = init_model(cfg)
    p = tmp_path / "m.lon"
    save_model(model, p)
    back = load_model(p)
    assert back.config == cfg
    for name in model.params:
        assert np.array_equal(back.params[name], model.params[name])
    # saving twice is byte-identical
    p2 = tmp_path / "m2.lon"
    save_model(back, p2)
    assert p.read_bytes() == p2.read_bytes()


def test_model_file_rejects_garbage(tmp_path):
    p = tmp_path / "bad.lon"
    p.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValidationError):
        load_model(p)


def test_dataset_round_trip(tmp_path):
    cfg = tiny_config()
    data = _synthetic_dataset(cfg, 9, np.random.default_rng(5))
    p = tmp_path / "d.lds"
    data.save(p)
    back = LonDataset.load(p)
    assert len(back) == 9
    assert np.array_equal(back.rasters, data.rasters)
    assert np.array_equal(back.actor, data.actor)
    assert np.array_equal(back.path, data.path)
    assert np.array_equal(back.labels, data.labels)
    p2 = tmp_path / "d2.lds"
    back.save(p2)
    assert p.read_bytes() == p2.read_bytes()
