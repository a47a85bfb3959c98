import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinject.encoder import (
    Batch,
    EncoderParams,
    TrainConfig,
    clip_loss,
    clip_loss_grad,
    encode_image,
    encode_text,
    init_params,
    load_params,
    save_params,
    train,
    write_loss_trace,
)
from kinject.errors import (
    BadTauError,
    ConfigError,
    DimMismatchError,
    EmptyTokensError,
    ZeroNormError,
)


def random_unit_rows(rng, n, d):
    m = rng.normal(size=(n, d))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def random_batch(rng, n, feature_dim, vocab_size, max_len=6):
    images = rng.normal(size=(n, feature_dim))
    texts = [
        list(rng.integers(0, vocab_size, size=rng.integers(1, max_len + 1)))
        for _ in range(n)
    ]
    return Batch(images=images, texts=texts)


def finite_difference_check(params, batch, h=1e-5):
    """Worst relative error between analytic and central-FD gradients, over
    every entry of every parameter tensor."""
    _, grads = clip_loss_grad(params, batch)
    worst = 0.0

    def loss_at(p):
        return clip_loss_grad(p, batch)[0]

    for name in ("w_img", "e_tok", "w_txt"):
        mat = getattr(params, name)
        analytic = getattr(grads, name)
        for idx in np.ndindex(mat.shape):
            p = params.copy()
            getattr(p, name)[idx] += h
            up = loss_at(p)
            getattr(p, name)[idx] -= 2 * h
            down = loss_at(p)
            fd = (up - down) / (2 * h)
            a = analytic[idx]
            worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-10))
    p = params.copy()
    p.log_tau += h
    up = loss_at(p)
    p.log_tau -= 2 * h
    down = loss_at(p)
    fd = (up - down) / (2 * h)
    worst = max(worst, abs(grads.log_tau - fd) / max(abs(grads.log_tau), abs(fd), 1e-10))
    return worst


# --- config and init ---------------------------------------------------------


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(embed_dim=0)
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=-1)
    with pytest.raises(ConfigError):
        TrainConfig(tau_init=0)


def test_init_deterministic():
    cfg = TrainConfig(embed_dim=8, seed=3)
    a = init_params(cfg, 10, 32)
    b = init_params(cfg, 10, 32)
    assert np.array_equal(a.w_img, b.w_img)
    assert np.array_equal(a.e_tok, b.e_tok)
    assert np.array_equal(a.w_txt, b.w_txt)
    assert a.log_tau == b.log_tau


def test_init_shapes_and_tau():
    p = init_params(TrainConfig(embed_dim=8, tau_init=0.07), 10, 32)
    assert p.w_img.shape == (8, 32)
    assert p.e_tok.shape == (10, 8)
    assert p.w_txt.shape == (8, 8)
    assert abs(p.tau - 0.07) < 1e-12


def test_init_fan_bounds():
    p = init_params(TrainConfig(embed_dim=8), 10, 32)
    s = math.sqrt(6.0 / (32 + 8))
    assert np.abs(p.w_img).max() <= s


# --- encode ops --------------------------------------------------------------


def identity_params(dim, vocab_size):
    return EncoderParams(
        w_img=np.eye(dim),
        e_tok=np.zeros((vocab_size, dim)),
        w_txt=np.eye(dim),
        log_tau=float(np.log(0.07)),
    )


def test_encode_image_hand_example():
    p = identity_params(4, 2)
    x = np.array([3.0, 4.0, 0.0, 0.0])
    assert np.allclose(encode_image(p, x), [0.6, 0.8, 0.0, 0.0], atol=1e-12)


def test_encode_image_zero_vector():
    with pytest.raises(ZeroNormError):
        encode_image(identity_params(4, 2), np.zeros(4))


def test_encode_image_dim_mismatch():
    with pytest.raises(DimMismatchError):
        encode_image(identity_params(4, 2), np.ones(5))


def test_encode_image_scale_invariance():
    rng = np.random.default_rng(0)
    p = init_params(TrainConfig(embed_dim=8, seed=1), 5, 16)
    x = rng.normal(size=16)
    assert np.allclose(encode_image(p, 5 * x), encode_image(p, x), atol=1e-12)


def test_encode_text_single_token_identity():
    p = identity_params(4, 3)
    p.e_tok[1] = [0.0, 3.0, 4.0, 0.0]
    assert np.allclose(encode_text(p, [1]), [0.0, 0.6, 0.8, 0.0], atol=1e-12)


def test_encode_text_mean_idempotent_on_duplicates():
    p = init_params(TrainConfig(embed_dim=8, seed=2), 6, 16)
    assert np.allclose(encode_text(p, [3, 3]), encode_text(p, [3]), atol=1e-12)


def test_encode_text_empty():
    with pytest.raises(EmptyTokensError):
        encode_text(identity_params(4, 2), [])


def test_encode_text_out_of_range_token():
    with pytest.raises(DimMismatchError):
        encode_text(identity_params(4, 2), [2])


@settings(max_examples=30)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_encode_ops_unit_norm(seed):
    rng = np.random.default_rng(seed)
    p = init_params(TrainConfig(embed_dim=8, seed=seed), 12, 16)
    x = rng.normal(size=16)
    ids = list(rng.integers(0, 12, size=rng.integers(1, 6)))
    assert abs(np.linalg.norm(encode_image(p, x)) - 1.0) < 1e-9
    assert abs(np.linalg.norm(encode_text(p, ids)) - 1.0) < 1e-9


# --- loss --------------------------------------------------------------------


def test_loss_single_pair_is_zero():
    e = np.array([[1.0, 0.0]])
    assert abs(clip_loss(e, e, 0.5)) < 1e-12


def test_loss_identity_similarity_closed_form():
    i_set = np.eye(2)
    assert abs(clip_loss(i_set, i_set, 1.0) - 2 * math.log(1 + math.exp(-1))) < 1e-9


def test_loss_constant_similarity_closed_form():
    # all pairwise similarities equal -> uniform softmax -> 2 ln N
    v = np.array([1.0, 0.0])
    i_set = np.tile(v, (4, 1))
    t_set = np.tile(v, (4, 1))
    for tau in (0.07, 1.0, 3.0):
        assert abs(clip_loss(i_set, t_set, tau) - 2 * math.log(4)) < 1e-9


def test_loss_nonnegative_random():
    rng = np.random.default_rng(1)
    for _ in range(20):
        i_set = random_unit_rows(rng, 5, 8)
        t_set = random_unit_rows(rng, 5, 8)
        assert clip_loss(i_set, t_set, 0.5) >= 0.0


def test_loss_approaches_zero_on_diagonal_dominant_s():
    i_set = np.eye(4)
    assert clip_loss(i_set, i_set, 0.01) < 1e-9


def test_loss_symmetry():
    rng = np.random.default_rng(2)
    i_set = random_unit_rows(rng, 6, 8)
    t_set = random_unit_rows(rng, 6, 8)
    assert abs(clip_loss(i_set, t_set, 0.3) - clip_loss(t_set, i_set, 0.3)) < 1e-12


def test_loss_permutation_equivariance():
    rng = np.random.default_rng(3)
    i_set = random_unit_rows(rng, 6, 8)
    t_set = random_unit_rows(rng, 6, 8)
    perm = rng.permutation(6)
    assert abs(clip_loss(i_set, t_set, 0.3) - clip_loss(i_set[perm], t_set[perm], 0.3)) < 1e-12


def test_loss_bad_tau():
    e = np.eye(2)
    with pytest.raises(BadTauError):
        clip_loss(e, e, 0.0)


def test_loss_dim_mismatch():
    with pytest.raises(DimMismatchError):
        clip_loss(np.eye(2), np.eye(3), 1.0)


# --- gradients ---------------------------------------------------------------


def test_gradients_match_finite_differences():
    for seed in (0, 1, 2):
        rng = np.random.default_rng(seed)
        params = init_params(TrainConfig(embed_dim=8, seed=seed), 10, 6)
        batch = random_batch(rng, 4, 6, 10)
        assert finite_difference_check(params, batch) < 1e-5


def test_log_tau_gradient_sign_at_perfect_alignment():
    # with S = identity (every pair perfectly aligned) descent should
    # sharpen the softmax, i.e. push tau down: positive log_tau gradient
    params = identity_params(4, 4)
    params.e_tok = np.eye(4)
    batch = Batch(images=np.eye(4), texts=[[0], [1], [2], [3]])
    _, grads = clip_loss_grad(params, batch)
    assert grads.log_tau > 0.0


def test_duplicated_identical_pair_batch_gradient_scales():
    # a batch of copies of one pair has a constant similarity matrix; the
    # 1/N row/column softmax terms cancel exactly, so the parameter gradient
    # is zero at every batch size and duplication changes nothing
    params = init_params(TrainConfig(embed_dim=8, seed=5), 10, 6)
    x = np.random.default_rng(5).normal(size=6)

    def grads_for(n):
        batch = Batch(images=np.tile(x, (n, 1)), texts=[[3]] * n)
        return clip_loss_grad(params, batch)

    loss_a, grads_a = grads_for(3)
    loss_b, grads_b = grads_for(6)
    assert abs(loss_a - 2 * math.log(3)) < 1e-9
    assert abs(loss_b - 2 * math.log(6)) < 1e-9
    for name in ("w_img", "e_tok", "w_txt"):
        assert np.allclose(getattr(grads_a, name), 0.0, atol=1e-12)
        assert np.allclose(
            getattr(grads_a, name), getattr(grads_b, name), atol=1e-12
        )
    assert abs(grads_a.log_tau) < 1e-12


def test_tau_not_learnable_zero_gradient():
    rng = np.random.default_rng(6)
    params = init_params(TrainConfig(embed_dim=8, seed=6), 10, 6)
    batch = random_batch(rng, 4, 6, 10)
    _, grads = clip_loss_grad(params, batch, tau_learnable=False)
    assert grads.log_tau == 0.0


# --- training ----------------------------------------------------------------


def toy_dataset():
    # 64 samples, 4 classes, orthogonal features, distinct single-token captions
    data = []
    for i in range(64):
        cls = i % 4
        x = np.zeros(8)
        x[cls] = 1.0
        data.append((x, [cls + 1]))
    return data


def test_train_zero_epochs_is_identity():
    cfg = TrainConfig(embed_dim=8, epochs=0, batch_size=16, seed=0)
    params = init_params(cfg, 5, 8)
    trained, trace = train(params, toy_dataset(), cfg)
    assert trace == []
    assert np.array_equal(trained.w_img, params.w_img)
    assert np.array_equal(trained.e_tok, params.e_tok)
    assert trained.log_tau == params.log_tau


def test_train_deterministic():
    cfg = TrainConfig(embed_dim=8, epochs=3, batch_size=16, seed=7)
    params = init_params(cfg, 5, 8)
    a, trace_a = train(params, toy_dataset(), cfg)
    b, trace_b = train(params, toy_dataset(), cfg)
    assert trace_a == trace_b
    assert np.array_equal(a.w_img, b.w_img)
    assert np.array_equal(a.e_tok, b.e_tok)
    assert a.log_tau == b.log_tau


def test_train_separable_toy_set_converges():
    cfg = TrainConfig(embed_dim=8, epochs=50, batch_size=16, seed=0, learning_rate=0.01)
    params = init_params(cfg, 5, 8)
    _, trace = train(params, toy_dataset(), cfg)
    assert trace[0] > 0.0
    assert trace[-1] < 0.2 * trace[0]


def test_train_dataset_smaller_than_batch():
    cfg = TrainConfig(embed_dim=8, epochs=1, batch_size=128)
    params = init_params(cfg, 5, 8)
    with pytest.raises(ConfigError):
        train(params, toy_dataset(), cfg)


def test_train_batch_size_one_rejected():
    cfg = TrainConfig(embed_dim=8, epochs=1, batch_size=1)
    params = init_params(cfg, 5, 8)
    with pytest.raises(ConfigError):
        train(params, toy_dataset(), cfg)


def test_batch_validation():
    with pytest.raises(DimMismatchError):
        Batch(images=np.zeros((2, 4)), texts=[[1]])
    with pytest.raises(DimMismatchError):
        Batch(images=np.zeros((0, 4)), texts=[])


# --- persistence -------------------------------------------------------------


def test_params_round_trip(tmp_path):
    params = init_params(TrainConfig(embed_dim=8, seed=9), 10, 6)
    path = tmp_path / "checkpoint.json"
    save_params(path, params)
    loaded = load_params(path)
    assert np.allclose(loaded.w_img, params.w_img)
    assert np.allclose(loaded.e_tok, params.e_tok)
    assert np.allclose(loaded.w_txt, params.w_txt)
    assert loaded.log_tau == params.log_tau


def test_loss_trace_csv(tmp_path):
    path = tmp_path / "trace.csv"
    write_loss_trace(path, [2.5, 1.25])
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,mean_loss"
    assert lines[1].startswith("0,2.5")
    assert lines[2].startswith("1,1.25")
