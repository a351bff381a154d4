import numpy as np
import pytest

from dmevqa import autodiff as ad
from dmevqa import model
from dmevqa.config import ModelConfig
from dmevqa.errors import ShapeError
from dmevqa.synthdata import Region

CFG = ModelConfig(image_size=32, conv_stages=((8, 3, 2), (16, 3, 2)),
                  token_vocab_size=16, word_dim=8, question_dim=16,
                  glimpses=2, classifier_hidden=16, max_q_len=6)


def _params(seed=0):
    return model.init_params(CFG, np.random.default_rng(seed))


def _tokens(rng, b=1):
    t = rng.integers(1, CFG.token_vocab_size, size=(b, CFG.max_q_len))
    t[:, 4:] = 0
    return t


def test_circle_mask_geometry():
    mask = model.circle_mask(8, 8, center=(3, 2), radius=1.5)
    assert mask[2, 3] and mask[2, 4] and mask[1, 3] and mask[3, 3]
    assert not mask[0, 0] and not mask[4, 4] and not mask[2, 5]
    assert mask.sum() == ((np.arange(8)[None] - 3) ** 2
                          + (np.arange(8)[:, None] - 2) ** 2 <= 1.5 ** 2).sum()


def test_apply_mask_whole_is_identity_copy():
    img = np.random.default_rng(0).random((1, 8, 8))
    out = model.apply_mask(img, Region("whole", (4.0, 4.0), 10.0))
    assert np.array_equal(out, img)
    assert out is not img


def test_apply_mask_zeroes_outside():
    img = np.ones((1, 16, 16))
    reg = Region("custom", (8.0, 8.0), 3.0)
    out = model.apply_mask(img, reg)
    assert out[0, 8, 8] == 1.0
    assert out[0, 0, 0] == 0.0
    inside = model.circle_mask(16, 16, reg.center, reg.radius)
    assert np.array_equal(out[0] != 0, inside)


def test_masking_invariance_outside_pixels_are_bit_irrelevant():
    params = _params()
    rng = np.random.default_rng(1)
    for trial in range(10):
        img = rng.random((1, CFG.image_size, CFG.image_size))
        reg = Region("custom",
                     (float(rng.integers(6, 26)), float(rng.integers(6, 26))),
                     float(rng.integers(3, 9)))
        tokens = _tokens(rng)[0]
        p1, _ = model.forward(img, reg, tokens, params, CFG)
        outside = ~model.circle_mask(CFG.image_size, CFG.image_size,
                                     reg.center, reg.radius)
        img2 = img.copy()
        img2[0][outside] = rng.random(outside.sum())
        p2, _ = model.forward(img2, reg, tokens, params, CFG)
        assert np.array_equal(p1.data, p2.data)


def test_output_is_distribution_and_attention_sums_to_one():
    params = _params()
    rng = np.random.default_rng(2)
    imgs = rng.random((3, 1, CFG.image_size, CFG.image_size))
    p, att = model.forward_from_params(imgs, _tokens(rng, 3), params, CFG)
    assert p.data.shape == (3, CFG.answer_count)
    assert np.allclose(p.data.sum(axis=1), 1.0, atol=1e-6)
    assert (p.data >= 0).all()
    fh = CFG.image_size // 4
    assert att.maps.data.shape == (3, CFG.glimpses, fh, fh)
    assert np.allclose(att.maps.data.sum(axis=(2, 3)), 1.0, atol=1e-6)
    assert (att.maps.data >= 0).all()


def test_all_pad_question_returns_initial_state():
    params = _params()
    h0 = np.random.default_rng(3).normal(size=CFG.question_dim).astype(np.float32)
    params["q_h0"] = ad.Tensor(h0, requires_grad=True)
    tokens = np.zeros((2, CFG.max_q_len), dtype=int)
    h = model.encode_question(tokens, params, CFG)
    assert np.array_equal(h.data, np.broadcast_to(h0, (2, CFG.question_dim)))


def test_pad_suffix_does_not_change_encoding():
    params = _params()
    rng = np.random.default_rng(4)
    toks = rng.integers(1, CFG.token_vocab_size, size=(1, 3))
    short = np.concatenate([toks, np.zeros((1, 3), dtype=int)], axis=1)
    longer = np.concatenate([toks, np.zeros((1, 5), dtype=int)], axis=1)
    h1 = model.encode_question(short, params, CFG)
    h2 = model.encode_question(longer, params, CFG)
    assert np.array_equal(h1.data, h2.data)


def test_eval_forward_is_deterministic():
    params = _params()
    rng = np.random.default_rng(5)
    img = rng.random((1, CFG.image_size, CFG.image_size))
    tokens = _tokens(rng)[0]
    reg = Region("whole", (16.0, 16.0), 23.0)
    p1, _ = model.forward(img, reg, tokens, params, CFG)
    p2, _ = model.forward(img, reg, tokens, params, CFG)
    assert np.array_equal(p1.data, p2.data)


def test_train_mode_dropout_changes_output():
    params = _params()
    rng = np.random.default_rng(6)
    img = rng.random((1, CFG.image_size, CFG.image_size))
    tokens = _tokens(rng)[0]
    reg = Region("whole", (16.0, 16.0), 23.0)
    p_eval, _ = model.forward(img, reg, tokens, params, CFG)
    p_tr1, _ = model.forward(img, reg, tokens, params, CFG, train=True,
                             rng=np.random.default_rng(7))
    p_tr2, _ = model.forward(img, reg, tokens, params, CFG, train=True,
                             rng=np.random.default_rng(8))
    assert not np.array_equal(p_eval.data, p_tr1.data)
    assert not np.array_equal(p_tr1.data, p_tr2.data)


def test_batched_forward_matches_single():
    params = _params()
    rng = np.random.default_rng(9)
    imgs = rng.random((4, 1, CFG.image_size, CFG.image_size)).astype(np.float32)
    tokens = _tokens(rng, 4)
    p_all, _ = model.forward_from_params(imgs, tokens, params, CFG)
    for i in range(4):
        p_one, _ = model.forward_from_params(imgs[i:i + 1], tokens[i:i + 1],
                                             params, CFG)
        assert np.allclose(p_all.data[i], p_one.data[0], atol=1e-6)


def test_encode_image_rejects_wrong_shape():
    params = _params()
    with pytest.raises(ShapeError):
        model.encode_image(ad.Tensor(np.zeros((1, 1, 16, 16))), params, CFG)
    with pytest.raises(ShapeError):
        model.encode_image(ad.Tensor(np.zeros((1, 3, 32, 32))), params, CFG)


def test_init_params_shapes_and_grads():
    params = _params()
    assert params["enc0_w"].data.shape == (8, 1, 3, 3)
    assert params["enc1_w"].data.shape == (16, 8, 3, 3)
    assert params["emb"].data.shape == (16, 8)
    fused = CFG.glimpses * CFG.feature_dim + CFG.question_dim
    assert params["fuse_w"].data.shape == (fused, CFG.classifier_hidden)
    assert params["out_w"].data.shape == (CFG.classifier_hidden, CFG.answer_count)
    assert all(t.requires_grad for t in params.values())
    assert all(t.data.dtype == np.float32 for t in params.values())


def test_whole_forward_differentiable_to_all_params():
    params = _params()
    rng = np.random.default_rng(10)
    imgs = rng.random((2, 1, CFG.image_size, CFG.image_size))
    p, _ = model.forward_from_params(imgs, _tokens(rng, 2), params, CFG)
    loss = ad.mean(ad.neg(ad.log(ad.pick(p, np.array([0, 1])))))
    loss.backward()
    for name, t in params.items():
        assert t.grad is not None, name
        assert np.isfinite(t.grad).all(), name
