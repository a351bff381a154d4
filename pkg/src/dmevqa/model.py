"""The VQA network f(image, question) -> answer distribution.

Pipeline: region mask on raw pixels, small convolutional image encoder,
recurrent question encoder, multi-glimpse spatial attention, concatenation
fusion, classifier with dropout. Answers are a fixed 5-way vocabulary.
"""

import collections

import numpy as np

from . import autodiff as ad
from .errors import ShapeError

PAD_ID = 0
UNK_ID = 1

AttentionOutput = collections.namedtuple("AttentionOutput", ["attended", "maps"])


def circle_mask(height, width, center, radius):
    """Boolean (H, W) mask of pixels within `radius` of center = (x, y)."""
    yy, xx = np.ogrid[:height, :width]
    cx, cy = center
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= radius ** 2


def apply_mask(image, region):
    """Zero every pixel outside the region; whole-kind regions pass through.

    image has trailing (H, W) axes; the output is a fresh array.
    """
    if region.kind == "whole":
        return image.copy()
    h, w = image.shape[-2:]
    mask = circle_mask(h, w, region.center, region.radius)
    return np.where(mask, image, np.zeros((), dtype=image.dtype))


def init_params(cfg, rng, dtype=np.float32):
    """Fresh parameter dict keyed by name, all requiring gradients."""
    def par(name, arr):
        params[name] = ad.Tensor(arr.astype(dtype), requires_grad=True)

    def normal(*shape, std):
        return rng.normal(0.0, std, size=shape)

    params = {}
    cin = cfg.channels
    for i, (filters, k, _pool) in enumerate(cfg.conv_stages):
        par(f"enc{i}_w", normal(filters, cin, k, k, std=np.sqrt(2.0 / (cin * k * k))))
        par(f"enc{i}_b", np.zeros(filters))
        cin = filters
    par("emb", normal(cfg.token_vocab_size, cfg.word_dim, std=0.3))
    par("q_wx", normal(cfg.word_dim, cfg.question_dim, std=np.sqrt(1.0 / cfg.word_dim)))
    par("q_wh", normal(cfg.question_dim, cfg.question_dim,
                       std=np.sqrt(1.0 / cfg.question_dim)))
    par("q_b", np.zeros(cfg.question_dim))
    par("q_h0", np.zeros(cfg.question_dim))
    c = cfg.feature_dim
    par("att_v_w", normal(c, cfg.question_dim, std=np.sqrt(1.0 / c)))
    par("att_v_b", np.zeros(cfg.question_dim))
    par("att_s_w", normal(cfg.question_dim, cfg.glimpses,
                          std=np.sqrt(1.0 / cfg.question_dim)))
    par("att_s_b", np.zeros(cfg.glimpses))
    fused = cfg.glimpses * c + cfg.question_dim
    par("fuse_w", normal(fused, cfg.classifier_hidden, std=np.sqrt(2.0 / fused)))
    par("fuse_b", np.zeros(cfg.classifier_hidden))
    par("out_w", normal(cfg.classifier_hidden, cfg.answer_count,
                        std=np.sqrt(1.0 / cfg.classifier_hidden)))
    par("out_b", np.zeros(cfg.answer_count))
    return params


def encode_image(x, params, cfg):
    """Masked images (B, C, H, W) -> feature maps (B, feature_dim, h, w)."""
    if x.data.shape[2] != cfg.image_size or x.data.shape[1] != cfg.channels:
        raise ShapeError(f"expected (B, {cfg.channels}, {cfg.image_size}, "
                         f"{cfg.image_size}) images, got {x.data.shape}")
    for i, (_filters, k, pool) in enumerate(cfg.conv_stages):
        x = ad.conv2d(x, params[f"enc{i}_w"], params[f"enc{i}_b"],
                      stride=1, padding=k // 2)
        x = ad.relu(x)
        if pool > 1:
            x = ad.maxpool2d(x, pool)
    return x


def encode_question(tokens, params, cfg):
    """Token ids (B, T) -> question embeddings (B, question_dim).

    Pad positions (id 0) leave the recurrent state untouched, so an all-pad
    sequence returns the learned initial state.
    """
    tokens = np.asarray(tokens)
    dtype = params["emb"].data.dtype
    b, t = tokens.shape
    emb = ad.transpose(ad.embedding(params["emb"], tokens), (1, 0, 2))
    h = ad.add(ad.Tensor(np.zeros((b, cfg.question_dim), dtype=dtype)), params["q_h0"])
    for step in range(t):
        x_t = ad.index_rows(emb, np.array([step])).reshape(b, -1)
        h_new = ad.tanh(x_t @ params["q_wx"] + h @ params["q_wh"] + params["q_b"])
        keep = ad.Tensor((tokens[:, step] != PAD_ID).astype(dtype).reshape(b, 1))
        h = keep * h_new + (1.0 - keep) * h
    return h


def attend(v, q, params, cfg):
    """Per-glimpse spatial softmax over scores from projected features plus q."""
    b, c, h, w = v.data.shape
    vflat = v.reshape(b, c, h * w)
    vs = ad.transpose(vflat, (0, 2, 1))
    proj = vs @ params["att_v_w"] + params["att_v_b"]
    joint = ad.tanh(proj + q.reshape(b, 1, cfg.question_dim))
    scores = joint @ params["att_s_w"] + params["att_s_b"]
    maps = ad.softmax(ad.transpose(scores, (0, 2, 1)), axis=-1)
    attended = ad.spatial_weighted_sum(vflat, maps).reshape(b, cfg.glimpses * c)
    return AttentionOutput(attended, maps.reshape(b, cfg.glimpses, h, w))


def fuse_classify(attended, q, params, cfg, train=False, rng=None):
    """Concatenate [v', q], hidden layer with dropout, softmax over answers."""
    x = ad.concat([attended, q], axis=1)
    hidden = ad.relu(x @ params["fuse_w"] + params["fuse_b"])
    hidden = ad.dropout(hidden, cfg.dropout_rate, rng, train)
    return ad.softmax(hidden @ params["out_w"] + params["out_b"], axis=-1)


def forward_from_params(images, tokens, params, cfg, train=False, rng=None):
    """Batch forward over already-masked images; returns (p, AttentionOutput)."""
    dtype = params["emb"].data.dtype
    x = ad.Tensor(np.ascontiguousarray(images, dtype=dtype))
    v = encode_image(x, params, cfg)
    q = encode_question(tokens, params, cfg)
    att = attend(v, q, params, cfg)
    p = fuse_classify(att.attended, q, params, cfg, train=train, rng=rng)
    return p, att


def forward(image, region, tokens, params, cfg, train=False, rng=None):
    """Single-sample forward: mask, encode, attend, classify."""
    masked = apply_mask(np.asarray(image), region)
    p, att = forward_from_params(masked[None], np.asarray(tokens)[None], params, cfg,
                                 train=train, rng=rng)
    return p.reshape(cfg.answer_count), AttentionOutput(
        att.attended.reshape(-1), att.maps.reshape(cfg.glimpses, *att.maps.shape[2:]))
