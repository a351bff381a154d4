"""Training objectives: weighted cross-entropy, a consistency hinge penalty
on paired sub/main questions, their batch combination, and an
attention-map-matching penalty used as a baseline.
"""

import numpy as np

from . import autodiff as ad
from .errors import ShapeError, UsageError

# applied identically before every log here and in metrics
PROB_FLOOR = 1e-12


def entropies(p, answers):
    """Per-sample -log p[i, a_i] over a (B, A) distribution tensor, unweighted."""
    logp = ad.log(ad.clip_min(p, PROB_FLOOR))
    return ad.neg(ad.pick(logp, answers))


def ce_loss(p, a, weight=1.0):
    """weight * -log(p[a]) for one answer distribution, p[a] clamped at 1e-12."""
    if not isinstance(p, ad.Tensor):
        p = ad.Tensor(np.asarray(p, dtype=np.float64))
    if p.data.ndim != 1:
        raise ShapeError(f"ce_loss expects a distribution vector, got {p.data.shape}")
    if not 0 <= a < p.data.shape[0]:
        raise UsageError(f"answer index {a} out of range for {p.data.shape[0]} answers")
    if weight <= 0:
        raise UsageError("class weight must be positive")
    return entropies(p.reshape(1, -1), np.array([a])).sum() * float(weight)


def cons_loss(h_i, h_j, gamma):
    """H(i) * max(0, gamma - H(j)): sub-question entropy gated by main confidence.

    Zero whenever the main entropy H(j) reaches gamma or the sub is certain.
    Accepts plain floats or Tensors (elementwise over matching shapes).
    """
    if gamma <= 0:
        raise UsageError("gamma must be positive")
    if isinstance(h_i, ad.Tensor) or isinstance(h_j, ad.Tensor):
        if not isinstance(h_i, ad.Tensor):
            h_i = ad.Tensor(np.asarray(h_i, dtype=np.float64))
        if not isinstance(h_j, ad.Tensor):
            h_j = ad.Tensor(np.asarray(h_j, dtype=np.float64))
        if (h_i.data < 0).any() or (h_j.data < 0).any():
            raise UsageError("entropies must be nonnegative")
        return ad.mul(h_i, ad.hinge(gamma - h_j))
    if h_i < 0 or h_j < 0:
        raise UsageError("entropies must be nonnegative")
    return h_i * max(0.0, gamma - h_j)


def total_loss(p, answers, pairs, lam, gamma, class_weights, stop_grad_main=False):
    """Mean weighted cross-entropy over the whole batch plus lam times the
    mean consistency penalty over the listed (sub_pos, main_pos) pairs.

    Pair entropies are unweighted. Returns (loss, vqa_term, cons_term) with
    the two terms also as plain floats for logging.
    """
    answers = np.asarray(answers)
    b = p.data.shape[0]
    h = entropies(p, answers)
    w = np.asarray(class_weights, dtype=p.data.dtype)[answers]
    vqa = ad.mean(ad.mul(h, ad.Tensor(w)))
    pairs = list(pairs)
    for i, j in pairs:
        if not (0 <= i < b and 0 <= j < b):
            raise UsageError(f"pair position ({i}, {j}) outside batch of {b}")
    if pairs:
        h_sub = ad.index_rows(h, np.array([i for i, _ in pairs]))
        h_main = ad.index_rows(h, np.array([j for _, j in pairs]))
        if stop_grad_main:
            h_main = h_main.detach()
        cons = ad.mean(ad.mul(h_sub, ad.hinge(gamma - h_main)))
    else:
        cons = ad.Tensor(np.asarray(0.0, dtype=p.data.dtype))
    loss = vqa + cons * float(lam)
    return loss, float(vqa.data), float(cons.data)


def squint_loss(maps_sub, maps_main):
    """Mean squared difference between paired attention maps."""
    if maps_sub.data.shape != maps_main.data.shape:
        raise ShapeError(
            f"attention map shapes differ: {maps_sub.data.shape} vs {maps_main.data.shape}")
    d = maps_sub - maps_main
    return ad.mean(ad.mul(d, d))
