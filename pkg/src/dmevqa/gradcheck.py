"""Central-difference verification of reverse-mode gradients.

Three suites: the op set, the loss composites, and an end-to-end micro
model. Points are sampled away from non-differentiable kinks (hinge, relu,
pooling ties) by a margin of 10x the step size.
"""

import numpy as np

from . import autodiff as ad
from . import losses

EPS = 1e-5
KINK_MARGIN = 10 * EPS


def finite_diff_check(f, points, eps=EPS, tol=1e-6):
    """Compare reverse-mode gradients of scalar f(*tensors) to central differences.

    points is a list of float64 arrays; f must be deterministic. Relative
    error uses max(|analytic|, |numeric|, 1e-8) as denominator. Returns a
    dict with max_rel_error, ok, and the worst (arg, coordinate, analytic,
    numeric) entry; non-finite values report as failure.
    """
    base = [np.array(p, dtype=np.float64) for p in points]
    leaves = [ad.Tensor(p.copy(), requires_grad=True) for p in base]
    out = f(*leaves)
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad for p in leaves]
    if not np.isfinite(out.item()) or any(not np.isfinite(g).all() for g in analytic):
        return {"max_rel_error": np.inf, "ok": False, "worst": (0, 0, np.nan, np.nan)}

    def value():
        return float(f(*[ad.Tensor(p) for p in base]).data)

    max_rel, worst = 0.0, (0, 0, 0.0, 0.0)
    for ai, arr in enumerate(base):
        flat = arr.reshape(-1)
        ana_flat = analytic[ai].reshape(-1)
        for ci in range(flat.size):
            orig = flat[ci]
            flat[ci] = orig + eps
            fp = value()
            flat[ci] = orig - eps
            fm = value()
            flat[ci] = orig
            num = (fp - fm) / (2.0 * eps)
            ana = ana_flat[ci]
            rel = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            if not np.isfinite(num):
                rel = np.inf
            if rel > max_rel:
                max_rel, worst = rel, (ai, ci, float(ana), float(num))
    return {"max_rel_error": float(max_rel), "ok": bool(max_rel < tol), "worst": worst}


def _proj(rng, shape):
    r = ad.Tensor(rng.uniform(-1.0, 1.0, size=shape))
    return lambda t: ad.mul(t, r).sum()


def _away_from(rng, shape, lo, hi, kinks, margin=KINK_MARGIN):
    """Uniform sample with every coordinate at least margin from each kink value."""
    while True:
        x = rng.uniform(lo, hi, size=shape)
        if all(np.abs(x - k).min() > margin for k in kinks):
            return x


def _pool_safe(rng, shape, k):
    """Sample so every pooling window's top two values differ by > margin."""
    while True:
        x = rng.uniform(-1.5, 1.5, size=shape)
        b, c, h, w = shape
        ok = True
        for i in range(0, h, k):
            for j in range(0, w, k):
                win = np.sort(x[:, :, i:i + k, j:j + k].reshape(b * c, -1), axis=1)
                if (win[:, -1] - win[:, -2]).min() <= KINK_MARGIN:
                    ok = False
        if ok:
            return x


def check_ops(n_points=100, seed=0, tol=1e-5):
    """Finite-difference every forward op at n_points random points each."""
    rng = np.random.default_rng(seed)
    results = []

    def run(name, out_shape, op, *point_makers):
        worst = {"max_rel_error": 0.0, "ok": True, "worst": None}
        for _ in range(n_points):
            pr = _proj(rng, out_shape)
            pts = [pm() for pm in point_makers]
            rep = finite_diff_check(lambda *ts: pr(op(*ts)), pts, tol=tol)
            if rep["max_rel_error"] >= worst["max_rel_error"]:
                worst = rep
        results.append({"name": name, **worst})

    def r(*shape):
        return lambda: rng.uniform(-1.5, 1.5, size=shape)

    run("add", (2, 3), lambda a, b: a + b, r(2, 3), r(3))
    run("mul", (2, 3), lambda a, b: a * b, r(2, 3), r(2, 1))
    run("matmul", (2, 2), lambda a, b: a @ b, r(2, 3), r(3, 2))
    run("matmul_batched", (2, 2, 2), lambda a, b: a @ b, r(2, 2, 3), r(2, 3, 2))
    run("conv2d", (1, 2, 4, 4),
        lambda x, w, b: ad.conv2d(x, w, b, stride=1, padding=1),
        r(1, 1, 4, 4), r(2, 1, 3, 3), r(2))
    run("conv2d_stride2", (1, 1, 2, 2),
        lambda x, w, b: ad.conv2d(x, w, b, stride=2, padding=0),
        r(1, 2, 5, 5), r(1, 2, 3, 3), r(1))
    run("maxpool2d", (1, 2, 2, 2), lambda x: ad.maxpool2d(x, 2),
        lambda: _pool_safe(rng, (1, 2, 4, 4), 2))
    run("relu", (2, 3), ad.relu, lambda: _away_from(rng, (2, 3), -1.5, 1.5, [0.0]))
    run("hinge", (2, 3), ad.hinge, lambda: _away_from(rng, (2, 3), -1.5, 1.5, [0.0]))
    run("tanh", (2, 3), ad.tanh, r(2, 3))
    run("sigmoid", (2, 3), ad.sigmoid, r(2, 3))
    run("softmax", (3, 5), lambda x: ad.softmax(x, axis=-1), r(3, 5))
    run("softmax_axis0", (3, 5), lambda x: ad.softmax(x, axis=0), r(3, 5))
    run("log", (2, 3), ad.log, lambda: rng.uniform(0.5, 2.0, size=(2, 3)))
    run("clip_min", (2, 3), lambda x: ad.clip_min(x, 0.3),
        lambda: _away_from(rng, (2, 3), -1.5, 1.5, [0.3]))
    idx = rng.integers(0, 5, size=(2, 4))
    run("embedding", (2, 4, 3), lambda w: ad.embedding(w, idx), r(5, 3))
    run("concat", (2, 5), lambda a, b: ad.concat([a, b], axis=1), r(2, 3), r(2, 2))
    run("sum", (1, 3), lambda x: ad.sum_(x, axis=0, keepdims=True), r(4, 3))
    run("mean", (4,), lambda x: ad.mean(x, axis=1), r(4, 3))
    run("reshape", (2, 6), lambda x: ad.reshape(x, (2, 6)), r(3, 4))
    run("transpose", (4, 2, 3), lambda x: ad.transpose(x, (2, 0, 1)), r(2, 3, 4))
    pidx = rng.integers(0, 5, size=4)
    run("pick", (4,), lambda x: ad.pick(x, pidx), r(4, 5))
    run("dropout", (3, 4),
        lambda x: ad.dropout(x, 0.5, np.random.default_rng(77), True), r(3, 4))
    run("spatial_weighted_sum", (2, 2, 3), ad.spatial_weighted_sum,
        r(2, 3, 6), r(2, 2, 6))
    return results


def check_losses(n_points=100, seed=1, tol=1e-6):
    """Finite-difference the consistency hinge and the combined objective."""
    rng = np.random.default_rng(seed)
    gamma = 1.0
    results = []

    def run(name, make):
        worst = {"max_rel_error": 0.0, "ok": True, "worst": None}
        for _ in range(n_points):
            f, pts = make()
            rep = finite_diff_check(f, pts, tol=tol)
            if rep["max_rel_error"] >= worst["max_rel_error"]:
                worst = rep
        results.append({"name": name, **worst})

    def h_pair():
        h_i = rng.uniform(KINK_MARGIN, 2.0, size=3)
        h_j = _away_from(rng, 3, 0.0, 2.0, [gamma])
        return h_i, h_j

    def make_cons():
        h_i, h_j = h_pair()
        return (lambda a, b: losses.cons_loss(a, b, gamma).sum()), [h_i, h_j]

    run("cons_loss", make_cons)

    def logits_with_margin(a_idx):
        while True:
            z = rng.uniform(-2.0, 2.0, size=5)
            p = np.exp(z - z.max())
            p /= p.sum()
            if abs(-np.log(p[a_idx]) - gamma) > KINK_MARGIN:
                return z

    def make_cons_from_dists():
        a_s, a_m = rng.integers(0, 5), rng.integers(0, 5)
        zs = rng.uniform(-2.0, 2.0, size=5)
        zm = logits_with_margin(a_m)

        def f(ls, lm):
            hs = losses.entropies(ad.softmax(ls, axis=-1).reshape(1, -1), np.array([a_s]))
            hm = losses.entropies(ad.softmax(lm, axis=-1).reshape(1, -1), np.array([a_m]))
            return losses.cons_loss(hs, hm, gamma).sum()
        return f, [zs, zm]

    run("cons_loss_from_dists", make_cons_from_dists)

    def make_total():
        b, pairs = 6, [(0, 1), (2, 1), (3, 5)]
        answers = rng.integers(0, 5, size=b)
        weights = rng.uniform(0.5, 2.0, size=5)
        while True:
            z = rng.uniform(-2.0, 2.0, size=(b, 5))
            p = np.exp(z - z.max(axis=1, keepdims=True))
            p /= p.sum(axis=1, keepdims=True)
            hm = -np.log(p[np.array([j for _, j in pairs]), answers[[j for _, j in pairs]]])
            if np.abs(hm - gamma).min() > KINK_MARGIN:
                break

        def f(logits):
            probs = ad.softmax(logits, axis=-1)
            return losses.total_loss(probs, answers, pairs, 0.5, gamma, weights)[0]
        return f, [z]

    run("total_loss", make_total)

    def make_ce():
        a = int(rng.integers(0, 5))
        w = float(rng.uniform(0.5, 2.0))
        z = rng.uniform(-2.0, 2.0, size=5)
        return (lambda l: losses.ce_loss(ad.softmax(l, axis=-1), a, w)), [z]

    run("ce_loss", make_ce)
    return results


def check_model(seed=2, tol=1e-3, n_points=2):
    """Finite-difference the cross-entropy of the full forward pass, micro config."""
    from . import model as vm
    from .config import ModelConfig

    cfg = ModelConfig(image_size=16, channels=1, conv_stages=((4, 3, 2), (8, 3, 2)),
                      word_dim=8, question_dim=8, token_vocab_size=16, glimpses=2,
                      dropout_rate=0.0, classifier_hidden=12, answer_count=5)
    results = []
    rng = np.random.default_rng(seed)
    for pt in range(n_points):
        params = vm.init_params(cfg, np.random.default_rng(seed + 10 + pt), dtype=np.float64)
        names = sorted(params)
        image = rng.uniform(0.0, 1.0, size=(1, cfg.channels, 16, 16))
        tokens = rng.integers(0, cfg.token_vocab_size, size=(1, 8))
        answer = np.array([int(rng.integers(0, 5))])

        def f(*leaves):
            pd = dict(zip(names, leaves))
            p, _ = vm.forward_from_params(image, tokens, pd, cfg, train=False)
            return losses.entropies(p, answer).sum()

        rep = finite_diff_check(f, [params[n].data for n in names], tol=tol)
        ai = rep["worst"][0] if rep["worst"] is not None else 0
        results.append({"name": f"micro_model_point{pt}", **rep,
                        "worst_param": names[ai] if rep["worst"] else None})
    return results


def run_all(include_model=True, op_points=100, loss_points=100):
    """Run every suite; returns (all_ok, entries)."""
    entries = check_ops(n_points=op_points)
    entries += check_losses(n_points=loss_points)
    if include_model:
        entries += check_model()
    return all(e["ok"] for e in entries), entries
