"""Training loop: pair-aware batches, Adam, early stopping on validation
overall accuracy. A run directory receives the config snapshot, per-epoch
history JSONL, and the best checkpoint.
"""

import json
import os
import time

import numpy as np

from . import autodiff as ad
from . import batching
from . import checkpoint
from . import losses
from . import metrics
from . import model as vm
from . import optim
from . import synthdata
from .config import ModelConfig, to_kv
from .dataset import Dataset
from .errors import NumericalError


def default_model_config(data, base=None):
    """Model config sized to the dataset's images and token vocabulary."""
    base = base or ModelConfig()
    any_scene = next(iter(data.scenes.values()))
    import dataclasses
    return dataclasses.replace(base, image_size=any_scene.width,
                               token_vocab_size=len(data.vocab["question_tokens"]))


class _Encoder:
    """Turns QA records into masked-image / token-id / answer arrays."""

    def __init__(self, data, model_cfg):
        self.data = data
        self.cfg = model_cfg
        self.by_id = {r.qa_id: r for split in data.qa.values() for r in split}
        vocab = data.vocab["question_tokens"]
        self._tokens = {qa_id: synthdata.encode_tokens(r.question_tokens, vocab,
                                                       model_cfg.max_q_len)
                        for qa_id, r in self.by_id.items()}

    def arrays(self, qa_ids):
        recs = [self.by_id[q] for q in qa_ids]
        images = np.stack([vm.apply_mask(self.data.image(r.scene_id), r.region)
                           for r in recs])
        tokens = np.stack([self._tokens[r.qa_id] for r in recs])
        answers = np.array([r.answer for r in recs], dtype=np.int64)
        return images, tokens, answers


def _eval_split(encoder, records, params, cfg, chunk=256):
    """Eval-mode forward over records; returns a PredictionLog."""
    rows = []
    for at in range(0, len(records), chunk):
        part = records[at:at + chunk]
        images, tokens, answers = encoder.arrays([r.qa_id for r in part])
        p, _ = vm.forward_from_params(images, tokens, params, cfg, train=False)
        preds = np.argmax(p.data, axis=1)
        for r, a, pred, dist in zip(part, answers, preds, p.data):
            rows.append(metrics.LogRow(r.qa_id, r.scene_id, r.qtype, int(a), int(pred),
                                       tuple(float(x) for x in dist), r.related_main))
    return rows


def _snapshot(params):
    return {k: p.data.copy() for k, p in params.items()}


def train(run_cfg, model_cfg=None):
    """Run one training job; returns (checkpoint_path, history rows)."""
    run_cfg.validate()
    data = Dataset(run_cfg.data_dir).verify()
    cfg = model_cfg or default_model_config(data)
    cfg.validate()

    seed_root = np.random.SeedSequence(run_cfg.seed)
    init_rng, batch_rng, drop_rng = (np.random.default_rng(s)
                                     for s in seed_root.spawn(3))
    params = vm.init_params(cfg, init_rng, dtype=np.float32)
    opt = optim.Adam(params, lr=run_cfg.lr, beta1=run_cfg.beta1,
                     beta2=run_cfg.beta2, eps=run_cfg.adam_eps)

    train_records = data.qa["train"]
    weights = synthdata.class_weights(train_records)
    relations = batching.build_relations(train_records)
    val_relations = batching.build_relations(data.qa["val"])
    sampler = batching.Sampler(train_records, relations, run_cfg.batch_size,
                               run_cfg.pair_quota, batch_rng)
    encoder = _Encoder(data, cfg)
    lam = run_cfg.effective_lambda
    slam = run_cfg.effective_squint_lambda

    os.makedirs(run_cfg.output_dir, exist_ok=True)
    with open(os.path.join(run_cfg.output_dir, "config.txt"), "w") as f:
        f.write(to_kv(run_cfg))
    with open(os.path.join(run_cfg.output_dir, "model_config.txt"), "w") as f:
        f.write(to_kv(cfg))

    history = []
    best = {"epoch": -1, "val_accuracy": -1.0, "params": _snapshot(params)}
    hist_path = os.path.join(run_cfg.output_dir, "history.jsonl")
    hist_file = open(hist_path, "w")
    try:
        for epoch in range(run_cfg.max_epochs):
            t0 = time.time()
            sums = np.zeros(4, dtype=np.float64)  # loss, vqa, cons, squint
            n_batches = 0
            for bi, batch in enumerate(sampler.epoch()):
                images, tokens, answers = encoder.arrays(batch.sample_ids)
                p, att = vm.forward_from_params(images, tokens, params, cfg,
                                                train=True, rng=drop_rng)
                loss, vqa_term, cons_term = losses.total_loss(
                    p, answers, batch.pair_positions, lam, run_cfg.gamma, weights,
                    stop_grad_main=run_cfg.stop_grad_main)
                squint_term = 0.0
                if slam > 0 and batch.pair_positions:
                    sub_pos = np.array([i for i, _ in batch.pair_positions])
                    main_pos = np.array([j for _, j in batch.pair_positions])
                    sq = losses.squint_loss(ad.index_rows(att.maps, sub_pos),
                                            ad.index_rows(att.maps, main_pos))
                    squint_term = float(sq.data)
                    loss = loss + sq * slam
                if not np.isfinite(loss.item()):
                    raise NumericalError(f"non-finite loss at epoch {epoch} batch {bi}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                sums += (loss.item(), vqa_term, cons_term, squint_term)
                n_batches += 1

            log = _eval_split(encoder, data.qa["val"], params, cfg)
            val_acc, _ = metrics.accuracy(log, "overall")
            val_c1, _ = metrics.consistency_c1(log, val_relations)
            row = {"epoch": epoch,
                   "loss": sums[0] / n_batches,
                   "vqa": sums[1] / n_batches,
                   "cons": sums[2] / n_batches,
                   "squint": sums[3] / n_batches,
                   "val_accuracy": val_acc,
                   "val_c1": val_c1,
                   "seconds": round(time.time() - t0, 3)}
            history.append(row)
            hist_file.write(json.dumps(row, sort_keys=True) + "\n")
            hist_file.flush()
            if val_acc > best["val_accuracy"]:
                best = {"epoch": epoch, "val_accuracy": val_acc,
                        "params": _snapshot(params)}
            if epoch - best["epoch"] >= run_cfg.patience:
                break
    finally:
        hist_file.close()

    for k, arr in best["params"].items():
        params[k].data = arr
    ckpt_path = os.path.join(run_cfg.output_dir, "checkpoint.zip")
    checkpoint.save(ckpt_path, params, cfg, data.vocab, weights,
                    meta={"best_epoch": best["epoch"],
                          "best_val_accuracy": best["val_accuracy"],
                          "epochs_run": len(history), "seed": run_cfg.seed,
                          "method": run_cfg.method})
    return ckpt_path, history
