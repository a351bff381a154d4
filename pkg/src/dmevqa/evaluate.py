"""Checkpoint evaluation: eval-mode forward over a split, prediction log
plus metrics report, guarded by the config-hash check."""

import os

from . import batching
from . import checkpoint
from . import metrics
from . import train as trainmod
from .dataset import SPLITS, Dataset
from .errors import UsageError


def evaluate(ckpt_path, data_dir, split):
    """Returns (PredictionLog, report dict) for one split."""
    if split not in SPLITS:
        raise UsageError(f"split must be one of {SPLITS}, got {split!r}")
    data = Dataset(data_dir)
    params, model_cfg, manifest = checkpoint.load(ckpt_path)
    checkpoint.check_hash(manifest, model_cfg, data.vocab)
    encoder = trainmod._Encoder(data, model_cfg)
    log = trainmod._eval_split(encoder, data.qa[split], params, model_cfg)
    relations = batching.build_relations(data.qa[split])
    report = metrics.build_report(log, relations)
    return log, report


def evaluate_to_dir(ckpt_path, data_dir, split, out_dir):
    """Write metrics_{split}.json and predictions_{split}.jsonl into out_dir."""
    log, report = evaluate(ckpt_path, data_dir, split)
    os.makedirs(out_dir, exist_ok=True)
    metrics.save_report(report, os.path.join(out_dir, f"metrics_{split}.json"))
    metrics.save_log(log, os.path.join(out_dir, f"predictions_{split}.jsonl"))
    return log, report
