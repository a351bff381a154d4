"""Checkpoint container: a zip holding raw little-endian float32 parameter
buffers under params/, a model_config.txt kv file, and a manifest.json with
shapes, the config hash, and frozen class weights. Entries use a fixed
timestamp so identical runs produce byte-identical archives.
"""

import io
import json
import os
import zipfile

import numpy as np

from . import autodiff as ad
from . import config as cfgmod
from .errors import IntegrityError, UsageError

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _write(zf, name, payload):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    zf.writestr(info, payload)


def save(path, params, model_cfg, vocab, class_weights, meta=None):
    """Write parameters plus enough metadata to rebuild and verify the model."""
    manifest = {
        "format_version": FORMAT_VERSION,
        "config_hash": cfgmod.config_hash(model_cfg, vocab),
        "class_weights": [float(w) for w in class_weights],
        "params": {k: list(params[k].data.shape) for k in sorted(params)},
        "meta": meta or {},
    }
    with zipfile.ZipFile(path, "w") as zf:
        _write(zf, "manifest.json", json.dumps(manifest, sort_keys=True, indent=1))
        _write(zf, "model_config.txt", cfgmod.to_kv(model_cfg))
        for k in sorted(params):
            buf = np.ascontiguousarray(params[k].data, dtype="<f4").tobytes()
            _write(zf, f"params/{k}.bin", buf)


def load(path):
    """Read a checkpoint; returns (params, model_cfg, manifest)."""
    if not os.path.exists(path):
        raise UsageError(f"checkpoint not found: {path}")
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format_version") != FORMAT_VERSION:
            raise IntegrityError(f"unsupported checkpoint version in {path!r}")
        model_cfg = cfgmod.from_kv(cfgmod.ModelConfig,
                                   cfgmod.parse_kv(zf.read("model_config.txt").decode()))
        params = {}
        for name, shape in manifest["params"].items():
            raw = np.frombuffer(zf.read(f"params/{name}.bin"), dtype="<f4")
            if raw.size != int(np.prod(shape)):
                raise IntegrityError(f"parameter {name} has wrong size in {path!r}")
            params[name] = ad.Tensor(raw.reshape(shape).copy(), requires_grad=True)
    return params, model_cfg, manifest


def check_hash(manifest, model_cfg, vocab):
    """Abort unless the stored hash matches this config and vocabulary."""
    want = cfgmod.config_hash(model_cfg, vocab)
    if manifest["config_hash"] != want:
        raise IntegrityError("checkpoint config hash does not match the dataset "
                             "vocabulary; was it trained on different data?")
