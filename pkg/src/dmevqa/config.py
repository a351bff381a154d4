"""Typed configuration records with key-value text serialization."""

import dataclasses
import hashlib
import json

from .errors import UsageError


@dataclasses.dataclass(frozen=True)
class GenConfig:
    """Knobs for scene generation; grades are sampled to match grade_targets."""
    image_size: int = 64
    grade_targets: tuple = (1 / 3, 1 / 3, 1 / 3)
    exudate_count_min: int = 1
    exudate_count_max: int = 4
    disc_diameter_min: int = 11
    disc_diameter_max: int = 13
    blob_radius_min: float = 1.2
    blob_radius_max: float = 2.2
    exudate_intensity_min: float = 0.7
    exudate_intensity_max: float = 0.8
    fovea_jitter: int = 4

    def validate(self):
        if self.image_size < 32:
            raise UsageError("image_size must be at least 32")
        if len(self.grade_targets) != 3 or min(self.grade_targets) < 0 \
                or abs(sum(self.grade_targets) - 1.0) > 1e-6:
            raise UsageError("grade_targets must be 3 nonnegative values summing to 1")
        if not 1 <= self.exudate_count_min <= self.exudate_count_max:
            raise UsageError("exudate count range must satisfy 1 <= min <= max")
        if self.disc_diameter_min > self.disc_diameter_max or self.disc_diameter_min < 4:
            raise UsageError("disc diameter range invalid")
        if not 1.0 <= self.blob_radius_min <= self.blob_radius_max:
            raise UsageError("blob radius range must start at >= 1 pixel")
        if not 0.7 <= self.exudate_intensity_min <= self.exudate_intensity_max <= 1.0:
            raise UsageError("exudate intensity must stay in [0.7, 1]")
        return self


@dataclasses.dataclass(frozen=True)
class QAConfig:
    """Per-scene question counts and the region-radius distribution.

    Defaults give 14 records per scene: 7.1% main, 21.4% sub, 71.4% ind.
    """
    sub_region_count: int = 1
    ind_region_count: int = 10
    region_radius_min: int = 6
    region_radius_max: int = 14

    def validate(self):
        if self.sub_region_count < 0 or self.ind_region_count < 0:
            raise UsageError("question counts must be nonnegative")
        if not 1 <= self.region_radius_min <= self.region_radius_max:
            raise UsageError("region radius range invalid")
        return self


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    """Network dimensions. Full-scale reference values: word_dim 300,
    question_dim 1024, classifier_hidden 1024, ResNet101 backbone."""
    image_size: int = 64
    channels: int = 1
    conv_stages: tuple = ((16, 3, 2), (32, 3, 2), (64, 3, 2))
    token_vocab_size: int = 32
    word_dim: int = 32
    question_dim: int = 64
    glimpses: int = 2
    dropout_rate: float = 0.25
    classifier_hidden: int = 64
    answer_count: int = 5
    max_q_len: int = 8

    @property
    def feature_dim(self):
        return self.conv_stages[-1][0]

    def validate(self):
        if self.glimpses < 1:
            raise UsageError("glimpses must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise UsageError("dropout_rate must lie in [0, 1)")
        dims = (self.image_size, self.channels, self.token_vocab_size, self.word_dim,
                self.question_dim, self.classifier_hidden, self.answer_count, self.max_q_len)
        if min(dims) <= 0 or not self.conv_stages:
            raise UsageError("all model dimensions must be positive")
        return self


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """One training run: objective, optimizer, schedule, and seeding."""
    data_dir: str = ""
    output_dir: str = ""
    method: str = "consistency"
    lam: float = 0.5
    gamma: float = 1.0
    squint_lambda: float = 0.5
    stop_grad_main: bool = False
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 64
    pair_quota: int = 16
    max_epochs: int = 100
    patience: int = 20
    seed: int = 0

    @property
    def effective_lambda(self):
        return 0.0 if self.method in ("baseline", "squint") else self.lam

    @property
    def effective_squint_lambda(self):
        return self.squint_lambda if self.method == "squint" else 0.0

    def validate(self):
        if self.method not in ("baseline", "consistency", "squint"):
            raise UsageError(f"unknown method {self.method!r}")
        if self.lam < 0 or self.gamma <= 0 or self.squint_lambda < 0:
            raise UsageError("need lambda >= 0, gamma > 0, squint_lambda >= 0")
        if self.patience < 1:
            raise UsageError("patience must be at least 1")
        if self.batch_size < 2 * self.pair_quota or self.pair_quota < 0:
            raise UsageError("need batch_size >= 2 * pair_quota and pair_quota >= 0")
        if self.lr <= 0:
            raise UsageError("learning rate must be positive")
        return self


_TUPLE_FIELDS = {
    "conv_stages": (
        lambda text: tuple(tuple(int(x) for x in part.split(":")) for part in text.split(",")),
        lambda v: ",".join(":".join(str(x) for x in stage) for stage in v),
    ),
    "grade_targets": (
        lambda text: tuple(float(x) for x in text.split(",")),
        lambda v: ",".join(repr(float(x)) for x in v),
    ),
}


def to_kv(cfg):
    """Serialize a config dataclass as sorted `key = value` lines."""
    lines = []
    for f in sorted(dataclasses.fields(cfg), key=lambda f: f.name):
        v = getattr(cfg, f.name)
        if f.name in _TUPLE_FIELDS:
            v = _TUPLE_FIELDS[f.name][1](v)
        elif isinstance(v, float):
            v = repr(v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def parse_kv(text):
    """Parse `key = value` lines; '#' starts a comment, blank lines ignored."""
    out = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {ln} is not `key = value`: {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def from_kv(cls, values):
    """Build a config dataclass from a string-valued mapping."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for k, raw in values.items():
        if k not in fields:
            raise UsageError(f"unknown {cls.__name__} key {k!r}")
        if k in _TUPLE_FIELDS:
            kwargs[k] = _TUPLE_FIELDS[k][0](raw)
            continue
        t = fields[k].type
        if t == "bool" or isinstance(fields[k].default, bool):
            kwargs[k] = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(fields[k].default, int):
            kwargs[k] = int(raw)
        elif isinstance(fields[k].default, float):
            kwargs[k] = float(raw)
        else:
            kwargs[k] = raw
    return cls(**kwargs)


def config_hash(model_cfg, vocab):
    """sha256 over the model config kv text plus the canonical vocabulary JSON."""
    text = to_kv(model_cfg) + json.dumps(vocab, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
