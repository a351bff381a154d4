"""Dataset directory I/O: PNG images, JSONL scenes and QA records, vocab.

Layout: images/{scene_id}.png (8-bit grayscale), scenes.jsonl,
qa_{train,val,test}.jsonl, vocab.json. Scene ids are disjoint across splits.
"""

import json
import os

import numpy as np
from PIL import Image

from . import synthdata
from .config import GenConfig, QAConfig
from .errors import IntegrityError, UsageError

SPLITS = ("train", "val", "test")


def generate_dataset(out_dir, train_scenes, seed, gen_cfg=None, qa_cfg=None,
                     val_scenes=None, test_scenes=None):
    """Write a full dataset directory; val/test default to 1/4 and 1/3 of train."""
    gen_cfg = GenConfig() if gen_cfg is None else gen_cfg
    qa_cfg = QAConfig() if qa_cfg is None else qa_cfg
    gen_cfg.validate()
    qa_cfg.validate()
    if train_scenes < 1:
        raise UsageError("need at least one training scene")
    counts = {"train": train_scenes,
              "val": round(train_scenes / 4) if val_scenes is None else val_scenes,
              "test": round(train_scenes / 3) if test_scenes is None else test_scenes}
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)

    scenes, qa_by_split = [], {s: [] for s in SPLITS}
    scene_id, qa_id = 0, 0
    for split in SPLITS:
        for _ in range(counts[split]):
            srng = np.random.default_rng((seed, scene_id, 0))
            scene = synthdata.generate_scene(gen_cfg, srng, scene_id=scene_id)
            qrng = np.random.default_rng((seed, scene_id, 1))
            records = synthdata.build_qa(scene, qa_cfg, qrng, start_id=qa_id)
            qa_id += len(records)
            scenes.append(scene)
            qa_by_split[split].extend(records)
            img = (synthdata.rasterize(scene)[:, :, 0] * 255 + 0.5).astype(np.uint8)
            Image.fromarray(img, mode="L").save(
                os.path.join(out_dir, "images", f"{scene_id}.png"))
            scene_id += 1

    with open(os.path.join(out_dir, "scenes.jsonl"), "w") as f:
        for s in scenes:
            f.write(json.dumps(synthdata.scene_to_json(s), sort_keys=True) + "\n")
    for split in SPLITS:
        with open(os.path.join(out_dir, f"qa_{split}.jsonl"), "w") as f:
            for r in qa_by_split[split]:
                f.write(json.dumps(synthdata.record_to_json(r), sort_keys=True) + "\n")
    vocab = {"answers": list(synthdata.ANSWERS),
             "class_weights": [float(w) for w in
                               synthdata.class_weights(qa_by_split["train"])],
             "question_tokens": synthdata.build_token_vocab()}
    with open(os.path.join(out_dir, "vocab.json"), "w") as f:
        json.dump(vocab, f, sort_keys=True, indent=1)
    return counts


def _read_jsonl(path):
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


class Dataset:
    """Loaded dataset directory with cached images and an answer oracle check."""

    def __init__(self, root):
        self.root = root
        for name in ("scenes.jsonl", "vocab.json") + tuple(f"qa_{s}.jsonl" for s in SPLITS):
            if not os.path.exists(os.path.join(root, name)):
                raise UsageError(f"dataset at {root!r} is missing {name}")
        self.scenes = {d["scene_id"]: synthdata.scene_from_json(d)
                       for d in _read_jsonl(os.path.join(root, "scenes.jsonl"))}
        self.qa = {s: [synthdata.record_from_json(d)
                       for d in _read_jsonl(os.path.join(root, f"qa_{s}.jsonl"))]
                   for s in SPLITS}
        with open(os.path.join(root, "vocab.json")) as f:
            self.vocab = json.load(f)
        self._images = {}

    def image(self, scene_id):
        """Grayscale image as float32 (1, H, W) in [0, 1], cached."""
        if scene_id not in self._images:
            path = os.path.join(self.root, "images", f"{scene_id}.png")
            arr = np.asarray(Image.open(path), dtype=np.float32) / 255.0
            self._images[scene_id] = arr[None]
        return self._images[scene_id]

    def verify(self):
        """Recompute every stored answer from scene geometry; check split hygiene."""
        seen = {}
        for split in SPLITS:
            ids = {r.scene_id for r in self.qa[split]}
            for other, other_ids in seen.items():
                if ids & other_ids:
                    raise IntegrityError(f"splits {split} and {other} share scenes")
            seen[split] = ids
            by_id = {r.qa_id: r for r in self.qa[split]}
            for r in self.qa[split]:
                if r.scene_id not in self.scenes:
                    raise IntegrityError(f"qa {r.qa_id}: unknown scene {r.scene_id}")
                synthdata.verify_record(r, self.scenes[r.scene_id])
                if r.related_main is not None:
                    main = by_id.get(r.related_main)
                    if main is None or main.scene_id != r.scene_id or main.qtype != "main":
                        raise IntegrityError(
                            f"qa {r.qa_id}: related_main {r.related_main} invalid")
        return self
