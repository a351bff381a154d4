import json
import os

import numpy as np
import pytest
from PIL import Image

from dmevqa import synthdata
from dmevqa.dataset import Dataset, generate_dataset
from dmevqa.errors import IntegrityError, UsageError


@pytest.fixture(scope="module")
def small_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("data") / "small"
    counts = generate_dataset(str(root), 12, seed=5)
    assert counts == {"train": 12, "val": 3, "test": 4}
    return str(root)


def test_layout_and_counts(small_dir):
    assert os.path.exists(os.path.join(small_dir, "scenes.jsonl"))
    assert os.path.exists(os.path.join(small_dir, "vocab.json"))
    data = Dataset(small_dir)
    assert len(data.scenes) == 12 + 3 + 4
    for split, n_scenes in (("train", 12), ("val", 3), ("test", 4)):
        assert len(data.qa[split]) == 14 * n_scenes
    pngs = os.listdir(os.path.join(small_dir, "images"))
    assert len(pngs) == 19 and all(p.endswith(".png") for p in pngs)


def test_explicit_split_sizes(tmp_path):
    counts = generate_dataset(str(tmp_path / "d"), 4, seed=0,
                              val_scenes=2, test_scenes=1)
    assert counts == {"train": 4, "val": 2, "test": 1}
    with pytest.raises(UsageError):
        generate_dataset(str(tmp_path / "e"), 0, seed=0)


def test_generation_is_deterministic(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    generate_dataset(a, 6, seed=9)
    generate_dataset(b, 6, seed=9)
    for name in ("scenes.jsonl", "qa_train.jsonl", "qa_val.jsonl",
                 "qa_test.jsonl", "vocab.json"):
        with open(os.path.join(a, name), "rb") as fa, \
                open(os.path.join(b, name), "rb") as fb:
            assert fa.read() == fb.read(), name
    for i in range(10):
        pa = os.path.join(a, "images", f"{i}.png")
        pb = os.path.join(b, "images", f"{i}.png")
        assert np.array_equal(np.asarray(Image.open(pa)), np.asarray(Image.open(pb)))


def test_different_seeds_differ(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    generate_dataset(a, 6, seed=1)
    generate_dataset(b, 6, seed=2)
    with open(os.path.join(a, "scenes.jsonl")) as fa, \
            open(os.path.join(b, "scenes.jsonl")) as fb:
        assert fa.read() != fb.read()


def test_verify_accepts_clean_dataset(small_dir):
    Dataset(small_dir).verify()


def test_image_matches_rasterized_scene(small_dir):
    data = Dataset(small_dir)
    img = data.image(0)
    assert img.shape == (1, 64, 64) and img.dtype == np.float32
    assert 0.0 <= img.min() and img.max() <= 1.0
    expect = synthdata.rasterize(data.scenes[0])[:, :, 0]
    # 8-bit quantization on the way to PNG and back
    assert np.abs(img[0] - expect).max() <= 0.5 / 255 + 1e-6
    assert data.image(0) is img  # cached


def test_vocab_contents(small_dir):
    data = Dataset(small_dir)
    assert data.vocab["answers"] == list(synthdata.ANSWERS)
    assert len(data.vocab["class_weights"]) == len(synthdata.ANSWERS)
    tokens = data.vocab["question_tokens"]
    assert tokens["<pad>"] == 0 and tokens["<unk>"] == 1
    assert len(set(tokens.values())) == len(tokens)


def test_missing_file_raises(tmp_path, small_dir):
    with pytest.raises(UsageError):
        Dataset(str(tmp_path / "nowhere"))


def test_verify_detects_tampered_answer(tmp_path):
    root = str(tmp_path / "d")
    generate_dataset(root, 3, seed=2)
    path = os.path.join(root, "qa_train.jsonl")
    with open(path) as f:
        rows = [json.loads(line) for line in f]
    rows[0]["answer"] = (rows[0]["answer"] + 1) % len(synthdata.ANSWERS)
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")
    with pytest.raises(IntegrityError):
        Dataset(root).verify()


def test_verify_detects_cross_split_scene(tmp_path):
    root = str(tmp_path / "d")
    generate_dataset(root, 3, seed=3)
    train_path = os.path.join(root, "qa_train.jsonl")
    val_path = os.path.join(root, "qa_val.jsonl")
    with open(train_path) as f:
        first_train = f.readline()
    with open(val_path, "a") as f:
        f.write(first_train)
    with pytest.raises(IntegrityError):
        Dataset(root).verify()


def test_verify_detects_dangling_related_main(tmp_path):
    root = str(tmp_path / "d")
    generate_dataset(root, 3, seed=4)
    path = os.path.join(root, "qa_train.jsonl")
    with open(path) as f:
        rows = [json.loads(line) for line in f]
    sub = next(r for r in rows if r["related_main"] is not None)
    sub["related_main"] = 10 ** 6
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")
    with pytest.raises(IntegrityError):
        Dataset(root).verify()
