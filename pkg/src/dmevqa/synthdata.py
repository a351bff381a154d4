"""Procedural generator for fundus-like scenes and their QA records.

Scenes carry exact geometry (fovea, optic disc, bright exudate blobs), the
grade follows the grading rule by construction, and every question's answer
is recomputed from that geometry, so labels are correct by definition.
Grading: grade 0 = no exudates, grade 2 = some blob center within one
disc-diameter of the fovea, grade 1 otherwise.
"""

import dataclasses
import math

import numpy as np

from .errors import IntegrityError, UsageError

ANSWERS = ("no", "yes", "grade0", "grade1", "grade2")
NO, YES = 0, 1
GRADE_BASE = 2  # answer index of grade g is GRADE_BASE + g

QUESTIONS = {
    "main": ("what", "is", "the", "dme", "risk", "grade"),
    "sub_whole": ("are", "there", "hard", "exudates", "in", "this", "image"),
    "sub_macula": ("are", "there", "hard", "exudates", "in", "the", "macula"),
    "sub_region": ("are", "there", "hard", "exudates", "in", "this", "region"),
    "ind_region": ("are", "there", "hard", "exudates", "in", "this", "region"),
}

# rendering constants: background stays below 0.4, exudates start at 0.7
BG_BASE = 0.16
BG_VIGNETTE = 0.12
BG_NOISE = 0.10
DISC_INTENSITY = 0.55
FOVEA_DIP = 0.12


@dataclasses.dataclass(frozen=True)
class Blob:
    center: tuple
    radius: float
    intensity: float


@dataclasses.dataclass(frozen=True)
class Region:
    kind: str  # whole | macula | custom
    center: tuple
    radius: float


@dataclasses.dataclass(frozen=True)
class Scene:
    scene_id: int
    width: int
    height: int
    fovea_center: tuple
    disc_diameter: int
    macula_radius: int
    exudates: tuple
    background_seed: int


@dataclasses.dataclass(frozen=True)
class QARecord:
    qa_id: int
    scene_id: int
    question_tokens: tuple
    qtype: str
    region: Region
    answer: int
    related_main: int = None


def whole_region(scene):
    cx, cy = scene.width / 2, scene.height / 2
    return Region("whole", (cx, cy), math.hypot(cx, cy) + 1)


def macula_region(scene):
    return Region("macula", scene.fovea_center, scene.macula_radius)


def _dist(a, b):
    return math.hypot(a[0] - b[0], a[1] - b[1])


def grade_scene(scene):
    """0 without exudates, 2 with a blob center inside the macular circle, else 1."""
    if not scene.exudates:
        return 0
    r = scene.macula_radius
    if any(_dist(b.center, scene.fovea_center) <= r for b in scene.exudates):
        return 2
    return 1


def region_contains_exudate(scene, region):
    """Yes iff some blob center lies within the region (center-inclusion rule)."""
    if region.kind == "whole":
        return YES if scene.exudates else NO
    hit = any(_dist(b.center, region.center) <= region.radius for b in scene.exudates)
    return YES if hit else NO


def generate_scene(config, rng, scene_id=0):
    """Sample one Scene; the grade is drawn from config.grade_targets first
    and the blob layout is constructed to realize it."""
    config.validate()
    size = config.image_size
    grade = int(rng.choice(3, p=np.asarray(config.grade_targets, dtype=np.float64)))
    d = int(rng.integers(config.disc_diameter_min, config.disc_diameter_max + 1))
    r = d
    j = config.fovea_jitter
    lo, hi = r + 1, size - 2 - r
    if lo > hi:
        raise UsageError("image too small for the macular circle")
    fx = float(np.clip(size / 2 + rng.uniform(-j, j), lo, hi))
    fy = float(np.clip(size / 2 + rng.uniform(-j, j), lo, hi))
    fovea = (fx, fy)

    def blob_at(center):
        return Blob(center,
                    float(rng.uniform(config.blob_radius_min, config.blob_radius_max)),
                    float(rng.uniform(config.exudate_intensity_min,
                                      config.exudate_intensity_max)))

    def anywhere():
        return (float(rng.uniform(2, size - 3)), float(rng.uniform(2, size - 3)))

    def outside_macula():
        while True:
            c = anywhere()
            if _dist(c, fovea) > r + 1.5:
                return c

    def inside_macula():
        ang = rng.uniform(0, 2 * math.pi)
        rad = (r - 1.5) * math.sqrt(rng.uniform(0, 1))
        return (fx + rad * math.cos(ang), fy + rad * math.sin(ang))

    blobs = []
    if grade > 0:
        n = int(rng.integers(config.exudate_count_min, config.exudate_count_max + 1))
        if grade == 1:
            blobs = [blob_at(outside_macula()) for _ in range(n)]
        else:
            blobs = [blob_at(inside_macula())]
            blobs += [blob_at(anywhere()) for _ in range(n - 1)]
    scene = Scene(scene_id, size, size, fovea, d, r, tuple(blobs),
                  int(rng.integers(0, 2 ** 31)))
    assert grade_scene(scene) == grade
    return scene


def _disc_center(scene, rng):
    """Deterministic disc placement a couple of diameters away from the fovea."""
    size = scene.width
    half = scene.disc_diameter / 2
    for dist_mul in (2.5, 2.0, 1.5, 1.2):
        dist = dist_mul * scene.disc_diameter
        for _ in range(64):
            ang = rng.uniform(0, 2 * math.pi)
            cx = scene.fovea_center[0] + dist * math.cos(ang)
            cy = scene.fovea_center[1] + dist * math.sin(ang)
            if half + 1 <= cx <= size - 2 - half and half + 1 <= cy <= size - 2 - half:
                return cx, cy
    return size / 2, size / 2


def rasterize(scene):
    """Render the scene to a (H, W, 1) float image in [0, 1], pure in the scene."""
    h, w = scene.height, scene.width
    rng = np.random.default_rng(scene.background_seed)
    yy, xx = np.mgrid[:h, :w].astype(np.float64)
    cx, cy = w / 2, h / 2
    d2 = ((xx - cx) ** 2 + (yy - cy) ** 2) / (cx ** 2 + cy ** 2)
    img = BG_BASE + BG_VIGNETTE * (1.0 - d2) + rng.uniform(0, BG_NOISE, size=(h, w))

    fx, fy = scene.fovea_center
    fd = np.sqrt((xx - fx) ** 2 + (yy - fy) ** 2)
    img -= FOVEA_DIP * np.exp(-((fd / (scene.macula_radius / 2.0)) ** 2))

    dx, dy = _disc_center(scene, rng)
    dd = np.sqrt((xx - dx) ** 2 + (yy - dy) ** 2)
    half = scene.disc_diameter / 2
    disc = DISC_INTENSITY * np.clip((half + 1.0 - dd) / 1.5, 0.0, 1.0)
    img = np.maximum(img, disc)

    for b in scene.exudates:
        bd = np.sqrt((xx - b.center[0]) ** 2 + (yy - b.center[1]) ** 2)
        blob = b.intensity * np.clip((1.2 * b.radius - bd) / (0.4 * b.radius), 0.0, 1.0)
        img = np.maximum(img, blob)

    return np.clip(img, 0.0, 1.0)[:, :, None]


def build_qa(scene, qa_config, rng, start_id=0):
    """One main + one whole-sub + one macula-sub + fovea-centered region subs
    (all related to the main) plus unrelated region questions."""
    qa_config.validate()
    records = []
    next_id = start_id

    def emit(qtype, region, answer, related=None):
        nonlocal next_id
        records.append(QARecord(next_id, scene.scene_id, QUESTIONS[qtype], qtype,
                                region, answer, related))
        next_id += 1

    main_id = next_id
    emit("main", whole_region(scene), GRADE_BASE + grade_scene(scene))
    emit("sub_whole", whole_region(scene),
         region_contains_exudate(scene, whole_region(scene)), main_id)
    mac = macula_region(scene)
    emit("sub_macula", mac, region_contains_exudate(scene, mac), main_id)

    def rand_radius():
        return float(rng.integers(qa_config.region_radius_min,
                                  qa_config.region_radius_max + 1))

    for _ in range(qa_config.sub_region_count):
        reg = Region("custom", scene.fovea_center, rand_radius())
        emit("sub_region", reg, region_contains_exudate(scene, reg), main_id)
    for _ in range(qa_config.ind_region_count):
        rad = rand_radius()
        cx = float(rng.uniform(rad, scene.width - 1 - rad))
        cy = float(rng.uniform(rad, scene.height - 1 - rad))
        reg = Region("custom", (cx, cy), rad)
        emit("ind_region", reg, region_contains_exudate(scene, reg))
    return records


def verify_record(record, scene):
    """Recompute the stored answer from scene geometry; raise on mismatch."""
    if record.scene_id != scene.scene_id:
        raise IntegrityError(f"qa {record.qa_id}: scene mismatch")
    if record.qtype == "main":
        want = GRADE_BASE + grade_scene(scene)
    else:
        want = region_contains_exudate(scene, record.region)
    if record.answer != want:
        raise IntegrityError(
            f"qa {record.qa_id}: stored answer {record.answer}, geometry says {want}")


def build_token_vocab():
    """Token-id mapping over the question templates, with pad at 0 and unk at 1."""
    tokens = sorted({t for q in QUESTIONS.values() for t in q})
    vocab = {"<pad>": 0, "<unk>": 1}
    for t in tokens:
        vocab[t] = len(vocab)
    return vocab


def encode_tokens(tokens, vocab, max_len):
    """Map token strings to padded id arrays; unknown tokens become unk."""
    ids = [vocab.get(t, 1) for t in tokens[:max_len]]
    return np.array(ids + [0] * (max_len - len(ids)), dtype=np.int64)


def class_weights(records):
    """Inverse answer-frequency weights over the given records, mean 1."""
    counts = np.zeros(len(ANSWERS))
    for r in records:
        counts[r.answer] += 1
    inv = 1.0 / np.maximum(counts, 1.0)
    return inv / inv.mean()


def scene_to_json(scene):
    return {"scene_id": scene.scene_id, "width": scene.width, "height": scene.height,
            "fovea_center": list(scene.fovea_center),
            "disc_diameter": scene.disc_diameter, "macula_radius": scene.macula_radius,
            "exudates": [{"center": list(b.center), "radius": b.radius,
                          "intensity": b.intensity} for b in scene.exudates],
            "background_seed": scene.background_seed}


def scene_from_json(d):
    return Scene(d["scene_id"], d["width"], d["height"], tuple(d["fovea_center"]),
                 d["disc_diameter"], d["macula_radius"],
                 tuple(Blob(tuple(b["center"]), b["radius"], b["intensity"])
                       for b in d["exudates"]),
                 d["background_seed"])


def record_to_json(r):
    return {"qa_id": r.qa_id, "scene_id": r.scene_id,
            "question_tokens": list(r.question_tokens), "qtype": r.qtype,
            "region": {"kind": r.region.kind, "center": list(r.region.center),
                       "radius": r.region.radius},
            "answer": r.answer, "related_main": r.related_main}


def record_from_json(d):
    reg = d["region"]
    return QARecord(d["qa_id"], d["scene_id"], tuple(d["question_tokens"]), d["qtype"],
                    Region(reg["kind"], tuple(reg["center"]), reg["radius"]),
                    d["answer"], d["related_main"])
