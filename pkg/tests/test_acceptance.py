"""End-to-end acceptance checks, one test per criterion.

Run with `pytest tests/test_acceptance.py -s` to see one pass/fail line per
criterion. The directional-training criteria (5 and 6) train nine short
models and dominate the runtime; everything else finishes in seconds to a
couple of minutes.
"""

import math
import time

import numpy as np
import pytest

from dmevqa import autodiff as ad
from dmevqa import batching, gradcheck, losses, metrics, synthdata
from dmevqa import model as vm
from dmevqa import train as trainmod
from dmevqa.config import GenConfig, QAConfig, RunConfig
from dmevqa.dataset import Dataset, generate_dataset
from dmevqa.evaluate import evaluate
from dmevqa.synthdata import Region

from test_metrics import _brute_force, _random_log, _relations, _row


def _report(num, ok, detail):
    print(f"\ncriterion {num}: {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, f"criterion {num}: {detail}"


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    root = str(tmp_path_factory.mktemp("accept") / "bench")
    t0 = time.time()
    counts = generate_dataset(root, 600, seed=11)
    assert counts == {"train": 600, "val": 150, "test": 200}
    print(f"\n[bench dataset 600/150/200 generated in {time.time() - t0:.1f}s]")
    return root


@pytest.fixture(scope="module")
def sweep(bench_dir, tmp_path_factory):
    """Train 3 seeds x lambda in {0, 0.2, 0.5}; returns per-cell metrics."""
    out_root = tmp_path_factory.mktemp("runs")
    cells = {}
    for lam, method in ((0.0, "baseline"), (0.2, "consistency"),
                        (0.5, "consistency")):
        t0 = time.time()
        c1s, accs = [], []
        for seed in (0, 1, 2):
            cfg = RunConfig(data_dir=bench_dir,
                            output_dir=str(out_root / f"lam{lam}_s{seed}"),
                            method=method, lam=lam, gamma=1.0, lr=3e-4,
                            max_epochs=1, patience=1, seed=seed)
            ckpt, _ = trainmod.train(cfg)
            _, rep = evaluate(ckpt, bench_dir, "test")
            c1s.append(rep["c1"])
            accs.append(rep["accuracy_overall"])
        cells[lam] = {"c1": float(np.mean(c1s)), "c1_per_seed": c1s,
                      "acc": float(np.mean(accs)), "seconds": time.time() - t0}
        print(f"[lambda={lam}: mean C1 {cells[lam]['c1']:.2f} "
              f"{[round(c, 1) for c in c1s]}, mean acc {cells[lam]['acc']:.2f}, "
              f"{cells[lam]['seconds']:.0f}s]")
    return cells


def test_criterion_1_loss_unit_values():
    checks = []

    def ce(p_true, w=1.0):
        dist = np.full(5, (1 - p_true) / 4)
        dist[0] = p_true
        return float(losses.ce_loss(dist, 0, w).data)

    checks.append(abs(ce(0.2) - math.log(5)) < 1e-9)
    checks.append(abs(ce(0.25, w=2.0) - 2.772588722239781) < 1e-9)

    checks.append(abs(losses.cons_loss(0.5, 0.2, 1.0) - 0.40) < 1e-9)
    checks.append(losses.cons_loss(7.3, 1.2, 1.0) == 0.0)
    checks.append(losses.cons_loss(0.0, 0.0, 1.0) == 0.0)

    p = np.zeros((2, 5))
    p[0] = [0.5, 0.5 / 4, 0.5 / 4, 0.5 / 4, 0.5 / 4]
    p[1, 0] = math.exp(-0.2)
    p[1, 1:] = (1 - math.exp(-0.2)) / 4
    total, _, _ = losses.total_loss(ad.Tensor(p), np.array([0, 0]), [(0, 1)],
                                    0.5, 1.0, np.ones(5))
    want = 0.5 * (math.log(2) + 0.2) + 0.5 * (math.log(2) * 0.8)
    checks.append(abs(float(total.data) - 0.72383) < 1e-5)
    checks.append(abs(float(total.data) - want) < 1e-12)
    _report(1, all(checks),
            f"loss unit values reproduce hand-evaluated examples "
            f"({sum(checks)}/{len(checks)} exact within tolerance)")


def test_criterion_2_gradient_verification():
    t0 = time.time()
    ok_all, entries = gradcheck.run_all(include_model=True, op_points=100,
                                        loss_points=100)
    elapsed = time.time() - t0
    by_name = {e["name"]: e for e in entries}
    loss_names = ("cons_loss", "cons_loss_from_dists", "total_loss", "ce_loss")
    loss_worst = max(by_name[n]["max_rel_error"] for n in loss_names)
    model_worst = max(e["max_rel_error"] for e in entries
                      if e["name"].startswith("micro_model"))
    ok = (ok_all and loss_worst < 1e-6 and model_worst < 1e-3 and elapsed < 60)
    _report(2, ok,
            f"gradcheck all {len(entries)} entries ok={ok_all}, loss composites "
            f"max rel err {loss_worst:.2e} < 1e-6, micro model {model_worst:.2e} "
            f"< 1e-3, {elapsed:.1f}s < 60s")


def test_criterion_3_metric_oracle_equivalence():
    t0 = time.time()
    rng = np.random.default_rng(123)
    mismatches = 0
    for _ in range(1000):
        log = _random_log(rng)
        rel = _relations(log)
        got = (metrics.consistency_c1(log, rel), metrics.consistency_c2(log, rel))
        if got != _brute_force(log):
            mismatches += 1
    c1_log = [
        _row(0, "main", 2, 2, scene_id=0),
        _row(1, "sub_whole", 1, 1, scene_id=0, related=0),
        _row(2, "sub_macula", 0, 0, scene_id=0, related=0),
        _row(3, "main", 3, 3, scene_id=1),
        _row(4, "sub_whole", 1, 1, scene_id=1, related=3),
        _row(5, "sub_macula", 0, 1, scene_id=1, related=3),
    ]
    c2_log = [
        _row(0, "main", 2, 2, scene_id=0),
        _row(1, "sub_whole", 1, 1, scene_id=0, related=0),
        _row(2, "main", 3, 4, scene_id=1),
        _row(3, "sub_whole", 0, 0, scene_id=1, related=2),
    ]
    c1, _ = metrics.consistency_c1(c1_log, _relations(c1_log))
    c2, _ = metrics.consistency_c2(c2_log, _relations(c2_log))
    elapsed = time.time() - t0
    ok = mismatches == 0 and c1 == 75.0 and c2 == 50.0 and elapsed < 30
    _report(3, ok,
            f"C1/C2 match brute force on 1000 random logs ({mismatches} "
            f"mismatches), worked examples C1={c1} C2={c2}, {elapsed:.1f}s < 30s")


def test_criterion_4_masking_invariance(bench_dir):
    t0 = time.time()
    data = Dataset(bench_dir)
    cfg = trainmod.default_model_config(data)
    params = vm.init_params(cfg, np.random.default_rng(0))
    rng = np.random.default_rng(7)
    scene_ids = list(data.scenes)
    vocab = data.vocab["question_tokens"]
    tokens = synthdata.encode_tokens(
        synthdata.QUESTIONS["sub_region"], vocab, cfg.max_q_len)
    violations = 0
    for _ in range(100):
        sid = scene_ids[rng.integers(0, len(scene_ids))]
        img = data.image(sid)
        reg = Region("custom",
                     (float(rng.integers(8, 56)), float(rng.integers(8, 56))),
                     float(rng.integers(4, 16)))
        p1, _ = vm.forward(img, reg, tokens, params, cfg)
        outside = ~vm.circle_mask(64, 64, reg.center, reg.radius)
        noisy = img.copy()
        noisy[0][outside] = rng.random(int(outside.sum()))
        p2, _ = vm.forward(noisy, reg, tokens, params, cfg)
        if not np.array_equal(p1.data, p2.data):
            violations += 1
    elapsed = time.time() - t0
    ok = violations == 0 and elapsed < 60
    _report(4, ok,
            f"eval forward bit-identical under out-of-region pixel noise for "
            f"100 random (image, region) pairs ({violations} violations), "
            f"{elapsed:.1f}s < 60s")


def test_criterion_5_directional_consistency_gain(sweep):
    base, cons = sweep[0.0], sweep[0.5]
    delta = cons["c1"] - base["c1"]
    acc_drop = base["acc"] - cons["acc"]
    budget = base["seconds"] + cons["seconds"]
    ok = delta >= 2.0 and acc_drop <= 1.0 and budget <= 1800
    _report(5, ok,
            f"mean C1 {cons['c1']:.2f} (consistency) vs {base['c1']:.2f} "
            f"(baseline): delta {delta:+.2f} >= 2, accuracy {cons['acc']:.2f} "
            f"vs {base['acc']:.2f} (drop {acc_drop:+.2f} <= 1), "
            f"{budget:.0f}s <= 1800s")


def test_criterion_6_lambda_dose_response(sweep):
    c1_0, c1_2, c1_5 = (sweep[l]["c1"] for l in (0.0, 0.2, 0.5))
    extra = sweep[0.2]["seconds"]
    ok = c1_5 >= c1_2 >= c1_0 and extra <= 900
    _report(6, ok,
            f"mean C1 monotone in lambda: {c1_5:.2f} (0.5) >= {c1_2:.2f} "
            f"(0.2) >= {c1_0:.2f} (0), extra cell {extra:.0f}s <= 900s")


def test_criterion_7_sampler_and_data_integrity(bench_dir):
    t0 = time.time()
    data = Dataset(bench_dir)
    records = data.qa["train"]
    relations = batching.build_relations(records)
    by_id = {r.qa_id: r for r in records}
    rng = np.random.default_rng(3)
    violations = 0
    for _ in range(1000):
        batch = batching.next_batch(records, relations, 64, 16, rng)
        if len(batch.pair_positions) != 16:
            violations += 1
            continue
        for si, mi in batch.pair_positions:
            sub, main = by_id[batch.sample_ids[si]], by_id[batch.sample_ids[mi]]
            if (main.qtype != "main" or sub.related_main != main.qa_id
                    or sub.scene_id != main.scene_id):
                violations += 1

    gen_cfg, qa_cfg = GenConfig(), QAConfig()
    n_records, mism, counts = 0, 0, {"main": 0, "sub": 0, "ind": 0}
    scene_id = 0
    while n_records < 10000:
        scene = synthdata.generate_scene(
            gen_cfg, np.random.default_rng((77, scene_id, 0)), scene_id=scene_id)
        recs = synthdata.build_qa(
            scene, qa_cfg, np.random.default_rng((77, scene_id, 1)),
            start_id=n_records)
        for r in recs:
            try:
                synthdata.verify_record(r, scene)
            except Exception:
                mism += 1
            key = ("main" if r.qtype == "main"
                   else "ind" if r.qtype == "ind_region" else "sub")
            counts[key] += 1
        n_records += len(recs)
        scene_id += 1
    props = {k: 100.0 * v / n_records for k, v in counts.items()}
    target = {"main": 4.4, "sub": 21.4, "ind": 74.2}
    prop_ok = all(abs(props[k] - target[k]) <= 3.0 for k in target)
    elapsed = time.time() - t0
    ok = violations == 0 and mism == 0 and prop_ok and elapsed < 120
    _report(7, ok,
            f"1000 batches with exact pair quota and zero pairing violations "
            f"({violations}), {n_records} records match the geometric oracle "
            f"({mism} mismatches), proportions main/sub/ind "
            f"{props['main']:.1f}/{props['sub']:.1f}/{props['ind']:.1f} within "
            f"±3 of 4.4/21.4/74.2, {elapsed:.1f}s < 120s")


def test_criterion_8_reproducibility(tmp_path):
    data_dir = str(tmp_path / "data")
    generate_dataset(data_dir, 40, seed=5)
    blobs = []
    for tag in ("r1", "r2"):
        cfg = RunConfig(data_dir=data_dir, output_dir=str(tmp_path / tag),
                        method="consistency", lam=0.5, lr=3e-4, max_epochs=1,
                        patience=1, seed=4)
        ckpt, _ = trainmod.train(cfg)
        log, rep = evaluate(ckpt, data_dir, "test")
        path = tmp_path / tag / "metrics_test.json"
        metrics.save_report(rep, str(path))
        blobs.append(path.read_bytes())
    ok = blobs[0] == blobs[1]
    _report(8, ok,
            f"two identically configured runs (seed 4) produced byte-identical "
            f"metrics JSON ({len(blobs[0])} bytes)")
