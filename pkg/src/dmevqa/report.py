"""Comparison tables over finished runs plus a textual listing of
inconsistently answered scenes (main right, some related sub wrong)."""

import json
import os
import sys
from collections import defaultdict

import numpy as np

from . import metrics
from .config import RunConfig, from_kv, parse_kv
from .synthdata import ANSWERS

COLUMNS = ("accuracy_overall", "accuracy_grade", "accuracy_whole",
           "accuracy_macula", "accuracy_region", "c1", "c2")
HEADERS = ("overall", "grade", "whole", "macula", "region", "C1", "C2")


def _load_run(run_dir):
    cfg_path = os.path.join(run_dir, "config.txt")
    met_path = os.path.join(run_dir, "metrics_test.json")
    if not (os.path.exists(cfg_path) and os.path.exists(met_path)):
        return None
    with open(cfg_path) as f:
        cfg = from_kv(RunConfig, parse_kv(f.read()))
    with open(met_path) as f:
        return cfg, json.load(f)


def _label(cfg):
    if cfg.method == "baseline":
        return "baseline (lambda=0)"
    if cfg.method == "squint":
        return f"squint (ls={cfg.squint_lambda:g})"
    return f"consistency (lambda={cfg.lam:g}, gamma={cfg.gamma:g})"


def _cell(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return "n/a"
    if len(vals) == 1:
        return f"{vals[0]:.2f}"
    return f"{np.mean(vals):.2f}±{np.std(vals):.2f}"


def collect(run_dirs):
    """Group metrics by objective; skips incomplete run dirs with a warning."""
    groups = defaultdict(list)
    for d in run_dirs:
        loaded = _load_run(d)
        if loaded is None:
            print(f"warning: skipping {d}: missing config.txt or metrics_test.json",
                  file=sys.stderr)
            continue
        cfg, rep = loaded
        groups[(cfg.method, cfg.lam if cfg.method == "consistency" else 0.0,
                cfg.gamma, _label(cfg))].append(rep)
    return groups


def comparison_table(run_dirs):
    """Table-shaped text: one row per objective, mean±std over seeds."""
    groups = collect(run_dirs)
    label_w = max([len(k[3]) for k in groups], default=10) + 2
    lines = ["".join(["method".ljust(label_w), "seeds".rjust(6)]
                     + [h.rjust(14) for h in HEADERS])]
    for key in sorted(groups):
        reps = groups[key]
        cells = [_cell([r[c] for r in reps]) for c in COLUMNS]
        lines.append("".join([key[3].ljust(label_w), str(len(reps)).rjust(6)]
                             + [c.rjust(14) for c in cells]))
    return "\n".join(lines)


def sweep_grid(run_dirs, column="c1"):
    """Table-2-shaped grid of mean values over (gamma rows, lambda columns)."""
    groups = collect(run_dirs)
    cells = defaultdict(list)
    for (method, lam, gamma, _), reps in groups.items():
        lam = lam if method == "consistency" else 0.0
        cells[(gamma, lam)].extend(r[column] for r in reps)
    gammas = sorted({g for g, _ in cells})
    lams = sorted({l for _, l in cells})
    lines = [f"{column} grid (rows gamma, columns lambda)"]
    lines.append("".join(["gamma\\lambda".ljust(14)] +
                         [f"{l:g}".rjust(12) for l in lams]))
    for g in gammas:
        row = [f"{g:g}".ljust(14)]
        for l in lams:
            row.append(_cell(cells.get((g, l), [])).rjust(12))
        lines.append("".join(row))
    return "\n".join(lines)


def inconsistency_listing(run_dir, split="test", limit=10):
    """Scenes where the main was answered correctly but a related sub was not."""
    path = os.path.join(run_dir, f"predictions_{split}.jsonl")
    if not os.path.exists(path):
        return f"(no predictions_{split}.jsonl in {run_dir})"
    log = metrics.load_log(path)
    by_id = {r.qa_id: r for r in log}
    lines = []
    seen = set()
    for r in log:
        if r.related_main is None or r.correct:
            continue
        main = by_id.get(r.related_main)
        if main is None or not main.correct:
            continue
        if main.scene_id not in seen:
            seen.add(main.scene_id)
            if len(seen) > limit:
                lines.append("... (more scenes omitted)")
                break
            lines.append(f"scene {main.scene_id}: main answered "
                         f"{ANSWERS[main.pred]} (correct)")
        lines.append(f"    {r.qtype} qa {r.qa_id}: predicted {ANSWERS[r.pred]}, "
                     f"truth {ANSWERS[r.answer]}")
    if not lines:
        return "(no inconsistent scenes found)"
    return "\n".join(lines)
