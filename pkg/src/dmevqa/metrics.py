"""Per-type accuracy and the two consistency scores over prediction logs.

C1: of the related sub-questions whose main was answered correctly, the
percentage answered correctly themselves. C2: of the main questions whose
related subs were all correct (vacuously true with no subs), the percentage
answered correctly. Undefined metrics are reported as None with their zero
denominator, never as 0 or 100.
"""

import dataclasses
import json

from .errors import UsageError

FILTERS = {
    "overall": None,
    "grade": ("main",),
    "whole": ("sub_whole",),
    "macula": ("sub_macula",),
    "region": ("sub_region", "ind_region"),
    "sub_region": ("sub_region",),
    "ind_region": ("ind_region",),
}


@dataclasses.dataclass(frozen=True)
class LogRow:
    qa_id: int
    scene_id: int
    qtype: str
    answer: int
    pred: int
    dist: tuple
    related_main: int = None

    @property
    def correct(self):
        return self.pred == self.answer


def accuracy(log, type_filter):
    """(percentage, denominator); percentage is None on an empty filter."""
    if type_filter not in FILTERS:
        raise UsageError(f"unknown accuracy filter {type_filter!r}")
    types = FILTERS[type_filter]
    rows = [r for r in log if types is None or r.qtype in types]
    if not rows:
        return None, 0
    return 100.0 * sum(r.correct for r in rows) / len(rows), len(rows)


def consistency_c1(log, relations):
    """(percentage, denominator) over related subs whose main was correct."""
    by_id = {r.qa_id: r for r in log}
    num = den = 0
    for r in log:
        if r.related_main is None:
            continue
        main = by_id.get(r.related_main)
        if main is None or not main.correct:
            continue
        den += 1
        num += r.correct
    if den == 0:
        return None, 0
    return 100.0 * num / den, den


def consistency_c2(log, relations):
    """(percentage, denominator) over mains whose related subs were all correct."""
    by_id = {r.qa_id: r for r in log}
    num = den = 0
    for r in log:
        if r.qtype != "main":
            continue
        subs = [by_id[s] for s in relations.main_to_subs.get(r.qa_id, ()) if s in by_id]
        if all(s.correct for s in subs):
            den += 1
            num += r.correct
    if den == 0:
        return None, 0
    return 100.0 * num / den, den


def build_report(log, relations):
    """Flat metrics dict with a value and denominator per entry."""
    report = {}
    for name in FILTERS:
        value, den = accuracy(log, name)
        report[f"accuracy_{name}"] = value
        report[f"accuracy_{name}_den"] = den
    for name, fn in (("c1", consistency_c1), ("c2", consistency_c2)):
        value, den = fn(log, relations)
        report[name] = value
        report[f"{name}_den"] = den
    return report


def log_row_to_json(r):
    return {"qa_id": r.qa_id, "scene_id": r.scene_id, "qtype": r.qtype,
            "answer": r.answer, "pred": r.pred, "dist": list(r.dist),
            "related_main": r.related_main}


def log_row_from_json(d):
    return LogRow(d["qa_id"], d["scene_id"], d["qtype"], d["answer"], d["pred"],
                  tuple(d["dist"]), d["related_main"])


def save_report(report, path):
    with open(path, "w") as f:
        json.dump(report, f, sort_keys=True, indent=1)
        f.write("\n")


def save_log(log, path):
    with open(path, "w") as f:
        for r in log:
            f.write(json.dumps(log_row_to_json(r), sort_keys=True) + "\n")


def load_log(path):
    with open(path) as f:
        return [log_row_from_json(json.loads(line)) for line in f if line.strip()]
