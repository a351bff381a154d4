"""Mini-batch composition with guaranteed same-scene (sub, main) pairs.

An epoch walks a shuffled permutation of all records through the filler
slots (so every record appears at least once) while mains rotate round-robin
through the pair slots with a uniformly chosen related sub each visit.
"""

import dataclasses
import warnings

import numpy as np

from .errors import IntegrityError


@dataclasses.dataclass
class RelationIndex:
    main_to_subs: dict
    sub_to_main: dict


@dataclasses.dataclass
class Batch:
    sample_ids: list
    pair_positions: list


def build_relations(records):
    """Index related_main links; rejects cross-scene or dangling links."""
    by_id = {r.qa_id: r for r in records}
    main_to_subs, sub_to_main = {}, {}
    for r in records:
        if r.qtype == "main":
            main_to_subs.setdefault(r.qa_id, [])
    for r in records:
        if r.related_main is None:
            continue
        main = by_id.get(r.related_main)
        if main is None or main.qtype != "main":
            raise IntegrityError(f"qa {r.qa_id}: related_main {r.related_main} "
                                 "does not reference a main question")
        if main.scene_id != r.scene_id:
            raise IntegrityError(f"qa {r.qa_id}: related_main crosses scenes "
                                 f"({r.scene_id} vs {main.scene_id})")
        main_to_subs[main.qa_id].append(r.qa_id)
        sub_to_main[r.qa_id] = main.qa_id
    return RelationIndex(main_to_subs, sub_to_main)


def _compose(paired_mains, relations, fillers, rng):
    ids, pairs = [], []
    for m in paired_mains:
        subs = relations.main_to_subs[m]
        s = subs[rng.integers(0, len(subs))]
        pairs.append((len(ids), len(ids) + 1))
        ids.extend([s, m])
    ids.extend(fillers)
    return Batch(ids, pairs)


def next_batch(records, relations, batch_size, pair_quota, rng):
    """One batch: pair_quota (sub, main) pairs plus uniform filler records."""
    mains = sorted(m for m, subs in relations.main_to_subs.items() if subs)
    quota = min(pair_quota, len(mains))
    if quota < pair_quota:
        warnings.warn(f"pair_quota {pair_quota} clamped to {quota} available mains")
    if batch_size < 2 * quota:
        raise IntegrityError(f"batch_size {batch_size} < 2 * pair_quota {quota}")
    chosen = [mains[i] for i in rng.choice(len(mains), size=quota, replace=False)] \
        if quota else []
    all_ids = [r.qa_id for r in records]
    fill = [all_ids[i] for i in rng.integers(0, len(all_ids),
                                             size=batch_size - 2 * quota)]
    return _compose(chosen, relations, fill, rng)


class Sampler:
    """Stateful epoch sampler: filler permutation covers every record once;
    paired mains rotate round-robin with one uniformly sampled sub each."""

    def __init__(self, records, relations, batch_size, pair_quota, rng):
        self.records = records
        self.relations = relations
        self.batch_size = batch_size
        self.rng = rng
        self.mains = sorted(m for m, subs in relations.main_to_subs.items() if subs)
        self.pair_quota = min(pair_quota, len(self.mains))
        if pair_quota > len(self.mains):
            warnings.warn(f"pair_quota {pair_quota} clamped to {self.pair_quota} "
                          "available mains")
        self.fill_per_batch = batch_size - 2 * self.pair_quota
        if self.fill_per_batch < 1:
            raise IntegrityError("batch has no filler slots; lower pair_quota")
        self._main_cursor = len(self.mains)

    def _next_mains(self):
        out = []
        for _ in range(self.pair_quota):
            if self._main_cursor >= len(self.mains):
                self.rng.shuffle(self.mains)
                self._main_cursor = 0
            out.append(self.mains[self._main_cursor])
            self._main_cursor += 1
        return out

    def epoch(self):
        """Yield batches until the filler permutation is exhausted."""
        order = [r.qa_id for r in self.records]
        perm = self.rng.permutation(len(order))
        at = 0
        while at < len(perm):
            take = perm[at:at + self.fill_per_batch]
            at += self.fill_per_batch
            fill = [order[i] for i in take]
            while len(fill) < self.fill_per_batch:
                fill.append(order[self.rng.integers(0, len(order))])
            yield _compose(self._next_mains(), self.relations, fill, self.rng)
