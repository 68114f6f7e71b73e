"""Greedy evaluation: accuracy, length buckets, composer/interpreter
error taxonomy.

A failed prediction counts as a composer error (CE) when the predicted
nonterminal-node span set differs from the gold tree's, and as an
interpreter error (IE) otherwise; only labeled-node spans matter, not the
full binary bracketing. Error classification needs gold trees and is
skipped without them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .dataset import Sample
from .model import ParserModel
from .semalg import EvaluationFailure, equivalent, print_meaning

LENGTH_BUCKETS = [(1, 5), (6, 10), (11, 15), (16, 20), (21, 25), (26, 30)]
OVERFLOW = (31, None)


def bucket_label(bucket) -> str:
    lo, hi = bucket
    return f"[{lo}, {hi}]" if hi is not None else f"[{lo}, inf)"


@dataclass
class EvalRecord:
    index: int
    utterance: str
    length: int
    gold: str
    predicted: str | None
    correct: bool
    error_kind: str | None  # "CE" | "IE" | None
    tree: str
    assignment: list[str]


@dataclass
class EvalReport:
    n: int
    accuracy: float
    bucket_counts: list[tuple[str, int, int]]  # (label, n, n_correct)
    ce: int | None
    ie: int | None
    records: list[EvalRecord] = field(default_factory=list)

    def as_dict(self, with_records: bool = True) -> dict:
        out = {
            "n": self.n,
            "accuracy": self.accuracy,
            "buckets": [
                {"bucket": label, "n": n, "correct": c,
                 "accuracy": (c / n) if n else None}
                for label, n, c in self.bucket_counts
            ],
            "composer_errors": self.ce,
            "interpreter_errors": self.ie,
        }
        if with_records:
            out["records"] = [
                {"index": r.index, "utterance": r.utterance,
                 "length": r.length, "gold": r.gold,
                 "predicted": r.predicted, "correct": r.correct,
                 "error_kind": r.error_kind, "tree": r.tree,
                 "assignment": r.assignment}
                for r in self.records
            ]
        return out

    def to_json(self, with_records: bool = True) -> str:
        return json.dumps(self.as_dict(with_records), indent=2,
                          sort_keys=True)

    def text_table(self) -> str:
        lines = [f"{'bucket':>10s} {'n':>6s} {'acc':>7s}"]
        for label, n, c in self.bucket_counts:
            acc = f"{c / n:.3f}" if n else "-"
            lines.append(f"{label:>10s} {n:>6d} {acc:>7s}")
        lines.append(f"{'overall':>10s} {self.n:>6d} {self.accuracy:>7.3f}")
        if self.ce is not None:
            failed = self.ce + self.ie
            lines.append(f"errors: CE={self.ce} IE={self.ie} "
                         f"(failed {failed} of {self.n})")
        return "\n".join(lines)


def _bucket_index(length: int) -> int:
    for i, (lo, hi) in enumerate(LENGTH_BUCKETS):
        if lo <= length <= hi:
            return i
    return len(LENGTH_BUCKETS)


def evaluate_model(model: ParserModel, samples: list[Sample],
                   keep_records: bool = True) -> EvalReport:
    buckets = [[0, 0] for _ in range(len(LENGTH_BUCKETS) + 1)]
    records: list[EvalRecord] = []
    n_correct = 0
    have_gold_trees = all(s.gold_tree is not None for s in samples)
    ce = ie = 0
    for idx, sample in enumerate(samples):
        meaning, comp, interp = model.greedy_meaning(sample.tokens)
        failed = isinstance(meaning, EvaluationFailure)
        correct = (not failed) and equivalent(meaning, sample.meaning)
        kind = None
        if not correct and have_gold_trees:
            gold_spans = sample.gold_tree.labeled_spans()
            pred_spans = comp.tree.labeled_spans()
            kind = "CE" if pred_spans != gold_spans else "IE"
            if kind == "CE":
                ce += 1
            else:
                ie += 1
        b = _bucket_index(sample.length)
        buckets[b][0] += 1
        buckets[b][1] += int(correct)
        n_correct += int(correct)
        if keep_records:
            records.append(EvalRecord(
                index=idx,
                utterance=sample.utterance,
                length=sample.length,
                gold=sample.meaning_text,
                predicted=None if failed else print_meaning(meaning),
                correct=correct,
                error_kind=kind,
                tree=comp.tree.to_text(),
                assignment=interp.lines(sample.tokens, comp.tree),
            ))
    labels = [bucket_label(b) for b in LENGTH_BUCKETS] + [bucket_label(OVERFLOW)]
    return EvalReport(
        n=len(samples),
        accuracy=(n_correct / len(samples)) if samples else 0.0,
        bucket_counts=[(lab, n, c) for lab, (n, c) in zip(labels, buckets)],
        ce=ce if have_gold_trees else None,
        ie=ie if have_gold_trees else None,
        records=records,
    )


def greedy_accuracy(model: ParserModel, samples: list[Sample]) -> float:
    return evaluate_model(model, samples, keep_records=False).accuracy
