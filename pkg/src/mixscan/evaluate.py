"""Precision/recall of a detection report against simulator ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

NA = "n/a"

_TRUTH_KEY = {
    "mixing_service": "mixer_addresses",
    "dirty_sender": "dirty_addresses",
    "clean_recipient": "clean_addresses",
}


def _ratio(num: int, den: int):
    return float(Fraction(num, den)) if den else NA


@dataclass
class Score:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self):
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self):
        return _ratio(self.tp, self.tp + self.fn)

    def to_json(self) -> dict:
        return {"precision": self.precision, "recall": self.recall,
                "tp": self.tp, "fp": self.fp, "fn": self.fn}


def score_sets(predicted: set, actual: set) -> Score:
    return Score(len(predicted & actual), len(predicted - actual), len(actual - predicted))


@dataclass
class EvalMetrics:
    chains: Score
    labels: dict[str, Score] = field(default_factory=dict)

    @property
    def chain_precision(self):
        return self.chains.precision

    @property
    def chain_recall(self):
        return self.chains.recall

    def to_json(self) -> dict:
        return {
            "chain_precision": self.chain_precision,
            "chain_recall": self.chain_recall,
            "chains": self.chains.to_json(),
            "labels": {k: v.to_json() for k, v in sorted(self.labels.items())},
        }


def evaluate(report: dict, truth: dict) -> EvalMetrics:
    """Score raw report JSON against raw ground-truth JSON.

    Chains match on exact txid sequence; labels match on exact
    (address, label) pairs.
    """
    found = {tuple(c["txids"]) for c in report.get("chains", [])}
    planted = {tuple(c) for c in truth.get("mixer_chains", [])}
    labels = {}
    for label, key in _TRUTH_KEY.items():
        predicted = {lab["address"] for lab in report.get("labels", []) if lab["label"] == label}
        labels[label] = score_sets(predicted, set(truth.get(key, [])))
    return EvalMetrics(score_sets(found, planted), labels)
