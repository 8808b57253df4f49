"""Scoring: Levenshtein / average normalized Levenshtein similarity,
VQAv2-style accuracy, answer recall with its similarity upper bound, and
the confidence-threshold ensemble selector.

Strings are case-folded and trimmed before every comparison; nothing else
is normalized.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from .data import QaExample
from .errors import ContractError

MAX_JOIN_LEN = 4  # upper-bound oracle searches consecutive joins up to this length
DEFAULT_ENSEMBLE_TAU = 0.37


def _fold(s: str) -> str:
    return s.strip().casefold()


def levenshtein(a: str, b: str) -> int:
    """Minimum insert/delete/substitute edits between two strings."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def nls(pred: str, gt: str, tau_anls: float | None = None) -> float:
    """Normalized Levenshtein similarity s = 1 - d / max(len). Both strings
    empty scores 1. With a threshold, scores below it are zeroed."""
    a, b = _fold(pred), _fold(gt)
    longest = max(len(a), len(b))
    s = 1.0 if longest == 0 else 1.0 - levenshtein(a, b) / longest
    if tau_anls is not None and s < tau_anls:
        s = 0.0
    return s


@dataclass
class ExampleScore:
    question_id: str
    prediction: str
    best_gt: str
    nls: float
    correct: bool
    tags: list = field(default_factory=list)


@dataclass
class EvalReport:
    anls: float
    accuracy: float  # percentage of exact matches
    rows: list = field(default_factory=list)
    subsets: dict = field(default_factory=dict)  # tag -> {"anls", "accuracy", "count"}

    def to_dict(self) -> dict:
        return {
            "anls": self.anls,
            "accuracy": self.accuracy,
            "subsets": self.subsets,
            "examples": [
                {
                    "question_id": r.question_id,
                    "prediction": r.prediction,
                    "best_gt": r.best_gt,
                    "nls": r.nls,
                    "correct": r.correct,
                    "tags": r.tags,
                }
                for r in self.rows
            ],
        }


def score_anls(predictions: dict[str, str], examples: list[QaExample],
               tau_anls: float | None = None,
               tags: dict[str, list] | None = None) -> EvalReport:
    """Per question take the best similarity over its ground-truth answers,
    then average. Missing predictions count as empty strings. Accuracy is
    the percentage of case-folded exact matches."""
    rows = []
    for ex in examples:
        pred = predictions.get(ex.question_id, "")
        best_s, best_gt = 0.0, ex.answers[0]
        for gt in ex.answers:
            s = nls(pred, gt, tau_anls)
            if s > best_s:
                best_s, best_gt = s, gt
        correct = any(_fold(pred) == _fold(gt) for gt in ex.answers)
        rows.append(
            ExampleScore(
                question_id=ex.question_id,
                prediction=pred,
                best_gt=best_gt,
                nls=best_s,
                correct=correct,
                tags=(tags or {}).get(ex.question_id, []),
            )
        )
    n = len(rows)
    anls = sum(r.nls for r in rows) / n if n else 0.0
    accuracy = 100.0 * sum(r.correct for r in rows) / n if n else 0.0
    report = EvalReport(anls=anls, accuracy=accuracy, rows=rows)
    all_tags = {t for r in rows for t in r.tags}
    for tag in sorted(all_tags):
        members = [r for r in rows if tag in r.tags]
        report.subsets[tag] = {
            "anls": sum(r.nls for r in members) / len(members),
            "accuracy": 100.0 * sum(r.correct for r in members) / len(members),
            "count": len(members),
        }
    return report


def vqa_accuracy(pred: str, human_answers: list[str]) -> float:
    """min(h / 3, 1) where h counts matching human answers."""
    if not human_answers:
        raise ContractError("vqa_accuracy: empty human answer list")
    if len(human_answers) != 10:
        warnings.warn(
            f"vqa_accuracy expects 10 human answers, got {len(human_answers)}",
            stacklevel=2,
        )
    p = _fold(pred)
    h = sum(1 for a in human_answers if _fold(a) == p)
    return min(h / 3.0, 1.0)


def _best_join_similarity(example: QaExample, tau_anls: float | None = None) -> float:
    """Best similarity achievable by any consecutive OCR-token join."""
    texts = [_fold(t.text) for t in example.ocr]
    best = 0.0
    for start in range(len(texts)):
        for stop in range(start + 1, min(start + MAX_JOIN_LEN, len(texts)) + 1):
            joined = " ".join(texts[start:stop])
            for gt in example.answers:
                best = max(best, nls(joined, gt, tau_anls))
    return best


def answer_recall(examples: list[QaExample],
                  tau_anls: float | None = None) -> tuple[float, float]:
    """(recall percentage, similarity upper bound) over the examples.

    Recall counts examples whose answer can be formed exactly from
    consecutive OCR tokens; the upper bound scores an oracle that picks the
    best-scoring consecutive join per example."""
    from .grid import ground_truth_match

    if not examples:
        return 0.0, 0.0
    hits = sum(1 for ex in examples if ground_truth_match(ex))
    bound = sum(_best_join_similarity(ex, tau_anls) for ex in examples) / len(examples)
    return 100.0 * hits / len(examples), bound


@dataclass
class EnsembleInput:
    question_id: str
    classifier_answer: str
    classifier_confidence: float
    pointer_answer: str
    pointer_confidence: float


def ensemble_select(inputs: list[EnsembleInput],
                    tau: float = DEFAULT_ENSEMBLE_TAU) -> dict[str, str]:
    """Pick the classifier's answer when its confidence exceeds tau, the
    pointer model's otherwise."""
    if not 0.0 <= tau <= 1.0:
        raise ContractError(f"ensemble threshold must be in [0, 1], got {tau}")
    return {
        inp.question_id: (
            inp.classifier_answer if inp.classifier_confidence > tau else inp.pointer_answer
        )
        for inp in inputs
    }
