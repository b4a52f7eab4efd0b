"""Accuracy, top-k, and confusion-matrix evaluation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InputError, UsageError
from .fusion import aggregate_scores, argmax_label


@dataclass
class Metrics:
    top1: float
    top5: float
    per_class: list[float]
    confusion: list[list[float]]  # rows = true label, columns = prediction
    samples: int
    classes: list[str]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Metrics":
        return cls(**json.loads(text))


def confusion_matrix(preds: list[int], labels: list[int], num_classes: int) -> np.ndarray:
    """Row-normalized counts; rows of absent classes stay all-zero."""
    if len(preds) != len(labels):
        raise InputError(f"{len(preds)} predictions for {len(labels)} labels")
    counts = np.zeros((num_classes, num_classes), dtype=np.float64)
    for pred, label in zip(preds, labels):
        if not 0 <= label < num_classes:
            raise InputError(f"label {label} out of range for {num_classes} classes")
        if not 0 <= pred < num_classes:
            raise InputError(f"prediction {pred} out of range for {num_classes} classes")
        counts[label, pred] += 1.0
    totals = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)


def top_k_hit(scores: np.ndarray, label: int, k: int) -> bool:
    """Whether ``label`` is among the k best logits (stable order on ties)."""
    ranked = np.argsort(-scores, kind="stable")
    return label in ranked[:k]


def evaluate(model, dataset, k: int = 5) -> Metrics:
    """Deterministic eval pass over a dataset; one pass per clip.

    ``dataset`` needs ``sample_eval(i)``, ``classes`` and a length;
    top-k clamps k to the class count on small label sets.
    """
    if len(dataset) == 0:
        raise UsageError("cannot evaluate an empty dataset")
    classes = dataset.classes
    k = min(k, len(classes))
    preds: list[int] = []
    labels: list[int] = []
    topk_hits = 0
    for i in range(len(dataset)):
        clip = dataset.sample_eval(i)
        scores = aggregate_scores(model.forward_clip(clip).scores)
        preds.append(argmax_label(scores))
        labels.append(clip.label)
        if top_k_hit(scores.data, clip.label, k):
            topk_hits += 1
    confusion = confusion_matrix(preds, labels, len(classes))
    top1 = float(np.mean(np.asarray(preds) == np.asarray(labels)))
    return Metrics(
        top1=top1,
        top5=topk_hits / len(preds),
        per_class=[float(confusion[c, c]) for c in range(len(classes))],
        confusion=confusion.tolist(),
        samples=len(preds),
        classes=list(classes),
    )
