"""Evaluation metrics: Precision@k, attribute influence score, worst-group
accuracy, mean accuracy and AUROC."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import EmbeddingMatrix, SliceDataset
from .errors import (
    DimensionMismatch,
    EmptyCell,
    EmptyDataset,
    EmptyGroundTruth,
    EmptySet,
    ShapeMismatch,
    SingleClass,
)
from .retrieval import unit_rows


@dataclass(frozen=True)
class GroundTruthSlices:
    slices: tuple[tuple[str, frozenset[int]], ...]  # (name, member indices)

    def __post_init__(self):
        normalized = []
        for name, members in self.slices:
            members = frozenset(int(i) for i in members)
            if not members:
                raise EmptyGroundTruth(f"ground-truth slice {name!r} is empty")
            normalized.append((str(name), members))
        object.__setattr__(self, "slices", tuple(normalized))


@dataclass(frozen=True)
class PredictedSlices:
    slices: tuple[tuple[str, tuple[int, ...]], ...]  # (name, ranked member indices)

    def __post_init__(self):
        normalized = []
        for name, ranked in self.slices:
            ranked = tuple(int(i) for i in ranked)
            if len(set(ranked)) != len(ranked):
                raise ShapeMismatch(f"predicted slice {name!r} has duplicate members")
            normalized.append((str(name), ranked))
        object.__setattr__(self, "slices", tuple(normalized))


def precision_at_k(gt: GroundTruthSlices, pred: PredictedSlices, k: int) -> float:
    """Mean over ground-truth slices of the best predicted slice's top-k overlap.

    A predicted slice shorter than k is scored over its full length (the
    denominator becomes min(k, length)).
    """
    if not gt.slices:
        raise EmptyGroundTruth("no ground-truth slices")
    if k < 1:
        raise EmptySet(f"k must be >= 1, got {k}")
    if not pred.slices:
        return 0.0
    total = 0.0
    for _, members in gt.slices:
        best = 0.0
        for _, ranked in pred.slices:
            if not ranked:
                continue
            top = ranked[: min(k, len(ranked))]
            best = max(best, sum(1 for i in top if i in members) / len(top))
        total += best
    return total / len(gt.slices)


def clip_score(
    attr_embedding: np.ndarray,
    correct: EmbeddingMatrix,
    wrong: EmbeddingMatrix,
) -> float:
    """Mean cosine similarity of the attribute to correctly classified samples
    minus the mean over misclassified ones."""
    if correct.rows == 0 or wrong.rows == 0:
        raise EmptySet("both sample sets must be nonempty")
    attr = np.asarray(attr_embedding, dtype=np.float64)
    if correct.dim != attr.shape[0] or wrong.dim != attr.shape[0]:
        raise DimensionMismatch(
            f"attribute dim {attr.shape[0]} vs matrices {correct.dim}/{wrong.dim}"
        )
    a = unit_rows(attr[None, :])[0]
    sim_correct = float(np.mean(unit_rows(correct.as_float64()) @ a))
    sim_wrong = float(np.mean(unit_rows(wrong.as_float64()) @ a))
    return sim_correct - sim_wrong


def group_cell_accuracies(
    dataset: SliceDataset,
    predictions: Sequence[int],
    group_keys: Sequence[str],
) -> dict[str, float]:
    """Accuracy for every (label x group-tag combination) cell.

    Raises EmptyCell if any combination has no samples.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    if predictions.shape[0] != len(dataset):
        raise ShapeMismatch(f"{predictions.shape[0]} predictions for {len(dataset)} samples")
    labels = dataset.labels()
    correct = predictions == labels
    tag_values = {key: dataset.group_values(key) for key in group_keys}

    cells: dict[str, float] = {}
    combos: list[tuple[int, ...]] = [()]
    for _ in group_keys:
        combos = [c + (v,) for c in combos for v in (0, 1)]
    for label in range(dataset.n_classes):
        for combo in combos:
            mask = labels == label
            for key, v in zip(group_keys, combo):
                mask &= tag_values[key] == v
            name = dataset.classes[label] + "".join(
                f",{key}={v}" for key, v in zip(group_keys, combo)
            )
            if not mask.any():
                raise EmptyCell(f"group cell {name!r} has no samples")
            cells[name] = float(correct[mask].mean())
    return cells


def worst_group_accuracy(
    dataset: SliceDataset,
    predictions: Sequence[int],
    group_key: str,
) -> tuple[float, str]:
    """Minimum accuracy over (label, group) cells and the cell that attains it."""
    cells = group_cell_accuracies(dataset, predictions, [group_key])
    worst_name = min(cells, key=lambda name: (cells[name], name))
    return cells[worst_name], worst_name


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUROC: P(score+ > score-) + 0.5 * P(tie), via rank sums."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape[0] != labels.shape[0]:
        raise ShapeMismatch(f"{scores.shape[0]} scores for {labels.shape[0]} labels")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUROC needs at least one positive and one negative")
    ranks = _average_ranks(scores)
    pos_rank_sum = float(ranks[labels == 1].sum())
    u = pos_rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the average of their span."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.shape[0], dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < sorted_vals.shape[0]:
        j = i
        while j + 1 < sorted_vals.shape[0] and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def mean_accuracy(dataset: SliceDataset, predictions: Sequence[int]) -> float:
    predictions = np.asarray(predictions, dtype=np.int64)
    if len(dataset) == 0:
        raise EmptyDataset("dataset is empty")
    if predictions.shape[0] != len(dataset):
        raise ShapeMismatch(f"{predictions.shape[0]} predictions for {len(dataset)} samples")
    return float((predictions == dataset.labels()).mean())
