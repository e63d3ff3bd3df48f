"""Correct-vs-incorrect mean-difference vector and top-K sentence retrieval.

For one class, the difference between the mean projected embedding of the
correctly classified members and that of the misclassified members points
toward attributes present when the model succeeds. The corpus sentences most
aligned with that direction are handed to the hypothesis stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus import EmbeddingMatrix, SliceDataset, TextCorpus
from .errors import DegenerateClass, DimensionMismatch, EmptySet, ShapeMismatch

SIMILARITY_MODES = ("cosine", "dot")


def unit_rows(m: np.ndarray) -> np.ndarray:
    """L2-normalise rows; zero rows are left untouched."""
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=-1, keepdims=True)
    return m / np.where(norms == 0.0, 1.0, norms)


def similarity_to_vector(
    rows: np.ndarray, vector: np.ndarray, similarity: str = "cosine"
) -> np.ndarray:
    """Similarity of every row to one query vector (matrix-vector product).

    cosine normalises both sides; dot is the raw inner product.
    """
    if similarity not in SIMILARITY_MODES:
        raise DimensionMismatch(f"unknown similarity mode {similarity!r}")
    rows = np.asarray(rows, dtype=np.float64)
    vector = np.asarray(vector, dtype=np.float64)
    if rows.shape[1] != vector.shape[0]:
        raise DimensionMismatch(f"dim mismatch: {rows.shape[1]} vs {vector.shape[0]}")
    if similarity == "cosine":
        rows = unit_rows(rows)
        vector = unit_rows(vector[None, :])[0]
    # Row-wise product-sum instead of BLAS matvec: accumulation order is then
    # independent of a row's position, so identical rows tie exactly.
    return (rows * vector).sum(axis=1)


@dataclass(frozen=True)
class DeltaVector:
    """Mean(projected | correct) - mean(projected | wrong) for one class."""

    class_label: int
    values: np.ndarray
    n_correct: int
    n_wrong: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if self.n_correct < 1 or self.n_wrong < 1:
            raise DegenerateClass(
                f"class {self.class_label}: both groups must be nonempty "
                f"(correct={self.n_correct}, wrong={self.n_wrong})"
            )
        if not np.isfinite(v).all():
            raise DegenerateClass(f"class {self.class_label}: delta vector not finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class RetrievedSentence:
    sentence_id: str
    text: str
    similarity: float
    rank: int  # 1-based


def class_error_rate(
    dataset: SliceDataset,
    class_label: int,
    members: Optional[Sequence[int]] = None,
) -> float:
    """Fraction of evaluated samples whose prediction differs from the label."""
    labels = dataset.labels()
    preds = dataset.predictions()
    if members is None:
        idx = np.flatnonzero(labels == class_label)
    else:
        idx = np.asarray(list(members), dtype=np.int64)
        if idx.size and not np.all(labels[idx] == class_label):
            raise EmptySet(f"members contain rows outside class {class_label}")
    if idx.size == 0:
        raise EmptySet(f"no samples to evaluate for class {class_label}")
    return float(np.mean(preds[idx] != labels[idx]))


def mean_difference(
    projected: EmbeddingMatrix, dataset: SliceDataset, class_label: int
) -> DeltaVector:
    if projected.rows != len(dataset):
        raise ShapeMismatch(
            f"projected has {projected.rows} rows but dataset has {len(dataset)} samples"
        )
    labels = dataset.labels()
    preds = dataset.predictions()
    in_class = labels == class_label
    correct = np.flatnonzero(in_class & (preds == labels))
    wrong = np.flatnonzero(in_class & (preds != labels))
    if correct.size == 0 or wrong.size == 0:
        raise DegenerateClass(
            f"class {class_label} has correct={correct.size}, wrong={wrong.size}; "
            "slice analysis needs at least one of each"
        )
    rows = projected.as_float64()
    delta = rows[correct].mean(axis=0) - rows[wrong].mean(axis=0)
    return DeltaVector(
        class_label=class_label,
        values=delta,
        n_correct=int(correct.size),
        n_wrong=int(wrong.size),
    )


def retrieve_topk(
    delta: DeltaVector,
    corpus: TextCorpus,
    k: int,
    similarity: str = "cosine",
) -> list[RetrievedSentence]:
    """The k corpus sentences most similar to the delta vector, descending.

    Ties break toward the lower corpus index so rankings are stable across
    runs and platforms. If the corpus has fewer than k sentences all of them
    are returned, ranked.
    """
    if k < 1:
        raise EmptySet(f"k must be >= 1, got {k}")
    if len(corpus) == 0:
        raise EmptySet("corpus is empty")
    if corpus.embeddings.dim != delta.values.shape[0]:
        raise DimensionMismatch(
            f"corpus dim {corpus.embeddings.dim} != delta dim {delta.values.shape[0]}"
        )
    sims = similarity_to_vector(corpus.embeddings.as_float64(), delta.values, similarity)
    order = np.lexsort((np.arange(sims.size), -sims))[: min(k, sims.size)]
    return [
        RetrievedSentence(
            sentence_id=corpus.sentences[i][0],
            text=corpus.sentences[i][1],
            similarity=float(sims[i]),
            rank=rank,
        )
        for rank, i in enumerate(order, start=1)
    ]
