"""Score samples against hypotheses and flag error slices by error gap.

A hypothesis is operationalised as the mean text embedding of its test
sentences. Class members whose similarity to that embedding falls strictly
below a threshold form the candidate slice; the slice is flagged when its
error rate exceeds the class error rate by at least the configured gap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus import EmbeddingMatrix, SliceDataset
from .errors import ConfigError, DimensionMismatch, EmptySentenceSet, ShapeMismatch
from .hypothesis import Hypothesis, HypothesisSet
from .providers import EmbeddingProvider
from .retrieval import class_error_rate, similarity_to_vector, unit_rows

DEFAULT_GAP_THRESHOLD = 0.10
DEFAULT_MAX_HYPOTHESES = 20


@dataclass(frozen=True)
class HypothesisEmbedding:
    hypothesis_id: str
    vector: np.ndarray
    n_sentences: int

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if self.n_sentences < 1:
            raise EmptySentenceSet(f"{self.hypothesis_id}: zero sentences")
        if not np.isfinite(v).all():
            raise EmptySentenceSet(f"{self.hypothesis_id}: non-finite embedding")
        object.__setattr__(self, "vector", v)


@dataclass(frozen=True)
class SliceReport:
    class_label: int
    hypothesis_id: str
    attribute: str
    threshold: float
    member_ids: tuple[int, ...]  # ranked by ascending similarity score
    slice_error: float
    class_error: float
    gap: float
    is_error_slice: bool
    scores: Optional[np.ndarray] = None  # per-sample similarity over the whole dataset
    n_class: int = 0

    def to_json(self, dump_scores: bool = False) -> dict:
        row = {
            "class_label": self.class_label,
            "hypothesis_id": self.hypothesis_id,
            "attribute": self.attribute,
            "threshold": self.threshold,
            "n_class": self.n_class,
            "n_members": len(self.member_ids),
            "member_ids": list(self.member_ids),
            "slice_error": self.slice_error,
            "class_error": self.class_error,
            "gap": self.gap,
            "is_error_slice": self.is_error_slice,
        }
        if dump_scores and self.scores is not None:
            row["scores"] = [float(s) for s in self.scores]
        return row


def hypothesis_embedding(
    hypothesis: Hypothesis,
    embedder: EmbeddingProvider,
    similarity: str = "cosine",
) -> HypothesisEmbedding:
    """Mean embedding of the test sentences.

    Under cosine similarity, each sentence embedding is L2-normalised before
    averaging so long sentences cannot dominate the mean.
    """
    if not hypothesis.test_sentences:
        raise EmptySentenceSet(f"{hypothesis.id}: no test sentences")
    vectors = embedder.embed(hypothesis.test_sentences)
    vectors = np.asarray(vectors, dtype=np.float64)
    if similarity == "cosine":
        vectors = unit_rows(vectors)
    return HypothesisEmbedding(
        hypothesis_id=hypothesis.id,
        vector=vectors.mean(axis=0),
        n_sentences=len(hypothesis.test_sentences),
    )


def score_hypothesis(
    projected: EmbeddingMatrix,
    hyp: HypothesisEmbedding,
    similarity: str = "cosine",
) -> np.ndarray:
    """Per-row similarity between projected samples and the hypothesis embedding."""
    if projected.dim != hyp.vector.shape[0]:
        raise DimensionMismatch(
            f"projected dim {projected.dim} != hypothesis dim {hyp.vector.shape[0]}"
        )
    return similarity_to_vector(projected.as_float64(), hyp.vector, similarity)


def extract_slice(
    scores: Sequence[float],
    dataset: SliceDataset,
    class_label: int,
    tau: float,
) -> np.ndarray:
    """Indices of class members with score strictly below tau (may be empty)."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[0] != len(dataset):
        raise ShapeMismatch(
            f"{scores.shape[0]} scores for {len(dataset)} samples"
        )
    labels = dataset.labels()
    return np.flatnonzero((labels == class_label) & (scores < tau))


def resolve_tau(scores_in_class: np.ndarray, policy: str) -> float:
    """Threshold policies: 'median', 'percentile:P' or 'fixed:V'."""
    if policy == "median":
        return float(np.median(scores_in_class))
    if policy.startswith("percentile:"):
        p = float(policy.split(":", 1)[1])
        if not (0.0 <= p <= 100.0):
            raise ConfigError(f"percentile {p} outside [0, 100]")
        return float(np.percentile(scores_in_class, p))
    if policy.startswith("fixed:"):
        return float(policy.split(":", 1)[1])
    raise ConfigError(f"unknown tau policy {policy!r}")


def detect_error_slices(
    dataset: SliceDataset,
    projected: EmbeddingMatrix,
    hyps: HypothesisSet,
    embedder: EmbeddingProvider,
    tau_policy: str = "median",
    gap_threshold: float = DEFAULT_GAP_THRESHOLD,
    similarity: str = "cosine",
    max_hypotheses: int = DEFAULT_MAX_HYPOTHESES,
) -> list[SliceReport]:
    """One SliceReport per hypothesis, sorted by gap descending.

    An empty slice contributes gap 0 by convention and is never flagged.
    Ties in gap break on hypothesis id so the ordering is reproducible.
    """
    class_label = hyps.class_label
    class_idx = dataset.class_members(class_label)
    if class_idx.size == 0:
        raise ShapeMismatch(f"dataset has no samples of class {class_label}")
    class_error = class_error_rate(dataset, class_label)

    reports = []
    for hypothesis in hyps.hypotheses[:max_hypotheses]:
        hyp_emb = hypothesis_embedding(hypothesis, embedder, similarity)
        scores = score_hypothesis(projected, hyp_emb, similarity)
        tau = resolve_tau(scores[class_idx], tau_policy)
        members = extract_slice(scores, dataset, class_label, tau)
        # Rank members by ascending similarity: the least attribute-like first,
        # which downstream consumers use as slice-membership confidence order.
        members = members[np.argsort(scores[members], kind="stable")]
        if members.size:
            slice_error = class_error_rate(dataset, class_label, members)
        else:
            slice_error = class_error  # empty slice: no evidence, zero gap
        gap = slice_error - class_error
        reports.append(
            SliceReport(
                class_label=class_label,
                hypothesis_id=hypothesis.id,
                attribute=hypothesis.attribute,
                threshold=float(tau),
                member_ids=tuple(int(i) for i in members),
                slice_error=float(slice_error),
                class_error=float(class_error),
                gap=float(gap),
                is_error_slice=bool(members.size > 0 and gap >= gap_threshold),
                scores=scores,
                n_class=int(class_idx.size),
            )
        )
    reports.sort(key=lambda r: (-r.gap, r.hypothesis_id))
    return reports


def write_slice_reports(
    reports: Sequence[SliceReport], path, dump_scores: bool = False
) -> None:
    payload = [r.to_json(dump_scores=dump_scores) for r in reports]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
