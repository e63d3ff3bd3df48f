"""Bias mitigation: pseudo-labels, balanced head retraining, argmax ensemble.

Each flagged hypothesis yields a binary pseudo-attribute (thresholded,
sigmoid > 0.5), a (class x attribute)-balanced subsample of the validation
set, and a linear head retrained on frozen classifier features. Inference
routes every sample to the head of the hypothesis with maximum similarity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .corpus import EmbeddingMatrix, SliceDataset, load_embeddings, save_embeddings
from .errors import (
    DegenerateScores,
    DimensionMismatch,
    EmptyBundle,
    EmptyCell,
    NoErrorSlices,
    ShapeMismatch,
    SingleClassSet,
)
from .hypothesis import Hypothesis, HypothesisSet
from .providers import EmbeddingProvider
from .slicer import HypothesisEmbedding, SliceReport, hypothesis_embedding, score_hypothesis

DEFAULT_L2 = 1e-2
GRAD_TOL = 1e-6
MAX_ITERS = 10_000


@dataclass(frozen=True)
class Calibration:
    mean: float
    std: float
    mode: str  # "zscore" | "raw"

    def __post_init__(self):
        if self.mode not in ("zscore", "raw"):
            raise DegenerateScores(f"unknown calibration mode {self.mode!r}")
        if self.mode == "zscore" and not self.std > 0:
            raise DegenerateScores("zscore calibration requires std > 0")

    def apply(self, scores: np.ndarray) -> np.ndarray:
        scores = np.asarray(scores, dtype=np.float64)
        if self.mode == "raw":
            return scores
        return (scores - self.mean) / self.std


def fit_calibration(scores: Sequence[float], mode: str = "zscore") -> Calibration:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise DegenerateScores("cannot calibrate an empty score list")
    if mode == "raw":
        return Calibration(mean=0.0, std=1.0, mode="raw")
    mean = float(scores.mean())
    std = float(scores.std())
    # relative threshold: constant scores leave rounding-level residual variance
    if std <= 1e-12 * max(1.0, abs(mean)):
        raise DegenerateScores("scores have zero variance; hypothesis separates nothing")
    return Calibration(mean=mean, std=std, mode="zscore")


def pseudo_label(scores: Sequence[float], calib: Calibration) -> np.ndarray:
    """1 where sigmoid(calibrated score) > 0.5, i.e. calibrated score > 0.

    A score landing exactly on the boundary maps to 0.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise DegenerateScores("cannot pseudo-label an empty score list")
    return (calib.apply(scores) > 0.0).astype(np.int64)


def balance_groups(dataset: SliceDataset, pseudo: Sequence[int], seed: int) -> np.ndarray:
    """Subsample each (label, pseudo-attribute) cell to the global minimum size.

    Sampling is uniform without replacement and seeded; the returned index
    set is sorted by original position.
    """
    pseudo = np.asarray(pseudo, dtype=np.int64)
    if pseudo.shape[0] != len(dataset):
        raise ShapeMismatch(f"{pseudo.shape[0]} pseudo-labels for {len(dataset)} samples")
    labels = dataset.labels()
    cells: dict[tuple[int, int], np.ndarray] = {}
    for c in range(dataset.n_classes):
        for a in (0, 1):
            idx = np.flatnonzero((labels == c) & (pseudo == a))
            if idx.size == 0:
                raise EmptyCell(f"(class={c}, attribute={a}) cell is empty")
            cells[(c, a)] = idx
    m = min(idx.size for idx in cells.values())
    rng = np.random.default_rng(seed)
    chosen = []
    for key in sorted(cells):
        idx = cells[key]
        chosen.append(rng.choice(idx, size=m, replace=False))
    return np.sort(np.concatenate(chosen))


@dataclass(frozen=True)
class LinearHead:
    hypothesis_id: str
    weights: np.ndarray  # (d_phi, C)
    bias: np.ndarray  # (C,)
    l2: float
    train_loss: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ShapeMismatch("head parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    def logits(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(x, dtype=np.float64)) @ self.weights + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return _softmax(self.logits(x))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _objective(w, b, x, y_onehot, l2):
    logits = x @ w + b
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_p = (shifted * y_onehot).sum(axis=1) - log_z
    return float(-log_p.mean() + 0.5 * l2 * np.sum(w * w))


def train_head(
    features: Union[EmbeddingMatrix, np.ndarray],
    labels: Sequence[int],
    indices: Sequence[int],
    l2: float = DEFAULT_L2,
    seed: int = 0,
    n_classes: Optional[int] = None,
) -> LinearHead:
    """Multinomial logistic regression by full-batch gradient descent.

    Objective: mean softmax cross-entropy + (l2/2)*||W||_F^2, bias
    unpenalised. Zero initialisation plus backtracking line search make the
    result deterministic; `seed` exists for signature parity with the
    subsampled callers and does not influence the optimisation. Training
    stops at gradient norm <= 1e-6 or 10^4 iterations.
    """
    x_all = features.as_float64() if isinstance(features, EmbeddingMatrix) else np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    idx = np.asarray(list(indices), dtype=np.int64)
    if idx.size == 0:
        raise SingleClassSet("empty index set")
    if l2 < 0:
        raise ShapeMismatch(f"l2 must be >= 0, got {l2}")
    x = x_all[idx]
    y = labels[idx]
    if np.unique(y).size < 2:
        raise SingleClassSet(f"all selected samples have label {y[0]}")
    c = int(n_classes) if n_classes is not None else int(labels.max()) + 1
    n, d = x.shape
    y_onehot = np.zeros((n, c))
    y_onehot[np.arange(n), y] = 1.0

    w = np.zeros((d, c))
    b = np.zeros(c)
    loss = _objective(w, b, x, y_onehot, l2)
    step = 1.0
    for _ in range(MAX_ITERS):
        p = _softmax(x @ w + b)
        err = (p - y_onehot) / n
        g_w = x.T @ err + l2 * w
        g_b = err.sum(axis=0)
        g_sq = float(np.sum(g_w * g_w) + np.sum(g_b * g_b))
        if g_sq**0.5 <= GRAD_TOL:
            break
        # Armijo backtracking from twice the previously accepted step.
        t = min(step * 2.0, 1e6)
        for _ in range(80):
            new_loss = _objective(w - t * g_w, b - t * g_b, x, y_onehot, l2)
            if new_loss <= loss - 1e-4 * t * g_sq:
                break
            t *= 0.5
        w -= t * g_w
        b -= t * g_b
        loss = new_loss
        step = t
    return LinearHead(hypothesis_id="", weights=w, bias=b, l2=float(l2), train_loss=float(loss))


@dataclass(frozen=True)
class MitigationBundle:
    heads: tuple[LinearHead, ...]
    hyp_embeddings: tuple[HypothesisEmbedding, ...]
    calibrations: dict[str, Calibration]
    erm_head: LinearHead
    warnings: tuple[str, ...] = ()
    similarity: str = "cosine"

    def __post_init__(self):
        head_ids = [h.hypothesis_id for h in self.heads]
        emb_ids = [e.hypothesis_id for e in self.hyp_embeddings]
        if head_ids != emb_ids or sorted(head_ids) != sorted(self.calibrations):
            raise ShapeMismatch(
                f"bundle misaligned: heads={head_ids} embeddings={emb_ids} "
                f"calibrations={sorted(self.calibrations)}"
            )


def bundle_key(class_label: int, hypothesis_id: str) -> str:
    """Hypothesis ids are only unique within a class; bundles namespace them."""
    return f"c{class_label}.{hypothesis_id}"


def mitigate(
    val_dataset: SliceDataset,
    projected: EmbeddingMatrix,
    slice_reports: Sequence[SliceReport],
    hyps: Union[HypothesisSet, Sequence[HypothesisSet]],
    embedder: EmbeddingProvider,
    l2: float = DEFAULT_L2,
    seed: int = 0,
    calibration_mode: str = "zscore",
    similarity: str = "cosine",
) -> MitigationBundle:
    """Retrain one head per flagged hypothesis plus an unbalanced control head.

    Calibration is fit on the hypothesis' own class scores; pseudo-labels and
    balancing span the whole validation set. Hypotheses whose pseudo-attribute
    leaves a (class, attribute) cell empty are skipped with a warning.
    """
    hyp_sets = [hyps] if isinstance(hyps, HypothesisSet) else list(hyps)
    lookup: dict[str, Hypothesis] = {}
    for hs in hyp_sets:
        for h in hs.hypotheses:
            lookup[bundle_key(hs.class_label, h.id)] = h

    flagged = [r for r in slice_reports if r.is_error_slice]
    if not flagged:
        raise NoErrorSlices("no flagged error slices to mitigate")
    flagged.sort(key=lambda r: bundle_key(r.class_label, r.hypothesis_id))

    labels = val_dataset.labels()
    heads: list[LinearHead] = []
    hyp_embs: list[HypothesisEmbedding] = []
    calibrations: dict[str, Calibration] = {}
    warnings: list[str] = []
    for report in flagged:
        key = bundle_key(report.class_label, report.hypothesis_id)
        if key not in lookup:
            warnings.append(f"{key}: no hypothesis found for flagged slice; skipped")
            continue
        hyp_emb = hypothesis_embedding(lookup[key], embedder, similarity)
        hyp_emb = HypothesisEmbedding(
            hypothesis_id=key, vector=hyp_emb.vector, n_sentences=hyp_emb.n_sentences
        )
        scores = score_hypothesis(projected, hyp_emb, similarity)
        class_idx = val_dataset.class_members(report.class_label)
        try:
            calib = fit_calibration(scores[class_idx], calibration_mode)
            pseudo = pseudo_label(scores, calib)
            balanced = balance_groups(val_dataset, pseudo, seed)
            head = train_head(
                val_dataset.features, labels, balanced, l2=l2, seed=seed,
                n_classes=val_dataset.n_classes,
            )
        except (EmptyCell, DegenerateScores, SingleClassSet) as exc:
            warnings.append(f"{key}: {type(exc).__name__}: {exc}")
            continue
        heads.append(replace(head, hypothesis_id=key))
        hyp_embs.append(hyp_emb)
        calibrations[key] = calib
    if not heads:
        raise NoErrorSlices(
            "every flagged hypothesis failed rebalancing: " + "; ".join(warnings)
        )

    erm_head = replace(
        train_head(
            val_dataset.features, labels, np.arange(len(val_dataset)), l2=l2, seed=seed,
            n_classes=val_dataset.n_classes,
        ),
        hypothesis_id="erm",
    )
    return MitigationBundle(
        heads=tuple(heads),
        hyp_embeddings=tuple(hyp_embs),
        calibrations=calibrations,
        erm_head=erm_head,
        warnings=tuple(warnings),
        similarity=similarity,
    )


def _routing_order(bundle: MitigationBundle) -> list[int]:
    # Lexicographically smallest hypothesis id wins similarity ties.
    return sorted(range(len(bundle.heads)), key=lambda i: bundle.heads[i].hypothesis_id)


def ensemble_predict_batch(
    features: np.ndarray, projected: np.ndarray, bundle: MitigationBundle
) -> np.ndarray:
    """Route every row to the head of its maximum-similarity hypothesis."""
    if not bundle.heads:
        raise EmptyBundle("bundle contains no heads")
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    projected = np.atleast_2d(np.asarray(projected, dtype=np.float64))
    if features.shape[0] != projected.shape[0]:
        raise DimensionMismatch(
            f"{features.shape[0]} feature rows vs {projected.shape[0]} projected rows"
        )
    order = _routing_order(bundle)
    proj_mat = EmbeddingMatrix(projected.astype(np.float32))
    score_cols = [
        score_hypothesis(proj_mat, bundle.hyp_embeddings[i], bundle.similarity) for i in order
    ]
    chosen = np.argmax(np.stack(score_cols, axis=1), axis=1)  # first max = smallest id
    out = np.empty(features.shape[0], dtype=np.int64)
    for j, i in enumerate(order):
        mask = chosen == j
        if mask.any():
            out[mask] = bundle.heads[i].predict(features[mask])
    return out


def ensemble_predict(
    features_row: np.ndarray, projected_row: np.ndarray, bundle: MitigationBundle
) -> int:
    return int(
        ensemble_predict_batch(
            np.asarray(features_row)[None, :], np.asarray(projected_row)[None, :], bundle
        )[0]
    )


# --- serialisation ---------------------------------------------------------------

def save_bundle(bundle: MitigationBundle, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def head_entry(head: LinearHead, stem: str) -> dict:
        save_embeddings(EmbeddingMatrix(head.weights.astype(np.float32)), out_dir / f"{stem}.weights.ladremb")
        save_embeddings(EmbeddingMatrix(head.bias[None, :].astype(np.float32)), out_dir / f"{stem}.bias.ladremb")
        return {
            "hypothesis_id": head.hypothesis_id,
            "weights": f"{stem}.weights.ladremb",
            "bias": f"{stem}.bias.ladremb",
            "l2": head.l2,
            "train_loss": head.train_loss,
        }

    meta: dict = {"similarity": bundle.similarity, "warnings": list(bundle.warnings), "heads": []}
    for i, (head, emb) in enumerate(zip(bundle.heads, bundle.hyp_embeddings)):
        stem = f"head_{i:03d}"
        entry = head_entry(head, stem)
        save_embeddings(EmbeddingMatrix(emb.vector[None, :].astype(np.float32)), out_dir / f"{stem}.hyp.ladremb")
        calib = bundle.calibrations[head.hypothesis_id]
        entry.update(
            {
                "hyp_embedding": f"{stem}.hyp.ladremb",
                "n_sentences": emb.n_sentences,
                "calibration": {"mean": calib.mean, "std": calib.std, "mode": calib.mode},
            }
        )
        meta["heads"].append(entry)
    meta["erm_head"] = head_entry(bundle.erm_head, "erm")
    (out_dir / "bundle.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_bundle(in_dir: str | Path) -> MitigationBundle:
    in_dir = Path(in_dir)
    meta = json.loads((in_dir / "bundle.json").read_text())

    def read_head(entry: dict) -> LinearHead:
        return LinearHead(
            hypothesis_id=entry["hypothesis_id"],
            weights=load_embeddings(in_dir / entry["weights"]).as_float64(),
            bias=load_embeddings(in_dir / entry["bias"]).as_float64()[0],
            l2=float(entry["l2"]),
            train_loss=float(entry["train_loss"]),
        )

    heads, embs, calibs = [], [], {}
    for entry in meta["heads"]:
        head = read_head(entry)
        heads.append(head)
        embs.append(
            HypothesisEmbedding(
                hypothesis_id=entry["hypothesis_id"],
                vector=load_embeddings(in_dir / entry["hyp_embedding"]).as_float64()[0],
                n_sentences=int(entry["n_sentences"]),
            )
        )
        c = entry["calibration"]
        calibs[entry["hypothesis_id"]] = Calibration(
            mean=float(c["mean"]), std=float(c["std"]), mode=c["mode"]
        )
    return MitigationBundle(
        heads=tuple(heads),
        hyp_embeddings=tuple(embs),
        calibrations=calibs,
        erm_head=read_head(meta["erm_head"]),
        warnings=tuple(meta.get("warnings", ())),
        similarity=meta.get("similarity", "cosine"),
    )
