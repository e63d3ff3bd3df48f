"""Affine map from classifier feature space into the joint embedding space.

The map z -> W^T z + b is fit by minimising the mean squared residual
(1/n) sum_i ||W^T phi_i + b - psi_i||^2 + ridge * ||W||_F^2 with the bias
unpenalised. The problem is convex quadratic, so we solve the normal
equations of the ones-augmented system directly; no iterative optimiser,
no seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import EmbeddingMatrix, load_embeddings, save_embeddings
from .errors import ShapeMismatch, SingularSystem

DEFAULT_RIDGE = 1e-4


@dataclass(frozen=True)
class AffineProjector:
    weights: np.ndarray  # (d_phi, d_psi)
    bias: np.ndarray  # (d_psi,)
    ridge: float
    fit_rmse: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
            raise ShapeMismatch(
                f"projector weight/bias shapes disagree: {w.shape} vs {b.shape}"
            )
        if not (np.isfinite(w).all() and np.isfinite(b).all() and np.isfinite(self.fit_rmse)):
            raise ShapeMismatch("projector parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def d_phi(self) -> int:
        return self.weights.shape[0]

    @property
    def d_psi(self) -> int:
        return self.weights.shape[1]


def fit_projection(
    features: EmbeddingMatrix,
    targets: EmbeddingMatrix,
    ridge: float = DEFAULT_RIDGE,
) -> AffineProjector:
    """Closed-form ridge least-squares fit of the affine projection.

    Solves (A^T A + n*ridge*D) theta = A^T Y where A is the feature matrix
    augmented with a ones column and D zeroes out the penalty on the bias row.
    One factorisation is shared across all target columns.
    """
    if features.rows != targets.rows:
        raise ShapeMismatch(
            f"features have {features.rows} rows, targets {targets.rows}"
        )
    if ridge < 0:
        raise ShapeMismatch(f"ridge must be >= 0, got {ridge}")
    n = features.rows
    if n == 0:
        raise ShapeMismatch("cannot fit projection on zero rows")

    x = features.as_float64()
    y = targets.as_float64()
    d_phi = x.shape[1]

    a = np.hstack([x, np.ones((n, 1))])
    gram = a.T @ a
    if ridge > 0:
        gram[np.arange(d_phi), np.arange(d_phi)] += n * ridge
    rhs = a.T @ y
    try:
        theta = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(
            "normal equations are singular; supply ridge > 0 or more rows"
        ) from exc
    # Near-singular systems do not always raise; reject solutions that fail to
    # satisfy the normal equations when no ridge is available to regularise.
    residual = gram @ theta - rhs
    scale = max(1.0, float(np.abs(rhs).max()))
    if ridge == 0 and float(np.abs(residual).max()) > 1e-6 * scale:
        raise SingularSystem("normal equations numerically unsolvable with ridge = 0")

    weights = theta[:-1, :]
    bias = theta[-1, :]
    fitted = x @ weights + bias
    rmse = float(np.sqrt(np.mean(np.sum((fitted - y) ** 2, axis=1))))
    return AffineProjector(weights=weights, bias=bias, ridge=float(ridge), fit_rmse=rmse)


def project(projector: AffineProjector, features: EmbeddingMatrix) -> EmbeddingMatrix:
    """Apply the affine map row-wise; output rows are W^T phi + b.

    The result is quantised to float32 so that recomputing a projection and
    loading one saved to disk are bit-identical.
    """
    if features.dim != projector.d_phi:
        raise ShapeMismatch(
            f"features dim {features.dim} does not match projector d_phi {projector.d_phi}"
        )
    out = features.as_float64() @ projector.weights + projector.bias
    return EmbeddingMatrix(out.astype(np.float32))


def save_projector(projector: AffineProjector, out_dir: str | Path) -> None:
    """Serialise as a JSON header plus one embedding blob each for W and b."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = {
        "d_phi": projector.d_phi,
        "d_psi": projector.d_psi,
        "ridge": projector.ridge,
        "fit_rmse": projector.fit_rmse,
        "weights": "weights.ladremb",
        "bias": "bias.ladremb",
    }
    (out_dir / "projector.json").write_text(json.dumps(header, indent=2) + "\n")
    save_embeddings(EmbeddingMatrix(projector.weights.astype(np.float32)), out_dir / "weights.ladremb")
    save_embeddings(EmbeddingMatrix(projector.bias[None, :].astype(np.float32)), out_dir / "bias.ladremb")


def load_projector(in_dir: str | Path) -> AffineProjector:
    in_dir = Path(in_dir)
    header = json.loads((in_dir / "projector.json").read_text())
    weights = load_embeddings(in_dir / header["weights"]).as_float64()
    bias = load_embeddings(in_dir / header["bias"]).as_float64()[0]
    return AffineProjector(
        weights=weights,
        bias=bias,
        ridge=float(header["ridge"]),
        fit_rmse=float(header["fit_rmse"]),
    )
