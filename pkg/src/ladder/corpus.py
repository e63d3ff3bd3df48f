"""On-disk data model: embedding matrices, sample tables and text corpora.

Binary embedding files (static extension ``.ladremb``) are dumb row-major
float32 blobs with a fixed little-endian header; all pairing between rows
and sample records is positional and pinned by ``manifest.json``. Values are
stored as float32; downstream arithmetic happens in float64.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    BadLabel,
    BadMagic,
    DuplicateId,
    IoError,
    MissingFile,
    MissingGroupTag,
    NonFinite,
    RowCountMismatch,
    ShapeMismatch,
    UnsupportedVersion,
)

MAGIC = b"LADR"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")  # magic, version, rows, dim

SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Dense row-major matrix of float32 vectors (one row per sample/sentence)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise ShapeMismatch(f"embedding matrix must be 2-D, got ndim={arr.ndim}")
        if arr.shape[1] < 1:
            raise ShapeMismatch("embedding dim must be >= 1")
        if arr.size and not np.isfinite(arr).all():
            raise NonFinite("embedding matrix contains NaN or Inf")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def as_float64(self) -> np.ndarray:
        """Float64 working copy; all arithmetic downstream of storage uses this."""
        return self.data.astype(np.float64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)


def save_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    """Write a ``.ladremb`` file: 4-byte magic, u32 version, u64 rows, u64 dim,
    then rows*dim float32 little-endian values, no padding or trailer."""
    path = Path(path)
    if not path.parent.exists():
        raise IoError(f"parent directory does not exist: {path.parent}")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, matrix.rows, matrix.dim)
    payload = np.ascontiguousarray(matrix.data, dtype="<f4").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"embedding file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise BadMagic(f"{path}: file shorter than header ({len(blob)} bytes)")
    magic, version, rows, dim = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"{path}: unsupported version {version}")
    if dim < 1:
        raise ShapeMismatch(f"{path}: dim must be >= 1, got {dim}")
    expected = rows * dim * 4
    payload = blob[_HEADER.size:]
    if len(payload) != expected:
        raise ShapeMismatch(
            f"{path}: payload is {len(payload)} bytes, expected {expected} for {rows}x{dim}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(rows, dim)
    if arr.size and not np.isfinite(arr).all():
        raise NonFinite(f"{path}: payload contains NaN or Inf")
    return EmbeddingMatrix(arr)


@dataclass(frozen=True)
class SampleRecord:
    """One labelled sample with the probed model's prediction attached.

    ``groups`` carries optional binary ground-truth tags (e.g. bias_aligned);
    they are never consumed by discovery or mitigation, only by evaluation.
    """

    id: str
    label: int
    prediction: int
    score: Optional[float] = None
    groups: Optional[Mapping[str, int]] = None

    def __post_init__(self):
        if self.score is not None and not (0.0 <= float(self.score) <= 1.0):
            raise BadLabel(f"sample {self.id}: score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class SliceDataset:
    """A split's sample table joined with its feature/embedding matrices."""

    name: str
    classes: Sequence[str]
    samples: Sequence[SampleRecord]
    features: EmbeddingMatrix
    vlr_image: Optional[EmbeddingMatrix] = None
    split: str = "validation"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise BadLabel(f"unknown split {self.split!r}, expected one of {SPLITS}")
        n = len(self.samples)
        if self.features.rows != n:
            raise RowCountMismatch(
                f"{self.name}: {n} samples but {self.features.rows} feature rows"
            )
        if self.vlr_image is not None and self.vlr_image.rows != n:
            raise RowCountMismatch(
                f"{self.name}: {n} samples but {self.vlr_image.rows} vlr rows"
            )
        seen = set()
        for rec in self.samples:
            if rec.id in seen:
                raise DuplicateId(f"{self.name}: duplicate sample id {rec.id!r}")
            seen.add(rec.id)
        c = len(self.classes)
        for rec in self.samples:
            if not (0 <= rec.label < c) or not (0 <= rec.prediction < c):
                raise BadLabel(
                    f"sample {rec.id}: label={rec.label} prediction={rec.prediction} "
                    f"not valid for {c} classes"
                )
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "samples", tuple(self.samples))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def predictions(self) -> np.ndarray:
        return np.array([s.prediction for s in self.samples], dtype=np.int64)

    def class_members(self, class_label: int) -> np.ndarray:
        return np.flatnonzero(self.labels() == class_label)

    def group_values(self, key: str) -> np.ndarray:
        vals = []
        for rec in self.samples:
            if rec.groups is None or key not in rec.groups:
                raise MissingGroupTag(f"sample {rec.id} lacks group tag {key!r}")
            vals.append(int(rec.groups[key]))
        return np.array(vals, dtype=np.int64)


@dataclass(frozen=True)
class TextCorpus:
    """Sentence corpus with positionally paired text embeddings."""

    sentences: Sequence[tuple[str, str]]  # (id, text)
    embeddings: EmbeddingMatrix

    def __post_init__(self):
        if len(self.sentences) != self.embeddings.rows:
            raise RowCountMismatch(
                f"corpus has {len(self.sentences)} sentences but "
                f"{self.embeddings.rows} embedding rows"
            )
        seen = set()
        for sid, _ in self.sentences:
            if sid in seen:
                raise DuplicateId(f"duplicate sentence id {sid!r}")
            seen.add(sid)
        object.__setattr__(self, "sentences", tuple((str(i), str(t)) for i, t in self.sentences))

    def __len__(self) -> int:
        return len(self.sentences)

    def texts(self) -> list[str]:
        return [t for _, t in self.sentences]


# --- jsonl / manifest loaders ------------------------------------------------

def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise IoError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
    return rows


def load_samples(path: str | Path, n_classes: int) -> list[SampleRecord]:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"samples file not found: {path}")
    records = []
    for row in _read_jsonl(path):
        try:
            rec = SampleRecord(
                id=str(row["id"]),
                label=int(row["label"]),
                prediction=int(row["prediction"]),
                score=row.get("score"),
                groups={k: int(v) for k, v in row["groups"].items()} if row.get("groups") else None,
            )
        except KeyError as exc:
            raise BadLabel(f"{path}: sample record missing field {exc}") from exc
        records.append(rec)
    return records


def load_dataset(manifest_path: str | Path) -> SliceDataset:
    """Join manifest + samples.jsonl + embedding blobs into a SliceDataset.

    Relative paths inside the manifest resolve against the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise MissingFile(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IoError(f"{manifest_path}: invalid JSON ({exc})") from exc
    base = manifest_path.parent

    def resolve(rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else base / p

    for key in ("name", "classes", "split", "samples", "features"):
        if key not in manifest:
            raise BadLabel(f"{manifest_path}: manifest missing key {key!r}")

    classes = [str(c) for c in manifest["classes"]]
    samples = load_samples(resolve(manifest["samples"]), len(classes))
    features = load_embeddings(resolve(manifest["features"]))
    vlr = None
    if manifest.get("vlr_image"):
        vlr = load_embeddings(resolve(manifest["vlr_image"]))
    return SliceDataset(
        name=str(manifest["name"]),
        classes=classes,
        samples=samples,
        features=features,
        vlr_image=vlr,
        split=str(manifest["split"]),
    )


def load_corpus(jsonl_path: str | Path, embeddings_path: str | Path) -> TextCorpus:
    jsonl_path = Path(jsonl_path)
    if not jsonl_path.exists():
        raise MissingFile(f"corpus file not found: {jsonl_path}")
    sentences = []
    for row in _read_jsonl(jsonl_path):
        if "id" not in row or "text" not in row:
            raise BadLabel(f"{jsonl_path}: corpus line must have id and text: {row}")
        sentences.append((str(row["id"]), str(row["text"])))
    return TextCorpus(sentences=sentences, embeddings=load_embeddings(embeddings_path))


# --- writers (used by the generator, tests and the exporter round-trip) -------

def write_samples_jsonl(records: Iterable[SampleRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            row: dict = {"id": rec.id, "label": rec.label, "prediction": rec.prediction}
            if rec.score is not None:
                row["score"] = float(rec.score)
            if rec.groups is not None:
                row["groups"] = {k: int(v) for k, v in rec.groups.items()}
            fh.write(json.dumps(row, sort_keys=False) + "\n")


def write_manifest(
    path: str | Path,
    name: str,
    classes: Sequence[str],
    split: str,
    samples_rel: str,
    features_rel: str,
    vlr_rel: Optional[str] = None,
) -> None:
    manifest = {
        "name": name,
        "classes": list(classes),
        "split": split,
        "samples": samples_rel,
        "features": features_rel,
    }
    if vlr_rel is not None:
        manifest["vlr_image"] = vlr_rel
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def write_corpus_jsonl(sentences: Iterable[tuple[str, str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sid, text in sentences:
            fh.write(json.dumps({"id": sid, "text": text}) + "\n")
