"""Seeded synthetic benchmark with planted spurious directions.

The generator plants an orthonormal class-signal direction u and one or more
bias directions v_i in the joint embedding space. A sample's image embedding
is sign(y)*signal*u + sum_i a_i*strength_i*v_i + noise, where the bias tag
a_i agrees with the class sign with the configured probability (high in
train, even in validation/test). Classifier features are a fixed random
orthogonal image of the embedding plus noise, and the probed model's
predictions are simulated: correct with probability p_aligned when every
planted bias agrees with the class, decaying multiplicatively per
conflicting bias. The corpus attaches sentences to each bias polarity, to
the class signal, and to random distractor directions; mock LLM responses
name the planted attributes with test sentences quoted verbatim from the
corpus.

Everything (including the mock fixture's prompt hashes, which are computed
by running the real retrieval pipeline on the generated data) is a pure
function of the config, so one seed reproduces the bundle byte for byte.

Detectability floor: with bias_strength below noise_sigma the planted
attribute is not reliably separable in the embedding and downstream
recovery guarantees lapse.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import (
    EmbeddingMatrix,
    SampleRecord,
    SliceDataset,
    TextCorpus,
    write_corpus_jsonl,
    write_manifest,
    write_samples_jsonl,
)
from .errors import ConfigError
from .hypothesis import Hypothesis, HypothesisSet, build_prompt, format_response
from .metrics import GroundTruthSlices, group_cell_accuracies, mean_accuracy
from .mitigator import train_head
from .projection import fit_projection, project
from .providers import prompt_sha256
from .retrieval import mean_difference, retrieve_topk
from . import corpus as corpus_io


@dataclass(frozen=True)
class SynthConfig:
    n_train: int = 2000
    n_val: int = 1200
    n_test: int = 1200
    d_phi: int = 24
    d_psi: int = 12
    n_classes: int = 2
    bias_fraction: float = 0.95
    signal_strength: float = 2.5
    bias_strength: float = 2.0
    noise_sigma: float = 0.8
    n_distractor_sentences: int = 24
    seed: int = 0
    # secondary planted biases: (strength, train fraction) pairs
    extra_biases: tuple[tuple[float, float], ...] = ()
    val_bias_fraction: float = 0.5
    test_bias_fraction: float = 0.5
    feature_noise: float = 0.05
    text_noise: float = 0.05
    sentences_per_cluster: int = 10
    p_aligned: float = 0.98
    p_conflicting: float = 0.55
    top_k: int = 20
    task: str = "shape category"
    modality: str = "natural images"

    def __post_init__(self):
        if self.n_classes != 2:
            raise ConfigError("generator supports exactly 2 classes")
        for frac in (self.bias_fraction, *(f for _, f in self.extra_biases)):
            if not (0.5 < frac <= 1.0):
                raise ConfigError(f"bias fraction {frac} outside (0.5, 1]")
        if self.signal_strength <= 0 or self.noise_sigma <= 0:
            raise ConfigError("signal_strength and noise_sigma must be > 0")
        if self.bias_strength < 0 or any(s < 0 for s, _ in self.extra_biases):
            raise ConfigError("bias strengths must be >= 0")
        if min(self.n_train, self.n_val, self.n_test) < 16:
            raise ConfigError("splits need at least 16 samples each")
        if self.d_psi < 2 + len(self.extra_biases) or self.d_phi < self.d_psi:
            raise ConfigError("need d_phi >= d_psi >= 2 + number of extra biases")

    @property
    def bias_strengths(self) -> tuple[float, ...]:
        return (self.bias_strength, *(s for s, _ in self.extra_biases))

    @property
    def bias_fractions(self) -> tuple[float, ...]:
        return (self.bias_fraction, *(f for _, f in self.extra_biases))

    @property
    def n_biases(self) -> int:
        return 1 + len(self.extra_biases)

    @classmethod
    def from_json(cls, payload: dict) -> "SynthConfig":
        if "extra_biases" in payload:
            payload = dict(payload)
            payload["extra_biases"] = tuple(
                (float(s), float(f)) for s, f in payload["extra_biases"]
            )
        try:
            return cls(**payload)
        except TypeError as exc:
            raise ConfigError(f"bad generator config: {exc}") from exc


def bias_group_key(bias_index: int) -> str:
    return "bias_aligned" if bias_index == 0 else f"bias{bias_index + 1}_aligned"


CLASS_NAMES = ("disc", "cross")

_MARKER_NOUNS = ("image", "frame", "photo", "scene", "picture", "shot", "view",
                 "snapshot", "composition", "panel")

_BIAS_THEMES = (
    ("marker_left", "marker_right",
     "a small dot marker near the left edge of the {noun}",
     "a small dot marker near the right edge of the {noun}"),
    ("blue_border", "amber_border",
     "the {noun} is framed by a cool blue border",
     "the {noun} is framed by a warm amber border"),
    ("grid_backdrop", "plain_backdrop",
     "a faint grid pattern fills the backdrop of the {noun}",
     "a plain untextured backdrop fills the {noun}"),
)

_SIGNAL_TEMPLATES = (
    "a single rounded disc shape dominates the {noun}",
    "a bold cross shape dominates the {noun}",
)

_DISTRACTOR_TEMPLATES = (
    "the {noun} looks slightly overexposed",
    "a soft shadow falls across the {noun}",
    "the {noun} has mild film grain",
    "the corner of the {noun} is vignetted",
    "the {noun} was taken indoors",
    "colors in the {noun} are muted",
    "the {noun} is in sharp focus",
    "the horizon sits low in the {noun}",
)


def _vary(template: str, count: int) -> list[str]:
    return [template.format(noun=_MARKER_NOUNS[i % len(_MARKER_NOUNS)]) for i in range(count)]


@dataclass(frozen=True)
class SynthBundle:
    config: SynthConfig
    datasets: dict[str, SliceDataset]  # keys: train / validation / test
    corpus: TextCorpus
    gt_slices: dict[str, list[dict]]  # split -> [{name, members}]
    mock_responses: list[dict]  # {prompt_sha256, response, class_label}
    analytic: dict
    cluster_sentences: dict[str, list[str]]  # attribute name -> verbatim texts


def _sample_split(
    rng: np.random.Generator,
    n: int,
    split: str,
    config: SynthConfig,
    u: np.ndarray,
    v: np.ndarray,  # (n_biases, d_psi)
    feat_map: np.ndarray,  # (d_phi, d_psi)
    align_fractions: Sequence[float],
) -> SliceDataset:
    y = rng.integers(0, 2, size=n)
    if len(np.unique(y)) < 2:
        raise ConfigError(f"{split}: drew a single-class split; increase n")
    y_sign = 2 * y - 1

    strengths = np.array(config.bias_strengths)
    aligned = np.stack(
        [rng.random(n) < frac for frac in align_fractions], axis=1
    )  # (n, n_biases)
    tags = np.where(aligned, y_sign[:, None], -y_sign[:, None])  # a_i in {+1,-1}

    psi = (
        y_sign[:, None] * config.signal_strength * u[None, :]
        + (tags * strengths[None, :]) @ v
        + rng.normal(0.0, config.noise_sigma, size=(n, config.d_psi))
    )
    phi = psi @ feat_map.T + rng.normal(0.0, config.feature_noise, size=(n, config.d_phi))

    # Simulated probe-model correctness: each conflicting *active* bias decays
    # the probability of a correct prediction multiplicatively.
    active = strengths > 0
    conflicts = (~aligned[:, active]).sum(axis=1)
    ratio = config.p_conflicting / config.p_aligned
    p_correct = config.p_aligned * ratio**conflicts
    correct = rng.random(n) < p_correct
    preds = np.where(correct, y, 1 - y)

    margins = rng.uniform(0.55, 0.95, size=n)
    scores = np.where(preds == 1, margins, 1.0 - margins)

    records = []
    for i in range(n):
        groups = {
            bias_group_key(b): int(aligned[i, b]) for b in range(config.n_biases)
        }
        records.append(
            SampleRecord(
                id=f"{split}_{i:05d}",
                label=int(y[i]),
                prediction=int(preds[i]),
                score=float(round(scores[i], 6)),
                groups=groups,
            )
        )
    return SliceDataset(
        name=f"synth-{split}",
        classes=list(CLASS_NAMES),
        samples=records,
        features=EmbeddingMatrix(phi.astype(np.float32)),
        vlr_image=EmbeddingMatrix(psi.astype(np.float32)),
        split=split,
    )


def _build_corpus(
    rng: np.random.Generator,
    config: SynthConfig,
    u: np.ndarray,
    v: np.ndarray,
) -> tuple[TextCorpus, dict[str, list[str]]]:
    texts: list[str] = []
    vectors: list[np.ndarray] = []
    clusters: dict[str, list[str]] = {}

    def add_cluster(name: str, center: np.ndarray, templates: Sequence[str], count: int):
        sentences = []
        for template in templates:
            sentences.extend(_vary(template, count))
        clusters[name] = sentences[:count]
        for s in sentences[:count]:
            texts.append(s)
            vectors.append(center + rng.normal(0.0, config.text_noise, size=config.d_psi))

    per = config.sentences_per_cluster
    for b in range(config.n_biases):
        pos_name, neg_name, pos_tpl, neg_tpl = _BIAS_THEMES[b % len(_BIAS_THEMES)]
        add_cluster(pos_name, v[b], [pos_tpl], per)
        add_cluster(neg_name, -v[b], [neg_tpl], per)
    add_cluster("cross_shape", u, [_SIGNAL_TEMPLATES[1]], max(4, per // 2))
    add_cluster("disc_shape", -u, [_SIGNAL_TEMPLATES[0]], max(4, per // 2))

    # distractor directions live in the orthogonal complement of the planted
    # span, so off-topic sentences cannot accidentally correlate with a bias
    planted = np.vstack([u[None, :], v])
    distractor_texts = []
    for i in range(config.n_distractor_sentences):
        template = _DISTRACTOR_TEMPLATES[i % len(_DISTRACTOR_TEMPLATES)]
        noun = _MARKER_NOUNS[(i // len(_DISTRACTOR_TEMPLATES)) % len(_MARKER_NOUNS)]
        text = template.format(noun=noun)
        direction = rng.normal(size=config.d_psi)
        direction -= planted.T @ (planted @ direction)
        direction /= np.linalg.norm(direction)
        distractor_texts.append(text)
        texts.append(text)
        vectors.append(direction + rng.normal(0.0, config.text_noise, size=config.d_psi))
    clusters["distractor"] = distractor_texts

    sentences = [(f"s{i:04d}", t) for i, t in enumerate(texts)]
    embeddings = EmbeddingMatrix(np.stack(vectors).astype(np.float32))
    return TextCorpus(sentences=sentences, embeddings=embeddings), clusters


def _mock_hypothesis_sets(
    config: SynthConfig, clusters: dict[str, list[str]]
) -> dict[int, HypothesisSet]:
    """Canned per-class responses naming the planted attributes.

    With a single planted bias, two decoys (a distractor attribute and the
    opposite polarity) keep top-gap ranking meaningful; with several biases
    the response names exactly the planted attributes.
    """
    sets = {}
    for class_label in (0, 1):
        hypotheses = []
        for b in range(config.n_biases):
            pos_name, neg_name = _BIAS_THEMES[b % len(_BIAS_THEMES)][:2]
            attr = pos_name if class_label == 1 else neg_name
            hypotheses.append(
                Hypothesis(
                    id=f"H{len(hypotheses) + 1}",
                    attribute=attr,
                    statement=f"The classifier is making mistake as it is biased toward {attr.replace('_', ' ')}",
                    test_sentences=tuple(clusters[attr][:5]),
                )
            )
        if config.n_biases == 1:
            pos_name, neg_name = _BIAS_THEMES[0][:2]
            opposite = neg_name if class_label == 1 else pos_name
            hypotheses.append(
                Hypothesis(
                    id=f"H{len(hypotheses) + 1}",
                    attribute="film_grain",
                    statement="The classifier is making mistake as it is biased toward film grain",
                    test_sentences=tuple(clusters["distractor"][:5]),
                )
            )
            hypotheses.append(
                Hypothesis(
                    id=f"H{len(hypotheses) + 1}",
                    attribute=opposite,
                    statement=f"The classifier is making mistake as it is biased toward {opposite.replace('_', ' ')}",
                    test_sentences=tuple(clusters[opposite][:5]),
                )
            )
        hypset = HypothesisSet(class_label=class_label, hypotheses=tuple(hypotheses), raw_response="")
        sets[class_label] = HypothesisSet(
            class_label=class_label,
            hypotheses=tuple(hypotheses),
            raw_response=format_response(hypset),
        )
    return sets


def _prompts_for_bundle(
    datasets: dict[str, SliceDataset], corpus: TextCorpus, config: SynthConfig
) -> dict[int, str]:
    """Replicate the retrieval pipeline to obtain the exact prompts the CLI
    will build, so mock responses can be keyed by prompt hash."""
    projector = fit_projection(datasets["train"].features, datasets["train"].vlr_image)
    projected = project(projector, datasets["validation"].features)
    prompts = {}
    for class_label in (0, 1):
        delta = mean_difference(projected, datasets["validation"], class_label)
        retrieved = retrieve_topk(delta, corpus, k=config.top_k, similarity="cosine")
        prompts[class_label] = build_prompt(
            task=config.task,
            modality=config.modality,
            sentences=[r.text for r in retrieved],
            k=config.top_k,
            medical=False,
        )
    return prompts


def _gt_slices_for(dataset: SliceDataset, config: SynthConfig, split: str) -> list[dict]:
    slices = []
    for class_label in (0, 1):
        for b in range(config.n_biases):
            aligned = dataset.group_values(bias_group_key(b))
            members = np.flatnonzero((dataset.labels() == class_label) & (aligned == 0))
            slices.append(
                {
                    "name": f"{split}/class{class_label}/bias{b + 1}",
                    "class_label": class_label,
                    "bias": b + 1,
                    "members": [int(i) for i in members],
                }
            )
    return slices


def generate(config: SynthConfig) -> SynthBundle:
    """Build the full bundle deterministically from the config (incl. seed)."""
    rng = np.random.default_rng(config.seed)

    # Orthonormal directions: u (class signal) then one v per bias.
    basis = np.linalg.qr(rng.normal(size=(config.d_psi, config.d_psi)))[0]
    u = basis[:, 0]
    v = basis[:, 1 : 1 + config.n_biases].T

    # Fixed random orthogonal feature map phi = A psi + noise.
    feat_map = np.linalg.qr(rng.normal(size=(config.d_phi, config.d_phi)))[0][:, : config.d_psi]

    fractions = config.bias_fractions
    datasets = {
        "train": _sample_split(rng, config.n_train, "train", config, u, v, feat_map, fractions),
        "validation": _sample_split(
            rng, config.n_val, "validation", config, u, v, feat_map,
            [config.val_bias_fraction] * config.n_biases,
        ),
        "test": _sample_split(
            rng, config.n_test, "test", config, u, v, feat_map,
            [config.test_bias_fraction] * config.n_biases,
        ),
    }

    corpus, clusters = _build_corpus(rng, config, u, v)
    hyp_sets = _mock_hypothesis_sets(config, clusters)
    prompts = _prompts_for_bundle(datasets, corpus, config)
    mock_responses = [
        {
            "prompt_sha256": prompt_sha256(prompts[class_label]),
            "response": hyp_sets[class_label].raw_response,
            "class_label": class_label,
        }
        for class_label in (0, 1)
    ]

    gt_slices = {
        split: _gt_slices_for(datasets[split], config, split)
        for split in ("validation", "test")
    }

    ratio = config.p_conflicting / config.p_aligned
    n_active = sum(1 for s in config.bias_strengths if s > 0)
    worst_cell_p = config.p_aligned * ratio**n_active if n_active else config.p_aligned
    cell_ps = [
        config.p_aligned * ratio**c if n_active else config.p_aligned
        for c in range(n_active + 1)
    ]
    # Validation/test alignment is even, so conflict counts are binomial(1/2).
    from math import comb

    mean_p = sum(
        comb(n_active, c) * 0.5**n_active * p for c, p in enumerate(cell_ps)
    ) if n_active else config.p_aligned
    analytic = {
        "p_aligned": config.p_aligned,
        "p_conflicting": config.p_conflicting,
        "n_active_biases": n_active,
        "expected_erm_mean_accuracy": mean_p,
        "expected_erm_wga": worst_cell_p,
        "detectability_floor": config.noise_sigma,
    }

    return SynthBundle(
        config=config,
        datasets=datasets,
        corpus=corpus,
        gt_slices=gt_slices,
        mock_responses=mock_responses,
        analytic=analytic,
        cluster_sentences=clusters,
    )


def write_bundle(bundle: SynthBundle, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for split, dataset in bundle.datasets.items():
        split_dir = out_dir / split
        split_dir.mkdir(exist_ok=True)
        write_samples_jsonl(dataset.samples, split_dir / "samples.jsonl")
        corpus_io.save_embeddings(dataset.features, split_dir / "features.ladremb")
        corpus_io.save_embeddings(dataset.vlr_image, split_dir / "vlr.ladremb")
        write_manifest(
            split_dir / "manifest.json",
            name=dataset.name,
            classes=dataset.classes,
            split=split,
            samples_rel="samples.jsonl",
            features_rel="features.ladremb",
            vlr_rel="vlr.ladremb",
        )
    write_corpus_jsonl(bundle.corpus.sentences, out_dir / "corpus.jsonl")
    corpus_io.save_embeddings(bundle.corpus.embeddings, out_dir / "corpus.ladremb")
    with open(out_dir / "mock_responses.jsonl", "w", encoding="utf-8") as fh:
        for row in bundle.mock_responses:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    (out_dir / "gt_slices.json").write_text(
        json.dumps(bundle.gt_slices, indent=2, sort_keys=True) + "\n"
    )
    (out_dir / "analytic.json").write_text(
        json.dumps(bundle.analytic, indent=2, sort_keys=True) + "\n"
    )
    (out_dir / "synth_config.json").write_text(
        json.dumps(asdict(bundle.config), indent=2, sort_keys=True) + "\n"
    )


def ground_truth_slices(bundle: SynthBundle, split: str) -> GroundTruthSlices:
    return GroundTruthSlices(
        slices=tuple(
            (row["name"], frozenset(row["members"])) for row in bundle.gt_slices[split]
        )
    )


def _balance_on_tags(dataset: SliceDataset, keys: Sequence[str], seed: int) -> np.ndarray:
    """Ground-truth analogue of pseudo-label balancing over label x tag cells."""
    labels = dataset.labels()
    tags = np.stack([dataset.group_values(k) for k in keys], axis=1)
    cells = {}
    combos: list[tuple[int, ...]] = [()]
    for _ in keys:
        combos = [c + (b,) for c in combos for b in (0, 1)]
    for label in range(dataset.n_classes):
        for combo in combos:
            mask = labels == label
            for j, b in enumerate(combo):
                mask &= tags[:, j] == b
            idx = np.flatnonzero(mask)
            if idx.size == 0:
                raise ConfigError(f"ground-truth cell {(label, *combo)} empty")
            cells[(label, *combo)] = idx
    m = min(v.size for v in cells.values())
    rng = np.random.default_rng(seed)
    chosen = [rng.choice(cells[k], size=m, replace=False) for k in sorted(cells)]
    return np.sort(np.concatenate(chosen))


def oracle_report(bundle: SynthBundle) -> dict:
    """Ground-truth quantities: true slice membership, the simulated model's
    accuracy profile, and the WGA of a head trained on truth-balanced data."""
    config = bundle.config
    keys = [bias_group_key(b) for b in range(config.n_biases)]
    test = bundle.datasets["test"]
    val = bundle.datasets["validation"]

    erm_preds = test.predictions()
    cells = group_cell_accuracies(test, erm_preds, keys)
    worst_name = min(cells, key=lambda n: (cells[n], n))

    balanced_idx = _balance_on_tags(val, keys, seed=config.seed)
    oracle_head = train_head(
        val.features, val.labels(), balanced_idx, n_classes=val.n_classes
    )
    oracle_preds = oracle_head.predict(test.features.as_float64())
    oracle_cells = group_cell_accuracies(test, oracle_preds, keys)

    return {
        "gt_slices": bundle.gt_slices,
        "analytic": bundle.analytic,
        "erm_mean_accuracy": mean_accuracy(test, erm_preds),
        "erm_wga": cells[worst_name],
        "erm_worst_cell": worst_name,
        "erm_cells": cells,
        "oracle_balanced_wga": min(oracle_cells.values()),
        "oracle_balanced_mean_accuracy": mean_accuracy(test, oracle_preds),
        "oracle_cells": oracle_cells,
    }
