"""Staged command-line pipeline with file handoffs between stages.

Stages: synth, validate, fit-projection, discover, slices, mitigate, eval,
report. Each stage reads the previous stage's artifact, writes its own
atomically (temp file + rename) and appends a line to run_log.jsonl next to
the output. Exit codes: 0 success, 1 domain error (single-line JSON on
stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .corpus import SliceDataset, TextCorpus, load_corpus, load_dataset
from .errors import ConfigError, DegenerateClass, LadderError, MissingInput
from .hypothesis import HypothesisSet, Hypothesis, build_prompt, generate_hypotheses
from .metrics import (
    GroundTruthSlices,
    PredictedSlices,
    auroc,
    group_cell_accuracies,
    mean_accuracy,
    precision_at_k,
)
from .mitigator import (
    ensemble_predict_batch,
    load_bundle,
    mitigate,
    save_bundle,
)
from .projection import fit_projection, load_projector, project, save_projector
from .providers import (
    HttpLlmClient,
    LlmRequest,
    LookupEmbedder,
    MockLlmClient,
    RemoteEmbedder,
    prompt_sha256,
)
from .retrieval import mean_difference, retrieve_topk
from .slicer import (
    DEFAULT_GAP_THRESHOLD,
    DEFAULT_MAX_HYPOTHESES,
    SliceReport,
    detect_error_slices,
    resolve_tau,
)
from .synthbench import SynthConfig, generate, write_bundle


@dataclass(frozen=True)
class RunConfig:
    """Echo of the flags that steer a pipeline stage."""

    similarity: str = "cosine"
    top_k: int = 200
    tau_policy: str = "median"
    gap_threshold: float = DEFAULT_GAP_THRESHOLD
    calibration: str = "zscore"
    l2: float = 1e-2
    provider: str = "mock"
    seed: int = 0

    def __post_init__(self):
        if self.similarity not in ("cosine", "dot"):
            raise ConfigError(f"similarity must be cosine or dot, got {self.similarity!r}")
        if self.top_k < 1:
            raise ConfigError("top-k must be >= 1")
        if self.gap_threshold < 0:
            raise ConfigError("gap threshold must be >= 0")
        if self.calibration not in ("zscore", "raw"):
            raise ConfigError(f"calibration must be zscore or raw, got {self.calibration!r}")
        if self.l2 < 0:
            raise ConfigError("l2 must be >= 0")
        resolve_tau(np.array([0.0, 1.0]), self.tau_policy)  # validates the policy string


def _git_describe() -> Optional[str]:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        return out.stdout.strip() or None
    except Exception:
        return None


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_json(path: Path, payload) -> None:
    _atomic_write_text(Path(path), json.dumps(payload, indent=2) + "\n")


def _append_run_log(out_dir: Path, stage: str, config: dict, wall_time: float) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        line = {
            "stage": stage,
            "config": config,
            "version": __version__,
            "git_describe": _git_describe(),
            "wall_time_s": round(wall_time, 6),
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        with open(out_dir / "run_log.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(line) + "\n")
    except OSError:
        pass  # logging must never fail the stage


def _require(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingInput(f"{what} not found: {p}")
    return p


def _load_corpus_args(args) -> TextCorpus:
    return load_corpus(
        _require(args.corpus, "corpus jsonl"),
        _require(args.corpus_embeddings, "corpus embeddings"),
    )


def _make_llm_provider(args):
    if args.provider == "mock":
        return MockLlmClient.from_jsonl(_require(args.mock_fixture, "mock fixture"))
    request = LlmRequest(
        endpoint=args.endpoint,
        model=args.model,
        temperature=args.temperature,
        max_tokens=args.max_tokens,
        api_key_env=args.api_key_env,
        timeout=args.timeout,
    )
    return HttpLlmClient(request)


def _make_embedder(args, corpus: Optional[TextCorpus]):
    if args.embedder == "lookup":
        if corpus is None:
            raise MissingInput("lookup embedder requires --corpus/--corpus-embeddings")
        return LookupEmbedder(corpus)
    return RemoteEmbedder(
        endpoint=args.embed_endpoint, model=args.embed_model, api_key_env=args.api_key_env
    )


def _load_hypothesis_sets(path: Path) -> list[HypothesisSet]:
    rows = _load_json(path, "hypotheses artifact")
    sets = []
    for row in rows:
        hypotheses = tuple(
            Hypothesis(
                id=h["id"],
                attribute=h["attribute"],
                statement=h["statement"],
                test_sentences=tuple(h["test_sentences"]),
            )
            for h in row["hypotheses"]
        )
        sets.append(
            HypothesisSet(
                class_label=int(row["class"]),
                hypotheses=hypotheses,
                raw_response=row.get("raw_response", ""),
            )
        )
    return sets


def _load_json(path: Path, what: str):
    from .errors import ParseError

    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{what} {path} is not valid JSON: {exc}") from exc


def _reports_from_json(path: Path) -> list[dict]:
    return _load_json(path, "slices artifact")


# --- stages -----------------------------------------------------------------------

def _stage_synth(args) -> None:
    payload = {}
    if args.config:
        payload = json.loads(_require(args.config, "generator config").read_text())
    if args.seed is not None:
        payload["seed"] = args.seed
    config = SynthConfig.from_json(payload)
    bundle = generate(config)
    write_bundle(bundle, args.out)


def _stage_validate(args) -> None:
    summary = {"datasets": [], "corpora": []}
    for manifest in args.manifest or []:
        dataset = load_dataset(_require(manifest, "manifest"))
        summary["datasets"].append(
            {
                "manifest": str(manifest),
                "name": dataset.name,
                "split": dataset.split,
                "samples": len(dataset),
                "feature_dim": dataset.features.dim,
                "vlr_dim": dataset.vlr_image.dim if dataset.vlr_image else None,
            }
        )
    if args.corpus:
        corpus = _load_corpus_args(args)
        summary["corpora"].append(
            {
                "corpus": str(args.corpus),
                "sentences": len(corpus),
                "dim": corpus.embeddings.dim,
            }
        )
    text = json.dumps(summary, indent=2)
    if args.out:
        _write_json(Path(args.out), summary)
    print(text)


def _stage_fit_projection(args) -> None:
    dataset = load_dataset(_require(args.train_manifest, "train manifest"))
    if dataset.vlr_image is None:
        raise MissingInput(f"{args.train_manifest}: manifest has no vlr_image matrix")
    projector = fit_projection(dataset.features, dataset.vlr_image, ridge=args.ridge)
    save_projector(projector, args.out)
    print(json.dumps({"d_phi": projector.d_phi, "d_psi": projector.d_psi,
                      "fit_rmse": projector.fit_rmse, "ridge": projector.ridge}))


def _class_list(dataset: SliceDataset, spec: str) -> list[int]:
    if spec == "all":
        return list(range(dataset.n_classes))
    label = int(spec)
    if not (0 <= label < dataset.n_classes):
        raise ConfigError(f"class {label} outside [0, {dataset.n_classes})")
    return [label]


def _stage_discover(args) -> None:
    if args.top_k is None:
        # 200 sentences for natural-image corpora, 100 for medical ones
        args.top_k = 100 if args.medical else 200
    RunConfig(similarity=args.similarity, top_k=args.top_k)
    dataset = load_dataset(_require(args.manifest, "manifest"))
    projector = load_projector(_require(args.projector, "projector"))
    corpus = _load_corpus_args(args)
    projected = project(projector, dataset.features)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    topk_rows: list[dict] = []
    prompt_rows: list[dict] = []
    hyp_rows: list[dict] = []
    provider = None if args.skip_llm else _make_llm_provider(args)
    skipped: list[int] = []
    for class_label in _class_list(dataset, args.class_label):
        try:
            delta = mean_difference(projected, dataset, class_label)
        except DegenerateClass as exc:
            if args.class_label != "all":
                raise
            print(f"warning: class {class_label} skipped: {exc}", file=sys.stderr)
            skipped.append(class_label)
            continue
        retrieved = retrieve_topk(delta, corpus, k=args.top_k, similarity=args.similarity)
        topk_rows.extend(
            {
                "class": class_label,
                "id": r.sentence_id,
                "text": r.text,
                "similarity": r.similarity,
                "rank": r.rank,
            }
            for r in retrieved
        )
        prompt = build_prompt(
            task=args.task,
            modality=args.modality,
            sentences=[r.text for r in retrieved],
            k=args.top_k,
            medical=args.medical,
        )
        prompt_rows.append(
            {"class": class_label, "prompt_sha256": prompt_sha256(prompt), "prompt": prompt}
        )
        if provider is not None:
            hypset = generate_hypotheses(provider, prompt, class_label=class_label)
            hyp_rows.append(
                {
                    "class": class_label,
                    "raw_response": hypset.raw_response,
                    "hypotheses": [
                        {
                            "id": h.id,
                            "attribute": h.attribute,
                            "statement": h.statement,
                            "test_sentences": list(h.test_sentences),
                        }
                        for h in hypset.hypotheses
                    ],
                }
            )
    if not prompt_rows:
        raise DegenerateClass(f"no class with both correct and misclassified samples: {skipped}")
    _write_json(out_dir / "topk.json", topk_rows)
    _write_json(out_dir / "prompts.json", prompt_rows)
    if provider is not None:
        _write_json(out_dir / "hypotheses.json", hyp_rows)


def _stage_slices(args) -> None:
    RunConfig(similarity=args.similarity, tau_policy=args.tau_policy,
              gap_threshold=args.gap_threshold)
    dataset = load_dataset(_require(args.manifest, "manifest"))
    projector = load_projector(_require(args.projector, "projector"))
    corpus = _load_corpus_args(args) if args.corpus else None
    embedder = _make_embedder(args, corpus)
    projected = project(projector, dataset.features)
    hyp_sets = _load_hypothesis_sets(_require(args.hypotheses, "hypotheses.json"))

    rows = []
    for hypset in hyp_sets:
        reports = detect_error_slices(
            dataset,
            projected,
            hypset,
            embedder,
            tau_policy=args.tau_policy,
            gap_threshold=args.gap_threshold,
            similarity=args.similarity,
            max_hypotheses=args.max_hypotheses,
        )
        rows.extend(r.to_json(dump_scores=args.dump_scores) for r in reports)
    _write_json(Path(args.out), rows)


def _stage_mitigate(args) -> None:
    RunConfig(similarity=args.similarity, calibration=args.calibration,
              l2=args.l2, seed=args.seed)
    dataset = load_dataset(_require(args.manifest, "manifest"))
    projector = load_projector(_require(args.projector, "projector"))
    corpus = _load_corpus_args(args) if args.corpus else None
    embedder = _make_embedder(args, corpus)
    projected = project(projector, dataset.features)
    hyp_sets = _load_hypothesis_sets(_require(args.hypotheses, "hypotheses.json"))
    report_rows = _reports_from_json(_require(args.slices, "slices.json"))

    reports = [
        SliceReport(
            class_label=row["class_label"],
            hypothesis_id=row["hypothesis_id"],
            attribute=row.get("attribute", ""),
            threshold=row["threshold"],
            member_ids=tuple(row["member_ids"]),
            slice_error=row["slice_error"],
            class_error=row["class_error"],
            gap=row["gap"],
            is_error_slice=row["is_error_slice"],
        )
        for row in report_rows
    ]
    bundle = mitigate(
        dataset,
        projected,
        reports,
        hyp_sets,
        embedder,
        l2=args.l2,
        seed=args.seed,
        calibration_mode=args.calibration,
        similarity=args.similarity,
    )
    save_bundle(bundle, args.out)
    for warning in bundle.warnings:
        print(f"warning: {warning}", file=sys.stderr)


def _stage_eval(args) -> None:
    dataset = load_dataset(_require(args.manifest, "manifest"))
    source_preds = dataset.predictions()
    metrics: dict = {
        "dataset": dataset.name,
        "split": dataset.split,
        "n_samples": len(dataset),
        "source": {"mean_accuracy": mean_accuracy(dataset, source_preds)},
    }

    scores = [s.score for s in dataset.samples]
    if dataset.n_classes == 2 and all(s is not None for s in scores):
        metrics["source"]["auroc"] = auroc(np.array(scores, dtype=float), dataset.labels())

    group_keys = args.group_key or []
    if group_keys:
        cells = group_cell_accuracies(dataset, source_preds, group_keys)
        worst = min(cells, key=lambda n: (cells[n], n))
        metrics["source"]["wga"] = cells[worst]
        metrics["source"]["worst_group"] = worst
        metrics["source"]["cells"] = cells

    if args.bundle:
        projector = load_projector(_require(args.projector, "projector"))
        bundle = load_bundle(_require(args.bundle, "bundle"))
        projected = project(projector, dataset.features)
        ens_preds = ensemble_predict_batch(
            dataset.features.as_float64(), projected.as_float64(), bundle
        )
        metrics["ensemble"] = {"mean_accuracy": mean_accuracy(dataset, ens_preds)}
        erm_preds = bundle.erm_head.predict(dataset.features.as_float64())
        metrics["erm_head"] = {"mean_accuracy": mean_accuracy(dataset, erm_preds)}
        per_head = {}
        for head in bundle.heads:
            head_preds = head.predict(dataset.features.as_float64())
            per_head[head.hypothesis_id] = {"mean_accuracy": mean_accuracy(dataset, head_preds)}
        if group_keys:
            for name, preds in (("ensemble", ens_preds), ("erm_head", erm_preds)):
                cells = group_cell_accuracies(dataset, preds, group_keys)
                worst = min(cells, key=lambda n: (cells[n], n))
                metrics[name].update({"wga": cells[worst], "worst_group": worst, "cells": cells})
            for head in bundle.heads:
                head_preds = head.predict(dataset.features.as_float64())
                cells = group_cell_accuracies(dataset, head_preds, group_keys)
                per_head[head.hypothesis_id]["wga"] = min(cells.values())
        if dataset.vlr_image is not None:
            # attribute influence: similarity to correctly classified image
            # embeddings minus similarity to misclassified ones
            from .corpus import EmbeddingMatrix
            from .metrics import clip_score

            correct_mask = source_preds == dataset.labels()
            vlr = dataset.vlr_image.as_float64()
            if correct_mask.any() and (~correct_mask).any():
                correct_m = EmbeddingMatrix(vlr[correct_mask].astype(np.float32))
                wrong_m = EmbeddingMatrix(vlr[~correct_mask].astype(np.float32))
                for emb in bundle.hyp_embeddings:
                    per_head[emb.hypothesis_id]["clip_score"] = clip_score(
                        emb.vector, correct_m, wrong_m
                    )
        metrics["per_head"] = per_head

    if args.gt_slices and args.slices:
        gt_payload = json.loads(_require(args.gt_slices, "gt slices").read_text())
        if isinstance(gt_payload, dict):
            gt_payload = gt_payload.get(args.gt_split or dataset.split, [])
        gt = GroundTruthSlices(
            slices=tuple((row["name"], frozenset(row["members"])) for row in gt_payload)
        )
        pred_rows = _reports_from_json(_require(args.slices, "slices.json"))
        predicted = PredictedSlices(
            slices=tuple(
                (f'c{row["class_label"]}.{row["hypothesis_id"]}', tuple(row["member_ids"]))
                for row in pred_rows
                if row["is_error_slice"]
            )
        )
        metrics[f"precision_at_{args.k}"] = precision_at_k(gt, predicted, args.k)

    metrics["config"] = {
        "similarity": args.similarity,
        "group_keys": group_keys,
        "k": args.k,
    }
    _write_json(Path(args.out), metrics)
    print(json.dumps(metrics["source"], indent=2))


def _format_pct(x: Optional[float]) -> str:
    return "n/a" if x is None else f"{100.0 * x:.1f}%"


def render_report(slices_path: str | Path, metrics_path: str | Path, out: str | Path) -> None:
    """Render slices.json + metrics.json into a human-readable Markdown report."""
    rows = _reports_from_json(_require(slices_path, "slices.json"))
    metrics = _load_json(_require(metrics_path, "metrics.json"), "metrics artifact")

    lines = ["# Error slice report", ""]
    by_class: dict[int, list[dict]] = {}
    for row in rows:
        by_class.setdefault(int(row["class_label"]), []).append(row)

    if not rows:
        lines += ["No hypotheses were produced for any class.", ""]
    for class_label in sorted(by_class):
        lines += [f"## Class {class_label}", ""]
        lines.append(
            "| hypothesis | attribute | slice size | acc (attribute present) "
            "| acc (attribute absent) | gap | error slice |"
        )
        lines.append("|---|---|---|---|---|---|---|")
        for row in sorted(by_class[class_label], key=lambda r: -r["gap"]):
            n_class = row.get("n_class")
            n_slice = row["n_members"]
            acc_absent = 1.0 - row["slice_error"]
            acc_present = None
            if n_class and n_class > n_slice:
                err_present = (
                    row["class_error"] * n_class - row["slice_error"] * n_slice
                ) / (n_class - n_slice)
                acc_present = 1.0 - err_present
            flag = "yes" if row["is_error_slice"] else "no"
            lines.append(
                f'| {row["hypothesis_id"]} | {row["attribute"]} | {n_slice} '
                f"| {_format_pct(acc_present)} | {_format_pct(acc_absent)} "
                f'| {row["gap"]:+.3f} | {flag} |'
            )
        lines.append("")

    lines += ["## Mitigation", ""]
    source = metrics.get("source", {})
    ensemble = metrics.get("ensemble")
    if ensemble:
        lines.append("| model | mean accuracy | worst-group accuracy |")
        lines.append("|---|---|---|")
        lines.append(
            f'| source model | {_format_pct(source.get("mean_accuracy"))} '
            f'| {_format_pct(source.get("wga"))} |'
        )
        erm = metrics.get("erm_head", {})
        lines.append(
            f'| retrained head (unbalanced) | {_format_pct(erm.get("mean_accuracy"))} '
            f'| {_format_pct(erm.get("wga"))} |'
        )
        lines.append(
            f'| ensemble | {_format_pct(ensemble.get("mean_accuracy"))} '
            f'| {_format_pct(ensemble.get("wga"))} |'
        )
    else:
        lines.append("No mitigation metrics available.")
    lines.append("")
    _atomic_write_text(Path(out), "\n".join(lines))


def _stage_report(args) -> None:
    render_report(args.slices, args.metrics, args.out)


# --- argument parsing ----------------------------------------------------------

def _add_provider_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--provider", choices=("mock", "http"), default="mock")
    p.add_argument("--mock-fixture", help="JSONL of {prompt_sha256, response}")
    p.add_argument("--endpoint", default="https://api.openai.com/v1/chat/completions")
    p.add_argument("--model", default="gpt-4o")
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--max-tokens", type=int, default=2048)
    p.add_argument("--api-key-env", default="LADDER_LLM_API_KEY")
    p.add_argument("--timeout", type=float, default=120.0)


def _add_embedder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--embedder", choices=("lookup", "remote"), default="lookup")
    p.add_argument("--embed-endpoint", default="https://api.openai.com/v1/embeddings")
    p.add_argument("--embed-model", default="text-embedding-3-small")


def _add_corpus_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--corpus", required=required, help="corpus .jsonl")
    p.add_argument("--corpus-embeddings", required=required, help="corpus .ladremb")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ladder",
        description="Discover and mitigate systematic error slices of a classifier "
        "from its embeddings, a sentence corpus and an LLM.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="stage", required=True)

    p = sub.add_parser("synth", help="generate a synthetic benchmark bundle")
    p.add_argument("--config", help="generator config JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_stage_synth, log_dir=lambda a: Path(a.out))

    p = sub.add_parser("validate", help="validate datasets/corpora against the format")
    p.add_argument("--manifest", action="append")
    _add_corpus_flags(p, required=False)
    p.add_argument("--out")
    p.set_defaults(func=_stage_validate, log_dir=lambda a: Path(a.out).parent if a.out else None)

    p = sub.add_parser("fit-projection", help="fit the feature-to-embedding projection")
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--ridge", type=float, default=1e-4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_stage_fit_projection, log_dir=lambda a: Path(a.out))

    p = sub.add_parser("discover", help="retrieve sentences and generate hypotheses")
    p.add_argument("--manifest", required=True)
    p.add_argument("--projector", required=True)
    _add_corpus_flags(p)
    p.add_argument("--class", dest="class_label", default="all")
    p.add_argument("--top-k", type=int, default=None,
                   help="defaults to 200 (natural) or 100 with --medical")
    p.add_argument("--similarity", choices=("cosine", "dot"), default="cosine")
    p.add_argument("--task", required=True)
    p.add_argument("--modality", required=True)
    p.add_argument("--medical", action="store_true")
    p.add_argument("--skip-llm", action="store_true",
                   help="write topk.json and prompts.json without calling the LLM")
    _add_provider_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_stage_discover, log_dir=lambda a: Path(a.out))

    p = sub.add_parser("slices", help="score hypotheses and flag error slices")
    p.add_argument("--manifest", required=True)
    p.add_argument("--projector", required=True)
    _add_corpus_flags(p, required=False)
    _add_embedder_flags(p)
    p.add_argument("--hypotheses", required=True)
    p.add_argument("--tau-policy", default="median")
    p.add_argument("--gap-threshold", type=float, default=DEFAULT_GAP_THRESHOLD)
    p.add_argument("--similarity", choices=("cosine", "dot"), default="cosine")
    p.add_argument("--max-hypotheses", type=int, default=DEFAULT_MAX_HYPOTHESES)
    p.add_argument("--dump-scores", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_stage_slices, log_dir=lambda a: Path(a.out).parent)

    p = sub.add_parser("mitigate", help="retrain balanced heads for flagged slices")
    p.add_argument("--manifest", required=True, help="validation-split manifest")
    p.add_argument("--projector", required=True)
    _add_corpus_flags(p, required=False)
    _add_embedder_flags(p)
    p.add_argument("--hypotheses", required=True)
    p.add_argument("--slices", required=True)
    p.add_argument("--l2", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--calibration", choices=("zscore", "raw"), default="zscore")
    p.add_argument("--similarity", choices=("cosine", "dot"), default="cosine")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_stage_mitigate, log_dir=lambda a: Path(a.out))

    p = sub.add_parser("eval", help="evaluate source model and mitigation bundle")
    p.add_argument("--manifest", required=True)
    p.add_argument("--projector")
    p.add_argument("--bundle")
    p.add_argument("--group-key", action="append")
    p.add_argument("--gt-slices")
    p.add_argument("--gt-split")
    p.add_argument("--slices")
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--similarity", choices=("cosine", "dot"), default="cosine")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_stage_eval, log_dir=lambda a: Path(a.out).parent)

    p = sub.add_parser("report", help="render slices + metrics into Markdown")
    p.add_argument("--slices", required=True)
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_stage_report, log_dir=lambda a: Path(a.out).parent)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.monotonic()
    try:
        args.func(args)
    except LadderError as exc:
        error = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(error), file=sys.stderr)
        return 1
    log_dir = args.log_dir(args)
    if log_dir is not None:
        config = {
            k: v
            for k, v in vars(args).items()
            if k not in ("func", "log_dir") and not callable(v)
        }
        _append_run_log(log_dir, args.stage, config, time.monotonic() - started)
    return 0


if __name__ == "__main__":
    sys.exit(main())
