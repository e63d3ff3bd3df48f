#!/usr/bin/env python3
"""Run the full discovery + mitigation pipeline on synthetic benchmarks.

Sweeps seeds for a given generator config, prints a per-seed table of
slice-discovery precision and worst-group accuracies, and leaves every
artifact on disk under --workdir for inspection with the CLI stages.

Examples:
    python scripts/run_synth_experiment.py --seeds 5
    python scripts/run_synth_experiment.py --config multibias.json --seeds 3
    python scripts/run_synth_experiment.py --null --seeds 5
"""

import argparse
import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path


def run_stage(argv) -> None:
    cmd = [sys.executable, "-m", "ladder", *map(str, argv)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr)
        raise SystemExit(f"stage failed: {' '.join(cmd)}")


def run_seed(seed: int, config: dict, workdir: Path) -> dict:
    root = workdir / f"seed_{seed}"
    bundle = root / "bundle_in"
    config_path = root / "config.json"
    root.mkdir(parents=True, exist_ok=True)
    config_path.write_text(json.dumps(config))
    run_stage(["synth", "--config", config_path, "--seed", seed, "--out", bundle])
    cfg = json.loads((bundle / "synth_config.json").read_text())
    corpus = ["--corpus", bundle / "corpus.jsonl", "--corpus-embeddings", bundle / "corpus.ladremb"]
    run_stage(["fit-projection", "--train-manifest", bundle / "train" / "manifest.json",
               "--out", root / "proj"])
    run_stage(["discover", "--manifest", bundle / "validation" / "manifest.json",
               "--projector", root / "proj", *corpus,
               "--task", cfg["task"], "--modality", cfg["modality"],
               "--top-k", cfg["top_k"], "--provider", "mock",
               "--mock-fixture", bundle / "mock_responses.jsonl", "--out", root / "disc"])
    run_stage(["slices", "--manifest", bundle / "validation" / "manifest.json",
               "--projector", root / "proj", *corpus,
               "--hypotheses", root / "disc" / "hypotheses.json",
               "--out", root / "slices.json"])
    slices = json.loads((root / "slices.json").read_text())
    flagged = [r for r in slices if r["is_error_slice"]]
    row = {"seed": seed, "flagged": len(flagged), "hypotheses": len(slices)}
    if flagged:
        run_stage(["mitigate", "--manifest", bundle / "validation" / "manifest.json",
                   "--projector", root / "proj", *corpus,
                   "--hypotheses", root / "disc" / "hypotheses.json",
                   "--slices", root / "slices.json", "--seed", seed,
                   "--out", root / "head_bundle"])
        run_stage(["eval", "--manifest", bundle / "test" / "manifest.json",
                   "--projector", root / "proj", "--bundle", root / "head_bundle",
                   "--group-key", "bias_aligned",
                   "--gt-slices", bundle / "gt_slices.json", "--gt-split", "validation",
                   "--slices", root / "slices.json", "--out", root / "metrics.json"])
        run_stage(["report", "--slices", root / "slices.json",
                   "--metrics", root / "metrics.json", "--out", root / "report.md"])
        metrics = json.loads((root / "metrics.json").read_text())
        row.update(
            p10=metrics.get("precision_at_10"),
            source_wga=metrics["source"].get("wga"),
            ensemble_wga=metrics["ensemble"].get("wga"),
            erm_head_wga=metrics["erm_head"].get("wga"),
        )
    return row


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seeds", type=int, default=5, help="number of seeds (0..n-1)")
    parser.add_argument("--config", type=Path, help="generator config JSON")
    parser.add_argument("--null", action="store_true", help="zero out the planted bias")
    parser.add_argument("--workdir", type=Path, help="keep artifacts here (default: temp dir)")
    args = parser.parse_args()

    config = json.loads(args.config.read_text()) if args.config else {}
    if args.null:
        config["bias_strength"] = 0.0
    workdir = args.workdir or Path(tempfile.mkdtemp(prefix="ladder_synth_"))
    workdir.mkdir(parents=True, exist_ok=True)

    rows = [run_seed(seed, config, workdir) for seed in range(args.seeds)]
    header = ["seed", "hypotheses", "flagged", "p10", "source_wga", "ensemble_wga", "erm_head_wga"]
    print("\t".join(header))
    for row in rows:
        print("\t".join(
            f"{row.get(h):.3f}" if isinstance(row.get(h), float) else str(row.get(h, "-"))
            for h in header
        ))
    print(f"\nartifacts: {workdir}")
    if not args.workdir:
        keep = input("keep temp artifacts? [y/N] ") if sys.stdin.isatty() else "n"
        if keep.lower() != "y":
            shutil.rmtree(workdir, ignore_errors=True)


if __name__ == "__main__":
    main()
