#!/usr/bin/env python3
"""Regenerate the frozen head-training oracle values.

Runs a 10^6-step fixed-rate gradient descent (tests/oracles.py) on the 20
deterministic head-training instances and freezes the resulting losses into
tests/data/head_oracle.json. Slow by design; run it only when the instance
definitions change.
"""

import json
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from oracles import descend_head, make_head_instance  # noqa: E402

N_INSTANCES = 20
OUT = ROOT / "tests" / "data" / "head_oracle.json"


def main() -> None:
    OUT.parent.mkdir(parents=True, exist_ok=True)
    losses = {}
    for seed in range(N_INSTANCES):
        x, y, l2, c = make_head_instance(seed)
        t0 = time.time()
        loss = descend_head(x, y, l2, c)
        losses[str(seed)] = loss
        print(f"seed {seed:2d}: n={len(y):3d} d={x.shape[1]:2d} C={c} l2={l2:.4f} "
              f"loss={loss:.12f} ({time.time() - t0:.1f}s)", flush=True)
    OUT.write_text(json.dumps(losses, indent=2) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
