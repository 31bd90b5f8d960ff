#!/usr/bin/env python3
"""Regenerate the bundled demonstration model file.

Usage: python tools/make_toy_model.py [--out models/toy-k3-n128.gmmp]

The build is fully deterministic; rerunning must reproduce the committed
file byte for byte.
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from gmmcodec.modelfile import load_model, save_model  # noqa: E402
from gmmcodec.toy import TOY_SEED, toy_tensors  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--out",
        default=str(pathlib.Path(__file__).resolve().parents[1] / "models" / "toy-k3-n128.gmmp"),
    )
    parser.add_argument("--seed", type=int, default=TOY_SEED)
    args = parser.parse_args()

    out = pathlib.Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(out, toy_tensors(args.seed))
    model = load_model(out)
    print(f"wrote {out} ({out.stat().st_size} bytes): k={model.k} n={model.n} nz={model.nz}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
