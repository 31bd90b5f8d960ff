"""Regenerate the reference sample image, container, and frozen metadata.

Run from the repository root after any intentional bitstream change:

    python3 tools/make_golden.py

The test suite asserts byte equality against these artifacts, so a diff
here is a format break and should be treated as one.
"""

import json
import pathlib
import sys
import zlib

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from gmmcodec.cli import read_image, write_image  # noqa: E402
from gmmcodec.modelfile import load_model  # noqa: E402
from gmmcodec.pipeline import decode_image, encode_image  # noqa: E402

REPO = pathlib.Path(__file__).resolve().parent.parent
OUT = REPO / "tests" / "data"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    model = load_model(REPO / "models" / "toy-k3-n128.gmmp")

    rng = np.random.default_rng(0x601D)
    yy, xx = np.mgrid[0:96, 0:80]
    layers = 0.35 + 0.3 * np.sin(yy / 7.0) * np.cos(xx / 11.0)
    img = np.clip(layers[None] + 0.3 * rng.random((3, 96, 80)), 0.0, 1.0)
    write_image(str(OUT / "sample.png"), img)

    canonical = read_image(str(OUT / "sample.png"))
    blob, report = encode_image(canonical, model)
    (OUT / "sample.gmc").write_bytes(blob)
    recon, dec = decode_image(blob, model)
    meta = {
        "container_bytes": len(blob),
        "bpp": report["bpp"],
        "latent_crc32": report["latent_crc32"],
        "hyper_crc32": report["hyper_crc32"],
        "recon_crc32": zlib.crc32(np.rint(recon * 255).astype(np.uint8).tobytes()),
    }
    (OUT / "sample.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(json.dumps(meta, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
