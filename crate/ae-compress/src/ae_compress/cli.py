from __future__ import annotations

import argparse

from .config import HybridAEConfig


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ae-compress")
    parser.add_argument("config", help="training configuration (JSON)")
    parser.add_argument("--out", default="ae-out", help="output directory")
    args = parser.parse_args(argv)
    HybridAEConfig.from_json(args.config)
    # TODO: wire build/train/export once the model is implemented
    raise SystemExit("ae-compress: training is not implemented yet")
