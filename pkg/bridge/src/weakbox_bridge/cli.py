"""Exporter CLI: init-checkpoints and export subcommands."""

import argparse
import sys

from .extract import ExtractorConfig, export_corpus
from .models import create_toy_checkpoints


def build_parser():
    parser = argparse.ArgumentParser(prog="weakbox-bridge",
                                     description="Export feature bundles from "
                                                 "VL/ViT checkpoints")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-checkpoints",
                       help="write random-initialized smoke-test checkpoints")
    p.add_argument("--vl", required=True)
    p.add_argument("--vit", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("export", help="export bundles for an image-caption list")
    p.add_argument("--vl", required=True)
    p.add_argument("--vit", required=True)
    p.add_argument("--pairs", required=True,
                   help="JSON lines: {\"image\": path, \"caption\": text}")
    p.add_argument("--out", required=True)
    p.add_argument("--l-vl", type=int, default=8)
    p.add_argument("--l-vit", type=int, default=11)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "init-checkpoints":
        create_toy_checkpoints(args.vl, args.vit, seed=args.seed)
        return 0
    cfg = ExtractorConfig(vl_checkpoint=args.vl, vit_checkpoint=args.vit,
                          l_vl=args.l_vl, l_vit=args.l_vit, output_dir=args.out)
    written = export_corpus(cfg, args.pairs)
    print(f"wrote {len(written)} bundles to {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
