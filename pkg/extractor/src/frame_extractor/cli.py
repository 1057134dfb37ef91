"""CLI: extract a store from a video, or pre-embed query texts."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .encoders import get_encoder
from .extract import ExtractionJob, extract_and_write


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frame-extractor",
        description="Produce UVEB embedding stores from videos.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ext = sub.add_parser("extract", help="sample, encode, and write a store")
    ext.add_argument("--video", required=True, help="video file to sample")
    ext.add_argument("--pool", type=int, default=64, help="frames to sample")
    ext.add_argument("--encoder", default="hash", help="hash | siglip | siglip:<checkpoint>")
    ext.add_argument("--dim", type=int, default=256, help="embedding dim (hash encoder)")
    ext.add_argument("--out", required=True, help="output store path")

    emb = sub.add_parser("embed", help="embed query texts, one row per line")
    emb.add_argument("--queries", required=True, help="text file with one query per line")
    emb.add_argument("--encoder", default="hash")
    emb.add_argument("--dim", type=int, default=256)
    emb.add_argument("--out", required=True, help="output text matrix (one row per query)")

    return parser


def cmd_extract(args) -> int:
    try:
        job = ExtractionJob(
            video_path=args.video,
            output_path=args.out,
            pool_size=args.pool,
            encoder_name=args.encoder,
        )
        manifest = extract_and_write(job, encoder=get_encoder(args.encoder, dim=args.dim))
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"wrote {args.out}: {manifest['pool_size']} frames from "
        f"{manifest['total_frames']} ({manifest['video']})"
    )
    return 0


def cmd_embed(args) -> int:
    try:
        with open(args.queries, encoding="utf-8") as fh:
            queries = [line.strip() for line in fh if line.strip()]
        if not queries:
            raise ValueError("no queries found")
        encoder = get_encoder(args.encoder, dim=args.dim)
        rows = np.stack([encoder.encode_text(q) for q in queries])
        np.savetxt(args.out, rows, fmt="%.17g")
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}: {len(queries)} query embeddings of dim {rows.shape[1]}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return {"extract": cmd_extract, "embed": cmd_embed}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
