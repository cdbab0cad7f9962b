"""eas-export: dump encoder attention/hidden fixtures from a checkpoint."""

from __future__ import annotations

import argparse
import sys

from .export import export_bundle


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eas-export", description=__doc__)
    p.add_argument("--checkpoint", required=True,
                   help="model id / local path, or 'random:<spec>' for a "
                        "seeded randomly initialized architecture")
    p.add_argument("--clips", nargs="+", required=True,
                   help=".npy mel files, shape [num_mel_bins, T_mel]")
    p.add_argument("--layers", required=True,
                   help="comma list of 1-based encoder layers, e.g. 1,2,3")
    p.add_argument("--references", nargs="*", default=None,
                   help="optional reference transcripts, one per clip")
    p.add_argument("--out", required=True, help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        layers = [int(tok) for tok in args.layers.split(",") if tok.strip()]
    except ValueError:
        print(f"cannot parse --layers {args.layers!r}", file=sys.stderr)
        return 2
    try:
        result = export_bundle(args.checkpoint, args.clips, layers, args.out,
                               args.references)
    except (ValueError, OSError) as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 2
    for clip in result.clips:
        print(f"exported {clip.clip}: {clip.archive.name} "
              f"(T={clip.seq_len}, layers {clip.layers})")
    for err in result.errors:
        print(f"skipped {err['clip']}: {err['error']}", file=sys.stderr)
    if result.manifest:
        print(f"manifest: {result.manifest}")
    return 0 if not result.errors else 1


if __name__ == "__main__":
    sys.exit(main())
