import argparse
import logging
import sys
from pathlib import Path

from .export import ExportManifest, export_embeddings


def main(argv=None):
    ap = argparse.ArgumentParser(prog="pvlm_export")
    sub = ap.add_subparsers(dest="command", required=True)
    ex = sub.add_parser("export", help="encode inputs and write a PVLMEMB1 file")
    ex.add_argument("--modality", choices=["image", "text"], required=True)
    ex.add_argument("--encoder", required=True, help="e.g. ViT-B/32")
    ex.add_argument("--inputs", type=Path, required=True, help="one image path or caption per line")
    ex.add_argument("--ids", type=Path, required=True, help="one id per line, same order as --inputs")
    ex.add_argument("--out", type=Path, required=True)
    ex.add_argument("--deterministic", action="store_true")
    ex.add_argument("--skip-unreadable", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    inputs = args.inputs.read_text(encoding="utf-8").splitlines()
    ids = args.ids.read_text(encoding="utf-8").splitlines()
    try:
        manifest = ExportManifest(args.encoder, args.modality, ids, inputs, args.out)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        from .clip import ClipEncoder

        encoder = ClipEncoder(args.encoder, deterministic=args.deterministic)
    except Exception as e:  # any load failure is fatal
        print(f"error: cannot load encoder {args.encoder}: {e}", file=sys.stderr)
        return 1
    matrix = export_embeddings(manifest, encoder, skip_unreadable=args.skip_unreadable)
    print(f"wrote {matrix.shape[0]} x {matrix.shape[1]} to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
