"""Command line for the extractor.

Exit codes: 0 success; 2 argument parsing; 3 unusable inputs or job
parameters; 4 the embedding model could not be loaded.
"""
from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, EmptyInputDirError, ExtractError, ModelLoadError, UnreadableFileError
from .job import ExtractionJob, run

EXIT_INPUT = 3
EXIT_MODEL = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-extract",
        description="Embed a directory of algorithm source/description files "
                    "into a JSONL token-embedding catalog.",
    )
    parser.add_argument("--in", dest="input_dir", required=True,
                        help="directory with one text file per algorithm; "
                             "the file name becomes the algorithm id")
    parser.add_argument("--model", required=True,
                        help="embedding model: hash-<dim> for the offline "
                             "encoder, anything else is a pretrained checkpoint id")
    parser.add_argument("--max-tokens", type=int, default=256,
                        help="truncate each document to this many tokens (default 256)")
    parser.add_argument("--pooling", choices=("none", "mean"), default="none",
                        help="none keeps the full token sequence; mean emits "
                             "a single averaged row per algorithm")
    parser.add_argument("--out", required=True, help="output JSONL path")
    parser.add_argument("--layer", type=int, default=-1,
                        help="which hidden layer to read embeddings from; "
                             "-1 (default) is the last layer")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExtractionJob(input_dir=args.input_dir, model=args.model,
                            max_tokens=args.max_tokens, pooling=args.pooling,
                            out_path=args.out, layer=args.layer)
        summary = run(job)
    except ModelLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ConfigError, EmptyInputDirError, UnreadableFileError, ExtractError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"wrote {summary['records']} records (dim {summary['dim']}) to {summary['out']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
