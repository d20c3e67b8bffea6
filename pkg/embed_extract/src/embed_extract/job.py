"""Extraction jobs: directory of text files in, JSONL catalog out.

Every regular file in the input directory becomes one catalog record whose
algorithm id is the file's name, verbatim (extension included — basenames
are unique within a directory, stems are not). Files are processed in
sorted-name order and floats are serialized with ``repr``, so the output is
byte-identical across repeat runs for the same inputs and model.

The output format is one JSON object per line:

    {"algorithm_id": "<file name>", "tokens": [[...], ...]}

with every record sharing one embedding width, all values finite, and
T >= 1 rows per record — exactly what downstream catalog loaders validate.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .encoder import load_encoder
from .errors import ConfigError, EmptyInputDirError, ExtractError, UnreadableFileError

POOLING_MODES = ("none", "mean")


@dataclasses.dataclass(frozen=True)
class ExtractionJob:
    input_dir: str
    model: str
    max_tokens: int
    pooling: str
    out_path: str
    layer: int = -1

    def __post_init__(self):
        if self.pooling not in POOLING_MODES:
            raise ConfigError(f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}")
        if self.max_tokens < 1:
            raise ConfigError(f"max_tokens must be >= 1, got {self.max_tokens}")


def discover_inputs(input_dir) -> list:
    """Sorted (algorithm_id, path) pairs, one per regular file."""
    root = Path(input_dir)
    if not root.is_dir():
        raise UnreadableFileError(f"{root}: not a readable directory")
    pairs = [(p.name, p) for p in sorted(root.iterdir()) if p.is_file()]
    if not pairs:
        raise EmptyInputDirError(f"{root}: no input files")
    return pairs


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFileError(f"{path}: {exc}") from None


def extract_records(job: ExtractionJob) -> list:
    """Run the job in memory; returns [(algorithm_id, (T, e) ndarray), ...]."""
    pairs = discover_inputs(job.input_dir)
    encoder = load_encoder(job.model, job.layer)
    records = []
    for algorithm_id, path in pairs:
        tokens = encoder.encode(_read_text(path), job.max_tokens)
        if job.pooling == "mean":
            tokens = tokens.mean(axis=0, keepdims=True)
        if not np.all(np.isfinite(tokens)):
            raise ExtractError(f"{path}: model produced non-finite embeddings")
        records.append((algorithm_id, tokens))
    return records


def write_catalog(records, out_path) -> None:
    lines = [
        json.dumps({"algorithm_id": aid, "tokens": tokens.tolist()}, sort_keys=True)
        for aid, tokens in records
    ]
    Path(out_path).write_text("\n".join(lines) + "\n")


def run(job: ExtractionJob) -> dict:
    """Extract and write; returns a small summary for logging."""
    records = extract_records(job)
    write_catalog(records, job.out_path)
    return {
        "records": len(records),
        "dim": int(records[0][1].shape[1]),
        "out": str(job.out_path),
    }
