"""Token-embedding catalogs for algorithms.

A catalog maps algorithm id -> token embedding sequence, a (T, e) float
matrix with one row per token of the algorithm's code. On disk a catalog is
JSON Lines, one object per algorithm:

  {"algorithm_id": "<id>", "tokens": [[...], ...]}

All sequences in a catalog share the embedding width e. Sequences may differ
in length T >= 1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

from .errors import (
    DimMismatchError,
    DuplicateAlgorithmError,
    EmptyCatalogError,
    MalformedResponseError,
    MalformedValueError,
    ShapeMismatchError,
    TransportError,
    UnknownAlgorithmError,
)


@dataclass(eq=False)
class TokenEmbeddingSequence:
    algorithm_id: str
    tokens: np.ndarray  # (T, e), finite

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.float64)
        if self.tokens.ndim != 2 or self.tokens.shape[0] < 1 or self.tokens.shape[1] < 1:
            raise ShapeMismatchError(
                f"tokens for {self.algorithm_id!r} must be (T, e) with T, e >= 1, "
                f"got {self.tokens.shape}"
            )
        if not np.all(np.isfinite(self.tokens)):
            raise MalformedValueError(f"tokens for {self.algorithm_id!r} contain non-finite values")

    @property
    def length(self) -> int:
        return self.tokens.shape[0]

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    def __eq__(self, other):
        if not isinstance(other, TokenEmbeddingSequence):
            return NotImplemented
        return self.algorithm_id == other.algorithm_id and np.array_equal(self.tokens, other.tokens)


@dataclass
class EmbeddingCatalog:
    entries: dict = field(default_factory=dict)  # id -> TokenEmbeddingSequence, insertion ordered

    def __post_init__(self):
        if not self.entries:
            raise EmptyCatalogError("catalog has no entries")
        dims = {seq.dim for seq in self.entries.values()}
        if len(dims) != 1:
            raise DimMismatchError(f"catalog mixes embedding widths {sorted(dims)}")

    @property
    def dim(self) -> int:
        return next(iter(self.entries.values())).dim

    @property
    def algorithm_ids(self) -> tuple:
        return tuple(self.entries)

    def get(self, algorithm_id: str) -> TokenEmbeddingSequence:
        try:
            return self.entries[algorithm_id]
        except KeyError:
            raise UnknownAlgorithmError(f"no embedding for algorithm {algorithm_id!r}") from None

    def __contains__(self, algorithm_id) -> bool:
        return algorithm_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def get(catalog: EmbeddingCatalog, algorithm_id: str) -> TokenEmbeddingSequence:
    return catalog.get(algorithm_id)


def load_catalog(path) -> EmbeddingCatalog:
    """Read a JSONL catalog; content is validated, line order is preserved."""
    entries: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict) or "algorithm_id" not in obj or "tokens" not in obj:
            raise MalformedValueError(f"{path}:{lineno}: expected algorithm_id and tokens keys")
        aid = str(obj["algorithm_id"])
        if aid in entries:
            raise DuplicateAlgorithmError(f"{path}:{lineno}: duplicate algorithm {aid!r}")
        tokens = obj["tokens"]
        rows = [len(r) if isinstance(r, list) else -1 for r in tokens] if isinstance(tokens, list) else []
        if not rows or len(set(rows)) != 1 or rows[0] < 1:
            raise MalformedValueError(f"{path}:{lineno}: tokens must be a non-ragged (T, e) list")
        try:
            seq = TokenEmbeddingSequence(aid, np.array(tokens, dtype=np.float64))
        except (TypeError, ValueError):
            raise MalformedValueError(f"{path}:{lineno}: tokens must be numeric") from None
        if entries:
            first = next(iter(entries.values()))
            if seq.dim != first.dim:
                raise DimMismatchError(
                    f"{path}:{lineno}: width {seq.dim} disagrees with {first.dim}"
                )
        entries[aid] = seq
    if not entries:
        raise EmptyCatalogError(f"{path}: no entries")
    return EmbeddingCatalog(entries)


def save_catalog(catalog: EmbeddingCatalog, path) -> None:
    """Write JSONL; floats use repr so load(save(c)) == c exactly."""
    lines = []
    for aid, seq in catalog.entries.items():
        lines.append(json.dumps(
            {"algorithm_id": aid, "tokens": [[float(v) for v in row] for row in seq.tokens]}
        ))
    Path(path).write_text("\n".join(lines) + "\n")


def synth_catalog(algorithm_ids, dim: int, length: int, seed: int) -> EmbeddingCatalog:
    """Deterministic standard-normal catalog for offline runs and tests."""
    ids = [str(a) for a in algorithm_ids]
    if not ids:
        raise EmptyCatalogError("synth_catalog needs at least one algorithm id")
    if dim < 1 or length < 1:
        raise ShapeMismatchError(f"dim and length must be >= 1, got {dim}, {length}")
    rng = np.random.default_rng(seed)
    entries = {}
    for aid in ids:
        if aid in entries:
            raise DuplicateAlgorithmError(f"duplicate algorithm {aid!r}")
        entries[aid] = TokenEmbeddingSequence(aid, rng.standard_normal((length, dim)))
    return EmbeddingCatalog(entries)


def fetch_remote(endpoint: str, algorithm_id: str, code_text: str,
                 expected_dim: int | None = None, timeout: float = 30.0) -> TokenEmbeddingSequence:
    """POST {"text": code_text} to an embedding service, expect {"tokens": [[...]]}.

    Any network failure or non-200 status raises TransportError; a response
    that is not the documented shape raises MalformedResponseError; a width
    different from expected_dim raises DimMismatchError.
    """
    try:
        resp = requests.post(endpoint, json={"text": code_text}, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(f"POST {endpoint} failed: {exc}") from None
    if resp.status_code != 200:
        raise TransportError(f"POST {endpoint} returned status {resp.status_code}")
    try:
        body = resp.json()
    except ValueError:
        raise MalformedResponseError(f"{endpoint}: response body is not JSON") from None
    if not isinstance(body, dict) or "tokens" not in body:
        raise MalformedResponseError(f"{endpoint}: response lacks a tokens key")
    tokens = body["tokens"]
    rows = [len(r) if isinstance(r, list) else -1 for r in tokens] if isinstance(tokens, list) else []
    if not rows or len(set(rows)) != 1 or rows[0] < 1:
        raise MalformedResponseError(f"{endpoint}: tokens must be a non-ragged (T, e) list")
    try:
        arr = np.array(tokens, dtype=np.float64)
    except (TypeError, ValueError):
        raise MalformedResponseError(f"{endpoint}: tokens must be numeric") from None
    if not np.all(np.isfinite(arr)):
        raise MalformedResponseError(f"{endpoint}: tokens contain non-finite values")
    if expected_dim is not None and arr.shape[1] != expected_dim:
        raise DimMismatchError(f"{endpoint}: width {arr.shape[1]}, expected {expected_dim}")
    return TokenEmbeddingSequence(algorithm_id, arr)
