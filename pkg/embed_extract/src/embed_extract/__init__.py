"""Directory of algorithm text files -> JSONL token-embedding catalog."""
from .encoder import HashEncoder, PretrainedEncoder, load_encoder, tokenize
from .errors import (
    ConfigError,
    EmptyInputDirError,
    ExtractError,
    ModelLoadError,
    UnreadableFileError,
)
from .job import ExtractionJob, discover_inputs, extract_records, run, write_catalog

__all__ = [
    "ConfigError",
    "EmptyInputDirError",
    "ExtractError",
    "ExtractionJob",
    "HashEncoder",
    "ModelLoadError",
    "PretrainedEncoder",
    "UnreadableFileError",
    "discover_inputs",
    "extract_records",
    "load_encoder",
    "run",
    "tokenize",
    "write_catalog",
]
