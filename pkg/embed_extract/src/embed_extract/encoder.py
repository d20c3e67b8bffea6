"""Text-to-token-embedding backends.

Two families of model name are accepted:

* ``hash-<dim>`` (for example ``hash-64``): a fully offline encoder that
  derives each token's vector from a cryptographic digest of the token, its
  position, and the requested layer. It needs no downloads, produces the
  same bytes on every platform, and exists so pipelines can run end to end
  without network access or model weights. The vectors carry no semantics
  beyond token identity.
* any other name is treated as a pretrained checkpoint id and loaded
  through the optional ``transformers``/``torch`` stack; without those
  packages (or the weights) this raises ModelLoadError.

Both backends expose ``encode(text, max_tokens) -> (T, dim) float64`` and a
``num_layers`` attribute. ``layer`` selects which hidden representation is
read out; ``-1`` means the last layer, which is the default because the
choice is genuinely open — pass an explicit index to experiment.
"""
from __future__ import annotations

import hashlib
import re

import numpy as np

from .errors import ConfigError, ModelLoadError

_HASH_NAME = re.compile(r"^hash-(\d+)$")
_TOKEN = re.compile(r"\w+|[^\w\s]")

# mirrors a 12-block transformer: layer 0 is the embedding output,
# layers 1..12 are hidden states, 12 (= -1) is the readout default
HASH_NUM_LAYERS = 13


def tokenize(text: str) -> list:
    """Split text into word and single-punctuation tokens, order preserved."""
    return _TOKEN.findall(text)


def resolve_layer(layer: int, num_layers: int) -> int:
    if layer == -1:
        return num_layers - 1
    if not 0 <= layer < num_layers:
        raise ConfigError(
            f"layer {layer} out of range; this model has layers 0..{num_layers - 1} (or -1 for last)"
        )
    return layer


class HashEncoder:
    """Deterministic digest-based token embeddings."""

    def __init__(self, dim: int, layer: int = -1):
        if dim < 1:
            raise ConfigError(f"embedding width must be >= 1, got {dim}")
        self.dim = dim
        self.num_layers = HASH_NUM_LAYERS
        self.layer = resolve_layer(layer, self.num_layers)

    def _token_vector(self, token: str, position: int) -> np.ndarray:
        out = np.empty(self.dim, dtype=np.float64)
        key = f"{self.layer}|{position}|{token}".encode()
        for block in range((self.dim + 7) // 8):
            digest = hashlib.blake2b(key + b"|" + str(block).encode(),
                                     digest_size=64).digest()
            for j in range(min(8, self.dim - 8 * block)):
                chunk = digest[8 * j: 8 * j + 8]
                u = int.from_bytes(chunk, "little")
                # top 53 bits -> [0, 1) -> [-1, 1); exact in binary64
                out[8 * block + j] = (u >> 11) * 2.0 ** -53 * 2.0 - 1.0
        return out

    def encode(self, text: str, max_tokens: int) -> np.ndarray:
        tokens = tokenize(text)[:max_tokens]
        if not tokens:
            # an empty document still gets one row: the empty-context vector
            tokens = [""]
        return np.stack([self._token_vector(t, p) for p, t in enumerate(tokens)])


class PretrainedEncoder:
    """Hidden states of a transformers checkpoint, one row per input token."""

    def __init__(self, name: str, layer: int = -1):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise ModelLoadError(
                f"model {name!r} needs the optional pretrained stack; install the "
                f"'pretrained' extra, or use an offline hash-<dim> model ({exc})"
            ) from None
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(name)
            self._model = AutoModel.from_pretrained(name, output_hidden_states=True)
        except Exception as exc:  # transformers raises a zoo of types here
            raise ModelLoadError(f"could not load model {name!r}: {exc}") from exc
        self._torch = torch
        self._model.eval()
        self.num_layers = self._model.config.num_hidden_layers + 1
        self.layer = resolve_layer(layer, self.num_layers)
        self.dim = self._model.config.hidden_size

    def encode(self, text: str, max_tokens: int) -> np.ndarray:
        enc = self._tokenizer(text, truncation=True, max_length=max_tokens,
                              return_tensors="pt")
        with self._torch.no_grad():
            states = self._model(**enc).hidden_states[self.layer]
        return states[0].numpy().astype(np.float64)


def load_encoder(model: str, layer: int = -1):
    """Build the backend a model name asks for."""
    match = _HASH_NAME.match(model)
    if match:
        return HashEncoder(int(match.group(1)), layer)
    return PretrainedEncoder(model, layer)
