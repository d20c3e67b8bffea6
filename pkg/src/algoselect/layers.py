"""Layer containers and forward passes built on the autodiff core.

Holds the pieces the selector model is assembled from: plain MLPs, a
four-gate LSTM encoder for token sequences, the stochastic-gate feature
selector, top-k extraction and the per-algorithm embedding table. All
initialization is centralized here so a seed fixes every weight.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import BadKError, IndexOutOfRangeError, ShapeMismatchError

ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass
class MlpLayer:
    weight: Tensor  # (out, in)
    bias: Tensor  # (out,)
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ShapeMismatchError(f"unknown activation {self.activation!r}")


@dataclass
class MlpParams:
    layers: list

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def tensors(self):
        for layer in self.layers:
            yield layer.weight
            yield layer.bias


def mlp_forward(params: MlpParams, x: Tensor) -> Tensor:
    """Apply the MLP to a vector or rowwise to a matrix of inputs."""
    out = x
    for layer in params.layers:
        out = ad.affine(layer.weight, out, layer.bias)
        if layer.activation == "relu":
            out = ad.relu(out)
        elif layer.activation == "tanh":
            out = ad.tanh(out)
    return out


@dataclass
class LstmParams:
    """Four-gate LSTM. w_* act on the input, u_* on the previous hidden state."""

    w_input: Tensor
    u_input: Tensor
    b_input: Tensor
    w_forget: Tensor
    u_forget: Tensor
    b_forget: Tensor
    w_output: Tensor
    u_output: Tensor
    b_output: Tensor
    w_cell: Tensor
    u_cell: Tensor
    b_cell: Tensor

    @property
    def hidden_size(self) -> int:
        return self.w_input.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_input.shape[1]

    def tensors(self):
        for name in ("input", "forget", "output", "cell"):
            yield getattr(self, f"w_{name}")
            yield getattr(self, f"u_{name}")
            yield getattr(self, f"b_{name}")


def lstm_encode(params: LstmParams, tokens, out_linear: MlpParams,
                literal_initial_state: bool = False) -> Tensor:
    """Run the LSTM over token rows and read out a fixed-width code vector.

    tokens is a (T, e) array (or anything with a .tokens attribute holding
    one). States start at zero. The readout concatenates the final hidden
    state with the hidden state after the first step; with
    literal_initial_state=True the second half is the all-zero start state
    instead, which carries no information and exists for comparison runs.
    """
    rows = np.asarray(getattr(tokens, "tokens", tokens), dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise ShapeMismatchError(f"lstm_encode: tokens must be (T, e), got {rows.shape}")
    if rows.shape[1] != params.input_size:
        raise ShapeMismatchError(
            f"lstm_encode: token width {rows.shape[1]}, lstm expects {params.input_size}"
        )
    h = ad.constant(np.zeros(params.hidden_size))
    c = ad.constant(np.zeros(params.hidden_size))
    first_h = h
    for t in range(rows.shape[0]):
        x = ad.constant(rows[t])
        i_gate = ad.sigmoid(ad.add(ad.affine(params.w_input, x, params.b_input),
                                   ad.matmul(params.u_input, h)))
        f_gate = ad.sigmoid(ad.add(ad.affine(params.w_forget, x, params.b_forget),
                                   ad.matmul(params.u_forget, h)))
        o_gate = ad.sigmoid(ad.add(ad.affine(params.w_output, x, params.b_output),
                                   ad.matmul(params.u_output, h)))
        candidate = ad.tanh(ad.add(ad.affine(params.w_cell, x, params.b_cell),
                                   ad.matmul(params.u_cell, h)))
        c = ad.add(ad.mul(f_gate, c), ad.mul(i_gate, candidate))
        h = ad.mul(o_gate, ad.tanh(c))
        if t == 0 and not literal_initial_state:
            first_h = h
    return mlp_forward(out_linear, ad.concat([h, first_h]))


@dataclass
class GumbelSelector:
    """Per-dimension stochastic gates. pi_i = sigmoid(logits_i) is the keep
    probability; temperature controls how hard the sampled weights commit."""

    logits: Tensor  # (D,)
    temperature: float

    def __post_init__(self):
        if self.logits.values.ndim != 1:
            raise ShapeMismatchError("selector logits must be a vector")
        if not self.temperature > 0:
            raise ShapeMismatchError(f"temperature must be positive, got {self.temperature}")

    @property
    def dim(self) -> int:
        return self.logits.shape[0]

    def keep_probabilities(self) -> np.ndarray:
        return ad._sigmoid_values(self.logits.values)


def gumbel_weights(selector: GumbelSelector, rng=None, mode: str = "train",
                   noise=None) -> Tensor:
    """Differentiable gate weights in (0, 1) for one training step.

    Train mode draws one pair of Gumbel noises per dimension. The two-term
    softmax over ((log pi + g+)/tau, (log(1-pi) + g-)/tau) collapses to
    sigmoid((logits + g+ - g-)/tau) because log pi - log(1-pi) equals the
    logits; that closed form is used directly. Passing noise=(g_plus,
    g_minus) makes a step reproducible without an rng. Eval mode ignores
    noise and temperature and returns exactly sigmoid(logits) = pi.
    """
    if mode == "eval":
        return ad.sigmoid(selector.logits)
    if mode != "train":
        raise ShapeMismatchError(f"mode must be 'train' or 'eval', got {mode!r}")
    if noise is None:
        if rng is None:
            raise ShapeMismatchError("train mode needs an rng or explicit noise")
        g_plus = rng.gumbel(size=selector.dim)
        g_minus = rng.gumbel(size=selector.dim)
    else:
        g_plus, g_minus = (np.asarray(g, dtype=np.float64) for g in noise)
        if g_plus.shape != (selector.dim,) or g_minus.shape != (selector.dim,):
            raise ShapeMismatchError("noise vectors must match the selector dimension")
    shift = ad.constant(g_plus - g_minus)
    return ad.sigmoid(ad.scale(ad.add(selector.logits, shift), 1.0 / selector.temperature))


def select_topk(selector: GumbelSelector, k: int):
    """Indices of the k largest keep probabilities, ascending.

    Ties keep the lower index. The result depends on the ordering of the
    logits only, so any strictly increasing transform of them leaves it
    unchanged.
    """
    if not 1 <= k <= selector.dim:
        raise BadKError(f"k must lie in [1, {selector.dim}], got {k}")
    pi = selector.keep_probabilities()
    order = np.argsort(-pi, kind="stable")  # stable: equal values keep index order
    return tuple(sorted(int(i) for i in order[:k]))


@dataclass
class EmbeddingTable:
    table: Tensor  # (num_algorithms, width), one trainable row per algorithm

    @property
    def num_rows(self) -> int:
        return self.table.shape[0]

    @property
    def width(self) -> int:
        return self.table.shape[1]


def embedding_lookup(table: EmbeddingTable, index: int) -> Tensor:
    if not 0 <= index < table.num_rows:
        raise IndexOutOfRangeError(f"row {index} outside [0, {table.num_rows})")
    return ad.row(table.table, index)


# initialization; every weight is uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)),
# biases start at zero except the forget gate's, which starts at one

def _uniform(rng, shape, fan_in) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return ad.leaf(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def init_mlp(dims, activations, rng) -> MlpParams:
    """dims = [in, hidden..., out]; activations has one entry per layer."""
    if len(dims) < 2 or len(activations) != len(dims) - 1:
        raise ShapeMismatchError(
            f"init_mlp: {len(dims)} dims need {len(dims) - 1} activations, got {len(activations)}"
        )
    layers = []
    for i, act in enumerate(activations):
        fan_in = dims[i]
        layers.append(MlpLayer(
            weight=_uniform(rng, (dims[i + 1], dims[i]), fan_in),
            bias=ad.leaf(np.zeros(dims[i + 1]), requires_grad=True),
            activation=act,
        ))
    return MlpParams(layers)


def init_lstm(input_dim: int, hidden: int, rng) -> LstmParams:
    def gate(bias_value):
        return (
            _uniform(rng, (hidden, input_dim), input_dim),
            _uniform(rng, (hidden, hidden), hidden),
            ad.leaf(np.full(hidden, bias_value), requires_grad=True),
        )

    wi, ui, bi = gate(0.0)
    wf, uf, bf = gate(1.0)  # open forget gate at the start
    wo, uo, bo = gate(0.0)
    wc, uc, bc = gate(0.0)
    return LstmParams(wi, ui, bi, wf, uf, bf, wo, uo, bo, wc, uc, bc)


def init_selector(dim: int, temperature: float) -> GumbelSelector:
    # zero logits put every keep probability at exactly 0.5
    return GumbelSelector(ad.leaf(np.zeros(dim), requires_grad=True), temperature)


def init_table(num_rows: int, width: int, rng) -> EmbeddingTable:
    return EmbeddingTable(_uniform(rng, (num_rows, width), width))
