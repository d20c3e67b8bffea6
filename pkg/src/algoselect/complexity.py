"""Capacity bound for the unified two-tower network.

For the variant whose score depends on algorithms only through their encoded
features (no per-algorithm table, no cosine term), the two towers followed by
the scoring head compose into a single MLP: parallel tower layers stack into
block-diagonal weight matrices acting on the concatenated (algorithm input,
problem input) vector, and the Frobenius norm of such a block matrix is
sqrt(|Wa|_F^2 + |Wp|_F^2). With l layers, per-layer norm budget R_i,
Gamma_f = prod R_i and Gamma_s = max_j |x_j|^2 over the n_p * n_a training
inputs, the Rademacher complexity of the class is bounded by

    sqrt(2 l ln(2) Gamma_f Gamma_s
         + 2 sqrt(n_p) sqrt(n_a) Gamma_f^2 Gamma_s^(3/2)) / sqrt(n_p n_a)

The derivation assumes 1-Lipschitz positive-homogeneous activations (relu or
identity); a tanh anywhere is flagged as outside hypotheses. Biases are not
part of the bounded class, so norms cover weight matrices only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model as md
from .autodiff import Tensor
from .checkpoint import TrainedSelector
from .embeddings import EmbeddingCatalog
from .errors import EmptyDatasetError, MalformedValueError, VariantMismatchError
from .scenario import Scenario, SplitIndex, apply_normalize

ELIGIBLE_ACTIVATIONS = ("relu", "identity")


def frobenius_norm(weight) -> float:
    w = weight.values if isinstance(weight, Tensor) else np.asarray(weight, dtype=np.float64)
    return float(np.sqrt(np.sum(w * w)))


def gamma_f(layer_norms) -> float:
    """Product of per-layer norm budgets."""
    norms = [float(r) for r in layer_norms]
    if not norms or any(r <= 0 for r in norms):
        raise MalformedValueError("layer norms must be positive and non-empty")
    return float(np.prod(norms))


def gamma_s(inputs) -> float:
    """Largest squared euclidean norm over input rows."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyDatasetError("gamma_s needs a non-empty (n, d) matrix")
    return float(np.max(np.einsum("ij,ij->i", x, x)))


@dataclass(frozen=True)
class BoundInputs:
    num_layers: int
    layer_norms: tuple
    gamma_s: float
    num_problems: int
    num_algorithms: int

    def __post_init__(self):
        if self.num_layers < 1 or len(self.layer_norms) != self.num_layers:
            raise MalformedValueError(
                f"expected {self.num_layers} layer norms, got {len(self.layer_norms)}"
            )
        if any(r <= 0 for r in self.layer_norms):
            raise MalformedValueError("layer norms must be positive")
        # 0 is allowed: a degenerate all-zero input makes the bound collapse to 0
        if self.gamma_s < 0:
            raise MalformedValueError(f"gamma_s must be >= 0, got {self.gamma_s}")
        if self.num_problems < 1 or self.num_algorithms < 1:
            raise MalformedValueError("sample counts must be >= 1")

    @property
    def gamma_f(self) -> float:
        return gamma_f(self.layer_norms)


def rademacher_bound(b: BoundInputs) -> float:
    gf = b.gamma_f
    inner = (
        2.0 * b.num_layers * math.log(2.0) * gf * b.gamma_s
        + 2.0 * math.sqrt(b.num_problems) * math.sqrt(b.num_algorithms)
        * gf * gf * b.gamma_s ** 1.5
    )
    return math.sqrt(inner) / math.sqrt(b.num_problems * b.num_algorithms)


def unified_layer_dims(params: md.ModelParams) -> list:
    """Layer widths of the composed network, input through scalar output."""
    pa, pp, ps = params.mlp_algorithm, params.mlp_problem, params.mlp_score
    dims = [pa.input_dim + pp.input_dim]
    for la, lp in zip(pa.layers, pp.layers):
        dims.append(la.weight.shape[0] + lp.weight.shape[0])
    for layer in ps.layers:
        dims.append(layer.weight.shape[0])
    return dims


@dataclass(frozen=True)
class BoundReport:
    inputs: BoundInputs
    bound: float
    hypotheses_satisfied: bool
    notes: tuple

    def to_obj(self) -> dict:
        return {
            "num_layers": self.inputs.num_layers,
            "layer_norms": list(self.inputs.layer_norms),
            "gamma_f": self.inputs.gamma_f,
            "gamma_s": self.inputs.gamma_s,
            "num_problems": self.inputs.num_problems,
            "num_algorithms": self.inputs.num_algorithms,
            "bound": self.bound,
            "hypotheses_satisfied": self.hypotheses_satisfied,
            "notes": list(self.notes),
        }


def _tower_inputs(trained: TrainedSelector, scenario: Scenario,
                  catalog: EmbeddingCatalog, split: SplitIndex):
    """Concatenated-network input norms decompose over the two towers."""
    params = trained.params
    feats = apply_normalize(
        scenario.feature_matrix()[np.asarray(split.train_indices, dtype=np.int64)],
        trained.feature_stats,
    )
    algo_inputs = np.stack([
        md._fused_algorithm_input(params, catalog.get(aid)).values
        for aid in scenario.algorithms
    ])
    return algo_inputs, feats


def bound_from_checkpoint(trained: TrainedSelector, scenario: Scenario,
                          catalog: EmbeddingCatalog, split: SplitIndex) -> BoundReport:
    """Measure norms and inputs from a trained selector and evaluate the bound.

    Only the generalizing variant composes into the unified network: the
    model must have an algorithm tower, no embedding table and no cosine
    term, and both towers must be equally deep so their layers pair up.
    """
    params = trained.params
    cfg = trained.config
    if not cfg.use_algorithm_features:
        raise VariantMismatchError("bound needs the algorithm tower")
    if cfg.use_embedding_table or cfg.use_cosine:
        raise VariantMismatchError(
            "bound applies to the no-table, no-cosine variant only"
        )
    if len(params.mlp_algorithm.layers) != len(params.mlp_problem.layers):
        raise VariantMismatchError(
            "towers must have equal depth to stack into block-diagonal layers"
        )

    norms = []
    for la, lp in zip(params.mlp_algorithm.layers, params.mlp_problem.layers):
        norms.append(math.sqrt(
            frobenius_norm(la.weight) ** 2 + frobenius_norm(lp.weight) ** 2
        ))
    for layer in params.mlp_score.layers:
        norms.append(frobenius_norm(layer.weight))

    algo_inputs, feats = _tower_inputs(trained, scenario, catalog, split)
    gs = gamma_s(algo_inputs) + gamma_s(feats)  # concat norms add

    notes = []
    for name, mlp in (("algorithm", params.mlp_algorithm),
                      ("problem", params.mlp_problem),
                      ("score", params.mlp_score)):
        for i, layer in enumerate(mlp.layers):
            if layer.activation not in ELIGIBLE_ACTIVATIONS:
                notes.append(
                    f"{name} tower layer {i} uses {layer.activation}, "
                    "outside the bound's hypotheses"
                )
    inputs = BoundInputs(
        num_layers=len(norms),
        layer_norms=tuple(norms),
        gamma_s=gs,
        num_problems=feats.shape[0],
        num_algorithms=algo_inputs.shape[0],
    )
    return BoundReport(
        inputs=inputs,
        bound=rademacher_bound(inputs),
        hypotheses_satisfied=not notes,
        notes=tuple(notes),
    )


def empirical_rademacher_estimate(inputs, layer_dims, layer_norms,
                                  num_models: int, num_sigma: int, rng) -> float:
    """Monte-Carlo lower estimate of the class's empirical Rademacher
    complexity on the given inputs.

    Samples bias-free relu networks with each weight matrix rescaled to sit
    exactly on its norm budget, which places them inside the bounded class;
    the supremum is approximated by the best sampled member (negations
    included, since flipping the last layer's sign stays in the class).
    """
    x = np.asarray(inputs, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        raise EmptyDatasetError("empirical estimate needs inputs")
    if len(layer_norms) != len(layer_dims) - 1:
        raise MalformedValueError("need one norm per layer")
    sigmas = rng.choice([-1.0, 1.0], size=(num_sigma, n))
    sup = np.full(num_sigma, -np.inf)
    for _ in range(num_models):
        h = x
        for i, r in enumerate(layer_norms):
            w = rng.standard_normal((layer_dims[i + 1], layer_dims[i]))
            w *= r / np.sqrt(np.sum(w * w))
            h = h @ w.T
            if i < len(layer_norms) - 1:
                h = np.maximum(h, 0.0)
        vals = h[:, 0]
        dots = np.abs(sigmas @ vals) / n
        sup = np.maximum(sup, dots)
    return float(sup.mean())
