"""The two-tower selector model.

A problem tower maps normalized instance features to a shared space. An
algorithm tower encodes each algorithm's token embeddings (LSTM by default),
optionally gates the encoded dimensions with the stochastic feature selector
(stage 1) or a fixed top-k restriction (stage 2), optionally blends in a
trainable per-algorithm table row, and maps the result to the same shared
space. A scoring head reads both vectors, plus their cosine similarity when
enabled, and emits one scalar per (problem, algorithm) pair.

Flags carve out the model variants: without the table and cosine the score
depends on the algorithm only through its token embeddings, so algorithms
never seen in training can still be scored (score_g).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import layers as ly
from .autodiff import Tensor
from .errors import (
    ConfigError,
    MissingIndexError,
    ShapeMismatchError,
    VariantMismatchError,
)

LOSS_MODES = ("regression", "classification")
TOKEN_ENCODERS = ("lstm", "mean_tokens")


@dataclass(frozen=True)
class ModelConfig:
    embedding_dim: int  # catalog token width e
    lstm_hidden: int = 64
    encoder_dim: int = 256  # width of the encoded algorithm features
    top_k: int = 64
    shared_dim: int = 32  # width of the space both towers map into
    fusion_alpha: float = 0.5  # weight on encoded features vs table row
    temperature: float = 1.0
    loss_mode: str = "regression"
    use_algorithm_features: bool = True
    use_feature_selection: bool = True
    use_cosine: bool = True
    use_embedding_table: bool = True
    token_encoder: str = "lstm"
    literal_initial_state: bool = False
    problem_hidden: tuple = (64,)
    algorithm_hidden: tuple = (64,)
    scoring_hidden: tuple = (32,)
    hidden_activation: str = "relu"

    def __post_init__(self):
        for name in ("embedding_dim", "lstm_hidden", "encoder_dim", "shared_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 1 <= self.top_k <= self.encoder_dim:
            raise ConfigError(f"top_k must lie in [1, {self.encoder_dim}], got {self.top_k}")
        if not 0.0 <= self.fusion_alpha <= 1.0:
            raise ConfigError(f"fusion_alpha must lie in [0, 1], got {self.fusion_alpha}")
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.token_encoder not in TOKEN_ENCODERS:
            raise ConfigError(f"token_encoder must be one of {TOKEN_ENCODERS}")
        if self.token_encoder == "mean_tokens" and self.embedding_dim != self.encoder_dim:
            raise ConfigError(
                "mean_tokens keeps coordinates, so encoder_dim must equal embedding_dim "
                f"(got {self.encoder_dim} vs {self.embedding_dim})"
            )
        if self.hidden_activation not in ly.ACTIVATIONS:
            raise ConfigError(f"hidden_activation must be one of {ly.ACTIVATIONS}")

    @property
    def variant_g(self) -> bool:
        """True when scores depend on algorithms only through their embeddings."""
        return (not self.use_embedding_table) and (not self.use_cosine)

    @property
    def effective_alpha(self) -> float:
        # without a table there is nothing to blend against
        return 1.0 if not self.use_embedding_table else self.fusion_alpha

    @property
    def scoring_input_dim(self) -> int:
        if not self.use_algorithm_features:
            return self.shared_dim
        return 2 * self.shared_dim + (1 if self.use_cosine else 0)


@dataclass
class ModelParams:
    config: ModelConfig
    stage: str  # "stage1" (full width, selector active) or "stage2" (top-k)
    mlp_problem: ly.MlpParams
    mlp_score: ly.MlpParams
    lstm: ly.LstmParams | None = None
    readout: ly.MlpParams | None = None  # linear map from LSTM states to encoder_dim
    selector: ly.GumbelSelector | None = None
    table: ly.EmbeddingTable | None = None
    mlp_algorithm: ly.MlpParams | None = None
    topk_indices: tuple | None = None

    @property
    def num_features(self) -> int:
        return self.mlp_problem.input_dim

    def trainable_tensors(self):
        if self.lstm is not None:
            yield from self.lstm.tensors()
        if self.readout is not None:
            yield from self.readout.tensors()
        if self.selector is not None:
            yield self.selector.logits
        if self.table is not None:
            yield self.table.table
        yield from self.mlp_problem.tensors()
        if self.mlp_algorithm is not None:
            yield from self.mlp_algorithm.tensors()
        yield from self.mlp_score.tensors()


def init_model_params(config: ModelConfig, num_features: int, num_algorithms: int,
                      rng, stage: str = "stage1", topk_indices=None) -> ModelParams:
    """Build freshly initialized parameters for one training stage.

    Stage 1 gates all encoder_dim dimensions with the selector; stage 2 fixes
    the given top-k restriction, drops the selector and sizes the algorithm
    tower accordingly. The rng consumption order is fixed, so one seed pins
    every weight.
    """
    if stage not in ("stage1", "stage2"):
        raise ConfigError(f"stage must be stage1 or stage2, got {stage!r}")
    if num_features < 1:
        raise ConfigError("num_features must be >= 1")
    act = config.hidden_activation

    def mlp(dims):
        return ly.init_mlp(dims, [act] * (len(dims) - 2) + ["identity"], rng)

    lstm = readout = selector = table = mlp_algorithm = None
    if config.use_algorithm_features:
        if config.token_encoder == "lstm":
            lstm = ly.init_lstm(config.embedding_dim, config.lstm_hidden, rng)
            readout = ly.init_mlp([2 * config.lstm_hidden, config.encoder_dim], ["identity"], rng)
        if stage == "stage1":
            width = config.encoder_dim
            if config.use_feature_selection:
                selector = ly.init_selector(config.encoder_dim, config.temperature)
            topk_indices = None
        else:
            if config.use_feature_selection:
                if topk_indices is None:
                    raise ConfigError("stage2 with feature selection needs topk_indices")
                topk_indices = tuple(sorted(int(i) for i in topk_indices))
                if len(topk_indices) == 0 or len(set(topk_indices)) != len(topk_indices):
                    raise ConfigError("topk_indices must be non-empty and unique")
                if topk_indices[0] < 0 or topk_indices[-1] >= config.encoder_dim:
                    raise ConfigError("topk_indices out of range")
                width = len(topk_indices)
            else:
                # no selector was ever trained; the full width stays active
                topk_indices = tuple(range(config.encoder_dim))
                width = config.encoder_dim
        mlp_algorithm = mlp([width, *config.algorithm_hidden, config.shared_dim])
        if config.use_embedding_table:
            table = ly.init_table(num_algorithms, width, rng)
    else:
        topk_indices = None

    mlp_problem = mlp([num_features, *config.problem_hidden, config.shared_dim])
    mlp_score = mlp([config.scoring_input_dim, *config.scoring_hidden, 1])
    return ModelParams(
        config=config, stage=stage, mlp_problem=mlp_problem, mlp_score=mlp_score,
        lstm=lstm, readout=readout, selector=selector, table=table,
        mlp_algorithm=mlp_algorithm, topk_indices=topk_indices,
    )


def encode_problem(params: ModelParams, features) -> Tensor:
    """Map normalized features (vector or matrix of rows) into shared space."""
    x = features if isinstance(features, Tensor) else ad.constant(np.asarray(features, dtype=np.float64))
    if x.values.shape[-1] != params.num_features:
        raise ShapeMismatchError(
            f"expected {params.num_features} features, got {x.values.shape[-1]}"
        )
    return ly.mlp_forward(params.mlp_problem, x)


def _encoder_features(params: ModelParams, seq) -> Tensor:
    """Raw encoded algorithm features at full encoder width."""
    if params.config.token_encoder == "mean_tokens":
        rows = np.asarray(getattr(seq, "tokens", seq), dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != params.config.encoder_dim:
            raise ShapeMismatchError(
                f"mean_tokens expects (T, {params.config.encoder_dim}) tokens, got {rows.shape}"
            )
        return ad.constant(rows.mean(axis=0))
    return ly.lstm_encode(params.lstm, seq, params.readout,
                          literal_initial_state=params.config.literal_initial_state)


def _fused_algorithm_input(params: ModelParams, seq, algo_index=None,
                           gate_weights=None) -> Tensor:
    cfg = params.config
    feats = _encoder_features(params, seq)
    if params.stage == "stage1":
        if cfg.use_feature_selection:
            if gate_weights is None:
                gate_weights = ly.gumbel_weights(params.selector, mode="eval")
            feats = ad.mul(gate_weights, feats)
    elif params.topk_indices is not None and len(params.topk_indices) < cfg.encoder_dim:
        feats = ad.select_cols(feats, params.topk_indices)
    if cfg.use_embedding_table:
        if algo_index is None:
            raise MissingIndexError("table-based model needs an algorithm index")
        row = ly.embedding_lookup(params.table, algo_index)
        alpha = cfg.effective_alpha
        feats = ad.add(ad.scale(feats, alpha), ad.scale(row, 1.0 - alpha))
    return feats


def encode_algorithm(params: ModelParams, seq, algo_index=None,
                     gate_weights=None) -> Tensor:
    """Map one algorithm's token embeddings into shared space.

    gate_weights, when given, is a precomputed selector-weight tensor shared
    across every algorithm encoded in the same training step; omitted, the
    deterministic eval-mode weights are used.
    """
    if not params.config.use_algorithm_features:
        raise VariantMismatchError("this variant has no algorithm tower")
    fused = _fused_algorithm_input(params, seq, algo_index, gate_weights)
    return ly.mlp_forward(params.mlp_algorithm, fused)


def encode_algorithms(params: ModelParams, seqs, indices=None, gate_weights=None) -> Tensor:
    """Batch variant: one shared-space row per algorithm, (n, shared_dim)."""
    if not params.config.use_algorithm_features:
        raise VariantMismatchError("this variant has no algorithm tower")
    if indices is None:
        indices = [None] * len(seqs)
    fused = [
        _fused_algorithm_input(params, seq, idx, gate_weights)
        for seq, idx in zip(seqs, indices)
    ]
    return ly.mlp_forward(params.mlp_algorithm, ad.stack_rows(fused))


def _score_head(params: ModelParams, v_algorithm, v_problem) -> Tensor:
    cfg = params.config
    batched = v_problem.values.ndim == 2
    if not cfg.use_algorithm_features:
        out = ly.mlp_forward(params.mlp_score, v_problem)
        return ad.reshape(out, (out.values.shape[0],) if batched else ())
    parts = [v_algorithm, v_problem]
    if cfg.use_cosine:
        # guarded: a relu tower may emit an exactly-zero vector, whose
        # cosine term is defined as 0 rather than an error
        d = ad.cosine_similarity(v_algorithm, v_problem, guarded=True)
        parts.append(ad.reshape(d, (d.values.shape[0], 1) if batched else (1,)))
    joined = ad.concat(parts, axis=1 if batched else 0)
    out = ly.mlp_forward(params.mlp_score, joined)
    return ad.reshape(out, (out.values.shape[0],) if batched else ())


def score(params: ModelParams, problem_features, seq=None, algo_index=None,
          gate_weights=None) -> Tensor:
    """Scalar score for one (problem, algorithm) pair.

    Under regression loss lower is better (the score approximates a
    normalized penalty); under classification it is a logit for "this
    algorithm is the best choice" and higher is better.
    """
    v_p = encode_problem(params, problem_features)
    if not params.config.use_algorithm_features:
        return _score_head(params, None, v_p)
    if seq is None:
        raise MissingIndexError("this variant scores pairs, so a token sequence is required")
    v_a = encode_algorithm(params, seq, algo_index, gate_weights)
    return _score_head(params, v_a, v_p)


def score_pairs(params: ModelParams, v_problems: Tensor, v_algorithms,
                problem_rows, algorithm_rows) -> Tensor:
    """Batched scores for index pairs into precomputed tower outputs.

    v_problems is (nP, shared_dim); v_algorithms is (nA, shared_dim) or None
    for the no-algorithm-features variant. Returns a (len(pairs),) tensor.
    """
    v_p = ad.take_rows(v_problems, problem_rows)
    if not params.config.use_algorithm_features:
        return _score_head(params, None, v_p)
    v_a = ad.take_rows(v_algorithms, algorithm_rows)
    return _score_head(params, v_a, v_p)


def score_g(params: ModelParams, problem_features, seq) -> Tensor:
    """Score an algorithm purely from its token embeddings.

    Only valid for the generalizing variant (no table, no cosine); the
    algorithm does not need to have been seen in training.
    """
    if not params.config.variant_g:
        raise VariantMismatchError(
            "score_g needs use_embedding_table=False and use_cosine=False"
        )
    return score(params, problem_features, seq)


ABLATIONS = {
    "no_algorithm_features": {"use_algorithm_features": False},
    "no_feature_selection": {"use_feature_selection": False},
    "no_cosine": {"use_cosine": False},
}


def make_ablation(config: ModelConfig, drop: str) -> ModelConfig:
    """Return a config with one component removed; drop names the component."""
    if drop not in ABLATIONS:
        raise ConfigError(f"unknown ablation {drop!r}; choose from {sorted(ABLATIONS)}")
    return dataclasses.replace(config, **ABLATIONS[drop])
