"""Two-stage training of the selector model.

Stage 1 trains at full encoder width with the stochastic gates active; the
learned keep probabilities then pick the top-k dimensions and stage 2
retrains a freshly initialized, narrower model restricted to them. Variants
without feature selection (or without an algorithm tower) skip extraction
and train a single stage on the combined epoch budget.

Pairs are the full cross product of train instances and algorithms. The
regression target squashes PAR10 to [0, 1] via log(1 + par10) / log(1 + 10C);
the classification label marks every algorithm tied for the instance's best
PAR10. Training is a pure function of (scenario, catalog, configs, seed).
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import layers as ly
from . import model as md
from .checkpoint import TrainedSelector
from .embeddings import EmbeddingCatalog
from .errors import ConfigError, NonFiniteLossError
from .evaluation import par10_matrix
from .scenario import Scenario, SplitIndex, apply_normalize, fit_feature_stats


@dataclass(frozen=True)
class TrainPair:
    problem_index: int
    algorithm_index: int
    regression_target: float  # log(1 + par10) / log(1 + 10 * cutoff), in [0, 1]
    class_label: float  # 1.0 iff this algorithm attains the instance's best par10


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs_stage1: int = 40
    epochs_stage2: int = 40
    batch_size: int = 64
    optimizer: str = "adam"
    seed: int = 0
    tau_final: float | None = None  # linear gate-temperature anneal target

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs_stage1 < 1 or self.epochs_stage2 < 1:
            raise ConfigError("epoch counts must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if self.tau_final is not None and not self.tau_final > 0:
            raise ConfigError("tau_final must be positive when set")


def build_pairs(scenario: Scenario, train_indices) -> list:
    """Cross product of train instances and algorithms with both targets."""
    p10 = par10_matrix(scenario)
    denom = np.log1p(10.0 * scenario.meta.cutoff_time)
    pairs = []
    for i in train_indices:
        row = p10[int(i)]
        best = row.min()
        for a in range(scenario.num_algorithms):
            pairs.append(TrainPair(
                problem_index=int(i),
                algorithm_index=a,
                regression_target=float(np.log1p(row[a]) / denom),
                class_label=1.0 if row[a] == best else 0.0,
            ))
    return pairs


class Sgd:
    def __init__(self, tensors, learning_rate: float):
        self.tensors = list(tensors)
        self.learning_rate = learning_rate

    def step(self):
        for t in self.tensors:
            t.values -= self.learning_rate * t.grad


class Adam:
    """Adam with the conventional constants (0.9, 0.999, 1e-8)."""

    def __init__(self, tensors, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.tensors = list(tensors)
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(t.values) for t in self.tensors]
        self.v = [np.zeros_like(t.values) for t in self.tensors]
        self.t = 0

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for t, m, v in zip(self.tensors, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * t.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * t.grad * t.grad
            t.values -= self.learning_rate * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def make_optimizer(tensors, config: TrainConfig):
    if config.optimizer == "sgd":
        return Sgd(tensors, config.learning_rate)
    return Adam(tensors, config.learning_rate)


@dataclass
class StageResult:
    params: md.ModelParams
    epoch_losses: list
    keep_probabilities: np.ndarray | None  # stage-1 gate probabilities, else None


def _run_stage(params: md.ModelParams, features: np.ndarray, seqs, table_rows,
               pairs, model_config: md.ModelConfig, train_config: TrainConfig,
               epochs: int, rng, stage_tag: int, log=None) -> list:
    """Shared optimization loop; mutates params in place, returns epoch losses."""
    tensors = list(params.trainable_tensors())
    opt = make_optimizer(tensors, train_config)
    p_idx = np.array([p.problem_index for p in pairs], dtype=np.int64)
    a_idx = np.array([p.algorithm_index for p in pairs], dtype=np.int64)
    if model_config.loss_mode == "regression":
        targets = np.array([p.regression_target for p in pairs])
    else:
        targets = np.array([p.class_label for p in pairs])

    gated = params.stage == "stage1" and params.selector is not None
    tau_start = model_config.temperature
    losses = []
    for epoch in range(epochs):
        t0 = time.monotonic()
        if gated and train_config.tau_final is not None:
            frac = epoch / max(epochs - 1, 1)
            params.selector.temperature = tau_start + (train_config.tau_final - tau_start) * frac
        order = rng.permutation(len(pairs))
        batch_losses = []
        for start in range(0, len(pairs), train_config.batch_size):
            chosen = order[start:start + train_config.batch_size]
            gate = None
            if gated:
                noise = (rng.gumbel(size=params.selector.dim),
                         rng.gumbel(size=params.selector.dim))
                gate = ly.gumbel_weights(params.selector, mode="train", noise=noise)
            ad.zero_grads(tensors)
            uniq, inverse = np.unique(p_idx[chosen], return_inverse=True)
            v_p = md.encode_problem(params, features[uniq])
            v_a = None
            if model_config.use_algorithm_features:
                v_a = md.encode_algorithms(params, seqs, table_rows, gate_weights=gate)
            scores = md.score_pairs(params, v_p, v_a, inverse, a_idx[chosen])
            if model_config.loss_mode == "regression":
                loss = ad.mse_loss(scores, targets[chosen])
            else:
                loss = ad.bce_loss(scores, targets[chosen])
            value = loss.item()
            if not np.isfinite(value):
                raise NonFiniteLossError(
                    f"stage {stage_tag} epoch {epoch} batch {start // train_config.batch_size}: "
                    f"loss is {value}"
                )
            ad.backward(loss)
            opt.step()
            batch_losses.append(value)
        mean_loss = float(np.mean(batch_losses))
        losses.append(mean_loss)
        if log is not None:
            log({
                "stage": stage_tag,
                "epoch": epoch,
                "mean_loss": mean_loss,
                "tau": params.selector.temperature if gated else None,
                "wall_time_s": time.monotonic() - t0,
            })
    return losses


def _prepared_inputs(scenario: Scenario, catalog: EmbeddingCatalog | None,
                     model_config: md.ModelConfig, stats):
    features = apply_normalize(scenario.feature_matrix(), stats)
    seqs, table_rows = None, None
    if model_config.use_algorithm_features:
        if catalog is None:
            raise ConfigError("this variant trains on algorithm embeddings; catalog required")
        seqs = [catalog.get(a) for a in scenario.algorithms]
        if catalog.dim != model_config.embedding_dim:
            raise ConfigError(
                f"catalog width {catalog.dim} does not match embedding_dim "
                f"{model_config.embedding_dim}"
            )
        table_rows = list(range(scenario.num_algorithms)) if model_config.use_embedding_table else [None] * scenario.num_algorithms
    return features, seqs, table_rows


def train_stage1(scenario: Scenario, catalog: EmbeddingCatalog, split: SplitIndex,
                 model_config: md.ModelConfig, train_config: TrainConfig,
                 log=None) -> StageResult:
    """Full-width training with active gates; returns the learned keep
    probabilities alongside the trained parameters."""
    if not (model_config.use_algorithm_features and model_config.use_feature_selection):
        raise ConfigError("stage 1 needs the algorithm tower and feature selection enabled")
    stats = fit_feature_stats(scenario, split.train_indices)
    features, seqs, table_rows = _prepared_inputs(scenario, catalog, model_config, stats)
    pairs = build_pairs(scenario, split.train_indices)
    rng = np.random.default_rng([train_config.seed, 1])
    params = md.init_model_params(model_config, scenario.meta.num_features,
                                  scenario.num_algorithms, rng, stage="stage1")
    losses = _run_stage(params, features, seqs, table_rows, pairs, model_config,
                        train_config, train_config.epochs_stage1, rng, 1, log)
    return StageResult(params, losses, params.selector.keep_probabilities())


def extract_and_retrain(scenario: Scenario, catalog: EmbeddingCatalog, split: SplitIndex,
                        stage1: StageResult, model_config: md.ModelConfig,
                        train_config: TrainConfig, log=None) -> StageResult:
    """Pick the top-k dimensions from stage 1 and retrain from scratch."""
    topk = ly.select_topk(stage1.params.selector, model_config.top_k)
    stats = fit_feature_stats(scenario, split.train_indices)
    features, seqs, table_rows = _prepared_inputs(scenario, catalog, model_config, stats)
    pairs = build_pairs(scenario, split.train_indices)
    rng = np.random.default_rng([train_config.seed, 2])
    params = md.init_model_params(model_config, scenario.meta.num_features,
                                  scenario.num_algorithms, rng, stage="stage2",
                                  topk_indices=topk)
    losses = _run_stage(params, features, seqs, table_rows, pairs, model_config,
                        train_config, train_config.epochs_stage2, rng, 2, log)
    return StageResult(params, losses, None)


def train_selector(scenario: Scenario, catalog: EmbeddingCatalog | None,
                   split: SplitIndex, model_config: md.ModelConfig,
                   train_config: TrainConfig, log=None) -> TrainedSelector:
    """Train whichever pipeline the config calls for and bundle the result.

    Two stages when feature selection is active; otherwise one stage on the
    combined epoch budget so every variant trains equally long.
    """
    stats = fit_feature_stats(scenario, split.train_indices)
    if model_config.use_algorithm_features and model_config.use_feature_selection:
        stage1 = train_stage1(scenario, catalog, split, model_config, train_config, log)
        stage2 = extract_and_retrain(scenario, catalog, split, stage1, model_config,
                                     train_config, log)
        params = stage2.params
    else:
        features, seqs, table_rows = _prepared_inputs(scenario, catalog, model_config, stats)
        pairs = build_pairs(scenario, split.train_indices)
        rng = np.random.default_rng([train_config.seed, 2])
        params = md.init_model_params(model_config, scenario.meta.num_features,
                                      scenario.num_algorithms, rng, stage="stage2")
        epochs = train_config.epochs_stage1 + train_config.epochs_stage2
        _run_stage(params, features, seqs, table_rows, pairs, model_config,
                   train_config, epochs, rng, 2, log)
    return TrainedSelector(params, tuple(scenario.algorithms), stats)
