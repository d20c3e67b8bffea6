"""Scikit-learn style front end for the selector.

``AlgorithmSelector`` wraps scenario-driven training behind the familiar
``fit`` / ``predict`` / ``decision_function`` trio so the model slots into
sklearn-flavored tooling. Constructor arguments mirror ``ModelConfig`` and
``TrainConfig`` one to one and are stored verbatim (sklearn convention);
everything learned lives in trailing-underscore attributes set by ``fit``.

Scoring portability note: ``decision_function`` always returns
higher-is-better values, negating the regression head's penalty estimates,
so ``predict`` is an argmax in both loss modes.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .embeddings import EmbeddingCatalog
from .evaluation import score_features
from .model import ModelConfig
from .scenario import Scenario, SplitIndex
from .training import TrainConfig, train_selector


class AlgorithmSelector(BaseEstimator):
    """Per-instance algorithm selector with a two-tower scoring model.

    Parameters mirror the model and training configurations; see those
    dataclasses for semantics. ``random_state`` seeds all training
    randomness, making fits bit-reproducible.
    """

    def __init__(self, *, lstm_hidden=64, encoder_dim=256, top_k=64,
                 shared_dim=32, fusion_alpha=0.5, temperature=1.0,
                 loss_mode="regression", use_algorithm_features=True,
                 use_feature_selection=True, use_cosine=True,
                 use_embedding_table=True, token_encoder="lstm",
                 literal_initial_state=False, problem_hidden=(64,),
                 algorithm_hidden=(64,), scoring_hidden=(32,),
                 hidden_activation="relu", learning_rate=0.05,
                 epochs_stage1=40, epochs_stage2=40, batch_size=64,
                 optimizer="adam", tau_final=None, random_state=0):
        self.lstm_hidden = lstm_hidden
        self.encoder_dim = encoder_dim
        self.top_k = top_k
        self.shared_dim = shared_dim
        self.fusion_alpha = fusion_alpha
        self.temperature = temperature
        self.loss_mode = loss_mode
        self.use_algorithm_features = use_algorithm_features
        self.use_feature_selection = use_feature_selection
        self.use_cosine = use_cosine
        self.use_embedding_table = use_embedding_table
        self.token_encoder = token_encoder
        self.literal_initial_state = literal_initial_state
        self.problem_hidden = problem_hidden
        self.algorithm_hidden = algorithm_hidden
        self.scoring_hidden = scoring_hidden
        self.hidden_activation = hidden_activation
        self.learning_rate = learning_rate
        self.epochs_stage1 = epochs_stage1
        self.epochs_stage2 = epochs_stage2
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.tau_final = tau_final
        self.random_state = random_state

    def model_config(self, embedding_dim: int) -> ModelConfig:
        """The architecture these hyperparameters describe, for a catalog
        of the given token width."""
        return ModelConfig(
            embedding_dim=embedding_dim,
            lstm_hidden=self.lstm_hidden,
            encoder_dim=self.encoder_dim,
            top_k=self.top_k,
            shared_dim=self.shared_dim,
            fusion_alpha=self.fusion_alpha,
            temperature=self.temperature,
            loss_mode=self.loss_mode,
            use_algorithm_features=self.use_algorithm_features,
            use_feature_selection=self.use_feature_selection,
            use_cosine=self.use_cosine,
            use_embedding_table=self.use_embedding_table,
            token_encoder=self.token_encoder,
            literal_initial_state=self.literal_initial_state,
            problem_hidden=tuple(self.problem_hidden),
            algorithm_hidden=tuple(self.algorithm_hidden),
            scoring_hidden=tuple(self.scoring_hidden),
            hidden_activation=self.hidden_activation,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs_stage1=self.epochs_stage1,
            epochs_stage2=self.epochs_stage2,
            batch_size=self.batch_size,
            optimizer=self.optimizer,
            seed=self.random_state,
            tau_final=self.tau_final,
        )

    def fit(self, scenario: Scenario, catalog: EmbeddingCatalog,
            train_indices=None):
        """Train on a scenario, on all instances unless indices are given."""
        if train_indices is None:
            train_indices = tuple(range(scenario.num_instances))
        split = SplitIndex(train_indices=tuple(int(i) for i in train_indices),
                           test_indices=(), seed=self.random_state)
        self.trained_ = train_selector(
            scenario, catalog, split,
            self.model_config(catalog.dim), self.train_config(),
        )
        self.algorithms_ = tuple(scenario.algorithms)
        self.catalog_ = catalog
        self.n_features_in_ = scenario.meta.num_features
        return self

    def _validated(self, X) -> np.ndarray:
        check_is_fitted(self, "trained_")
        X = check_array(X, dtype=np.float64, ensure_all_finite="allow-nan")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but {type(self).__name__} "
                f"was fitted with {self.n_features_in_}"
            )
        return X

    def decision_function(self, X) -> np.ndarray:
        """(n_samples, n_algorithms) scores, higher meaning preferred.

        Missing feature values (NaN) are imputed with the training means.
        """
        X = self._validated(X)
        scores = score_features(self.trained_, X, self.catalog_, self.algorithms_)
        if self.trained_.config.loss_mode == "regression":
            return -scores
        return scores

    def predict(self, X) -> np.ndarray:
        """The chosen algorithm id for each row of X."""
        picks = np.argmax(self.decision_function(X), axis=1)
        return np.asarray([self.algorithms_[int(i)] for i in picks], dtype=object)
