"""Synthetic scenarios with a known ground-truth selection rule.

Both generators plant a nearest-centroid structure: each algorithm owns a
centroid, an instance's best algorithm is the one whose centroid lies
closest, and only the best algorithm finishes within the cutoff. That makes
the single best solver far worse than the virtual best, so there is a wide
gap for a selector to close, and the optimal policy is known exactly.
"""
from __future__ import annotations

import numpy as np

from .embeddings import EmbeddingCatalog, TokenEmbeddingSequence
from .errors import ConfigError
from .scenario import Scenario, build_scenario


def _centroids(rng, count: int, dim: int, separation: float) -> np.ndarray:
    c = rng.standard_normal((count, dim))
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    return c * separation


def _runtime_grid(rng, best: np.ndarray, num_algorithms: int, cutoff: float,
                  fast_range) -> tuple:
    n = best.shape[0]
    runtimes = np.full((n, num_algorithms), cutoff)
    statuses = np.full((n, num_algorithms), "timeout", dtype=object)
    lo, hi = fast_range
    runtimes[np.arange(n), best] = rng.uniform(lo, hi, size=n)
    statuses[np.arange(n), best] = "ok"
    return runtimes, statuses


def make_centroid_scenario(num_instances: int = 200, num_algorithms: int = 6,
                           num_features: int = 10, cutoff: float = 100.0,
                           seed: int = 0, noise: float = 0.8,
                           separation: float = 4.0, fast_range=(1.0, 10.0),
                           tokens_per_algorithm: int = 3,
                           token_noise: float = 0.1):
    """Instances cluster around algorithm centroids in feature space.

    The catalog's token rows are noisy copies of each algorithm's centroid,
    so the token embeddings genuinely describe which region of feature space
    an algorithm wins on; models that read them can generalize to algorithms
    held out of training. Returns (scenario, catalog).
    """
    rng = np.random.default_rng(seed)
    centroids = _centroids(rng, num_algorithms, num_features, separation)
    owner = rng.integers(num_algorithms, size=num_instances)
    feats = centroids[owner] + noise * rng.standard_normal((num_instances, num_features))
    # the ground-truth rule is nearest centroid, recomputed after noise
    dists = np.linalg.norm(feats[:, None, :] - centroids[None, :, :], axis=2)
    best = np.argmin(dists, axis=1)
    runtimes, statuses = _runtime_grid(rng, best, num_algorithms, cutoff, fast_range)

    algorithm_ids = [f"algo{a}" for a in range(num_algorithms)]
    scen = build_scenario(
        f"centroid-{seed}", cutoff, algorithm_ids,
        [f"p{i:04d}" for i in range(num_instances)], feats, runtimes, statuses,
    )
    entries = {}
    for a, aid in enumerate(algorithm_ids):
        tokens = centroids[a] + token_noise * rng.standard_normal(
            (tokens_per_algorithm, num_features)
        )
        entries[aid] = TokenEmbeddingSequence(aid, tokens)
    return scen, EmbeddingCatalog(entries)


def make_planted_dims_scenario(num_instances: int = 200, num_algorithms: int = 6,
                               encoder_dim: int = 32,
                               planted_dims=(2, 9, 16, 23, 30),
                               cutoff: float = 100.0, seed: int = 0,
                               noise: float = 0.8, separation: float = 4.0,
                               fast_range=(1.0, 10.0)):
    """Signal lives in a known subset of the token-embedding dimensions.

    Every algorithm's single token is zero except on planted_dims, which hold
    its centroid. Zero dimensions contribute nothing to any score, so their
    selector gates receive exactly zero gradient and stay at probability
    one half; only genuinely informative dimensions can rise above them.
    Instance features live in the planted subspace directly. Returns
    (scenario, catalog, planted_dims).
    """
    planted = tuple(sorted(int(d) for d in planted_dims))
    if len(set(planted)) != len(planted) or planted[0] < 0 or planted[-1] >= encoder_dim:
        raise ConfigError(f"planted_dims must be unique and inside [0, {encoder_dim})")
    signal_dim = len(planted)
    rng = np.random.default_rng(seed)
    centroids = _centroids(rng, num_algorithms, signal_dim, separation)
    owner = rng.integers(num_algorithms, size=num_instances)
    feats = centroids[owner] + noise * rng.standard_normal((num_instances, signal_dim))
    dists = np.linalg.norm(feats[:, None, :] - centroids[None, :, :], axis=2)
    best = np.argmin(dists, axis=1)
    runtimes, statuses = _runtime_grid(rng, best, num_algorithms, cutoff, fast_range)

    algorithm_ids = [f"algo{a}" for a in range(num_algorithms)]
    scen = build_scenario(
        f"planted-dims-{seed}", cutoff, algorithm_ids,
        [f"p{i:04d}" for i in range(num_instances)], feats, runtimes, statuses,
    )
    entries = {}
    for a, aid in enumerate(algorithm_ids):
        token = np.zeros(encoder_dim)
        token[list(planted)] = centroids[a]
        entries[aid] = TokenEmbeddingSequence(aid, token[None, :])
    return scen, EmbeddingCatalog(entries), planted
