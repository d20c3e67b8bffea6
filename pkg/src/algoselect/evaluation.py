"""Scoring a trained selector against the standard baselines.

PAR10 charges the runtime when a run finished within the cutoff and ten
times the cutoff otherwise. The virtual best solver (VBS) takes the best
algorithm per instance; the single best solver (SBS) is the one algorithm
with the lowest mean train PAR10, scored on the evaluation side. A
selector's quality is summarized by how much of the SBS-to-VBS gap it
closes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import model as md
from .checkpoint import TrainedSelector
from .embeddings import EmbeddingCatalog
from .errors import EmptySubsetError, MissingEmbeddingError, UnknownAlgorithmError
from .scenario import RunStatus, Scenario, SplitIndex, apply_normalize


def par10(runtime: float, status, cutoff: float) -> float:
    """Penalized runtime; the cutoff itself still counts as solved."""
    if not isinstance(status, RunStatus):
        status = RunStatus.from_text(str(status))
    if status is RunStatus.OK and runtime <= cutoff:
        return float(runtime)
    return 10.0 * cutoff


def par10_matrix(scenario: Scenario) -> np.ndarray:
    """(instances, algorithms) PAR10 scores."""
    rt = scenario.runtime_matrix()
    ok = scenario.ok_matrix()
    c = scenario.meta.cutoff_time
    return np.where(ok & (rt <= c), rt, 10.0 * c)


def _subset(indices, what: str) -> np.ndarray:
    idx = np.asarray(list(indices), dtype=np.int64)
    if idx.size == 0:
        raise EmptySubsetError(f"{what} subset is empty")
    return idx


def vbs(scenario: Scenario, indices) -> float:
    """Mean PAR10 of the per-instance best algorithm over the subset."""
    rows = par10_matrix(scenario)[_subset(indices, "vbs")]
    return float(rows.min(axis=1).mean())


def sbs(scenario: Scenario, train_indices, eval_indices):
    """Best fixed algorithm by mean train PAR10, scored on the eval subset.

    Returns (algorithm_id, eval PAR10). Ties go to the lower index.
    """
    scores = par10_matrix(scenario)
    train_means = scores[_subset(train_indices, "sbs train")].mean(axis=0)
    best = int(np.argmin(train_means))  # argmin takes the first of equals
    eval_mean = float(scores[_subset(eval_indices, "sbs eval"), best].mean())
    return scenario.algorithms[best], eval_mean


def gap_closed(sbs_par10: float, selector_par10: float, vbs_par10: float):
    """Fraction of the SBS-to-VBS gap closed; None when there is no gap."""
    if sbs_par10 == vbs_par10:
        return None
    return (sbs_par10 - selector_par10) / (sbs_par10 - vbs_par10)


def _candidate_index(trained: TrainedSelector, algorithm_id: str):
    cfg = trained.config
    if not (cfg.use_algorithm_features and cfg.use_embedding_table):
        return None
    try:
        return trained.algorithm_ids.index(algorithm_id)
    except ValueError:
        raise MissingEmbeddingError(
            f"algorithm {algorithm_id!r} has no table row; this variant cannot "
            "score algorithms unseen in training"
        ) from None


def score_features(trained: TrainedSelector, features,
                   catalog: EmbeddingCatalog | None, algorithm_ids) -> np.ndarray:
    """Raw model scores for unnormalized feature rows: one row per input,
    one column per candidate algorithm. Uses the batched towers with
    eval-mode gates; normalization uses the stats captured at training."""
    raw = np.asarray(features, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] == 0:
        raise EmptySubsetError(f"need a non-empty feature matrix, got shape {raw.shape}")
    algorithm_ids = list(algorithm_ids)
    params = trained.params
    feats = apply_normalize(raw, trained.feature_stats)
    v_p = md.encode_problem(params, feats)
    if not trained.config.use_algorithm_features:
        col = md.score_pairs(params, v_p, None, np.arange(raw.shape[0]), None).values
        return np.repeat(col[:, None], len(algorithm_ids), axis=1)
    if catalog is None:
        raise MissingEmbeddingError("this variant needs an embedding catalog to score")
    seqs, table_rows = [], []
    for aid in algorithm_ids:
        try:
            seqs.append(catalog.get(aid))
        except UnknownAlgorithmError:
            raise MissingEmbeddingError(f"catalog has no embedding for {aid!r}") from None
        table_rows.append(_candidate_index(trained, aid))
    v_a = md.encode_algorithms(params, seqs, table_rows)
    n, a = raw.shape[0], len(algorithm_ids)
    p_rows = np.repeat(np.arange(n), a)
    a_rows = np.tile(np.arange(a), n)
    flat = md.score_pairs(params, v_p, v_a, p_rows, a_rows).values
    return flat.reshape(n, a)


def score_matrix(trained: TrainedSelector, scenario: Scenario,
                 catalog: EmbeddingCatalog | None, indices) -> np.ndarray:
    """Raw model scores, one row per requested instance, one column per
    scenario algorithm."""
    idx = _subset(indices, "score")
    return score_features(trained, scenario.feature_matrix()[idx],
                          catalog, scenario.algorithms)


def _choices_from_scores(trained: TrainedSelector, scores: np.ndarray) -> np.ndarray:
    # regression scores approximate penalties (lower is better); classification
    # scores are best-algorithm logits (higher is better); argmin/argmax both
    # resolve ties toward the lower index
    if trained.config.loss_mode == "regression":
        return np.argmin(scores, axis=1)
    return np.argmax(scores, axis=1)


def select(trained: TrainedSelector, scenario: Scenario,
           catalog: EmbeddingCatalog | None, instance_index: int) -> str:
    """The algorithm the trained selector picks for one instance."""
    scores = score_matrix(trained, scenario, catalog, [instance_index])
    return scenario.algorithms[int(_choices_from_scores(trained, scores)[0])]


@dataclass(frozen=True)
class EvaluationReport:
    scenario_id: str
    num_train: int
    num_test: int
    vbs_par10: float
    sbs_par10: float
    sbs_algorithm: str
    selector_par10: float
    gap_closed: float | None
    choices: tuple  # (instance_id, algorithm_id) per test instance

    def to_obj(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "num_train": self.num_train,
            "num_test": self.num_test,
            "vbs_par10": self.vbs_par10,
            "sbs_par10": self.sbs_par10,
            "sbs_algorithm": self.sbs_algorithm,
            "selector_par10": self.selector_par10,
            "gap_closed": self.gap_closed,
            "choices": [list(c) for c in self.choices],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), sort_keys=True)


def evaluate(trained: TrainedSelector, scenario: Scenario,
             catalog: EmbeddingCatalog | None, split: SplitIndex) -> EvaluationReport:
    """Score the selector on the split's test side."""
    test = _subset(split.test_indices, "evaluate test")
    scores = score_matrix(trained, scenario, catalog, test)
    picks = _choices_from_scores(trained, scores)
    p10 = par10_matrix(scenario)
    selector_par10 = float(p10[test, picks].mean())
    vbs_val = vbs(scenario, test)
    sbs_algo, sbs_val = sbs(scenario, split.train_indices, test)
    return EvaluationReport(
        scenario_id=scenario.meta.scenario_id,
        num_train=len(split.train_indices),
        num_test=int(test.size),
        vbs_par10=vbs_val,
        sbs_par10=sbs_val,
        sbs_algorithm=sbs_algo,
        selector_par10=selector_par10,
        gap_closed=gap_closed(sbs_val, selector_par10, vbs_val),
        choices=tuple(
            (scenario.instances[int(i)].instance_id, scenario.algorithms[int(a)])
            for i, a in zip(test, picks)
        ),
    )


def run_ablations(scenario: Scenario, catalog: EmbeddingCatalog, split: SplitIndex,
                  model_config: md.ModelConfig, train_config) -> dict:
    """Train and evaluate the full model and its three reduced variants.

    Every variant sees the same scenario, split and seed; only the dropped
    component differs. Returns {"full": report, "<ablation>": report, ...}.
    """
    from .training import train_selector  # deferred: training imports this module

    reports = {}
    for name in ("full", *md.ABLATIONS):
        cfg = model_config if name == "full" else md.make_ablation(model_config, name)
        trained = train_selector(scenario, catalog, split, cfg, train_config)
        reports[name] = evaluate(trained, scenario, catalog, split)
    return reports


def render_report_table(reports: dict) -> str:
    """Fixed-width comparison table over named evaluation reports."""
    headers = ("variant", "vbs", "sbs", "selector", "gap_closed")
    rows = [headers]
    for name, rep in reports.items():
        gap = "n/a" if rep.gap_closed is None else f"{rep.gap_closed:.4f}"
        rows.append((name, f"{rep.vbs_par10:.4f}", f"{rep.sbs_par10:.4f}",
                     f"{rep.selector_par10:.4f}", gap))
    widths = [max(len(r[i]) for r in rows) for i in range(len(headers))]
    lines = []
    for i, r in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
