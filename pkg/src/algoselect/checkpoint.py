"""Checkpoint serialization for trained selectors.

A checkpoint is one JSON document holding the model config, every weight,
the algorithm-id binding for table rows, and the feature normalization
statistics. Floats are emitted via repr (json's default), which round-trips
float64 exactly, and keys are sorted, so identical selectors serialize to
identical bytes.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import layers as ly
from .errors import MalformedValueError, MissingFileError
from .model import ModelConfig, ModelParams
from .scenario import FeatureStats

FORMAT_VERSION = 1


@dataclass
class TrainedSelector:
    """Everything needed to score new instances: weights, id binding, stats."""

    params: ModelParams
    algorithm_ids: tuple
    feature_stats: FeatureStats

    @property
    def config(self) -> ModelConfig:
        return self.params.config


def _array(t) -> list:
    return np.asarray(t.values if isinstance(t, ad.Tensor) else t).tolist()


def _mlp_to_obj(mlp):
    if mlp is None:
        return None
    return [
        {"weight": _array(l.weight), "bias": _array(l.bias), "activation": l.activation}
        for l in mlp.layers
    ]


def _mlp_from_obj(obj):
    if obj is None:
        return None
    return ly.MlpParams([
        ly.MlpLayer(
            ad.leaf(np.array(l["weight"], dtype=np.float64), requires_grad=True),
            ad.leaf(np.array(l["bias"], dtype=np.float64), requires_grad=True),
            l["activation"],
        )
        for l in obj
    ])


_LSTM_FIELDS = (
    "w_input", "u_input", "b_input", "w_forget", "u_forget", "b_forget",
    "w_output", "u_output", "b_output", "w_cell", "u_cell", "b_cell",
)


def checkpoint_to_obj(trained: TrainedSelector) -> dict:
    p = trained.params
    lstm = None
    if p.lstm is not None:
        lstm = {name: _array(getattr(p.lstm, name)) for name in _LSTM_FIELDS}
    selector = None
    if p.selector is not None:
        selector = {"logits": _array(p.selector.logits), "temperature": p.selector.temperature}
    cfg = {
        k: (list(v) if isinstance(v, tuple) else v)
        for k, v in dataclasses.asdict(p.config).items()
    }
    return {
        "format_version": FORMAT_VERSION,
        "model_config": cfg,
        "stage": p.stage,
        "topk_indices": list(p.topk_indices) if p.topk_indices is not None else None,
        "algorithm_ids": list(trained.algorithm_ids),
        "feature_stats": {
            "mean": _array(trained.feature_stats.mean),
            "std": _array(trained.feature_stats.std),
        },
        "params": {
            "lstm": lstm,
            "readout": _mlp_to_obj(p.readout),
            "selector": selector,
            "table": _array(p.table.table) if p.table is not None else None,
            "mlp_problem": _mlp_to_obj(p.mlp_problem),
            "mlp_algorithm": _mlp_to_obj(p.mlp_algorithm),
            "mlp_score": _mlp_to_obj(p.mlp_score),
        },
    }


def checkpoint_from_obj(obj: dict) -> TrainedSelector:
    try:
        if obj.get("format_version") != FORMAT_VERSION:
            raise MalformedValueError(
                f"unsupported checkpoint format_version {obj.get('format_version')!r}"
            )
        cfg_obj = dict(obj["model_config"])
        for key in ("problem_hidden", "algorithm_hidden", "scoring_hidden"):
            cfg_obj[key] = tuple(cfg_obj[key])
        config = ModelConfig(**cfg_obj)
        raw = obj["params"]
        lstm = None
        if raw["lstm"] is not None:
            lstm = ly.LstmParams(*[
                ad.leaf(np.array(raw["lstm"][name], dtype=np.float64), requires_grad=True)
                for name in _LSTM_FIELDS
            ])
        selector = None
        if raw["selector"] is not None:
            selector = ly.GumbelSelector(
                ad.leaf(np.array(raw["selector"]["logits"], dtype=np.float64), requires_grad=True),
                float(raw["selector"]["temperature"]),
            )
        table = None
        if raw["table"] is not None:
            table = ly.EmbeddingTable(
                ad.leaf(np.array(raw["table"], dtype=np.float64), requires_grad=True)
            )
        params = ModelParams(
            config=config,
            stage=obj["stage"],
            mlp_problem=_mlp_from_obj(raw["mlp_problem"]),
            mlp_score=_mlp_from_obj(raw["mlp_score"]),
            lstm=lstm,
            readout=_mlp_from_obj(raw["readout"]),
            selector=selector,
            table=table,
            mlp_algorithm=_mlp_from_obj(raw["mlp_algorithm"]),
            topk_indices=tuple(obj["topk_indices"]) if obj["topk_indices"] is not None else None,
        )
        stats = FeatureStats(
            mean=np.array(obj["feature_stats"]["mean"], dtype=np.float64),
            std=np.array(obj["feature_stats"]["std"], dtype=np.float64),
        )
        return TrainedSelector(params, tuple(obj["algorithm_ids"]), stats)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedValueError(f"malformed checkpoint: {exc}") from None


def dumps_checkpoint(trained: TrainedSelector) -> str:
    return json.dumps(checkpoint_to_obj(trained), sort_keys=True)


def save_checkpoint(trained: TrainedSelector, path) -> None:
    Path(path).write_text(dumps_checkpoint(trained) + "\n")


def load_checkpoint(path) -> TrainedSelector:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"{path} does not exist")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedValueError(f"{path}: invalid JSON ({exc.msg})") from None
    return checkpoint_from_obj(obj)
