"""Per-instance algorithm selection with learned algorithm representations."""

__version__ = "0.1.0"

from .checkpoint import TrainedSelector, load_checkpoint, save_checkpoint
from .complexity import BoundInputs, bound_from_checkpoint, rademacher_bound
from .embeddings import (
    EmbeddingCatalog,
    TokenEmbeddingSequence,
    fetch_remote,
    load_catalog,
    save_catalog,
    synth_catalog,
)
from .errors import AlgoSelectError
from .estimator import AlgorithmSelector
from .evaluation import (
    EvaluationReport,
    evaluate,
    gap_closed,
    par10,
    run_ablations,
    sbs,
    select,
    vbs,
)
from .model import ModelConfig
from .scenario import (
    Scenario,
    SplitIndex,
    build_scenario,
    load_scenario,
    restrict_algorithms,
    save_scenario,
    split_instances,
)
from .training import TrainConfig, train_selector

__all__ = [
    "AlgoSelectError",
    "AlgorithmSelector",
    "BoundInputs",
    "EmbeddingCatalog",
    "EvaluationReport",
    "ModelConfig",
    "Scenario",
    "SplitIndex",
    "TokenEmbeddingSequence",
    "TrainConfig",
    "TrainedSelector",
    "__version__",
    "bound_from_checkpoint",
    "build_scenario",
    "evaluate",
    "fetch_remote",
    "gap_closed",
    "load_catalog",
    "load_checkpoint",
    "load_scenario",
    "par10",
    "rademacher_bound",
    "restrict_algorithms",
    "run_ablations",
    "save_catalog",
    "save_checkpoint",
    "save_scenario",
    "sbs",
    "select",
    "split_instances",
    "synth_catalog",
    "train_selector",
    "vbs",
]
