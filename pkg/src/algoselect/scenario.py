"""ASlib-style scenario loading, splitting and feature normalization.

A scenario directory holds three files:

  description.txt       flat "key: value" lines (a trailing "- item" line
                        continues the previous key, so single-level ASlib
                        list keys parse too)
  feature_values.arff   instance_id, optional repetition, numeric features
  algorithm_runs.arff   instance_id, optional repetition, algorithm,
                        runtime, runstatus

Missing numeric cells are written as '?' and surface as NaN. Repeated
measurements keep the first occurrence. The in-memory Scenario is a dense
(instances x algorithms) grid of run records; loading fails loudly when the
grid is incomplete or ids are inconsistent.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ArityMismatchError,
    DataBeforeHeaderError,
    DegenerateSplitError,
    InconsistentIdsError,
    MalformedValueError,
    MissingFileError,
    MissingKeyError,
)

MISSING = float("nan")

DESCRIPTION_FILE = "description.txt"
FEATURES_FILE = "feature_values.arff"
RUNS_FILE = "algorithm_runs.arff"


class RunStatus(str, enum.Enum):
    OK = "ok"
    TIMEOUT = "timeout"
    MEMOUT = "memout"
    CRASH = "crash"
    OTHER = "other"

    @classmethod
    def from_text(cls, text: str) -> "RunStatus":
        """Map a raw status string; anything unrecognized becomes OTHER."""
        norm = text.strip().strip("'\"").lower()
        for member in cls:
            if member.value == norm:
                return member
        return cls.OTHER


@dataclass(frozen=True)
class ScenarioMeta:
    scenario_id: str
    cutoff_time: float
    maximize: bool
    num_features: int

    def __post_init__(self):
        if not (self.cutoff_time > 0 and np.isfinite(self.cutoff_time)):
            raise MalformedValueError(f"cutoff_time must be positive, got {self.cutoff_time}")
        if self.num_features < 1:
            raise MalformedValueError(f"num_features must be >= 1, got {self.num_features}")


@dataclass(eq=False)
class ProblemInstance:
    instance_id: str
    features: np.ndarray  # (num_features,), NaN marks missing

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 1:
            raise MalformedValueError(f"features for {self.instance_id!r} must be a vector")

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        return self.instance_id == other.instance_id and np.array_equal(
            self.features, other.features, equal_nan=True
        )


@dataclass(frozen=True)
class RunRecord:
    instance_id: str
    algorithm_id: str
    runtime: float
    status: RunStatus

    def __post_init__(self):
        if not (self.runtime >= 0 and np.isfinite(self.runtime)):
            raise MalformedValueError(
                f"runtime for ({self.instance_id!r}, {self.algorithm_id!r}) must be finite and >= 0"
            )


@dataclass(eq=False)
class Scenario:
    meta: ScenarioMeta
    algorithms: tuple
    instances: tuple
    runs: tuple  # runs[i][a] is the RunRecord for instance i, algorithm a

    def __post_init__(self):
        if len(set(self.algorithms)) != len(self.algorithms):
            raise InconsistentIdsError("duplicate algorithm ids")
        ids = [p.instance_id for p in self.instances]
        if len(set(ids)) != len(ids):
            raise InconsistentIdsError("duplicate instance ids")
        for p in self.instances:
            if p.features.shape != (self.meta.num_features,):
                raise MalformedValueError(
                    f"instance {p.instance_id!r} has {p.features.shape[0]} features, "
                    f"description declares {self.meta.num_features}"
                )
        if len(self.runs) != len(self.instances):
            raise InconsistentIdsError("run grid row count does not match instances")
        for prow, p in zip(self.runs, self.instances):
            if len(prow) != len(self.algorithms):
                raise InconsistentIdsError("run grid column count does not match algorithms")
            for rec, a in zip(prow, self.algorithms):
                if rec.instance_id != p.instance_id or rec.algorithm_id != a:
                    raise InconsistentIdsError(
                        f"run record ({rec.instance_id!r}, {rec.algorithm_id!r}) is out of place"
                    )
        self._runtimes = None
        self._ok = None
        self._features = None

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (
            self.meta == other.meta
            and self.algorithms == other.algorithms
            and list(self.instances) == list(other.instances)
            and self.runs == other.runs
        )

    @property
    def num_instances(self) -> int:
        return len(self.instances)

    @property
    def num_algorithms(self) -> int:
        return len(self.algorithms)

    def runtime_matrix(self) -> np.ndarray:
        """(instances, algorithms) runtimes."""
        if self._runtimes is None:
            self._runtimes = np.array([[r.runtime for r in row] for row in self.runs])
        return self._runtimes

    def ok_matrix(self) -> np.ndarray:
        """(instances, algorithms) bool, True where status is ok."""
        if self._ok is None:
            self._ok = np.array([[r.status is RunStatus.OK for r in row] for row in self.runs])
        return self._ok

    def feature_matrix(self) -> np.ndarray:
        """(instances, num_features) raw features, NaN where missing."""
        if self._features is None:
            self._features = np.stack([p.features for p in self.instances])
        return self._features


@dataclass(frozen=True)
class SplitIndex:
    train_indices: tuple
    test_indices: tuple
    seed: int


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray  # population (ddof 0); 0 flags a constant column


def parse_description(text: str) -> ScenarioMeta:
    """Parse a description file into scenario metadata.

    Lines are "key: value"; blank lines and '#'/'%' comments are skipped.
    A line of the form "- item" extends the most recent key, so simple
    one-level list keys from real ASlib files flatten correctly.
    """
    entries: dict[str, list[str]] = {}
    last_key = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("%"):
            continue
        if line.startswith("- ") or line == "-":
            if last_key is None:
                raise MalformedValueError(f"description line {lineno}: list item precedes any key")
            entries[last_key].append(line.lstrip("-").strip())
            continue
        if ":" not in line:
            # tolerated so unsupported nested blocks do not break ingest
            continue
        key, _, value = line.partition(":")
        key = key.strip().lower()
        entries.setdefault(key, [])
        if value.strip():
            entries[key].append(value.strip())
        last_key = key

    def joined(key):
        vals = entries.get(key)
        return ",".join(vals) if vals else None

    scenario_id = joined("scenario_id") or "unnamed"

    cutoff_text = joined("algorithm_cutoff_time")
    if cutoff_text is None:
        raise MissingKeyError("description is missing algorithm_cutoff_time")
    try:
        cutoff = float(cutoff_text)
    except ValueError:
        raise MalformedValueError(f"algorithm_cutoff_time: {cutoff_text!r} is not a number") from None

    maximize_text = joined("maximize")
    if maximize_text is None:
        maximize = False
    elif maximize_text.lower() in ("true", "false"):
        maximize = maximize_text.lower() == "true"
    else:
        raise MalformedValueError(f"maximize: expected true or false, got {maximize_text!r}")

    count_text = joined("number_of_features")
    if count_text is not None:
        try:
            num_features = int(count_text)
        except ValueError:
            raise MalformedValueError(f"number_of_features: {count_text!r} is not an integer") from None
    else:
        names = []
        for key in ("features_deterministic", "features_stochastic"):
            listed = joined(key)
            if listed:
                names.extend(n.strip() for n in listed.split(",") if n.strip())
        if not names:
            raise MissingKeyError(
                "description needs number_of_features or features_deterministic/features_stochastic"
            )
        num_features = len(names)

    return ScenarioMeta(scenario_id, cutoff, maximize, num_features)


def _strip_quotes(token: str) -> str:
    token = token.strip()
    if len(token) >= 2 and token[0] == token[-1] and token[0] in ("'", '"'):
        return token[1:-1]
    return token


def parse_arff(text: str):
    """Parse the ARFF dialect used by scenario files.

    Returns (names, rows). Values in numeric columns come back as floats
    with '?' mapped to NaN; other columns come back as strings. Data rows
    before the @data marker, arity mismatches and unparseable numbers raise.
    """
    names: list[str] = []
    numeric: list[bool] = []
    rows: list[list] = []
    in_data = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        if line.startswith("@"):
            head, _, rest = line.partition(" ")
            directive = head.lower()
            if directive == "@relation":
                continue
            if directive == "@attribute":
                if in_data:
                    raise MalformedValueError(f"line {lineno}: @attribute after @data")
                parts = rest.strip().split(None, 1)
                if len(parts) != 2:
                    raise MalformedValueError(f"line {lineno}: malformed @attribute")
                names.append(_strip_quotes(parts[0]))
                numeric.append(parts[1].strip().lower() in ("numeric", "real", "integer"))
                continue
            if directive == "@data":
                if not names:
                    raise MalformedValueError(f"line {lineno}: @data with no attributes declared")
                in_data = True
                continue
            raise MalformedValueError(f"line {lineno}: unknown directive {head!r}")
        if not in_data:
            raise DataBeforeHeaderError(f"line {lineno}: data row before @data")
        tokens = [_strip_quotes(t) for t in line.split(",")]
        if len(tokens) != len(names):
            raise ArityMismatchError(
                f"line {lineno}: {len(tokens)} values for {len(names)} attributes"
            )
        parsed = []
        for tok, is_num, name in zip(tokens, numeric, names):
            if not is_num:
                parsed.append(tok)
            elif tok == "?":
                parsed.append(MISSING)
            else:
                try:
                    parsed.append(float(tok))
                except ValueError:
                    raise MalformedValueError(
                        f"line {lineno}: {tok!r} is not numeric (column {name!r})"
                    ) from None
        rows.append(parsed)
    if not in_data:
        raise MalformedValueError("no @data marker")
    return names, rows


def _column(names, wanted):
    lowered = [n.lower() for n in names]
    return lowered.index(wanted) if wanted in lowered else None


def load_scenario(directory) -> Scenario:
    """Load and cross-validate the three scenario files in a directory."""
    root = Path(directory)
    for fname in (DESCRIPTION_FILE, FEATURES_FILE, RUNS_FILE):
        if not (root / fname).is_file():
            raise MissingFileError(f"{root / fname} does not exist")

    meta = parse_description((root / DESCRIPTION_FILE).read_text())

    fnames, frows = parse_arff((root / FEATURES_FILE).read_text())
    if _column(fnames, "instance_id") != 0:
        raise MalformedValueError("feature file must declare instance_id as its first attribute")
    skip = {0}
    rep_col = _column(fnames, "repetition")
    if rep_col is not None:
        skip.add(rep_col)
    feat_cols = [i for i in range(len(fnames)) if i not in skip]
    if len(feat_cols) != meta.num_features:
        raise MalformedValueError(
            f"feature file provides {len(feat_cols)} feature columns, "
            f"description declares {meta.num_features}"
        )
    instances: list[ProblemInstance] = []
    seen_instances: dict[str, int] = {}
    for row_values in frows:
        iid = str(row_values[0])
        if iid in seen_instances:
            continue  # keep the first repetition
        seen_instances[iid] = len(instances)
        instances.append(ProblemInstance(iid, np.array([row_values[c] for c in feat_cols])))
    if not instances:
        raise MalformedValueError("feature file has no data rows")

    rnames, rrows = parse_arff((root / RUNS_FILE).read_text())
    cols = {name: _column(rnames, name) for name in ("instance_id", "algorithm", "runtime", "runstatus")}
    for name, col in cols.items():
        if col is None:
            raise MalformedValueError(f"run file is missing the {name!r} attribute")

    algorithms: list[str] = []
    algo_index: dict[str, int] = {}
    cells: dict[tuple, RunRecord] = {}
    for row_values in rrows:
        iid = str(row_values[cols["instance_id"]])
        if iid not in seen_instances:
            raise InconsistentIdsError(f"run references unknown instance {iid!r}")
        aid = str(row_values[cols["algorithm"]])
        if aid not in algo_index:
            algo_index[aid] = len(algorithms)
            algorithms.append(aid)
        if (iid, aid) in cells:
            continue  # keep the first repetition
        status = RunStatus.from_text(str(row_values[cols["runstatus"]]))
        runtime = row_values[cols["runtime"]]
        if isinstance(runtime, str):
            raise MalformedValueError("runtime column must be numeric")
        if np.isnan(runtime):
            if status is RunStatus.OK:
                raise MalformedValueError(f"({iid!r}, {aid!r}): ok run with missing runtime")
            runtime = meta.cutoff_time  # censored; scored as 10x cutoff either way
        cells[(iid, aid)] = RunRecord(iid, aid, float(runtime), status)
    if not algorithms:
        raise MalformedValueError("run file has no data rows")

    grid = []
    for p in instances:
        prow = []
        for aid in algorithms:
            rec = cells.get((p.instance_id, aid))
            if rec is None:
                raise InconsistentIdsError(
                    f"no run for instance {p.instance_id!r} and algorithm {aid!r}"
                )
            prow.append(rec)
        grid.append(tuple(prow))

    return Scenario(meta, tuple(algorithms), tuple(instances), tuple(grid))


def _fmt(value: float) -> str:
    return "?" if np.isnan(value) else repr(float(value))


def save_scenario(scenario: Scenario, directory) -> None:
    """Write a scenario back out in canonical form.

    Floats are written with repr so save/load round-trips bit exactly.
    Feature names are synthesized (the in-memory model does not keep them).
    """
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    meta = scenario.meta
    (root / DESCRIPTION_FILE).write_text(
        f"scenario_id: {meta.scenario_id}\n"
        f"maximize: {'true' if meta.maximize else 'false'}\n"
        f"algorithm_cutoff_time: {_fmt(meta.cutoff_time)}\n"
        f"number_of_features: {meta.num_features}\n"
    )

    lines = ["@relation feature_values", "@attribute instance_id string"]
    lines += [f"@attribute f{j + 1:04d} numeric" for j in range(meta.num_features)]
    lines.append("@data")
    for p in scenario.instances:
        lines.append(",".join([p.instance_id] + [_fmt(v) for v in p.features]))
    (root / FEATURES_FILE).write_text("\n".join(lines) + "\n")

    lines = [
        "@relation algorithm_runs",
        "@attribute instance_id string",
        "@attribute algorithm string",
        "@attribute runtime numeric",
        "@attribute runstatus string",
        "@data",
    ]
    for prow in scenario.runs:
        for rec in prow:
            lines.append(f"{rec.instance_id},{rec.algorithm_id},{_fmt(rec.runtime)},{rec.status.value}")
    (root / RUNS_FILE).write_text("\n".join(lines) + "\n")


def build_scenario(scenario_id, cutoff_time, algorithms, instance_ids, features,
                   runtimes, statuses, maximize=False) -> Scenario:
    """Assemble a Scenario from arrays (used by generators and tests).

    features is (n, F); runtimes and statuses are (n, len(algorithms)),
    statuses holding RunStatus members or their string values.
    """
    features = np.asarray(features, dtype=np.float64)
    runtimes = np.asarray(runtimes, dtype=np.float64)
    meta = ScenarioMeta(scenario_id, float(cutoff_time), bool(maximize), features.shape[1])
    instances = tuple(
        ProblemInstance(str(iid), features[i]) for i, iid in enumerate(instance_ids)
    )
    grid = []
    for i, iid in enumerate(instance_ids):
        prow = []
        for a, aid in enumerate(algorithms):
            status = statuses[i][a]
            if not isinstance(status, RunStatus):
                status = RunStatus.from_text(str(status))
            prow.append(RunRecord(str(iid), str(aid), float(runtimes[i, a]), status))
        grid.append(tuple(prow))
    return Scenario(meta, tuple(str(a) for a in algorithms), instances, tuple(grid))


def restrict_algorithms(scenario: Scenario, algorithm_ids) -> Scenario:
    """A view-like copy keeping only the named algorithm columns, in order."""
    keep = [str(a) for a in algorithm_ids]
    index = {a: j for j, a in enumerate(scenario.algorithms)}
    for a in keep:
        if a not in index:
            raise InconsistentIdsError(f"algorithm {a!r} not in scenario")
    grid = tuple(
        tuple(prow[index[a]] for a in keep) for prow in scenario.runs
    )
    return Scenario(scenario.meta, tuple(keep), scenario.instances, grid)


def split_instances(scenario: Scenario, train_fraction: float, seed: int) -> SplitIndex:
    """Deterministic shuffled split; |train| = round(fraction * n), half up."""
    n = scenario.num_instances
    if n < 2:
        raise DegenerateSplitError(f"cannot split {n} instance(s)")
    if not (0.0 < train_fraction < 1.0):
        raise DegenerateSplitError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(np.floor(train_fraction * n + 0.5))
    if n_train == 0 or n_train == n:
        raise DegenerateSplitError(
            f"train_fraction {train_fraction} leaves an empty side for {n} instances"
        )
    perm = np.random.default_rng(seed).permutation(n)
    train = tuple(sorted(int(i) for i in perm[:n_train]))
    test = tuple(sorted(int(i) for i in perm[n_train:]))
    return SplitIndex(train, test, int(seed))


def fit_feature_stats(scenario: Scenario, train_indices) -> FeatureStats:
    """Per-feature mean and population std over train rows, ignoring NaN.

    An all-missing or constant column gets std 0; apply_normalize maps such
    columns to 0.
    """
    rows = scenario.feature_matrix()[np.asarray(train_indices, dtype=np.int64)]
    present = ~np.isnan(rows)
    counts = present.sum(axis=0)
    filled = np.where(present, rows, 0.0)
    mean = np.zeros(rows.shape[1])
    np.divide(filled.sum(axis=0), counts, out=mean, where=counts > 0)
    sq = np.where(present, (rows - mean) ** 2, 0.0)
    var = np.zeros(rows.shape[1])
    np.divide(sq.sum(axis=0), counts, out=var, where=counts > 0)
    return FeatureStats(mean=mean, std=np.sqrt(var))


def apply_normalize(features, stats: FeatureStats) -> np.ndarray:
    """Impute missing cells with the train mean, then z-score.

    Zero-variance columns (and imputed cells) come out as exactly 0. Accepts
    a single vector or a matrix of rows.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.shape[-1] != stats.mean.shape[0]:
        raise MalformedValueError(
            f"feature vector has {x.shape[-1]} entries, stats expect {stats.mean.shape[0]}"
        )
    x = np.where(np.isnan(x), stats.mean, x)
    safe = np.where(stats.std == 0.0, 1.0, stats.std)
    z = (x - stats.mean) / safe
    return np.where(stats.std == 0.0, 0.0, z)
