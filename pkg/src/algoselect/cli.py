"""Command line surface.

Subcommands cover the full workflow: ``ingest`` canonicalizes a scenario
directory, ``embed-synth`` makes a deterministic token catalog,
``train`` / ``evaluate`` / ``ablate`` / ``bound`` run the model. Every
command writes fixed-named artifacts plus a ``manifest.json`` with sha256
digests of inputs and outputs into its ``--out`` directory; manifests carry
no timestamps, so reruns with equal inputs are byte-identical (only the
training log, which records wall times, is exempt and left out of the
manifest).

Exit codes: 0 success, 2 input parsing (including bad usage), 3
configuration, 4 training, 5 evaluation, 6 bound computation.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import complexity as cx
from . import evaluation as ev
from . import model as md
from . import training as tr
from .checkpoint import TrainedSelector, load_checkpoint, save_checkpoint
from .embeddings import load_catalog, save_catalog, synth_catalog
from .errors import AlgoSelectError, ConfigError
from .scenario import (
    fit_feature_stats,
    load_scenario,
    save_scenario,
    split_instances,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_CONFIG = 3
EXIT_TRAIN = 4
EXIT_EVAL = 5
EXIT_BOUND = 6

DEFAULT_SPLIT = {"train_fraction": 0.7, "seed": 0}


class _phase:
    """Maps failures inside one workflow step to that step's exit code."""

    def __init__(self, code: int):
        self.code = code

    def __enter__(self):
        return self

    def __exit__(self, etype, exc, tb):
        if exc is None or not isinstance(
            exc, (AlgoSelectError, OSError, json.JSONDecodeError, ValueError)
        ):
            return False
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(self.code) from exc


def _sha256_path(path: Path) -> str:
    """Digest of a file, or of a directory's files in sorted relative order."""
    h = hashlib.sha256()
    if path.is_dir():
        for sub in sorted(p for p in path.rglob("*") if p.is_file()):
            h.update(sub.relative_to(path).as_posix().encode())
            h.update(b"\0")
            h.update(sub.read_bytes())
            h.update(b"\0")
    else:
        h.update(path.read_bytes())
    return "sha256:" + h.hexdigest()


def _write_manifest(out_dir: Path, command: str, inputs: dict, outputs: list,
                    settings: dict | None = None) -> None:
    obj = {
        "command": command,
        "inputs": {name: _sha256_path(Path(p)) for name, p in inputs.items() if p},
        "outputs": {name: _sha256_path(out_dir / name) for name in outputs},
    }
    if settings is not None:
        obj["settings"] = settings
    (out_dir / "manifest.json").write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    obj = json.loads(Path(path).read_text())
    if not isinstance(obj, dict):
        raise json.JSONDecodeError("config root must be an object", "", 0)
    return obj


def _apply_overrides(cfg: dict, sets) -> dict:
    for item in sets or []:
        key, sep, raw = item.partition("=")
        section, dot, field = key.partition(".")
        if not sep or not dot or not section or not field:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw  # bare strings may skip the quotes
        cfg.setdefault(section, {})[field] = value
    return cfg


_TUPLE_FIELDS = ("problem_hidden", "algorithm_hidden", "scoring_hidden")


def _build_settings(cfg: dict, embedding_dim: int | None):
    """Resolve the three config sections into validated objects.

    model.embedding_dim normally comes from the catalog; a value in the
    config must agree with it.
    """
    unknown = set(cfg) - {"model", "train", "split"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    model_kw = dict(cfg.get("model", {}))
    for f in _TUPLE_FIELDS:
        if f in model_kw and isinstance(model_kw[f], list):
            model_kw[f] = tuple(model_kw[f])
    if embedding_dim is not None:
        stated = model_kw.setdefault("embedding_dim", embedding_dim)
        if stated != embedding_dim:
            raise ConfigError(
                f"config embedding_dim {stated} does not match catalog width {embedding_dim}"
            )
    elif "embedding_dim" not in model_kw:
        model_kw["embedding_dim"] = 1  # no catalog: width is irrelevant
    try:
        model_config = md.ModelConfig(**model_kw)
        train_config = tr.TrainConfig(**cfg.get("train", {}))
    except TypeError as e:
        raise ConfigError(str(e)) from None
    split_cfg = {**DEFAULT_SPLIT, **cfg.get("split", {})}
    extra = set(split_cfg) - set(DEFAULT_SPLIT)
    if extra:
        raise ConfigError(f"unknown split settings: {sorted(extra)}")
    return model_config, train_config, split_cfg


def _settings_obj(model_config, train_config, split_cfg) -> dict:
    mc = {k: list(v) if isinstance(v, tuple) else v
          for k, v in asdict(model_config).items()}
    return {"model": mc, "train": asdict(train_config), "split": split_cfg}


def _resolve_split(scenario, split_cfg):
    return split_instances(scenario, split_cfg["train_fraction"], split_cfg["seed"])


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_settings(args, embedding_dim):
    with _phase(EXIT_PARSE):
        cfg = _load_config_file(args.config)
    with _phase(EXIT_CONFIG):
        cfg = _apply_overrides(cfg, args.set)
        return _build_settings(cfg, embedding_dim)


def _load_split_settings(args) -> dict:
    """Only the split section matters to commands that do not train, so the
    model and train sections of a shared config file are left unchecked."""
    with _phase(EXIT_PARSE):
        cfg = _load_config_file(args.config)
    with _phase(EXIT_CONFIG):
        cfg = _apply_overrides(cfg, args.set)
        split_cfg = {**DEFAULT_SPLIT, **cfg.get("split", {})}
        extra = set(split_cfg) - set(DEFAULT_SPLIT)
        if extra:
            raise ConfigError(f"unknown split settings: {sorted(extra)}")
        return split_cfg


def cmd_ingest(args) -> int:
    out = _out_dir(args)
    with _phase(EXIT_PARSE):
        scenario = load_scenario(args.scenario)
    save_scenario(scenario, out)
    _write_manifest(out, "ingest", {"scenario": args.scenario},
                    ["description.txt", "feature_values.arff", "algorithm_runs.arff"])
    print(f"ingested {scenario.meta.scenario_id}: "
          f"{scenario.num_instances} instances, {scenario.num_algorithms} algorithms")
    return EXIT_OK


def cmd_embed_synth(args) -> int:
    out = _out_dir(args)
    with _phase(EXIT_PARSE):
        scenario = load_scenario(args.scenario)
    with _phase(EXIT_CONFIG):
        catalog = synth_catalog(scenario.algorithms, dim=args.dim,
                                length=args.length, seed=args.seed)
    save_catalog(catalog, out / "catalog.jsonl")
    _write_manifest(out, "embed-synth", {"scenario": args.scenario}, ["catalog.jsonl"])
    print(f"wrote catalog.jsonl: {len(scenario.algorithms)} algorithms, dim {args.dim}")
    return EXIT_OK


def _load_world(args, need_catalog: bool):
    with _phase(EXIT_PARSE):
        scenario = load_scenario(args.scenario)
        catalog = None
        if getattr(args, "catalog", None):
            catalog = load_catalog(args.catalog)
        elif need_catalog:
            raise ConfigError("this command needs --catalog")
    return scenario, catalog


def cmd_train(args) -> int:
    out = _out_dir(args)
    scenario, catalog = _load_world(args, need_catalog=False)
    model_config, train_config, split_cfg = _load_settings(
        args, catalog.dim if catalog else None)
    with _phase(EXIT_CONFIG):
        if model_config.use_algorithm_features and catalog is None:
            raise ConfigError("this variant trains on algorithm embeddings; "
                              "pass --catalog")
        split = _resolve_split(scenario, split_cfg)
    log: list = []
    outputs = ["checkpoint.json"]
    with _phase(EXIT_TRAIN):
        if model_config.use_algorithm_features and model_config.use_feature_selection:
            stage1 = tr.train_stage1(scenario, catalog, split, model_config,
                                     train_config, log.append)
            stats = fit_feature_stats(scenario, split.train_indices)
            save_checkpoint(
                TrainedSelector(stage1.params, tuple(scenario.algorithms), stats),
                out / "checkpoint_stage1.json")
            outputs.append("checkpoint_stage1.json")
            stage2 = tr.extract_and_retrain(scenario, catalog, split, stage1,
                                            model_config, train_config, log.append)
            trained = TrainedSelector(stage2.params, tuple(scenario.algorithms), stats)
        else:
            trained = tr.train_selector(scenario, catalog, split, model_config,
                                        train_config, log.append)
    save_checkpoint(trained, out / "checkpoint.json")
    with (out / "train_log.jsonl").open("w") as fh:
        for entry in log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    _write_manifest(out, "train",
                    {"scenario": args.scenario, "catalog": args.catalog,
                     "config": args.config},
                    outputs, _settings_obj(model_config, train_config, split_cfg))
    final = log[-1]["mean_loss"] if log else float("nan")
    print(f"trained {scenario.meta.scenario_id}: final mean loss {final:.6f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    scenario, catalog = _load_world(args, need_catalog=False)
    with _phase(EXIT_PARSE):
        trained = load_checkpoint(args.checkpoint)
    split_cfg = _load_split_settings(args)
    with _phase(EXIT_CONFIG):
        split = _resolve_split(scenario, split_cfg)
    with _phase(EXIT_EVAL):
        report = ev.evaluate(trained, scenario, catalog, split)
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "report.txt").write_text(ev.render_report_table({"selector": report}))
    _write_manifest(out, "evaluate",
                    {"scenario": args.scenario, "catalog": args.catalog,
                     "checkpoint": args.checkpoint, "config": args.config},
                    ["report.json", "report.txt"], {"split": split_cfg})
    gap = "n/a" if report.gap_closed is None else f"{report.gap_closed:.4f}"
    print(f"evaluated {scenario.meta.scenario_id}: selector par10 "
          f"{report.selector_par10:.4f}, gap closed {gap}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    out = _out_dir(args)
    scenario, catalog = _load_world(args, need_catalog=True)
    model_config, train_config, split_cfg = _load_settings(args, catalog.dim)
    with _phase(EXIT_CONFIG):
        split = _resolve_split(scenario, split_cfg)
    with _phase(EXIT_TRAIN):
        reports = ev.run_ablations(scenario, catalog, split, model_config, train_config)
    obj = {name: rep.to_obj() for name, rep in reports.items()}
    (out / "ablations.json").write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")
    (out / "ablations.txt").write_text(ev.render_report_table(reports))
    _write_manifest(out, "ablate",
                    {"scenario": args.scenario, "catalog": args.catalog,
                     "config": args.config},
                    ["ablations.json", "ablations.txt"],
                    _settings_obj(model_config, train_config, split_cfg))
    print(ev.render_report_table(reports), end="")
    return EXIT_OK


def cmd_bound(args) -> int:
    out = _out_dir(args)
    scenario, catalog = _load_world(args, need_catalog=True)
    with _phase(EXIT_PARSE):
        trained = load_checkpoint(args.checkpoint)
    split_cfg = _load_split_settings(args)
    with _phase(EXIT_CONFIG):
        split = _resolve_split(scenario, split_cfg)
    with _phase(EXIT_BOUND):
        report = cx.bound_from_checkpoint(trained, scenario, catalog, split)
    (out / "bound.json").write_text(
        json.dumps(report.to_obj(), sort_keys=True, indent=2) + "\n")
    _write_manifest(out, "bound",
                    {"scenario": args.scenario, "catalog": args.catalog,
                     "checkpoint": args.checkpoint, "config": args.config},
                    ["bound.json"], {"split": split_cfg})
    flag = "" if report.hypotheses_satisfied else " (outside hypotheses)"
    print(f"bound {report.bound:.6f}{flag}")
    return EXIT_OK


def _add_common(p, *, catalog=False, checkpoint=False, config=False):
    p.add_argument("--scenario", required=True, help="scenario directory")
    if catalog:
        p.add_argument("--catalog", help="token catalog (JSONL)")
    if checkpoint:
        p.add_argument("--checkpoint", required=True, help="trained model JSON")
    if config:
        p.add_argument("--config", help="JSON settings file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override one setting (repeatable)")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="algoselect",
        description="Per-instance algorithm selection with a two-tower scoring model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and canonicalize a scenario directory")
    _add_common(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("embed-synth", help="write a deterministic synthetic token catalog")
    _add_common(p)
    p.add_argument("--dim", type=int, default=32, help="token width")
    p.add_argument("--length", type=int, default=4, help="tokens per algorithm")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_embed_synth)

    p = sub.add_parser("train", help="train a selector and write its checkpoint")
    _add_common(p, catalog=True, config=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint against VBS and SBS")
    _add_common(p, catalog=True, checkpoint=True, config=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ablate", help="train and compare the full model and its ablations")
    _add_common(p, catalog=True, config=True)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("bound", help="capacity bound of a trained checkpoint")
    _add_common(p, catalog=True, checkpoint=True, config=True)
    p.set_defaults(fn=cmd_bound)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
