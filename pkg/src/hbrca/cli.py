"""Batch entry points: generate | train | predict | evaluate | rca.

Every command takes a JSON run config plus an output directory and
writes a resolved-config echo (including the corpus hash) next to its
outputs, so a run can be reproduced from the output directory alone.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import corpus as corpus_mod
from . import metrics as metrics_mod
from .encoder import export_posterior_csv
from .errors import ConfigError, DataError, HbrcaError, NumericalError
from .model import predict_corpus
from .rca import accuracy_csv, run_rca
from .springs import ScmSpec, simulate
from .training import Checkpoint, SplitSpec, TrainConfig, train, write_metrics_csv

SCHEMA_VERSION = 1

_SECTION_KEYS = {
    "generate": {"scm", "t_total", "window", "seed", "normalize"},
    "train": {"corpus", "phase", "config", "split", "normalize"},
    "predict": {"checkpoint", "corpus", "normalize", "allow_hash_mismatch", "seed"},
    "evaluate": {"truth", "predicted"},
    "rca": {"checkpoint", "corpus", "top_k", "epsilon", "normalize",
            "allow_hash_mismatch"},
}


def load_run_config(path: str, command: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(doc) - {"schema_version"} - set(_SECTION_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level config keys {sorted(unknown)}")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"config schema_version must be {SCHEMA_VERSION}, "
            f"got {doc.get('schema_version')!r}"
        )
    if command not in doc:
        raise ConfigError(f"config has no '{command}' section")
    section = doc[command]
    if not isinstance(section, dict):
        raise ConfigError(f"'{command}' section must be an object")
    unknown = set(section) - _SECTION_KEYS[command]
    if unknown:
        raise ConfigError(f"unknown '{command}' keys {sorted(unknown)}")
    return section


def write_echo(out_dir: str, command: str, section: dict, extra: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION, "command": command, command: section}
    doc.update(extra)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _load_corpus(path: str, do_normalize: bool):
    if not os.path.exists(path):
        raise DataError(f"corpus file not found: {path}")
    corpus = corpus_mod.load(path)
    if do_normalize:
        corpus = corpus_mod.normalize(corpus)
    return corpus


def _load_checkpoint(path: str) -> Checkpoint:
    if not os.path.exists(path):
        raise DataError(f"checkpoint file not found: {path}")
    return Checkpoint.load(path)


def _check_hash(checkpoint: Checkpoint, digest: str, allow_mismatch: bool) -> None:
    if checkpoint.corpus_hash != digest and not allow_mismatch:
        raise DataError(
            "corpus hash does not match the checkpoint's training corpus "
            f"({digest[:12]}... vs {checkpoint.corpus_hash[:12]}...); "
            "pass --allow-hash-mismatch to proceed"
        )


# -- commands -------------------------------------------------------------------


def cmd_generate(section: dict, out_dir: str, seed_override) -> dict:
    if "scm" not in section or "t_total" not in section:
        raise ConfigError("generate section requires 'scm' and 't_total'")
    seed = int(section.get("seed", 0)) if seed_override is None else seed_override
    spec = ScmSpec.from_dict(section["scm"])
    long_corpus, _ = simulate(spec, int(section["t_total"]), seed)
    corpus = long_corpus
    if "window" in section and section["window"] is not None:
        corpus = corpus_mod.window_corpus(corpus, int(section["window"]))
    if section.get("normalize", True):
        corpus = corpus_mod.normalize(corpus)
    digest = corpus_mod.save(corpus, os.path.join(out_dir, "corpus.txt"))
    print(f"generated {corpus.n_samples} samples of "
          f"[{corpus.n_atoms} x {corpus.n_steps} x {corpus.n_dims}]")
    return {"corpus_hash": digest, "seed": seed}


def cmd_train(section: dict, out_dir: str, seed_override) -> dict:
    if "corpus" not in section:
        raise ConfigError("train section requires 'corpus'")
    corpus = _load_corpus(section["corpus"], section.get("normalize", True))
    phase = section.get("phase", "prediction")
    overrides = dict(section.get("config", {}))
    if seed_override is not None:
        overrides["seed"] = seed_override
    if phase == "prediction":
        config = TrainConfig.prediction(corpus.n_steps, **overrides)
    elif phase == "rca":
        config = TrainConfig.rca(**overrides)
    else:
        raise ConfigError(f"unknown training phase '{phase}'")
    split = SplitSpec(**section["split"]) if "split" in section else None
    checkpoint = train(config, corpus, split, log=print)
    checkpoint.save(os.path.join(out_dir, "checkpoint.json"))
    write_metrics_csv(checkpoint.history, os.path.join(out_dir, "metrics.csv"))
    print(f"best val MSE {checkpoint.best_val_mse:.6g} at epoch {checkpoint.epoch}")
    return {
        "corpus_hash": checkpoint.corpus_hash,
        "seed": config.seed,
        "resolved_train_config": config.to_dict(),
        "init_scheme": checkpoint.init_scheme,
    }


def cmd_predict(section: dict, out_dir: str, seed_override, allow_mismatch) -> dict:
    for key in ("checkpoint", "corpus"):
        if key not in section:
            raise ConfigError(f"predict section requires '{key}'")
    checkpoint = _load_checkpoint(section["checkpoint"])
    corpus = _load_corpus(section["corpus"], section.get("normalize", True))
    digest = corpus_mod.corpus_hash(corpus)
    allow = allow_mismatch or bool(section.get("allow_hash_mismatch", False))
    _check_hash(checkpoint, digest, allow)
    seed = int(section.get("seed", 0)) if seed_override is None else seed_override
    model = checkpoint.build_model()
    predicted = predict_corpus(model, corpus, checkpoint.config.tau, seed)
    corpus_mod.save(predicted, os.path.join(out_dir, "predicted.txt"))
    print(f"predicted {predicted.n_samples} windows")
    return {"corpus_hash": digest, "seed": seed}


def cmd_evaluate(section: dict, out_dir: str) -> dict:
    for key in ("truth", "predicted"):
        if key not in section:
            raise ConfigError(f"evaluate section requires '{key}'")
    truth = _load_corpus(section["truth"], do_normalize=False)
    pred = _load_corpus(section["predicted"], do_normalize=False)
    if truth.positions.shape != pred.positions.shape:
        raise DataError(
            f"truth {truth.positions.shape} and predicted "
            f"{pred.positions.shape} extents differ"
        )
    with open(os.path.join(out_dir, "displacement.csv"), "w", encoding="utf-8") as fh:
        fh.write(metrics_mod.displacement_csv(truth, pred))
    with open(os.path.join(out_dir, "rmsf_time.csv"), "w", encoding="utf-8") as fh:
        fh.write(metrics_mod.rmsf_time_csv(truth, pred))
    with open(os.path.join(out_dir, "rmsf_atom.csv"), "w", encoding="utf-8") as fh:
        fh.write(metrics_mod.rmsf_atom_csv(truth, pred))
    err_mse = metrics_mod.mse(pred.positions[:, :, 1:, :], truth.positions[:, :, 1:, :])
    err_mae = metrics_mod.mae(pred.positions[:, :, 1:, :], truth.positions[:, :, 1:, :])
    with open(os.path.join(out_dir, "errors.csv"), "w", encoding="utf-8") as fh:
        fh.write("mse,mae\n")
        fh.write(f"{corpus_mod.fmt_float(err_mse)},{corpus_mod.fmt_float(err_mae)}\n")
    print(f"mse {err_mse:.6g} mae {err_mae:.6g}")
    return {"corpus_hash": corpus_mod.corpus_hash(truth)}


def cmd_rca(section: dict, out_dir: str, allow_mismatch) -> dict:
    for key in ("checkpoint", "corpus"):
        if key not in section:
            raise ConfigError(f"rca section requires '{key}'")
    checkpoint = _load_checkpoint(section["checkpoint"])
    corpus = _load_corpus(section["corpus"], section.get("normalize", True))
    digest = corpus_mod.corpus_hash(corpus)
    allow = allow_mismatch or bool(section.get("allow_hash_mismatch", False))
    _check_hash(checkpoint, digest, allow)
    top_k = int(section.get("top_k", 10))
    eps = float(section.get("epsilon", 1e-8))
    model = checkpoint.build_model()
    report, posterior = run_rca(model, corpus, k=top_k, eps=eps)
    export_posterior_csv(posterior, os.path.join(out_dir, "posterior.csv"))
    report.to_csv(os.path.join(out_dir, "rca_report.csv"))
    rows = {
        metric: (None if value is None else (value, 0.0))
        for metric, value in report.accuracy.items()
    }
    accuracy_csv(rows, os.path.join(out_dir, "rca_accuracy.csv"))
    if report.no_change_detected:
        print("no mechanism change detected")
    top_names = [corpus.atom_names[i] for i in report.top_k]
    print(f"top-{top_k} root causes: {', '.join(top_names)}")
    return {
        "corpus_hash": digest,
        "no_change_detected": report.no_change_detected,
        "top_k": top_names,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hbrca",
        description="Latent causal graphs, trajectory prediction and "
        "root-cause ranking for multi-entity trajectories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SECTION_KEYS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="JSON run config")
        cmd.add_argument("--out", required=True, help="output directory")
        cmd.add_argument("--seed", type=int, default=None, help="override run seed")
        cmd.add_argument(
            "--threads", type=int, default=1,
            help="worker threads (the reference path is single-threaded)",
        )
        cmd.add_argument(
            "--allow-hash-mismatch", action="store_true",
            help="proceed when the corpus hash differs from the checkpoint's",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    if args.threads > 1:
        print(
            "note: only the single-threaded reference path is implemented; "
            "continuing with 1 thread",
            file=sys.stderr,
        )
    try:
        section = load_run_config(args.config, args.command)
        os.makedirs(args.out, exist_ok=True)
        if args.command == "generate":
            extra = cmd_generate(section, args.out, args.seed)
        elif args.command == "train":
            extra = cmd_train(section, args.out, args.seed)
        elif args.command == "predict":
            extra = cmd_predict(section, args.out, args.seed, args.allow_hash_mismatch)
        elif args.command == "evaluate":
            extra = cmd_evaluate(section, args.out)
        else:
            extra = cmd_rca(section, args.out, args.allow_hash_mismatch)
        if args.seed is not None:
            extra.setdefault("seed", args.seed)
        write_echo(args.out, args.command, section, extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except HbrcaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
