"""Command-line interface.

Verbs: train, eval, sweep, noise, export, synth. Configuration comes from a
YAML file plus flag overrides with precedence CLI flag > config file >
built-in default. Dataset paths resolve against the RYDNET_DATA_DIR
environment variable when they are relative and not found locally. All
outputs are plain JSON/CSV; fixed seeds give bit-identical files.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (EncodedDataset, RawDataset, encode, fit_encoding, load_csv,
                   load_idx, make_blobs, train_test_split)
from .engine import EvolutionConfig
from .export import export_program
from .grid import GRID_CONFIGS, build_grid
from .noise import sigma_sweep
from .pulse import PulseTiming
from .simulator import NoiseSpec, sample_shots
from .training import (GRADIENT_MODES, TrainConfig, evaluate_metrics,
                       init_params, predict_batch, realize, states_batch,
                       train)

DATA_DIR_ENV = "RYDNET_DATA_DIR"

DEFAULTS: dict = {
    "seed": 0,
    "grid": {"config": "square", "atoms": 4, "spacing": 12.0},
    "pulse": {"intervals": 3},
    "dataset": {
        "kind": "csv",
        "path": None,
        "label_column": "label",
        "images": None,
        "labels": None,
        "class_a": 0,
        "class_b": 1,
        "sample_cap": None,
        "split_fraction": 0.8,
        "samples": 200,
        "features": 5,
        "separation": 8.0,
        "sigma": 1.0,
    },
    "training": {
        "iterations": 75,
        "learning_rate": 0.01,
        "gradient_mode": "finite_difference",
        "fd_step": 1e-3,
        "n_time_samples": 20,
    },
    "noise": {
        "position_sigma": 0.1,
        "rabi_relative_sigma": 0.01,
        "detuning_sigma": 0.5,
        "members": 20,
        "multipliers": [0.0, 0.5, 1.0, 2.0, 4.0],
    },
    "evolution": {"max_step_phase": 0.05, "dt_max": 0.001},
}


# -- configuration -------------------------------------------------------------

def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path: str | None, args: argparse.Namespace) -> dict:
    """Defaults, then the YAML file, then any flags the user actually passed."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        loaded = yaml.safe_load(p.read_text()) or {}
        if not isinstance(loaded, dict):
            raise ValueError(f"config file {p} must hold a mapping")
        cfg = _deep_merge(cfg, loaded)
    flag_map = {
        "seed": ("seed",),
        "grid": ("grid", "config"),
        "spacing": ("grid", "spacing"),
        "atoms": ("grid", "atoms"),
        "intervals": ("pulse", "intervals"),
        "gradient_mode": ("training", "gradient_mode"),
    }
    for flag, keys in flag_map.items():
        val = getattr(args, flag, None)
        if val is None:
            continue
        node = cfg
        for key in keys[:-1]:
            node = node[key]
        node[keys[-1]] = val
    return cfg


def _resolve_path(path: str) -> Path:
    p = Path(path)
    if p.is_absolute() or p.exists():
        return p
    root = os.environ.get(DATA_DIR_ENV)
    if root and (Path(root) / p).exists():
        return Path(root) / p
    return p


def _build_raw(cfg: dict) -> tuple[RawDataset, dict]:
    """Dataset from config plus a provenance record."""
    ds = cfg["dataset"]
    kind = ds["kind"]
    if kind == "csv":
        if not ds["path"]:
            raise ValueError("dataset.path is required for kind 'csv'")
        path = _resolve_path(ds["path"])
        raw = load_csv(path, ds["label_column"])
        prov = {"kind": "csv", "path": str(path)}
    elif kind == "idx":
        if not ds["images"] or not ds["labels"]:
            raise ValueError("dataset.images and dataset.labels are required for kind 'idx'")
        images, labels = _resolve_path(ds["images"]), _resolve_path(ds["labels"])
        raw = load_idx(images, labels, ds["class_a"], ds["class_b"],
                       sample_cap=ds["sample_cap"], seed=cfg["seed"])
        prov = {"kind": "idx", "images": str(images), "labels": str(labels),
                "class_a": ds["class_a"], "class_b": ds["class_b"],
                "sample_cap": ds["sample_cap"]}
    elif kind == "synthetic":
        raw = make_blobs(ds["samples"], ds["features"], ds["separation"],
                         ds["sigma"], seed=cfg["seed"])
        prov = {"kind": "synthetic", "samples": ds["samples"],
                "features": ds["features"], "separation": ds["separation"],
                "sigma": ds["sigma"]}
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    prov["n_samples"] = len(raw.labels)
    prov["split_fraction"] = ds["split_fraction"]
    return raw, prov


def _train_config(cfg: dict) -> TrainConfig:
    t = cfg["training"]
    return TrainConfig(
        iterations=t["iterations"], learning_rate=t["learning_rate"],
        gradient_mode=t["gradient_mode"], fd_step=t["fd_step"],
        n_time_samples=t["n_time_samples"], seed=cfg["seed"],
        evolution=EvolutionConfig(**cfg["evolution"]),
    )


def run_pipeline(cfg: dict) -> dict:
    """Data, encoding, training and held-out evaluation for one config."""
    raw, prov = _build_raw(cfg)
    seed = cfg["seed"]
    train_raw, test_raw = train_test_split(raw, cfg["dataset"]["split_fraction"], seed)
    grid = build_grid(cfg["grid"]["config"], cfg["grid"]["atoms"], cfg["grid"]["spacing"])
    timing = PulseTiming(n_intervals=cfg["pulse"]["intervals"])
    pca, scaler = fit_encoding(train_raw, grid.n_atoms)
    enc_train = encode(pca, scaler, train_raw)
    enc_test = encode(pca, scaler, test_raw)
    tconf = _train_config(cfg)
    params, history = train(init_params(grid, timing), enc_train, tconf)
    test_soft = predict_batch(params, enc_test, tconf.evolution)
    test_metrics = evaluate_metrics(enc_test.labels, test_soft)
    ck = Checkpoint(
        params=params, pca=pca, scaler=scaler, train_config=tconf,
        history=history, provenance=prov,
        seeds={"split": seed, "train": seed},
    )
    return {
        "checkpoint": ck, "history": history, "test_metrics": test_metrics,
        "enc_train": enc_train, "enc_test": enc_test,
    }


# -- commands -------------------------------------------------------------------

def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args)
    out = Path(args.out or "run")
    out.mkdir(parents=True, exist_ok=True)
    result = run_pipeline(cfg)
    save_checkpoint(out / "checkpoint.json", result["checkpoint"])
    history = result["history"]
    with open(out / "history.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss", "accuracy"])
        for i, (loss, acc) in enumerate(zip(history.losses, history.accuracies)):
            w.writerow([i, repr(loss), repr(acc)])
    tm = result["test_metrics"]
    print(f"train accuracy {history.final_accuracy:.4f} f1 {history.final_f1:.4f} "
          f"loss {history.final_loss:.4f}")
    print(f"test accuracy {tm.accuracy:.4f} f1 {tm.f1:.4f} (n={tm.n_samples})")
    print(f"wrote {out / 'checkpoint.json'} and {out / 'history.csv'}")
    return 0


def _encode_for_checkpoint(ck: Checkpoint, raw: RawDataset) -> EncodedDataset:
    if ck.pca is None or ck.scaler is None:
        raise ValueError("checkpoint carries no fitted encoder")
    if raw.features.shape[1] != ck.pca.mean.shape[0]:
        raise ValueError(
            f"feature dimension mismatch: data has {raw.features.shape[1]} "
            f"columns, checkpoint encoder expects {ck.pca.mean.shape[0]}"
        )
    return encode(ck.pca, ck.scaler, raw)


def _shot_soft_labels(ck: Checkpoint, enc: EncodedDataset, shots: int,
                      seed: int) -> np.ndarray:
    evo = ck.train_config.evolution if ck.train_config else EvolutionConfig()
    states = states_batch(ck.params, enc, evo)
    n = ck.params.n_atoms
    soft = np.empty(len(enc))
    for i, state in enumerate(states):
        counts = sample_shots(state, shots, seed=(seed, i))
        ones = sum(key.count("1") * c for key, c in counts.items())
        soft[i] = ones / (shots * n)
    return soft


def cmd_eval(args: argparse.Namespace) -> int:
    ck = load_checkpoint(args.checkpoint)
    raw = load_csv(_resolve_path(args.data), args.label_column)
    enc = _encode_for_checkpoint(ck, raw)
    evo = ck.train_config.evolution if ck.train_config else EvolutionConfig()
    if args.shots:
        soft = _shot_soft_labels(ck, enc, args.shots, args.seed or 0)
    else:
        soft = predict_batch(ck.params, enc, evo)
    metrics = evaluate_metrics(enc.labels, soft)
    doc = {
        "accuracy": metrics.accuracy,
        "f1": metrics.f1,
        "n_samples": metrics.n_samples,
        "shots": args.shots or 0,
        "soft_labels": soft.tolist(),
        "hard_labels": [int(s >= 0.5) for s in soft],
        "labels": enc.labels.tolist(),
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(f"accuracy {metrics.accuracy:.4f} f1 {metrics.f1:.4f} (n={metrics.n_samples})")
    return 0


_SWEEP_AXES = {
    "spacing": (("grid", "spacing"), float),
    "grid": (("grid", "config"), str),
    "intervals": (("pulse", "intervals"), int),
}


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args)
    keys, cast = _SWEEP_AXES[args.axis]
    try:
        values = [cast(v) for v in args.values.split(",") if v != ""]
    except ValueError as exc:
        raise ValueError(f"bad value for axis {args.axis!r}: {exc}") from exc
    if not values:
        raise ValueError("no sweep values given")
    if args.axis == "grid":
        bad = [v for v in values if v not in GRID_CONFIGS]
        if bad:
            raise ValueError(f"unknown grid configs {bad}; choose from {GRID_CONFIGS}")
    rows = []
    for value in values:
        run_cfg = copy.deepcopy(cfg)
        node = run_cfg
        for key in keys[:-1]:
            node = node[key]
        node[keys[-1]] = value
        result = run_pipeline(run_cfg)
        ck, tm = result["checkpoint"], result["test_metrics"]
        rows.append({
            "axis": args.axis, "value": value,
            "trainable_parameters": ck.params.trainable_count,
            "train_accuracy": ck.history.final_accuracy,
            "train_f1": ck.history.final_f1,
            "test_accuracy": tm.accuracy,
            "test_f1": tm.f1,
        })
        print(f"{args.axis}={value}: params={rows[-1]['trainable_parameters']} "
              f"train_acc={rows[-1]['train_accuracy']:.4f} "
              f"test_acc={rows[-1]['test_accuracy']:.4f} test_f1={rows[-1]['test_f1']:.4f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            w.writeheader()
            for row in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v
                            for k, v in row.items()})
        print(f"wrote {args.out}")
    return 0


def cmd_noise(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args)
    ck = load_checkpoint(args.checkpoint)
    raw = load_csv(_resolve_path(args.data), args.label_column)
    enc = _encode_for_checkpoint(ck, raw)
    ncfg = cfg["noise"]
    noise = NoiseSpec(position_sigma=ncfg["position_sigma"],
                      rabi_relative_sigma=ncfg["rabi_relative_sigma"],
                      detuning_sigma=ncfg["detuning_sigma"])
    members = args.members or ncfg["members"]
    evo = ck.train_config.evolution if ck.train_config else EvolutionConfig()
    sweep = sigma_sweep(ck.params, enc, noise,
                        multipliers=tuple(ncfg["multipliers"]),
                        n_ensemble=members, seed=cfg["seed"], config=evo)
    doc = {
        "multipliers": list(sweep.multipliers),
        "spearman": sweep.spearman,
        "p_value": sweep.p_value,
        "n_members": members,
        "rows": [
            {
                "multiplier": mult,
                "flip_rate": r.flip_rate,
                "member_flip_rate": r.member_flip_rate,
                "mean_abs_shift": r.mean_abs_shift,
                "accuracy_delta": r.accuracy_delta,
                "ideal_soft": r.ideal_soft.tolist(),
                "noisy_mean": r.noisy_mean.tolist(),
                "noisy_std": r.noisy_std.tolist(),
                "flipped": r.flipped.astype(int).tolist(),
                "labels": r.labels.tolist(),
            }
            for mult, r in zip(sweep.multipliers, sweep.reports)
        ],
    }
    out = Path(args.out or "noise_report.json")
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    curve = out.with_suffix(".csv")
    if curve == out:  # --out itself ends in .csv; keep the table from clobbering it
        curve = out.with_suffix(".curve.csv")
    with open(curve, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["multiplier", "flip_rate", "member_flip_rate",
                    "mean_abs_shift", "accuracy_delta"])
        for mult, r in zip(sweep.multipliers, sweep.reports):
            w.writerow([repr(mult), repr(r.flip_rate), repr(r.member_flip_rate),
                        repr(r.mean_abs_shift), repr(r.accuracy_delta)])
    print(f"flip rates {list(sweep.flip_rates)}")
    print(f"mean abs shifts {list(sweep.mean_abs_shifts)}")
    print(f"spearman {sweep.spearman:.3f} (p={sweep.p_value:.4f})")
    print(f"wrote {out} and {curve}")
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    ck = load_checkpoint(args.checkpoint)
    raw = load_csv(_resolve_path(args.data), args.label_column)
    enc = _encode_for_checkpoint(ck, raw)
    idx = args.sample_index
    if not 0 <= idx < len(enc):
        raise ValueError(f"sample index {idx} out of range for {len(enc)} samples")
    spec = realize(ck.params, enc.pulse[idx], enc.couplings[idx])
    out = Path(args.out or "program.json")
    export_program(spec, out)
    print(f"wrote {out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    raw = make_blobs(args.samples, args.features, args.separation, args.sigma,
                     seed=args.seed or 0)
    out = Path(args.out or "blobs.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{j}" for j in range(raw.features.shape[1])] + ["label"])
        for row, label in zip(raw.features, raw.labels):
            w.writerow([repr(float(x)) for x in row] + [int(label)])
    print(f"wrote {out} ({len(raw.labels)} samples, "
          f"{raw.features.shape[1]} features)")
    return 0


# -- argument parsing ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rydnet",
        description="Analog Rydberg-array binary classifiers: simulate, train, export.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--out", help="output file or directory")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--grid", choices=GRID_CONFIGS, help="grid layout")
    model.add_argument("--spacing", type=float, help="lattice spacing (um)")
    model.add_argument("--atoms", type=int, help="atom count (even)")
    model.add_argument("--intervals", type=int, help="pulse intervals M")
    model.add_argument("--gradient-mode", dest="gradient_mode",
                       choices=GRADIENT_MODES, help="training gradient route")

    p = sub.add_parser("train", parents=[common, model],
                       help="fit a classifier, write checkpoint + history")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common],
                       help="evaluate a checkpoint on a CSV dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="CSV dataset file")
    p.add_argument("--label-column", default="label")
    p.add_argument("--shots", type=int, default=0,
                   help="estimate soft labels from this many measurement shots")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common, model],
                       help="train across an axis, emit a metrics table")
    p.add_argument("--axis", required=True, choices=sorted(_SWEEP_AXES))
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("noise", parents=[common],
                       help="robustness sweep of a checkpoint under noise")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="CSV dataset file")
    p.add_argument("--label-column", default="label")
    p.add_argument("--members", type=int, help="ensemble size per sample")
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("export", parents=[common],
                       help="emit one sample's validated analog program")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="CSV dataset file")
    p.add_argument("--label-column", default="label")
    p.add_argument("--sample-index", type=int, default=0)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("synth", parents=[common],
                       help="write a synthetic two-blob CSV dataset")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--features", type=int, default=5)
    p.add_argument("--separation", type=float, default=8.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
