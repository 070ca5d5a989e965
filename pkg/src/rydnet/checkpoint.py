"""Versioned, self-contained model checkpoints.

A checkpoint carries everything inference needs (grid, timing, limits,
trained values, the fitted encoder) plus the training configuration, history
summary, dataset provenance and seeds for auditability. Serialization is
sorted-key JSON with two-space indent and a trailing newline; parsing and
re-serializing a checkpoint reproduces the file byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import FeatureScaler, PCAModel
from .engine import EvolutionConfig
from .grid import AtomGrid
from .pulse import ChannelLimits, PulseTiming
from .training import ModelParameters, TrainConfig, TrainHistory

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    params: ModelParameters
    pca: PCAModel | None = None
    scaler: FeatureScaler | None = None
    train_config: TrainConfig | None = None
    history: TrainHistory | None = None
    provenance: dict | None = None
    seeds: dict | None = None
    format_version: int = FORMAT_VERSION


def _listify(a: np.ndarray) -> list:
    return np.asarray(a, dtype=float).tolist()


def checkpoint_to_dict(ck: Checkpoint) -> dict:
    p = ck.params
    doc: dict = {
        "format_version": ck.format_version,
        "grid": {
            "config": p.grid.config,
            "n_atoms": p.grid.n_atoms,
            "spacing": float(p.grid.spacing),
            "positions": _listify(p.grid.positions),
        },
        "pulse_timing": {
            "n_intervals": p.timing.n_intervals,
            "hold": p.timing.hold,
            "transition": p.timing.transition,
            "initial_ramp": p.timing.initial_ramp,
        },
        "channel_limits": {
            "rabi": list(p.limits.rabi),
            "detuning": list(p.limits.detuning),
            "local_detuning": list(p.limits.local_detuning),
        },
        "model_parameters": {
            "pulse_thetas": _listify(p.pulse_thetas),
            "coupling_params": _listify(p.coupling_params),
        },
        "pca_model": None,
        "feature_scaler": None,
        "train_config": None,
        "train_history": None,
        "dataset_provenance": ck.provenance,
        "seeds": ck.seeds,
    }
    if ck.pca is not None:
        doc["pca_model"] = {
            "mean": _listify(ck.pca.mean),
            "components": _listify(ck.pca.components),
            "explained_variance_ratio": _listify(ck.pca.explained_variance_ratio),
        }
    if ck.scaler is not None:
        doc["feature_scaler"] = {
            "mins": _listify(ck.scaler.mins),
            "maxs": _listify(ck.scaler.maxs),
            "lows": _listify(ck.scaler.lows),
            "highs": _listify(ck.scaler.highs),
        }
    if ck.train_config is not None:
        tc = asdict(ck.train_config)
        tc["evolution"] = asdict(ck.train_config.evolution)
        tc["seed"] = _seed_json(ck.train_config.seed)
        doc["train_config"] = tc
    if ck.history is not None:
        # wall time is dropped so fixed-seed runs write identical bytes
        doc["train_history"] = {
            "losses": list(ck.history.losses),
            "accuracies": list(ck.history.accuracies),
            "final_loss": ck.history.final_loss,
            "final_accuracy": ck.history.final_accuracy,
            "final_f1": ck.history.final_f1,
        }
    return doc


def _seed_json(seed):
    return list(seed) if isinstance(seed, tuple) else seed


def checkpoint_from_dict(doc: dict) -> Checkpoint:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    g = doc["grid"]
    grid = AtomGrid(
        config=g["config"], n_atoms=g["n_atoms"], spacing=g["spacing"],
        positions=np.asarray(g["positions"], dtype=float),
    )
    t = doc["pulse_timing"]
    timing = PulseTiming(n_intervals=t["n_intervals"], hold=t["hold"],
                         transition=t["transition"], initial_ramp=t["initial_ramp"])
    lim = doc["channel_limits"]
    limits = ChannelLimits(rabi=tuple(lim["rabi"]), detuning=tuple(lim["detuning"]),
                           local_detuning=tuple(lim["local_detuning"]))
    mp = doc["model_parameters"]
    params = ModelParameters(
        grid=grid, timing=timing, limits=limits,
        pulse_thetas=np.asarray(mp["pulse_thetas"], dtype=float),
        coupling_params=np.asarray(mp["coupling_params"], dtype=float),
    )
    pca = scaler = train_config = history = None
    if doc.get("pca_model") is not None:
        pm = doc["pca_model"]
        pca = PCAModel(
            mean=np.asarray(pm["mean"], dtype=float),
            components=np.asarray(pm["components"], dtype=float),
            explained_variance_ratio=np.asarray(pm["explained_variance_ratio"], dtype=float),
        )
    if doc.get("feature_scaler") is not None:
        fs = doc["feature_scaler"]
        scaler = FeatureScaler(
            mins=np.asarray(fs["mins"], dtype=float),
            maxs=np.asarray(fs["maxs"], dtype=float),
            lows=np.asarray(fs["lows"], dtype=float),
            highs=np.asarray(fs["highs"], dtype=float),
        )
    if doc.get("train_config") is not None:
        tc = dict(doc["train_config"])
        ev = tc.pop("evolution", None)
        if isinstance(tc.get("seed"), list):
            tc["seed"] = tuple(tc["seed"])
        train_config = TrainConfig(
            evolution=EvolutionConfig(**ev) if ev else EvolutionConfig(), **tc,
        )
    if doc.get("train_history") is not None:
        th = doc["train_history"]
        history = TrainHistory(
            losses=tuple(th["losses"]), accuracies=tuple(th["accuracies"]),
            final_loss=th["final_loss"], final_accuracy=th["final_accuracy"],
            final_f1=th["final_f1"], wall_time_s=th.get("wall_time_s", 0.0),
        )
    return Checkpoint(
        params=params, pca=pca, scaler=scaler, train_config=train_config,
        history=history, provenance=doc.get("dataset_provenance"),
        seeds=doc.get("seeds"), format_version=version,
    )


def dumps_checkpoint(ck: Checkpoint) -> str:
    return json.dumps(checkpoint_to_dict(ck), indent=2, sort_keys=True) + "\n"


def save_checkpoint(path: str | Path, ck: Checkpoint) -> None:
    Path(path).write_text(dumps_checkpoint(ck))


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint file not found: {path}")
    return checkpoint_from_dict(json.loads(path.read_text()))
