"""Versioned JSON checkpoints for trained spoof models and fitted baselines.

Floats are stored through ``json`` (shortest round-trip repr), so loading a
checkpoint reproduces every parameter bit for bit.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import GmmModel, LinearOcSvmModel, LinearSvddModel, MahalanobisModel
from .errors import ParseError
from .nn import DenseLayer, Mlp
from .sampler import RunningMeanState
from .trainer import SpoofModel, TrainerConfig

FORMAT = "ocpad-checkpoint"
VERSION = 1


@dataclass
class Checkpoint:
    model: object
    kind: str
    running_mean: RunningMeanState | None = None
    extra: dict = field(default_factory=dict)


def _layers(mlp):
    return [
        {"activation": l.activation, "weights": l.weights.tolist(), "bias": l.bias.tolist()}
        for l in mlp.layers
    ]


def _mlp(payload):
    return Mlp(
        DenseLayer(np.array(l["weights"], dtype=np.float64).reshape(len(l["bias"]), -1),
                   np.array(l["bias"], dtype=np.float64), l["activation"])
        for l in payload
    )


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def to_payload(model, kind, running_mean=None, extra=None):
    payload = {"format": FORMAT, "version": VERSION, "kind": kind, "extra": extra or {}}
    if isinstance(model, SpoofModel):
        payload["config"] = model.config.to_dict()
        payload["extractor"] = _layers(model.extractor)
        payload["classifier"] = _layers(model.classifier)
        if running_mean is not None:
            payload["running_mean"] = {
                "alpha": running_mean.alpha,
                "initialized": running_mean.initialized,
                "mu_old": None if running_mean.mu_old is None else running_mean.mu_old.tolist(),
            }
    else:
        params = {k: _plain(v) for k, v in model.params().items()}
        if isinstance(model, GmmModel):
            params["log_likelihood_trace"] = list(model.log_likelihood_trace)
        payload["params"] = params
    return payload


def from_payload(payload) -> Checkpoint:
    if payload.get("format") != FORMAT:
        raise ParseError("not an ocpad checkpoint")
    if payload.get("version") != VERSION:
        raise ParseError(f"unsupported checkpoint version {payload.get('version')}")
    kind = payload["kind"]
    extra = payload.get("extra", {})
    if "extractor" in payload:
        cfg = TrainerConfig.from_dict(payload["config"])
        model = SpoofModel(_mlp(payload["extractor"]), _mlp(payload["classifier"]), cfg)
        rm = payload.get("running_mean")
        state = None
        if rm is not None:
            mu = None if rm["mu_old"] is None else np.array(rm["mu_old"], dtype=np.float64)
            state = RunningMeanState(rm["alpha"], mu, rm["initialized"])
        return Checkpoint(model, kind, state, extra)
    p = payload["params"]
    arr = lambda k: np.array(p[k], dtype=np.float64)  # noqa: E731
    if kind == "md":
        model = MahalanobisModel(arr("mean"), arr("covariance"))
    elif kind == "gmm":
        model = GmmModel(arr("weights"), arr("means"), arr("variances"), list(p.get("log_likelihood_trace", [])))
    elif kind == "ocsvm":
        model = LinearOcSvmModel(arr("w"), float(p["rho"]), float(p["nu"]), float(p["objective"]))
    elif kind == "svdd":
        model = LinearSvddModel(arr("center"), float(p["radius"]), float(p["nu"]), float(p["objective"]))
    else:
        raise ParseError(f"unknown checkpoint kind {kind!r}")
    return Checkpoint(model, kind, None, extra)


def write_atomic(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def save_checkpoint(model, path, kind=None, running_mean=None, extra=None):
    kind = kind or getattr(model, "kind", "proposed")
    payload = to_payload(model, kind, running_mean, extra)
    write_atomic(path, json.dumps(payload, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path) -> Checkpoint:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed checkpoint: {exc}") from None
    return from_payload(payload)
