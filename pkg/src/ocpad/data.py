"""Labeled feature datasets: synthetic generation, protocol splits, file I/O.

Dataset file format (text, comma separated)::

    dim=<d>
    # <key>=<value>            optional metadata lines
    <identity>,<label>,<v1>,...,<vd>

``label`` is ``bonafide`` or ``attack``; values are written with ``repr`` so
they round-trip exactly.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, ParseError, ShapeError, SplitError

BONAFIDE = "bonafide"
ATTACK = "attack"
LABELS = (BONAFIDE, ATTACK)
OFFSET_MODES = ("shared_direction", "per_identity_direction")
PROTOCOLS = ("p1", "p2")


@dataclass(frozen=True)
class LabeledSample:
    features: np.ndarray
    identity: str
    label: str


@dataclass
class Dataset:
    """Columnar store of labeled samples sharing one feature width."""

    features: np.ndarray
    identities: np.ndarray
    labels: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.identities = np.asarray(self.identities, dtype=object)
        self.labels = np.asarray(self.labels, dtype=object)
        self.metadata = {str(k): str(v) for k, v in self.metadata.items()}
        n = self.features.shape[0]
        if self.features.ndim != 2 or n == 0:
            raise ShapeError("a dataset needs a non-empty (n, d) feature matrix")
        if self.identities.shape != (n,) or self.labels.shape != (n,):
            raise ShapeError("identities and labels must have one entry per sample")
        if not np.all(np.isfinite(self.features)):
            raise ContractError("dataset features must be finite")
        bad = set(self.labels) - set(LABELS)
        if bad:
            raise ContractError(f"unknown labels {sorted(bad)}")
        for ident in set(self.identities):
            if not isinstance(ident, str) or not ident or "," in ident or ident != ident.strip():
                raise ContractError(f"invalid identity {ident!r}")

    def __len__(self):
        return self.features.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and list(self.identities) == list(other.identities)
            and list(self.labels) == list(other.labels)
            and self.metadata == other.metadata
        )

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def is_attack(self) -> np.ndarray:
        return self.labels == ATTACK

    def identity_set(self):
        return set(self.identities)

    def subset(self, index, metadata=None):
        index = np.asarray(index)
        return Dataset(
            self.features[index],
            self.identities[index],
            self.labels[index],
            dict(self.metadata if metadata is None else metadata),
        )

    def samples(self):
        for x, i, l in zip(self.features, self.identities, self.labels):
            yield LabeledSample(x, i, l)


@dataclass(frozen=True)
class SyntheticSpec:
    """Identity-clustered features with a small attack offset.

    Identity centers and within-identity variation live in a random
    ``manifold_dim``-dimensional subspace: centers are drawn with
    ``global_spread`` and samples scatter around them with
    ``identity_spread`` along that subspace, plus isotropic
    ``off_manifold_spread`` noise in every dimension. ``manifold_dim=None``
    uses the whole space (isotropic clusters), as does any value >= ``dim``. Attack samples are the same
    kind of draw shifted by ``attack_offset`` along a unit direction, shared
    by all identities or drawn per identity.
    """

    num_identities: int = 12
    bonafide_per_identity: int = 40
    attack_per_identity: int = 40
    dim: int = 32
    identity_spread: float = 1.0
    attack_offset: float = 1.5
    offset_mode: str = "shared_direction"
    global_spread: float = 6.0
    manifold_dim: int | None = 4
    off_manifold_spread: float = 0.1
    seed: int = 0

    def validate(self):
        if self.attack_offset <= 0:
            raise ConfigError(f"attack_offset must be > 0, got {self.attack_offset}")
        for name in ("num_identities", "bonafide_per_identity", "attack_per_identity", "dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if min(self.identity_spread, self.global_spread, self.off_manifold_spread) < 0:
            raise ConfigError("spreads must be non-negative")
        if self.manifold_dim is not None and self.manifold_dim < 1:
            raise ConfigError("manifold_dim must be >= 1 or None")
        if self.offset_mode not in OFFSET_MODES:
            raise ConfigError(f"offset_mode must be one of {OFFSET_MODES}")


def _unit_rows(rng, n, d):
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _layout(spec, rng):
    d = spec.dim
    if spec.manifold_dim is None:
        basis = np.eye(d)
    else:
        basis, _ = np.linalg.qr(rng.standard_normal((d, min(spec.manifold_dim, d))))
    centers = rng.normal(0.0, spec.global_spread, size=(spec.num_identities, basis.shape[1])) @ basis.T
    if spec.offset_mode == "shared_direction":
        directions = np.repeat(_unit_rows(rng, 1, d), spec.num_identities, axis=0)
    else:
        directions = _unit_rows(rng, spec.num_identities, d)
    return basis, centers, directions


def attack_directions(spec: SyntheticSpec) -> np.ndarray:
    """Unit attack-offset direction of each identity, as drawn by ``generate_synthetic``."""
    spec.validate()
    return _layout(spec, np.random.default_rng(spec.seed))[2]


def generate_synthetic(spec: SyntheticSpec, rng=None) -> Dataset:
    spec.validate()
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    nb, na = spec.bonafide_per_identity, spec.attack_per_identity
    basis, centers, directions = _layout(spec, rng)
    m, d = basis.shape[1], spec.dim

    def draw(count):
        on = spec.identity_spread * rng.standard_normal((count, m)) @ basis.T
        return on + spec.off_manifold_spread * rng.standard_normal((count, d))

    width = len(str(spec.num_identities - 1))
    feats, idents, labels = [], [], []
    for i, (center, u) in enumerate(zip(centers, directions)):
        name = f"id{i:0{width}d}"
        bona = center + draw(nb)
        att = center + draw(na) + spec.attack_offset * u
        feats.extend((bona, att))
        idents.extend([name] * (nb + na))
        labels.extend([BONAFIDE] * nb + [ATTACK] * na)
    meta = {"name": "synthetic", "spec": json.dumps(asdict(spec), sort_keys=True)}
    return Dataset(np.vstack(feats), idents, labels, meta)


def split_protocol(dataset: Dataset, protocol="p1", fraction=0.5, rng=None):
    """Split into a bonafide-only train set and a test set.

    ``p1`` holds out whole identities: train gets the bonafide samples of a
    ``fraction`` of identities, test gets every sample of the rest. ``p2``
    splits within identities: train gets a ``fraction`` of each identity's
    bonafide samples, test the remaining bonafide plus all attacks.
    """
    if protocol not in PROTOCOLS:
        raise SplitError(f"protocol must be one of {PROTOCOLS}, got {protocol!r}")
    if not 0.0 < fraction < 1.0:
        raise SplitError(f"fraction must lie in (0, 1), got {fraction}")
    rng = np.random.default_rng(0) if rng is None else rng
    ids = sorted(dataset.identity_set())
    bona = ~dataset.is_attack
    if protocol == "p1":
        n_train = int(round(fraction * len(ids)))
        if n_train < 1 or n_train >= len(ids):
            raise SplitError(f"fraction {fraction} leaves an empty side with {len(ids)} identities")
        order = rng.permutation(len(ids))
        train_ids = {ids[j] for j in order[:n_train]}
        in_train = np.array([i in train_ids for i in dataset.identities])
        train_idx = np.flatnonzero(in_train & bona)
        test_idx = np.flatnonzero(~in_train)
        if train_idx.size == 0:
            raise SplitError("training identities have no bonafide samples")
    else:
        train_parts, test_mask = [], dataset.is_attack.copy()
        for ident in ids:
            members = np.flatnonzero((dataset.identities == ident) & bona)
            n_train = int(round(fraction * members.size))
            if n_train < 1 or n_train >= members.size:
                raise SplitError(
                    f"identity {ident}: fraction {fraction} of {members.size} bonafide leaves an empty side"
                )
            chosen = members[rng.permutation(members.size)]
            train_parts.append(chosen[:n_train])
            test_mask[chosen[n_train:]] = True
        train_idx = np.sort(np.concatenate(train_parts))
        test_idx = np.flatnonzero(test_mask)
    meta = dict(dataset.metadata, protocol=protocol, fraction=repr(fraction))
    train = dataset.subset(train_idx, dict(meta, side="train"))
    test = dataset.subset(test_idx, dict(meta, side="test"))
    return train, test


def save_dataset(dataset: Dataset, path):
    lines = [f"dim={dataset.dim}"]
    for key in sorted(dataset.metadata):
        value = str(dataset.metadata[key])
        if "\n" in value or "=" in key:
            raise ContractError(f"metadata entry {key!r} cannot be serialized")
        lines.append(f"# {key}={value}")
    for x, ident, label in zip(dataset.features, dataset.identities, dataset.labels):
        lines.append(",".join([ident, label, *map(repr, x.tolist())]))
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, path)


def load_dataset(path) -> Dataset:
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or not lines[0].startswith("dim="):
        raise ParseError("expected header 'dim=<d>'", 1)
    try:
        dim = int(lines[0][4:])
    except ValueError:
        raise ParseError(f"bad dimension in header {lines[0]!r}", 1) from None
    if dim < 1:
        raise ParseError("dimension must be >= 1", 1)
    meta, feats, idents, labels = {}, [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if not sep:
                raise ParseError("metadata line must read '# key=value'", lineno)
            meta[key] = value
            continue
        parts = line.split(",")
        if len(parts) != dim + 2:
            raise ParseError(f"expected {dim} values, found {len(parts) - 2}", lineno)
        ident, label = parts[0], parts[1]
        if label not in LABELS:
            raise ParseError(f"unknown label {label!r}", lineno)
        if not ident:
            raise ParseError("empty identity", lineno)
        try:
            row = [float(v) for v in parts[2:]]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if not all(np.isfinite(row)):
            raise ParseError("non-finite feature value", lineno)
        feats.append(row)
        idents.append(ident)
        labels.append(label)
    if not feats:
        raise ParseError("file contains no samples", len(lines))
    return Dataset(np.array(feats, dtype=np.float64), idents, labels, meta)
