"""End-to-end one-class training of an extractor/classifier pair.

Only bonafide features pass through the extractor. Each step draws a batch
of pseudo-negative features from a Gaussian whose center tracks the running
mean of the bonafide features (``mean_mode="adaptive"``) or sits at the
origin (``mean_mode="origin"``, the OC-CNN configuration), and trains the
classifier to tell the two apart while a pairwise-confusion term pulls the
bonafide features together.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .data import Dataset
from .errors import ConfigError, ContractError, ShapeError, TrainingError
from .losses import (
    PC_NORMALIZATIONS,
    LossBreakdown,
    combined_loss,
    cross_entropy,
    pairwise_confusion,
    softmax,
)
from .nn import Adam, Mlp, as_matrix, mlp_backward, mlp_forward
from .sampler import RunningMeanState, SamplerConfig, sample_pseudo_negatives, update_running_mean

MEAN_MODES = ("adaptive", "origin")
PC_MODES = ("on", "off")

# Full-size layout: 4096-wide 'fc6' inputs, classifier 8192-1000-500-2.
FULL_SCALE = {
    "input_dim": 4096,
    "extractor_widths": (4096,),
    "classifier_widths": (8192, 1000, 500, 2),
    "learning_rate": 1e-4,
}


@dataclass
class TrainerConfig:
    input_dim: int = 32
    extractor_widths: tuple = (64, 32)
    classifier_widths: tuple = (32, 16, 2)
    alpha: float = 0.8
    sigma: float = 1.0
    lambda1: float = 3.0
    lambda2: float = 1.0
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_k: int = 80
    mean_mode: str = "adaptive"
    pc_mode: str = "on"
    pc_normalization: str = "pair_mean"
    seed: int = 0

    def __post_init__(self):
        self.extractor_widths = tuple(int(w) for w in self.extractor_widths)
        self.classifier_widths = tuple(int(w) for w in self.classifier_widths)

    @property
    def feature_dim(self) -> int:
        return self.extractor_widths[-1]

    def validate(self):
        if not self.extractor_widths or not self.classifier_widths:
            raise ConfigError("extractor and classifier need at least one layer each")
        if min(self.extractor_widths + self.classifier_widths) < 1 or self.input_dim < 1:
            raise ConfigError("layer widths must be positive")
        if self.classifier_widths[-1] != 2:
            raise ConfigError("classifier must end in a 2-wide layer")
        if self.mean_mode not in MEAN_MODES:
            raise ConfigError(f"mean_mode must be one of {MEAN_MODES}")
        if self.pc_mode not in PC_MODES:
            raise ConfigError(f"pc_mode must be one of {PC_MODES}")
        if self.pc_normalization not in PC_NORMALIZATIONS:
            raise ConfigError(f"pc_normalization must be one of {PC_NORMALIZATIONS}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.sigma <= 0 or self.learning_rate <= 0:
            raise ConfigError("sigma and learning_rate must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.epochs < 1 or self.batch_k < 1:
            raise ConfigError("epochs and batch_k must be >= 1")
        if self.pc_mode == "on" and self.batch_k < 2:
            raise ConfigError("batch_k must be >= 2 when the pairwise-confusion term is on")

    def to_dict(self):
        d = asdict(self)
        d["extractor_widths"] = list(self.extractor_widths)
        d["classifier_widths"] = list(self.classifier_widths)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown trainer keys {sorted(unknown)}")
        return cls(**d)


@dataclass
class SpoofModel:
    extractor: Mlp
    classifier: Mlp
    config: TrainerConfig

    def parameters(self):
        return self.extractor.parameters() + self.classifier.parameters()

    def touch(self):
        self.extractor.touch()
        self.classifier.touch()

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        pos = 0
        for p in self.parameters():
            p[...] = flat[pos:pos + p.size].reshape(p.shape)
            pos += p.size
        if pos != flat.size:
            raise ShapeError(f"flat vector has {flat.size} entries, model has {pos}")
        self.touch()


@dataclass
class TrainState:
    running_mean: RunningMeanState
    optimizer: Adam
    last_center: np.ndarray | None = None
    steps: int = 0


@dataclass
class EpochRecord:
    epoch: int
    n_steps: int
    loss: LossBreakdown
    center: tuple


@dataclass
class TrainingLog:
    steps: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    wall_time: float = field(default=0.0, compare=False)


def _rng(seed, stream):
    return np.random.default_rng([int(seed), stream])


def init_model(cfg: TrainerConfig, rng=None) -> SpoofModel:
    cfg.validate()
    rng = _rng(cfg.seed, 0) if rng is None else rng
    extractor = Mlp.build(cfg.input_dim, cfg.extractor_widths, rng)
    classifier = Mlp.build(cfg.feature_dim, cfg.classifier_widths, rng)
    return SpoofModel(extractor, classifier, cfg)


def new_train_state(model: SpoofModel, cfg: TrainerConfig | None = None) -> TrainState:
    cfg = model.config if cfg is None else cfg
    return TrainState(RunningMeanState(cfg.alpha), Adam(model.parameters(), lr=cfg.learning_rate))


def _objective(model, feats, cache_v, negatives, cfg):
    k = feats.shape[0]
    joint = np.vstack([feats, negatives])
    labels = np.concatenate([np.zeros(k, dtype=np.intp), np.ones(negatives.shape[0], dtype=np.intp)])
    logits, cache_g = mlp_forward(model.classifier, joint)
    if not np.all(np.isfinite(logits)):
        raise TrainingError("non-finite classifier output")
    ce, dlogits = cross_entropy(logits, labels)
    if cfg.pc_mode == "on":
        pc, dpc = pairwise_confusion(feats, cfg.pc_normalization)
    else:
        pc, dpc = 0.0, np.zeros_like(feats)
    breakdown = combined_loss(ce, pc, cfg.lambda1, cfg.lambda2)
    grads_g, djoint = mlp_backward(model.classifier, cache_g, cfg.lambda2 * dlogits)
    # pseudo-negative rows never pass through the extractor
    dfeats = djoint[:k] + cfg.lambda1 * dpc
    grads_v, _ = mlp_backward(model.extractor, cache_v, dfeats)
    return breakdown, grads_v + grads_g


def step_objective(model: SpoofModel, batch, negatives, cfg=None):
    """Loss and parameter gradients for one batch with fixed pseudo-negatives.

    Gradients are aligned with ``model.parameters()``. The pseudo-negative
    rows are constants, so nothing flows back through their center.
    """
    cfg = model.config if cfg is None else cfg
    feats, cache_v = mlp_forward(model.extractor, batch)
    negatives = as_matrix(negatives, "negatives")
    if negatives.shape[1] != feats.shape[1]:
        raise ShapeError("pseudo-negatives must match the feature width")
    return _objective(model, feats, cache_v, negatives, cfg)


def train_step(model: SpoofModel, bonafide_batch, state: TrainState, cfg=None, rng=None,
               *, epoch=None, step=None) -> LossBreakdown:
    cfg = model.config if cfg is None else cfg
    rng = _rng(cfg.seed, 1) if rng is None else rng
    batch = as_matrix(bonafide_batch, "bonafide_batch")
    try:
        feats, cache_v = mlp_forward(model.extractor, batch)
        if not np.all(np.isfinite(feats)):
            raise TrainingError("non-finite extractor output")
        k, d = feats.shape
        if cfg.mean_mode == "adaptive":
            center = update_running_mean(state.running_mean, feats)
        else:
            center = np.zeros(d)
        state.last_center = center
        negatives = sample_pseudo_negatives(center, SamplerConfig(cfg.sigma, d, k), rng)
        breakdown, grads = _objective(model, feats, cache_v, negatives, cfg)
        if not np.isfinite(breakdown.total):
            raise TrainingError("non-finite loss")
        state.optimizer.step(model.parameters(), grads)
    except TrainingError as exc:
        raise TrainingError(f"epoch {epoch}, step {step}: {exc}") from None
    model.touch()
    state.steps += 1
    return breakdown


def _bonafide_features(train_set):
    if isinstance(train_set, Dataset):
        if np.any(train_set.is_attack):
            raise ContractError("training data must contain only bonafide samples")
        return train_set.features
    return as_matrix(train_set, "train_set")


def _mean_breakdown(items, cfg):
    ce = float(np.mean([b.ce for b in items]))
    pc = float(np.mean([b.pc for b in items]))
    return combined_loss(ce, pc, cfg.lambda1, cfg.lambda2)


def train(model: SpoofModel, train_set, cfg=None, rng=None, state=None) -> TrainingLog:
    """Run ``cfg.epochs`` passes of shuffled mini-batches of ``batch_k`` rows.

    A trailing batch with fewer than two rows is dropped.
    """
    cfg = model.config if cfg is None else cfg
    cfg.validate()
    x = _bonafide_features(train_set)
    if x.shape[0] == 0:
        raise ConfigError("training set is empty")
    if x.shape[1] != model.extractor.in_dim:
        raise ShapeError(f"training features have {x.shape[1]} columns, model expects {model.extractor.in_dim}")
    rng = _rng(cfg.seed, 1) if rng is None else rng
    state = new_train_state(model, cfg) if state is None else state
    log = TrainingLog()
    started = time.perf_counter()
    n = x.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_items = []
        for s, start in enumerate(range(0, n, cfg.batch_k)):
            idx = order[start:start + cfg.batch_k]
            if idx.size < 2:
                continue
            b = train_step(model, x[idx], state, cfg, rng, epoch=epoch, step=s)
            epoch_items.append(b)
            log.steps.append(b)
        if not epoch_items:
            raise ConfigError(f"training set of {n} rows yields no batch of at least 2 rows")
        center = () if state.last_center is None else tuple(state.last_center.tolist())
        log.epochs.append(EpochRecord(epoch, len(epoch_items), _mean_breakdown(epoch_items, cfg), center))
    log.wall_time = time.perf_counter() - started
    return log


def _check_input(model, samples):
    x = as_matrix(samples, "samples")
    if x.shape[1] != model.extractor.in_dim:
        raise ShapeError(f"samples have {x.shape[1]} columns, model expects {model.extractor.in_dim}")
    return x


def embed(model: SpoofModel, samples) -> np.ndarray:
    x = _check_input(model, samples)
    feats, _ = mlp_forward(model.extractor, x)
    return feats


def score(model: SpoofModel, samples) -> np.ndarray:
    """Bonafide probability (class 0 of the classifier softmax); higher = more bonafide."""
    logits, _ = mlp_forward(model.classifier, embed(model, samples))
    return softmax(logits)[:, 0]
