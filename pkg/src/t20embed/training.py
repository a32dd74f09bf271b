"""Training regimes: cross-entropy classification and contrastive pairs.

The contrastive setting runs the model as a siamese pair: both pair members
share every weight, their representations are compared with the euclidean
distance, and the loss pulls same-class pairs together while pushing
different-class pairs apart up to a margin. Both regimes share the Adam
optimizer, batch shuffling, and post-step re-projection of any trainable
embedding rows onto the unit sphere.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .clustering import LabelScheme, assign_classes
from .data import Dataset, PitchEmbeddingSet, feature_matrix
from .errors import ConfigurationError, NumericError, SamplingError, ValidationError
from .models import CLASSIFIER, REPRESENTATION, PlayerEmbeddingModel, PredictorModel

HINGE = "hinge"
PAPER_LITERAL = "paper_literal"

CROSS_ENTROPY = "cross_entropy"
CONTRASTIVE = "contrastive"


@dataclass
class ContrastiveConfig:
    margin: float = 1.0
    loss_mode: str = HINGE
    pair_balance: float = 0.5

    def validate(self) -> None:
        if self.margin <= 0:
            raise ValidationError(f"margin must be > 0, got {self.margin}")
        if not 0.0 < self.pair_balance < 1.0:
            raise ValidationError(f"pair_balance must be in (0,1), got {self.pair_balance}")
        if self.loss_mode not in (HINGE, PAPER_LITERAL):
            raise ValidationError(f"unknown loss_mode {self.loss_mode!r}")


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    objective: str = CROSS_ENTROPY
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr < 0:
            raise ValidationError(f"lr must be >= 0, got {self.lr}")
        if self.objective not in (CROSS_ENTROPY, CONTRASTIVE):
            raise ValidationError(f"unknown objective {self.objective!r}")
        self.contrastive.validate()

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "batch_size": self.batch_size,
                "lr": self.lr, "seed": self.seed, "objective": self.objective,
                "contrastive": {"margin": self.contrastive.margin,
                                "loss_mode": self.contrastive.loss_mode,
                                "pair_balance": self.contrastive.pair_balance}}


@dataclass
class TrainReport:
    loss_curve: list[float]
    seconds: float
    config: dict
    model_path: str | None = None  # relative to wherever the report lands

    def to_dict(self) -> dict:
        return {"config": self.config, "loss_curve": self.loss_curve,
                "seconds": self.seconds, "model_path": self.model_path}


# ---------------------------------------------------------------------------
# contrastive loss
# ---------------------------------------------------------------------------

def contrastive_loss(d: float, dissimilar: int, m: float, mode: str = HINGE) -> float:
    """(1-Y)*d + Y*L_D(d): hinge L_D = max(m-d, 0); literal L_D = min(m-d, m)."""
    if d < 0:
        raise ValidationError(f"distance must be >= 0, got {d}")
    if not dissimilar:
        return float(d)
    if mode == HINGE:
        return float(max(m - d, 0.0))
    if mode == PAPER_LITERAL:
        return float(min(m - d, m))
    raise ValidationError(f"unknown loss_mode {mode!r}")


def contrastive_loss_grad(d: float, dissimilar: int, m: float,
                          mode: str = HINGE) -> float:
    """dL/dd; at the hinge kink d=m the subgradient 0 is used."""
    if d < 0:
        raise ValidationError(f"distance must be >= 0, got {d}")
    if not dissimilar:
        return 1.0
    if mode == HINGE:
        return -1.0 if d < m else 0.0
    if mode == PAPER_LITERAL:
        return -1.0
    raise ValidationError(f"unknown loss_mode {mode!r}")


def _contrastive_batch(d: np.ndarray, dissimilar: np.ndarray, m: float,
                       mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized per-pair losses and dL/dd."""
    if mode == HINGE:
        dis_loss = np.maximum(m - d, 0.0)
        dis_grad = np.where(d < m, -1.0, 0.0)
    else:
        dis_loss = np.minimum(m - d, m)
        dis_grad = np.full_like(d, -1.0)
    losses = np.where(dissimilar == 1, dis_loss, d)
    grads = np.where(dissimilar == 1, dis_grad, 1.0)
    return losses, grads


# ---------------------------------------------------------------------------
# pair sampling
# ---------------------------------------------------------------------------

def _sample_pair_batch(labels: np.ndarray, batch_size: int, balance: float,
                       rng: np.random.Generator):
    """(first, second, dissimilar) index arrays, uniform over the pair sets."""
    n_sim = int(round(balance * batch_size))
    n_dis = batch_size - n_sim
    classes, counts = np.unique(labels, return_counts=True)
    members = {c: np.flatnonzero(labels == c) for c in classes}

    sim_weights = np.array([c * (c - 1) / 2.0 for c in counts])
    if n_sim > 0 and sim_weights.sum() == 0:
        raise SamplingError("no class has >= 2 members; cannot draw similar pairs")
    first, second, flags = [], [], []
    if n_sim > 0:
        probs = sim_weights / sim_weights.sum()
        picks = rng.choice(len(classes), size=n_sim, p=probs)
        for c in picks:
            i, j = rng.choice(members[classes[c]], size=2, replace=False)
            first.append(i)
            second.append(j)
            flags.append(0)

    if n_dis > 0:
        if len(classes) < 2:
            raise SamplingError("need >= 2 classes to draw dissimilar pairs")
        pairs = [(a, b) for a in range(len(classes)) for b in range(a + 1, len(classes))]
        weights = np.array([counts[a] * counts[b] for a, b in pairs], dtype=np.float64)
        probs = weights / weights.sum()
        picks = rng.choice(len(pairs), size=n_dis, p=probs)
        for k in picks:
            a, b = pairs[k]
            first.append(rng.choice(members[classes[a]]))
            second.append(rng.choice(members[classes[b]]))
            flags.append(1)
    return (np.array(first, dtype=np.int64), np.array(second, dtype=np.int64),
            np.array(flags, dtype=np.int64))


def sample_pairs(labels, batch_size: int, balance: float, seed: int):
    """One deterministic PairSample batch over the given class labels."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return _sample_pair_batch(np.asarray(labels), batch_size, balance, rng)


# ---------------------------------------------------------------------------
# input packing
# ---------------------------------------------------------------------------

@dataclass
class PackedInputs:
    """Index/feature arrays for a list of records, aligned with labels."""
    batting: np.ndarray  # (n, 11)
    bowling: np.ndarray  # (n, 11)
    labels: np.ndarray  # (n,)
    features: np.ndarray | None = None  # (n, F) for predictors
    pitch: np.ndarray | None = None  # (n, P) when the pitch branch is on

    def __len__(self) -> int:
        return len(self.labels)


def pack_inputs(model, dataset: Dataset, records, scheme: LabelScheme,
                pitch_set: PitchEmbeddingSet | None = None) -> PackedInputs:
    records = list(records)
    batting = np.stack([model.lineup_indices(r.batting_lineup) for r in records])
    bowling = np.stack([model.lineup_indices(r.bowling_lineup) for r in records])
    labels = assign_classes(scheme, [r.run_rate for r in records])
    features = pitch = None
    if isinstance(model, PredictorModel):
        features = feature_matrix(records, model.feature_context)
        if model.has_pitch_branch:
            if pitch_set is None:
                raise ConfigurationError(
                    "predictor has a pitch branch but no pitch embeddings were given")
            if pitch_set.dim != model.config.pitch_dim:
                raise ConfigurationError(
                    f"pitch embeddings have dim {pitch_set.dim}, "
                    f"model expects {model.config.pitch_dim}")
            rows = []
            for r in records:
                if r.pitch_text_id is None:
                    raise ConfigurationError(
                        f"innings {r.innings_id} has no pitch_text_id")
                rows.append(pitch_set.get(r.pitch_text_id))
            pitch = np.stack(rows)
        elif pitch_set is not None:
            raise ConfigurationError(
                "pitch embeddings given but the predictor has no pitch branch")
    return PackedInputs(batting, bowling, labels, features, pitch)


def _forward(model, inputs: PackedInputs, idx: np.ndarray):
    if isinstance(model, PredictorModel):
        return model.forward_batch(
            inputs.batting[idx], inputs.bowling[idx], inputs.features[idx],
            None if inputs.pitch is None else inputs.pitch[idx])
    return model.forward_batch(inputs.batting[idx], inputs.bowling[idx])


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------

def _finish_step(model, optimizer: nn.Adam, step_hook, step: int) -> None:
    optimizer.step()
    model.renormalize_embeddings()
    if step_hook is not None:
        step_hook(step, model)


def train_cross_entropy(model, dataset: Dataset, scheme: LabelScheme,
                        config: TrainConfig, records=None,
                        pitch_set: PitchEmbeddingSet | None = None,
                        step_hook=None) -> TrainReport:
    """Mini-batch CE training of a classifier-head model."""
    config.validate()
    if model.config.head != CLASSIFIER:
        raise ConfigurationError("cross-entropy training needs a classifier head")
    inputs = pack_inputs(model, dataset, records if records is not None
                         else dataset.records, scheme, pitch_set)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    optimizer = nn.Adam(model.trainable_params(), lr=config.lr)
    start = time.perf_counter()
    curve = []
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(inputs))
        total = 0.0
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo:lo + config.batch_size]
            model.zero_grad()
            out, cache = _forward(model, inputs, idx)
            losses, grad = nn.softmax_cross_entropy_batch(out, inputs.labels[idx])
            if not np.all(np.isfinite(losses)):
                raise NumericError("non-finite cross-entropy loss")
            model.backward_batch(cache, grad / len(idx))
            _finish_step(model, optimizer, step_hook, step)
            step += 1
            total += float(losses.sum())
        curve.append(total / len(inputs))
    return TrainReport(curve, time.perf_counter() - start, config.to_dict())


def train_contrastive(model, dataset: Dataset, scheme: LabelScheme,
                      config: TrainConfig, records=None,
                      pitch_set: PitchEmbeddingSet | None = None,
                      step_hook=None) -> TrainReport:
    """Siamese training: both pair members share every model weight."""
    config.validate()
    if model.config.head != REPRESENTATION:
        raise ConfigurationError("contrastive training needs a representation head")
    ccfg = config.contrastive
    inputs = pack_inputs(model, dataset, records if records is not None
                         else dataset.records, scheme, pitch_set)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    optimizer = nn.Adam(model.trainable_params(), lr=config.lr)
    batches = max(1, -(-len(inputs) // config.batch_size))
    start = time.perf_counter()
    curve = []
    step = 0
    for _ in range(config.epochs):
        total = 0.0
        for _ in range(batches):
            first, second, dissim = _sample_pair_batch(
                inputs.labels, config.batch_size, ccfg.pair_balance, rng)
            model.zero_grad()
            r1, c1 = _forward(model, inputs, first)
            r2, c2 = _forward(model, inputs, second)
            diff = r1 - r2
            d = np.linalg.norm(diff, axis=1)
            losses, dl_dd = _contrastive_batch(d, dissim, ccfg.margin, ccfg.loss_mode)
            if not np.all(np.isfinite(losses)):
                raise NumericError("non-finite contrastive loss")
            if ccfg.loss_mode == PAPER_LITERAL:
                assert losses.min() >= ccfg.margin - 2.0 - 1e-9, \
                    "dissimilar loss fell below m-2 with a normalized head"
            # d = ||r1 - r2||: dd/dr1 = diff / d (zero at d = 0)
            safe = np.where(d > 0, d, 1.0)
            unit = np.where((d > 0)[:, None], diff / safe[:, None], 0.0)
            g1 = (dl_dd / len(d))[:, None] * unit
            model.backward_batch(c1, g1)
            model.backward_batch(c2, -g1)
            _finish_step(model, optimizer, step_hook, step)
            step += 1
            total += float(losses.sum())
        curve.append(total / (batches * config.batch_size))
    return TrainReport(curve, time.perf_counter() - start, config.to_dict())


def train_model(model, dataset: Dataset, scheme: LabelScheme, config: TrainConfig,
                records=None, pitch_set=None, step_hook=None) -> TrainReport:
    if config.objective == CROSS_ENTROPY:
        return train_cross_entropy(model, dataset, scheme, config, records,
                                   pitch_set, step_hook)
    return train_contrastive(model, dataset, scheme, config, records,
                             pitch_set, step_hook)


def train_predictor(predictor: PredictorModel, dataset: Dataset,
                    scheme: LabelScheme, config: TrainConfig, records=None,
                    pitch_set: PitchEmbeddingSet | None = None,
                    step_hook=None) -> TrainReport:
    """Train a predictor whose embedding tables must arrive frozen."""
    if predictor.batting_table.rows.trainable or predictor.bowling_table.rows.trainable:
        raise ConfigurationError(
            "predictor training requires frozen embedding tables")
    if predictor.has_pitch_branch and pitch_set is None:
        raise ConfigurationError("pitch-configured predictor needs pitch embeddings")
    if not predictor.has_pitch_branch and pitch_set is not None:
        raise ConfigurationError("pitch embeddings given but predictor has no pitch branch")
    return train_model(predictor, dataset, scheme, config, records, pitch_set,
                       step_hook)


def kfold_split(n: int, k: int, seed: int) -> list[np.ndarray]:
    """k disjoint index folds covering 0..n-1, sizes differing by at most 1."""
    if k < 2 or k > n:
        raise ValidationError(f"need 2 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return [np.sort(f) for f in np.array_split(rng.permutation(n), k)]
