"""Evaluation: similarity search over stored representations, confusion
matrices, bootstrap confidence intervals, and the 2x2 experiment matrix
(cross-entropy vs contrastive, pitch on vs off).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import training
from .clustering import LabelScheme, assign_classes
from .data import Dataset, PitchEmbeddingSet, sample_test_split
from .errors import ConfigurationError, ValidationError
from .models import (CLASSIFIER, REPRESENTATION, PlayerModelConfig,
                     PredictorConfig, PredictorModel, init_player_model,
                     predictor_from_player_model)

NUM_CLASSES = 4

# named sub-streams of the root seed
_STREAM_SPLIT = 0
_STREAM_EMBED_INIT = 1
_STREAM_EMBED_TRAIN = 2
_STREAM_PREDICT_INIT = 3
_STREAM_PREDICT_TRAIN = 4
_STREAM_BOOTSTRAP = 5


def derive_seed(root: int, stream: int) -> int:
    return int(np.random.SeedSequence([root, stream]).generate_state(1)[0])


@dataclass
class RepresentationIndex:
    """Train-set representations with their class labels and record ids."""
    reps: np.ndarray  # (n, rep_dim), unit-norm rows
    labels: np.ndarray  # (n,)
    record_ids: list[str]


def build_index(model, dataset: Dataset, scheme: LabelScheme, records=None,
                pitch_set: PitchEmbeddingSet | None = None) -> RepresentationIndex:
    """One forward pass per record, stored in dataset order."""
    if model.config.head != REPRESENTATION:
        raise ConfigurationError("similarity index needs a representation-head model")
    records = list(records if records is not None else dataset.records)
    inputs = training.pack_inputs(model, dataset, records, scheme, pitch_set)
    reps, _ = training._forward(model, inputs, np.arange(len(inputs)))
    return RepresentationIndex(reps=reps, labels=inputs.labels,
                               record_ids=[r.innings_id for r in records])


def classify_by_similarity(index: RepresentationIndex, query: np.ndarray,
                           k: int = 1) -> int:
    """Majority class among the k nearest index rows (euclidean distance).

    Vote ties break toward the smaller summed distance, then the smaller
    class id.
    """
    n = len(index.labels)
    if n == 0:
        raise ValidationError("empty representation index")
    if not 1 <= k <= n:
        raise ValidationError(f"need 1 <= k <= {n}, got {k}")
    dist = np.linalg.norm(index.reps - np.asarray(query, dtype=np.float64), axis=1)
    nearest = np.argsort(dist, kind="stable")[:k]
    best_class, best_key = -1, None
    for cls in np.unique(index.labels[nearest]):
        members = nearest[index.labels[nearest] == cls]
        key = (-len(members), float(dist[members].sum()), int(cls))
        if best_key is None or key < best_key:
            best_key, best_class = key, int(cls)
    return best_class


def classify_by_logits(logits) -> int:
    """Argmax class; ties go to the smaller class id."""
    return int(np.argmax(np.asarray(logits)))


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (4, 4), rows true class, cols predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())

    def to_lists(self) -> list[list[int]]:
        return [[int(v) for v in row] for row in self.counts]

    def render(self) -> str:
        lines = ["true\\pred " + " ".join(f"{c:>5d}" for c in range(NUM_CLASSES))]
        for t in range(NUM_CLASSES):
            lines.append(f"{t:>9d} " + " ".join(
                f"{int(self.counts[t, p]):>5d}" for p in range(NUM_CLASSES)))
        return "\n".join(lines)


def confusion_and_accuracy(preds, truths) -> tuple[ConfusionMatrix, float]:
    preds = np.asarray(preds, dtype=np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    if preds.shape != truths.shape:
        raise ValidationError(f"preds {preds.shape} vs truths {truths.shape}")
    if preds.size == 0:
        raise ValidationError("accuracy undefined for empty input")
    if preds.min() < 0 or preds.max() >= NUM_CLASSES or truths.max() >= NUM_CLASSES:
        raise ValidationError("class id out of range")
    counts = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    np.add.at(counts, (truths, preds), 1)
    matrix = ConfusionMatrix(counts)
    return matrix, matrix.accuracy


def bootstrap_ci(flags, level: float = 0.95, resamples: int = 2000,
                 seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean of binary flags."""
    flags = np.asarray(flags, dtype=np.float64)
    if flags.size == 0:
        raise ValidationError("bootstrap needs >= 1 flags")
    if resamples < 100:
        raise ValidationError(f"resamples must be >= 100, got {resamples}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    idx = rng.integers(0, flags.size, size=(resamples, flags.size))
    means = flags[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(means, [100 * alpha, 100 * (1 - alpha)])
    return float(lo), float(hi)


# ---------------------------------------------------------------------------
# experiment orchestration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentSetting:
    objective: str  # "ce" | "contrastive"
    pitch: bool
    k: int = 1

    @property
    def name(self) -> str:
        return f"{self.objective}_pitch_{'on' if self.pitch else 'off'}"

    def to_dict(self) -> dict:
        return {"objective": self.objective,
                "pitch": "on" if self.pitch else "off", "k": self.k}


@dataclass
class ExperimentConfig:
    embed_epochs: int = 30
    predict_epochs: int = 60
    batch_size: int = 64
    lr: float = 1e-3
    margin: float = 1.0
    loss_mode: str = training.HINGE
    pair_balance: float = 0.5
    per_class: int = 10
    resamples: int = 2000
    player_model: PlayerModelConfig | None = None  # widths; num_players filled in
    predictor: PredictorConfig | None = None

    def to_dict(self) -> dict:
        return {"embed_epochs": self.embed_epochs,
                "predict_epochs": self.predict_epochs,
                "batch_size": self.batch_size, "lr": self.lr,
                "margin": self.margin, "loss_mode": self.loss_mode,
                "pair_balance": self.pair_balance, "per_class": self.per_class,
                "resamples": self.resamples}


@dataclass
class EvalReport:
    setting: dict
    seed: int
    confusion: ConfusionMatrix
    accuracy: float
    ci95: tuple[float, float]

    def to_dict(self) -> dict:
        return {"setting": self.setting, "seed": self.seed,
                "confusion": self.confusion.to_lists(),
                "accuracy": self.accuracy, "ci95": list(self.ci95)}


def _train_config(cfg: ExperimentConfig, setting: ExperimentSetting,
                  epochs: int, seed: int) -> training.TrainConfig:
    objective = training.CROSS_ENTROPY if setting.objective == "ce" \
        else training.CONTRASTIVE
    return training.TrainConfig(
        epochs=epochs, batch_size=cfg.batch_size, lr=cfg.lr, seed=seed,
        objective=objective,
        contrastive=training.ContrastiveConfig(
            margin=cfg.margin, loss_mode=cfg.loss_mode,
            pair_balance=cfg.pair_balance))


def run_setting_once(dataset: Dataset, scheme: LabelScheme,
                     setting: ExperimentSetting, root_seed: int,
                     cfg: ExperimentConfig,
                     pitch_set: PitchEmbeddingSet | None = None):
    """Split, train both stages, and evaluate one setting for one root seed.

    Returns (EvalReport, player model, predictor).
    """
    if setting.pitch and pitch_set is None:
        raise ConfigurationError("pitch=on requires pitch embeddings")
    head = CLASSIFIER if setting.objective == "ce" else REPRESENTATION

    train_idx, test_idx = sample_test_split(
        dataset, scheme, cfg.per_class, derive_seed(root_seed, _STREAM_SPLIT))
    train_records = [dataset.records[i] for i in train_idx]
    test_records = [dataset.records[i] for i in test_idx]

    pm_cfg = cfg.player_model or PlayerModelConfig(num_players=dataset.num_players)
    pm_cfg.num_players = dataset.num_players
    pm_cfg.head = head
    player = init_player_model(pm_cfg, dataset.player_ids,
                               derive_seed(root_seed, _STREAM_EMBED_INIT))
    training.train_model(
        player, dataset, scheme,
        _train_config(cfg, setting, cfg.embed_epochs,
                      derive_seed(root_seed, _STREAM_EMBED_TRAIN)),
        records=train_records)

    ctx = dataset.feature_context()
    pd_cfg = cfg.predictor or PredictorConfig(
        num_players=dataset.num_players, feature_dim=ctx.feature_dim)
    pd_cfg.num_players = dataset.num_players
    pd_cfg.feature_dim = ctx.feature_dim
    pd_cfg.head = head
    pd_cfg.pitch_dim = pitch_set.dim if setting.pitch else None
    predictor = predictor_from_player_model(
        player, pd_cfg, ctx, derive_seed(root_seed, _STREAM_PREDICT_INIT))
    setting_pitch_set = pitch_set if setting.pitch else None
    training.train_predictor(
        predictor, dataset, scheme,
        _train_config(cfg, setting, cfg.predict_epochs,
                      derive_seed(root_seed, _STREAM_PREDICT_TRAIN)),
        records=train_records, pitch_set=setting_pitch_set)

    test_inputs = training.pack_inputs(predictor, dataset, test_records, scheme,
                                       setting_pitch_set)
    out, _ = training._forward(predictor, test_inputs, np.arange(len(test_inputs)))
    if setting.objective == "ce":
        preds = [classify_by_logits(row) for row in out]
    else:
        index = build_index(predictor, dataset, scheme, train_records,
                            setting_pitch_set)
        preds = [classify_by_similarity(index, row, k=setting.k) for row in out]
    matrix, accuracy = confusion_and_accuracy(preds, test_inputs.labels)
    ci = bootstrap_ci(np.asarray(preds) == test_inputs.labels,
                      resamples=cfg.resamples,
                      seed=derive_seed(root_seed, _STREAM_BOOTSTRAP))
    report = EvalReport(setting=setting.to_dict(), seed=root_seed,
                        confusion=matrix, accuracy=accuracy, ci95=ci)
    return report, player, predictor


def aggregate_reports(setting: ExperimentSetting,
                      reports: list[EvalReport]) -> dict:
    accs = np.array([r.accuracy for r in reports])
    # bootstrap over the per-seed accuracies
    rng = np.random.default_rng(np.random.SeedSequence(0))
    idx = rng.integers(0, len(accs), size=(2000, len(accs)))
    means = accs[idx].mean(axis=1)
    return {
        "setting": setting.to_dict(),
        "seeds": [r.seed for r in reports],
        "accuracies": [float(a) for a in accs],
        "mean_accuracy": float(accs.mean()),
        "ci95": [float(np.percentile(means, 2.5)),
                 float(np.percentile(means, 97.5))],
    }


def run_experiment(dataset: Dataset, scheme: LabelScheme,
                   setting: ExperimentSetting, seeds: list[int],
                   cfg: ExperimentConfig | None = None,
                   pitch_set: PitchEmbeddingSet | None = None):
    """One setting over several root seeds; per-seed reports plus aggregate."""
    cfg = cfg or ExperimentConfig()
    reports = [run_setting_once(dataset, scheme, setting, s, cfg, pitch_set)[0]
               for s in seeds]
    return reports, aggregate_reports(setting, reports)
