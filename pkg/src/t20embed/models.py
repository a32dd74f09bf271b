"""Network architectures: player embedding model and run-rate predictors.

Both models share the same building blocks: two per-role embedding tables
(batting and bowling, unit-norm 64-dim rows), mean-pooled team lookups, small
dense+ReLU branches, a dense trunk over the concatenated branch latents, and
either a 4-way classifier head or an L2-normalized representation head. The
predictor adds a match-feature branch and an optional pitch-report branch and
runs with the embedding tables frozen.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .data import FeatureContext
from .errors import ConfigurationError, EncodingError, ModelFormatError, ShapeError

MODEL_FORMAT_VERSION = 1

CLASSIFIER = "classifier"
REPRESENTATION = "representation"


@dataclass
class PlayerModelConfig:
    num_players: int
    embed_dim: int = 64
    branch_dim: int = 64
    trunk_dims: tuple[int, ...] = (64,)
    head: str = CLASSIFIER
    num_classes: int = 4
    rep_dim: int = 32

    def to_dict(self) -> dict:
        return {"num_players": self.num_players, "embed_dim": self.embed_dim,
                "branch_dim": self.branch_dim, "trunk_dims": list(self.trunk_dims),
                "head": self.head, "num_classes": self.num_classes,
                "rep_dim": self.rep_dim}

    @classmethod
    def from_dict(cls, d: dict) -> "PlayerModelConfig":
        d = dict(d)
        d["trunk_dims"] = tuple(d["trunk_dims"])
        return cls(**d)


@dataclass
class PredictorConfig:
    num_players: int
    feature_dim: int
    embed_dim: int = 64
    branch_dims: tuple[int, ...] = (64, 64)
    feature_branch_dim: int = 32
    pitch_dim: int | None = None
    pitch_branch_dim: int = 32
    trunk_dims: tuple[int, ...] = (96, 48)
    head: str = CLASSIFIER
    num_classes: int = 4
    rep_dim: int = 32

    def to_dict(self) -> dict:
        return {"num_players": self.num_players, "feature_dim": self.feature_dim,
                "embed_dim": self.embed_dim, "branch_dims": list(self.branch_dims),
                "feature_branch_dim": self.feature_branch_dim,
                "pitch_dim": self.pitch_dim,
                "pitch_branch_dim": self.pitch_branch_dim,
                "trunk_dims": list(self.trunk_dims), "head": self.head,
                "num_classes": self.num_classes, "rep_dim": self.rep_dim}

    @classmethod
    def from_dict(cls, d: dict) -> "PredictorConfig":
        d = dict(d)
        d["branch_dims"] = tuple(d["branch_dims"])
        d["trunk_dims"] = tuple(d["trunk_dims"])
        return cls(**d)


class EmbeddingTable:
    """Per-player role embeddings; rows kept unit-norm by re-projection."""

    def __init__(self, role: str, rows: nn.ParamTensor):
        self.role = role
        self.rows = rows

    @property
    def num_players(self) -> int:
        return self.rows.value.shape[0]

    def project_rows(self) -> None:
        norms = np.linalg.norm(self.rows.value, axis=1)
        off = np.abs(norms - 1.0) > 1e-12  # keep rows already on the sphere bit-stable
        if np.any(off):
            self.rows.value[off] /= np.maximum(norms[off], nn.NORM_FLOOR)[:, None]

    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.rows.value, axis=1)


def embed_team(table: EmbeddingTable, lineup) -> np.ndarray:
    """Mean of the 11 looked-up rows for one lineup."""
    lineup = np.asarray(lineup, dtype=np.int64)
    if lineup.max(initial=-1) >= table.num_players or lineup.min(initial=0) < 0:
        raise EncodingError(
            f"player index out of range for table of {table.num_players} rows")
    return table.rows.value[lineup].mean(axis=0)


def _embed_batch(table: EmbeddingTable, lineups: np.ndarray) -> np.ndarray:
    if lineups.max(initial=-1) >= table.num_players or lineups.min(initial=0) < 0:
        raise EncodingError(
            f"player index out of range for table of {table.num_players} rows")
    return table.rows.value[lineups].mean(axis=1)


def _embed_backward(table: EmbeddingTable, lineups: np.ndarray,
                    grad: np.ndarray) -> None:
    per_row = grad / lineups.shape[1]
    np.add.at(table.rows.grad, lineups.ravel(),
              np.repeat(per_row, lineups.shape[1], axis=0))


def _stack_forward(x: np.ndarray, layers) -> tuple[np.ndarray, list]:
    """dense+ReLU chain; returns output and (input, pre-activation) caches."""
    caches = []
    h = x
    for w, b in layers:
        z = nn.dense_forward(h, w.value, b.value)
        caches.append((h, z))
        h = nn.relu(z)
    return h, caches


def _stack_backward(grad: np.ndarray, caches: list, layers) -> np.ndarray:
    for (w, b), (h, z) in zip(reversed(layers), reversed(caches)):
        grad = nn.relu_backward(grad, z)
        grad, gw, gb = nn.dense_backward(grad, h, w.value)
        w.grad += gw
        b.grad += gb
    return grad


class _ModelBase:
    """Shared parameter registry, head logic, and persistence helpers."""

    def __init__(self):
        self._params: list[nn.ParamTensor] = []

    def _param(self, name: str, value, trainable: bool = True) -> nn.ParamTensor:
        p = nn.ParamTensor(value, trainable=trainable, name=name)
        self._params.append(p)
        return p

    def parameters(self) -> list[nn.ParamTensor]:
        return list(self._params)

    def trainable_params(self) -> list[nn.ParamTensor]:
        return [p for p in self._params if p.trainable]

    def zero_grad(self) -> None:
        for p in self._params:
            p.zero_grad()

    def renormalize_embeddings(self) -> None:
        for table in self.embedding_tables():
            if table.rows.trainable:
                table.project_rows()

    def embedding_tables(self) -> list[EmbeddingTable]:
        return [self.batting_table, self.bowling_table]

    @property
    def output_dim(self) -> int:
        return self.config.num_classes if self.config.head == CLASSIFIER \
            else self.config.rep_dim

    def _head_forward(self, h: np.ndarray):
        z = nn.dense_forward(h, self.head_w.value, self.head_b.value)
        if self.config.head == REPRESENTATION:
            return nn.l2_normalize(z), (h, z)
        return z, (h, None)

    def _head_backward(self, grad: np.ndarray, cache) -> np.ndarray:
        h, z = cache
        if self.config.head == REPRESENTATION:
            grad = nn.l2_normalize_backward(grad, z)
        grad, gw, gb = nn.dense_backward(grad, h, self.head_w.value)
        self.head_w.grad += gw
        self.head_b.grad += gb
        return grad

    def lineup_indices(self, lineup: list[str]) -> np.ndarray:
        try:
            return np.array([self.player_index[p] for p in lineup], dtype=np.int64)
        except KeyError as exc:
            raise EncodingError(f"unknown player id {exc.args[0]!r}") from exc

    def _param_blocks(self) -> list[dict]:
        return [{"name": p.name, "shape": list(p.value.shape),
                 "trainable": p.trainable, "values": p.value.ravel().tolist()}
                for p in self._params]

    def _load_param_blocks(self, blocks: list[dict]) -> None:
        if len(blocks) != len(self._params):
            raise ModelFormatError(
                f"expected {len(self._params)} parameter blocks, got {len(blocks)}")
        for p, blk in zip(self._params, blocks):
            if blk["name"] != p.name or tuple(blk["shape"]) != p.value.shape:
                raise ModelFormatError(
                    f"parameter mismatch: file has {blk['name']}{blk['shape']}, "
                    f"model expects {p.name}{list(p.value.shape)}")
            values = np.asarray(blk["values"], dtype=np.float64)
            if values.size != p.value.size:
                raise ModelFormatError(f"parameter {p.name}: wrong value count")
            p.value = values.reshape(p.value.shape)
            p.grad = np.zeros_like(p.value)
            p.trainable = bool(blk["trainable"])


class PlayerEmbeddingModel(_ModelBase):
    """Lineups -> per-role mean-pooled embeddings -> branch FC -> trunk -> head."""

    def __init__(self, config: PlayerModelConfig, player_ids: list[str],
                 rng: np.random.Generator):
        super().__init__()
        self.config = config
        self.player_ids = list(player_ids)
        self.player_index = {p: i for i, p in enumerate(self.player_ids)}
        d, bd = config.embed_dim, config.branch_dim
        self.batting_table = EmbeddingTable(
            "batting", self._param("batting_table", _init_embedding(rng, config.num_players, d)))
        self.bowling_table = EmbeddingTable(
            "bowling", self._param("bowling_table", _init_embedding(rng, config.num_players, d)))
        self.batting_branch = [self._dense_pair("batting_branch0", rng, d, bd)]
        self.bowling_branch = [self._dense_pair("bowling_branch0", rng, d, bd)]
        self.trunk = []
        width = 2 * bd
        for i, out in enumerate(config.trunk_dims):
            self.trunk.append(self._dense_pair(f"trunk{i}", rng, width, out))
            width = out
        self.head_w = self._param("head_w", _glorot(rng, self.output_dim, width))
        self.head_b = self._param("head_b", np.zeros(self.output_dim))

    def _dense_pair(self, name, rng, fan_in, fan_out):
        w = self._param(f"{name}_w", _glorot(rng, fan_out, fan_in))
        b = self._param(f"{name}_b", np.zeros(fan_out))
        return (w, b)

    def forward_batch(self, batting: np.ndarray, bowling: np.ndarray):
        batting = np.asarray(batting, dtype=np.int64)
        bowling = np.asarray(bowling, dtype=np.int64)
        bat_e = _embed_batch(self.batting_table, batting)
        bowl_e = _embed_batch(self.bowling_table, bowling)
        bat_h, bat_c = _stack_forward(bat_e, self.batting_branch)
        bowl_h, bowl_c = _stack_forward(bowl_e, self.bowling_branch)
        joint = nn.concat([bat_h, bowl_h])
        t, trunk_c = _stack_forward(joint, self.trunk)
        out, head_c = self._head_forward(t)
        cache = {"batting": batting, "bowling": bowling, "bat_c": bat_c,
                 "bowl_c": bowl_c, "trunk_c": trunk_c, "head_c": head_c}
        return out, cache

    def backward_batch(self, cache: dict, grad_out: np.ndarray) -> None:
        grad = self._head_backward(grad_out, cache["head_c"])
        grad = _stack_backward(grad, cache["trunk_c"], self.trunk)
        bd = self.config.branch_dim
        g_bat, g_bowl = nn.concat_backward(grad, [bd, bd])
        g_bat = _stack_backward(g_bat, cache["bat_c"], self.batting_branch)
        g_bowl = _stack_backward(g_bowl, cache["bowl_c"], self.bowling_branch)
        _embed_backward(self.batting_table, cache["batting"], g_bat)
        _embed_backward(self.bowling_table, cache["bowling"], g_bowl)

    def forward(self, batting, bowling) -> np.ndarray:
        out, _ = self.forward_batch(np.asarray(batting)[None, :],
                                    np.asarray(bowling)[None, :])
        return out[0]

    def save(self, path) -> None:
        doc = {"format_version": MODEL_FORMAT_VERSION, "kind": "player",
               "config": self.config.to_dict(), "player_ids": self.player_ids,
               "params": self._param_blocks()}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
            fh.write("\n")


class PredictorModel(_ModelBase):
    """Frozen player embeddings + match features (+ pitch report) -> head."""

    def __init__(self, config: PredictorConfig, player_ids: list[str],
                 feature_context: FeatureContext, rng: np.random.Generator,
                 tables: tuple[np.ndarray, np.ndarray] | None = None,
                 freeze_tables: bool = True):
        super().__init__()
        self.config = config
        self.player_ids = list(player_ids)
        self.player_index = {p: i for i, p in enumerate(self.player_ids)}
        self.feature_context = feature_context
        d = config.embed_dim
        if tables is None:
            bat_rows = _init_embedding(rng, config.num_players, d)
            bowl_rows = _init_embedding(rng, config.num_players, d)
        else:
            bat_rows, bowl_rows = np.array(tables[0]), np.array(tables[1])
        self.batting_table = EmbeddingTable(
            "batting", self._param("batting_table", bat_rows, trainable=not freeze_tables))
        self.bowling_table = EmbeddingTable(
            "bowling", self._param("bowling_table", bowl_rows, trainable=not freeze_tables))

        self.batting_branch, self.bowling_branch = [], []
        for role, branch in (("batting", self.batting_branch),
                             ("bowling", self.bowling_branch)):
            width = d
            for i, out in enumerate(config.branch_dims):
                branch.append(self._dense_pair(f"{role}_branch{i}", rng, width, out))
                width = out
        self.feature_branch = [self._dense_pair(
            "feature_branch0", rng, config.feature_dim, config.feature_branch_dim)]
        self.pitch_branch = None
        if config.pitch_dim is not None:
            self.pitch_branch = [self._dense_pair(
                "pitch_branch0", rng, config.pitch_dim, config.pitch_branch_dim)]
        self.trunk = []
        width = self.trunk_input_dim
        for i, out in enumerate(config.trunk_dims):
            self.trunk.append(self._dense_pair(f"trunk{i}", rng, width, out))
            width = out
        self.head_w = self._param("head_w", _glorot(rng, self.output_dim, width))
        self.head_b = self._param("head_b", np.zeros(self.output_dim))

    _dense_pair = PlayerEmbeddingModel._dense_pair

    @property
    def trunk_input_dim(self) -> int:
        width = 2 * self.config.branch_dims[-1] + self.config.feature_branch_dim
        if self.config.pitch_dim is not None:
            width += self.config.pitch_branch_dim
        return width

    @property
    def has_pitch_branch(self) -> bool:
        return self.pitch_branch is not None

    def forward_batch(self, batting, bowling, features, pitch=None):
        batting = np.asarray(batting, dtype=np.int64)
        bowling = np.asarray(bowling, dtype=np.int64)
        features = nn.as_f64(features)
        if features.shape[-1] != self.config.feature_dim:
            raise ShapeError(
                f"features {features.shape} vs configured dim {self.config.feature_dim}")
        if self.has_pitch_branch and pitch is None:
            raise ConfigurationError("model has a pitch branch but no pitch vector given")
        if not self.has_pitch_branch and pitch is not None:
            raise ConfigurationError("model has no pitch branch but a pitch vector was given")
        bat_e = _embed_batch(self.batting_table, batting)
        bowl_e = _embed_batch(self.bowling_table, bowling)
        bat_h, bat_c = _stack_forward(bat_e, self.batting_branch)
        bowl_h, bowl_c = _stack_forward(bowl_e, self.bowling_branch)
        feat_h, feat_c = _stack_forward(features, self.feature_branch)
        parts = [bat_h, bowl_h, feat_h]
        pitch_c = None
        if self.has_pitch_branch:
            pitch = nn.as_f64(pitch)
            if pitch.shape[-1] != self.config.pitch_dim:
                raise ShapeError(
                    f"pitch {pitch.shape} vs configured dim {self.config.pitch_dim}")
            pitch_h, pitch_c = _stack_forward(pitch, self.pitch_branch)
            parts.append(pitch_h)
        joint = nn.concat(parts)
        t, trunk_c = _stack_forward(joint, self.trunk)
        out, head_c = self._head_forward(t)
        cache = {"batting": batting, "bowling": bowling, "bat_c": bat_c,
                 "bowl_c": bowl_c, "feat_c": feat_c, "pitch_c": pitch_c,
                 "trunk_c": trunk_c, "head_c": head_c}
        return out, cache

    def backward_batch(self, cache: dict, grad_out: np.ndarray) -> None:
        grad = self._head_backward(grad_out, cache["head_c"])
        grad = _stack_backward(grad, cache["trunk_c"], self.trunk)
        sizes = [self.config.branch_dims[-1], self.config.branch_dims[-1],
                 self.config.feature_branch_dim]
        if self.has_pitch_branch:
            sizes.append(self.config.pitch_branch_dim)
        parts = nn.concat_backward(grad, sizes)
        g_bat = _stack_backward(parts[0], cache["bat_c"], self.batting_branch)
        g_bowl = _stack_backward(parts[1], cache["bowl_c"], self.bowling_branch)
        _stack_backward(parts[2], cache["feat_c"], self.feature_branch)
        if self.has_pitch_branch:
            _stack_backward(parts[3], cache["pitch_c"], self.pitch_branch)
        _embed_backward(self.batting_table, cache["batting"], g_bat)
        _embed_backward(self.bowling_table, cache["bowling"], g_bowl)

    def forward(self, batting, bowling, features, pitch=None) -> np.ndarray:
        out, _ = self.forward_batch(
            np.asarray(batting)[None, :], np.asarray(bowling)[None, :],
            nn.as_f64(features)[None, :],
            None if pitch is None else nn.as_f64(pitch)[None, :])
        return out[0]

    def save(self, path) -> None:
        ctx = self.feature_context
        doc = {"format_version": MODEL_FORMAT_VERSION, "kind": "predictor",
               "config": self.config.to_dict(), "player_ids": self.player_ids,
               "feature_context": {
                   "venue_ids": ctx.venue_ids,
                   "date_min": ctx.date_span[0].isoformat(),
                   "date_max": ctx.date_span[1].isoformat()},
               "params": self._param_blocks()}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
            fh.write("\n")


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def _init_embedding(rng: np.random.Generator, num_players: int, dim: int) -> np.ndarray:
    return nn.l2_normalize(rng.standard_normal((num_players, dim)))


def init_player_model(config: PlayerModelConfig, player_ids: list[str],
                      seed: int) -> PlayerEmbeddingModel:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return PlayerEmbeddingModel(config, player_ids, rng)


def init_predictor(config: PredictorConfig, player_ids: list[str],
                   feature_context: FeatureContext, seed: int,
                   tables: tuple[np.ndarray, np.ndarray] | None = None,
                   freeze_tables: bool = True) -> PredictorModel:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return PredictorModel(config, player_ids, feature_context, rng,
                          tables=tables, freeze_tables=freeze_tables)


def predictor_from_player_model(source: PlayerEmbeddingModel,
                                config: PredictorConfig,
                                feature_context: FeatureContext,
                                seed: int) -> PredictorModel:
    """Transfer the trained embedding tables, frozen, into a fresh predictor."""
    if config.num_players != source.config.num_players:
        raise ConfigurationError("predictor and source disagree on player count")
    if config.embed_dim != source.config.embed_dim:
        raise ConfigurationError("predictor and source disagree on embedding dim")
    return init_predictor(
        config, source.player_ids, feature_context, seed,
        tables=(source.batting_table.rows.value, source.bowling_table.rows.value),
        freeze_tables=True)


def load_model(path):
    """Load either model kind; bit-exact with what was saved."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: not a valid model file ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: unsupported format_version {doc.get('format_version')!r}")
    kind = doc.get("kind")
    rng = np.random.default_rng(0)  # placeholder values, overwritten below
    if kind == "player":
        model = PlayerEmbeddingModel(
            PlayerModelConfig.from_dict(doc["config"]), doc["player_ids"], rng)
    elif kind == "predictor":
        fc = doc["feature_context"]
        ctx = FeatureContext(
            venue_ids=list(fc["venue_ids"]),
            venue_index={v: i for i, v in enumerate(fc["venue_ids"])},
            date_span=(dt.date.fromisoformat(fc["date_min"]),
                       dt.date.fromisoformat(fc["date_max"])))
        model = PredictorModel(
            PredictorConfig.from_dict(doc["config"]), doc["player_ids"], ctx, rng)
    else:
        raise ModelFormatError(f"{path}: unknown model kind {kind!r}")
    try:
        model._load_param_blocks(doc["params"])
    except KeyError as exc:
        raise ModelFormatError(f"{path}: missing field {exc}") from exc
    return model
