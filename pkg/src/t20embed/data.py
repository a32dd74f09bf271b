"""Innings dataset schema, file IO, feature encoding, and the synthetic oracle.

One innings is a JSONL record: two 11-player lineups, venue, date, observed
run rate, and an optional pitch-text reference. The synthetic generator plants
per-player skills and per-venue offsets so the full pipeline can be validated
against known ground truth.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EncodingError, SplitError, ValidationError
from . import clustering
from .nn import l2_normalize

RUN_RATE_MAX = 36.0  # six runs per ball bounds runs/over

# FNV-1a 64-bit, with two fixed seed offsets for the bucket and sign hashes
_FNV_PRIME = 0x100000001B3
_FNV_OFFSET_BUCKET = 0xCBF29CE484222325
_FNV_OFFSET_SIGN = _FNV_OFFSET_BUCKET ^ 0x9E3779B97F4A7C15
_MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass
class InningsRecord:
    innings_id: str
    match_date: dt.date
    venue_id: str
    batting_lineup: list[str]
    bowling_lineup: list[str]
    run_rate: float
    pitch_text_id: str | None = None

    def validate(self) -> None:
        iid = self.innings_id
        for name, lineup in (("batting_lineup", self.batting_lineup),
                             ("bowling_lineup", self.bowling_lineup)):
            if len(lineup) != 11:
                raise ValidationError(f"innings {iid}: {name} has {len(lineup)} players, need 11")
            if len(set(lineup)) != 11:
                raise ValidationError(f"innings {iid}: {name} contains duplicate player ids")
        if set(self.batting_lineup) & set(self.bowling_lineup):
            raise ValidationError(
                f"innings {iid}: batting_lineup and bowling_lineup overlap")
        if not math.isfinite(self.run_rate) or not 0.0 <= self.run_rate <= RUN_RATE_MAX:
            raise ValidationError(
                f"innings {iid}: run_rate must be finite in [0, {RUN_RATE_MAX}], got {self.run_rate}")

    def to_dict(self) -> dict:
        return {
            "innings_id": self.innings_id,
            "match_date": self.match_date.isoformat(),
            "venue_id": self.venue_id,
            "batting_lineup": list(self.batting_lineup),
            "bowling_lineup": list(self.bowling_lineup),
            "run_rate": self.run_rate,
            "pitch_text_id": self.pitch_text_id,
        }


@dataclass
class Dataset:
    records: list[InningsRecord]
    player_ids: list[str] = field(default_factory=list)
    player_index: dict[str, int] = field(default_factory=dict)
    venue_ids: list[str] = field(default_factory=list)
    venue_index: dict[str, int] = field(default_factory=dict)
    date_span: tuple[dt.date, dt.date] | None = None

    @classmethod
    def from_records(cls, records: list[InningsRecord]) -> "Dataset":
        ds = cls(records=list(records))
        for rec in ds.records:
            rec.validate()
            for pid in list(rec.batting_lineup) + list(rec.bowling_lineup):
                if pid not in ds.player_index:
                    ds.player_index[pid] = len(ds.player_ids)
                    ds.player_ids.append(pid)
            if rec.venue_id not in ds.venue_index:
                ds.venue_index[rec.venue_id] = len(ds.venue_ids)
                ds.venue_ids.append(rec.venue_id)
        if ds.records:
            dates = [r.match_date for r in ds.records]
            ds.date_span = (min(dates), max(dates))
        return ds

    @property
    def num_players(self) -> int:
        return len(self.player_ids)

    def lineup_indices(self, lineup: list[str]) -> np.ndarray:
        try:
            return np.array([self.player_index[p] for p in lineup], dtype=np.int64)
        except KeyError as exc:
            raise EncodingError(f"unknown player id {exc.args[0]!r}") from exc

    def run_rates(self) -> np.ndarray:
        return np.array([r.run_rate for r in self.records], dtype=np.float64)

    def feature_context(self) -> "FeatureContext":
        return FeatureContext(venue_ids=list(self.venue_ids),
                              venue_index=dict(self.venue_index),
                              date_span=self.date_span)


@dataclass
class FeatureContext:
    """Venue index + date span snapshot needed to encode match features."""
    venue_ids: list[str]
    venue_index: dict[str, int]
    date_span: tuple[dt.date, dt.date]

    @property
    def feature_dim(self) -> int:
        return len(self.venue_ids) + 3


def _parse_record(obj: dict, line_no: int) -> InningsRecord:
    iid = obj.get("innings_id")
    if not isinstance(iid, str) or not iid:
        raise ValidationError(f"line {line_no}: missing or invalid innings_id")
    try:
        match_date = dt.date.fromisoformat(obj["match_date"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"innings {iid}: malformed match_date ({exc})") from exc
    try:
        run_rate = float(obj["run_rate"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"innings {iid}: malformed run_rate") from exc
    rec = InningsRecord(
        innings_id=iid,
        match_date=match_date,
        venue_id=str(obj.get("venue_id", "")),
        batting_lineup=[str(p) for p in obj.get("batting_lineup", [])],
        bowling_lineup=[str(p) for p in obj.get("bowling_lineup", [])],
        run_rate=run_rate,
        pitch_text_id=obj.get("pitch_text_id"),
    )
    rec.validate()
    return rec


def load_dataset(path) -> Dataset:
    """Read and validate a JSONL innings file; indices in first-seen order."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"line {line_no}: invalid JSON ({exc})") from exc
            records.append(_parse_record(obj, line_no))
    return Dataset.from_records(records)


def save_dataset(dataset: Dataset, path) -> None:
    """Canonical JSONL: fixed key order, shortest round-trip floats."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in dataset.records:
            fh.write(json.dumps(rec.to_dict(), separators=(",", ":")) + "\n")


# ---------------------------------------------------------------------------
# pitch embeddings
# ---------------------------------------------------------------------------

@dataclass
class PitchEmbeddingSet:
    dim: int
    vectors: dict[str, np.ndarray]

    def get(self, pitch_text_id: str) -> np.ndarray:
        if pitch_text_id not in self.vectors:
            raise EncodingError(f"no pitch embedding for id {pitch_text_id!r}")
        return self.vectors[pitch_text_id]


def load_pitch_embeddings(path) -> PitchEmbeddingSet:
    """Parse the pitch vector file: `dim=<d>` header, tab-separated rows.

    Rows within 1e-3 of unit norm are re-normalized exactly; anything further
    off is rejected. Lines starting with '#' are comments.
    """
    dim = None
    vectors: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            if dim is None:
                if not line.startswith("dim="):
                    raise ValidationError(f"line {line_no}: expected 'dim=<d>' header")
                try:
                    dim = int(line[4:])
                except ValueError as exc:
                    raise ValidationError(f"line {line_no}: bad dim header {line!r}") from exc
                if dim < 1:
                    raise ValidationError(f"line {line_no}: dim must be >= 1")
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValidationError(f"line {line_no}: expected '<id>\\t<values>'")
            pid, values = parts
            if pid in vectors:
                raise ValidationError(f"line {line_no}: duplicate pitch_text_id {pid!r}")
            try:
                vec = np.array([float(v) for v in values.split(",")], dtype=np.float64)
            except ValueError as exc:
                raise ValidationError(f"line {line_no}: unparseable value ({exc})") from exc
            if vec.shape != (dim,):
                raise ValidationError(
                    f"line {line_no}: {vec.shape[0]} values, header says dim={dim}")
            if not np.all(np.isfinite(vec)):
                raise ValidationError(f"line {line_no}: non-finite value")
            norm = float(np.linalg.norm(vec))
            if abs(norm - 1.0) > 1e-3:
                raise ValidationError(
                    f"line {line_no}: vector norm {norm:.6f} not within 1e-3 of 1")
            # renormalize exactly, but keep already-unit rows bit-stable
            vectors[pid] = vec / norm if abs(norm - 1.0) > 1e-12 else vec
    if dim is None:
        raise ValidationError(f"{path}: missing 'dim=<d>' header")
    return PitchEmbeddingSet(dim=dim, vectors=vectors)


def save_pitch_embeddings(pset: PitchEmbeddingSet, path, model_name: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={pset.dim}\n")
        for pid, vec in pset.vectors.items():
            fh.write(pid + "\t" + ",".join(repr(float(v)) for v in vec) + "\n")
        if model_name:
            fh.write(f"# model={model_name}\n")


# ---------------------------------------------------------------------------
# text hashing fallback
# ---------------------------------------------------------------------------

def _fnv1a64(data: bytes, offset: int) -> int:
    h = offset
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _tokenize(text: str) -> list[str]:
    tokens, current = [], []
    for ch in text.lower():
        if ch.isascii() and (ch.isalpha() or ch.isdigit()):
            current.append(ch)
        elif current:
            tokens.append("".join(current))
            current = []
    if current:
        tokens.append("".join(current))
    return tokens


def hash_vectorize(text: str, dim: int = 64) -> np.ndarray:
    """Signed feature hashing of lowercase alphanumeric tokens, L2-normalized.

    Bucket comes from FNV-1a with the standard offset; the sign from the
    parity of a second FNV-1a with a shifted offset. Empty token sets give
    the zero vector.
    """
    if dim < 8:
        raise ValidationError(f"hash_vectorize needs dim >= 8, got {dim}")
    acc = np.zeros(dim, dtype=np.float64)
    for token in _tokenize(text):
        b = token.encode("utf-8")
        bucket = _fnv1a64(b, _FNV_OFFSET_BUCKET) % dim
        sign = 1.0 if _fnv1a64(b, _FNV_OFFSET_SIGN) & 1 == 0 else -1.0
        acc[bucket] += sign
    return l2_normalize(acc)


# ---------------------------------------------------------------------------
# match features
# ---------------------------------------------------------------------------

def match_features(record: InningsRecord, ctx) -> np.ndarray:
    """One-hot venue + season position in [0,1] + month-of-year (sin, cos)."""
    if record.venue_id not in ctx.venue_index:
        raise EncodingError(
            f"innings {record.innings_id}: unknown venue {record.venue_id!r}")
    num_venues = len(ctx.venue_ids)
    out = np.zeros(num_venues + 3, dtype=np.float64)
    out[ctx.venue_index[record.venue_id]] = 1.0
    lo, hi = ctx.date_span
    span_days = (hi - lo).days
    if span_days > 0:
        pos = (record.match_date - lo).days / span_days
        out[num_venues] = min(max(pos, 0.0), 1.0)
    angle = 2.0 * math.pi * record.match_date.month / 12.0
    out[num_venues + 1] = math.sin(angle)
    out[num_venues + 2] = math.cos(angle)
    return out


def feature_matrix(records: list[InningsRecord], ctx) -> np.ndarray:
    return np.stack([match_features(r, ctx) for r in records])


# ---------------------------------------------------------------------------
# synthetic oracle
# ---------------------------------------------------------------------------

@dataclass
class SyntheticSpec:
    num_players: int = 44
    num_venues: int = 12
    num_innings: int = 1000
    skill_dim: int = 4
    noise_sd: float = 0.5
    venue_sd: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        if self.num_players < 22:
            raise ValidationError(f"num_players must be >= 22, got {self.num_players}")
        if self.num_innings < 40:
            raise ValidationError(f"num_innings must be >= 40, got {self.num_innings}")
        if self.noise_sd < 0 or self.venue_sd < 0:
            raise ValidationError("noise_sd and venue_sd must be >= 0")
        if self.num_venues < 1 or self.skill_dim < 1:
            raise ValidationError("num_venues and skill_dim must be >= 1")

    def to_dict(self) -> dict:
        return {
            "num_players": self.num_players, "num_venues": self.num_venues,
            "num_innings": self.num_innings, "skill_dim": self.skill_dim,
            "noise_sd": self.noise_sd, "venue_sd": self.venue_sd, "seed": self.seed,
        }


@dataclass
class SyntheticTruth:
    spec: SyntheticSpec
    player_ids: list[str]
    batting_skill: np.ndarray  # (players, skill_dim)
    bowling_skill: np.ndarray
    venue_ids: list[str]
    venue_offsets: np.ndarray  # (venues,), runs/over
    # per-innings surface condition: venue offset + the match-day component
    # of the noise term that a pre-match pitch report would observe
    pitch_ids: list[str] = field(default_factory=list)
    surface: np.ndarray = field(default_factory=lambda: np.zeros(0))
    alpha: float = 1.5
    beta: float = 1.5
    base_rate: float = 8.0
    clamp: tuple[float, float] = (0.5, RUN_RATE_MAX)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "player_ids": self.player_ids,
            "batting_skill": self.batting_skill.tolist(),
            "bowling_skill": self.bowling_skill.tolist(),
            "venue_ids": self.venue_ids,
            "venue_offsets": self.venue_offsets.tolist(),
            "pitch_ids": self.pitch_ids,
            "surface": self.surface.tolist(),
            "alpha": self.alpha, "beta": self.beta,
            "base_rate": self.base_rate, "clamp": list(self.clamp),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticTruth":
        return cls(
            spec=SyntheticSpec(**d["spec"]),
            player_ids=list(d["player_ids"]),
            batting_skill=np.asarray(d["batting_skill"], dtype=np.float64),
            bowling_skill=np.asarray(d["bowling_skill"], dtype=np.float64),
            venue_ids=list(d["venue_ids"]),
            venue_offsets=np.asarray(d["venue_offsets"], dtype=np.float64),
            pitch_ids=list(d["pitch_ids"]),
            surface=np.asarray(d["surface"], dtype=np.float64),
            alpha=d["alpha"], beta=d["beta"], base_rate=d["base_rate"],
            clamp=tuple(d["clamp"]),
        )


def planted_run_rate(truth: SyntheticTruth, batting: np.ndarray,
                     bowling: np.ndarray, venue: int, noise: float) -> float:
    """clamp(base + alpha*mean(bat skill) - beta*mean(bowl skill) + venue + noise)."""
    raw = (truth.base_rate
           + truth.alpha * truth.batting_skill[batting, 0].mean()
           - truth.beta * truth.bowling_skill[bowling, 0].mean()
           + truth.venue_offsets[venue] + noise)
    return float(min(max(raw, truth.clamp[0]), truth.clamp[1]))


# share of the noise term that a pre-match pitch report observes (match-day
# surface conditions); the remainder is in-play randomness
SURFACE_NOISE_SHARE = 0.7


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, SyntheticTruth]:
    """Draw planted skills/offsets and emit a fully validated Dataset."""
    spec.validate()
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    player_ids = [f"p{i:04d}" for i in range(spec.num_players)]
    venue_ids = [f"v{i:03d}" for i in range(spec.num_venues)]
    truth = SyntheticTruth(
        spec=spec,
        player_ids=player_ids,
        batting_skill=rng.standard_normal((spec.num_players, spec.skill_dim)),
        bowling_skill=rng.standard_normal((spec.num_players, spec.skill_dim)),
        venue_ids=venue_ids,
        venue_offsets=rng.normal(0.0, spec.venue_sd, spec.num_venues),
    )
    surface_sd = spec.noise_sd * SURFACE_NOISE_SHARE
    rest_sd = spec.noise_sd * math.sqrt(1.0 - SURFACE_NOISE_SHARE ** 2)
    base_date = dt.date(2012, 4, 1)
    records = []
    surface = []
    for i in range(spec.num_innings):
        chosen = rng.choice(spec.num_players, size=22, replace=False)
        batting, bowling = chosen[:11], chosen[11:]
        venue = int(rng.integers(spec.num_venues))
        day_offset = int(rng.integers(0, 2922))  # 2012 through 2019
        eps = rng.standard_normal(2)
        surface_noise = float(eps[0]) * surface_sd
        noise = surface_noise + float(eps[1]) * rest_sd
        innings_id = f"synth-{i:05d}"
        records.append(InningsRecord(
            innings_id=innings_id,
            match_date=base_date + dt.timedelta(days=day_offset),
            venue_id=venue_ids[venue],
            batting_lineup=[player_ids[p] for p in batting],
            bowling_lineup=[player_ids[p] for p in bowling],
            run_rate=planted_run_rate(truth, batting, bowling, venue, noise),
            pitch_text_id=f"pitch-{innings_id}",
        ))
        truth.pitch_ids.append(f"pitch-{innings_id}")
        surface.append(truth.venue_offsets[venue] + surface_noise)
    truth.surface = np.array(surface, dtype=np.float64)
    return Dataset.from_records(records), truth


def save_truth(truth: SyntheticTruth, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth.to_dict(), fh, indent=2)
        fh.write("\n")


def load_truth(path) -> SyntheticTruth:
    with open(path, "r", encoding="utf-8") as fh:
        return SyntheticTruth.from_dict(json.load(fh))


def pitch_embeddings_from_truth(truth: SyntheticTruth) -> PitchEmbeddingSet:
    """Unit-norm 4-dim vectors encoding each innings' surface condition.

    The surface condition is the venue offset plus the match-day component of
    the noise term, i.e. what a pre-match pitch report describes. The first
    two coordinates trace a quarter circle as the surface goes from
    bowler-friendly to batting-friendly; the rest are constant padding.
    """
    s = truth.surface
    lo, hi = float(s.min()), float(s.max())
    spread = hi - lo
    vectors = {}
    for pid, value in zip(truth.pitch_ids, s):
        theta = math.pi * ((value - lo) / spread if spread > 0 else 0.5)
        vec = np.array([math.cos(theta), math.sin(theta), 1.0, 1.0]) / math.sqrt(3.0)
        vectors[pid] = vec
    return PitchEmbeddingSet(dim=4, vectors=vectors)


_PITCH_PHRASES = (
    "green seaming track with plenty of movement, bowlers should stay on top",
    "fresh balanced surface with even bounce, a par total looks likely",
    "flat dry batting paradise and short boundaries, expect a very big total",
)


def synthetic_pitch_texts(truth: SyntheticTruth) -> list[dict]:
    """Pitch-report texts whose wording tracks the planted surface condition."""
    s = truth.surface
    sd = float(s.std()) or 1.0
    texts = []
    for pid, value in zip(truth.pitch_ids, s):
        if value < -0.5 * sd:
            phrase = _PITCH_PHRASES[0]
        elif value > 0.5 * sd:
            phrase = _PITCH_PHRASES[2]
        else:
            phrase = _PITCH_PHRASES[1]
        texts.append({"pitch_text_id": pid, "text": f"{phrase}, report {pid}"})
    return texts


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def sample_test_split(dataset: Dataset, scheme: clustering.LabelScheme,
                      per_class: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw per_class test records from each run-rate class, without replacement.

    Returns (train_indices, test_indices) into dataset.records, both sorted.
    """
    labels = clustering.assign_classes(scheme, dataset.run_rates())
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    test_idx = []
    for cls in range(len(scheme.class_centroids)):
        members = np.flatnonzero(labels == cls)
        if len(members) < per_class:
            raise SplitError(
                f"class {cls} has {len(members)} members, need {per_class}")
        if per_class > 0:
            test_idx.append(rng.choice(members, size=per_class, replace=False))
    test = np.sort(np.concatenate(test_idx)) if test_idx else np.array([], dtype=np.int64)
    mask = np.ones(len(dataset.records), dtype=bool)
    mask[test] = False
    return np.flatnonzero(mask), test
