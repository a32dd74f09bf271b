"""Run-rate label construction: 1-D k-means, elbow curve, majority-class split.

The label scheme is built in two stages: k-means over innings run rates, then
one split of the largest cluster into two sub-clusters, giving four classes
ordered by ascending centroid. All randomness is driven by explicit seeds and
restart indices, so a fixed seed yields bit-identical schemes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError, ValidationError

KMEANS_RESTARTS = 10
KMEANS_TOL = 1e-6
KMEANS_MAX_ITER = 200


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray  # ascending, runs/over
    inertia: float


@dataclass
class ElbowCurve:
    points: list[tuple[int, float]]  # (k, dispersion)


@dataclass
class LabelScheme:
    """Four run-rate classes; class ids 0..3 ordered by ascending centroid."""
    class_centroids: np.ndarray
    split_class: int  # index of the initial cluster that was split
    elbow: ElbowCurve | None = field(default=None, repr=False)
    selected_k: int | None = None

    def to_dict(self) -> dict:
        out = {
            "centroids": [float(c) for c in self.class_centroids],
            "provenance": {"split_class": int(self.split_class)},
        }
        if self.elbow is not None:
            out["elbow"] = {
                "k": int(self.selected_k) if self.selected_k is not None else None,
                "curve": [[int(k), float(d)] for k, d in self.elbow.points],
            }
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LabelScheme":
        elbow = None
        selected = None
        if "elbow" in d:
            elbow = ElbowCurve([(int(k), float(v)) for k, v in d["elbow"]["curve"]])
            selected = d["elbow"]["k"]
        return cls(
            class_centroids=np.asarray(d["centroids"], dtype=np.float64),
            split_class=int(d["provenance"]["split_class"]),
            elbow=elbow,
            selected_k=selected,
        )


def _assign(values: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest-centroid index per value; ties go to the lower index."""
    d = np.abs(values[:, None] - centroids[None, :])
    return np.argmin(d, axis=1)


def _kmeans_pp_init(values: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centroids = np.empty(k, dtype=np.float64)
    centroids[0] = values[rng.integers(len(values))]
    for j in range(1, k):
        d2 = np.min((values[:, None] - centroids[None, :j]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0.0:
            # all mass sits on chosen centroids; take any unused distinct value
            remaining = np.setdiff1d(values, centroids[:j])
            centroids[j] = remaining[0]
        else:
            centroids[j] = values[rng.choice(len(values), p=d2 / total)]
    return centroids


def _lloyd(values: np.ndarray, centroids: np.ndarray, max_iter: int,
           tol: float) -> tuple[np.ndarray, float]:
    prev_inertia = np.inf
    for _ in range(max_iter):
        labels = _assign(values, centroids)
        new = centroids.copy()
        for j in range(len(centroids)):
            members = values[labels == j]
            if members.size:
                new[j] = members.mean()
            else:
                # relocate an empty cluster to the point farthest from its centroid
                dist = np.abs(values - centroids[labels])
                new[j] = values[int(np.argmax(dist))]
        new.sort()
        labels = _assign(values, new)
        inertia = float(np.sum((values - new[labels]) ** 2))
        assert inertia <= prev_inertia + 1e-9, "k-means inertia increased"
        shift = np.max(np.abs(new - centroids))
        centroids = new
        prev_inertia = inertia
        if shift < tol:
            break
    return centroids, prev_inertia


def kmeans_1d(values, k: int, max_iter: int = KMEANS_MAX_ITER,
              tol: float = KMEANS_TOL, seed: int = 0) -> ClusterModel:
    """Lloyd's algorithm with k-means++ seeding, best inertia of 10 restarts."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or len(values) < k or k < 1:
        raise DegenerateDataError(f"need >= {k} values, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise DegenerateDataError("non-finite values passed to kmeans_1d")
    if len(np.unique(values)) < k:
        raise DegenerateDataError(
            f"only {len(np.unique(values))} distinct values for k={k}")

    best: tuple[np.ndarray, float] | None = None
    for restart in range(KMEANS_RESTARTS):
        rng = np.random.default_rng(np.random.SeedSequence([seed, restart]))
        init = _kmeans_pp_init(values, k, rng)
        init.sort()
        centroids, inertia = _lloyd(values, init, max_iter, tol)
        if best is None or inertia < best[1]:
            best = (centroids, inertia)
    centroids, inertia = best
    if len(np.unique(centroids)) != k:
        raise DegenerateDataError("k-means produced duplicate centroids")
    return ClusterModel(k=k, centroids=centroids, inertia=inertia)


def elbow_curve(values, k_min: int, k_max: int, seed: int = 0) -> ElbowCurve:
    """Best-of-restarts inertia for each k in [k_min, k_max]."""
    if k_min < 1 or k_max < k_min + 2:
        raise ValidationError(f"elbow range needs k_max >= k_min + 2, got [{k_min}, {k_max}]")
    points = []
    for k in range(k_min, k_max + 1):
        model = kmeans_1d(values, k, seed=seed)
        points.append((k, model.inertia))
    return ElbowCurve(points)


def select_elbow(curve: ElbowCurve) -> int:
    """k with the largest discrete second difference; ties toward smaller k."""
    pts = curve.points
    if len(pts) < 3:
        raise ValidationError(f"elbow selection needs >= 3 points, got {len(pts)}")
    best_k, best_curv = None, -np.inf
    for i in range(1, len(pts) - 1):
        curv = pts[i - 1][1] - 2.0 * pts[i][1] + pts[i + 1][1]
        if curv > best_curv:
            best_k, best_curv = pts[i][0], curv
    return best_k


def hierarchical_refine(model: ClusterModel, values, seed: int = 0) -> LabelScheme:
    """Split the most populated of the 3 clusters in two, giving 4 classes."""
    if model.k != 3:
        raise DegenerateDataError(f"refinement is defined for k=3, got k={model.k}")
    values = np.asarray(values, dtype=np.float64)
    labels = _assign(values, model.centroids)
    counts = np.bincount(labels, minlength=3)
    majority = int(np.argmax(counts))  # argmax ties break toward lower centroid
    members = values[labels == majority]
    if len(np.unique(members)) < 2:
        raise DegenerateDataError(
            f"majority class {majority} has <2 distinct values, cannot split")
    sub = kmeans_1d(members, 2, seed=seed)
    centroids = np.concatenate([
        np.delete(model.centroids, majority), sub.centroids])
    centroids.sort()
    return LabelScheme(class_centroids=centroids, split_class=majority)


def assign_class(scheme: LabelScheme, run_rate: float) -> int:
    """Class id of the nearest centroid; midpoint ties go to the lower id."""
    if not np.isfinite(run_rate) or run_rate < 0:
        raise ValidationError(f"run rate must be finite and >= 0, got {run_rate}")
    return int(np.argmin(np.abs(scheme.class_centroids - run_rate)))


def assign_classes(scheme: LabelScheme, run_rates) -> np.ndarray:
    values = np.asarray(run_rates, dtype=np.float64)
    if np.any(~np.isfinite(values)) or np.any(values < 0):
        raise ValidationError("run rates must be finite and >= 0")
    return _assign(values, scheme.class_centroids)
