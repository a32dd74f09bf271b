import numpy as np
import pytest

from t20embed import clustering as cl
from t20embed.errors import DegenerateDataError, ValidationError


def three_gaussian_sample(seed, n_per=100, means=(6.0, 8.0, 10.0), sd=0.3):
    rng = np.random.default_rng(seed)
    return np.concatenate([rng.normal(m, sd, n_per) for m in means])


def run_rate_sample(seed, n=600, means=(5.5, 8.0, 10.5), weights=(0.15, 0.7, 0.15), sd=0.4):
    """Three-Gaussian run-rate proxy with the majority sitting in the middle."""
    rng = np.random.default_rng(seed)
    comps = rng.choice(3, size=n, p=weights)
    return rng.normal(np.take(means, comps), sd)


def test_kmeans_separated_masses():
    model = cl.kmeans_1d([1.0, 1.0, 1.0, 9.0, 9.0, 9.0], k=2, seed=0)
    assert np.allclose(model.centroids, [1.0, 9.0])
    assert model.inertia == 0.0


def test_kmeans_k1_is_mean():
    values = [2.0, 4.0, 9.0]
    model = cl.kmeans_1d(values, k=1, seed=3)
    assert np.allclose(model.centroids, [np.mean(values)])


def test_kmeans_recovers_generative_means():
    values = three_gaussian_sample(seed=42)
    model = cl.kmeans_1d(values, k=3, seed=1)
    assert np.max(np.abs(model.centroids - np.array([6.0, 8.0, 10.0]))) < 0.2


def test_kmeans_degenerate_data():
    with pytest.raises(DegenerateDataError):
        cl.kmeans_1d([5.0, 5.0, 5.0], k=2, seed=0)


def test_kmeans_deterministic():
    values = three_gaussian_sample(seed=7)
    a = cl.kmeans_1d(values, k=3, seed=11)
    b = cl.kmeans_1d(values, k=3, seed=11)
    assert a.centroids.tobytes() == b.centroids.tobytes()
    assert a.inertia == b.inertia


def test_elbow_curve_flat_after_true_k():
    values = np.array([1.0, 1.01, 0.99, 5.0, 5.01, 4.99, 9.0, 9.01, 8.99])
    curve = cl.elbow_curve(values, 1, 5, seed=0)
    disp = dict(curve.points)
    assert disp[3] < 1e-3
    assert disp[4] <= disp[3] + 1e-12


def test_elbow_curve_range_precondition():
    with pytest.raises(ValidationError):
        cl.elbow_curve([1.0, 2.0, 3.0], 1, 2, seed=0)


def test_elbow_dispersion_non_increasing():
    values = three_gaussian_sample(seed=3)
    curve = cl.elbow_curve(values, 1, 8, seed=5)
    disp = [d for _, d in curve.points]
    assert all(disp[i + 1] <= disp[i] + 1e-9 for i in range(len(disp) - 1))


def test_select_elbow_hand_case():
    curve = cl.ElbowCurve([(1, 100.0), (2, 30.0), (3, 28.0), (4, 27.0)])
    assert cl.select_elbow(curve) == 2


def test_select_elbow_three_gaussian_run_rates():
    # majority-in-the-middle mixture, the shape run-rate data takes
    for seed in range(5):
        values = run_rate_sample(seed)
        assert cl.select_elbow(cl.elbow_curve(values, 1, 8, seed=seed)) == 3


def test_select_elbow_linear_tie_goes_low():
    curve = cl.ElbowCurve([(1, 40.0), (2, 30.0), (3, 20.0), (4, 10.0)])
    assert cl.select_elbow(curve) == 2


def test_select_elbow_too_few_points():
    with pytest.raises(ValidationError):
        cl.select_elbow(cl.ElbowCurve([(1, 5.0), (2, 1.0)]))


def test_refine_splits_majority_against_rerun_oracle():
    rng = np.random.default_rng(4)
    values = np.concatenate([
        rng.normal(5.0, 0.1, 40),
        rng.normal(7.6, 0.1, 60), rng.normal(8.4, 0.1, 60),
        rng.normal(11.0, 0.1, 40),
    ])
    model = cl.kmeans_1d(values, 3, seed=9)
    scheme = cl.hierarchical_refine(model, values, seed=9)
    assert scheme.split_class == 1
    assert len(scheme.class_centroids) == 4
    assert np.all(np.diff(scheme.class_centroids) > 0)
    # oracle: independently rerun 2-means on the majority members
    labels = np.argmin(np.abs(values[:, None] - model.centroids[None, :]), axis=1)
    members = values[labels == 1]
    sub = cl.kmeans_1d(members, 2, seed=9)
    assert 5.0 < sub.centroids[0] < sub.centroids[1] < 11.0
    assert np.allclose(np.sort(np.concatenate(
        [np.delete(model.centroids, 1), sub.centroids])), scheme.class_centroids)


def test_refine_separates_duplicated_mass():
    values = np.array([2.0] * 10 + [5.0] * 10 + [5.2] * 10 + [9.0] * 10)
    model = cl.kmeans_1d(values, 3, seed=0)
    scheme = cl.hierarchical_refine(model, values, seed=0)
    assert np.allclose(scheme.class_centroids, [2.0, 5.0, 5.2, 9.0])


def test_refine_tie_splits_lowest_centroid_class():
    values = np.array([1.9] * 5 + [2.1] * 5 + [5.0] * 10 + [8.0] * 10)
    model = cl.kmeans_1d(values, 3, seed=2)
    scheme = cl.hierarchical_refine(model, values, seed=2)
    assert scheme.split_class == 0
    assert np.allclose(scheme.class_centroids, [1.9, 2.1, 5.0, 8.0])


def test_refine_requires_k3():
    model = cl.kmeans_1d([1.0, 2.0, 8.0, 9.0], 2, seed=0)
    with pytest.raises(DegenerateDataError):
        cl.hierarchical_refine(model, [1.0, 2.0, 8.0, 9.0], seed=0)


def test_refine_degenerate_split():
    values = np.array([2.0] * 20 + [5.0] * 30 + [9.0] * 10)
    model = cl.kmeans_1d(values, 3, seed=0)
    with pytest.raises(DegenerateDataError):
        cl.hierarchical_refine(model, values, seed=0)


def test_assign_class_rules():
    scheme = cl.LabelScheme(
        class_centroids=np.array([4.0, 6.0, 8.0, 10.0]), split_class=1)
    assert cl.assign_class(scheme, 6.0) == 1
    assert cl.assign_class(scheme, 5.0) == 0  # midpoint tie -> lower id
    assert cl.assign_class(scheme, 9.0) == 2
    with pytest.raises(ValidationError):
        cl.assign_class(scheme, -0.1)


def test_assign_class_partitions_all_rates():
    scheme = cl.LabelScheme(
        class_centroids=np.array([4.0, 6.0, 8.0, 10.0]), split_class=1)
    rng = np.random.default_rng(8)
    rates = np.concatenate([rng.uniform(0, 36, 200), [0.0, 36.0, 5.0, 7.0, 9.0]])
    ids = cl.assign_classes(scheme, rates)
    assert ids.min() >= 0 and ids.max() <= 3
    for r, i in zip(rates, ids):
        assert cl.assign_class(scheme, float(r)) == i


def test_refine_self_consistency_on_separated_data():
    values = np.array([2.0] * 30 + [5.0] * 30 + [5.4] * 30 + [9.0] * 30)
    model = cl.kmeans_1d(values, 3, seed=1)
    scheme = cl.hierarchical_refine(model, values, seed=1)
    # every training value lands in the class of the sub-cluster it was
    # assigned to during refinement
    labels3 = np.argmin(np.abs(values[:, None] - model.centroids[None, :]), axis=1)
    sub = cl.kmeans_1d(values[labels3 == scheme.split_class], 2, seed=1)
    for v, l3 in zip(values, labels3):
        if l3 == scheme.split_class:
            expected_centroid = sub.centroids[np.argmin(np.abs(sub.centroids - v))]
        else:
            expected_centroid = model.centroids[l3]
        expected_class = int(np.argmin(np.abs(scheme.class_centroids - expected_centroid)))
        assert cl.assign_class(scheme, float(v)) == expected_class


def test_refine_improves_largest_share_on_unimodal_data():
    rng = np.random.default_rng(12)
    values = np.clip(rng.normal(8.0, 1.2, 500), 0.5, 36.0)
    model = cl.kmeans_1d(values, 3, seed=3)
    scheme = cl.hierarchical_refine(model, values, seed=3)
    labels3 = np.argmin(np.abs(values[:, None] - model.centroids[None, :]), axis=1)
    labels4 = cl.assign_classes(scheme, values)
    share3 = np.bincount(labels3, minlength=3).max() / len(values)
    counts4 = np.bincount(labels4, minlength=4)
    assert np.all(counts4 > 0)
    assert counts4.max() / len(values) < share3


def test_scheme_round_trips_through_dict():
    values = run_rate_sample(seed=5)
    curve = cl.elbow_curve(values, 1, 8, seed=5)
    model = cl.kmeans_1d(values, 3, seed=5)
    scheme = cl.hierarchical_refine(model, values, seed=5)
    scheme.elbow = curve
    scheme.selected_k = cl.select_elbow(curve)
    again = cl.LabelScheme.from_dict(scheme.to_dict())
    assert again.class_centroids.tobytes() == scheme.class_centroids.tobytes()
    assert again.split_class == scheme.split_class
    assert again.selected_k == 3
