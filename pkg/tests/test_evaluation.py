import numpy as np
import pytest

from t20embed import clustering as cl
from t20embed import data, evaluation, models, training
from t20embed.errors import ConfigurationError, ValidationError


@pytest.fixture(scope="module")
def pipeline():
    ds, truth = data.generate_synthetic(data.SyntheticSpec(
        num_players=26, num_venues=8, num_innings=200, noise_sd=0.5,
        venue_sd=1.0, seed=17))
    km = cl.kmeans_1d(ds.run_rates(), 3, seed=17)
    scheme = cl.hierarchical_refine(km, ds.run_rates(), seed=17)
    cfg = models.PlayerModelConfig(
        num_players=ds.num_players, embed_dim=16, branch_dim=16,
        trunk_dims=(16,), head=models.REPRESENTATION, rep_dim=8)
    model = models.init_player_model(cfg, ds.player_ids, seed=17)
    return ds, scheme, model, truth


def test_build_index_shape_and_determinism(pipeline):
    ds, scheme, model, _ = pipeline
    index = evaluation.build_index(model, ds, scheme)
    assert index.reps.shape == (len(ds.records), 8)
    assert np.abs(np.linalg.norm(index.reps, axis=1) - 1.0).max() < 1e-6
    again = evaluation.build_index(model, ds, scheme)
    assert index.reps.tobytes() == again.reps.tobytes()
    assert index.record_ids[:2] == [r.innings_id for r in ds.records[:2]]


def test_build_index_rejects_classifier_head(pipeline):
    ds, scheme, _, _ = pipeline
    clf = models.init_player_model(models.PlayerModelConfig(
        num_players=ds.num_players, embed_dim=16, branch_dim=16,
        trunk_dims=(16,), head=models.CLASSIFIER), ds.player_ids, seed=3)
    with pytest.raises(ConfigurationError):
        evaluation.build_index(clf, ds, scheme)


def test_knn_self_query_returns_own_label(pipeline):
    ds, scheme, model, _ = pipeline
    index = evaluation.build_index(model, ds, scheme)
    for i in (0, 7, 42):
        assert evaluation.classify_by_similarity(index, index.reps[i], k=1) == \
            index.labels[i]


def test_knn_k_equals_n_majority(pipeline):
    ds, scheme, model, _ = pipeline
    index = evaluation.build_index(model, ds, scheme)
    n = len(index.labels)
    counts = np.bincount(index.labels, minlength=4)
    majority = int(np.argmax(counts))
    # with a strict majority, k=n votes that class regardless of the query
    if counts.max() > n - counts.max():
        rng = np.random.default_rng(0)
        q = rng.normal(size=index.reps.shape[1])
        assert evaluation.classify_by_similarity(index, q, k=n) == majority


def knn_oracle(index, query, k):
    """Exhaustive-scan reimplementation of the tie rules."""
    d = np.linalg.norm(index.reps - query, axis=1)
    order = sorted(range(len(d)), key=lambda i: (d[i], i))[:k]
    by_class = {}
    for i in order:
        by_class.setdefault(int(index.labels[i]), []).append(d[i])
    return min(by_class.items(),
               key=lambda kv: (-len(kv[1]), sum(kv[1]), kv[0]))[0]


def test_knn_matches_exhaustive_oracle(pipeline):
    ds, scheme, model, _ = pipeline
    index = evaluation.build_index(model, ds, scheme)
    rng = np.random.default_rng(23)
    for _ in range(200):
        q = evaluation.training.nn.l2_normalize(rng.normal(size=8))
        for k in (1, 3, 5):
            assert evaluation.classify_by_similarity(index, q, k=k) == \
                knn_oracle(index, q, k)


def test_knn_validates_inputs(pipeline):
    ds, scheme, model, _ = pipeline
    index = evaluation.build_index(model, ds, scheme)
    empty = evaluation.RepresentationIndex(
        reps=np.zeros((0, 8)), labels=np.array([], dtype=int), record_ids=[])
    with pytest.raises(ValidationError):
        evaluation.classify_by_similarity(empty, np.zeros(8), k=1)
    with pytest.raises(ValidationError):
        evaluation.classify_by_similarity(index, index.reps[0], k=0)


def test_classify_by_logits():
    assert evaluation.classify_by_logits([0.1, 2.0, 0.3, 0.0]) == 1
    assert evaluation.classify_by_logits([1.0, 1.0, 1.0, 1.0]) == 0
    logits = np.array([0.4, -0.2, 1.7, 0.0])
    assert evaluation.classify_by_logits(logits) == \
        evaluation.classify_by_logits(logits + 123.0)


def test_confusion_and_accuracy_basics():
    preds = [0, 1, 2, 3, 1]
    matrix, acc = evaluation.confusion_and_accuracy(preds, preds)
    assert acc == 1.0
    assert np.trace(matrix.counts) == 5
    preds = [0] * 40
    truths = [0] * 10 + [1] * 10 + [2] * 10 + [3] * 10
    matrix, acc = evaluation.confusion_and_accuracy(preds, truths)
    assert acc == 0.25
    assert list(matrix.counts[:, 0]) == [10, 10, 10, 10]
    with pytest.raises(ValidationError):
        evaluation.confusion_and_accuracy([], [])
    with pytest.raises(ValidationError):
        evaluation.confusion_and_accuracy([0, 1], [0])


def test_confusion_row_sums_match_class_counts():
    rng = np.random.default_rng(4)
    truths = np.repeat(np.arange(4), 10)
    preds = rng.integers(0, 4, size=40)
    matrix, acc = evaluation.confusion_and_accuracy(preds, truths)
    assert list(matrix.counts.sum(axis=1)) == [10, 10, 10, 10]
    assert acc == float(np.mean(preds == truths))
    assert matrix.total == 40


def test_confusion_render_is_plain_text():
    matrix, _ = evaluation.confusion_and_accuracy([0, 1], [0, 1])
    text = matrix.render()
    assert "true\\pred" in text and len(text.splitlines()) == 5


def test_bootstrap_ci_degenerate_cases():
    assert evaluation.bootstrap_ci(np.ones(20), seed=0) == (1.0, 1.0)
    assert evaluation.bootstrap_ci(np.zeros(20), seed=0) == (0.0, 0.0)
    with pytest.raises(ValidationError):
        evaluation.bootstrap_ci(np.array([]), seed=0)
    with pytest.raises(ValidationError):
        evaluation.bootstrap_ci(np.ones(5), resamples=10, seed=0)


def test_bootstrap_ci_matches_binomial_width():
    rng = np.random.default_rng(31)
    flags = rng.integers(0, 2, size=1000)
    lo, hi = evaluation.bootstrap_ci(flags, resamples=2000, seed=7)
    assert lo <= 0.5 <= hi
    width = hi - lo
    expected = 2 * 1.96 * np.sqrt(0.25 / 1000)
    assert abs(width - expected) / expected < 0.3


def test_bootstrap_ci_deterministic():
    flags = np.array([1, 0, 1, 1, 0, 1, 0, 1])
    assert evaluation.bootstrap_ci(flags, seed=3) == evaluation.bootstrap_ci(flags, seed=3)


# ---------------------------------------------------------------------------
# experiment orchestration
# ---------------------------------------------------------------------------

def small_experiment_config():
    return evaluation.ExperimentConfig(
        embed_epochs=3, predict_epochs=3, per_class=5, resamples=200,
        player_model=models.PlayerModelConfig(
            num_players=0, embed_dim=16, branch_dim=16, trunk_dims=(16,),
            rep_dim=8),
        predictor=models.PredictorConfig(
            num_players=0, feature_dim=0, embed_dim=16, branch_dims=(16, 16),
            feature_branch_dim=8, pitch_branch_dim=8, trunk_dims=(24, 12),
            rep_dim=8))


@pytest.fixture(scope="module")
def experiment_data():
    ds, truth = data.generate_synthetic(data.SyntheticSpec(
        num_players=26, num_venues=8, num_innings=240, noise_sd=0.5,
        venue_sd=1.0, seed=29))
    km = cl.kmeans_1d(ds.run_rates(), 3, seed=29)
    scheme = cl.hierarchical_refine(km, ds.run_rates(), seed=29)
    return ds, scheme, data.pitch_embeddings_from_truth(truth)


def test_settings_share_split_for_same_root_seed(experiment_data):
    ds, scheme, pset = experiment_data
    split_seed = evaluation.derive_seed(11, evaluation._STREAM_SPLIT)
    a = data.sample_test_split(ds, scheme, 5, split_seed)
    b = data.sample_test_split(ds, scheme, 5, split_seed)
    assert np.array_equal(a[1], b[1])


def test_run_setting_once_ce_and_contrastive(experiment_data):
    ds, scheme, pset = experiment_data
    cfg = small_experiment_config()
    for objective in ("ce", "contrastive"):
        setting = evaluation.ExperimentSetting(objective=objective, pitch=False)
        report, player, predictor = evaluation.run_setting_once(
            ds, scheme, setting, root_seed=1, cfg=cfg)
        assert report.confusion.total == 20  # 5 per class
        assert list(np.asarray(report.confusion.to_lists()).sum(axis=1)) == [5] * 4
        assert 0.0 <= report.ci95[0] <= report.accuracy <= report.ci95[1] <= 1.0
        assert predictor.batting_table.rows.value.tobytes() == \
            player.batting_table.rows.value.tobytes()


def test_run_setting_pitch_requires_embeddings(experiment_data):
    ds, scheme, pset = experiment_data
    cfg = small_experiment_config()
    setting = evaluation.ExperimentSetting(objective="ce", pitch=True)
    with pytest.raises(ConfigurationError):
        evaluation.run_setting_once(ds, scheme, setting, root_seed=1, cfg=cfg)
    report, _, predictor = evaluation.run_setting_once(
        ds, scheme, setting, root_seed=1, cfg=cfg, pitch_set=pset)
    assert predictor.has_pitch_branch
    assert report.setting["pitch"] == "on"


def test_run_experiment_reports_and_aggregate(experiment_data):
    ds, scheme, pset = experiment_data
    cfg = small_experiment_config()
    setting = evaluation.ExperimentSetting(objective="contrastive", pitch=False)
    reports, agg = evaluation.run_experiment(ds, scheme, setting, [0, 1], cfg)
    assert len(reports) == 2
    assert agg["mean_accuracy"] == pytest.approx(
        np.mean([r.accuracy for r in reports]))
    assert agg["ci95"][0] <= agg["mean_accuracy"] <= agg["ci95"][1]
    assert agg["setting"]["objective"] == "contrastive"


def test_experiment_deterministic(experiment_data):
    ds, scheme, pset = experiment_data
    cfg = small_experiment_config()
    setting = evaluation.ExperimentSetting(objective="ce", pitch=True)
    r1, _, _ = evaluation.run_setting_once(ds, scheme, setting, 5, cfg, pset)
    r2, _, _ = evaluation.run_setting_once(ds, scheme, setting, 5, cfg, pset)
    assert r1.to_dict() == r2.to_dict()


@pytest.fixture(scope="module")
def chance_data():
    # weak venue effect: an untrained network must not see exploitable
    # structure beyond mild random-feature-map correlations
    ds, _ = data.generate_synthetic(data.SyntheticSpec(
        num_players=26, num_venues=8, num_innings=400, noise_sd=0.5,
        venue_sd=0.2, seed=31))
    km = cl.kmeans_1d(ds.run_rates(), 3, seed=31)
    return ds, cl.hierarchical_refine(km, ds.run_rates(), seed=31)


def test_untrained_models_score_near_chance(chance_data):
    # loose band around 0.25 catches label leakage in the evaluation path
    ds, scheme = chance_data
    ctx = ds.feature_context()
    for seed in range(10):
        cfg = models.PlayerModelConfig(
            num_players=ds.num_players, embed_dim=16, branch_dim=16,
            trunk_dims=(16,), head=models.REPRESENTATION, rep_dim=8)
        player = models.init_player_model(cfg, ds.player_ids, seed=seed)
        pd_cfg = models.PredictorConfig(
            num_players=ds.num_players, feature_dim=ctx.feature_dim,
            embed_dim=16, branch_dims=(16, 16), feature_branch_dim=8,
            trunk_dims=(24, 12), head=models.REPRESENTATION, rep_dim=8)
        pred = models.predictor_from_player_model(player, pd_cfg, ctx, seed=seed)
        train_idx, test_idx = data.sample_test_split(ds, scheme, 10, seed=seed)
        train_recs = [ds.records[i] for i in train_idx]
        test_recs = [ds.records[i] for i in test_idx]
        index = evaluation.build_index(pred, ds, scheme, train_recs)
        inputs = training.pack_inputs(pred, ds, test_recs, scheme)
        out, _ = training._forward(pred, inputs, np.arange(len(inputs)))
        preds = [evaluation.classify_by_similarity(index, r, k=1) for r in out]
        _, acc = evaluation.confusion_and_accuracy(preds, inputs.labels)
        assert 0.05 <= acc <= 0.55
