"""Command-line pipeline: synthesize data, build labels, train, evaluate.

Every command takes an optional JSON config file (--config) whose keys match
the long flag names; explicit flags win. Each command writes an echo of its
resolved configuration into the output directory, and all randomness flows
from --seed through named sub-streams, so reruns are byte-identical apart
from wall-clock timings.

Exit codes: 0 success, 2 usage/config/validation problems, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, clustering, data, evaluation, models, plots, training
from .errors import NumericError, T20EmbedError

USAGE_EXIT = 2
NUMERIC_EXIT = 3


def _write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(rows, header, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def _echo_config(args: argparse.Namespace, out_dir: Path) -> None:
    echo = {k: v for k, v in sorted(vars(args).items())
            if k not in ("func", "config")}
    echo = {k: (str(v) if isinstance(v, Path) else v) for k, v in echo.items()}
    echo["version"] = __version__
    _write_json(echo, out_dir / "run_config.json")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_scheme(path) -> clustering.LabelScheme:
    with open(path, "r", encoding="utf-8") as fh:
        return clustering.LabelScheme.from_dict(json.load(fh))


def _train_config_from_args(args) -> training.TrainConfig:
    objective = training.CROSS_ENTROPY if args.objective == "ce" \
        else training.CONTRASTIVE
    return training.TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        seed=args.seed, objective=objective,
        contrastive=training.ContrastiveConfig(
            margin=args.margin,
            loss_mode=args.loss_mode.replace("-", "_"),
            pair_balance=args.pair_balance))


def _save_index(index: evaluation.RepresentationIndex, path) -> None:
    _write_json({"record_ids": index.record_ids,
                 "labels": [int(x) for x in index.labels],
                 "reps": [[float(v) for v in row] for row in index.reps]}, path)


def _load_index(path) -> evaluation.RepresentationIndex:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return evaluation.RepresentationIndex(
        reps=np.asarray(doc["reps"], dtype=np.float64),
        labels=np.asarray(doc["labels"], dtype=np.int64),
        record_ids=list(doc["record_ids"]))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_labels(args) -> int:
    out = _out_dir(args)
    dataset = data.load_dataset(args.data)
    values = dataset.run_rates()
    curve = clustering.elbow_curve(values, 1, 8, seed=args.seed)
    selected = clustering.select_elbow(curve)
    # the pipeline is fixed three-then-split; the elbow curve is diagnostic
    model = clustering.kmeans_1d(values, 3, seed=args.seed)
    scheme = clustering.hierarchical_refine(model, values, seed=args.seed)
    scheme.elbow = curve
    scheme.selected_k = selected
    _write_json(scheme.to_dict(), out / "labels.json")
    _write_csv(curve.points, ["k", "dispersion"], out / "elbow.csv")
    plots.save_elbow_plot(curve, selected, out / "elbow.png")
    _echo_config(args, out)
    print(f"label scheme with centroids "
          f"{[round(c, 3) for c in scheme.class_centroids]} -> {out}")
    return 0


def cmd_synth(args) -> int:
    out = _out_dir(args)
    spec = data.SyntheticSpec(
        num_players=args.players, num_venues=args.venues,
        num_innings=args.innings, skill_dim=args.skill_dim,
        noise_sd=args.noise_sd, venue_sd=args.venue_sd, seed=args.seed)
    dataset, truth = data.generate_synthetic(spec)
    ds_path = out / "dataset.jsonl"
    data.save_dataset(dataset, ds_path)
    data.save_truth(truth, Path(str(ds_path) + ".truth.json"))
    if args.pitch_vec:
        data.save_pitch_embeddings(
            data.pitch_embeddings_from_truth(truth), out / "pitch.vec",
            model_name="surface-encoding")
    if args.pitch_texts:
        with open(out / "pitch_texts.jsonl", "w", encoding="utf-8") as fh:
            for row in data.synthetic_pitch_texts(truth):
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    _echo_config(args, out)
    print(f"{spec.num_innings} innings -> {ds_path}")
    return 0


def cmd_train_embed(args) -> int:
    out = _out_dir(args)
    dataset = data.load_dataset(args.data)
    scheme = _load_scheme(args.labels)
    head = models.CLASSIFIER if args.objective == "ce" else models.REPRESENTATION
    cfg = models.PlayerModelConfig(num_players=dataset.num_players, head=head)
    model = models.init_player_model(
        cfg, dataset.player_ids, evaluation.derive_seed(args.seed, 1))
    tcfg = _train_config_from_args(args)
    tcfg.seed = evaluation.derive_seed(args.seed, 2)
    report = training.train_model(model, dataset, scheme, tcfg)
    model.save(out / "model.json")
    report.model_path = "model.json"
    _write_json(report.to_dict(), out / "train_report.json")
    _write_csv(enumerate(report.loss_curve, start=1), ["epoch", "loss"],
               out / "loss_curve.csv")
    plots.save_loss_curve(report.loss_curve,
                          f"player embedding model ({args.objective})",
                          out / "loss_curve.png")
    if head == models.REPRESENTATION:
        _save_index(evaluation.build_index(model, dataset, scheme),
                    out / "index.json")
    _echo_config(args, out)
    print(f"trained player embedding model ({args.objective}) -> {out}")
    return 0


def _resolve_pitch(args, predictor_needs: bool):
    pitch_on = args.pitch == "on"
    if pitch_on and not args.pitch_file:
        raise T20EmbedError("--pitch on requires --pitch-file")
    if not pitch_on and args.pitch_file:
        raise T20EmbedError("--pitch off given together with --pitch-file")
    return data.load_pitch_embeddings(args.pitch_file) if pitch_on else None


def cmd_train_predict(args) -> int:
    out = _out_dir(args)
    dataset = data.load_dataset(args.data)
    scheme = _load_scheme(args.labels)
    source = models.load_model(args.embed_model)
    if not isinstance(source, models.PlayerEmbeddingModel):
        raise T20EmbedError(f"{args.embed_model} is not a player embedding model")
    pitch_set = _resolve_pitch(args, predictor_needs=True)
    head = models.CLASSIFIER if args.objective == "ce" else models.REPRESENTATION
    ctx = dataset.feature_context()
    cfg = models.PredictorConfig(
        num_players=dataset.num_players, feature_dim=ctx.feature_dim, head=head,
        pitch_dim=pitch_set.dim if pitch_set else None)
    predictor = models.predictor_from_player_model(
        source, cfg, ctx, evaluation.derive_seed(args.seed, 3))
    tcfg = _train_config_from_args(args)
    tcfg.seed = evaluation.derive_seed(args.seed, 4)
    report = training.train_predictor(predictor, dataset, scheme, tcfg,
                                      pitch_set=pitch_set)
    predictor.save(out / "model.json")
    report.model_path = "model.json"
    _write_json(report.to_dict(), out / "train_report.json")
    _write_csv(enumerate(report.loss_curve, start=1), ["epoch", "loss"],
               out / "loss_curve.csv")
    plots.save_loss_curve(report.loss_curve,
                          f"predictor ({args.objective}, pitch {args.pitch})",
                          out / "loss_curve.png")
    if head == models.REPRESENTATION:
        _save_index(
            evaluation.build_index(predictor, dataset, scheme,
                                   pitch_set=pitch_set),
            out / "index.json")
    _echo_config(args, out)
    print(f"trained predictor ({args.objective}, pitch {args.pitch}) -> {out}")
    return 0


def _model_inputs_for(model, dataset, scheme, pitch_set):
    return training.pack_inputs(model, dataset, dataset.records, scheme, pitch_set)


def cmd_eval(args) -> int:
    out = _out_dir(args)
    dataset = data.load_dataset(args.data)
    scheme = _load_scheme(args.labels)
    model = models.load_model(args.model)
    mode = args.mode
    if mode == "similarity" and model.config.head != models.REPRESENTATION:
        raise T20EmbedError("--mode similarity needs a representation-head model")
    if mode == "logits" and model.config.head != models.CLASSIFIER:
        raise T20EmbedError("--mode logits needs a classifier-head model")
    pitch_set = None
    if isinstance(model, models.PredictorModel) and model.has_pitch_branch:
        if not args.pitch_file:
            raise T20EmbedError("pitch-configured model needs --pitch-file")
        pitch_set = data.load_pitch_embeddings(args.pitch_file)
    inputs = _model_inputs_for(model, dataset, scheme, pitch_set)
    outvals, _ = training._forward(model, inputs, np.arange(len(inputs)))
    if mode == "logits":
        preds = [evaluation.classify_by_logits(row) for row in outvals]
    else:
        index = _load_index(args.index) if args.index else \
            evaluation.build_index(model, dataset, scheme, pitch_set=pitch_set)
        preds = [evaluation.classify_by_similarity(index, row, k=args.k)
                 for row in outvals]
    matrix, accuracy = evaluation.confusion_and_accuracy(preds, inputs.labels)
    ci = evaluation.bootstrap_ci(np.asarray(preds) == inputs.labels,
                                 seed=evaluation.derive_seed(args.seed, 5))
    report = {"setting": {"mode": mode, "k": args.k}, "seed": args.seed,
              "confusion": matrix.to_lists(), "accuracy": accuracy,
              "ci95": list(ci)}
    _write_json(report, out / "eval_report.json")
    _write_csv(matrix.to_lists(), [f"pred_{c}" for c in range(4)],
               out / "confusion.csv")
    plots.save_confusion_plot(matrix, f"accuracy {accuracy:.3f}",
                              out / "confusion.png")
    _echo_config(args, out)
    print(matrix.render())
    print(f"accuracy {accuracy:.4f}  ci95 [{ci[0]:.4f}, {ci[1]:.4f}]")
    return 0


def cmd_predict(args) -> int:
    model = models.load_model(args.model)
    scheme = _load_scheme(args.labels)
    with open(args.innings, "r", encoding="utf-8") as fh:
        record = data._parse_record(json.load(fh), 1)
    bat = model.lineup_indices(record.batting_lineup)
    bowl = model.lineup_indices(record.bowling_lineup)
    if isinstance(model, models.PredictorModel):
        feats = data.match_features(record, model.feature_context)
        pitch_vec = None
        if model.has_pitch_branch:
            if not args.pitch_file:
                raise T20EmbedError("pitch-configured model needs --pitch-file")
            pitch_set = data.load_pitch_embeddings(args.pitch_file)
            if record.pitch_text_id is None:
                raise T20EmbedError("innings record has no pitch_text_id")
            pitch_vec = pitch_set.get(record.pitch_text_id)
        out = model.forward(bat, bowl, feats, pitch_vec)
    else:
        out = model.forward(bat, bowl)
    if model.config.head == models.CLASSIFIER:
        cls = evaluation.classify_by_logits(out)
        evidence = {"logits": [float(v) for v in out]}
    else:
        if not args.index:
            raise T20EmbedError("representation model needs --index for prediction")
        index = _load_index(args.index)
        cls = evaluation.classify_by_similarity(index, out, k=args.k)
        d = np.linalg.norm(index.reps - out, axis=1)
        order = np.argsort(d, kind="stable")[:args.k]
        evidence = {"neighbors": [
            {"record_id": index.record_ids[i], "class": int(index.labels[i]),
             "distance": float(d[i])} for i in order]}
    print(json.dumps({"class_id": cls,
                      "class_centroid": float(scheme.class_centroids[cls]),
                      "evidence": evidence}, indent=2, sort_keys=True))
    return 0


def cmd_vectorize_fallback(args) -> int:
    vectors = {}
    with open(args.infile, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            pid, text = row.get("pitch_text_id"), row.get("text", "")
            if not pid:
                raise T20EmbedError(f"line {line_no}: missing pitch_text_id")
            if pid in vectors:
                raise T20EmbedError(f"line {line_no}: duplicate pitch_text_id {pid!r}")
            vec = data.hash_vectorize(text, dim=args.dim)
            if not np.any(vec):
                raise T20EmbedError(
                    f"line {line_no}: text for {pid!r} has no tokens")
            vectors[pid] = vec
    pset = data.PitchEmbeddingSet(dim=args.dim, vectors=vectors)
    data.save_pitch_embeddings(pset, args.outfile,
                               model_name=f"hash-fallback:{args.dim}")
    print(f"{len(vectors)} pitch vectors -> {args.outfile}")
    return 0


def cmd_experiment(args) -> int:
    out = _out_dir(args)
    dataset = data.load_dataset(args.data)
    scheme = _load_scheme(args.labels)
    pitch_set = data.load_pitch_embeddings(args.pitch_file) if args.pitch_file \
        else None
    seeds = [int(s) for s in str(args.seeds).split(",")]
    cfg = evaluation.ExperimentConfig(
        embed_epochs=args.embed_epochs, predict_epochs=args.predict_epochs,
        batch_size=args.batch_size, lr=args.lr, margin=args.margin,
        loss_mode=args.loss_mode.replace("-", "_"),
        pair_balance=args.pair_balance, per_class=args.per_class)
    settings = [evaluation.ExperimentSetting(objective=o, pitch=p, k=args.k)
                for o in ("ce", "contrastive")
                for p in ((False, True) if pitch_set else (False,))]
    aggregates = []
    summary_rows = []
    for setting in settings:
        reports = []
        for seed in seeds:
            report, _, _ = evaluation.run_setting_once(
                dataset, scheme, setting, seed, cfg, pitch_set)
            seed_dir = out / setting.name / f"seed_{seed}"
            seed_dir.mkdir(parents=True, exist_ok=True)
            _write_json(report.to_dict(), seed_dir / "eval_report.json")
            plots.save_confusion_plot(
                report.confusion, f"{setting.name} seed {seed}",
                seed_dir / "confusion.png")
            reports.append(report)
            summary_rows.append([setting.name, seed, repr(report.accuracy),
                                 repr(report.ci95[0]), repr(report.ci95[1])])
        agg = evaluation.aggregate_reports(setting, reports)
        aggregates.append(agg)
        _write_json(agg, out / f"aggregate_{setting.name}.json")
        print(f"{setting.name}: mean accuracy {agg['mean_accuracy']:.3f} "
              f"ci95 [{agg['ci95'][0]:.3f}, {agg['ci95'][1]:.3f}]")
    _write_csv(summary_rows, ["setting", "seed", "accuracy", "ci_lo", "ci_hi"],
               out / "summary.csv")
    plots.save_setting_comparison(aggregates, out / "accuracy_comparison.png")
    _echo_config(args, out)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_train_flags(p: argparse.ArgumentParser, epochs_default: int) -> None:
    p.add_argument("--objective", choices=["ce", "contrastive"], default="ce")
    p.add_argument("--epochs", type=int, default=epochs_default)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--loss-mode", choices=["hinge", "paper-literal"],
                   default="hinge")
    p.add_argument("--pair-balance", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="t20embed",
        description="Player embeddings and run-rate class prediction for T20 innings")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("labels", help="build the 4-class run-rate label scheme")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_labels)

    p = sub.add_parser("synth", help="generate a synthetic innings dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--players", type=int, default=44)
    p.add_argument("--venues", type=int, default=12)
    p.add_argument("--innings", type=int, default=1000)
    p.add_argument("--skill-dim", type=int, default=4)
    p.add_argument("--noise-sd", type=float, default=0.5)
    p.add_argument("--venue-sd", type=float, default=0.2)
    p.add_argument("--pitch-vec", action="store_true",
                   help="also write venue-offset pitch embeddings")
    p.add_argument("--pitch-texts", action="store_true",
                   help="also write synthetic pitch-report texts")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-embed", help="train the player embedding model")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p, epochs_default=60)
    p.set_defaults(func=cmd_train_embed)

    p = sub.add_parser("train-predict",
                       help="train a predictor on frozen embeddings")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--embed-model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pitch", choices=["on", "off"], default="off")
    p.add_argument("--pitch-file")
    _add_train_flags(p, epochs_default=200)
    p.set_defaults(func=cmd_train_predict)

    p = sub.add_parser("eval", help="evaluate a trained model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["logits", "similarity"], required=True)
    p.add_argument("--index", help="representation index JSON (similarity mode)")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--pitch-file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one innings record")
    p.add_argument("--model", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--innings", required=True)
    p.add_argument("--index")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--pitch-file")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("vectorize-pitch-fallback",
                       help="hash-vectorize pitch texts into the embedding format")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--dim", type=int, default=64)
    p.set_defaults(func=cmd_vectorize_fallback)

    p = sub.add_parser("experiment",
                       help="run the objective x pitch setting matrix")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pitch-file")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--embed-epochs", type=int, default=60)
    p.add_argument("--predict-epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--loss-mode", choices=["hinge", "paper-literal"],
                   default="hinge")
    p.add_argument("--pair-balance", type=float, default=0.5)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--k", type=int, default=1)
    p.set_defaults(func=cmd_experiment)

    for name, sp in sub.choices.items():
        sp.add_argument("--config", help="JSON file with flag defaults")
        sp.add_argument("--seed", type=int, default=0)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Let a --config JSON provide defaults that explicit flags override."""
    if "--config" not in argv:
        return argv
    cfg_path = argv[argv.index("--config") + 1]
    with open(cfg_path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise T20EmbedError(f"{cfg_path}: config must be a JSON object")
    extra: list[str] = []
    for key, value in cfg.items():
        flag = "--" + key.replace("_", "-")
        if flag in argv:
            continue  # explicit flag wins
        if isinstance(value, bool):
            if value:
                extra.append(flag)
        else:
            extra.extend([flag, str(value)])
    # insert config-provided flags right after the subcommand
    return argv[:1] + extra + argv[1:]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT
    except (T20EmbedError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT


if __name__ == "__main__":
    sys.exit(main())
