"""Command-line entry point: ``mtsent {train,evaluate,predict,baseline,features,summarize}``.

Exit codes: 0 success, 1 configuration or input error, 2 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .corpus import (
    Dataset,
    LabelScale,
    Split,
    WeightScheme,
    class_distribution,
    class_weights,
    read_dataset,
    tokenize,
)
from .embed import EmbeddingTable, load_vectors, nbow_matrix
from .errors import ConfigError, MtsentError, NonFiniteGradient, NonFiniteLoss, ScaleMismatch
from .lexfeat import FeaturePipelineConfig, LexiconKind, LexiconSource, feature_matrix
from .linear import CVPlan, C_GRID, Strategy, grid_search_cv, write_tuning_report
from .metrics import EvalReport, evaluate, write_fig2_rows
from .multitask import MultitaskNetwork, load_network, save_network
from .optim import TaskData, dev_evaluator, train_multitask, train_singletask

log = logging.getLogger("mtsent")

FINE_TASK = ("fine", 5)
TERNARY_TASK = ("ternary", 3)
_DATASETS = {
    "fine_train": (LabelScale.FINE_GRAINED, Split.TRAIN),
    "fine_dev": (LabelScale.FINE_GRAINED, Split.DEV),
    "fine_test": (LabelScale.FINE_GRAINED, Split.TEST),
    "ternary_train": (LabelScale.TERNARY, Split.TRAIN),
    "ternary_dev": (LabelScale.TERNARY, Split.DEV),
    "ternary_test": (LabelScale.TERNARY, Split.TEST),
}


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).resolve().parent)
        if out.returncode == 0 and out.stdout.strip():
            return f"v{__version__}-{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


def _load(cfg: RunConfig, key: str) -> Dataset | None:
    path = cfg.path(key)
    if path is None:
        return None
    scale, split = _DATASETS[key]
    try:
        return read_dataset(path, scale, split)
    except MtsentError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _texts(ds: Dataset) -> list[str]:
    return [ex.tweet.raw_text for ex in ds.examples]


def _extras(ds: Dataset, feats: FeaturePipelineConfig | None):
    if feats is None:
        return None
    return feature_matrix(_texts(ds), ds.token_lists, feats)


def build_vocab(train_sets, other_sets, pretrained: EmbeddingTable | None) -> list[str]:
    """Training words, then held-out words that have a pretrained vector, in first-seen order."""
    words = {}
    for ds in train_sets:
        for toks in ds.token_lists:
            words.update(dict.fromkeys(toks))
    if pretrained is not None:
        for ds in other_sets:
            for toks in ds.token_lists:
                words.update((t, None) for t in toks if t in pretrained.vocab)
    return list(words)


def _task_data(net: MultitaskNetwork, ds: Dataset, feats, weighted: bool) -> TaskData:
    cw = None
    if weighted:
        counts = class_distribution(ds)
        cw = class_weights(np.maximum(counts, 1), WeightScheme.INVERSE_FREQUENCY).weights
    return TaskData([net.encode(t) for t in ds.token_lists], ds.labels, _extras(ds, feats), cw)


def _feature_meta(feats: FeaturePipelineConfig | None, sources) -> dict:
    if feats is None:
        return {}
    return {"lexicons": [{"name": s.name, "kind": s.kind.value, "path": s.path} for s in sources]}


def _features_from_meta(meta: dict) -> FeaturePipelineConfig | None:
    if "lexicons" not in meta.get("features", {}):
        return None
    sources = [LexiconSource(d["name"], LexiconKind(d["kind"]), d["path"]) for d in meta["features"]["lexicons"]]
    return FeaturePipelineConfig.from_sources(sources)


def _run_dir(out: str | None, cfg: RunConfig, suffix: str = "") -> Path:
    if out is not None:
        path = Path(out)
    else:
        path = cfg.runs_dir / f"{time.strftime('%Y%m%dT%H%M%S')}-{cfg.seed}{suffix}"
    if (path / "run.json").exists():
        raise ConfigError(f"run directory {path} is finalized; choose another --out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _finalize(run_dir: Path, cfg: RunConfig, command: str, metrics: dict, started: float, outputs: dict):
    record = {
        "run_id": run_dir.name,
        "command": command,
        "seed": cfg.seed,
        "config": cfg.snapshot(),
        "config_path": cfg.source,
        "version": version_string(),
        "metrics": metrics,
        "wall_time_s": round(time.time() - started, 3),
        "outputs": outputs,
    }
    (run_dir / "run.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _print_report(report: EvalReport, title: str) -> None:
    print(f"# {title}")
    sys.stdout.write(report.to_text())
    sys.stdout.write(report.per_class_table())
    sys.stdout.write(report.confusion_table())


# -- commands --------------------------------------------------------------


def cmd_train(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    single = args.single_task
    if single and "p_M" in cfg.train:
        log.warning("--single-task given: ignoring train.p_M=%s from the config", cfg.train["p_M"])
        cfg.train = {k: v for k, v in cfg.train.items() if k != "p_M"}
    if not single and cfg.path("ternary_train") is None:
        raise ConfigError("multitask training needs data.ternary_train (or pass --single-task)", None, cfg.source)
    tc = cfg.train_config()

    pretrained = load_vectors(cfg.path("embeddings"), cfg.embedding_dim) if cfg.path("embeddings") else None
    if pretrained is not None and cfg.network.get("embed_dim", pretrained.dim) != pretrained.dim:
        raise ConfigError(f"network.embed_dim={cfg.network['embed_dim']} but vectors have dim {pretrained.dim}",
                          None, cfg.source)
    feats = FeaturePipelineConfig.from_sources(cfg.lexicons) if cfg.use_extra else None
    data = {k: _load(cfg, k) for k in _DATASETS}
    train_keys = ["fine_train"] if single else ["fine_train", "ternary_train"]
    others = [data[k] for k in _DATASETS if k not in train_keys and data[k] is not None]
    vocab = build_vocab([data[k] for k in train_keys], others, pretrained)

    tasks = [FINE_TASK] if single else [FINE_TASK, TERNARY_TASK]
    net_cfg = cfg.network_config(tasks, extra_dim=feats.total_dim if feats else 0)
    if pretrained is not None:
        net_cfg.embed_dim = pretrained.dim
    net = MultitaskNetwork.create(net_cfg, vocab, cfg.seed, pretrained)
    run_dir = _run_dir(args.out, cfg)

    train_sets = [_task_data(net, data[k], feats, tc.weighted_loss) for k in train_keys]
    dev = _task_data(net, data["fine_dev"], feats, False)
    log.info("training %s model: %d parameters, vocabulary %d", "single-task" if single else "multitask",
             net.parameter_count(), len(net.words))
    if single:
        history = train_singletask(net, train_sets[0], dev, tc)
    else:
        history = train_multitask(net, train_sets, dev, tc)

    model_path = run_dir / "model.mtls"
    save_network(net, model_path, {"features": _feature_meta(feats, cfg.lexicons), "seed": cfg.seed})
    (run_dir / "history.tsv").write_text(history.to_tsv(), encoding="utf-8")

    metrics = {"best_epoch": history.best_epoch, "epochs_run": len(history.epochs)}
    dev_report = evaluate(dev.labels, net.predict_ids(dev.ids, dev.extras, 0), 5)
    metrics["dev"] = dev_report.as_dict()
    if data["fine_test"] is not None:
        test = _task_data(net, data["fine_test"], feats, False)
        report = evaluate(test.labels, net.predict_ids(test.ids, test.extras, 0), 5,
                          LabelScale.FINE_GRAINED.classes)
        metrics["test"] = report.as_dict()
        _print_report(report, "fine-grained test")
    print(f"dev mae_macro: {dev_report.mae_macro:.6f}")
    print(f"run directory: {run_dir}")
    _finalize(run_dir, cfg, "train-single" if single else "train-multitask", metrics, started,
              {"model": str(model_path), "history": str(run_dir / "history.tsv")})
    return 0


def _head_for_scale(net: MultitaskNetwork, scale: LabelScale) -> int:
    for i, (_, k) in enumerate(net.config.tasks):
        if k == scale.cardinality:
            return i
    heads = ", ".join(f"{n}({k})" for n, k in net.config.tasks)
    raise ScaleMismatch(f"{scale.label} data ({scale.cardinality} classes) matches no head among: {heads}")


def cmd_evaluate(args) -> int:
    net, meta = load_network(args.model)
    scale = LabelScale.from_name(args.scale)
    task = _head_for_scale(net, scale)
    ds = read_dataset(args.data, scale, Split.TEST)
    feats = _features_from_meta(meta)
    data = _task_data(net, ds, feats, False)
    pred = net.predict_ids(data.ids, data.extras, task)
    report = evaluate(data.labels, pred, scale.cardinality, scale.classes)
    _print_report(report, f"{net.config.tasks[task][0]} head on {args.data}")
    if args.fig2:
        write_fig2_rows([(args.system, report.micro_f1)], sys.stdout)
    if args.out:
        Path(args.out).write_text(
            report.to_text() + "\n" + report.per_class_table() + "\n" + report.confusion_table(), encoding="utf-8")
    return 0


def _read_unlabeled(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            tweet_id, _, text = line.partition("\t")
            rows.append((tweet_id, text))
    return rows


def cmd_predict(args) -> int:
    net, meta = load_network(args.model)
    scale = LabelScale.from_name(args.scale)
    task = _head_for_scale(net, scale)
    if args.labeled:
        ds = read_dataset(args.data, scale, Split.TEST)
        rows = [(ex.tweet.id, ex.tweet.raw_text) for ex in ds.examples]
    else:
        rows = _read_unlabeled(args.data)
    token_lists = [tokenize(text) for _, text in rows]
    feats = _features_from_meta(meta)
    extras = None if feats is None else feature_matrix([t for _, t in rows], token_lists, feats)
    pred = net.predict_ids([net.encode(t) for t in token_lists], extras, task)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for (tweet_id, _), p in zip(rows, pred):
            out.write(f"{tweet_id}\t{scale.classes[p]}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _baseline_features(ds: Dataset, table: EmbeddingTable, feats):
    X = nbow_matrix(ds.token_lists, table)
    if feats is not None:
        X = np.hstack([X, feature_matrix(_texts(ds), ds.token_lists, feats)])
    return X


def cmd_baseline(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    bl = cfg.baseline
    strategy = Strategy(args.strategy)
    representation = args.representation or bl.get("representation", "nbow")
    tune_on = args.tune_on or bl.get("tune_on", "train+dev")
    if cfg.path("embeddings") is None:
        raise ConfigError("baselines need embeddings.path for the nbow representation", None, cfg.source)
    table = load_vectors(cfg.path("embeddings"), cfg.embedding_dim)
    feats = FeaturePipelineConfig.from_sources(cfg.lexicons) if representation == "nbow+" else None
    train, dev, test = _load(cfg, "fine_train"), _load(cfg, "fine_dev"), _load(cfg, "fine_test")
    run_dir = _run_dir(args.out, cfg, f"-{strategy.value}")

    parts = [train, dev] if tune_on == "train+dev" else [train]
    X = np.vstack([_baseline_features(ds, table, feats) for ds in parts])
    y = np.concatenate([ds.labels for ds in parts])
    scheme = WeightScheme(bl.get("class_weights", "inverse_frequency"))
    counts = np.bincount(y, minlength=5)
    weights = class_weights(np.maximum(counts, 1), scheme)
    plan = CVPlan(k=bl.get("folds", 10), grid=tuple(bl.get("grid", C_GRID)), seed=cfg.seed)
    result = grid_search_cv(strategy, X, y, plan, n_classes=5, class_weights=weights,
                            seed=cfg.seed, epochs=bl.get("epochs", 100), batch_size=bl.get("batch_size", 32))
    with open(run_dir / "tuning.tsv", "w", encoding="utf-8") as fh:
        write_tuning_report(result, fh)
    model_path = run_dir / "model.npz"
    result.model.save(model_path)
    print(f"{strategy.value} ({representation}): best C = {result.best_C:g} "
          f"(cv MAE_M {result.mean_mae[result.best_C]:.6f}); {len(result.records)} CV fits")
    metrics = {"best_C": result.best_C, "cv_mae_macro": result.mean_mae[result.best_C],
               "n_cv_fits": len(result.records)}
    if test is not None:
        report = evaluate(test.labels, result.model.predict(_baseline_features(test, table, feats)), 5,
                          LabelScale.FINE_GRAINED.classes)
        metrics["test"] = report.as_dict()
        _print_report(report, f"{strategy.value} {representation} test")
    _finalize(run_dir, cfg, f"baseline-{strategy.value}", metrics, started,
              {"model": str(model_path), "tuning": str(run_dir / "tuning.tsv")})
    return 0


def cmd_features(args) -> int:
    cfg = load_config(args.config)
    scale = LabelScale.from_name(args.scale)
    ds = read_dataset(args.data, scale)
    feats = FeaturePipelineConfig.from_sources(cfg.lexicons)
    M = feature_matrix(_texts(ds), ds.token_lists, feats)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("id\t" + "\t".join(feats.manifest) + "\n")
        for ex, row in zip(ds.examples, M):
            fh.write(ex.tweet.id + "\t" + "\t".join(f"{v:.17g}" for v in row) + "\n")
    manifest = out.with_name(out.stem + ".manifest.tsv")
    with open(manifest, "w", encoding="utf-8") as fh:
        for i, name in enumerate(feats.manifest):
            fh.write(f"{i}\t{name}\n")
    print(f"wrote {M.shape[0]} x {M.shape[1]} features to {out} (manifest {manifest})")
    return 0


def _lookup(record: dict, dotted: str):
    node = record
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return None
        node = node[part]
    return node


def cmd_summarize(args) -> int:
    values = []
    for run in args.runs:
        path = Path(run) / "run.json" if Path(run).is_dir() else Path(run)
        try:
            record = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read run record {path}: {exc}") from exc
        value = _lookup(record.get("metrics", {}), args.metric)
        if value is None:
            raise ConfigError(f"{path}: no metric {args.metric!r}")
        values.append(float(value))
    arr = np.array(values)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    print("metric\tn\tmean\tstd")
    print(f"{args.metric}\t{len(arr)}\t{arr.mean():.6f}\t{std:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtsent", description="Fine-grained tweet sentiment with a multitask biLSTM and linear baselines.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--version", action="version", version=f"mtsent {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the biLSTM network (multitask by default)")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="run directory (default: <runs_dir>/<timestamp>-<seed>)")
    p.add_argument("--single-task", action="store_true", help="train the fine-grained head alone")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved network on a labeled dataset")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--scale", default="fine", help="fine or ternary")
    p.add_argument("--fig2", action="store_true", help="also print a system<TAB>micro_f1 row")
    p.add_argument("--system", default="biLSTM+Multitask")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="label tweets with a saved network")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("--data", required=True, help="id<TAB>text lines")
    p.add_argument("--scale", default="fine")
    p.add_argument("--labeled", action="store_true", help="input is id<TAB>label<TAB>text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("baseline", help="tune and train a linear baseline")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--strategy", required=True, choices=[s.value for s in Strategy])
    p.add_argument("--representation", choices=["nbow", "nbow+"])
    p.add_argument("--tune-on", choices=["train", "train+dev"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("features", help="write the hand-crafted feature matrix of a dataset")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--scale", default="fine")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("summarize", help="mean and standard deviation of a metric across runs")
    p.add_argument("runs", nargs="+")
    p.add_argument("--metric", default="test.mae_macro")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NonFiniteGradient, NonFiniteLoss) as exc:
        print(f"error: training aborted: {exc}", file=sys.stderr)
        return 2
    except (MtsentError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
