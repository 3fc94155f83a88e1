"""Command-line front end.

Ingestion, experiment orchestration, and plot-ready CSV/JSON reports.
Config comes from an optional JSON file (--config); flags win over file
values.  Re-running the same config with the same seed produces
byte-identical result CSVs.
"""

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

from . import datasets, diffscan, obfuscate, recommend
from .datasets import DatasetError

EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_RUNTIME = 1


class ConfigError(ValueError):
    pass


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):
        return obj.item()
    return obj


def _load_dataset(cfg):
    kind = cfg.get("dataset_kind")
    if kind == "checkins":
        return datasets.load_checkins(cfg["dataset_path"])
    if kind == "movielens":
        return datasets.load_movielens(cfg["dataset_path"])
    if kind == "ratings-csv":
        return datasets.load_ratings_csv(cfg["dataset_path"])
    if kind == "synthetic-ratings":
        return datasets.generate_synthetic(
            cfg.get("n_users", 6040), cfg.get("n_items", 3952),
            cfg.get("n_factors", 20), cfg.get("n_ratings", 1000209),
            cfg["seed"])
    if kind == "clustered-city":
        return datasets.generate_clustered_city(
            n_users=cfg.get("n_users", 500), n_locations=cfg.get("n_locations", 2000),
            seed=cfg["seed"])
    raise ConfigError(f"unknown dataset kind {kind!r}; registered: checkins, "
                      f"movielens, ratings-csv, synthetic-ratings, clustered-city")


def _recommender(cfg) -> diffscan.RecommenderConfig:
    kind = cfg.get("recommender", "topn")
    if kind not in ("topn", "mf"):
        raise ConfigError(f"unknown recommender {kind!r}; registered: topn, mf")
    hyper = recommend.MFHyper(
        n_factors=cfg.get("n_mf_factors", 20),
        learning_rate=cfg.get("learning_rate", 0.005),
        regularization=cfg.get("regularization", 0.02),
        n_epochs=cfg.get("n_epochs", 30))
    return diffscan.RecommenderConfig(kind=kind, top_n=cfg.get("top_n", 5), mf=hyper)


def _metric(cfg) -> diffscan.MetricConfig:
    name = cfg.get("metric", "precision")
    if name not in ("precision", "recall", "rmse", "mae"):
        raise ConfigError(f"unknown metric {name!r}; registered: precision, "
                          f"recall, rmse, mae")
    return diffscan.MetricConfig(name=name)


def _attribute(cfg) -> diffscan.AttributeConfig:
    name = cfg.get("attribute", "density")
    if name not in ("density", "kmeans", "rating", "time"):
        raise ConfigError(f"unknown attribute {name!r}; registered: density, "
                          f"kmeans, rating, time")
    return diffscan.AttributeConfig(name=name, n_chunks=cfg.get("chunks", 10))


def _write_result_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["chunk", "accuracy", "zscore"])
        for row in rows:
            w.writerow(row)


def _write_report(out_dir: Path, cfg, payload, t0):
    payload = dict(payload)
    payload["config"] = {k: v for k, v in cfg.items() if not k.startswith("_")}
    payload["wall_clock_s"] = round(time.time() - t0, 3)
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)


def _dataset_hash(ds) -> str:
    h = hashlib.blake2s(digest_size=12)
    for r in ds.rows:
        h.update(repr(r).encode())
    return h.hexdigest()


def _cached_train_mf(ds, hyper, seed, cache_dir):
    """Disk cache of trained models keyed by (dataset hash, hyper, seed)."""
    if not cache_dir:
        return recommend.train_mf(ds, hyper, seed)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = hashlib.blake2s(
        f"{_dataset_hash(ds)}|{hyper}|{seed}".encode(), digest_size=12).hexdigest()
    path = cache_dir / f"mf_{key}.npz"
    if path.exists():
        return recommend.MFModel.load(path)
    model = recommend.train_mf(ds, hyper, seed)
    model.save(path)
    return model


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------

def _diff_core(cfg, out_dir):
    """Shared by diff / zscore: split, partition, ablate, standardize."""
    ds = _load_dataset(cfg)
    rec, met, attr = _recommender(cfg), _metric(cfg), _attribute(cfg)
    seed = cfg["seed"]
    split = datasets.holdout_split(ds, cfg.get("test_fraction", 0.2), seed)
    partition = diffscan.build_partition(split.train, attr, seed)
    result = diffscan.differential_run(split.train, split.test, partition,
                                       rec, met, seed)
    ztable = diffscan.zscores(result)
    rows = [[l, repr(a), repr(z)]
            for l, a, z in zip(result.labels, result.accuracies, ztable.z)]
    rows.append(["full", repr(result.full_accuracy), ""])
    n_baseline = cfg.get("baseline_trials", 0)
    payload = {"differential": result, "zscores": ztable}
    if n_baseline:
        stats = diffscan.random_removal_baseline(
            split.train, split.test, cfg.get("fraction", 0.1), n_baseline,
            rec, met, seed)
        rows.append(["baseline_mean", repr(stats.mean), ""])
        rows.append(["baseline_std", repr(stats.std), ""])
        payload["baseline"] = stats
    _write_result_csv(out_dir / "result.csv", rows)
    return payload


def cmd_ingest(cfg, out_dir):
    ds = _load_dataset(cfg)
    if isinstance(ds, datasets.CheckinDataset):
        stats = {"users": len(ds.users), "checkins": len(ds),
                 "binary_ratings": ds.n_binary_ratings,
                 "locations": len(ds.locations)}
    else:
        stats = {"users": len(ds.users), "ratings": len(ds), "items": len(ds.items)}
    print(json.dumps(stats, sort_keys=True))
    return {"ingest": stats}


def cmd_split(cfg, out_dir):
    ds = _load_dataset(cfg)
    split = datasets.holdout_split(ds, cfg.get("test_fraction", 0.2), cfg["seed"])
    save = (datasets.save_checkins_csv if isinstance(ds, datasets.CheckinDataset)
            else datasets.save_ratings_csv)
    save(split.train, out_dir / "train.csv")
    save(split.test, out_dir / "test.csv")
    return {"split": {"train_rows": len(split.train), "test_rows": len(split.test)}}


def cmd_synth(cfg, out_dir):
    ds = datasets.generate_synthetic(
        cfg.get("n_users", 6040), cfg.get("n_items", 3952),
        cfg.get("n_factors", 20), cfg.get("n_ratings", 1000209), cfg["seed"])
    datasets.save_ratings_csv(ds, out_dir / "synthetic.csv")
    return {"synth": {"rows": len(ds)}}


def cmd_diff(cfg, out_dir):
    return _diff_core(cfg, out_dir)


def cmd_zscore(cfg, out_dir):
    payload = _diff_core(cfg, out_dir)
    return {"zscores": payload["zscores"]}


def cmd_baseline(cfg, out_dir):
    ds = _load_dataset(cfg)
    rec, met = _recommender(cfg), _metric(cfg)
    seed = cfg["seed"]
    split = datasets.holdout_split(ds, cfg.get("test_fraction", 0.2), seed)
    stats = diffscan.random_removal_baseline(
        split.train, split.test, cfg.get("fraction", 0.1),
        cfg.get("baseline_trials", 20), rec, met, seed)
    _write_result_csv(out_dir / "result.csv",
                      [["baseline_mean", repr(stats.mean), ""],
                       ["baseline_std", repr(stats.std), ""]])
    return {"baseline": stats}


def cmd_stability(cfg, out_dir):
    ds = _load_dataset(cfg)
    rec, met, attr = _recommender(cfg), _metric(cfg), _attribute(cfg)
    seed = cfg["seed"]
    mode = cfg.get("stability_mode", "users")
    if mode == "users":
        report = diffscan.stability_by_users(ds, cfg.get("groups", 4), attr,
                                             rec, met, seed)
    elif mode == "data":
        report = diffscan.stability_by_data(ds, cfg.get("folds", 5), attr,
                                            rec, met, seed)
    else:
        raise ConfigError(f"unknown stability mode {mode!r}; use users or data")
    rows = []
    for g, (res, centered) in enumerate(zip(report.results, report.centered())):
        for l, a, c in zip(res.labels, res.accuracies, centered):
            rows.append([f"{mode[0]}{g}:{l}", repr(a), repr(c)])
    _write_result_csv(out_dir / "result.csv", rows)
    return {"stability": report}


def _halves_with_ztable(cfg):
    """Half A learns density z-scores, Half B is split for application."""
    ds = _load_dataset(cfg)
    rec, met, attr = _recommender(cfg), _metric(cfg), _attribute(cfg)
    seed = cfg["seed"]
    half_a, half_b = datasets.half_split(ds, seed)
    split_a = datasets.holdout_split(half_a, cfg.get("test_fraction", 0.2), seed)
    part_a = diffscan.build_partition(split_a.train, attr, seed)
    res_a = diffscan.differential_run(split_a.train, split_a.test, part_a,
                                      rec, met, seed)
    ztable = diffscan.zscores(res_a)
    split_b = datasets.holdout_split(half_b, cfg.get("test_fraction", 0.2), seed)
    part_b = diffscan.build_partition(split_b.train, attr, seed)
    return rec, met, seed, split_a, split_b, part_b, ztable


def cmd_suppress(cfg, out_dir):
    rec, met, seed, _, split_b, part_b, ztable = _halves_with_ztable(cfg)
    plan = obfuscate.build_suppression_plan(ztable, cfg.get("alpha", 0.3),
                                            cfg.get("beta", 3.0))
    suppressed = obfuscate.suppress(split_b.train, part_b, plan, seed)
    before = diffscan.evaluate(split_b.train, split_b.test, rec, met, seed)
    after = diffscan.evaluate(suppressed, split_b.test, rec, met, seed)
    with open(out_dir / "plan.json", "w", encoding="utf-8") as fh:
        json.dump(plan.to_json_dict(), fh, indent=2, sort_keys=True)
    _write_result_csv(out_dir / "result.csv",
                      [["full", repr(before.value), ""],
                       ["suppressed", repr(after.value), ""]])
    return {"plan": plan, "accuracy_full": before.value,
            "accuracy_suppressed": after.value,
            "rows_kept": len(suppressed), "rows_before": len(split_b.train)}


def cmd_fake(cfg, out_dir):
    ds = _load_dataset(cfg)
    rec, met = _recommender(cfg), _metric(cfg)
    seed = cfg["seed"]
    split = datasets.holdout_split(ds, cfg.get("test_fraction", 0.2), seed)
    pool = obfuscate.generate_fake(split.train, multiplier=cfg.get("multiplier", 10),
                                  seed=seed, hardship=cfg.get("attribute", "density"))
    result = obfuscate.differential_fake_run(split.train, split.test, pool,
                                             rec, met, seed)
    ztable = diffscan.zscores(result)
    rows = [[l, repr(a), repr(z)]
            for l, a, z in zip(result.labels, result.accuracies, ztable.z)]
    rows.append(["full", repr(result.full_accuracy), ""])
    _write_result_csv(out_dir / "result.csv", rows)
    return {"fake_differential": result, "zscores": ztable}


def cmd_replace(cfg, out_dir):
    rec, met, seed, _, split_b, part_b, ztable = _halves_with_ztable(cfg)
    pool = obfuscate.generate_fake(split_b.train,
                                   multiplier=cfg.get("multiplier", 5), seed=seed)
    fake_label = str(cfg.get("fake_decile", pool.labels[-2] if len(pool.labels) > 1
                             else pool.labels[0]))
    replaced = obfuscate.replace(split_b.train, part_b, ztable, pool, fake_label,
                                 cfg.get("alpha", 0.3), cfg.get("beta", 3.0), seed)
    before = diffscan.evaluate(split_b.train, split_b.test, rec, met, seed)
    after = diffscan.evaluate(replaced, split_b.test, rec, met, seed)
    _write_result_csv(out_dir / "result.csv",
                      [["full", repr(before.value), ""],
                       ["replaced", repr(after.value), ""]])
    return {"accuracy_full": before.value, "accuracy_replaced": after.value,
            "fake_decile": fake_label, "rows": len(replaced)}


def cmd_reduce(cfg, out_dir):
    from . import attributes as attr_mod

    rec, met, seed, split_a, split_b, part_b, ztable = _halves_with_ztable(cfg)
    intervals, part_time_a = attr_mod.build_time_intervals(split_a.train)
    res_time = diffscan.differential_run(split_a.train, split_a.test, part_time_a,
                                         rec, met, seed)
    zt_time = diffscan.zscores(res_time)
    plan = obfuscate.build_reduction_plan(
        ztable, cfg.get("fraction", 0.4), ztable_time=zt_time, intervals=intervals,
        noise_threshold=cfg.get("noise_threshold", 1.0))
    reduced, realized = obfuscate.apply_reduction(split_b.train, plan, part_b)
    before = diffscan.evaluate(split_b.train, split_b.test, rec, met, seed)
    after = diffscan.evaluate(reduced, split_b.test, rec, met, seed)
    with open(out_dir / "plan.json", "w", encoding="utf-8") as fh:
        json.dump(plan.to_json_dict(), fh, indent=2, sort_keys=True)
    _write_result_csv(out_dir / "result.csv",
                      [["full", repr(before.value), ""],
                       ["reduced", repr(after.value), ""],
                       ["realized_fraction", repr(realized), ""]])
    return {"plan": plan, "accuracy_full": before.value,
            "accuracy_reduced": after.value, "realized_fraction": realized}


def cmd_report(cfg, out_dir):
    path = cfg.get("dataset_path") or str(out_dir / "report.json")
    with open(path, encoding="utf-8") as fh:
        print(json.dumps(json.load(fh), indent=2, sort_keys=True))
    return {}


COMMANDS = {
    "ingest": cmd_ingest, "split": cmd_split, "synth": cmd_synth,
    "diff": cmd_diff, "zscore": cmd_zscore, "baseline": cmd_baseline,
    "stability": cmd_stability, "suppress": cmd_suppress, "fake": cmd_fake,
    "replace": cmd_replace, "reduce": cmd_reduce, "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="diffdata",
        description="Differential data analysis for recommender systems")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--dataset", dest="dataset_kind",
                       help="checkins|movielens|ratings-csv|synthetic-ratings|clustered-city")
        p.add_argument("--path", dest="dataset_path")
        p.add_argument("--metric")
        p.add_argument("--top-n", dest="top_n", type=int)
        p.add_argument("--chunks", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--attribute")
        p.add_argument("--recommender")
        p.add_argument("--test-fraction", dest="test_fraction", type=float)
        p.add_argument("--fraction", type=float)
        p.add_argument("--baseline-trials", dest="baseline_trials", type=int)
        p.add_argument("--multiplier", type=int)
        p.add_argument("--fake-decile", dest="fake_decile")
        p.add_argument("--stability-mode", dest="stability_mode")
        p.add_argument("--groups", type=int)
        p.add_argument("--folds", type=int)
        p.add_argument("--n-users", dest="n_users", type=int)
        p.add_argument("--n-items", dest="n_items", type=int)
        p.add_argument("--n-factors", dest="n_factors", type=int)
        p.add_argument("--n-ratings", dest="n_ratings", type=int)
        p.add_argument("--n-locations", dest="n_locations", type=int)
        p.add_argument("--epochs", dest="n_epochs", type=int)
        p.add_argument("--noise-threshold", dest="noise_threshold", type=float)
    return parser


def _merge_config(args) -> dict:
    cfg = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from e
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        cfg[key] = value
    if "seed" not in cfg:
        raise ConfigError("seed is mandatory (--seed or config)")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.time()
    try:
        cfg = _merge_config(args)
        out_dir = Path(cfg.get("out_dir", "."))
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command != "report":
            needs_data = args.command not in ("synth",)
            if needs_data and "dataset_kind" not in cfg:
                raise ConfigError("dataset kind is required (--dataset or config)")
        payload = COMMANDS[args.command](cfg, out_dir)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as e:
        print(f"dataset error: {e}", file=sys.stderr)
        return EXIT_DATASET
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"{args.command} failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.command != "report":
        _write_report(out_dir, cfg, payload, t0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
