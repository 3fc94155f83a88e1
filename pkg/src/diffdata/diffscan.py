"""The differential data analysis engine.

Remove each chunk of the training data, retrain the fixed recommender,
score on the unchanged test set, and standardize the chunk accuracies to
z-scores.  Also runs the random-removal baseline and the stability
experiments (disjoint user groups, per-user folds).
"""

import math
from dataclasses import dataclass, field, replace

from . import attributes as attr_mod
from . import metrics as metrics_mod
from . import recommend
from .datasets import CheckinDataset, RatingDataset, SplitPair, holdout_split
from .seeding import rng_for


@dataclass
class RecommenderConfig:
    kind: str = "topn"  # "topn" | "mf"
    top_n: int = 5
    mf: recommend.MFHyper = field(default_factory=recommend.MFHyper)


@dataclass
class MetricConfig:
    name: str = "precision"  # "precision" | "recall" | "rmse" | "mae"

    @property
    def higher_is_better(self) -> bool:
        return self.name in ("precision", "recall")


@dataclass
class AttributeConfig:
    name: str = "density"  # "density" | "kmeans" | "rating" | "time"
    n_chunks: int = 10
    k: int = 2
    min_points: int = attr_mod.MIN_HARDSHIP_POINTS
    min_frac: float = 0.10
    max_frac: float = 0.15


@dataclass
class EvalOutcome:
    value: float
    n_users: int
    n_cold_users: int


@dataclass
class DifferentialResult:
    attribute: str
    metric: str
    labels: list
    accuracies: list
    full_accuracy: float
    chunk_sizes: list
    total_points: int
    higher_is_better: bool
    n_cold_users: list = field(default_factory=list)


@dataclass
class ZScoreTable:
    labels: list
    z: list
    mean_accuracy: float
    std_accuracy: float
    higher_is_better: bool
    degenerate: bool
    chunk_fractions: list


@dataclass
class BaselineStats:
    fraction: float
    n_trials: int
    mean: float
    std: float
    values: list


@dataclass
class StabilityReport:
    kind: str  # "users" | "data"
    results: list  # DifferentialResult per group/fold
    offsets: list  # per group/fold mean accuracy, for centered comparison

    def centered(self):
        return [[a - off for a in r.accuracies]
                for r, off in zip(self.results, self.offsets)]


def build_partition(train, cfg: AttributeConfig, seed: int):
    """Dispatch an attribute config to its ranking + chunking."""
    if cfg.name == "density":
        ranking = attr_mod.rank_hardship_density(train, min_points=cfg.min_points)
        return attr_mod.partition_deciles(ranking, cfg.n_chunks)
    if cfg.name == "kmeans":
        ranking = attr_mod.rank_hardship_kmeans(train, k=cfg.k, seed=seed,
                                                min_points=cfg.min_points)
        return attr_mod.partition_deciles(ranking, cfg.n_chunks)
    if cfg.name == "rating":
        ranking = attr_mod.rank_by_rating(train, seed=seed)
        return attr_mod.partition_deciles(ranking, cfg.n_chunks)
    if cfg.name == "time":
        _, partition = attr_mod.build_time_intervals(train, cfg.min_frac, cfg.max_frac)
        return partition
    raise ValueError(f"unknown attribute {cfg.name!r}; "
                     f"registered: density, kmeans, rating, time")


def evaluate(train, test, rec: RecommenderConfig, met: MetricConfig,
             seed: int) -> EvalOutcome:
    """Train the configured recommender on train, score the metric on test."""
    if rec.kind == "topn":
        return _evaluate_topn(train, test, rec, met)
    if rec.kind == "mf":
        return _evaluate_mf(train, test, rec, met, seed)
    raise ValueError(f"unknown recommender {rec.kind!r}; registered: topn, mf")


def _evaluate_topn(train: CheckinDataset, test: CheckinDataset,
                   rec: RecommenderConfig, met: MetricConfig) -> EvalOutcome:
    if met.name not in ("precision", "recall"):
        raise ValueError(f"metric {met.name!r} incompatible with topn recommender")
    user_locs = train.user_locations()
    ctx = recommend.SimilarityContext.from_user_locations(user_locs)
    test_sets = test.user_locations()
    recs = recommend.recommend_all(ctx, rec.top_n)
    # users with test data but no surviving training data recommend nothing
    for user in test_sets:
        recs.setdefault(user, [])
    n_cold = sum(1 for u in recs if u in ctx.user_index
                 and ctx.sim_rowsum[ctx.user_index[u]] <= 0.0)
    if met.name == "precision":
        report = metrics_mod.precision_at_n(recs, test_sets, rec.top_n)
    else:
        report = metrics_mod.macro_recall(recs, test_sets, rec.top_n)
    return EvalOutcome(report.value, report.n_users, n_cold)


def _evaluate_mf(train: RatingDataset, test: RatingDataset,
                 rec: RecommenderConfig, met: MetricConfig, seed: int) -> EvalOutcome:
    if met.name not in ("rmse", "mae"):
        raise ValueError(f"metric {met.name!r} incompatible with mf recommender")
    model = recommend.train_mf(train, rec.mf, seed)
    preds = [recommend.predict_rating(model, r.user_id, r.item_id) for r in test.rows]
    actual = [r.value for r in test.rows]
    fn = metrics_mod.rmse if met.name == "rmse" else metrics_mod.mae
    n_cold = len({r.user_id for r in test.rows} - set(model.user_index))
    return EvalOutcome(fn(preds, actual), len({r.user_id for r in test.rows}), n_cold)


def differential_run(train, test, partition, rec: RecommenderConfig,
                     met: MetricConfig, seed: int) -> DifferentialResult:
    """Chunk ablation: retrain on train minus each chunk, score on test.

    Chunks are removed simultaneously across all users.  Every retrain uses
    the same seed as the full-data run, so an empty chunk reproduces the
    full-data accuracy bit for bit.
    """
    full = evaluate(train, test, rec, met, seed)
    accuracies, colds = [], []
    for idx in range(len(partition.labels)):
        rows = partition.chunk_rows(idx)
        outcome = evaluate(train.drop_rows(rows), test, rec, met, seed)
        accuracies.append(outcome.value)
        colds.append(outcome.n_cold_users)
    return DifferentialResult(
        attribute=partition.attribute, metric=met.name,
        labels=list(partition.labels), accuracies=accuracies,
        full_accuracy=full.value, chunk_sizes=partition.chunk_sizes(),
        total_points=partition.n_points,
        higher_is_better=met.higher_is_better, n_cold_users=colds)


def zscores(result: DifferentialResult) -> ZScoreTable:
    """Standardize chunk accuracies: z_i = (a_i - mean) / population std.

    For lower-is-better metrics (RMSE/MAE) the accuracies are negated first
    so that positive z always means "removal helped, chunk less important".
    All-equal accuracies are degenerate: every z is 0.
    """
    if len(result.accuracies) < 2:
        raise ValueError("zscores needs at least 2 chunks")
    vals = list(result.accuracies)
    if not result.higher_is_better:
        vals = [-v for v in vals]
    mean = sum(vals) / len(vals)
    var = sum((v - mean) ** 2 for v in vals) / len(vals)
    std = math.sqrt(var)
    degenerate = std == 0.0
    z = [0.0] * len(vals) if degenerate else [(v - mean) / std for v in vals]
    total = result.total_points or 1
    return ZScoreTable(labels=list(result.labels), z=z, mean_accuracy=mean,
                       std_accuracy=std, higher_is_better=result.higher_is_better,
                       degenerate=degenerate,
                       chunk_fractions=[s / total for s in result.chunk_sizes])


def _user_points(ds):
    """Removable units per user: binary (user, location) points for check-ins,
    single rating rows otherwise."""
    if isinstance(ds, CheckinDataset):
        return {u: attr_mod._user_binary_points(ds, u) for u in ds.users}
    return {u: [(ds.rows[i].item_id, (i,)) for i in ds.by_user[u]] for u in ds.users}


def random_removal_baseline(train, test, fraction: float, n_trials: int,
                            rec: RecommenderConfig, met: MetricConfig,
                            seed: int) -> BaselineStats:
    """Mean and sample std of the metric over trials that remove the given
    fraction of each user's training points uniformly at random."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction {fraction} not in (0, 1)")
    if n_trials < 2:
        raise ValueError("n_trials must be >= 2")
    points = _user_points(train)
    values = []
    for t in range(n_trials):
        rng = rng_for(seed, "random_removal", t)
        drop = set()
        for user in sorted(points):
            pts = points[user]
            n_drop = int(len(pts) * fraction)
            if n_drop == 0:
                continue
            for j in rng.choice(len(pts), size=n_drop, replace=False).tolist():
                drop.update(pts[j][1])
        values.append(evaluate(train.drop_rows(drop), test, rec, met, seed).value)
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return BaselineStats(fraction=fraction, n_trials=n_trials, mean=mean,
                         std=math.sqrt(var), values=values)


def stability_by_users(ds, n_groups: int, attr_cfg: AttributeConfig,
                       rec: RecommenderConfig, met: MetricConfig, seed: int,
                       test_fraction: float = 0.2) -> StabilityReport:
    """Differential run per disjoint equal-size user group."""
    users = ds.users
    if len(users) < n_groups:
        raise ValueError(f"{len(users)} users cannot fill {n_groups} groups")
    rng = rng_for(seed, "stability_by_users")
    order = list(rng.permutation(users))
    results = []
    for g in range(n_groups):
        members = set(order[g::n_groups])
        rows = [i for i, r in enumerate(ds.rows) if r.user_id in members]
        group_ds = ds.subset(rows)
        split = holdout_split(group_ds, test_fraction, seed)
        partition = build_partition(split.train, attr_cfg, seed)
        results.append(differential_run(split.train, split.test, partition,
                                        rec, met, seed))
    offsets = [sum(r.accuracies) / len(r.accuracies) for r in results]
    return StabilityReport(kind="users", results=results, offsets=offsets)


def stability_by_data(ds, n_folds: int, attr_cfg: AttributeConfig,
                      rec: RecommenderConfig, met: MetricConfig,
                      seed: int) -> StabilityReport:
    """Per-user k-fold split; each fold serves once as the test set."""
    if n_folds < 2:
        raise ValueError("n_folds must be >= 2")
    points = _user_points(ds)
    fold_rows = [set() for _ in range(n_folds)]
    for user in sorted(points):
        rng = rng_for(seed, "stability_by_data", user)
        pts = points[user]
        order = rng.permutation(len(pts))
        for rank, j in enumerate(order.tolist()):
            fold_rows[rank % n_folds].update(pts[j][1])
    results = []
    for f in range(n_folds):
        test = ds.subset(fold_rows[f])
        train = ds.drop_rows(fold_rows[f])
        partition = build_partition(train, attr_cfg, seed)
        results.append(differential_run(train, test, partition, rec, met, seed))
    offsets = [sum(r.accuracies) / len(r.accuracies) for r in results]
    return StabilityReport(kind="data", results=results, offsets=offsets)
