"""Z-score-guided obfuscation and reduction.

Uneven suppression, fake-data generation and selection, one-for-one
replacement, and data reduction plans.  Plans are driven only by public
z-score tables, so a client can apply them without sharing raw data.
"""

import math
from dataclasses import dataclass, field

from .attributes import ChunkPartition
from .datasets import CheckinDataset
from .diffscan import DifferentialResult, MetricConfig, RecommenderConfig, ZScoreTable, evaluate
from .geo import GeoPoint, haversine_km, kmeans
from .seeding import rng_for, substream


class ObfuscationError(ValueError):
    pass


def suppression_prob(z: float, alpha: float, beta: float) -> float:
    """Per-chunk deletion probability before normalization.

    t = e^{beta z} / (e^{beta z} + e^{-beta z}); p_hat = 2 alpha t below
    t = 1/2 and 2(1-alpha) t + 2 alpha - 1 above.  Continuous at t = 1/2
    where both branches equal alpha; monotone non-decreasing in z.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ObfuscationError(f"alpha {alpha} not in [0, 1]")
    if beta < 0.0:
        raise ObfuscationError(f"beta {beta} must be >= 0")
    t = 1.0 / (1.0 + math.exp(-2.0 * beta * z))
    if t == 0.5:
        return alpha  # both branches reduce to alpha exactly
    if t < 0.5:
        return 2.0 * alpha * t
    return 2.0 * (1.0 - alpha) * t + 2.0 * alpha - 1.0


@dataclass
class SuppressionPlan:
    alpha: float
    beta: float
    labels: list
    z: list
    t: list
    p_hat: list
    p: list          # normalized, pre-clamp; mean(p) == alpha
    p_clamped: list  # applied probabilities
    k: float
    clamp_loss: float

    def to_json_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "k": self.k,
                "clamp_loss": self.clamp_loss,
                "chunks": [{"label": l, "z": z, "p": p}
                           for l, z, p in zip(self.labels, self.z, self.p_clamped)]}


def build_suppression_plan(ztable: ZScoreTable, alpha: float,
                           beta: float) -> SuppressionPlan:
    """Normalize p_hat so the mean deletion probability over chunks is alpha.

    k = mean(p_hat) / alpha; values above 1 after normalization are clamped
    and the shortfall reported as clamp_loss.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ObfuscationError(f"alpha {alpha} not in [0, 1]")
    zs = list(ztable.z)
    ts = [1.0 / (1.0 + math.exp(-2.0 * beta * z)) for z in zs]
    p_hat = [suppression_prob(z, alpha, beta) for z in zs]
    if alpha == 0.0:
        p = [0.0] * len(zs)
        return SuppressionPlan(alpha, beta, list(ztable.labels), zs, ts, p_hat,
                               p, p, 1.0, 0.0)
    # exact-equal shortcut keeps k == 1.0 bit-for-bit in the beta = 0 case
    mean_hat = p_hat[0] if min(p_hat) == max(p_hat) else math.fsum(p_hat) / len(p_hat)
    if mean_hat == 0.0:
        raise ObfuscationError("all p_hat are 0; cannot normalize to alpha > 0")
    k = mean_hat / alpha
    p = [ph / k for ph in p_hat]
    p_clamped = [min(1.0, v) for v in p]
    clamp_loss = math.fsum(v - c for v, c in zip(p, p_clamped)) / len(p)
    return SuppressionPlan(alpha, beta, list(ztable.labels), zs, ts, p_hat,
                           p, p_clamped, k, clamp_loss)


def _bernoulli_drop(partition: ChunkPartition, probs: dict, seed: int, label: str):
    """Delete each point independently with its chunk probability.

    Returns (dropped row set, per-user removed point counts).
    """
    drop_rows: set = set()
    removed_per_user: dict = {}
    for chunk_label, chunk in zip(partition.labels, partition.chunks):
        p = probs[chunk_label]
        if p <= 0.0:
            continue
        for ref in chunk:
            rng = rng_for(seed, label, ref.user_id, ref.key)
            if rng.random() < p:
                drop_rows.update(ref.rows)
                removed_per_user[ref.user_id] = removed_per_user.get(ref.user_id, 0) + 1
    return drop_rows, removed_per_user


def suppress(train, partition: ChunkPartition, plan: SuppressionPlan, seed: int):
    """Delete each point in chunk c independently with probability p(c)."""
    if list(plan.labels) != list(partition.labels):
        raise ObfuscationError("plan chunks do not match partition chunks")
    probs = dict(zip(plan.labels, plan.p_clamped))
    drop_rows, _ = _bernoulli_drop(partition, probs, seed, "suppress")
    return train.drop_rows(drop_rows)


@dataclass
class FakePool:
    multiplier: int
    labels: list
    chunks: list  # parallel to labels; each chunk maps user_id -> list[Checkin]
    flagged_users: list = field(default_factory=list)

    def chunk_checkins(self, idx) -> list:
        out = []
        for user in sorted(self.chunks[idx]):
            out.extend(self.chunks[idx][user])
        return out

    def chunk_sizes(self):
        return [sum(len(v) for v in chunk.values()) for chunk in self.chunks]


def generate_fake(train: CheckinDataset, catalog: dict = None, multiplier: int = 10,
                  seed: int = 0, hardship: str = "density", k: int = 2) -> FakePool:
    """Per-user fake check-ins from the real catalog, chunked by hardship.

    Each user gets multiplier x (real binary point count) fakes at locations
    they never visited, ranked by hardship relative to the user's REAL
    points, then cut into `multiplier` equal chunks, each the size of the
    user's real data.  Users whose unvisited catalog is too small fall back
    to sampling with replacement and are flagged.
    """
    if multiplier < 1:
        raise ObfuscationError("multiplier must be >= 1")
    if catalog is None:
        catalog = train.location_coords()
    if not catalog:
        raise ObfuscationError("empty location catalog")
    from .attributes import _user_binary_points

    chunks = [dict() for _ in range(multiplier)]
    flagged = []
    for user in train.users:
        rng = rng_for(seed, "generate_fake", user)
        points = _user_binary_points(train, user)
        n_real = len(points)
        visited = {loc for loc, _ in points}
        candidates = sorted(set(catalog) - visited)
        if not candidates:
            flagged.append(user)
            continue
        n_fakes = multiplier * n_real
        if n_fakes <= len(candidates):
            chosen = rng.choice(candidates, size=n_fakes, replace=False).tolist()
        else:
            chosen = rng.choice(candidates, size=n_fakes, replace=True).tolist()
            flagged.append(user)

        real_geos = [GeoPoint(*catalog[loc]) if loc in catalog else None
                     for loc, _ in points]
        real_geos = [g for g in real_geos if g is not None]
        coords_fallback = train.location_coords()
        if not real_geos:
            real_geos = [GeoPoint(*coords_fallback[loc]) for loc, _ in points]
        if hardship == "kmeans":
            cents = kmeans(real_geos, k, substream(seed, "fake_kmeans", user)).points
            score = lambda g: min(haversine_km(g, c) for c in cents)
        else:
            score = lambda g: min(haversine_km(g, r) for r in real_geos)

        real_rows = [train.rows[i] for i in train.by_user[user]]
        scored = []
        for loc in chosen:
            g = GeoPoint(*catalog[loc])
            template = real_rows[int(rng.integers(len(real_rows)))]
            from .datasets import Checkin

            scored.append((score(g), loc,
                           Checkin(user, loc, g.lat, g.lon, template.local_time)))
        scored.sort(key=lambda t: (t[0], t[1]))
        for c in range(multiplier):
            chunks[c][user] = [ck for _, _, ck in scored[c * n_real:(c + 1) * n_real]]
    labels = [str(c + 1) for c in range(multiplier)]
    return FakePool(multiplier=multiplier, labels=labels, chunks=chunks,
                    flagged_users=flagged)


def differential_fake_run(train: CheckinDataset, test, pool: FakePool,
                          rec: RecommenderConfig, met: MetricConfig,
                          seed: int) -> DifferentialResult:
    """Accuracy of train plus each fake chunk in turn; the test set is untouched."""
    base = evaluate(train, test, rec, met, seed)
    accuracies = []
    for idx in range(len(pool.labels)):
        fakes = pool.chunk_checkins(idx)
        augmented = CheckinDataset(train.rows + fakes)
        accuracies.append(evaluate(augmented, test, rec, met, seed).value)
    sizes = pool.chunk_sizes()
    return DifferentialResult(
        attribute="fake", metric=met.name, labels=list(pool.labels),
        accuracies=accuracies, full_accuracy=base.value, chunk_sizes=sizes,
        total_points=sum(sizes), higher_is_better=met.higher_is_better)


def replace(train, partition: ChunkPartition, ztable: ZScoreTable, pool: FakePool,
            fake_label: str, fraction: float, beta: float, seed: int,
            fake_weights: dict = None):
    """Uneven suppression at the given fraction, then one fake added per
    point removed, preserving dataset cardinality.

    Fakes come from the chosen fake chunk per user where possible, globally
    otherwise.  fake_weights (label -> weight) optionally mixes chunks.
    """
    if fraction == 0.0:
        return train
    plan = build_suppression_plan(ztable, fraction, beta)
    probs = dict(zip(plan.labels, plan.p_clamped))
    drop_rows, removed_per_user = _bernoulli_drop(partition, probs, seed, "replace")

    if fake_weights:
        weight_labels = sorted(fake_weights)
        weights = [fake_weights[l] for l in weight_labels]
        total_w = sum(weights)
        weights = [w / total_w for w in weights]
    else:
        weight_labels, weights = [fake_label], [1.0]
    by_label = dict(zip(pool.labels, pool.chunks))
    for lbl in weight_labels:
        if lbl not in by_label:
            raise ObfuscationError(f"fake chunk {lbl!r} not in pool")

    added = []
    leftovers = []  # fakes from other users, drawn on if a user runs short
    shortfall = 0
    for user in sorted(removed_per_user):
        need = removed_per_user[user]
        rng = rng_for(seed, "replace_fakes", user)
        available = []
        for lbl, w in zip(weight_labels, weights):
            user_fakes = list(by_label[lbl].get(user, []))
            take = int(round(need * w)) if len(weight_labels) > 1 else need
            picked = min(take, len(user_fakes))
            if picked:
                idx = rng.choice(len(user_fakes), size=picked, replace=False)
                chosen = [user_fakes[i] for i in sorted(idx.tolist())]
                available.extend(chosen)
                leftovers.extend(f for i, f in enumerate(user_fakes)
                                 if i not in set(idx.tolist()))
            else:
                leftovers.extend(user_fakes)
        added.extend(available[:need])
        shortfall += max(0, need - len(available))
    if shortfall:
        if shortfall > len(leftovers):
            raise ObfuscationError(
                f"fake pool too small: short {shortfall - len(leftovers)} fakes")
        rng = rng_for(seed, "replace_fakes_global")
        idx = rng.choice(len(leftovers), size=shortfall, replace=False)
        added.extend(leftovers[i] for i in sorted(idx.tolist()))

    kept = [r for i, r in enumerate(train.rows) if i not in drop_rows]
    return CheckinDataset(kept + added)


@dataclass
class ReductionPlan:
    entries: list  # ordered ("time"|"chunk", label)
    target_fraction: float
    est_fractions: list  # estimated removal fraction per entry, from z-tables
    noise_threshold: float
    intervals: list = field(default_factory=list)  # TimeInterval for "time" entries

    def to_json_dict(self):
        return {"target_fraction": self.target_fraction,
                "noise_threshold": self.noise_threshold,
                "entries": [{"kind": k, "label": l, "est_fraction": f}
                            for (k, l), f in zip(self.entries, self.est_fractions)]}


def build_reduction_plan(ztable_hardship: ZScoreTable, target_fraction: float,
                         ztable_time: ZScoreTable = None, intervals=None,
                         noise_threshold: float = 1.0) -> ReductionPlan:
    """Removal order: noise time intervals (z above the threshold) first,
    then hardship chunks in descending z, truncated at the target fraction."""
    if target_fraction < 0.0:
        raise ObfuscationError("target_fraction must be >= 0")
    candidates = []
    if ztable_time is not None:
        for lbl, z, f in zip(ztable_time.labels, ztable_time.z,
                             ztable_time.chunk_fractions):
            if z > noise_threshold:
                candidates.append((0, -z, "time", lbl, f))
    for lbl, z, f in zip(ztable_hardship.labels, ztable_hardship.z,
                         ztable_hardship.chunk_fractions):
        candidates.append((1, -z, "chunk", lbl, f))
    candidates.sort(key=lambda t: (t[0], t[1], t[3]))
    if target_fraction > sum(c[4] for c in candidates):
        raise ObfuscationError(
            f"target fraction {target_fraction} exceeds available data")
    entries, fracs = [], []
    cum = 0.0
    for _, _, kind, lbl, f in candidates:
        if cum >= target_fraction:
            break
        entries.append((kind, lbl))
        fracs.append(f)
        cum += f
    kept_intervals = []
    if intervals is not None:
        wanted = {lbl for kind, lbl in entries if kind == "time"}
        kept_intervals = [iv for iv in intervals if iv.label in wanted]
    return ReductionPlan(entries=entries, target_fraction=target_fraction,
                         est_fractions=fracs, noise_threshold=noise_threshold,
                         intervals=kept_intervals)


def apply_reduction(train, plan: ReductionPlan, hardship_partition: ChunkPartition = None):
    """Remove the planned interval rows and hardship points from train.

    Time entries remove visit rows whose hour falls in the interval (a
    binary rating survives if the location was also visited outside it);
    chunk entries remove every row of the listed (user, location) points.
    Overlaps are deduplicated.  Returns (reduced train, realized fraction).
    """
    drop = set()
    by_interval = {iv.label: iv for iv in plan.intervals}
    chunk_pairs = {}
    if hardship_partition is not None:
        for lbl, chunk in zip(hardship_partition.labels, hardship_partition.chunks):
            chunk_pairs[lbl] = {(ref.user_id, ref.key) for ref in chunk}
    for kind, lbl in plan.entries:
        if kind == "time":
            iv = by_interval.get(lbl)
            if iv is None:
                raise ObfuscationError(f"plan interval {lbl!r} has no boundaries")
            for i, row in enumerate(train.rows):
                if iv.contains_hour(row.local_time.hour):
                    drop.add(i)
        else:
            if lbl not in chunk_pairs:
                raise ObfuscationError(f"plan chunk {lbl!r} not in partition")
            pairs = chunk_pairs[lbl]
            for i, row in enumerate(train.rows):
                if (row.user_id, row.location_id) in pairs:
                    drop.add(i)
    reduced = train.drop_rows(drop)
    realized = len(drop) / len(train) if len(train) else 0.0
    return reduced, realized
