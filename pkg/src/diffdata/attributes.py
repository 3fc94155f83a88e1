"""Attribute rankers: order each user's training data and split it into chunks.

A "point" is the removable unit: one distinct (user, location) binary
rating for check-in data (carrying all of its visit rows), or one rating
row for star-rating data, or one visit row for time-interval chunking.
"""

import logging
from dataclasses import dataclass, field

from .datasets import CheckinDataset
from .geo import GeoPoint, haversine_km, kmeans
from .seeding import rng_for, substream

log = logging.getLogger(__name__)

MIN_HARDSHIP_POINTS = 5


@dataclass(frozen=True)
class PointRef:
    user_id: str
    key: str
    rows: tuple


@dataclass
class RankedPoint:
    point: PointRef
    score: float


@dataclass
class AttributeRanking:
    attribute: str
    per_user: dict  # user_id -> list[RankedPoint], ascending by score
    excluded_users: list = field(default_factory=list)


@dataclass
class ChunkPartition:
    attribute: str
    labels: list
    chunks: list  # parallel to labels; each chunk is a list[PointRef]

    def chunk_sizes(self):
        return [len(c) for c in self.chunks]

    def chunk_rows(self, idx) -> set:
        rows = set()
        for ref in self.chunks[idx]:
            rows.update(ref.rows)
        return rows

    @property
    def n_points(self) -> int:
        return sum(len(c) for c in self.chunks)


@dataclass
class TimeInterval:
    start_hour: int
    end_hour: int  # exclusive
    fraction: float
    flagged: bool = False

    @property
    def label(self) -> str:
        return f"{self.start_hour:02d}-{self.end_hour:02d}"

    def contains_hour(self, hour: int) -> bool:
        if self.start_hour <= self.end_hour:
            return self.start_hour <= hour < self.end_hour
        return hour >= self.start_hour or hour < self.end_hour


def _user_binary_points(ds: CheckinDataset, user) -> list:
    """Distinct locations for one user, each carrying its visit rows."""
    by_loc: dict[str, list[int]] = {}
    for i in ds.by_user[user]:
        by_loc.setdefault(ds.rows[i].location_id, []).append(i)
    return [(loc, tuple(rows)) for loc, rows in sorted(by_loc.items())]


def _sorted_ranking(user, scored):
    # ties broken by location id for determinism
    scored.sort(key=lambda t: (t[1], t[0].key))
    return [RankedPoint(point=p, score=s) for p, s in scored]


def rank_hardship_kmeans(train: CheckinDataset, k: int = 2, seed: int = 0,
                         min_points: int = MIN_HARDSHIP_POINTS) -> AttributeRanking:
    """Score each binary point by its distance to the nearest of the user's
    k KMeans centroids; ascending (close to a usual haunt ranks first)."""
    coords = train.location_coords()
    per_user, excluded = {}, []
    for user in train.users:
        points = _user_binary_points(train, user)
        if len(points) < max(k, min_points):
            excluded.append(user)
            continue
        geos = [GeoPoint(*coords[loc]) for loc, _ in points]
        cents = kmeans(geos, k, substream(seed, "hardship_kmeans", user))
        scored = []
        for (loc, rows), g in zip(points, geos):
            d = min(haversine_km(g, c) for c in cents.points)
            scored.append((PointRef(user, loc, rows), d))
        per_user[user] = _sorted_ranking(user, scored)
    if excluded:
        log.info("kmeans hardship: excluded %d users with <%d points",
                 len(excluded), max(k, min_points))
    return AttributeRanking("hardship_kmeans", per_user, excluded)


def rank_hardship_density(train: CheckinDataset,
                          min_points: int = 2) -> AttributeRanking:
    """Score each binary point by its distance to the user's nearest other point."""
    coords = train.location_coords()
    per_user, excluded = {}, []
    for user in train.users:
        points = _user_binary_points(train, user)
        if len(points) < max(2, min_points):
            excluded.append(user)
            continue
        geos = [GeoPoint(*coords[loc]) for loc, _ in points]
        scored = []
        for i, (loc, rows) in enumerate(points):
            d = min(haversine_km(geos[i], geos[j])
                    for j in range(len(geos)) if j != i)
            scored.append((PointRef(user, loc, rows), d))
        per_user[user] = _sorted_ranking(user, scored)
    if excluded:
        log.info("density hardship: excluded %d users with <2 points", len(excluded))
    return AttributeRanking("hardship_density", per_user, excluded)


def rank_by_rating(train, seed: int = 0) -> AttributeRanking:
    """Ascending by star value; ties shuffled uniformly under the seed."""
    per_user = {}
    for user in train.users:
        rng = rng_for(seed, "rank_by_rating", user)
        idxs = list(train.by_user[user])
        order = rng.permutation(len(idxs))  # random tie-split within a value
        shuffled = [idxs[i] for i in order]
        shuffled.sort(key=lambda i: train.rows[i].value)
        per_user[user] = [
            RankedPoint(PointRef(user, train.rows[i].item_id, (i,)),
                        float(train.rows[i].value))
            for i in shuffled
        ]
    return AttributeRanking("rating", per_user, [])


def partition_deciles(ranking: AttributeRanking, n_chunks: int = 10) -> ChunkPartition:
    """Contiguous per-user rank slices; the first (n mod n_chunks) chunks get
    one extra point when a user's count is not divisible by n_chunks."""
    if n_chunks < 1:
        raise ValueError("n_chunks must be >= 1")
    chunks = [[] for _ in range(n_chunks)]
    for user in sorted(ranking.per_user):
        ranked = ranking.per_user[user]
        n = len(ranked)
        base, extra = divmod(n, n_chunks)
        start = 0
        for c in range(n_chunks):
            size = base + (1 if c < extra else 0)
            for rp in ranked[start:start + size]:
                chunks[c].append(rp.point)
            start += size
    labels = [str(c + 1) for c in range(n_chunks)]
    return ChunkPartition(ranking.attribute, labels, chunks)


def build_time_intervals(ds: CheckinDataset, min_frac: float = 0.10,
                         max_frac: float = 0.15):
    """Greedy hour-of-day intervals, each holding roughly min_frac..max_frac
    of the check-ins.

    Accumulates consecutive hours from hour 0 until an interval reaches
    min_frac; a trailing remainder below min_frac is absorbed into the last
    interval (possibly exceeding max_frac, flagged).  Returns the intervals
    and the induced partition of visit rows.  Removing an interval's rows
    only removes a binary rating when every visit to that location falls
    inside the interval.
    """
    if not min_frac < max_frac:
        raise ValueError("min_frac must be < max_frac")
    if len(ds) == 0:
        raise ValueError("empty dataset")
    counts = [0] * 24
    for c in ds.rows:
        counts[c.local_time.hour] += 1
    total = len(ds)

    intervals = []
    start, acc = 0, 0
    for hour in range(24):
        acc += counts[hour]
        if acc / total >= min_frac:
            intervals.append(TimeInterval(start, hour + 1, acc / total))
            start, acc = hour + 1, 0
    if start < 24:
        if intervals and acc / total < min_frac:
            last = intervals.pop()
            merged = last.fraction + acc / total
            intervals.append(TimeInterval(last.start_hour, 24, merged))
        else:
            intervals.append(TimeInterval(start, 24, acc / total))
    for iv in intervals:
        if iv.fraction > max_frac:
            iv.flagged = True
    return intervals, partition_by_intervals(ds, intervals)


def partition_by_intervals(ds: CheckinDataset, intervals) -> ChunkPartition:
    """Assign each visit row to its hour-of-day interval."""
    chunks = [[] for _ in intervals]
    for i, c in enumerate(ds.rows):
        for ci, iv in enumerate(intervals):
            if iv.contains_hour(c.local_time.hour):
                chunks[ci].append(PointRef(c.user_id, c.location_id, (i,)))
                break
    return ChunkPartition("time", [iv.label for iv in intervals], chunks)
