"""Dataset models, ingestion, splits, and synthetic generators."""

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .seeding import rng_for


class DatasetError(ValueError):
    """Raised for unreadable files, malformed rows, or invalid split requests."""


@dataclass(frozen=True)
class Checkin:
    user_id: str
    location_id: str
    lat: float
    lon: float
    local_time: datetime


@dataclass(frozen=True)
class Rating:
    user_id: str
    item_id: str
    value: float
    timestamp: int


def _index_rows(rows, user_key, item_key):
    by_user: dict[str, list[int]] = {}
    by_item: dict[str, list[int]] = {}
    for idx, row in enumerate(rows):
        by_user.setdefault(user_key(row), []).append(idx)
        by_item.setdefault(item_key(row), []).append(idx)
    return by_user, by_item


@dataclass
class CheckinDataset:
    """Timestamped check-ins.

    Raw visit rows are kept (a user may check into the same location at
    several times); the rating view collapses each (user, location) pair
    to one binary positive rating.
    """

    rows: list = field(default_factory=list)
    by_user: dict = field(init=False)
    by_location: dict = field(init=False)

    def __post_init__(self):
        self.by_user, self.by_location = _index_rows(
            self.rows, lambda c: c.user_id, lambda c: c.location_id
        )

    @property
    def users(self) -> list:
        return sorted(self.by_user)

    @property
    def locations(self) -> list:
        return sorted(self.by_location)

    @property
    def n_binary_ratings(self) -> int:
        return sum(len(s) for s in self.user_locations().values())

    def user_locations(self) -> dict:
        """Binary rating view: user -> set of distinct visited locations."""
        out: dict[str, set] = {}
        for c in self.rows:
            out.setdefault(c.user_id, set()).add(c.location_id)
        return out

    def location_coords(self) -> dict:
        """location -> (lat, lon), first row wins."""
        out: dict[str, tuple] = {}
        for c in self.rows:
            out.setdefault(c.location_id, (c.lat, c.lon))
        return out

    def subset(self, keep) -> "CheckinDataset":
        keep = sorted(set(keep))
        return CheckinDataset([self.rows[i] for i in keep])

    def drop_rows(self, drop) -> "CheckinDataset":
        drop = set(drop)
        return CheckinDataset([r for i, r in enumerate(self.rows) if i not in drop])

    def __len__(self):
        return len(self.rows)


@dataclass
class RatingDataset:
    rows: list = field(default_factory=list)
    by_user: dict = field(init=False)
    by_item: dict = field(init=False)

    def __post_init__(self):
        self.by_user, self.by_item = _index_rows(
            self.rows, lambda r: r.user_id, lambda r: r.item_id
        )

    @property
    def users(self) -> list:
        return sorted(self.by_user)

    @property
    def items(self) -> list:
        return sorted(self.by_item)

    def subset(self, keep) -> "RatingDataset":
        keep = sorted(set(keep))
        return RatingDataset([self.rows[i] for i in keep])

    def drop_rows(self, drop) -> "RatingDataset":
        drop = set(drop)
        return RatingDataset([r for i, r in enumerate(self.rows) if i not in drop])

    def __len__(self):
        return len(self.rows)


@dataclass
class SplitPair:
    train: object
    test: object
    seed: int


CHECKIN_HEADER = ["user_id", "location_id", "lat", "lon", "local_time"]
RATING_HEADER = ["user_id", "item_id", "value", "timestamp"]


def load_checkins(path) -> CheckinDataset:
    """Parse a check-in CSV (user_id,location_id,lat,lon,local_time)."""
    rows = []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise DatasetError(f"cannot read {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CHECKIN_HEADER:
            raise DatasetError(f"{path}: bad header {header!r}, expected {CHECKIN_HEADER}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 5:
                raise DatasetError(f"{path}:{lineno}: expected 5 fields, got {len(rec)}")
            user_id, location_id, lat_s, lon_s, time_s = rec
            try:
                lat, lon = float(lat_s), float(lon_s)
                local_time = datetime.fromisoformat(time_s)
            except ValueError as e:
                raise DatasetError(f"{path}:{lineno}: {e}") from e
            if not -90.0 <= lat <= 90.0:
                raise DatasetError(f"{path}:{lineno}: latitude {lat} out of [-90, 90]")
            if not -180.0 <= lon <= 180.0:
                raise DatasetError(f"{path}:{lineno}: longitude {lon} out of [-180, 180]")
            rows.append(Checkin(user_id, location_id, lat, lon, local_time))
    return CheckinDataset(rows)


def load_movielens(path) -> RatingDataset:
    """Parse a MovieLens 1M ratings file (UserID::MovieID::Rating::Timestamp)."""
    rows = []
    try:
        fh = open(path, encoding="utf-8", errors="replace")
    except OSError as e:
        raise DatasetError(f"cannot read {path}: {e}") from e
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("::")
            if len(parts) != 4:
                raise DatasetError(f"{path}:{lineno}: expected 4 '::' fields")
            try:
                value = float(parts[2])
                ts = int(parts[3])
            except ValueError as e:
                raise DatasetError(f"{path}:{lineno}: {e}") from e
            if not 1.0 <= value <= 5.0:
                raise DatasetError(f"{path}:{lineno}: rating {value} outside [1, 5]")
            rows.append(Rating(parts[0], parts[1], value, ts))
    return RatingDataset(rows)


def load_ratings_csv(path) -> RatingDataset:
    """Parse a rating CSV (user_id,item_id,value,timestamp), e.g. synthetic dumps."""
    rows = []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise DatasetError(f"cannot read {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RATING_HEADER:
            raise DatasetError(f"{path}: bad header {header!r}, expected {RATING_HEADER}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 4:
                raise DatasetError(f"{path}:{lineno}: expected 4 fields")
            try:
                rows.append(Rating(rec[0], rec[1], float(rec[2]), int(rec[3])))
            except ValueError as e:
                raise DatasetError(f"{path}:{lineno}: {e}") from e
    return RatingDataset(rows)


def save_ratings_csv(ds: RatingDataset, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RATING_HEADER)
        for r in ds.rows:
            w.writerow([r.user_id, r.item_id, repr(r.value), r.timestamp])


def save_checkins_csv(ds: CheckinDataset, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CHECKIN_HEADER)
        for c in ds.rows:
            w.writerow([c.user_id, c.location_id, repr(c.lat), repr(c.lon),
                        c.local_time.isoformat()])


def holdout_split(ds, test_fraction: float, seed: int) -> SplitPair:
    """Per-user holdout: floor(n * test_fraction) units to test.

    For rating data the unit is one rating row.  For check-in data the unit
    is one distinct (user, location) binary rating; all visit rows of a
    held-out pair move to the test side together.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DatasetError(f"test_fraction {test_fraction} not in (0, 1)")
    rng = rng_for(seed, "holdout_split")
    test_rows = set()
    if isinstance(ds, CheckinDataset):
        for user in ds.users:
            locs = sorted({ds.rows[i].location_id for i in ds.by_user[user]})
            n_test = int(len(locs) * test_fraction)
            if n_test == 0:
                continue
            held = set(rng.choice(locs, size=n_test, replace=False).tolist())
            for i in ds.by_user[user]:
                if ds.rows[i].location_id in held:
                    test_rows.add(i)
    else:
        for user in ds.users:
            idxs = ds.by_user[user]
            n_test = int(len(idxs) * test_fraction)
            if n_test == 0:
                continue
            test_rows.update(rng.choice(idxs, size=n_test, replace=False).tolist())
    all_rows = set(range(len(ds)))
    train = ds.subset(all_rows - test_rows)
    test = ds.subset(test_rows)
    return SplitPair(train=train, test=test, seed=seed)


def half_split(ds, seed: int):
    """Partition users uniformly at random into two halves of near-equal size."""
    users = ds.users
    if len(users) < 2:
        raise DatasetError("half_split needs at least 2 users")
    rng = rng_for(seed, "half_split")
    order = list(rng.permutation(users))
    cut = (len(order) + 1) // 2
    half_a_users = set(order[:cut])
    rows_a = [i for i, r in enumerate(ds.rows) if r.user_id in half_a_users]
    rows_b = [i for i, r in enumerate(ds.rows) if r.user_id not in half_a_users]
    return ds.subset(rows_a), ds.subset(rows_b)


def generate_synthetic(n_users: int, n_items: int, n_factors: int,
                       n_ratings: int, seed: int) -> RatingDataset:
    """Low-rank synthetic ratings: entries of U V^T at random positions.

    U (n_users x n_factors) and V (n_items x n_factors) have independent
    standard-normal entries; positions are sampled uniformly without
    replacement.  Values are real-valued and unbounded.
    """
    total = n_users * n_items
    if n_ratings > total:
        raise DatasetError(f"n_ratings {n_ratings} > n_users*n_items {total}")
    rng = rng_for(seed, "generate_synthetic")
    u_mat = rng.standard_normal((n_users, n_factors))
    v_mat = rng.standard_normal((n_items, n_factors))
    flat = rng.choice(total, size=n_ratings, replace=False)
    flat.sort()
    uu, ii = np.divmod(flat, n_items)
    values = np.einsum("ij,ij->i", u_mat[uu], v_mat[ii])
    rows = [Rating(str(u + 1), str(i + 1), float(v), 0)
            for u, i, v in zip(uu.tolist(), ii.tolist(), values.tolist())]
    return RatingDataset(rows)


def generate_clustered_city(n_users: int = 500, n_locations: int = 2000,
                            n_neighborhoods: int = 40, far_fraction: float = 0.2,
                            visits_range=(30, 60), blob_sigma: float = 0.01,
                            far_pool_fraction: float = 0.15,
                            seed: int = 0) -> CheckinDataset:
    """Synthetic check-in city with home/work structure plus far-flung noise.

    Locations mostly sit in tight neighborhood blobs; each user checks into
    locations of two home neighborhoods, plus a far_fraction of uniformly
    scattered far-away locations.  Structured visits happen during the day
    and evening; far-flung visits happen late at night, so both hardship and
    timestamp attributes can segregate the noise.
    """
    rng = rng_for(seed, "generate_clustered_city")
    base = datetime(2010, 7, 1)

    centers = np.column_stack([
        rng.uniform(30.0, 30.3, n_neighborhoods),
        rng.uniform(-97.9, -97.6, n_neighborhoods),
    ])
    n_far = max(1, int(n_locations * far_pool_fraction))
    n_near = n_locations - n_far
    loc_ids = [f"L{j:05d}" for j in range(n_locations)]
    loc_coords = np.empty((n_locations, 2))
    loc_hood = np.full(n_locations, -1)
    hood_members: list[list[int]] = [[] for _ in range(n_neighborhoods)]
    for j in range(n_near):
        h = int(rng.integers(n_neighborhoods))
        loc_hood[j] = h
        hood_members[h].append(j)
        loc_coords[j] = centers[h] + rng.normal(0.0, blob_sigma, 2)
    far_pool = list(range(n_near, n_locations))
    for j in far_pool:
        loc_coords[j] = [rng.uniform(29.0, 31.3), rng.uniform(-99.0, -96.5)]

    rows = []
    lo, hi = visits_range
    for u in range(n_users):
        uid = f"U{u:04d}"
        hoods = rng.choice(n_neighborhoods, size=2, replace=False)
        near_pool = hood_members[hoods[0]] + hood_members[hoods[1]]
        n_visits = int(rng.integers(lo, hi + 1))
        n_far_visits = int(round(n_visits * far_fraction))
        n_near_visits = min(n_visits - n_far_visits, len(near_pool))
        n_far_visits = min(n_far_visits, len(far_pool))
        chosen_near = rng.choice(near_pool, size=n_near_visits, replace=False)
        chosen_far = rng.choice(far_pool, size=n_far_visits, replace=False)
        for j in chosen_near.tolist():
            hour = int(rng.integers(8, 24))
            t = base + timedelta(days=int(rng.integers(0, 120)), hours=hour,
                                 minutes=int(rng.integers(0, 60)))
            rows.append(Checkin(uid, loc_ids[j], float(loc_coords[j, 0]),
                                float(loc_coords[j, 1]), t))
        for j in chosen_far.tolist():
            hour = int(rng.integers(0, 6))
            t = base + timedelta(days=int(rng.integers(0, 120)), hours=hour,
                                 minutes=int(rng.integers(0, 60)))
            rows.append(Checkin(uid, loc_ids[j], float(loc_coords[j, 0]),
                                float(loc_coords[j, 1]), t))
    return CheckinDataset(rows)
