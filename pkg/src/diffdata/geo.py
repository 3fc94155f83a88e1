"""Great-circle distance and KMeans over check-in coordinates."""

import math
from dataclasses import dataclass

from .seeding import rng_for

EARTH_RADIUS_KM = 6371.0
MAX_KMEANS_ITERS = 100


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float


@dataclass
class Centroids:
    points: list
    k: int
    objective_history: list = None  # sum of squared assigned distances per iteration


def haversine_km(a, b) -> float:
    """Great-circle distance in km on a sphere of radius 6371.0 km."""
    lat1, lon1 = math.radians(a.lat), math.radians(a.lon)
    lat2, lon2 = math.radians(b.lat), math.radians(b.lon)
    sin_dlat = math.sin((lat2 - lat1) * 0.5)
    sin_dlon = math.sin((lon2 - lon1) * 0.5)
    h = sin_dlat * sin_dlat + math.cos(lat1) * math.cos(lat2) * sin_dlon * sin_dlon
    return EARTH_RADIUS_KM * 2.0 * math.atan2(math.sqrt(h), math.sqrt(max(0.0, 1.0 - h)))


def kmeans(points, k: int, seed: int) -> Centroids:
    """Lloyd's algorithm under the haversine metric.

    Centroid update is the arithmetic mean of member lat/lon (a city-scale
    approximation); assignment is by haversine distance.  Initial centroids
    are k distinct points sampled uniformly (duplicated if there are fewer
    than k distinct points).  Runs until assignments stop changing or 100
    iterations.
    """
    if not points:
        raise ValueError("kmeans: empty input")
    if k < 1:
        raise ValueError("kmeans: k must be >= 1")
    rng = rng_for(seed, "kmeans")
    distinct = sorted({(p.lat, p.lon) for p in points})
    if len(distinct) <= k:
        picks = list(distinct)
        while len(picks) < k:
            picks.append(distinct[int(rng.integers(len(distinct)))])
    else:
        idx = rng.choice(len(distinct), size=k, replace=False)
        picks = [distinct[i] for i in sorted(idx.tolist())]
    centroids = [GeoPoint(lat, lon) for lat, lon in picks]

    assign = [-1] * len(points)
    history = []
    for _ in range(MAX_KMEANS_ITERS):
        new_assign = []
        objective = 0.0
        for p in points:
            dists = [haversine_km(p, c) for c in centroids]
            best = min(dists)
            objective += best * best
            new_assign.append(dists.index(best))
        history.append(objective)
        if new_assign == assign:
            break
        assign = new_assign
        for c_idx in range(k):
            members = [p for p, a in zip(points, assign) if a == c_idx]
            if members:
                centroids[c_idx] = GeoPoint(
                    sum(p.lat for p in members) / len(members),
                    sum(p.lon for p in members) / len(members),
                )
    return Centroids(points=centroids, k=k, objective_history=history)
