"""Reference recommenders.

User-based cosine Top-N for binary location data, and a biased latent
factor model trained by stochastic gradient descent for star ratings.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .seeding import rng_for

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


class TrainingDiverged(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Cosine Top-N for binary check-in vectors
# ---------------------------------------------------------------------------

def cosine_similarity(u_locs: set, v_locs: set) -> float:
    """w = |u ∩ v| / (sqrt(|u|) sqrt(|v|)) for binary vectors; 0 if either is empty."""
    if not u_locs or not v_locs:
        return 0.0
    return len(u_locs & v_locs) / math.sqrt(len(u_locs) * len(v_locs))


@dataclass
class SimilarityContext:
    """Frozen training state for the cosine Top-N recommender.

    Holds the binary user-location matrix, the pairwise similarity matrix
    with the diagonal zeroed (self-similarity excluded), and its row sums.
    """

    users: list
    locations: list
    matrix: np.ndarray
    similarity: np.ndarray = field(init=False)
    sim_rowsum: np.ndarray = field(init=False)
    user_index: dict = field(init=False)
    loc_index: dict = field(init=False)

    def __post_init__(self):
        self.user_index = {u: i for i, u in enumerate(self.users)}
        self.loc_index = {l: i for i, l in enumerate(self.locations)}
        norms = np.sqrt(self.matrix.sum(axis=1))
        w = self.matrix @ self.matrix.T
        with np.errstate(divide="ignore", invalid="ignore"):
            w = w / np.outer(norms, norms)
        w[~np.isfinite(w)] = 0.0
        np.fill_diagonal(w, 0.0)
        self.similarity = w
        self.sim_rowsum = w.sum(axis=1)

    @classmethod
    def from_user_locations(cls, user_locations: dict, locations=None):
        users = sorted(user_locations)
        if locations is None:
            locations = sorted(set().union(*user_locations.values())) if user_locations else []
        loc_index = {l: i for i, l in enumerate(locations)}
        mat = np.zeros((len(users), len(locations)))
        for ui, u in enumerate(users):
            for loc in user_locations[u]:
                if loc in loc_index:
                    mat[ui, loc_index[loc]] = 1.0
        return cls(users=users, locations=list(locations), matrix=mat)

    def visited(self, user) -> set:
        ui = self.user_index[user]
        return {self.locations[j] for j in np.flatnonzero(self.matrix[ui])}

    def score_row(self, user) -> np.ndarray:
        """location_score for one user over the whole catalog."""
        ui = self.user_index[user]
        denom = self.sim_rowsum[ui]
        if denom <= 0.0:
            return np.zeros(len(self.locations))
        return (self.similarity[ui] @ self.matrix) / denom

    def score_all(self) -> np.ndarray:
        denom = self.sim_rowsum.copy()
        denom[denom <= 0.0] = np.inf
        return (self.similarity @ self.matrix) / denom[:, None]


def location_score(user, location, ctx: SimilarityContext) -> float:
    """Similarity-weighted fraction of users who visited the location.

    Self-similarity is excluded from both sums; a zero denominator (no
    similar users) scores 0.
    """
    if location not in ctx.loc_index:
        return 0.0
    return float(ctx.score_row(user)[ctx.loc_index[location]])


def top_n(user, ctx: SimilarityContext, n: int) -> list:
    """The n highest-scoring unvisited locations, ties by ascending id."""
    if n < 1:
        raise ValueError("n must be >= 1")
    scores = ctx.score_row(user)
    ui = ctx.user_index[user]
    candidates = np.flatnonzero(ctx.matrix[ui] == 0.0)
    # catalog is sorted, so index order breaks ties by ascending location id
    order = candidates[np.lexsort((candidates, -scores[candidates]))]
    return [ctx.locations[j] for j in order[:n].tolist()]


def recommend_all(ctx: SimilarityContext, n: int, users=None) -> dict:
    """Batch top_n; identical output, one matrix pass."""
    scores = ctx.score_all()
    out = {}
    targets = ctx.users if users is None else users
    for user in targets:
        ui = ctx.user_index.get(user)
        if ui is None:
            out[user] = []
            continue
        candidates = np.flatnonzero(ctx.matrix[ui] == 0.0)
        order = candidates[np.lexsort((candidates, -scores[ui][candidates]))]
        out[user] = [ctx.locations[j] for j in order[:n].tolist()]
    return out


# ---------------------------------------------------------------------------
# Biased SGD latent factor model for star ratings
# ---------------------------------------------------------------------------

@dataclass
class MFHyper:
    n_factors: int = 20
    learning_rate: float = 0.005
    regularization: float = 0.02
    n_epochs: int = 30
    init_std: float = 0.1
    clamp: bool = False


@dataclass
class MFModel:
    users: list
    items: list
    mu: float
    user_bias: np.ndarray
    item_bias: np.ndarray
    user_factors: np.ndarray
    item_factors: np.ndarray
    hyper: MFHyper
    user_index: dict = field(init=False)
    item_index: dict = field(init=False)

    def __post_init__(self):
        self.user_index = {u: i for i, u in enumerate(self.users)}
        self.item_index = {i: j for j, i in enumerate(self.items)}

    def save(self, path):
        np.savez_compressed(
            path, version=1, users=np.array(self.users, dtype=object),
            items=np.array(self.items, dtype=object), mu=self.mu,
            user_bias=self.user_bias, item_bias=self.item_bias,
            user_factors=self.user_factors, item_factors=self.item_factors,
            hyper=np.array([self.hyper.n_factors, self.hyper.learning_rate,
                            self.hyper.regularization, self.hyper.n_epochs,
                            self.hyper.init_std, float(self.hyper.clamp)]),
        )

    @classmethod
    def load(cls, path):
        z = np.load(path, allow_pickle=True)
        h = z["hyper"]
        hyper = MFHyper(n_factors=int(h[0]), learning_rate=float(h[1]),
                        regularization=float(h[2]), n_epochs=int(h[3]),
                        init_std=float(h[4]), clamp=bool(h[5]))
        return cls(users=list(z["users"]), items=list(z["items"]), mu=float(z["mu"]),
                   user_bias=z["user_bias"], item_bias=z["item_bias"],
                   user_factors=z["user_factors"], item_factors=z["item_factors"],
                   hyper=hyper)


if _HAVE_NUMBA:
    @njit(cache=True)
    def _sgd_one_epoch(u_idx, i_idx, values, order, mu, bu, bi, p, q, lr, reg):
        n_factors = p.shape[1]
        for t in range(order.shape[0]):
            r = order[t]
            u = u_idx[r]
            i = i_idx[r]
            pred = mu + bu[u] + bi[i]
            for f in range(n_factors):
                pred += p[u, f] * q[i, f]
            e = values[r] - pred
            bu[u] += lr * (e - reg * bu[u])
            bi[i] += lr * (e - reg * bi[i])
            for f in range(n_factors):
                pf = p[u, f]
                qf = q[i, f]
                p[u, f] += lr * (e * qf - reg * pf)
                q[i, f] += lr * (e * pf - reg * qf)
else:  # pragma: no cover
    def _sgd_one_epoch(u_idx, i_idx, values, order, mu, bu, bi, p, q, lr, reg):
        for r in order:
            u, i = u_idx[r], i_idx[r]
            e = values[r] - (mu + bu[u] + bi[i] + p[u] @ q[i])
            bu[u] += lr * (e - reg * bu[u])
            bi[i] += lr * (e - reg * bi[i])
            pu = p[u].copy()
            p[u] += lr * (e * q[i] - reg * pu)
            q[i] += lr * (e * pu - reg * q[i])


def train_mf(train, hyper: MFHyper = None, seed: int = 0) -> MFModel:
    """Biased SGD: r_hat = mu + b_u + b_i + p_u . q_i, L2-regularized.

    Per-rating gradient steps over a seeded shuffle each epoch; training is
    deterministic under (train, hyper, seed).
    """
    if len(train) == 0:
        raise ValueError("train_mf: empty training set")
    hyper = hyper or MFHyper()
    rng = rng_for(seed, "train_mf")
    users, items = train.users, train.items
    user_index = {u: i for i, u in enumerate(users)}
    item_index = {i: j for j, i in enumerate(items)}
    u_idx = np.array([user_index[r.user_id] for r in train.rows], dtype=np.int64)
    i_idx = np.array([item_index[r.item_id] for r in train.rows], dtype=np.int64)
    values = np.array([r.value for r in train.rows], dtype=np.float64)

    mu = float(values.mean())
    bu = np.zeros(len(users))
    bi = np.zeros(len(items))
    p = rng.normal(0.0, hyper.init_std, (len(users), hyper.n_factors))
    q = rng.normal(0.0, hyper.init_std, (len(items), hyper.n_factors))

    for epoch in range(hyper.n_epochs):
        order = rng.permutation(len(values)).astype(np.int64)
        _sgd_one_epoch(u_idx, i_idx, values, order, mu, bu, bi, p, q,
                       hyper.learning_rate, hyper.regularization)
        if not (np.isfinite(bu).all() and np.isfinite(bi).all()
                and np.isfinite(p).all() and np.isfinite(q).all()):
            raise TrainingDiverged(f"non-finite parameters after epoch {epoch}")
    return MFModel(users=users, items=items, mu=mu, user_bias=bu, item_bias=bi,
                   user_factors=p, item_factors=q, hyper=hyper)


def predict_rating(model: MFModel, user, item) -> float:
    """mu + b_u + b_i + p_u . q_i; unknown user/item terms contribute 0."""
    pred = model.mu
    ui = model.user_index.get(user)
    ii = model.item_index.get(item)
    if ui is not None:
        pred += model.user_bias[ui]
    if ii is not None:
        pred += model.item_bias[ii]
    if ui is not None and ii is not None:
        pred += float(model.user_factors[ui] @ model.item_factors[ii])
    if model.hyper.clamp:
        pred = min(5.0, max(1.0, pred))
    return float(pred)


def rating_loss(model: MFModel, user, item, value) -> float:
    """Per-rating objective the SGD step descends: 0.5 e^2 + 0.5 reg ||params||^2."""
    reg = model.hyper.regularization
    ui, ii = model.user_index[user], model.item_index[item]
    e = value - predict_rating(model, user, item)
    pen = (model.user_bias[ui] ** 2 + model.item_bias[ii] ** 2
           + float(model.user_factors[ui] @ model.user_factors[ui])
           + float(model.item_factors[ii] @ model.item_factors[ii]))
    return 0.5 * e * e + 0.5 * reg * pen


def rating_gradients(model: MFModel, user, item, value):
    """Analytic gradients of rating_loss wrt (b_u, b_i, p_u, q_i)."""
    reg = model.hyper.regularization
    ui, ii = model.user_index[user], model.item_index[item]
    e = value - predict_rating(model, user, item)
    g_bu = -e + reg * model.user_bias[ui]
    g_bi = -e + reg * model.item_bias[ii]
    g_p = -e * model.item_factors[ii] + reg * model.user_factors[ui]
    g_q = -e * model.user_factors[ui] + reg * model.item_factors[ii]
    return g_bu, g_bi, g_p, g_q
