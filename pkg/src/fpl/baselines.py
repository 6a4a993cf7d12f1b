"""Reference recommenders: centralized BPR-MF, Top-Pop and Random."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from fpl import rng as rngs
from fpl.client import draw_negative, draw_triple
from fpl.data import Dataset
from fpl.errors import ConfigError
from fpl.model import Hyperparams, ServerModel, init_parameters, triple_gradient
from fpl.server import select_cohort

SAMPLING_MODES = ("user-wise", "uniform")


@dataclass
class CentralizedModel:
    user_factors: np.ndarray
    item_factors: np.ndarray
    item_bias: np.ndarray

    def __post_init__(self):
        n_u, f = self.user_factors.shape
        if self.item_factors.shape[1] != f or self.item_factors.shape[0] != self.item_bias.shape[0]:
            raise ValueError("inconsistent factor shapes")

    @property
    def server_model(self) -> ServerModel:
        # shares memory with this model
        return ServerModel(self.item_factors, self.item_bias)

    def scores(self, user: int) -> np.ndarray:
        return self.item_bias + self.item_factors @ self.user_factors[user]

    def copy(self) -> CentralizedModel:
        return CentralizedModel(self.user_factors.copy(), self.item_factors.copy(), self.item_bias.copy())


class BPRTrainer:
    """Step-wise SGD for BPR-MF on the whole (centralized) training matrix.

    ``user-wise`` draws a user uniformly with the same server stream and cohort
    routine as the federation, then a triple from that user's own stream;
    ``uniform`` draws a (user, positive) pair uniformly over all train
    positives and rejection-samples the negative.
    """

    def __init__(self, dataset: Dataset, h: Hyperparams, sampling_mode: str = "user-wise", seed: int = 0):
        if sampling_mode not in SAMPLING_MODES:
            raise ConfigError(f"sampling_mode must be one of {SAMPLING_MODES}, got {sampling_mode!r}")
        self.dataset = dataset
        self.h = h
        self.sampling_mode = sampling_mode
        self.steps = 0
        P, Q, b = init_parameters(dataset.num_users, dataset.num_items, h.latent_dim, rngs.stream(seed, rngs.INIT))
        self.model = CentralizedModel(P, Q, b)
        self._positives = dataset.train_positives
        self._sorted = [np.array(sorted(p), dtype=np.int64) for p in self._positives]
        self._server_rng = rngs.stream(seed, rngs.SERVER)
        if sampling_mode == "user-wise":
            self._user_rngs = [rngs.stream(seed, rngs.SAMPLE, u) for u in range(dataset.num_users)]
        else:
            self._pairs = np.array(
                [(u, i) for u, recs in enumerate(self._sorted) for i in recs], dtype=np.int64
            ).reshape(-1, 2)

    def sample(self) -> tuple[int, int, int]:
        n_items = self.dataset.num_items
        if self.sampling_mode == "user-wise":
            u = select_cohort(self.dataset.num_users, 1, self._server_rng)[0]
            i, j = draw_triple(self._sorted[u], self._positives[u], n_items, self._user_rngs[u])
            return u, i, j
        u, i = (int(x) for x in self._pairs[self._server_rng.integers(len(self._pairs))])
        return u, i, draw_negative(self._positives[u], n_items, self._server_rng)

    def step(self) -> tuple[int, int, int]:
        u, i, j = self.sample()
        m, alpha = self.model, self.h.learning_rate
        g = triple_gradient(m.user_factors[u], m.item_factors[i], float(m.item_bias[i]),
                            m.item_factors[j], float(m.item_bias[j]), self.h, i, j)
        m.user_factors[u] += alpha * g.d_user
        m.item_factors[i] += alpha * g.d_pos_factors
        m.item_bias[i] += alpha * g.d_pos_bias
        m.item_factors[j] += alpha * g.d_neg_factors
        m.item_bias[j] += alpha * g.d_neg_bias
        self.steps += 1
        return u, i, j


def train_bpr_centralized(
    dataset: Dataset,
    h: Hyperparams,
    epochs: int,
    sampling_mode: str = "user-wise",
    seed: int = 0,
    on_epoch: Callable[[int, CentralizedModel], None] | None = None,
) -> CentralizedModel:
    """Train BPR-MF for ``epochs * X+`` SGD steps."""
    if epochs < 0:
        raise ConfigError(f"epochs must be >= 0, got {epochs}")
    trainer = BPRTrainer(dataset, h, sampling_mode, seed)
    for epoch in range(1, epochs + 1):
        for _ in range(dataset.x_plus):
            trainer.step()
        if on_epoch is not None:
            on_epoch(epoch, trainer.model)
    return trainer.model


def recommend_top_n(scores: np.ndarray, n: int, exclude: Sequence[int] | frozenset = ()) -> list[int]:
    """Top-``n`` items by descending score, skipping ``exclude``; ties go to the lower index."""
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    scores = np.asarray(scores)
    if len(exclude):
        candidates = np.setdiff1d(np.arange(len(scores)), np.fromiter(exclude, dtype=np.int64))
    else:
        candidates = np.arange(len(scores))
    if len(candidates) == 0:
        return []
    cs = scores[candidates]
    if len(cs) > 4 * n:
        threshold = np.partition(cs, len(cs) - n)[len(cs) - n]
        keep = np.flatnonzero(cs >= threshold)
        candidates, cs = candidates[keep], cs[keep]
    order = np.argsort(-cs, kind="stable")[:n]
    return [int(i) for i in candidates[order]]


def recommend_all(score_fn: Callable[[int], np.ndarray], num_users: int, n: int,
                  exclude: Sequence[frozenset]) -> list[list[int]]:
    return [recommend_top_n(score_fn(u), n, exclude[u]) for u in range(num_users)]


def item_popularity(dataset: Dataset) -> np.ndarray:
    counts = np.zeros(dataset.num_items, dtype=np.int64)
    for pos in dataset.train_positives:
        counts[list(pos)] += 1
    return counts


def top_pop(dataset: Dataset, n: int) -> list[list[int]]:
    counts = item_popularity(dataset)
    # descending count, ascending index among ties
    ranking = np.lexsort((np.arange(len(counts)), -counts))
    out = []
    for pos in dataset.train_positives:
        recs = []
        for i in ranking:
            if int(i) not in pos:
                recs.append(int(i))
                if len(recs) == n:
                    break
        out.append(recs)
    return out


def random_recommender(catalog_size: int, train_positives: Sequence[frozenset], n: int, seed: int = 0) -> list[list[int]]:
    """Uniform ``n``-subset of the non-train items for each user, in random order."""
    out = []
    for u, pos in enumerate(train_positives):
        eligible = np.setdiff1d(np.arange(catalog_size), np.fromiter(pos, dtype=np.int64))
        rng = rngs.stream(seed, rngs.RANDOM_REC, u)
        k = min(n, len(eligible))
        out.append([int(i) for i in rng.choice(eligible, size=k, replace=False)])
    return out
