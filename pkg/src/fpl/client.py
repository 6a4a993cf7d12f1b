"""On-device side of the federation.

A client owns its user vector and its set of consumed items. Each round it
samples training triples, updates its user vector locally and sends back the
item-side deltas: every negative-item delta, and each positive-item delta only
with probability ``disclosure_prob``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fpl.errors import CatalogBoundsError, UntrainableClientError
from fpl.model import Hyperparams, ServerModel, triple_gradient


@dataclass(frozen=True)
class UpdatePayload:
    """Item deltas sent by one client in one round.

    At most one entry per item, sorted by item index. Deltas are unscaled; the
    server multiplies by the learning rate. Entries carry no positive/negative tag.
    """

    sender: int
    items: np.ndarray
    d_factors: np.ndarray
    d_bias: np.ndarray

    def __post_init__(self):
        items = np.asarray(self.items, dtype=np.int64)
        d_factors = np.asarray(self.d_factors, dtype=np.float64)
        d_bias = np.asarray(self.d_bias, dtype=np.float64)
        if d_factors.ndim != 2 or len(d_factors) != len(items) or d_bias.shape != items.shape:
            raise ValueError("payload arrays have inconsistent shapes")
        if len(items) > 1 and not np.all(np.diff(items) > 0):
            raise ValueError("payload items must be strictly increasing")
        for arr in (items, d_factors, d_bias):
            arr.flags.writeable = False
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "d_factors", d_factors)
        object.__setattr__(self, "d_bias", d_bias)

    def __len__(self) -> int:
        return len(self.items)

    def validate(self, catalog_size: int) -> None:
        if len(self.items) and (self.items[0] < 0 or self.items[-1] >= catalog_size):
            raise CatalogBoundsError(f"payload from {self.sender} references items outside [0, {catalog_size})")


@dataclass(eq=False)
class ClientState:
    """Private state of one client.

    ``rng`` drives triple sampling and ``mask_rng`` the disclosure draws, so the
    training trajectory does not depend on the disclosure probability.
    ``buffered_positives`` and ``disclosed_positives`` are device-local audit
    counters; they never reach the server.
    """

    user_id: int
    user_vector: np.ndarray
    positive_items: frozenset
    rng: np.random.Generator
    mask_rng: np.random.Generator
    buffered_positives: int = 0
    disclosed_positives: int = 0
    _positives_sorted: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.user_vector = np.array(self.user_vector, dtype=np.float64)
        self.positive_items = frozenset(int(i) for i in self.positive_items)
        self._positives_sorted = np.array(sorted(self.positive_items), dtype=np.int64)

    def __repr__(self) -> str:
        return f"ClientState(user_id={self.user_id}, latent_dim={len(self.user_vector)})"

    def scores(self, model: ServerModel) -> np.ndarray:
        return model.scores(self.user_vector)


def draw_triple(
    positives_sorted: np.ndarray, positive_set: frozenset, catalog_size: int, rng: np.random.Generator
) -> tuple[int, int]:
    """Uniform positive, then rejection-sampled uniform negative."""
    n_pos = len(positives_sorted)
    if n_pos == 0 or n_pos >= catalog_size:
        raise UntrainableClientError(
            f"client has {n_pos} positives in a catalog of {catalog_size}; no (i, j) triple exists"
        )
    pos = int(positives_sorted[rng.integers(n_pos)])
    return pos, draw_negative(positive_set, catalog_size, rng)


def draw_negative(positive_set: frozenset, catalog_size: int, rng: np.random.Generator) -> int:
    while True:
        neg = int(rng.integers(catalog_size))
        if neg not in positive_set:
            return neg


def sample_triple(state: ClientState, catalog_size: int) -> tuple[int, int]:
    return draw_triple(state._positives_sorted, state.positive_items, catalog_size, state.rng)


class _WorkingCopy:
    # Copy-on-write overlay of the snapshot rows this client has touched.

    def __init__(self, snapshot: ServerModel):
        self._snapshot = snapshot
        self._rows: dict[int, tuple[np.ndarray, float]] = {}

    def row(self, item: int) -> tuple[np.ndarray, float]:
        if item in self._rows:
            return self._rows[item]
        return self._snapshot.item_factors[item], float(self._snapshot.item_bias[item])

    def set(self, item: int, factors: np.ndarray, bias: float) -> None:
        self._rows[item] = (factors, bias)


def _accumulate(buffer: dict, item: int, d_factors: np.ndarray, d_bias: float) -> None:
    if item in buffer:
        acc = buffer[item]
        buffer[item] = (acc[0] + d_factors, acc[1] + d_bias)
    else:
        buffer[item] = (d_factors, d_bias)


def mask_payload(
    positive: dict,
    negative: dict,
    disclosure_prob: float,
    rng: np.random.Generator,
    sender: int = -1,
    latent_dim: int | None = None,
) -> tuple[UpdatePayload, frozenset]:
    """Build the transmitted payload from buffered per-item deltas.

    ``positive`` and ``negative`` map item index to ``(d_factors, d_bias)``.
    Negative-role deltas are always sent. One Bernoulli(``disclosure_prob``)
    draw is made per distinct positive item, in ascending item order; an item
    present in both roles sends the sum of whatever survives.

    Returns the payload and the set of disclosed positive items. The latter
    stays on the device (audit only).
    """
    disclosed = frozenset(i for i in sorted(positive) if rng.random() < disclosure_prob)
    merged = dict(negative)
    for i in sorted(disclosed):
        _accumulate(merged, i, *positive[i])
    items = sorted(merged)
    if latent_dim is None:
        some = next(iter(merged.values()), None)
        latent_dim = 0 if some is None else len(some[0])
    if items:
        d_factors = np.stack([merged[i][0] for i in items])
        d_bias = np.array([merged[i][1] for i in items], dtype=np.float64)
    else:
        d_factors = np.zeros((0, latent_dim))
        d_bias = np.zeros(0)
    return UpdatePayload(sender, np.array(items, dtype=np.int64), d_factors, d_bias), disclosed


def local_round(state: ClientState, snapshot: ServerModel, h: Hyperparams) -> UpdatePayload:
    """Run one round of local BPR optimization and return the masked payload.

    Triples are processed sequentially: each one sees the user vector and the
    item rows already updated by the previous triples of this round. The
    snapshot itself is never written.
    """
    alpha = h.learning_rate
    work = _WorkingCopy(snapshot)
    pos_buf: dict = {}
    neg_buf: dict = {}
    for _ in range(h.triples_per_round):
        i, j = sample_triple(state, snapshot.num_items)
        q_i, b_i = work.row(i)
        q_j, b_j = work.row(j)
        g = triple_gradient(state.user_vector, q_i, b_i, q_j, b_j, h, i, j)
        state.user_vector += alpha * g.d_user
        work.set(i, q_i + alpha * g.d_pos_factors, b_i + alpha * g.d_pos_bias)
        work.set(j, q_j + alpha * g.d_neg_factors, b_j + alpha * g.d_neg_bias)
        _accumulate(pos_buf, i, g.d_pos_factors, g.d_pos_bias)
        _accumulate(neg_buf, j, g.d_neg_factors, g.d_neg_bias)
    payload, disclosed = mask_payload(
        pos_buf, neg_buf, h.disclosure_prob, state.mask_rng, sender=state.user_id, latent_dim=snapshot.latent_dim
    )
    state.buffered_positives += len(pos_buf)
    state.disclosed_positives += len(disclosed)
    return payload
