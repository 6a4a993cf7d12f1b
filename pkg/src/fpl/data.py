"""Interaction logs: ingestion, filtering, temporal hold-out splits, synthetic data."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from fpl.client import draw_triple
from fpl.errors import ConfigError, ParseError

log = logging.getLogger(__name__)

INDEX_FILE = "index.tsv"
TRAIN_FILE = "train.tsv"
TEST_FILE = "test.tsv"
VALIDATION_FILE = "validation.tsv"
MANIFEST_FILE = "manifest.json"


class Interaction(NamedTuple):
    user: str
    item: str
    timestamp: int


# per-user records: tuple of (item index, timestamp), ascending by (timestamp, item)
UserRecords = tuple


@dataclass(frozen=True)
class Dataset:
    """Binarized interactions split per user into train / (validation) / test.

    ``user_keys[u]`` and ``item_keys[i]`` give the external keys of the dense
    indices. The catalog is every item seen after filtering, including items
    that only occur in test.
    """

    user_keys: tuple
    item_keys: tuple
    train: tuple
    test: tuple
    validation: tuple | None = None

    @property
    def num_users(self) -> int:
        return len(self.user_keys)

    @property
    def num_items(self) -> int:
        return len(self.item_keys)

    @cached_property
    def train_positives(self) -> list[frozenset]:
        return [frozenset(i for i, _ in recs) for recs in self.train]

    @cached_property
    def test_positives(self) -> list[frozenset]:
        return [frozenset(i for i, _ in recs) for recs in self.test]

    @cached_property
    def validation_positives(self) -> list[frozenset] | None:
        if self.validation is None:
            return None
        return [frozenset(i for i, _ in recs) for recs in self.validation]

    @property
    def x_plus(self) -> int:
        return sum(len(recs) for recs in self.train)

    def sample_triples(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` training triples ``(u, i, j)`` with the user drawn uniformly."""
        trainable = [
            u for u, pos in enumerate(self.train_positives) if 0 < len(pos) < self.num_items
        ]
        out = np.zeros((n if trainable else 0, 3), dtype=np.int64)
        if not trainable:
            return out
        sorted_pos = {}
        for k in range(n):
            u = trainable[int(rng.integers(len(trainable)))]
            if u not in sorted_pos:
                sorted_pos[u] = np.array(sorted(self.train_positives[u]), dtype=np.int64)
            i, j = draw_triple(sorted_pos[u], self.train_positives[u], self.num_items, rng)
            out[k] = (u, i, j)
        return out

    def characteristics(self) -> dict:
        """Counts in the layout of a dataset-characteristics table."""
        n_u, n_i, x = self.num_users, self.num_items, self.x_plus
        return {
            "users": n_u,
            "items": n_i,
            "x_plus": x,
            "x_plus_per_user": x / n_u if n_u else 0.0,
            "x_plus_per_item": x / n_i if n_i else 0.0,
            "density_pct": 100.0 * x / (n_u * n_i) if n_u and n_i else 0.0,
            "test_records": sum(len(r) for r in self.test),
            "validation_records": None if self.validation is None else sum(len(r) for r in self.validation),
        }


def ingest(path: str | os.PathLike) -> list[Interaction]:
    """Read a ``user<TAB>item<TAB>timestamp`` file; ``#`` lines and blank lines are skipped."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"expected 3 tab-separated fields, got {len(parts)}", line=lineno)
            user, item, ts = parts
            if not user or not item:
                raise ParseError("empty user or item key", line=lineno)
            try:
                timestamp = int(ts)
            except ValueError:
                raise ParseError(f"timestamp {ts!r} is not an integer", line=lineno) from None
            if timestamp < 0:
                raise ParseError(f"negative timestamp {timestamp}", line=lineno)
            records.append(Interaction(user, item, timestamp))
    return records


def filter_and_binarize(records: Iterable[Interaction], min_interactions: int) -> list[Interaction]:
    """Deduplicate ``(user, item)`` keeping the earliest timestamp, then keep users
    with strictly more than ``min_interactions`` distinct items.

    Output keeps the position of each pair's first occurrence in the input.
    """
    if min_interactions < 0:
        raise ConfigError(f"min_interactions must be >= 0, got {min_interactions}")
    earliest: dict[tuple[str, str], int] = {}
    for r in records:
        key = (r.user, r.item)
        if key not in earliest or r.timestamp < earliest[key]:
            earliest[key] = r.timestamp
    per_user: dict[str, int] = {}
    for user, _ in earliest:
        per_user[user] = per_user.get(user, 0) + 1
    return [
        Interaction(u, i, t) for (u, i), t in earliest.items() if per_user[u] > min_interactions
    ]


def _split_sorted(recs: list, fraction: float) -> tuple[list, list]:
    n_train = max(1, math.floor(fraction * len(recs)))
    return recs[:n_train], recs[n_train:]


def temporal_split(records: Sequence[Interaction], train_fraction: float = 0.8) -> Dataset:
    """Per-user chronological hold-out.

    The first ``floor(train_fraction * n_u)`` records (at least one) of each user
    go to train, the rest to test; ties on timestamp are ordered by item index.
    Users left with an empty test side are dropped.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    item_keys = tuple(sorted({r.item for r in records}))
    item_index = {k: i for i, k in enumerate(item_keys)}
    by_user: dict[str, list] = {}
    for r in records:
        by_user.setdefault(r.user, []).append((item_index[r.item], r.timestamp))

    user_keys, train, test = [], [], []
    dropped = []
    for user in sorted(by_user):
        recs = sorted(by_user[user], key=lambda it: (it[1], it[0]))
        tr, te = _split_sorted(recs, train_fraction)
        if not tr or not te:
            dropped.append(user)
            continue
        user_keys.append(user)
        train.append(tuple(tr))
        test.append(tuple(te))
    if dropped:
        log.warning("dropped %d users whose split leaves an empty side", len(dropped))
    return Dataset(tuple(user_keys), item_keys, tuple(train), tuple(test))


def validation_split(dataset: Dataset, fraction: float = 0.8) -> Dataset:
    """Split each user's train side chronologically into sub-train and validation.

    Returns a dataset whose ``train`` is the sub-train part and whose
    ``validation`` holds the held-out part; ``test`` is unchanged. A user with a
    single train record keeps it and gets an empty validation set.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"fraction must lie in (0, 1), got {fraction}")
    if dataset.validation is not None:
        raise ConfigError("dataset already carries a validation split")
    sub, val = [], []
    for recs in dataset.train:
        tr, va = _split_sorted(list(recs), fraction)
        sub.append(tuple(tr))
        val.append(tuple(va))
    n_empty = sum(1 for v in val if not v)
    if n_empty:
        log.warning("%d users have an empty validation side", n_empty)
    return Dataset(dataset.user_keys, dataset.item_keys, tuple(sub), dataset.test, tuple(val))


def generate_synthetic(
    num_users: int,
    num_items: int,
    latent_dim: int,
    density: float,
    popularity_skew: float = 1.0,
    seed: int = 0,
    signal: float = 4.0,
    intercept: float = -6.0,
) -> list[Interaction]:
    """Check-in-like log with planted preferences.

    Sampling is item-first. Item ``i`` of popularity rank ``r_i`` (a random
    permutation) gets about ``density * num_users * num_items * r_i^-popularity_skew
    / sum(r^-popularity_skew)`` consumers, capped at ``num_users``; they are drawn
    without replacement with weight ``sigmoid(p_u . q_i + intercept)``, so item
    frequencies follow the power law while the planted factors decide who
    consumes what. ``p_u . q_i`` has standard deviation ``signal``; a negative
    intercept concentrates each item's audience. Timestamps increase along each
    user's history in a random order of the consumed items, so the hold-out side
    is not biased towards weaker preferences.
    """
    if num_users < 1 or num_items < 2 or latent_dim < 1:
        raise ConfigError("need num_users >= 1, num_items >= 2, latent_dim >= 1")
    if not 0.0 < density < 1.0:
        raise ConfigError(f"density must lie in (0, 1), got {density}")
    if popularity_skew < 0 or signal < 0:
        raise ConfigError("popularity_skew and signal must be nonnegative")
    rng = np.random.default_rng(seed)
    scale = (signal**2 / latent_dim) ** 0.25
    users = rng.normal(0.0, scale, size=(num_users, latent_dim))
    items = rng.normal(0.0, scale, size=(num_items, latent_dim))
    ranks = rng.permutation(num_items) + 1.0
    popularity = ranks**-popularity_skew
    expected = density * num_users * num_items * popularity / popularity.sum()
    rate = np.minimum(expected / num_users, 1.0)
    # floor keeps every user drawable when the sigmoid underflows
    taste = np.maximum(expit(users @ items.T + intercept), 1e-300)

    consumed = [[] for _ in range(num_users)]
    for i in range(num_items):
        n_i = int(rng.binomial(num_users, rate[i]))
        if n_i == 0:
            continue
        w = taste[:, i]
        for u in rng.choice(num_users, size=n_i, replace=False, p=w / w.sum()):
            consumed[u].append(i)

    width_u = len(str(num_users - 1))
    width_i = len(str(num_items - 1))
    records = []
    t0 = 1_300_000_000
    for u, chosen in enumerate(consumed):
        if not chosen:
            continue
        chosen = rng.permutation(chosen)
        ts = t0 + np.cumsum(rng.integers(60, 86_400, size=len(chosen)))
        for item, t in zip(chosen, ts):
            records.append(Interaction(f"u{u:0{width_u}d}", f"i{item:0{width_i}d}", int(t)))
    return records


def write_interactions(path: str | os.PathLike, records: Iterable[Interaction]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# user\titem\ttimestamp\n")
        for r in records:
            fh.write(f"{r.user}\t{r.item}\t{r.timestamp}\n")


def _write_side(path: Path, side: tuple) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for u, recs in enumerate(side):
            for i, t in recs:
                fh.write(f"{u}\t{i}\t{t}\n")


def _read_side(path: Path, num_users: int) -> tuple:
    per_user = [[] for _ in range(num_users)]
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                u, i, t = (int(x) for x in line.split("\t"))
            except ValueError:
                raise ParseError(f"malformed record in {path.name}", line=lineno) from None
            per_user[u].append((i, t))
    return tuple(tuple(sorted(recs, key=lambda it: (it[1], it[0]))) for recs in per_user)


def save_dataset(dataset: Dataset, directory: str | os.PathLike, params: dict | None = None) -> Path:
    """Write index map, train, test (and validation) TSVs plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / INDEX_FILE, "w", encoding="utf-8") as fh:
        fh.write("# kind\tindex\tkey\n")
        for u, key in enumerate(dataset.user_keys):
            fh.write(f"user\t{u}\t{key}\n")
        for i, key in enumerate(dataset.item_keys):
            fh.write(f"item\t{i}\t{key}\n")
    _write_side(directory / TRAIN_FILE, dataset.train)
    _write_side(directory / TEST_FILE, dataset.test)
    if dataset.validation is not None:
        _write_side(directory / VALIDATION_FILE, dataset.validation)
    manifest = {"format": "fpl-dataset/1", **dataset.characteristics(), "params": params or {}}
    with open(directory / MANIFEST_FILE, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return directory


def load_dataset(directory: str | os.PathLike) -> Dataset:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory {directory} does not exist")
    users, items = {}, {}
    with open(directory / INDEX_FILE, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#") or not line.strip():
                continue
            parts = line.rstrip("\r\n").split("\t")
            if len(parts) != 3 or parts[0] not in ("user", "item"):
                raise ParseError(f"malformed index entry in {INDEX_FILE}", line=lineno)
            (users if parts[0] == "user" else items)[int(parts[1])] = parts[2]
    if sorted(users) != list(range(len(users))) or sorted(items) != list(range(len(items))):
        raise ParseError(f"{INDEX_FILE} indices are not contiguous")
    n_u = len(users)
    validation = None
    if (directory / VALIDATION_FILE).exists():
        validation = _read_side(directory / VALIDATION_FILE, n_u)
    return Dataset(
        tuple(users[u] for u in range(n_u)),
        tuple(items[i] for i in range(len(items))),
        _read_side(directory / TRAIN_FILE, n_u),
        _read_side(directory / TEST_FILE, n_u),
        validation,
    )


def dataset_files(directory: str | os.PathLike) -> list[Path]:
    directory = Path(directory)
    names = [INDEX_FILE, TRAIN_FILE, TEST_FILE, VALIDATION_FILE]
    return [directory / n for n in names if (directory / n).exists()]
