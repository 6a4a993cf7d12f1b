"""Rounds of communication between the server and its clients.

Each round is Distribution (cohort selection, read-only snapshot of the item
model), Computation (every cohort member runs :func:`fpl.client.local_round`
against the same snapshot), Transmission (masked payloads) and Aggregation.

``sfpl`` uses one random client and one triple per round; ``pfpl`` uses every
client, one triple each. ``rounds_per_epoch`` rounds perform at least as many
optimization steps as one centralized BPR epoch.
"""

from __future__ import annotations

import json
import logging
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from fpl import rng as rngs
from fpl.client import ClientState, local_round
from fpl.data import Dataset
from fpl.errors import ConfigError, UntrainableClientError
from fpl.model import Hyperparams, ServerModel, init_parameters
from fpl.server import aggregate, select_cohort

log = logging.getLogger(__name__)

SEQUENTIAL = "sfpl"
PARALLEL = "pfpl"
CUSTOM = "custom"
MODES = (SEQUENTIAL, PARALLEL, CUSTOM)


@dataclass(frozen=True)
class FederationConfig:
    mode: str = SEQUENTIAL
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        h = self.hyperparams
        if self.mode in (SEQUENTIAL, PARALLEL) and h.triples_per_round != 1:
            raise ConfigError(f"{self.mode} uses one triple per round; got triples_per_round={h.triples_per_round}")
        if self.mode == SEQUENTIAL and h.cohort_size not in (None, 1):
            raise ConfigError(f"sfpl uses a cohort of one client; got cohort_size={h.cohort_size}")

    def resolve(self, num_users: int) -> Hyperparams:
        """Hyperparameters with a concrete cohort size for a population of ``num_users``."""
        h = self.hyperparams
        if self.mode == SEQUENTIAL:
            h = h.replace(cohort_size=1)
        elif self.mode == PARALLEL:
            if h.cohort_size not in (None, num_users):
                raise ConfigError(f"pfpl involves all {num_users} users; got cohort_size={h.cohort_size}")
            h = h.replace(cohort_size=num_users)
        elif h.cohort_size is None:
            h = h.replace(cohort_size=num_users)
        h.validate(num_users)
        return h


def rounds_per_epoch(x_plus: int, cohort_size: int, triples_per_round: int) -> int:
    """Rounds whose step count first reaches one centralized epoch of ``x_plus`` steps."""
    if x_plus < 1 or cohort_size < 1 or triples_per_round < 1:
        raise ConfigError("x_plus, cohort_size and triples_per_round must be positive")
    return -(-x_plus // (cohort_size * triples_per_round))


@dataclass
class TrainingState:
    server_model: ServerModel
    clients: list[ClientState]
    server_rng: np.random.Generator
    round_counter: int = 0
    rpe: int = 1

    @property
    def user_factors(self) -> np.ndarray:
        return np.stack([c.user_vector for c in self.clients])

    def scores(self, user: int) -> np.ndarray:
        return self.clients[user].scores(self.server_model)


@dataclass(frozen=True)
class RoundReport:
    round_index: int
    cohort: tuple
    payload_sizes: tuple
    skipped: tuple = ()


def init_state(config: FederationConfig, dataset: Dataset) -> TrainingState:
    h = config.resolve(dataset.num_users)
    P, Q, b = init_parameters(dataset.num_users, dataset.num_items, h.latent_dim, rngs.stream(config.seed, rngs.INIT))
    clients = [
        ClientState(
            user_id=u,
            user_vector=P[u],
            positive_items=dataset.train_positives[u],
            rng=rngs.stream(config.seed, rngs.SAMPLE, u),
            mask_rng=rngs.stream(config.seed, rngs.MASK, u),
        )
        for u in range(dataset.num_users)
    ]
    rpe = rounds_per_epoch(max(dataset.x_plus, 1), h.cohort_size, h.triples_per_round)
    return TrainingState(ServerModel(Q, b), clients, rngs.stream(config.seed, rngs.SERVER), 0, rpe)


def run_round(state: TrainingState, h: Hyperparams) -> RoundReport:
    """One Distribution -> Computation -> Transmission -> Aggregation cycle.

    ``h`` must carry a concrete cohort size (see :meth:`FederationConfig.resolve`).
    Untrainable clients are skipped with a warning.
    """
    cohort = select_cohort(len(state.clients), h.cohort_size, state.server_rng)
    snapshot = state.server_model.read_only_view()
    payloads, skipped = [], []
    for u in cohort:
        try:
            payloads.append(local_round(state.clients[u], snapshot, h))
        except UntrainableClientError as exc:
            log.warning("round %d: skipping client %d: %s", state.round_counter, u, exc)
            skipped.append(u)
    # barrier: every payload is computed before the model changes
    aggregate(state.server_model, payloads, h.learning_rate)
    report = RoundReport(state.round_counter, tuple(cohort), tuple(len(p) for p in payloads), tuple(skipped))
    state.round_counter += 1
    return report


@dataclass
class History:
    epochs: list = field(default_factory=list)
    rounds: list = field(default_factory=list)


def run_training(
    config: FederationConfig,
    dataset: Dataset,
    *,
    on_epoch: Callable[[int, TrainingState], dict | None] | None = None,
    log_rounds: bool = False,
    state: TrainingState | None = None,
) -> tuple[TrainingState, History]:
    """Run ``config.epochs * rpe`` rounds.

    ``on_epoch(epoch, state)`` may return a dict of per-epoch measurements,
    which is appended to ``history.epochs``. Set ``log_rounds`` to also keep
    every :class:`RoundReport`.
    """
    h = config.resolve(dataset.num_users)
    if state is None:
        state = init_state(config, dataset)
    history = History()
    if dataset.x_plus == 0 or config.epochs == 0:
        return state, history
    for epoch in range(1, config.epochs + 1):
        for _ in range(state.rpe):
            report = run_round(state, h)
            if log_rounds:
                history.rounds.append(report)
        if on_epoch is not None:
            row = on_epoch(epoch, state)
            if row is not None:
                history.epochs.append({"epoch": epoch, "rounds": state.round_counter, **row})
    return state, history


# --- checkpoints --------------------------------------------------------------

CHECKPOINT_MAGIC = b"FPLCKPT\x00"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    """Model dump: named float64 arrays plus JSON-serializable metadata.

    Binary layout: 8-byte magic, little-endian uint64 header length, UTF-8
    JSON header (sorted keys), then the raw little-endian array bytes in header
    order. Writing the same checkpoint twice produces identical bytes.
    """

    kind: str
    meta: dict
    arrays: dict = field(default_factory=dict)

    def scores(self, user: int) -> np.ndarray:
        return self.arrays["item_bias"] + self.arrays["item_factors"] @ self.arrays["user_factors"][user]


def save_checkpoint(path: str | os.PathLike, ckpt: Checkpoint) -> None:
    layout, blobs, offset = [], [], 0
    for name in sorted(ckpt.arrays):
        arr = np.ascontiguousarray(ckpt.arrays[name], dtype="<f8")
        blob = arr.tobytes()
        layout.append({"name": name, "dtype": "<f8", "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = {"version": CHECKPOINT_VERSION, "kind": ckpt.kind, "meta": ckpt.meta, "arrays": layout}
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ConfigError(f"{path} is not a checkpoint file")
    (n,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16 : 16 + n].decode("utf-8"))
    if header.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {header.get('version')!r}")
    base = 16 + n
    arrays = {}
    for entry in header["arrays"]:
        start = base + entry["offset"]
        buf = data[start : start + entry["nbytes"]]
        arrays[entry["name"]] = np.frombuffer(buf, dtype=entry["dtype"]).reshape(entry["shape"]).astype(np.float64)
    return Checkpoint(header["kind"], header["meta"], arrays)


def state_to_checkpoint(state: TrainingState, config: FederationConfig) -> Checkpoint:
    h = config.hyperparams
    meta = {
        "mode": config.mode,
        "epochs": config.epochs,
        "seed": config.seed,
        "hyperparams": {k: getattr(h, k) for k in h.__dataclass_fields__},
        "round_counter": state.round_counter,
        "rpe": state.rpe,
        "server_rng": rngs.get_state(state.server_rng),
        "clients": [
            {
                "rng": rngs.get_state(c.rng),
                "mask_rng": rngs.get_state(c.mask_rng),
                "buffered_positives": c.buffered_positives,
                "disclosed_positives": c.disclosed_positives,
            }
            for c in state.clients
        ],
    }
    arrays = {
        "item_factors": state.server_model.item_factors,
        "item_bias": state.server_model.item_bias,
        "user_factors": state.user_factors if state.clients else np.zeros((0, state.server_model.latent_dim)),
    }
    return Checkpoint("fpl", meta, arrays)


def checkpoint_to_state(ckpt: Checkpoint, dataset: Dataset) -> tuple[TrainingState, FederationConfig]:
    """Rebuild a resumable training state; private item sets come from ``dataset``."""
    if ckpt.kind != "fpl":
        raise ConfigError(f"checkpoint of kind {ckpt.kind!r} is not a federation state")
    meta = ckpt.meta
    config = FederationConfig(meta["mode"], Hyperparams(**meta["hyperparams"]), meta["epochs"], meta["seed"])
    P = ckpt.arrays["user_factors"]
    if P.shape[0] != dataset.num_users or ckpt.arrays["item_bias"].shape[0] != dataset.num_items:
        raise ConfigError("checkpoint does not match the dataset dimensions")
    clients = [
        ClientState(
            user_id=u,
            user_vector=P[u],
            positive_items=dataset.train_positives[u],
            rng=rngs.from_state(c["rng"]),
            mask_rng=rngs.from_state(c["mask_rng"]),
            buffered_positives=c["buffered_positives"],
            disclosed_positives=c["disclosed_positives"],
        )
        for u, c in enumerate(meta["clients"])
    ]
    state = TrainingState(
        ServerModel(ckpt.arrays["item_factors"].copy(), ckpt.arrays["item_bias"].copy()),
        clients,
        rngs.from_state(meta["server_rng"]),
        meta["round_counter"],
        meta["rpe"],
    )
    return state, config


def disclosure_ratio(state: TrainingState) -> float:
    """Disclosed over buffered positive entries, summed across clients (audit only)."""
    buffered = sum(c.buffered_positives for c in state.clients)
    disclosed = sum(c.disclosed_positives for c in state.clients)
    return disclosed / buffered if buffered else math.nan
