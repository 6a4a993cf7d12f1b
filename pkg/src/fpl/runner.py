"""Glue between run configurations, trainers and evaluation (used by the CLI)."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from fpl import rng as rngs
from fpl.baselines import random_recommender, recommend_all, top_pop, train_bpr_centralized
from fpl.config import RunConfig
from fpl.data import Dataset, validation_split
from fpl.errors import ConfigError
from fpl.federation import (
    Checkpoint,
    FederationConfig,
    init_state,
    run_training,
    state_to_checkpoint,
)
from fpl.metrics import EvaluationReport, evaluate
from fpl.model import ServerModel, mean_log_likelihood

log = logging.getLogger(__name__)

FEDERATED_MODES = ("sfpl", "pfpl", "custom")
OBJECTIVE_SAMPLE = 1000


def federation_config(cfg: RunConfig) -> FederationConfig:
    return FederationConfig(cfg.mode, cfg.hyperparams(), cfg.epochs, cfg.seed)


def _exclusions(dataset: Dataset, target: str) -> list[frozenset]:
    if target == "test" and dataset.validation is not None:
        return [t | v for t, v in zip(dataset.train_positives, dataset.validation_positives)]
    return dataset.train_positives


def _truth(dataset: Dataset, target: str) -> list[frozenset]:
    if target == "validation":
        if dataset.validation is None:
            raise ConfigError("dataset has no validation split")
        return dataset.validation_positives
    return dataset.test_positives


def recommendations(ckpt: Checkpoint, dataset: Dataset, n: int, target: str = "test") -> list[list[int]]:
    """Top-``n`` lists for every user of ``dataset`` from any checkpoint kind."""
    n_items = dataset.num_items
    exclude = _exclusions(dataset, target)
    if ckpt.kind in ("fpl", "bpr"):
        if ckpt.arrays["user_factors"].shape[0] != dataset.num_users or ckpt.arrays["item_bias"].shape[0] != n_items:
            raise ConfigError("checkpoint does not match the dataset dimensions")
        return recommend_all(ckpt.scores, dataset.num_users, n, exclude)
    if ckpt.kind == "toppop":
        if target == "test" and dataset.validation is not None:
            # popularity is counted over train only; validation items are still excluded
            ranked = top_pop(dataset, n + max((len(v) for v in dataset.validation_positives), default=0))
            return [[i for i in r if i not in ex][:n] for r, ex in zip(ranked, exclude)]
        return top_pop(dataset, n)
    if ckpt.kind == "random":
        return random_recommender(n_items, exclude, n, ckpt.meta["seed"])
    raise ConfigError(f"unknown checkpoint kind {ckpt.kind!r}")


def evaluate_checkpoint(ckpt: Checkpoint, dataset: Dataset, cutoff: int, target: str = "test") -> EvaluationReport:
    n = min(cutoff, dataset.num_items)
    recs = recommendations(ckpt, dataset, n, target)
    return evaluate(recs, _truth(dataset, target), dataset.num_items, cutoff)


def _epoch_row(user_factors: np.ndarray, model: ServerModel, dataset: Dataset, triples: np.ndarray, cutoff: int) -> dict:
    row = {"objective": mean_log_likelihood(user_factors, model, triples)}
    if dataset.validation is not None:
        scores = lambda u: model.item_bias + model.item_factors @ user_factors[u]  # noqa: E731
        recs = recommend_all(scores, dataset.num_users, min(cutoff, dataset.num_items), dataset.train_positives)
        row["val_f1"] = evaluate(recs, dataset.validation_positives, dataset.num_items, cutoff).f1
    return row


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list


def train(cfg: RunConfig, dataset: Dataset, track: bool = True) -> TrainResult:
    """Train the model selected by ``cfg.mode`` and return its checkpoint.

    With ``track`` a per-epoch history (objective proxy on a fixed triple
    sample, plus validation F1 when the dataset has a validation split) is
    recorded. The triple sample uses its own stream and never perturbs training.
    """
    cutoff = cfg.cutoffs[0]
    triples = dataset.sample_triples(OBJECTIVE_SAMPLE, rngs.stream(cfg.seed, rngs.EVAL)) if track else None
    history: list = []

    if cfg.mode in FEDERATED_MODES:
        fc = federation_config(cfg)
        state = init_state(fc, dataset)
        if track:
            history.append({"epoch": 0, "rounds": 0, **_epoch_row(state.user_factors, state.server_model, dataset, triples, cutoff)})
        on_epoch = (lambda e, s: _epoch_row(s.user_factors, s.server_model, dataset, triples, cutoff)) if track else None
        state, hist = run_training(fc, dataset, on_epoch=on_epoch, state=state)
        history.extend(hist.epochs)
        return TrainResult(state_to_checkpoint(state, fc), history)

    if cfg.mode == "bpr":
        h = cfg.hyperparams()

        def on_epoch(epoch, model):
            history.append({"epoch": epoch, "steps": epoch * dataset.x_plus,
                            **_epoch_row(model.user_factors, model.server_model, dataset, triples, cutoff)})

        model = train_bpr_centralized(dataset, h, cfg.epochs, cfg.sampling_mode, cfg.seed,
                                      on_epoch=on_epoch if track else None)
        meta = {
            "mode": "bpr",
            "epochs": cfg.epochs,
            "seed": cfg.seed,
            "sampling_mode": cfg.sampling_mode,
            "hyperparams": {k: getattr(h, k) for k in h.__dataclass_fields__},
        }
        arrays = {"user_factors": model.user_factors, "item_factors": model.item_factors, "item_bias": model.item_bias}
        return TrainResult(Checkpoint("bpr", meta, arrays), history)

    if cfg.mode in ("toppop", "random"):
        ignored = sorted(cfg.explicit & {"learning_rate", "latent_dim", "epochs", "disclosure_prob"})
        if ignored:
            log.warning("mode %s ignores %s", cfg.mode, ", ".join(ignored))
        return TrainResult(Checkpoint(cfg.mode, {"mode": cfg.mode, "seed": cfg.seed}, {}), history)

    raise ConfigError(f"unknown mode {cfg.mode!r}")


def grid_search(cfg: RunConfig, dataset: Dataset, alphas, factors) -> list[dict]:
    """Train every (alpha, F) cell on sub-train and score F1 on validation.

    Rows come back ranked by :func:`rank_cells`. Regularization follows alpha
    unless ``cfg`` sets it.
    """
    tuning = dataset if dataset.validation is not None else validation_split(dataset)
    cutoff = cfg.cutoffs[0]
    rows = []
    for alpha in alphas:
        for f in factors:
            cell = cfg.with_overrides(learning_rate=float(alpha), latent_dim=int(f))
            result = train(cell, tuning, track=False)
            rep = evaluate_checkpoint(result.checkpoint, tuning, cutoff, target="validation")
            h = cell.hyperparams()
            rows.append({
                "alpha": h.learning_rate, "factors": h.latent_dim, "reg_user": h.reg_user,
                "reg_pos_item": h.reg_pos_item, "reg_neg_item": h.reg_neg_item,
                "P": rep.precision, "R": rep.recall, "F1": rep.f1,
            })
    return rank_cells(rows)


def rank_cells(rows: list[dict]) -> list[dict]:
    """Best validation F1 first; ties go to the smaller F, then the smaller alpha."""
    rows = sorted(rows, key=lambda r: (-r["F1"], r["factors"], r["alpha"]))
    for rank, r in enumerate(rows, start=1):
        r["rank"] = rank
    return rows


def parse_grid(text: str) -> list[float]:
    """``start:end:step``, inclusive of ``end`` when ``step`` divides the range."""
    try:
        start, end, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError(f"grid must look like start:end:step, got {text!r}") from None
    if step <= 0 or end < start:
        raise ConfigError(f"invalid grid {text!r}")
    count = int(np.floor((end - start) / step + 1e-9)) + 1
    return [round(start + k * step, 10) for k in range(count)]


def sweep_pi(cfg: RunConfig, dataset: Dataset, grid: list[float]) -> list[dict]:
    if cfg.mode not in FEDERATED_MODES:
        raise ConfigError(f"a disclosure sweep needs a federated mode, got {cfg.mode!r}")
    cutoff = cfg.cutoffs[0]
    rows = []
    for pi in grid:
        cell = cfg.with_overrides(disclosure_prob=float(pi))
        result = train(cell, dataset, track=False)
        rep = evaluate_checkpoint(result.checkpoint, dataset, cutoff)
        rows.append({"pi": float(pi), "P": rep.precision, "R": rep.recall, "F1": rep.f1,
                     "IC": rep.item_coverage, "G": rep.gini})
    return rows
