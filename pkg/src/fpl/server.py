"""Server side: cohort selection and aggregation of client payloads."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from fpl.client import UpdatePayload
from fpl.errors import ConfigError, ProtocolError
from fpl.model import ServerModel


def select_cohort(num_users: int, size: int, rng: np.random.Generator) -> list[int]:
    """Uniform sample of ``size`` distinct users, returned in ascending order."""
    if not 1 <= size <= num_users:
        raise ConfigError(f"cohort size {size} outside [1, {num_users}]")
    if size == num_users:
        # still consume the stream so the server RNG advances identically for any size
        rng.permutation(num_users)
        return list(range(num_users))
    return sorted(int(u) for u in rng.choice(num_users, size=size, replace=False))


def aggregate(
    model: ServerModel,
    payloads: Iterable[UpdatePayload],
    alpha: float,
    canonical: bool = True,
) -> None:
    """Apply ``Q <- Q + alpha * sum(deltas)`` and the same for ``b``, in place.

    With ``canonical=True`` payloads are summed in ascending sender order, which
    makes the result independent of the order they arrived in. All payloads are
    validated before anything is written.
    """
    payloads = list(payloads)
    for p in payloads:
        if len(p.items) and (p.items[0] < 0 or p.items[-1] >= model.num_items):
            bad = p.items[(p.items < 0) | (p.items >= model.num_items)]
            raise ProtocolError(
                f"payload from sender {p.sender} references items {bad.tolist()} "
                f"outside catalog of size {model.num_items}",
                sender=p.sender,
            )
        if len(p.items) and p.d_factors.shape[1] != model.latent_dim:
            raise ProtocolError(
                f"payload from sender {p.sender} has latent dim {p.d_factors.shape[1]}, "
                f"model has {model.latent_dim}",
                sender=p.sender,
            )
    payloads = [p for p in payloads if len(p.items)]
    if not payloads:
        return
    if canonical:
        payloads.sort(key=lambda p: p.sender)
    touched = np.unique(np.concatenate([p.items for p in payloads]))
    acc_factors = np.zeros((len(touched), model.latent_dim))
    acc_bias = np.zeros(len(touched))
    for p in payloads:
        rows = np.searchsorted(touched, p.items)
        acc_factors[rows] += p.d_factors
        acc_bias[rows] += p.d_bias
    model.item_factors[touched] += alpha * acc_factors
    model.item_bias[touched] += alpha * acc_bias
