"""Factorization model: prediction, triple scoring and BPR gradients.

The score of item ``i`` for user ``u`` is ``b_i + p_u . q_i``. A training
triple ``(u, i, j)`` pairs a consumed item ``i`` with a non-consumed item ``j``;
the BPR objective for one triple is ``ln sigmoid(x_ui - x_uj)`` minus an L2
penalty with a separate weight for the user, the positive and the negative item.
"""

from __future__ import annotations

import dataclasses
import math
import numbers
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from fpl.errors import CatalogBoundsError, ConfigError, InvalidTripleError

INIT_STD = 0.1

# λ_user = λ_pos = α / 20, λ_neg = α / 200 unless overridden.
USER_REG_RATIO = 1 / 20
POS_REG_RATIO = 1 / 20
NEG_REG_RATIO = 1 / 200


@dataclass
class ServerModel:
    """Global item-side parameters held by the server.

    Attributes
    ----------
    item_factors : ndarray, shape [n_items, latent_dim]
    item_bias : ndarray, shape [n_items]
    """

    item_factors: np.ndarray
    item_bias: np.ndarray

    def __post_init__(self):
        self.item_factors = np.asarray(self.item_factors, dtype=np.float64)
        self.item_bias = np.asarray(self.item_bias, dtype=np.float64)
        if self.item_factors.ndim != 2 or self.item_bias.ndim != 1:
            raise ValueError("item_factors must be 2-D and item_bias 1-D")
        if self.item_factors.shape[0] != self.item_bias.shape[0]:
            raise ValueError(
                f"item_factors has {self.item_factors.shape[0]} rows but item_bias "
                f"has {self.item_bias.shape[0]} entries"
            )

    @property
    def num_items(self) -> int:
        return self.item_bias.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.item_factors.shape[1]

    def copy(self) -> ServerModel:
        return ServerModel(self.item_factors.copy(), self.item_bias.copy())

    def read_only_view(self) -> ServerModel:
        """A snapshot sharing memory with this model but refusing writes."""
        q = self.item_factors.view()
        b = self.item_bias.view()
        q.flags.writeable = False
        b.flags.writeable = False
        return ServerModel(q, b)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.item_factors).all() and np.isfinite(self.item_bias).all())

    def scores(self, user_vector: np.ndarray) -> np.ndarray:
        """Scores of every catalog item for one user vector."""
        return self.item_bias + self.item_factors @ user_vector


@dataclass(frozen=True)
class Hyperparams:
    """Training hyperparameters.

    Regularization weights left as ``None`` are derived from the learning rate
    (1/20 for the user and the positive item, 1/200 for the negative item).
    ``cohort_size=None`` means "every user".
    """

    latent_dim: int = 10
    learning_rate: float = 0.05
    reg_user: float | None = None
    reg_pos_item: float | None = None
    reg_neg_item: float | None = None
    disclosure_prob: float = 1.0
    triples_per_round: int = 1
    cohort_size: int | None = None

    def __post_init__(self):
        if self.reg_user is None:
            object.__setattr__(self, "reg_user", self.learning_rate * USER_REG_RATIO)
        if self.reg_pos_item is None:
            object.__setattr__(self, "reg_pos_item", self.learning_rate * POS_REG_RATIO)
        if self.reg_neg_item is None:
            object.__setattr__(self, "reg_neg_item", self.learning_rate * NEG_REG_RATIO)
        self.validate()

    def validate(self, num_users: int | None = None) -> None:
        if not isinstance(self.latent_dim, numbers.Integral) or self.latent_dim < 1:
            raise ConfigError(f"latent_dim must be a positive integer, got {self.latent_dim!r}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate!r}")
        for name in ("reg_user", "reg_pos_item", "reg_neg_item"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be nonnegative, got {getattr(self, name)!r}")
        if not 0.0 <= self.disclosure_prob <= 1.0:
            raise ConfigError(f"disclosure_prob must lie in [0, 1], got {self.disclosure_prob!r}")
        if not isinstance(self.triples_per_round, numbers.Integral) or self.triples_per_round < 1:
            raise ConfigError(f"triples_per_round must be >= 1, got {self.triples_per_round!r}")
        if self.cohort_size is not None:
            if not isinstance(self.cohort_size, numbers.Integral) or self.cohort_size < 1:
                raise ConfigError(f"cohort_size must be >= 1, got {self.cohort_size!r}")
            if num_users is not None and self.cohort_size > num_users:
                raise ConfigError(f"cohort_size {self.cohort_size} exceeds the {num_users} users")

    def replace(self, **changes) -> Hyperparams:
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TripleGradient:
    """Ascent direction of the regularized BPR objective for one triple."""

    pos_item: int
    neg_item: int
    d_user: np.ndarray
    d_pos_factors: np.ndarray
    d_pos_bias: float
    d_neg_factors: np.ndarray
    d_neg_bias: float


def init_parameters(num_users: int, num_items: int, latent_dim: int, rng: np.random.Generator):
    """Draw ``(P, Q, b)``: factors from N(0, 0.1^2), biases at zero.

    Q is drawn before P so the item side does not depend on the user count.
    """
    item_factors = rng.normal(0.0, INIT_STD, size=(num_items, latent_dim))
    user_factors = rng.normal(0.0, INIT_STD, size=(num_users, latent_dim))
    item_bias = np.zeros(num_items)
    return user_factors, item_factors, item_bias


def _check_item(model: ServerModel, item: int) -> None:
    if not 0 <= item < model.num_items:
        raise CatalogBoundsError(f"item {item} outside catalog of size {model.num_items}")


def _check_user(model: ServerModel, user: np.ndarray) -> None:
    if user.shape != (model.latent_dim,):
        raise ValueError(f"user vector has shape {user.shape}, expected ({model.latent_dim},)")


def predict_score(user: np.ndarray, model: ServerModel, item: int) -> float:
    _check_user(model, user)
    _check_item(model, item)
    return float(model.item_bias[item] + user @ model.item_factors[item])


def triple_score(user: np.ndarray, model: ServerModel, pos: int, neg: int) -> float:
    if pos == neg:
        raise InvalidTripleError(f"positive and negative item are both {pos}")
    return predict_score(user, model, pos) - predict_score(user, model, neg)


def sigmoid_factor(x_uij: float) -> float:
    """``e^{-x} / (1 + e^{-x})``, evaluated as ``1 / (1 + e^x)`` without overflow."""
    return float(expit(-x_uij))


def triple_gradient(
    p_u: np.ndarray,
    q_i: np.ndarray,
    b_i: float,
    q_j: np.ndarray,
    b_j: float,
    h: Hyperparams,
    pos: int = -1,
    neg: int = -1,
) -> TripleGradient:
    """Gradient from raw parameter rows; shared by clients and the centralized trainer."""
    x_uij = float(b_i + p_u @ q_i) - float(b_j + p_u @ q_j)
    s = sigmoid_factor(x_uij)
    return TripleGradient(
        pos_item=pos,
        neg_item=neg,
        d_user=s * (q_i - q_j) - h.reg_user * p_u,
        d_pos_factors=s * p_u - h.reg_pos_item * q_i,
        d_pos_bias=s - h.reg_pos_item * b_i,
        d_neg_factors=-s * p_u - h.reg_neg_item * q_j,
        d_neg_bias=-s - h.reg_neg_item * b_j,
    )


def bpr_gradient(user: np.ndarray, model: ServerModel, pos: int, neg: int, h: Hyperparams) -> TripleGradient:
    if pos == neg:
        raise InvalidTripleError(f"positive and negative item are both {pos}")
    _check_user(model, user)
    _check_item(model, pos)
    _check_item(model, neg)
    return triple_gradient(
        user,
        model.item_factors[pos],
        float(model.item_bias[pos]),
        model.item_factors[neg],
        float(model.item_bias[neg]),
        h,
        pos,
        neg,
    )


def mean_log_likelihood(user_factors: np.ndarray, model: ServerModel, triples: np.ndarray) -> float:
    """Average ``ln sigmoid(x_uij)`` over an array of ``(u, i, j)`` rows.

    Used as a cheap objective proxy in training histories.
    """
    if len(triples) == 0:
        return math.nan
    u, i, j = triples[:, 0], triples[:, 1], triples[:, 2]
    p = user_factors[u]
    x = (model.item_bias[i] + np.einsum("kf,kf->k", p, model.item_factors[i])) - (
        model.item_bias[j] + np.einsum("kf,kf->k", p, model.item_factors[j])
    )
    # ln sigmoid(x) = -log1p(exp(-x)), computed stably
    return float(np.mean(-np.logaddexp(0.0, -x)))
