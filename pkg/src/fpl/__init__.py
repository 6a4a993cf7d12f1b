"""Federated pair-wise learning-to-rank for top-N recommendation.

A server holds the item factors and biases; every client keeps its own user
vector and consumed items on-device and sends back item updates, disclosing
each positive-item update only with probability ``disclosure_prob``.
"""

from fpl.errors import (
    CatalogBoundsError,
    ConfigError,
    FPLError,
    InvalidTripleError,
    ParseError,
    ProtocolError,
    UndefinedMetricError,
    UntrainableClientError,
)
from fpl.model import Hyperparams, ServerModel, TripleGradient, bpr_gradient, predict_score, triple_score

__version__ = "0.1.0"

__all__ = [
    "CatalogBoundsError",
    "ConfigError",
    "FPLError",
    "Hyperparams",
    "InvalidTripleError",
    "ParseError",
    "ProtocolError",
    "ServerModel",
    "TripleGradient",
    "UndefinedMetricError",
    "UntrainableClientError",
    "bpr_gradient",
    "predict_score",
    "triple_score",
]
