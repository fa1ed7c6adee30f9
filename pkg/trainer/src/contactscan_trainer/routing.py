"""Gradient routing for diverse prediction training.

Mirrors the evaluator's semantics exactly: the closest member gets the top
weight, the rest share the remainder equally, and whole predictions drop
with a fixed probability (if a draw would drop everything, no drop is
applied that round).
"""

from __future__ import annotations

import numpy as np

__all__ = ["ensemble_weights", "closest_control", "prediction_error_percent"]


def ensemble_weights(errors, top_weight: float = 0.95,
                     drop_prob: float = 0.1,
                     rng: np.random.Generator | None = None) -> np.ndarray:
    e = np.asarray(errors, dtype=np.float64).ravel()
    k = e.size
    if k == 0:
        raise ValueError("empty error list")
    if k == 1:
        return np.array([1.0])
    if rng is None:
        rng = np.random.default_rng(0)
    survive = rng.random(k) >= drop_prob
    if not np.any(survive):
        survive = np.ones(k, dtype=bool)
    weights = np.zeros(k)
    alive = np.flatnonzero(survive)
    winner = alive[int(np.argmin(e[alive]))]
    others = alive[alive != winner]
    if others.size == 0:
        weights[winner] = 1.0
    else:
        weights[winner] = top_weight
        weights[others] = (1.0 - top_weight) / others.size
    return weights


def prediction_error_percent(labels: np.ndarray, probs: np.ndarray,
                             threshold: float = 0.5) -> float:
    y = np.asarray(labels).ravel().astype(bool)
    p = np.asarray(probs, dtype=np.float64).ravel()
    return float(100.0 * np.mean((p > threshold) != y))


def closest_control(labels: np.ndarray, probs_per_control: np.ndarray,
                    threshold: float = 0.5) -> int:
    """Control index whose prediction is closest; ties to the lowest."""
    errors = [prediction_error_percent(labels, p, threshold)
              for p in probs_per_control]
    return int(np.argmin(errors))
