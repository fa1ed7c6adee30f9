"""Diverse multi-hypothesis prediction logic: gradient-routing weights for
ensemble training, control-variable assignment, and the matched-error
evaluation protocol with its "no contact predicted" sentinel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PredictionSet",
    "RoutingParams",
    "MatchResult",
    "prediction_error",
    "match_to_closest",
    "smcl_weights",
    "diversenet_assign",
    "evaluate_table",
    "EvalTable",
]


@dataclass(frozen=True)
class PredictionSet:
    """k probability maps over a shared element set (surface voxels or
    sample points)."""

    maps: np.ndarray  # (k, n) in [0, 1]

    def __post_init__(self):
        m = np.asarray(self.maps, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError("maps must be a (k, n) array")
        if np.any(m < 0.0) or np.any(m > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "maps", m)

    @property
    def k(self) -> int:
        return self.maps.shape[0]

    @property
    def n_elements(self) -> int:
        return self.maps.shape[1]


@dataclass(frozen=True)
class RoutingParams:
    top_weight: float = 0.95
    drop_prob: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.top_weight <= 1.0):
            raise ValueError("top_weight must be in (0, 1]")
        if not (0.0 <= self.drop_prob < 1.0):
            raise ValueError("drop_prob must be in [0, 1)")


def prediction_error(gt_labels: np.ndarray, pred_probs: np.ndarray,
                     threshold: float = 0.5) -> float:
    """Percent of elements whose thresholded prediction differs from the
    binary label."""
    y = np.asarray(gt_labels).ravel().astype(bool)
    p = np.asarray(pred_probs, dtype=np.float64).ravel()
    if y.shape != p.shape:
        raise ValueError(f"length mismatch: {y.size} labels vs {p.size} predictions")
    return float(100.0 * np.mean((p > threshold) != y))


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching one ground truth against k predictions.

    index is None (and error nan) when every prediction was empty after
    thresholding; reports render that case as '-'.
    """

    index: int | None
    error: float

    @property
    def no_contact(self) -> bool:
        return self.index is None


def match_to_closest(gt_labels: np.ndarray, preds: PredictionSet,
                     threshold: float = 0.5) -> MatchResult:
    """Lowest-error prediction among those that predict any contact."""
    candidates = [i for i in range(preds.k)
                  if np.any(preds.maps[i] > threshold)]
    if not candidates:
        return MatchResult(index=None, error=math.nan)
    errors = [prediction_error(gt_labels, preds.maps[i], threshold)
              for i in candidates]
    best = int(np.argmin(errors))  # ties: lowest index (argmin convention)
    return MatchResult(index=candidates[best], error=errors[best])


def smcl_weights(errors, params: RoutingParams,
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """Gradient-routing weights for an ensemble of k predictors.

    Each prediction is first dropped with probability drop_prob (seeded;
    if the draw drops everything, no drop is applied this round).  Among
    the survivors the lowest-error member receives top_weight and the rest
    share 1 - top_weight equally; weights always sum to 1.
    """
    e = np.asarray(errors, dtype=np.float64).ravel()
    k = e.size
    if k == 0:
        raise ValueError("empty error list")
    if k == 1:
        return np.array([1.0])
    if rng is None:
        rng = np.random.default_rng(params.seed)
    survive = rng.random(k) >= params.drop_prob
    if not np.any(survive):
        survive = np.ones(k, dtype=bool)
    weights = np.zeros(k)
    alive = np.flatnonzero(survive)
    winner = alive[int(np.argmin(e[alive]))]  # ties: lowest index
    others = alive[alive != winner]
    if others.size == 0:
        weights[winner] = 1.0
    else:
        weights[winner] = params.top_weight
        weights[others] = (1.0 - params.top_weight) / others.size
    return weights


def diversenet_assign(gt_labels: np.ndarray,
                      preds_per_control: PredictionSet,
                      threshold: float = 0.5) -> int:
    """Control value whose prediction is closest to the ground truth."""
    errors = [prediction_error(gt_labels, preds_per_control.maps[c], threshold)
              for c in range(preds_per_control.k)]
    return int(np.argmin(errors))


@dataclass
class EvalTable:
    """Matched-error table: one row per object plus an unweighted average
    row; nan cells render as '-' (no contact predicted)."""

    objects: list[str]
    models: list[str]
    cells: np.ndarray = field(repr=False)  # (n_objects + 1, n_models)

    @property
    def rows(self) -> list[str]:
        return self.objects + ["average"]

    def format(self, delimiter: str = "\t") -> str:
        lines = [delimiter.join(["object"] + self.models)]
        for name, row in zip(self.rows, self.cells):
            cells = ["-" if math.isnan(v) else f"{v:.2f}" for v in row]
            lines.append(delimiter.join([name] + cells))
        return "\n".join(lines)


def evaluate_table(gt_sets: dict[str, list[np.ndarray]],
                   predictions: dict[str, dict[str, PredictionSet]],
                   threshold: float = 0.5) -> EvalTable:
    """Per-object mean matched error for each model, plus an average row.

    gt_sets maps object name -> list of ground-truth label arrays;
    predictions maps model name -> object name -> PredictionSet.  Ground
    truths whose match is the no-contact sentinel are excluded from the
    mean; a cell (or average) with no valid match at all renders as '-'.
    """
    objects = list(gt_sets.keys())
    models = list(predictions.keys())
    cells = np.full((len(objects) + 1, len(models)), math.nan)
    for mj, model in enumerate(models):
        for oi, obj in enumerate(objects):
            if obj not in predictions[model]:
                raise KeyError(f"model {model!r} has no predictions for {obj!r}")
            preds = predictions[model][obj]
            errs = [match_to_closest(gt, preds, threshold).error
                    for gt in gt_sets[obj]]
            errs = [e for e in errs if not math.isnan(e)]
            if errs:
                cells[oi, mj] = float(np.mean(errs))
        col = cells[:-1, mj]
        valid = col[~np.isnan(col)]
        if valid.size == len(objects):
            cells[-1, mj] = float(valid.mean())
    return EvalTable(objects=objects, models=models, cells=cells)
