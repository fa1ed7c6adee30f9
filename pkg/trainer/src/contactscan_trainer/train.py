"""Training and prediction for the voxel/point contact predictors.

Loss is class-weighted binary cross entropy on the element set (surface
voxels or sample points), averaged per element, matching the scanner
toolkit's reference implementation.  sMCL trains k model copies with soft
gradient routing; DiverseNet trains one model and routes each ground truth
through its closest one-hot control value.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .config import TrainConfig
from .data import DatasetItem, read_dataset, write_predictions
from .models import build_model
from .routing import closest_control, ensemble_weights

LOSS_EPS = 1e-7


def weighted_bce(logits: torch.Tensor, labels: torch.Tensor,
                 positive_weight: float = 10.0) -> torch.Tensor:
    """-(1/n) sum [w y log p + (1-y) log(1-p)], probabilities clamped."""
    p = torch.sigmoid(logits).clamp(LOSS_EPS, 1.0 - LOSS_EPS)
    terms = positive_weight * labels * torch.log(p) \
        + (1.0 - labels) * torch.log(1.0 - p)
    return -terms.mean()


def _item_tensors(item: DatasetItem, dtype=torch.float32):
    if item.kind == "voxel":
        grid = torch.from_numpy(
            np.ascontiguousarray(item.features.transpose(3, 0, 1, 2))).to(dtype)
        mask = torch.from_numpy(item.surface_mask)
        labels = torch.from_numpy(item.labels).to(dtype)
        return grid, mask, labels
    feats = torch.from_numpy(item.features).to(dtype)
    labels = torch.from_numpy(item.labels).to(dtype)
    return feats, None, labels


def _forward_elements(model, item: DatasetItem, x, mask, control=None):
    if item.kind == "voxel":
        logits = model(x.unsqueeze(0), control)
        return logits[0][mask]
    logits = model(x.unsqueeze(0), control)
    return logits[0]


def _one_hot(index: int, k: int) -> torch.Tensor:
    return F.one_hot(torch.tensor([index]), k).float()


@dataclass
class Checkpoint:
    config: TrainConfig
    state_dicts: list[dict]

    def save(self, path) -> None:
        torch.save({"config": vars(self.config),
                    "state_dicts": self.state_dicts}, path)

    @staticmethod
    def load(path) -> "Checkpoint":
        blob = torch.load(path, weights_only=False)
        return Checkpoint(config=TrainConfig(**blob["config"]),
                          state_dicts=blob["state_dicts"])


def _build_models(config: TrainConfig) -> list[torch.nn.Module]:
    if config.strategy == "smcl":
        return [build_model(config.model) for _ in range(config.k)]
    return [build_model(config.model, control_size=config.k)]


def train(config: TrainConfig, dataset_dir, out_dir,
          items: list[DatasetItem] | None = None) -> Checkpoint:
    """Train on the dataset's train split; writes checkpoint.pt and a
    tab-separated training log under out_dir."""
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    kind = "voxel" if config.model == "voxnet" else "point"
    if items is None:
        items = read_dataset(dataset_dir, split="train", kind=kind)
    if not items:
        raise ValueError(f"no '{kind}' training items in {dataset_dir}")

    models = _build_models(config)
    params = [p for m in models for p in m.parameters()]
    opt = torch.optim.SGD(params, lr=config.lr, momentum=config.momentum,
                          weight_decay=config.weight_decay)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_lines = ["epoch\tstep\tloss"]

    tensors = [_item_tensors(it) for it in items]
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(items))
        for lo in range(0, len(items), config.batch_size):
            batch = order[lo:lo + config.batch_size]
            for m in models:
                m.train()
            opt.zero_grad()
            total = None
            routed_any = False
            for idx in batch:
                item = items[idx]
                x, mask, labels = tensors[idx]
                if config.uses_input_dropout:
                    x = F.dropout(x, p=config.input_dropout)
                loss = _route_item(config, models, item, x, mask, labels, rng)
                if loss is not None:
                    routed_any = True
                    total = loss if total is None else total + loss
            if not routed_any:
                continue  # everything dropped: a genuine no-op step
            total = total / len(batch)
            total.backward()
            opt.step()
            log_lines.append(f"{epoch}\t{step}\t{float(total):.6f}")
            step += 1
    (out_dir / "train_log.tsv").write_text("\n".join(log_lines) + "\n",
                                           encoding="ascii")
    ckpt = Checkpoint(config=config,
                      state_dicts=[m.state_dict() for m in models])
    ckpt.save(out_dir / "checkpoint.pt")
    return ckpt


def _route_item(config, models, item, x, mask, labels, rng):
    """Per-item routed loss for either strategy (None when fully dropped)."""
    if config.strategy == "smcl":
        if config.k == 1:
            loss = weighted_bce(_forward_elements(models[0], item, x, mask),
                                labels, config.positive_weight)
            return loss
        losses = [weighted_bce(_forward_elements(m, item, x, mask), labels,
                               config.positive_weight) for m in models]
        weights = ensemble_weights([float(l) for l in losses],
                                   top_weight=config.top_weight,
                                   drop_prob=config.drop_prob, rng=rng)
        if not np.any(weights):
            return None
        total = None
        for w, loss in zip(weights, losses):
            if w == 0.0:
                continue
            term = float(w) * loss
            total = term if total is None else total + term
        return total

    # diversenet: assign by closest thresholded prediction, then backprop
    # only through that control value
    model = models[0]
    with torch.no_grad():
        model.eval()
        probs = []
        for c in range(config.k):
            logits = _forward_elements(model, item, x, mask,
                                       _one_hot(c, config.k))
            probs.append(torch.sigmoid(logits).numpy())
        assigned = closest_control(labels.numpy(), np.stack(probs))
    model.train()
    logits = _forward_elements(model, item, x, mask,
                               _one_hot(assigned, config.k))
    return weighted_bce(logits, labels, config.positive_weight)


def predict(checkpoint: Checkpoint, dataset_dir, out_dir,
            split: str | None = "test",
            items: list[DatasetItem] | None = None) -> dict[str, np.ndarray]:
    """k probability maps per object, written as .csp prediction files."""
    config = checkpoint.config
    kind = "voxel" if config.model == "voxnet" else "point"
    if items is None:
        items = read_dataset(dataset_dir, split=split, kind=kind)
    if not items:
        raise ValueError("no items to predict on")
    models = _build_models(config)
    for m, sd in zip(models, checkpoint.state_dicts):
        m.load_state_dict(sd)
        m.eval()

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    # one geometry per object: all tags of an object share its features
    seen: dict[str, DatasetItem] = {}
    for item in items:
        seen.setdefault(item.prediction_stem, item)
    results = {}
    with torch.no_grad():
        for stem, item in seen.items():
            x, mask, _ = _item_tensors(item)
            maps = []
            for c in range(config.k):
                if config.strategy == "smcl":
                    logits = _forward_elements(models[c], item, x, mask)
                else:
                    logits = _forward_elements(models[0], item, x, mask,
                                               _one_hot(c, config.k))
                maps.append(torch.sigmoid(logits).double().numpy())
            maps = np.clip(np.stack(maps), 0.0, 1.0)
            write_predictions(out_dir / f"{stem}.csp", maps)
            results[stem] = maps
    return results
