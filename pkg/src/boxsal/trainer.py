"""SGD-with-momentum training loop over (image, pseudo-label, box-mask) triples."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ConfigurationError, DatasetRecord, rasterize_boxes
from .losses import LossWeights, loss_components
from .predictor import PredictorConfig, PredictorState, backward, forward, init_predictor, \
    save_checkpoint


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 16
    lr: float = 2.5e-4
    decay_epoch: int = 20
    decay_rate: float = 0.9
    momentum: float = 0.9
    seed: int = 17
    loss_weights: LossWeights = field(default_factory=LossWeights)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    checkpoint_every: int = 0  # 0 = final checkpoint only
    smoothness_inside_box_only: bool = False

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if not (0 < self.decay_rate <= 1):
            raise ConfigurationError("decay_rate must lie in (0, 1]")
        if self.decay_epoch < 1:
            raise ConfigurationError("decay_epoch must be >= 1")
        if not (0 <= self.momentum < 1):
            raise ConfigurationError("momentum must lie in [0, 1)")


def desk_config(**overrides) -> TrainConfig:
    """Small-scale defaults for 32x32 synthetic corpora on a single core.

    The smoothness weight is scaled down because that term sums over
    derivative positions while the cross-entropy terms average over
    pixels: at lambda1 = 1 its gradient outweighs the data terms by
    roughly the pixel count and training collapses to a constant map.
    0.01 keeps it an effective regularizer at 32x32.
    """
    base = dict(epochs=15, batch_size=4, lr=0.005, decay_epoch=20, decay_rate=0.9,
                seed=17, loss_weights=LossWeights(lambda1=0.01),
                predictor=PredictorConfig())
    base.update(overrides)
    return TrainConfig(**base)


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    """Step schedule: multiply by decay_rate every decay_epoch epochs."""
    if not (0 <= epoch < config.epochs):
        raise ConfigurationError(f"epoch {epoch} outside [0, {config.epochs})")
    return config.lr * config.decay_rate ** (epoch // config.decay_epoch)


@dataclass(eq=False)
class EpochResult:
    state: PredictorState
    velocity: np.ndarray
    mean_loss: float
    mean_spn: float
    mean_fore: float
    mean_back: float


def _require_pseudo_labels(dataset: Sequence[DatasetRecord]) -> None:
    missing = [i for i, r in enumerate(dataset) if r.pseudo_label is None]
    if missing:
        raise ConfigurationError(f"records without pseudo-labels: {missing}")


def train_epoch(state: PredictorState, dataset: Sequence[DatasetRecord],
                config: TrainConfig, epoch: int,
                velocity: np.ndarray | None = None) -> EpochResult:
    """One pass over the dataset: shuffled batches, mean-gradient SGD+momentum."""
    _require_pseudo_labels(dataset)
    if velocity is None:
        velocity = np.zeros_like(state.params)
    lr = lr_at_epoch(config, epoch)
    rng = np.random.default_rng((config.seed, epoch))
    order = rng.permutation(len(dataset))

    totals = np.zeros(4)  # total, spn, fore, back
    for start in range(0, len(order), config.batch_size):
        batch = order[start:start + config.batch_size]
        grad = np.zeros_like(state.params)
        for idx in batch:
            record = dataset[idx]
            box_mask = rasterize_boxes(record.annotation, record.height, record.width)
            pred, tape = forward(state, record.image)
            total, spn, fore, back = loss_components(
                pred, record.pseudo_label.mask, box_mask, record.image,
                config.loss_weights,
                smoothness_inside_box_only=config.smoothness_inside_box_only)
            grad += backward(state, tape, total.grad_s)
            totals += (total.value, spn.value, fore.value, back.value)
        grad /= len(batch)
        velocity = config.momentum * velocity + grad
        state = PredictorState(state.config, state.params - lr * velocity)

    means = totals / len(dataset)
    return EpochResult(state, velocity, *means)


def train(dataset: Sequence[DatasetRecord], config: TrainConfig,
          out_dir: str | Path | None = None) -> tuple[PredictorState, list[dict]]:
    """Full training run; returns the final state and the per-epoch loss log.

    With ``out_dir`` set, checkpoints are written every
    ``checkpoint_every`` epochs (plus ``final.ckpt``) and the loss log to
    ``loss_log.jsonl``, one JSON record per epoch.
    """
    if len(dataset) == 0:
        raise ConfigurationError("dataset is empty")
    _require_pseudo_labels(dataset)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    state = init_predictor(config.predictor)
    velocity = np.zeros_like(state.params)
    log: list[dict] = []
    for epoch in range(config.epochs):
        result = train_epoch(state, dataset, config, epoch, velocity)
        state, velocity = result.state, result.velocity
        log.append({"epoch": epoch, "lr": lr_at_epoch(config, epoch),
                    "loss_total": result.mean_loss, "loss_spn": result.mean_spn,
                    "loss_fore": result.mean_fore, "loss_back": result.mean_back})
        if out is not None and config.checkpoint_every > 0 \
                and (epoch + 1) % config.checkpoint_every == 0:
            save_checkpoint(out / f"epoch_{epoch + 1:04d}.ckpt", state, velocity,
                            extra={"epoch": epoch + 1})
    if out is not None:
        save_checkpoint(out / "final.ckpt", state, velocity, extra={"epoch": config.epochs})
        with open(out / "loss_log.jsonl", "w") as fh:
            for record in log:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return state, log


def config_to_dict(config: TrainConfig) -> dict:
    w = config.loss_weights
    p = config.predictor
    return {
        "epochs": config.epochs, "batch_size": config.batch_size, "lr": config.lr,
        "decay_epoch": config.decay_epoch, "decay_rate": config.decay_rate,
        "momentum": config.momentum, "seed": config.seed,
        "checkpoint_every": config.checkpoint_every,
        "smoothness_inside_box_only": config.smoothness_inside_box_only,
        "loss_weights": {"alpha": w.alpha, "beta": w.beta, "lambda1": w.lambda1,
                         "lambda2": w.lambda2, "edge_alpha": w.edge_alpha,
                         "clamp_eps": w.clamp_eps},
        "predictor": {"stages": p.stages, "stage_channels": list(p.stage_channels),
                      "lateral_channels": p.lateral_channels, "kernel_size": p.kernel_size,
                      "input_channels": p.input_channels, "seed": p.seed},
    }


def config_from_dict(data: dict) -> TrainConfig:
    data = dict(data)
    weights = LossWeights(**data.pop("loss_weights", {}))
    pred = dict(data.pop("predictor", {}))
    if "stage_channels" in pred:
        pred["stage_channels"] = tuple(pred["stage_channels"])
    predictor = PredictorConfig(**pred)
    try:
        return TrainConfig(loss_weights=weights, predictor=predictor, **data)
    except TypeError as exc:
        raise ConfigurationError(f"bad training config: {exc}") from exc


def load_train_config(path) -> TrainConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(data)


def save_train_config(config: TrainConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def with_loss_switches(config: TrainConfig, fore: bool, back: bool) -> TrainConfig:
    """Zero out smoothness and/or background weights (ablation arms)."""
    w = config.loss_weights
    new_w = LossWeights(alpha=w.alpha, beta=w.beta,
                        lambda1=w.lambda1 if fore else 0.0,
                        lambda2=w.lambda2 if back else 0.0,
                        edge_alpha=w.edge_alpha, clamp_eps=w.clamp_eps)
    return replace(config, loss_weights=new_w)
