"""Training objectives: symmetric cross-entropy, box-gated smoothness, and
background partial cross-entropy, each with analytic gradients w.r.t. the
prediction.

Cross-entropy terms use mean-over-pixels reduction so the combination
weights are resolution independent; the smoothness penalty is a plain sum
over derivative terms.  Every quantity entering a logarithm is floored at
``clamp_eps`` so binary targets never produce infinities; in particular a
log argument that is exactly 1 stays exactly 1, which keeps the
all-correct cases exactly zero.
"""
from __future__ import annotations

from dataclasses import dataclass
import warnings

import numpy as np

from .core import DimensionError, as_grid

SMOOTHNESS_EPS = 1e-6  # inside the sqrt; avoids a zero-derivative singularity


@dataclass(frozen=True)
class LossWeights:
    """Combination weights and numeric guards for the training objective."""

    alpha: float = 1.0        # forward cross-entropy weight
    beta: float = 1.0         # reversed cross-entropy weight
    lambda1: float = 1.0      # smoothness term weight
    lambda2: float = 1.0      # background term weight
    edge_alpha: float = 10.0  # edge-sensitivity exponent in the smoothness gate
    clamp_eps: float = 1e-7   # floor for log arguments

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "lambda1", "lambda2", "edge_alpha"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not (0.0 < self.clamp_eps < 0.5):
            raise ValueError("clamp_eps must lie in (0, 0.5)")


@dataclass(frozen=True, eq=False)
class LossValue:
    """Scalar objective plus its per-pixel gradient w.r.t. the prediction."""

    value: float
    grad_s: np.ndarray

    def __post_init__(self) -> None:
        if not np.isfinite(self.value):
            raise ValueError("loss value is not finite")
        if not np.isfinite(self.grad_s).all():
            raise ValueError("loss gradient contains non-finite entries")


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def _log_floored(x: np.ndarray, eps: float) -> np.ndarray:
    return np.log(np.maximum(x, eps))


def cross_entropy(pred: np.ndarray, target: np.ndarray, clamp_eps: float = 1e-7) -> LossValue:
    """Mean binary cross-entropy; gradient is w.r.t. ``pred``.

    value = mean_p -[t * log(max(p, eps)) + (1 - t) * log(max(1 - p, eps))]
    """
    pred = as_grid(pred, channels=1, name="pred")
    target = as_grid(target, channels=1, name="target")
    _check_same_shape(pred, target, "cross_entropy")
    n = pred.size
    log_p = _log_floored(pred, clamp_eps)
    log_1mp = _log_floored(1.0 - pred, clamp_eps)
    value = float(-(target * log_p + (1.0 - target) * log_1mp).mean()) + 0.0
    grad = (-(target / np.maximum(pred, clamp_eps)) * (pred > clamp_eps)
            + ((1.0 - target) / np.maximum(1.0 - pred, clamp_eps)) * (1.0 - pred > clamp_eps)) / n
    return LossValue(value, grad)


def _cross_entropy_target_grad(logpos: np.ndarray, target: np.ndarray,
                               clamp_eps: float) -> np.ndarray:
    """Gradient of CE(logpos, target) w.r.t. the ``target`` slot."""
    n = logpos.size
    return (_log_floored(1.0 - logpos, clamp_eps) - _log_floored(logpos, clamp_eps)) / n


def symmetric_ce(pred: np.ndarray, pseudo: np.ndarray, w: LossWeights = LossWeights()) -> LossValue:
    """Noise-robust regression objective: alpha*CE(pred, pseudo) + beta*CE(pseudo, pred).

    In the reversed term the (possibly binary) pseudo-label sits in log
    position and is floored like any other log argument; the prediction
    contributes there only through the target slot, whose gradient is
    constant in ``pred``.
    """
    pred = as_grid(pred, channels=1, name="pred")
    pseudo = as_grid(pseudo, channels=1, name="pseudo")
    _check_same_shape(pred, pseudo, "symmetric_ce")
    forward = cross_entropy(pred, pseudo, w.clamp_eps)
    reverse = cross_entropy(pseudo, pred, w.clamp_eps)
    value = w.alpha * forward.value + w.beta * reverse.value
    grad = (w.alpha * forward.grad_s
            + w.beta * _cross_entropy_target_grad(pseudo, pred, w.clamp_eps))
    return LossValue(value, grad)


def rgb_to_intensity(image: np.ndarray) -> np.ndarray:
    """Channel-mean intensity; identity for single-channel input."""
    image = as_grid(image, name="image")
    return image.mean(axis=2) if image.ndim == 3 else image


def smoothness_loss(pred: np.ndarray, box_mask: np.ndarray, image: np.ndarray,
                    w: LossWeights = LossWeights(), inside_box_only: bool = False) -> LossValue:
    """Edge-aware total-variation penalty gated by the box mask.

    Sums, over both axis directions, Psi(|d pred| * exp(-edge_alpha *
    |d (box_mask * intensity)|)) with Psi(t) = sqrt(t^2 + 1e-6); forward
    differences, last row/column excluded.  Gating the intensity by the
    box mask makes the gate open (weight ~ 0) exactly at box borders and
    at image edges inside boxes, so predicted boundaries may align there
    at little cost while everything else is flattened.

    ``inside_box_only`` additionally restricts the penalty to derivative
    terms anchored at inside-box pixels (off by default; the default
    penalizes every pixel and only gates the edge weight).
    """
    pred = as_grid(pred, channels=1, name="pred")
    box_mask = as_grid(box_mask, channels=1, name="box_mask")
    intensity = rgb_to_intensity(image)
    _check_same_shape(pred, box_mask, "smoothness_loss")
    _check_same_shape(pred, intensity, "smoothness_loss")

    gated = box_mask * intensity
    value = 0.0
    grad = np.zeros_like(pred)
    for axis in (1, 0):  # x (columns) then y (rows)
        if axis == 1:
            d_pred = pred[:, 1:] - pred[:, :-1]
            weight = np.exp(-w.edge_alpha * np.abs(gated[:, 1:] - gated[:, :-1]))
            anchor = box_mask[:, :-1]
        else:
            d_pred = pred[1:, :] - pred[:-1, :]
            weight = np.exp(-w.edge_alpha * np.abs(gated[1:, :] - gated[:-1, :]))
            anchor = box_mask[:-1, :]
        keep = anchor if inside_box_only else np.ones_like(anchor)
        psi = np.sqrt(d_pred ** 2 * weight ** 2 + SMOOTHNESS_EPS)
        value += float((psi * keep).sum())
        g = keep * d_pred * weight ** 2 / psi
        if axis == 1:
            grad[:, 1:] += g
            grad[:, :-1] -= g
        else:
            grad[1:, :] += g
            grad[:-1, :] -= g
    return LossValue(value, grad)


def background_loss(pred: np.ndarray, box_mask: np.ndarray,
                    w: LossWeights = LossWeights()) -> LossValue:
    """Partial cross-entropy pinning the outside-box region to zero.

    value = gamma * CE(pred * (1 - box_mask), 0) with gamma =
    HW / (HW - z), z the box pixel count; with mean-reduced CE the factor
    turns the all-pixel mean into a mean over background pixels.  The
    gradient is exactly zero inside boxes.
    """
    pred = as_grid(pred, channels=1, name="pred")
    box_mask = as_grid(box_mask, channels=1, name="box_mask")
    _check_same_shape(pred, box_mask, "background_loss")
    n = pred.size
    z = float(box_mask.sum())
    if z >= n:
        warnings.warn("boxes cover the whole image: no background pixels, "
                      "background loss is 0", stacklevel=2)
        return LossValue(0.0, np.zeros_like(pred))
    gamma = n / (n - z)
    masked = pred * (1.0 - box_mask)
    ce = cross_entropy(masked, np.zeros_like(pred), w.clamp_eps)
    return LossValue(gamma * ce.value, gamma * ce.grad_s * (1.0 - box_mask))


def loss_components(pred: np.ndarray, pseudo: np.ndarray, box_mask: np.ndarray,
                    image: np.ndarray, w: LossWeights = LossWeights(),
                    smoothness_inside_box_only: bool = False
                    ) -> tuple[LossValue, LossValue, LossValue, LossValue]:
    """(total, symmetric_ce, smoothness, background) evaluated consistently."""
    spn = symmetric_ce(pred, pseudo, w)
    fore = smoothness_loss(pred, box_mask, image, w, inside_box_only=smoothness_inside_box_only)
    back = background_loss(pred, box_mask, w)
    value = spn.value + w.lambda1 * fore.value + w.lambda2 * back.value
    grad = spn.grad_s + w.lambda1 * fore.grad_s + w.lambda2 * back.grad_s
    return LossValue(value, grad), spn, fore, back


def total_loss(pred: np.ndarray, pseudo: np.ndarray, box_mask: np.ndarray,
               image: np.ndarray, w: LossWeights = LossWeights(),
               smoothness_inside_box_only: bool = False) -> LossValue:
    """Combined objective: symmetric CE + lambda1*smoothness + lambda2*background."""
    return loss_components(pred, pseudo, box_mask, image, w,
                           smoothness_inside_box_only=smoothness_inside_box_only)[0]
