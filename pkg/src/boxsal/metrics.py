"""The four standard saliency evaluation measures.

Conventions (fixed so results are deterministic and reproducible):

* F and E are averaged over the 256 integer thresholds t in {0..255},
  binarizing with the strict rule ``pred > t/255``.
* F uses beta^2 = 0.3; zero denominators yield a term of 0.
* E uses bias-aligned maps phi = map - mean(map), alignment
  xi = 2*phi_gt*phi_fm / (phi_gt^2 + phi_fm^2 + 1e-12) and enhanced map
  (xi + 1)^2 / 4, averaged over pixels; for a degenerate ground truth the
  enhanced map is the per-pixel agreement (1 - fm, or fm when gt is all
  ones).
* S = 0.5 * S_object + 0.5 * S_region.  The object score of a region is
  2*m / (m^2 + 1 + sd + eps_machine) with m the masked-prediction mean
  and sd its sample standard deviation (the cited structure measure's
  lambda = 0.5 folded into the constant).  The region score splits both
  maps into four blocks at the ground-truth centroid (1-based,
  rounded half up, clamped so every block is non-empty) and computes an
  area-weighted covariance similarity per block with denominators
  max(N - 1, 1).  Degenerate ground truth: all-zero -> 1 - mean(pred),
  all-one -> mean(pred).  The final score is clipped to [0, 1].
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import DimensionError, as_grid

F_BETA_SQ = 0.3
E_EPS = 1e-12
_MACH_EPS = float(np.spacing(1.0))
_THRESHOLDS = np.arange(256) / 255.0


@dataclass(frozen=True)
class MetricReport:
    mae: float
    f_beta: float
    e_xi: float
    s_alpha: float
    per_image: tuple[tuple[float, float, float, float], ...] | None = None
    degenerate: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        for name in ("mae", "f_beta", "e_xi", "s_alpha"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0, 1]")


def _check_pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    pred = as_grid(pred, channels=1, name="pred")
    gt = as_grid(gt, channels=1, name="gt")
    if pred.shape != gt.shape:
        raise DimensionError(f"pred {pred.shape} vs gt {gt.shape}")
    return pred, gt


def mae(pred, gt) -> float:
    """Mean absolute per-pixel error."""
    pred, gt = _check_pair(pred, gt)
    return float(np.abs(pred - gt).mean())


def f_measure_mean(pred, gt) -> float:
    """Precision/recall F-score averaged over the 256 binarization thresholds.

    Returns 0 (with a warning) for an all-background ground truth, where
    recall is undefined; dataset evaluation excludes such images.
    """
    pred, gt = _check_pair(pred, gt)
    fg = gt > 0.5
    n_fg = int(fg.sum())
    if n_fg == 0:
        warnings.warn("f_measure_mean: ground truth has no foreground", stacklevel=2)
        return 0.0
    p_flat = pred.ravel()
    fg_flat = fg.ravel()
    bins = p_flat[None, :] > _THRESHOLDS[:, None]       # (256, N)
    tp = (bins & fg_flat[None, :]).sum(axis=1).astype(float)
    fp = (bins & ~fg_flat[None, :]).sum(axis=1).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = tp / n_fg
        denom = F_BETA_SQ * precision + recall
        f = np.where(denom > 0, (1 + F_BETA_SQ) * precision * recall / denom, 0.0)
    return float(f.mean())


def e_measure_mean(pred, gt) -> float:
    """Alignment-based enhanced measure averaged over the 256 thresholds."""
    pred, gt = _check_pair(pred, gt)
    gt_sum = gt.sum()
    scores = np.empty(256)
    for i, t in enumerate(_THRESHOLDS):
        fm = (pred > t).astype(np.float64)
        if gt_sum == 0:
            enhanced = 1.0 - fm
        elif gt_sum == gt.size:
            enhanced = fm
        else:
            phi_gt = gt - gt.mean()
            phi_fm = fm - fm.mean()
            xi = 2.0 * phi_gt * phi_fm / (phi_gt ** 2 + phi_fm ** 2 + E_EPS)
            enhanced = (xi + 1.0) ** 2 / 4.0
        scores[i] = enhanced.mean()
    return float(scores.mean())


def _object_score(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    m = float(values.mean())
    sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return 2.0 * m / (m * m + 1.0 + sd + _MACH_EPS)


def _gt_centroid(gt: np.ndarray) -> tuple[int, int]:
    """1-based centroid of the foreground, rounded half up, clamped so the
    four blocks are all non-empty."""
    h, w = gt.shape
    total = gt.sum()
    rows = gt.sum(axis=1)
    cols = gt.sum(axis=0)
    cy = int(np.floor((rows * (np.arange(h) + 1)).sum() / total + 0.5))
    cx = int(np.floor((cols * (np.arange(w) + 1)).sum() / total + 0.5))
    return min(max(cy, 1), h - 1), min(max(cx, 1), w - 1)


def _region_similarity(p: np.ndarray, g: np.ndarray) -> float:
    n = p.size
    x, y = float(p.mean()), float(g.mean())
    denom = max(n - 1, 1)
    sx = float(((p - x) ** 2).sum()) / denom
    sy = float(((g - y) ** 2).sum()) / denom
    sxy = float(((p - x) * (g - y)).sum()) / denom
    a = 4.0 * x * y * sxy
    b = (x * x + y * y) * (sx + sy)
    if a != 0.0:
        return a / (b + _MACH_EPS)
    return 1.0 if b == 0.0 else 0.0


def s_measure(pred, gt) -> float:
    """Structural similarity between a continuous prediction and binary gt."""
    pred, gt = _check_pair(pred, gt)
    mu = float(gt.mean())
    if mu == 0.0:
        s = 1.0 - float(pred.mean())
    elif mu == 1.0:
        s = float(pred.mean())
    else:
        fg_score = _object_score(pred[gt > 0.5])
        bg_score = _object_score((1.0 - pred)[gt <= 0.5])
        s_object = mu * fg_score + (1.0 - mu) * bg_score
        cy, cx = _gt_centroid(gt)
        h, w = gt.shape
        area = float(h * w)
        s_region = 0.0
        for rs, cs in ((slice(None, cy), slice(None, cx)), (slice(None, cy), slice(cx, None)),
                       (slice(cy, None), slice(None, cx)), (slice(cy, None), slice(cx, None))):
            block_g = gt[rs, cs]
            s_region += block_g.size / area * _region_similarity(pred[rs, cs], block_g)
        s = 0.5 * s_object + 0.5 * s_region
    return float(min(max(s, 0.0), 1.0))


def evaluate_dataset(preds, gts) -> MetricReport:
    """Per-image metrics averaged over a dataset.

    Images whose ground truth has no foreground are flagged and excluded
    from the F and E means (their per-image F/E are reported as 0) but
    still count toward MAE and S.
    """
    if len(preds) != len(gts):
        raise DimensionError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    if len(preds) == 0:
        raise DimensionError("cannot evaluate an empty dataset")
    per_image = []
    degenerate = []
    for i, (p, g) in enumerate(zip(preds, gts)):
        p, g = _check_pair(p, g)
        if g.sum() == 0:
            degenerate.append(i)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                per_image.append((mae(p, g), 0.0, 0.0, s_measure(p, g)))
        else:
            per_image.append((mae(p, g), f_measure_mean(p, g), e_measure_mean(p, g),
                              s_measure(p, g)))
    if degenerate:
        warnings.warn(f"{len(degenerate)} image(s) with empty ground truth excluded "
                      f"from the F/E means: indices {degenerate}", stacklevel=2)
    arr = np.asarray(per_image)
    keep = np.setdiff1d(np.arange(len(preds)), degenerate)
    if keep.size == 0:
        warnings.warn("all images have degenerate ground truth; F/E reported as 0",
                      stacklevel=2)
        f_mean, e_mean = 0.0, 0.0
    else:
        f_mean = float(arr[keep, 1].mean())
        e_mean = float(arr[keep, 2].mean())
    return MetricReport(mae=float(arr[:, 0].mean()), f_beta=f_mean, e_xi=e_mean,
                        s_alpha=float(arr[:, 3].mean()),
                        per_image=tuple(tuple(row) for row in per_image),
                        degenerate=tuple(degenerate))


def _fmt3(v: float) -> str:
    text = f"{v:.3f}"
    return text[1:] if text.startswith("0.") else text


def format_report(report: MetricReport, label: str = "") -> str:
    """One benchmark-table-style row: S, F, E, MAE to three decimals."""
    row = f"{_fmt3(report.s_alpha)} {_fmt3(report.f_beta)} " \
          f"{_fmt3(report.e_xi)} {_fmt3(report.mae)}"
    return f"{label}  {row}" if label else row
