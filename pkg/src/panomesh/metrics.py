"""Depth-error metrics and the multi-scale training loss.

All metrics run on the valid subset only and are averages over it: mean
absolute error, mean relative error, RMSE, RMSE of log10 depth, and the
three threshold ratios delta^n = fraction with max(gt/pred, pred/gt)
strictly below 1.25^n.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import EvaluationError, ShapeError
from .formats import dump_metrics_json

BERHU_THRESHOLD = 0.2


def berhu(diff: np.ndarray, threshold: float = BERHU_THRESHOLD) -> np.ndarray:
    """Reverse Huber: L1 below the threshold, scaled L2 at or above it."""
    d = np.abs(np.asarray(diff, dtype=np.float64))
    t = float(threshold)
    return np.where(d <= t, d, (d * d + t * t) / (2.0 * t))


def valid_mask(gt: np.ndarray, lo: float = 0.1, hi: float = 10.0) -> np.ndarray:
    gt = np.asarray(gt, dtype=np.float64)
    return np.isfinite(gt) & (gt >= lo) & (gt <= hi)


def multiscale_loss(
    preds: list[Tensor],
    targets: list[np.ndarray],
    masks: list[np.ndarray],
    weights: list[float],
    threshold: float = BERHU_THRESHOLD,
) -> Tensor:
    """Sum over scales of weight * mean reverse-Huber over that scale's
    valid faces. Differentiable through the predictions."""
    if not (len(preds) == len(targets) == len(masks) == len(weights)):
        raise ShapeError("loss needs equal-length prediction/target/mask/weight lists")
    total = None
    for pred, gt, mask, w in zip(preds, targets, masks, weights):
        flat = ad.reshape(pred, (-1,))
        gt = np.asarray(gt, dtype=np.float64).reshape(-1)
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        if flat.data.shape[0] != gt.shape[0] or gt.shape[0] != mask.shape[0]:
            raise ShapeError(
                f"scale arrays disagree: pred {flat.data.shape[0]}, gt {gt.shape[0]}, mask {mask.shape[0]}"
            )
        idx = np.nonzero(mask)[0]
        if idx.size == 0:
            raise EvaluationError("a scale has no valid faces to train on")
        per = ad.berhu_elementwise(ad.gather(flat, idx), Tensor(gt[idx]), threshold)
        term = ad.mul(ad.reduce_sum(per), Tensor(float(w) / idx.size))
        total = term if total is None else ad.add(total, term)
    if total is None:
        raise EvaluationError("loss over zero scales")
    return total


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    mre: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    n_valid: int

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return dump_metrics_json(self.as_dict())


def evaluate(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray | None = None) -> MetricsReport:
    """Score a prediction against ground truth over the valid mask."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    if mask is None:
        mask = valid_mask(gt)
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if mask.shape != gt.shape:
        raise ShapeError(f"mask {mask.shape} vs ground truth {gt.shape}")
    p, g = pred[mask], gt[mask]
    n = p.size
    if n == 0:
        raise EvaluationError("no valid pixels to evaluate")
    if np.any(p <= 0):
        raise EvaluationError("prediction must be strictly positive on the valid mask")
    diff = p - g
    ratio = np.maximum(g / p, p / g)
    return MetricsReport(
        mae=float(np.abs(diff).mean()),
        mre=float((np.abs(diff) / g).mean()),
        rmse=float(np.sqrt((diff * diff).mean())),
        rmse_log=float(np.sqrt(((np.log10(p) - np.log10(g)) ** 2).mean())),
        delta1=float((ratio < 1.25).mean()),
        delta2=float((ratio < 1.25**2).mean()),
        delta3=float((ratio < 1.25**3).mean()),
        n_valid=int(n),
    )
