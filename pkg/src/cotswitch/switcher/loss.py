"""Margin-aware regression objective on predicted pass rates.

With predictions ``p = (p_sc, p_lc)`` and targets ``y = (y_sc, y_lc)``:

    l_mse    = 0.5 * mean[(p_sc - y_sc)^2 + (p_lc - y_lc)^2]
    l_margin = mean[((p_lc - p_sc) - (y_lc - y_sc))^2]
    l_switch = l_mse + lambda_margin * l_margin

The margin term supervises exactly the quantity the router thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericError, ShapeError


@dataclass(frozen=True)
class LossValues:
    l_mse: float
    l_margin: float
    l_switch: float


def _check(preds: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    preds = np.atleast_2d(np.asarray(preds, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if preds.shape != targets.shape or preds.shape[-1] != 2:
        raise ShapeError(f"preds {preds.shape} and targets {targets.shape} must both be (N, 2)")
    if not (np.all(np.isfinite(preds)) and np.all(np.isfinite(targets))):
        raise NumericError("loss inputs contain NaN or inf")
    return preds, targets


def loss(preds: np.ndarray, targets: np.ndarray, lambda_margin: float = 1.0) -> LossValues:
    preds, targets = _check(preds, targets)
    err = preds - targets
    l_mse = 0.5 * float(np.mean(err[:, 0] ** 2 + err[:, 1] ** 2))
    margin_err = err[:, 1] - err[:, 0]
    l_margin = float(np.mean(margin_err**2))
    return LossValues(l_mse, l_margin, l_mse + lambda_margin * l_margin)


def loss_output_grads(preds: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``l_mse`` and of ``l_margin`` w.r.t. the raw outputs.

    Kept separate so callers form ``d_mse + lambda * d_margin`` themselves.
    """
    preds, targets = _check(preds, targets)
    n = preds.shape[0]
    err = preds - targets
    d_mse = err / n
    margin_err = err[:, 1] - err[:, 0]
    d_margin = np.empty_like(preds)
    d_margin[:, 0] = -2.0 * margin_err / n
    d_margin[:, 1] = 2.0 * margin_err / n
    return d_mse, d_margin


def switch_loss_grad(preds: np.ndarray, targets: np.ndarray, lambda_margin: float = 1.0) -> np.ndarray:
    d_mse, d_margin = loss_output_grads(preds, targets)
    return d_mse + lambda_margin * d_margin
