"""Recovery-accuracy metrics."""

import math

import numpy as np

from .errors import DimensionError


def nmse(truth, est):
    """Mean over samples of ||H - H_hat||_F^2 / ||H||_F^2."""
    truth = list(truth)
    est = list(est)
    if len(truth) != len(est):
        raise DimensionError(f"length mismatch: {len(truth)} truth vs {len(est)} estimates")
    if len(truth) == 0:
        raise DimensionError("need at least one sample")
    total = 0.0
    for h, h_hat in zip(truth, est):
        h = np.asarray(h)
        h_hat = np.asarray(h_hat)
        denom = np.linalg.norm(h) ** 2
        if denom == 0:
            raise ValueError("all-zero truth sample has undefined NMSE")
        total += np.linalg.norm(h - h_hat) ** 2 / denom
    return total / len(truth)


def nmse_db(value):
    return 10.0 * math.log10(max(value, 1e-30))
