"""Small input-validation helpers shared by the estimator and the CLI."""
from __future__ import annotations

import math

import numpy as np
from sklearn.utils.validation import check_array


def check_features(X, n_features=None):
    """2-D finite float array, optionally with a fixed number of columns."""
    X = check_array(X, dtype=float, ensure_2d=True)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def check_beta(beta):
    beta = float(beta)
    if not (math.isfinite(beta) and beta > 1):
        raise ValueError(f"beta must be a finite number above 1, got {beta}")
    return beta


def check_seed(seed, required=True):
    if seed is None:
        if required:
            raise ValueError("a seed is required for stochastic computations")
        return None
    if isinstance(seed, (bool, np.bool_)) or int(seed) != seed:
        raise ValueError(f"seed must be an integer, got {seed!r}")
    return int(seed)


def parse_grid(text):
    """``lo:hi:step`` into three floats."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid must look like lo:hi:step, got {text!r}")
    lo, hi, step = (float(p) for p in parts)
    if not step > 0 or hi < lo:
        raise ValueError("grid needs step > 0 and hi >= lo")
    return lo, hi, step
