"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numbers

import numpy as np


def check_stream_matrix(X, n_features=None) -> np.ndarray:
    """Coerce ``X`` to a 2-D float array of shape (steps, streams).

    Finiteness is left to the detectors so their errors can name the stream.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D array of shape (steps, streams), got ndim={X.ndim}")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} streams, but the estimator was fitted with {n_features}")
    return X


def check_event_matrix(E, n_features=None) -> np.ndarray:
    """Coerce ``E`` to a 2-D int8 array of 0/1 event flags."""
    arr = np.asarray(E)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D array of shape (steps, events), got ndim={arr.ndim}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError("event flags must be 0 or 1")
    if n_features is not None and arr.shape[1] != n_features:
        raise ValueError(f"E has {arr.shape[1]} events, but the estimator was fitted with {n_features}")
    return arr.astype(np.int8, copy=False)


def check_probability(p, name="p") -> float:
    if not isinstance(p, numbers.Real) or not 0.0 <= float(p) <= 1.0:
        raise ValueError(f"{name} must be a probability in [0, 1], got {p!r}")
    return float(p)


def check_positive_int(v, name, minimum=1) -> int:
    if isinstance(v, bool) or not isinstance(v, numbers.Integral) or v < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {v!r}")
    return int(v)
