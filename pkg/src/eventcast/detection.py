"""Univariate change detectors turning numeric streams into binary events.

Two detectors are provided, both strictly online (the flag for ``x_t`` only
looks at ``x_1 .. x_t``):

* CUSUM with tolerance ``k`` and decision threshold ``h`` on each side::

      P_t = max(0, P_{t-1} + (x_t - mu - k_pos))
      N_t = min(0, N_{t-1} + (x_t - mu + k_neg))

  a signal is raised when ``P_t > thresh_pos`` or ``N_t < -thresh_neg``, and
  the triggering sum is reset to zero. CUSUM is usually derived under a
  normality assumption; the recurrences above do not rely on it and nothing
  here tests for it.
* A Shewhart chart whose limits are ``mean +/- L * sigma`` over the whole
  history seen so far (flagged points included).

:class:`ChangeDetector` wraps a bank of per-stream detectors behind the usual
``fit`` / ``transform`` interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_stream_matrix
from .ingest import ContextVector, EventVector


class DetectionError(ValueError):
    def __init__(self, message: str, stream: Optional[int] = None, step: Optional[int] = None):
        self.stream = stream
        self.step = step
        where = []
        if stream is not None:
            where.append(f"stream {stream}")
        if step is not None:
            where.append(f"step {step}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


def _check_finite(x) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DetectionError(f"non-finite input {x!r}")
    return x


@dataclass
class CusumState:
    """Running two-sided CUSUM.

    When ``mu`` is ``None`` the target is estimated as the mean of the first
    ``warmup`` samples, during which nothing accumulates and nothing flags.
    """

    mu: Optional[float] = None
    k_pos: float = 0.5
    k_neg: float = 0.5
    thresh_pos: float = 5.0
    thresh_neg: float = 5.0
    warmup: int = 50
    P: float = 0.0
    N: float = 0.0
    n_seen: int = 0
    warm_sum: float = 0.0
    last_signal: int = 0  # +1 above-detection, -1 below-detection, 0 none

    def __post_init__(self):
        if self.k_pos < 0 or self.k_neg < 0:
            raise ValueError("CUSUM tolerances must be non-negative")
        if not (self.thresh_pos > 0 and self.thresh_neg > 0):
            raise ValueError("CUSUM thresholds must be positive")
        if self.mu is None and self.warmup < 1:
            raise ValueError("CUSUM needs a target mu or a positive warm-up length")

    def step(self, x) -> int:
        x = _check_finite(x)
        self.n_seen += 1
        self.last_signal = 0
        if self.mu is None:
            self.warm_sum += x
            if self.n_seen >= self.warmup:
                self.mu = self.warm_sum / self.n_seen
            return 0
        P = max(0.0, self.P + (x - self.mu - self.k_pos))
        N = min(0.0, self.N + (x - self.mu + self.k_neg))
        flag = 0
        if P > self.thresh_pos:
            P = 0.0
            flag, self.last_signal = 1, 1
        elif N < -self.thresh_neg:
            N = 0.0
            flag, self.last_signal = 1, -1
        self.P, self.N = P, N
        return flag


@dataclass
class ShewhartState:
    L: float = 3.0
    warmup: int = 50
    sigma_floor: float = 1e-9
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    last_signal: int = 0

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("Shewhart limit multiplier L must be positive")
        if self.warmup < 2:
            raise ValueError("Shewhart warm-up must be at least 2 samples")
        if not self.sigma_floor > 0:
            raise ValueError("sigma_floor must be positive")

    @property
    def sigma(self) -> float:
        if self.count < 2:
            return 0.0
        return math.sqrt(self.m2 / (self.count - 1))

    def limits(self) -> tuple:
        half = self.L * max(self.sigma, self.sigma_floor)
        return self.mean - half, self.mean + half

    def step(self, x) -> int:
        x = _check_finite(x)
        flag = 0
        self.last_signal = 0
        if self.count >= self.warmup:
            lcl, ucl = self.limits()
            if x > ucl:
                flag, self.last_signal = 1, 1
            elif x < lcl:
                flag, self.last_signal = 1, -1
        # Welford update, flagged points included
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)
        return flag


def cusum_step(state: CusumState, x) -> tuple:
    """Advance a copy of ``state`` by one sample; returns ``(new_state, flag)``."""
    new = replace(state)
    return new, new.step(x)


def shewhart_step(state: ShewhartState, x) -> tuple:
    new = replace(state)
    return new, new.step(x)


_CUSUM_KEYS = ("mu", "k_pos", "k_neg", "thresh_pos", "thresh_neg", "warmup")
_SHEWHART_KEYS = ("L", "warmup", "sigma_floor")


def make_detector(kind: str = "shewhart", **params):
    """Build a fresh detector state from a flat parameter mapping.

    Unknown keys for the chosen kind are ignored so one mapping can carry
    settings for both detector kinds. ``cusum_warmup`` overrides ``warmup``
    for CUSUM.
    """
    kind = kind.lower()
    if kind == "cusum":
        kw = {k: params[k] for k in _CUSUM_KEYS if params.get(k) is not None}
        if params.get("cusum_warmup") is not None:
            kw["warmup"] = params["cusum_warmup"]
        return CusumState(**kw)
    if kind == "shewhart":
        kw = {k: params[k] for k in _SHEWHART_KEYS if params.get(k) is not None}
        return ShewhartState(**kw)
    raise ValueError(f"unknown detector kind {kind!r} (expected 'cusum' or 'shewhart')")


@dataclass
class DetectorBank:
    detectors: list = field(default_factory=list)
    t: int = 0

    def __len__(self):
        return len(self.detectors)

    @classmethod
    def build(cls, n: int, kind: str = "shewhart", per_stream: Optional[Mapping] = None, **params):
        per_stream = per_stream or {}
        detectors = []
        for i in range(n):
            kw = dict(params)
            kw.update(per_stream.get(i, {}))
            detectors.append(make_detector(kw.pop("detector", kind), **kw))
        return cls(detectors=detectors)

    def step(self, values: Sequence[float]) -> tuple:
        if len(values) != len(self.detectors):
            raise DetectionError(
                f"vector has {len(values)} values but the bank has {len(self.detectors)} detectors",
                step=self.t)
        xs = []
        for i, x in enumerate(values):
            try:
                xs.append(_check_finite(x))
            except DetectionError as exc:
                raise DetectionError(str(exc), stream=i, step=self.t) from None
        flags = tuple(det.step(x) for det, x in zip(self.detectors, xs))
        self.t += 1
        return flags


def detect_vector(bank: DetectorBank, cv: ContextVector) -> EventVector:
    """Run every stream's detector on one context vector.

    The whole vector is validated before any detector advances, so a bad
    reading leaves the bank untouched.
    """
    return EventVector(t=cv.t, flags=bank.step(cv.values))


class ChangeDetector(TransformerMixin, BaseEstimator):
    """Per-stream change detection as a transformer.

    ``fit`` starts a fresh detector bank and streams ``X`` through it;
    ``transform`` keeps streaming new rows through the same bank, so calling
    it twice on the same rows does not give the same answer. ``fit_transform``
    returns the flags produced while fitting.

    Parameters
    ----------
    detector : {'shewhart', 'cusum'}
        Detector used for every stream not overridden in ``per_stream``.
    per_stream : dict, optional
        Maps a 0-based stream index to parameter overrides, e.g.
        ``{2: {"detector": "cusum", "mu": 0.0}}``.
    """

    def __init__(self, detector="shewhart", mu=None, k_pos=0.5, k_neg=0.5,
                 thresh_pos=5.0, thresh_neg=5.0, cusum_warmup=50, L=3.0,
                 warmup=50, sigma_floor=1e-9, per_stream=None):
        self.detector = detector
        self.mu = mu
        self.k_pos = k_pos
        self.k_neg = k_neg
        self.thresh_pos = thresh_pos
        self.thresh_neg = thresh_neg
        self.cusum_warmup = cusum_warmup
        self.L = L
        self.warmup = warmup
        self.sigma_floor = sigma_floor
        self.per_stream = per_stream

    def _bank_params(self) -> dict:
        params = self.get_params()
        params.pop("detector")
        params.pop("per_stream")
        return params

    def _run(self, X) -> np.ndarray:
        X = check_stream_matrix(X, n_features=self.n_features_in_)
        out = np.zeros(X.shape, dtype=np.int8)
        for row in range(X.shape[0]):
            out[row] = self.bank_.step(X[row])
        return out

    def fit(self, X, y=None):
        X = check_stream_matrix(X)
        self.n_features_in_ = X.shape[1]
        self.bank_ = DetectorBank.build(self.n_features_in_, kind=self.detector,
                                        per_stream=self.per_stream, **self._bank_params())
        self.flags_ = self._run(X)
        return self

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).flags_

    def transform(self, X):
        check_is_fitted(self, "bank_")
        return self._run(X)
