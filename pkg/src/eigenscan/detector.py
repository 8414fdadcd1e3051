"""Sliding-window extreme-eigenvalue stopping rules.

Two procedures are supported:

``max-eig``
    alarm at the first t with lambda_max(Sigma_hat_{t-w,t}) >= b.
``min-eig-inverse``
    alarm at the first t with 1 / lambda_min(Sigma_hat_{t-w,t}) >= b.

Time is counted from 1 at the first observation, so the earliest possible
alarm is at t = w once the window has filled.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, NamedTuple

import numpy as np

from . import calibration
from .errors import DetectorAlarmedError, InvalidArgumentError
from .linalg import (
    ALARM_SINGULAR,
    KIND_MAX,
    KIND_MIN_INVERSE,
    NO_ALARM,
    SlidingCovariance,
)

Kind = Literal["max-eig", "min-eig-inverse"]
PROCEDURES = {"max": "max-eig", "min": "min-eig-inverse"}

_BLOCK = 1024


@dataclass(frozen=True)
class DetectorConfig:
    kind: Kind
    p: int
    w: int
    threshold_b: float
    calibration_method: str = "manual"
    target_arl: float | None = None

    def __post_init__(self):
        if self.kind not in ("max-eig", "min-eig-inverse"):
            raise InvalidArgumentError(f"unknown detector kind {self.kind!r}")
        if self.p < 1:
            raise InvalidArgumentError(f"p must be >= 1, got {self.p}")
        if self.w < 2:
            raise InvalidArgumentError(f"w must be >= 2, got {self.w}")
        if self.kind == "min-eig-inverse" and self.w <= self.p:
            raise InvalidArgumentError(
                f"min-eig-inverse needs w > p (w={self.w}, p={self.p}); smaller windows are always singular"
            )
        if not self.threshold_b > 0:
            raise InvalidArgumentError(f"threshold must be > 0, got {self.threshold_b!r}")

    @property
    def kind_code(self) -> int:
        return KIND_MAX if self.kind == "max-eig" else KIND_MIN_INVERSE

    @classmethod
    def calibrated(cls, kind: Kind, p: int, w: int, target_arl: float, method: str = "tw-corrected"):
        """Build a config whose threshold targets ``target_arl``.

        ``tw-corrected`` only exists for the largest-eigenvalue procedure.
        """
        if kind == "max-eig":
            if method == "tw-corrected":
                res = calibration.threshold_corrected(w, p, target_arl)
            elif method == "tw-independent":
                res = calibration.threshold_tw_max(w, p, target_arl)
            else:
                raise InvalidArgumentError(f"unknown calibration method {method!r}")
        elif kind == "min-eig-inverse":
            if method != "tw-independent":
                raise InvalidArgumentError("min-eig-inverse supports only tw-independent calibration")
            res = calibration.threshold_tw_min(w, p, target_arl)
        else:
            raise InvalidArgumentError(f"unknown detector kind {kind!r}")
        return cls(kind, p, w, res.threshold_b, res.method, float(target_arl))

    def as_dict(self):
        return {
            "kind": self.kind,
            "p": self.p,
            "w": self.w,
            "threshold_b": self.threshold_b,
            "calibration_method": self.calibration_method,
            "target_arl": self.target_arl,
        }


@dataclass(frozen=True)
class Event:
    kind: Literal["none", "statistic", "alarm"]
    t: int
    statistic: float | None = None
    singular: bool = False


@dataclass
class Detector:
    """Streaming state machine for one detector.

    >>> det = Detector(DetectorConfig("max-eig", p=2, w=2, threshold_b=1.5))
    >>> det.step([0.0, 0.0]).kind
    'none'
    >>> det.step([2.0, 0.0])
    Event(kind='alarm', t=2, statistic=2.0, singular=False)
    """

    config: DetectorConfig
    t: int = field(init=False, default=0)
    cov: SlidingCovariance = field(init=False, repr=False)
    last_statistic: float | None = field(init=False, default=None)
    alarmed_at: int | None = field(init=False, default=None)
    singular: bool = field(init=False, default=False)

    def __post_init__(self):
        self.reset()

    def reset(self) -> None:
        self.t = 0
        self.cov = SlidingCovariance(self.config.p, self.config.w)
        self.last_statistic = None
        self.alarmed_at = None
        self.singular = False
        self._stat = np.empty(1)

    def step(self, x) -> Event:
        if self.alarmed_at is not None:
            raise DetectorAlarmedError(f"detector alarmed at t={self.alarmed_at}; call reset() first")
        _, code, stat = self.cov.scan(x, self.config.threshold_b, self.config.kind_code, self._stat)
        self.t += 1
        value = float(stat[0])
        if math.isnan(value):
            return Event("none", self.t)
        self.last_statistic = value
        if code == NO_ALARM:
            return Event("statistic", self.t, value)
        self.alarmed_at = self.t
        self.singular = code == ALARM_SINGULAR
        return Event("alarm", self.t, value, self.singular)

    def feed(self, block) -> int | None:
        """Push a 2-D block of observations; return the alarm time if one occurs.

        Rows after the alarming row are not consumed.
        """
        if self.alarmed_at is not None:
            raise DetectorAlarmedError(f"detector alarmed at t={self.alarmed_at}; call reset() first")
        block = np.asarray(block, dtype=float)
        if block.ndim != 2:
            raise InvalidArgumentError(f"expected a 2-D block of observations, got shape {block.shape}")
        if block.shape[0] == 0:
            return None
        used, code, stats = self.cov.scan(block, self.config.threshold_b, self.config.kind_code)
        self.t += used
        last = stats[used - 1]
        if not math.isnan(last):
            self.last_statistic = float(last)
        if code == NO_ALARM:
            return None
        self.alarmed_at = self.t
        self.singular = code == ALARM_SINGULAR
        return self.t


class RunOutcome(NamedTuple):
    stopping_time: int | None
    steps: int
    singular: bool = False

    @property
    def exhausted(self) -> bool:
        return self.stopping_time is None


def _blocks(source, p, size=_BLOCK):
    """Yield 2-D float blocks from an array or an iterable of rows."""
    if isinstance(source, np.ndarray):
        arr = source.reshape(-1, p) if source.ndim == 1 else source
        for i in range(0, arr.shape[0], size):
            yield arr[i : i + size]
        return
    it = iter(source)
    while True:
        rows = list(itertools.islice(it, size))
        if not rows:
            return
        try:
            yield np.asarray(rows, dtype=float)
        except ValueError as exc:
            raise InvalidArgumentError(f"ragged observations: {exc}") from None


def run_to_alarm(config: DetectorConfig, source, max_steps: int | None = None) -> RunOutcome:
    """Run a fresh detector over ``source`` until it alarms or the source ends."""
    det = Detector(config)
    for block in _blocks(source, config.p):
        if max_steps is not None:
            block = block[: max_steps - det.t]
            if block.shape[0] == 0:
                break
        stop = det.feed(block)
        if stop is not None:
            return RunOutcome(stop, det.t, det.singular)
    return RunOutcome(None, det.t)


class Trajectory(NamedTuple):
    t: np.ndarray
    statistic: np.ndarray
    threshold: float
    alarm_time: int | None

    @property
    def alarmed(self) -> np.ndarray:
        if self.alarm_time is None:
            return np.zeros(self.t.shape, dtype=bool)
        return self.t >= self.alarm_time

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "statistic", "threshold", "alarmed"])
        for t, s, a in zip(self.t, self.statistic, self.alarmed):
            writer.writerow([int(t), repr(float(s)), repr(float(self.threshold)), int(a)])


def trajectory(config: DetectorConfig, source: Iterable) -> Trajectory:
    """Statistic at every ready step over the whole source, ignoring alarms."""
    cov = SlidingCovariance(config.p, config.w)
    ts, stats = [], []
    t0 = 0
    for block in _blocks(source, config.p):
        start = 0
        while start < block.shape[0]:
            used, _, s = cov.scan(block[start:], np.inf, config.kind_code)
            ts.append(np.arange(t0 + start + 1, t0 + start + used + 1))
            stats.append(s[:used].copy())
            start += used
        t0 += block.shape[0]
    t = np.concatenate(ts) if ts else np.zeros(0, dtype=int)
    s = np.concatenate(stats) if stats else np.zeros(0)
    ready = ~np.isnan(s)
    t, s = t[ready], s[ready]
    hits = np.nonzero(s >= config.threshold_b)[0]
    alarm = int(t[hits[0]]) if hits.size else None
    return Trajectory(t, s, config.threshold_b, alarm)
