"""Seeded synthetic streams and Monte Carlo estimators.

Streams are counter-based: observation t of a stream is a pure function of
(seed, t). Draws come in aligned chunks of ``CHUNK`` steps, chunk k being
produced by a Philox generator keyed by the seed with counter k, so any
time index can be regenerated without replaying the stream. The pre- and
post-change regimes share the same underlying normals (common random
numbers), which makes pathwise comparisons between thresholds, regimes and
signal strengths meaningful.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np

from .detector import DetectorConfig
from .errors import InvalidArgumentError
from .linalg import ALARM_SINGULAR, NO_ALARM, SlidingCovariance, _jacobi_inplace

CHUNK = 512
Regime = Literal["null", "spiked", "rank1"]


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("EIGENSCAN_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class GeneratorSpec:
    """Hypothesis model for a synthetic stream.

    Observations x_1..x_tau are N(0, I_p); after ``change_at`` the spiked
    regime draws from N(0, I_p + theta u u^T) and the rank1 regime from the
    degenerate N(0, theta u u^T). ``u`` defaults to a direction drawn
    uniformly on the sphere from the seed.
    """

    regime: Regime
    p: int
    theta: float = 0.0
    u: tuple | None = None
    change_at: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.regime not in ("null", "spiked", "rank1"):
            raise InvalidArgumentError(f"unknown regime {self.regime!r}")
        if self.p < 1:
            raise InvalidArgumentError(f"p must be >= 1, got {self.p}")
        if self.regime == "rank1" and not self.theta > 0:
            raise InvalidArgumentError("rank1 regime needs theta > 0")
        if self.regime == "spiked" and not self.theta >= 0:
            raise InvalidArgumentError("spiked regime needs theta >= 0")
        if self.change_at < 0:
            raise InvalidArgumentError("change_at must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")
        if self.u is not None:
            u = np.asarray(self.u, dtype=float)
            if u.shape != (self.p,):
                raise InvalidArgumentError(f"u must have length p={self.p}")
            norm = np.linalg.norm(u)
            if not (norm > 0 and np.isfinite(norm)):
                raise InvalidArgumentError("u must be a finite nonzero vector")
            object.__setattr__(self, "u", tuple(float(v) for v in u / norm))

    def as_dict(self):
        return {
            "regime": self.regime,
            "p": self.p,
            "theta": self.theta,
            "u": list(self.u) if self.u is not None else None,
            "change_at": self.change_at,
            "seed": self.seed,
        }


def child_seed(seed: int, index: int) -> int:
    """Independent seed for replicate ``index`` of a study seeded with ``seed``."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


def replicate_spec(spec: GeneratorSpec, index: int) -> GeneratorSpec:
    return replace(spec, seed=child_seed(spec.seed, index))


@lru_cache(maxsize=4096)
def _key(seed):
    return np.random.SeedSequence(seed).generate_state(2, np.uint64)


def _philox(seed, counter_word, word_index=1):
    counter = np.zeros(4, dtype=np.uint64)
    counter[word_index] = counter_word
    return np.random.Generator(np.random.Philox(key=_key(seed), counter=counter))


class ObservationStream:
    """Random-access view of the stream described by a :class:`GeneratorSpec`."""

    def __init__(self, spec: GeneratorSpec):
        self.spec = spec
        if spec.u is not None:
            self.u = np.asarray(spec.u)
        else:
            v = _philox(spec.seed, 1, word_index=2).standard_normal(spec.p)
            self.u = v / np.linalg.norm(v)
        self._scale = math.sqrt(spec.theta)
        self._cached = (-1, None)

    def chunk(self, k: int) -> np.ndarray:
        """Rows for t = k*CHUNK + 1 .. (k+1)*CHUNK."""
        if self._cached[0] == k:
            return self._cached[1]
        spec = self.spec
        gen = _philox(spec.seed, k)
        x = gen.standard_normal((CHUNK, spec.p))
        g = gen.standard_normal(CHUNK)
        if spec.regime != "null":
            t = np.arange(k * CHUNK + 1, (k + 1) * CHUNK + 1)
            post = t > spec.change_at
            if np.any(post):
                spike = self._scale * np.outer(g[post], self.u)
                if spec.regime == "spiked":
                    x[post] += spike
                else:
                    x[post] = spike
        self._cached = (k, x)
        return x

    def block(self, start: int, n: int) -> np.ndarray:
        """Rows for t = start .. start+n-1 (1-based)."""
        if start < 1 or n < 0:
            raise InvalidArgumentError("time indices start at 1")
        out = np.empty((n, self.spec.p))
        filled = 0
        while filled < n:
            t = start + filled
            k, off = divmod(t - 1, CHUNK)
            take = min(CHUNK - off, n - filled)
            out[filled : filled + take] = self.chunk(k)[off : off + take]
            filled += take
        return out

    def at(self, t: int) -> np.ndarray:
        return self.block(t, 1)[0]


def generate(spec: GeneratorSpec, t: int) -> np.ndarray:
    """Observation at time ``t`` (1-based); deterministic in (spec, t)."""
    return ObservationStream(spec).at(t)


@dataclass
class SimulationReport:
    metric: Literal["arl", "edd", "correlation", "cross-moment", "threshold"]
    point_estimate: float
    std_error: float
    replicates: int
    censored: int = 0
    settings: dict = field(default_factory=dict)
    values: np.ndarray | None = field(default=None, repr=False, compare=False)

    def as_dict(self):
        return {
            "metric": self.metric,
            "estimate": self.point_estimate,
            "std_error": self.std_error,
            "replicates": self.replicates,
            "censored": self.censored,
            "settings": self.settings,
        }

    def to_json(self, **extra) -> str:
        return json.dumps({**self.as_dict(), **extra}, sort_keys=False, default=_json_default)

    def csv_row(self) -> dict:
        row = {k: v for k, v in self.as_dict().items() if k != "settings"}
        for k, v in self.settings.items():
            row[k] = json.dumps(v, default=_json_default) if isinstance(v, (dict, list)) else v
        return row


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def reports_to_csv(reports: Sequence[SimulationReport]) -> str:
    rows = [r.csv_row() for r in reports]
    header = []
    for row in rows:
        header.extend(k for k in row if k not in header)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return math.nan, math.nan
    # a single replicate carries no spread information; report 0
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return float(values.mean()), se


def _map(fn, n, threads):
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or n == 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def first_alarm(config: DetectorConfig, stream: ObservationStream, step_cap: int, start: int = 1, cov=None):
    """Stopping time of ``config`` on ``stream``: (t or None if capped, singular).

    Time is counted from 1 at ``start``; rows are pulled chunk by chunk.
    """
    if cov is None:
        cov = SlidingCovariance(config.p, config.w)
    t = 0
    while t < step_cap:
        n = min(CHUNK - (start + t - 1) % CHUNK, step_cap - t)
        block = stream.block(start + t, n)
        used, code, _ = cov.scan(block, config.threshold_b, config.kind_code)
        t += used
        if code != NO_ALARM:
            return t, code == ALARM_SINGULAR
    return None, False


def estimate_arl(
    config: DetectorConfig,
    replicates: int,
    step_cap: int | None = None,
    seed: int = 0,
    threads: int | None = None,
) -> SimulationReport:
    """Mean stopping time on null streams.

    Runs reaching ``step_cap`` are censored and contribute the cap, so the
    estimate is then a lower bound. The cap defaults to 50x the config's
    target ARL (or 250000 when no target is recorded).
    """
    if replicates < 1:
        raise InvalidArgumentError("replicates must be >= 1")
    if step_cap is None:
        step_cap = int(50 * config.target_arl) if config.target_arl else 250_000
    if step_cap < 10 * config.w:
        raise InvalidArgumentError(f"step_cap must be >= 10*w = {10 * config.w}")
    base = GeneratorSpec("null", config.p, seed=seed)

    def one(r):
        stop, _ = first_alarm(config, ObservationStream(replicate_spec(base, r)), step_cap)
        return (step_cap, True) if stop is None else (stop, False)

    runs = _map(one, replicates, threads)
    times = np.array([t for t, _ in runs], dtype=float)
    censored = sum(c for _, c in runs)
    mean, se = _mean_se(times)
    settings = {**config.as_dict(), "step_cap": step_cap, "seed": seed}
    return SimulationReport("arl", mean, se, replicates, censored, settings, times)


def estimate_edd(
    config: DetectorConfig,
    gen: GeneratorSpec,
    replicates: int,
    seed: int | None = None,
    step_cap: int = 100_000,
    warm_start: bool = True,
    threads: int | None = None,
) -> SimulationReport:
    """Mean detection delay when the change is active from the first monitored sample.

    With ``warm_start`` (the default) the window is first filled with w
    pre-change observations, as for a detector that has been running before
    the change; the delay is the number of post-change samples up to and
    including the alarm. Replicates that alarm on the all-pre-change window
    are dropped and counted under ``settings['pre_change_alarms']``.
    Without ``warm_start`` the delay is the raw stopping time, which is at
    least w.
    """
    if gen.regime == "null":
        raise InvalidArgumentError("EDD needs a spiked or rank1 regime")
    if gen.change_at != 0:
        raise InvalidArgumentError("EDD is defined for a change at the first sample (change_at=0)")
    if replicates < 1:
        raise InvalidArgumentError("replicates must be >= 1")
    if gen.p != config.p:
        raise InvalidArgumentError("generator and detector dimensions differ")
    seed = gen.seed if seed is None else seed
    w = config.w
    base = replace(gen, seed=seed, change_at=w if warm_start else 0)

    def one(r):
        stream = ObservationStream(replicate_spec(base, r))
        cov = SlidingCovariance(config.p, w)
        offset = 0
        if warm_start:
            used, code, _ = cov.scan(stream.block(1, w), config.threshold_b, config.kind_code)
            if code != NO_ALARM:
                return None
            offset = w
        stop, _ = first_alarm(config, stream, step_cap, start=offset + 1, cov=cov)
        return (step_cap, True) if stop is None else (stop, False)

    runs = _map(one, replicates, threads)
    kept = [r for r in runs if r is not None]
    delays = np.array([t for t, _ in kept], dtype=float)
    censored = sum(c for _, c in kept)
    mean, se = _mean_se(delays)
    settings = {
        **config.as_dict(),
        **{f"gen_{k}": v for k, v in base.as_dict().items() if k not in ("seed", "change_at")},
        "seed": seed,
        "warm_start": warm_start,
        "pre_change_alarms": len(runs) - len(kept),
        "step_cap": step_cap,
    }
    return SimulationReport("edd", mean, se, len(kept), censored, settings, delays)


def statistic_series(w: int, p: int, length: int, spec: GeneratorSpec, kind: int = 0) -> np.ndarray:
    """Scan statistic Z_w .. Z_{w+length-1} on ``spec``'s stream."""
    stream = ObservationStream(spec)
    cov = SlidingCovariance(p, w)
    stats = np.empty(w - 1 + length)
    done = 0
    while done < stats.size:
        n = min(CHUNK - done % CHUNK, stats.size - done)
        block = stream.block(done + 1, n)
        start = 0
        while start < n:
            used, _, s = cov.scan(block[start:], np.inf, kind, stats[done + start : done + n])
            start += used
        done += n
    return stats[w - 1 :]


def correlation_study(
    w: int,
    p: int,
    deltas: Sequence[int],
    replicates: int,
    seed: int = 0,
    stream_length: int | None = None,
    threads: int | None = None,
) -> list[dict]:
    """Correlation and cross moment of (Z_t, Z_{t+delta}) for several lags.

    Each replicate scans one long null stream; all lags reuse the same
    statistic series. Standard errors come from the spread of per-replicate
    estimates.
    """
    deltas = [int(d) for d in deltas]
    if replicates < 1:
        raise InvalidArgumentError("replicates must be >= 1")
    if any(d < 1 or d > w for d in deltas):
        raise InvalidArgumentError("lags must satisfy 1 <= delta <= w")
    dmax = max(deltas)
    if stream_length is None:
        stream_length = max(4 * w, math.ceil(10_000 / replicates)) + dmax
    if stream_length <= dmax + 1:
        raise InvalidArgumentError("stream_length must exceed the largest lag")
    base = GeneratorSpec("null", p, seed=seed)
    series = _map(lambda r: statistic_series(w, p, stream_length, replicate_spec(base, r)), replicates, threads)

    rows = []
    for d in deltas:
        xs = [z[:-d] for z in series]
        ys = [z[d:] for z in series]
        X, Y = np.concatenate(xs), np.concatenate(ys)
        corr = float(np.corrcoef(X, Y)[0, 1])
        cross = float(np.mean(X * Y))
        per_corr = [np.corrcoef(x, y)[0, 1] for x, y in zip(xs, ys)]
        per_cross = [np.mean(x * y) for x, y in zip(xs, ys)]
        _, corr_se = _mean_se(per_corr)
        _, cross_se = _mean_se(per_cross)
        rows.append(
            {
                "delta": d,
                "overlap_ratio": 1.0 - d / w,
                "pairs": int(X.size),
                "correlation": corr,
                "correlation_se": corr_se,
                "cross_moment": cross,
                "cross_moment_se": cross_se,
            }
        )
    return rows


def estimate_correlation(
    w: int,
    p: int,
    delta: int,
    replicates: int,
    seed: int = 0,
    metric: Literal["correlation", "cross-moment"] = "correlation",
    stream_length: int | None = None,
    threads: int | None = None,
) -> SimulationReport:
    """corr(Z_t, Z_{t+delta}) or E[Z_t Z_{t+delta}] on overlapping null windows."""
    if metric not in ("correlation", "cross-moment"):
        raise InvalidArgumentError(f"unknown metric {metric!r}")
    row = correlation_study(w, p, [delta], replicates, seed, stream_length, threads)[0]
    key = "correlation" if metric == "correlation" else "cross_moment"
    settings = {"w": w, "p": p, "delta": delta, "seed": seed, "pairs": row["pairs"]}
    return SimulationReport(metric, row[key], row[key + "_se"], replicates, 0, settings)


class _RecordPath:
    """Running-maximum record times of the largest-eigenvalue statistic on one null path."""

    def __init__(self, spec, p, w, step_cap):
        self.stream = ObservationStream(spec)
        self.cov = SlidingCovariance(p, w)
        self.step_cap = step_cap
        self.t = 0
        self.best = -np.inf
        self.times = []
        self.values = []

    def advance(self, level):
        """Scan until the running maximum reaches ``level`` or the cap."""
        while self.t < self.step_cap and self.best < level:
            n = min(CHUNK - self.t % CHUNK, self.step_cap - self.t)
            block = self.stream.block(self.t + 1, n)
            start = 0
            while start < n and self.best < level:
                # stop at each new record: threshold just above the best so far
                above = np.nextafter(self.best, np.inf) if np.isfinite(self.best) else -np.inf
                used, code, s = self.cov.scan(block[start:], above, 0)
                start += used
                if code != NO_ALARM:
                    self.best = float(s[used - 1])
                    self.times.append(self.t + start)
                    self.values.append(self.best)
            self.t += start

    def stopping_time(self, b):
        idx = int(np.searchsorted(np.asarray(self.values), b, side="left"))
        if idx < len(self.values):
            return self.times[idx], False
        return self.t, True


def estimate_thresholds(
    w: int,
    p: int,
    target_arls: Sequence[float],
    replicates: int,
    seed: int = 0,
    step_cap: int | None = None,
    threads: int | None = None,
) -> list[SimulationReport]:
    """Largest-eigenvalue thresholds whose simulated ARL matches each target.

    Each null path records the times at which the running maximum of the
    statistic increases; the stopping time for a threshold b is the first
    record time with record value >= b. The simulated ARL is then a
    nondecreasing step function of b and is inverted by bisection. Paths are
    only scanned as far as the current upper bracket needs, and the bracket
    is raised until its simulated ARL exceeds the target.
    """
    from .calibration import edge_constants_max, threshold_corrected

    targets = sorted(float(a) for a in target_arls)
    if replicates < 1:
        raise InvalidArgumentError("replicates must be >= 1")
    if not targets or targets[0] <= 1:
        raise InvalidArgumentError("targets must exceed 1")
    if step_cap is None:
        step_cap = int(50 * targets[-1])
    base = GeneratorSpec("null", p, seed=seed)
    paths = [_RecordPath(replicate_spec(base, r), p, w, step_cap) for r in range(replicates)]
    scale = edge_constants_max(w, p).scale

    def advance(level):
        _map(lambda i: paths[i].advance(level), len(paths), threads)

    def arl_at(b):
        runs = [path.stopping_time(b) for path in paths]
        return np.array([t for t, _ in runs], dtype=float), sum(c for _, c in runs)

    reports = []
    lo = edge_constants_max(w, p).center
    for target in targets:
        hi = threshold_corrected(w, p, target).threshold_b
        advance(hi)
        while arl_at(hi)[0].mean() < target and not all(path.t >= step_cap for path in paths):
            hi += 0.5 * scale
            advance(hi)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if arl_at(mid)[0].mean() < target:
                lo = mid
            else:
                hi = mid
        times, cens = arl_at(hi)
        mean, se = _mean_se(times)
        reports.append(
            SimulationReport(
                "threshold",
                hi,
                math.nan,
                replicates,
                cens,
                {"w": w, "p": p, "target_arl": target, "simulated_arl": mean, "arl_se": se, "seed": seed},
            )
        )
    return reports


def null_extreme_eigenvalues(n: int, p: int, replicates: int, seed: int = 0) -> np.ndarray:
    """(replicates, 2) array of (lambda_min, lambda_max) of (1/n) X^T X for null X."""
    base = GeneratorSpec("null", p, seed=seed)
    out = np.empty((replicates, 2))
    for r in range(replicates):
        x = ObservationStream(replicate_spec(base, r)).block(1, n)
        ev = _jacobi_inplace(x.T @ x / n)
        out[r] = ev[0], ev[-1]
    return out
