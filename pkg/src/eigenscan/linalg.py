"""Sliding-window sample covariance and symmetric eigenvalues.

The heavy lifting is done by numba kernels operating on plain arrays so the
same code path serves one streaming detector and thousands of Monte Carlo
replicates. Eigenvalues come from a cyclic Jacobi sweep, which is cheap at
the dimensions used here (p of order 10) and returns the full spectrum.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from .errors import DataError, InvalidArgumentError, NumericError

MAX_DIM = 512
# 1/lambda_min is reported as infinite (a singular window) below this.
SINGULAR_EIGENVALUE = 1e-12

KIND_MAX = 0
KIND_MIN_INVERSE = 1

# Scan outcome codes.
NO_ALARM = 0
ALARM = 1
ALARM_SINGULAR = 2


@numba.njit(cache=True, nogil=True)
def _jacobi_inplace(a, max_sweeps=60):
    """Cyclic Jacobi eigenvalues, ascending. Reads the diagonal and upper
    triangle of ``a`` and overwrites the upper triangle."""
    n = a.shape[0]
    d = np.empty(n)
    fro2 = 0.0
    for i in range(n):
        d[i] = a[i, i]
        fro2 += a[i, i] * a[i, i]
        for j in range(i + 1, n):
            fro2 += 2.0 * a[i, j] * a[i, j]
    target2 = 1e-30 * fro2
    for sweep in range(max_sweeps):
        off2 = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off2 += a[i, j] * a[i, j]
        if 2.0 * off2 <= target2:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                # below rounding level of both diagonal entries
                if sweep > 3 and abs(apq) * 1e17 <= abs(d[p]) and abs(apq) * 1e17 <= abs(d[q]):
                    a[p, q] = 0.0
                    continue
                if apq == 0.0:
                    continue
                tau = (d[q] - d[p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = 1.0 / (abs(tau) + math.sqrt(1.0 + tau * tau))
                    if tau < 0:
                        t = -t
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                d[p] -= t * apq
                d[q] += t * apq
                a[p, q] = 0.0
                for k in range(p):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(p + 1, q):
                    akp = a[p, k]
                    akq = a[k, q]
                    a[p, k] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(q + 1, n):
                    akp = a[p, k]
                    akq = a[q, k]
                    a[p, k] = c * akp - s * akq
                    a[q, k] = s * akp + c * akq
    d.sort()
    return d


@numba.njit(cache=True, nogil=True)
def _push(buf, S, meta, x):
    # meta = [head, count, pushes since rebuild]
    w, p = buf.shape
    head = meta[0]
    if meta[1] == w:
        for i in range(p):
            for j in range(i + 1):
                v = S[i, j] + x[i] * x[j] - buf[head, i] * buf[head, j]
                S[i, j] = v
                S[j, i] = v
    else:
        for i in range(p):
            for j in range(i + 1):
                v = S[i, j] + x[i] * x[j]
                S[i, j] = v
                S[j, i] = v
        meta[1] += 1
    for i in range(p):
        buf[head, i] = x[i]
    meta[0] = (head + 1) % w
    meta[2] += 1
    if meta[2] == w:
        _rebuild(buf, S, meta[1])
        meta[2] = 0


@numba.njit(cache=True, nogil=True)
def _rebuild(buf, S, count):
    p = buf.shape[1]
    for i in range(p):
        for j in range(i + 1):
            v = 0.0
            for r in range(count):
                v += buf[r, i] * buf[r, j]
            S[i, j] = v
            S[j, i] = v


@numba.njit(cache=True, nogil=True)
def _scan(buf, S, meta, block, b, kind, stats_out):
    """Push rows of ``block`` until the statistic reaches ``b``.

    Returns (rows consumed, outcome code). ``stats_out[r]`` receives the
    statistic after row r, or NaN while the window is filling.
    """
    w, p = buf.shape
    m = np.empty((p, p))
    for r in range(block.shape[0]):
        _push(buf, S, meta, block[r])
        if meta[1] < w:
            stats_out[r] = np.nan
            continue
        for i in range(p):
            for j in range(p):
                m[i, j] = S[i, j] / w
        ev = _jacobi_inplace(m)
        singular = False
        if kind == KIND_MAX:
            stat = ev[p - 1]
        elif ev[0] < SINGULAR_EIGENVALUE:
            stat = np.inf
            singular = True
        else:
            stat = 1.0 / ev[0]
        stats_out[r] = stat
        if stat >= b:
            return r + 1, ALARM_SINGULAR if singular else ALARM
    return block.shape[0], NO_ALARM


def _as_symmetric(m):
    a = np.array(m, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] > MAX_DIM:
        raise InvalidArgumentError(f"dimension {a.shape[0]} exceeds {MAX_DIM}")
    if not np.all(np.isfinite(a)):
        raise NumericError("matrix has non-finite entries")
    if not np.array_equal(a, a.T):
        # tolerate rounding asymmetry; use the lower triangle
        if not np.allclose(a, a.T, rtol=1e-12, atol=1e-12):
            raise InvalidArgumentError("matrix is not symmetric")
        a = np.tril(a) + np.tril(a, -1).T
    return a


def eigenvalues(m) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, ascending."""
    return _jacobi_inplace(_as_symmetric(m))


def lambda_max(m) -> float:
    return float(eigenvalues(m)[-1])


def lambda_min(m) -> float:
    return float(eigenvalues(m)[0])


class SlidingCovariance:
    """(1/w) * sum of x x^T over the last w observations.

    Updates are rank-one additions and removals; the accumulated sum is
    rebuilt from the ring buffer every w pushes so rounding error cannot
    grow with stream length.
    """

    def __init__(self, p: int, w: int):
        if p < 1 or w < 1:
            raise InvalidArgumentError(f"need p >= 1 and w >= 1, got p={p}, w={w}")
        if p > MAX_DIM:
            raise InvalidArgumentError(f"dimension {p} exceeds {MAX_DIM}")
        self.p = int(p)
        self.w = int(w)
        self.buffer = np.zeros((self.w, self.p))
        self.sum_outer = np.zeros((self.p, self.p))
        self._meta = np.zeros(3, dtype=np.int64)

    @property
    def count(self) -> int:
        return int(self._meta[1])

    @property
    def ready(self) -> bool:
        return self.count == self.w

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.p,):
            raise InvalidArgumentError(f"expected observations of dimension {self.p}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("observation has non-finite entries")
        return np.ascontiguousarray(x)

    def push(self, x) -> None:
        _push(self.buffer, self.sum_outer, self._meta, self._check(x))

    def extend(self, xs) -> None:
        xs = self._check(xs)
        for row in xs.reshape(-1, self.p):
            _push(self.buffer, self.sum_outer, self._meta, row)

    def window(self) -> np.ndarray:
        """Observations currently held, oldest first."""
        if self.count < self.w:
            return self.buffer[: self.count].copy()
        head = int(self._meta[0])
        return np.concatenate([self.buffer[head:], self.buffer[:head]])

    def matrix(self) -> np.ndarray:
        """Sample covariance over the held observations.

        Before the window is full this averages over ``count`` samples; check
        :attr:`ready` before treating it as a detection statistic.
        """
        if self.count == 0:
            return np.zeros((self.p, self.p))
        return self.sum_outer / self.count

    def scan(self, block, b: float, kind: int, stats_out=None):
        """Feed ``block`` through the window, stopping at the first statistic >= b."""
        block = self._check(block).reshape(-1, self.p)
        if stats_out is None:
            stats_out = np.empty(block.shape[0])
        used, code = _scan(self.buffer, self.sum_outer, self._meta, block, float(b), kind, stats_out)
        return int(used), int(code), stats_out

    def copy(self) -> "SlidingCovariance":
        other = SlidingCovariance(self.p, self.w)
        other.buffer[:] = self.buffer
        other.sum_outer[:] = self.sum_outer
        other._meta[:] = self._meta
        return other
