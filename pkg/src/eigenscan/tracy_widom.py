"""Tracy-Widom law of order one (F1) from an embedded CDF table.

The table in ``data/tw1_table.csv`` holds F1 on x in [-10, 8] at step 0.01,
computed offline by ``scripts/build_tw_table.py`` (Fredholm determinant of
the Airy kernel). Values between nodes come from a monotone piecewise-cubic
(PCHIP) interpolant, so the CDF is continuous and nondecreasing and the
quantile can be found by plain bisection.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import InvalidArgumentError, TailResolutionError

# Rounded moments of F1 as used by the correlation and cross-moment formulas.
TW1_MEAN = -1.21
TW1_SD = 1.27

# Tail mass below this is not trusted from the table.
MIN_TAIL_PROB = 1e-7


@dataclass(frozen=True)
class TracyWidomTable:
    """Tabulated CDF of the order-one Tracy-Widom law.

    Parameters
    ----------
    grid_x : ndarray
        Strictly increasing abscissae.
    grid_F : ndarray
        CDF values at ``grid_x``.
    """

    grid_x: np.ndarray
    grid_F: np.ndarray
    mean_c1: float = field(init=False)
    sd_c2: float = field(init=False)
    _interp: PchipInterpolator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = np.asarray(self.grid_x, dtype=float)
        F = np.asarray(self.grid_F, dtype=float)
        if x.ndim != 1 or x.shape != F.shape or x.size < 4:
            raise InvalidArgumentError("grid_x and grid_F must be 1-D arrays of equal length >= 4")
        if not np.all(np.diff(x) > 0):
            raise InvalidArgumentError("grid_x must be strictly increasing")
        if not np.all(np.diff(F) >= 0):
            raise InvalidArgumentError("grid_F must be nondecreasing")
        x.setflags(write=False)
        F.setflags(write=False)
        object.__setattr__(self, "grid_x", x)
        object.__setattr__(self, "grid_F", F)
        object.__setattr__(self, "_interp", PchipInterpolator(x, F, extrapolate=False))
        mean, var = self._integrated_moments()
        object.__setattr__(self, "mean_c1", mean)
        object.__setattr__(self, "sd_c2", math.sqrt(var))

    def _integrated_moments(self):
        # Stieltjes integrals by parts: E[X] = [xF] - int F dx, E[X^2] = [x^2 F] - 2 int xF dx.
        x, F = self.grid_x, self.grid_F
        lo, hi = x[0], x[-1]
        m1 = hi * F[-1] - lo * F[0] - np.trapezoid(F, x)
        m2 = hi**2 * F[-1] - lo**2 * F[0] - 2.0 * np.trapezoid(x * F, x)
        return float(m1), float(m2 - m1 * m1)

    @property
    def support(self):
        return float(self.grid_x[0]), float(self.grid_x[-1])

    def cdf(self, x):
        """F1(x), clamped to 0 below the grid and 1 above it."""
        xa = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(xa)):
            raise InvalidArgumentError("tw1_cdf requires finite arguments")
        lo, hi = self.support
        out = self._interp(np.clip(xa, lo, hi))
        out = np.clip(np.where(xa < lo, 0.0, np.where(xa > hi, 1.0, out)), 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def inverse_cdf(self, prob: float, tol: float = 1e-13) -> float:
        """Smallest x with F1(x) >= prob, by bisection on the interpolant."""
        lo, hi = self.support
        if not (self.grid_F[0] <= prob <= self.grid_F[-1]):
            raise TailResolutionError(f"probability {prob!r} is outside the tabulated range")
        a, b = lo, hi
        while b - a > tol:
            mid = 0.5 * (a + b)
            if self._interp(mid) < prob:
                a = mid
            else:
                b = mid
        return 0.5 * (a + b)

    def upper_quantile(self, alpha: float) -> float:
        """T_alpha with P(W1 >= T_alpha) = alpha."""
        if not (0.0 < alpha < 1.0):
            raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha!r}")
        if alpha < MIN_TAIL_PROB or 1.0 - alpha < MIN_TAIL_PROB:
            raise TailResolutionError(
                f"alpha={alpha!r} is beyond the resolvable tail ({MIN_TAIL_PROB:g})"
            )
        return self.inverse_cdf(1.0 - alpha)

    def moments(self):
        """(mean, variance) of the tabulated law."""
        return self.mean_c1, self.sd_c2**2

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", "F1"])
        for x, f in zip(self.grid_x, self.grid_F):
            writer.writerow([f"{x:.2f}", repr(float(f))])
        return buf.getvalue()


@lru_cache(maxsize=1)
def default_table() -> TracyWidomTable:
    """The embedded table, loaded once."""
    text = resources.files("eigenscan").joinpath("data/tw1_table.csv").read_text()
    rows = list(csv.reader(io.StringIO(text)))[1:]
    data = np.array(rows, dtype=float)
    return TracyWidomTable(data[:, 0], data[:, 1])


def tw1_cdf(x):
    return default_table().cdf(x)


def tw1_upper_quantile(alpha: float) -> float:
    return default_table().upper_quantile(alpha)


def tw1_moments():
    """Mean and variance of F1 integrated from the embedded table."""
    return default_table().moments()
