"""Closed-form threshold calibration and delay bounds.

Everything here assumes unit-variance Gaussian noise before the change.
Thresholds are on the raw eigenvalue scale of the windowed sample
covariance (1/w) * sum x x^T unless a name says otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Literal, NamedTuple

from .errors import CalibrationInfeasibleError, InvalidArgumentError
from .tracy_widom import TW1_MEAN, TW1_SD, tw1_upper_quantile

Procedure = Literal["max", "min"]
Method = Literal["tw-independent", "tw-corrected", "manual"]


@dataclass(frozen=True)
class EdgeConstants:
    """Centering and scaling for an extreme eigenvalue of an n-sample Wishart sum.

    ``(lambda * n - mu) / sigma`` is approximately Tracy-Widom (beta=1), where
    ``lambda`` is an eigenvalue of the normalised sample covariance. For the
    smallest eigenvalue ``sigma`` is negative: large values of the limit law
    correspond to unusually small eigenvalues.
    """

    mu: float
    sigma: float
    kind: Literal["max-edge", "min-edge"]
    n: int
    p: int

    @property
    def center(self) -> float:
        """mu / n, the centering on the normalised scale."""
        return self.mu / self.n

    @property
    def scale(self) -> float:
        return self.sigma / self.n

    def standardize(self, eigenvalue: float) -> float:
        return (eigenvalue - self.center) / self.scale

    def unstandardize(self, z: float) -> float:
        return self.center + self.scale * z


def _check_positive_int(name, value, minimum=1):
    if int(value) != value or value < minimum:
        raise InvalidArgumentError(f"{name} must be an integer >= {minimum}, got {value!r}")


def edge_constants_max(n: int, p: int) -> EdgeConstants:
    _check_positive_int("n", n, 2)
    _check_positive_int("p", p, 1)
    a = math.sqrt(n - 1) + math.sqrt(p)
    sigma = a * (1.0 / math.sqrt(n - 1) + 1.0 / math.sqrt(p)) ** (1.0 / 3.0)
    return EdgeConstants(mu=a * a, sigma=sigma, kind="max-edge", n=int(n), p=int(p))


def edge_constants_min(n: int, p: int) -> EdgeConstants:
    _check_positive_int("n", n, 2)
    _check_positive_int("p", p, 1)
    if n <= p:
        raise InvalidArgumentError(f"smallest-eigenvalue constants need n > p (n={n}, p={p})")
    d = math.sqrt(p) - math.sqrt(n)
    sigma = d * (1.0 / math.sqrt(p) - 1.0 / math.sqrt(n)) ** (1.0 / 3.0)
    return EdgeConstants(mu=d * d, sigma=sigma, kind="min-edge", n=int(n), p=int(p))


@dataclass(frozen=True)
class CalibrationResult:
    threshold_b: float
    method: Method
    target_arl: float
    w: int
    p: int
    procedure: Procedure
    # Tracy-Widom quantile (tw-independent) or standardized b (tw-corrected).
    quantile: float

    def as_dict(self):
        return {
            "threshold_b": self.threshold_b,
            "method": self.method,
            "target_arl": self.target_arl,
            "w": self.w,
            "p": self.p,
            "procedure": self.procedure,
            "quantile": self.quantile,
        }


def _alpha_from_arl(target_arl):
    if not (math.isfinite(target_arl) and target_arl > 1):
        raise InvalidArgumentError(f"target ARL must be a finite number > 1, got {target_arl!r}")
    return 1.0 / target_arl


def threshold_tw_max(w: int, p: int, target_arl: float) -> CalibrationResult:
    """Largest-eigenvalue threshold with per-window exceedance 1/target_arl.

    Ignores the correlation between overlapping windows, which makes the
    realised ARL larger than the target.
    """
    alpha = _alpha_from_arl(target_arl)
    ec = edge_constants_max(w, p)
    t_alpha = tw1_upper_quantile(alpha)
    b = ec.unstandardize(t_alpha)
    return CalibrationResult(b, "tw-independent", float(target_arl), int(w), int(p), "max", t_alpha)


def threshold_tw_min(w: int, p: int, target_arl: float) -> CalibrationResult:
    """Threshold on 1/lambda_min with per-window exceedance 1/target_arl.

    P(1/lambda_min >= b) = P(lambda_min <= 1/b); with the signed min-edge
    scale this is the upper Tracy-Widom tail, so
    1/b = mu'/w + (sigma'/w) * T_alpha.
    """
    alpha = _alpha_from_arl(target_arl)
    ec = edge_constants_min(w, p)
    t_alpha = tw1_upper_quantile(alpha)
    inv_b = ec.unstandardize(t_alpha)
    if inv_b <= 0:
        raise CalibrationInfeasibleError(
            f"window w={w} is too short for ARL {target_arl:g} at p={p}: "
            f"the calibrated smallest-eigenvalue level {inv_b:.4g} is not positive"
        )
    return CalibrationResult(1.0 / inv_b, "tw-independent", float(target_arl), int(w), int(p), "min", t_alpha)


def corr_slope_beta(w: int, p: int) -> float:
    """Local slope beta with corr(Z_t, Z_{t+d}) ~ 1 - beta * d."""
    _check_positive_int("w", w, 2)
    _check_positive_int("p", p, 1)
    if w < 4 * p:
        warnings.warn(f"slope approximation assumes w >> p; got w={w}, p={p}", stacklevel=2)
    c1, c2 = TW1_MEAN, TW1_SD
    num = 2.0 * p ** (1.0 / 3.0) + 3.0 * p ** (1.0 / 6.0) * c1 / math.sqrt(w) + c1 * c1 / w
    return 1.0 + num / (c2 * c2)


def local_correlation_approx(w: int, p: int, delta: int) -> float:
    """First-order approximation 1 - beta * delta (an upper bound, may go negative)."""
    if delta / w > 0.1:
        warnings.warn(f"delta/w = {delta / w:.3f} is outside the local regime", stacklevel=2)
    return 1.0 - corr_slope_beta(w, p) * delta


def _block_moments(m, p):
    """E[lambda_max] and E[lambda_max^2] of an unnormalised m-sample Wishart sum."""
    if m == 1:
        # lambda_max(x x^T) = |x|^2 ~ chi2_p
        return float(p), float(p * p + 2 * p)
    ec = edge_constants_max(m, p)
    mean = ec.mu + TW1_MEAN * ec.sigma
    return mean, mean * mean + (TW1_SD * ec.sigma) ** 2


def cross_moment_upper_bound(w: int, p: int, delta: int) -> float:
    """Upper bound on E[Z_t Z_{t+delta}] for overlapping windows under the null.

    The windows split into independent blocks P (delta samples, only in the
    first window), Q (w - delta shared samples) and W (delta samples, only
    in the second window); block moments come from the Tracy-Widom
    approximation at each block's own sample size.
    """
    _check_positive_int("w", w, 2)
    _check_positive_int("delta", delta, 1)
    if delta >= w:
        raise InvalidArgumentError(f"need 1 <= delta < w, got delta={delta}, w={w}")
    eq, eq2 = _block_moments(w - delta, p)
    ep, _ = _block_moments(delta, p)
    return (eq2 + eq * (ep + ep) + ep * ep) / (w * w)


def _norm_cdf_minus_half(y):
    return 0.5 * math.erf(y / math.sqrt(2.0))


def _norm_pdf(y):
    return math.exp(-0.5 * y * y) / math.sqrt(2.0 * math.pi)


def nu_overshoot(x: float) -> float:
    """Siegmund's closed-form approximation to the overshoot function v(x)."""
    if not (x > 0 and math.isfinite(x)):
        raise InvalidArgumentError(f"v(x) needs finite x > 0, got {x!r}")
    y = x / 2.0
    num = (2.0 / x) * _norm_cdf_minus_half(y)
    den = y * (0.5 + _norm_cdf_minus_half(y)) + _norm_pdf(y)
    return num / den


def arl_corrected(b_raw: float, w: int, p: int) -> float:
    """ARL of the largest-eigenvalue procedure including window correlation.

    ``b_raw`` is standardized with the max-edge constants before the normal
    density and overshoot correction are applied.
    """
    ec = edge_constants_max(w, p)
    b = ec.standardize(b_raw)
    if not b > 0:
        raise InvalidArgumentError(
            f"threshold {b_raw!r} is not above the bulk centre {ec.center:.6g}"
        )
    beta = corr_slope_beta(w, p)
    return 1.0 / (beta * b * _norm_pdf(b) * nu_overshoot(b * math.sqrt(2.0 * beta)))


def threshold_corrected(w: int, p: int, target_arl: float, rtol: float = 1e-6) -> CalibrationResult:
    """Invert :func:`arl_corrected` for ``target_arl`` by bisection."""
    _alpha_from_arl(target_arl)
    ec = edge_constants_max(w, p)
    lo = ec.unstandardize(0.1)
    hi = ec.unstandardize(20.0)
    f_lo = arl_corrected(lo, w, p)
    f_hi = arl_corrected(hi, w, p)
    # ARL dips to a minimum near b_std ~ 1 before rising; a root exists on the
    # rising branch only if the target is above the value at the lower end.
    if not (f_lo < target_arl < f_hi):
        raise CalibrationInfeasibleError(
            f"target ARL {target_arl:g} not reachable for b_std in [0.1, 20] "
            f"(ARL range {f_lo:.4g} .. {f_hi:.4g})"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        arl = arl_corrected(mid, w, p)
        if abs(arl - target_arl) <= rtol * target_arl:
            break
        if arl < target_arl:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(mid)):
            break
    return CalibrationResult(mid, "tw-corrected", float(target_arl), int(w), int(p), "max", ec.standardize(mid))


class DelayBound(NamedTuple):
    value: float
    b_prime: float
    detectable: bool


def edd_lower_bound(b_raw: float, w: int, theta: float) -> DelayBound:
    """CUSUM-based lower bound on the detection delay after a rank-one spike.

    Returns value 0 and ``detectable=False`` when the threshold sits below
    the post-change drift (b' <= 0).
    """
    if not theta > 0:
        raise InvalidArgumentError(f"theta must be > 0, got {theta!r}")
    _check_positive_int("w", w, 1)
    k = 1.0 - 1.0 / (1.0 + theta)
    lg = math.log1p(theta)
    b_prime = 0.5 * k * (b_raw - lg / k) * w
    if b_prime <= 0:
        return DelayBound(0.0, b_prime, False)
    drift = 0.5 * theta - 0.5 * lg
    return DelayBound((b_prime + math.expm1(-b_prime)) / drift, b_prime, True)


def kl_divergence_spiked(theta: float) -> float:
    """KL(N(0, I) || N(0, I + theta u u^T)); independent of the dimension."""
    if not theta >= 0:
        raise InvalidArgumentError(f"theta must be >= 0, got {theta!r}")
    return 0.5 * (math.log1p(theta) - theta / (1.0 + theta))


def kl_delay_bound(target_arl: float, theta: float) -> float:
    _alpha_from_arl(target_arl)
    if not theta > 0:
        raise InvalidArgumentError(f"theta must be > 0, got {theta!r}")
    return math.log(target_arl) / kl_divergence_spiked(theta)


def min_window(p: int, theta: float, sigma_noise: float = 1.0) -> int:
    """Shortest window at which a spike of strength theta separates from the bulk."""
    _check_positive_int("p", p, 1)
    if not (theta > 0 and sigma_noise > 0):
        raise InvalidArgumentError("theta and sigma_noise must be positive")
    ratio = p * (sigma_noise / theta) ** 2
    # guard against 10.000000000000002-style rounding
    return max(1, math.ceil(round(ratio, 9)))
