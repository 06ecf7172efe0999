"""The Orlicz function of a one-dimensional marginal.

For a random variable ``Y`` the Orlicz function is

    M(u) = int_0^u E[|Y| 1{|Y| >= 1/t}] dt.

Integrating the indicator in ``t`` over ``[1/|Y|, u]`` gives the pointwise form

    M(1/s) = E[(|Y|/s - 1) 1{|Y| >= s}],

which is exact on sample measures and is the production evaluator. The literal
double integral (``orlicz_definition``) and the sphere-marginal integral
(``orlicz_sphere_formula``) are independent routes to the same numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from . import parallel
from .bodies import Body, log_ball_volume
from .errors import UsageError
from .marginals import sphere_tail
from .sampling import _points
from .stats import EstimateWithError, Moments

METHODS = ("definition_quadrature", "sample_closed_form", "sphere_closed_form")

_ROW_BLOCK = 1 << 13


@dataclass(frozen=True)
class OrliczEvaluation:
    """``M(1/s)`` at level ``s``; ``error`` is an SE or a quadrature tolerance."""

    s: float
    value: float
    method: str
    error: float

    def as_estimate(self, samples: int = -1) -> EstimateWithError:
        return EstimateWithError(self.value, self.error, samples)


def _check_level(s: float) -> None:
    if not s > 0:
        raise UsageError("level s must be positive")


def orlicz_sample(samples, theta, s: float) -> OrliczEvaluation:
    """Exact sample-measure value of ``M_theta(1/s)`` with its Monte Carlo SE."""
    _check_level(s)
    y = np.abs(_points(samples) @ np.asarray(theta, dtype=float))
    return _orlicz_from_abs(y, s)


def _orlicz_from_abs(y: np.ndarray, s: float) -> OrliczEvaluation:
    vals = np.where(y >= s, y / s - 1.0, 0.0)
    est = EstimateWithError.from_values(vals)
    return OrliczEvaluation(float(s), est.value, "sample_closed_form", est.std_error)


def orlicz_definition(density, upper: float, s: float) -> OrliczEvaluation:
    """``M(1/s)`` by nested quadrature of the defining double integral.

    ``density`` is a symmetric marginal density supported on ``[-upper, upper]``.
    The inner integral is the truncated first moment ``E[|Y| 1{|Y| >= 1/t}]``.
    """
    _check_level(s)
    if s >= upper:
        return OrliczEvaluation(float(s), 0.0, "definition_quadrature", 0.0)

    def truncated_moment(t):
        a = 1.0 / t
        if a >= upper:
            return 0.0
        return 2.0 * integrate.quad(lambda y: y * density(y), a, upper, epsabs=1e-14, epsrel=1e-12)[0]

    # the inner moment vanishes for t < 1/upper
    val, err = integrate.quad(truncated_moment, 1.0 / upper, 1.0 / s, epsabs=1e-13, epsrel=1e-11, limit=200)
    return OrliczEvaluation(float(s), val, "definition_quadrature", err)


def _sphere_constant(n: int) -> float:
    # 2 w_{n-1} / (n w_n) with ball volumes via log-Gamma
    return 2.0 * math.exp(log_ball_volume(n - 1) - log_ball_volume(n)) / n


def orlicz_sphere_formula(n: int, norm_x: float, s: float, epsrel: float = 1e-10) -> float:
    """``M_{<theta,e_1>}(|x|/s)`` for ``theta`` uniform on ``S^{n-1}``.

    Adaptive quadrature of ``c_n int_0^{arccos(s/|x|)} sin^n y / cos^2 y dy``
    with ``c_n = 2 w_{n-1} / (n w_n)``; zero when ``s >= |x|``.
    """
    if n < 2:
        raise UsageError("n must be >= 2")
    if not norm_x > 0:
        raise UsageError("norm_x must be positive")
    _check_level(s)
    if s >= norm_x:
        return 0.0
    top = math.acos(s / norm_x)
    val, _ = integrate.quad(lambda y: math.sin(y) ** n / math.cos(y) ** 2, 0.0, top,
                            epsabs=0.0, epsrel=epsrel, limit=200)
    return _sphere_constant(n) * val


def orlicz_sphere_closed_form(n: int, ratio):
    """Same quantity as ``orlicz_sphere_formula`` in terms of ``ratio = s/|x|``, vectorized.

    With ``Y = theta_1`` (density ``c (1-y^2)^{(n-3)/2}``),
    ``E[(|Y|/rho - 1)_+] = 2c (1-rho^2)^{(n-1)/2} / ((n-1) rho) - P(|Y| >= rho)``.
    Loses relative accuracy as ``rho -> 1``, where the value itself vanishes.
    """
    if n < 2:
        raise UsageError("n must be >= 2")
    rho = np.asarray(ratio, dtype=float)
    log_c = float(gammaln(0.5 * n) - gammaln(0.5 * (n - 1))) - 0.5 * math.log(math.pi)
    inside = rho < 1.0
    r = np.where(inside, rho, 0.5)
    first = 2.0 * np.exp(log_c + 0.5 * (n - 1) * np.log1p(-r * r)) / ((n - 1) * r)
    out = np.where(inside, np.maximum(first - sphere_tail(n, r), 0.0), 0.0)
    return float(out) if out.ndim == 0 else out


def verify_representation(body: Body, s: float, x_samples, theta_samples, method: str = "closed_form"):
    """Both sides of the sphere-average representation of ``M_theta(1/s)``.

    lhs: average over the given directions of ``orlicz_sample(x_samples, theta, s)``.
    rhs: average over ``x_samples`` of the sphere Orlicz function at ``|x|/s``
    (``method="closed_form"`` or the per-sample ``"quadrature"``).

    The lhs SE combines the direction and sample layers,
    ``var(row means)/N + var(column means)/J``.
    """
    _check_level(s)
    pts = _points(x_samples)
    thetas = np.atleast_2d(np.asarray(theta_samples, dtype=float))
    if thetas.shape[1] != body.dim or pts.shape[1] != body.dim:
        raise UsageError("dimension mismatch between body, samples and directions")
    n_x, n_theta = pts.shape[0], thetas.shape[0]

    def block(i):
        vals = np.abs(pts[i:i + _ROW_BLOCK] @ thetas.T) / s - 1.0
        np.maximum(vals, 0.0, out=vals)
        return vals.sum(axis=0), vals.mean(axis=1)

    parts = parallel.ordered_map(block, range(0, n_x, _ROW_BLOCK))
    per_theta = sum(p[0] for p in parts) / n_x
    per_x = np.concatenate([p[1] for p in parts])
    lhs_value = float(per_theta.mean())
    var_theta = per_theta.var(ddof=1) / n_theta if n_theta > 1 else 0.0
    var_x = per_x.var(ddof=1) / n_x if n_x > 1 else 0.0
    lhs = EstimateWithError(lhs_value, math.sqrt(var_theta + var_x), n_x * n_theta)

    norms = np.linalg.norm(pts, axis=1)
    if method == "closed_form":
        with np.errstate(divide="ignore"):
            rhs_vals = orlicz_sphere_closed_form(body.dim, np.where(norms > 0, s / norms, np.inf))
    elif method == "quadrature":
        rhs_vals = np.array([orlicz_sphere_formula(body.dim, r, s) if r > 0 else 0.0 for r in norms])
    else:
        raise UsageError(f"unknown method {method!r}")
    rhs = Moments.of(rhs_vals).estimate()
    return lhs, rhs


class SupportLevel(NamedTuple):
    value: float
    flagged: bool


def implied_support_level(samples, theta, N: int, rtol: float = 1e-8) -> SupportLevel:
    """Level ``s0 = inf{s > 0 : M_theta(1/s) <= 1/N}`` by bisection.

    ``M_theta(1/s)`` is continuous and nonincreasing in ``s`` and vanishes at
    ``s = max|<X_i, theta>|``, which is the upper bracket. If the lower
    bracket cannot be pushed to where ``M >= 1/N`` the bracket end is
    returned with ``flagged=True``.
    """
    if N < 2:
        raise UsageError("N must be >= 2")
    y = np.sort(np.abs(_points(samples) @ np.asarray(theta, dtype=float)))[::-1]
    m = y.size
    top_sums = np.cumsum(y)
    target = 1.0 / N

    def orlicz(level):
        k = int(np.searchsorted(-y, -level, side="right"))  # count of y >= level
        if k == 0:
            return 0.0
        return (top_sums[k - 1] / level - k) / m

    hi = float(y[0])
    if hi <= 0:
        return SupportLevel(0.0, True)
    lo = 0.5 * hi
    while orlicz(lo) < target:
        lo *= 0.5
        if lo < hi * 1e-15:
            return SupportLevel(lo, True)
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if orlicz(mid) > target:
            lo = mid
        else:
            hi = mid
    return SupportLevel(0.5 * (lo + hi), False)


class TailBoundCheck(NamedTuple):
    m_value: OrliczEvaluation
    half_tail: EstimateWithError

    def holds(self, slack: float = 3.0) -> bool:
        """``M(1/s) >= tail(2s)/2`` up to ``slack`` combined SE."""
        se = math.hypot(self.m_value.error, self.half_tail.std_error)
        return self.m_value.value >= self.half_tail.value - slack * se


def tail_bound_check(samples, theta, s: float) -> TailBoundCheck:
    """``M_theta(1/s)`` alongside half the empirical tail at ``2s``."""
    _check_level(s)
    y = np.abs(_points(samples) @ np.asarray(theta, dtype=float))
    m_value = _orlicz_from_abs(y, s)
    p = float(np.mean(y >= 2.0 * s))
    half = EstimateWithError(0.5 * p, 0.5 * math.sqrt(p * (1.0 - p) / y.size), y.size)
    return TailBoundCheck(m_value, half)
