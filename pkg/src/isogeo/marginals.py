"""Directional and sphere-averaged marginal tails.

The averaged tail

    F(t) = E_theta P(|<X, theta>| >= t L_K)

is estimated by conditioning on ``X``: given ``X = x`` the inner probability
over a uniform direction is the exact sphere tail at ``t L_K / |x|``. Averaging
that conditional tail over body samples is unbiased and has far lower
variance than sampling directions, which is what makes tails of size
``exp(-t^2)`` resolvable for moderate ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import betainc

from . import parallel
from .bodies import Body
from .errors import InsufficientSamplesError, UsageError
from .sampling import _points, as_stream, sample_sphere, sample_uniform
from .stats import EstimateWithError, Moments

# sample rows processed at once when building tail matrices
_ROW_BLOCK = 1 << 14
GRID_RATIO = 1.15


def sphere_tail(n: int, u):
    """``P(|theta_1| >= u)`` for ``theta`` uniform on ``S^{n-1}``.

    ``theta_1^2`` is Beta(1/2, (n-1)/2), so the tail is the regularized
    incomplete beta ``I_{1-u^2}((n-1)/2, 1/2)``; zero for ``u >= 1``.
    """
    if n < 2:
        raise UsageError("n must be >= 2")
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise UsageError("u must be >= 0")
    w = np.clip(1.0 - u * u, 0.0, 1.0)
    out = np.where(u >= 1.0, 0.0, betainc(0.5 * (n - 1), 0.5, w))
    return float(out) if out.ndim == 0 else out


def geometric_grid(start: float, stop: float, ratio: float = GRID_RATIO) -> np.ndarray:
    """Geometric grid from ``start`` to ``stop`` (both included), step ratio about ``ratio``."""
    if not 0 < start <= stop:
        raise UsageError("need 0 < start <= stop")
    if stop == start:
        return np.array([float(start)])
    num = math.ceil(math.log(stop / start) / math.log(ratio)) + 1
    return np.geomspace(start, stop, num)


@dataclass(frozen=True)
class TailCurve:
    t_grid: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    kind: str = "sphere_averaged"
    theta: np.ndarray | None = field(default=None, repr=False)

    def rows(self):
        for t, v, se in zip(self.t_grid, self.values, self.std_errors):
            yield float(t), float(v), float(se), self.kind

    def estimate(self, i: int) -> EstimateWithError:
        return EstimateWithError(float(self.values[i]), float(self.std_errors[i]), -1)


@dataclass(frozen=True)
class GaussianRateFit:
    """``q(t) = -ln F(t) / t^2`` over a subgrid; ``dropped`` lists zero-estimate points."""

    t_range: np.ndarray
    q_values: np.ndarray
    dropped: np.ndarray

    @property
    def q_min(self) -> float:
        return float(self.q_values.min())

    @property
    def q_max(self) -> float:
        return float(self.q_values.max())

    def is_supergaussian(self, c2_target: float) -> bool:
        return self.q_max <= c2_target

    def is_subgaussian(self, c2_target: float) -> bool:
        return self.q_min >= c2_target


def _validate_grid(t_grid) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise UsageError("t_grid must be positive and strictly increasing")
    return t


def directional_tail(samples, theta, t: float, lk: float) -> EstimateWithError:
    """Fraction of samples with ``|<x, theta>| >= t lk`` and its binomial SE."""
    if t <= 0:
        raise UsageError("t must be positive")
    pts = _points(samples)
    hits = np.abs(pts @ np.asarray(theta, dtype=float)) >= t * lk
    return _binomial(hits)


def _binomial(hits: np.ndarray) -> EstimateWithError:
    m = hits.shape[0]
    p = float(hits.mean())
    return EstimateWithError(p, math.sqrt(p * (1.0 - p) / m), m)


def directional_tail_curve(samples, theta, t_grid, lk: float) -> TailCurve:
    t = _validate_grid(t_grid)
    pts = _points(samples)
    proj = np.abs(pts @ np.asarray(theta, dtype=float))
    hits = proj[:, None] >= t[None, :] * lk
    p = hits.mean(axis=0)
    se = np.sqrt(p * (1.0 - p) / pts.shape[0])
    return TailCurve(t, p, se, "directional", np.asarray(theta, dtype=float))


def averaged_tail(body: Body, t_grid, x_samples) -> TailCurve:
    """Conditioned (Rao-Blackwellized) estimate of ``F`` on ``t_grid``.

    Each sample contributes ``sphere_tail(n, t L_K / |x|)``; only the norms of
    the samples enter. ``t_grid`` is in units of ``L_K`` and must lie in
    ``(0, sqrt(n)]``.
    """
    t = _validate_grid(t_grid)
    n = body.dim
    if t[-1] > math.sqrt(n) * (1.0 + 1e-12):
        raise UsageError(f"t_grid must lie in (0, sqrt(n)] = (0, {math.sqrt(n):.6g}]")
    pts = _points(x_samples)
    if pts.shape[1] != n:
        raise UsageError("sample dimension does not match the body")
    norms = np.linalg.norm(pts, axis=1)
    return _averaged_tail_from_norms(n, body.lk, t, norms)


def _averaged_tail_from_norms(n: int, lk: float, t: np.ndarray, norms: np.ndarray) -> TailCurve:
    def block(i):
        r = norms[i:i + _ROW_BLOCK]
        with np.errstate(divide="ignore"):
            u = np.where(r[:, None] > 0, t[None, :] * lk / r[:, None], np.inf)
        return Moments.of(sphere_tail(n, u))

    mom = Moments.reduce(parallel.ordered_map(block, range(0, norms.size, _ROW_BLOCK)))
    return TailCurve(t, np.asarray(mom.mean), np.asarray(mom.std_error), "sphere_averaged")


def naive_averaged_tail(body: Body, t_grid, x_samples, stream) -> TailCurve:
    """Pair estimator: each sample gets its own uniform direction.

    Cross-check only; its variance is never below the conditioned estimator's.
    """
    t = _validate_grid(t_grid)
    pts = _points(x_samples)
    thetas = sample_sphere(body.dim, pts.shape[0], stream)
    proj = np.abs(np.einsum("ij,ij->i", pts, thetas))
    hits = proj[:, None] >= t[None, :] * body.lk
    p = hits.mean(axis=0)
    return TailCurve(t, p, np.sqrt(p * (1.0 - p) / pts.shape[0]), "sphere_averaged")


def ball_averaged_tail_exact(body: Body, t_grid) -> np.ndarray:
    """Deterministic ``F(t)`` for the Euclidean ball.

    Integrates the sphere tail against the radial density ``n rho^{n-1}`` on
    the unit ball (``rho = |x| / r``).
    """
    if body.kind != "ball":
        raise UsageError("exact averaged tail is only available for the ball")
    n, r, lk = body.dim, body.scale, body.lk
    out = []
    for t in np.atleast_1d(np.asarray(t_grid, dtype=float)):
        a = t * lk / r  # conditional tail vanishes for rho <= a
        if a >= 1.0:
            out.append(0.0)
            continue
        val, _ = integrate.quad(lambda rho: n * rho ** (n - 1) * sphere_tail(n, a / rho), a, 1.0,
                                epsabs=0.0, epsrel=1e-11, limit=200)
        out.append(val)
    return np.array(out)


def ball_directional_tail_exact(body: Body, t) -> np.ndarray:
    """``P(|<X, theta>| >= t L_K)`` for the ball, any direction.

    The marginal density is proportional to ``(1 - (u/r)^2)^{(n-1)/2}``,
    i.e. ``(u/r)^2`` is Beta(1/2, (n+1)/2).
    """
    if body.kind != "ball":
        raise UsageError("exact directional tail is only available for the ball")
    a = np.asarray(t, dtype=float) * body.lk / body.scale
    return np.where(a >= 1.0, 0.0, betainc(0.5 * (body.dim + 1), 0.5, np.clip(1.0 - a * a, 0.0, 1.0)))


def gaussian_rate(curve: TailCurve, t_min: float | None = None, t_max: float | None = None,
                  drop_zeros: bool = False) -> GaussianRateFit:
    """Per-point Gaussian rate ``q(t) = -ln F(t) / t^2`` on ``[t_min, t_max]``.

    A zero estimate is below Monte Carlo resolution: it raises
    ``InsufficientSamplesError`` unless ``drop_zeros`` is set, in which case
    the point is excluded and reported in ``dropped``.
    """
    t = curve.t_grid
    lo = -np.inf if t_min is None else t_min
    hi = np.inf if t_max is None else t_max
    mask = (t >= lo) & (t <= hi)
    if not mask.any():
        raise UsageError("no grid points in the requested t range")
    t, v = t[mask], curve.values[mask]
    if np.any((v < 0) | (v > 1)):
        raise UsageError("tail values must lie in [0, 1]")
    zero = v <= 0.0
    if zero.any() and not drop_zeros:
        raise InsufficientSamplesError(f"zero tail estimate at t = {t[zero].tolist()}; increase samples")
    keep = ~zero
    if not keep.any():
        raise InsufficientSamplesError("every tail estimate in range is zero")
    q = (0.0 - np.log(v[keep])) / t[keep] ** 2  # 0.0 - keeps q(1.0) at +0.0
    return GaussianRateFit(t[keep], q, t[zero])


@dataclass(frozen=True)
class Classification:
    subgaussian: np.ndarray
    supergaussian: np.ndarray
    worst_t: np.ndarray
    r: float
    t_grid: np.ndarray
    super_grid: np.ndarray

    @property
    def subgaussian_fraction(self) -> float:
        return float(self.subgaussian.mean())

    @property
    def supergaussian_fraction(self) -> float:
        if self.super_grid.size == 0:
            return math.nan
        return float(self.supergaussian.mean())

    def rows(self):
        for i in range(self.subgaussian.size):
            yield i, bool(self.subgaussian[i]), bool(self.supergaussian[i]), float(self.worst_t[i])


def classify_tails(tails: np.ndarray, ses: np.ndarray, t: np.ndarray, r: float, n: int,
                   slack: float = 3.0):
    """Sub/supergaussian verdicts for a (directions, t) tail table."""
    sub_bound = np.exp(-(t / r) ** 2)
    sub_margin = sub_bound + slack * ses - tails
    sub = np.all(sub_margin >= 0, axis=1)
    worst = t[np.argmin(sub_margin, axis=1)]
    in_super = t <= math.sqrt(n) / r * (1.0 + 1e-12)
    if in_super.any():
        sup_bound = np.exp(-(r * t[in_super]) ** 2)
        sup = np.all(tails[:, in_super] + slack * ses[:, in_super] >= sup_bound, axis=1)
    else:
        sup = np.zeros(tails.shape[0], dtype=bool)
    return sub, sup, worst, t[in_super]


def classify_directions(body: Body, directions, r: float, t_grid, samples_per_direction: int,
                        stream, slack: float = 3.0) -> Classification:
    """Classify each direction as subgaussian and/or supergaussian with constant ``r``.

    Subgaussian: tail <= exp(-t^2/r^2) at every grid point (+slack SE).
    Supergaussian: tail >= exp(-r^2 t^2) at every grid point with
    ``t <= sqrt(n)/r`` (-slack SE). The grid must lie in ``[1, r sqrt(n)]``.
    Direction ``i`` is tested on fresh samples from ``stream.child(i)``.
    """
    if r <= 0:
        raise UsageError("r must be positive")
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    if dirs.size == 0 or dirs.shape[0] == 0:
        raise UsageError("direction set is empty")
    if dirs.shape[1] != body.dim:
        raise UsageError("direction dimension does not match the body")
    t = _validate_grid(t_grid)
    n = body.dim
    if t[0] < 1.0 or t[-1] > r * math.sqrt(n) * (1.0 + 1e-12):
        raise UsageError(f"t_grid must lie in [1, r sqrt(n)] = [1, {r * math.sqrt(n):.6g}]")
    stream = as_stream(stream)

    def one(i):
        pts = sample_uniform(body, samples_per_direction, stream.child(i)).points
        curve = directional_tail_curve(pts, dirs[i], t, body.lk)
        return curve.values, curve.std_errors

    results = parallel.ordered_map(one, range(dirs.shape[0]))
    tails = np.array([v for v, _ in results])
    ses = np.array([s for _, s in results])
    sub, sup, worst, super_grid = classify_tails(tails, ses, t, r, n, slack)
    return Classification(sub, sup, worst, r, t, super_grid)
