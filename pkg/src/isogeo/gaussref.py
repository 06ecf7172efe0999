"""Gaussian reference functions and the CLT-for-convex-bodies direction test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .bodies import Body
from .errors import ResolutionError, UsageError
from .sampling import as_stream, map_sample_chunks, sample_sphere

# exponent in the comparison window |t| < c n^KAPPA for symmetric bodies
KAPPA = 1.0 / 24.0
DEFAULT_T_MAX = 1.2
DEFAULT_BINS = 24

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def gaussian_density(t):
    t = np.asarray(t, dtype=float)
    out = np.exp(-0.5 * t * t - _LOG_SQRT_2PI)
    return float(out) if out.ndim == 0 else out


def gaussian_tail(t):
    """Upper tail ``P(Z >= t)`` for a standard normal ``Z``.

    Uses ``erfc``, so the relative accuracy holds deep into the tail.
    """
    t = np.asarray(t, dtype=float)
    out = 0.5 * erfc(t / _SQRT2)
    return float(out) if out.ndim == 0 else out


def mills_check(t_grid) -> np.ndarray:
    """Per-point truth of ``gamma(t)/(2t) <= P(Z >= t) <= 2 gamma(t)/t``."""
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t.size == 0 or np.any(t < 1.0):
        raise UsageError("the Mills bounds are only asserted for t >= 1")
    dens = gaussian_density(t)
    tail = gaussian_tail(t)
    return (dens / (2.0 * t) <= tail) & (tail <= 2.0 * dens / t)


@dataclass(frozen=True)
class DensityRatio:
    """Histogram comparison of one standardized marginal with ``gamma``."""

    theta: np.ndarray
    centers: np.ndarray
    ratios: np.ndarray  # f_hat / gamma(center) - 1 per bin
    uncertainty: np.ndarray  # binomial SE of the ratio per bin

    @property
    def sup_ratio(self) -> float:
        return float(np.max(np.abs(self.ratios)))

    @property
    def sup_uncertainty(self) -> float:
        return float(self.uncertainty[np.argmax(np.abs(self.ratios))])


@dataclass(frozen=True)
class CltReport:
    densities: tuple
    epsilon: float
    t_max: float
    bins: int
    samples: int

    @property
    def sup_ratios(self) -> np.ndarray:
        return np.array([d.sup_ratio for d in self.densities])

    @property
    def passing(self) -> np.ndarray:
        return self.sup_ratios <= self.epsilon

    @property
    def passing_fraction(self) -> float:
        return float(self.passing.mean())

    def rows(self):
        for i, (ratio, ok) in enumerate(zip(self.sup_ratios, self.passing)):
            yield i, float(ratio), bool(ok)


def _edges(t_max: float, bins: int) -> np.ndarray:
    return np.linspace(-t_max, t_max, bins + 1)


def _check_resolution(edges: np.ndarray, samples: int) -> None:
    mass = gaussian_tail(edges[:-1]) - gaussian_tail(edges[1:])
    if np.min(mass) * samples < 1.0:
        raise ResolutionError(
            f"a bin on [-{edges[-1]}, {edges[-1]}] expects fewer than one of {samples} samples under gamma"
        )


def density_ratios(body: Body, thetas, t_max: float, bins: int, samples: int, stream) -> list[DensityRatio]:
    """Histogram ratios for several directions from one shared sample."""
    if t_max <= 0:
        raise UsageError("t_max must be positive")
    if bins < 8:
        raise UsageError("need at least 8 bins")
    if samples < 100_000:
        raise UsageError("need at least 1e5 samples")
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    thetas = thetas / np.linalg.norm(thetas, axis=1, keepdims=True)
    edges = _edges(t_max, bins)
    _check_resolution(edges, samples)

    def histogram(points):
        y = points @ thetas.T / body.lk
        return np.stack([np.histogram(y[:, k], bins=edges)[0] for k in range(thetas.shape[0])])

    counts = sum(map_sample_chunks(body, samples, stream, histogram)).astype(float)
    width = edges[1] - edges[0]
    centers = 0.5 * (edges[:-1] + edges[1:])
    gam = gaussian_density(centers)
    p_hat = counts / samples
    f_hat = p_hat / width
    se = np.sqrt(p_hat * (1.0 - p_hat) / samples) / width
    return [DensityRatio(thetas[k], centers, f_hat[k] / gam - 1.0, se[k] / gam)
            for k in range(thetas.shape[0])]


def marginal_density_ratio(body: Body, theta, t_max: float = DEFAULT_T_MAX, bins: int = DEFAULT_BINS,
                           samples: int = 1_000_000, stream=0) -> DensityRatio:
    """Sup over bins of ``|f_hat / gamma - 1|`` for ``<X, theta> / L_K``."""
    return density_ratios(body, theta, t_max, bins, samples, stream)[0]


def clt_fraction(body: Body, direction_count: int, epsilon: float, t_max: float = DEFAULT_T_MAX,
                 samples: int = 1_000_000, stream=0, bins: int = DEFAULT_BINS) -> CltReport:
    """Fraction of uniform random directions whose sup-ratio is at most ``epsilon``.

    Directions come from ``stream.child(0)``, body samples from ``stream.child(1)``.
    """
    if direction_count < 1:
        raise UsageError("direction_count must be >= 1")
    stream = as_stream(stream)
    thetas = sample_sphere(body.dim, direction_count, stream.child(0))
    dens = density_ratios(body, thetas, t_max, bins, samples, stream.child(1))
    return CltReport(tuple(dens), epsilon, t_max, bins, samples)
