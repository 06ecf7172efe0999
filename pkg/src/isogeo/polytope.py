"""Random symmetric polytopes and Monte Carlo mean width.

Support functions are evaluated exactly by a max over vertices; no hull is
ever built. Mean width uses the spherical-average normalization
``w(K) = E_theta h_K(theta)`` (no factor 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import parallel
from .bodies import Body
from .errors import UsageError
from .sampling import as_stream, sample_sphere, sample_uniform
from .stats import EstimateWithError

# directions evaluated per block in the coupled width curve
_DIRECTION_BLOCK = 1024
# floats materialized per block of elementwise products in support evaluation
_PRODUCT_BUDGET = 1 << 22


@dataclass(frozen=True)
class RandomPolytope:
    """``conv{±X_1, ..., ±X_N}`` stored by its generating vertices."""

    vertices: np.ndarray
    body_id: str = ""
    seed: int | None = None

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def with_vertex(self, v) -> "RandomPolytope":
        return RandomPolytope(np.vstack([self.vertices, np.asarray(v, dtype=float)]), self.body_id, self.seed)


@dataclass(frozen=True)
class WidthCurve:
    n_values: np.ndarray
    estimates: tuple
    ratios: np.ndarray

    def rows(self):
        for N, est, ratio in zip(self.n_values, self.estimates, self.ratios):
            yield int(N), est.value, est.std_error, float(ratio)

    @property
    def band(self) -> float:
        """max(ratio) / min(ratio)."""
        return float(self.ratios.max() / self.ratios.min())


def random_polytope(body: Body, N: int, stream) -> RandomPolytope:
    if N < 1:
        raise UsageError("N must be >= 1")
    batch = sample_uniform(body, N, stream)
    return RandomPolytope(batch.points, batch.body_id, batch.seed)


def _vertices(polytope) -> np.ndarray:
    v = polytope.vertices if isinstance(polytope, RandomPolytope) else np.asarray(polytope, dtype=float)
    v = np.atleast_2d(v)
    if v.shape[0] == 0:
        raise UsageError("polytope has no vertices")
    return v


def _abs_projections(v: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """``|<v_i, theta_j>|`` as a (directions, vertices) matrix.

    Each entry is an elementwise product reduced along the coordinate axis, so
    its rounding does not depend on how many vertices or directions share the
    call (BLAS kernels do not give that guarantee). This keeps the support
    function exactly even and exactly monotone under adding vertices.
    """
    rows = max(1, _PRODUCT_BUDGET // max(1, v.size))
    out = np.empty((thetas.shape[0], v.shape[0]))
    for i in range(0, thetas.shape[0], rows):
        block = thetas[i:i + rows]
        np.abs((block[:, None, :] * v[None, :, :]).sum(axis=2), out=out[i:i + rows])
    return out


def support(polytope, theta):
    """``h(theta) = max_i |<X_i, theta>|`` for one direction or a stack of them."""
    v = _vertices(polytope)
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != v.shape[1]:
        raise UsageError(f"direction has dimension {theta.shape[-1]}, polytope has {v.shape[1]}")
    if theta.ndim == 1:
        return float(_abs_projections(v, theta[None, :]).max())
    return _abs_projections(v, theta).max(axis=1)


def mean_width(polytope, M: int, stream) -> EstimateWithError:
    """Average of the support function over ``M`` uniform directions."""
    if M < 1:
        raise UsageError("M must be >= 1")
    v = _vertices(polytope)
    thetas = sample_sphere(v.shape[1], M, stream)
    return EstimateWithError.from_values(support(v, thetas))


def expected_mean_width(body: Body, N: int, trials: int, M: int, stream) -> EstimateWithError:
    """Outer Monte Carlo of ``mean_width`` over independent polytopes.

    Trial ``j`` uses vertices from ``stream.child(j, 0)`` and directions from
    ``stream.child(j, 1)``. The standard error is the spread of the per-trial
    mean widths, which already carries the inner direction noise.
    """
    if trials < 1 or N < 1:
        raise UsageError("trials and N must be >= 1")
    stream = as_stream(stream)

    def trial(j):
        poly = random_polytope(body, N, stream.child(j, 0))
        return mean_width(poly, M, stream.child(j, 1)).value

    widths = parallel.ordered_map(trial, range(trials))
    return EstimateWithError.from_values(widths)


def width_scaling_curve(body: Body, n_grid, trials: int, M: int, stream) -> WidthCurve:
    """Mean width of ``K_N`` for each ``N`` in ``n_grid`` with the ratio
    ``E w(K_N) / (sqrt(ln N) L_K)``.

    Polytopes are coupled across the grid: each trial samples ``max(n_grid)``
    points and uses prefixes, with one shared set of directions, so the
    per-trial widths are exactly nondecreasing in ``N``.
    """
    if not body.symmetric:
        raise UsageError(f"{body.kind} is not origin-symmetric; the width scaling needs a symmetric body")
    grid = np.asarray(sorted(set(int(N) for N in n_grid)), dtype=int)
    if grid.size == 0 or grid[0] < 3:
        raise UsageError("every N in the grid must be >= 3")
    if trials < 1 or M < 1:
        raise UsageError("trials and M must be >= 1")
    stream = as_stream(stream)
    n_max = int(grid[-1])

    def trial(j):
        pts = sample_uniform(body, n_max, stream.child(j, 0)).points
        thetas = sample_sphere(body.dim, M, stream.child(j, 1))
        widths = np.zeros(grid.size)
        for i in range(0, M, _DIRECTION_BLOCK):
            proj = np.abs(pts @ thetas[i:i + _DIRECTION_BLOCK].T)
            running = np.maximum.accumulate(proj, axis=0)
            widths += running[grid - 1].sum(axis=1)
        return widths / M

    per_trial = np.array(parallel.ordered_map(trial, range(trials)))
    estimates = tuple(EstimateWithError.from_values(per_trial[:, k]) for k in range(grid.size))
    values = np.array([e.value for e in estimates])
    ratios = values / (np.sqrt(np.log(grid)) * body.lk)
    return WidthCurve(grid, estimates, ratios)


def support_expectation(body: Body, theta, N: int, trials: int, stream) -> EstimateWithError:
    """Monte Carlo ``E h_{K_N}(theta)`` over ``trials`` independent polytopes."""
    theta = np.asarray(theta, dtype=float)
    stream = as_stream(stream)

    def trial(j):
        return support(random_polytope(body, N, stream.child(j)), theta)

    return EstimateWithError.from_values(parallel.ordered_map(trial, range(trials)))
