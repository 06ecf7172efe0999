"""Catalog of volume-one, centered convex bodies with exact geometry data.

Every body is stored in "body units": the homothety ``scale`` is already
applied so the body has volume exactly 1 and its barycenter at the origin.
The isotropic constant ``lk`` is the common standard deviation of all
one-dimensional marginals of the uniform distribution on the body.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import helmert
from scipy.special import gammaln

from .errors import ConfigurationError, UsageError

KINDS = ("cube", "ball", "cross_polytope", "simplex", "lp_ball")

# relative slack on boundary tests; boundary membership is inclusive
_BOUNDARY_TOL = 1e-12


def log_ball_volume(n: int) -> float:
    """``log |B_2^n|`` via log-Gamma (overflow free for large n)."""
    return 0.5 * n * math.log(math.pi) - float(gammaln(0.5 * n + 1.0))


def _log_lp_volume(n: int, p: float) -> float:
    return n * (math.log(2.0) + float(gammaln(1.0 + 1.0 / p))) - float(gammaln(1.0 + n / p))


def _lp_unit_second_moment(n: int, p: float) -> float:
    # E X_1^2 for X uniform on the unit l_p ball; from the gamma representation
    # X = Y / (sum |Y_i|^p + W)^(1/p) with S = sum |Y_i|^p + W ~ Gamma(n/p + 1)
    # independent of X.
    return math.exp(
        gammaln(3.0 / p) + gammaln(1.0 + n / p) - gammaln(1.0 / p) - gammaln(1.0 + (n + 2.0) / p)
    )


@dataclass(frozen=True)
class Body:
    kind: str
    dim: int
    scale: float
    lk: float
    circumradius: float
    p: float | None = None

    @property
    def symmetric(self) -> bool:
        return self.kind != "simplex"

    @cached_property
    def _helmert(self) -> np.ndarray:
        # n x (n+1), orthonormal rows orthogonal to the all-ones vector
        return helmert(self.dim + 1)

    @property
    def simplex_vertices(self) -> np.ndarray:
        if self.kind != "simplex":
            raise UsageError("simplex_vertices only defined for the simplex")
        return self.scale * self._helmert.T

    def contains(self, x) -> np.ndarray:
        """Vectorized membership for an ``(m, n)`` array (or a single point)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise UsageError(f"point has dimension {x.shape[-1]}, body has {self.dim}")
        if self.kind == "cube":
            return np.max(np.abs(x), axis=-1) <= 0.5 * (1.0 + _BOUNDARY_TOL)
        if self.kind == "ball":
            return np.sqrt(np.sum(x * x, axis=-1)) <= self.scale * (1.0 + _BOUNDARY_TOL)
        if self.kind in ("cross_polytope", "lp_ball"):
            p = self.p
            return np.sum(np.abs(x / self.scale) ** p, axis=-1) <= 1.0 + _BOUNDARY_TOL
        lam = (x / self.scale) @ self._helmert + 1.0 / (self.dim + 1)
        return np.min(lam, axis=-1) >= -_BOUNDARY_TOL

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.dim
        if self.kind == "cube":
            half = np.full(n, 0.5)
        elif self.kind == "simplex":
            v = self.simplex_vertices
            return v.min(axis=0), v.max(axis=0)
        else:
            half = np.full(n, self.scale)
        return -half, half

    def volume(self) -> float:
        """Closed-form volume of the stored (scaled) body; 1 up to rounding."""
        n = self.dim
        if self.kind == "cube":
            return 1.0
        if self.kind == "ball":
            log_unit = log_ball_volume(n)
        elif self.kind == "simplex":
            log_unit = 0.5 * math.log(n + 1) - float(gammaln(n + 1))
        else:
            log_unit = _log_lp_volume(n, self.p)
        return math.exp(log_unit + n * math.log(self.scale))

    def descriptor(self) -> str:
        """Plain-text key-value form used in run manifests."""
        p = "" if self.p is None else repr(float(self.p))
        lines = [
            f"kind={self.kind}",
            f"n={self.dim}",
            f"p={p}",
            f"scale={self.scale!r}",
            f"lk={self.lk!r}",
            f"circumradius={self.circumradius!r}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_descriptor(cls, text: str) -> "Body":
        fields = dict(line.split("=", 1) for line in text.strip().splitlines() if "=" in line)
        p = float(fields["p"]) if fields.get("p") else None
        return make_body(fields["kind"], int(fields["n"]), p)


def make_body(kind: str, n: int, p: float | None = None) -> Body:
    """Build a catalog body of volume 1 centered at its barycenter.

    ``cross_polytope`` is the ``lp_ball`` with ``p = 1``; ``lp_ball`` needs
    ``p >= 1``.
    """
    if kind not in KINDS:
        raise ConfigurationError(f"unknown body kind {kind!r}; choose from {', '.join(KINDS)}")
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ConfigurationError(f"dimension must be an integer >= 2, got {n!r}")
    n = int(n)

    if kind == "cube":
        return Body("cube", n, 1.0, 1.0 / math.sqrt(12.0), 0.5 * math.sqrt(n))

    if kind == "ball":
        r = math.exp(-log_ball_volume(n) / n)
        return Body("ball", n, r, r / math.sqrt(n + 2.0), r)

    if kind == "simplex":
        log_unit = 0.5 * math.log(n + 1) - float(gammaln(n + 1))
        scale = math.exp(-log_unit / n)
        lk = scale / math.sqrt((n + 1.0) * (n + 2.0))
        return Body("simplex", n, scale, lk, scale * math.sqrt(n / (n + 1.0)))

    if kind == "cross_polytope":
        if p not in (None, 1, 1.0):
            raise ConfigurationError("cross_polytope is the l_1 ball; p must be omitted or 1")
        p = 1.0
    else:
        if p is None:
            raise ConfigurationError("lp_ball requires p")
        p = float(p)
        if not math.isfinite(p) or p < 1.0:
            raise ConfigurationError(f"lp_ball requires finite p >= 1, got {p!r}")

    scale = math.exp(-_log_lp_volume(n, p) / n)
    lk = scale * math.sqrt(_lp_unit_second_moment(n, p))
    # farthest points: vertices e_i for p <= 2, the diagonal for p >= 2
    radius = scale * max(1.0, n ** (0.5 - 1.0 / p))
    return Body(kind, n, scale, lk, radius, p)


def membership(body: Body, x) -> bool:
    x = np.asarray(x, dtype=float)
    if x.shape != (body.dim,):
        raise UsageError(f"expected a point of shape ({body.dim},), got {x.shape}")
    return bool(body.contains(x))


def is_small_diameter(body: Body, cap: float) -> bool:
    """``R(K) <= cap * sqrt(n) * L_K``."""
    if cap <= 0:
        raise UsageError("cap must be positive")
    return body.circumradius <= cap * math.sqrt(body.dim) * body.lk * (1.0 + 1e-12)
