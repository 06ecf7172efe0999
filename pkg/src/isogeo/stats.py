"""Scalar Monte Carlo estimates and streaming moment accumulation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EstimateWithError:
    """A Monte Carlo mean bundled with its standard error and sample count."""

    value: float
    std_error: float
    samples: int

    @classmethod
    def from_values(cls, values) -> "EstimateWithError":
        values = np.asarray(values, dtype=float).ravel()
        return Moments.of(values).estimate()

    def combined_se(self, other: "EstimateWithError") -> float:
        return math.hypot(self.std_error, other.std_error)

    def agrees_with(self, other, k: float = 3.0) -> bool:
        """True when the two estimates differ by at most ``k`` combined SE.

        ``other`` may be a plain float (treated as exact).
        """
        if isinstance(other, EstimateWithError):
            return abs(self.value - other.value) <= k * self.combined_se(other)
        return abs(self.value - float(other)) <= k * self.std_error


@dataclass
class Moments:
    """Running count/mean/M2 (Chan's parallel merge), column-wise."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, values) -> "Moments":
        """Moments along axis 0 (rows are samples)."""
        values = np.asarray(values, dtype=float)
        count = values.shape[0]
        if count == 0:
            return cls(0, np.zeros(values.shape[1:]), np.zeros(values.shape[1:]))
        mean = values.mean(axis=0)
        dev = values - mean
        return cls(count, mean, (dev * dev).sum(axis=0))

    def merge(self, other: "Moments") -> "Moments":
        if self.count == 0:
            return other
        if other.count == 0:
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.count * other.count / n)
        return Moments(n, mean, m2)

    @classmethod
    def reduce(cls, parts) -> "Moments":
        parts = list(parts)
        total = parts[0]
        for part in parts[1:]:
            total = total.merge(part)
        return total

    @property
    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.full_like(np.asarray(self.mean, dtype=float), np.nan)
        return self.m2 / (self.count - 1)

    @property
    def std_error(self) -> np.ndarray:
        return np.sqrt(self.variance / self.count)

    def estimate(self) -> EstimateWithError:
        return EstimateWithError(float(self.mean), float(self.std_error), int(self.count))
