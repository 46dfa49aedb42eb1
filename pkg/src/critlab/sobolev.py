"""Closed-form sharp constants of the critical Sobolev embedding."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidInput, UnsupportedDimension


def sphere_volume(n: int) -> float:
    """Volume of the unit n-sphere, 2 pi^{(n+1)/2} / Gamma((n+1)/2)."""
    if n < 1:
        raise InvalidInput(f"sphere dimension must be >= 1, got {n}")
    return 2.0 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2)


def critical_exponent(n: int) -> float:
    if n < 3:
        raise UnsupportedDimension(f"the critical exponent needs n >= 3, got {n}")
    return 2.0 * n / (n - 2)


def best_sobolev_K2(n: int) -> float:
    """K(n,2)^2 = 4 / (n (n-2) omega_n^{2/n})."""
    if n < 3:
        raise UnsupportedDimension(f"K(n,2) needs n >= 3, got {n}")
    return 4.0 / (n * (n - 2) * sphere_volume(n) ** (2.0 / n))


def threshold(n: int, sup_f: float) -> float:
    """Upper bound 1 / (K^2 (sup f)^{(n-2)/n}) that lambda can never exceed."""
    if not sup_f > 0:
        raise InvalidInput(f"sup f must be positive, got {sup_f}")
    return 1.0 / (best_sobolev_K2(n) * sup_f ** ((n - 2) / n))


def conformal_constant(n: int) -> float:
    """(n-2)/(4(n-1)) * n(n-1) = n(n-2)/4: the conformal Laplacian constant of the unit sphere."""
    return n * (n - 2) / 4.0


@dataclass(frozen=True)
class SharpConstants:
    n: int
    omega_n: float
    K2: float
    two_star: float

    @classmethod
    def for_dim(cls, n: int) -> "SharpConstants":
        return cls(n, sphere_volume(n), best_sobolev_K2(n), critical_exponent(n))

    def threshold(self, sup_f: float = 1.0) -> float:
        return threshold(self.n, sup_f)
