"""Conformal change of metric g' = u^{4/(n-2)} g through integral weights.

The new metric is never built.  Its volume form is u^{2*} dv and the energy
of w for g' equals the energy of u w for g, which in terms of w reads

    int u^2 |grad w|^2 + int (u Delta u + h u^2) w^2.

The discrete Dirichlet part is <Delta w, u^2 w> - 1/2 <Delta(u^2), w^2>, the
integration by parts of u^2 |grad w|^2 written with the graph Laplacian.  It
agrees with the energy of u w up to a face term of second order in the mesh
size and exactly when u is constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, NotAdmissible
from .functional import ProblemSpec, quotient_J
from .manifold import DiscreteManifold, build_radial_sphere
from .sobolev import critical_exponent


@dataclass
class ConformalFactor:
    """A positive field u defining g' = u^{4/(n-2)} g."""

    u: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if not np.all(np.isfinite(self.u)):
            raise InvalidInput("conformal factor must be finite")
        if not np.min(self.u) > 0:
            raise InvalidInput(f"conformal factor must be positive, min u = {np.min(self.u):.6g}")

    def volume_weight(self, n: int) -> np.ndarray:
        return self.u ** critical_exponent(n)

    def energy_weight(self) -> np.ndarray:
        return self.u**2


def _factor(M: DiscreteManifold, factor) -> np.ndarray:
    if not isinstance(factor, ConformalFactor):
        factor = ConformalFactor(M.check(factor, "u"))
    return M.check(factor.u, "u")


def conformal_h(M: DiscreteManifold, h, factor) -> np.ndarray:
    """h' = (Delta u + h u) / u^{(n+2)/(n-2)}."""
    u = _factor(M, factor)
    h = M.check(h, "h")
    n = M.dim
    return (M.laplacian(u) + h * u) / u ** ((n + 2) / (n - 2))


def F_transform(M: DiscreteManifold, h_prime, u) -> np.ndarray:
    """F_{h'}(u) = h' u^{4/(n-2)} - Delta u / u, the inverse of conformal_h."""
    u = _factor(M, u)
    h_prime = M.check(h_prime, "h'")
    n = M.dim
    return h_prime * u ** (4.0 / (n - 2)) - M.laplacian(u) / u


def transformed_energy(M: DiscreteManifold, h, factor, w) -> float:
    """Energy of w for (g', h') from g-quantities: the numerator of J'."""
    u = _factor(M, factor)
    h, w = M.check(h, "h"), M.check(w, "w")
    u2 = u * u
    dirichlet = M.dirichlet(w, u2 * w) - 0.5 * M.dirichlet(u2, w * w)
    zero_order = M.integrate((M.laplacian(u) + h * u) * u * w * w)
    return dirichlet + zero_order


def transformed_J(M: DiscreteManifold, h, f, factor, w) -> float:
    """J_{h',f,g'}(w) with g' entering only through the weights u^2 and u^{2*}."""
    u = _factor(M, factor)
    f, w = M.check(f, "f"), M.check(w, "w")
    q = critical_exponent(M.dim)
    denom = M.integrate(f * np.abs(w) ** q * u**q)
    if not denom > 0:
        raise NotAdmissible(f"int f |w|^2* dv' = {denom:.6g} is not positive")
    return transformed_energy(M, h, u, w) / denom ** (2.0 / q)


def covariance_residual(M: DiscreteManifold, h, f, factor, w) -> float:
    """|J'(w) - J_{h,f,g}(u w)|; zero in the continuum."""
    u = _factor(M, factor)
    spec = ProblemSpec(M, h, f)
    return abs(transformed_J(M, h, f, u, w) - quotient_J(spec, u * M.check(w, "w")))


def refinement_ladder(
    N_list=(512, 1024, 2048, 4096),
    n: int = 3,
    h: float = 0.75,
    u_coef: float = 0.3,
    w_coef: float = 0.2,
) -> list:
    """(N, residual) for u = 1 + u_coef cos r, w = 1 + w_coef cos 2r, f = 1 on uniform spheres."""
    out = []
    for N in N_list:
        M = build_radial_sphere(n, int(N), 1.0)
        r = M.nodes
        u = 1.0 + u_coef * np.cos(r)
        w = 1.0 + w_coef * np.cos(2.0 * r)
        out.append((int(N), covariance_residual(M, h, 1.0, u, w)))
    return out
