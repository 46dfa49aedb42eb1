"""Variational objects: the energy I, the quotient J, the constraint and coercivity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotAdmissible, NumericFailure, PreconditionFailure
from .manifold import DiscreteManifold
from .sobolev import critical_exponent


@dataclass(eq=False)
class ProblemSpec:
    """One equation Delta u + h u = lambda f u^{q-1}; q defaults to the critical exponent."""

    manifold: DiscreteManifold
    h: np.ndarray
    f: np.ndarray
    q: float | None = None

    def __post_init__(self):
        M = self.manifold
        self.h = M.check(self.h, "h")
        self.f = M.check(self.f, "f")
        if self.q is None:
            self.q = critical_exponent(M.dim)
        self.q = float(self.q)

    @property
    def n(self) -> int:
        return self.manifold.dim

    @property
    def two_star(self) -> float:
        return critical_exponent(self.n)

    @property
    def sup_f(self) -> float:
        return float(np.max(self.f))

    def validate(self):
        if not self.sup_f > 0:
            raise PreconditionFailure(f"sup f must be positive, got {self.sup_f}")
        if not (2.0 < self.q <= self.two_star + 1e-12):
            raise PreconditionFailure(
                f"exponent q = {self.q} outside (2, 2*] = (2, {self.two_star}]"
            )

    def with_h(self, h) -> "ProblemSpec":
        return ProblemSpec(self.manifold, h, self.f, self.q)

    def with_q(self, q) -> "ProblemSpec":
        return ProblemSpec(self.manifold, self.h, self.f, q)


def energy_I(spec: ProblemSpec, u) -> float:
    """I(u) = int |grad u|^2 + int h u^2, the gradient term being <Delta u, u>."""
    M = spec.manifold
    u = M.check(u, "u")
    return M.dirichlet(u) + M.integrate(spec.h * u * u)


def constraint_value(spec: ProblemSpec, u) -> float:
    M = spec.manifold
    u = M.check(u, "u")
    return M.integrate(spec.f * np.abs(u) ** spec.q)


def quotient_J(spec: ProblemSpec, u) -> float:
    c = constraint_value(spec, u)
    if not c > 0:
        raise NotAdmissible(f"int f|u|^q = {c:.6g} is not positive")
    return energy_I(spec, u) / c ** (2.0 / spec.q)


def coercivity_margin(M: DiscreteManifold, h, tol: float = 1e-13, max_iter: int = 2000) -> float:
    """Smallest eigenvalue of Delta + h by shifted inverse power iteration.

    The shift sits below min h, hence below the whole spectrum, so the
    iteration converges to the bottom eigenvalue.  Positive means coercive.
    """
    h = M.check(h, "h")
    shift = float(np.min(h)) - 1.0
    solve = M.solver(h - shift)
    x = np.ones(M.size) + 0.1 * np.cos(np.arange(M.size))
    x /= M.norm(x)
    A = M.operator(h)
    prev = np.inf
    for _ in range(max_iter):
        y = solve(x)
        x = y / M.norm(y)
        rayleigh = float(x @ (A @ x))
        if abs(rayleigh - prev) <= tol * max(1.0, abs(rayleigh)):
            return rayleigh
        prev = rayleigh
    raise NumericFailure(f"inverse iteration did not converge in {max_iter} steps")
