"""Concentration diagnostics for families of solutions u_t that blow up.

Every quantity is a plain quadrature or an argmax over nodes; nothing here
solves an equation.  The exact extremal family on the round sphere,
a (b - cos r)^{-(n-2)/2}, is available as a synthetic trace so that every
diagnostic can be exercised without running the solver.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InvalidInput, ResolutionError
from .functional import ProblemSpec, energy_I
from .manifold import DiscreteManifold
from .sobolev import conformal_constant, critical_exponent, sphere_volume
from .solver import SolveResult, concentration_scale

TRACE_COLUMNS = (
    "param",
    "sup_u",
    "mu",
    "peak_r",
    "mass_in_ball",
    "l2_ratio",
    "weak_sup",
    "strong_sup",
    "bubble_err",
    "speed_ratio",
)


@dataclass
class ConcentrationSample:
    param: float
    sup_u: float
    mu: float
    peak: int
    peak_r: float
    mass_in_ball: float
    l2_ratio: float
    weak_sup: float
    strong_sup: float
    bubble_err: float
    speed_ratio: float
    outer_sup: float
    total_mass: float

    def row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in TRACE_COLUMNS}


@dataclass
class ConcentrationTrace:
    samples: list
    x0: int
    delta: float
    R: float
    nu: float = 0.1

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples])

    def write_csv(self, path) -> None:
        write_trace_csv(path, self.samples)


def _spacing_at(M: DiscreteManifold, node: int) -> float:
    if not M.is_sphere:
        return M.params["L"] / M.params["m"]
    r = M.nodes
    lo = r[node] - r[node - 1] if node > 0 else 0.0
    hi = r[node + 1] - r[node] if node + 1 < M.size else 0.0
    return max(lo, hi)


def standard_bubble(M: DiscreteManifold, center: int, mu: float, lam: float, f0: float) -> np.ndarray:
    """mu^{-(n-2)/2} (1 + lam f0 d^2 / (n(n-2) mu^2))^{-(n-2)/2}."""
    if not mu > 0:
        raise InvalidInput(f"mu must be positive, got {mu}")
    if not lam * f0 > 0:
        raise InvalidInput(f"lambda * f0 must be positive, got {lam * f0}")
    n = M.dim
    d = M.distances_from(center)
    return mu ** (-(n - 2) / 2) * (1 + lam * f0 * d**2 / (n * (n - 2) * mu**2)) ** (-(n - 2) / 2)


def bubble_fit_error(M: DiscreteManifold, u, B, center: int, window_radius: float) -> float:
    """sup of |u - B| / B over the geodesic ball of radius window_radius about center."""
    u, B = M.check(u, "u"), M.check(B, "bubble")
    inside = M.distances_from(center) <= window_radius
    if not inside.any():
        raise ResolutionError(f"no node within {window_radius:g} of node {center}")
    return float(np.max(np.abs(u[inside] - B[inside]) / B[inside]))


def blow_up_rescale(M: DiscreteManifold, u, peak: int, mu: float, R: float, m: int = 201):
    """Rescaled profile x -> mu^{(n-2)/2} u(point at distance mu x from the peak) on [0, R].

    Returns (x, profile).  On the sphere the ray runs outward along the
    meridian; on the torus along the first axis.
    """
    u = M.check(u, "u")
    n = M.dim
    x = np.linspace(0.0, R, m)
    if M.is_sphere:
        r0 = M.nodes[peak]
        if r0 + R * mu > math.pi:
            raise ResolutionError(f"window R mu = {R * mu:g} leaves the sphere")
        spline = CubicSpline(M.nodes, u)
        vals = spline(r0 + mu * x)
    else:
        L = M.params["L"]
        if R * mu > L / 2:
            raise ResolutionError(f"window R mu = {R * mu:g} exceeds half the torus side")
        others = np.all(np.delete(M.nodes - M.nodes[peak], 0, axis=1) == 0, axis=1)
        line = np.flatnonzero(others)
        t = (M.nodes[line, 0] - M.nodes[peak, 0]) % L
        order = np.argsort(t)
        t, vals_line = np.append(t[order], L), np.append(u[line][order], u[line][order][0])
        spline = CubicSpline(t, vals_line, bc_type="periodic")
        vals = spline((mu * x) % L)
    return x, mu ** ((n - 2) / 2) * vals


def analyze(
    result: SolveResult,
    x0: int,
    delta: float,
    R: float = 5.0,
    nu: float = 0.1,
    f=None,
    param: float | None = None,
) -> ConcentrationSample:
    """All concentration diagnostics for one solution.

    ``f`` defaults to the right-hand side stored with the result; the bubble
    comparison uses lambda from the result and f0 = f(x0) in a window of
    radius R mu about the peak.
    """
    M = result.manifold
    n = M.dim
    u = M.check(result.u, "u")
    if np.min(u) < 0:
        raise InvalidInput("concentration diagnostics need u >= 0")
    if f is None:
        f = result.problem.f if result.problem is not None else np.ones(M.size)
    f = M.check(f, "f")
    if delta <= _spacing_at(M, x0):
        raise ResolutionError(f"ball radius {delta:g} is below the grid spacing at node {x0}")
    if not 0 < nu < n - 2:
        raise InvalidInput(f"nu must lie in (0, {n - 2}), got {nu}")
    two_star = critical_exponent(n)
    W = M.weights
    ball = M.ball_weights(x0, delta)
    sup_u = float(np.max(u))
    mu = concentration_scale(u, n)
    peak = int(np.argmax(u))
    d_peak = M.distances_from(peak)
    fu = f * u**two_star
    mass = float(np.sum(W * ball * fu))
    l2_total = float(np.sum(W * u * u))
    l2_ratio = float(np.sum(W * ball * u * u)) / l2_total if l2_total > 0 else 0.0
    weak = float(np.max(d_peak ** ((n - 2) / 2) * u))
    strong = float(np.max(d_peak ** (n - 2 - nu) * mu ** (-(n - 2) / 2 + nu) * u))
    f0 = float(f[x0])
    window = min(R * mu, math.pi if M.is_sphere else M.params["L"] / 2)
    B = standard_bubble(M, peak, mu, result.lam, f0)
    err = bubble_fit_error(M, u, B, peak, window)
    outside = M.distances_from(x0) > delta
    return ConcentrationSample(
        param=float(result.q if param is None else param),
        sup_u=sup_u,
        mu=mu,
        peak=peak,
        peak_r=float(M.distances_from(0)[peak]),
        mass_in_ball=mass,
        l2_ratio=l2_ratio,
        weak_sup=weak,
        strong_sup=strong,
        bubble_err=err,
        speed_ratio=float(d_peak[x0]) / mu,
        outer_sup=float(np.max(u[outside])) if outside.any() else 0.0,
        total_mass=float(np.sum(W * fu)),
    )


def trace(results, x0: int, delta: float, R: float = 5.0, nu: float = 0.1, params=None) -> ConcentrationTrace:
    params = params if params is not None else [r.q for r in results]
    samples = [analyze(r, x0, delta, R, nu, param=p) for r, p in zip(results, params)]
    order = np.argsort([s.param for s in samples], kind="stable")
    return ConcentrationTrace([samples[i] for i in order], x0, delta, R, nu)


@dataclass
class SyntheticFamily:
    """Normalized exact extremals u = a (b - cos r)^{-(n-2)/2} on the round sphere.

    Each member solves Delta u + n(n-2)/4 u = lambda u^{2*-1} with
    lambda = 1/K(n,2)^2 and int u^{2*} = 1.  ``mu`` is the measured
    concentration scale (sup u)^{-2/(n-2)}; ``x0`` the node standing for the
    concentration point, at geodesic distance ``offset`` from the peak.
    """

    manifold: DiscreteManifold
    mu: list
    offsets: list
    fields: list
    x0: list
    a: list
    b: list
    results: list = field(default_factory=list, repr=False)


def synthetic_family(
    M: DiscreteManifold, mu_list, offsets=None, normalized: bool = True, min_nodes: int = 10
) -> SyntheticFamily:
    """Exact sphere extremals with prescribed scale mu and peak-to-x0 offsets.

    By radial symmetry the peak sits at the pole and x0 is moved instead:
    x0 is the node at radius closest to the offset.  b is chosen in closed
    form from int (b - cos r)^{-n} dv = omega_n (b^2 - 1)^{-n/2} so that the
    normalized member has sup u = mu^{-(n-2)/2}; a is then recomputed by
    quadrature so that the discrete constraint is exactly 1.

    With ``normalized=False`` the members are the raw extremals
    mu^{(n-2)/2} (mu^2 + 1 - cos r)^{-(n-2)/2}: sup u is exactly
    mu^{-(n-2)/2} but int u^{2*} differs from 1, and their Euler multiplier is
    n(n-2)(2 + mu^2)/4 instead of 1/K(n,2)^2.
    """
    if not M.is_sphere:
        raise InvalidInput("the synthetic extremal family lives on the radial sphere")
    n = M.dim
    r = M.nodes
    mu_list = [float(m) for m in mu_list]
    offsets = [0.0] * len(mu_list) if offsets is None else [float(o) for o in offsets]
    if len(offsets) != len(mu_list):
        raise InvalidInput("offsets and mu_list differ in length")
    two_star = critical_exponent(n)
    h = conformal_constant(n)
    omega = sphere_volume(n)
    fam = SyntheticFamily(M, mu_list, offsets, [], [], [], [])
    ones = np.ones(M.size)
    for mu, off in zip(mu_list, offsets):
        if not mu > 0:
            raise InvalidInput(f"mu must be positive, got {mu}")
        if np.count_nonzero(r < mu) < min_nodes:
            raise ResolutionError(f"fewer than {min_nodes} nodes inside radius mu = {mu:g}")
        if not 0 <= off <= math.pi:
            raise InvalidInput(f"offset {off} is not a distance on the unit sphere")
        if normalized:
            Q = omega ** (2.0 / n) / mu**2
            if Q <= 1:
                raise InvalidInput(f"mu = {mu:g} is too large for a concentrating extremal")
            b = (Q + 1) / (Q - 1)
            v = (b - np.cos(r)) ** (-(n - 2) / 2)
            a = float(M.integrate(v**two_star)) ** (-1.0 / two_star)
        else:
            b = 1 + mu**2
            v = (b - np.cos(r)) ** (-(n - 2) / 2)
            a = mu ** ((n - 2) / 2)
        u = a * v
        x0 = int(np.argmin(np.abs(r - off)))
        spec = ProblemSpec(M, h * ones, ones)
        lam = energy_I(spec, u) / M.integrate(u**two_star)
        res = SolveResult(
            u=u, lam=lam, residual=float("nan"), iters=0, q=two_star,
            converged=True, status="exact", start="synthetic", manifold=M, problem=spec,
        )
        fam.fields.append(u)
        fam.x0.append(x0)
        fam.a.append(a)
        fam.b.append(b)
        fam.results.append(res)
    return fam


def synthetic_trace(fam: SyntheticFamily, delta: float, R: float = 5.0, nu: float = 0.1) -> ConcentrationTrace:
    """Trace of a synthetic family, parametrized by mu (descending mu = ascending concentration)."""
    samples = [
        analyze(res, x0, delta, R, nu, param=mu)
        for res, x0, mu in zip(fam.results, fam.x0, fam.mu)
    ]
    return ConcentrationTrace(samples, fam.x0[0], delta, R, nu)


def write_trace_csv(path, samples) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for s in samples:
            row = s.row()
            w.writerow([f"{row[c]:.12g}" if isinstance(row[c], float) else row[c] for c in TRACE_COLUMNS])
