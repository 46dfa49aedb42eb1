"""Criticality of h for f: classification, critical offsets, Aubin test functions, B0.

h is subcritical for f when lambda_{h,f} lies strictly below the threshold
1/(K^2 (sup f)^{(n-2)/n}) and weakly critical when it equals it.  Numerically
lambda is the best value the multistart flow reaches, an upper bound for the
infimum, so a value clearly below the threshold certifies subcriticality while
a value within tol_class of it is read as weak criticality.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    InvalidInput,
    NoCrossing,
    PreconditionFailure,
    UnsupportedDimension,
)
from .functional import ProblemSpec, coercivity_margin, quotient_J
from .manifold import DiscreteManifold
from .sobolev import best_sobolev_K2, critical_exponent, sphere_volume, threshold
from .solver import SolveResult, SolverConfig, minimize

log = logging.getLogger(__name__)

SUBCRITICAL = "subcritical"
WEAKLY_CRITICAL = "weakly_critical"
INDETERMINATE = "indeterminate"

# relative classification tolerance used when none is given
TOL_CLASS_REL = 2.5e-3
AUBIN_BOUND_SLACK = 1e-3


def default_classify_config() -> SolverConfig:
    return SolverConfig(init="multistart", n_starts=2, bubble_mu=0.02, max_iter=400)


@dataclass
class CriticalityReport:
    lam: float
    threshold: float
    margin: float
    classification: str
    prop1_gaps: list
    coercive: bool
    tol_class: float
    result: SolveResult | None = field(default=None, repr=False)

    @property
    def min_prop1_gap(self) -> float:
        return min((g for _, g in self.prop1_gaps), default=float("nan"))


def max_points(f, tol: float = 1e-9) -> np.ndarray:
    """All nodes where f is within tol of its maximum (plateaus included)."""
    f = np.asarray(f, dtype=float)
    return np.flatnonzero(f >= np.max(f) - tol)


def prop1_gap(M: DiscreteManifold, h, f) -> list:
    """Gap (4(n-1)/(n-2)) h(P) - S(P) + ((n-4)/2) Delta f(P)/f(P) at each max point P of f.

    A weakly critical h must have a nonnegative gap at every maximum point.
    In dimension 4 the Laplacian term has a zero coefficient and is dropped.
    """
    n = M.dim
    if n < 4:
        raise UnsupportedDimension(f"the maximum-point condition needs n >= 4, got {n}")
    h, f = M.check(h, "h"), M.check(f, "f")
    pts = max_points(f)
    if not f[pts[0]] > 0:
        raise InvalidInput(f"f must be positive at its maximum points, got {f[pts[0]]:g}")
    base = 4.0 * (n - 1) / (n - 2) * h[pts] - M.scalar_curvature[pts]
    if n > 4:
        lap = M.laplacian(f)
        base = base + (n - 4) / 2.0 * lap[pts] / f[pts]
    return [(int(p), float(g)) for p, g in zip(pts, base)]


def classify(
    spec: ProblemSpec,
    cfg: SolverConfig | None = None,
    tol_class: float | None = None,
) -> CriticalityReport:
    """Compare the minimal energy of (h, f) at the critical exponent with the threshold."""
    M = spec.manifold
    spec = spec.with_q(critical_exponent(M.dim))
    spec.validate()
    thr = threshold(M.dim, spec.sup_f)
    tol = TOL_CLASS_REL * thr if tol_class is None else float(tol_class)
    if not tol > 0:
        raise InvalidInput(f"tol_class must be positive, got {tol}")
    coercive = coercivity_margin(M, spec.h) > 0
    if not coercive:
        raise PreconditionFailure("Delta + h is not coercive")
    cfg = replace(cfg or default_classify_config(), check_coercivity=False)
    res = minimize(spec, cfg)
    lam = float(res.lam)
    margin = thr - lam
    if not np.isfinite(lam) or res.status == "stalled":
        label = INDETERMINATE
    elif margin > tol:
        label = SUBCRITICAL
    elif margin >= -tol:
        label = WEAKLY_CRITICAL
    else:
        # above the Aubin bound: the search did not reach the infimum
        label = INDETERMINATE
    if lam > thr * (1 + AUBIN_BOUND_SLACK):
        log.warning("lambda %.8g exceeds the threshold %.8g; search incomplete", lam, thr)
    gaps = prop1_gap(M, spec.h, spec.f) if M.dim >= 4 else []
    log.info("classify: lambda=%.10g threshold=%.10g -> %s", lam, thr, label)
    return CriticalityReport(lam, thr, margin, label, gaps, coercive, tol, res)


def find_critical_offset(
    spec: ProblemSpec,
    t_max: float,
    tol_t: float = 0.01,
    tol_class: float | None = None,
    cfg: SolverConfig | None = None,
    history: list | None = None,
) -> float:
    """Smallest t with h - t subcritical, by bisection; h itself must be weakly critical.

    Each probe appends (t, classification, lambda) to ``history`` when given.
    Returns the midpoint of the final bracket, which is at most tol_t wide.
    """
    if not t_max > 0 or not tol_t > 0:
        raise InvalidInput("t_max and tol_t must be positive")
    probes = history if history is not None else []

    def probe(t: float) -> str:
        rep = classify(spec.with_h(spec.h - t), cfg, tol_class)
        probes.append((float(t), rep.classification, rep.lam))
        if rep.classification == INDETERMINATE:
            raise PreconditionFailure(f"classification at t = {t:g} is indeterminate")
        return rep.classification

    if probe(0.0) != WEAKLY_CRITICAL:
        raise NoCrossing("h is already subcritical at t = 0")
    if probe(t_max) != SUBCRITICAL:
        raise NoCrossing(f"h - t_max is still weakly critical at t_max = {t_max:g}")
    lo, hi = 0.0, float(t_max)
    while hi - lo > tol_t:
        mid = 0.5 * (lo + hi)
        if probe(mid) == SUBCRITICAL:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def predicate_is_monotone(history) -> bool:
    """True when every subcritical probe lies above every weakly critical one."""
    sub = [t for t, c, _ in history if c == SUBCRITICAL]
    weak = [t for t, c, _ in history if c == WEAKLY_CRITICAL]
    return not sub or not weak or min(sub) > max(weak)


def aubin_test_function(M: DiscreteManifold, P: int, k: int, delta: float) -> np.ndarray:
    """psi_k = (1/k + r^2)^{-(n-2)/2} - (1/k + delta^2)^{-(n-2)/2} inside B(P, delta), 0 outside."""
    limit = math.pi if M.is_sphere else M.params["L"] / 2
    if not 0 < delta < limit:
        raise InvalidInput(f"delta must lie in (0, {limit:g}), got {delta}")
    if k < 1:
        raise InvalidInput(f"k must be >= 1, got {k}")
    e = -(M.dim - 2) / 2.0
    r = M.distances_from(P)
    psi = (1.0 / k + r * r) ** e - (1.0 / k + delta * delta) ** e
    return np.where(r < delta, psi, 0.0)


def _expansion_basis(k: np.ndarray, terms: int) -> np.ndarray:
    # J K^2 (sup f)^{(n-2)/n} - 1 = c1/k + (a log k + b)/k^2 + (c log k + d)/k^3 + ...
    L = np.log(k)
    cols = [1 / k, L / k**2, 1 / k**2, L / k**3, 1 / k**3]
    return np.array(cols[:terms]).T


@dataclass
class AubinSeries:
    k_list: list
    J_values: list
    y_values: list
    fitted_slope: float
    fit_residual: float
    delta: float
    expected_slope: float
    terms: int


def expected_aubin_slope(M: DiscreteManifold, h, f, P: int) -> float:
    n = M.dim
    h, f = M.check(h, "h"), M.check(f, "f")
    lap = M.laplacian(f)
    return (4.0 * (n - 1) / (n - 2) * h[P] - M.scalar_curvature[P] + (n - 4) / 2.0 * lap[P] / f[P]) / (n * (n - 4))


def aubin_slope(
    M: DiscreteManifold,
    h,
    f,
    P: int,
    k_list,
    delta: float = 0.5,
    terms: int = 5,
) -> AubinSeries:
    """Slope c1 of y_k = J(psi_k) K^2 (sup f)^{(n-2)/n} - 1 ~ c1/k.

    y_k is fitted by weighted least squares (weights k) against 1/k plus the
    next terms of the expansion, (log k)/k^2, 1/k^2, (log k)/k^3, 1/k^3, which
    are far from negligible at moderate k because of the cutoff at delta.
    ``terms`` keeps the first columns of that basis; it is capped at
    len(k_list) - 1 so that the fit keeps a residual.  fit_residual is the
    weighted rms of k (y_k - fit_k), in units of the slope.
    """
    n = M.dim
    if n <= 4:
        raise UnsupportedDimension(f"the 1/k expansion coefficient needs n >= 5, got {n}")
    h, f = M.check(h, "h"), M.check(f, "f")
    if P not in set(max_points(f).tolist()):
        raise PreconditionFailure(f"node {P} is not a maximum point of f")
    ks = [int(k) for k in k_list]
    if len(ks) < 2 or any(b <= a for a, b in zip(ks, ks[1:])):
        raise InvalidInput("k_list must hold at least two strictly increasing integers")
    spec = ProblemSpec(M, h, f)
    scale = best_sobolev_K2(n) * spec.sup_f ** ((n - 2) / n)
    J = np.array([quotient_J(spec, aubin_test_function(M, P, k, delta)) for k in ks])
    y = J * scale - 1.0
    k = np.array(ks, dtype=float)
    terms = max(1, min(int(terms), len(ks) - 1))
    A = _expansion_basis(k, terms)
    w = np.sqrt(k)
    coef = np.linalg.lstsq(A * w[:, None], y * w, rcond=None)[0]
    resid = k * (y - A @ coef)
    fit_residual = float(np.sqrt(np.sum(k * resid**2) / np.sum(k)))
    return AubinSeries(
        k_list=ks,
        J_values=J.tolist(),
        y_values=y.tolist(),
        fitted_slope=float(coef[0]),
        fit_residual=fit_residual,
        delta=float(delta),
        expected_slope=float(expected_aubin_slope(M, h, f, P)),
        terms=terms,
    )


def estimate_B0_sphere(
    M: DiscreteManifold,
    cfg: SolverConfig | None = None,
    tol_t: float | None = None,
    tol_class: float | None = None,
) -> float:
    """Second best constant B0 = K^2 c0, c0 the critical constant h for f = 1.

    The search starts from a constant that is weakly critical (found by
    stepping up from the value where the constant test function already
    reaches the threshold) and bisects down to a clearly subcritical one.
    """
    if not M.is_sphere:
        raise UnsupportedDimension("the B0 estimate is implemented for the round sphere only")
    n = M.dim
    ones = np.ones(M.size)
    thr = threshold(n, 1.0)
    h_star = thr / M.volume ** (2.0 / n)
    tol_t = 2e-3 * h_star if tol_t is None else tol_t
    h_hi = 1.25 * h_star
    for _ in range(8):
        rep = classify(ProblemSpec(M, h_hi * ones, ones), cfg, tol_class)
        if rep.classification == WEAKLY_CRITICAL:
            break
        h_hi *= 1.5
    else:
        raise NoCrossing("no weakly critical constant found")
    h_lo = 0.5 * h_star
    t0 = find_critical_offset(ProblemSpec(M, h_hi * ones, ones), h_hi - h_lo, tol_t, tol_class, cfg)
    return best_sobolev_K2(n) * (h_hi - t0)


def exact_B0_sphere(n: int) -> float:
    """omega_n^{-2/n}, the value on the unit sphere."""
    return sphere_volume(n) ** (-2.0 / n)
