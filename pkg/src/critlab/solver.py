"""Constrained minimization of J over H_f^+ by a normalized semi-implicit gradient flow.

One step of the flow solves

    (Id + tau (Delta + h_+)) v = u + tau (lambda(u) f u^{q-1} + h_- u)

with h = h_+ - h_-, takes |v| and rescales so that int f v^q = 1.  A step is
accepted only if it does not raise lambda = I(u); rejected steps halve tau,
accepted ones let it grow again.  Once the Euler residual is small a Newton
polish on the unnormalized equation Delta v + h v = f v^{q-1} finishes the job.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import spsolve

from .errors import NotAdmissible, PreconditionFailure
from .functional import ProblemSpec, coercivity_margin, constraint_value, energy_I
from .manifold import DiscreteManifold, build_radial_sphere

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    tau: float = 0.5
    max_iter: int = 3000
    tol_residual: float | None = None  # 1e-8 on the sphere, 1e-6 on the torus
    init: object = "constant"  # "constant" | "bubble" | "multistart" | ndarray
    bubble_center: int = 0
    bubble_mu: float = 0.05
    n_starts: int = 3
    rng_seed: int = 0
    tau_max: float = 1e4
    tau_growth: float = 2.0
    newton: bool = True
    polish_below: float = 1e-2
    mu_floor: float | None = None  # default: resolution radius of 30 nodes
    check_coercivity: bool = True

    def __post_init__(self):
        if not self.tau > 0:
            raise PreconditionFailure(f"step tau must be positive, got {self.tau}")
        if self.tol_residual is not None and not self.tol_residual > 0:
            raise PreconditionFailure("tol_residual must be positive")

    def tolerance(self, M: DiscreteManifold) -> float:
        if self.tol_residual is not None:
            return self.tol_residual
        return 1e-8 if M.is_sphere else 1e-6


@dataclass(eq=False)
class SolveResult:
    u: np.ndarray
    lam: float
    residual: float
    iters: int
    q: float
    converged: bool
    status: str = ""
    start: str = ""
    history: list = field(default_factory=list, repr=False)
    manifold: DiscreteManifold | None = field(default=None, repr=False)
    problem: ProblemSpec | None = field(default=None, repr=False)

    @property
    def sup_u(self) -> float:
        return float(np.max(self.u))

    @property
    def peak(self) -> int:
        # argmax returns the first maximal node: smallest radius on the sphere
        return int(np.argmax(self.u))


def euler_residual(spec: ProblemSpec, u, lam) -> np.ndarray:
    """Nodewise Delta u + h u - lambda f u^{q-1}."""
    M = spec.manifold
    u = M.check(u, "u")
    return M.laplacian(u) + spec.h * u - lam * spec.f * np.abs(u) ** (spec.q - 1)


def relative_residual(spec: ProblemSpec, u, lam) -> float:
    rhs = lam * spec.f * np.abs(u) ** (spec.q - 1)
    scale = float(np.max(np.abs(rhs)))
    r = float(np.max(np.abs(euler_residual(spec, u, lam))))
    if scale == 0.0:
        return 0.0 if r == 0.0 else math.inf
    return r / scale


def roundoff_floor(spec: ProblemSpec, u, lam) -> float:
    """Relative residual produced by rounding u to float64 alone.

    On clustered grids the pole cells make |Delta| ~ 1e10, so one ulp of u
    shows up as a residual well above 1e-8; below this floor the residual
    carries no information.
    """
    rhs = float(np.max(np.abs(lam * spec.f * np.abs(u) ** (spec.q - 1))))
    if rhs == 0.0:
        return 0.0
    eps = np.finfo(float).eps
    return eps * 0.5 * spec.manifold.laplacian_norm * float(np.max(np.abs(u))) / rhs


def concentration_scale(u, n: int) -> float:
    """mu = (sup u)^{-2/(n-2)}."""
    return float(np.max(u)) ** (-2.0 / (n - 2))


def normalize(spec: ProblemSpec, u) -> np.ndarray:
    c = constraint_value(spec, u)
    if not c > 0:
        raise NotAdmissible(f"int f|u|^q = {c:.6g}: the iterate left H_f^+")
    return np.abs(u) / c ** (1.0 / spec.q)


def bubble_seed(M: DiscreteManifold, center: int, mu: float) -> np.ndarray:
    n = M.dim
    d = M.distances_from(center)
    return (1.0 + d**2 / (2 * mu**2)) ** (-(n - 2) / 2)


def _local_maxima(M: DiscreteManifold, f: np.ndarray) -> list[int]:
    i, j, _ = M.edges
    is_max = np.ones(M.size, dtype=bool)
    is_max[i[f[i] < f[j]]] = False
    is_max[j[f[j] < f[i]]] = False
    top = float(np.max(f))
    cand = np.flatnonzero(is_max & (f > 0))
    # plateaus: one representative per plateau of the global max is enough
    best = [int(k) for k in cand if f[k] < top - 1e-9]
    return [int(np.argmax(f))] + best[:4]


def _newton_polish(spec: ProblemSpec, u, lam, tol, max_steps=40):
    """Newton on Delta v + h v = f v^{q-1} from v = lambda^{1/(q-2)} u; returns (u, lam) or None."""
    M, q = spec.manifold, spec.q
    W, h, f = M.weights, spec.h, spec.f
    K = M.stiffness
    v = u * lam ** (1.0 / (q - 2))

    def F(v):
        return M.stiffness_apply(v) + W * (h * v - f * v ** (q - 1))

    Fv = F(v)
    norm = float(np.max(np.abs(Fv / W)))
    for _ in range(max_steps):
        J = K + sp.diags(W * (h - (q - 1) * f * v ** (q - 2)))
        dv = spsolve(J.tocsc(), -Fv)
        alpha = 1.0
        while alpha > 1e-4:
            trial = v + alpha * dv
            if np.all(trial > 0):
                Ft = F(trial)
                nt = float(np.max(np.abs(Ft / W)))
                if nt < norm:
                    break
            alpha /= 2
        else:
            break
        v, Fv, norm = trial, Ft, nt
        un = normalize(spec, v)
        ln = energy_I(spec, un)
        if relative_residual(spec, un, ln) <= 0.1 * tol:
            break
    if not np.all(v > 0):
        return None
    un = normalize(spec, v)
    return un, energy_I(spec, un)


def _flow(spec: ProblemSpec, u0, cfg: SolverConfig, label: str) -> SolveResult:
    M, q, n = spec.manifold, spec.q, spec.n
    tol = cfg.tolerance(M)
    mu_floor = cfg.mu_floor if cfg.mu_floor is not None else M.resolution_radius(30)
    hp, hm = np.maximum(spec.h, 0.0), np.maximum(-spec.h, 0.0)
    f = spec.f

    u = normalize(spec, M.check(u0, "initial field"))
    lam = energy_I(spec, u)
    history = [lam]
    solvers = {}
    tau = cfg.tau
    res = relative_residual(spec, u, lam)
    next_polish = cfg.polish_below
    status, it = "max_iter", 0
    for it in range(1, cfg.max_iter + 1):
        if res <= tol:
            status = "converged"
            break
        if cfg.newton and res <= next_polish:
            polished = _newton_polish(spec, u, lam, tol)
            if polished is not None:
                up, lp = polished
                rp = relative_residual(spec, up, lp)
                if rp < res and lp <= lam * (1 + 1e-9) + 1e-300:
                    u, lam, res = up, lp, rp
                    history.append(lam)
            if res <= max(tol, roundoff_floor(spec, u, lam)):
                status = "converged" if res <= tol else "converged at roundoff floor"
                break
            next_polish = res / 10
        if tau not in solvers:
            solvers[tau] = M.solver(hp + 1.0 / tau)
        rhs = u / tau + lam * f * u ** (q - 1) + hm * u
        v = normalize(spec, solvers[tau](rhs))
        lam_v = energy_I(spec, v)
        if lam_v <= lam + 1e-12 * abs(lam):
            if concentration_scale(v, n) < mu_floor:
                status = "concentrated"
                break
            u, lam = v, lam_v
            history.append(lam)
            res = relative_residual(spec, u, lam)
            tau = min(tau * cfg.tau_growth, cfg.tau_max)
        else:
            tau /= 2
            if tau < 1e-10:
                status = "stalled"
                break
    else:
        if res <= tol:
            status = "converged"
    return SolveResult(
        u=u,
        lam=lam,
        residual=res,
        iters=it,
        q=q,
        converged=status.startswith("converged"),
        status=status,
        start=label,
        history=history,
        manifold=M,
        problem=spec,
    )


def _starts(spec: ProblemSpec, cfg: SolverConfig):
    M = spec.manifold
    init = cfg.init
    if isinstance(init, np.ndarray):
        return [("field", init)]
    if init == "constant":
        return [("constant", np.ones(M.size))]
    if init == "bubble":
        return [(f"bubble({cfg.bubble_center},{cfg.bubble_mu:g})", bubble_seed(M, cfg.bubble_center, cfg.bubble_mu))]
    if init == "multistart":
        seeds = [("constant", np.ones(M.size))]
        floor = cfg.mu_floor if cfg.mu_floor is not None else M.resolution_radius(30)
        mu = max(cfg.bubble_mu, 2 * floor)
        for c in _local_maxima(M, spec.f):
            seeds.append((f"bubble({c},{mu:g})", bubble_seed(M, c, mu)))
        rng = np.random.default_rng(cfg.rng_seed)
        while len(seeds) < cfg.n_starts:
            c = int(rng.integers(M.size))
            seeds.append((f"bubble({c},{mu:g})", bubble_seed(M, c, mu)))
        return seeds
    raise PreconditionFailure(f"unknown init {init!r}")


def _rank(res: SolveResult):
    peak_r = float(res.manifold.distances_from(0)[res.peak])
    return (res.lam, peak_r)


def minimize(spec: ProblemSpec, cfg: SolverConfig | None = None) -> SolveResult:
    """Minimize J_{h,f} with exponent q; returns the best iterate over all starts."""
    cfg = cfg or SolverConfig()
    spec.validate()
    if cfg.check_coercivity:
        margin = coercivity_margin(spec.manifold, spec.h)
        if margin <= 0:
            raise PreconditionFailure(f"Delta + h is not coercive (bottom eigenvalue {margin:.6g})")
    results = []
    for label, u0 in _starts(spec, cfg):
        try:
            results.append(_flow(spec, u0, cfg, label))
        except NotAdmissible:
            if len(_starts(spec, cfg)) == 1:
                raise
            log.info("start %s is not admissible, skipped", label)
    if not results:
        raise NotAdmissible("no start is admissible")
    best = results[0]
    for r in results[1:]:
        if r.lam < best.lam * (1 - 1e-12) or (
            abs(r.lam - best.lam) <= 1e-12 * abs(best.lam) and _rank(r) < _rank(best)
        ):
            best = r
    log.info("minimize q=%.6g: lambda=%.12g residual=%.3g (%s, %s)", spec.q, best.lam, best.residual, best.start, best.status)
    return best


def _resample(M_old: DiscreteManifold, M_new: DiscreteManifold, u: np.ndarray) -> np.ndarray:
    return CubicSpline(M_old.nodes, u, bc_type="clamped")(M_new.nodes)


def continuation_in_q(
    spec: ProblemSpec,
    q_list,
    cfg: SolverConfig | None = None,
    refine_trigger: float | None = None,
    max_clustering: float = 4.0,
) -> list[SolveResult]:
    """Solve along ascending exponents, warm-starting each solve from the previous minimizer.

    On the sphere, when sup u exceeds ``refine_trigger`` the grid is rebuilt
    with the clustering exponent raised by one (up to ``max_clustering``) and
    u, h, f are carried over by cubic interpolation.
    """
    cfg = cfg or SolverConfig()
    q_list = [float(q) for q in q_list]
    if not q_list:
        raise PreconditionFailure("empty exponent list")
    if any(b <= a for a, b in zip(q_list, q_list[1:])):
        raise PreconditionFailure(f"exponent list must be strictly ascending: {q_list}")
    current = spec
    warm = cfg.init
    out = []
    for q in q_list:
        step_cfg = SolverConfig(**{**cfg.__dict__, "init": warm})
        res = minimize(current.with_q(q), step_cfg)
        out.append(res)
        warm = res.u
        M = current.manifold
        if (
            refine_trigger is not None
            and M.is_sphere
            and res.sup_u > refine_trigger
            and M.params["clustering"] < max_clustering
        ):
            M2 = build_radial_sphere(M.dim, M.params["N"], M.params["clustering"] + 1)
            current = ProblemSpec(
                M2, _resample(M, M2, current.h), _resample(M, M2, current.f), current.q
            )
            warm = np.maximum(_resample(M, M2, res.u), 0.0)
            refine_trigger *= 4
            log.info("re-clustered grid to exponent %g", M2.params["clustering"])
    return out
