"""Discrete model manifolds: the radial round sphere S^n and the flat torus T^n.

Both carry a lumped quadrature (node weights W) and a graph of edges (i, j)
with conductances a_ij.  The stiffness matrix K built from the edges is
symmetric positive semidefinite and the Laplacian is Delta = W^{-1} K with the
geometer's sign convention Delta = -div grad.  Laplacian and Dirichlet form
are evaluated edge by edge (differences first) so that fine clustered grids
do not lose the residual to cancellation.  Fields are plain 1-D numpy
arrays indexed by node.

Node ordering: radius-ascending on the sphere (node 0 is the pole, the last
node its antipode); row-major on the torus.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized
from scipy.special import betainc

from .errors import InvalidConfiguration, ManifoldMismatch, ResourceLimit
from .sobolev import sphere_volume

TORUS_NODE_CAP = 2_000_000
CLUSTER_FLOOR = 0.03

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True, eq=False)
class DiscreteManifold:
    kind: str
    dim: int
    nodes: np.ndarray
    weights: np.ndarray
    edges: tuple
    scalar_curvature: np.ndarray
    volume: float
    params: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def is_sphere(self) -> bool:
        return self.kind == "sphere"

    @property
    def radii(self) -> np.ndarray:
        """Geodesic radius from the pole (sphere only)."""
        if not self.is_sphere:
            raise InvalidConfiguration("radii are only defined on the radial sphere")
        return self.nodes

    def check(self, u, name="field") -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.ndim == 0:
            return np.full(self.size, float(u))
        if u.shape != (self.size,):
            raise ManifoldMismatch(
                f"{name} has shape {u.shape}, manifold has {self.size} nodes"
            )
        if not np.all(np.isfinite(u)):
            raise ManifoldMismatch(f"{name} has non-finite values")
        return u

    @cached_property
    def stiffness(self) -> sp.csc_matrix:
        i, j, a = self.edges
        N = self.size
        off = sp.coo_matrix((-a, (i, j)), shape=(N, N))
        diag = np.bincount(i, a, N) + np.bincount(j, a, N)
        return (off + off.T + sp.diags(diag)).tocsc()

    def stiffness_apply(self, u) -> np.ndarray:
        i, j, a = self.edges
        flux = a * (u[j] - u[i])
        return np.bincount(j, flux, self.size) - np.bincount(i, flux, self.size)

    def laplacian(self, u) -> np.ndarray:
        u = self.check(u)
        return self.stiffness_apply(u) / self.weights

    def dirichlet(self, u, v=None) -> float:
        """Discrete Dirichlet form <Delta u, v>; this *is* the energy integral of |grad u|^2."""
        u = self.check(u)
        i, j, a = self.edges
        du = u[j] - u[i]
        dv = du if v is None else (lambda w: w[j] - w[i])(self.check(v))
        return float(np.sum(a * du * dv))

    def integrate(self, phi) -> float:
        return float(self.weights @ self.check(phi))

    def inner(self, u, v) -> float:
        return float(self.weights @ (self.check(u) * self.check(v)))

    def norm(self, u) -> float:
        return math.sqrt(self.inner(u, u))

    @cached_property
    def laplacian_norm(self) -> float:
        """Gershgorin bound on the operator norm of Delta: twice its largest diagonal entry."""
        i, j, a = self.edges
        diag = np.bincount(i, a, self.size) + np.bincount(j, a, self.size)
        return float(2 * np.max(diag / self.weights))

    def operator(self, potential) -> sp.csc_matrix:
        """Matrix of the weighted form of Delta + potential, i.e. K + W diag(potential)."""
        d = self.check(potential, "potential")
        return (self.stiffness + sp.diags(self.weights * d)).tocsc()

    def solver(self, potential):
        """Return a function rhs -> x solving (Delta + potential) x = rhs."""
        solve = factorized(self.operator(potential))
        w = self.weights
        return lambda rhs: solve(w * self.check(rhs, "rhs"))

    def distances_from(self, node: int) -> np.ndarray:
        if self.is_sphere:
            return np.abs(self.nodes - self.nodes[node])
        L = self.params["L"]
        diff = np.abs(self.nodes - self.nodes[node])
        diff = np.minimum(diff, L - diff)
        return np.sqrt(np.sum(diff**2, axis=1))

    def ball_weights(self, center: int, delta: float) -> np.ndarray:
        """Per-node fraction of each node's region lying in the geodesic ball B(center, delta).

        On the sphere a node stands for the whole level set {r = r_i}; for an
        off-pole center the fraction of that (n-1)-sphere inside the ball is
        computed exactly from the spherical law of cosines.
        """
        if not self.is_sphere or self.nodes[center] == 0.0:
            return (self.distances_from(center) <= delta).astype(float)
        n = self.dim
        s = self.nodes[center]
        r = self.nodes
        frac = np.zeros(self.size)
        sr, ss = np.sin(r), math.sin(s)
        interior = sr > 1e-300
        with np.errstate(divide="ignore", invalid="ignore"):
            c = (math.cos(delta) - np.cos(r) * math.cos(s)) / (sr * ss)
        c = np.clip(c, -1.0, 1.0)
        tail = 0.5 * betainc((n - 1) / 2, 0.5, 1.0 - c**2)
        frac = np.where(c >= 0, tail, 1.0 - tail)
        # pole and antipode are single points
        frac[~interior] = (np.abs(r[~interior] - s) <= delta).astype(float)
        return frac

    def resolution_radius(self, count: int = 30) -> float:
        """Radius of a ball around the pole holding `count` nodes.

        On the torus the ball volume is matched to `count` cells.
        """
        if self.is_sphere:
            return float(self.nodes[min(count, self.size - 1)])
        n, spacing = self.dim, self.params["L"] / self.params["m"]
        unit_ball = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
        return spacing * (count / unit_ball) ** (1.0 / n)


def _shell_volumes(n: int, faces: np.ndarray) -> np.ndarray:
    a, b = faces[:-1], faces[1:]
    mid, half = (a + b) / 2, (b - a) / 2
    t = mid[:, None] + half[:, None] * _GL_X[None, :]
    return sphere_volume(n - 1) * half * (np.sin(t) ** (n - 1) @ _GL_W)


def build_radial_sphere(n: int, N: int = 4096, clustering: float = 2.0) -> DiscreteManifold:
    """Radial finite-volume model of the unit sphere S^n.

    Nodes are r_i = pi * ((1 - b) s^p + b s) with s = i/(N-1), p the clustering
    exponent and b = CLUSTER_FLOOR when p > 1; p > 1 packs nodes near the pole
    while the linear floor keeps the first spacing away from roundoff scale.
    Each node owns the dual shell between neighbouring midpoints; its weight
    is the exact shell volume, so sum(weights) = omega_n to quadrature
    precision.  Neumann conditions at both poles are built in.
    """
    if int(n) != n or n < 3:
        raise InvalidConfiguration(f"sphere dimension must be an integer >= 3, got {n}")
    if int(N) != N or N < 16:
        raise InvalidConfiguration(f"node count must be >= 16, got {N}")
    if clustering < 1:
        raise InvalidConfiguration(f"clustering exponent must be >= 1, got {clustering}")
    n, N = int(n), int(N)
    s = np.linspace(0.0, 1.0, N)
    b = CLUSTER_FLOOR if clustering > 1 else 0.0
    r = math.pi * ((1 - b) * s**clustering + b * s)
    r[-1] = math.pi
    faces = np.concatenate([[0.0], (r[:-1] + r[1:]) / 2, [math.pi]])
    weights = _shell_volumes(n, faces)
    area = sphere_volume(n - 1) * np.sin(faces[1:-1]) ** (n - 1)
    a = area / np.diff(r)
    idx = np.arange(N - 1)
    for arr in (r, weights, a):
        arr.setflags(write=False)
    return DiscreteManifold(
        kind="sphere",
        dim=n,
        nodes=r,
        weights=weights,
        edges=(idx, idx + 1, a),
        scalar_curvature=np.full(N, float(n * (n - 1))),
        volume=sphere_volume(n),
        params={"N": N, "clustering": float(clustering)},
    )


def build_periodic_torus(n: int, L: float = 1.0, m: int = 16, node_cap: int = TORUS_NODE_CAP) -> DiscreteManifold:
    """Flat torus [0, L)^n on a uniform m^n grid with the (2n+1)-point Laplacian."""
    if int(n) != n or n < 3:
        raise InvalidConfiguration(f"torus dimension must be an integer >= 3, got {n}")
    if L <= 0:
        raise InvalidConfiguration(f"side length must be positive, got {L}")
    if int(m) != m or m < 8:
        raise InvalidConfiguration(f"nodes per axis must be >= 8, got {m}")
    n, m = int(n), int(m)
    if m**n > node_cap:
        raise ResourceLimit(f"torus grid {m}^{n} = {m**n} nodes exceeds the cap {node_cap}")
    h = L / m
    grid = np.arange(m**n).reshape((m,) * n)
    src, dst = [], []
    for axis in range(n):
        src.append(grid.ravel())
        dst.append(np.roll(grid, -1, axis=axis).ravel())
    w = h**n
    coords = np.indices((m,) * n).reshape(n, -1).T * h
    weights = np.full(m**n, w)
    i, j = np.concatenate(src), np.concatenate(dst)
    a = np.full(i.shape, w / h**2)
    for arr in (weights, a, i, j):
        arr.setflags(write=False)
    return DiscreteManifold(
        kind="torus",
        dim=n,
        nodes=coords,
        weights=weights,
        edges=(i, j, a),
        scalar_curvature=np.zeros(m**n),
        volume=float(L**n),
        params={"L": float(L), "m": m},
    )


def integrate(M: DiscreteManifold, phi) -> float:
    return M.integrate(phi)


def laplacian_apply(M: DiscreteManifold, u) -> np.ndarray:
    return M.laplacian(u)


def geodesic_distance(M: DiscreteManifold, x: int, y: int) -> float:
    return float(M.distances_from(x)[y])


def bump(r: np.ndarray, t: float) -> np.ndarray:
    """Smooth radial bump: 1 at r = 0, supported in r < t, C-infinity at r = t."""
    s = np.asarray(r, dtype=float) / t
    out = np.zeros_like(s)
    inside = s < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


_PROFILE = re.compile(r"^\s*([a-z_]+)\s*\((.*)\)\s*$")


def parse_profile(spec: str) -> tuple[str, list]:
    m = _PROFILE.match(spec)
    if not m:
        raise InvalidConfiguration(f"cannot parse profile descriptor {spec!r}")
    name, body = m.group(1), m.group(2).strip()
    if name in ("file", "from_file"):
        return "from_file", [body.strip("\"'")]
    try:
        args = [float(a) for a in body.split(",")] if body else []
    except ValueError as exc:
        raise InvalidConfiguration(f"bad numeric argument in {spec!r}") from exc
    return name, args


def make_profile(M: DiscreteManifold, spec) -> np.ndarray:
    """Sample a field from a descriptor.

    Descriptors: ``const(c)``, ``cos_poly(c0, ..., ck)`` meaning sum c_j cos^j r,
    ``bump(t)`` and ``file(path)``.  On the torus, r in cos_poly is replaced by
    the phase 2 pi x_1 / L and bump is centered at node 0.
    """
    name, args = parse_profile(spec) if isinstance(spec, str) else spec
    if name == "const":
        if len(args) != 1:
            raise InvalidConfiguration("const takes one argument")
        return np.full(M.size, float(args[0]))
    if name == "cos_poly":
        if not args:
            raise InvalidConfiguration("cos_poly needs at least one coefficient")
        c = np.cos(M.nodes if M.is_sphere else 2 * math.pi * M.nodes[:, 0] / M.params["L"])
        return np.polynomial.polynomial.polyval(c, args)
    if name == "bump":
        if len(args) != 1 or args[0] <= 0:
            raise InvalidConfiguration("bump takes one positive radius")
        t = args[0]
        limit = math.pi if M.is_sphere else M.params["L"] / 2
        if t > limit:
            raise InvalidConfiguration(f"bump radius {t} exceeds {limit}")
        return bump(M.distances_from(0), t)
    if name == "from_file":
        path = Path(args[0])
        if not path.exists():
            raise InvalidConfiguration(f"profile file {path} does not exist")
        values = np.loadtxt(path, dtype=float, ndmin=1)
        if values.shape != (M.size,):
            raise InvalidConfiguration(
                f"profile file {path} has {values.size} values, manifold has {M.size} nodes"
            )
        return values
    raise InvalidConfiguration(f"unknown profile descriptor {name!r}")
