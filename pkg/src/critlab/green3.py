"""Green function and mass of Delta + h on the round 3-sphere for constant h.

With G(r) the Green function at the pole, w(r) = G(r) sin r solves the
regular problem

    -w'' + (h - 1) w = 0,   w(0) = 1/(4 pi),   w(pi) = 0,

because Delta on radial functions of S^3 conjugates to -d^2/dr^2 + 1 under
multiplication by sin r.  Near the pole G = 1/(4 pi r) + M + o(1), and the
mass is M = w'(0).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from .errors import InvalidInput, NoCrossing, NumericFailure, PreconditionFailure
from .functional import coercivity_margin
from .manifold import build_radial_sphere

GREEN_DIM = 3
COERCIVE_MARGIN = 1e-4


@dataclass
class GreenProfile:
    h: np.ndarray
    r: np.ndarray
    w: np.ndarray
    mass: float

    @property
    def G(self) -> np.ndarray:
        G = np.full_like(self.w, np.inf)
        G[1:] = self.w[1:] / np.sin(self.r[1:])
        # at the antipode w and sin r both vanish: G = -w'(pi) there
        dr = self.r[1] - self.r[0]
        G[-1] = -(3.0 * self.w[-1] - 4.0 * self.w[-2] + self.w[-3]) / (2.0 * dr)
        return G

    def write_csv(self, path) -> None:
        G = self.G
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["r", "w", "G"])
            for ri, wi, gi in zip(self.r, self.w, G):
                out.writerow([f"{ri:.12g}", f"{wi:.12g}", f"{gi:.12g}" if np.isfinite(gi) else "inf"])


def _h_values(h, r: np.ndarray) -> np.ndarray:
    """Evaluate h (constant, callable of r, or values on the grid r) at r."""
    if callable(h):
        vals = np.asarray(h(r), dtype=float) * np.ones_like(r)
    else:
        vals = np.asarray(h, dtype=float)
        if vals.ndim == 0:
            vals = np.full_like(r, float(vals))
        elif vals.shape != r.shape:
            raise InvalidInput(f"h has {vals.size} values, the grid has {r.size} nodes")
    if not np.all(np.isfinite(vals)):
        raise InvalidInput("h must be finite")
    return vals


def _check_coercive(h_vals: np.ndarray, r: np.ndarray) -> None:
    if np.all(h_vals == h_vals[0]):
        # constants are the bottom eigenfunctions, so the margin is h itself
        margin = float(h_vals[0])
    else:
        M = build_radial_sphere(GREEN_DIM, 1024, 1.0)
        margin = coercivity_margin(M, np.interp(M.nodes, r, h_vals))
    if margin <= 0:
        raise PreconditionFailure(f"Delta + h is not coercive on S^3 (bottom eigenvalue {margin:.6g})")


def green_radial(h, N: int = 4096) -> GreenProfile:
    """Second-order finite differences on N uniform intervals of [0, pi].

    h is a constant, a callable of r or its values on the N + 1 grid nodes.
    """
    if N < 8:
        raise InvalidInput(f"N must be >= 8, got {N}")
    r = np.linspace(0.0, math.pi, N + 1)
    hv = _h_values(h, r)
    _check_coercive(hv, r)
    dr = r[1] - r[0]
    ab = np.zeros((3, N - 1))
    ab[0, 1:] = -1.0
    ab[1, :] = 2.0 + (hv[1:-1] - 1.0) * dr * dr
    ab[2, :-1] = -1.0
    rhs = np.zeros(N - 1)
    w0 = 1.0 / (4.0 * math.pi)
    rhs[0] = w0
    w = np.empty(N + 1)
    w[0], w[-1] = w0, 0.0
    try:
        w[1:-1] = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"singular Green system: {exc}") from exc
    mass = (-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * dr)
    return GreenProfile(hv, r, w, float(mass))


def green_mass(h, N: int = 4096) -> float:
    """Mass of a GreenProfile, or of the profile computed for h on N intervals."""
    if isinstance(h, GreenProfile):
        return h.mass
    return green_radial(h, N).mass


def exact_green_mass(h: float) -> float:
    """Closed form of w'(0) for constant h > 0."""
    h = float(h)
    if not h > 0:
        raise PreconditionFailure(f"Delta + h is not coercive on S^3 for h = {h:g}")
    k = h - 1.0
    w0 = 1.0 / (4.0 * math.pi)
    if abs(k) < 1e-14:
        return -w0 / math.pi
    if k > 0:
        s = math.sqrt(k)
        return -w0 * s / math.tanh(s * math.pi)
    s = math.sqrt(-k)
    return -w0 * s / math.tan(s * math.pi)


def find_mass_zero_offset(
    h,
    B_range: tuple = (-1.0, 2.0),
    tol: float = 1e-8,
    N: int = 4096,
) -> float:
    """Constant B in B_range at which the mass of h + B changes sign.

    The mass decreases in B; the lower end is raised if needed so that h + B
    stays coercive.
    """
    lo, hi = (float(B_range[0]), float(B_range[1]))
    if not hi > lo:
        raise InvalidInput("B_range must be an increasing pair")
    r = np.linspace(0.0, math.pi, N + 1)
    hv = _h_values(h, r)
    # stay inside the coercive range of h + B, away from the pole of the mass at h + B = 0
    if np.all(hv == hv[0]):
        lo = max(lo, -float(hv[0]) + COERCIVE_MARGIN)
    if not hi > lo:
        raise NoCrossing("h + B is nowhere coercive on the given range")
    m_lo, m_hi = green_mass(hv + lo, N), green_mass(hv + hi, N)
    if m_lo == 0.0:
        return lo
    if m_lo * m_hi > 0:
        raise NoCrossing(f"mass keeps the sign {np.sign(m_lo):+g} on [{lo:g}, {hi:g}]")
    return float(brentq(lambda B: green_mass(hv + B, N), lo, hi, xtol=tol))
