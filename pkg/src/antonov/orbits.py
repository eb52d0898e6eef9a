"""Classical orbits in the total radial potential U.

Circular orbits, turning points, the radial period T(E, L) and frequency
omega_r = 2 pi / T, and the action-angle chart theta_r(E, L, r) with
orbit-averaged Fourier coefficients.  The chart convention is theta_r = 0 at
the outer turning point r_+ and theta_r = pi at r_-.

For L = 0 the motion is a line through the origin; by convention
r_-(E, 0) = 0 and T(E, 0) is half the period of the full line oscillation, so
that T, omega_r and r_+- are continuous down to L = 0.

Besides the scalar operations there is a vectorized ``orbit_table`` used by
the response-matrix assembly, which computes turning points by elementwise
bisection and all charts in one batch of potential evaluations.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


from .numerics import QuadratureRule, find_root, integrate_singular
from .steady_state import SteadyState

__all__ = [
    "Orbit",
    "OrbitTable",
    "circular_orbit",
    "circular_omega",
    "l_max",
    "turning_points",
    "period",
    "angle_chart",
    "orbit_fourier",
    "cached_chart",
    "orbit_table",
]

# orbits narrower than this (relative to r_*) use the epicyclic limit
_CIRCULAR_WIDTH = 1e-6


@dataclass
class Orbit:
    """One radial orbit with its sampled angle chart (theta decreasing in r).

    Radii are the images of a uniform grid u in [0, pi/2] under the exact map
    r = r_- + (r_+ - r_-) sin^2(u)  (L > 0), or r = r_+ sin^2(u) at L = 0, so
    both chart directions only ever interpolate the smooth monotone relation
    theta(u); the r <-> u legs are closed-form.
    """

    E: float
    L: float
    r_minus: float
    r_plus: float
    T: float
    omega_r: float
    theta_samples: np.ndarray  # decreasing from pi to 0
    r_samples: np.ndarray      # increasing from r_minus to r_plus
    _theta_of_u: object = field(default=None, repr=False)
    _dtheta_of_u: object = field(default=None, repr=False)

    def __post_init__(self):
        from scipy.interpolate import CubicSpline

        th = self.theta_samples
        u = np.linspace(0.0, 0.5 * np.pi, th.size)
        self._theta_of_u = CubicSpline(u, th)
        self._dtheta_of_u = self._theta_of_u.derivative()

    def _r_of_u(self, u):
        s2 = np.sin(u) ** 2
        if self.L > 0:
            return self.r_minus + (self.r_plus - self.r_minus) * s2
        return self.r_plus * s2

    def _u_of_r(self, r):
        width = (self.r_plus - self.r_minus) if self.L > 0 else self.r_plus
        base = self.r_minus if self.L > 0 else 0.0
        frac = np.clip((np.asarray(r, dtype=float) - base) / width, 0.0, 1.0)
        return np.arcsin(np.sqrt(frac))

    def _u_of_theta(self, theta):
        # Newton inversion of the monotone theta(u) spline; dtheta/du is
        # bounded away from zero, so a few steps from linear init suffice
        th = self.theta_samples
        u_lin = np.linspace(0.0, 0.5 * np.pi, th.size)
        u = np.interp(theta, th[::-1], u_lin[::-1])
        for _ in range(6):
            u = np.clip(u - (self._theta_of_u(u) - theta) / self._dtheta_of_u(u),
                        0.0, 0.5 * np.pi)
        return u

    def r_of_theta(self, theta):
        u = self._u_of_theta(np.clip(np.asarray(theta, dtype=float), 0.0, np.pi))
        out = self._r_of_u(u)
        return out if np.ndim(out) else float(out)

    def theta_of_r(self, r):
        out = np.clip(self._theta_of_u(self._u_of_r(r)), 0.0, np.pi)
        return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# scalar operations
# ---------------------------------------------------------------------------

def circular_orbit(ss: SteadyState, L: float):
    """Radius r_* and energy E_min of the circular orbit with angular momentum L.

    r_* solves r U'(r) = L^2/r^2; r^3 U'(r) is strictly increasing wherever
    U' > 0 (the enclosed mass r^2 U' is nondecreasing), so the root is unique.
    """
    if L <= 0:
        raise ValueError("circular orbits need L > 0")
    L2 = L * L

    def g(r):
        return r**3 * float(ss.dpotential(r)) - L2

    scale = ss.length_scale()
    lo = scale
    for _ in range(400):
        if g(lo) < 0:
            break
        lo *= 0.5
    else:
        raise RuntimeError("could not bracket circular radius from below")
    hi = max(lo, scale)
    for _ in range(400):
        if g(hi) > 0:
            break
        hi *= 2.0
    else:
        raise ValueError("no bound circular orbit")
    r_star = find_root(g, lo, hi, tol=1e-14).x
    e_min = float(ss.veff(r_star, L))
    if e_min >= 0:
        raise ValueError("no bound circular orbit")
    return r_star, e_min


def circular_omega(ss: SteadyState, L: float, r_star: float = None) -> float:
    """Small-oscillation frequency sqrt(U'' + 3 U'/r) at the circular radius."""
    if r_star is None:
        r_star, _ = circular_orbit(ss, L)
    return float(np.sqrt(ss.d2potential(r_star) + 3.0 * ss.dpotential(r_star) / r_star))


def _emin_of_rstar(ss: SteadyState, r: float) -> float:
    # E_min(L(r_*)) parametrized by the circular radius: U + r U'/2, increasing
    return float(ss.potential(r)) + 0.5 * r * float(ss.dpotential(r))


def l_max(ss: SteadyState, E: float) -> float:
    """The angular momentum of the circular orbit with energy E.

    Inverse of the strictly increasing map L -> E_min(L); the largest L for
    which bound orbits exist at this energy.  Solved through the circular
    radius: E_min(r_*) = U(r_*) + r_* U'(r_*)/2 is increasing in r_*, and
    L^2 = r_*^3 U'(r_*).
    """
    if not (ss.U0 < E < 0):
        raise ValueError("no bound orbits at this energy")

    def f(r):
        return _emin_of_rstar(ss, r) - E

    scale = ss.length_scale()
    lo = scale
    for _ in range(900):
        if f(lo) < 0:
            break
        lo *= 0.5
    else:
        raise ValueError("no bound orbits at this energy")
    hi = max(lo, scale)
    for _ in range(400):
        if f(hi) > 0:
            break
        hi *= 2.0
    else:
        raise RuntimeError("could not bracket maximal angular momentum")
    r_star = find_root(f, lo, hi, tol=1e-14).x
    return float(np.sqrt(r_star**3 * float(ss.dpotential(r_star))))


def _turning_points_around(ss: SteadyState, E: float, L: float, r_star: float):
    def f(r):
        return float(ss.veff(r, L)) - E

    lo = r_star
    for _ in range(900):
        lo *= 0.75
        if f(lo) > 0:
            break
    else:
        raise RuntimeError("could not bracket inner turning point")
    r_minus = find_root(f, lo, r_star, tol=1e-14).x

    hi = r_star
    for _ in range(900):
        hi *= 1.5
        if f(hi) > 0:
            break
    else:
        raise RuntimeError("could not bracket outer turning point")
    r_plus = find_root(f, r_star, hi, tol=1e-14).x
    return r_minus, r_plus


def turning_points(ss: SteadyState, E: float, L: float):
    """Roots r_- < r_+ of V_eff(r) = E bracketing the circular radius.

    For L = 0 returns (0, U^{-1}(E)).
    """
    if L < 0:
        raise ValueError("angular momentum must be nonnegative")
    scale = ss.length_scale()
    if L == 0:
        if not (ss.U0 <= E < 0):
            raise ValueError("no bound orbits at this energy")
        lo = 1e-12 * scale
        if float(ss.potential(lo)) >= E:
            raise ValueError("no bound orbits at this energy")
        hi = scale
        for _ in range(400):
            if float(ss.potential(hi)) > E:
                break
            hi *= 2.0
        r_plus = find_root(lambda r: float(ss.potential(r)) - E, lo, hi, tol=1e-14).x
        return 0.0, r_plus

    r_star, e_min = circular_orbit(ss, L)
    if E <= e_min:
        raise ValueError("below circular energy")
    if E >= 0:
        raise ValueError("no bound orbits at this energy")
    return _turning_points_around(ss, E, L, r_star)


def _geometry(ss: SteadyState, E: float, L: float):
    """(r_minus, r_plus, near_circular, omega_circ_or_None) for a bound orbit."""
    if L > 0:
        r_star, e_min = circular_orbit(ss, L)
        if E < e_min:
            raise ValueError("below circular energy")
        if E == e_min:
            return r_star, r_star, True, circular_omega(ss, L, r_star)
        if E >= 0:
            raise ValueError("no bound orbits at this energy")
        r_minus, r_plus = _turning_points_around(ss, E, L, r_star)
        if r_plus - r_minus < _CIRCULAR_WIDTH * r_star:
            return r_minus, r_plus, True, circular_omega(ss, L, r_star)
        return r_minus, r_plus, False, None
    r_minus, r_plus = turning_points(ss, E, 0.0)
    return r_minus, r_plus, False, None


def period(ss: SteadyState, E: float, L: float, order: int = 64):
    """Radial period T(E, L) = 2 int dr / sqrt(2 (E - V_eff)) and omega_r = 2 pi/T.

    The turning points carry inverse-square-root singularities, removed by the
    sin^2 substitution.  At L = 0 only the outer end is singular (the origin is
    a regular point of the line orbit when E > U(0)).  Orbits within relative
    width 1e-6 of circular use the epicyclic limit sqrt(U'' + 3U'/r) at r_*.
    """
    r_minus, r_plus, near, w_circ = _geometry(ss, E, L)
    if near:
        return 2.0 * np.pi / w_circ, w_circ

    def integrand(r):
        w2 = 2.0 * (E - np.asarray(ss.veff(r, L), dtype=float))
        return 1.0 / np.sqrt(np.maximum(w2, 1e-300))

    sing = "both" if L > 0 else "right"
    T = 2.0 * integrate_singular(integrand, r_minus, r_plus, sing=sing, order=order)
    return T, 2.0 * np.pi / T


def angle_chart(ss: SteadyState, E: float, L: float, samples: int = 128) -> Orbit:
    """Orbit with its angle chart theta_r(r) = omega_r int_r^{r+} ds/sqrt(2(E-V_eff)).

    Radii are sampled at Chebyshev points of [r_-, r_+] (images of a uniform
    grid under the sin^2 map, which also regularizes the quadrature);
    cumulative panel integrals give theta at every sample, normalized so that
    theta(r_+) = 0 and theta(r_-) = pi exactly.
    """
    r_minus, r_plus, near, w_circ = _geometry(ss, E, L)
    if near:
        return _harmonic_chart(E, L, r_minus, r_plus, w_circ, samples)

    theta, r_samp, T = _chart_arrays(
        lambda r: np.asarray(ss.veff(r, L), dtype=float), E, r_minus, r_plus,
        samples, left_singular=L > 0,
    )
    return Orbit(
        E=E, L=L, r_minus=r_minus, r_plus=r_plus, T=T, omega_r=2.0 * np.pi / T,
        theta_samples=theta, r_samples=r_samp,
    )


def _chart_arrays(veff, E, r_minus, r_plus, samples, left_singular=True):
    """theta/r samples and the period from cumulative panel quadrature."""
    if left_singular:
        def r_of_u(u):
            return r_minus + (r_plus - r_minus) * np.sin(u) ** 2

        def dr_du(u):
            return (r_plus - r_minus) * np.sin(2.0 * u)
    else:
        def r_of_u(u):
            return r_plus * np.sin(u) ** 2

        def dr_du(u):
            return r_plus * np.sin(2.0 * u)

    n_panel = samples - 1
    u_edges = np.linspace(0.0, 0.5 * np.pi, samples)
    rule = QuadratureRule.gauss_legendre(12)
    mid = 0.5 * (u_edges[:-1] + u_edges[1:])
    half = 0.5 * np.diff(u_edges)
    u_nodes = (mid[:, None] + half[:, None] * rule.nodes[None, :]).ravel()
    r_nodes = r_of_u(u_nodes)
    w2 = 2.0 * (E - veff(r_nodes))
    g = dr_du(u_nodes) / np.sqrt(np.maximum(w2, 1e-300))
    panel = (g.reshape(n_panel, rule.order) * rule.weights[None, :]).sum(axis=1) * half

    suffix = np.concatenate([np.cumsum(panel[::-1])[::-1], [0.0]])
    T = 2.0 * suffix[0]
    theta = np.pi * (suffix / suffix[0])
    r_samp = r_of_u(u_edges)
    r_samp[0] = r_minus
    r_samp[-1] = r_plus
    return theta, r_samp, T


def _harmonic_chart(E, L, r_minus, r_plus, omega_r, samples) -> Orbit:
    # epicyclic limit r(theta) = mid + amp cos(theta): exactly theta = pi - 2u
    # under the sin^2 map, so the chart stays in the common representation
    u = np.linspace(0.0, 0.5 * np.pi, samples)
    theta = np.pi - 2.0 * u
    if r_plus == r_minus:
        # strictly circular: widen infinitesimally so the chart stays monotone
        r_plus = r_plus * (1.0 + 1e-15) + 1e-300
    r_samp = r_minus + (r_plus - r_minus) * np.sin(u) ** 2
    return Orbit(
        E=E, L=L, r_minus=r_minus, r_plus=r_plus, T=2.0 * np.pi / omega_r,
        omega_r=omega_r, theta_samples=theta, r_samples=r_samp,
    )


def orbit_fourier(ss: SteadyState, orbit: Orbit, f: Callable, k_max: int, n_theta: int = 256):
    """Cosine coefficients of f(r(theta)) on the orbit.

    Normalization: f(r(theta)) = c_0/2 + sum_{k>=1} c_k cos(k theta) with
    c_k = (2/pi) int_0^pi f(r(theta)) cos(k theta) dtheta, evaluated by the
    trapezoid rule on a uniform theta grid (spectrally accurate for the smooth
    even periodic extension).
    """
    theta = np.linspace(0.0, np.pi, n_theta + 1)
    r = orbit.r_of_theta(theta)
    try:
        vals = np.asarray(f(r), dtype=float)
        if vals.shape != r.shape:
            raise TypeError
    except (TypeError, ValueError):
        vals = np.asarray([f(ri) for ri in r], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand not finite")
    ks = np.arange(k_max + 1)
    cos = np.cos(np.outer(ks, theta))
    w = np.full(n_theta + 1, np.pi / n_theta)
    w[0] *= 0.5
    w[-1] *= 0.5
    return (2.0 / np.pi) * cos @ (w * vals)


_cache_lock = threading.Lock()


def cached_chart(ss: SteadyState, E: float, L: float, samples: int = 128) -> Orbit:
    """angle_chart memoized on the steady state, keyed by quantized (E, L).

    Entries are value-identical for identical keys, so concurrent insertion is
    benign (last write wins).
    """
    with _cache_lock:
        cache = ss.__dict__.setdefault("_orbit_cache", {})
    key = (round(float(E), 14), round(float(L), 14), samples)
    orbit = cache.get(key)
    if orbit is None:
        orbit = angle_chart(ss, E, L, samples=samples)
        cache[key] = orbit
    return orbit


# ---------------------------------------------------------------------------
# vectorized batch construction
# ---------------------------------------------------------------------------

def _veff_vec(ss: SteadyState, r: np.ndarray, L: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.asarray(ss.potential(r), dtype=float) + 0.5 * L**2 / np.maximum(r, 1e-300) ** 2


def _bisect_vec(f, lo: np.ndarray, hi: np.ndarray, iters: int = 90) -> np.ndarray:
    """Elementwise bisection; assumes sign(f(lo)) != sign(f(hi)) per element."""
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        same = (fmid > 0) == (flo > 0)
        lo = np.where(same, mid, lo)
        flo = np.where(same, fmid, flo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


@dataclass
class OrbitTable:
    """Batch of orbits on flattened (E, L) nodes with shared sampling grids."""

    E: np.ndarray
    L: np.ndarray
    r_minus: np.ndarray
    r_plus: np.ndarray
    T: np.ndarray
    omega: np.ndarray
    theta_samples: np.ndarray   # (n, samples), decreasing
    r_samples: np.ndarray       # (n, samples), increasing

    def r_at_theta(self, theta_grid: np.ndarray) -> np.ndarray:
        """r on a shared theta grid, per orbit (same chart scheme as Orbit)."""
        n = self.E.size
        out = np.empty((n, theta_grid.size))
        for i in range(n):
            out[i] = self.orbit(i).r_of_theta(theta_grid)
        return out

    def orbit(self, i: int) -> Orbit:
        return Orbit(
            E=float(self.E[i]), L=float(self.L[i]),
            r_minus=float(self.r_minus[i]), r_plus=float(self.r_plus[i]),
            T=float(self.T[i]), omega_r=float(self.omega[i]),
            theta_samples=self.theta_samples[i], r_samples=self.r_samples[i],
        )


def orbit_table(ss: SteadyState, E: np.ndarray, L: np.ndarray, samples: int = 128) -> OrbitTable:
    """Vectorized turning points, periods and angle charts for L > 0 nodes.

    Equivalent to per-node angle_chart but with all potential evaluations
    batched; near-circular nodes fall back to the epicyclic chart.
    """
    E = np.asarray(E, dtype=float)
    L = np.asarray(L, dtype=float)
    if np.any(L <= 0):
        raise ValueError("orbit_table handles L > 0 nodes")
    n = E.size
    scale = ss.length_scale()

    def g_circ(r):
        return r**3 * np.asarray(ss.dpotential(r), dtype=float) - L**2

    lo = np.full(n, scale)
    for _ in range(900):
        bad = g_circ(lo) >= 0
        if not bad.any():
            break
        lo[bad] *= 0.5
    hi = np.maximum(lo, scale)
    for _ in range(400):
        bad = g_circ(hi) <= 0
        if not bad.any():
            break
        hi[bad] *= 2.0
    r_star = _bisect_vec(g_circ, lo, hi)

    def f_turn(r):
        return _veff_vec(ss, r, L) - E

    lo = r_star.copy()
    for _ in range(900):
        bad = f_turn(lo) <= 0
        if not bad.any():
            break
        lo[bad] *= 0.75
    r_minus = _bisect_vec(f_turn, lo, r_star.copy())

    hi = r_star.copy()
    for _ in range(900):
        bad = f_turn(hi) <= 0
        if not bad.any():
            break
        hi[bad] *= 1.5
    r_plus = _bisect_vec(f_turn, r_star.copy(), hi)

    near = (r_plus - r_minus) < _CIRCULAR_WIDTH * r_star

    # charts: panels of the sin^2 map, all nodes at once
    n_panel = samples - 1
    u_edges = np.linspace(0.0, 0.5 * np.pi, samples)
    rule = QuadratureRule.gauss_legendre(12)
    mid = 0.5 * (u_edges[:-1] + u_edges[1:])
    half = 0.5 * np.diff(u_edges)
    u_nodes = (mid[:, None] + half[:, None] * rule.nodes[None, :]).ravel()  # (P*12,)
    s2 = np.sin(u_nodes) ** 2
    s2d = np.sin(2.0 * u_nodes)
    width = (r_plus - r_minus)[:, None]
    r_big = r_minus[:, None] + width * s2[None, :]            # (n, P*12)
    w2 = 2.0 * (E[:, None] - _veff_vec(ss, r_big, L[:, None]))
    gvals = width * s2d[None, :] / np.sqrt(np.maximum(w2, 1e-300))
    panel = (
        gvals.reshape(n, n_panel, rule.order) * rule.weights[None, None, :]
    ).sum(axis=2) * half[None, :]
    suffix = np.concatenate(
        [np.cumsum(panel[:, ::-1], axis=1)[:, ::-1], np.zeros((n, 1))], axis=1
    )
    T = 2.0 * suffix[:, 0]
    with np.errstate(invalid="ignore", divide="ignore"):
        theta = np.pi * (suffix / suffix[:, :1])
    r_samp = r_minus[:, None] + width * np.sin(u_edges)[None, :] ** 2
    r_samp[:, 0] = r_minus
    r_samp[:, -1] = r_plus
    omega = 2.0 * np.pi / T

    if near.any():
        for i in np.where(near)[0]:
            w_c = circular_omega(ss, float(L[i]), float(r_star[i]))
            orbit = _harmonic_chart(
                float(E[i]), float(L[i]), float(r_minus[i]), float(r_plus[i]),
                w_c, samples,
            )
            theta[i] = orbit.theta_samples
            r_samp[i] = orbit.r_samples
            T[i] = orbit.T
            omega[i] = orbit.omega_r

    return OrbitTable(
        E=E, L=L, r_minus=r_minus, r_plus=r_plus, T=T, omega=omega,
        theta_samples=theta, r_samples=r_samp,
    )
