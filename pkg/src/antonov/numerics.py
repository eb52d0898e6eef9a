"""Shared numerical kernels.

Fixed-order Gauss-Legendre quadrature with turning-point (inverse-square-root)
substitutions, bracketed root finding, radial second-order ODE integration with
event detection, and dense symmetric (generalized) eigensolves.  Everything here
is pure: no global state, safe to call from several threads.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import solve_ivp
from scipy.linalg import LinAlgError, cholesky, eigh
from scipy.optimize import brentq

__all__ = [
    "QuadratureRule",
    "RootResult",
    "RadialTrajectory",
    "integrate_singular",
    "find_root",
    "integrate_radial_ode",
    "sym_eig",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre nodes/weights on (-1, 1)."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def __post_init__(self):
        if not np.all(np.diff(self.nodes) > 0):
            raise ValueError("nodes must be strictly increasing")
        if abs(self.weights.sum() - 2.0) > 1e-12:
            raise ValueError("weights must sum to 2 (Gauss-Legendre normalization)")

    @staticmethod
    def gauss_legendre(order: int) -> "QuadratureRule":
        return _gauss_legendre_cached(int(order))

    def mapped(self, a: float, b: float):
        """Nodes/weights affinely mapped to (a, b)."""
        half = 0.5 * (b - a)
        return a + half * (self.nodes + 1.0), half * self.weights


@lru_cache(maxsize=64)
def _gauss_legendre_cached(order: int) -> QuadratureRule:
    x, w = leggauss(order)
    return QuadratureRule(nodes=x, weights=w, order=order)


@dataclass(frozen=True)
class RootResult:
    x: float
    residual: float
    iterations: int


def integrate_singular(f, a: float, b: float, sing: str = "none", order: int = 64) -> float:
    """Integrate f over (a, b) where declared endpoints carry 1/sqrt singularities.

    For ``sing`` in {"left", "right", "both"} the substitution
    r = a + (b-a)*sin^2(u) maps (a, b) to u in (0, pi/2); an endpoint factor
    1/sqrt(r-a) or 1/sqrt(b-r) then cancels against the Jacobian
    (b-a)*sin(2u) du and the transformed integrand is smooth, so fixed-order
    Gauss-Legendre converges spectrally.  "none" integrates directly.
    """
    if not b > a:
        raise ValueError("empty interval")
    if sing not in ("none", "left", "right", "both"):
        raise ValueError(f"unknown singularity flag {sing!r}")
    rule = QuadratureRule.gauss_legendre(order)
    if sing == "none":
        x, w = rule.mapped(a, b)
        vals = _eval_integrand(f, x)
        return float(np.dot(w, vals))
    u, wu = rule.mapped(0.0, 0.5 * np.pi)
    s = np.sin(u)
    x = a + (b - a) * s * s
    jac = (b - a) * np.sin(2.0 * u)
    vals = _eval_integrand(f, x)
    return float(np.dot(wu, vals * jac))


def _eval_integrand(f, x: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(f(x), dtype=float)
        if vals.shape != x.shape:
            raise TypeError
    except (TypeError, ValueError):
        vals = np.asarray([f(xi) for xi in x], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand not finite")
    return vals


def find_root(f, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200) -> RootResult:
    """Bracketed scalar root (Brent: bisection with secant/inverse-quadratic steps).

    Requires f(lo)*f(hi) <= 0.  Terminates when the bracket width falls below
    tol*max(1, |x|) or |f(x)| <= tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return RootResult(x=lo, residual=0.0, iterations=0)
    if fhi == 0.0:
        return RootResult(x=hi, residual=0.0, iterations=0)
    if flo * fhi > 0:
        raise ValueError("not bracketed")
    x, info = brentq(f, lo, hi, xtol=tol, rtol=max(4 * np.finfo(float).eps, 1e-15),
                     maxiter=max_iter, full_output=True)
    return RootResult(x=float(x), residual=float(f(x)), iterations=int(info.iterations))


@dataclass
class RadialTrajectory:
    """Dense solution of y'' + (2/r) y' = rhs(r, y, y') started at r = 0."""

    y0: float
    rhs0: float
    r_start: float
    r_end: float
    event_r: Optional[float]
    _sol: object

    def y(self, r):
        r = np.asarray(r, dtype=float)
        out = np.where(
            r < self.r_start,
            self.y0 + self.rhs0 * r * r / 6.0,
            self._sol.sol(np.clip(r, self.r_start, self.r_end))[0],
        )
        return out if out.ndim else float(out)

    def yp(self, r):
        r = np.asarray(r, dtype=float)
        out = np.where(
            r < self.r_start,
            self.rhs0 * r / 3.0,
            self._sol.sol(np.clip(r, self.r_start, self.r_end))[1],
        )
        return out if out.ndim else float(out)


def integrate_radial_ode(
    rhs: Callable[[float, float, float], float],
    y0: float,
    yp0: float,
    r_max: float,
    stop: Optional[Callable[[float, float, float], float]] = None,
    rtol: float = 1e-11,
    atol: float = 1e-13,
) -> RadialTrajectory:
    """Adaptive integration of y'' + (2/r) y' = rhs(r, y, y') from the origin.

    The r -> 0 coordinate singularity is handled by the series start
    y(r) ~ y0 + rhs(0) r^2 / 6 (which requires yp0 = 0).  ``stop`` is an event
    function of (r, y, y'); integration terminates at its first sign change,
    located on the dense output.
    """
    if yp0 != 0.0:
        raise ValueError("series start requires y'(0) = 0")
    g0 = rhs(0.0, y0, 0.0)
    r_start = 1e-6 * min(1.0, r_max)
    y_start = y0 + g0 * r_start**2 / 6.0
    yp_start = g0 * r_start / 3.0

    def system(r, Y):
        y, yp = Y
        return [yp, rhs(r, y, yp) - 2.0 * yp / r]

    events = None
    if stop is not None:
        def event(r, Y):
            return stop(r, Y[0], Y[1])
        event.terminal = True
        events = event

    sol = solve_ivp(
        system,
        (r_start, r_max),
        [y_start, yp_start],
        method="DOP853",
        rtol=rtol,
        atol=atol,
        dense_output=True,
        events=events,
    )
    if sol.status == -1:
        raise RuntimeError("stiff or singular RHS")
    event_r = None
    if stop is not None and sol.t_events[0].size:
        event_r = float(sol.t_events[0][0])
    return RadialTrajectory(
        y0=y0, rhs0=g0, r_start=r_start, r_end=float(sol.t[-1]),
        event_r=event_r, _sol=sol,
    )


def sym_eig(A: np.ndarray, B: Optional[np.ndarray] = None):
    """Eigenpairs of A x = nu B x, sorted by descending eigenvalue.

    A must be symmetric to 1e-10 relative; B, when given, symmetric positive
    definite (checked by Cholesky).  Returns (values, vectors) with vectors in
    columns.  The generalized problem is reduced through the Cholesky factor of
    B, which preserves symmetry.
    """
    A = np.asarray(A, dtype=float)
    scale = np.linalg.norm(A) or 1.0
    if np.linalg.norm(A - A.T) > 1e-10 * scale:
        raise ValueError("matrix not symmetric")
    A = 0.5 * (A + A.T)
    if B is None:
        vals, vecs = eigh(A)
    else:
        B = np.asarray(B, dtype=float)
        if np.linalg.norm(B - B.T) > 1e-10 * (np.linalg.norm(B) or 1.0):
            raise ValueError("matrix not symmetric")
        B = 0.5 * (B + B.T)
        try:
            cholesky(B, lower=True)
        except LinAlgError as exc:
            raise ValueError("degenerate Gram matrix") from exc
        vals, vecs = eigh(A, B)
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]
