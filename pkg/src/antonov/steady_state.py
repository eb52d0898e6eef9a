"""Self-gravitating kinetic equilibria f0 = phi(E).

Constructs the equilibrium (phi, U, rho0, E0, R0, M) for an isotropic
distribution function phi(E) with compact support below a cutoff energy E0,
optionally inside a radially symmetric external potential.  Units: G = 1, the
Poisson coupling 4*pi appears explicitly, and the total potential of a mass
density rho is U = -1/|.| * rho (negative, increasing to 0 at infinity).

The solve is parametrized by the central depth y = E0 - U rather than by E0:
y obeys  y'' + (2/r) y' = -4*pi*(Phi(E0 - y) + rho_ext)  with Phi depending on
y only, so no two-point boundary problem arises.  E0 is recovered afterwards
from the Newtonian exterior match U(R0) = -M/R0 + U_ext(R0).
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import gamma

from .numerics import find_root, integrate_radial_ode, integrate_singular

__all__ = [
    "DistributionFunction",
    "ExternalPotential",
    "SteadyState",
    "ValidationReport",
    "phi_profile",
    "polytrope_phi_constant",
    "solve_equilibrium",
    "eval_state",
    "validate_assumptions",
    "save_state",
    "load_state",
    "kepler_potential",
    "harmonic_potential",
    "isochrone_potential",
    "plummer_potential",
]

FOUR_PI = 4.0 * np.pi


def polytrope_phi_constant(n: float) -> float:
    """c_n with Phi(u) = c_n (E0-u)_+^(n+3/2) for phi(E) = (E0-E)_+^n.

    c_n = 2^(3/2) pi^(3/2) Gamma(n+1) / Gamma(n+5/2); finite for n > -1.
    """
    return 2.0**1.5 * np.pi**1.5 * gamma(n + 1.0) / gamma(n + 2.5)


@dataclass(frozen=True)
class DistributionFunction:
    """Energy profile phi(E) of the steady state.

    ``polytrope``: phi(E) = amplitude * (E0 - E)_+^n.  ``tabulated``: sampled
    (E, phi, phi') interpreted relative to the cutoff, i.e. as a profile in
    the depth q = E0 - E, so the cutoff can be re-anchored after a solve.
    Exponents n in (0, 7/2) satisfy the standing monotonicity/integrability
    assumptions; the constructor admits n > -1 so that test profiles with a
    closed-form equilibrium remain expressible (validation reports the range
    violation).
    """

    kind: str = "polytrope"
    n: float = 1.0
    amplitude: float = 1.0
    E0: float = 0.0
    table: Optional[tuple] = None  # (E, phi, dphi) arrays for kind="tabulated"

    def __post_init__(self):
        if self.kind not in ("polytrope", "tabulated"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if self.kind == "polytrope":
            if not (-1.0 < self.n < 3.5):
                raise ValueError("polytrope exponent must lie in (-1, 7/2)")
        else:
            if self.table is None:
                raise ValueError("tabulated distribution needs a table")
            E, p, dp = (np.asarray(a, dtype=float) for a in self.table)
            if E.ndim != 1 or E.size < 4 or p.shape != E.shape or dp.shape != E.shape:
                raise ValueError("table must hold matching (E, phi, dphi) arrays")
            if not np.all(np.diff(E) > 0):
                raise ValueError("table energies must be strictly increasing")
            object.__setattr__(self, "table", (E, p, dp))
            qt = self.E0 - E[::-1]
            object.__setattr__(self, "_phi_q", PchipInterpolator(qt, p[::-1], extrapolate=False))
            object.__setattr__(self, "_dphi_q", PchipInterpolator(qt, dp[::-1], extrapolate=False))

    # -- evaluation in the depth variable q = E0 - E -------------------------

    def _depth_range(self) -> float:
        E, _, _ = self.table
        return float(self.E0 - E[0])

    def phi(self, E):
        q = self.E0 - np.asarray(E, dtype=float)
        return self.phi_depth(q)

    def dphi(self, E):
        q = self.E0 - np.asarray(E, dtype=float)
        return self.dphi_depth(q)

    def phi_depth(self, q):
        """phi as a function of depth below the cutoff, q = E0 - E."""
        q = np.asarray(q, dtype=float)
        if self.kind == "polytrope":
            out = self.amplitude * np.where(q > 0, np.maximum(q, 0.0) ** self.n, 0.0)
        else:
            out = np.nan_to_num(self._phi_q(np.clip(q, 0.0, None)), nan=0.0)
            out = np.where(q > 0, out, 0.0)
        return out if out.ndim else float(out)

    def dphi_depth(self, q):
        q = np.asarray(q, dtype=float)
        if self.kind == "polytrope":
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(
                    q > 0,
                    -self.n * self.amplitude * np.maximum(q, 1e-300) ** (self.n - 1.0),
                    0.0,
                )
        else:
            out = np.nan_to_num(self._dphi_q(np.clip(q, 0.0, None)), nan=0.0)
            out = np.where(q > 0, out, 0.0)
        return out if out.ndim else float(out)

    def with_cutoff(self, E0: float) -> "DistributionFunction":
        """Re-anchor the cutoff energy, keeping the depth profile."""
        if self.kind == "polytrope":
            return dataclasses.replace(self, E0=E0)
        E, p, dp = self.table
        return dataclasses.replace(self, E0=E0, table=(E + (E0 - self.E0), p, dp))


@dataclass(frozen=True)
class ExternalPotential:
    """Radially symmetric external potential as three consistent closures.

    u(r) is the potential, du(r) its radial derivative and rho(r) the source
    density Laplacian(u)/(4*pi).  Consistency of the closures is spot-checked
    by finite differences at 16 radii on construction (the standing hypotheses
    downstream assume a C^2 subharmonic potential).
    """

    u: Callable
    du: Callable
    rho: Callable
    name: str = "external"
    check_range: tuple = (0.05, 5.0)
    check: bool = True

    def __post_init__(self):
        if self.check:
            self.spot_check(*self.check_range)

    def spot_check(self, r_lo: float, r_hi: float, samples: int = 16):
        r = np.geomspace(r_lo, r_hi, samples)
        h = 1e-5 * r
        du_fd = (self._u_arr(r + h) - self._u_arr(r - h)) / (2 * h)
        du = self._arr(self.du, r)
        scale = np.max(np.abs(du)) + 1e-12
        if np.max(np.abs(du_fd - du)) > 1e-4 * scale:
            raise ValueError(f"{self.name}: du inconsistent with finite difference of u")
        # second difference with the cancellation-optimal step eps^(1/4) r
        h2 = np.finfo(float).eps ** 0.25 * r
        lap = (self._u_arr(r + h2) - 2 * self._u_arr(r) + self._u_arr(r - h2)) / h2**2 + 2 * du / r
        rho_fd = lap / FOUR_PI
        rho = self._arr(self.rho, r)
        rho_scale = np.max(np.abs(rho)) + np.max(np.abs(du / r)) / FOUR_PI + 1e-12
        if np.max(np.abs(rho_fd - rho)) > 1e-3 * rho_scale:
            raise ValueError(f"{self.name}: rho inconsistent with Laplacian of u")

    def _u_arr(self, r):
        return self._arr(self.u, r)

    @staticmethod
    def _arr(fn, r):
        r = np.asarray(r, dtype=float)
        try:
            out = np.asarray(fn(r), dtype=float)
            if out.shape != r.shape:
                raise TypeError
        except (TypeError, ValueError):
            out = np.asarray([fn(ri) for ri in r.ravel()], dtype=float).reshape(r.shape)
        return out


def kepler_potential() -> ExternalPotential:
    """Point-mass potential U = -1/r (test oracle; singular at the origin)."""
    return ExternalPotential(
        u=lambda r: -1.0 / r, du=lambda r: 1.0 / r**2,
        rho=lambda r: 0.0 * np.asarray(r, dtype=float),
        name="kepler",
    )


def harmonic_potential(omega0: float = 1.0, offset: float = -10.0) -> ExternalPotential:
    """U = omega0^2 r^2 / 2 + offset (test oracle; not a decaying potential)."""
    w2 = omega0 * omega0
    return ExternalPotential(
        u=lambda r: 0.5 * w2 * np.asarray(r, dtype=float) ** 2 + offset,
        du=lambda r: w2 * np.asarray(r, dtype=float),
        rho=lambda r: 3.0 * w2 / FOUR_PI + 0.0 * np.asarray(r, dtype=float),
        name="harmonic",
    )


def isochrone_potential(b: float = 1.0, mass: float = 1.0) -> ExternalPotential:
    """Isochrone potential U = -M/(b + sqrt(b^2 + r^2)); T depends on E only."""
    def u(r):
        return -mass / (b + np.sqrt(b * b + np.asarray(r, dtype=float) ** 2))

    def du(r):
        r = np.asarray(r, dtype=float)
        a = np.sqrt(b * b + r * r)
        return mass * r / (a * (b + a) ** 2)

    def rho(r):
        r = np.asarray(r, dtype=float)
        a = np.sqrt(b * b + r * r)
        return mass * (3.0 * (b + a) * a * a - r * r * (b + 3.0 * a)) / (
            FOUR_PI * (b + a) ** 3 * a**3
        )

    return ExternalPotential(u=u, du=du, rho=rho, name="isochrone")


def plummer_potential(mass: float = 1.0, a: float = 1.0) -> ExternalPotential:
    """Plummer sphere U = -M/sqrt(r^2 + a^2); satisfies all standing hypotheses."""
    def u(r):
        return -mass / np.sqrt(np.asarray(r, dtype=float) ** 2 + a * a)

    def du(r):
        r = np.asarray(r, dtype=float)
        return mass * r / (r * r + a * a) ** 1.5

    def rho(r):
        r = np.asarray(r, dtype=float)
        return 3.0 * mass * a * a / (FOUR_PI * (r * r + a * a) ** 2.5)

    return ExternalPotential(u=u, du=du, rho=rho, name="plummer")


def phi_profile(df: DistributionFunction, u) -> float:
    """Velocity-space integral Phi(u) = int phi(v^2/2 + u) d^3v.

    Polytropes use the closed form c_n (E0-u)_+^(n+3/2); tabulated profiles are
    integrated as 4*pi*sqrt(2) int_0^(E0-u) phi(E0-q') (E0-u-q')^(1/2) dq' with
    the right endpoint treated as a square-root singularity.
    """
    u_arr = np.asarray(u, dtype=float)
    scalar = u_arr.ndim == 0
    q = df.E0 - np.atleast_1d(u_arr)
    if df.kind == "polytrope":
        cn = polytrope_phi_constant(df.n)
        out = df.amplitude * cn * np.where(q > 0, np.maximum(q, 0.0) ** (df.n + 1.5), 0.0)
    else:
        depth_max = df._depth_range()
        out = np.zeros_like(q)
        for i, qi in enumerate(q):
            if qi <= 0:
                continue
            if qi > depth_max * (1 + 1e-12):
                raise ValueError("table underresolved")
            out[i] = FOUR_PI * np.sqrt(2.0) * integrate_singular(
                lambda qq: df.phi_depth(qq) * np.sqrt(np.maximum(qi - qq, 0.0)),
                0.0, qi, sing="none", order=96,
            )
    return float(out[0]) if scalar else out


@dataclass
class SteadyState:
    """Solved equilibrium: tabulated U, U', rho0 on [0, R0] plus exterior data.

    Immutable after construction; interpolants are monotone cubics (PCHIP).
    Outside the support the potential continues analytically as
    U(r) = -M/r + U_ext(r) and rho0 = 0.  A ``vacuum`` state (M = 0, R0 = 0)
    delegates entirely to the external potential and serves as an analytic
    orbit oracle.
    """

    r_grid: np.ndarray
    U_grid: np.ndarray
    dU_grid: np.ndarray
    rho0_grid: np.ndarray
    E0: float
    R0: float
    U0: float
    M: float
    df: Optional[DistributionFunction]
    ext: Optional[ExternalPotential] = None
    _u_interp: object = field(default=None, repr=False)
    _du_interp: object = field(default=None, repr=False)
    _rho_interp: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.R0 > 0:
            # cubic Hermite with the solver's derivative data: monotone in
            # practice (exact slopes of a monotone profile) and 4th order, so
            # the interpolated curvature stays consistent with U' and rho0
            from scipy.interpolate import CubicHermiteSpline

            self._u_interp = CubicHermiteSpline(self.r_grid, self.U_grid, self.dU_grid)
            rho_tot = self.rho0_grid.copy()
            if self.ext is not None:
                rho_tot = rho_tot + ExternalPotential._arr(self.ext.rho, self.r_grid)
            d2U = np.empty_like(self.dU_grid)
            d2U[1:] = FOUR_PI * rho_tot[1:] - 2.0 * self.dU_grid[1:] / self.r_grid[1:]
            d2U[0] = FOUR_PI * rho_tot[0] / 3.0
            self._du_interp = CubicHermiteSpline(self.r_grid, self.dU_grid, d2U)
            self._rho_interp = PchipInterpolator(self.r_grid, self.rho0_grid)

    @classmethod
    def vacuum(cls, ext: ExternalPotential) -> "SteadyState":
        empty = np.zeros(0)
        u0 = float(ext.u(1e-12)) if ext.name == "kepler" else float(ext.u(0.0))
        return cls(
            r_grid=empty, U_grid=empty, dU_grid=empty, rho0_grid=empty,
            E0=0.0, R0=0.0, U0=u0, M=0.0, df=None, ext=ext,
        )

    # -- pointwise evaluation -------------------------------------------------

    def potential(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("negative radius")
        out = np.empty_like(r, dtype=float)
        inside = (r <= self.R0) if self.R0 > 0 else np.zeros(r.shape, dtype=bool)
        if self.R0 > 0 and np.any(inside):
            out[inside] = self._u_interp(r[inside])
        if np.any(~inside):
            ro = r[~inside]
            if self.M:
                with np.errstate(divide="ignore"):
                    out[~inside] = np.where(ro > 0, -self.M / np.maximum(ro, 1e-300), -np.inf)
            else:
                out[~inside] = 0.0
            if self.ext is not None:
                out[~inside] += ExternalPotential._arr(self.ext.u, ro)
        return out if out.ndim else float(out)

    def dpotential(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("negative radius")
        out = np.empty_like(r, dtype=float)
        inside = (r <= self.R0) if self.R0 > 0 else np.zeros(r.shape, dtype=bool)
        if self.R0 > 0 and np.any(inside):
            out[inside] = self._du_interp(r[inside])
        if np.any(~inside):
            ro = r[~inside]
            if self.M:
                with np.errstate(divide="ignore"):
                    out[~inside] = np.where(ro > 0, self.M / np.maximum(ro, 1e-300) ** 2, np.inf)
            else:
                out[~inside] = 0.0
            if self.ext is not None:
                out[~inside] += ExternalPotential._arr(self.ext.du, ro)
        return out if out.ndim else float(out)

    def density(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("negative radius")
        out = np.zeros_like(r, dtype=float)
        inside = r < self.R0
        if self.R0 > 0 and np.any(inside):
            out[inside] = np.maximum(self._rho_interp(r[inside]), 0.0)
        return out if out.ndim else float(out)

    def d2potential(self, r):
        """U'' through the Poisson identity U'' = 4 pi (rho0 + rho_ext) - 2 U'/r."""
        r = np.asarray(r, dtype=float)
        rho = self.density(r)
        if self.ext is not None:
            rho = rho + ExternalPotential._arr(self.ext.rho, r)
        out = FOUR_PI * rho - 2.0 * self.dpotential(r) / r
        return out if out.ndim else float(out)

    def veff(self, r, L: float):
        r = np.asarray(r, dtype=float)
        out = self.potential(r) + 0.5 * L * L / r**2 if L else self.potential(r)
        return out if np.ndim(out) else float(out)

    def length_scale(self) -> float:
        return self.R0 if self.R0 > 0 else 1.0


def _radial_grid(R0: float, n: int) -> np.ndarray:
    """Grid on (0, R0]: geometric near the origin, then clustered at both ends.

    Density quantities built from |phi'| are singular at R0 for small polytrope
    exponents, so both edges get quadratic clustering.
    """
    n_geo = max(n // 8, 16)
    geo = np.geomspace(1e-7 * R0, 0.02 * R0, n_geo, endpoint=False)
    u = np.linspace(0.0, 1.0, n - n_geo)
    body = 0.02 * R0 + (0.98 * R0) * 0.5 * (1.0 - np.cos(np.pi * u))
    grid = np.unique(np.concatenate([geo, body]))
    grid[-1] = R0
    return grid


def solve_equilibrium(
    df: DistributionFunction,
    ext: Optional[ExternalPotential] = None,
    y_central: float = 1.0,
    grid: int = 2000,
    r_max: float = 1e3,
) -> SteadyState:
    """Integrate the equilibrium outward from the prescribed central depth.

    y = E0 - U falls from y_central at r = 0 to the event y = 0 at the support
    radius R0; the Newtonian exterior match then fixes M and E0:
    M = -R0^2 y'(R0) - R0^2 U_ext'(R0) and E0 = -M/R0 + U_ext(R0).
    """
    if y_central <= 0:
        raise ValueError("central depth must be positive")
    if df.kind == "tabulated" and df._depth_range() < y_central:
        raise ValueError("table underresolved")

    if df.kind == "polytrope":
        cn = df.amplitude * polytrope_phi_constant(df.n)
        expo = df.n + 1.5

        def phi_of_depth(y):
            return cn * max(y, 0.0) ** expo
    else:
        # precomputed depth profile keeps the RHS cheap for tabulated phi
        qs = np.linspace(0.0, y_central * 1.0000001, 600)
        ps = np.array([
            phi_profile(df, df.E0 - q) if q > 0 else 0.0 for q in qs
        ])
        interp = PchipInterpolator(qs, ps)

        def phi_of_depth(y):
            return float(interp(min(max(y, 0.0), qs[-1])))

    rho_ext = (lambda r: float(ext.rho(r))) if ext is not None else (lambda r: 0.0)

    def rhs(r, y, yp):
        return -FOUR_PI * (phi_of_depth(y) + rho_ext(r))

    def stop(r, y, yp):
        return y

    traj = integrate_radial_ode(rhs, y_central, 0.0, r_max, stop=stop)
    if traj.event_r is None:
        raise RuntimeError("unbounded support")
    R0 = traj.event_r
    yp_R0 = traj.yp(R0)
    ext_mass = R0**2 * float(ext.du(R0)) if ext is not None else 0.0
    M = -(R0**2) * yp_R0 - ext_mass
    E0 = -M / R0 + (float(ext.u(R0)) if ext is not None else 0.0)

    r = np.concatenate([[0.0], _radial_grid(R0, grid)])
    y = np.asarray(traj.y(r), dtype=float)
    y[-1] = 0.0
    U = E0 - y
    dU = -np.asarray(traj.yp(r), dtype=float)
    dU[0] = 0.0
    rho0 = np.array([phi_of_depth(yi) for yi in y])
    rho0[-1] = 0.0

    return SteadyState(
        r_grid=r, U_grid=U, dU_grid=dU, rho0_grid=rho0,
        E0=E0, R0=R0, U0=E0 - y_central, M=M,
        df=df.with_cutoff(E0), ext=ext,
    )


def eval_state(ss: SteadyState, r):
    """(U, U', rho0) at radius r; analytic Newtonian continuation outside R0."""
    return ss.potential(r), ss.dpotential(r), ss.density(r)


@dataclass
class ValidationReport:
    checks: list
    integral_energy_form: float
    integral_radial_form: float

    @property
    def violations(self):
        return [name for name, ok, _ in self.checks if not ok]

    @property
    def passed(self) -> bool:
        return not self.violations

    def integral_rel_diff(self) -> float:
        scale = max(abs(self.integral_energy_form), abs(self.integral_radial_form), 1e-300)
        return abs(self.integral_energy_form - self.integral_radial_form) / scale


def _rho_abs_dphi(ss: SteadyState, r) -> float:
    """Density-like integral of |phi'|: 4 pi int |phi'(E)| sqrt(2(E-U(r))) dE."""
    df = ss.df
    Ur = float(ss.potential(r))
    if Ur >= ss.E0:
        return 0.0
    if df.kind == "polytrope":
        # |phi'| = n*A*(E0-E)^(n-1) is again a polytrope profile
        if df.n == 0.0:
            return 0.0
        if df.n < 0.0:
            return np.inf
        return df.amplitude * df.n * polytrope_phi_constant(df.n - 1.0) * (
            ss.E0 - Ur
        ) ** (df.n + 0.5)

    def f(E):
        return np.abs(df.dphi(E)) * np.sqrt(2.0 * np.maximum(E - Ur, 0.0))

    return FOUR_PI * integrate_singular(f, Ur, ss.E0, sing="both", order=96)


def validate_assumptions(ss: SteadyState, n_energy: int = 200) -> ValidationReport:
    """Check the standing hypotheses on a solved state.

    (a) phi' < 0 strictly inside the support; (b) subharmonicity of the total
    potential, i.e. the enclosed mass r^2 U'(r) is nondecreasing; (c) finiteness
    of the phase-space integral of |phi'| computed two independent ways --
    as (4 pi)^2 double quadrature over (E, r) and as the radial integral of the
    |phi'| density -- which must agree.
    """
    df = ss.df
    if df is None:
        raise ValueError("validation requires a solved state with a distribution function")
    checks = []

    Es = ss.U0 + (ss.E0 - ss.U0) * (np.arange(1, n_energy) / n_energy)
    dphi = np.asarray(df.dphi(Es))
    checks.append((
        "phi' strictly negative",
        bool(np.all(dphi < 0)),
        f"max phi' on interior grid = {dphi.max():.3e}",
    ))

    if df.kind == "polytrope":
        ok = 0.0 < df.n < 3.5
        checks.append(("polytrope exponent in (0, 7/2)", ok, f"n = {df.n}"))

    rr = ss.r_grid[1:]
    enclosed = rr**2 * ss.dU_grid[1:]
    tol = 1e-9 * (abs(enclosed).max() + 1e-300)
    checks.append((
        "r^2 U' nondecreasing (subharmonic total potential)",
        bool(np.all(np.diff(enclosed) >= -tol)),
        f"min increment = {np.diff(enclosed).min():.3e}",
    ))
    checks.append((
        "U strictly increasing",
        bool(np.all(np.diff(ss.U_grid) > 0)),
        "",
    ))
    checks.append((
        "rho0 nonincreasing",
        bool(np.all(np.diff(ss.rho0_grid) <= 1e-12 * (ss.rho0_grid.max() + 1e-300))),
        "",
    ))
    checks.append(("E0 negative", ss.E0 < 0, f"E0 = {ss.E0:.6g}"))
    match = ss.E0 + ss.M / ss.R0 - (float(ss.ext.u(ss.R0)) if ss.ext else 0.0)
    checks.append((
        "Newtonian exterior match",
        abs(match) <= 1e-8 * max(abs(ss.E0), 1e-300),
        f"residual = {match:.3e}",
    ))

    # (c) integrability of phi' over the support, two ways
    def inner_r(E):
        r_right = find_root(lambda r: float(ss.potential(r)) - E, 1e-9 * ss.R0, ss.R0).x

        def g(r):
            return r**2 * np.sqrt(np.maximum(2.0 * (E - ss.potential(r)), 0.0))

        return integrate_singular(g, 0.0, r_right, sing="right", order=64)

    def energy_integrand(E):
        return abs(float(df.dphi(E))) * inner_r(E)

    I_energy = FOUR_PI**2 * integrate_singular(
        energy_integrand, ss.U0, ss.E0, sing="both", order=96
    )

    def radial_integrand(r):
        return _rho_abs_dphi(ss, r) * r**2

    I_radial = FOUR_PI * integrate_singular(radial_integrand, 0.0, ss.R0, sing="right", order=128)

    rel = abs(I_energy - I_radial) / max(abs(I_energy), abs(I_radial), 1e-300)
    checks.append((
        "phi' integrable (two quadratures agree)",
        bool(np.isfinite(I_energy) and np.isfinite(I_radial) and rel < 1e-4),
        f"energy-form {I_energy:.8e} vs radial-form {I_radial:.8e} (rel {rel:.2e})",
    ))

    return ValidationReport(
        checks=checks, integral_energy_form=I_energy, integral_radial_form=I_radial
    )


def save_state(ss: SteadyState, csv_path, json_path=None):
    """Write the radial table as CSV plus a JSON header of scalar metadata."""
    csv_path = str(csv_path)
    if json_path is None:
        json_path = csv_path.rsplit(".", 1)[0] + ".json"
    fmt = "%.17g"
    with open(csv_path, "w") as fh:
        fh.write("r,U,dU,rho0\n")
        for row in zip(ss.r_grid, ss.U_grid, ss.dU_grid, ss.rho0_grid):
            fh.write(",".join(fmt % v for v in row) + "\n")
    header = {
        "schema_version": 1,
        "kind": ss.df.kind if ss.df else "vacuum",
        "n": ss.df.n if ss.df else None,
        "amplitude": ss.df.amplitude if ss.df else None,
        "E0": ss.E0,
        "R0": ss.R0,
        "U0": ss.U0,
        "M": ss.M,
    }
    with open(str(json_path), "w") as fh:
        json.dump(header, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return csv_path, str(json_path)


def load_state(csv_path, json_path=None, ext: Optional[ExternalPotential] = None) -> SteadyState:
    csv_path = str(csv_path)
    if json_path is None:
        json_path = csv_path.rsplit(".", 1)[0] + ".json"
    with open(str(json_path)) as fh:
        header = json.load(fh)
    rows = [
        line for line in Path(csv_path).read_text().splitlines()
        if line and not line.startswith("#") and not line.startswith("r,")
    ]
    data = np.loadtxt(rows, delimiter=",")
    if header["kind"] != "polytrope":
        raise ValueError("only polytrope states round-trip through CSV")
    df = DistributionFunction(
        kind="polytrope", n=header["n"], amplitude=header["amplitude"], E0=header["E0"]
    )
    return SteadyState(
        r_grid=data[:, 0], U_grid=data[:, 1], dU_grid=data[:, 2], rho0_grid=data[:, 3],
        E0=header["E0"], R0=header["R0"], U0=header["U0"], M=header["M"],
        df=df, ext=ext,
    )
