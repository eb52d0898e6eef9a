# %% [markdown]
# # Orbits, periods and the frequency map
#
# Every bound orbit in the equilibrium potential is labeled by (E, L); the
# radial period T(E, L) and its frequency omega_r = 2 pi / T drive everything
# downstream.  Analytic potentials give closed-form checks.

# %%
import numpy as np

from antonov import (
    DistributionFunction,
    SteadyState,
    build_frequency_map,
    isochrone_potential,
    kepler_potential,
    solve_equilibrium,
)
from antonov.orbits import angle_chart, l_max, orbit_fourier, period

# Kepler: T = 2 pi (-2E)^(-3/2), independent of L
kep = SteadyState.vacuum(kepler_potential())
E = -0.5
for f in (0.2, 0.6, 0.9):
    T, w = period(kep, E, f * l_max(kep, E))
    print(f"Kepler L/Lmax={f}: T = {T:.12f}  (law: {2*np.pi*(-2*E)**-1.5:.12f})")

# isochrone: same third law at every L, a nontrivial degeneracy
iso = SteadyState.vacuum(isochrone_potential(1.0))
Ts = [period(iso, -0.25, f * l_max(iso, -0.25))[0] for f in (0.1, 0.5, 0.9)]
print("isochrone spread over L:", max(Ts) - min(Ts))

# %% [markdown]
# The angle chart parametrizes each orbit by theta in [0, pi] with theta = 0
# at the outer turning point; orbit averages become cosine series.

# %%
df = DistributionFunction(kind="polytrope", n=1.0, amplitude=1.0, E0=0.0)
ss = solve_equilibrium(df, y_central=1.0)
E = 0.5 * (ss.U0 + ss.E0)
orb = angle_chart(ss, E, 0.5 * l_max(ss, E))
print(f"turning points: r- = {orb.r_minus:.5f}, r+ = {orb.r_plus:.5f}")
print(f"period T = {orb.T:.8f}, omega_r = {orb.omega_r:.8f}")

coeffs = orbit_fourier(ss, orb, lambda r: 1.0 / r, k_max=6)
print("cosine coefficients of 1/r along the orbit:", np.round(coeffs, 6))

# %% [markdown]
# The frequency map samples omega_r over the whole (E, L) support; its
# minimum omega_* bounds the essential spectrum away from zero.

# %%
fm = build_frequency_map(ss, (24, 18))
print(f"omega_* = {fm.omega_star:.8f} at (E, L) = {fm.argmin}")
print(f"omega range on the support: [{fm.omega.min():.4f}, {fm.omega.max():.4f}]")
print(f"minimum on the circular boundary: {fm.on_circular}")

# the phase-space weights integrate any function of (E, L); the total mass
# is the cleanest cross-check of the measure
mass = float(np.sum(fm.weights * np.asarray(ss.df.phi(fm.E_nodes))[:, None] * 2 * np.pi))
print(f"mass from the map: {mass:.8f}  vs  M = {ss.M:.8f}")

# %%
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.6))
    sc = ax.pcolormesh(fm.s_nodes, fm.t_nodes, fm.omega.T, shading="nearest")
    fig.colorbar(sc, label="omega_r")
    ax.set(xlabel="(E-U0)/(E0-U0)", ylabel="L/Lmax(E)", title="frequency map")
    fig.tight_layout()
    fig.savefig("frequency_map.png", dpi=120)
    print("wrote frequency_map.png")
except ImportError:
    pass
