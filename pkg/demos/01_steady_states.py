# %% [markdown]
# # Self-gravitating kinetic equilibria
#
# Solve the equilibrium of an isotropic distribution phi(E) = A (E0 - E)_+^n,
# inspect the profile, and check the built-in consistency identities.

# %%
import numpy as np

from antonov import (
    DistributionFunction,
    plummer_potential,
    solve_equilibrium,
    validate_assumptions,
)

df = DistributionFunction(kind="polytrope", n=1.0, amplitude=1.0, E0=0.0)
ss = solve_equilibrium(df, y_central=1.0)

print(f"support radius R0 = {ss.R0:.6f}")
print(f"total mass     M  = {ss.M:.6f}")
print(f"cutoff energy  E0 = {ss.E0:.6f}  (central potential U0 = {ss.U0:.6f})")

# %% [markdown]
# The exterior matches a point mass: U(R0) = -M/R0, and the cutoff energy is
# an output of the solve, not an input.

# %%
print("exterior match residual:", ss.potential(ss.R0) + ss.M / ss.R0)

# the assumption report checks monotonicity, subharmonicity and the two
# independent quadratures of the phase-space integral of |phi'|
report = validate_assumptions(ss)
for name, ok, detail in report.checks:
    print(f"  [{'ok' if ok else 'BAD'}] {name}")
print("integral of |phi'| two ways:",
      report.integral_energy_form, report.integral_radial_form)

# %% [markdown]
# The same solver handles an external Plummer background; the kinetic
# component then carries only part of the total potential.

# %%
weak = solve_equilibrium(
    DistributionFunction(kind="polytrope", n=1.0, amplitude=0.015, E0=0.0),
    ext=plummer_potential(1.0, 1.0),
    y_central=0.3,
)
print(f"\nPlummer-embedded component: R0 = {weak.R0:.4f}, kinetic mass M = {weak.M:.6f}")

# %%
# optional: plot the profiles
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    r = np.linspace(1e-4, 1.4 * ss.R0, 400)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax1.plot(r, ss.potential(r))
    ax1.axvline(ss.R0, ls=":", c="k")
    ax1.set(xlabel="r", ylabel="U(r)", title="total potential")
    ax2.plot(r, ss.density(r))
    ax2.set(xlabel="r", ylabel="rho0(r)", title="mass density")
    fig.tight_layout()
    fig.savefig("steady_state_profiles.png", dpi=120)
    print("wrote steady_state_profiles.png")
except ImportError:
    pass
