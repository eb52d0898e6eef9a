# %% [markdown]
# # Polytrope envelope estimates for the resonance density
#
# Near a frequency minimum of the form omega - omega_* >= a (E0-E) + b L^2,
# the resonance density rho_* is bounded by the majorant
#
#   rho_tilde(r) = int (E0-E)^(n-1) / ((E0-E) + c L^2) d^3v,
#
# which collapses to a one-dimensional alpha-integral and obeys the envelope
# rho_tilde <= C r^(2s-2) (E0-U(r))^(n-1/2).  That makes rho_*/|x| integrable,
# so the number of oscillating modes stays finite for every exponent n > 0.

# %%
from antonov import (
    DistributionFunction,
    PolytropeBoundConfig,
    build_frequency_map,
    envelope_check,
    fit_frequency_ansatz,
    rho_tilde_alpha,
    rho_tilde_direct,
    solve_equilibrium,
)

for n in (0.5, 1.0, 2.0):
    df = DistributionFunction(kind="polytrope", n=n, amplitude=1.0, E0=0.0)
    ss = solve_equilibrium(df, y_central=1.0, grid=1200)
    cfg = PolytropeBoundConfig(n=n, c=2.0, s=0.45 * min(n, 1.0))

    # the alpha form is an exact change of variables of the (E, L) double
    # integral; the two quadratures are mutual oracles
    r_test = 0.4 * ss.R0
    d = rho_tilde_direct(ss, cfg, r_test)
    a = rho_tilde_alpha(ss, cfg, r_test)
    print(f"n = {n}: rho_tilde direct {d:.8f} vs alpha-form {a:.8f} "
          f"(rel {abs(d - a) / a:.1e})")

    env = envelope_check(ss, cfg)
    print(f"       envelope constant C = {env.C_best:.4f} "
          f"(stable: {env.passed}); L1 majorant of rho_*/r: {env.l1_majorant:.2f}")

# %% [markdown]
# The constants (a, b) of the local frequency model can be measured from the
# computed frequency map near its minimum, closing the loop between the
# envelope estimate and the trace bound.

# %%
df = DistributionFunction(kind="polytrope", n=1.0, amplitude=1.0, E0=0.0)
ss = solve_equilibrium(df, y_central=1.0)
fm = build_frequency_map(ss, (24, 18))
a_fit, b_fit, residual = fit_frequency_ansatz(fm)
print(f"fitted gap model: omega - omega_* ~ {a_fit:.3f} (E0-E) + {b_fit:.3f} L^2 "
      f"(rel residual {residual:.2f})")
print("both coefficients positive: the minimum sits at the cutoff-energy,"
      " zero-angular-momentum corner, the integrable regime")
