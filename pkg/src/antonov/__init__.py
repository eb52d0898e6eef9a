"""Spectral analysis of the radial Antonov operator for self-gravitating kinetic equilibria.

The package solves isotropic Vlasov-Poisson steady states phi(E), computes the
classical orbit structure of the resulting central potential (turning points,
radial periods, action-angle charts), and analyzes the radial Antonov operator:
essential-spectrum bands, the gap (0, omega_*^2), a trace bound on the number
of oscillating modes, and a Birman-Schwinger/Kalnajs Galerkin method that
locates the modes themselves.
"""

from .steady_state import (
    DistributionFunction,
    ExternalPotential,
    SteadyState,
    phi_profile,
    solve_equilibrium,
    eval_state,
    validate_assumptions,
    save_state,
    load_state,
    kepler_potential,
    harmonic_potential,
    isochrone_potential,
    plummer_potential,
)
from .orbits import (
    Orbit,
    circular_orbit,
    l_max,
    turning_points,
    period,
    angle_chart,
    orbit_fourier,
)
from .response import (
    FrequencyMap,
    PotentialDensityBasis,
    SpectralReport,
    ResponseOperator,
    build_frequency_map,
    essential_bands,
    rho_star,
    trace_bound,
    divergence_diagnostic,
    build_basis,
    assemble_response,
    kphi_trace_check,
    eigencurves,
    locate_modes,
    dense_reference_eigenvalues,
)
from .bounds import (
    PolytropeBoundConfig,
    rho_tilde_direct,
    rho_tilde_alpha,
    envelope_check,
    fit_frequency_ansatz,
)

__version__ = "0.1.0"
