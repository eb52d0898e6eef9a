import numpy as np
import pytest

from antonov.numerics import integrate_singular
from antonov.steady_state import (
    DistributionFunction,
    ExternalPotential,
    SteadyState,
    eval_state,
    isochrone_potential,
    load_state,
    phi_profile,
    plummer_potential,
    polytrope_phi_constant,
    save_state,
    solve_equilibrium,
    validate_assumptions,
)


class TestPhiProfile:
    def test_empty_support(self):
        df = DistributionFunction(kind="polytrope", n=1.0, amplitude=1.0, E0=-0.2)
        assert phi_profile(df, -0.2) == 0.0
        assert phi_profile(df, 0.5) == 0.0

    @pytest.mark.parametrize("n", [0.5, 1.0, 2.0, 3.0])
    def test_constant_against_quadrature(self, n):
        # c_n (E0-u)^(n+3/2) vs the defining integral 4 pi int phi v^2 dv
        cn = polytrope_phi_constant(n)
        vmax = np.sqrt(2.0)
        quad = 4 * np.pi * integrate_singular(
            lambda v: np.maximum(1 - 0.5 * v * v, 0.0) ** n * v * v,
            0.0, vmax, sing="both", order=96,
        )
        assert quad == pytest.approx(cn, rel=1e-10)

    def test_polytrope_value(self):
        df = DistributionFunction(kind="polytrope", n=1.0, amplitude=1.0, E0=0.0)
        assert phi_profile(df, -1.0) == pytest.approx(polytrope_phi_constant(1.0), rel=1e-12)

    def test_leading_order(self):
        n = 1.5
        df = DistributionFunction(kind="polytrope", n=n, amplitude=1.0, E0=0.0)
        for eps in (1e-3, 1e-5):
            ratio = phi_profile(df, -eps) / eps ** (n + 1.5)
            assert ratio == pytest.approx(polytrope_phi_constant(n), rel=1e-10)

    def test_tabulated_matches_polytrope(self):
        n = 1.0
        E = np.linspace(-1.0, 0.0, 400)
        phi = np.maximum(-E, 0.0) ** n
        dphi = -n * np.maximum(-E, 1e-300) ** (n - 1)
        dft = DistributionFunction(kind="tabulated", E0=0.0, table=(E, phi, dphi))
        dfp = DistributionFunction(kind="polytrope", n=n, amplitude=1.0, E0=0.0)
        for u in (-0.9, -0.5, -0.1):
            assert phi_profile(dft, u) == pytest.approx(phi_profile(dfp, u), rel=1e-6)

    def test_table_underresolved(self):
        E = np.linspace(-0.5, 0.0, 50)
        dft = DistributionFunction(kind="tabulated", E0=0.0,
                                   table=(E, -E, -np.ones_like(E)))
        with pytest.raises(ValueError, match="table underresolved"):
            phi_profile(dft, -0.9)


class TestSolveEquilibrium:
    def test_lane_emden_index1_profile(self):
        # phi exponent -1/2 gives the Lane-Emden index-1 density sin(ar)/(ar)
        df = DistributionFunction(kind="polytrope", n=-0.5, amplitude=1.0, E0=0.0)
        a = np.sqrt(4 * np.pi * polytrope_phi_constant(-0.5))
        ss = solve_equilibrium(df, y_central=1.0)
        assert ss.R0 == pytest.approx(np.pi / a, abs=1e-10)
        r = np.linspace(1e-6, ss.R0, 400)
        y_exact = np.sin(a * r) / (a * r)
        assert np.max(np.abs((ss.E0 - ss.potential(r)) - y_exact)) < 1e-6

    def test_exterior_match(self, poly1, weak_plummer):
        for ss in (poly1, weak_plummer):
            u_ext = float(ss.ext.u(ss.R0)) if ss.ext else 0.0
            assert abs(ss.potential(ss.R0) + ss.M / ss.R0 - u_ext) < 1e-8

    def test_mass_quadrature(self, poly1):
        M_quad = 4 * np.pi * integrate_singular(
            lambda r: poly1.density(r) * r**2, 0.0, poly1.R0, sing="none", order=128
        )
        assert M_quad == pytest.approx(poly1.M, rel=1e-6)

    def test_unbounded_support(self):
        df = DistributionFunction(kind="polytrope", n=1.0, amplitude=1.0, E0=0.0)
        with pytest.raises(RuntimeError, match="unbounded support"):
            solve_equilibrium(df, y_central=1.0, r_max=0.1)

    def test_amplitude_monotone_response(self):
        df1 = DistributionFunction(kind="polytrope", n=1.0, amplitude=1.0, E0=0.0)
        df2 = DistributionFunction(kind="polytrope", n=1.0, amplitude=2.0, E0=0.0)
        R1 = solve_equilibrium(df1, y_central=1.0, grid=600).R0
        R2 = solve_equilibrium(df2, y_central=1.0, grid=600).R0
        assert R2 < R1

    def test_homology_scaling(self):
        # amplitude s, y_central t: R0 scales as (s t^(n+1/2))^(-1/2) for n = 1
        df1 = DistributionFunction(kind="polytrope", n=1.0, amplitude=1.0, E0=0.0)
        df2 = DistributionFunction(kind="polytrope", n=1.0, amplitude=3.0, E0=0.0)
        s1 = solve_equilibrium(df1, y_central=1.0, grid=600)
        s2 = solve_equilibrium(df2, y_central=0.5, grid=600)
        expected = (3.0 * 0.5**1.5) ** -0.5
        assert s2.R0 / s1.R0 == pytest.approx(expected, rel=1e-8)

    def test_subharmonicity_and_monotonicity(self, poly1, weak_plummer):
        for ss in (poly1, weak_plummer):
            assert np.all(np.diff(ss.U_grid) > 0)
            enclosed = ss.r_grid[1:] ** 2 * ss.dU_grid[1:]
            assert np.all(np.diff(enclosed) >= -1e-12 * enclosed.max())
            assert np.all(np.diff(ss.rho0_grid) <= 1e-12 * ss.rho0_grid.max())
            assert ss.E0 < 0

    def test_external_mass_consistency(self, weak_plummer):
        # M must equal the kinetic mass only, not include the Plummer mass
        ss = weak_plummer
        M_quad = 4 * np.pi * integrate_singular(
            lambda r: ss.density(r) * r**2, 0.0, ss.R0, sing="none", order=128
        )
        assert M_quad == pytest.approx(ss.M, rel=1e-6)

    def test_tabulated_solve_matches_polytrope(self, poly1):
        # a tabulated copy of the n = 1 profile must reproduce the same state
        E = np.linspace(-1.5, 0.0, 800)
        table = (E, np.maximum(-E, 0.0), -np.ones_like(E))
        dft = DistributionFunction(kind="tabulated", E0=0.0, table=table)
        ss_t = solve_equilibrium(dft, y_central=1.0, grid=800)
        assert ss_t.R0 == pytest.approx(poly1.R0, rel=1e-6)
        assert ss_t.M == pytest.approx(poly1.M, rel=1e-6)
        assert ss_t.E0 == pytest.approx(poly1.E0, rel=1e-6)


class TestEvalState:
    def test_boundary_density(self, poly1):
        U, dU, rho = eval_state(poly1, poly1.R0)
        assert rho == 0.0

    def test_far_field(self, poly1):
        U, dU, rho = eval_state(poly1, 1e9)
        assert abs(U) < 1e-8
        assert rho == 0.0

    def test_interpolation_against_refined(self, poly1):
        df = DistributionFunction(kind="polytrope", n=1.0, amplitude=1.0, E0=0.0)
        fine = solve_equilibrium(df, y_central=1.0, grid=4000)
        r = np.linspace(1e-5, poly1.R0 * 0.9999, 500)
        assert np.max(np.abs(poly1.potential(r) - fine.potential(r))) < 1e-7

    def test_negative_radius(self, poly1):
        with pytest.raises(ValueError, match="negative radius"):
            eval_state(poly1, -0.1)

    def test_poisson_curvature(self, poly1):
        # d2potential follows the Poisson identity; cross-check by differencing dU
        r = np.linspace(0.1, 0.6, 7)
        h = 1e-6
        fd = (poly1.dpotential(r + h) - poly1.dpotential(r - h)) / (2 * h)
        assert np.max(np.abs(fd - poly1.d2potential(r))) < 1e-4 * np.max(np.abs(fd))


class TestValidation:
    def test_poly1_integrals_agree(self, poly1):
        rep = validate_assumptions(poly1)
        assert rep.passed, rep.violations
        assert rep.integral_rel_diff() < 1e-6

    def test_poly05_integrable(self, poly05):
        rep = validate_assumptions(poly05)
        assert rep.passed, rep.violations
        assert np.isfinite(rep.integral_energy_form)

    def test_flat_segment_flagged(self):
        E = np.linspace(-1.0, 0.0, 300)
        phi = np.maximum(-E, 0.0)
        dphi = -np.ones_like(E)
        flat = (E > -0.6) & (E < -0.4)
        phi[flat] = 0.6
        dphi[flat] = 0.0
        dft = DistributionFunction(kind="tabulated", E0=0.0, table=(E, phi, dphi))
        ss = solve_equilibrium(dft, y_central=0.9, grid=600)
        rep = validate_assumptions(ss)
        assert "phi' strictly negative" in rep.violations


class TestSerialization:
    def test_roundtrip(self, poly1, tmp_path):
        csv_path, json_path = save_state(poly1, tmp_path / "state.csv")
        loaded = load_state(csv_path, json_path)
        assert loaded.M == poly1.M
        assert loaded.R0 == poly1.R0
        assert loaded.E0 == poly1.E0
        r = np.linspace(1e-4, poly1.R0, 50)
        assert np.allclose(loaded.potential(r), poly1.potential(r), rtol=0, atol=1e-12)
        assert np.allclose(loaded.density(r), poly1.density(r), rtol=0, atol=1e-12)


class TestExternalPotential:
    def test_consistency_check_catches_bad_derivative(self):
        with pytest.raises(ValueError, match="du inconsistent"):
            ExternalPotential(
                u=lambda r: -1.0 / np.sqrt(1 + np.asarray(r) ** 2),
                du=lambda r: 0.5 * np.asarray(r) / (1 + np.asarray(r) ** 2) ** 1.5,
                rho=lambda r: 0.0 * np.asarray(r),
                name="broken",
            )

    def test_shipped_oracles_consistent(self):
        # constructing runs the spot checks
        isochrone_potential(0.7)
        plummer_potential(2.0, 0.5)

    def test_vacuum_state_delegates(self):
        ss = SteadyState.vacuum(plummer_potential(1.0, 1.0))
        assert ss.potential(0.0) == pytest.approx(-1.0)
        assert ss.density(2.0) == 0.0
        assert ss.M == 0.0


class TestDistributionFunction:
    def test_exponent_range(self):
        with pytest.raises(ValueError):
            DistributionFunction(kind="polytrope", n=3.6)
        with pytest.raises(ValueError):
            DistributionFunction(kind="polytrope", n=-1.0)

    def test_cutoff_reanchoring(self):
        df = DistributionFunction(kind="polytrope", n=1.0, amplitude=2.0, E0=0.0)
        shifted = df.with_cutoff(-0.3)
        assert shifted.phi(-0.8) == pytest.approx(df.phi(-0.5))

    def test_amplitude_positive(self):
        with pytest.raises(ValueError):
            DistributionFunction(kind="polytrope", n=1.0, amplitude=0.0)
