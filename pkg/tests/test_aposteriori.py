import dataclasses
import math

import numpy as np
import pytest

from torusns.aposteriori import (
    ControlInequalityError,
    EstimatorSeries,
    control_lhs,
    error_estimator,
    growth_estimator,
    mild_residual,
    solve_control_inequality,
    verify_against_reference,
)
from torusns._quadrature import kernel_integral
from torusns.solver import SolveConfig, global_certificate, picard_solve
from torusns.spectral import FourierVectorField, random_field

from conftest import K_ROUNDED, N_ROUNDED

OMEGA = 0.7


@pytest.fixture(scope="module")
def short_run():
    return picard_solve(random_field(1, 6, 3, 0.3), SolveConfig(M=6, T=1.0, dt=0.01))


@pytest.fixture(scope="module")
def zero_run():
    return picard_solve(FourierVectorField.zero(3, 3), SolveConfig(M=3, T=0.5, dt=0.05))


class TestSeries:
    def test_validation(self):
        t = np.array([0.0, 0.1, 0.2])
        EstimatorSeries(t, np.ones(3), np.zeros(3))
        with pytest.raises(ValueError):
            EstimatorSeries(t + 0.1, np.ones(3), np.zeros(3))
        with pytest.raises(ValueError):
            EstimatorSeries(t, np.ones(2), np.zeros(3))
        with pytest.raises(ValueError):
            EstimatorSeries(t, -np.ones(3), np.zeros(3))
        with pytest.raises(ValueError):
            EstimatorSeries(t, np.ones(3), np.array([0, np.inf, 0]))

    def test_to_dict(self):
        s = EstimatorSeries(np.array([0.0, 1.0]), np.ones(2), np.zeros(2), np.ones(2))
        assert s.to_dict()["R"] == [1.0, 1.0]


class TestGrowthEstimator:
    def test_zero(self, zero_run):
        assert np.all(growth_estimator(zero_run) == 0)

    def test_heat_flow(self):
        u0 = random_field(2, 4, 3, 0.3)
        tr = picard_solve(u0, SolveConfig(M=4, T=1.0, dt=0.05), nonlinear=False)
        D = growth_estimator(tr)
        assert np.all(D <= 0.3 * np.exp(-(tr.times - 0.05)) * (1 + 1e-13))
        assert np.all(D >= tr.h1_norms)

    def test_regression_values(self, standard_run):
        D = growth_estimator(standard_run)
        frozen = {0: 0.29999999999999993, 10: 0.1298146275321469, 50: 0.05695223682859581, 100: 0.030654185294269127}
        for i, v in frozen.items():
            assert D[i] == pytest.approx(v, rel=1e-10)

    def test_dominates_midpoints(self, short_run):
        # the norm at a cell midpoint of the interpolant never exceeds the interpolated D
        D = growth_estimator(short_run)
        from torusns.spectral import sobolev_norm

        for i in range(0, len(short_run) - 1, 7):
            mid = (short_run.states[i] + short_run.states[i + 1]) * 0.5
            assert sobolev_norm(mid, 1) <= 0.5 * (D[i] + D[i + 1])


class TestErrorEstimator:
    def test_zero(self, zero_run):
        est = error_estimator(zero_run, OMEGA)
        assert np.all(est.E == 0)

    def test_bounds_full_mild_residual(self, short_run):
        est = error_estimator(short_run, OMEGA)
        full = mild_residual(short_run, OMEGA)
        assert np.all(full <= est.E)
        assert est.E[0] == 0

    def test_residual_shrinks_with_dt(self):
        u0 = random_field(1, 6, 3, 0.3)
        res = []
        for dt in (0.02, 0.01):
            tr = picard_solve(u0, SolveConfig(M=6, T=0.5, dt=dt))
            res.append(error_estimator(tr, OMEGA).residual.max())
        assert res[1] < res[0] / 3

    def test_components(self, standard_estimate):
        est = standard_estimate
        assert np.allclose(est.E, est.residual + est.tail)
        assert np.all(est.tail >= 0) and np.all(est.residual >= 0)
        # the truncation tail dominates the time-discretization residual here
        assert est.residual.max() < est.tail.max()


class TestControlInequality:
    def test_zero_error(self):
        t = np.linspace(0, 1, 21)
        sol = solve_control_inequality(t, np.full(21, 0.3), np.zeros(21), K_ROUNDED, OMEGA)
        assert np.all(sol.R == 0)
        assert np.all(sol.margins == 0)

    def test_constant_error_fixed_point(self):
        eps = 0.05
        t = np.linspace(0, 2, 201)
        sol = solve_control_inequality(t, np.zeros(201), np.full(201, eps), K_ROUNDED, OMEGA)
        # constant-coefficient reduction: the history weight is at most G = int_0^T mu e^-tau
        G = kernel_integral(OMEGA, t[-1])
        KG = K_ROUNDED * G
        fixed = (1 - math.sqrt(1 - 4 * KG * eps)) / (2 * KG)
        R = sol.R_equality
        assert np.all(R >= eps)
        assert np.all(np.diff(R) >= 0)
        assert np.all(R <= fixed)
        # R is nondecreasing, so its own value bounds the history integrand
        for i in (1, 50, 150, 200):
            Gi = kernel_integral(OMEGA, t[i])
            assert R[i] <= (eps + K_ROUNDED * Gi * R[i] ** 2) * (1 + 1e-12)
            assert R[i] >= eps + K_ROUNDED * Gi * eps**2 * (1 - 1e-12)

    def test_monotone_in_error(self):
        t = np.linspace(0, 3, 151)
        rng = np.random.default_rng(3)
        D = 0.3 * np.exp(-t)
        E1 = 1e-3 * rng.random(151)
        E2 = E1 + 1e-3 * rng.random(151)
        R1 = solve_control_inequality(t, D, E1, K_ROUNDED, OMEGA).R
        R2 = solve_control_inequality(t, D, E2, K_ROUNDED, OMEGA).R
        assert np.all(R2 >= R1)

    def test_contraction_regime_bound(self):
        t = np.linspace(0, 5, 251)
        u0_norm = 0.3
        cert = global_certificate(random_field(1, 4, 3, u0_norm), K_ROUNDED, N_ROUNDED)
        D = cert.envelope(t)
        E = 1e-4 * (1 + np.sin(3 * t) ** 2)
        sol = solve_control_inequality(t, D, E, K_ROUNDED, OMEGA)
        KG = K_ROUNDED * kernel_integral(OMEGA, t[-1])
        supR = sol.R_equality.max()
        assert KG * (2 * D.max() + supR) < 1
        assert supR <= E.max() / (1 - KG * (2 * D.max() + supR))

    def test_failure_reports_time(self):
        t = np.linspace(0, 1, 51)
        with pytest.raises(ControlInequalityError) as info:
            solve_control_inequality(t, np.full(51, 0.3), np.full(51, 10.0), K_ROUNDED, OMEGA)
        assert 0 <= info.value.t_star <= 1
        assert info.value.defect > 0

    def test_late_failure(self):
        # growth pushes the quadratic past its discriminant only after some time
        t = np.linspace(0, 4, 201)
        E = 0.02 * np.exp(t)
        with pytest.raises(ControlInequalityError) as info:
            solve_control_inequality(t, np.full(201, 0.3), E, K_ROUNDED, OMEGA)
        assert info.value.t_star > 0

    def test_argument_checks(self):
        t = np.linspace(0, 1, 11)
        with pytest.raises(ValueError):
            solve_control_inequality(t, np.zeros(11), np.zeros(11), K_ROUNDED, OMEGA, safety=1.0)
        with pytest.raises(ValueError):
            solve_control_inequality(t, np.zeros(11), np.zeros(11), K_ROUNDED, OMEGA, B=0.5)
        with pytest.raises(ValueError):
            solve_control_inequality(t, np.zeros(11), np.zeros(11), -1.0, OMEGA)

    def test_refined_recheck(self):
        t = np.linspace(0, 2, 101)
        D = 0.3 * np.exp(-t)
        E = 1e-3 * (1 + t)
        sol = solve_control_inequality(t, D, E, K_ROUNDED, OMEGA)
        assert np.all(sol.margins >= 0) and np.all(sol.margins_refined >= 0)
        lhs4 = control_lhs(t, D, E, sol.R, K_ROUNDED, OMEGA, refine=4)
        assert np.all(sol.R >= lhs4)

    def test_standard_run(self, standard_control):
        assert np.all(standard_control.margins >= 0)
        assert np.all(standard_control.margins_refined >= 0)
        assert standard_control.R.max() < 1e-3
        doc = standard_control.to_dict()
        assert doc["safety"] == 1.1


class TestReference:
    def test_identical_trajectories(self, short_run):
        R = np.linspace(0, 1, len(short_run))
        rep = verify_against_reference(short_run, short_run, R)
        assert rep.passed
        assert np.array_equal(rep.margins, R)

    def test_corrupted_trajectory_flagged(self, standard_run, standard_control):
        bump = random_field(99, 8, 3, 1e-2)
        states = tuple(s + bump if i >= 200 else s for i, s in enumerate(standard_run.states))
        bad = dataclasses.replace(standard_run, states=states)
        rep = verify_against_reference(bad, standard_run, standard_control.R)
        assert not rep.passed
        assert rep.violations[0][0] == pytest.approx(standard_run.times[200])
        assert len(rep.violations) == len(standard_run) - 200

    def test_R_shape_checked(self, short_run):
        with pytest.raises(ValueError):
            verify_against_reference(short_run, short_run, np.zeros(3))

    def test_standard_against_reference(self, standard_run, reference_run, standard_control):
        rep = verify_against_reference(standard_run, reference_run, standard_control.R)
        assert len(rep.times) == len(standard_run)
        assert rep.passed
