"""Effective dimension, concentration levels, radii, and confidence sets."""

import json
import math

import numpy as np
import pytest

from scmest.bootstrap import BootstrapConfig, bootstrap_quantile
from scmest.errors import (
    DimensionMismatch,
    DomainError,
    MissingSampler,
    NonConverged,
    SingularHessian,
)
from scmest.estimate import EmpiricalAggregates, FitResult, SolverOptions, fit_erm
from scmest.inference import (
    AssumptionConstants,
    ConfidenceSet,
    EffDimReport,
    confidence_set,
    critical_sample_size,
    effective_dim_empirical,
    effective_dim_oracle,
    effective_dim_spectrum,
    oracle_radius,
    set_membership,
    t_n_bound,
    wald_radius,
)
from scmest.losses import batch_values, model_for_data
from scmest.scfun import ScParams, SpectralSummary
from scmest.simdata import Dataset, Process, generate, theta0_equispaced

EULER_GAMMA = 0.5772156649015329


def _fake_fit(H, G, theta=None):
    """A converged FitResult carrying prescribed aggregate matrices."""
    H = np.asarray(H, dtype=float)
    d = H.shape[0]
    theta = np.zeros(d) if theta is None else np.asarray(theta, dtype=float)
    agg = EmpiricalAggregates(
        L_n=0.0, S_n=np.zeros(d), H_n=H, G_n=np.asarray(G, dtype=float), n=100
    )
    return FitResult(
        theta_n=theta,
        aggregates_at_opt=agg,
        newton_decrement=0.0,
        iterations=1,
        converged=True,
    )


def _logistic_fit(n=400, d=3, seed=7):
    proc = Process(kind="logistic_wellspec", theta0=theta0_equispaced(d))
    data = generate(proc, n, seed)
    model = model_for_data("logistic", data.X)
    return model, data, fit_erm(model, data)


class TestEffectiveDimEmpirical:
    def test_matching_moments_give_exact_dimension(self):
        # perfect-square eigenvalues keep the factor-and-solve path exact
        H = np.diag([1.0, 4.0, 16.0])
        report = effective_dim_empirical(_fake_fit(H, H))
        assert report.value == 3.0
        assert report.kind == "empirical"

    def test_matching_moments_general_pd(self):
        rng = np.random.default_rng(3)
        B = rng.standard_normal((4, 4))
        H = B @ B.T + 4.0 * np.eye(4)
        value = effective_dim_empirical(_fake_fit(H, H)).value
        assert value == pytest.approx(4.0, rel=1e-12)

    def test_diagonal_trace_ratio(self):
        report = effective_dim_empirical(_fake_fit(np.diag([1.0, 2.0]), np.diag([2.0, 2.0])))
        assert report.value == 3.0

    def test_logistic_tracks_parameter_dimension(self):
        d = 5
        proc = Process(kind="logistic_wellspec", theta0=theta0_equispaced(d))
        errs = []
        for seed in range(10):
            data = generate(proc, 5000, seed)
            model = model_for_data("logistic", data.X)
            fit = fit_erm(model, data)
            errs.append(abs(effective_dim_empirical(fit).value / d - 1.0))
        assert np.mean(errs) < 0.15

    def test_affine_reparameterization_invariance(self):
        model, data, fit = _logistic_fit()
        A = np.array([[2.0, 0.5, 0.0], [0.0, 1.0, 0.3], [0.1, 0.0, 1.5]])
        X2 = data.X @ A.T
        data2 = Dataset(X=X2, y=data.y)
        fit2 = fit_erm(model_for_data("logistic", X2), data2)
        v1 = effective_dim_empirical(fit).value
        v2 = effective_dim_empirical(fit2).value
        assert abs(v1 - v2) / v1 < 1e-8

    def test_singular_hessian_raises(self):
        with pytest.raises(SingularHessian):
            effective_dim_empirical(_fake_fit(np.diag([1.0, 0.0]), np.eye(2)))


class TestEffectiveDimSpectrum:
    def test_equal_spectra_give_dimension_exactly(self):
        for d in (1, 10, 50):
            eigs = 2.0 * np.ones(d)
            assert effective_dim_spectrum(eigs, eigs) == float(d)

    def test_exponential_over_polynomial_is_bounded(self):
        i = np.arange(1, 51, dtype=float)
        value = effective_dim_spectrum(np.exp(-i), 1.0 / i)
        oracle = float(np.sum(i * np.exp(-i)))
        assert abs(value - oracle) < 1e-10
        assert abs(value - 0.9206735942) < 1e-9
        assert value < 1.0

    def test_polynomial_over_polynomial_grows_like_log(self):
        values = {}
        for d in (10, 100, 1000):
            i = np.arange(1, d + 1, dtype=float)
            values[d] = effective_dim_spectrum(i**-2.0, 1.0 / i)
            assert values[d] == pytest.approx(float(np.sum(1.0 / i)), rel=1e-12)
        assert values[10] < values[100] < values[1000]
        # harmonic number asymptotics: H_d = log d + gamma + O(1/d)
        assert abs(values[1000] - math.log(1000) - EULER_GAMMA) < 1e-3

    def test_validation(self):
        with pytest.raises(DimensionMismatch):
            effective_dim_spectrum([1.0, 2.0], [1.0])
        with pytest.raises(DomainError):
            effective_dim_spectrum([1.0, -1.0], [1.0, 1.0])
        with pytest.raises(DomainError):
            effective_dim_spectrum([1.0, 1.0], [1.0, 0.0])
        with pytest.raises(DomainError):
            effective_dim_spectrum([], [])


class TestEffectiveDimOracle:
    d = 5
    theta0 = np.ones(5)

    def _model(self):
        proc = Process(kind="linear_wellspec", theta0=self.theta0)
        data = generate(proc, 50, 0)
        return model_for_data("squared", data.X), proc

    def test_well_specified_linear_matches_dimension(self):
        model, proc = self._model()
        for seed in (0, 1):
            report = effective_dim_oracle(model, proc, self.theta0, 40000, seed)
            assert report.kind == "oracle_mc"
            assert abs(report.value - self.d) <= 4.0 * report.mc_stderr
            assert abs(report.value - self.d) < 0.25

    def test_heavy_tailed_noise_self_consistency(self):
        # t(3.5) noise inflates the score second moment by df/(df-2)
        model, _ = self._model()
        proc = Process(kind="linear_misspec_t", theta0=self.theta0, noise_df=3.5)
        r0 = effective_dim_oracle(model, proc, self.theta0, 60000, 0)
        r1 = effective_dim_oracle(model, proc, self.theta0, 60000, 1)
        combined = math.hypot(r0.mc_stderr, r1.mc_stderr)
        assert abs(r0.value - r1.value) <= 3.0 * combined
        analytic = self.d * 3.5 / 1.5
        assert abs(r0.value - analytic) <= 4.0 * r0.mc_stderr

    def test_stderr_shrinks_with_sample_size(self):
        # quadrupling mc_n should halve the batching stderr
        model, proc = self._model()
        small = [
            effective_dim_oracle(model, proc, self.theta0, 8000, 100 + s).mc_stderr
            for s in range(6)
        ]
        big = [
            effective_dim_oracle(model, proc, self.theta0, 32000, 100 + s).mc_stderr
            for s in range(6)
        ]
        ratio = np.mean(big) / np.mean(small)
        assert 0.5 / 1.2 <= ratio <= 0.5 * 1.2

    def test_missing_sampler(self):
        model, _ = self._model()
        with pytest.raises(MissingSampler):
            effective_dim_oracle(model, None, self.theta0, 100, 0)

    def test_determinism(self):
        model, proc = self._model()
        a = effective_dim_oracle(model, proc, self.theta0, 2000, 5)
        b = effective_dim_oracle(model, proc, self.theta0, 2000, 5)
        assert a.value == b.value and a.mc_stderr == b.mc_stderr


class TestTnBound:
    constants = AssumptionConstants(K1=1.0, K2=1.0, sigma_H=1.0)

    def test_hand_value(self):
        value = t_n_bound(0.05, self.constants, 1000, 5)
        assert abs(value - 0.11562187429565912) < 1e-12

    def test_half_at_burn_in_threshold(self):
        for K2, sH in [(1.0, 1.0), (0.5, 2.0), (3.0, 0.7)]:
            constants = AssumptionConstants(K1=1.0, K2=K2, sigma_H=sH)
            for d in (1, 5, 50):
                for delta in (0.05, 0.3):
                    n = math.ceil(4.0 * (K2 + 2.0 * sH**2) * math.log(4.0 * d / delta))
                    assert t_n_bound(delta, constants, n, d) <= 0.5

    def test_quadrupling_n_roughly_halves(self):
        a = t_n_bound(0.05, self.constants, 10**6, 5)
        b = t_n_bound(0.05, self.constants, 4 * 10**6, 5)
        assert 0.4 < b / a < 0.6

    def test_monotone_in_n_and_d(self):
        values_n = [t_n_bound(0.05, self.constants, n, 5) for n in (100, 1000, 10000, 100000)]
        assert all(a > b for a, b in zip(values_n, values_n[1:]))
        values_d = [t_n_bound(0.05, self.constants, 1000, d) for d in (2, 5, 20, 100)]
        assert all(a < b for a, b in zip(values_d, values_d[1:]))

    def test_validation(self):
        for delta in (0.0, 1.0, -0.2):
            with pytest.raises(DomainError):
                t_n_bound(delta, self.constants, 100, 5)
        with pytest.raises(DomainError):
            t_n_bound(0.05, self.constants, 0, 5)
        with pytest.raises(DomainError):
            t_n_bound(0.05, self.constants, 100, 0)

    def test_constants_validation(self):
        with pytest.raises(DomainError):
            AssumptionConstants(K1=0.0, K2=1.0, sigma_H=1.0)
        with pytest.raises(DomainError):
            AssumptionConstants(K1=1.0, K2=-1.0, sigma_H=1.0)
        with pytest.raises(DomainError):
            AssumptionConstants(K1=1.0, K2=1.0, sigma_H=1.0, M_lip=0.0)


class TestWaldRadius:
    constants = AssumptionConstants(K1=1.0, K2=1.0, sigma_H=1.0)

    def test_leading_term_only(self):
        # with a zero absolute constant the kernel factor degenerates to 1
        model, data, fit = _logistic_fit(n=200, d=2)
        report = effective_dim_empirical(fit)
        sq = wald_radius(
            fit, report, 0.05, "explicit_constant", self.constants, model=model, c_abs=0.0
        )
        assert sq == pytest.approx(24.0 * report.value / 200, rel=1e-12)

    def test_positive_constant_enlarges(self):
        model, data, fit = _logistic_fit(n=200, d=2)
        report = effective_dim_empirical(fit)
        base = wald_radius(
            fit, report, 0.05, "explicit_constant", self.constants, model=model, c_abs=0.0
        )
        wide = wald_radius(
            fit, report, 0.05, "explicit_constant", self.constants, model=model, c_abs=1.0
        )
        assert wide > base

    def test_requires_convergence(self):
        model, data, _ = _logistic_fit()
        stalled = fit_erm(model, data, SolverOptions(max_iter=1, tol=1e-12))
        assert not stalled.converged
        report = EffDimReport(value=3.0, kind="empirical")
        with pytest.raises(NonConverged):
            wald_radius(stalled, report, 0.05, "explicit_constant", self.constants, model=model)

    def test_validation(self):
        model, data, fit = _logistic_fit()
        report = effective_dim_empirical(fit)
        with pytest.raises(DomainError):
            wald_radius(fit, report, 1.5, "explicit_constant", self.constants, model=model)
        with pytest.raises(MissingSampler):
            wald_radius(fit, report, 0.05, "explicit_constant", None, model=model)
        with pytest.raises(MissingSampler):
            wald_radius(fit, report, 0.05, "oracle_mc")
        with pytest.raises(MissingSampler):
            wald_radius(fit, report, 0.05, "bootstrap", model=model, data=None)
        with pytest.raises(DomainError):
            wald_radius(fit, report, 0.05, "plugin", self.constants, model=model)

    def test_oracle_calibration_delegates(self):
        proc = Process(kind="linear_wellspec", theta0=theta0_equispaced(3))
        data = generate(proc, 60, 0)
        model = model_for_data("squared", data.X)
        fit = fit_erm(model, data)
        report = effective_dim_empirical(fit)
        sq = wald_radius(
            fit, report, 0.1, "oracle_mc", process=proc, calib_reps=50, seed=11
        )
        assert sq == oracle_radius("wald", proc, 60, 0.1, reps=50, seed=11)

    def test_bootstrap_calibration_delegates(self):
        model, data, fit = _logistic_fit(n=120, d=2)
        report = effective_dim_empirical(fit)
        with pytest.warns(UserWarning, match="too few"):
            config = BootstrapConfig(delta=0.1, B=80, seed=4)
        sq = wald_radius(
            fit, report, 0.1, "bootstrap", model=model, data=data, bootstrap_config=config
        )
        assert sq == bootstrap_quantile(model, data, fit, config, kind="wald").quantile


class TestOracleRadius:
    proc = Process(kind="linear_wellspec", theta0=theta0_equispaced(3))

    def test_deterministic(self):
        a = oracle_radius("wald", self.proc, 50, 0.1, reps=40, seed=2)
        b = oracle_radius("wald", self.proc, 50, 0.1, reps=40, seed=2)
        assert a == b

    def test_quantile_monotone_in_tail_mass(self):
        tight = oracle_radius("wald", self.proc, 50, 0.5, reps=60, seed=2)
        wide = oracle_radius("wald", self.proc, 50, 0.05, reps=60, seed=2)
        assert wide > tight

    def test_lr_and_wald_agree_for_quadratics(self):
        # for least squares the deviance is exactly the Wald distance
        a = oracle_radius("wald", self.proc, 50, 0.2, reps=30, seed=3)
        b = oracle_radius("lr", self.proc, 50, 0.2, reps=30, seed=3)
        assert a == pytest.approx(b, rel=1e-9)

    def test_validation(self):
        with pytest.raises(DomainError):
            oracle_radius("score", self.proc, 50, 0.1, reps=10)
        with pytest.raises(MissingSampler):
            oracle_radius("wald", None, 50, 0.1, reps=10)


class TestConfidenceSetMembership:
    def test_hand_ellipsoid(self):
        cs = ConfidenceSet(
            kind="wald",
            center=np.zeros(2),
            shape=np.eye(2),
            sq_radius=1.0,
            delta=0.05,
            calibration="explicit_constant",
        )
        model, data, fit = _logistic_fit(n=60, d=2)
        assert not set_membership(cs, fit, model, data, np.array([2.0, 0.0]))
        assert set_membership(cs, fit, model, data, np.array([0.5, 0.5]))
        assert set_membership(cs, fit, model, data, np.array([1.0, 0.0]))

    def test_center_membership_both_kinds(self):
        model, data, fit = _logistic_fit(n=120, d=2)
        for kind in ("wald", "lr"):
            cs = confidence_set(fit, kind, 0.05, "bootstrap", 0.3)
            assert set_membership(cs, fit, model, data, fit.theta_n)

    def test_wald_set_is_convex(self):
        model, data, fit = _logistic_fit(n=120, d=3)
        cs = confidence_set(fit, "wald", 0.05, "explicit_constant", 0.25)
        rng = np.random.default_rng(0)
        members = []
        while len(members) < 12:
            theta = fit.theta_n + 0.5 * rng.standard_normal(3)
            if set_membership(cs, fit, model, data, theta):
                members.append(theta)
        for a, b in zip(members[::2], members[1::2]):
            assert set_membership(cs, fit, model, data, 0.5 * (a + b))

    def test_lr_membership_affine_invariant(self):
        model, data, fit = _logistic_fit(n=300, d=3)
        A = np.array([[2.0, 0.5, 0.0], [0.0, 1.0, 0.3], [0.1, 0.0, 1.5]])
        X2 = data.X @ A.T
        data2 = Dataset(X=X2, y=data.y)
        model2 = model_for_data("logistic", X2)
        fit2 = fit_erm(model2, data2)
        rng = np.random.default_rng(1)
        for _ in range(4):
            theta = fit.theta_n + 0.3 * rng.standard_normal(3)
            stat = 2.0 * (
                float(np.mean(batch_values(model, theta, data.X, data.y)))
                - fit.aggregates_at_opt.L_n
            )
            for sq in (0.5 * stat, 2.0 * stat):
                cs1 = confidence_set(fit, "lr", 0.05, "oracle_mc", sq)
                cs2 = confidence_set(fit2, "lr", 0.05, "oracle_mc", sq)
                inside1 = set_membership(cs1, fit, model, data, theta)
                inside2 = set_membership(cs2, fit2, model2, data2, np.linalg.solve(A.T, theta))
                assert inside1 == inside2

    def test_dimension_mismatch(self):
        model, data, fit = _logistic_fit(n=60, d=2)
        cs = confidence_set(fit, "wald", 0.05, "bootstrap", 1.0)
        with pytest.raises(DimensionMismatch):
            set_membership(cs, fit, model, data, np.zeros(3))

    def test_json_round_trip(self):
        model, data, fit = _logistic_fit(n=60, d=2)
        cs = confidence_set(fit, "wald", 0.1, "bootstrap", 0.7)
        doc = json.loads(cs.to_json())
        assert doc["schema_version"] == "1"
        assert doc["shape"] == [list(row) for row in fit.aggregates_at_opt.H_n]
        back = ConfidenceSet.from_json(cs.to_json())
        assert back.kind == cs.kind
        assert back.sq_radius == cs.sq_radius
        assert back.delta == cs.delta
        assert back.calibration == cs.calibration
        assert np.array_equal(back.center, cs.center)
        assert np.array_equal(back.shape, cs.shape)

    def test_lr_set_serializes_without_shape(self):
        model, data, fit = _logistic_fit(n=60, d=2)
        cs = confidence_set(fit, "lr", 0.1, "bootstrap", 0.7)
        back = ConfidenceSet.from_json(cs.to_json())
        assert back.shape is None
        assert np.array_equal(back.center, cs.center)

    def test_validation(self):
        with pytest.raises(DomainError):
            ConfidenceSet("ball", np.zeros(2), np.eye(2), 1.0, 0.05, "bootstrap")
        with pytest.raises(DomainError):
            ConfidenceSet("wald", np.zeros(2), np.eye(2), 1.0, 0.05, "guesswork")
        with pytest.raises(DomainError):
            ConfidenceSet("wald", np.zeros(2), np.eye(2), 1.0, 1.5, "bootstrap")
        with pytest.raises(DomainError):
            ConfidenceSet("wald", np.zeros(2), np.eye(2), 0.0, 0.05, "bootstrap")
        with pytest.raises(DomainError):
            ConfidenceSet("wald", np.zeros(2), None, 1.0, 0.05, "bootstrap")
        with pytest.raises(DimensionMismatch):
            ConfidenceSet("wald", np.zeros(3), np.eye(2), 1.0, 0.05, "bootstrap")


class TestCriticalSampleSize:
    # R2* = lambda_min^{-1/2} R = 1, K_2 kernel constant = 1/2, log(e/delta) = 2
    params = ScParams(R=1.0, nu=2.0)
    spectrum = SpectralSummary(lambda_min=1.0, lambda_max=1.0)
    constants = AssumptionConstants(K1=1.0, K2=0.1, sigma_H=0.1)
    delta = math.exp(-1.0)

    def test_hand_value(self):
        n = critical_sample_size(self.params, self.spectrum, self.constants, 5.0, 5, self.delta)
        assert n == 40

    def test_eigenvalue_scaling(self):
        # lambda -> 4 lambda halves R2*, dividing the dominant branch by 4
        wide = SpectralSummary(lambda_min=4.0, lambda_max=4.0)
        n = critical_sample_size(self.params, wide, self.constants, 5.0, 5, self.delta)
        assert n == 10

    def test_monotone_in_delta(self):
        sizes = [
            critical_sample_size(self.params, self.spectrum, self.constants, 5.0, 5, d)
            for d in (0.01, 0.1, 0.36, 0.9)
        ]
        assert all(a >= b for a, b in zip(sizes, sizes[1:]))

    def test_exponent_branch_above_two(self):
        # at nu = 2.5 the exponent is 2, so scaling d* by 4 scales n by 16
        params = ScParams(R=1.0, nu=2.5)
        base = critical_sample_size(params, self.spectrum, self.constants, 5.0, 5, self.delta)
        scaled = critical_sample_size(params, self.spectrum, self.constants, 20.0, 5, self.delta)
        assert scaled == pytest.approx(16.0 * base, rel=0.01)

    def test_validation(self):
        with pytest.raises(DomainError):
            critical_sample_size(
                ScParams(R=1.0, nu=3.0), self.spectrum, self.constants, 5.0, 5, 0.05
            )
        with pytest.raises(DomainError):
            critical_sample_size(self.params, self.spectrum, self.constants, 5.0, 5, 0.0)
        with pytest.raises(DomainError):
            critical_sample_size(self.params, self.spectrum, self.constants, -1.0, 5, 0.05)
