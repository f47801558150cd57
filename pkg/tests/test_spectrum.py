from fractions import Fraction

import numpy as np
import pytest

from prodopt import cca, spectrum, tsvd
from prodopt.spectrum import (SpectrumInputs, kappa_cca_l12, kappa_cca_lr12,
                              kappa_ordering_check, kappa_svd, v_bar, v_under)


def random_inputs(rng, m, delta=1e-12):
    sigma = np.sort(rng.uniform(0.05, 3.0, size=m + 1))[::-1]
    sigma += np.linspace(0.2, 0.0, m + 1)  # enforce clear gaps
    mu = np.sort(rng.uniform(0.1, 4.0, size=m))[::-1]
    mu += np.linspace(0.2, 0.0, m)
    return SpectrumInputs(sigma, mu, delta)


class TestInputs:
    def test_validation(self):
        with pytest.raises(ValueError, match="strictly decreasing"):
            SpectrumInputs([1.0, 1.0], [1.0])
        with pytest.raises(ValueError, match="m\\+1"):
            SpectrumInputs([1.0], [1.0])
        with pytest.raises(ValueError, match="mu"):
            SpectrumInputs([2.0, 1.0, 0.5], [1.0, 2.0])
        SpectrumInputs([2.0, 1.0, 0.0], [2.0, 1.0])  # zero tail is fine


class TestKappaL12:
    def test_m_equals_one_reduces(self):
        inputs = SpectrumInputs([3.0, 1.0], [1.7])
        assert kappa_cca_l12(inputs) == pytest.approx((3 + 1) / (3 - 1))

    def test_worked_instance(self):
        # mu = (2, 1), sigma = (3, 2, 1):
        # numerator max(0.5*3*5, 2*4) = 8, denominator min(0.5*1*1, 1*1) = 0.5
        inputs = SpectrumInputs([3.0, 2.0, 1.0], [2.0, 1.0])
        assert kappa_cca_l12(inputs) == pytest.approx(16.0)

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        inputs = random_inputs(rng, 4)
        scaled = SpectrumInputs(2.7 * inputs.sigma, inputs.mu, inputs.delta)
        assert kappa_cca_l12(scaled) == pytest.approx(kappa_cca_l12(inputs),
                                                      rel=1e-12)

    def test_degenerate_rejected(self):
        # exact ties are rejected by the input invariant already
        with pytest.raises(ValueError, match="strictly decreasing"):
            SpectrumInputs([3.0, 2.0, 2.0], [2.0, 1.0])
        # the in-formula guard fires if a degenerate spectrum sneaks past
        inputs = SpectrumInputs.__new__(SpectrumInputs)
        object.__setattr__(inputs, "sigma", np.array([3.0, 2.0, 2.0]))
        object.__setattr__(inputs, "mu", np.array([2.0, 1.0]))
        object.__setattr__(inputs, "delta", 0.0)
        with pytest.raises(ValueError, match="zero Hessian eigenvalue"):
            kappa_cca_l12(inputs)


class TestKappaLR12:
    def test_delta_zero_pair_identity(self):
        # v_bar(0) = (mu_i + mu_j)(s_i + s_j) / (mu_i s_i + mu_j s_j)
        inputs = SpectrumInputs([3.0, 2.0, 1.0, 0.4], [2.5, 1.5, 0.5], 0.0)
        s, mu = inputs.sigma, inputs.mu
        for i in range(1, 4):
            for j in range(i + 1, 4):
                expected = (mu[i - 1] + mu[j - 1]) * (s[i - 1] + s[j - 1]) \
                    / (mu[i - 1] * s[i - 1] + mu[j - 1] * s[j - 1])
                assert v_bar(inputs, i, j) == pytest.approx(expected)

    def test_pair_bounds_sum_to_two_at_zero(self):
        inputs = SpectrumInputs([3.0, 2.0, 1.0, 0.4], [2.5, 1.5, 0.5], 0.0)
        for i in range(1, 4):
            for j in range(i + 1, 5):
                total = v_bar(inputs, i, j) + v_under(inputs, i, j)
                assert total == pytest.approx(2.0, rel=1e-12)

    def test_m_equals_one_matches_l12(self):
        inputs = SpectrumInputs([3.0, 1.0], [1.7], 1e-12)
        assert kappa_cca_lr12(inputs) == pytest.approx(kappa_cca_l12(inputs),
                                                       rel=1e-9)

    def test_adjacent_simplification_small_delta(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            inputs = random_inputs(rng, 5, delta=1e-14)
            assert kappa_cca_lr12(inputs) == pytest.approx(
                kappa_cca_lr12(inputs, adjacent_only=True), rel=1e-12)


class TestKappaSvd:
    def setup_method(self):
        self.spec = tsvd.SvdBenchmarkSpec(m=30, n=20, p=10, gamma=1 / 1.5)
        self.inputs = tsvd.benchmark_spectrum_inputs(self.spec)

    def test_euclidean_value(self):
        # exact ratio for gamma = 2/3, N = diag(10..1):
        # (mu1+mu2)(1+gamma) / ((mu9-mu10)(gamma^8 - gamma^9)) = 95 * (3/2)^8
        expected = Fraction(95) * Fraction(3, 2) ** 8
        got = kappa_svd(self.inputs, "euclidean")
        assert got == pytest.approx(float(expected), rel=1e-12)
        # the same quantity printed as a continued-fraction convergent
        assert got == pytest.approx(153389 / 63, rel=5e-8)

    def test_scaled_value(self):
        assert kappa_svd(self.inputs, "r12") == pytest.approx(95.0, rel=1e-12)
        with_delta = tsvd.benchmark_spectrum_inputs(self.spec, delta=1e-15)
        assert kappa_svd(with_delta, "r12") == pytest.approx(95.0, rel=1e-12)

    def test_improvement(self):
        assert kappa_svd(self.inputs, "r12") <= kappa_svd(self.inputs,
                                                          "euclidean")

    def test_unknown_metric(self):
        with pytest.raises(ValueError):
            kappa_svd(self.inputs, "spectral")


class TestOrderingCheck:
    def test_random_spectra_all_pass(self):
        rng = np.random.default_rng(2)
        for trial in range(40):
            m = int(rng.integers(2, 7))
            assert kappa_ordering_check(random_inputs(rng, m, 1e-12))

    def test_m_one_rejected(self):
        with pytest.raises(ValueError, match="m >= 2"):
            kappa_ordering_check(SpectrumInputs([2.0, 1.0], [1.0], 1e-12))

    def test_near_degenerate_with_small_delta(self):
        sigma = np.array([1.0, 1.0 - 1e-6, 1.0 - 2e-6, 1e-3])
        mu = np.array([3.0, 2.0, 1.0])
        inputs = SpectrumInputs(sigma, mu, 1e-16)
        assert kappa_ordering_check(inputs)


class TestNumericalSpectrum:
    def test_svd_benchmark_matches_formulas(self):
        spec = tsvd.SvdBenchmarkSpec(m=60, n=40, p=5, gamma=1 / 1.5, seed=3)
        problem, u_star, v_star = tsvd.build_benchmark(spec, metric_tag="R12")
        inputs = tsvd.benchmark_spectrum_inputs(spec, delta=problem.delta)
        for tag, metric in (("E", "euclidean"), ("R12", "r12")):
            tagged = tsvd.SvdProblem(problem.a, problem.weights,
                                     problem.delta, tag)
            mp = tsvd.make_manifold_problem(tagged)
            report = spectrum.numerical_spectrum(mp, [u_star, v_star])
            assert report.kappa == pytest.approx(kappa_svd(inputs, metric),
                                                 rel=1e-4)
            assert report.sym_residual < 1e-5
            assert report.gram_error < 1e-9
            assert report.dimension == 60 * 5 - 15 + 40 * 5 - 15

    def test_cca_instance_matches_formulas(self):
        sigma = np.array([3.0, 2.0, 1.0, 0.5, 0.2, 0.1])
        problem = cca.build_known_spectrum(8, 6, 2, sigma=sigma,
                                           weights=[2.0, 1.0], seed=4)
        sol = cca.closed_form_solution(problem)
        inputs = cca.spectrum_inputs(problem)
        assert kappa_cca_l12(inputs) == pytest.approx(16.0, rel=1e-10)
        for tag, formula in (("L12", kappa_cca_l12(inputs)),
                             ("LR12", kappa_cca_lr12(inputs))):
            tagged = cca.CcaProblem(problem.sigma_xx, problem.sigma_yy,
                                    problem.sigma_xy, problem.weights,
                                    problem.delta, tag)
            mp = cca.make_manifold_problem(tagged)
            report = spectrum.numerical_spectrum(mp, [sol.U, sol.V])
            assert report.kappa == pytest.approx(formula, rel=1e-3)

    def test_non_critical_point_rejected(self):
        spec = tsvd.SvdBenchmarkSpec(m=12, n=8, p=2, gamma=0.5, seed=5)
        problem, u_star, v_star = tsvd.build_benchmark(spec)
        mp = tsvd.make_manifold_problem(problem)
        rng = np.random.default_rng(6)
        x = [np.linalg.qr(rng.standard_normal((12, 2)))[0],
             np.linalg.qr(rng.standard_normal((8, 2)))[0]]
        with pytest.raises(ValueError, match="critical point"):
            spectrum.numerical_spectrum(mp, x)
