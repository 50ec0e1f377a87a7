import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aggloc.kernels import (
    GaussianMollifier,
    InteractionModel,
    TabulatedMollifier,
    gamma_matrix,
    kernel_closed_form,
    kernel_discrete,
    mollifier_eval,
    mollifier_radius,
    mollifier_samples,
    validate_model,
)


def upper_triangular_ones(n: int = 4) -> np.ndarray:
    return np.triu(np.ones((n, n)))


def gaussians(variances) -> tuple[GaussianMollifier, ...]:
    return tuple(GaussianMollifier(v) for v in variances)


def random_full_rank(rng: np.random.Generator, p: int, n: int) -> np.ndarray:
    while True:
        a = rng.uniform(-3, 3, size=(p, n))
        svals = np.linalg.svd(a, compute_uv=False)
        if svals[-1] > 1e-2 * svals[0] and svals[-1] > 1e-3:
            return a


class TestGammaMatrix:
    def test_case1_matrix_gives_min_of_indices(self):
        g = gamma_matrix(upper_triangular_ones())
        want = np.array([[min(i, j) for j in range(1, 5)] for i in range(1, 5)], dtype=float)
        assert np.array_equal(g, want)

    def test_identity_matrix(self):
        assert np.array_equal(gamma_matrix(np.eye(4)), np.eye(4))

    def test_single_row_gives_all_ones(self):
        g = gamma_matrix(np.ones((1, 4)))
        assert np.array_equal(g, np.ones((4, 4)))

    @given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.integers(0, 3))
    @settings(max_examples=40, deadline=None)
    def test_symmetric_and_positive_semidefinite(self, seed, n, extra):
        rng = np.random.default_rng(seed)
        a = random_full_rank(rng, n + extra, n)
        g = gamma_matrix(a)
        assert np.array_equal(g, g.T)  # exactly symmetric, not just approximately
        eigs = np.linalg.eigvalsh(g)
        assert eigs.min() >= -1e-12
        assert eigs.min() > 0  # full-rank columns make the Gram matrix definite

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_quadratic_form_is_sum_of_squares(self, seed):
        # The coupling quadratic form factors through the coefficient matrix.
        rng = np.random.default_rng(seed)
        p, n = rng.integers(1, 7), rng.integers(1, 5)
        a = rng.uniform(-2, 2, size=(p, n))
        f = rng.uniform(-5, 5, size=n)
        quad = float(f @ gamma_matrix(a) @ f)
        squares = float(np.sum((a @ f) ** 2))
        assert quad == pytest.approx(squares, abs=1e-12 * max(1.0, abs(squares)))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            gamma_matrix(np.array([[1.0, np.nan], [0.0, 1.0]]))


class TestValidateModel:
    def test_case1_model_passes(self):
        model = InteractionModel(upper_triangular_ones(), gaussians([0.1] * 4), 1.0)
        report = validate_model(model)
        assert report.full_rank
        assert report.rank == 4
        assert report.passed
        assert report.left_inverse_error <= 1e-10

    def test_rank_one_model_reported_not_raised(self):
        model = InteractionModel(np.ones((1, 4)), gaussians([0.1, 0.2, 0.3, 0.4]), 1.0)
        report = validate_model(model)
        assert not report.full_rank
        assert report.rank == 1
        assert not report.passed
        assert report.left_inverse is None

    def test_negative_tabulated_sample_fails_nonnegativity(self):
        bad = TabulatedMollifier([0.0, 0.5, 1.0], [1.0, -0.1, 0.0])
        model = InteractionModel(np.eye(1), (bad,), 1.0)
        report = validate_model(model)
        assert not report.mollifier_checks[0].nonnegative
        assert not report.passed

    def test_normalized_tabulated_profile_passes(self):
        # cone profile: rho(r) = c (1 - r/R); integral = 2 pi c R^2 / 6 = 1
        r_max = 1.5
        c = 3.0 / (math.pi * r_max**2)
        radii = np.linspace(0.0, r_max, 61)
        model = InteractionModel(
            np.eye(1), (TabulatedMollifier(radii, c * (1 - radii / r_max)),), 1.0
        )
        check = validate_model(model).mollifier_checks[0]
        assert check.nonnegative
        assert check.finite_moment
        assert check.normalization_error <= 1e-8

    def test_non_decaying_table_fails_moment_check(self):
        flat = TabulatedMollifier([0.0, 1.0], [0.3, 0.3])
        model = InteractionModel(np.eye(1), (flat,), 1.0)
        assert not validate_model(model).mollifier_checks[0].finite_moment

    def test_idempotent_and_side_effect_free(self):
        a = upper_triangular_ones()
        model = InteractionModel(a, gaussians([0.1] * 4), 1.0)
        first = validate_model(model)
        second = validate_model(model)
        assert first.rank == second.rank
        assert first.passed == second.passed
        assert np.array_equal(first.left_inverse, second.left_inverse)
        assert np.array_equal(model.matrix, a)

    @given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(0, 3))
    @settings(max_examples=30, deadline=None)
    def test_left_inverse_recovers_combined_vectors(self, seed, n, extra):
        rng = np.random.default_rng(seed)
        a = random_full_rank(rng, n + extra, n)
        model = InteractionModel(a, gaussians([0.1] * n), 1.0)
        report = validate_model(model)
        assert report.left_inverse_error <= 1e-10
        f = rng.uniform(-10, 10, size=n)
        recovered = report.left_inverse @ (a @ f)
        assert np.abs(recovered - f).max() <= 1e-10 * max(1.0, np.abs(f).max())


class TestMollifierEval:
    def test_gaussian_center_value(self):
        assert mollifier_eval(GaussianMollifier(0.1), 1.0, 0.0, 0.0) == pytest.approx(
            1.5915494309189535, abs=1e-12
        )

    def test_epsilon_one_is_identity_scaling(self):
        spec = TabulatedMollifier([0.0, 0.5, 1.0], [0.6, 0.3, 0.0])
        xs = np.linspace(-1.2, 1.2, 17)
        base = mollifier_eval(spec, 1.0, xs, 0.3 * xs)
        r = np.hypot(xs, 0.3 * xs)
        direct = np.interp(r, spec.radii, spec.values, right=0.0)
        assert np.abs(base - direct).max() <= 1e-15

    def test_rejects_nonpositive_epsilon(self):
        with pytest.raises(ValueError, match="epsilon"):
            mollifier_eval(GaussianMollifier(0.1), 0.0, 0.0, 0.0)
        with pytest.raises(ValueError, match="epsilon"):
            mollifier_eval(GaussianMollifier(0.1), -1.0, 0.0, 0.0)

    @pytest.mark.parametrize("epsilon,variance", [(1.0, 0.1), (0.5, 0.3), (2.0, 0.2)])
    def test_quadrature_recovers_unit_mass(self, epsilon, variance):
        # midpoint quadrature over a domain of half-width >= 8 eps sigma
        hw = 8 * epsilon * math.sqrt(variance)
        n = 128
        dx = 2 * hw / n
        xs = -hw + (np.arange(n) + 0.5) * dx
        xx, yy = np.meshgrid(xs, xs)
        total = mollifier_eval(GaussianMollifier(variance), epsilon, xx, yy).sum() * dx**2
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_scaling_concentrates(self):
        spec = GaussianMollifier(0.2)
        assert mollifier_eval(spec, 0.5, 0.0, 0.0) == pytest.approx(
            4 * mollifier_eval(spec, 1.0, 0.0, 0.0)
        )


class TestMollifierSamples:
    def test_mass_close_to_one(self):
        k = mollifier_samples(GaussianMollifier(0.1), 1.0, dx=0.05)
        assert k.mass == pytest.approx(1.0, abs=1e-7)

    def test_truncation_radius(self):
        assert mollifier_radius(GaussianMollifier(0.25), 2.0) == pytest.approx(6.0)
        spec = TabulatedMollifier([0.0, 1.5], [0.2, 0.0])
        assert mollifier_radius(spec, 0.5) == pytest.approx(0.75)


class TestKernelClosedForm:
    def test_matches_scaled_gaussian_formula(self):
        # With all variances 1/2 the pair kernel collapses to
        # gamma/(2 pi eps^2) exp(-|x|^2 / (2 eps^2)).
        eps = 0.7
        model = InteractionModel(
            np.array([[1.0, 1.0], [0.0, 1.0]]), gaussians([0.5, 0.5]), eps
        )
        k = kernel_closed_form(model, 0, 1, dx=0.05)
        offs = np.arange(-k.radius, k.radius + 1) * 0.05
        xx, yy = np.meshgrid(offs, offs)
        gamma = float(model.gamma[0, 1])
        assert gamma == 1.0
        want = gamma * np.exp(-(xx**2 + yy**2) / (2 * eps**2)) / (2 * math.pi * eps**2)
        assert np.abs(k.values - want).max() <= 1e-15

    def test_variance_and_mass(self):
        model = InteractionModel(upper_triangular_ones(), gaussians([0.1, 0.2, 0.3, 0.4]), 2.0)
        k = kernel_closed_form(model, 1, 3, dx=0.1)
        # total mass equals the coupling coefficient
        assert k.mass == pytest.approx(float(model.gamma[1, 3]), rel=1e-6)
        # peak value pins the variance eps^2 (v_i + v_j)
        variance = 4.0 * (0.2 + 0.4)
        assert k.values[k.radius, k.radius] == pytest.approx(
            float(model.gamma[1, 3]) / (2 * math.pi * variance)
        )

    def test_zero_coupling_gives_zero_samples(self):
        a = np.array([[1.0, 0.0], [0.0, 1.0]])  # orthogonal columns: gamma12 = 0
        model = InteractionModel(a, gaussians([0.1, 0.2]), 1.0)
        k = kernel_closed_form(model, 0, 1, dx=0.05)
        assert np.all(k.values == 0.0)

    def test_discrete_convolution_oracle(self):
        # FFT convolution of the sampled mollifier pair reproduces the closed
        # form within 1e-6 in max norm at a 128-cell grid resolution.
        dx = 16.0 / 128
        model = InteractionModel(
            upper_triangular_ones(), gaussians([0.1, 0.2, 0.3, 0.4]), 1.0
        )
        for i in range(4):
            for j in range(4):
                kc = kernel_closed_form(model, i, j, dx)
                kd = kernel_discrete(model, i, j, dx)
                r = max(kc.radius, kd.radius)
                size = 2 * r + 1
                a = np.zeros((size, size))
                b = np.zeros((size, size))
                a[
                    r - kc.radius : r + kc.radius + 1, r - kc.radius : r + kc.radius + 1
                ] = kc.values
                b[
                    r - kd.radius : r + kd.radius + 1, r - kd.radius : r + kd.radius + 1
                ] = kd.values
                assert np.abs(a - b).max() <= 1e-6

    def test_rejects_tabulated_mollifiers(self):
        table = TabulatedMollifier([0.0, 1.0], [1.0, 0.0])
        model = InteractionModel(np.eye(2), (GaussianMollifier(0.1), table), 1.0)
        with pytest.raises(TypeError, match="[Gg]aussian"):
            kernel_closed_form(model, 0, 1, dx=0.1)


class TestInteractionModel:
    def test_rejects_mismatched_mollifier_count(self):
        with pytest.raises(ValueError, match="mollifier"):
            InteractionModel(np.eye(3), gaussians([0.1, 0.2]), 1.0)

    def test_rejects_nonpositive_epsilon(self):
        with pytest.raises(ValueError, match="epsilon"):
            InteractionModel(np.eye(2), gaussians([0.1, 0.2]), 0.0)

    def test_single_row_matrix_allowed(self):
        # Deliberately rank-deficient decompositions must construct fine;
        # hypothesis failures are validation findings, not constructor errors.
        model = InteractionModel(np.ones((1, 4)), gaussians([0.1] * 4), 1.0)
        assert model.species == 4
