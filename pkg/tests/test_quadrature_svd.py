"""Collocation matrices, reconstructed singular functions, estimators and bounds."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fredholm_avg.kernels import deriv2_kernel, gravity_kernel, gravity_solution, heat_kernel, heat_solution
from fredholm_avg.quadrature import composite_rule
from fredholm_avg.quadrature_svd import (
    build_collocation,
    bound_context,
    collocation_matrix,
    design_matrix_S,
    grid_estimate,
    residual_tail,
    singular_function,
    singular_function_gram,
    theorem_bounds,
    two_step_truncated_svd,
)
from fredholm_avg.sampling import NoisySample, average, make_grid, sample_noisy


@pytest.fixture(scope="module")
def grav64():
    return build_collocation(gravity_kernel(), 64)


def _sample(kernel, f, m, delta=1e-3, seed=0):
    return sample_noisy(kernel, f, make_grid(m, kernel.collocation), delta, seed)


class TestCollocation:
    def test_single_entry(self):
        sys_ = build_collocation(gravity_kernel(0.25), 1)
        np.testing.assert_array_equal(sys_.A, [[16.0]])
        assert sys_.sigma[0] == pytest.approx(16.0, rel=1e-15)

    def test_deriv2_two_by_two(self):
        sys_ = build_collocation(deriv2_kernel(), 2)
        np.testing.assert_allclose(sys_.A, [[0.09375, 0.03125], [0.03125, 0.09375]], rtol=1e-15)
        np.testing.assert_allclose(sys_.sigma, [0.125, 0.0625], rtol=1e-14)

    @pytest.mark.parametrize("kernel", [deriv2_kernel(), gravity_kernel(), heat_kernel()], ids=lambda k: k.name)
    @pytest.mark.parametrize("m", [5, 32, 100])
    def test_svd_contract(self, kernel, m):
        sys_ = build_collocation(kernel, m)
        nA = np.linalg.norm(sys_.A, 2)
        assert np.all(np.diff(sys_.sigma) <= 0)
        assert np.max(np.linalg.norm(sys_.A @ sys_.z - sys_.w * sys_.sigma, axis=0)) <= 1e-10 * nA
        assert np.max(np.abs(sys_.w.T @ sys_.w - np.eye(m))) <= 1e-10
        assert np.max(np.abs(sys_.z.T @ sys_.z - np.eye(m))) <= 1e-10
        assert sys_.rank_tol == pytest.approx(m * np.finfo(float).eps * sys_.sigma[0])

    def test_heat_rows_at_right_endpoints(self):
        A = collocation_matrix(heat_kernel(), 4)
        assert A[0, 0] == pytest.approx(heat_kernel()(0.25, 0.125) / 4)
        assert np.all(np.triu(A, 1) == 0)


class TestDesignMatrixS:
    def test_symmetric(self):
        S = design_matrix_S(gravity_kernel(), 6)
        np.testing.assert_allclose(S, S.T, atol=1e-13)

    def test_agrees_with_fixed_rule(self):
        m = 6
        k = gravity_kernel()
        xi = (2 * np.arange(1, m + 1) - 1) / (2 * m)
        x, w = composite_rule(0, 1, panels=400, order=12)
        sec = k(x[:, None], xi[None, :])
        np.testing.assert_allclose(design_matrix_S(k, m), (sec * w[:, None]).T @ sec / m, atol=1e-11)

    def test_cubic_convergence(self):
        ms = np.array([8, 16, 32, 64])
        k = gravity_kernel()
        dev = []
        for m in ms:
            A = collocation_matrix(k, m)
            dev.append(np.max(np.abs(A.T @ A - design_matrix_S(k, m))))
        slope = np.polyfit(np.log(ms), np.log(dev), 1)[0]
        assert -3.5 <= slope <= -2.5


class TestSingularValuePerturbation:
    @pytest.mark.parametrize("m", [16, 64])
    def test_deriv2_bound(self, m):
        sys_ = build_collocation(deriv2_kernel(), m)
        ref = (np.pi * np.arange(1, m + 1)) ** -2.0
        assert np.max(np.abs(ref**2 - sys_.sigma**2)) <= 1.0 / (3 * m**2)

    def test_gravity_slope(self):
        k = gravity_kernel()
        ref = build_collocation(k, 2048).sigma
        ms = np.array([16, 32, 64, 128])
        dev = [np.max(np.abs(ref[:m] ** 2 - build_collocation(k, m).sigma ** 2)) for m in ms]
        slope = np.polyfit(np.log(ms), np.log(dev), 1)[0]
        assert -2.5 <= slope <= -1.5


class TestApproximateEigenvectors:
    """Perturbed eigenvectors of a diagonal operator with known spectrum."""

    @given(st.integers(0, 2**31), st.integers(0, 5), st.floats(1e-6, 1e-2))
    @settings(max_examples=40, deadline=None)
    def test_eigenvalue_and_projection_bounds(self, seed, j, scale):
        rng = np.random.default_rng(seed)
        lam_all = np.sort(rng.uniform(0.1, 2.0, 12))[::-1]
        lam_all[1:] = np.minimum(lam_all[1:], lam_all[:-1] - 0.01)
        lam = lam_all[j]
        v = np.zeros(12)
        v[j] = 1.0
        v = v + scale * rng.standard_normal(12)
        eps = np.linalg.norm(lam_all * v - lam * v)
        assert np.min(np.abs(lam_all - lam)) <= eps / np.linalg.norm(v) + 1e-15
        # P projects onto the eigenspace of lam, c is its distance to the rest
        c = np.min(np.abs(np.delete(lam_all, j) - lam))
        assert v[j] ** 2 >= v @ v - eps**2 / c**2 - 1e-15


class TestSingularFunctions:
    def test_rank_guard(self, grav64):
        with pytest.raises(ValueError):
            singular_function(grav64, 0)
        with pytest.raises(ValueError):
            singular_function(grav64, 65)

    def test_near_orthonormal_leading(self, grav64):
        # J_64 = 0 for gravity; check the leading functions anyway
        ctx = bound_context(grav64)
        G = singular_function_gram(grav64, 3)
        s = ctx.sigma_cont[:3]
        allowed = ctx.C_K**2 / (3 * np.outer(s, s) * 64**2)
        assert np.all(np.abs(G - np.eye(3)) <= allowed)
        assert np.max(np.abs(G - np.eye(3))) < 1e-3

    def test_gram_matches_pointwise_quadrature(self, grav64):
        v1, v2 = singular_function(grav64, 1), singular_function(grav64, 2)
        x, w = composite_rule(0, 1, panels=512, order=8)
        G = singular_function_gram(grav64, 2)
        assert G[0, 1] == pytest.approx(np.dot(v1(x) * v2(x), w), abs=1e-13)
        assert G[0, 0] == pytest.approx(np.dot(v1(x) ** 2, w), rel=1e-12)

    @pytest.mark.parametrize("m", [32, 64, 128])
    def test_lowest_mode_has_one_sign(self, m):
        v = singular_function(build_collocation(gravity_kernel(), m), 1)(np.linspace(0, 1, 1001))
        assert np.all(v > 0) or np.all(v < 0)

    def test_eigenfunction_residual(self):
        # |K*K v_j - s_j^2 v_j| <= C_K^3 / (2 sigma_j m^2), gravity m = 32, j <= 3
        k = gravity_kernel()
        sys_ = build_collocation(k, 32)
        ref = build_collocation(k, 128).sigma
        x, w = composite_rule(0, 1, panels=256, order=10)
        K = k(x[:, None], x[None, :]) * w[None, :]  # (K h)(x) = int kappa(x, y) h(y) dy
        Kstar = k(x[:, None], x[None, :]).T * w[None, :]  # (K* h)(x) = int kappa(y, x) h(y) dy
        for j in (1, 2, 3):
            v = singular_function(sys_, j)(x)
            res = Kstar @ (K @ v) - sys_.sigma[j - 1] ** 2 * v
            norm = math.sqrt(np.dot(res**2, w))
            assert norm <= k.smoothness_bound**3 / (2 * ref[j - 1] * 32**2)
            assert norm < 1e-2 * sys_.sigma[j - 1] ** 2


class TestGridEstimate:
    def test_zero_cutoff(self, grav64):
        s = _sample(gravity_kernel(), gravity_solution(), 64)
        est = grid_estimate(grav64, s, 0)
        assert np.all(est.values == 0) and np.all(est.coeffs == 0)

    def test_first_singular_vector(self, grav64):
        b = grav64.sigma[0] * grav64.w[:, 0]
        s = NoisySample(grid=grav64.grid, exact=b, noisy=b, delta=0.0, seed=0)
        np.testing.assert_allclose(grid_estimate(grav64, s, 1).values, grav64.z[:, 0], atol=1e-13)

    @pytest.mark.parametrize("kernel,f", [(gravity_kernel(), gravity_solution()), (heat_kernel(), heat_solution())],
                             ids=["gravity", "heat"])
    def test_coefficients_reproduce_values(self, kernel, f):
        m = 48
        sys_ = build_collocation(kernel, m)
        est = grid_estimate(sys_, _sample(kernel, f, m, seed=2), 6)
        np.testing.assert_allclose(est(sys_.nodes), est.values, rtol=1e-9, atol=1e-12)

    def test_identity_averaging(self, grav64):
        s = _sample(gravity_kernel(), gravity_solution(), 64, seed=9)
        a, b = grid_estimate(grav64, s, 7), grid_estimate(grav64, average(s, 1), 7)
        assert np.array_equal(a.values, b.values) and np.array_equal(a.coeffs, b.coeffs)

    def test_averaged_sample(self):
        k, f = gravity_kernel(), gravity_solution()
        s = average(_sample(k, f, 256, seed=1), 4)
        sys_ = build_collocation(k, 64)
        est = grid_estimate(sys_, s, 5)
        assert est.m_o == 64 and est.o == 4

    def test_rejects(self, grav64):
        s = _sample(gravity_kernel(), gravity_solution(), 32)
        with pytest.raises(ValueError):
            grid_estimate(grav64, s, 1)
        s = _sample(gravity_kernel(), gravity_solution(), 64)
        with pytest.raises(ValueError):
            grid_estimate(grav64, s, grav64.rank + 1)


class TestResidual:
    def test_endpoints(self, grav64):
        s = _sample(gravity_kernel(), gravity_solution(), 64, delta=0.1)
        assert residual_tail(grav64, s, 0) == pytest.approx(np.linalg.norm(s.noisy), rel=1e-12)
        assert residual_tail(grav64, s, 64) == 0.0

    @given(st.integers(0, 2**31))
    @settings(max_examples=20, deadline=None)
    def test_monotone(self, seed):
        sys_ = build_collocation(gravity_kernel(), 24)
        data = np.random.default_rng(seed).standard_normal(24)
        s = NoisySample(grid=sys_.grid, exact=data, noisy=data, delta=0.0, seed=0)
        tails = [residual_tail(sys_, s, k) for k in range(25)]
        assert all(a >= b for a, b in zip(tails, tails[1:]))


class TestBoundContext:
    def test_deriv2_simple_spectrum(self):
        sys_ = build_collocation(deriv2_kernel(), 256)
        ctx = bound_context(sys_)
        s2 = ctx.sigma_cont**2
        assert not ctx.surrogate
        assert np.all(ctx.multiplicity[:50] == 1)
        np.testing.assert_array_equal(ctx.psi_minus[:50], np.arange(1, 51))
        np.testing.assert_array_equal(ctx.psi_plus[:50], np.arange(1, 51))
        assert ctx.c_gap[0] == pytest.approx(s2[0] - s2[1])
        for j in range(1, 10):
            assert ctx.c_gap[j] == pytest.approx(min(s2[j] - s2[j + 1], s2[j - 1] - s2[j]))
        # validity consequences
        assert ctx.J >= 1
        assert np.all(ctx.c_gap[: ctx.J] > 0)
        assert np.all(sys_.sigma[: ctx.J] ** 2 > ctx.sigma_cont[: ctx.J] ** 2 / 2)

    def test_multiplicity_groups(self):
        sys_ = build_collocation(deriv2_kernel(), 8)
        ctx = bound_context(sys_, reference_sigma=np.array([3.0, 2.0, 2.0, 1.0, 0.5]), C_K=1.0)
        np.testing.assert_array_equal(ctx.psi_minus[:4], [1, 2, 2, 4])
        np.testing.assert_array_equal(ctx.psi_plus[:4], [1, 3, 3, 4])
        np.testing.assert_array_equal(ctx.multiplicity[:4], [1, 2, 2, 2])
        assert ctx.c_gap[1] == pytest.approx(min(9 - 4, 4 - 1))

    def test_gravity_validity_index(self):
        k = gravity_kernel()
        j64 = bound_context(build_collocation(k, 64)).J
        j256 = bound_context(build_collocation(k, 256)).J
        assert j64 <= j256
        assert bound_context(build_collocation(k, 64)).surrogate


class TestTheoremBounds:
    def _ctx(self):
        return bound_context(build_collocation(deriv2_kernel(), 256))

    def test_variance_linear_in_delta(self):
        ctx = self._ctx()
        a = theorem_bounds(ctx, 1, 1e-3, 256, 1, 0.0, 0.0)
        b = theorem_bounds(ctx, 1, 2e-3, 256, 1, 0.0, 0.0)
        assert b.terms["variance"] == pytest.approx(2 * a.terms["variance"])
        # with f = 0 only the variance remains
        assert a.total == a.terms["variance"]

    def test_rejects_beyond_validity(self):
        ctx = self._ctx()
        with pytest.raises(ValueError):
            theorem_bounds(ctx, ctx.J + 1, 1e-3, 256, 1, 1.0, 1.0)
        out = theorem_bounds(ctx, ctx.J + 1, 1e-3, 256, 1, 1.0, 1.0, enforce_validity=False)
        assert out.total > 0

    def test_averaged_terms(self):
        sys_ = build_collocation(deriv2_kernel(), 256)
        ctx = bound_context(sys_)
        out = theorem_bounds(ctx, 1, 1e-3, 1024, 4, 1.0, 1.0)
        assert out.terms["averaging_bias"] > 0
        plain = theorem_bounds(ctx, 1, 1e-3, 256, 1, 1.0, 1.0)
        assert plain.terms["averaging_bias"] == 0

    def test_zero_cutoff(self):
        ctx = self._ctx()
        out = theorem_bounds(ctx, 0, 1e-3, 256, 1, 2.0, 1.0)
        assert out.total == out.terms["approximation_tail"] == 2.0


class TestRandomized:
    def test_rank_one(self):
        rng = np.random.default_rng(0)
        u, v = rng.standard_normal(30), rng.standard_normal(20)
        A = np.outer(u, v)
        s, *_ = two_step_truncated_svd(A, 2, 1, seed=1)
        assert s[0] == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v), rel=1e-10)

    def test_diagonal(self):
        A = np.diag(0.5 ** np.arange(32))
        s, W, Zt, _ = two_step_truncated_svd(A, 8, 3, seed=2)
        np.testing.assert_allclose(s, [1, 0.5, 0.25], atol=1e-8)

    def test_gravity_error_order(self):
        sys_ = build_collocation(gravity_kernel(), 128)
        n = 10
        *_, err = two_step_truncated_svd(sys_.A, n, 5, seed=3)
        assert err <= 10 * math.sqrt(n * 128) * sys_.sigma[n]
