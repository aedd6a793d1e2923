"""Grids, noise generation, block averaging and averaging levels."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fredholm_avg.kernels import deriv2_kernel, synthetic_solution
from fredholm_avg.sampling import (
    NoisySample,
    admissible_averaging,
    apriori_factor,
    average,
    block_mean,
    delta_from_snr,
    divisors,
    draw_noise,
    make_grid,
    make_rng,
    sample_noisy,
)


def _sample(values, scheme="midpoint"):
    values = np.asarray(values, dtype=float)
    grid = make_grid(len(values), scheme)
    return NoisySample(grid=grid, exact=np.zeros(len(values)), noisy=values, delta=0.1, seed=0,
                       exact_source=lambda g: np.zeros(g.m))


class TestGrid:
    def test_examples(self):
        np.testing.assert_allclose(make_grid(3, "uniform_interior").points, [0.25, 0.5, 0.75])
        np.testing.assert_allclose(make_grid(4, "midpoint").points, [0.125, 0.375, 0.625, 0.875])
        np.testing.assert_array_equal(make_grid(1, "midpoint").points, [0.5])
        np.testing.assert_allclose(make_grid(4, "right_endpoint").points, [0.25, 0.5, 0.75, 1.0])

    def test_rejects(self):
        with pytest.raises(ValueError):
            make_grid(0)
        with pytest.raises(ValueError):
            make_grid(4, "chebyshev")

    @given(st.integers(1, 500), st.sampled_from(["uniform_interior", "midpoint", "right_endpoint"]))
    @settings(max_examples=40)
    def test_increasing_in_unit_interval(self, m, scheme):
        p = make_grid(m, scheme).points
        assert len(p) == m
        assert np.all(np.diff(p) > 0) and p[0] > 0 and p[-1] <= 1

    @given(st.integers(1, 64), st.integers(1, 16))
    @settings(max_examples=40)
    def test_midpoint_block_means_are_coarse_points(self, m_o, o):
        fine = make_grid(m_o * o, "midpoint").points
        coarse = make_grid(m_o, "midpoint").points
        np.testing.assert_allclose(fine.reshape(m_o, o).mean(axis=1), coarse, rtol=0, atol=1e-15)


class TestNoise:
    def setup_method(self):
        self.kernel = deriv2_kernel()
        self.f = synthetic_solution(0.5, 1)
        self.grid = make_grid(5, "uniform_interior")

    def test_zero_noise(self):
        s = sample_noisy(self.kernel, self.f, self.grid, 0.0, seed=3)
        np.testing.assert_array_equal(s.noisy, s.exact)

    def test_determinism(self):
        a = sample_noisy(self.kernel, self.f, self.grid, 0.1, seed=7)
        b = sample_noisy(self.kernel, self.f, self.grid, 0.1, seed=7)
        c = sample_noisy(self.kernel, self.f, self.grid, 0.1, seed=8)
        assert np.array_equal(a.noisy, b.noisy)
        assert not np.array_equal(a.noisy, c.noisy)

    def test_series_exact_value(self):
        grid = make_grid(1, "uniform_interior")  # the single point 0.5
        s = sample_noisy(self.kernel, self.f, grid, 0.0, seed=0)
        assert s.exact[0] == pytest.approx(np.pi**-3 * np.sqrt(2), rel=1e-14)
        assert s.exact[0] == pytest.approx(0.0456106, abs=1e-7)

    def test_quadrature_mode_agrees_with_series(self):
        f = synthetic_solution(0.5, 3)
        a = sample_noisy(self.kernel, f, self.grid, 0.0, 0, exact_mode="series")
        b = sample_noisy(self.kernel, f, self.grid, 0.0, 0, exact_mode="quadrature")
        np.testing.assert_allclose(a.exact, b.exact, atol=1e-14)

    @pytest.mark.parametrize("dist", ["gaussian", "heavy_tailed"])
    def test_moments(self, dist):
        z = draw_noise(200_000, make_rng(11), dist)
        assert abs(z.mean()) < 0.02
        assert z.var() == pytest.approx(1.0, rel=0.05)

    def test_noise_level(self):
        grid = make_grid(20_000, "uniform_interior")
        s = sample_noisy(self.kernel, self.f, grid, 0.3, seed=5)
        e = s.noisy - s.exact
        assert abs(e.mean()) < 0.3 * 0.05
        assert e.var() == pytest.approx(0.09, rel=0.05)

    def test_csv(self):
        s = sample_noisy(self.kernel, self.f, self.grid, 0.1, seed=1)
        lines = s.to_csv().splitlines()
        assert lines[0] == "index,xi,exact,noisy" and len(lines) == 6
        row = [float(v) for v in lines[1].split(",")]
        assert row[1] == s.grid.points[0] and row[3] == s.noisy[0]


class TestAverage:
    def test_block_means(self):
        out = average(_sample([1, 3, 5, 7]), 2)
        np.testing.assert_array_equal(out.noisy, [2, 6])
        assert out.grid == make_grid(2, "midpoint")
        assert out.o == 2 and out.m_o == 2 and out.m == 4
        assert out.delta == 0.1 and out.noise_std == pytest.approx(0.1 / math.sqrt(2))

    def test_identity(self):
        s = _sample([1.0, 2.0, 4.0])
        out = average(s, 1)
        assert np.array_equal(out.noisy, s.noisy) and out.grid == s.grid

    def test_rejects_non_divisor(self):
        with pytest.raises(ValueError):
            average(_sample(np.ones(6)), 4)

    @given(st.integers(0, 4), st.integers(0, 4), st.integers(1, 8), st.integers(0, 2**31))
    @settings(max_examples=60)
    def test_composition_exact(self, e1, e2, m_o, seed):
        # integer data and power-of-two factors keep every operation exact
        o1, o2 = 2**e1, 2**e2
        vals = np.random.default_rng(seed).integers(-50, 50, size=o1 * o2 * m_o).astype(float)
        s = _sample(vals)
        assert np.array_equal(average(average(s, o1), o2).noisy, average(s, o1 * o2).noisy)

    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31))
    @settings(max_examples=40)
    def test_composition_floats(self, o1, o2, seed):
        vals = np.random.default_rng(seed).standard_normal(o1 * o2 * 5)
        s = _sample(vals)
        np.testing.assert_allclose(average(average(s, o1), o2).noisy, average(s, o1 * o2).noisy, rtol=1e-13, atol=1e-15)

    def test_exact_recomputed_on_coarse_grid(self):
        k, f = deriv2_kernel(), synthetic_solution(0.5, 4)
        s = sample_noisy(k, f, make_grid(8, "uniform_interior"), 0.0, 0)
        out = average(s, 2)
        ref = sample_noisy(k, f, make_grid(4, "uniform_interior"), 0.0, 0)
        np.testing.assert_allclose(out.exact, ref.exact, rtol=1e-14)

    def test_block_mean_variance(self):
        delta, o = 0.5, 8
        var = [block_mean(delta * make_rng(3, r).standard_normal(100_000), o).var() for r in range(100)]
        assert np.mean(var) == pytest.approx(delta**2 / o, rel=0.05)


class TestBias:
    g = staticmethod(lambda x: np.sin(2 * np.pi * x))

    @pytest.mark.parametrize("o", [2, 4, 8])
    def test_midpoint_second_order_bias(self, o):
        m = 1024
        m_o = m // o
        bias = self.g(make_grid(m).points).reshape(m_o, o).mean(1) - self.g(make_grid(m_o).points)
        assert bias @ bias <= (2 * np.pi) ** 4 / (9 * 64 * m_o**3)

    @pytest.mark.parametrize("o", [2, 4, 8])
    def test_uniform_first_order_bias(self, o):
        m = 1024
        m_o = m // o
        fine = make_grid(m, "uniform_interior").points
        coarse = make_grid(m_o, "uniform_interior").points
        bias = self.g(fine).reshape(m_o, o).mean(1) - self.g(coarse)
        gprime2 = 2 * np.pi**2  # int_0^1 (2 pi cos 2 pi x)^2
        assert bias @ bias <= o / (m + 1) * gprime2


class TestLevels:
    def test_admissible_examples(self):
        plan = admissible_averaging(100, 4 / math.sqrt(101), 1.0)
        assert plan.admissible_set == (1, 2, 4) and plan.o == 4 and plan.m_o == 25
        assert admissible_averaging(100, 0.0, 1.0).admissible_set == (1,)
        assert admissible_averaging(64, 1.0, math.sqrt(65)).admissible_set == (1,)
        with pytest.raises(ValueError):
            admissible_averaging(10, 1.0, 0.0)

    @given(st.integers(1, 2000), st.floats(0, 10), st.floats(0.01, 10))
    @settings(max_examples=60)
    def test_admissible_invariants(self, m, delta, rho):
        plan = admissible_averaging(m, delta, rho)
        bound = max(math.sqrt((m + 1) * delta**2 / rho**2), 1.0)
        assert plan.o * plan.m_o == m
        for o in plan.admissible_set:
            assert m % o == 0 and o <= bound * (1 + 1e-12)
        assert set(divisors(m)) - set(plan.admissible_set) == {d for d in divisors(m) if d > bound * (1 + 1e-12)}

    def test_apriori_examples(self):
        assert apriori_factor(64, 0.1, 1.0).o_raw == pytest.approx(40.96 ** (1 / 3), rel=1e-14)
        tiny = apriori_factor(4096, 1e-15, 1.0)
        assert tiny.o_raw < 1e-6 and tiny.m_o == 4096
        assert apriori_factor(4096, 1 / 4096, 1.0).o_raw == pytest.approx(1.0, rel=1e-14)
        with pytest.raises(ValueError):
            apriori_factor(64, 0.1, 0.0)

    def test_apriori_snaps_on_log_scale(self):
        # m/o = 90 is closer to 64 than to 256 in ratio terms
        levels = (16, 64, 256, 1024, 4096)
        delta = (4096 / 90) ** 1.5 / 4096
        assert apriori_factor(4096, delta, 1.0, levels).m_o == 64

    def test_delta_from_snr(self):
        assert delta_from_snr(1.0, 4096, 512) == pytest.approx(1 / (64 * 512), rel=1e-15)
        assert delta_from_snr(2.0, 1, 1.0) == 2.0
        assert delta_from_snr(3.0, 10, 4.0) == pytest.approx(delta_from_snr(3.0, 10, 2.0) / 2)
        with pytest.raises(ValueError):
            delta_from_snr(1.0, 4, 0.0)
