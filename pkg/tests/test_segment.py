import numpy as np
import pytest

from weakbox import (EmConfig, GridGeometry, InitialSeed, PipelineConfig,
                     compute_threshold, extract_box, fallback_threshold,
                     fit_gmm_1d, separation_test, solve_crossover,
                     threshold_heatmap)
from weakbox.errors import CrossoverMissError, DataError, DegenerateDataError
from weakbox.expansion import Heatmap
from weakbox.segment import GmmParams, Mask


def _params(mu_b, sigma_b, mu_o, sigma_o, w_b=0.5):
    return GmmParams(w_b=w_b, w_o=1 - w_b, mu_b=mu_b, mu_o=mu_o,
                     sigma_b=sigma_b, sigma_o=sigma_o)


def bisect_crossover(mu_b, sigma_b, mu_o, sigma_o, iters=200):
    """Independent oracle: bisection on the log-density difference."""
    def f(t):
        lb = -np.log(sigma_b) - (t - mu_b) ** 2 / (2 * sigma_b ** 2)
        lo = -np.log(sigma_o) - (t - mu_o) ** 2 / (2 * sigma_o ** 2)
        return lb - lo
    lo, hi = mu_b, mu_o
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(lo) * f(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


class TestFitGmm:
    def test_recovers_planted_mixture(self):
        rng = np.random.default_rng(42)
        x = np.concatenate([rng.normal(0, 1, 2500), rng.normal(4, 1, 2500)])
        p = fit_gmm_1d(x, EmConfig())
        assert abs(p.mu_b - 0.0) < 0.1 and abs(p.mu_o - 4.0) < 0.1
        assert abs(p.sigma_b - 1.0) < 0.1 and abs(p.sigma_o - 1.0) < 0.1
        assert abs(p.w_b - 0.5) < 0.05 and abs(p.w_o - 0.5) < 0.05

    def test_loglik_monotone(self):
        rng = np.random.default_rng(7)
        x = np.concatenate([rng.normal(-2, 0.5, 300), rng.normal(1, 1.5, 700)])
        p = fit_gmm_1d(x, EmConfig())
        assert np.all(np.diff(p.log_likelihoods) >= -1e-9)

    def test_single_gaussian_not_separated(self):
        rng = np.random.default_rng(3)
        p = fit_gmm_1d(rng.normal(0, 1, 2000), EmConfig())
        assert p.mu_b <= p.mu_o
        assert not separation_test(p, 1.5)

    def test_tiny_bimodal(self):
        p = fit_gmm_1d([0.0, 0.0, 0.0, 1.0, 1.0, 1.0], EmConfig())
        assert abs(p.mu_b) < 1e-6 and abs(p.mu_o - 1.0) < 1e-6
        floor_sigma = np.sqrt(EmConfig().var_floor)
        assert p.sigma_b <= floor_sigma * 1.001 and p.sigma_o <= floor_sigma * 1.001

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(8)
        p = fit_gmm_1d(rng.normal(size=500), EmConfig())
        assert abs(p.w_b + p.w_o - 1.0) < 1e-9

    def test_degenerate_input(self):
        with pytest.raises(DegenerateDataError):
            fit_gmm_1d(np.ones(100), EmConfig())

    def test_non_finite_input(self):
        with pytest.raises(DataError):
            fit_gmm_1d([0.0, 1.0, np.nan, 2.0], EmConfig())


class TestSeparationTest:
    def test_clearly_separated(self):
        assert separation_test(_params(0, 1, 4, 1), 1.5)

    def test_overlapping(self):
        assert not separation_test(_params(0, 1, 2, 1), 1.5)

    def test_equal_means(self):
        assert not separation_test(_params(1, 0.3, 1, 0.7), 1.5)


class TestSolveCrossover:
    def test_equal_variance_midpoint(self):
        assert abs(solve_crossover(_params(0, 1, 4, 1)) - 2.0) < 1e-12

    def test_unequal_variance_vs_bisection_oracle(self):
        t = solve_crossover(_params(0, 1, 3, 2))
        oracle = bisect_crossover(0, 1, 3, 2)
        assert abs(t - oracle) < 1e-6
        assert abs(t - 1.4183449881051273) < 1e-6  # frozen oracle value

    def test_symmetric_about_origin(self):
        assert abs(solve_crossover(_params(-1, 0.5, 1, 0.5))) < 1e-12

    def test_root_inside_and_equalizes_densities(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            mu_b = rng.uniform(-3, 0)
            mu_o = mu_b + rng.uniform(1, 6)
            sb, so = rng.uniform(0.2, 1.5, 2)
            p = _params(mu_b, sb, mu_o, so)
            if not separation_test(p):
                continue
            t = solve_crossover(p)
            assert p.mu_b < t < p.mu_o
            lb = -np.log(sb) - (t - mu_b) ** 2 / (2 * sb ** 2)
            lo = -np.log(so) - (t - mu_o) ** 2 / (2 * so ** 2)
            assert abs(lb - lo) < 1e-9

    def test_quadratic_agrees_with_midpoint_at_near_equal_sigma(self):
        # nudge sigma past the closed-form branch; both paths must agree
        t_closed = solve_crossover(_params(0, 1.0, 4, 1.0))
        t_quad = solve_crossover(_params(0, 1.0, 4, 1.0 + 1e-11))
        assert abs(t_closed - t_quad) < 1e-9


class TestFallbackThreshold:
    def test_two_point(self):
        assert abs(fallback_threshold([0.0, 2.0], 1.75) - 2.75) < 1e-12

    def test_constant(self):
        assert fallback_threshold([3.0] * 10, 1.75) == 3.0

    def test_three_point_frozen_oracle(self):
        t = fallback_threshold([-1.0, 0.0, 1.0], 1.75)
        assert abs(t - 1.4288690166235205) < 1e-12


class TestComputeThreshold:
    def _bimodal(self, rng, n=400, frac=0.4, gap=6.0):
        n_hi = int(n * frac)
        return np.concatenate([rng.normal(0, 0.5, n - n_hi),
                               rng.normal(gap, 0.5, n_hi)])

    def test_bimodal_crossover(self):
        rng = np.random.default_rng(23)
        values = self._bimodal(rng)
        res = compute_threshold(Heatmap(values=values), PipelineConfig())
        assert res.source == "crossover"
        assert 0.0 < res.t < 6.0

    def test_small_object_fallback(self):
        rng = np.random.default_rng(29)
        values = rng.normal(0, 1.0, 1000)
        values[:15] += 2.5  # ~1.5% object patches, buried in background spread
        res = compute_threshold(Heatmap(values=values), PipelineConfig())
        assert res.source == "fallback"
        assert res.mu is not None and res.sigma is not None

    def test_constant_heatmap_fallback(self):
        res = compute_threshold(Heatmap(values=np.full(64, 2.5)), PipelineConfig())
        assert res.source == "fallback"
        assert res.t == 2.5

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            compute_threshold(Heatmap(values=np.array([1.0, np.inf] * 8)),
                              PipelineConfig())


class TestThresholdHeatmap:
    def test_ge_boundary(self):
        m = threshold_heatmap(Heatmap(values=np.array([1.0, 2.0, 3.0])), 2.0)
        assert m.bits.tolist() == [False, True, True]

    def test_extremes(self):
        h = Heatmap(values=np.array([1.0, 2.0, 3.0]))
        assert threshold_heatmap(h, 0.0).bits.all()
        assert not threshold_heatmap(h, 4.0).bits.any()

    def test_monotone_in_t(self):
        rng = np.random.default_rng(31)
        h = Heatmap(values=rng.normal(size=100))
        prev = threshold_heatmap(h, -3.0).bits
        for t in np.linspace(-3, 3, 20):
            cur = threshold_heatmap(h, t).bits
            assert not np.any(cur & ~prev)
            prev = cur


class TestExtractBox:
    def _mask(self, cells, g):
        bits = np.zeros(g.n_patches, dtype=bool)
        for r, c in cells:
            bits[r * g.grid_w + c] = True
        return Mask(bits=bits)

    def _seed(self, r, c, g):
        return InitialSeed(patch_index=r * g.grid_w + c, rc=(r, c))

    def test_rectangular_component(self, grid4):
        m = self._mask([(1, 1), (1, 2), (2, 1), (2, 2)], grid4)
        box = extract_box(m, self._seed(1, 1, grid4), grid4)
        assert box.as_tuple() == (16, 16, 48, 48)

    def test_disconnected_blob_excluded(self, grid4):
        m = self._mask([(1, 1), (1, 2), (2, 1), (2, 2), (3, 3)], grid4)
        box = extract_box(m, self._seed(1, 1, grid4), grid4)
        assert box.as_tuple() == (16, 16, 48, 48)

    def test_seed_forcing_on_empty_mask(self, grid4):
        m = self._mask([], grid4)
        box = extract_box(m, self._seed(2, 2, grid4), grid4)
        assert box.as_tuple() == (32, 32, 48, 48)

    def test_box_contains_seed(self, grid4):
        rng = np.random.default_rng(37)
        for _ in range(50):
            bits = rng.random(grid4.n_patches) < 0.4
            r, c = rng.integers(0, 4, 2)
            box = extract_box(Mask(bits=bits), self._seed(r, c, grid4), grid4)
            assert box.x_min <= c * 16 and box.x_max >= (c + 1) * 16
            assert box.y_min <= r * 16 and box.y_max >= (r + 1) * 16


class TestAffineInvariance:
    def _mask_of(self, values, cfg):
        h = Heatmap(values=values)
        res = compute_threshold(h, cfg)
        return threshold_heatmap(h, res.t).bits, res.source

    @pytest.mark.parametrize("kind", ["bimodal", "near_unimodal"])
    def test_mask_invariant_under_affine_map(self, kind):
        rng = np.random.default_rng(41)
        cfg = PipelineConfig()
        sources = set()
        for _ in range(100):
            if kind == "bimodal":
                n_hi = int(rng.integers(100, 200))
                values = np.concatenate([rng.normal(0, 0.4, 400 - n_hi),
                                         rng.normal(5, 0.4, n_hi)])
            else:
                values = rng.normal(0, 1.0, 400)
                values[:4] += 1.5
            a = float(rng.uniform(0.5, 3.0))
            b = float(rng.uniform(-5.0, 5.0))
            m1, s1 = self._mask_of(values, cfg)
            m2, s2 = self._mask_of(a * values + b, cfg)
            assert s1 == s2
            assert np.array_equal(m1, m2)
            sources.add(s1)
        expected = "crossover" if kind == "bimodal" else "fallback"
        assert expected in sources
