import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from kpent.ballgeom import MCParams
from kpent.contract import ContractionSpec
from kpent.diversity import (DiscreteLaw, check_h2_contraction, check_renyi_gap, discrete_sampler,
                             diversity2_discrete, diversity2_grid, diversity2_mc, diversity_constant,
                             diversity_discrete, diversity_grid, renyi_gap_bound, scaling_limit_check,
                             scaling_ratio)
from kpent.ensembles import random_affine
from kpent.errors import DomainError, PreconditionError
from kpent.families import Distribution
from kpent.grid import GridSpec, gaussian_grid, make_grid, renyi_entropy


def gaussian_kernel_mean(t, var=2.0):
    """E exp(-t|D|) for D ~ N(0, var), by quadrature."""
    val, _ = integrate.quad(lambda u: math.exp(-t * abs(u)) * stats.norm.pdf(u, scale=math.sqrt(var)),
                            -np.inf, np.inf)
    return val


class TestDiscrete:
    @pytest.mark.parametrize("t", [0.1, 1.0, 50.0])
    def test_single_point(self, t):
        assert diversity2_discrete([1.0], [[3.0, 4.0]], t) == 1.0

    @pytest.mark.parametrize("t,s", [(1.0, 1.0), (0.5, 3.0), (2.0, 0.2)])
    def test_two_points(self, t, s):
        d = diversity2_discrete([0.5, 0.5], [[0.0], [s]], t)
        assert d == pytest.approx(2 / (1 + math.exp(-t * s)), rel=1e-14)

    def test_large_t_limit(self):
        pts = np.random.default_rng(0).normal(size=(6, 2))
        gaps = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        gap = gaps[gaps > 0].min()
        assert abs(diversity2_discrete(np.full(6, 1 / 6), pts, 1e3 / gap) - 6) < 1e-6

    def test_bad_weights(self):
        with pytest.raises(DomainError):
            diversity2_discrete([0.5, 0.6], [[0.0], [1.0]], 1.0)
        with pytest.raises(DomainError):
            diversity2_discrete([1.0], [[0.0], [1.0]], 1.0)
        with pytest.raises(DomainError):
            diversity2_discrete([1.0], [[0.0]], 0.0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_range_and_monotone_in_t(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(1, 8))
        w = rng.dirichlet(np.ones(m))
        pts = rng.normal(size=(m, 2))
        values = [diversity2_discrete(w, pts, t) for t in (0.1, 0.5, 1.0, 4.0, 20.0)]
        assert all(1 - 1e-12 <= v <= m + 1e-9 for v in values)
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_isometry_invariance(self, seed):
        rng = np.random.default_rng(seed)
        w = rng.dirichlet(np.ones(5))
        pts = rng.normal(size=(5, 2))
        c, s = np.cos(1.1), np.sin(1.1)
        moved = pts @ np.array([[c, -s], [s, c]]).T + rng.normal(size=2)
        assert diversity2_discrete(w, moved, 1.3) == pytest.approx(diversity2_discrete(w, pts, 1.3), rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_general_order(self, seed):
        rng = np.random.default_rng(seed)
        w = rng.dirichlet(np.ones(4))
        pts = rng.normal(size=(4, 2))
        assert diversity_discrete(w, pts, 0.7, 2) == pytest.approx(diversity2_discrete(w, pts, 0.7), rel=1e-12)
        orders = [diversity_discrete(w, pts, 0.7, a) for a in (0, 0.5, 1, 2, 3, math.inf)]
        assert all(b <= a + 1e-12 for a, b in zip(orders, orders[1:]))


class TestMonteCarlo:
    def test_point_mass(self):
        est = diversity2_mc(lambda rng, n: np.zeros((n, 2)), 1.0, MCParams(20_000, seed=1))
        assert est.value == 1.0 and est.stderr == 0.0

    def test_two_point_law(self):
        w, pts = [0.5, 0.5], [[0.0], [1.0]]
        est = diversity2_mc(discrete_sampler(w, pts), 1.0, MCParams(200_000, seed=2))
        assert est.within(diversity2_discrete(w, pts, 1.0))

    def test_gaussian(self):
        est = diversity2_mc(lambda rng, n: rng.standard_normal((n, 1)), 1.0, MCParams(500_000, seed=3))
        assert est.within(1 / gaussian_kernel_mean(1.0))

    def test_deterministic(self):
        s = discrete_sampler([0.2, 0.8], [[0.0], [1.0]])
        a = diversity2_mc(s, 2.0, MCParams(50_000, seed=4))
        b = diversity2_mc(s, 2.0, MCParams(50_000, seed=4, workers=2))
        assert a == b

    def test_minimum_pairs(self):
        with pytest.raises(DomainError):
            diversity2_mc(lambda rng, n: np.zeros((n, 1)), 1.0, MCParams(100))


class TestGridAndScaling:
    def test_constants(self):
        assert diversity_constant(1) == 2.0
        assert diversity_constant(2) == pytest.approx(2 * math.pi)
        assert diversity_constant(3) == pytest.approx(8 * math.pi)

    @pytest.mark.parametrize("dim", [1, 2])
    def test_constant_normalizes_kernel(self, dim):
        # t^d * int exp(-t|u|) du = C_d for every t
        if dim == 1:
            val, _ = integrate.quad(lambda u: math.exp(-abs(u)), -np.inf, np.inf)
        else:
            val, _ = integrate.quad(lambda r: 2 * math.pi * r * math.exp(-r), 0, np.inf)
        assert val == pytest.approx(diversity_constant(dim), rel=1e-10)

    def test_constant_on_gaussian(self):
        # the limit ratio on a gridded Gaussian reaches e^{h_2} = 2 sqrt(pi) only with C_1 = 2
        f = gaussian_grid([0.0], [[1.0]], cells=2**12)
        assert scaling_ratio(f, 1e4) == pytest.approx(2 * math.sqrt(math.pi), rel=1e-2)

    @pytest.mark.parametrize("t", [0.5, 1.0, 3.0])
    def test_grid_matches_quadrature_1d(self, t):
        f = gaussian_grid([0.0], [[1.0]], cells=2**11)
        assert diversity2_grid(f, t) == pytest.approx(1 / gaussian_kernel_mean(t), rel=1e-4)

    def test_grid_2d(self):
        f = gaussian_grid([0.0, 0.0], np.eye(2), cells=96)
        # E exp(-|D|), D ~ N(0, 2 I_2): |D| is Rayleigh with scale sqrt(2)
        val, _ = integrate.quad(lambda r: math.exp(-r) * r / 2 * math.exp(-r * r / 4), 0, np.inf)
        assert diversity2_grid(f, 1.0) == pytest.approx(1 / val, rel=1e-2)

    def test_general_order_grid(self):
        f = gaussian_grid([0.0], [[1.0]], cells=512)
        assert diversity_grid(f, 1.0, 2) == pytest.approx(diversity2_grid(f, 1.0), rel=1e-3)
        orders = [diversity_grid(f, 1.0, a) for a in (0, 0.5, 1, 2, 3, math.inf)]
        assert all(b <= a + 1e-12 for a, b in zip(orders, orders[1:]))

    def test_uniform_converges(self):
        f = make_grid(GridSpec(1, (0.0,), 1e-3, (1000,)), lambda x: np.ones(len(x)))
        r = scaling_limit_check(f, [10, 1e2, 1e3, 1e4, 1e5])
        assert r.passed and r.details["verdict"] == "converged"
        assert abs(r.details["ratios"][2] - 1) < 0.05

    def test_gaussian_converges(self):
        f = gaussian_grid([0.0], [[1.0]], cells=2**12)
        r = scaling_limit_check(f, [1, 10, 1e2, 1e3, 1e4, 1e5])
        assert r.details["target"] == pytest.approx(2 * math.sqrt(math.pi), rel=1e-4)
        assert math.exp(renyi_entropy(f, 2)) == r.details["target"]
        assert r.passed and r.details["monotone"]

    def test_short_ladder_inconclusive(self):
        f = gaussian_grid([0.0], [[1.0]], cells=256)
        r = scaling_limit_check(f, [0.1, 1.0])
        assert r.passed and r.details["verdict"] == "inconclusive"

    def test_bad_ladder(self):
        with pytest.raises(DomainError):
            scaling_limit_check(gaussian_grid([0.0], [[1.0]], cells=64), [10, 1])


class TestH2Contraction:
    def test_identity(self):
        X = DiscreteLaw.uniform(np.random.default_rng(0).normal(size=(4, 2)))
        r = check_h2_contraction(X, Distribution.gaussian([0, 0], np.eye(2)), ContractionSpec.identity(2),
                                 [0.5, 1, 2, 5], MCParams(100_000, seed=1))
        assert r.passed and all(row["margin"] == 0 for row in r.details["per_t"])

    def test_two_points_uniform_ball(self):
        X = DiscreteLaw.uniform([[0.0, 0.0], [2.0, 0.0]])
        T = ContractionSpec.affine(0.5 * np.eye(2))
        r = check_h2_contraction(X, Distribution.uniform_ball(2), T, [0.5, 1, 2, 5], MCParams(500_000, seed=2))
        assert r.passed, r.summary_line()

    @pytest.mark.parametrize("seed", range(3))
    def test_random_affine(self, seed):
        rng = np.random.default_rng(seed)
        X = DiscreteLaw(rng.dirichlet(np.ones(5)), rng.normal(size=(5, 2)) * 2)
        r = check_h2_contraction(X, Distribution.gaussian([0, 0], np.eye(2)), random_affine(rng, 2),
                                 [0.5, 1, 2, 5], MCParams(1_000_000, seed=seed))
        assert r.passed, r.summary_line()
        assert "implied_h2_at_top_t" in r.details

    def test_w_hypotheses(self):
        X = DiscreteLaw.uniform([[0.0, 0.0]])
        with pytest.raises(PreconditionError):
            check_h2_contraction(X, Distribution.uniform_box([0, 0], [1, 2]), ContractionSpec.identity(2), [1.0])


class TestRenyiGap:
    def test_order_two(self):
        assert renyi_gap_bound(2) == 0.0

    def test_shannon_constant(self):
        b = renyi_gap_bound(1)
        assert abs(b - 0.306853) < 1e-6
        assert abs(math.exp(2 * b) - 1.8473) < 1e-3

    def test_continuity_at_one(self):
        assert renyi_gap_bound(1 + 1e-7) == pytest.approx(renyi_gap_bound(1), abs=1e-6)

    def test_domain(self):
        with pytest.raises(DomainError):
            renyi_gap_bound(0.0)

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 3.0])
    def test_corollary_on_grids(self, alpha):
        rng = np.random.default_rng(int(alpha * 10))
        X = Distribution.gaussian([0.0, 0.0], np.diag([1.0, 2.0]))
        W = Distribution.radial(2, 1.0, 1.5)
        r = check_renyi_gap(X, W, random_affine(rng, 2), alpha)
        assert r.passed, r.summary_line()
