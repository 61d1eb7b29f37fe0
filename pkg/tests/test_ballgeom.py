import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpent.ballgeom import (MCParams, PointConfiguration, ball_volume, intersection_volume,
                            is_contractive_pair, kp_intersection_check, kp_union_check, lens_area,
                            mixture_power_integral, mixture_renyi_check, shared_volumes,
                            two_ball_intersection_volume, union_volume)
from kpent.contract import ContractionSpec
from kpent.errors import DomainError, PreconditionError

MC = MCParams(samples=1_000_000, seed=11)
LENS_1 = 2 * math.pi / 3 - math.sqrt(3) / 2


def random_contraction(rng, dim):
    A = rng.normal(size=(dim, dim))
    return ContractionSpec.affine(A / np.linalg.svd(A, compute_uv=False)[0] * rng.uniform(0.3, 1.0),
                                  rng.normal(size=dim))


class TestConfiguration:
    def test_invalid(self):
        with pytest.raises(DomainError):
            PointConfiguration(np.zeros((0, 2)))
        with pytest.raises(DomainError):
            PointConfiguration([[0.0, np.inf]])
        with pytest.raises(DomainError):
            PointConfiguration([[0.0, 0.0]], radius=0.0)

    def test_json_roundtrip(self):
        X = PointConfiguration([[0.0, 1.0], [2.0, 3.0]], 0.5)
        Y = PointConfiguration.from_json(X.to_json())
        np.testing.assert_array_equal(Y.centers, X.centers)
        assert Y.radius == X.radius
        with pytest.raises(DomainError):
            PointConfiguration.from_json({"dim": 3, "centers": [[0.0, 1.0]]})


class TestContractivePair:
    def test_identity(self):
        X = PointConfiguration(np.random.default_rng(0).normal(size=(5, 2)))
        assert is_contractive_pair(X, X)

    def test_half_scaling(self):
        X = PointConfiguration(np.random.default_rng(1).normal(size=(5, 3)))
        assert is_contractive_pair(X, PointConfiguration(0.5 * X.centers))

    def test_expansion(self):
        assert not is_contractive_pair(PointConfiguration([[0, 0], [2, 0]]), PointConfiguration([[0, 0], [3, 0]]))

    def test_size_mismatch(self):
        with pytest.raises(DomainError):
            is_contractive_pair(PointConfiguration([[0, 0]]), PointConfiguration([[0, 0], [1, 1]]))


class TestVolumes:
    def test_single_disk(self):
        cfg = PointConfiguration([[0.3, -2.0]])
        assert union_volume(cfg, MC).within(math.pi)
        assert intersection_volume(cfg, MC).within(math.pi)

    def test_disjoint_pair(self):
        cfg = PointConfiguration([[0.0, 0.0], [4.0, 0.0]])
        assert union_volume(cfg, MC).within(2 * math.pi)
        est = intersection_volume(cfg, MC)
        assert est.value == 0.0 and est.stderr == 0.0

    def test_overlapping_pair(self):
        cfg = PointConfiguration([[0.0, 0.0], [1.0, 0.0]])
        assert union_volume(cfg, MC).within(2 * math.pi - LENS_1)
        assert intersection_volume(cfg, MC).within(LENS_1)
        assert abs(2 * math.pi - LENS_1 - 5.05482) < 1e-5

    def test_inclusion_exclusion(self):
        cfg = PointConfiguration([[0.0, 0.0], [1.3, 0.4]], 1.2)
        u, i = union_volume(cfg, MC), intersection_volume(cfg, MC)
        assert abs(u.value + i.value - 2 * math.pi * 1.44) <= 3 * (u.stderr + i.stderr)

    def test_single_ball_bounds(self):
        cfg = PointConfiguration(np.random.default_rng(2).normal(size=(4, 3)))
        vb = ball_volume(3)
        u, i = union_volume(cfg, MC), intersection_volume(cfg, MC)
        assert u.value >= vb - 3 * u.stderr
        assert i.value <= vb + 3 * i.stderr

    def test_seed_determinism(self):
        cfg = PointConfiguration(np.random.default_rng(3).normal(size=(6, 2)))
        assert union_volume(cfg, MC) == union_volume(cfg, MC)
        assert union_volume(cfg, MC) != union_volume(cfg, MCParams(MC.samples, seed=12))

    def test_worker_independence(self):
        cfg = PointConfiguration(np.random.default_rng(4).normal(size=(6, 2)))
        one = union_volume(cfg, MCParams(300_000, seed=5, workers=1))
        three = union_volume(cfg, MCParams(300_000, seed=5, workers=3))
        assert one == three

    def test_monotone_radius(self):
        cfg = PointConfiguration(np.random.default_rng(5).normal(size=(5, 2)))
        big = cfg.with_radius(1.2)
        small, large = shared_volumes([cfg, big], "union", MCParams(200_000, seed=1), box=big.bounding_box())
        assert large.details["hits"] >= small.details["hits"]

    def test_minimum_samples(self):
        with pytest.raises(DomainError):
            union_volume(PointConfiguration([[0.0, 0.0]]), MCParams(samples=100))


class TestClosedForms:
    def test_lens(self):
        assert lens_area(0.0, 1.5) == pytest.approx(math.pi * 2.25, rel=1e-14)
        assert lens_area(2.0, 1.0) == 0.0 and lens_area(5.0, 1.0) == 0.0
        assert lens_area(1.0, 1.0) == pytest.approx(1.22837, abs=1e-5)

    def test_lens_against_mc(self):
        est = intersection_volume(PointConfiguration([[0.0, 0.0], [1.0, 0.0]]), MCParams(10_000_000, seed=3))
        assert est.within(lens_area(1.0, 1.0))

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_cap_formula(self, dim):
        assert two_ball_intersection_volume(0.0, 1.0, dim) == pytest.approx(ball_volume(dim), rel=1e-12)
        cfg = PointConfiguration(np.array([[0.0] * dim, [0.7] + [0.0] * (dim - 1)]))
        assert intersection_volume(cfg, MC).within(two_ball_intersection_volume(0.7, 1.0, dim))

    def test_one_dimensional_cap(self):
        assert two_ball_intersection_volume(0.5, 1.0, 1) == pytest.approx(1.5, rel=1e-12)


class TestKPChecks:
    def test_union_identity(self):
        X = PointConfiguration(np.random.default_rng(6).normal(size=(5, 2)))
        r = kp_union_check(X, ContractionSpec.identity(2), MC)
        assert r.passed and r.margin == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_union_plane(self, seed):
        rng = np.random.default_rng(seed)
        X = PointConfiguration(rng.normal(size=(5, 2)) * 1.5)
        r = kp_union_check(X, random_contraction(rng, 2), MCParams(1_000_000, seed=seed))
        assert r.passed, r.summary_line()
        assert r.provenance == ("mc", "mc")

    def test_union_3d_continuous_path(self):
        rng = np.random.default_rng(7)
        X = PointConfiguration(rng.normal(size=(4, 3)))
        c = X.centers.mean(axis=0)
        # homothety toward the centroid: a continuous contraction path
        T = ContractionSpec.affine(0.7 * np.eye(3), 0.3 * c)
        assert kp_union_check(X, T, MCParams(1_000_000, seed=2)).passed

    def test_union_rejects_expansion(self):
        X = PointConfiguration([[0.0, 0.0], [1.0, 0.0]])
        with pytest.raises(PreconditionError):
            kp_union_check(X, PointConfiguration([[0.0, 0.0], [2.0, 0.0]]), MC)

    def test_intersection_identity(self):
        X = PointConfiguration(np.random.default_rng(8).normal(size=(3, 2)) * 0.3)
        r = kp_intersection_check(X, ContractionSpec.identity(2), MC)
        assert r.passed and r.margin == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 3))
    def test_two_ball_intersection_exact(self, seed, dim):
        rng = np.random.default_rng(seed)
        X = PointConfiguration(rng.normal(size=(2, dim)))
        r = kp_intersection_check(X, random_contraction(rng, dim), MC)
        assert r.passed and r.provenance == ("closed-form", "closed-form")

    @pytest.mark.parametrize("seed", range(3))
    def test_intersection_five_disks(self, seed):
        rng = np.random.default_rng(100 + seed)
        X = PointConfiguration(rng.normal(size=(5, 2)) * 0.4)
        r = kp_intersection_check(X, random_contraction(rng, 2), MCParams(1_000_000, seed=seed))
        assert r.passed, r.summary_line()

    def test_escalation_recorded(self):
        X = PointConfiguration(np.random.default_rng(9).normal(size=(4, 2)))
        T = ContractionSpec.affine(0.999 * np.eye(2))
        r = kp_union_check(X, T, MCParams(100_000, seed=1, max_samples=1_000_000))
        assert r.samples in (100_000, 1_000_000)
        assert r.details["escalated_to"] == r.samples


class TestMixtureRenyi:
    def test_order_two_exact(self):
        X = PointConfiguration([[0.0, 0.0], [0.5, 0.0]])
        (est,) = mixture_power_integral([X], None, 2, MC)
        vb = math.pi
        expected = (0.25 * 2 * vb + 0.5 * lens_area(0.5, 1.0)) / vb**2
        assert est.value == pytest.approx(expected, rel=1e-12)

    def test_order_three_mc_matches_single_ball(self):
        X = PointConfiguration([[0.0, 0.0]])
        (est,) = mixture_power_integral([X], None, 3, MC)
        # integral of (1/pi)^3 over the disk = pi^-2
        assert est.within(math.pi**-2)

    @pytest.mark.parametrize("alpha", [2, 3])
    def test_check_passes(self, alpha):
        rng = np.random.default_rng(alpha)
        X = PointConfiguration(rng.normal(size=(5, 2)))
        r = mixture_renyi_check(X, random_contraction(rng, 2), alpha, mc=MCParams(1_000_000, seed=4))
        assert r.passed, r.summary_line()

    def test_bad_order(self):
        with pytest.raises(DomainError):
            mixture_power_integral([PointConfiguration([[0.0]])], None, 1.5, MC)
