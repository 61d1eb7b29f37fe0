import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from kpent.errors import DomainError, EmptySupportError, PreconditionError
from kpent.grid import (DensityGrid, GridSpec, covariance, entropy_power, gaussian_grid, load_grid,
                        make_grid, point_mass, renyi_entropy, save_grid)

GAUSS_H1 = 0.5 * math.log(2 * math.pi * math.e)
ALPHAS = (0.0, 0.5, 1.0, 2.0, 5.0, math.inf)


def uniform_grid(a, b, cells):
    spec = GridSpec(1, (a,), (b - a) / cells, (cells,))
    return make_grid(spec, lambda x: np.ones(len(x)))


def random_grid(rng, dim=1, max_side=30, sparsity=0.3):
    shape = tuple(int(s) for s in rng.integers(1, max_side, size=dim))
    mass = rng.random(shape) * (rng.random(shape) > sparsity)
    mass.flat[0] += 1e-3
    spec = GridSpec(dim, tuple(rng.normal(size=dim)), float(rng.uniform(0.05, 1)), shape)
    return DensityGrid(spec, mass).normalize()


class TestGridSpec:
    def test_rejects_bad_dimensions(self):
        with pytest.raises(DomainError):
            GridSpec(4, (0,) * 4, 1.0, (1,) * 4)
        with pytest.raises(DomainError):
            GridSpec(2, (0,), 1.0, (1, 1))

    def test_rejects_bad_spacing_and_shape(self):
        with pytest.raises(DomainError):
            GridSpec(1, (0,), 0.0, (3,))
        with pytest.raises(DomainError):
            GridSpec(1, (0,), 1.0, (0,))

    def test_rejects_oversized_grid(self):
        with pytest.raises(DomainError):
            GridSpec(3, (0, 0, 0), 1.0, (2048, 2048, 1024))

    def test_covering_contains_box(self):
        spec = GridSpec.covering([0.0, -1.0], [1.0, 2.5], 0.3)
        assert np.all(spec.lower <= [0.0, -1.0])
        assert np.all(spec.upper >= [1.0, 2.5])


class TestDensityGrid:
    def test_negative_mass_rejected(self):
        with pytest.raises(DomainError):
            DensityGrid(GridSpec(1, (0,), 1.0, (2,)), [0.5, -0.5])

    def test_immutable(self):
        f = uniform_grid(0, 1, 4)
        with pytest.raises(AttributeError):
            f.mass = None
        with pytest.raises(ValueError):
            f.mass[0] = 1.0

    def test_normalize(self):
        f = DensityGrid(GridSpec(1, (0,), 1.0, (3,)), [1.0, 2.0, 1.0]).normalize()
        assert abs(f.total - 1) < 1e-12
        np.testing.assert_allclose(f.mass, [0.25, 0.5, 0.25])


class TestMakeGrid:
    def test_constant_function(self):
        f = uniform_grid(0, 1, 100)
        np.testing.assert_allclose(f.mass, 0.01, rtol=1e-12)

    def test_single_sample_is_point_mass(self):
        spec = GridSpec(1, (-0.5,), 0.1, (10,))
        f = make_grid(spec, [0.0])
        assert f.support_count() == 1
        assert f.mass.max() == 1.0

    def test_gaussian_normalizes(self):
        spec = GridSpec(1, (-8.0,), 16 / 2**12, (2**12,))
        f = make_grid(spec, lambda x: np.exp(-0.5 * x[:, 0] ** 2) / math.sqrt(2 * math.pi))
        assert abs(f.total - 1) < 1e-9
        raw = f.spec.cell_volume * np.exp(-0.5 * f.spec.axes()[0] ** 2) / math.sqrt(2 * math.pi)
        quad, _ = integrate.quad(lambda x: np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi), -8, 8)
        assert abs(raw.sum() - quad) < 1e-9

    def test_samples_outside_grid(self):
        with pytest.raises(EmptySupportError):
            make_grid(GridSpec(1, (0,), 1.0, (3,)), [10.0, -4.0])

    def test_negative_function_rejected(self):
        with pytest.raises(DomainError):
            make_grid(GridSpec(1, (0,), 1.0, (3,)), lambda x: x[:, 0] - 1.0)


class TestRenyiEntropy:
    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_uniform_unit_interval(self, alpha):
        assert abs(renyi_entropy(uniform_grid(0, 1, 50), alpha)) < 1e-12

    def test_uniform_on_02(self):
        assert renyi_entropy(uniform_grid(0, 2, 64), 2) == pytest.approx(math.log(2), abs=1e-12)

    def test_standard_gaussian_shannon(self):
        f = gaussian_grid([0.0], [[1.0]], cells=2**12)
        assert abs(renyi_entropy(f, 1) - GAUSS_H1) < 1e-4

    @pytest.mark.parametrize("alpha", [0.5, 2.0, 3.0])
    def test_gaussian_renyi_closed_form(self, alpha):
        f = gaussian_grid([0.0], [[1.0]], cells=2**12)
        exact = 0.5 * math.log(2 * math.pi) + math.log(alpha) / (2 * (alpha - 1))
        assert abs(renyi_entropy(f, alpha) - exact) < 1e-4

    def test_gaussian_min_entropy(self):
        f = gaussian_grid([0.0], [[1.0]], cells=2**12)
        assert abs(renyi_entropy(f, math.inf) - 0.5 * math.log(2 * math.pi)) < 1e-4

    def test_unit_disk_support_volume(self):
        h = 0.004
        spec = GridSpec.covering([-1.1, -1.1], [1.1, 1.1], h)
        f = make_grid(spec, lambda x: (np.sum(x * x, axis=1) <= 1).astype(float))
        # boundary cells: at most perimeter * diagonal / area in relative volume
        assert abs(renyi_entropy(f, 0) - math.log(math.pi)) < 2 * math.pi * h * math.sqrt(2) / math.pi

    def test_unnormalized_rejected(self):
        f = DensityGrid(GridSpec(1, (0,), 1.0, (2,)), [0.5, 0.6])
        with pytest.raises(PreconditionError):
            renyi_entropy(f, 1)

    def test_negative_alpha_rejected(self):
        with pytest.raises(DomainError):
            renyi_entropy(uniform_grid(0, 1, 4), -0.5)

    def test_alpha_one_is_explicit_shannon(self):
        f = random_grid(np.random.default_rng(3))
        m = f.mass[f.mass > 0]
        expected = -np.sum(m * np.log(m)) + math.log(f.spacing)
        assert renyi_entropy(f, 1) == pytest.approx(expected, abs=1e-12)
        near = renyi_entropy(f, 1 + 1e-7)
        assert abs(near - renyi_entropy(f, 1)) < 1e-5

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 3))
    def test_monotone_in_order(self, seed, dim):
        f = random_grid(np.random.default_rng(seed), dim=dim, max_side=12)
        values = [renyi_entropy(f, a) for a in ALPHAS]
        assert all(values[i] >= values[i + 1] for i in range(len(values) - 1))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 3))
    def test_translation_invariance_bit_exact(self, seed, dim):
        rng = np.random.default_rng(seed)
        f = random_grid(rng, dim=dim, max_side=10)
        g = f.with_origin(tuple(np.asarray(f.spec.origin) + rng.normal(size=dim) * 10))
        for a in ALPHAS:
            assert renyi_entropy(f, a) == renyi_entropy(g, a)

    def test_refinement_changes_little(self):
        h1 = renyi_entropy(gaussian_grid([0.0], [[1.0]], cells=256), 1)
        h2 = renyi_entropy(gaussian_grid([0.0], [[1.0]], cells=512), 1)
        assert abs(h1 - h2) < 16 / 256


class TestEntropyPower:
    def test_uniform(self):
        assert entropy_power(uniform_grid(0, 1, 32)) == pytest.approx(1.0, abs=1e-12)

    def test_gaussian_1d(self):
        f = gaussian_grid([0.0], [[1.0]], cells=2**12)
        assert entropy_power(f) == pytest.approx(2 * math.pi * math.e, rel=1e-3)

    def test_gaussian_2d(self):
        f = gaussian_grid([0.0, 0.0], np.eye(2), cells=256)
        assert entropy_power(f) == pytest.approx(2 * math.pi * math.e, rel=1e-3)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_positive(self, seed):
        f = random_grid(np.random.default_rng(seed), dim=2, max_side=8)
        assert entropy_power(f) > 0


class TestCovariance:
    def test_point_mass(self):
        c = covariance(point_mass([3.0, -1.0], 0.0 + 1e-9))
        np.testing.assert_allclose(c.mean, [3.0, -1.0])
        np.testing.assert_allclose(c.cov, np.zeros((2, 2)), atol=1e-18)

    def test_uniform(self):
        c = covariance(uniform_grid(0, 1, 100))
        assert c.mean[0] == pytest.approx(0.5, abs=1e-12)
        assert c.cov[0, 0] == pytest.approx(1 / 12, abs=1e-6)

    def test_gaussian_2d(self):
        c = covariance(gaussian_grid([0.0, 0.0], np.eye(2), cells=256))
        np.testing.assert_allclose(c.cov, np.eye(2), atol=1e-3)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 3))
    def test_symmetric_psd(self, seed, dim):
        c = covariance(random_grid(np.random.default_rng(seed), dim=dim, max_side=10))
        np.testing.assert_allclose(c.cov, c.cov.T, atol=1e-12)
        assert np.linalg.eigvalsh(c.cov).min() >= -1e-10


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        f = random_grid(np.random.default_rng(5), dim=2)
        sidecar = save_grid(f, tmp_path / "f.kpg")
        g = load_grid(tmp_path / "f.kpg")
        assert g.spec == f.spec
        np.testing.assert_array_equal(g.mass, f.mass)
        assert sidecar.exists()

    def test_header_layout(self, tmp_path):
        f = uniform_grid(0, 1, 4)
        save_grid(f, tmp_path / "u.kpg")
        raw = (tmp_path / "u.kpg").read_bytes()
        assert len(raw) == 8 + 4 + 8 + 8 + 8 + 4 * 8
        np.testing.assert_array_equal(np.frombuffer(raw[-32:], "<f8"), f.mass)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x").write_bytes(b"nonsense" * 4)
        with pytest.raises(DomainError):
            load_grid(tmp_path / "x")
