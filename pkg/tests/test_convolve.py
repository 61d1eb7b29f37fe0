import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpent.convolve import aligned_pair, convolve, convolve_direct
from kpent.errors import IncompatibleGridError
from kpent.families import random_log_concave
from kpent.grid import DensityGrid, GridSpec, entropy_power, gaussian_density, make_grid, point_mass


def random_grid(rng, dim, spacing, max_cells=1024):
    side = max(1, int(max_cells ** (1 / dim)))
    shape = tuple(int(s) for s in rng.integers(1, side + 1, size=dim))
    mass = rng.random(shape) * (rng.random(shape) > 0.2)
    mass.flat[0] += 1e-3
    origin = tuple(rng.integers(-20, 20, size=dim) * spacing)
    return DensityGrid(GridSpec(dim, origin, spacing, shape), mass).normalize()


def on_common_frame(f, g):
    _, fm, gm = aligned_pair(f, g)
    return fm, gm


class TestDirect:
    def test_point_mass_translates(self):
        h = 0.25
        g = random_grid(np.random.default_rng(0), 1, h)
        out = convolve_direct(point_mass([1.0], h), g)
        np.testing.assert_allclose(out.spec.origin, np.asarray(g.spec.origin) + 1.0 - h / 2 + h / 2)
        np.testing.assert_allclose(out.mass, g.trimmed().mass, atol=1e-15)

    def test_binomial(self):
        f = DensityGrid(GridSpec(1, (-0.5,), 1.0, (2,)), [0.5, 0.5])
        out = convolve_direct(f, f)
        np.testing.assert_allclose(out.mass, [0.25, 0.5, 0.25])
        np.testing.assert_allclose(out.spec.axes()[0], [0.0, 1.0, 2.0])

    def test_triangle(self):
        n = 200
        spec = GridSpec(1, (0.0,), 1 / n, (n,))
        u = make_grid(spec, lambda x: np.ones(len(x)))
        out = convolve_direct(u, u)
        peak = out.density.max()
        assert abs(peak - 1.0) <= spec.spacing
        x = out.spec.axes()[0]
        assert abs(x[np.argmax(out.density)] - 1.0) <= spec.spacing

    def test_spacing_mismatch(self):
        with pytest.raises(IncompatibleGridError):
            convolve_direct(point_mass([0.0], 0.1), point_mass([0.0], 0.2))
        with pytest.raises(IncompatibleGridError):
            convolve(point_mass([0.0], 0.1), point_mass([0.0, 0.0], 0.1))


class TestFast:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 3))
    def test_matches_direct(self, seed, dim):
        rng = np.random.default_rng(seed)
        h = float(rng.uniform(0.1, 1))
        f = random_grid(rng, dim, h, 512)
        g = random_grid(rng, dim, h, 512)
        fast, slow = convolve(f, g), convolve_direct(f, g)
        a, b = on_common_frame(fast, slow)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=0)

    def test_point_mass_translates(self):
        h = 0.5
        g = random_grid(np.random.default_rng(1), 2, h)
        out = convolve(g, point_mass([2.0, -1.0], h))
        np.testing.assert_allclose(out.spec.origin, np.asarray(g.spec.origin) + [2.0, -1.0])
        np.testing.assert_allclose(out.mass, g.trimmed().mass, rtol=1e-12)

    def test_gaussian_sum(self):
        h = 16 / 1024
        spec = GridSpec.covering([-8.0], [8.0], h)
        f = make_grid(spec, gaussian_density([0.0], [[1.0]]))
        out = convolve(f, f)
        exact = make_grid(out.spec, gaussian_density([0.0], [[2.0]]))
        # the cell model adds spacing^2/12 of variance per factor; the per-cell gap is
        # of that order times the density curvature, far below 1e-6 in mass
        np.testing.assert_allclose(out.mass, exact.mass, atol=1e-6)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 2))
    def test_commutative(self, seed, dim):
        rng = np.random.default_rng(seed)
        f, g = random_grid(rng, dim, 0.3), random_grid(rng, dim, 0.3)
        a, b = convolve(f, g), convolve(g, f)
        assert a.spec == b.spec
        np.testing.assert_array_equal(a.mass, b.mass)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 3))
    def test_mass_conserved(self, seed, dim):
        rng = np.random.default_rng(seed)
        out = convolve(random_grid(rng, dim, 0.2), random_grid(rng, dim, 0.2))
        assert abs(out.total - 1) < 1e-12
        assert out.mass.min() >= 0

    def test_no_wraparound(self):
        f = DensityGrid(GridSpec(1, (0.0,), 1.0, (4,)), [1, 0, 0, 1]).normalize()
        out = convolve(f, f)
        np.testing.assert_allclose(out.mass, [0.25, 0, 0, 0.5, 0, 0, 0.25], atol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_epi_smoke(self, seed):
        rng = np.random.default_rng(seed)
        X, W = random_log_concave(rng, 1), random_log_concave(rng, 1)
        h = min(X.min_std(), W.min_std()) * 16 / 512
        f, g = X.grid(h), W.grid(h)
        n = entropy_power(convolve(f, g))
        assert n >= entropy_power(f) + entropy_power(g) - 1e-2 * math.sqrt(n)
