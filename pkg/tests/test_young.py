import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import pathflow as pf
from conftest import direct_young_2d, path_from_values


def grid_fn(fn, m, n):
    t = np.linspace(0.0, 1.0, m)
    x = np.linspace(0.0, 1.0, n)
    return pf.GridFunction2D.from_callable(fn, t, x)


small_matrices = st.integers(2, 9).flatmap(
    lambda m: st.integers(2, 9).flatmap(
        lambda n: st.lists(st.floats(-10, 10), min_size=m * n, max_size=m * n)
        .map(lambda vals: np.array(vals).reshape(m, n))
    )
)


def as_grid(values):
    m, n = values.shape
    return pf.GridFunction2D(times=np.arange(m, dtype=float),
                             levels=np.arange(n, dtype=float), values=values)


class TestYoung1D:
    def test_constant_integrator(self):
        assert pf.young_integral_1d([1.0, 2.0, 3.0], [5.0, 5.0, 5.0]) == 0.0

    def test_unit_integrand_telescopes(self):
        G = [0.0, 0.3, -0.2, 1.7]
        assert pf.young_integral_1d([1.0] * 4, G) == pytest.approx(1.7)

    def test_t_dt_quadrature(self):
        t = np.linspace(0.0, 1.0, 2 ** 10 + 1)
        assert pf.young_integral_1d(t, t) == pytest.approx(0.5, abs=2e-3)

    def test_length_mismatch(self):
        with pytest.raises(pf.InvalidArgumentError):
            pf.young_integral_1d([1.0, 2.0], [1.0, 2.0, 3.0])


class TestYoung2D:
    def test_additively_separable_vanishes(self):
        G = grid_fn(lambda s, x: s + x, 17, 33)
        h = grid_fn(lambda s, x: np.sin(s) * x + 1.0, 17, 33)
        r = pf.young_integral_2d(h, G)
        assert r.value == pytest.approx(0.0, abs=1e-14)

    def test_product_grid_exact_at_every_level(self):
        G = grid_fn(lambda s, x: s * x, 65, 65)
        h = grid_fn(lambda s, x: np.ones_like(s * x), 65, 65)
        r = pf.young_integral_2d(h, G)
        assert r.value == pytest.approx(1.0, rel=1e-14)
        for lv in r.ladder_values:
            assert lv == pytest.approx(1.0, rel=1e-14)
        assert r.converged

    def test_sx_against_sx(self):
        G = grid_fn(lambda s, x: s * x, 513, 513)
        h = grid_fn(lambda s, x: s * x, 513, 513)
        r = pf.young_integral_2d(h, G)
        assert abs(r.value - 0.25) < 1e-3  # integral of s*x over the unit square

    def test_matches_direct_double_loop(self):
        rng = np.random.default_rng(5)
        hv = rng.normal(size=(7, 9))
        Gv = rng.normal(size=(7, 9))
        r = pf.young_integral_2d(as_grid(hv), as_grid(Gv))
        assert r.value == pytest.approx(direct_young_2d(hv, Gv), rel=1e-12)

    def test_grid_mismatch(self):
        a = grid_fn(lambda s, x: s * x, 9, 9)
        b = grid_fn(lambda s, x: s * x, 9, 10)
        with pytest.raises(pf.InvalidArgumentError):
            pf.young_integral_2d(a, b)

    @given(small_matrices, small_matrices)
    @settings(max_examples=40, deadline=None)
    def test_bilinearity(self, A, B):
        m = min(A.shape[0], B.shape[0])
        n = min(A.shape[1], B.shape[1])
        A, B = A[:m, :n], B[:m, :n]
        h1, h2, G = as_grid(A), as_grid(B), as_grid(A + 0.5 * B)
        lhs = pf.young_integral_2d(as_grid(A + 2.0 * B), G).value
        rhs = (pf.young_integral_2d(h1, G).value
               + 2.0 * pf.young_integral_2d(h2, G).value)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)

    def test_ladder_contraction_on_smooth_data(self):
        G = grid_fn(lambda s, x: np.sin(2 * s) * np.cos(x), 513, 513)
        h = grid_fn(lambda s, x: np.exp(-(s ** 2) - x ** 2), 513, 513)
        r = pf.young_integral_2d(h, G)
        gaps = np.abs(np.diff(np.asarray(r.ladder_values)))
        # beyond 64x64 each dyadic refinement shrinks the gap by >= 1.5
        tail = gaps[-3:]
        assert np.all(tail[1:] * 1.5 <= tail[:-1])

    def test_integrator_edge_metadata(self):
        Gv = np.zeros((5, 5)); Gv[1:, 1:] = np.arange(16).reshape(4, 4)
        assert pf.young_integral_2d(as_grid(np.ones((5, 5))), as_grid(Gv)).integrator_edges_vanish
        Gv2 = np.ones((5, 5))
        assert not pf.young_integral_2d(as_grid(np.ones((5, 5))), as_grid(Gv2)).integrator_edges_vanish


class TestSummationByParts:
    def test_constant_integrand_reduces_to_corner(self):
        rng = np.random.default_rng(1)
        Gv = rng.normal(size=(6, 8))
        hv = np.full((6, 8), 3.0)
        sbp = pf.summation_by_parts_2d(as_grid(hv), as_grid(Gv))
        assert sbp.interior == 0.0
        assert sbp.boundary_time == 0.0
        assert sbp.boundary_space == 0.0
        assert sbp.total == pytest.approx(direct_young_2d(hv, Gv), rel=1e-12)

    def test_zero_integrator(self):
        hv = np.random.default_rng(2).normal(size=(5, 5))
        sbp = pf.summation_by_parts_2d(as_grid(hv), as_grid(np.zeros((5, 5))))
        assert sbp == (0.0, 0.0, 0.0, 0.0)

    @given(small_matrices, small_matrices)
    @settings(max_examples=60, deadline=None)
    def test_identity_exact(self, A, B):
        m = min(A.shape[0], B.shape[0])
        n = min(A.shape[1], B.shape[1])
        hv, Gv = A[:m, :n], B[:m, :n]
        sbp = pf.summation_by_parts_2d(as_grid(hv), as_grid(Gv))
        direct = direct_young_2d(hv, Gv)
        assert sbp.total == pytest.approx(direct, rel=1e-12, abs=1e-12)


class TestItoForward:
    def test_unit_integrand(self, bm_path):
        v = pf.ito_forward_integral(np.ones(bm_path.n_steps + 1), bm_path, upto=1000)
        assert v == pytest.approx(bm_path.values[1000] - bm_path.values[0])

    def test_discrete_ito_identity(self, bm_path):
        qv = pf.quadratic_variation(bm_path)
        upto = bm_path.n_steps
        v = pf.ito_forward_integral(2.0 * bm_path.values, bm_path, upto=upto)
        expect = bm_path.values[upto] ** 2 - bm_path.values[0] ** 2 - qv.total
        assert v == pytest.approx(expect, rel=1e-12)

    def test_zero_integrand(self, bm_path):
        assert pf.ito_forward_integral(np.zeros(bm_path.n_steps + 1), bm_path) == 0.0

    def test_length_check(self, bm_path):
        with pytest.raises(pf.InvalidArgumentError):
            pf.ito_forward_integral(np.ones(10), bm_path, upto=100)

    def test_bv_integrator_converges_to_stieltjes(self):
        # oracle: integral of cos(pi v) dv for v(t) = t^2 on [0,1]
        truth = np.sin(np.pi) / np.pi - 0.0
        vals = []
        for n in (2 ** 8, 2 ** 10, 2 ** 12):
            t = np.linspace(0.0, 1.0, n + 1)
            path = path_from_values(t ** 2)
            vals.append(pf.ito_forward_integral(np.cos(np.pi * t ** 2), path))
        errs = [abs(v - truth) for v in vals]
        assert errs[2] < errs[1] < errs[0]
        assert errs[2] < 1e-3
