import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import pathflow as pf
from conftest import path_from_values


class TestSimulateBrownian:
    def test_initial_condition(self):
        p = pf.simulate_brownian(4, 1.0, 0.0, seed=7)
        assert p.values.shape == (5,)
        assert p.values[0] == 0.0

    def test_deterministic(self):
        a = pf.simulate_brownian(256, 1.0, 0.5, seed=11)
        b = pf.simulate_brownian(256, 1.0, 0.5, seed=11)
        assert np.array_equal(a.values, b.values)

    def test_terminal_variance_monte_carlo(self):
        # oracle: Var B(T) = T
        xs = [pf.simulate_brownian(4, 1.0, 0.0, seed=s).values[-1]
              for s in range(10_000)]
        assert 0.94 <= np.var(xs) <= 1.06

    def test_invalid_arguments(self):
        with pytest.raises(pf.InvalidArgumentError):
            pf.simulate_brownian(0, 1.0, 0.0, seed=1)
        with pytest.raises(pf.InvalidArgumentError):
            pf.simulate_brownian(8, -1.0, 0.0, seed=1)


class TestSimulateEuler:
    def test_degenerate_constant(self):
        p = pf.simulate_euler_sde(lambda x: 0.0, lambda x: 0.0, 16, 1.0, 1.5, seed=3)
        assert np.all(p.values == 1.5)

    def test_deterministic_ode(self):
        p = pf.simulate_euler_sde(lambda x: 1.0, lambda x: 0.0, 8, 1.0, 2.0, seed=3)
        assert np.allclose(p.values, 2.0 + np.arange(9) / 8.0, rtol=0, atol=1e-15)

    def test_cross_check_with_brownian(self):
        a = pf.simulate_euler_sde(lambda x: 0.0, lambda x: 1.0, 512, 1.0, 0.0, seed=21)
        b = pf.simulate_brownian(512, 1.0, 0.0, seed=21)
        assert np.array_equal(a.values, b.values)

    def test_divergence_carries_index(self):
        with pytest.raises(pf.SimulationDivergedError) as exc:
            pf.simulate_euler_sde(lambda x: math.nan, lambda x: 0.0, 8, 1.0, 0.0, seed=1)
        assert exc.value.index == 1


class TestSimulateStable:
    def test_beta2_scale_convention(self):
        # oracle: at beta=2 the CMS draw is N(0, 2), so Var X(T) = 2T
        xs = [pf.simulate_symmetric_stable(2.0, 4, 1.0, seed=s).values[-1]
              for s in range(20_000)]
        assert abs(np.var(xs) / 2.0 - 1.0) < 0.03

    def test_hill_tail_exponent(self):
        # oracle: Hill estimator over the largest order statistics of |increments|
        p = pf.simulate_symmetric_stable(1.5, 10 ** 6, 1.0, seed=5)
        a = np.sort(np.abs(np.diff(p.values)))[::-1]
        k = 2000
        hill = 1.0 / np.mean(np.log(a[:k] / a[k]))
        assert 1.3 <= hill <= 1.7

    def test_deterministic(self):
        a = pf.simulate_symmetric_stable(1.7, 128, 2.0, seed=9)
        b = pf.simulate_symmetric_stable(1.7, 128, 2.0, seed=9)
        assert np.array_equal(a.values, b.values)

    @pytest.mark.parametrize("beta", [0.9, 1.0, 2.1, -1.0])
    def test_beta_range(self, beta):
        with pytest.raises(pf.InvalidArgumentError):
            pf.simulate_symmetric_stable(beta, 8, 1.0, seed=1)


class TestQuadraticVariation:
    def test_constant_path(self):
        p = pf.simulate_euler_sde(lambda x: 0.0, lambda x: 0.0, 8, 1.0, 0.7, seed=1)
        assert pf.quadratic_variation(p).total == 0.0

    def test_linear_path_arithmetic(self):
        p = pf.simulate_euler_sde(lambda x: 1.0, lambda x: 0.0, 4, 1.0, 0.0, seed=1)
        assert pf.quadratic_variation(p).total == pytest.approx(0.25, abs=1e-15)

    def test_brownian_qv_near_T(self, bm_path_fine):
        qv = pf.quadratic_variation(bm_path_fine)
        assert 0.97 <= qv.total <= 1.03

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=60))
    @settings(max_examples=60, deadline=None)
    def test_discrete_ito_identity_for_square(self, vals):
        # telescoping: sum 2 v[k-1] dv + sum dv^2 == v_n^2 - v_0^2
        v = np.asarray(vals)
        lhs = np.sum(2.0 * v[:-1] * np.diff(v)) + np.sum(np.diff(v) ** 2)
        rhs = v[-1] ** 2 - v[0] ** 2
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-9)


class TestStopRule:
    def test_never_exceeds(self):
        p = pf.simulate_euler_sde(lambda x: 0.0, lambda x: 0.0, 6, 1.0, 0.0, seed=1)
        assert pf.stop_at_level(p, 1.0).stop_index == 6

    def test_first_exceedance(self):
        p = path_from_values([0.0, 2.0, 0.0])
        assert pf.stop_at_level(p, 1.0).stop_index == 1

    def test_immediate_stop(self):
        p = path_from_values([3.0, 0.0, 0.0])
        assert pf.stop_at_level(p, 1.0).stop_index == 0

    def test_commutes_with_slicing(self, bm_path):
        full = pf.stop_at_level(bm_path, 0.6).stop_index
        for cut in (100, 1000, 4000):
            sub = path_from_values(bm_path.values[: cut + 1], T=cut * bm_path.dt)
            assert pf.stop_at_level(sub, 0.6).stop_index == min(full, cut)


class TestPathSlice:
    def test_modify_terminal_read(self, bm_path):
        s = pf.modify_terminal(pf.slice_at(bm_path, 100), 3.25)
        assert s.value_at(100) == 3.25
        assert s.value_at(99) == bm_path.values[99]

    def test_flat_extension_read(self, bm_path):
        s = pf.flat_extend(pf.slice_at(bm_path, 50), 60)
        for j in range(51, 61):
            assert s.value_at(j) == bm_path.values[50]

    def test_identity_modification(self, bm_path):
        cut = 77
        plain = pf.slice_at(bm_path, cut)
        modded = pf.modify_terminal(plain, float(bm_path.values[cut]))
        for i in (0, 10, cut):
            assert modded.value_at(i) == plain.value_at(i)

    def test_conflicting_modifications(self, bm_path):
        s = pf.modify_terminal(pf.slice_at(bm_path, 5), 1.0)
        with pytest.raises(pf.InvalidArgumentError):
            pf.bump(s, 0.1)
        s2 = pf.bump(pf.slice_at(bm_path, 5), 0.1)
        with pytest.raises(pf.InvalidArgumentError):
            pf.modify_terminal(s2, 1.0)

    def test_out_of_range(self, bm_path):
        with pytest.raises(pf.InvalidArgumentError):
            pf.slice_at(bm_path, bm_path.n_steps + 1)
        with pytest.raises(pf.InvalidArgumentError):
            pf.flat_extend(pf.slice_at(bm_path, 10), 5)

    def test_reads_share_parent_memory(self, bm_path):
        s = pf.slice_at(bm_path, 500)
        assert np.shares_memory(s.history(), bm_path.values)

    def test_bump_applies_at_terminal(self, bm_path):
        s = pf.bump(pf.slice_at(bm_path, 20), 0.5)
        assert s.terminal == pytest.approx(bm_path.values[20] + 0.5)

    def test_override_with_extension_applies_at_end(self, bm_path):
        s = pf.modify_terminal(pf.flat_extend(pf.slice_at(bm_path, 30), 40), 9.0)
        assert s.value_at(40) == 9.0
        assert s.value_at(35) == bm_path.values[30]
        assert s.base_terminal == bm_path.values[30]


class TestSerialization:
    def test_binary_round_trip(self, bm_path):
        buf = io.BytesIO()
        pf.paths.write_binary(bm_path, buf)
        buf.seek(0)
        back = pf.paths.read_binary(buf)
        assert np.array_equal(back.values, bm_path.values)
        assert back.seed == bm_path.seed and back.kind == bm_path.kind
        assert back.T == bm_path.T

    def test_binary_round_trip_stable(self):
        p = pf.simulate_symmetric_stable(1.5, 64, 1.0, seed=3)
        buf = io.BytesIO()
        pf.paths.write_binary(p, buf)
        buf.seek(0)
        back = pf.paths.read_binary(buf)
        assert back.beta == 1.5
        assert np.array_equal(back.values, p.values)

    def test_csv_round_trip_and_precision(self, bm_path):
        buf = io.StringIO()
        pf.paths.write_csv(bm_path, buf)
        text = buf.getvalue()
        assert text.startswith("time,value\r\n")
        buf.seek(0)
        t, v = pf.paths.read_csv(buf)
        assert np.array_equal(v, bm_path.values)  # 17 significant digits round-trip
        assert t[-1] == pytest.approx(bm_path.T)
