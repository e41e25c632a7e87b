import numpy as np
import pytest

from coopsci.core import DegenerateUpdateError, SplitEstimate, is_psd
from coopsci.kalman import GpsModel, gps_model, kf_update
from coopsci.sci import (
    OmegaSearch,
    fuse,
    fused_logdet,
    gps_split_update,
    information_fuse,
    optimize_omega,
    sci_fuse,
)
from conftest import random_psd_rank, random_spd


def scalar(x, pd, pi):
    return SplitEstimate([x], [[pd]], [[pi]])


def random_split(rng, n=4, dep=True, ind=True, scale=1.0):
    pd = random_psd_rank(rng, n, rank=n, scale=scale) if dep else np.zeros((n, n))
    pi = random_spd(rng, n, scale=scale) if ind else np.zeros((n, n))
    return SplitEstimate(rng.standard_normal(n) * 5, pd, pi)


class TestOmegaSearch:
    def test_defaults(self):
        s = OmegaSearch()
        assert s.interval == (1e-3, 1 - 1e-3)
        assert s.block_size(4) == 2 and s.block_size(1) == 1
        assert OmegaSearch(block=None).block_size(4) == 4

    @pytest.mark.parametrize("kw", [dict(lower=0.6, upper=0.5), dict(clamp=0.5), dict(grid_points=2),
                                    dict(tolerance=0.0), dict(upper=1.5)])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            OmegaSearch(**kw)


class TestSciFuse:
    def test_identical_independent(self, rng):
        P = random_spd(rng)
        a = SplitEstimate.independent(np.arange(4.0), P)
        for w in (0.0, 0.3, 1.0):
            f = sci_fuse(a, a, w)
            np.testing.assert_allclose(f.state, a.state)
            np.testing.assert_allclose(f.p, P / 2, rtol=1e-12, atol=1e-14)

    def test_same_state_unchanged(self, rng):
        for _ in range(20):
            a = random_split(rng)
            b = SplitEstimate(a.state, random_psd_rank(rng), random_spd(rng))
            f = sci_fuse(a, b, rng.uniform(0.01, 0.99))
            np.testing.assert_allclose(f.state, a.state, rtol=1e-13, atol=1e-13)

    def test_scalar_fully_dependent(self):
        f = sci_fuse(scalar(0.0, 4.0, 0.0), scalar(10.0, 1.0, 0.0), 0.5)
        # P1 = 8, P2 = 2, K = 0.8
        assert f.state[0] == pytest.approx(8.0)
        assert f.p[0, 0] == pytest.approx(1.6)
        assert f.p_ind[0, 0] == pytest.approx(0.0)
        assert f.p_dep[0, 0] == pytest.approx(1.6)

    def test_split_identity(self, rng):
        # P - P_i = (I-K) Pd_a/w (I-K)' + K Pd_b/(1-w) K'
        for _ in range(50):
            a, b = random_split(rng), random_split(rng)
            w = rng.uniform(0.05, 0.95)
            f = sci_fuse(a, b, w)
            p1 = a.p_dep / w + a.p_ind
            p2 = b.p_dep / (1 - w) + b.p_ind
            K = p1 @ np.linalg.inv(p1 + p2)
            A = np.eye(4) - K
            expected_dep = A @ (a.p_dep / w) @ A.T + K @ (b.p_dep / (1 - w)) @ K.T
            np.testing.assert_allclose(f.p_dep, expected_dep, rtol=1e-7, atol=1e-9 * np.trace(f.p))
            np.testing.assert_allclose(f.state, a.state + K @ (b.state - a.state), rtol=1e-9, atol=1e-9)

    @pytest.mark.parametrize("w", [-0.1, 1.1, np.nan])
    def test_invalid_weight(self, w, rng):
        a, b = random_split(rng), random_split(rng)
        with pytest.raises(ValueError, match="invalid weight"):
            sci_fuse(a, b, w)

    def test_endpoint_needs_zero_dependent_part(self, rng):
        a, b = random_split(rng), random_split(rng)
        with pytest.raises(ValueError, match="invalid weight"):
            sci_fuse(a, b, 0.0)
        with pytest.raises(ValueError, match="invalid weight"):
            sci_fuse(a, b, 1.0)
        ind = random_split(rng, dep=False)
        assert sci_fuse(ind, b, 0.0).is_valid()
        assert sci_fuse(a, ind, 1.0).is_valid()

    def test_degenerate(self):
        z = np.zeros((4, 4))
        with pytest.raises(DegenerateUpdateError, match="degenerate fusion"):
            sci_fuse(SplitEstimate(np.zeros(4), z, z), SplitEstimate(np.ones(4), z, z), 0.5)

    def test_first_epoch_configuration(self, rng):
        # Motion estimate fully independent, range estimate fully dependent.
        for _ in range(100):
            a = random_split(rng, dep=False)
            b = random_split(rng, ind=False)
            w = optimize_omega(a, b)
            f = sci_fuse(a, b, w)
            assert is_psd(f.p_ind) and is_psd(f.p_dep, 1e-8)
            p1 = a.p_dep / w + a.p_ind
            assert np.linalg.eigvalsh(p1 - f.p).min() >= -1e-9 * np.trace(p1)

    def test_monotone_information(self, rng):
        for _ in range(100):
            a, b = random_split(rng), random_split(rng)
            w = optimize_omega(a, b, OmegaSearch(block=None))
            f = sci_fuse(a, b, w)
            d = np.linalg.slogdet(f.p)[1]
            assert d <= np.linalg.slogdet(a.p_dep / w + a.p_ind)[1] + 1e-9
            assert d <= np.linalg.slogdet(b.p_dep / (1 - w) + b.p_ind)[1] + 1e-9


class TestOptimizeOmega:
    def test_scalar_dependent_picks_tighter(self):
        a, b = scalar(0.0, 4.0, 0.0), scalar(1.0, 1.0, 0.0)
        w = optimize_omega(a, b)
        assert w == pytest.approx(1e-3, abs=1e-4)
        assert sci_fuse(a, b, w).p[0, 0] == pytest.approx(1.0, rel=1e-2)
        grid = np.arange(1e-3, 1 - 1e-3 + 1e-12, 1e-4)
        vals = [fused_logdet(a, b, g) for g in grid]
        assert grid[int(np.argmin(vals))] == pytest.approx(w, abs=1e-3)

    def test_symmetric_inputs(self, rng):
        for _ in range(20):
            a = random_split(rng)
            assert optimize_omega(a, a) == pytest.approx(0.5, abs=1e-3)

    def test_independent_side_goes_to_clamp(self, rng):
        lo, hi = OmegaSearch().interval
        grid = np.linspace(lo, hi, 200)
        for _ in range(20):
            ind, dep = random_split(rng, dep=False), random_split(rng)
            # Without a dependent part on a, only b's inflation varies with w.
            vals = np.array([fused_logdet(ind, dep, g) for g in grid])
            assert np.all(np.diff(vals) >= -1e-12)
            assert optimize_omega(ind, dep) == pytest.approx(lo, abs=1e-4)
            assert optimize_omega(dep, ind) == pytest.approx(hi, abs=1e-4)

    def test_scale_invariance(self, rng):
        for _ in range(30):
            a, b = random_split(rng), random_split(rng)
            c = rng.uniform(0.01, 100)
            a2 = SplitEstimate(a.state, c * a.p_dep, c * a.p_ind)
            b2 = SplitEstimate(b.state, c * b.p_dep, c * b.p_ind)
            assert optimize_omega(a, b) == pytest.approx(optimize_omega(a2, b2), abs=2e-4)

    def test_deterministic(self, rng):
        a, b = random_split(rng), random_split(rng)
        assert optimize_omega(a, b) == optimize_omega(a, b)

    def test_objective_is_position_logdet(self, rng):
        a, b = random_split(rng), random_split(rng)
        w = 0.37
        f = sci_fuse(a, b, w)
        assert fused_logdet(a, b, w) == pytest.approx(np.linalg.slogdet(f.p[:2, :2])[1], rel=1e-9)
        assert fused_logdet(a, b, w, OmegaSearch(block=None)) == pytest.approx(np.linalg.slogdet(f.p)[1], rel=1e-9)


class TestFuse:
    def test_information_form_identity(self):
        a = SplitEstimate.independent(np.ones(4), np.eye(4))
        np.testing.assert_allclose(fuse(a, a).p, np.eye(4) / 2)

    def test_matches_information_form(self, rng):
        for _ in range(100):
            a, b = random_split(rng, dep=False), random_split(rng, dep=False)
            f = fuse(a, b)
            x, p = information_fuse(a.state, a.p_ind, b.state, b.p_ind)
            np.testing.assert_allclose(f.state, x, rtol=1e-8, atol=1e-8)
            np.testing.assert_allclose(f.p, p, rtol=1e-8, atol=1e-10)


class TestGpsSplitUpdate:
    def test_collapses_to_kalman(self, rng):
        g = gps_model(2.0)
        for _ in range(20):
            e = random_split(rng, dep=False)
            z = rng.standard_normal(2)
            f = gps_split_update(e, z, g)
            x, P = kf_update((e.state, e.p_ind), z, g)
            np.testing.assert_allclose(f.state, x, rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(f.p, P, rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(f.p_dep, 0.0, atol=1e-12)

    def test_uninformative(self, rng):
        e = random_split(rng)
        f = gps_split_update(e, e.state[:2] + 50, GpsModel(gps_model(0).H, 1e12 * np.eye(2)))
        np.testing.assert_allclose(f.state, e.state, atol=1e-6)

    def test_scalar(self):
        f = gps_split_update(scalar(0.0, 0.0, 1.0), [1.0], GpsModel(np.array([[1.0]]), np.array([[1.0]])))
        assert f.p[0, 0] == pytest.approx(0.5)
        assert f.p_ind[0, 0] == pytest.approx(0.5)
        assert f.p_dep[0, 0] == pytest.approx(0.0)

    def test_gain_from_total(self, rng):
        g = gps_model(1.0)
        e = random_split(rng)
        f = gps_split_update(e, [0.0, 0.0], g)
        x, P = kf_update((e.state, e.p), [0.0, 0.0], g)
        np.testing.assert_allclose(f.state, x, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(f.p, P, rtol=1e-10, atol=1e-12)

    def test_literal_variant_drops_dependent_part(self, rng):
        g = gps_model(1.0)
        e = random_split(rng)
        f = gps_split_update(e, [0.0, 0.0], g, literal=True)
        np.testing.assert_array_equal(f.p_dep, 0.0)
        np.testing.assert_allclose(f.state, gps_split_update(e, [0.0, 0.0], g).state)

    def test_errors(self, rng):
        z = np.zeros((4, 4))
        with pytest.raises(DegenerateUpdateError, match="degenerate measurement update"):
            gps_split_update(SplitEstimate(np.zeros(4), z, z), [0, 0], GpsModel(gps_model(0).H, np.zeros((2, 2))))
        with pytest.raises(ValueError):
            gps_split_update(random_split(rng), [np.nan, 0.0], gps_model(1.0))
