import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from fbmhedge import fbm
from fbmhedge.errors import NumericalError
from fbmhedge.fbm import (
    FbmPath,
    PricePath,
    UniformGrid,
    check_hurst,
    fbm_covariance,
    fbm_law_check,
    refine_restrict,
    restrict_prices,
    sample_fbm_cholesky,
    sample_fbm_circulant,
    simulate_fbm,
    to_price_path,
)
from conftest import make_path

hursts = st.floats(min_value=0.05, max_value=0.95)
times = st.floats(min_value=0.0, max_value=10.0)


class TestHurst:
    @pytest.mark.parametrize("h", [0.0, 1.0, -0.1, 1.5, float("nan")])
    def test_rejects_outside_unit_interval(self, h):
        with pytest.raises(ValueError):
            check_hurst(h)

    def test_long_memory_requires_above_half(self):
        assert check_hurst(0.5) == 0.5
        with pytest.raises(ValueError, match="H > 1/2"):
            check_hurst(0.5, long_memory=True)


class TestGrid:
    def test_nodes(self):
        g = UniformGrid(4, 2.0)
        assert g.mesh == 0.5
        np.testing.assert_array_equal(g.times, [0.0, 0.5, 1.0, 1.5, 2.0])
        assert len(g) == 5

    @pytest.mark.parametrize("steps", [0, -3, 2.5])
    def test_rejects_bad_steps(self, steps):
        with pytest.raises(ValueError):
            UniformGrid(steps)

    @given(st.integers(1, 5000), st.floats(0.01, 100.0))
    def test_strictly_increasing(self, steps, horizon):
        t = UniformGrid(steps, horizon).times
        assert t.size == steps + 1
        assert np.all(np.diff(t) > 0)


class TestPathTypes:
    def test_path_must_start_at_zero(self):
        with pytest.raises(ValueError, match="starts at 0"):
            make_path([0.1, 0.2])

    def test_length_and_finiteness(self):
        with pytest.raises(ValueError):
            FbmPath(UniformGrid(2), 0.6, np.zeros(4))
        with pytest.raises(ValueError, match="non-finite"):
            make_path([0.0, np.inf, 1.0])

    def test_values_read_only(self):
        p = make_path([0.0, 1.0])
        with pytest.raises(ValueError):
            p.values[1] = 3.0

    def test_prices_positive(self):
        p = make_path([0.0, 1.0])
        with pytest.raises(ValueError):
            PricePath(1.0, p, np.array([1.0, 0.0]))


class TestCovariance:
    @pytest.mark.parametrize(
        "s, t, h, expected",
        [(1.0, 1.0, 0.75, 1.0), (0.0, 0.7, 0.3, 0.0), (0.0, 5.0, 0.9, 0.0), (0.5, 1.0, 0.5, 0.5)],
    )
    def test_examples(self, s, t, h, expected):
        assert fbm_covariance(s, t, h) == pytest.approx(expected, abs=1e-15)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            fbm_covariance(-0.1, 1.0, 0.5)

    @given(times, times, hursts)
    def test_symmetric(self, s, t, h):
        assert fbm_covariance(s, t, h) == fbm_covariance(t, s, h)

    @given(times, hursts)
    def test_diagonal_is_variance(self, t, h):
        assert fbm_covariance(t, t, h) == pytest.approx(t ** (2 * h), rel=1e-14, abs=1e-300)

    @given(times, times, hursts)
    def test_increment_variance(self, s, t, h):
        v = fbm_covariance(s, s, h) + fbm_covariance(t, t, h) - 2 * fbm_covariance(s, t, h)
        assert v == pytest.approx(abs(t - s) ** (2 * h), rel=1e-9, abs=1e-9)

    def test_broadcasts(self):
        t = UniformGrid(8).times[1:]
        c = fbm_covariance(t[:, None], t[None, :], 0.7)
        assert c.shape == (8, 8)
        assert np.all(np.linalg.eigvalsh(c) > 0)


class TestSamplers:
    @pytest.mark.parametrize("sampler", [sample_fbm_cholesky, sample_fbm_circulant])
    def test_deterministic(self, sampler):
        g = UniformGrid(256)
        a = sampler(g, 0.7, (3, 11))
        b = sampler(g, 0.7, (3, 11))
        np.testing.assert_array_equal(a.values, b.values)
        assert a.seed_key == (3, 11)

    @pytest.mark.parametrize("sampler", [sample_fbm_cholesky, sample_fbm_circulant])
    def test_keys_give_distinct_paths(self, sampler):
        g = UniformGrid(64)
        a = sampler(g, 0.7, (3, 0)).values
        b = sampler(g, 0.7, (3, 1)).values
        c = sampler(g, 0.7, (4, 0)).values
        assert not np.array_equal(a, b) and not np.array_equal(a, c)

    def test_rows_independent_of_batch(self):
        g = UniformGrid(128)
        batch = simulate_fbm(g, 0.6, 5, range(10))
        single = simulate_fbm(g, 0.6, 5, [7])
        np.testing.assert_array_equal(batch[7], single[0])

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="unknown"):
            simulate_fbm(UniformGrid(4), 0.6, 0, [0], method="hosking")

    def test_one_step_increment_law(self):
        g = UniformGrid(1, 0.25)
        x = simulate_fbm(g, 0.8, 1, range(20_000))[:, 1]
        sd = g.mesh**0.8
        assert stats.kstest(x / sd, "norm").pvalue > 0.01

    def test_circulant_terminal_marginal(self):
        x = simulate_fbm(UniformGrid(64), 0.75, 2, range(10_000))[:, -1]
        assert stats.kstest(x, "norm").pvalue > 0.01

    def test_circulant_covariance_half_one(self):
        x = simulate_fbm(UniformGrid(2), 0.75, 4, range(100_000))
        prod = x[:, 1] * x[:, 2]
        se = prod.std(ddof=1) / math.sqrt(prod.size)
        exact = fbm_covariance(0.5, 1.0, 0.75)
        assert exact == pytest.approx(0.5, abs=1e-15)
        assert abs(prod.mean() - exact) < 3 * se

    def test_cholesky_variance_and_increment(self):
        g = UniformGrid(4)
        x = simulate_fbm(g, 0.75, 8, range(100_000), method="cholesky")
        v = x[:, -1] ** 2
        assert abs(v.mean() - 1.0) < 3 * v.std(ddof=1) / math.sqrt(v.size)
        y = simulate_fbm(g, 0.6, 8, range(100_000), method="cholesky")
        d2 = (y[:, 3] - y[:, 1]) ** 2
        assert 0.5**1.2 == pytest.approx(0.4353, abs=1e-4)
        assert abs(d2.mean() - 0.5**1.2) < 3 * d2.std(ddof=1) / math.sqrt(d2.size)

    @pytest.mark.parametrize("h", [0.3, 0.75])
    def test_samplers_agree_in_distribution(self, h):
        g = UniformGrid(32)
        a = simulate_fbm(g, h, 1, range(10_000), method="cholesky")[:, -1]
        b = simulate_fbm(g, h, 2, range(10_000), method="circulant")[:, -1]
        assert stats.ks_2samp(a, b).pvalue > 0.01

    def test_cholesky_failure_reports_size(self, monkeypatch):
        fbm._cholesky_factor.cache_clear()
        monkeypatch.setattr(np.linalg, "cholesky", lambda a: (_ for _ in ()).throw(np.linalg.LinAlgError()))
        with pytest.raises(NumericalError, match="steps=3"):
            simulate_fbm(UniformGrid(3), 0.61, 0, [0], method="cholesky")
        fbm._cholesky_factor.cache_clear()

    def test_negative_eigenvalues_fall_back(self, monkeypatch, caplog):
        monkeypatch.setattr(fbm, "_circulant_sqrt_eigs", lambda steps, h: None)
        g = UniformGrid(16)
        with caplog.at_level(logging.WARNING, logger="fbmhedge.fbm"):
            x = simulate_fbm(g, 0.7, 9, [0])
        assert "Cholesky" in caplog.text
        np.testing.assert_array_equal(x, simulate_fbm(g, 0.7, 9, [0], method="cholesky"))


class TestLawCheck:
    def test_passes_on_eight_node_grid(self):
        report = fbm_law_check(0.65, paths=100_000, steps=8, seed=3)
        assert report.passed, report.summary()
        assert {r["statistic"] for r in report.rows} == {"cov", "incr2", "selfsim"}
        assert sum(r["statistic"] == "cov" for r in report.rows) == 36

    def test_self_similarity_ratio(self):
        report = fbm_law_check(0.8, paths=50_000, steps=8, seed=1)
        row = [r for r in report.rows if r["statistic"] == "selfsim"][0]
        assert row["exact"] == pytest.approx(0.5**1.6)
        assert abs(row["z"]) < 4


class TestPriceAndRestriction:
    def test_constant_price(self):
        p = to_price_path(make_path(np.zeros(5)), 2.0)
        np.testing.assert_array_equal(p.prices, 2.0)

    def test_log_three(self):
        p = to_price_path(make_path([0.0, math.log(3.0)]), 1.0)
        assert p.prices[1] == pytest.approx(3.0, rel=1e-15)

    @given(st.floats(0.01, 100.0))
    def test_round_trip(self, s0):
        path = sample_fbm_circulant(UniformGrid(64), 0.7, (0, 0))
        p = to_price_path(path, s0)
        assert p.prices[0] == s0
        np.testing.assert_allclose(np.log(p.prices / s0), path.values, rtol=0, atol=1e-13)

    @pytest.mark.parametrize("s0", [0.0, -1.0])
    def test_bad_s0(self, s0):
        with pytest.raises(ValueError):
            to_price_path(make_path([0.0, 1.0]), s0)

    def test_identity_restriction(self):
        path = make_path([0.0, 1.0, 2.0, 3.0, 4.0])
        np.testing.assert_array_equal(refine_restrict(path, 4).values, path.values)

    def test_every_other_node(self):
        path = make_path([0.0, 1.0, 2.0, 3.0, 4.0])
        np.testing.assert_array_equal(refine_restrict(path, 2).values, [0.0, 2.0, 4.0])

    def test_terminal_node_kept(self):
        path = sample_fbm_circulant(UniformGrid(1024), 0.7, (1, 2))
        for n in (1, 2, 32, 1024):
            assert refine_restrict(path, n).values[-1] == path.values[-1]

    @pytest.mark.parametrize("n", [3, 0, 8])
    def test_non_divisor(self, n):
        with pytest.raises(ValueError):
            refine_restrict(make_path(np.zeros(5)), n)

    def test_restrict_prices_matches_path(self):
        path = sample_fbm_circulant(UniformGrid(64), 0.7, (1, 2))
        p = to_price_path(path, 1.5)
        q = restrict_prices(p, 8)
        np.testing.assert_array_equal(q.prices, p.prices[::8])
        np.testing.assert_array_equal(q.underlying.values, path.values[::8])
