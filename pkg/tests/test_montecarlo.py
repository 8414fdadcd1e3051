import csv
import io
import json
import math

import numpy as np
import pytest

from eigenscan import DetectorConfig, GeneratorSpec, InvalidArgumentError, ObservationStream, cross_moment_upper_bound, generate
from eigenscan.montecarlo import (
    CHUNK,
    SimulationReport,
    child_seed,
    correlation_study,
    estimate_arl,
    estimate_correlation,
    estimate_edd,
    estimate_thresholds,
    null_extreme_eigenvalues,
    reports_to_csv,
)


class TestGenerator:
    def test_null_covariance(self):
        x = ObservationStream(GeneratorSpec("null", 4, seed=1)).block(1, 100_000)
        c = x.T @ x / x.shape[0]
        assert np.max(np.abs(c - np.diag(np.diag(c)))) < 0.02

    def test_spiked_variances(self):
        x = ObservationStream(GeneratorSpec("spiked", 4, theta=10.0, u=(1, 0, 0, 0), seed=2)).block(1, 100_000)
        assert x.var(axis=0) == pytest.approx([11, 1, 1, 1], rel=0.03)

    def test_rank1_support(self):
        x = ObservationStream(GeneratorSpec("rank1", 3, theta=4.0, u=(0, 1, 0), seed=3)).block(1, 1000)
        assert np.all(x[:, [0, 2]] == 0)
        assert x[:, 1].var() == pytest.approx(4.0, rel=0.1)

    def test_change_at(self):
        x = ObservationStream(GeneratorSpec("rank1", 3, theta=4.0, u=(0, 1, 0), change_at=700, seed=3)).block(1, 1000)
        assert np.all(x[:700, 0] != 0) and np.all(x[700:, 0] == 0)

    def test_random_access_matches_sequential(self):
        spec = GeneratorSpec("spiked", 5, theta=2.0, change_at=100, seed=9)
        seq = ObservationStream(spec).block(1, 3 * CHUNK + 10)
        for t in (1, 100, 101, CHUNK, CHUNK + 1, 3 * CHUNK + 10):
            assert np.array_equal(generate(spec, t), seq[t - 1])

    def test_common_random_numbers_across_regimes(self):
        null = ObservationStream(GeneratorSpec("null", 3, seed=4)).block(1, 50)
        spiked = ObservationStream(GeneratorSpec("spiked", 3, theta=0.0, seed=4)).block(1, 50)
        assert np.array_equal(null, spiked)

    def test_default_direction_is_unit_and_seeded(self):
        a = ObservationStream(GeneratorSpec("spiked", 7, theta=1.0, seed=5))
        b = ObservationStream(GeneratorSpec("spiked", 7, theta=1.0, seed=5))
        c = ObservationStream(GeneratorSpec("spiked", 7, theta=1.0, seed=6))
        assert np.linalg.norm(a.u) == pytest.approx(1.0, abs=1e-12)
        assert np.array_equal(a.u, b.u) and not np.array_equal(a.u, c.u)

    def test_explicit_direction_normalised(self):
        spec = GeneratorSpec("spiked", 2, theta=1.0, u=(3.0, 4.0))
        assert spec.u == pytest.approx((0.6, 0.8), abs=1e-15)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(regime="rank1", p=3, theta=0.0),
            dict(regime="spiked", p=3, theta=-1.0),
            dict(regime="weird", p=3),
            dict(regime="null", p=0),
            dict(regime="spiked", p=3, theta=1.0, u=(1.0, 0.0)),
            dict(regime="spiked", p=2, theta=1.0, u=(0.0, 0.0)),
            dict(regime="null", p=2, seed=-1),
        ],
    )
    def test_invalid_spec(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            GeneratorSpec(**kwargs)

    def test_spiked_convergence_rate(self):
        spec = GeneratorSpec("spiked", 3, theta=10.0, u=(0.6, 0.8, 0.0), seed=10)
        target = np.eye(3) + 10.0 * np.outer(spec.u, spec.u)
        errs = []
        for n in (10_000, 100_000):
            e = []
            for r in range(8):
                x = ObservationStream(GeneratorSpec("spiked", 3, 10.0, spec.u, seed=child_seed(10 + n, r))).block(1, n)
                e.append(np.max(np.abs(x.T @ x / n - target)))
            errs.append(np.mean(e))
        # error shrinks roughly by sqrt(10)
        assert 2.0 < errs[0] / errs[1] < 5.0


class TestArl:
    cfg = DetectorConfig("max-eig", 3, 20, 2.6)

    def test_reproducible(self):
        a = estimate_arl(self.cfg, 30, step_cap=20_000, seed=4)
        b = estimate_arl(self.cfg, 30, step_cap=20_000, seed=4)
        assert a.to_json() == b.to_json()
        assert np.array_equal(a.values, b.values)

    def test_threads_do_not_change_result(self):
        a = estimate_arl(self.cfg, 16, step_cap=20_000, seed=4, threads=1)
        b = estimate_arl(self.cfg, 16, step_cap=20_000, seed=4, threads=4)
        assert np.array_equal(a.values, b.values)

    def test_pathwise_monotone_in_b(self):
        a = estimate_arl(self.cfg, 30, step_cap=20_000, seed=4)
        hi = DetectorConfig("max-eig", 3, 20, 2 * 2.6)
        b = estimate_arl(hi, 30, step_cap=20_000, seed=4)
        assert b.point_estimate > a.point_estimate
        assert np.all(b.values >= a.values)

    def test_enormous_threshold_censors_everything(self):
        rep = estimate_arl(DetectorConfig("max-eig", 3, 20, 1e3), 5, step_cap=500, seed=1)
        assert rep.censored == rep.replicates == 5
        assert rep.point_estimate == 500 and rep.std_error == 0

    def test_step_cap_floor(self):
        with pytest.raises(InvalidArgumentError):
            estimate_arl(self.cfg, 5, step_cap=100)

    def test_replicates_floor(self):
        with pytest.raises(InvalidArgumentError):
            estimate_arl(self.cfg, 0)

    def test_default_cap_from_target(self):
        cfg = DetectorConfig("max-eig", 3, 20, 1e3, target_arl=30.0)
        assert estimate_arl(cfg, 2, seed=1).settings["step_cap"] == 1500


class TestEdd:
    def test_rank1_min_inverse_within_window(self):
        cfg = DetectorConfig("min-eig-inverse", 5, 30, 1e6)
        rep = estimate_edd(cfg, GeneratorSpec("rank1", 5, theta=3.0), 100, seed=2)
        assert np.all(rep.values <= 30)
        assert rep.point_estimate <= 30

    def test_cold_start_counts_window_fill(self):
        cfg = DetectorConfig("min-eig-inverse", 5, 30, 1e6)
        rep = estimate_edd(cfg, GeneratorSpec("rank1", 5, theta=3.0), 20, seed=2, warm_start=False)
        assert np.all(rep.values == 30)

    def test_zero_signal_matches_arl(self):
        cfg = DetectorConfig("max-eig", 3, 20, 2.6)
        edd = estimate_edd(cfg, GeneratorSpec("spiked", 3, theta=0.0), 400, seed=5, warm_start=False)
        arl = estimate_arl(cfg, 400, step_cap=100_000, seed=6)
        se = math.hypot(edd.std_error, arl.std_error)
        assert abs(edd.point_estimate - arl.point_estimate) <= 3 * se

    def test_stronger_spike_detected_faster(self):
        cfg = DetectorConfig("max-eig", 5, 20, 5.0)
        slow = estimate_edd(cfg, GeneratorSpec("spiked", 5, theta=4.0), 200, seed=1)
        fast = estimate_edd(cfg, GeneratorSpec("spiked", 5, theta=20.0), 200, seed=1)
        assert fast.point_estimate < slow.point_estimate

    def test_rejects_null_and_late_change(self):
        cfg = DetectorConfig("max-eig", 3, 20, 2.6)
        with pytest.raises(InvalidArgumentError):
            estimate_edd(cfg, GeneratorSpec("null", 3), 10)
        with pytest.raises(InvalidArgumentError):
            estimate_edd(cfg, GeneratorSpec("spiked", 3, theta=1.0, change_at=5), 10)
        with pytest.raises(InvalidArgumentError):
            estimate_edd(cfg, GeneratorSpec("spiked", 4, theta=1.0), 10)


class TestCorrelation:
    def test_disjoint_windows_uncorrelated(self):
        rep = estimate_correlation(20, 3, 20, 40, seed=3, stream_length=2000)
        assert abs(rep.point_estimate) <= max(4 * rep.std_error, 0.05)

    def test_range_and_monotone(self):
        rows = correlation_study(50, 4, [1, 5, 10, 25, 50], 20, seed=4, stream_length=3000)
        corr = [r["correlation"] for r in rows]
        assert all(-1 <= c <= 1 for c in corr)
        assert np.all(np.diff(corr) < 0)

    def test_cross_moment_below_bound(self):
        rep = estimate_correlation(50, 4, 5, 20, seed=4, metric="cross-moment", stream_length=3000)
        assert rep.point_estimate < cross_moment_upper_bound(50, 4, 5)

    def test_invalid_lag(self):
        with pytest.raises(InvalidArgumentError):
            correlation_study(20, 3, [0], 5)
        with pytest.raises(InvalidArgumentError):
            correlation_study(20, 3, [21], 5)

    def test_reproducible(self):
        a = correlation_study(20, 3, [2, 5], 5, seed=8, stream_length=500)
        b = correlation_study(20, 3, [2, 5], 5, seed=8, stream_length=500)
        assert a == b


def test_estimate_thresholds_hits_target():
    (rep,) = estimate_thresholds(20, 3, [200], 150, seed=3)
    # simulated ARL at the returned b is the smallest achievable value >= target
    assert rep.settings["simulated_arl"] >= 200
    assert rep.settings["simulated_arl"] <= 200 * 1.05
    cfg = DetectorConfig("max-eig", 3, 20, rep.point_estimate)
    assert estimate_arl(cfg, 150, step_cap=10_000, seed=3).point_estimate == rep.settings["simulated_arl"]


def test_null_extreme_eigenvalues_shape_and_order():
    ev = null_extreme_eigenvalues(100, 5, 20, seed=1)
    assert ev.shape == (20, 2) and np.all(ev[:, 0] < ev[:, 1])


def test_report_serialisation():
    rep = SimulationReport("arl", 10.5, 0.5, 4, 1, {"w": 20, "b": np.float64(2.0)})
    doc = json.loads(rep.to_json())
    assert doc == {"metric": "arl", "estimate": 10.5, "std_error": 0.5, "replicates": 4, "censored": 1, "settings": {"w": 20, "b": 2.0}}
    text = reports_to_csv([rep, SimulationReport("arl", 3.0, 0.1, 4, 0, {"w": 30, "extra": 1})])
    rows = list(csv.DictReader(io.StringIO(text)))
    assert rows[0]["estimate"] == "10.5" and rows[1]["extra"] == "1" and rows[0]["extra"] == ""
