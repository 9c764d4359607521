from datetime import date, timedelta

import numpy as np
import pytest

from epiloop.calibration import FitConfig
from epiloop.counterfactual import Scenario
from epiloop.errors import InputError
from epiloop.evaluation import (
    ABLATION_TOGGLES,
    ablation_table,
    block_length_sensitivity,
    ood_eval,
    rmse,
    rolling_origin_rmse,
)
from epiloop.io import CaseSeries
from epiloop.synthetic import generate_from_model, step_schedule, truth_model

FAST = FitConfig(seed=0, optimizer="lbfgs", n_restarts=1, max_iters=80)


@pytest.fixture(scope="module")
def synthetic_series():
    truth = truth_model(population=10000.0, beta0=0.5, sigma=0.25,
                        gamma=0.12, rho_policy=0.6)
    schedule = step_schedule(36, 14, 0.8)
    series = generate_from_model(truth, schedule, 36,
                                 np.random.default_rng(5))[0]
    return series, schedule


class TestRmse:
    def test_oracle(self):
        assert rmse([1.0, 2.0, 3.0], [1.0, 4.0, 3.0]) == pytest.approx(
            np.sqrt(4.0 / 3.0)
        )

    def test_nan_masked(self):
        got = rmse([1.0, 2.0, 3.0], [1.0, np.nan, 5.0])
        assert got == pytest.approx(np.sqrt((0 + 4.0) / 2))

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            rmse([1.0], [1.0, 2.0])

    def test_all_nan(self):
        with pytest.raises(InputError):
            rmse([1.0], [np.nan])


class TestRollingOrigin:
    def test_origin_protocol(self, synthetic_series):
        """Origins are evenly spaced over the last half of the series."""
        series, schedule = synthetic_series
        out = rolling_origin_rmse(series, schedule, FAST, horizon=2,
                                  n_origins=5, kinds=("constant",),
                                  per_fold=True)
        t = len(series)
        expected = np.unique(
            np.linspace(max(t // 2, 8), t - 2, 5).astype(int)
        )
        assert out["origins"] == [int(o) for o in expected]
        assert len(out["folds"]["constant"]) == len(expected)
        assert out["mean"]["constant"] == pytest.approx(
            np.mean(out["folds"]["constant"])
        )

    def test_scores_positive_and_finite(self, synthetic_series):
        series, schedule = synthetic_series
        out = rolling_origin_rmse(series, schedule, FAST, horizon=2,
                                  n_origins=3,
                                  kinds=("behavioral", "constant"))
        for kind, score in out.items():
            assert np.isfinite(score) and score >= 0

    def test_too_short_for_horizon(self, synthetic_series):
        series, schedule = synthetic_series
        short = CaseSeries(series.dates[:10], series.counts[:10],
                           series.population)
        with pytest.raises(InputError):
            rolling_origin_rmse(short, schedule, FAST, horizon=8)

    def test_default_means_only(self, synthetic_series):
        series, schedule = synthetic_series
        out = rolling_origin_rmse(series, schedule, FAST, horizon=2,
                                  n_origins=2, kinds=("constant",))
        assert set(out.keys()) == {"constant"}
        assert isinstance(out["constant"], float)


class TestOodEval:
    def test_row_structure_and_internal_consistency(self, synthetic_series):
        series, schedule = synthetic_series
        rows = ood_eval(series, schedule, train_days=22, fit_config=FAST)
        expected_kinds = {"behavioral", "no_compliance", "constant",
                          "policy_step", "threshold"}
        assert set(rows.keys()) == expected_kinds
        for row in rows.values():
            assert row["in_sample_rmse"] >= 0
            assert row["oos_rmse"] >= 0
            want = (row["oos_rmse"] / row["in_sample_rmse"] - 1) * 100
            assert row["degradation_pct"] == pytest.approx(want)

    def test_bad_split(self, synthetic_series):
        series, schedule = synthetic_series
        with pytest.raises(InputError):
            ood_eval(series, schedule, train_days=0, fit_config=FAST)
        with pytest.raises(InputError):
            ood_eval(series, schedule, train_days=len(series),
                     fit_config=FAST)


class TestAblationTable:
    def test_structure(self, synthetic_series):
        series, schedule = synthetic_series
        table = ablation_table(series, schedule, FAST, horizon=2,
                               n_origins=2)
        assert set(table.keys()) == {"full"} | set(ABLATION_TOGGLES)
        assert table["full"]["rmse_increase_pct"] == 0.0
        for row in table.values():
            assert np.isfinite(row["rmse"])
        # aggregating a single-group dataset is a no-op
        assert table["single_group"]["rmse"] == pytest.approx(
            table["full"]["rmse"]
        )


class TestBlockLengthSensitivity:
    def test_rows_per_block_length(self, synthetic_series):
        series, schedule = synthetic_series
        scenario = Scenario("late",
                            policy_override=np.zeros(len(series)),
                            horizon=len(series))
        rows = block_length_sensitivity(
            series, schedule, scenario, FAST,
            block_lengths=(3, 7), n_replicas=4, seed=0,
        )
        assert set(rows.keys()) == {3, 7}
        for row in rows.values():
            lo, hi = row["ci"]
            assert row["width"] == pytest.approx(hi - lo)
            assert row["width"] >= 0
