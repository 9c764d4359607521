import math

import numpy as np
import pytest

from epiloop.compliance import eval_compliance
from epiloop.errors import InputError, UnderpoweredExperimentError
from epiloop.synthetic import (
    AbmConfig,
    default_grid,
    generate_abm,
    generate_from_model,
    grid_summary,
    logistic_response_net,
    ood_dataset,
    step_schedule,
    true_effect,
    truth_model,
)


class TestAbmConfig:
    def test_r0(self):
        cfg = AbmConfig(contact_degree=8.0, per_contact_prob=0.05,
                        infectious_days=7)
        assert cfg.r0 == pytest.approx(2.8)

    def test_validation(self):
        with pytest.raises(InputError):
            AbmConfig(per_contact_prob=1.2)
        with pytest.raises(InputError):
            AbmConfig(policy_effect=-0.1)
        with pytest.raises(InputError):
            AbmConfig(latent_days=0)


class TestGenerateAbm:
    def test_deterministic_per_seed(self):
        cfg = AbmConfig(seed=4)
        s = np.zeros(40)
        a = generate_abm(cfg, s, 40)
        b = generate_abm(cfg, s, 40)
        np.testing.assert_array_equal(a, b)
        c = generate_abm(cfg, s, 40, seed=5)
        assert not np.array_equal(a, c)

    def test_conservation(self):
        # total infections can never exceed the initially susceptible pool
        cfg = AbmConfig(population=500, per_contact_prob=0.2, seed=1)
        counts = generate_abm(cfg, np.zeros(120), 120)
        assert counts.sum() <= cfg.population - cfg.n_seed
        assert np.all(counts >= 0)
        assert np.all(counts == np.round(counts))

    def test_full_policy_with_total_effect_stops_spread(self):
        cfg = AbmConfig(policy_effect=0.0, seed=2)
        counts = generate_abm(cfg, np.ones(30), 30)
        assert counts.sum() == 0

    def test_policy_reduces_mean_incidence(self):
        cfg = AbmConfig(population=2000, per_contact_prob=0.08,
                        policy_effect=0.3)
        fact = np.zeros(50)
        fact[10:] = 1.0
        tot_policy = np.mean([
            generate_abm(cfg, fact, 50, seed=k).sum() for k in range(30)
        ])
        tot_free = np.mean([
            generate_abm(cfg, np.zeros(50), 50, seed=k).sum()
            for k in range(30)
        ])
        assert tot_policy < tot_free

    def test_short_schedule_rejected(self):
        with pytest.raises(InputError):
            generate_abm(AbmConfig(), np.zeros(5), 10)


class TestTrueEffect:
    def test_signs(self):
        cfg = AbmConfig(population=2000, per_contact_prob=0.08,
                        policy_effect=0.3, seed=11)
        fact = np.zeros(60)
        fact[12:] = 1.0
        means, ses = true_effect(cfg, fact, np.zeros(60), 60,
                                 replication=40)
        # counterfactual removes the policy: more cases, higher peak
        assert means["cases_averted"] < 0
        assert means["peak_reduction"] < 0
        assert all(se >= 0 for se in ses.values())

    def test_replication_floor(self):
        with pytest.raises(InputError):
            true_effect(AbmConfig(), np.zeros(10), np.zeros(10), 10,
                        replication=5)

    def test_underpowered(self):
        # per-contact probability so low that no epidemic ever starts
        cfg = AbmConfig(population=300, per_contact_prob=0.0001,
                        n_seed=1, seed=0)
        with pytest.raises(UnderpoweredExperimentError):
            true_effect(cfg, np.zeros(8), np.zeros(8), 8, replication=30)


class TestLogisticResponseNet:
    def test_exact_sigmoid(self):
        net = logistic_response_net(risk_gain=6.0, risk_mid=0.3,
                                    strictness_gain=1.5)
        rng = np.random.default_rng(0)
        for _ in range(30):
            r = rng.uniform(0, 1)
            s = rng.uniform(0, 1)
            want = 1.0 / (1.0 + math.exp(-(6.0 * (r - 0.3) + 1.5 * s)))
            assert eval_compliance(net, r, s) == pytest.approx(
                want, abs=1e-12
            )


class TestGenerateFromModel:
    def test_round_noise_matches_trajectory(self):
        from epiloop.predict import simulate_model
        model = truth_model(population=5000.0)
        schedule = step_schedule(30, 12, 0.7)
        series = generate_from_model(model, schedule, 30, noise="round")
        mu = simulate_model(model, schedule, 30).incidence[:, 0]
        np.testing.assert_array_equal(series[0].counts, np.round(mu))

    def test_nb_requires_rng(self):
        model = truth_model(population=5000.0)
        with pytest.raises(InputError):
            generate_from_model(model, step_schedule(20, 5), 20)

    def test_multi_group_shapes(self):
        model = truth_model(population=6000.0, groups=["young", "old"],
                            mixing=np.array([[0.7, 0.3], [0.3, 0.7]]))
        series = generate_from_model(model, step_schedule(25, 10), 25,
                                     np.random.default_rng(0))
        assert [s.group for s in series] == ["young", "old"]
        assert all(len(s) == 25 for s in series)
        assert all(s.population == 3000.0 for s in series)


class TestGrid:
    def test_default_grid_shape(self):
        grid = default_grid()
        assert len(grid) == 27
        assert len({e.name for e in grid}) == 27
        r0s = sorted({round(e.config.r0, 6) for e in grid})
        assert r0s == [2.0, 2.4, 2.8]
        cuts = sorted({round(1 - e.config.policy_effect, 6) for e in grid})
        assert cuts == [0.4, 0.55, 0.7]
        # timing is a fixed fraction of each regime's unmitigated peak day
        for exp in grid:
            timing = int(np.argmax(exp.factual_strictness > 0))
            assert 0 < timing < exp.horizon
        for exp in grid:
            assert np.all(exp.counterfactual_strictness == 0.0)
            assert exp.horizon == 84

    def test_grid_summary_handles_errors_and_cis(self):
        rows = [
            {"name": "a", "tea": {"cases_averted": 0.8}, "error": None,
             "ci_covers_truth": True, "ci_rel_width": 0.5},
            {"name": "b", "tea": {"cases_averted": 0.6}, "error": None,
             "ci_covers_truth": False, "ci_rel_width": 1.5},
            {"name": "c", "tea": {}, "error": "ValueError: boom"},
        ]
        summary = grid_summary(rows)
        assert summary["n_cells"] == 3
        assert summary["n_errors"] == 1
        assert summary["median_tea_cases_averted"] == pytest.approx(0.7)
        assert summary["ci_coverage"] == pytest.approx(0.5)
        assert summary["mean_ci_rel_width"] == pytest.approx(1.0)


class TestOodDataset:
    def test_structure(self):
        series, schedule, train_days = ood_dataset(seed=7)
        assert train_days == 20
        assert len(series) == 35
        strict = schedule.policy.strictness
        assert np.all(strict[:8] == 0.0)
        assert np.all(strict[8:20] == 0.2)
        assert np.all(strict[20:] == 0.9)

    def test_deterministic(self):
        a, _, _ = ood_dataset(seed=7)
        b, _, _ = ood_dataset(seed=7)
        np.testing.assert_array_equal(a.counts, b.counts)
