"""Acceptance gate: one test per release criterion.

Each test freezes the protocol it was validated with (datasets, fit
configuration, seeds, tolerances). These are intentionally slower than the
unit suite; the whole module is still expected to pass on every run.
"""

import itertools
import json
import math
from datetime import timedelta
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner
from scipy.stats import poisson

from epiloop.calibration import FitConfig, fit, init_beta0_from_growth, nb_loglik
from epiloop.cli import main
from epiloop.compliance import (
    ComplianceNet,
    HIDDEN,
    clip_jumps,
    isotonic_project,
    project_nonneg,
)
from epiloop.counterfactual import Scenario, evaluate_scenario, policy_metrics
from epiloop.dynamics import EpiRates, SeirState, initial_state, simulate
from epiloop.evaluation import (
    ABLATION_TOGGLES,
    ablation_table,
    block_length_sensitivity,
    ood_eval,
    rolling_origin_rmse,
)
from epiloop.io import CaseSeries, InterventionSchedule, load_bundled
from epiloop.synthetic import (
    EPOCH,
    KNOWN_RATES_FREE,
    ablation_fixture,
    default_grid,
    generate_abm,
    grid_summary,
    ood_dataset,
    run_experiment_grid,
    truth_model,
)
from epiloop.transmission import MediaEventSet, PolicySchedule

DATA = Path(__file__).resolve().parents[1] / "src" / "epiloop" / "data"

# The fit protocol used for every real-data criterion.
REFERENCE_FIT = dict(seed=0, optimizer="lbfgs", n_restarts=4, max_iters=500)


# ---------------------------------------------------------------------------
# Criterion 1: conservation and integration accuracy


def euler_simulate_batch(s, e, i, r, betas, sigma, gamma, horizon, substeps):
    """Independent fine-step forward-Euler oracle, vectorized over a batch
    of parameter sets. betas has shape (horizon, batch)."""
    n = s + e + i + r
    dt = 1.0 / substeps
    states = [np.stack([s, e, i, r])]
    for day in range(horizon):
        beta = betas[day]
        for _ in range(substeps):
            new_exp = beta * s * i / n
            de = new_exp - sigma * e
            di = sigma * e - gamma * i
            dr = gamma * i
            s, e, i, r = s - dt * new_exp, e + dt * de, i + dt * di, \
                r + dt * dr
        states.append(np.stack([s, e, i, r]))
    return np.array(states)  # (horizon+1, 4, batch)


class TestCriterion1Integration:
    def test_conservation_and_euler_agreement(self):
        rng = np.random.default_rng(42)
        horizon, batch = 30, 50
        n = 10 ** rng.uniform(2.5, 6.0, size=batch)
        seed = np.maximum(1.0, n * 10 ** rng.uniform(-4, -2.2, size=batch))
        sigma = rng.uniform(0.08, 0.6, size=batch)
        gamma = rng.uniform(0.04, 0.4, size=batch)
        betas = rng.uniform(0.05, 0.9, size=batch) \
            * (0.5 + rng.random((horizon, batch)))
        oracle = euler_simulate_batch(
            n - 2 * seed, seed.copy(), seed.copy(), np.zeros(batch),
            betas, sigma, gamma, horizon, 2000)
        for k in range(batch):
            init = initial_state(float(n[k]), float(seed[k]))
            result = simulate(init, betas[:, k], float(sigma[k]),
                              float(gamma[k]), horizon)
            totals = np.array([st.n for st in result.states])
            # compartment-sum drift per step <= 1e-8 * N
            assert np.max(np.abs(np.diff(totals))) <= 1e-8 * n[k]
            # daily RK4 vs fine-step Euler, relative to population scale
            got = np.array([(st.s, st.e, st.i, st.r)
                            for st in result.states])
            assert np.max(np.abs(got - oracle[:, :, k])) / n[k] <= 1e-3

    def test_single_step_matches_simulate(self):
        from epiloop.dynamics import rk4_step
        init = initial_state(1e5, 10.0)
        rates = EpiRates(beta_eff=0.4, sigma=0.2, gamma=0.1)
        stepped = rk4_step(init, rates, 1.0)
        sim = simulate(init, [0.4], 0.2, 0.1, 1).states[1]
        assert stepped.s == pytest.approx(sim.s)
        assert stepped.n == pytest.approx(init.n, abs=1e-8 * init.n)


# ---------------------------------------------------------------------------
# Criterion 2: projection suite


def brute_force_isotonic(values):
    """Exact monotone L2 projection by enumerating block partitions."""
    n = len(values)
    best, best_sse = None, np.inf
    for cuts in itertools.product([0, 1], repeat=n - 1):
        bounds = [0] + [k + 1 for k, c in enumerate(cuts) if c] + [n]
        means = []
        fitted = np.empty(n)
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            m = float(np.mean(values[lo:hi]))
            means.append(m)
            fitted[lo:hi] = m
        if any(b < a - 1e-12 for a, b in zip(means, means[1:])):
            continue
        sse = float(np.sum((fitted - values) ** 2))
        if sse < best_sse:
            best_sse, best = sse, fitted
    return best


class TestCriterion2Projections:
    def test_idempotence_on_random_inputs(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            length = int(rng.integers(1, 40))
            seq = rng.normal(0.5, 1.0, size=length)
            iso = isotonic_project(seq)
            np.testing.assert_allclose(isotonic_project(iso), iso,
                                       rtol=0, atol=1e-12)
            clipped = clip_jumps(seq, 0.1)
            np.testing.assert_allclose(clip_jumps(clipped, 0.1), clipped,
                                       rtol=0, atol=1e-12)
            net = ComplianceNet(rng.normal(size=(2, HIDDEN)),
                                rng.normal(size=HIDDEN),
                                rng.normal(size=HIDDEN),
                                float(rng.normal()))
            proj = project_nonneg(net)
            again = project_nonneg(proj)
            np.testing.assert_array_equal(again.w1, proj.w1)
            np.testing.assert_array_equal(again.w2, proj.w2)
            assert np.all(proj.w1 >= 0) and np.all(proj.w2 >= 0)

    def test_isotonic_matches_brute_force(self):
        grid = (0.0, 1.0, 2.0)
        for length in range(1, 7):
            for combo in itertools.product(grid, repeat=length):
                seq = np.array(combo)
                want = seq if length == 1 else brute_force_isotonic(seq)
                got = isotonic_project(seq)
                np.testing.assert_allclose(got, want, rtol=0, atol=1e-9)


# ---------------------------------------------------------------------------
# Criterion 3: negative binomial correctness


class TestCriterion3NegativeBinomial:
    def test_pmf_normalizes(self):
        y = np.arange(0, 20000)
        for mu, r in [(0.5, 1.0), (5.0, 2.0), (30.0, 10.0), (100.0, 50.0)]:
            total = float(np.sum(np.exp(nb_loglik(y, mu, r))))
            assert abs(total - 1.0) <= 1e-6

    def test_poisson_limit(self):
        y = np.arange(0, 200)
        for mu in [0.5, 4.0, 25.0]:
            nb = np.exp(nb_loglik(y, mu, 1e8))
            assert np.max(np.abs(nb - poisson.pmf(y, mu))) <= 1e-3


# ---------------------------------------------------------------------------
# Criterion 4: beat the constant-beta baseline on the bundled datasets


class TestCriterion4RelativeFit:
    @pytest.fixture(scope="class")
    def scores(self):
        fc = FitConfig(**REFERENCE_FIT)
        out = {}
        for name in ("british_boarding_school", "diamond_princess"):
            series, schedule, _ = load_bundled(name)
            out[name] = rolling_origin_rmse(
                series, schedule, fc, horizon=2, n_origins=5,
                kinds=("behavioral", "constant"))
        return out

    def test_behavioral_beats_constant_on_both(self, scores):
        for name, row in scores.items():
            assert row["behavioral"] < row["constant"], (name, row)

    def test_boarding_school_margin(self, scores):
        row = scores["british_boarding_school"]
        assert row["behavioral"] < 0.5 * row["constant"], row


# ---------------------------------------------------------------------------
# Criterion 5: out-of-distribution degradation ordering


class TestCriterion5Ood:
    def test_degradation_ordering_and_ceiling(self):
        series, schedule, train_days = ood_dataset(seed=7)
        table = ood_eval(series, schedule, train_days,
                         FitConfig(**REFERENCE_FIT))
        behavioral = table["behavioral"]["degradation_pct"]
        assert behavioral < table["no_compliance"]["degradation_pct"]
        assert behavioral < table["constant"]["degradation_pct"]
        assert behavioral <= 150.0


# ---------------------------------------------------------------------------
# Criterion 6: Diamond Princess scenario ordering


class TestCriterion6DiamondPrincess:
    def test_strict_cumulative_ordering(self):
        series, schedule, events = load_bundled("diamond_princess")
        model = fit(series, schedule, FitConfig(**REFERENCE_FIT))
        horizon = len(series)

        def cumulative(scenario):
            res = evaluate_scenario(model, scenario, schedule,
                                    events=events, horizon=horizon)
            return float(np.sum(res.cf_trajectory))

        event = "ship-wide quarantine"
        shift = lambda d: Scenario(
            name=f"shift{d}",
            edits=[{"op": "shift", "event": event, "days": d}])
        totals = [
            cumulative(shift(-7)),
            cumulative(shift(-3)),
            cumulative(Scenario(name="null")),
            cumulative(shift(3)),
            cumulative(Scenario(
                name="no_policy",
                edits=[{"op": "remove", "event": event}])),
        ]
        assert all(a < b for a, b in zip(totals, totals[1:])), totals


# ---------------------------------------------------------------------------
# Criterion 7: counterfactual recovery on the 27-cell synthetic grid

GRID_FIT = FitConfig(seed=0, optimizer="lbfgs", max_iters=200)


class TestCriterion7SyntheticGrid:
    def test_grid_recovery_and_coverage(self):
        from epiloop.counterfactual import BootstrapConfig
        rows = run_experiment_grid(
            default_grid(), GRID_FIT,
            BootstrapConfig(n_replicas=50, block_length=7, seed=0))
        summary = grid_summary(rows)
        assert summary["n_errors"] == 0, [r["error"] for r in rows
                                          if r.get("error")]
        assert summary["median_tea_cases_averted"] >= 0.85, summary
        assert summary["ci_coverage"] >= 0.90, summary
        # width is reported, not gated
        assert summary["mean_ci_rel_width"] is not None


# ---------------------------------------------------------------------------
# Criterion 8: bootstrap block-length sensitivity on a fixed synthetic cell


class TestCriterion8BlockLength:
    def test_width_ordering_and_coverage(self):
        grid = default_grid()
        exp = next(e for e in grid if e.name == "r0=2.4_day=24_cut=0.55")
        schedule = InterventionSchedule(
            EPOCH, PolicySchedule(exp.factual_strictness), MediaEventSet([]))
        scenario = Scenario(name="no_policy",
                            policy_override=exp.counterfactual_strictness,
                            horizon=exp.horizon)
        sigma_k = 1.0 / exp.config.latent_days
        gamma_k = 1.0 / (exp.config.infectious_days - 1.5)
        blocks = (3, 5, 7, 10)
        n_reps = 12
        covered = {b: 0 for b in blocks}
        widths = {b: [] for b in blocks}
        for rep in range(n_reps):
            # each draw is scored against its own realized paired effect,
            # computed from the same-seed factual and counterfactual runs
            counts = generate_abm(exp.config, exp.factual_strictness,
                                  exp.horizon, seed=5000 + rep)
            cf_counts = generate_abm(exp.config,
                                     exp.counterfactual_strictness,
                                     exp.horizon, seed=5000 + rep)
            true_av = policy_metrics(counts, cf_counts)[0]
            dates = [EPOCH + timedelta(days=k) for k in range(exp.horizon)]
            series = CaseSeries(dates, counts, float(exp.config.population))
            warm = truth_model(
                population=float(exp.config.population),
                beta0=init_beta0_from_growth(counts, sigma_k, gamma_k),
                sigma=sigma_k, gamma=gamma_k)
            fc = FitConfig(seed=0, optimizer="lbfgs", max_iters=200,
                           free_params=list(KNOWN_RATES_FREE))
            model = fit(series, schedule, fc, warm_start=warm)
            rows = block_length_sensitivity(
                series, schedule, scenario, fc, block_lengths=blocks,
                n_replicas=30, seed=rep, model=model, replica_start=warm)
            for b in blocks:
                lo, hi = rows[b]["ci"]
                covered[b] += int(lo <= true_av <= hi)
                widths[b].append(rows[b]["width"])
        for b in blocks:
            assert covered[b] / n_reps >= 0.90, (b, covered)
        assert np.mean(widths[3]) > np.mean(widths[10]), {
            b: float(np.mean(w)) for b, w in widths.items()}


# ---------------------------------------------------------------------------
# Criterion 9: constraint removal is the most damaging ablation


class TestCriterion9Ablation:
    def test_constraints_dominate(self):
        series, schedule, mixing = ablation_fixture(seed=3)
        fc = FitConfig(seed=0, optimizer="lbfgs", n_restarts=2,
                       max_iters=300)
        table = ablation_table(series, schedule, fc, horizon=7,
                               n_origins=3, mixing=mixing)
        increases = {k: table[k]["rmse_increase_pct"]
                     for k in ABLATION_TOGGLES}
        worst = max(increases, key=increases.get)
        assert worst == "disable_constraints", increases


# ---------------------------------------------------------------------------
# Criterion 10: byte-identical artifacts on rerun


FAST_ARGS = ["--restarts", "1", "--max-iters", "60"]


def run_cli(args):
    res = CliRunner().invoke(main, args, catch_exceptions=False)
    assert res.exit_code == 0, res.output
    return res


class TestCriterion10Determinism:
    def test_all_commands_rerun_byte_identical(self, tmp_path):
        bbs = DATA / "british_boarding_school.csv"
        dp = DATA / "diamond_princess.csv"
        dp_events = DATA / "diamond_princess_events.json"
        scenario = tmp_path / "scenario.json"
        scenario.write_text(json.dumps({
            "name": "earlier",
            "edits": [{"op": "shift", "event": "ship-wide quarantine",
                       "days": -3}],
        }))

        def artifacts(out):
            out = Path(out)
            calib = out / "calib"
            run_cli(["calibrate", "--cases", str(dp),
                     "--events", str(dp_events),
                     "--output-dir", str(calib)] + FAST_ARGS)
            model = calib / "model.json"
            run_cli(["forecast", "--model", str(model), "--cases", str(dp),
                     "--events", str(dp_events), "--horizon", "5",
                     "--output-dir", str(out)])
            run_cli(["counterfactual", "--model", str(model),
                     "--cases", str(dp), "--events", str(dp_events),
                     "--scenario", str(scenario), "--ci", "--replicas", "10",
                     "--output-dir", str(out)] + FAST_ARGS)
            run_cli(["synthetic-eval", "--cells", "1", "--replication", "30",
                     "--no-ci", "--output-dir", str(out)] + FAST_ARGS)
            run_cli(["ood-eval", "--output-dir", str(out)] + FAST_ARGS)
            run_cli(["ablate", "--cases", str(bbs), "--fold-horizon", "2",
                     "--output-dir", str(out)] + FAST_ARGS)
            names = ["calib/model.json", "calib/report.json",
                     "calib/multipliers.csv", "forecast.json",
                     "counterfactual.json", "synthetic_eval.json",
                     "ood_eval.json", "ablation.json"]
            return {name: (out / name).read_bytes() for name in names}

        out = tmp_path / "run"
        first = artifacts(out)
        second = artifacts(out)
        assert set(first) == set(second)
        for name in first:
            assert first[name] == second[name], name
