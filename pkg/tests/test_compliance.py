import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from epiloop.compliance import (
    ComplianceNet,
    RiskParams,
    clip_jumps,
    eval_compliance,
    isotonic_project,
    project_nonneg,
    risk_series,
    risk_signal,
)
from epiloop.errors import EpiloopError


def random_net(rng, signed=False):
    scale = 1.0
    w1 = rng.normal(0, scale, (2, 16)) if signed else rng.uniform(0, scale, (2, 16))
    w2 = rng.normal(0, scale, 16) if signed else rng.uniform(0, scale, 16)
    return ComplianceNet(w1, rng.normal(0, scale, 16), w2, rng.normal())


class TestRiskSignal:
    def test_zero_history(self):
        assert risk_signal(np.zeros(20), 10, 1000.0) == 0.0

    def test_saturates(self):
        counts = np.full(10, 10.0)
        assert risk_signal(counts, 8, 1000.0) == 1.0

    def test_direct_formula(self):
        counts = np.full(10, 1.0)
        assert risk_signal(counts, 8, 1000.0) == pytest.approx(0.7)

    def test_uses_only_past(self):
        counts = np.zeros(10)
        counts[5] = 1000.0
        assert risk_signal(counts, 5, 1000.0) == 0.0
        assert risk_signal(counts, 6, 1000.0) == 1.0

    def test_series_matches_pointwise(self):
        rng = np.random.default_rng(3)
        counts = rng.integers(0, 20, 40).astype(float)
        series = risk_series(counts, 5000.0)
        for t in range(40):
            assert series[t] == pytest.approx(risk_signal(counts, t, 5000.0))


class TestEvalCompliance:
    def test_constant_net(self):
        net = ComplianceNet(np.zeros((2, 16)), np.zeros(16), np.zeros(16), 0.0)
        assert eval_compliance(net, 0.3, 0.9) == pytest.approx(0.5)

    def test_monotone_in_risk(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            net = random_net(rng)
            for s in (0.0, 0.5, 1.0):
                assert eval_compliance(net, 1.0, s) >= eval_compliance(net, 0.0, s)

    def test_single_path_net(self):
        w1 = np.zeros((2, 16))
        w1[0, 0] = 1.0
        w2 = np.zeros(16)
        w2[0] = 1.0
        net = ComplianceNet(w1, np.zeros(16), w2, 0.0)
        assert eval_compliance(net, 1.0, 0.0) == pytest.approx(0.731059, abs=1e-6)

    def test_output_open_interval(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            net = random_net(rng)
            c = eval_compliance(net, rng.uniform(0, 1), rng.uniform(0, 1))
            assert 0.0 < c < 1.0

    def test_infeasible_net_rejected(self):
        w2 = np.zeros(16)
        w2[0] = -1.0
        net = ComplianceNet(np.zeros((2, 16)), np.zeros(16), w2, 0.0)
        with pytest.raises(EpiloopError):
            eval_compliance(net, 0.5, 0.5)

    def test_grid_monotonicity_after_projection(self):
        rng = np.random.default_rng(4)
        net = project_nonneg(random_net(rng, signed=True))
        grid = np.linspace(0, 1, 101)
        for s in np.linspace(0, 1, 5):
            resp = eval_compliance(net, grid, np.full_like(grid, s))
            assert np.all(np.diff(resp) >= -1e-12)


class TestProjectNonneg:
    def test_identity_on_feasible(self):
        rng = np.random.default_rng(5)
        net = random_net(rng)
        out = project_nonneg(net)
        assert np.array_equal(out.w1, net.w1)
        assert np.array_equal(out.w2, net.w2)

    def test_clips_negative_entry(self):
        w2 = np.full(16, 0.5)
        w2[3] = -0.5
        net = ComplianceNet(np.zeros((2, 16)), np.zeros(16), w2, 0.0)
        assert project_nonneg(net).w2[3] == 0.0

    def test_idempotent(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            net = random_net(rng, signed=True)
            once = project_nonneg(net)
            twice = project_nonneg(once)
            assert np.array_equal(once.w1, twice.w1)
            assert np.array_equal(once.w2, twice.w2)
            assert np.array_equal(once.b1, twice.b1)


def isotonic_oracle(values):
    """Brute-force constrained least squares."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    cons = [{"type": "ineq", "fun": (lambda x, i=i: x[i + 1] - x[i])}
            for i in range(n - 1)]
    res = minimize(lambda x: np.sum((x - values) ** 2), values,
                   constraints=cons, method="SLSQP",
                   options={"maxiter": 500, "ftol": 1e-14})
    return res.x


class TestIsotonic:
    def test_already_monotone(self):
        assert np.array_equal(isotonic_project([1, 2, 3]), [1, 2, 3])

    def test_pooling(self):
        assert np.allclose(isotonic_project([3, 1, 2]), [2, 2, 2])
        assert np.allclose(isotonic_project([5, 1]), [3, 3])

    def test_mean_preserved_and_idempotent(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            x = rng.normal(0, 1, rng.integers(1, 30))
            y = isotonic_project(x)
            assert np.all(np.diff(y) >= -1e-12)
            assert np.mean(y) == pytest.approx(np.mean(x))
            assert np.allclose(isotonic_project(y), y)

    def test_matches_quadratic_program_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            x = rng.integers(-3, 4, size=rng.integers(2, 7)).astype(float)
            assert np.allclose(isotonic_project(x), isotonic_oracle(x), atol=1e-6)


class TestClipJumps:
    def test_within_bound_unchanged(self):
        x = [0.9, 0.85, 0.8]
        assert np.array_equal(clip_jumps(x, 0.1), x)

    def test_single_clamp(self):
        assert np.allclose(clip_jumps([1.0, 0.5], 0.1), [1.0, 0.9])

    def test_sequential_pass(self):
        assert np.allclose(clip_jumps([1.0, 0.5, 0.5], 0.1), [1.0, 0.9, 0.8])

    @given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=40),
           st.floats(0.01, 1.0))
    @settings(max_examples=100)
    def test_bound_and_idempotence(self, values, delta):
        out = clip_jumps(values, delta)
        assert np.all(np.abs(np.diff(out)) <= delta + 1e-12)
        assert np.allclose(clip_jumps(out, delta), out)
