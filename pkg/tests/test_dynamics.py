import numpy as np
import pytest

from epiloop.dynamics import (
    EpiRates,
    MultiGroupState,
    SeirState,
    initial_state,
    rk4_step,
    simulate,
    simulate_multigroup,
)
from epiloop.errors import InputError


def euler_fine(initial, beta_schedule, sigma, gamma, horizon, steps_per_day=1000):
    """Independent fine-step Euler oracle (single group)."""
    s, e, i, r = initial.s, initial.e, initial.i, initial.r
    n = initial.n
    dt = 1.0 / steps_per_day
    states = [(s, e, i, r)]
    for day in range(horizon):
        beta = beta_schedule[day]
        for _ in range(steps_per_day):
            new = beta * s * i / n
            s, e, i, r = (
                s - dt * new,
                e + dt * (new - sigma * e),
                i + dt * (sigma * e - gamma * i),
                r + dt * gamma * i,
            )
        states.append((s, e, i, r))
    return states


class TestRk4Step:
    def test_no_seed_is_fixed_point(self):
        st = SeirState(1000.0, 0.0, 0.0, 0.0)
        out = rk4_step(st, EpiRates(0.4, 0.2, 0.1))
        assert out == st

    def test_pure_decay_matches_closed_form(self):
        # beta=0, E=0: I decays exactly like I0*exp(-gamma*dt)
        st = SeirState(900.0, 0.0, 100.0, 0.0)
        out = rk4_step(st, EpiRates(0.0, 0.2, 0.1), dt=1.0)
        assert out.i == pytest.approx(90.4837, abs=1e-4)

    def test_conservation(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = rng.uniform(100, 1e6)
            parts = rng.dirichlet([5, 1, 1, 1]) * n
            st = SeirState(*parts)
            rates = EpiRates(rng.uniform(0, 1.5), rng.uniform(0.1, 0.5),
                             rng.uniform(0.05, 0.3))
            out = rk4_step(st, rates)
            assert abs(out.n - n) <= 1e-8 * n

    def test_bad_dt(self):
        with pytest.raises(InputError):
            rk4_step(SeirState(10, 0, 1, 0), EpiRates(0.3, 0.2, 0.1), dt=0)

    def test_order_of_accuracy(self):
        # Halving dt should shrink per-step error by >= 8x on a smooth problem.
        st = SeirState(700.0, 20.0, 40.0, 3.0)
        rates = EpiRates(0.9, 0.2, 0.1)
        ref = euler_fine(st, [rates.beta_eff], rates.sigma, rates.gamma, 1,
                         steps_per_day=200000)[-1]

        def err(substeps):
            out = simulate(st, [rates.beta_eff], rates.sigma, rates.gamma, 1,
                           substeps=substeps).states[-1]
            return abs(out.i - ref[2]) + abs(out.e - ref[1])

        assert err(2) * 8 <= err(1) * 1.05


class TestSimulate:
    def test_zero_exposed_zero_incidence(self):
        st = SeirState(763.0, 0.0, 1.0, 0.0)
        res = simulate(st, np.zeros(10), 0.2, 0.1, 10)
        assert np.all(res.incidence == 0.0)

    def test_matches_fine_euler(self):
        st = initial_state(763.0, seed=1.0)
        # closer to the classic school-outbreak regime
        res = simulate(st, np.full(14, 0.3), 0.2, 0.1, 14)
        oracle = euler_fine(st, np.full(14, 0.3), 0.2, 0.1, 14)
        for day in range(1, 15):
            got = res.states[day]
            ref = oracle[day]
            for a, b in zip((got.s, got.e, got.i, got.r), ref):
                assert a == pytest.approx(b, rel=1e-3, abs=1e-6)

    def test_beta_monotonicity(self):
        st = initial_state(10000.0, seed=2.0)
        lo = simulate(st, np.full(20, 0.3), 0.2, 0.1, 20)
        hi = simulate(st, np.full(20, 0.6), 0.2, 0.1, 20)
        assert hi.incidence.sum() > lo.incidence.sum()

    def test_short_schedule_rejected(self):
        with pytest.raises(InputError):
            simulate(initial_state(100.0), np.zeros(3), 0.2, 0.1, 5)


class TestSimulateMultigroup:
    def _two_groups(self, mixing, seeds=(1.0, 1.0), pops=(1000.0, 2000.0)):
        states = [initial_state(pops[0], seeds[0]), initial_state(pops[1], seeds[1])]
        return MultiGroupState(["a", "b"], states, np.array(pops),
                               np.asarray(mixing, dtype=float))

    def test_identity_mixing_decouples(self):
        init = self._two_groups(np.eye(2))
        betas = np.column_stack([np.full(15, 0.4), np.full(15, 0.25)])
        res = simulate_multigroup(init, betas, 0.2, 0.1, 15)
        for g, (pop, beta) in enumerate([(1000.0, 0.4), (2000.0, 0.25)]):
            single = simulate(initial_state(pop), np.full(15, beta), 0.2, 0.1, 15)
            for day in range(16):
                got = res.states[day].states[g]
                ref = single.states[day]
                assert got.s == pytest.approx(ref.s, abs=1e-10)
                assert got.i == pytest.approx(ref.i, abs=1e-10)

    def test_symmetry(self):
        init = self._two_groups(np.ones((2, 2)), pops=(1000.0, 1000.0))
        betas = np.full((15, 2), 0.2)
        res = simulate_multigroup(init, betas, 0.2, 0.1, 15)
        final = res.states[-1]
        assert final.states[0].i == pytest.approx(final.states[1].i, abs=1e-10)

    def test_isolated_unseeded_group_stays_clean(self):
        init = self._two_groups(np.diag([1.0, 1.0]) * np.array([[1, 0], [0, 1]]),
                                seeds=(2.0, 0.0))
        betas = np.full((20, 2), 0.5)
        res = simulate_multigroup(init, betas, 0.2, 0.1, 20)
        assert np.all(res.incidence[:, 1] == 0.0)

    def test_mixing_dimension_mismatch(self):
        states = [initial_state(1000.0), initial_state(1000.0)]
        with pytest.raises(InputError):
            MultiGroupState(["a", "b"], states, np.array([1000.0, 1000.0]),
                            np.ones((3, 3)))

    def test_conservation_per_group(self):
        init = self._two_groups([[1.0, 0.3], [0.3, 1.0]])
        betas = np.full((30, 2), 0.45)
        res = simulate_multigroup(init, betas, 0.2, 0.1, 30)
        for st in res.states:
            for group_state, pop in zip(st.states, st.populations):
                assert abs(group_state.n - pop) <= 1e-8 * pop
