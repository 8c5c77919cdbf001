import numpy as np
import pytest

from srwe.equilibrium import solve_srwe, solve_wardrop
from srwe.game import nominal_cost, validate_game
from srwe.robust import RobustnessParams
from srwe.scenarios import (
    EvChargingConfig,
    PerturbationConfig,
    PoaConfig,
    aggregate_variance,
    build_ev_charging,
    build_poa_game,
    bump_vector,
    clock_to_index,
    default_demand_profile,
    load_demand_profile,
    run_perturbation,
    run_valley_filling,
    solve_for_epsilons,
)


@pytest.fixture(scope="module")
def default_runs(paper_game):
    return solve_for_epsilons(paper_game, [0.0, 1.0, 2.0, 3.0, 4.0])


class TestClock:
    def test_indices(self):
        assert clock_to_index(12) == 0
        assert clock_to_index(17) == 5
        assert clock_to_index(0) == 12
        assert clock_to_index(2) == 14
        assert clock_to_index(10) == 22


class TestDemandProfile:
    def test_range_and_valley(self):
        d = default_demand_profile()
        assert d.size == 24
        assert d.min() >= 5.8 and d.max() <= 9.5
        # Minimum overnight, between midnight and 6am.
        assert clock_to_index(0) <= int(np.argmin(d)) < clock_to_index(6)

    def test_override_is_verbatim(self):
        d = list(np.linspace(1, 2, 24))
        np.testing.assert_array_equal(EvChargingConfig(demand=d).demand_vector(), d)

    def test_loader_rejects_bad_header(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("h,kw\n0,1\n")
        with pytest.raises(ValueError):
            load_demand_profile(path)

    def test_loader_rejects_gaps(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("hour,demand_kw\n0,1\n2,1\n")
        with pytest.raises(ValueError):
            load_demand_profile(path)


class TestBuild:
    def test_defaults(self, paper_game):
        assert validate_game(paper_game).ok
        c = paper_game.classes[0]
        assert c.count == 100 and c.space.budget == 9.0
        window = np.zeros(24, bool)
        window[clock_to_index(17):clock_to_index(10)] = True
        np.testing.assert_array_equal(c.space.upper, np.where(window, 2.0, 0.0))
        assert paper_game.support.sigma_max == 4.0

    def test_unit_capacity_no_demand(self):
        game = build_ev_charging(EvChargingConfig(demand=[0.0] * 24))
        np.testing.assert_array_equal(game.classes[0].cost.alpha, np.ones(24))
        np.testing.assert_array_equal(game.classes[0].cost.beta, np.zeros(24))

    def test_zero_budget(self):
        game = build_ev_charging(EvChargingConfig(budget_kwh=0.0))
        prof, rep = solve_wardrop(game)
        assert rep.converged
        np.testing.assert_array_equal(prof.actions[0], np.zeros(24))

    def test_invalid(self):
        with pytest.raises(ValueError):
            build_ev_charging(EvChargingConfig(budget_kwh=100.0))
        with pytest.raises(ValueError):
            build_ev_charging(EvChargingConfig(window_start=5, window_end=5))

    def test_wrapping_window(self):
        ub = EvChargingConfig(window_start=22, window_end=2).upper()
        np.testing.assert_array_equal(np.flatnonzero(ub), [0, 1, 22, 23])

    def test_poa_prices(self):
        game = build_poa_game(EvChargingConfig(), PoaConfig())
        cost = game.classes[0].cost
        lin = np.arange(clock_to_index(2), clock_to_index(10))
        const = np.setdiff1d(np.arange(24), lin)
        np.testing.assert_array_equal(cost.alpha[lin], 0.15)
        np.testing.assert_array_equal(cost.beta[lin], 0.0)
        np.testing.assert_array_equal(cost.alpha[const], 0.0)
        np.testing.assert_array_equal(cost.beta[const], 0.15)
        np.testing.assert_array_equal(cost.base_demand, 0.0)


class TestValleyFilling:
    def test_valley_and_budget(self, default_runs):
        cfg = EvChargingConfig()
        table = run_valley_filling(cfg, runs=default_runs)
        assert not table.omitted
        sigma0 = table.aggregates[0.0]
        d = table.base_demand
        # Charging concentrates where base demand is lowest.
        assert sigma0[np.argmin(d)] > 0
        assert sigma0[d > 9.0].sum() == 0.0
        assert np.ptp(table.total_demand(0.0)[sigma0 > 0]) <= 1e-4
        for eps, s in table.aggregates.items():
            assert s.sum() == pytest.approx(cfg.budget_kwh, abs=1e-8)

    def test_flattening(self, default_runs):
        v = {r.epsilon: aggregate_variance(r.sigma) for r in default_runs}
        assert v[4.0] < v[2.0] < v[0.0]

    def test_budget_per_player(self, default_runs):
        for r in default_runs:
            for x in r.actions:
                assert x.sum() >= 9.0 - 1e-8

    def test_support_size_does_not_matter(self, default_runs):
        ref = {r.epsilon: r.sigma for r in default_runs}
        for smax in (6.0, 10.0):
            game = build_ev_charging(EvChargingConfig(sigma_max=smax))
            for eps in (2.0, 4.0):
                prof, rep = solve_srwe(game, RobustnessParams(eps, game.support))
                assert rep.converged
                np.testing.assert_allclose(prof.sigma, ref[eps], atol=1e-8)


class TestPerturbation:
    def test_bump_wraps(self):
        np.testing.assert_array_equal(np.flatnonzero(bump_vector(24, 23, 2, 1.0)), [0, 23])
        assert bump_vector(24, 3, 2, 2.0).sum() == 4.0

    def test_zero_magnitude(self, paper_game, default_runs):
        stats = run_perturbation(paper_game, default_runs, PerturbationConfig(magnitudes=[0.0], trials=10))
        for r in default_runs:
            base = stats.unperturbed[r.epsilon][0]
            assert stats.worst[(r.epsilon, 0.0)] == base
            assert stats.best[(r.epsilon, 0.0)] == base

    def test_homogeneous_players(self, paper_game, default_runs):
        stats = run_perturbation(paper_game, default_runs, PerturbationConfig(trials=1))
        for key in stats.worst:
            assert stats.worst[key] == stats.best[key] == stats.average[key]

    def test_perturbed_not_cheaper(self, paper_game, default_runs):
        stats = run_perturbation(paper_game, default_runs, PerturbationConfig(trials=50))
        for (eps, _), v in stats.best.items():
            assert v >= stats.unperturbed[eps][0] - 1e-12

    def test_coordination(self, paper_game, default_runs):
        stats = run_perturbation(paper_game, default_runs, PerturbationConfig(magnitudes=[2.0], trials=200))
        avg0, max0 = stats.average[(0.0, 2.0)], stats.worst[(0.0, 2.0)]
        assert any(stats.average[(e, 2.0)] <= avg0 and stats.worst[(e, 2.0)] <= max0 for e in (1.0, 2.0, 3.0))

    def test_histogram_counts(self, paper_game, default_runs):
        stats = run_perturbation(paper_game, default_runs, PerturbationConfig(trials=30))
        for counts in stats.histogram.values():
            assert counts.sum() == 30 * 100
        assert np.allclose(stats.histogram_centers % 1.0, 0.0)

    def test_deterministic(self, paper_game, default_runs):
        a = run_perturbation(paper_game, default_runs, PerturbationConfig(trials=20, seed=5))
        b = run_perturbation(paper_game, default_runs, PerturbationConfig(trials=20, seed=5))
        assert a.average == b.average and a.worst == b.worst

    def test_non_converged_runs_skipped(self, paper_game, default_runs):
        import dataclasses

        runs = [dataclasses.replace(default_runs[0], converged=False)] + default_runs[1:]
        stats = run_perturbation(paper_game, runs, PerturbationConfig(trials=5))
        assert 0.0 not in stats.unperturbed


def test_parallel_matches_serial(paper_game, monkeypatch):
    serial = solve_for_epsilons(paper_game, [0.0, 2.0])
    monkeypatch.setenv("SRWE_THREADS", "2")
    parallel = solve_for_epsilons(paper_game, [0.0, 2.0])
    for a, b in zip(serial, parallel):
        assert a.epsilon == b.epsilon
        np.testing.assert_array_equal(a.sigma, b.sigma)


def test_realised_cost_matches_nominal(paper_game, default_runs):
    r = default_runs[2]
    c = paper_game.classes[0]
    bump = bump_vector(24, 10, 2, 4.0)
    assert nominal_cost(r.actions[0], r.sigma + bump, c.cost) >= nominal_cost(r.actions[0], r.sigma, c.cost)
