import numpy as np
import pytest

from efgkit.algorithms import algorithm_config
from efgkit.catalog import generate_kuhn, generate_leduc, generate_rps
from efgkit.engine import Environment
from efgkit.evaluation import (best_response, expected_utility,
                               exploitability, exploitability_of_profile,
                               extract_strategy_table, format_strategy_table)
from efgkit.model import random_profile, uniform_profile

from oracles import brute_expected_utility, pure_best_response_value

# Frozen via the pure-strategy enumeration oracle on the uniform profile.
KUHN_UNIFORM_EXPLOITABILITY = 0.9166666666666665


class TestExpectedUtility:
    def test_rps_uniform_is_zero(self):
        tree = generate_rps()
        assert expected_utility(tree, uniform_profile(tree)) == \
            pytest.approx([0.0, 0.0], abs=1e-15)

    def test_kuhn_uniform_matches_terminal_enumeration(self):
        tree = generate_kuhn()
        prof = uniform_profile(tree)
        got = expected_utility(tree, prof)
        assert got == pytest.approx(brute_expected_utility(tree, prof),
                                    abs=1e-14)

    def test_deterministic_profile_hits_single_terminal(self):
        tree = generate_rps()
        prof = [np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])]
        # paper beats rock, scissors beat paper -> player 2 wins
        assert expected_utility(tree, prof) == pytest.approx([-1.0, 1.0])

    def test_zero_sum_consistency(self):
        rng = np.random.default_rng(0)
        for tree in (generate_kuhn(), generate_rps(), generate_leduc()):
            for prof in (uniform_profile(tree), random_profile(tree, rng)):
                assert abs(sum(expected_utility(tree, prof))) < 1e-12


class TestBestResponse:
    def test_matches_pure_enumeration_on_kuhn(self):
        tree = generate_kuhn()
        rng = np.random.default_rng(21)
        profiles = [uniform_profile(tree)] + [random_profile(tree, rng)
                                              for _ in range(5)]
        for prof in profiles:
            for player in (1, 2):
                got, _ = best_response(tree, prof, player)
                want = pure_best_response_value(tree, prof, player)
                assert got == pytest.approx(want, abs=1e-12)

    def test_dominates_expected_utility(self):
        tree = generate_kuhn()
        rng = np.random.default_rng(4)
        for _ in range(100):
            prof = random_profile(tree, rng)
            eu = expected_utility(tree, prof)
            for player in (1, 2):
                br, _ = best_response(tree, prof, player)
                assert br >= eu[player - 1] - 1e-12

    def test_uniform_rps_ties_pick_action_zero(self):
        tree = generate_rps()
        value, actions = best_response(tree, uniform_profile(tree), 1)
        assert value == pytest.approx(0.0, abs=1e-15)
        assert actions[0] == 0

    def test_optimality_certificate_on_kuhn(self):
        tree = generate_kuhn()
        prof = random_profile(tree, np.random.default_rng(8))
        for player in (1, 2):
            br_value, br_actions = best_response(tree, prof, player)
            base = list(prof)
            for s in tree.player_infosets(player):
                pure = np.zeros(s.action_count)
                pure[br_actions[s.id]] = 1.0
                base[s.id] = pure
            assert expected_utility(tree, base)[player - 1] == \
                pytest.approx(br_value, abs=1e-12)
            for s in tree.player_infosets(player):
                for alt in range(s.action_count):
                    if alt == br_actions[s.id]:
                        continue
                    mutated = list(base)
                    pure = np.zeros(s.action_count)
                    pure[alt] = 1.0
                    mutated[s.id] = pure
                    got = expected_utility(tree, mutated)[player - 1]
                    assert got <= br_value + 1e-12


class TestExploitability:
    def test_kuhn_uniform_matches_oracle(self):
        tree = generate_kuhn()
        prof = uniform_profile(tree)
        report = exploitability_of_profile(tree, prof)
        eu = expected_utility(tree, prof)
        oracle = sum(pure_best_response_value(tree, prof, i) - eu[i - 1]
                     for i in (1, 2))
        assert report.exploitability == pytest.approx(oracle, abs=1e-9)
        assert report.exploitability == pytest.approx(
            KUHN_UNIFORM_EXPLOITABILITY, abs=1e-12)

    def test_rps_uniform_is_nash(self):
        report = exploitability_of_profile(generate_rps(),
                                           uniform_profile(generate_rps()))
        assert abs(report.exploitability) < 1e-12

    def test_nonnegative_improvements(self):
        tree = generate_kuhn()
        rng = np.random.default_rng(31)
        for _ in range(200):
            report = exploitability_of_profile(tree, random_profile(tree, rng))
            assert all(v >= -1e-9 for v in report.per_player_improvement)

    def test_avg_beats_last_iterate_after_training(self):
        tree = generate_kuhn()
        cfg = algorithm_config("cfr")
        env = Environment(tree, seed=0)
        env.set_graph(cfg.graph)
        for _ in range(10000):
            env.update(cfg.strategy_node)
            env.update_strategy(cfg.strategy_node)
        avg = exploitability(env, cfg.strategy_node, "avg-iterate")
        last = exploitability(env, cfg.strategy_node, "last-iterate")
        assert avg.exploitability < last.exploitability


class TestStrategyTables:
    def test_uniform_kuhn_rows(self):
        tree = generate_kuhn()
        cfg = algorithm_config("cfr")
        env = Environment(tree, seed=0)
        env.set_graph(cfg.graph)
        rows = extract_strategy_table(env, cfg.strategy_node, player=1,
                                      mode="last-iterate")
        assert len(rows) == 6
        assert [r[0] for r in rows] == sorted(r[0] for r in rows)
        for _, _, probs in rows:
            assert probs == pytest.approx([0.5, 0.5])
            assert sum(probs) == pytest.approx(1.0)

    def test_header_uses_labels_when_uniform(self):
        tree = generate_rps()
        cfg = algorithm_config("cfr")
        env = Environment(tree, seed=0)
        env.set_graph(cfg.graph)
        rows = extract_strategy_table(env, cfg.strategy_node, player=1)
        text = format_strategy_table(rows)
        assert text.splitlines()[0] == "infoset,r,p,s"

    def test_header_positional_when_labels_differ(self):
        tree = generate_kuhn()
        cfg = algorithm_config("cfr")
        env = Environment(tree, seed=0)
        env.set_graph(cfg.graph)
        rows = extract_strategy_table(env, cfg.strategy_node, player=1)
        text = format_strategy_table(rows)
        assert text.splitlines()[0] == "infoset,action_0,action_1"

    def test_converged_kuhn_never_calls_bet_with_jack(self):
        tree = generate_kuhn()
        cfg = algorithm_config("cfr")
        env = Environment(tree, seed=0)
        env.set_graph(cfg.graph)
        for _ in range(10000):
            env.update(cfg.strategy_node)
            env.update_strategy(cfg.strategy_node)
        rows = dict((name, (acts, probs)) for name, acts, probs in
                    extract_strategy_table(env, cfg.strategy_node, 1))
        acts, probs = rows["J:kb"]
        assert probs[acts.index("c")] <= 0.01  # calling with a jack is dominated
