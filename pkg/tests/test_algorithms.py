import numpy as np
import pytest

from efgkit.algorithms import (algorithm_config, build_cfr_graph,
                               build_cfr_plus_graph, build_sampled_variant)
from efgkit.catalog import generate_kuhn, generate_matrix_game, generate_rps
from efgkit.engine import Environment
from efgkit.evaluation import exploitability
from efgkit.graph import serialize_graph
from efgkit.model import uniform_profile

from oracles import brute_cf

REGRET_NODE = 3
STRATEGY_NODE = 2


def run(tree, config_name, iters, seed=0, traversal=None):
    cfg = algorithm_config(config_name, traversal)
    env = Environment(tree, cfg.traversal, seed=seed)
    env.set_graph(cfg.graph)
    for _ in range(iters):
        env.update(cfg.strategy_node)
        env.update_strategy(cfg.strategy_node)
    return env, cfg


class TestCfr:
    def test_rps_average_converges_to_uniform(self):
        env, cfg = run(generate_rps(), "cfr", 10000)
        avg = env.current_profile(cfg.strategy_node, "avg-iterate")
        assert np.allclose(avg[0], [1 / 3] * 3, atol=1e-3)
        assert np.allclose(avg[1], [1 / 3] * 3, atol=1e-3)

    def test_first_update_regret_matches_oracle(self):
        tree = generate_kuhn()
        env, cfg = run(tree, "cfr", 1)
        prof = uniform_profile(tree)
        for s in tree.infosets:
            cf = np.array([brute_cf(tree, prof, s.player, s.id, a,
                                    truncated=False)
                           for a in range(s.action_count)])
            want = cf - cf @ prof[s.id]
            assert np.allclose(env.variable(REGRET_NODE, s.id), want,
                               atol=1e-12)

    def test_zero_regret_keeps_uniform(self):
        # A constant-payoff game produces zero regrets forever.
        flat = np.zeros((2, 2))
        tree = generate_matrix_game([flat, flat])
        env, cfg = run(tree, "cfr", 5)
        for sid in (0, 1):
            assert np.allclose(env.variable(STRATEGY_NODE, sid), [0.5, 0.5])
            assert np.allclose(env.variable(REGRET_NODE, sid), 0.0)

    def test_strategy_stays_simplex(self):
        tree = generate_kuhn()
        env, cfg = run(tree, "cfr", 50)
        for s in tree.infosets:
            v = env.variable(STRATEGY_NODE, s.id)
            assert np.all(v >= 0) and abs(v.sum() - 1.0) < 1e-12

    def test_regret_growth_is_rootlike(self):
        tree = generate_kuhn()
        cfg = algorithm_config("cfr")
        env = Environment(tree, seed=0)
        env.set_graph(cfg.graph)
        peaks = {}
        for t in range(1, 8193):
            env.update(cfg.strategy_node)
            if t in (512, 2048, 8192):
                peaks[t] = max(env.variable(REGRET_NODE, s.id).max()
                               for s in tree.infosets)
        c = peaks[512] / np.sqrt(512)
        for t in (2048, 8192):
            assert peaks[t] <= 2.0 * c * np.sqrt(t)


class TestCfrPlus:
    def test_regret_buffer_nonnegative(self):
        tree = generate_kuhn()
        cfg = algorithm_config("cfr+")
        env = Environment(tree, seed=0)
        env.set_graph(cfg.graph)
        for _ in range(25):
            env.update(cfg.strategy_node)
            assert all(env.variable(REGRET_NODE, s.id).min() >= 0.0
                       for s in tree.infosets)

    def test_single_action_game_constant_strategy(self):
        tree = generate_matrix_game([np.array([[1.0]]), np.array([[-1.0]])])
        env, cfg = run(tree, "cfr+", 20)
        assert env.variable(STRATEGY_NODE, 0) == pytest.approx([1.0])
        assert env.variable(STRATEGY_NODE, 1) == pytest.approx([1.0])

    def test_not_worse_than_cfr_on_kuhn_at_1k(self):
        tree = generate_kuhn()
        env_plus, cfg_plus = run(tree, "cfr+", 1000)
        env_cfr, cfg_cfr = run(tree, "cfr", 1000)
        plus = exploitability(env_plus, cfg_plus.strategy_node).exploitability
        plain = exploitability(env_cfr, cfg_cfr.strategy_node).exploitability
        assert plus <= plain  # empirical regression, not a theorem


class TestVariants:
    def test_enumerate_cfr_matches_base_graph(self):
        cfg = algorithm_config("cfr")
        base, node = build_cfr_graph()
        assert serialize_graph(cfg.graph) == serialize_graph(base)
        assert cfg.strategy_node == node
        assert cfg.traversal == "enumerate"

    def test_sampled_pairings(self):
        assert build_sampled_variant("cfr", "external").name == "es-cfr"
        assert build_sampled_variant("cfr", "outcome").name == "os-cfr"
        assert algorithm_config("es-cfr").traversal == "external"
        assert algorithm_config("os-cfr").traversal == "outcome"
        assert algorithm_config("os-cfr+").traversal == "outcome"

    def test_graph_is_traversal_independent(self):
        a = serialize_graph(algorithm_config("cfr").graph)
        b = serialize_graph(algorithm_config("es-cfr").graph)
        assert a == b  # sampling lives entirely in the engine

    def test_conflicting_traversal_rejected(self):
        with pytest.raises(ValueError):
            algorithm_config("os-cfr", "enumerate")
        with pytest.raises(ValueError):
            algorithm_config("es-cfr", "outcome")
        with pytest.raises(ValueError):
            algorithm_config("dcfr")
        with pytest.raises(ValueError):
            build_sampled_variant("cfr", "quantum")

    def test_plus_graph_nonneg_regret_rule(self):
        plus, _ = build_cfr_plus_graph()
        text = serialize_graph(plus)
        assert "maximum" in text
