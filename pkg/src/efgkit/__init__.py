"""Tabular extensive-form game solver driven by per-infoset computation graphs.

Define an update rule once as a small computation graph; the engine
replicates it across every infoset of a game tree, feeds it counterfactual
utilities from exact or sampled traversals, maintains average sequence-form
strategies, and measures convergence as exploitability.
"""

from .algorithms import (ALGORITHMS, RunConfig, algorithm_config,
                         build_cfr_graph, build_cfr_plus_graph,
                         build_sampled_variant)
from .catalog import (generate_kuhn, generate_leduc, generate_matrix_game,
                      generate_rps)
from .engine import (AVG_ITERATE, LAST_ITERATE, Environment, EngineError,
                     InvalidStrategyError)
from .evaluation import (EvalReport, best_response, expected_utility,
                         exploitability, exploitability_of_profile,
                         extract_strategy_table, format_strategy_table)
from .fileformat import (GameBuildError, GameFileDocument, GameFileError,
                         build_tree, load_game_file, load_game_text,
                         parse_game_file, serialize_game)
from .graph import (ComputationGraph, GraphBuilder, GraphError, NodeRef,
                    OpSpec, Phase, evaluate_op, parse_graph, serialize_graph)
from .model import (CHANCE, TERMINAL, CyclicInfosetsError, GameNode, GameTree,
                    Infoset, infoset_topological_order, reach_probability,
                    sequence_form, uniform_profile, random_profile,
                    validate_game, validate_profile)
from .solver import GraphSolver, available_algorithms

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "AVG_ITERATE", "CHANCE", "ComputationGraph",
    "CyclicInfosetsError", "EngineError", "EvalReport", "Environment",
    "GameBuildError", "GameFileDocument", "GameFileError", "GameNode",
    "GameTree", "GraphBuilder", "GraphError", "GraphSolver", "Infoset",
    "InvalidStrategyError", "LAST_ITERATE", "NodeRef", "OpSpec", "Phase",
    "RunConfig", "TERMINAL", "algorithm_config", "available_algorithms",
    "best_response", "build_cfr_graph", "build_cfr_plus_graph",
    "build_sampled_variant", "build_tree", "evaluate_op", "expected_utility",
    "exploitability", "exploitability_of_profile", "extract_strategy_table",
    "format_strategy_table", "generate_kuhn", "generate_leduc",
    "generate_matrix_game", "generate_rps", "infoset_topological_order",
    "load_game_file", "load_game_text", "parse_game_file", "parse_graph",
    "random_profile", "reach_probability", "sequence_form", "serialize_game",
    "serialize_graph", "uniform_profile", "validate_game", "validate_profile",
]
