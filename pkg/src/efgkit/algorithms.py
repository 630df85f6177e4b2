"""Reference algorithm graphs: CFR, CFR+, and their sampled pairings.

Each builder returns ``(graph, strategy_node_id)``.  The strategy node holds
the behavioral strategy the engine reads at every update; regret matching
rewrites it in place at the end of each backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph import ComputationGraph, GraphBuilder

TRAVERSALS = ("enumerate", "external", "outcome")


def _regret_matching_graph(plus: bool) -> tuple[ComputationGraph, int]:
    b = GraphBuilder()
    with b.backward(is_static=True):
        expectation = b.placeholder()
        strategy = b.normalize(b.const_vector(1.0))
        regret = b.const_vector(0.0)
    with b.backward(is_static=False):
        # Counterfactual action values: terminal part from the engine plus the
        # expectations already computed at first-reached own child infosets.
        cf = b.utility() + b.aggregate(expectation, "sum", "children",
                                       player="self", padding=0.0)
        expectation.inplace(b.dot(cf, strategy))
        if plus:
            regret.inplace(b.maximum(regret + cf - expectation, 0.0))
        else:
            regret.inplace(regret + cf - expectation)
        strategy.inplace(b.normalize(b.maximum(regret, 0.0),
                                     ignore_negative=True))
    graph = b.seal(strategy_node=strategy)
    return graph, strategy.id


def build_cfr_graph() -> tuple[ComputationGraph, int]:
    """Vanilla counterfactual regret minimization (simultaneous updates)."""
    return _regret_matching_graph(plus=False)


def build_cfr_plus_graph() -> tuple[ComputationGraph, int]:
    """CFR+: the accumulated regret buffer is clamped at zero every step."""
    return _regret_matching_graph(plus=True)


@dataclass(frozen=True)
class RunConfig:
    """An algorithm graph paired with a tree-traversal type."""

    name: str
    graph: ComputationGraph
    strategy_node: int
    traversal: str


_BASES = {"cfr": build_cfr_graph, "cfr+": build_cfr_plus_graph}


def build_sampled_variant(base: str, traversal: str) -> RunConfig:
    """Pair a base graph with a traversal; sampling lives in the engine."""
    if base not in _BASES:
        raise ValueError(f"unknown base algorithm {base!r}")
    if traversal not in TRAVERSALS:
        raise ValueError(f"unknown traversal {traversal!r} (one of {TRAVERSALS})")
    graph, node = _BASES[base]()
    prefix = {"enumerate": "", "external": "es-", "outcome": "os-"}[traversal]
    return RunConfig(f"{prefix}{base}", graph, node, traversal)


# CLI algorithm names and their default traversals.
ALGORITHMS = {
    "cfr": ("cfr", "enumerate"),
    "cfr+": ("cfr+", "enumerate"),
    "es-cfr": ("cfr", "external"),
    "os-cfr": ("cfr", "outcome"),
    "es-cfr+": ("cfr+", "external"),
    "os-cfr+": ("cfr+", "outcome"),
}


def algorithm_config(name: str, traversal: str | None = None) -> RunConfig:
    """Resolve a CLI algorithm name, optionally overriding the traversal."""
    if name not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {name!r} "
                         f"(one of {sorted(ALGORITHMS)})")
    base, default_traversal = ALGORITHMS[name]
    chosen = traversal or default_traversal
    if name.startswith("es-") and chosen != "external":
        raise ValueError(f"{name} requires the external traversal, got {chosen!r}")
    if name.startswith("os-") and chosen != "outcome":
        raise ValueError(f"{name} requires the outcome traversal, got {chosen!r}")
    cfg = build_sampled_variant(base, chosen)
    return RunConfig(name, cfg.graph, cfg.strategy_node, chosen)
