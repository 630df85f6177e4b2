"""Expected utility, exact best response, exploitability, strategy tables.

Pure functions over a tree and a behavioral profile; the only engine coupling
is :func:`exploitability`, which pulls the profile out of an Environment.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import CHANCE, TERMINAL, GameTree

FLOAT_FMT = "%.17g"


@dataclass
class EvalReport:
    """Best-response improvements per player and their sum."""

    per_player_improvement: list[float]
    exploitability: float
    expected_utilities: list[float]


def expected_utility(tree: GameTree, profile) -> list[float]:
    """Expected payoff vector under the full profile, one tree pass."""
    totals = [0.0] * tree.num_players

    def walk(nid: int, reach: float) -> None:
        node = tree.nodes[nid]
        if node.owner == TERMINAL:
            for i in range(tree.num_players):
                totals[i] += reach * node.payoffs[i]
            return
        probs = (node.chance_probs if node.owner == CHANCE
                 else profile[node.infoset])
        for aidx, cid in enumerate(tree.children[nid]):
            p = float(probs[aidx])
            if p != 0.0:
                walk(cid, reach * p)

    sys.setrecursionlimit(max(sys.getrecursionlimit(), len(tree.nodes) + 100))
    walk(tree.root, 1.0)
    return totals


def best_response(tree: GameTree, profile, player: int
                  ) -> tuple[float, dict[int, int]]:
    """Exact best response for ``player`` against everybody else's profile.

    Sweeps the player's infosets in reverse topological order.  The action
    value of (s, a) weighs each member node by everybody-else's reach; ties
    pick the lowest action index.  Returns the game value under the best
    response and the chosen action per infoset.
    """
    others = np.ones(len(tree.nodes))
    order = []
    stack = [(tree.root, 1.0)]
    while stack:
        nid, reach = stack.pop()
        others[nid] = reach
        node = tree.nodes[nid]
        if node.owner == TERMINAL:
            continue
        for aidx, cid in enumerate(tree.children[nid]):
            if node.owner == CHANCE:
                p = node.chance_probs[aidx]
            elif node.owner == player:
                p = 1.0
            else:
                p = float(profile[node.infoset][aidx])
            stack.append((cid, reach * p))

    br_action: dict[int, int] = {}
    memo: dict[int, float] = {}

    def value(nid: int) -> float:
        if nid in memo:
            return memo[nid]
        node = tree.nodes[nid]
        if node.owner == TERMINAL:
            v = node.payoffs[player - 1]
        elif node.owner == player:
            v = value(tree.children[nid][br_action[node.infoset]])
        else:
            probs = (node.chance_probs if node.owner == CHANCE
                     else profile[node.infoset])
            v = sum(float(p) * value(c) for p, c in
                    zip(probs, tree.children[nid]) if float(p) != 0.0)
        memo[nid] = v
        return v

    sys.setrecursionlimit(max(sys.getrecursionlimit(), len(tree.nodes) + 100))
    # Reverse topological order: below any (member, action) every own infoset
    # is already decided, so memoized node values are final.
    for sid in reversed(tree.infoset_order):
        s = tree.infosets[sid]
        if s.player != player:
            continue
        best_a, best_q = 0, None
        for a in range(s.action_count):
            q = sum(others[h] * value(tree.children[h][a])
                    for h in s.member_nodes)
            if best_q is None or q > best_q:
                best_a, best_q = a, q
        br_action[sid] = best_a

    br_value = value(tree.root)
    return br_value, br_action


def exploitability_of_profile(tree: GameTree, profile) -> EvalReport:
    """Sum over players of how much each gains by deviating unilaterally."""
    eu = expected_utility(tree, profile)
    improvements = []
    for player in range(1, tree.num_players + 1):
        br_value, _ = best_response(tree, profile, player)
        improvements.append(br_value - eu[player - 1])
    return EvalReport(per_player_improvement=improvements,
                      exploitability=float(sum(improvements)),
                      expected_utilities=eu)


def exploitability(env, strategy_node: int, mode: str = "avg-iterate"
                   ) -> EvalReport:
    """Evaluate the profile currently held (or averaged) by an Environment."""
    profile = env.current_profile(strategy_node, mode)
    return exploitability_of_profile(env.tree, profile)


# -- strategy tables ----------------------------------------------------------


def extract_strategy_table(env, strategy_node: int, player: int,
                           mode: str = "avg-iterate"
                           ) -> list[tuple[str, tuple[str, ...], list[float]]]:
    """Rows (infoset name, action labels, probabilities), sorted by name."""
    profile = env.current_profile(strategy_node, mode)
    rows = []
    for s in env.tree.player_infosets(player):
        rows.append((s.name or f"s{s.id}", s.actions,
                     [float(p) for p in profile[s.id]]))
    rows.sort(key=lambda r: r[0])
    return rows


def format_strategy_table(rows: Sequence[tuple[str, tuple[str, ...], list[float]]]
                          ) -> str:
    """CSV text: label-named columns when uniform across rows, else action_i."""
    width = max((len(r[2]) for r in rows), default=0)
    labels = None
    for _, acts, _ in rows:
        padded = tuple(acts) + ("",) * (width - len(acts))
        if labels is None:
            labels = padded
        elif labels != padded:
            labels = None
            break
    header = ["infoset"] + (
        [l for l in labels if l] if labels else
        [f"action_{j}" for j in range(width)])
    lines = [",".join(header)]
    for name, _, probs in rows:
        cells = [FLOAT_FMT % p for p in probs] + [""] * (width - len(probs))
        lines.append(",".join([name] + cells))
    return "\n".join(lines) + "\n"
