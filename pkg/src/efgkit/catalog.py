"""Built-in benchmark games: Kuhn poker, Leduc hold'em, and matrix games.

Each generator returns a validated :class:`~efgkit.model.GameTree` so tests
and the CLI need no external game files.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .model import CHANCE, TERMINAL, GameNode, GameTree, Infoset


class _TreeBuilder:
    """Incremental node/infoset assembly with name-keyed infosets."""

    def __init__(self, num_players: int, name: str):
        self.num_players = num_players
        self.name = name
        self.nodes: list[GameNode] = []
        self._groups: dict[str, list[int]] = {}
        self._group_player: dict[str, int] = {}
        self._order: list[str] = []

    def chance(self, parent, events: Sequence[str], probs: Sequence[float]) -> int:
        return self._add(GameNode(id=len(self.nodes), owner=CHANCE,
                                  actions=tuple(events),
                                  chance_probs=tuple(float(p) for p in probs),
                                  parent=parent))

    def player(self, parent, player: int, actions: Sequence[str],
               infoset_name: str) -> int:
        nid = self._add(GameNode(id=len(self.nodes), owner=player,
                                 actions=tuple(actions), parent=parent))
        if infoset_name not in self._groups:
            self._groups[infoset_name] = []
            self._group_player[infoset_name] = player
            self._order.append(infoset_name)
        elif self._group_player[infoset_name] != player:
            raise ValueError(f"infoset {infoset_name!r} spans players")
        self._groups[infoset_name].append(nid)
        return nid

    def leaf(self, parent, payoffs: Sequence[float]) -> int:
        return self._add(GameNode(id=len(self.nodes), owner=TERMINAL,
                                  payoffs=tuple(float(u) for u in payoffs),
                                  parent=parent))

    def _add(self, node: GameNode) -> int:
        self.nodes.append(node)
        return node.id

    def build(self) -> GameTree:
        infosets = []
        for sid, name in enumerate(self._order):
            members = self._groups[name]
            first = self.nodes[members[0]]
            infosets.append(Infoset(id=sid, player=self._group_player[name],
                                    member_nodes=tuple(members),
                                    action_count=len(first.actions),
                                    actions=first.actions, name=name))
            for m in members:
                object.__setattr__(self.nodes[m], "infoset", sid)
        return GameTree(self.num_players, self.nodes, infosets, name=self.name)


# -- Kuhn poker -----------------------------------------------------------

_KUHN_RANK = {"J": 0, "Q": 1, "K": 2}
_KUHN_DEALS = ("JQ", "JK", "QJ", "QK", "KJ", "KQ")


def generate_kuhn() -> GameTree:
    """Two-player Kuhn poker.

    One 6-way chance deal of ordered card pairs from {J, Q, K}, ante 1,
    bet size 1.  Action labels: k = check, c = call, f = fold, b = bet.
    """
    b = _TreeBuilder(2, "kuhn")
    root = b.chance(None, _KUHN_DEALS, [1.0 / 6.0] * 6)

    def showdown(cards: str, pot_each: int) -> tuple[float, float]:
        w = 1 if _KUHN_RANK[cards[0]] > _KUHN_RANK[cards[1]] else 2
        return (pot_each, -pot_each) if w == 1 else (-pot_each, pot_each)

    for deal_idx, cards in enumerate(_KUHN_DEALS):
        c1, c2 = cards[0], cards[1]
        # Player 1 to act: check or bet.
        p1 = b.player((root, deal_idx), 1, ("k", "b"), f"{c1}:")
        # k -> player 2: check (showdown, pot 1) or bet.
        p2k = b.player((p1, 0), 2, ("k", "b"), f"{c2}:k")
        b.leaf((p2k, 0), showdown(cards, 1))
        # k b -> player 1: fold or call.
        p1kb = b.player((p2k, 1), 1, ("f", "c"), f"{c1}:kb")
        b.leaf((p1kb, 0), (-1.0, 1.0))
        b.leaf((p1kb, 1), showdown(cards, 2))
        # b -> player 2: fold or call.
        p2b = b.player((p1, 1), 2, ("f", "c"), f"{c2}:b")
        b.leaf((p2b, 0), (1.0, -1.0))
        b.leaf((p2b, 1), showdown(cards, 2))
    return b.build()


# -- Leduc hold'em --------------------------------------------------------

_LEDUC_RANKS = ("J", "Q", "K")
# Two suits per rank; suits matter only for card identity, never payoffs.
_LEDUC_CARDS = ("Ja", "Jb", "Qa", "Qb", "Ka", "Kb")

def _round_state(history: str) -> tuple[int, tuple[str, ...]]:
    """Betting-round grammar, two wagers max (a bet plus one raise)."""
    actor = len(history) % 2  # players alternate within a round
    facing_bet = history.endswith("b") or history.endswith("r")
    if not facing_bet:
        legal: tuple[str, ...] = ("k", "b")
    elif "r" in history:
        legal = ("f", "c")
    else:
        legal = ("f", "c", "r")
    return actor, legal


def _round_over(history: str) -> bool:
    return history in ("kk",) or history.endswith("f") or history.endswith("c")


def generate_leduc() -> GameTree:
    """Two-player Leduc hold'em.

    Six-card deck (two suits of J/Q/K), one private card each, one public
    card dealt by rank after the first betting round, ante 1, bet sizes 2
    then 4, at most two wagers per round (a bet plus one raise).  Player 1
    opens both rounds.  Pair beats high card; equal ranks split the pot.
    """
    b = _TreeBuilder(2, "leduc")
    deals = [(x, y) for x in _LEDUC_CARDS for y in _LEDUC_CARDS if x != y]
    root = b.chance(None, [x + y for x, y in deals], [1.0 / len(deals)] * len(deals))

    def winner(c1: str, c2: str, pub: str) -> int:
        r1, r2 = c1[0], c2[0]
        if r1 == pub and r2 != pub:
            return 1
        if r2 == pub and r1 != pub:
            return 2
        if r1 == r2:
            return 0
        return 1 if _LEDUC_RANKS.index(r1) > _LEDUC_RANKS.index(r2) else 2

    def payoff(c1: str, c2: str, pub: str, commit: list[float],
               folder: int) -> tuple[float, float]:
        if folder == 1:
            return (-commit[0], commit[0])
        if folder == 2:
            return (commit[1], -commit[1])
        w = winner(c1, c2, pub)
        if w == 0:
            return (0.0, 0.0)
        lose = commit[1] if w == 1 else commit[0]
        return (lose, -lose) if w == 1 else (-lose, lose)

    def betting(parent, cards: tuple[str, str], rnd: int, hist: str,
                commit: list[float], prefix: tuple[str, str]) -> None:
        """Expand one betting round; ``prefix`` names the two players' views."""
        c1, c2 = cards
        actor_off, legal = _round_state(hist)
        player = actor_off + 1
        bet = 2.0 if rnd == 0 else 4.0
        view = prefix[player - 1]
        nid = b.player(parent, player, legal, f"{view}{hist}")
        for aidx, act in enumerate(legal):
            edge = (nid, aidx)
            nxt = list(commit)
            to_call = max(commit) - commit[player - 1]
            if act == "f":
                pub = "" if rnd == 0 else prefix[0].split("/")[1][0]
                b.leaf(edge, payoff(c1, c2, pub, nxt, player))
                continue
            if act == "c":
                nxt[player - 1] += to_call
            elif act == "b":
                nxt[player - 1] += bet
            elif act == "r":
                nxt[player - 1] += to_call + bet
            h2 = hist + act
            if not _round_over(h2):
                betting(edge, cards, rnd, h2, nxt, prefix)
            elif rnd == 0:
                deal_public(edge, cards, h2, nxt)
            else:
                pub = prefix[0].split("/")[1][0]
                b.leaf(edge, payoff(c1, c2, pub, nxt, 0))

    def deal_public(parent, cards: tuple[str, str], h1: str,
                    commit: list[float]) -> None:
        remaining = [c for c in _LEDUC_CARDS if c not in cards]
        counts = {r: sum(1 for c in remaining if c[0] == r) for r in _LEDUC_RANKS}
        ranks = [r for r in _LEDUC_RANKS if counts[r] > 0]
        nid = b.chance(parent, ranks, [counts[r] / len(remaining) for r in ranks])
        for ridx, pub in enumerate(ranks):
            prefix = (f"{cards[0]}:{h1}/{pub}:", f"{cards[1]}:{h1}/{pub}:")
            betting((nid, ridx), cards, 1, "", commit, prefix)

    for deal_idx, (c1, c2) in enumerate(deals):
        betting((root, deal_idx), (c1, c2), 0, "", [1.0, 1.0],
                (f"{c1}:", f"{c2}:"))
    return b.build()


# -- one-shot matrix games ------------------------------------------------


def generate_matrix_game(payoff_matrices: Sequence[np.ndarray],
                         action_labels: Sequence[Sequence[str]] | None = None,
                         name: str = "matrix") -> GameTree:
    """Simultaneous N-player matrix game as an N-level tree.

    Player k acts at a single infoset whose members cover every combination
    of earlier players' actions, so nobody observes anybody.  One payoff
    tensor per player, all sharing one N-dimensional shape.
    """
    mats = [np.asarray(m, dtype=float) for m in payoff_matrices]
    n = len(mats)
    if n < 1:
        raise ValueError("need at least one payoff matrix")
    shape = mats[0].shape
    if len(shape) != n or any(m.shape != shape for m in mats):
        raise ValueError(f"expected {n} matrices of one {n}-d shape, got "
                         f"{[m.shape for m in mats]}")
    if action_labels is None:
        action_labels = [tuple(f"a{j}" for j in range(shape[i])) for i in range(n)]

    b = _TreeBuilder(n, name)

    def expand(parent, level: int, index: tuple[int, ...]) -> None:
        if level == n:
            b.leaf(parent, [float(m[index]) for m in mats])
            return
        nid = b.player(parent, level + 1, tuple(action_labels[level]),
                       f"p{level + 1}")
        for j in range(shape[level]):
            expand((nid, j), level + 1, index + (j,))

    expand(None, 0, ())
    return b.build()


def generate_rps() -> GameTree:
    """Rock-paper-scissors with +-1 payoffs."""
    a = np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])
    return generate_matrix_game([a, -a], [("r", "p", "s"), ("r", "p", "s")],
                                name="rps")
