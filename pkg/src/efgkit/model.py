"""Immutable extensive-form game model: nodes, infosets, profiles, reach math.

A game is a tree of chance / player / terminal nodes plus an information
partition over the player-owned nodes.  Everything downstream (file format,
generators, execution engine, evaluation) works on :class:`GameTree`.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Owner codes for GameNode.owner.  Real players are 1..num_players.
CHANCE = 0
TERMINAL = -1

PROB_SUM_TOL = 1e-9


class CyclicInfosetsError(Exception):
    """The infoset ancestry relation contains a cycle."""


@dataclass(frozen=True)
class GameNode:
    """One tree node.

    ``parent`` is ``(parent_node_id, action_index)`` or ``None`` for the root.
    ``chance_probs`` is present iff the node is a chance node, ``payoffs``
    (one utility per player) iff terminal, ``infoset`` iff player-owned.
    """

    id: int
    owner: int
    actions: tuple[str, ...] = ()
    chance_probs: tuple[float, ...] | None = None
    payoffs: tuple[float, ...] | None = None
    parent: tuple[int, int] | None = None
    infoset: int | None = None

    @property
    def is_terminal(self) -> bool:
        return self.owner == TERMINAL

    @property
    def is_chance(self) -> bool:
        return self.owner == CHANCE


@dataclass
class Infoset:
    """A set of nodes indistinguishable to the acting player.

    ``parent_sequence`` and ``depth`` are derived by :class:`GameTree` at
    construction; treat instances as read-only afterwards.
    """

    id: int
    player: int
    member_nodes: tuple[int, ...]
    action_count: int
    actions: tuple[str, ...] = ()
    name: str = ""
    parent_sequence: tuple[int, int] | None = None
    depth: int = -1


@dataclass
class Violation:
    """A single failed structural invariant, attached to a node or infoset."""

    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.subject}: {self.message}"


class GameTree:
    """Immutable game tree plus derived indexes.

    Construction is tolerant of invalid input: structural problems are left
    for :func:`validate_game` to report, so generators and the file loader can
    surface every violation at once instead of dying on the first.
    """

    def __init__(self, num_players: int, nodes: Sequence[GameNode],
                 infosets: Sequence[Infoset], name: str = "game"):
        self.num_players = num_players
        self.nodes = list(nodes)
        self.infosets = list(infosets)
        self.name = name

        self.root = next((n.id for n in self.nodes if n.parent is None), -1)
        self._build_children()
        self._build_depths()
        self._build_parent_sequences()
        self._build_infoset_order()

    # -- derived indexes -------------------------------------------------

    def _build_children(self) -> None:
        self.children: list[list[int]] = [[-1] * len(n.actions) for n in self.nodes]
        for n in self.nodes:
            if n.parent is None:
                continue
            pid, aidx = n.parent
            if 0 <= pid < len(self.nodes) and 0 <= aidx < len(self.nodes[pid].actions):
                self.children[pid][aidx] = n.id

    def _build_depths(self) -> None:
        self.node_depth = [-1] * len(self.nodes)
        if self.root < 0:
            return
        self.node_depth[self.root] = 0
        queue = [self.root]
        while queue:
            nxt: list[int] = []
            for nid in queue:
                for cid in self.children[nid]:
                    if cid >= 0 and self.node_depth[cid] < 0:
                        self.node_depth[cid] = self.node_depth[nid] + 1
                        nxt.append(cid)
            queue = nxt

    def _build_parent_sequences(self) -> None:
        # Walk each infoset's first member up to the nearest own-player node.
        for s in self.infosets:
            if not s.member_nodes:
                s.parent_sequence = None
                continue
            s.parent_sequence = self.own_parent_sequence(s.member_nodes[0], s.player)

    def own_parent_sequence(self, node_id: int, player: int) -> tuple[int, int] | None:
        """Nearest ancestor sequence ``(infoset, action)`` of ``player`` above a node."""
        cur = self.nodes[node_id].parent
        seen = 0
        while cur is not None and seen <= len(self.nodes):
            pid, aidx = cur
            parent = self.nodes[pid]
            if parent.owner == player and parent.infoset is not None:
                return (parent.infoset, aidx)
            cur = parent.parent
            seen += 1
        return None

    def infoset_ancestry_edges(self) -> list[set[int]]:
        """Edges ``ancestor -> descendant`` of the infoset ancestry DAG."""
        edges: list[set[int]] = [set() for _ in self.infosets]
        if self.root < 0:
            return edges
        stack: list[tuple[int, tuple[int, ...]]] = [(self.root, ())]
        while stack:
            nid, path = stack.pop()
            node = self.nodes[nid]
            here = path
            if node.infoset is not None and 0 <= node.infoset < len(self.infosets):
                for anc in path:
                    if anc != node.infoset:
                        edges[anc].add(node.infoset)
                here = path + (node.infoset,)
            for cid in self.children[nid]:
                if cid >= 0:
                    stack.append((cid, here))
        return edges

    def _build_infoset_order(self) -> None:
        try:
            self.infoset_order: list[int] | None = self._topological_order()
        except CyclicInfosetsError:
            self.infoset_order = None
        if self.infoset_order is not None:
            for pos, sid in enumerate(self.infoset_order):
                self.infosets[sid].depth = pos

    def _topological_order(self) -> list[int]:
        edges = self.infoset_ancestry_edges()
        indeg = [0] * len(self.infosets)
        for srcs in edges:
            for dst in srcs:
                indeg[dst] += 1

        def key(sid: int) -> tuple[int, int]:
            members = self.infosets[sid].member_nodes
            mind = min((self.node_depth[m] for m in members), default=0)
            return (mind, sid)

        heap = [key(s.id) for s in self.infosets if indeg[s.id] == 0]
        heapq.heapify(heap)
        order: list[int] = []
        while heap:
            _, sid = heapq.heappop(heap)
            order.append(sid)
            for dst in sorted(edges[sid]):
                indeg[dst] -= 1
                if indeg[dst] == 0:
                    heapq.heappush(heap, key(dst))
        if len(order) != len(self.infosets):
            raise CyclicInfosetsError(
                f"infoset ancestry is cyclic ({len(self.infosets) - len(order)} "
                "infosets unreachable in topological sort)")
        return order

    # -- convenience -----------------------------------------------------

    def terminal_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.is_terminal]

    def player_infosets(self, player: int) -> list[Infoset]:
        return [s for s in self.infosets if s.player == player]

    def __repr__(self) -> str:
        return (f"GameTree({self.name!r}, players={self.num_players}, "
                f"nodes={len(self.nodes)}, infosets={len(self.infosets)})")


# -- validation ----------------------------------------------------------


def validate_game(tree: GameTree) -> list[Violation]:
    """Check every structural invariant; returns all violations (empty = valid)."""
    out: list[Violation] = []
    n_nodes = len(tree.nodes)

    def bad(code: str, subject: str, message: str) -> None:
        out.append(Violation(code, subject, message))

    if tree.num_players < 1:
        bad("num_players", "game", f"num_players {tree.num_players} < 1")

    roots = [n.id for n in tree.nodes if n.parent is None]
    if len(roots) != 1:
        bad("root", "game", f"expected exactly one root node, found {len(roots)}")

    for pos, n in enumerate(tree.nodes):
        subj = f"node {n.id}"
        if n.id != pos:
            bad("ids", subj, f"node at position {pos} has id {n.id}")
        if n.parent is not None:
            pid, aidx = n.parent
            if not (0 <= pid < n_nodes):
                bad("parent", subj, f"parent id {pid} out of range")
            elif tree.nodes[pid].is_terminal:
                bad("parent", subj, f"parent node {pid} is terminal")
            elif not (0 <= aidx < len(tree.nodes[pid].actions)):
                bad("parent", subj, f"parent action index {aidx} out of range")
        if n.is_terminal:
            if n.actions:
                bad("terminal", subj, "terminal node has actions")
            if n.payoffs is None or len(n.payoffs) != tree.num_players:
                got = 0 if n.payoffs is None else len(n.payoffs)
                bad("payoffs", subj,
                    f"terminal node has {got} payoffs, expected {tree.num_players}")
            elif any(not np.isfinite(u) for u in n.payoffs):
                bad("payoffs", subj, "non-finite payoff")
            continue
        if n.payoffs is not None:
            bad("payoffs", subj, "non-terminal node carries payoffs")
        if not n.actions:
            bad("actions", subj, "non-terminal node has no actions")
        kids = tree.children[n.id]
        for aidx, cid in enumerate(kids):
            if cid < 0:
                bad("children", subj, f"action {aidx} has no child node")
        if n.is_chance:
            if n.infoset is not None:
                bad("infoset", subj, "chance node assigned to an infoset")
            if n.chance_probs is None:
                bad("chance", subj, "chance node has no probabilities")
            else:
                if len(n.chance_probs) != len(n.actions):
                    bad("chance", subj,
                        f"{len(n.chance_probs)} probabilities for "
                        f"{len(n.actions)} events")
                if any(not (p >= 0) or not np.isfinite(p)
                       for p in n.chance_probs):
                    bad("chance", subj, "negative or non-finite chance probability")
                total = float(sum(n.chance_probs))
                if not abs(total - 1.0) <= PROB_SUM_TOL:
                    bad("chance", subj,
                        f"chance probabilities sum {total:.12g} != 1")
        else:
            if not (1 <= n.owner <= tree.num_players):
                bad("owner", subj, f"player index {n.owner} out of range "
                    f"[1, {tree.num_players}]")
            if n.chance_probs is not None:
                bad("chance", subj, "player node carries chance probabilities")
            if n.infoset is None or not (0 <= n.infoset < len(tree.infosets)):
                bad("infoset", subj, "player node not assigned to an infoset")

    # Partition: every player node in exactly one infoset member list.
    membership: dict[int, int] = {}
    for s in tree.infosets:
        subj = f"infoset {s.id}"
        if s.action_count < 1:
            bad("actions", subj, f"action_count {s.action_count} < 1")
        for m in s.member_nodes:
            if not (0 <= m < n_nodes):
                bad("members", subj, f"member node {m} out of range")
                continue
            node = tree.nodes[m]
            if node.owner != s.player:
                bad("members", subj,
                    f"member node {m} owned by {node.owner}, infoset owned by "
                    f"{s.player}")
            if len(node.actions) != s.action_count:
                bad("members", subj,
                    f"member node {m} has {len(node.actions)} actions, "
                    f"infoset expects {s.action_count}")
            if node.infoset != s.id:
                bad("members", subj, f"member node {m} points at infoset "
                    f"{node.infoset}")
            if m in membership:
                bad("partition", subj,
                    f"node {m} already belongs to infoset {membership[m]}")
            membership[m] = s.id
        # Perfect recall for the owner: all members share one parent sequence.
        seqs = {tree.own_parent_sequence(m, s.player)
                for m in s.member_nodes if 0 <= m < n_nodes}
        if len(seqs) > 1:
            bad("recall", subj,
                f"members disagree on the owner's parent sequence: {sorted(seqs, key=str)}")
    for n in tree.nodes:
        if not n.is_terminal and not n.is_chance and n.infoset is not None:
            if n.id not in membership:
                bad("partition", f"node {n.id}", "player node missing from every "
                    "infoset member list")

    # Reachability from the root (also catches parent-pointer cycles).
    if len(roots) == 1:
        unreachable = [n.id for n in tree.nodes if tree.node_depth[n.id] < 0]
        if unreachable:
            bad("reachability", "game",
                f"{len(unreachable)} nodes unreachable from root "
                f"(first: {unreachable[:5]})")

    if tree.infoset_order is None:
        bad("ancestry", "game", "infoset ancestry relation is cyclic")

    return out


def infoset_topological_order(tree: GameTree) -> list[int]:
    """Total order over infosets: ancestors first, ties by (min depth, id)."""
    if tree.infoset_order is None:
        raise CyclicInfosetsError("infoset ancestry relation is cyclic")
    return list(tree.infoset_order)


# -- behavioral profiles -----------------------------------------------


def uniform_profile(tree: GameTree) -> list[np.ndarray]:
    """One uniform simplex vector per infoset, indexed by infoset id."""
    return [np.full(s.action_count, 1.0 / s.action_count) for s in tree.infosets]


def random_profile(tree: GameTree, rng: np.random.Generator,
                   floor: float = 0.0) -> list[np.ndarray]:
    """Dirichlet-random profile; ``floor`` bounds probabilities away from 0."""
    prof = []
    for s in tree.infosets:
        v = rng.dirichlet(np.ones(s.action_count))
        if floor > 0.0:
            v = v * (1.0 - floor * s.action_count) + floor
        prof.append(v)
    return prof


def validate_profile(tree: GameTree, profile: Sequence[np.ndarray],
                     tol: float = PROB_SUM_TOL) -> list[str]:
    """Simplex check per infoset; returns human-readable problems."""
    problems = []
    if len(profile) < len(tree.infosets):
        return [f"profile covers {len(profile)} of {len(tree.infosets)} infosets"]
    for s in tree.infosets:
        v = np.asarray(profile[s.id], dtype=float)
        if v.shape != (s.action_count,):
            problems.append(f"infoset {s.id}: shape {v.shape} != ({s.action_count},)")
            continue
        if np.any(v < -tol):
            problems.append(f"infoset {s.id}: negative probability {v.min():.3g}")
        if abs(float(v.sum()) - 1.0) > tol:
            problems.append(f"infoset {s.id}: probabilities sum {v.sum():.12g}")
    return problems


# -- reach probabilities and sequence form -------------------------------

_SCOPES = ("own", "others", "all")


def reach_probability(tree: GameTree, profile: Sequence[np.ndarray],
                      node_id: int, scope: str = "all",
                      player: int | None = None) -> float:
    """Product of action probabilities along root -> node, restricted by scope.

    ``own``: only edges where ``player`` acts.  ``others``: every edge except
    ``player``'s, chance included.  ``all``: every edge.
    """
    if scope not in _SCOPES:
        raise ValueError(f"scope must be one of {_SCOPES}, got {scope!r}")
    if scope != "all" and player is None:
        raise ValueError(f"scope {scope!r} needs a player")
    prob = 1.0
    cur = tree.nodes[node_id].parent
    while cur is not None:
        pid, aidx = cur
        parent = tree.nodes[pid]
        if parent.is_chance:
            p = parent.chance_probs[aidx]
            counted = scope in ("all", "others")
        else:
            p = float(profile[parent.infoset][aidx])
            if scope == "all":
                counted = True
            elif scope == "own":
                counted = parent.owner == player
            else:
                counted = parent.owner != player
        if counted:
            prob *= p
        cur = parent.parent
    return prob


def sequence_form(tree: GameTree, profile: Sequence[np.ndarray],
                  player: int) -> dict[tuple[int, int], float]:
    """Sequence-form strategy: own reach to each infoset times the action prob."""
    if tree.infoset_order is None:
        raise CyclicInfosetsError("infoset ancestry relation is cyclic")
    inf_reach: dict[int, float] = {}
    seq: dict[tuple[int, int], float] = {}
    for sid in tree.infoset_order:
        s = tree.infosets[sid]
        if s.player != player:
            continue
        if s.parent_sequence is None:
            reach = 1.0
        else:
            psid, paidx = s.parent_sequence
            reach = seq[(psid, paidx)]
        inf_reach[sid] = reach
        for a in range(s.action_count):
            seq[(sid, a)] = reach * float(profile[sid][a])
    return seq
