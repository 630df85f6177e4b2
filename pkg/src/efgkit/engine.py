"""Execution engine: binds a game tree to a computation graph.

The graph template is replicated across infosets; execution batches each
graph step over whole layers of the infoset ancestry DAG (an antichain at a
time), which is observationally identical to the sequential
reverse/forward-topological order because cross-infoset reads only happen
through ``aggregate``.  Counterfactual utilities come from one of three
traversals: full enumeration (vectorized sweeps over depth-sorted node
arrays), external sampling, or outcome sampling.

Full-enumeration updates run a compiled program: each (step, layer) pair is
specialized once at ``set_graph`` into a closure over preallocated storage
views, so the per-iteration cost is a flat sequence of numpy calls.  Sampled
updates and instrumented runs use the generic interpreter on the touched row
subsets instead.

One Environment is single-threaded; several Environments may share one
immutable GameTree.
"""

from __future__ import annotations

import numpy as np

from ._kernels import NUMBA_AVAILABLE, enumerate_builtins_kernel
from .graph import (SCALAR, VECTOR, ComputationGraph, DomainError, GraphError,
                    OpSpec, Phase, ShapeMismatchError)
from .model import GameTree, validate_game

TRAVERSALS = ("enumerate", "external", "outcome")
STRATEGY_TOL = 1e-6
OUTCOME_EXPLORATION = 0.01  # sampling-policy floor; never mixed into the strategy

AVG_ITERATE = "avg-iterate"
LAST_ITERATE = "last-iterate"


class EngineError(Exception):
    pass


class InvalidStrategyError(EngineError):
    pass


class _TreeIndex:
    """Depth-sorted node arrays for vectorized reach and value sweeps."""

    def __init__(self, tree: GameTree, row_of_infoset: np.ndarray, max_actions: int):
        n = len(tree.nodes)
        order = sorted(range(n), key=lambda nid: (tree.node_depth[nid], nid))
        self.pos_of = np.empty(n, dtype=np.int64)
        for pos, nid in enumerate(order):
            self.pos_of[nid] = pos
        self.node_at = np.array(order, dtype=np.int64)

        depth = np.array([tree.node_depth[nid] for nid in order])
        self.n_levels = int(depth.max()) + 1 if n else 0
        self.level_slices = [slice(int(np.searchsorted(depth, d)),
                                   int(np.searchsorted(depth, d, side="right")))
                             for d in range(self.n_levels)]

        self.owner = np.array([tree.nodes[nid].owner for nid in order],
                              dtype=np.int64)
        self.is_terminal_pos = self.owner == -1
        self.term_pos = np.nonzero(self.is_terminal_pos)[0]
        self.term_payoffs = np.zeros((tree.num_players, len(self.term_pos)))
        for col, pos in enumerate(self.term_pos):
            self.term_payoffs[:, col] = tree.nodes[self.node_at[pos]].payoffs
        self.term_payoff_dense = np.zeros((tree.num_players, n))
        self.term_payoff_dense[:, self.term_pos] = self.term_payoffs

        # Flat per-position edge arrays (the edge leading into each position):
        # acting parent player (0 for chance/root) and the flat strategy index
        # row(parent infoset) * maxA + action, which doubles as the utility
        # scatter target.
        self.flat_parent_pos = np.zeros(n, dtype=np.int64)
        self.edge_player = np.zeros(n, dtype=np.int64)
        self.edge_flat_idx = np.zeros(n, dtype=np.int64)
        for pos in range(n):
            node = tree.nodes[self.node_at[pos]]
            if node.parent is None:
                continue
            pid, aidx = node.parent
            parent = tree.nodes[pid]
            self.flat_parent_pos[pos] = self.pos_of[pid]
            if not parent.is_chance:
                self.edge_player[pos] = parent.owner
                self.edge_flat_idx[pos] = (
                    int(row_of_infoset[parent.infoset]) * max_actions + aidx)

        # Per player: 0 where the player owns the node (its value is blocked
        # from flowing upward past the decision), 1 elsewhere.
        self.pass_through = np.ones((tree.num_players, n))
        for j in range(tree.num_players):
            self.pass_through[j, self.owner == j + 1] = 0.0

        # Per level >= 1: parents (as local indices in the parent level) and
        # chance edge factors for the children slice.
        self.parent_pos: list[np.ndarray] = [np.empty(0, dtype=np.int64)]
        self.parent_local: list[np.ndarray] = [np.empty(0, dtype=np.int64)]
        self.chance_factor: list[np.ndarray] = [np.empty(0)]
        self.player_edges: list[list[tuple[np.ndarray, np.ndarray]]] = [[]]
        for lvl in range(1, self.n_levels):
            sl = self.level_slices[lvl]
            parent_start = self.level_slices[lvl - 1].start
            pp, cf = [], []
            per_player: list[tuple[list[int], list[int]]] = [
                ([], []) for _ in range(tree.num_players)]
            for local, pos in enumerate(range(sl.start, sl.stop)):
                node = tree.nodes[self.node_at[pos]]
                pid, aidx = node.parent
                parent = tree.nodes[pid]
                pp.append(self.pos_of[pid])
                if parent.is_chance:
                    cf.append(parent.chance_probs[aidx])
                else:
                    cf.append(1.0)
                    sel, idx = per_player[parent.owner - 1]
                    sel.append(local)
                    idx.append(int(row_of_infoset[parent.infoset]) * max_actions
                               + aidx)
            self.parent_pos.append(np.array(pp, dtype=np.int64))
            self.parent_local.append(self.parent_pos[-1] - parent_start)
            self.chance_factor.append(np.array(cf))
            self.player_edges.append(
                [(np.array(sel, dtype=np.int64), np.array(idx, dtype=np.int64))
                 for sel, idx in per_player])

        # Static chance-only reach.
        self.chance_reach = np.ones(n)
        for lvl in range(1, self.n_levels):
            sl = self.level_slices[lvl]
            self.chance_reach[sl] = (self.chance_reach[self.parent_pos[lvl]]
                                     * self.chance_factor[lvl])

        # Children of player-owned parents: scatter targets for the utility
        # built-in of the owning player's infosets.
        self.util_child_pos: list[np.ndarray] = []
        self.util_flat_idx: list[np.ndarray] = []
        for player in range(1, tree.num_players + 1):
            cps, idxs = [], []
            for nid in range(n):
                node = tree.nodes[nid]
                if node.parent is None:
                    continue
                pid, aidx = node.parent
                parent = tree.nodes[pid]
                if parent.owner == player:
                    cps.append(self.pos_of[nid])
                    idxs.append(int(row_of_infoset[parent.infoset]) * max_actions
                                + aidx)
            self.util_child_pos.append(np.array(cps, dtype=np.int64))
            self.util_flat_idx.append(np.array(idxs, dtype=np.int64))


class _InfosetIndex:
    """Layered infoset rows: contiguous antichains of the ancestry DAG."""

    def __init__(self, tree: GameTree):
        n = len(tree.infosets)
        self.n = n
        self.max_actions = max((s.action_count for s in tree.infosets), default=1)

        edges = tree.infoset_ancestry_edges()
        layer = [0] * n
        for sid in tree.infoset_order:
            for dst in edges[sid]:
                layer[dst] = max(layer[dst], layer[sid] + 1)
        order = sorted(range(n), key=lambda sid: (layer[sid],
                                                  tree.infosets[sid].depth))
        self.row_of = np.empty(n, dtype=np.int64)
        for row, sid in enumerate(order):
            self.row_of[sid] = row
        self.infoset_at = np.array(order, dtype=np.int64)

        lay = np.array([layer[sid] for sid in order], dtype=np.int64)
        self.n_layers = int(lay.max()) + 1 if n else 0
        self.layer_slices = [slice(int(np.searchsorted(lay, d)),
                                   int(np.searchsorted(lay, d, side="right")))
                             for d in range(self.n_layers)]

        self.action_count = np.array(
            [tree.infosets[sid].action_count for sid in order], dtype=np.int64)
        self.mask = np.zeros((n, self.max_actions), dtype=bool)
        for row in range(n):
            self.mask[row, :self.action_count[row]] = True
        self.mask_f = self.mask.astype(float)
        self.uniform = self.mask_f / np.maximum(self.action_count, 1)[:, None]
        self.player = np.array([tree.infosets[sid].player for sid in order],
                               dtype=np.int64)

        # Own parent sequences, in row space.
        self.parent_row = np.full(n, -1, dtype=np.int64)
        self.parent_act = np.zeros(n, dtype=np.int64)
        for sid, s in enumerate(tree.infosets):
            if s.parent_sequence is not None:
                ps, pa = s.parent_sequence
                self.parent_row[self.row_of[sid]] = self.row_of[ps]
                self.parent_act[self.row_of[sid]] = pa

        # Sequence-depth levels for own-reach recursions.
        seq_depth = np.zeros(n, dtype=np.int64)
        for sid in tree.infoset_order:
            s = tree.infosets[sid]
            if s.parent_sequence is not None:
                seq_depth[self.row_of[sid]] = (
                    seq_depth[self.row_of[s.parent_sequence[0]]] + 1)
        self.seq_levels: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        for d in range(int(seq_depth.max()) + 1 if n else 0):
            rows = np.nonzero(seq_depth == d)[0]
            prow = self.parent_row[rows]
            self.seq_levels.append(
                (rows, prow, prow * self.max_actions + self.parent_act[rows]))


class Environment:
    """Owns the per-infoset variable storage and runs the four phases.

    ``traversal`` picks how counterfactual utilities are computed each update:
    ``enumerate`` (exact), ``external`` (one player's alternating sampled
    walk), or ``outcome`` (single importance-weighted trajectory).
    """

    def __init__(self, tree: GameTree, traversal: str = "enumerate",
                 seed: int = 0, accelerate: bool | None = None):
        violations = validate_game(tree)
        if violations:
            raise EngineError("tree fails validation: "
                              + "; ".join(str(v) for v in violations[:3]))
        if traversal not in TRAVERSALS:
            raise EngineError(f"traversal must be one of {TRAVERSALS}")
        self.tree = tree
        self.traversal = traversal
        self.rng_seed = seed
        self.rng = np.random.default_rng(seed)
        self.iteration = 0
        self.accelerated = NUMBA_AVAILABLE if accelerate is None else accelerate
        if self.accelerated and not NUMBA_AVAILABLE:
            raise EngineError("accelerate=True requires numba")

        self.infosets = _InfosetIndex(tree)
        self.nodes = _TreeIndex(tree, self.infosets.row_of,
                                self.infosets.max_actions)
        self.graph: ComputationGraph | None = None
        self.storage: list[np.ndarray] = []

        n, m, p = self.infosets.n, self.infosets.max_actions, tree.num_players
        n_pos = len(tree.nodes)
        self._util_flat = np.zeros(n * m)
        self._util = self._util_flat.reshape(n, m)
        self._reach = np.ones(n)
        self._builtins: dict[str, np.ndarray] = {
            "action_set_size": self.infosets.action_count.astype(float),
            "utility": self._util,
            "reach_prob": self._reach,
        }
        self._own = np.ones((p, n_pos))
        self._others = np.ones((p, n_pos))
        self._values = np.zeros((p, n_pos))
        self._seq = np.ones(n)
        self._sums = np.zeros(n)
        self._scratch2d = np.zeros((n, m))

        self.avg_accumulator = np.zeros((n, m))
        self._avg_updates = 0
        self._children_maps: dict[str, dict[tuple[int, int], list[int]]] = {}
        self._agg_cache: dict = {}
        self._program: dict[Phase, list] = {}
        self.trace: list[tuple[str, int, int]] | None = None

    # -- graph loading ----------------------------------------------------

    def set_graph(self, graph: ComputationGraph) -> None:
        """Allocate storage, compile the dense program, run static phases."""
        self.graph = graph
        n, m = self.infosets.n, self.infosets.max_actions
        self.storage = [np.zeros(n) if shape == SCALAR else np.zeros((n, m))
                        for shape in graph.shapes]
        self.iteration = 0
        self.avg_accumulator[:] = 0.0
        self._avg_updates = 0
        self._program = {phase: self._compile_phase(phase) for phase in Phase}

        if (graph.uses_builtin("utility", static=True)
                or graph.uses_builtin("reach_prob", static=True)):
            # Static phases see built-ins computed from the uniform profile.
            self._enumerate_builtins(self.infosets.uniform)
            self._sequence_reach_into(self.infosets.uniform, self._reach)
        self._run_phase(Phase.STATIC_BACKWARD, touched=None)
        self._run_phase(Phase.STATIC_FORWARD, touched=None)

    # -- public reads -----------------------------------------------------

    def variable(self, node_id: int, infoset_id: int) -> np.ndarray:
        """Current value of one graph node at one infoset (valid lanes only)."""
        row = self.infosets.row_of[infoset_id]
        arr = self.storage[node_id]
        if arr.ndim == 1:
            return np.array([arr[row]])
        return arr[row, :self.infosets.action_count[row]].copy()

    def strategy_rows(self, node_id: int) -> np.ndarray:
        if self.graph is None:
            raise EngineError("set_graph has not been called")
        arr = self.storage[node_id]
        if arr.ndim != 2:
            raise InvalidStrategyError(
                f"graph node {node_id} holds scalars, not action vectors")
        return arr

    def current_profile(self, strategy_node: int,
                        mode: str = LAST_ITERATE) -> list[np.ndarray]:
        """Behavioral profile in infoset-id order (avg normalizes accumulators)."""
        inf = self.infosets
        if mode == LAST_ITERATE:
            rows = self.strategy_rows(strategy_node)
        elif mode == AVG_ITERATE:
            mass = self.avg_accumulator.sum(axis=1)
            safe = np.where(mass > 0.0, mass, 1.0)
            rows = np.where((mass > 0.0)[:, None],
                            self.avg_accumulator / safe[:, None], inf.uniform)
        else:
            raise EngineError(f"mode must be {AVG_ITERATE!r} or {LAST_ITERATE!r}")
        return [rows[inf.row_of[sid], :inf.action_count[inf.row_of[sid]]].copy()
                for sid in range(inf.n)]

    # -- update -----------------------------------------------------------

    def update(self, strategy_node: int) -> None:
        """One dynamic pass: built-ins, backward layers, forward layers."""
        if self.graph is None:
            raise EngineError("set_graph has not been called")
        strat = self.strategy_rows(strategy_node)
        self._check_strategy(strat)

        need_reach = self.graph.uses_builtin("reach_prob", static=False)
        if self.traversal == "enumerate":
            touched = None
            self._enumerate_builtins(strat)
        elif self.traversal == "external":
            player = self.iteration % self.tree.num_players + 1
            touched = self._external_builtins(strat, player)
        else:
            touched = self._outcome_builtins(strat)
        if need_reach:
            self._sequence_reach_into(strat, self._reach)

        self._run_phase(Phase.DYNAMIC_BACKWARD, touched)
        self._run_phase(Phase.DYNAMIC_FORWARD, touched)
        self.iteration += 1

    def _check_strategy(self, strat: np.ndarray) -> None:
        inf = self.infosets
        np.multiply(strat, inf.mask_f, out=self._scratch2d)
        sums = self._scratch2d.sum(axis=1)
        bad = np.abs(sums - 1.0) > STRATEGY_TOL
        if not np.any(bad):
            neg = self._scratch2d.min(axis=1)
            bad = neg < -STRATEGY_TOL
            if not np.any(bad):
                return
        row = int(np.argmax(bad))
        sid = int(inf.infoset_at[row])
        name = self.tree.infosets[sid].name or str(sid)
        raise InvalidStrategyError(
            f"strategy at infoset {name!r} (id {sid}) is not a simplex vector: "
            f"sum={sums[row]:.9g}")

    # -- averaged sequence-form strategy -----------------------------------

    def _sequence_reach_into(self, strat: np.ndarray, out: np.ndarray) -> None:
        flat = strat.ravel()
        for rows, prow, pidx in self.infosets.seq_levels:
            if len(rows) and prow[0] >= 0:
                out[rows] = out[prow] * flat[pidx]
            else:
                out[rows] = 1.0

    def sequence_reach(self, strat: np.ndarray) -> np.ndarray:
        """Own reach probability to each infoset row under ``strat``."""
        out = np.ones(self.infosets.n)
        self._sequence_reach_into(strat, out)
        return out

    def update_strategy(self, strategy_node: int, mode: str = AVG_ITERATE) -> None:
        """Accumulate the sequence-form strategy of the current iterate."""
        strat = self.strategy_rows(strategy_node)
        inf = self.infosets
        self._sequence_reach_into(strat, self._seq)
        np.multiply(strat, inf.mask_f, out=self._scratch2d)
        self._scratch2d *= self._seq[:, None]
        if mode == AVG_ITERATE:
            self.avg_accumulator += self._scratch2d
        elif mode == LAST_ITERATE:
            np.copyto(self.avg_accumulator, self._scratch2d)
        else:
            raise EngineError(f"mode must be {AVG_ITERATE!r} or {LAST_ITERATE!r}")
        self._avg_updates += 1

    # -- built-ins: enumerate ----------------------------------------------

    def _enumerate_builtins(self, strat: np.ndarray) -> None:
        """Exact counterfactual utilities for every (infoset, action), in place."""
        nodes = self.nodes
        p = self.tree.num_players
        flat = strat.ravel()
        own, others, values = self._own, self._others, self._values

        if self.accelerated and len(self.tree.nodes) > 1:
            enumerate_builtins_kernel(
                flat, nodes.flat_parent_pos, nodes.edge_player,
                nodes.edge_flat_idx, nodes.owner, nodes.chance_reach,
                nodes.is_terminal_pos, nodes.term_payoff_dense, p,
                own, others, values, self._util_flat)
            return

        own[:, :1] = 1.0
        for lvl in range(1, nodes.n_levels):
            sl = nodes.level_slices[lvl]
            np.take(own, nodes.parent_pos[lvl], axis=1, out=own[:, sl])
            for j in range(p):
                sel, idx = nodes.player_edges[lvl][j]
                if len(sel):
                    own[j, sl.start + sel] *= flat[idx]

        for i in range(p):
            np.copyto(others[i], nodes.chance_reach)
            for j in range(p):
                if j != i:
                    others[i] *= own[j]

        values.fill(0.0)
        values[:, nodes.term_pos] = nodes.term_payoffs * others[:, nodes.term_pos]
        for lvl in range(nodes.n_levels - 1, 0, -1):
            sl = nodes.level_slices[lvl]
            psl = nodes.level_slices[lvl - 1]
            contrib = values[:, sl] * nodes.pass_through[:, sl]
            for j in range(p):
                values[j, psl] += np.bincount(nodes.parent_local[lvl],
                                              weights=contrib[j],
                                              minlength=psl.stop - psl.start)

        self._util_flat.fill(0.0)
        for j in range(p):
            cpos = nodes.util_child_pos[j]
            if len(cpos):
                contrib = values[j, cpos] * nodes.pass_through[j, cpos]
                self._util_flat += np.bincount(nodes.util_flat_idx[j],
                                               weights=contrib,
                                               minlength=len(self._util_flat))

    # -- built-ins: external sampling ---------------------------------------

    def _sample_index(self, probs, rng) -> int:
        x = rng.random()
        acc = 0.0
        for i, pr in enumerate(probs):
            acc += pr
            if x < acc:
                return i
        return len(probs) - 1

    def _external_builtins(self, strat: np.ndarray, player: int) -> np.ndarray:
        tree, inf = self.tree, self.infosets
        self._util.fill(0.0)
        util = self._util
        touched = np.zeros(inf.n, dtype=bool)
        rng = self.rng

        def descend(nid: int) -> float:
            node = tree.nodes[nid]
            if node.is_terminal:
                return node.payoffs[player - 1]
            if node.owner == player:
                visit_own(nid)
                return 0.0
            if node.is_chance:
                a = self._sample_index(node.chance_probs, rng)
            else:
                row = inf.row_of[node.infoset]
                a = self._sample_index(strat[row, :inf.action_count[row]], rng)
            return descend(tree.children[nid][a])

        def visit_own(nid: int) -> None:
            node = tree.nodes[nid]
            row = inf.row_of[node.infoset]
            touched[row] = True
            for a in range(len(node.actions)):
                util[row, a] += descend(tree.children[nid][a])

        descend(tree.root)
        return touched

    # -- built-ins: outcome sampling ------------------------------------------

    def _outcome_builtins(self, strat: np.ndarray) -> np.ndarray:
        tree, inf = self.tree, self.infosets
        self._util.fill(0.0)
        touched = np.zeros(inf.n, dtype=bool)
        rng = self.rng
        eps = OUTCOME_EXPLORATION

        path: list[tuple[int, int, float, float]] = []  # (node, action, p, q)
        nid = tree.root
        node = tree.nodes[nid]
        while not node.is_terminal:
            if node.is_chance:
                a = self._sample_index(node.chance_probs, rng)
                p = q = node.chance_probs[a]
            else:
                row = inf.row_of[node.infoset]
                count = int(inf.action_count[row])
                probs = strat[row, :count]
                sample = (1.0 - eps) * probs + eps / count
                a = self._sample_index(sample, rng)
                p, q = float(probs[a]), float(sample[a])
                touched[row] = True
            path.append((nid, a, p, q))
            nid = tree.children[nid][a]
            node = tree.nodes[nid]

        payoffs = node.payoffs
        q_total = 1.0
        for _, _, _, q in path:
            q_total *= q
        # Last decision of each player on the path gets the terminal estimate;
        # shallower ones receive value through the child-expectation aggregate.
        last: dict[int, tuple[int, int]] = {}
        for pnid, a, _, _ in path:
            owner = tree.nodes[pnid].owner
            if owner > 0:
                last[owner] = (pnid, a)
        for player, (pnid, pa) in last.items():
            others = 1.0
            for nid2, _, pr, _ in path:
                if tree.nodes[nid2].owner != player:
                    others *= pr
            row = inf.row_of[tree.nodes[pnid].infoset]
            self._util[row, pa] = payoffs[player - 1] * others / q_total
        return touched

    # -- aggregate children maps ------------------------------------------------

    def children_map(self, scope: str) -> dict[tuple[int, int], list[int]]:
        """(infoset, action) -> first-reached child infosets for the scope.

        ``self``: infosets whose own parent sequence is (infoset, action).
        ``opponents``: for each other player, their first infosets reached
        below the action with no intermediate node of that same player.
        """
        if scope in self._children_maps:
            return self._children_maps[scope]
        tree = self.tree
        out: dict[tuple[int, int], list[int]] = {}
        if scope == "self":
            for s in tree.infosets:
                if s.parent_sequence is not None:
                    out.setdefault(s.parent_sequence, []).append(s.id)
        else:
            for s in tree.infosets:
                for h in s.member_nodes:
                    for aidx in range(s.action_count):
                        found = out.setdefault((s.id, aidx), [])
                        stack = [(tree.children[h][aidx], frozenset())]
                        while stack:
                            nid, seen = stack.pop()
                            node = tree.nodes[nid]
                            if node.is_terminal:
                                continue
                            if node.is_chance:
                                stack.extend((c, seen) for c in tree.children[nid])
                                continue
                            j = node.owner
                            nxt = seen
                            if j != s.player and j not in seen:
                                if node.infoset not in found:
                                    found.append(node.infoset)
                                nxt = seen | {j}
                            stack.extend((c, nxt) for c in tree.children[nid])
        for key in out:
            out[key] = sorted(set(out[key]))
        self._children_maps[scope] = out
        return out

    def _agg_layer_index(self, scope: str, layer: int, src_shape: str):
        """Flat gather/scatter arrays for children aggregation over one layer."""
        key = (scope, layer, src_shape)
        if key in self._agg_cache:
            return self._agg_cache[key]
        inf = self.infosets
        cmap = self.children_map(scope)
        sl = inf.layer_slices[layer]
        seg, srows, scols = [], [], []
        for row in range(sl.start, sl.stop):
            sid = int(inf.infoset_at[row])
            for a in range(int(inf.action_count[row])):
                for child in cmap.get((sid, a), ()):
                    crow = int(inf.row_of[child])
                    local = (row - sl.start) * inf.max_actions + a
                    if src_shape == SCALAR:
                        seg.append(local)
                        srows.append(crow)
                    else:
                        for ca in range(int(inf.action_count[crow])):
                            seg.append(local)
                            srows.append(crow)
                            scols.append(ca)
        idx = (np.array(seg, dtype=np.int64), np.array(srows, dtype=np.int64),
               np.array(scols, dtype=np.int64) if src_shape == VECTOR else None)
        self._agg_cache[key] = idx
        return idx

    # -- compiled dense program -----------------------------------------------

    def _compile_phase(self, phase: Phase) -> list:
        """One closure per (layer, step), in execution order for the phase."""
        steps = self.graph.steps_by_phase[phase]
        if not steps:
            return []
        inf = self.infosets
        layers = (range(inf.n_layers - 1, -1, -1) if phase.is_backward
                  else range(inf.n_layers))
        program = []
        for layer in layers:
            sl = inf.layer_slices[layer]
            if sl.start == sl.stop:
                continue
            for st in steps:
                program.append(self._compile_step(st, sl, layer))
        return program

    def _compile_step(self, st, sl: slice, layer: int):
        op: OpSpec = st.op
        k = op.kind
        shapes = self.graph.shapes
        out = self.storage[st.target]
        out_view = out[sl]
        want2d = out.ndim == 2
        r = sl.stop - sl.start
        maskf = self.infosets.mask_f[sl]

        def interp():
            # Generic fallback: ops with error paths or odd shape combos.
            self._store(st.target, sl, self._eval_rows(op, sl, layer, None))

        def view(x, lift: bool):
            arr = self.storage[x]
            v = arr[sl]
            return v[:, None] if lift and arr.ndim == 1 else v

        if k == "const_scalar" or k == "const_vector":
            v = op.operands[0]
            if k == "const_vector" and not want2d:
                return interp
            return lambda: out_view.fill(v)
        if k == "builtin":
            src = self._builtins.get(op.builtin)
            if src is None:
                return interp
            sview = src[sl]
            if src.ndim == out.ndim:
                return lambda: np.copyto(out_view, sview)
            if src.ndim == 1 and out.ndim == 2:
                lifted = src[sl][:, None]
                return lambda: np.copyto(out_view, lifted)
            return interp
        if k == "copy":
            sarr = self.storage[op.operands[0]]
            if sarr.ndim == out.ndim:
                sview = sarr[sl]
                return lambda: np.copyto(out_view, sview)
            if sarr.ndim == 1 and out.ndim == 2:
                lifted = sarr[sl][:, None]
                return lambda: np.copyto(out_view, lifted)
            return interp
        if k in ("add", "sub", "mul"):
            ufunc = {"add": np.add, "sub": np.subtract, "mul": np.multiply}[k]
            a, b = op.operands
            av = view(a, want2d) if isinstance(a, int) else a
            bv = view(b, want2d) if isinstance(b, int) else b
            return lambda: ufunc(av, bv, out=out_view)
        if k in ("maximum", "minimum"):
            ufunc = np.maximum if k == "maximum" else np.minimum
            av = view(op.operands[0], want2d)
            c = op.operands[1]
            return lambda: ufunc(av, c, out=out_view)
        if k == "exp":
            av = view(op.operands[0], want2d)
            return lambda: np.exp(av, out=out_view)
        if k == "dot":
            a_arr = self.storage[op.operands[0]]
            b_arr = self.storage[op.operands[1]]
            if a_arr.ndim == 2 and b_arr.ndim == 2 and out.ndim == 1:
                av, bv = a_arr[sl], b_arr[sl]
                w = np.empty_like(av)

                def dot_step():
                    np.multiply(av, bv, out=w)
                    np.multiply(w, maskf, out=w)
                    np.sum(w, axis=1, out=out_view)
                return dot_step
            return interp
        if k == "reduce_sum" and self.storage[op.operands[0]].ndim == 2 \
                and out.ndim == 1:
            av = self.storage[op.operands[0]][sl]
            w = np.empty_like(av)

            def rsum_step():
                np.multiply(av, maskf, out=w)
                np.sum(w, axis=1, out=out_view)
            return rsum_step
        if k == "normalize" and op.ignore_negative \
                and self.storage[op.operands[0]].ndim == 2 and out.ndim == 2:
            av = self.storage[op.operands[0]][sl]
            w = np.empty_like(av)
            tot = np.empty(r)
            uniform = self.infosets.uniform[sl]

            def norm_step():
                np.maximum(av, 0.0, out=w)
                np.multiply(w, maskf, out=w)
                np.sum(w, axis=1, out=tot)
                if np.all(tot > 0.0):
                    np.divide(w, tot[:, None], out=out_view)
                else:
                    safe = np.where(tot > 0.0, tot, 1.0)
                    np.copyto(out_view, np.where((tot > 0.0)[:, None],
                                                 w / safe[:, None], uniform))
            return norm_step
        if k == "aggregate" and op.object_name == "children":
            src = self.storage[op.operands[0]]
            src_shape = SCALAR if src.ndim == 1 else VECTOR
            seg, srows, scols = self._agg_layer_index(op.player_scope, layer,
                                                      src_shape)
            size = r * self.infosets.max_actions
            padding = op.operands[1]
            if op.aggregator == "sum" and out.ndim == 2:
                if len(seg) == 0:
                    if padding == 0.0:
                        return lambda: out_view.fill(0.0)
                    empty = np.full((r, self.infosets.max_actions), padding)
                    return lambda: np.copyto(out_view, empty)
                cnt = np.bincount(seg, minlength=size)
                empty_seg = cnt == 0
                any_empty = bool(empty_seg.any()) and padding != 0.0

                def agg_step():
                    vals = src[srows] if scols is None else src[srows, scols]
                    agg = np.bincount(seg, weights=vals, minlength=size)
                    if any_empty:
                        agg[empty_seg] = padding
                    np.copyto(out_view, agg.reshape(r, -1))
                return agg_step
            return interp
        if k == "aggregate" and op.object_name == "parent":
            src = self.storage[op.operands[0]]
            prow = self.infosets.parent_row[sl]
            pact = self.infosets.parent_act[sl]
            has = prow >= 0
            safe = np.where(has, prow, 0)
            padding = op.operands[1]
            if out.ndim == 1:
                if src.ndim == 1:
                    def pagg_step():
                        vals = src[safe]
                        vals[~has] = padding
                        np.copyto(out_view, vals)
                else:
                    def pagg_step():
                        vals = src[safe, pact]
                        vals[~has] = padding
                        np.copyto(out_view, vals)
                return pagg_step
            return interp
        return interp

    # -- step execution ------------------------------------------------------

    def _run_phase(self, phase: Phase, touched: np.ndarray | None) -> None:
        if touched is None and self.trace is None:
            for fn in self._program[phase]:
                fn()
            return
        steps = self.graph.steps_by_phase[phase]
        if not steps:
            return
        inf = self.infosets
        layers = range(inf.n_layers - 1, -1, -1) if phase.is_backward \
            else range(inf.n_layers)
        for layer in layers:
            sl = inf.layer_slices[layer]
            if touched is None:
                if sl.start == sl.stop:
                    continue
                rows: slice | np.ndarray = sl
            else:
                rows = np.nonzero(touched[sl])[0] + sl.start
                if not len(rows):
                    continue
            for st in steps:
                try:
                    value = self._eval_rows(st.op, rows, layer, touched)
                except (DomainError, ShapeMismatchError) as e:
                    raise type(e)(f"{phase.token} step {st.seq} "
                                  f"(node {st.target}): {e}") from e
                self._store(st.target, rows, value)
                if self.trace is not None:
                    for row in (range(sl.start, sl.stop)
                                if isinstance(rows, slice) else rows):
                        self.trace.append((phase.token, st.seq,
                                           int(inf.infoset_at[row])))

    def _store(self, target: int, rows, value) -> None:
        arr = self.storage[target]
        value = np.asarray(value)
        if arr.ndim == 2 and value.ndim == 1:
            arr[rows] = value[:, None]  # scalar result into vector storage
        else:
            arr[rows] = value

    def _fetch(self, operand, rows):
        if isinstance(operand, int):
            return self.storage[operand][rows]
        return operand  # scalar literal

    def _first_bad_infoset(self, rows, bad_mask: np.ndarray) -> str:
        idx = np.nonzero(bad_mask)[0]
        pos = (rows.start + int(idx[0])) if isinstance(rows, slice) \
            else int(rows[int(idx[0])])
        sid = int(self.infosets.infoset_at[pos])
        return f"infoset {self.tree.infosets[sid].name or sid!r} (id {sid})"

    def _eval_rows(self, op: OpSpec, rows, layer: int,
                   touched: np.ndarray | None) -> np.ndarray:
        inf = self.infosets
        n_rows = (rows.stop - rows.start) if isinstance(rows, slice) else len(rows)
        mask = inf.mask_f[rows]
        k = op.kind

        if k == "const_scalar":
            return np.full(n_rows, op.operands[0])
        if k == "const_vector":
            return np.full((n_rows, inf.max_actions), op.operands[0])
        if k == "builtin":
            if op.builtin not in self._builtins:
                raise GraphError(f"builtin {op.builtin!r} is not available")
            return self._builtins[op.builtin][rows]
        if k == "copy":
            src = self.storage[op.operands[0]][rows]
            return src.copy() if isinstance(rows, slice) else src
        if k in ("add", "sub", "mul", "div"):
            a = self._fetch(op.operands[0], rows)
            b = self._fetch(op.operands[1], rows)
            a_vec = isinstance(a, np.ndarray) and a.ndim == 2
            b_vec = isinstance(b, np.ndarray) and b.ndim == 2
            if a_vec and not b_vec and isinstance(b, np.ndarray):
                b = b[:, None]
            if b_vec and not a_vec and isinstance(a, np.ndarray):
                a = a[:, None]
            if k == "add":
                return a + b
            if k == "sub":
                return a - b
            if k == "mul":
                return a * b
            if isinstance(b, np.ndarray):
                valid = mask.astype(bool) if b.ndim == 2 else np.ones(n_rows, bool)
                zero = (b == 0.0) & valid
                if np.any(zero):
                    where = zero if zero.ndim == 1 else zero.any(axis=1)
                    raise DomainError("division by zero at "
                                      + self._first_bad_infoset(rows, where))
                b = np.where(valid, b, 1.0) if b.ndim == 2 else b
            elif b == 0.0:
                raise DomainError("division by zero literal")
            return a / b
        if k in ("maximum", "minimum"):
            a = self.storage[op.operands[0]][rows]
            return np.maximum(a, op.operands[1]) if k == "maximum" \
                else np.minimum(a, op.operands[1])
        if k == "exp":
            return np.exp(self.storage[op.operands[0]][rows])
        if k == "log":
            a = self.storage[op.operands[0]][rows]
            valid = mask.astype(bool) if a.ndim == 2 else np.ones(n_rows, bool)
            bad = (a <= 0.0) & valid
            if np.any(bad):
                where = bad if bad.ndim == 1 else bad.any(axis=1)
                raise DomainError("log of non-positive value at "
                                  + self._first_bad_infoset(rows, where))
            return np.log(np.where(valid, a, 1.0) if a.ndim == 2 else a)
        if k == "pow":
            a = self.storage[op.operands[0]][rows]
            e = op.operands[1]
            if e != int(e):
                valid = mask.astype(bool) if a.ndim == 2 else np.ones(n_rows, bool)
                bad = (a < 0.0) & valid
                if np.any(bad):
                    where = bad if bad.ndim == 1 else bad.any(axis=1)
                    raise DomainError("fractional power of negative value at "
                                      + self._first_bad_infoset(rows, where))
                a = np.where(valid, a, 1.0) if a.ndim == 2 else a
            return np.power(a, e)
        if k in ("reduce_sum", "reduce_mean", "reduce_max", "reduce_min"):
            a = self.storage[op.operands[0]][rows]
            if a.ndim == 1:
                return a.copy()
            counts = inf.action_count[rows]
            if k == "reduce_sum":
                return (a * mask).sum(axis=1)
            if k == "reduce_mean":
                return (a * mask).sum(axis=1) / counts
            if k == "reduce_max":
                return np.where(mask.astype(bool), a, -np.inf).max(axis=1)
            return np.where(mask.astype(bool), a, np.inf).min(axis=1)
        if k == "dot":
            a = self.storage[op.operands[0]][rows]
            b = self.storage[op.operands[1]][rows]
            if a.ndim != b.ndim:
                raise ShapeMismatchError("dot of a scalar and a vector node")
            if a.ndim == 1:
                return a * b
            return (a * b * mask).sum(axis=1)
        if k == "normalize":
            a = self.storage[op.operands[0]][rows]
            if a.ndim == 1:
                if not op.ignore_negative and np.any(a <= 0.0):
                    raise DomainError("normalize of non-positive scalar at "
                                      + self._first_bad_infoset(rows, a <= 0.0))
                return np.ones(n_rows)
            boolmask = mask.astype(bool)
            if op.ignore_negative:
                w = np.maximum(a, 0.0) * mask
                total = w.sum(axis=1)
                safe = np.where(total > 0.0, total, 1.0)
                out = w / safe[:, None]
                fallback = total <= 0.0
                if np.any(fallback):
                    out[fallback] = inf.uniform[rows][fallback]
                return out
            bad = (a < 0.0) & boolmask
            if np.any(bad):
                raise DomainError("normalize of negative entries at "
                                  + self._first_bad_infoset(rows, bad.any(axis=1)))
            total = (a * mask).sum(axis=1)
            if np.any(total <= 0.0):
                raise DomainError("normalize of zero-sum vector at "
                                  + self._first_bad_infoset(rows, total <= 0.0))
            return (a * mask) / total[:, None]
        if k == "aggregate":
            return self._eval_aggregate_rows(op, rows, layer, touched)
        raise GraphError(f"unknown op kind {op.kind!r}")

    def _eval_aggregate_rows(self, op: OpSpec, rows, layer: int,
                             touched: np.ndarray | None) -> np.ndarray:
        inf = self.infosets
        src = self.storage[op.operands[0]]
        padding = op.operands[1]

        if op.object_name == "parent":
            prow = inf.parent_row[rows]
            has = prow >= 0
            safe = np.where(has, prow, 0)
            if src.ndim == 1:
                vals = src[safe]
            else:
                vals = src[safe, inf.parent_act[rows]]
            return np.where(has, vals, padding)

        sl = inf.layer_slices[layer]
        layer_len = sl.stop - sl.start
        src_shape = SCALAR if src.ndim == 1 else VECTOR
        seg, srows, scols = self._agg_layer_index(op.player_scope, layer,
                                                  src_shape)
        size = layer_len * inf.max_actions
        if len(seg) == 0:
            block = np.full((layer_len, inf.max_actions), padding)
        else:
            vals = src[srows] if scols is None else src[srows, scols]
            if touched is not None:
                w = touched[srows]
                cnt = np.bincount(seg, weights=w.astype(float), minlength=size)
            else:
                w = None
                cnt = np.bincount(seg, minlength=size).astype(float)
            if op.aggregator in ("sum", "mean"):
                if w is not None:
                    vals = np.where(w, vals, 0.0)
                agg = np.bincount(seg, weights=vals, minlength=size)
                if op.aggregator == "mean":
                    agg = agg / np.where(cnt > 0.0, cnt, 1.0)
            else:
                fill = -np.inf if op.aggregator == "max" else np.inf
                if w is not None:
                    vals = np.where(w, vals, fill)
                agg = np.full(size, fill)
                if op.aggregator == "max":
                    np.maximum.at(agg, seg, vals)
                else:
                    np.minimum.at(agg, seg, vals)
            block = np.where(cnt > 0.0, agg, padding).reshape(layer_len,
                                                              inf.max_actions)
        if isinstance(rows, slice):
            return block
        return block[rows - sl.start]

    # -- reference aggregate (single infoset) --------------------------------

    def evaluate_aggregate(self, infoset_id: int, op: OpSpec) -> np.ndarray:
        """Per-infoset reference path for the children/parent aggregation."""
        inf = self.infosets
        src = self.storage[op.operands[0]]
        padding = op.operands[1]
        s = self.tree.infosets[infoset_id]

        def var_at(sid: int) -> np.ndarray:
            row = inf.row_of[sid]
            if src.ndim == 1:
                return np.array([src[row]])
            return src[row, :inf.action_count[row]]

        if op.object_name == "parent":
            if s.parent_sequence is None:
                return np.array([padding])
            ps, pa = s.parent_sequence
            v = var_at(ps)
            return np.array([v[0] if len(v) == 1 else v[pa]])

        cmap = self.children_map(op.player_scope)
        out = np.empty(s.action_count)
        fns = {"sum": np.sum, "mean": np.mean, "max": np.max, "min": np.min}
        for a in range(s.action_count):
            vals = np.concatenate([var_at(c) for c in cmap.get((s.id, a), [])]
                                  or [np.empty(0)])
            out[a] = fns[op.aggregator](vals) if len(vals) else padding
        return out
