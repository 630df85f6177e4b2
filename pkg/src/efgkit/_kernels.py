"""Optional numba kernel for the exact counterfactual-utility sweep.

The engine falls back to the vectorized numpy path when numba is missing;
both implement the same recurrences (verified against each other in tests).
"""

from __future__ import annotations

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(**kwargs):
        def wrap(fn):
            return fn
        return wrap


@njit(cache=True)
def enumerate_builtins_kernel(flat_strat, parent_pos, edge_player,
                              edge_flat_idx, owner, chance_reach, is_terminal,
                              term_payoff, n_players, own, others, values,
                              util_flat):
    """Single sweep over depth-sorted node positions (parents precede children).

    ``edge_player``/``edge_flat_idx`` describe the edge into each position:
    the acting parent player (0 for chance) and the flat (infoset row, action)
    index, which doubles as the utility scatter target.  Fills ``own``
    (per-player reach), ``others`` (everybody-else reach), ``values``
    (truncated terminal sums: a player's own nodes block upward flow) and the
    flat utility built-in.
    """
    n = owner.shape[0]
    for j in range(n_players):
        own[j, 0] = 1.0
    for pos in range(1, n):
        pp = parent_pos[pos]
        for j in range(n_players):
            own[j, pos] = own[j, pp]
        ep = edge_player[pos]
        if ep > 0:
            own[ep - 1, pos] *= flat_strat[edge_flat_idx[pos]]

    for i in range(n_players):
        for pos in range(n):
            o = chance_reach[pos]
            for j in range(n_players):
                if j != i:
                    o *= own[j, pos]
            others[i, pos] = o

    for i in range(n_players):
        for pos in range(n):
            if is_terminal[pos]:
                values[i, pos] = term_payoff[i, pos] * others[i, pos]
            else:
                values[i, pos] = 0.0
    for pos in range(n - 1, 0, -1):
        pp = parent_pos[pos]
        for i in range(n_players):
            if owner[pos] != i + 1:
                values[i, pp] += values[i, pos]

    util_flat[:] = 0.0
    for pos in range(1, n):
        ep = edge_player[pos]
        if ep > 0 and owner[pos] != ep:
            util_flat[edge_flat_idx[pos]] += values[ep - 1, pos]
