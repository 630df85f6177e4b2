"""Command-line interface: solve, dump, bench, interact, graph, rpc.

``solve`` writes a convergence trace (``iteration,exploitability_avg,
exploitability_last,wall_ms``); ``dump`` exports strategy tables; ``bench``
times the training loop; ``interact`` plays episodes against the computed
strategy in the terminal.  ``graph`` prints an algorithm's serialized
computation graph and ``rpc`` exposes the engine over line-delimited JSON on
stdio; both exist so out-of-process frontends can drive the engine while all
numeric work stays in this package.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
import time

import numpy as np

from .algorithms import ALGORITHMS, algorithm_config
from .catalog import generate_kuhn, generate_leduc, generate_rps
from .engine import AVG_ITERATE, LAST_ITERATE, Environment
from .evaluation import (FLOAT_FMT, exploitability, extract_strategy_table,
                         format_strategy_table)
from .fileformat import load_game_file
from .graph import parse_graph, serialize_graph
from .model import GameTree, uniform_profile
from .solver import GraphSolver

log = logging.getLogger("efgkit")

CATALOG = {"kuhn": generate_kuhn, "leduc": generate_leduc, "rps": generate_rps}


class CliError(Exception):
    pass


def resolve_game(spec: str) -> GameTree:
    if spec in CATALOG:
        return CATALOG[spec]()
    path = spec[5:] if spec.startswith("file:") else spec
    if os.path.exists(path):
        return load_game_file(path)
    raise CliError(f"unknown game {spec!r}: not a catalog name "
                   f"({', '.join(sorted(CATALOG))}) and file not found")


def trace_line(iteration: int, avg: float, last: float, ms: float) -> str:
    return (f"{iteration},{FLOAT_FMT % avg},{FLOAT_FMT % last},{ms:.3f}")


TRACE_HEADER = "iteration,exploitability_avg,exploitability_last,wall_ms"


# -- solve ---------------------------------------------------------------------


def cmd_solve(args) -> int:
    tree = resolve_game(args.game)
    solver = GraphSolver(algorithm=args.algo, traversal=args.traversal,
                         iterations=args.iters, seed=args.seed,
                         eval_every=args.eval_every)
    lines = [TRACE_HEADER]

    def on_eval(iteration, avg, last, ms):
        lines.append(trace_line(iteration, avg.exploitability,
                                last.exploitability, ms))
        log.info("iteration %d: avg exploitability %.6g", iteration,
                 avg.exploitability)

    solver.fit(tree, eval_callback=on_eval)
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(lines[-1])
    else:
        sys.stdout.write(text)
    return 0


# -- dump ----------------------------------------------------------------------


def cmd_dump(args) -> int:
    tree = resolve_game(args.game)
    solver = GraphSolver(algorithm=args.algo, traversal=args.traversal,
                         iterations=args.iters, seed=args.seed)
    solver.fit(tree)
    rows = solver.strategy_table(args.player, args.mode)
    text = format_strategy_table(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# -- bench ---------------------------------------------------------------------


def cmd_bench(args) -> int:
    tree = resolve_game(args.game)
    times = []
    for rep in range(args.repeats):
        config = algorithm_config(args.algo, args.traversal)
        env = Environment(tree, config.traversal, seed=args.seed + rep)
        env.set_graph(config.graph)
        env.update(config.strategy_node)  # warm caches outside the timed loop
        env.update_strategy(config.strategy_node)
        start = time.perf_counter()
        for _ in range(args.iters):
            env.update(config.strategy_node)
            env.update_strategy(config.strategy_node)
        elapsed = time.perf_counter() - start
        times.append(elapsed)
        print(f"run {rep + 1}: {elapsed:.3f}s "
              f"({args.iters / elapsed:.0f} iterations/s)")
    print(f"min {min(times):.3f}s  median {statistics.median(times):.3f}s  "
          f"max {max(times):.3f}s  "
          f"({args.iters / statistics.median(times):.0f} iterations/s median)")
    return 0


# -- interact -------------------------------------------------------------------


def load_strategy_file(tree: GameTree, path: str):
    """Profile CSV (rows ``infoset_name,p0,p1,...``); missing rows -> uniform."""
    by_name = {s.name: s for s in tree.infosets}
    profile = uniform_profile(tree)
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("infoset,"):
                continue
            cells = line.split(",")
            s = by_name.get(cells[0])
            if s is None:
                continue
            probs = [float(c) for c in cells[1:] if c != ""]
            if len(probs) != s.action_count:
                raise CliError(f"strategy row {cells[0]!r} has {len(probs)} "
                               f"probabilities, expected {s.action_count}")
            profile[s.id] = np.array(probs)
    return profile


def cmd_interact(args) -> int:
    tree = resolve_game(args.game)
    human = args.player
    if not 1 <= human <= tree.num_players:
        raise CliError(f"--player must be in [1, {tree.num_players}]")
    if args.strategy_file:
        profile = load_strategy_file(tree, args.strategy_file)
    else:
        solver = GraphSolver(algorithm=args.algo, traversal=args.traversal,
                             iterations=args.iters, seed=args.seed)
        print(f"training {args.algo} for {args.iters} iterations ...")
        solver.fit(tree)
        profile = solver.average_profile()

    rng = np.random.default_rng(args.seed)
    totals = [0.0] * tree.num_players
    episode = 0

    def prompt(infoset) -> int | None:
        """Read an action (label or index); None means quit."""
        labels = " ".join(infoset.actions)
        while True:
            sys.stdout.write(f"[{infoset.name}] actions: {labels} > ")
            sys.stdout.flush()
            line = sys.stdin.readline()
            if not line:
                return None
            token = line.strip()
            if token in ("q", "quit", "exit"):
                return None
            if token in infoset.actions:
                return infoset.actions.index(token)
            if token.isdigit() and int(token) < len(infoset.actions):
                return int(token)
            print(f"illegal action {token!r}; choose one of: {labels} (or q)")

    while True:
        episode += 1
        print(f"--- episode {episode} ---")
        nid = tree.root
        node = tree.nodes[nid]
        while not node.is_terminal:
            if node.is_chance:
                aidx = rng.choice(len(node.actions), p=node.chance_probs)
            elif node.owner == human:
                choice = prompt(tree.infosets[node.infoset])
                if choice is None:
                    print("totals: " + "  ".join(
                        f"player {i + 1}: {totals[i]:g}"
                        for i in range(tree.num_players)))
                    return 0
                aidx = choice
            else:
                probs = profile[node.infoset]
                aidx = rng.choice(len(probs), p=probs)
                print(f"player {node.owner} plays "
                      f"{node.actions[aidx]}")
            nid = tree.children[nid][aidx]
            node = tree.nodes[nid]
        pays = node.payoffs
        for i in range(tree.num_players):
            totals[i] += pays[i]
        print("payoffs: " + "  ".join(f"player {i + 1}: {pays[i]:g}"
                                      for i in range(tree.num_players)))
        print("totals:  " + "  ".join(f"player {i + 1}: {totals[i]:g}"
                                      for i in range(tree.num_players)))


# -- graph / rpc ------------------------------------------------------------------


def cmd_graph(args) -> int:
    config = algorithm_config(args.algo, args.traversal)
    sys.stdout.write(serialize_graph(config.graph))
    return 0


def cmd_rpc(args) -> int:
    """Line-delimited JSON protocol over stdio (one environment per process)."""
    env: Environment | None = None
    out = sys.stdout

    def reply(payload: dict) -> None:
        out.write(json.dumps(payload, separators=(",", ":")) + "\n")
        out.flush()

    for raw in sys.stdin:
        line = raw.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            op = req["op"]
            rid = req.get("id")
            if op == "close":
                reply({"id": rid, "ok": True})
                return 0
            if op == "env":
                game = req["game"]
                if isinstance(game, str):
                    tree = resolve_game(game)
                elif "path" in game:
                    tree = load_game_file(game["path"])
                else:
                    from .fileformat import load_game_text
                    tree = load_game_text(game["text"])
                env = Environment(tree, req.get("traversal", "enumerate"),
                                  seed=req.get("seed", 0))
                reply({"id": rid, "ok": True, "name": tree.name,
                       "num_players": tree.num_players,
                       "num_infosets": len(tree.infosets)})
                continue
            if op == "graph_text":
                config = algorithm_config(req["algo"],
                                          req.get("traversal"))
                reply({"id": rid, "ok": True,
                       "text": serialize_graph(config.graph),
                       "strategy_node": config.strategy_node})
                continue
            if env is None:
                raise CliError("no environment loaded (send op=env first)")
            if op == "set_graph":
                env.set_graph(parse_graph(req["text"]))
                reply({"id": rid, "ok": True})
            elif op == "update":
                env.update(req["node"])
                reply({"id": rid, "ok": True, "iteration": env.iteration})
            elif op == "update_strategy":
                env.update_strategy(req["node"], req.get("mode", AVG_ITERATE))
                reply({"id": rid, "ok": True})
            elif op == "exploitability":
                report = exploitability(env, req["node"],
                                        req.get("mode", AVG_ITERATE))
                reply({"id": rid, "ok": True,
                       "values": list(report.per_player_improvement),
                       "sum": report.exploitability,
                       "sum_text": FLOAT_FMT % report.exploitability})
            elif op == "strategy_table":
                rows = extract_strategy_table(env, req["node"], req["player"],
                                              req.get("mode", AVG_ITERATE))
                reply({"id": rid, "ok": True,
                       "csv": format_strategy_table(rows)})
            elif op == "variable":
                value = env.variable(req["node"], req["infoset"])
                reply({"id": rid, "ok": True, "value": [float(v) for v in value]})
            elif op == "iteration":
                reply({"id": rid, "ok": True, "iteration": env.iteration})
            else:
                raise CliError(f"unknown rpc op {op!r}")
        except Exception as e:  # protocol surface: every error is a reply
            reply({"id": req.get("id") if isinstance(req, dict) else None,
                   "error": {"type": type(e).__name__, "message": str(e)}})
    return 0


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="efgkit",
        description="Tabular extensive-form game solver driven by "
                    "per-infoset computation graphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, iters_default=10000):
        p.add_argument("--game", required=True,
                       help="kuhn | leduc | rps | file:<path> | <path>")
        p.add_argument("--algo", default="cfr", choices=sorted(ALGORITHMS))
        p.add_argument("--traversal", default=None,
                       choices=["enumerate", "external", "outcome"])
        p.add_argument("--iters", type=int, default=iters_default)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("solve", help="run a solver and emit a convergence trace")
    common(p)
    p.add_argument("--eval-every", type=int, default=0,
                   help="evaluation period (0: endpoints only)")
    p.add_argument("--out", default=None, help="trace file (default stdout)")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("dump", help="export a player's strategy table as CSV")
    common(p)
    p.add_argument("--player", type=int, required=True)
    p.add_argument("--mode", default=AVG_ITERATE,
                   choices=[AVG_ITERATE, LAST_ITERATE])
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_dump)

    p = sub.add_parser("bench", help="time the training loop (no evaluation)")
    common(p, iters_default=100000)
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("interact", help="play against the computed strategy")
    common(p, iters_default=10000)
    p.add_argument("--player", type=int, default=1, help="human player index")
    p.add_argument("--strategy-file", default=None,
                   help="profile CSV (infoset_name,p0,p1,...); "
                        "skips in-process training")
    p.set_defaults(fn=cmd_interact)

    p = sub.add_parser("graph", help="print an algorithm's serialized graph")
    p.add_argument("--algo", default="cfr", choices=sorted(ALGORITHMS))
    p.add_argument("--traversal", default=None,
                   choices=["enumerate", "external", "outcome"])
    p.set_defaults(fn=cmd_graph)

    p = sub.add_parser("rpc", help="serve the engine over line-JSON on stdio")
    p.set_defaults(fn=cmd_rpc)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("EFG_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="[%(levelname)s] %(message)s",
                        stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except BrokenPipeError:
        return 0
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
