"""Estimator-style front door: configure, ``fit`` on a game, read results.

Follows the scikit-learn parameter protocol (``get_params``/``set_params``,
hyperparameters in ``__init__``, fitted attributes with trailing
underscores) so solvers compose with that ecosystem's tooling, without
depending on scikit-learn itself.
"""

from __future__ import annotations

import inspect
import time

from .algorithms import ALGORITHMS, algorithm_config
from .engine import AVG_ITERATE, Environment
from .evaluation import EvalReport, exploitability, extract_strategy_table
from .model import GameTree, validate_game


class GraphSolver:
    """Runs an algorithm graph on a game tree for a fixed iteration budget.

    Parameters
    ----------
    algorithm : one of ``cfr``, ``cfr+``, ``es-cfr``, ``os-cfr``, ...
    traversal : override the algorithm's default tree traversal.
    iterations : dynamic updates to run.
    seed : RNG seed for sampled traversals.
    eval_every : exploitability evaluation period (0 evaluates only the
        endpoints).  Every evaluation lands in ``trace_``.

    Attributes after ``fit``
    ------------------------
    env_ : the bound Environment.
    strategy_node_ : graph node id holding the behavioral strategy.
    trace_ : list of (iteration, avg exploitability, last exploitability,
        elapsed ms) rows.
    exploitability_ : final average-iterate exploitability.
    report_ : final :class:`EvalReport`.
    """

    def __init__(self, algorithm: str = "cfr", traversal: str | None = None,
                 iterations: int = 1000, seed: int = 0, eval_every: int = 0):
        self.algorithm = algorithm
        self.traversal = traversal
        self.iterations = iterations
        self.seed = seed
        self.eval_every = eval_every

    # -- sklearn parameter protocol -----------------------------------------

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "GraphSolver":
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(f"invalid parameter {key!r} for GraphSolver; "
                                 f"valid parameters: {sorted(valid)}")
            setattr(self, key, value)
        return self

    # -- fitting ---------------------------------------------------------------

    def fit(self, game: GameTree, eval_callback=None) -> "GraphSolver":
        """Run the configured algorithm on ``game``.

        ``eval_callback(iteration, report_avg, report_last, elapsed_ms)`` is
        invoked at every evaluation point, including iteration 0.
        """
        violations = validate_game(game)
        if violations:
            raise ValueError("game fails validation: "
                             + "; ".join(str(v) for v in violations[:3]))
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        config = algorithm_config(self.algorithm, self.traversal)
        env = Environment(game, config.traversal, seed=self.seed)
        env.set_graph(config.graph)

        self.env_ = env
        self.strategy_node_ = config.strategy_node
        self.trace_ = []
        start = time.perf_counter()

        def evaluate(iteration: int) -> None:
            avg = exploitability(env, config.strategy_node, AVG_ITERATE)
            last = exploitability(env, config.strategy_node, "last-iterate")
            ms = (time.perf_counter() - start) * 1000.0
            self.trace_.append((iteration, avg.exploitability,
                                last.exploitability, ms))
            self.report_ = avg
            if eval_callback is not None:
                eval_callback(iteration, avg, last, ms)

        evaluate(0)
        period = self.eval_every if self.eval_every > 0 else 0
        for t in range(1, self.iterations + 1):
            env.update(config.strategy_node)
            env.update_strategy(config.strategy_node, AVG_ITERATE)
            if (period and t % period == 0) or t == self.iterations:
                evaluate(t)

        self.exploitability_ = self.report_.exploitability
        return self

    # -- fitted accessors --------------------------------------------------------

    def _check_fitted(self) -> None:
        if not hasattr(self, "env_"):
            raise RuntimeError("solver is not fitted; call fit(game) first")

    def average_profile(self):
        self._check_fitted()
        return self.env_.current_profile(self.strategy_node_, AVG_ITERATE)

    def final_report(self) -> EvalReport:
        self._check_fitted()
        return self.report_

    def strategy_table(self, player: int, mode: str = AVG_ITERATE):
        self._check_fitted()
        return extract_strategy_table(self.env_, self.strategy_node_, player,
                                      mode)

    def __repr__(self) -> str:
        params = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"GraphSolver({params})"


def available_algorithms() -> list[str]:
    return sorted(ALGORITHMS)
