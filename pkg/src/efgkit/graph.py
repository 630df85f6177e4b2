"""Computation-graph templates instantiated per infoset by the engine.

A graph is declared once through :class:`GraphBuilder` inside phase contexts
(static/dynamic x backward/forward) and sealed into an immutable
:class:`ComputationGraph`.  Each graph node owns one numeric vector per
infoset; scalars are length-1 vectors.  Node declarations create new storage,
``inplace`` assignments overwrite an existing node's storage; both execute in
declaration order within their phase.
"""

from __future__ import annotations

import enum
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

FLOAT_FMT = "%.17g"

AGGREGATORS = ("sum", "mean", "max", "min")
AGG_OBJECTS = ("children", "parent")
PLAYER_SCOPES = ("self", "opponents")
BUILTINS = ("utility", "action_set_size", "reach_prob")

SCALAR = "scalar"
VECTOR = "vector"


class Phase(enum.IntEnum):
    """Execution phases, in precedence order."""

    STATIC_BACKWARD = 0
    STATIC_FORWARD = 1
    DYNAMIC_BACKWARD = 2
    DYNAMIC_FORWARD = 3

    @property
    def token(self) -> str:
        return self.name.lower()

    @property
    def is_static(self) -> bool:
        return self in (Phase.STATIC_BACKWARD, Phase.STATIC_FORWARD)

    @property
    def is_backward(self) -> bool:
        return self in (Phase.STATIC_BACKWARD, Phase.DYNAMIC_BACKWARD)


_PHASE_BY_TOKEN = {p.token: p for p in Phase}

# Operand encoding inside OpSpec.operands: int = graph-node id, float = literal.


class GraphError(Exception):
    pass


class UnknownInputError(GraphError):
    pass


class UnknownTargetError(GraphError):
    pass


class PhaseViolationError(GraphError):
    pass


class SealedGraphError(GraphError):
    pass


class ShapeMismatchError(GraphError):
    pass


class DomainError(GraphError):
    """Numerically undefined result (log of non-positive, divide by zero, ...)."""


@dataclass(frozen=True)
class OpSpec:
    """One operation: kind plus node/literal operands and static parameters."""

    kind: str
    operands: tuple = ()
    aggregator: str = ""
    object_name: str = ""
    player_scope: str = ""
    ignore_negative: bool = False
    builtin: str = ""

    def node_inputs(self) -> tuple[int, ...]:
        return tuple(x for x in self.operands if isinstance(x, int))

    def tokens(self) -> list[str]:
        toks = [self.kind]
        if self.kind == "builtin":
            return toks + [self.builtin]
        for x in self.operands:
            toks.append(f"n{x}" if isinstance(x, int) else FLOAT_FMT % x)
        if self.kind == "normalize":
            toks.append("ignore_negative" if self.ignore_negative else "strict")
        if self.kind == "aggregate":
            toks[2:2] = [self.aggregator, self.object_name, self.player_scope]
        return toks


@dataclass
class GraphNodeDef:
    id: int
    phase: Phase
    op: OpSpec | None  # None until an assignment targets a placeholder
    is_placeholder: bool = False


@dataclass(frozen=True)
class Step:
    """One record in declaration order: a node declaration or an assignment.

    ``op`` is None for placeholder declarations, which execute nothing but
    keep their position in the canonical serialization.
    """

    seq: int
    phase: Phase
    target: int
    op: OpSpec | None
    is_assign: bool


class NodeRef:
    """Handle to a declared graph node; arithmetic declares new nodes."""

    __slots__ = ("builder", "id")

    def __init__(self, builder: "GraphBuilder", node_id: int):
        self.builder = builder
        self.id = node_id

    def inplace(self, source) -> None:
        """Overwrite this node's variable with ``source`` every pass."""
        self.builder.inplace_assign(self, source)

    def _binary(self, kind: str, other, reflected: bool = False) -> "NodeRef":
        a, b = (other, self) if reflected else (self, other)
        return self.builder._declare_op(OpSpec(kind, (
            self.builder._operand(a), self.builder._operand(b))))

    def __add__(self, other):
        return self._binary("add", other)

    def __radd__(self, other):
        return self._binary("add", other, reflected=True)

    def __sub__(self, other):
        return self._binary("sub", other)

    def __rsub__(self, other):
        return self._binary("sub", other, reflected=True)

    def __mul__(self, other):
        return self._binary("mul", other)

    def __rmul__(self, other):
        return self._binary("mul", other, reflected=True)

    def __truediv__(self, other):
        return self._binary("div", other)

    def __rtruediv__(self, other):
        return self._binary("div", other, reflected=True)

    def __repr__(self):
        return f"NodeRef({self.id})"


class GraphBuilder:
    """Declares graph nodes inside phase contexts and seals the template."""

    def __init__(self):
        self.nodes: list[GraphNodeDef] = []
        self.steps: list[Step] = []
        self._phase_stack: list[Phase] = []
        self._sealed = False

    # -- phase contexts ---------------------------------------------------

    @contextmanager
    def phase(self, phase: Phase):
        self._phase_stack.append(phase)
        try:
            yield self
        finally:
            self._phase_stack.pop()

    def backward(self, *, is_static: bool = False):
        return self.phase(Phase.STATIC_BACKWARD if is_static
                          else Phase.DYNAMIC_BACKWARD)

    def forward(self, *, is_static: bool = False):
        return self.phase(Phase.STATIC_FORWARD if is_static
                          else Phase.DYNAMIC_FORWARD)

    def _current_phase(self) -> Phase:
        if not self._phase_stack:
            raise GraphError("graph nodes must be declared inside a phase "
                             "context (builder.backward()/builder.forward())")
        return self._phase_stack[-1]

    # -- declaration ------------------------------------------------------

    def _operand(self, x):
        if isinstance(x, NodeRef):
            if x.builder is not self:
                raise UnknownInputError("node belongs to a different builder")
            return x.id
        if isinstance(x, (int, float, np.integer, np.floating)):
            return float(x)
        raise TypeError(f"operand must be a NodeRef or a number, got {type(x)!r}")

    def _node_operand(self, x, what: str) -> int:
        if not isinstance(x, NodeRef):
            raise TypeError(f"{what} must be a NodeRef, got {type(x)!r}")
        return self._operand(x)

    def _check_op(self, op: OpSpec, phase: Phase) -> None:
        for nid in op.node_inputs():
            if not 0 <= nid < len(self.nodes):
                raise UnknownInputError(f"input node {nid} is not declared")
            if self.nodes[nid].phase > phase:
                raise PhaseViolationError(
                    f"node {nid} is declared in later phase "
                    f"{self.nodes[nid].phase.token}, unreadable from {phase.token}")

    def _declare_op(self, op: OpSpec) -> NodeRef:
        if self._sealed:
            raise SealedGraphError("graph already sealed")
        phase = self._current_phase()
        self._check_op(op, phase)
        node = GraphNodeDef(id=len(self.nodes), phase=phase, op=op)
        self.nodes.append(node)
        self.steps.append(Step(len(self.steps), phase, node.id, op,
                               is_assign=False))
        return NodeRef(self, node.id)

    def placeholder(self) -> NodeRef:
        """Readable-before-assignment node; holds zeros until assigned."""
        if self._sealed:
            raise SealedGraphError("graph already sealed")
        phase = self._current_phase()
        node = GraphNodeDef(id=len(self.nodes), phase=phase, op=None,
                            is_placeholder=True)
        self.nodes.append(node)
        self.steps.append(Step(len(self.steps), phase, node.id, None,
                               is_assign=False))
        return NodeRef(self, node.id)

    def inplace_assign(self, target: NodeRef, source) -> None:
        if self._sealed:
            raise SealedGraphError("graph already sealed")
        if not isinstance(target, NodeRef) or target.builder is not self:
            raise UnknownTargetError("inplace target must be a node of this builder")
        phase = self._current_phase()
        operand = self._operand(source)
        op = (OpSpec("copy", (operand,)) if isinstance(operand, int)
              else OpSpec("const_scalar", (operand,)))
        self._check_op(op, phase)
        self.steps.append(Step(len(self.steps), phase, target.id, op,
                               is_assign=True))

    # -- op constructors ----------------------------------------------------

    def const_scalar(self, value) -> NodeRef:
        return self._declare_op(OpSpec("const_scalar", (float(value),)))

    def const_vector(self, value) -> NodeRef:
        """A vector of the infoset's action-set size, filled with ``value``."""
        return self._declare_op(OpSpec("const_vector", (float(value),)))

    def utility(self) -> NodeRef:
        return self._declare_op(OpSpec("builtin", builtin="utility"))

    def action_set_size(self) -> NodeRef:
        return self._declare_op(OpSpec("builtin", builtin="action_set_size"))

    def reach_prob(self) -> NodeRef:
        return self._declare_op(OpSpec("builtin", builtin="reach_prob"))

    def copy(self, x: NodeRef) -> NodeRef:
        return self._declare_op(OpSpec("copy", (self._node_operand(x, "copy input"),)))

    def exp(self, x: NodeRef) -> NodeRef:
        return self._declare_op(OpSpec("exp", (self._node_operand(x, "exp input"),)))

    def log(self, x: NodeRef) -> NodeRef:
        return self._declare_op(OpSpec("log", (self._node_operand(x, "log input"),)))

    def pow(self, x: NodeRef, exponent) -> NodeRef:
        return self._declare_op(OpSpec("pow", (
            self._node_operand(x, "pow input"), float(exponent))))

    def maximum(self, x: NodeRef, scalar) -> NodeRef:
        return self._declare_op(OpSpec("maximum", (
            self._node_operand(x, "maximum input"), float(scalar))))

    def minimum(self, x: NodeRef, scalar) -> NodeRef:
        return self._declare_op(OpSpec("minimum", (
            self._node_operand(x, "minimum input"), float(scalar))))

    def reduce_sum(self, x: NodeRef) -> NodeRef:
        return self._declare_op(OpSpec("reduce_sum", (self._node_operand(x, "input"),)))

    def reduce_mean(self, x: NodeRef) -> NodeRef:
        return self._declare_op(OpSpec("reduce_mean", (self._node_operand(x, "input"),)))

    def reduce_max(self, x: NodeRef) -> NodeRef:
        return self._declare_op(OpSpec("reduce_max", (self._node_operand(x, "input"),)))

    def reduce_min(self, x: NodeRef) -> NodeRef:
        return self._declare_op(OpSpec("reduce_min", (self._node_operand(x, "input"),)))

    def dot(self, x: NodeRef, y: NodeRef) -> NodeRef:
        return self._declare_op(OpSpec("dot", (
            self._node_operand(x, "dot lhs"), self._node_operand(y, "dot rhs"))))

    def normalize(self, x: NodeRef, ignore_negative: bool = False) -> NodeRef:
        return self._declare_op(OpSpec("normalize", (
            self._node_operand(x, "normalize input"),),
            ignore_negative=ignore_negative))

    def aggregate(self, x: NodeRef, aggregator: str, object_name: str = "children",
                  player: str = "self", padding: float = 0.0) -> NodeRef:
        """Pull ``x`` from the parent sequence or first-reached child infosets."""
        if aggregator not in AGGREGATORS:
            raise GraphError(f"aggregator must be one of {AGGREGATORS}")
        if object_name not in AGG_OBJECTS:
            raise GraphError(f"object_name must be one of {AGG_OBJECTS}")
        if player not in PLAYER_SCOPES:
            raise GraphError(f"player must be one of {PLAYER_SCOPES}")
        return self._declare_op(OpSpec(
            "aggregate", (self._node_operand(x, "aggregate source"), float(padding)),
            aggregator=aggregator, object_name=object_name, player_scope=player))

    # -- sealing ------------------------------------------------------------

    def seal(self, strategy_node: NodeRef | None = None) -> "ComputationGraph":
        self._sealed = True
        sid = strategy_node.id if strategy_node is not None else None
        return ComputationGraph(self.nodes, self.steps, strategy_node=sid)


@dataclass
class ComputationGraph:
    """Sealed template: node defs, ordered steps per phase, inferred shapes."""

    nodes: list[GraphNodeDef]
    steps: list[Step]
    strategy_node: int | None = None
    shapes: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.shapes = self._infer_shapes()
        # Placeholder declarations execute nothing.
        self.steps_by_phase: dict[Phase, list[Step]] = {p: [] for p in Phase}
        for st in self.steps:
            if st.op is not None:
                self.steps_by_phase[st.phase].append(st)

    def _op_shape(self, op: OpSpec, shapes: list[str]) -> str:
        k = op.kind
        if k in ("const_scalar", "reduce_sum", "reduce_mean", "reduce_max",
                 "reduce_min", "dot"):
            return SCALAR
        if k == "const_vector":
            return VECTOR
        if k == "builtin":
            return VECTOR if op.builtin == "utility" else SCALAR
        if k == "aggregate":
            return VECTOR if op.object_name == "children" else SCALAR
        if k in ("add", "sub", "mul", "div"):
            kinds = [shapes[x] for x in op.node_inputs()]
            return VECTOR if VECTOR in kinds else SCALAR
        if k in ("maximum", "minimum", "exp", "log", "pow", "normalize", "copy"):
            return shapes[op.operands[0]]
        raise GraphError(f"unknown op kind {k!r}")

    def _infer_shapes(self) -> list[str]:
        shapes = [SCALAR] * len(self.nodes)
        changed = True
        while changed:
            changed = False
            for st in self.steps:
                if st.op is None:
                    continue
                s = self._op_shape(st.op, shapes)
                if s == VECTOR and shapes[st.target] != VECTOR:
                    shapes[st.target] = VECTOR
                    changed = True
        return shapes

    def uses_builtin(self, name: str, static: bool | None = None) -> bool:
        for st in self.steps:
            if st.op is not None and st.op.kind == "builtin" and st.op.builtin == name:
                if static is None or st.phase.is_static == static:
                    return True
        return False

    def aggregate_scopes(self) -> set[str]:
        return {st.op.player_scope for st in self.steps if st.op is not None
                and st.op.kind == "aggregate" and st.op.object_name == "children"}


# -- reference (single-infoset) op evaluation --------------------------------


def evaluate_op(op: OpSpec, inputs: dict[int, np.ndarray], *, action_count: int,
                builtins: dict[str, np.ndarray] | None = None,
                aggregate_resolver=None) -> np.ndarray:
    """Evaluate one op for a single infoset; the executable spec of op semantics.

    ``inputs`` maps node ids to current variables (1-d arrays; length-1 means
    scalar).  The engine's vectorized execution must agree with this function.
    """

    def operand(x) -> np.ndarray:
        if isinstance(x, int):
            return np.asarray(inputs[x], dtype=float)
        return np.asarray([x], dtype=float)

    k = op.kind
    if k == "const_scalar":
        return np.array([op.operands[0]])
    if k == "const_vector":
        return np.full(action_count, op.operands[0])
    if k == "builtin":
        if builtins is None or op.builtin not in builtins:
            raise GraphError(f"builtin {op.builtin!r} not available here")
        return np.atleast_1d(np.asarray(builtins[op.builtin], dtype=float))
    if k == "copy":
        return operand(op.operands[0]).copy()
    if k in ("add", "sub", "mul", "div"):
        a, b = operand(op.operands[0]), operand(op.operands[1])
        if len(a) != len(b) and 1 not in (len(a), len(b)):
            raise ShapeMismatchError(f"{k} of lengths {len(a)} and {len(b)}")
        if k == "div" and np.any(b == 0.0):
            raise DomainError("division by zero")
        return {"add": np.add, "sub": np.subtract, "mul": np.multiply,
                "div": np.divide}[k](a, b)
    if k in ("maximum", "minimum"):
        a = operand(op.operands[0])
        f = np.maximum if k == "maximum" else np.minimum
        return f(a, op.operands[1])
    if k == "exp":
        return np.exp(operand(op.operands[0]))
    if k == "log":
        a = operand(op.operands[0])
        if np.any(a <= 0.0):
            raise DomainError("log of non-positive value")
        return np.log(a)
    if k == "pow":
        a, e = operand(op.operands[0]), op.operands[1]
        if np.any(a < 0.0) and e != int(e):
            raise DomainError("fractional power of negative value")
        return np.power(a, e)
    if k in ("reduce_sum", "reduce_mean", "reduce_max", "reduce_min"):
        a = operand(op.operands[0])
        f = {"reduce_sum": np.sum, "reduce_mean": np.mean,
             "reduce_max": np.max, "reduce_min": np.min}[k]
        return np.array([f(a)])
    if k == "dot":
        a, b = operand(op.operands[0]), operand(op.operands[1])
        if len(a) != len(b):
            raise ShapeMismatchError(f"dot of lengths {len(a)} and {len(b)}")
        return np.array([float(a @ b)])
    if k == "normalize":
        a = operand(op.operands[0])
        if op.ignore_negative:
            w = np.maximum(a, 0.0)
            total = float(w.sum())
            if total <= 0.0:
                return np.full(len(a), 1.0 / len(a))
            return w / total
        if np.any(a < 0.0):
            raise DomainError("normalize of negative entries "
                              "(use ignore_negative)")
        total = float(a.sum())
        if total <= 0.0:
            raise DomainError("normalize of zero-sum vector")
        return a / total
    if k == "aggregate":
        if aggregate_resolver is None:
            raise GraphError("aggregate needs an engine context")
        return aggregate_resolver(op)
    raise GraphError(f"unknown op kind {k!r}")


# -- canonical text form -------------------------------------------------------


def serialize_graph(graph: ComputationGraph) -> str:
    """Canonical token form; declaration order preserved, diffable across frontends."""
    lines = ["graph 1"]
    for st in graph.steps:
        record = "assign" if st.is_assign else "node"
        body = "placeholder" if st.op is None else " ".join(st.op.tokens())
        lines.append(f"{record} {st.target} {st.phase.token} {body}")
    if graph.strategy_node is not None:
        lines.append(f"strategy {graph.strategy_node}")
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> ComputationGraph:
    """Rebuild a ComputationGraph from its canonical text form."""
    nodes: list[GraphNodeDef] = []
    steps: list[Step] = []
    strategy: int | None = None

    def parse_operand(tok: str):
        return int(tok[1:]) if tok.startswith("n") else float(tok)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("graph "):
            continue
        toks = line.split()
        if toks[0] == "strategy":
            strategy = int(toks[1])
            continue
        if toks[0] not in ("node", "assign"):
            raise GraphError(f"graph line {lineno}: unknown record {toks[0]!r}")
        target, phase_tok, kind = int(toks[1]), toks[2], toks[3]
        if phase_tok not in _PHASE_BY_TOKEN:
            raise GraphError(f"graph line {lineno}: unknown phase {phase_tok!r}")
        phase = _PHASE_BY_TOKEN[phase_tok]
        rest = toks[4:]
        if kind == "placeholder":
            op = None
        elif kind == "builtin":
            op = OpSpec("builtin", builtin=rest[0])
        elif kind == "normalize":
            op = OpSpec("normalize", (parse_operand(rest[0]),),
                        ignore_negative=rest[1] == "ignore_negative")
        elif kind == "aggregate":
            op = OpSpec("aggregate", (parse_operand(rest[0]),
                                      parse_operand(rest[4])),
                        aggregator=rest[1], object_name=rest[2],
                        player_scope=rest[3])
        else:
            op = OpSpec(kind, tuple(parse_operand(t) for t in rest))
        if toks[0] == "node":
            if target != len(nodes):
                raise GraphError(f"graph line {lineno}: node id {target} out of "
                                 f"order (expected {len(nodes)})")
            nodes.append(GraphNodeDef(id=target, phase=phase, op=op,
                                      is_placeholder=op is None))
            steps.append(Step(len(steps), phase, target, op, is_assign=False))
        else:
            if op is None:
                raise GraphError(f"graph line {lineno}: assign needs an op")
            if not 0 <= target < len(nodes):
                raise GraphError(f"graph line {lineno}: assign target {target} "
                                 "not declared")
            steps.append(Step(len(steps), phase, target, op, is_assign=True))
    return ComputationGraph(nodes, steps, strategy_node=strategy)
