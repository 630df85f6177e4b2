"""Plain-text game description format: parser, tree builder, serializer.

The format is line-oriented UTF-8 with ``#`` comments.  A document opens with
``key value`` parameter lines (``num_players`` is required), followed by node
records and infoset records::

    num_players 2
    node /root chance actions JQ=0.16666666666666666 JK=0.16666666666666666 ...
    node /root/JQ player 1 actions k b
    node /root/JQ/k/k leaf payoffs 1=-1 2=1
    infoset J: nodes /root/JQ /root/JK

Tree edges are encoded in the names: ``<parent>/<token>`` is the child of
``<parent>`` via that action (event names for chance nodes, action labels for
player nodes).  The one node whose name resolves to no parent is the root.
Node records must appear parent-before-child.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import (CHANCE, TERMINAL, GameNode, GameTree, Infoset,
                    validate_game)

FLOAT_FMT = "%.17g"


# -- errors ----------------------------------------------------------------


class GameFileError(Exception):
    """Base for positioned parse errors."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class GameFileSyntaxError(GameFileError):
    pass


class DuplicateNameError(GameFileError):
    pass


class MissingParameterError(Exception):
    pass


class GameBuildError(Exception):
    """Base for document-to-tree linking failures."""


class OrphanNodeError(GameBuildError):
    pass


class UnknownActionError(GameBuildError):
    pass


class InfosetMixedPlayersError(GameBuildError):
    pass


class ValidationFailedError(GameBuildError):
    def __init__(self, violations):
        self.violations = violations
        head = "; ".join(str(v) for v in violations[:3])
        more = f" (+{len(violations) - 3} more)" if len(violations) > 3 else ""
        super().__init__(f"built tree fails validation: {head}{more}")


# -- document model ----------------------------------------------------------


@dataclass
class NodeRecord:
    name: str
    kind: str  # chance | player | leaf
    line: int
    events: list[tuple[str, float]] = field(default_factory=list)
    player: int = 0
    actions: list[str] = field(default_factory=list)
    payoffs: list[tuple[int, float]] = field(default_factory=list)


@dataclass
class InfosetRecord:
    name: str
    members: list[str]
    line: int


@dataclass
class GameFileDocument:
    parameters: dict[str, str]
    node_records: list[NodeRecord]
    infoset_records: list[InfosetRecord]

    @property
    def num_players(self) -> int:
        return int(self.parameters["num_players"])


# -- parsing -----------------------------------------------------------------


def _split_pair(token: str, what: str, lineno: int) -> tuple[str, str]:
    left, sep, right = token.partition("=")
    if not sep or not left or not right:
        raise GameFileSyntaxError(lineno, f"malformed {what} {token!r}, "
                                  "expected name=value")
    return left, right


def _parse_float(text: str, what: str, lineno: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise GameFileSyntaxError(
            lineno, f"cannot parse {what} {text!r} as a decimal number") from None


def parse_game_file(text: str) -> GameFileDocument:
    """Tokenize a document; every input yields a document or a positioned error."""
    parameters: dict[str, str] = {}
    param_lines: dict[str, int] = {}
    node_records: list[NodeRecord] = []
    infoset_records: list[InfosetRecord] = []
    node_names: set[str] = set()
    infoset_names: set[str] = set()
    in_body = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()

        if tokens[0] == "node":
            in_body = True
            if len(tokens) < 3:
                raise GameFileSyntaxError(lineno, "node record needs a name and a kind")
            name, kind = tokens[1], tokens[2]
            if name in node_names:
                raise DuplicateNameError(lineno, f"duplicate node name {name!r}")
            node_names.add(name)
            rec = NodeRecord(name=name, kind=kind, line=lineno)
            if kind == "chance":
                if len(tokens) < 4 or tokens[3] != "actions":
                    raise GameFileSyntaxError(lineno, "chance node needs 'actions'")
                for tok in tokens[4:]:
                    ev, p = _split_pair(tok, "chance event", lineno)
                    rec.events.append((ev, _parse_float(p, "probability", lineno)))
                if not rec.events:
                    raise GameFileSyntaxError(lineno, "chance node lists no events")
            elif kind == "player":
                if len(tokens) < 4:
                    raise GameFileSyntaxError(lineno, "player node needs an index")
                try:
                    rec.player = int(tokens[3])
                except ValueError:
                    raise GameFileSyntaxError(
                        lineno, f"player index {tokens[3]!r} is not an integer") from None
                if len(tokens) < 5 or tokens[4] != "actions":
                    raise GameFileSyntaxError(lineno, "player node needs 'actions'")
                rec.actions = tokens[5:]
                if not rec.actions:
                    raise GameFileSyntaxError(lineno, "player node lists no actions")
            elif kind == "leaf":
                if len(tokens) < 4 or tokens[3] != "payoffs":
                    raise GameFileSyntaxError(lineno, "leaf node needs 'payoffs'")
                for tok in tokens[4:]:
                    idx, v = _split_pair(tok, "payoff", lineno)
                    try:
                        player = int(idx)
                    except ValueError:
                        raise GameFileSyntaxError(
                            lineno, f"payoff player index {idx!r} is not an "
                            "integer") from None
                    rec.payoffs.append((player, _parse_float(v, "payoff", lineno)))
            else:
                raise GameFileSyntaxError(
                    lineno, f"unknown node kind {kind!r} (chance, player, leaf)")
            node_records.append(rec)

        elif tokens[0] == "infoset":
            in_body = True
            if len(tokens) < 3 or tokens[2] != "nodes":
                raise GameFileSyntaxError(lineno, "infoset record needs a name "
                                          "and 'nodes'")
            name = tokens[1]
            if name in infoset_names:
                raise DuplicateNameError(lineno, f"duplicate infoset name {name!r}")
            infoset_names.add(name)
            members = tokens[3:]
            if not members:
                raise GameFileSyntaxError(lineno, "infoset lists no nodes")
            for m in members:
                if m not in node_names:
                    raise GameFileSyntaxError(
                        lineno, f"infoset references unknown node {m!r}")
            infoset_records.append(InfosetRecord(name=name, members=members,
                                                 line=lineno))

        else:
            if in_body:
                raise GameFileSyntaxError(
                    lineno, f"parameter line {tokens[0]!r} after the first "
                    "node record")
            parameters[tokens[0]] = " ".join(tokens[1:])
            param_lines.setdefault(tokens[0], lineno)

    if "num_players" not in parameters:
        raise MissingParameterError("required parameter num_players is missing")
    try:
        n = int(parameters["num_players"])
    except ValueError:
        raise GameFileSyntaxError(
            param_lines["num_players"],
            f"num_players {parameters['num_players']!r} is not an integer") from None
    if n < 1:
        raise GameFileSyntaxError(param_lines["num_players"],
                                  f"num_players {n} must be >= 1")
    return GameFileDocument(parameters, node_records, infoset_records)


# -- building -----------------------------------------------------------------


def build_tree(doc: GameFileDocument) -> GameTree:
    """Link records into a validated GameTree (edges from slash-path names)."""
    if not doc.node_records:
        raise GameBuildError("document contains no node records")
    n_players = doc.num_players
    all_names = {rec.name for rec in doc.node_records}
    built: dict[str, int] = {}
    nodes: list[GameNode] = []
    root_name: str | None = None

    for rec in doc.node_records:
        parent_name, _, token = rec.name.rpartition("/")
        if rec.name.count("/") == 0 or parent_name not in all_names:
            parent = None
            if root_name is not None:
                raise OrphanNodeError(
                    f"node {rec.name!r} resolves to no parent but the root is "
                    f"already {root_name!r}")
            root_name = rec.name
        else:
            if parent_name not in built:
                raise GameBuildError(
                    f"node {rec.name!r} appears before its parent "
                    f"{parent_name!r} (records must be parent-before-child)")
            pid = built[parent_name]
            pnode = nodes[pid]
            if pnode.owner == TERMINAL:
                raise UnknownActionError(
                    f"node {rec.name!r} hangs off leaf node {parent_name!r}")
            if token not in pnode.actions:
                raise UnknownActionError(
                    f"edge token {token!r} of node {rec.name!r} is not an "
                    f"action of {parent_name!r} {list(pnode.actions)}")
            parent = (pid, pnode.actions.index(token))

        nid = len(nodes)
        if rec.kind == "chance":
            node = GameNode(id=nid, owner=CHANCE,
                            actions=tuple(ev for ev, _ in rec.events),
                            chance_probs=tuple(p for _, p in rec.events),
                            parent=parent)
        elif rec.kind == "player":
            node = GameNode(id=nid, owner=rec.player,
                            actions=tuple(rec.actions), parent=parent)
        else:
            payoffs = [0.0] * n_players
            seen: set[int] = set()
            for player, v in rec.payoffs:
                if not 1 <= player <= n_players:
                    raise GameBuildError(
                        f"leaf {rec.name!r} pays player {player}, but the game "
                        f"has {n_players} players")
                if player in seen:
                    raise GameBuildError(
                        f"leaf {rec.name!r} pays player {player} twice")
                seen.add(player)
                payoffs[player - 1] = v
            node = GameNode(id=nid, owner=TERMINAL, payoffs=tuple(payoffs),
                            parent=parent)
        nodes.append(node)
        built[rec.name] = nid

    infosets: list[Infoset] = []
    for rec in doc.infoset_records:
        members = [built[m] for m in rec.members]
        owners = {nodes[m].owner for m in members}
        if len(owners) != 1 or owners & {CHANCE, TERMINAL}:
            raise InfosetMixedPlayersError(
                f"infoset {rec.name!r} mixes owners {sorted(owners)}")
        sid = len(infosets)
        first = nodes[members[0]]
        infosets.append(Infoset(id=sid, player=first.owner,
                                member_nodes=tuple(members),
                                action_count=len(first.actions),
                                actions=first.actions, name=rec.name))
        for m in members:
            if nodes[m].infoset is None:
                object.__setattr__(nodes[m], "infoset", sid)

    # Player nodes absent from every record get singleton infosets.
    name_of = {nid: name for name, nid in built.items()}
    for node in nodes:
        if node.owner > 0 and node.infoset is None:
            sid = len(infosets)
            infosets.append(Infoset(id=sid, player=node.owner,
                                    member_nodes=(node.id,),
                                    action_count=len(node.actions),
                                    actions=node.actions,
                                    name=name_of[node.id]))
            object.__setattr__(node, "infoset", sid)

    name = doc.parameters.get("name", "game")
    tree = GameTree(n_players, nodes, infosets, name=name)
    violations = validate_game(tree)
    if violations:
        raise ValidationFailedError(violations)
    return tree


def load_game_text(text: str) -> GameTree:
    return build_tree(parse_game_file(text))


def load_game_file(path) -> GameTree:
    with open(path, encoding="utf-8") as fh:
        return load_game_text(fh.read())


# -- serialization ------------------------------------------------------------


def _safe_token(token: str, what: str) -> str:
    if not token or any(c.isspace() for c in token) or "#" in token:
        raise ValueError(f"{what} {token!r} cannot be written as a file token")
    return token


def serialize_game(tree: GameTree) -> str:
    """Emit a document that parses back to an isomorphic tree.

    Node names are regenerated from action paths under ``/root``; chance
    probabilities and payoffs are printed with 17 significant digits so they
    survive the round trip bit-exactly.
    """
    lines = [f"name {_safe_token(tree.name, 'game name')}",
             f"num_players {tree.num_players}"]
    names: dict[int, str] = {}

    stack = [(tree.root, "/root")]
    ordered: list[int] = []
    while stack:
        nid, name = stack.pop()
        names[nid] = name
        ordered.append(nid)
        node = tree.nodes[nid]
        for aidx in range(len(node.actions) - 1, -1, -1):
            cid = tree.children[nid][aidx]
            if cid >= 0:
                token = _safe_token(node.actions[aidx], "action label")
                if "/" in token:
                    raise ValueError(f"action label {token!r} contains '/'")
                stack.append((cid, f"{name}/{token}"))

    for nid in ordered:
        node = tree.nodes[nid]
        if node.is_chance:
            events = " ".join(f"{_safe_token(e, 'event')}={FLOAT_FMT % p}"
                              for e, p in zip(node.actions, node.chance_probs))
            lines.append(f"node {names[nid]} chance actions {events}")
        elif node.is_terminal:
            pays = " ".join(f"{i + 1}={FLOAT_FMT % u}"
                            for i, u in enumerate(node.payoffs))
            lines.append(f"node {names[nid]} leaf payoffs {pays}")
        else:
            acts = " ".join(_safe_token(a, "action label") for a in node.actions)
            lines.append(f"node {names[nid]} player {node.owner} actions {acts}")

    seen_infoset_names: set[str] = set()
    for s in tree.infosets:
        sname = _safe_token(s.name or f"s{s.id}", "infoset name")
        if sname in seen_infoset_names:
            sname = f"{sname}~{s.id}"
        seen_infoset_names.add(sname)
        members = " ".join(names[m] for m in s.member_nodes)
        lines.append(f"infoset {sname} nodes {members}")

    return "\n".join(lines) + "\n"
