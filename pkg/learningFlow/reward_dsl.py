"""
Sandboxed reward expression language.

Reward programs are short lists of named components followed by a total:

    # comment
    progress = 0.1 * v_ego / v_limit
    lc_pen   = -0.5 * lane_change_event
    total    = progress + lc_pen + 10 * success

Programs are parsed with a lark LALR grammar into an immutable AST, bound
against the accessible-variable schema, and compiled into closures for the
per-step hot loop. Nothing in a program can reach the host language.
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field, fields
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from lark import Lark, Transformer, Token
from lark.exceptions import UnexpectedInput, VisitError

from learningFlow.driving_sim import (
    DENSITY_SV_COUNT, PADDING_DISTANCE,
    EpisodeOutcome, OutcomeKind, ScenarioConfig, StepEvents, VehicleState,
)
from learningFlow.errors import RewardEvaluationError, RewardProgramError

logger = logging.getLogger(__name__)

MAX_DEPTH = 64
MAX_NODES = 2048
MAX_SOURCE_BYTES = 64 * 1024
TOTAL_NAME = "total"

GRAMMAR = r"""
    start: _NL? statement (_NL statement)* _NL?
    statement: NAME "=" expr

    ?expr: "if" expr "then" expr "else" expr   -> if_expr
         | comparison
    ?comparison: sum
               | sum COMP_OP sum               -> compare
    ?sum: product
        | sum PLUS product                     -> add
        | sum MINUS product                    -> sub
    ?product: unary
            | product STAR unary               -> mul
            | product SLASH unary              -> div
    ?unary: atom
          | MINUS unary                        -> neg
          | PLUS unary                         -> pos
    ?atom: NUMBER                              -> number
         | NAME                                -> var
         | NAME "(" [expr ("," expr)*] ")"     -> call
         | "(" expr ")"

    COMP_OP: "<=" | ">=" | "==" | "<" | ">" | "≤" | "≥"
    PLUS: "+"
    MINUS: "-" | "−"
    STAR: "*"
    SLASH: "/"
    NAME: /[A-Za-z_][A-Za-z0-9_]*/
    NUMBER: /(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?/
    _NL: /(\r?\n[\t ]*(#[^\n]*)?)+/
    COMMENT: /#[^\n]*/

    %ignore COMMENT
    %ignore /[\t \f\r]+/
"""

# Human-readable grammar quoted in the generation prompts
GRAMMAR_EBNF = """\
program    = { statement NEWLINE } "total" "=" expr [NEWLINE] ;
statement  = name "=" expr ;
expr       = "if" expr "then" expr "else" expr | comparison ;
comparison = sum [ ("<" | "<=" | ">" | ">=" | "==") sum ] ;   (* yields 1 or 0 *)
sum        = product { ("+" | "-") product } ;
product    = unary { ("*" | "/") unary } ;
unary      = ("-" | "+") unary | atom ;
atom       = number | name | function "(" expr { "," expr } ")" | "(" expr ")" ;
function   = "abs" | "min" | "max" | "clip" | "exp" | "tanh" | "sqrt" ;
comment    = "#" { any character } end of line ;
"""

COMPARISON_ALIASES = {"≤": "<=", "≥": ">="}


def _clip(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


# name -> (callable, min arity, max arity or None for variadic)
FUNCTIONS: Dict[str, Tuple[Callable[..., float], int, Optional[int]]] = {
    "abs": (abs, 1, 1),
    "min": (min, 2, None),
    "max": (max, 2, None),
    "clip": (_clip, 3, 3),
    "exp": (math.exp, 1, 1),
    "tanh": (math.tanh, 1, 1),
    "sqrt": (math.sqrt, 1, 1),
}


# ---------------------------------------------------------------------- variables

@dataclass(frozen=True)
class VariableSpec:
    unit: str
    description: str


VARIABLE_SCHEMA: Dict[str, VariableSpec] = {
    "v_ego": VariableSpec("m/s", "current ego speed"),
    "v_limit": VariableSpec("m/s", "road speed limit"),
    "dist_to_goal": VariableSpec("m", "Euclidean distance from the ego to the goal point"),
    "lane_offset": VariableSpec("m", "signed lateral offset from the nearest lane center (left positive)"),
    "heading_error": VariableSpec("rad", "signed heading relative to the lane direction"),
    "min_gap_sv": VariableSpec("m", "distance to the nearest surrounding vehicle (100 when none)"),
    "collision": VariableSpec("0/1", "1 on the step the ego collides"),
    "success": VariableSpec("0/1", "1 on the step the ego reaches the goal region"),
    "timeout": VariableSpec("0/1", "1 on the step the episode times out"),
    "lane_change_event": VariableSpec("0/1", "1 on a step where the ego entered another lane"),
    "lane_change_times": VariableSpec("count", "cumulative number of ego lane changes this episode"),
    "N_sv": VariableSpec("count", "number of surrounding vehicles in the episode"),
    "step": VariableSpec("count", "step index within the episode"),
    "max_steps": VariableSpec("count", "episode step limit"),
}

FLAG_VARIABLES = ("collision", "success", "timeout", "lane_change_event")
TERMINAL_FLAGS = ("collision", "success", "timeout")


@dataclass(frozen=True)
class AccessibleVars:
    """Environment variables a reward program may read."""
    v_ego: float
    v_limit: float
    dist_to_goal: float
    lane_offset: float
    heading_error: float
    min_gap_sv: float
    collision: float
    success: float
    timeout: float
    lane_change_event: float
    lane_change_times: float
    N_sv: float
    step: float
    max_steps: float

    def __post_init__(self):
        for f in fields(self):
            value = float(getattr(self, f.name))
            if not math.isfinite(value):
                raise ValueError(f"accessible variable {f.name} must be finite, got {value}")
            object.__setattr__(self, f.name, value)
        for name in FLAG_VARIABLES:
            if getattr(self, name) not in (0.0, 1.0):
                raise ValueError(f"flag {name} must be 0 or 1")
        if self.min_gap_sv <= 0:
            raise ValueError("min_gap_sv must be positive")

    def as_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_step(cls, ego: VehicleState, outcome: EpisodeOutcome, events: StepEvents,
                  scenario: ScenarioConfig) -> "AccessibleVars":
        return cls(
            v_ego=ego.v,
            v_limit=scenario.v_limit,
            dist_to_goal=events.dist_to_goal,
            lane_offset=events.lane_offset,
            heading_error=events.heading_error,
            min_gap_sv=events.min_gap_sv,
            collision=float(outcome.kind == OutcomeKind.COLLISION),
            success=float(outcome.kind == OutcomeKind.SUCCESS),
            timeout=float(outcome.kind == OutcomeKind.TIMEOUT),
            lane_change_event=float(events.lane_change_event),
            lane_change_times=events.lane_change_times,
            N_sv=events.n_sv,
            step=events.step,
            max_steps=scenario.max_steps,
        )


def variable_ranges(scenario: ScenarioConfig) -> Dict[str, Tuple[float, float]]:
    """Documented value range of every accessible variable in a scenario."""
    diagonal = math.hypot(scenario.road_length, scenario.road_width)
    half_lane = scenario.lane_width / 2.0
    return {
        "v_ego": (0.0, scenario.v_limit),
        "v_limit": (scenario.v_limit, scenario.v_limit),
        "dist_to_goal": (0.0, diagonal),
        "lane_offset": (-half_lane, half_lane),
        "heading_error": (-math.pi, math.pi),
        "min_gap_sv": (0.01, PADDING_DISTANCE),
        "collision": (0.0, 1.0),
        "success": (0.0, 1.0),
        "timeout": (0.0, 1.0),
        "lane_change_event": (0.0, 1.0),
        "lane_change_times": (0.0, float(scenario.max_steps)),
        "N_sv": (0.0, float(DENSITY_SV_COUNT[scenario.task][-1])),
        "step": (0.0, float(scenario.max_steps)),
        "max_steps": (float(scenario.max_steps), float(scenario.max_steps)),
    }


# ---------------------------------------------------------------------- AST

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str
    line: Optional[int] = field(default=None, compare=False)
    column: Optional[int] = field(default=None, compare=False)


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class IfElse:
    cond: "Node"
    then: "Node"
    orelse: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    args: Tuple["Node", ...]
    line: Optional[int] = field(default=None, compare=False)
    column: Optional[int] = field(default=None, compare=False)


Node = Union[Num, Var, Neg, BinOp, Compare, IfElse, Call]


def children(node: Node) -> Tuple[Node, ...]:
    if isinstance(node, Neg):
        return (node.operand,)
    if isinstance(node, (BinOp, Compare)):
        return (node.left, node.right)
    if isinstance(node, IfElse):
        return (node.cond, node.then, node.orelse)
    if isinstance(node, Call):
        return node.args
    return ()


def node_depth(node: Node) -> int:
    kids = children(node)
    return 1 + (max(node_depth(k) for k in kids) if kids else 0)


def node_count(node: Node) -> int:
    return 1 + sum(node_count(k) for k in children(node))


def identifiers(node: Node) -> List[Var]:
    if isinstance(node, Var):
        return [node]
    found = []
    for kid in children(node):
        found.extend(identifiers(kid))
    return found


def canonical(node: Node) -> str:
    """Whitespace- and comment-independent rendering of an expression."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(neg {canonical(node.operand)})"
    if isinstance(node, (BinOp, Compare)):
        return f"({node.op} {canonical(node.left)} {canonical(node.right)})"
    if isinstance(node, IfElse):
        return f"(if {canonical(node.cond)} {canonical(node.then)} {canonical(node.orelse)})"
    return f"({node.func} {' '.join(canonical(a) for a in node.args)})"


class _AstBuilder(Transformer):
    """Turns the lark parse tree into AST nodes."""

    def start(self, statements):
        return statements

    def statement(self, items):
        name, expr = items
        return (name, expr)

    def number(self, items):
        return Num(float(items[0]))

    def var(self, items):
        token = items[0]
        return Var(str(token), token.line, token.column)

    def call(self, items):
        token = items[0]
        args = tuple(a for a in items[1:] if a is not None)
        return Call(str(token), args, token.line, token.column)

    def neg(self, items):
        return Neg(items[1])

    def pos(self, items):
        return items[1]

    def _binop(self, items):
        return BinOp(str(items[1]).replace("−", "-"), items[0], items[2])

    add = sub = mul = div = _binop

    def compare(self, items):
        op = COMPARISON_ALIASES.get(str(items[1]), str(items[1]))
        return Compare(op, items[0], items[2])

    def if_expr(self, items):
        return IfElse(*items)


_PARSER = Lark(GRAMMAR, start="start", parser="lalr")


# ---------------------------------------------------------------------- program

@dataclass(frozen=True)
class RewardBreakdown:
    total: float
    components: Dict[str, float]
    diagnostics: Tuple[str, ...] = ()


@dataclass(frozen=True)
class LintWarning:
    kind: str
    component: str
    message: str

    def __str__(self):
        return f"[{self.kind}] {self.message}"


class RewardProgram:
    """
    A validated reward program.

    Components are evaluated in declaration order; each is visible to the
    later components and to the total. Instances are immutable and safe to
    evaluate from several rollout workers.
    """

    def __init__(self, components: Sequence[Tuple[str, Node]], total: Node, source_text: str):
        self.components: Tuple[Tuple[str, Node], ...] = tuple(components)
        self.total = total
        self.source_text = source_text
        self.fingerprint = fingerprint_of(self.components, total)
        self._compiled = [(name, _compile(expr, name)) for name, expr in self.components]
        self._compiled_total = _compile(total, TOTAL_NAME)

    @property
    def component_names(self) -> List[str]:
        return [name for name, _ in self.components]

    def evaluate(self, variables: Union[AccessibleVars, Mapping[str, float]]) -> RewardBreakdown:
        env = dict(variables.as_dict() if isinstance(variables, AccessibleVars) else variables)
        diagnostics: List[str] = []
        values: Dict[str, float] = {}
        for name, fn in self._compiled:
            value = _guarded(fn, env, diagnostics, name)
            env[name] = value
            values[name] = value
        total = _guarded(self._compiled_total, env, diagnostics, TOTAL_NAME)
        return RewardBreakdown(total, values, tuple(diagnostics))

    def __repr__(self):
        return f"RewardProgram(components={self.component_names}, fingerprint={self.fingerprint})"


def _guarded(fn, env, diagnostics, name) -> float:
    try:
        value = fn(env, diagnostics)
    except OverflowError:
        raise RewardEvaluationError(name, "numeric overflow")
    except ValueError as e:
        raise RewardEvaluationError(name, f"math domain error ({e})")
    if not math.isfinite(value):
        raise RewardEvaluationError(name, f"non-finite value {value}")
    return value


def _compile(node: Node, component: str) -> Callable[[Dict[str, float], List[str]], float]:
    if isinstance(node, Num):
        value = node.value
        return lambda env, diag: value
    if isinstance(node, Var):
        name = node.name
        return lambda env, diag: env[name]
    if isinstance(node, Neg):
        operand = _compile(node.operand, component)
        return lambda env, diag: -operand(env, diag)
    if isinstance(node, BinOp):
        left, right = _compile(node.left, component), _compile(node.right, component)
        if node.op == "+":
            return lambda env, diag: left(env, diag) + right(env, diag)
        if node.op == "-":
            return lambda env, diag: left(env, diag) - right(env, diag)
        if node.op == "*":
            return lambda env, diag: left(env, diag) * right(env, diag)

        def divide(env, diag):
            numerator = left(env, diag)
            denominator = right(env, diag)
            if denominator == 0.0:
                diag.append(f"division by zero in '{component}' evaluated as 0")
                return 0.0
            return numerator / denominator
        return divide
    if isinstance(node, Compare):
        left, right = _compile(node.left, component), _compile(node.right, component)
        test = {
            "<": lambda a, b: a < b,
            "<=": lambda a, b: a <= b,
            ">": lambda a, b: a > b,
            ">=": lambda a, b: a >= b,
            "==": lambda a, b: a == b,
        }[node.op]
        return lambda env, diag: 1.0 if test(left(env, diag), right(env, diag)) else 0.0
    if isinstance(node, IfElse):
        cond = _compile(node.cond, component)
        then, orelse = _compile(node.then, component), _compile(node.orelse, component)
        return lambda env, diag: then(env, diag) if cond(env, diag) != 0.0 else orelse(env, diag)

    fn = FUNCTIONS[node.func][0]
    args = [_compile(a, component) for a in node.args]
    return lambda env, diag: float(fn(*[a(env, diag) for a in args]))


def fingerprint_of(components: Sequence[Tuple[str, Node]], total: Node) -> str:
    """64-bit blake2b hash of the canonical AST, as 16 hex digits."""
    text = "\n".join(f"{name}={canonical(expr)}" for name, expr in components)
    text += f"\n{TOTAL_NAME}={canonical(total)}"
    return hashlib.blake2b(text.encode("utf-8"), digest_size=8).hexdigest()


def fingerprint(program: RewardProgram) -> str:
    return program.fingerprint


# ---------------------------------------------------------------------- parse

def parse(source: str) -> RewardProgram:
    """
    Parse and validate reward program source.

    Args:
        source: Program text (the contents of a ```reward block)

    Returns:
        Validated RewardProgram

    Raises:
        RewardProgramError: kind is one of syntax, missing_total,
            duplicate_component, unknown_identifier, arity_mismatch,
            limit_exceeded
    """
    if len(source.encode("utf-8")) > MAX_SOURCE_BYTES:
        raise RewardProgramError("limit_exceeded", f"program source exceeds {MAX_SOURCE_BYTES} bytes")
    if not _has_statements(source):
        raise RewardProgramError("missing_total", "program is empty; a final 'total = ...' statement is required")

    try:
        tree = _PARSER.parse(source)
        statements = _AstBuilder().transform(tree)
        return _bind(statements, source)
    except UnexpectedInput as e:
        line = e.line if getattr(e, 'line', -1) and e.line > 0 else None
        column = e.column if line is not None else None
        token = getattr(e, 'token', None)
        detail = f"unexpected {token!r}" if token is not None else "unexpected input"
        raise RewardProgramError("syntax", detail, line, column)
    except RecursionError:
        raise RewardProgramError("limit_exceeded", f"expression nesting exceeds {MAX_DEPTH}")
    except VisitError as e:
        if isinstance(e.orig_exc, RecursionError):
            raise RewardProgramError("limit_exceeded", f"expression nesting exceeds {MAX_DEPTH}")
        raise


def _has_statements(source: str) -> bool:
    for line in source.splitlines():
        stripped = line.split("#", 1)[0].strip()
        if stripped:
            return True
    return False


def _bind(statements: List[Tuple[Token, Node]], source: str) -> RewardProgram:
    names = [str(name) for name, _ in statements]
    if TOTAL_NAME not in names:
        raise RewardProgramError("missing_total", "program has no 'total = ...' statement")
    total_index = names.index(TOTAL_NAME)
    if total_index != len(names) - 1:
        token = statements[total_index + 1][0]
        raise RewardProgramError("syntax", "'total' must be the final statement", token.line, token.column)

    visible = set(VARIABLE_SCHEMA)
    components = []
    nodes = 0
    for name_token, expr in statements:
        name = str(name_token)
        if name != TOTAL_NAME and (name in visible or name in FUNCTIONS):
            raise RewardProgramError("duplicate_component", f"name '{name}' is already defined",
                                     name_token.line, name_token.column, identifier=name)
        if node_depth(expr) > MAX_DEPTH:
            raise RewardProgramError("limit_exceeded", f"expression depth of '{name}' exceeds {MAX_DEPTH}",
                                     name_token.line, name_token.column)
        nodes += node_count(expr)
        if nodes > MAX_NODES:
            raise RewardProgramError("limit_exceeded", f"program exceeds {MAX_NODES} expression nodes",
                                     name_token.line, name_token.column)
        _check_names(expr, visible)
        if name == TOTAL_NAME:
            return RewardProgram(components, expr, source)
        components.append((name, expr))
        visible.add(name)
    raise AssertionError("unreachable")


def _check_names(node: Node, visible: set):
    if isinstance(node, Var):
        if node.name not in visible:
            raise RewardProgramError("unknown_identifier", f"unknown identifier '{node.name}'",
                                     node.line, node.column, identifier=node.name)
        return
    if isinstance(node, Call):
        if node.func not in FUNCTIONS:
            raise RewardProgramError("unknown_identifier", f"unknown function '{node.func}'",
                                     node.line, node.column, identifier=node.func)
        _, lo, hi = FUNCTIONS[node.func]
        if len(node.args) < lo or (hi is not None and len(node.args) > hi):
            expected = f"{lo}" if hi == lo else f"at least {lo}"
            raise RewardProgramError("arity_mismatch",
                                     f"{node.func} expects {expected} arguments, got {len(node.args)}",
                                     node.line, node.column, identifier=node.func)
    for kid in children(node):
        _check_names(kid, visible)


def evaluate(program: RewardProgram, variables: Union[AccessibleVars, Mapping[str, float]]) -> RewardBreakdown:
    """Evaluate a program; see RewardProgram.evaluate."""
    return program.evaluate(variables)


# ---------------------------------------------------------------------- lint

@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    @property
    def magnitude(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    @property
    def is_zero(self) -> bool:
        return self.lo == 0.0 and self.hi == 0.0


_UNBOUNDED = Interval(-math.inf, math.inf)


def _mul(a: float, b: float) -> float:
    if a == 0.0 or b == 0.0:
        return 0.0
    return a * b


def _hull(values: Sequence[float]) -> Interval:
    return Interval(min(values), max(values))


def _safe(fn, x: float) -> float:
    try:
        return fn(x)
    except OverflowError:
        return math.inf


def interval_of(node: Node, ranges: Mapping[str, Interval]) -> Interval:
    """Sound interval bound of an expression over variable ranges."""
    if isinstance(node, Num):
        return Interval(node.value, node.value)
    if isinstance(node, Var):
        return ranges[node.name]
    if isinstance(node, Neg):
        inner = interval_of(node.operand, ranges)
        return Interval(-inner.hi, -inner.lo)
    if isinstance(node, BinOp):
        a, b = interval_of(node.left, ranges), interval_of(node.right, ranges)
        if node.op == "+":
            return Interval(a.lo + b.lo, a.hi + b.hi)
        if node.op == "-":
            return Interval(a.lo - b.hi, a.hi - b.lo)
        if node.op == "*":
            return _hull([_mul(x, y) for x in (a.lo, a.hi) for y in (b.lo, b.hi)])
        if b.lo <= 0.0 <= b.hi:
            if b.is_zero:
                return Interval(0.0, 0.0)
            return _UNBOUNDED
        return _hull([x / y for x in (a.lo, a.hi) for y in (b.lo, b.hi)
                      if not (math.isinf(x) and math.isinf(y))] or [0.0])
    if isinstance(node, Compare):
        a, b = interval_of(node.left, ranges), interval_of(node.right, ranges)
        always, never = {
            "<": (a.hi < b.lo, a.lo >= b.hi),
            "<=": (a.hi <= b.lo, a.lo > b.hi),
            ">": (a.lo > b.hi, a.hi <= b.lo),
            ">=": (a.lo >= b.hi, a.hi < b.lo),
            "==": (a.lo == a.hi == b.lo == b.hi, a.hi < b.lo or b.hi < a.lo),
        }[node.op]
        if always:
            return Interval(1.0, 1.0)
        if never:
            return Interval(0.0, 0.0)
        return Interval(0.0, 1.0)
    if isinstance(node, IfElse):
        cond = interval_of(node.cond, ranges)
        then, orelse = interval_of(node.then, ranges), interval_of(node.orelse, ranges)
        if cond.is_zero:
            return orelse
        if cond.lo > 0.0 or cond.hi < 0.0:
            return then
        return Interval(min(then.lo, orelse.lo), max(then.hi, orelse.hi))

    args = [interval_of(a, ranges) for a in node.args]
    if node.func == "abs":
        a = args[0]
        if a.lo >= 0:
            return a
        if a.hi <= 0:
            return Interval(-a.hi, -a.lo)
        return Interval(0.0, max(-a.lo, a.hi))
    if node.func == "min":
        return Interval(min(a.lo for a in args), min(a.hi for a in args))
    if node.func == "max":
        return Interval(max(a.lo for a in args), max(a.hi for a in args))
    if node.func == "clip":
        x, lo, hi = args
        return Interval(min(max(x.lo, lo.lo), hi.lo), min(max(x.hi, lo.hi), hi.hi))
    if node.func == "exp":
        return Interval(_safe(math.exp, args[0].lo), _safe(math.exp, args[0].hi))
    if node.func == "tanh":
        return Interval(math.tanh(args[0].lo), math.tanh(args[0].hi))
    a = args[0]
    return Interval(math.sqrt(max(a.lo, 0.0)), math.sqrt(max(a.hi, 0.0)))


def _component_intervals(program: RewardProgram, ranges: Dict[str, Interval]) -> Dict[str, Interval]:
    env = dict(ranges)
    bounds = {}
    for name, expr in program.components:
        bounds[name] = env[name] = interval_of(expr, env)
    return bounds


def _references(program: RewardProgram) -> Dict[str, set]:
    """Variables each component reads, directly or through earlier components."""
    refs: Dict[str, set] = {}
    for name, expr in program.components:
        found = set()
        for var in identifiers(expr):
            found |= refs.get(var.name, {var.name})
        refs[name] = found
    return refs


def lint(program: RewardProgram, scenario: ScenarioConfig) -> List[LintWarning]:
    """
    Static checks for two reward-design flaws.

    accumulation: a per-step component whose bound, summed over max_steps,
        exceeds the reward paid on success.
    counter: a component reading the cumulative lane_change_times that is
        not gated by lane_change_event.

    Returns:
        List of warnings, in component order
    """
    base = {name: Interval(*bounds) for name, bounds in variable_ranges(scenario).items()}
    running = dict(base, **{flag: Interval(0.0, 0.0) for flag in TERMINAL_FLAGS})
    succeeded = dict(running, success=Interval(1.0, 1.0))

    per_step = _component_intervals(program, running)
    on_success = _component_intervals(program, succeeded)
    terminal = [name for name in program.component_names if per_step[name].is_zero]
    success_reward = sum(max(on_success[name].hi, 0.0) for name in terminal)

    warnings = []
    for name in program.component_names:
        bound = per_step[name]
        if bound.is_zero:
            continue
        accumulated = bound.magnitude * scenario.max_steps
        if accumulated > success_reward:
            warnings.append(LintWarning(
                "accumulation", name,
                f"component '{name}' is bounded by {bound.magnitude:g} per step; over "
                f"{scenario.max_steps} steps it can accumulate {accumulated:g}, exceeding the "
                f"success reward {success_reward:g}"))

    refs = _references(program)
    ungated = dict(base, lane_change_event=Interval(0.0, 0.0))
    without_event = _component_intervals(program, ungated)
    for name in program.component_names:
        if "lane_change_times" in refs[name] and not without_event[name].is_zero:
            warnings.append(LintWarning(
                "counter", name,
                f"component '{name}' uses the cumulative counter lane_change_times on every step; "
                f"penalize lane changes when they happen by gating with lane_change_event"))
    return warnings
