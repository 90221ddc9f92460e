"""
LTL formulas: abstract syntax, parser, printer and derived-operator expansion.

Concrete syntax (tightest first):

    !φ  Xφ  Fφ  Gφ        unary
    φ U ψ                 right-associative
    φ & ψ                 left-associative
    φ | ψ                 left-associative
    φ -> ψ                right-associative

Atoms match ``[a-z][a-z0-9_]*``; ``true`` and ``false`` are constants;
``#`` starts a comment that runs to the end of the line.
"""
import re
from dataclasses import dataclass
from typing import FrozenSet, Iterable, List, Sequence, Tuple

from lark import Lark, Transformer
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, UnexpectedToken

# An element of 2^AP: the set of propositions that hold.
Symbol = FrozenSet[str]

ATOM_PATTERN = re.compile(r'[a-z][a-z0-9_]*\Z')


class Formula:
    """Base class of all formula nodes."""

    def __str__(self) -> str:
        return format_ltl(self)


@dataclass(frozen=True, repr=False)
class TrueConst(Formula):
    def __repr__(self) -> str:
        return 'True'


@dataclass(frozen=True, repr=False)
class Atom(Formula):
    name: str

    def __post_init__(self):
        if not isinstance(self.name, str) or not ATOM_PATTERN.match(self.name):
            raise ValueError(f"Invalid atomic proposition name: {self.name!r}")

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Not(Formula):
    operand: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Next(Formula):
    operand: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Eventually(Formula):
    operand: Formula


@dataclass(frozen=True)
class Always(Formula):
    operand: Formula


UNARY_NODES = (Not, Next, Eventually, Always)
BINARY_NODES = (And, Or, Implies, Until)
TEMPORAL_NODES = (Next, Until, Eventually, Always)


class LtlSyntaxError(ValueError):
    """Raised when formula text cannot be tokenized or parsed.

    Attributes:
        kind: 'lexer' for an unknown token, 'parse' for a structural error
        offset: byte offset into the UTF-8 encoded input
    """

    def __init__(self, kind: str, offset: int, message: str):
        super().__init__(f"{kind} error at byte {offset}: {message}")
        self.kind = kind
        self.offset = offset


LTL_GRAMMAR = r'''
?start: implication

?implication: disjunction
    | disjunction "->" implication   -> implies

?disjunction: conjunction
    | disjunction "|" conjunction    -> or_

?conjunction: until
    | conjunction "&" until          -> and_

?until: unary
    | unary "U" until                -> until

?unary: primary
    | "!" unary                      -> not_
    | "X" unary                      -> next_
    | "F" unary                      -> eventually
    | "G" unary                      -> always

?primary: TRUE                       -> true
    | FALSE                          -> false
    | NAME                           -> atom
    | "(" implication ")"

TRUE: "true"
FALSE: "false"
NAME: /[a-z][a-z0-9_]*/
COMMENT: /#[^\n]*/

%import common.WS
%ignore WS
%ignore COMMENT
'''


class _FormulaBuilder(Transformer):
    """Turns the lark parse tree into Formula nodes."""

    def true(self, _):
        return TrueConst()

    def false(self, _):
        return Not(TrueConst())

    def atom(self, children):
        return Atom(str(children[0]))

    def not_(self, children):
        return Not(children[0])

    def next_(self, children):
        return Next(children[0])

    def eventually(self, children):
        return Eventually(children[0])

    def always(self, children):
        return Always(children[0])

    def until(self, children):
        return Until(children[0], children[1])

    def and_(self, children):
        return And(children[0], children[1])

    def or_(self, children):
        return Or(children[0], children[1])

    def implies(self, children):
        return Implies(children[0], children[1])


_PARSER = Lark(LTL_GRAMMAR, parser='lalr')


def _byte_offset(text: str, char_pos: int) -> int:
    return len(text[:char_pos].encode('utf-8'))


def _error_position(text: str, err: UnexpectedInput) -> int:
    if isinstance(err, UnexpectedToken):
        if err.token.type == '$END' or err.token.start_pos is None:
            return len(text)
        return err.token.start_pos
    if isinstance(err, UnexpectedEOF):
        return len(text)
    pos = getattr(err, 'pos_in_stream', None)
    return len(text) if pos is None else pos


def parse_ltl(text: str) -> Formula:
    """
    Parse formula text into an abstract syntax tree.

    Args:
        text: Formula in the concrete syntax described in the module docstring

    Returns:
        Root Formula node

    Raises:
        LtlSyntaxError: on unknown tokens (kind 'lexer') or malformed structure
            (kind 'parse'); the offset is a byte offset
    """
    if not text or not text.strip():
        raise LtlSyntaxError('parse', 0, "empty formula")
    try:
        tree = _PARSER.parse(text)
    except UnexpectedCharacters as e:
        offset = _byte_offset(text, _error_position(text, e))
        raise LtlSyntaxError('lexer', offset, f"unexpected character {text[e.pos_in_stream]!r}") from None
    except UnexpectedInput as e:
        pos = _error_position(text, e)
        found = 'end of input' if pos >= len(text) else repr(text[pos])
        raise LtlSyntaxError('parse', _byte_offset(text, pos), f"unexpected {found}") from None
    return _FormulaBuilder().transform(tree)


def format_ltl(f: Formula) -> str:
    """Print a formula in the concrete syntax, parenthesizing every binary node."""
    if isinstance(f, TrueConst):
        return 'true'
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, Not):
        return f"!{format_ltl(f.operand)}"
    if isinstance(f, Next):
        return f"X {format_ltl(f.operand)}"
    if isinstance(f, Eventually):
        return f"F {format_ltl(f.operand)}"
    if isinstance(f, Always):
        return f"G {format_ltl(f.operand)}"
    symbol = {And: '&', Or: '|', Implies: '->', Until: 'U'}[type(f)]
    return f"({format_ltl(f.left)} {symbol} {format_ltl(f.right)})"


def children(f: Formula) -> Tuple[Formula, ...]:
    """Direct subformulas of a node."""
    if isinstance(f, UNARY_NODES):
        return (f.operand,)
    if isinstance(f, BINARY_NODES):
        return (f.left, f.right)
    return ()


def expand_derived(f: Formula) -> Formula:
    """
    Rewrite derived operators into {True, Atom, Not, And, Until, Next}.

    F φ becomes true U φ, G φ becomes !(true U !φ), φ -> ψ becomes !φ | ψ and
    φ | ψ becomes !(!φ & !ψ). Double negations are kept as written.
    """
    if isinstance(f, (TrueConst, Atom)):
        return f
    if isinstance(f, Not):
        return Not(expand_derived(f.operand))
    if isinstance(f, Next):
        return Next(expand_derived(f.operand))
    if isinstance(f, And):
        return And(expand_derived(f.left), expand_derived(f.right))
    if isinstance(f, Until):
        return Until(expand_derived(f.left), expand_derived(f.right))
    if isinstance(f, Or):
        return Not(And(Not(expand_derived(f.left)), Not(expand_derived(f.right))))
    if isinstance(f, Implies):
        return Not(And(Not(Not(expand_derived(f.left))), Not(expand_derived(f.right))))
    if isinstance(f, Eventually):
        return Until(TrueConst(), expand_derived(f.operand))
    if isinstance(f, Always):
        return Not(Until(TrueConst(), Not(expand_derived(f.operand))))
    raise TypeError(f"Not a formula node: {f!r}")


def is_core(f: Formula) -> bool:
    """True when only core operators occur in f."""
    if isinstance(f, (Or, Implies, Eventually, Always)):
        return False
    return all(is_core(c) for c in children(f))


def atomic_props(f: Formula) -> List[str]:
    """Sorted, deduplicated atom names of f."""
    names = set()
    stack = [f]
    while stack:
        node = stack.pop()
        if isinstance(node, Atom):
            names.add(node.name)
        stack.extend(children(node))
    return sorted(names)


def is_propositional(f: Formula) -> bool:
    """True when f contains no temporal operator."""
    if isinstance(f, TEMPORAL_NODES):
        return False
    return all(is_propositional(c) for c in children(f))


def evaluate_propositional(f: Formula, symbol: Iterable[str]) -> bool:
    """
    Evaluate a temporal-free formula on a symbol.

    Args:
        f: Propositional formula
        symbol: Names of the propositions that hold

    Raises:
        ValueError: if f contains a temporal operator
    """
    held = symbol if isinstance(symbol, (set, frozenset)) else frozenset(symbol)
    return _evaluate(f, held)


def _evaluate(f: Formula, held) -> bool:
    if isinstance(f, TrueConst):
        return True
    if isinstance(f, Atom):
        return f.name in held
    if isinstance(f, Not):
        return not _evaluate(f.operand, held)
    if isinstance(f, And):
        return _evaluate(f.left, held) and _evaluate(f.right, held)
    if isinstance(f, Or):
        return _evaluate(f.left, held) or _evaluate(f.right, held)
    if isinstance(f, Implies):
        return (not _evaluate(f.left, held)) or _evaluate(f.right, held)
    raise ValueError(f"Temporal operator in propositional context: {format_ltl(f)}")


def conjoin(parts: Iterable[Formula]) -> Formula:
    """Left-nested conjunction; the empty conjunction is true."""
    result = None
    for part in parts:
        result = part if result is None else And(result, part)
    return TrueConst() if result is None else result


def disjoin(parts: Iterable[Formula]) -> Formula:
    """Left-nested disjunction; the empty disjunction is false."""
    result = None
    for part in parts:
        result = part if result is None else Or(result, part)
    return Not(TrueConst()) if result is None else result


def random_formula(
    rng,
    max_depth: int = 5,
    ap_list: Sequence[str] = ('a', 'b', 'c', 'd'),
    leaf_prob: float = 0.25
) -> Formula:
    """
    Random formula over every operator, nested at most `max_depth` deep.

    Args:
        rng: numpy Generator
        max_depth: Operator nesting limit; 0 gives a leaf
        ap_list: Atom names to draw from
        leaf_prob: Chance of stopping early at each inner level
    """
    if max_depth <= 0 or rng.random() < leaf_prob:
        if rng.random() < 0.15:
            return TrueConst()
        return Atom(ap_list[int(rng.integers(0, len(ap_list)))])
    kinds = UNARY_NODES + BINARY_NODES
    kind = kinds[int(rng.integers(0, len(kinds)))]
    if kind in UNARY_NODES:
        return kind(random_formula(rng, max_depth - 1, ap_list, leaf_prob))
    return kind(
        random_formula(rng, max_depth - 1, ap_list, leaf_prob),
        random_formula(rng, max_depth - 1, ap_list, leaf_prob)
    )
