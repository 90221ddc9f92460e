"""
Reader and writer for the HOA v1 subset used by the toolkit: transition-based
generalized Büchi acceptance with explicit edge labels.
"""
import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from lark import Lark, Transformer
from lark.exceptions import LarkError, VisitError

from config.formats import FormatTemplates
from src.automata import AutomatonLike, Edge, Tgba, as_tgba
from src.ltl import ATOM_PATTERN, And, Atom, Formula, Implies, Not, Or, TrueConst


class HoaSyntaxError(ValueError):
    """Malformed HOA text."""

    def __init__(self, line: int, message: str):
        super().__init__(f"HOA line {line}: {message}")
        self.line = line


class HoaUnsupportedError(ValueError):
    """Valid HOA that uses a feature outside the supported subset."""

    def __init__(self, feature: str, line: Optional[int] = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"unsupported HOA feature: {feature}{where}")
        self.feature = feature
        self.line = line


GUARD_GRAMMAR = r'''
?start: disjunction

?disjunction: conjunction
    | disjunction "|" conjunction    -> or_

?conjunction: negation
    | conjunction "&" negation       -> and_

?negation: primary
    | "!" negation                   -> not_

?primary: "t"                        -> true
    | "f"                            -> false
    | INT                            -> ap
    | ALIAS                          -> alias
    | "(" disjunction ")"

ALIAS: /@[A-Za-z0-9_.-]+/

%import common.INT
%import common.WS
%ignore WS
'''

_GUARD_PARSER = Lark(GUARD_GRAMMAR, parser='lalr')


class _GuardBuilder(Transformer):
    def __init__(self, ap_list: List[str]):
        super().__init__()
        self.ap_list = ap_list

    def true(self, _):
        return TrueConst()

    def false(self, _):
        return Not(TrueConst())

    def ap(self, children):
        index = int(children[0])
        if index >= len(self.ap_list):
            raise IndexError(f"proposition index {index} not declared in AP")
        return Atom(self.ap_list[index])

    def alias(self, children):
        raise NotImplementedError(str(children[0]))

    def not_(self, children):
        return Not(children[0])

    def and_(self, children):
        return And(children[0], children[1])

    def or_(self, children):
        return Or(children[0], children[1])


def _parse_guard(text: str, ap_list: List[str], line: int) -> Formula:
    try:
        return _GuardBuilder(ap_list).transform(_GUARD_PARSER.parse(text))
    except VisitError as e:
        if isinstance(e.orig_exc, NotImplementedError):
            raise HoaUnsupportedError(f"aliases ({e.orig_exc})", line) from None
        raise HoaSyntaxError(line, str(e.orig_exc)) from None
    except LarkError as e:
        raise HoaSyntaxError(line, f"bad guard [{text}]: {e.__class__.__name__}") from None


_TOKEN = re.compile(r'"(?:[^"\\]|\\.)*"|\S+')
_EDGE = re.compile(
    r'^\[(?P<guard>[^\]]*)\]\s*(?P<dst>[0-9]+(?:\s*&\s*[0-9]+)*)\s*(?:\{(?P<acc>[^}]*)\})?\s*$'
)
_STATE = re.compile(
    r'^State:\s*(?P<label>\[[^\]]*\])?\s*(?P<id>[0-9]+)\s*(?P<name>"(?:[^"\\]|\\.)*")?\s*(?P<acc>\{[^}]*\})?\s*$'
)
_INF_TERM = re.compile(r'Inf\(\s*([0-9]+)\s*\)')

_UNSUPPORTED_ACC_NAMES = {
    'Rabin', 'generalized-Rabin', 'Streett', 'parity', 'co-Buchi',
    'generalized-co-Buchi', 'all', 'none'
}


def _strip_comments(text: str) -> str:
    # keep newlines so line numbers stay valid
    return re.sub(r'/\*.*?\*/', lambda m: '\n' * m.group(0).count('\n'), text, flags=re.DOTALL)


def _unquote(token: str) -> str:
    if len(token) >= 2 and token[0] == '"' and token[-1] == '"':
        return re.sub(r'\\(.)', r'\1', token[1:-1])
    return token


def _parse_acceptance(rest: str, line: int) -> int:
    tokens = rest.split(None, 1)
    if not tokens or not tokens[0].isdigit():
        raise HoaSyntaxError(line, "Acceptance needs a set count")
    count = int(tokens[0])
    condition = tokens[1].strip() if len(tokens) > 1 else ''
    if 'Fin' in condition:
        raise HoaUnsupportedError('Fin acceptance', line)
    if '|' in condition:
        raise HoaUnsupportedError('disjunctive acceptance (Rabin/parity style)', line)
    if count < 1:
        raise HoaUnsupportedError('acceptance with zero sets', line)
    indices = [int(i) for i in _INF_TERM.findall(condition)]
    leftover = _INF_TERM.sub('', condition)
    if re.sub(r'[\s&()]', '', leftover):
        raise HoaSyntaxError(line, f"cannot read acceptance condition {condition!r}")
    if sorted(indices) != list(range(count)):
        raise HoaSyntaxError(line, f"acceptance must be Inf(0)&...&Inf({count - 1})")
    return count


def parse_hoa(text: str) -> Tgba:
    """
    Parse HOA v1 text into a Tgba.

    Args:
        text: Automaton with generalized Büchi acceptance on transitions

    Returns:
        Tgba whose acceptance sets are built from the edge marks

    Raises:
        HoaSyntaxError: malformed header or body, with line number
        HoaUnsupportedError: a valid HOA feature outside the subset
    """
    lines = _strip_comments(text).splitlines()
    num_states: Optional[int] = None
    start: Optional[int] = None
    ap_list: Optional[List[str]] = None
    num_sets: Optional[int] = None
    start_line = 0
    cursor = 0
    while cursor < len(lines) and not lines[cursor].strip():
        cursor += 1
    if cursor >= len(lines) or not lines[cursor].strip().startswith('HOA:'):
        raise HoaSyntaxError(cursor + 1, "expected 'HOA: v1' header")
    if lines[cursor].split(':', 1)[1].strip() != 'v1':
        raise HoaUnsupportedError(f"version {lines[cursor].split(':', 1)[1].strip()}", cursor + 1)

    # Header
    cursor += 1
    while cursor < len(lines):
        raw = lines[cursor].strip()
        lineno = cursor + 1
        cursor += 1
        if not raw:
            continue
        if raw == '--BODY--':
            break
        if ':' not in raw:
            raise HoaSyntaxError(lineno, f"expected 'key: value', got {raw!r}")
        key, rest = raw.split(':', 1)
        key, rest = key.strip(), rest.strip()
        tokens = _TOKEN.findall(rest)
        if key == 'States':
            if len(tokens) != 1 or not tokens[0].isdigit():
                raise HoaSyntaxError(lineno, "States needs one integer")
            num_states = int(tokens[0])
        elif key == 'Start':
            if '&' in rest:
                raise HoaUnsupportedError('alternation (conjunctive initial states)', lineno)
            if start is not None:
                raise HoaUnsupportedError('multiple initial states', lineno)
            if len(tokens) != 1 or not tokens[0].isdigit():
                raise HoaSyntaxError(lineno, "Start needs one state index")
            start = int(tokens[0])
            start_line = lineno
        elif key == 'AP':
            if not tokens or not tokens[0].isdigit():
                raise HoaSyntaxError(lineno, "AP needs a count")
            names = [_unquote(tok) for tok in tokens[1:]]
            if len(names) != int(tokens[0]):
                raise HoaSyntaxError(lineno, f"AP declares {tokens[0]} names but lists {len(names)}")
            for ap in names:
                if not ATOM_PATTERN.match(ap):
                    raise HoaUnsupportedError(f"proposition name {ap!r}", lineno)
            ap_list = names
        elif key == 'Acceptance':
            num_sets = _parse_acceptance(rest, lineno)
        elif key == 'acc-name':
            acc_name = tokens[0] if tokens else ''
            if acc_name in _UNSUPPORTED_ACC_NAMES:
                raise HoaUnsupportedError(f"acc-name {acc_name}", lineno)
            if acc_name not in ('Buchi', 'generalized-Buchi'):
                raise HoaSyntaxError(lineno, f"unknown acc-name {acc_name!r}")
        elif key == 'Alias':
            raise HoaUnsupportedError('aliases', lineno)
        elif key == 'properties':
            if 'state-acc' in tokens:
                raise HoaUnsupportedError('state-based acceptance', lineno)
            if 'univ-branch' in tokens:
                raise HoaUnsupportedError('alternation (universal branching)', lineno)
            if 'implicit-labels' in tokens:
                raise HoaUnsupportedError('implicit labels', lineno)
            if 'state-labels' in tokens:
                raise HoaUnsupportedError('state labels', lineno)
        elif key[:1].isupper():
            raise HoaUnsupportedError(f"header item {key}", lineno)
        # other lowercase header items are informational

    else:
        raise HoaSyntaxError(len(lines), "missing --BODY--")

    if ap_list is None:
        ap_list = []
    if num_sets is None:
        raise HoaSyntaxError(cursor, "missing Acceptance header")
    if start is None:
        raise HoaSyntaxError(cursor, "missing Start header")

    # Body
    edges: List[Edge] = []
    acceptance: List[set] = [set() for _ in range(num_sets)]
    state_names: Dict[int, str] = {}
    # line where each state index first appears
    state_lines: Dict[int, int] = {}
    current: Optional[int] = None
    seen_states = set()
    ended = False
    while cursor < len(lines):
        raw = lines[cursor].strip()
        lineno = cursor + 1
        cursor += 1
        if not raw:
            continue
        if raw == '--END--':
            ended = True
            break
        if raw.startswith('State:'):
            match = _STATE.match(raw)
            if not match:
                raise HoaSyntaxError(lineno, f"bad state line {raw!r}")
            if match.group('label'):
                raise HoaUnsupportedError('state labels', lineno)
            if match.group('acc'):
                raise HoaUnsupportedError('state-based acceptance', lineno)
            current = int(match.group('id'))
            if current in seen_states:
                raise HoaSyntaxError(lineno, f"state {current} declared twice")
            seen_states.add(current)
            state_lines.setdefault(current, lineno)
            if match.group('name'):
                state_names[current] = _unquote(match.group('name'))
            continue
        if current is None:
            raise HoaSyntaxError(lineno, "edge before any State: line")
        if not raw.startswith('['):
            raise HoaUnsupportedError('implicit labels', lineno)
        match = _EDGE.match(raw)
        if not match:
            raise HoaSyntaxError(lineno, f"bad edge line {raw!r}")
        if '&' in match.group('dst'):
            raise HoaUnsupportedError('alternation (universal branching)', lineno)
        guard = _parse_guard(match.group('guard'), ap_list, lineno)
        index = len(edges)
        edges.append(Edge(current, guard, int(match.group('dst'))))
        state_lines.setdefault(int(match.group('dst')), lineno)
        for mark in (match.group('acc') or '').split():
            if not mark.isdigit() or int(mark) >= num_sets:
                raise HoaSyntaxError(lineno, f"acceptance mark {mark!r} outside 0..{num_sets - 1}")
            acceptance[int(mark)].add(index)
    if not ended:
        raise HoaSyntaxError(len(lines), "missing --END--")

    highest = max([start] + list(seen_states) + [e.dst for e in edges])
    if num_states is None:
        num_states = highest + 1
    elif highest >= num_states:
        raise HoaSyntaxError(
            state_lines.get(highest, start_line),
            f"state {highest} exceeds declared States: {num_states}"
        )

    names: Tuple[Optional[str], ...] = ()
    if state_names:
        names = tuple(state_names.get(q) for q in range(num_states))
    return Tgba(
        ap_list=tuple(ap_list),
        num_states=num_states,
        initial=start,
        edges=tuple(edges),
        acceptance=tuple(frozenset(s) for s in acceptance),
        state_names=names
    )


def format_guard(guard: Formula, ap_list) -> str:
    """Print a propositional guard with HOA proposition indices."""
    index = {ap: i for i, ap in enumerate(ap_list)}

    def render(f: Formula) -> str:
        if isinstance(f, TrueConst):
            return 't'
        if isinstance(f, Not) and isinstance(f.operand, TrueConst):
            return 'f'
        if isinstance(f, Atom):
            return str(index[f.name])
        if isinstance(f, Not):
            return '!' + render(f.operand)
        if isinstance(f, And):
            return f"({render(f.left)} & {render(f.right)})"
        if isinstance(f, Or):
            return f"({render(f.left)} | {render(f.right)})"
        if isinstance(f, Implies):
            return f"(!{render(f.left)} | {render(f.right)})"
        raise ValueError(f"Guard is not propositional: {f}")

    text = render(guard)
    # outer parentheses are redundant inside [ ]
    if text.startswith('(') and text.endswith(')') and _balanced(text[1:-1]):
        text = text[1:-1]
    return text


def _balanced(text: str) -> bool:
    depth = 0
    for ch in text:
        depth += ch == '('
        depth -= ch == ')'
        if depth < 0:
            return False
    return depth == 0


def emit_hoa(a: AutomatonLike, name: str = 'automaton') -> str:
    """
    Write an automaton as HOA v1 text.

    Edges are grouped under their source state, keeping their relative order.
    ε-edges of an Ldba have no HOA form and are not written.
    """
    t = as_tgba(a)
    out = [FormatTemplates.format_hoa_header(
        name=name,
        num_states=t.num_states,
        initial=t.initial,
        ap_list=list(t.ap_list),
        num_sets=t.m
    ), '--BODY--\n']
    for q in range(t.num_states):
        label = t.state_names[q] if t.state_names and t.state_names[q] else None
        out.append(f'State: {q} {FormatTemplates.quote(label)}\n' if label else f'State: {q}\n')
        for idx in t.edges_from(q):
            edge = t.edges[idx]
            marks = sorted(t.marks(idx))
            acc = ' {' + ' '.join(str(i) for i in marks) + '}' if marks else ''
            out.append(f"  [{format_guard(edge.guard, t.ap_list)}] {edge.dst}{acc}\n")
    out.append('--END--\n')
    return ''.join(out)


def load_hoa(path: Union[str, Path]) -> Tgba:
    """Read and parse an HOA file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"HOA file not found: {path}")
    return parse_hoa(path.read_text(encoding='utf-8'))


def save_hoa(a: AutomatonLike, path: Union[str, Path], name: str = 'automaton') -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(emit_hoa(a, name=name), encoding='utf-8')
    return path
