"""QPS reader/writer and conversion to the standard form Ax = b, l <= x <= u.

Parsing is free-format: section keywords start in column 1, data lines are
split on whitespace. QUADOBJ lists the lower triangle of Q (objective
1/2 x'Qx); QMATRIX lists the full symmetric matrix and only its lower
triangle is kept.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import InfeasibleBounds, ParseError
from .qp_dual import QpProblem
from .schemas import ConversionReport

logger = logging.getLogger(__name__)

SECTIONS = ('NAME', 'OBJSENSE', 'ROWS', 'COLUMNS', 'RHS', 'RANGES', 'BOUNDS', 'QUADOBJ', 'QMATRIX', 'ENDATA')
ROW_TYPES = ('N', 'E', 'L', 'G')
VALUE_BOUNDS = ('UP', 'LO', 'FX')
FLAG_BOUNDS = ('FR', 'MI', 'PL')
INTEGER_BOUNDS = ('BV', 'UI', 'LI', 'SC')


@dataclass
class QpsFile:
    """Parsed QPS content, names kept in declaration order."""

    name: str = ''
    objective_row: str | None = None
    rows: dict[str, str] = field(default_factory=dict)
    columns: list[str] = field(default_factory=list)
    entries: dict[tuple[str, str], float] = field(default_factory=dict)
    rhs: dict[str, float] = field(default_factory=dict)
    ranges: dict[str, float] = field(default_factory=dict)
    bounds: list[tuple[str, str, float | None]] = field(default_factory=list)
    quadratic: dict[tuple[str, str], float] = field(default_factory=dict)


def _number(token: str, line_number: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"Malformed number '{token}'", line_number) from None


def _pairs(tokens: list[str], line_number: int) -> list[tuple[str, float]]:
    if len(tokens) not in (2, 4):
        raise ParseError(f"Expected one or two (name, value) pairs, got {tokens}", line_number)
    return [(tokens[i], _number(tokens[i + 1], line_number)) for i in range(0, len(tokens), 2)]


class _Parser:
    def __init__(self, strict_quadobj: bool):
        self.strict_quadobj = strict_quadobj
        self.qps = QpsFile()
        self.column_index: dict[str, int] = {}
        self.ignored_rows: set[str] = set()
        self.section = None

    def resolve_row(self, row: str, line_number: int, allow_objective: bool = True) -> str | None:
        """Declared row name, None for an ignored N row."""
        if row in self.ignored_rows:
            return None
        if row == self.qps.objective_row:
            if not allow_objective:
                raise ParseError(f"Row '{row}' is the objective row", line_number)
            return row
        if row not in self.qps.rows:
            raise ParseError(f"Unknown row '{row}'", line_number)
        return row

    def resolve_column(self, column: str, line_number: int) -> str:
        if column not in self.column_index:
            raise ParseError(f"Unknown column '{column}'", line_number)
        return column

    def header(self, tokens: list[str], line_number: int):
        keyword = tokens[0].upper()
        if keyword not in SECTIONS:
            raise ParseError(f"Unknown section '{tokens[0]}'", line_number)
        self.section = keyword
        if keyword == 'NAME':
            self.qps.name = tokens[1] if len(tokens) > 1 else ''
        elif keyword == 'OBJSENSE' and len(tokens) > 1:
            self.sense(tokens[1], line_number)
        elif keyword in ('RHS', 'RANGES', 'BOUNDS') and len(tokens) > 1:
            raise ParseError(f"Unexpected tokens after {keyword}", line_number)

    def sense(self, token: str, line_number: int):
        sense = token.upper()
        if sense in ('MAX', 'MAXIMIZE'):
            raise ParseError("OBJSENSE MAX is not supported", line_number)
        if sense not in ('MIN', 'MINIMIZE'):
            raise ParseError(f"Unknown objective sense '{token}'", line_number)

    def data(self, tokens: list[str], line_number: int):
        handler = {
            'OBJSENSE': lambda: self.sense(tokens[0], line_number),
            'ROWS': lambda: self.row(tokens, line_number),
            'COLUMNS': lambda: self.column(tokens, line_number),
            'RHS': lambda: self.rhs_or_range(tokens, line_number, self.qps.rhs, 'RHS'),
            'RANGES': lambda: self.rhs_or_range(tokens, line_number, self.qps.ranges, 'RANGES'),
            'BOUNDS': lambda: self.bound(tokens, line_number),
            'QUADOBJ': lambda: self.quadratic(tokens, line_number, full=False),
            'QMATRIX': lambda: self.quadratic(tokens, line_number, full=True),
        }.get(self.section)
        if handler is None:
            raise ParseError(f"Data line outside of a data section: {' '.join(tokens)}", line_number)
        handler()

    def row(self, tokens, line_number):
        if len(tokens) != 2:
            raise ParseError(f"ROWS entry needs a type and a name, got {tokens}", line_number)
        row_type, name = tokens[0].upper(), tokens[1]
        if row_type not in ROW_TYPES:
            raise ParseError(f"Unknown row type '{tokens[0]}'", line_number)
        if name in self.qps.rows or name == self.qps.objective_row or name in self.ignored_rows:
            raise ParseError(f"Duplicate row '{name}'", line_number)
        if row_type == 'N':
            if self.qps.objective_row is None:
                self.qps.objective_row = name
            else:
                self.ignored_rows.add(name)
                logger.warning(f"Ignoring additional objective row '{name}'")
            return
        self.qps.rows[name] = row_type

    def column(self, tokens, line_number):
        if any(token.upper() == "'MARKER'" for token in tokens):
            raise ParseError("Integer MARKER lines are not supported", line_number)
        column = tokens[0]
        if column not in self.column_index:
            self.column_index[column] = len(self.qps.columns)
            self.qps.columns.append(column)
        for row, value in _pairs(tokens[1:], line_number):
            row = self.resolve_row(row, line_number)
            if row is None:
                continue
            key = (column, row)
            self.qps.entries[key] = self.qps.entries.get(key, 0.0) + value

    def rhs_or_range(self, tokens, line_number, target, section):
        # an odd token count carries a leading set name
        body = tokens[1:] if len(tokens) % 2 else tokens
        for row, value in _pairs(body, line_number):
            row = self.resolve_row(row, line_number, allow_objective=section == 'RHS')
            if row is not None:
                target[row] = value

    def bound(self, tokens, line_number):
        kind = tokens[0].upper()
        if kind in INTEGER_BOUNDS:
            raise ParseError(f"Integer bound type '{tokens[0]}' is not supported", line_number)
        if kind in VALUE_BOUNDS:
            if len(tokens) == 3:
                column, value = tokens[1], tokens[2]
            elif len(tokens) == 4:
                column, value = tokens[2], tokens[3]
            else:
                raise ParseError(f"Malformed {kind} bound: {tokens}", line_number)
            self.qps.bounds.append((kind, self.resolve_column(column, line_number), _number(value, line_number)))
        elif kind in FLAG_BOUNDS:
            if len(tokens) == 2:
                column = tokens[1]
            elif len(tokens) == 3:
                column = tokens[1] if tokens[1] in self.column_index and tokens[2] not in self.column_index else tokens[2]
            elif len(tokens) == 4:
                column = tokens[2]
            else:
                raise ParseError(f"Malformed {kind} bound: {tokens}", line_number)
            self.qps.bounds.append((kind, self.resolve_column(column, line_number), None))
        else:
            raise ParseError(f"Unknown bound type '{tokens[0]}'", line_number)

    def quadratic(self, tokens, line_number, full: bool):
        if len(tokens) != 3:
            raise ParseError(f"Quadratic entry needs two columns and a value, got {tokens}", line_number)
        first = self.resolve_column(tokens[0], line_number)
        second = self.resolve_column(tokens[1], line_number)
        value = _number(tokens[2], line_number)
        i, j = self.column_index[first], self.column_index[second]
        if i < j:
            if full:
                return
            if self.strict_quadobj:
                raise ParseError(f"QUADOBJ entry ({first}, {second}) lies above the diagonal", line_number)
            first, second = second, first
        key = (first, second)
        self.qps.quadratic[key] = self.qps.quadratic.get(key, 0.0) + value


def parse_qps(text, strict_quadobj: bool = False) -> QpsFile:
    """Parse QPS text (str or bytes)."""
    if isinstance(text, bytes):
        text = text.decode('latin-1')
    parser = _Parser(strict_quadobj)
    ended = False
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if not line.strip() or line.lstrip().startswith('*'):
            continue
        tokens = line.split()
        if not line[0].isspace():
            parser.header(tokens, line_number)
            if parser.section == 'ENDATA':
                ended = True
                break
        else:
            parser.data(tokens, line_number)
    if not ended:
        logger.warning(f"QPS input {parser.qps.name or '<unnamed>'} has no ENDATA marker")
    if parser.qps.objective_row is None:
        raise ParseError("No objective (N) row declared")
    return parser.qps


def _fmt(value: float) -> str:
    return repr(float(value) + 0.0)


def write_qps(qps: QpsFile) -> str:
    """Serialize to free-format QPS that ``parse_qps`` reads back to an equal QpsFile."""
    lines = [f"NAME          {qps.name}".rstrip(), 'ROWS', f" N  {qps.objective_row}"]
    lines += [f" {kind}  {row}" for row, kind in qps.rows.items()]
    lines.append('COLUMNS')
    row_order = [qps.objective_row, *qps.rows]
    for column in qps.columns:
        for row in row_order:
            if (column, row) in qps.entries:
                lines.append(f"    {column}  {row}  {_fmt(qps.entries[column, row])}")
    if qps.rhs:
        lines.append('RHS')
        lines += [f"    RHS  {row}  {_fmt(value)}" for row, value in qps.rhs.items()]
    if qps.ranges:
        lines.append('RANGES')
        lines += [f"    RNG  {row}  {_fmt(value)}" for row, value in qps.ranges.items()]
    if qps.bounds:
        lines.append('BOUNDS')
        for kind, column, value in qps.bounds:
            lines.append(f" {kind} BND  {column}" + ('' if value is None else f"  {_fmt(value)}"))
    if qps.quadratic:
        lines.append('QUADOBJ')
        lines += [f"    {a}  {b}  {_fmt(value)}" for (a, b), value in qps.quadratic.items()]
    lines.append('ENDATA')
    return '\n'.join(lines) + '\n'


def _column_bounds(qps: QpsFile, index: dict[str, int]):
    n = len(qps.columns)
    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    translations = []
    for kind, column, value in qps.bounds:
        j = index[column]
        if kind == 'UP':
            if value < 0 and lower[j] == 0.0:
                lower[j] = -np.inf
                translations.append(f"{column}: negative UP bound, lower bound set to -inf")
                logger.warning(f"Negative UP bound on {column} with zero lower bound; lower bound set to -inf")
            upper[j] = value
        elif kind == 'LO':
            lower[j] = value
        elif kind == 'FX':
            lower[j] = upper[j] = value
        elif kind == 'FR':
            lower[j], upper[j] = -np.inf, np.inf
        elif kind == 'MI':
            lower[j] = -np.inf
        elif kind == 'PL':
            upper[j] = np.inf
    for j, column in enumerate(qps.columns):
        if lower[j] > upper[j]:
            raise InfeasibleBounds(column, float(lower[j]), float(upper[j]))
    return lower, upper, translations


def _row_interval(kind: str, rhs: float, rng: float | None):
    """(lo, hi) for an inequality or ranged row, None for an equality."""
    if kind == 'E':
        if rng is None or rng == 0.0:
            return None
        return (rhs, rhs + rng) if rng > 0 else (rhs + rng, rhs)
    if kind == 'L':
        return (-math.inf if rng is None else rhs - abs(rng), rhs)
    return (rhs, math.inf if rng is None else rhs + abs(rng))


def to_standard_form(qps: QpsFile, split_ranges: bool = False):
    """Convert to (QpProblem, ConversionReport).

    Each inequality row gets a slack: ``a'x + s = hi`` for rows bounded above,
    ``a'x - s = lo`` for rows bounded below, s >= 0. A ranged row [lo, hi]
    becomes ``a'x + s = hi`` with s in [0, hi - lo], or with ``split_ranges``
    two rows with one nonnegative slack each. Slack columns follow the
    original columns in row order.
    """
    index = {column: j for j, column in enumerate(qps.columns)}
    n0 = len(qps.columns)
    lower0, upper0, translations = _column_bounds(qps, index)

    by_row: dict[str, list[tuple[int, float]]] = {row: [] for row in qps.rows}
    c = np.zeros(n0)
    for (column, row), value in qps.entries.items():
        if row == qps.objective_row:
            c[index[column]] += value
        else:
            by_row[row].append((index[column], value))

    a_rows, a_cols, a_vals, b = [], [], [], []
    slack_lower, slack_upper = [], []
    m_eq = m_ineq = ranged = 0

    def add_row(coefficients, rhs, slack_sign=0.0, slack_range=(0.0, math.inf)):
        i = len(b)
        for j, value in coefficients:
            a_rows.append(i)
            a_cols.append(j)
            a_vals.append(value)
        if slack_sign:
            a_rows.append(i)
            a_cols.append(n0 + len(slack_lower))
            a_vals.append(slack_sign)
            slack_lower.append(slack_range[0])
            slack_upper.append(slack_range[1])
        b.append(rhs)

    for row, kind in qps.rows.items():
        coefficients = by_row[row]
        rhs = qps.rhs.get(row, 0.0)
        interval = _row_interval(kind, rhs, qps.ranges.get(row))
        if interval is None:
            add_row(coefficients, rhs)
            m_eq += 1
            continue
        lo, hi = interval
        if math.isinf(lo):
            add_row(coefficients, hi, 1.0)
            m_ineq += 1
        elif math.isinf(hi):
            add_row(coefficients, lo, -1.0)
            m_ineq += 1
        elif split_ranges:
            add_row(coefficients, hi, 1.0)
            add_row(coefficients, lo, -1.0)
            m_ineq += 2
            ranged += 1
        else:
            add_row(coefficients, hi, 1.0, (0.0, hi - lo))
            m_ineq += 1
            ranged += 1

    slacks = len(slack_lower)
    n = n0 + slacks
    m = len(b)
    A = sp.coo_matrix((a_vals, (a_rows, a_cols)), shape=(m, n)).tocsc()
    A.sum_duplicates()
    A.eliminate_zeros()

    q_rows, q_cols, q_vals = [], [], []
    for (first, second), value in qps.quadratic.items():
        i, j = index[first], index[second]
        q_rows.append(i)
        q_cols.append(j)
        q_vals.append(value)
        if i != j:
            q_rows.append(j)
            q_cols.append(i)
            q_vals.append(value)
    Q = sp.coo_matrix((q_vals, (q_rows, q_cols)), shape=(n, n)).tocsc()
    Q.sum_duplicates()
    Q.eliminate_zeros()

    objective_constant = -qps.rhs.get(qps.objective_row, 0.0) + 0.0
    problem = QpProblem(
        Q=Q,
        A=A,
        b=np.asarray(b, dtype=np.float64),
        c=np.concatenate([c, np.zeros(slacks)]),
        lower=np.concatenate([lower0, np.asarray(slack_lower, dtype=np.float64)]),
        upper=np.concatenate([upper0, np.asarray(slack_upper, dtype=np.float64)]),
        objective_constant=objective_constant,
        name=qps.name,
    )
    report = ConversionReport(
        name=qps.name,
        m_eq=m_eq,
        m_ineq=m_ineq,
        n_original=n0,
        slacks=slacks,
        ranged_rows=ranged,
        bound_translations=tuple(translations),
        objective_constant=objective_constant,
    )
    logger.debug(f"Converted {qps.name}: {m_eq} equality and {m_ineq} inequality rows, {slacks} slacks")
    return problem, report


def dump_problem(problem: QpProblem) -> str:
    """Normalized text dump of a standard-form problem, for diffing.

    One record per line: NAME, DIMS m n, OBJCONST, every C j v, the lower
    triangle of Q as Q i j v and A as A i j v (both in column-major order),
    every B i v, BOUNDS j l u per column, then END.
    """
    lines = [f"NAME {problem.name}".rstrip(), f"DIMS {problem.m} {problem.n}", f"OBJCONST {_fmt(problem.objective_constant)}"]
    lines += [f"C {j} {_fmt(v)}" for j, v in enumerate(problem.c)]
    lower_q = sp.tril(problem.Q, format='csc')
    lower_q.eliminate_zeros()
    lower_q.sort_indices()
    for j in range(lower_q.shape[1]):
        for p in range(lower_q.indptr[j], lower_q.indptr[j + 1]):
            lines.append(f"Q {lower_q.indices[p]} {j} {_fmt(lower_q.data[p])}")
    A = problem.A.copy()
    A.eliminate_zeros()
    A.sort_indices()
    for j in range(A.shape[1]):
        for p in range(A.indptr[j], A.indptr[j + 1]):
            lines.append(f"A {A.indices[p]} {j} {_fmt(A.data[p])}")
    lines += [f"B {i} {_fmt(v)}" for i, v in enumerate(problem.b)]
    lines += [f"BOUNDS {j} {_fmt(lo)} {_fmt(hi)}" for j, (lo, hi) in enumerate(zip(problem.lower, problem.upper))]
    lines.append('END')
    return '\n'.join(lines) + '\n'


def read_qps_file(path, strict_quadobj: bool = False) -> QpsFile:
    with open(path, 'rb') as handle:
        return parse_qps(handle.read(), strict_quadobj=strict_quadobj)
