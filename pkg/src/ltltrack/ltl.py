"""Co-safe / safe LTL formulas over named atomic predicates.

Formulas are immutable trees in negation normal form: negation is only ever
applied to an atom.  The concrete syntax is ASCII::

    true  false  p  !p  a & b  a | b  X a  F a  G a  a U b

with the usual Unicode aliases (``⊤ ¬ ∧ ∨ ○ ◇ □``) accepted as well.
Binding, from tightest: unary operators, ``U`` (right associative), ``&``,
``|``.  Parentheses group.

Besides parsing and printing, the module provides formula progression (the
rewriting used to build automata) and an independent finite-trace semantics
used as a testing oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

TRUE = "true"
FALSE = "false"
ATOM = "atom"
NEG_ATOM = "neg_atom"
AND = "and"
OR = "or"
NEXT = "next"
EVENTUALLY = "eventually"
UNTIL = "until"
ALWAYS = "always"

UNARY = (NEXT, EVENTUALLY, ALWAYS)
TEMPORAL = (NEXT, EVENTUALLY, UNTIL, ALWAYS)

COSAFE = "cosafe"
SAFE = "safe"
BOTH = "both"


class LTLError(ValueError):
    pass


class FormulaSyntaxError(LTLError):
    """Raised for malformed formula text; ``pos`` is the 0-based offset."""

    def __init__(self, message, text="", pos=0):
        self.text = text
        self.pos = pos
        super().__init__(f"{message} at position {pos}")


class FragmentError(LTLError):
    pass


class UnassignedAtomError(LTLError, KeyError):
    pass


@dataclass(frozen=True)
class Formula:
    kind: str
    name: str | None = None
    children: tuple[Formula, ...] = ()

    def __str__(self):
        return pretty(self)

    def __repr__(self):
        return f"Formula({pretty(self)!r})"

    @property
    def key(self):
        """Total order used to canonicalize commutative operators."""
        return _key(self)


@lru_cache(maxsize=None)
def _key(f):
    return (f.kind, f.name or "", tuple(_key(c) for c in f.children))


T = Formula(TRUE)
F_ = Formula(FALSE)


def atom(name):
    return Formula(ATOM, name)


def neg(name):
    return Formula(NEG_ATOM, name)


def conj(*args):
    return Formula(AND, children=tuple(args))


def disj(*args):
    return Formula(OR, children=tuple(args))


def nxt(a):
    return Formula(NEXT, children=(a,))


def eventually(a):
    return Formula(EVENTUALLY, children=(a,))


def always(a):
    return Formula(ALWAYS, children=(a,))


def until(a, b):
    return Formula(UNTIL, children=(a, b))


@lru_cache(maxsize=None)
def atoms_of(f: Formula) -> frozenset[str]:
    if f.kind in (ATOM, NEG_ATOM):
        return frozenset([f.name])
    out = frozenset()
    for c in f.children:
        out |= atoms_of(c)
    return out


def depth(f: Formula) -> int:
    if not f.children:
        return 1
    return 1 + max(depth(c) for c in f.children)


def kinds_of(f: Formula) -> frozenset[str]:
    out = {f.kind}
    for c in f.children:
        out |= kinds_of(c)
    return frozenset(out)


def classify(f: Formula) -> str:
    """Return ``"cosafe"``, ``"safe"`` or ``"both"`` (no F/U/G at all).

    Raises FragmentError when the formula mixes ``G`` with ``F``/``U``.
    """
    kinds = kinds_of(f)
    has_live = bool(kinds & {EVENTUALLY, UNTIL})
    has_safe = ALWAYS in kinds
    if has_live and has_safe:
        raise FragmentError(f"{pretty(f)!r} mixes G with F/U; neither co-safe nor safe")
    if has_live:
        return COSAFE
    if has_safe:
        return SAFE
    return BOTH


def is_cosafe(f):
    return ALWAYS not in kinds_of(f)


def is_safe(f):
    return not (kinds_of(f) & {EVENTUALLY, UNTIL})


# ---------------------------------------------------------------- printing

def _wrap(f):
    s = pretty(f)
    if f.kind in (AND, OR, UNTIL):
        return f"({s})"
    return s


def pretty(f: Formula) -> str:
    k = f.kind
    if k == TRUE:
        return "true"
    if k == FALSE:
        return "false"
    if k == ATOM:
        return f.name
    if k == NEG_ATOM:
        return "!" + f.name
    if k in UNARY:
        op = {NEXT: "X", EVENTUALLY: "F", ALWAYS: "G"}[k]
        return f"{op} {_wrap(f.children[0])}"
    if k == UNTIL:
        return f"{_wrap(f.children[0])} U {_wrap(f.children[1])}"
    sep = " & " if k == AND else " | "
    return sep.join(_wrap(c) for c in f.children)


# ----------------------------------------------------------------- parsing

_ALIASES = {
    "⊤": "true", "⊥": "false", "¬": "!", "~": "!", "∧": "&", "&&": "&",
    "∨": "|", "||": "|", "○": "X", "◯": "X", "◇": "F", "♢": "F", "<>": "F",
    "□": "G", "[]": "G",
}
_KEYWORDS = {"true", "false", "X", "F", "G", "U"}


def _tokenize(text):
    toks = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        two = text[i:i + 2]
        if two in _ALIASES:
            toks.append((_ALIASES[two], i))
            i += 2
            continue
        if ch in _ALIASES:
            toks.append((_ALIASES[ch], i))
            i += 1
            continue
        if ch in "()!&|":
            toks.append((ch, i))
            i += 1
            continue
        if ch.isalpha() or ch == "_":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append((text[i:j], i))
            i = j
            continue
        raise FormulaSyntaxError(f"unexpected character {ch!r}", text, i)
    toks.append(("<end>", n))
    return toks


class _Parser:
    # or   := and ('|' and)*
    # and  := until ('&' until)*
    # until:= unary ('U' until)?
    # unary:= ('X'|'F'|'G') unary | '!' ident | primary
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i][0]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, msg):
        raise FormulaSyntaxError(msg, self.text, self.toks[self.i][1])

    def parse(self):
        if self.peek() == "<end>":
            self.fail("empty formula")
        f = self.disjunction()
        if self.peek() != "<end>":
            self.fail(f"unexpected token {self.peek()!r}")
        return f

    def disjunction(self):
        parts = [self.conjunction()]
        while self.peek() == "|":
            self.take()
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else Formula(OR, children=tuple(parts))

    def conjunction(self):
        parts = [self.until()]
        while self.peek() == "&":
            self.take()
            parts.append(self.until())
        return parts[0] if len(parts) == 1 else Formula(AND, children=tuple(parts))

    def until(self):
        left = self.unary()
        if self.peek() == "U":
            self.take()
            return Formula(UNTIL, children=(left, self.until()))
        return left

    def unary(self):
        tok = self.peek()
        if tok in ("X", "F", "G"):
            self.take()
            kind = {"X": NEXT, "F": EVENTUALLY, "G": ALWAYS}[tok]
            return Formula(kind, children=(self.unary(),))
        if tok == "!":
            self.take()
            nxt_tok = self.peek()
            if nxt_tok == "true":
                self.take()
                return F_
            if nxt_tok == "false":
                self.take()
                return T
            if nxt_tok == "!":
                self.take()
                return self.unary()
            if _is_ident(nxt_tok):
                self.take()
                return neg(nxt_tok)
            self.fail("negation is only allowed directly on an atomic predicate")
        return self.primary()

    def primary(self):
        tok, _ = self.take()
        if tok == "(":
            f = self.disjunction()
            if self.peek() != ")":
                self.fail("expected ')'")
            self.take()
            return f
        if tok == "true":
            return T
        if tok == "false":
            return F_
        if _is_ident(tok):
            return atom(tok)
        self.i -= 1
        self.fail(f"unexpected token {tok!r}")


def _is_ident(tok):
    return (tok not in _KEYWORDS and tok != "<end>"
            and (tok[0].isalpha() or tok[0] == "_"))


def parse_formula(text: str, fragment: str | None = None) -> Formula:
    """Parse ``text`` into an NNF formula.

    ``fragment`` may be ``"cosafe"`` or ``"safe"`` to require membership in
    that fragment.  Formulas mixing ``G`` with ``F``/``U`` are always
    rejected.
    """
    f = _Parser(text).parse()
    cls = classify(f)
    if fragment is not None:
        if fragment not in (COSAFE, SAFE):
            raise ValueError(f"unknown fragment {fragment!r}")
        if cls not in (fragment, BOTH):
            raise FragmentError(f"{text!r} is {cls}, expected {fragment}")
    return f


# ------------------------------------------------------------- progression

def _mk(kind, parts):
    """Flatten, constant-fold and deduplicate an n-ary And/Or."""
    absorb, unit = (F_, T) if kind == AND else (T, F_)
    flat = {}
    for p in parts:
        if p == absorb:
            return absorb
        if p == unit:
            continue
        sub = p.children if p.kind == kind else (p,)
        for s in sub:
            flat[s.key] = s
    if not flat:
        return unit
    if len(flat) == 1:
        return next(iter(flat.values()))
    return Formula(kind, children=tuple(flat[k] for k in sorted(flat)))


@lru_cache(maxsize=None)
def canonical(f: Formula) -> Formula:
    """Syntactic normal form: n-ary sorted And/Or, constants folded."""
    if f.kind in (AND, OR):
        return _mk(f.kind, [canonical(c) for c in f.children])
    if not f.children:
        return f
    return Formula(f.kind, f.name, tuple(canonical(c) for c in f.children))


def progress(f: Formula, v: Mapping[str, bool]) -> Formula:
    """Residual obligation of ``f`` after observing one valuation ``v``."""
    true_atoms = set()
    for name in atoms_of(f):
        if name not in v:
            raise UnassignedAtomError(name)
        if v[name]:
            true_atoms.add(name)
    return _progress(canonical(f), frozenset(true_atoms))


@lru_cache(maxsize=1 << 18)
def _progress(f, true_atoms):
    k = f.kind
    if k in (TRUE, FALSE):
        return f
    if k == ATOM:
        return T if f.name in true_atoms else F_
    if k == NEG_ATOM:
        return F_ if f.name in true_atoms else T
    if k in (AND, OR):
        return _mk(k, [_progress(c, true_atoms) for c in f.children])
    if k == NEXT:
        return f.children[0]
    if k == EVENTUALLY:
        return _mk(OR, [_progress(f.children[0], true_atoms), f])
    if k == ALWAYS:
        return _mk(AND, [_progress(f.children[0], true_atoms), f])
    if k == UNTIL:
        a, b = f.children
        return _mk(OR, [_progress(b, true_atoms),
                        _mk(AND, [_progress(a, true_atoms), f])])
    raise LTLError(f"unknown node kind {k!r}")


MAX_SIMPLIFY_LEAVES = 14


def _leaves(f, out):
    if f.kind in (AND, OR):
        for c in f.children:
            _leaves(c, out)
    elif f.kind not in (TRUE, FALSE):
        out[f.key] = f


def _truth(f, cols, index):
    if f.kind == TRUE:
        return np.ones(len(cols), bool)
    if f.kind == FALSE:
        return np.zeros(len(cols), bool)
    if f.kind == AND:
        return np.logical_and.reduce([_truth(c, cols, index) for c in f.children])
    if f.kind == OR:
        return np.logical_or.reduce([_truth(c, cols, index) for c in f.children])
    return cols[:, index[f.key]]


@lru_cache(maxsize=1 << 16)
def simplify(f: Formula) -> Formula:
    """Boolean normal form treating every non-And/Or subformula as a free
    variable.

    Progression of an NNF formula is a positive Boolean combination of
    such leaves, and a monotone function has a unique minimal DNF (its
    minimal true sets), which is what this returns.  That makes equal
    residuals syntactically equal, so progression closures stay finite.
    Formulas with too many leaves are returned canonicalized only.
    """
    f = canonical(f)
    leaves = {}
    _leaves(f, leaves)
    keys = sorted(leaves)
    k = len(keys)
    if k > MAX_SIMPLIFY_LEAVES:
        return f
    index = {key: i for i, key in enumerate(keys)}
    masks = np.arange(1 << k)
    cols = ((masks[:, None] >> np.arange(k)) & 1).astype(bool)
    tt = _truth(f, cols, index)
    if tt.all():
        return T
    if not tt.any():
        return F_
    minimal = tt.copy()
    for i in range(k):
        bit = 1 << i
        has = (masks & bit) != 0
        # a true point is not minimal if dropping one leaf keeps it true
        minimal[has] &= ~tt[masks[has] ^ bit]
    terms = []
    for mask in masks[minimal].tolist():
        terms.append(_mk(AND, [leaves[keys[i]] for i in range(k) if mask >> i & 1]))
    return _mk(OR, terms)


# ---------------------------------------------------------------- semantics

@dataclass
class Trace:
    """Finite sequence of timed predicate valuations."""

    times: np.ndarray
    atoms: tuple[str, ...]
    values: np.ndarray  # (len, n_atoms) bool

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=bool).reshape(len(self.times), len(self.atoms))
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("trace times must be strictly increasing")

    @classmethod
    def from_valuations(cls, valuations: Sequence[Mapping[str, bool]], times=None, atoms=None):
        if atoms is None:
            atoms = sorted(set().union(*[set(v) for v in valuations])) if valuations else []
        atoms = tuple(atoms)
        if times is None:
            times = np.arange(len(valuations), dtype=float)
        vals = np.array([[bool(v[a]) for a in atoms] for v in valuations], dtype=bool)
        return cls(times, atoms, vals.reshape(len(valuations), len(atoms)))

    def __len__(self):
        return len(self.times)

    def valuation(self, i):
        return {a: bool(self.values[i, j]) for j, a in enumerate(self.atoms)}


def _default_mode(f):
    return "weak" if ALWAYS in kinds_of(f) else "strong"


def evaluate_words(f: Formula, letters: np.ndarray, lengths: np.ndarray,
                   atoms: Sequence[str], mode: str | None = None) -> np.ndarray:
    """Vectorized finite-trace semantics for a batch of words.

    ``letters`` has shape ``(W, N, len(atoms))``; word ``w`` uses its first
    ``lengths[w]`` letters.  Obligations still pending when a word ends count
    as failed in ``"strong"`` mode (co-safe reading: satisfied iff a prefix
    witnesses it) and as met in ``"weak"`` mode (safe reading: violated iff a
    prefix witnesses it).  Returns the verdict at position 0 for every word.
    """
    mode = mode or _default_mode(f)
    if mode not in ("strong", "weak"):
        raise ValueError(f"unknown mode {mode!r}")
    end = mode == "weak"
    letters = np.asarray(letters, dtype=bool)
    lengths = np.asarray(lengths)
    W, N = letters.shape[:2]
    idx = {a: j for j, a in enumerate(atoms)}
    pos = np.arange(N + 1)[None, :]
    inside = pos < lengths[:, None]                   # (W, N+1)
    memo = {}

    def ev(g):
        if g in memo:
            return memo[g]
        k = g.kind
        if k == TRUE:
            out = np.ones((W, N + 1), bool)
        elif k == FALSE:
            out = np.zeros((W, N + 1), bool)
        elif k in (ATOM, NEG_ATOM):
            if g.name not in idx:
                raise UnassignedAtomError(g.name)
            col = np.zeros((W, N + 1), bool)
            col[:, :N] = letters[:, :, idx[g.name]]
            if k == NEG_ATOM:
                col = ~col
            out = np.where(inside, col, end)
        elif k in (AND, OR):
            vals = [ev(c) for c in g.children]
            out = np.logical_and.reduce(vals) if k == AND else np.logical_or.reduce(vals)
        elif k == NEXT:
            a = ev(g.children[0])
            shifted = np.empty_like(a)
            shifted[:, :N] = a[:, 1:]
            shifted[:, N] = end
            out = np.where(inside, shifted, end)
        elif k == EVENTUALLY:
            a = ev(g.children[0]) & inside
            acc = np.logical_or.accumulate(a[:, ::-1], axis=1)[:, ::-1]
            out = np.where(inside, acc | end, end)
        elif k == ALWAYS:
            a = ev(g.children[0]) | ~inside
            acc = np.logical_and.accumulate(a[:, ::-1], axis=1)[:, ::-1]
            out = np.where(inside, acc & end, end)
        elif k == UNTIL:
            a, b = ev(g.children[0]), ev(g.children[1])
            out = np.full((W, N + 1), end)
            for i in range(N - 1, -1, -1):
                rec = b[:, i] | (a[:, i] & out[:, i + 1])
                out[:, i] = np.where(inside[:, i], rec, end)
        else:
            raise LTLError(f"unknown node kind {k!r}")
        memo[g] = out
        return out

    return ev(f)[:, 0]


def satisfies(tr: Trace, f: Formula, mode: str | None = None) -> bool:
    """Finite-trace verdict of ``f`` on ``tr``.

    Co-safe formulas are satisfied iff some prefix of the trace witnesses
    them; formulas containing ``G`` are satisfied unless some prefix
    witnesses a violation.  ``mode`` overrides the reading.
    """
    if len(tr) == 0:
        raise ValueError("trace must be non-empty")
    letters = tr.values[None, :, :]
    return bool(evaluate_words(f, letters, np.array([len(tr)]), tr.atoms, mode)[0])


def run_progression(f: Formula, valuations: Iterable[Mapping[str, bool]]) -> Formula:
    r = canonical(f)
    for v in valuations:
        r = progress(r, v)
    return r


# ------------------------------------------------------------- enumeration

def enumerate_formulas(atoms=("p", "q"), max_depth=3, unary=(NEXT, EVENTUALLY),
                       binary=(AND, OR, UNTIL), leaves=None):
    """All formulas up to ``max_depth`` (leaves have depth 1), deduplicated
    up to commutativity of ``&`` and ``|``."""
    if leaves is None:
        leaves = [atom(a) for a in atoms] + [neg(a) for a in atoms]
    levels = [list(leaves)]
    seen = {canonical(f).key for f in leaves}
    everything = list(leaves)
    for _ in range(max_depth - 1):
        prev_all = list(everything)
        newest = set(id(f) for f in levels[-1])
        fresh = []

        def add(g):
            key = canonical(g).key if g.kind in (AND, OR) else g.key
            if key not in seen:
                seen.add(key)
                fresh.append(g)

        for a in levels[-1]:
            for k in unary:
                add(Formula(k, children=(a,)))
        for a, b in itertools.product(prev_all, repeat=2):
            if id(a) not in newest and id(b) not in newest:
                continue
            for k in binary:
                if k in (AND, OR):
                    if a.key >= b.key:
                        continue
                    add(Formula(k, children=(a, b)))
                else:
                    add(Formula(k, children=(a, b)))
        levels.append(fresh)
        everything.extend(fresh)
    return everything


def all_words(atoms: Sequence[str], max_len: int, min_len: int = 1):
    """Every word of length ``min_len..max_len`` over the full valuation
    alphabet, as ``(letters, lengths)`` arrays for :func:`evaluate_words`."""
    alphabet = list(itertools.product([False, True], repeat=len(atoms)))
    words, lengths = [], []
    for n in range(min_len, max_len + 1):
        for w in itertools.product(range(len(alphabet)), repeat=n):
            row = [alphabet[i] for i in w] + [alphabet[0]] * (max_len - n)
            words.append(row)
            lengths.append(n)
    letters = np.array(words, dtype=bool).reshape(len(words), max_len, len(atoms))
    return letters, np.array(lengths)


# --------------------------------------------------------------- predicates

@dataclass(frozen=True)
class TrackBall:
    """``||x - z_i(t)|| <= epsilon`` for reference trajectory ``trajectory``."""

    trajectory: str
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"TrackBall epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True, eq=False)
class BoxMembership:
    """``c <= A x + r <= C`` elementwise."""

    A: np.ndarray
    r: np.ndarray
    c: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        m = A.shape[0]
        vec = lambda v: np.broadcast_to(np.asarray(v, dtype=float), (m,)).copy()
        r, c, C = vec(self.r), vec(self.c), vec(self.C)
        if not np.all(c < C):
            raise ValueError("BoxMembership requires c < C elementwise")
        for name, val in (("A", A), ("r", r), ("c", c), ("C", C)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    def margin(self, x):
        q = self.A @ np.asarray(x, dtype=float) + self.r
        return float(min(np.min(q - self.c), np.min(self.C - q)))


@dataclass(frozen=True)
class PredicateDef:
    name: str
    kind: TrackBall | BoxMembership

    @property
    def is_track(self):
        return isinstance(self.kind, TrackBall)

    @property
    def is_box(self):
        return isinstance(self.kind, BoxMembership)


class UnknownTrajectoryError(LTLError, KeyError):
    pass


def eval_predicate(p: PredicateDef, x, t: float, refs: Mapping) -> bool:
    """Closed-set evaluation of a predicate at state ``x`` and time ``t``.

    ``refs`` maps trajectory ids to objects with a ``position(t)`` method.
    """
    x = np.asarray(x, dtype=float)
    k = p.kind
    if isinstance(k, TrackBall):
        if k.trajectory not in refs:
            raise UnknownTrajectoryError(f"predicate {p.name!r}: unknown trajectory {k.trajectory!r}")
        z = refs[k.trajectory].position(t)
        return bool(np.linalg.norm(x - z) <= k.epsilon)
    q = k.A @ x + k.r
    return bool(np.all(k.c <= q) and np.all(q <= k.C))
