"""Free noncommutative algebra with exact coefficients, rewriting and matrix realization.

An expression is a finite sum ``sum_w c_w * w`` where every coefficient is an
exact Gaussian rational and every word ``w`` is a product of atoms: generator
symbols, primed generators (derivative order tracked as an integer), or formal
inverses of single atoms.  Central parameters (hbar, lambda, kappa, ...)
commute with everything and are stored as exact integer exponents inside the
word, so lambda**-1 and symbolic zero tests stay exact.

All values are immutable; operations return new objects and are safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

# Names treated as central scalar parameters.  They commute with every
# generator, are constants under the derivation, and may carry negative
# exponents (lambda^-1 appears in the Lax matrices).
CENTRAL_NAMES = frozenset(
    {"lambda", "hbar", "kappa", "beta", "C", "c", "alpha0", "alpha1"}
)

DEFAULT_BUDGET = 10**6


class AlgebraError(Exception):
    """Base class for symbolic-layer failures."""


class FormalInverseError(AlgebraError):
    """Raised when a formal inverse is requested for a non-atom expression."""


class UnboundAtomError(AlgebraError):
    """Raised by realize() when an atom has no binding in the environment."""


class SingularMatrixError(AlgebraError):
    """Raised when a matrix inverse fails the conditioning check."""


class RewriteBudgetError(AlgebraError):
    """Raised when normal_form exceeds its rewrite step budget."""


# ---------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class GaussRat:
    """Gaussian rational a + b*i with exact Fraction components."""

    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    @staticmethod
    def of(re: int | str | Fraction = 0, im: int | str | Fraction = 0) -> "GaussRat":
        return GaussRat(Fraction(re), Fraction(im))

    def __add__(self, other):
        if not isinstance(other, GaussRat):
            return NotImplemented
        return GaussRat(self.re + other.re, self.im + other.im)

    def __sub__(self, other):
        if not isinstance(other, GaussRat):
            return NotImplemented
        return GaussRat(self.re - other.re, self.im - other.im)

    def __neg__(self) -> "GaussRat":
        return GaussRat(-self.re, -self.im)

    def __mul__(self, other):
        if not isinstance(other, GaussRat):
            return NotImplemented
        return GaussRat(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    def inverse(self) -> "GaussRat":
        n = self.re * self.re + self.im * self.im
        if n == 0:
            raise ZeroDivisionError("inverse of zero coefficient")
        return GaussRat(self.re / n, -self.im / n)

    def __pow__(self, k: int) -> "GaussRat":
        if k < 0:
            return self.inverse() ** (-k)
        out = GaussRat.of(1)
        for _ in range(k):
            out = out * self
        return out

    def __bool__(self) -> bool:
        return bool(self.re or self.im)

    def to_complex(self) -> complex:
        return complex(float(self.re), float(self.im))


GR_ZERO = GaussRat.of(0)
GR_ONE = GaussRat.of(1)
GR_I = GaussRat.of(0, 1)


# ---------------------------------------------------------------------------
# atoms and words


@dataclass(frozen=True)
class Atom:
    """A generator symbol, possibly primed and/or formally inverted.

    ``inv=True`` denotes the formal inverse of the primed generator, i.e.
    Atom("phi", 1, True) is (phi')^-1, not (phi^-1)'.
    """

    name: str
    prime: int = 0
    inv: bool = False

    def label(self) -> str:
        return self.name + "'" * self.prime

    def inverted(self) -> "Atom":
        return Atom(self.name, self.prime, not self.inv)


def _merge_params(
    a: tuple[tuple[str, int], ...], b: tuple[tuple[str, int], ...]
) -> tuple[tuple[str, int], ...]:
    if not a:
        return b
    if not b:
        return a
    merged = dict(a)
    for name, exp in b:
        new = merged.get(name, 0) + exp
        if new:
            merged[name] = new
        else:
            del merged[name]
    return tuple(sorted(merged.items()))


@dataclass(frozen=True)
class Word:
    """Central-parameter monomial times an ordered product of atoms."""

    params: tuple[tuple[str, int], ...] = ()
    ops: tuple[Atom, ...] = ()

    def __mul__(self, other: "Word") -> "Word":
        return Word(_merge_params(self.params, other.params), self.ops + other.ops)

    @property
    def nc_len(self) -> int:
        return len(self.ops)

    @property
    def max_prime(self) -> int:
        return max((a.prime for a in self.ops), default=0)


EMPTY_WORD = Word()


# ---------------------------------------------------------------------------
# expressions


class NCExpr:
    """Immutable formal sum of words with Gaussian-rational coefficients."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Word, GaussRat] | None = None):
        data: dict[Word, GaussRat] = {}
        if terms:
            for w, c in terms.items():
                if c:
                    data[w] = c
        object.__setattr__(self, "_terms", data)
        object.__setattr__(self, "_hash", None)

    # -- queries

    def terms(self) -> Iterator[tuple[Word, GaussRat]]:
        return iter(self._terms.items())

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def coeff(self, word: Word) -> GaussRat:
        return self._terms.get(word, GR_ZERO)

    def max_prime(self) -> int:
        return max((w.max_prime for w in self._terms), default=0)

    def atoms(self) -> set[Atom]:
        return {a for w in self._terms for a in w.ops}

    def param_names(self) -> set[str]:
        return {n for w in self._terms for n, _ in w.params}

    # -- arithmetic

    def __add__(self, other: "NCExpr") -> "NCExpr":
        if not isinstance(other, NCExpr):
            return NotImplemented
        data = dict(self._terms)
        for w, c in other._terms.items():
            s = data.get(w, GR_ZERO) + c
            if s:
                data[w] = s
            elif w in data:
                del data[w]
        return NCExpr(data)

    def __sub__(self, other: "NCExpr") -> "NCExpr":
        return self + (-other)

    def __neg__(self) -> "NCExpr":
        return NCExpr({w: -c for w, c in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, NCExpr):
            data: dict[Word, GaussRat] = {}
            for w1, c1 in self._terms.items():
                for w2, c2 in other._terms.items():
                    w = w1 * w2
                    s = data.get(w, GR_ZERO) + c1 * c2
                    if s:
                        data[w] = s
                    elif w in data:
                        del data[w]
            return NCExpr(data)
        if isinstance(other, (int, Fraction)):
            other = GaussRat.of(other)
        if isinstance(other, GaussRat):
            return NCExpr({w: c * other for w, c in self._terms.items()})
        return NotImplemented

    def __rmul__(self, other):
        # coefficients are central, so scalar multiplication commutes
        if isinstance(other, (int, Fraction)):
            other = GaussRat.of(other)
        if isinstance(other, GaussRat):
            return NCExpr({w: other * c for w, c in self._terms.items()})
        return NotImplemented

    def __pow__(self, n: int) -> "NCExpr":
        if n < 1:
            raise AlgebraError("powers of expressions must be positive integers")
        out = self
        for _ in range(n - 1):
            out = out * self
        return out

    def inv(self) -> "NCExpr":
        """Formal inverse; defined only for a single atom with coefficient 1."""
        if len(self._terms) != 1:
            raise FormalInverseError("formal inverse requires a single-term expression")
        [(w, c)] = self._terms.items()
        if c != GR_ONE:
            raise FormalInverseError("formal inverse requires coefficient 1")
        if not w.ops and len(w.params) == 1:
            [(name, exp)] = w.params
            return NCExpr({Word(((name, -exp),), ()): GR_ONE})
        if len(w.ops) == 1 and not w.params:
            return NCExpr({Word((), (w.ops[0].inverted(),)): GR_ONE})
        raise FormalInverseError("formal inverse is only defined for single atoms")

    # -- structural equality

    def __eq__(self, other) -> bool:
        if not isinstance(other, NCExpr):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        h = self._hash
        if h is None:
            h = hash(frozenset(self._terms.items()))
            object.__setattr__(self, "_hash", h)
        return h

    def __repr__(self) -> str:
        if not self._terms:
            return "NCExpr(0)"
        bits = []
        for w, c in sorted(
            self._terms.items(), key=lambda it: word_key(it[0], default_atom_key)
        ):
            ps = "*".join(f"{n}^{e}" for n, e in w.params)
            os = "*".join(
                (f"inv({a.label()})" if a.inv else a.label()) for a in w.ops
            )
            body = "*".join(x for x in (ps, os) if x) or "1"
            bits.append(f"({c.re}+{c.im}i)*{body}")
        return "NCExpr(" + " + ".join(bits) + ")"


def scalar(value: int | Fraction | GaussRat) -> NCExpr:
    if not isinstance(value, GaussRat):
        value = GaussRat.of(value)
    return NCExpr({EMPTY_WORD: value})


ZERO = scalar(0)
ONE = scalar(1)
IMAG = scalar(GR_I)


def sym(name: str, prime: int = 0, inv: bool = False) -> NCExpr:
    """Expression for a single generator or central parameter."""
    if name in CENTRAL_NAMES:
        if prime:
            raise AlgebraError(f"parameter {name!r} is constant; primes not allowed")
        return NCExpr({Word(((name, -1 if inv else 1),), ()): GR_ONE})
    return NCExpr({Word((), (Atom(name, prime, inv),)): GR_ONE})


def word_expr(ops: Sequence[Atom], coeff: GaussRat = GR_ONE) -> NCExpr:
    return NCExpr({Word((), tuple(ops)): coeff})


# ---------------------------------------------------------------------------
# derivation


def derive(e: NCExpr) -> NCExpr:
    """The z-derivation: linear, Leibniz, z -> 1, parameters -> 0,
    g -> g', (g)^-1 -> -(g)^-1 g' (g)^-1."""
    data: dict[Word, GaussRat] = {}

    def add(word: Word, coeff: GaussRat) -> None:
        s = data.get(word, GR_ZERO) + coeff
        if s:
            data[word] = s
        elif word in data:
            del data[word]

    for w, c in e.terms():
        for k, a in enumerate(w.ops):
            left = w.ops[:k]
            right = w.ops[k + 1 :]
            if a.name == "z" and a.prime == 0 and not a.inv:
                add(Word(w.params, left + right), c)
            elif a.inv:
                g1 = Atom(a.name, a.prime + 1, False)
                add(Word(w.params, left + (a, g1, a) + right), -c)
            else:
                add(Word(w.params, left + (Atom(a.name, a.prime + 1),) + right), c)
    return NCExpr(data)


def param_derivative(e: NCExpr, name: str) -> NCExpr:
    """Formal d/d<name> on the central Laurent monomials (used for B_lambda)."""
    data: dict[Word, GaussRat] = {}
    for w, c in e.terms():
        exp = dict(w.params).get(name, 0)
        if exp == 0:
            continue
        new_params = _merge_params(w.params, ((name, -1),))
        word = Word(new_params, w.ops)
        s = data.get(word, GR_ZERO) + c * GaussRat.of(exp)
        if s:
            data[word] = s
        elif word in data:
            del data[word]
    return NCExpr(data)


def substitute_param(
    e: NCExpr, name: str, value: GaussRat, into: str | None = None
) -> NCExpr:
    """Replace the central parameter <name> by value (optionally value*<into>).

    A word carrying <name>^k picks up value**k and, when ``into`` is given,
    transfers the exponent to that parameter (kappa -> -i*hbar style maps).
    """
    data: dict[Word, GaussRat] = {}
    for w, c in e.terms():
        exp = dict(w.params).get(name, 0)
        params = tuple((n, x) for n, x in w.params if n != name)
        if exp:
            if not value and exp < 0:
                raise ZeroDivisionError(f"{name}^{exp} at {name}=0")
            c = c * value**exp
            if into is not None:
                params = _merge_params(params, ((into, exp),))
        if not c:
            continue
        word = Word(params, w.ops)
        s = data.get(word, GR_ZERO) + c
        if s:
            data[word] = s
        elif word in data:
            del data[word]
    return NCExpr(data)


def rename_param(e: NCExpr, old: str, new: str) -> NCExpr:
    data: dict[Word, GaussRat] = {}
    for w, c in e.terms():
        exp = dict(w.params).get(old, 0)
        if exp:
            params = tuple((n, x) for n, x in w.params if n != old)
            params = _merge_params(params, ((new, exp),))
            w = Word(params, w.ops)
        s = data.get(w, GR_ZERO) + c
        if s:
            data[w] = s
        elif w in data:
            del data[w]
    return NCExpr(data)


def rename_generator(e: NCExpr, old: str, new: str) -> NCExpr:
    data: dict[Word, GaussRat] = {}
    for w, c in e.terms():
        ops = tuple(
            Atom(new, a.prime, a.inv) if a.name == old else a for a in w.ops
        )
        word = Word(w.params, ops)
        s = data.get(word, GR_ZERO) + c
        if s:
            data[word] = s
        elif word in data:
            del data[word]
    return NCExpr(data)


# ---------------------------------------------------------------------------
# word orders


_BASE_RANK = {"z": 0, "f0": 1, "f1": 2, "f2": 3}


def default_atom_key(a: Atom):
    """z < f0 < f1 < f2 < primed atoms (ascending prime) < other names, alphabetical."""
    if a.prime == 0:
        if a.name in _BASE_RANK:
            return (0, _BASE_RANK[a.name], "", a.inv)
        return (2, 0, a.name, a.inv)
    return (1, a.prime, (_BASE_RANK.get(a.name, 99), a.name), a.inv)


def zf_atom_key(a: Atom):
    """Like the default order but with z largest, so z*f2 rewrites to f2*z form."""
    if a.name == "z" and not a.inv:
        return (3, a.prime, "", False)
    return default_atom_key(a)


def word_key(w: Word, atom_key: Callable[[Atom], tuple]):
    return (len(w.ops), tuple(atom_key(a) for a in w.ops), w.params)


# ---------------------------------------------------------------------------
# rewriting


@dataclass(frozen=True)
class Rule:
    """Subword pattern -> replacement.  ``lift`` marks which slot of a
    two-atom pattern admits primed lifts under the derivation."""

    pattern: tuple[Atom, ...]
    replacement: NCExpr
    lift: str | None = None  # "first" | "second" | None


class RewriteSystem:
    """Ordered rewrite rules plus an atom precedence used for orientation.

    Every rule must strictly decrease words under (length, precedence-lex),
    which guarantees termination for the shipped sets; ``check=False`` admits
    quotient rules whose termination is guarded by the step budget instead.
    """

    def __init__(
        self,
        name: str,
        rules: Sequence[Rule] = (),
        cancel_inverses: bool = False,
        atom_key: Callable[[Atom], tuple] = default_atom_key,
        check: bool = True,
    ):
        self.name = name
        self.rules = tuple(rules)
        self.cancel_inverses = cancel_inverses
        self.atom_key = atom_key
        self._lift_cache: dict[tuple[int, int], Rule] = {}
        if check:
            for rule in self.rules:
                self._check_decreasing(rule)

    def _check_decreasing(self, rule: Rule) -> None:
        pk = word_key(Word((), rule.pattern), self.atom_key)
        for w, _ in rule.replacement.terms():
            if word_key(w, self.atom_key) >= pk:
                raise AlgebraError(
                    f"rule {rule.pattern} does not decrease under the word order "
                    f"of system {self.name!r}"
                )

    def lifted(self, rule_index: int, k: int) -> Rule:
        """Prime-lifted variant of a two-atom rule: the k-th derivative of the
        relation, re-oriented on its leading word."""
        cached = self._lift_cache.get((rule_index, k))
        if cached is not None:
            return cached
        rule = self.rules[rule_index]
        rel = word_expr(rule.pattern) - rule.replacement
        for _ in range(k):
            rel = derive(rel)
        lead_w, lead_c = max(
            rel.terms(), key=lambda it: word_key(it[0], self.atom_key)
        )
        if lead_w.params or not lead_w.ops:
            raise AlgebraError("lifted rule pattern must be a parameter-free word")
        repl = (word_expr(lead_w.ops) * lead_c - rel) * lead_c.inverse()
        lifted = Rule(lead_w.ops, repl, lift=None)
        self._check_decreasing(lifted)
        self._lift_cache[(rule_index, k)] = lifted
        return lifted


def _match_at(ops: tuple[Atom, ...], i: int, system: RewriteSystem) -> tuple[int, NCExpr] | None:
    """Return (match length, replacement) for the first rule matching at i."""
    n = len(ops)
    if system.cancel_inverses and i + 1 < n:
        a, b = ops[i], ops[i + 1]
        if a.name == b.name and a.prime == b.prime and a.inv != b.inv:
            return 2, ONE
    for idx, rule in enumerate(system.rules):
        L = len(rule.pattern)
        if i + L > n:
            continue
        window = ops[i : i + L]
        if window == rule.pattern:
            return L, rule.replacement
        if rule.lift is None or L != 2:
            continue
        p0, p1 = rule.pattern
        a, b = window
        if rule.lift == "first":
            if (
                b == p1
                and a.name == p0.name
                and not a.inv
                and not p0.inv
                and a.prime > p0.prime
            ):
                lifted = system.lifted(idx, a.prime - p0.prime)
                return 2, lifted.replacement
        elif rule.lift == "second":
            if (
                a == p0
                and b.name == p1.name
                and not b.inv
                and not p1.inv
                and b.prime > p1.prime
            ):
                lifted = system.lifted(idx, b.prime - p1.prime)
                return 2, lifted.replacement
    return None


def normal_form(
    e: NCExpr,
    system: RewriteSystem,
    budget: int = DEFAULT_BUDGET,
    strategy: str = "leftmost",
) -> NCExpr:
    """Rewrite until no rule pattern occurs in any word.

    Deterministic: the redex scanned first ("leftmost" or "rightmost") is
    always the one reduced, and each distinct word reduces once (memoized),
    so equal words always cancel.  Raises RewriteBudgetError past ``budget``
    rewrite applications (guards non-terminating user-supplied rules).
    """
    if strategy not in ("leftmost", "rightmost"):
        raise ValueError(f"unknown strategy {strategy!r}")
    remaining = [budget]
    cache: dict[tuple[Atom, ...], NCExpr] = {}

    def nf_ops(ops: tuple[Atom, ...]) -> NCExpr:
        done = cache.get(ops)
        if done is not None:
            return done
        positions = range(len(ops))
        if strategy == "rightmost":
            positions = reversed(positions)
        hit = None
        for i in positions:
            m = _match_at(ops, i, system)
            if m is not None:
                hit = (i, m[0], m[1])
                break
        if hit is None:
            result = word_expr(ops)
        else:
            if remaining[0] <= 0:
                raise RewriteBudgetError(
                    f"rewrite budget exhausted in system {system.name!r}"
                )
            remaining[0] -= 1
            i, L, repl = hit
            pre, post = ops[:i], ops[i + L :]
            acc: dict[Word, GaussRat] = {}
            for w, c in repl.terms():
                sub = nf_ops(pre + w.ops + post)
                for w2, c2 in sub.terms():
                    word = Word(_merge_params(w.params, w2.params), w2.ops)
                    s = acc.get(word, GR_ZERO) + c * c2
                    if s:
                        acc[word] = s
                    elif word in acc:
                        del acc[word]
            result = NCExpr(acc)
        cache[ops] = result
        return result

    data: dict[Word, GaussRat] = {}
    for w, c in e.terms():
        for w2, c2 in nf_ops(w.ops).terms():
            word = Word(_merge_params(w.params, w2.params), w2.ops)
            s = data.get(word, GR_ZERO) + c * c2
            if s:
                data[word] = s
            elif word in data:
                del data[word]
    return NCExpr(data)


# ---------------------------------------------------------------------------
# shipped relation sets


def qp1_system() -> RewriteSystem:
    """Normal ordering for the hbar-deformed triple f0, f1, f2.

    Relations: [f1,f0] = 2*hbar*f2,  [f0,f2] = [f2,f1] = hbar.  Rules are
    oriented so normal words are ascending in f0 < f1 < f2; this orientation
    is confluent (single overlap f2*f1*f0 closes) and its prime-lifts keep
    the derivation compatible with reduction.
    """
    f0, f1, f2 = Atom("f0"), Atom("f1"), Atom("f2")
    hbar = sym("hbar")
    rules = (
        Rule((f1, f0), word_expr((f0, f1)) + 2 * hbar * sym("f2"), lift="first"),
        Rule((f2, f0), word_expr((f0, f2)) - hbar, lift="first"),
        Rule((f2, f1), word_expr((f1, f2)) + hbar, lift="first"),
    )
    return RewriteSystem("qp1", rules)


def zf_system(kappa: NCExpr | None = None) -> RewriteSystem:
    """z*f2 -> f2*z + kappa*f2 with a configurable central coefficient."""
    if kappa is None:
        kappa = sym("kappa")
    z, f2 = Atom("z"), Atom("f2")
    rules = (
        Rule((z, f2), word_expr((f2, z)) + kappa * sym("f2"), lift="second"),
    )
    return RewriteSystem("zf", rules, atom_key=zf_atom_key)


def inv_system() -> RewriteSystem:
    """Cancellation a*a^-1 -> 1 and a^-1*a -> 1 for every invertible atom."""
    return RewriteSystem("inv", (), cancel_inverses=True)


def combine_systems(
    name: str,
    *systems: RewriteSystem,
    atom_key: Callable[[Atom], tuple] | None = None,
) -> RewriteSystem:
    """Concatenate rule sets; the caller picks the precedence that orients all."""
    rules: list[Rule] = []
    cancel = False
    for s in systems:
        rules.extend(s.rules)
        cancel = cancel or s.cancel_inverses
    return RewriteSystem(
        name, rules, cancel_inverses=cancel, atom_key=atom_key or zf_atom_key
    )


# ---------------------------------------------------------------------------
# quotient reduction by relation expressions


def orient_relation(rel: NCExpr, atom_key: Callable[[Atom], tuple] = default_atom_key) -> Rule:
    """Turn a relation (== 0) into a rule replacing its highest-order word.

    Words rank by (max prime order, length, precedence-lex), so q'' beats any
    prime-free product and the substitution eliminates highest derivatives
    first.  Termination of the resulting rules is budget-guarded.
    """
    if rel.is_zero():
        raise AlgebraError("cannot orient the zero relation")
    lead_w, lead_c = max(
        rel.terms(),
        key=lambda it: (it[0].max_prime, word_key(it[0], atom_key)),
    )
    if not lead_w.ops or lead_w.params:
        raise AlgebraError("relation leading term must be a parameter-free word")
    repl = (word_expr(lead_w.ops) * lead_c - rel) * lead_c.inverse()
    return Rule(lead_w.ops, repl, lift=None)


def reduce_modulo(
    e: NCExpr,
    relations: Sequence[NCExpr],
    atom_key: Callable[[Atom], tuple] = default_atom_key,
    budget: int = DEFAULT_BUDGET,
) -> NCExpr:
    """Rewrite e modulo the two-sided ideal spanned by the oriented relations."""
    rules = [orient_relation(r, atom_key) for r in relations]
    system = RewriteSystem("quotient", rules, atom_key=atom_key, check=False)
    return normal_form(e, system, budget=budget)


# ---------------------------------------------------------------------------
# numeric realization


def checked_inv(m: np.ndarray, cond_limit: float = 1e12) -> np.ndarray:
    """Matrix inverse, refused when the condition estimate exceeds cond_limit."""
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularMatrixError(
            f"matrix inverse refused: condition {cond:.3e} exceeds {cond_limit:.1e}"
        )
    return np.linalg.inv(m)


def realize(
    e: NCExpr,
    env: Mapping[str, complex | np.ndarray],
    dim: int | None = None,
    cond_limit: float = 1e12,
) -> np.ndarray:
    """Evaluate an expression in a matrix ring.

    ``env`` binds generator labels ("u", "u'", "phi", ...) to d x d arrays
    (scalars are promoted to multiples of the identity) and central parameter
    names to complex scalars.  Formal inverses are computed from the bound
    base value with a conditioning check.
    """
    d = dim
    if d is None:
        for v in env.values():
            if isinstance(v, np.ndarray) and v.ndim == 2:
                d = v.shape[0]
                break
        else:
            d = 1
    eye = np.eye(d, dtype=complex)
    out = np.zeros((d, d), dtype=complex)
    inv_cache: dict[str, np.ndarray] = {}
    for w, c in e.terms():
        factor = c.to_complex()
        for name, exp in w.params:
            if name not in env:
                raise UnboundAtomError(f"parameter {name!r} not bound")
            s = complex(env[name])  # type: ignore[arg-type]
            if s == 0 and exp < 0:
                raise ZeroDivisionError(f"{name}^{exp} with {name}=0")
            factor *= s**exp
        acc = factor * eye
        for a in w.ops:
            key = a.label()
            if key not in env:
                raise UnboundAtomError(f"atom {key!r} not bound")
            v = env[key]
            if isinstance(v, np.ndarray) and v.ndim == 2:
                mat = np.asarray(v, dtype=complex)
            else:
                mat = complex(v) * eye  # type: ignore[arg-type]
            if mat.shape != (d, d):
                raise AlgebraError(
                    f"dimension mismatch for {key!r}: {mat.shape} != ({d}, {d})"
                )
            if a.inv:
                got = inv_cache.get(key)
                if got is None:
                    got = checked_inv(mat, cond_limit)
                    inv_cache[key] = got
                mat = got
            acc = acc @ mat
        out = out + acc
    return out


def nc_mul(a, b):
    """Product in either realization: NCExpr * NCExpr or matrix @ matrix."""
    if isinstance(a, NCExpr) and isinstance(b, NCExpr):
        return a * b
    if isinstance(a, np.ndarray) and isinstance(b, np.ndarray):
        if a.shape != b.shape or a.ndim != 2:
            raise AlgebraError(f"dimension mismatch: {a.shape} vs {b.shape}")
        return a @ b
    raise AlgebraError("operands must share one realization kind")
