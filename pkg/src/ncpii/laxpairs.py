"""Lax pairs, zero-curvature residuals (symbolic and numeric), and the
hbar-deformed Painleve-II derivation with its classical limit."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .algebra import (
    GR_I,
    GaussRat,
    NCExpr,
    RewriteSystem,
    ZERO,
    default_atom_key,
    derive,
    normal_form,
    param_derivative,
    qp1_system,
    realize,
    reduce_modulo,
    rename_generator,
    rename_param,
    scalar,
    substitute_param,
    sym,
    word_expr,
    zf_atom_key,
    zf_system,
)
from .algebra import Atom, Rule
from .grids import GridFunction, ResidualReport, fd1, fd2, frobenius
from .parsing import parse_expression

ExprMatrix = list[list[NCExpr]]


@dataclass(frozen=True)
class LaxPair:
    """Two 2x2 arrays of expressions: a (the lambda-part) and b (the z-part)."""

    name: str
    a: ExprMatrix
    b: ExprMatrix
    lambda_name: str = "lambda"


def _quarter() -> GaussRat:
    return GaussRat.of("1/4")


def build_ncpii_lax() -> LaxPair:
    """The noncommutative PII pair:
    A = (8i lam^2 + i u^2 - 2i z) s3 + u' s2 + (C/(4 lam) - 4 lam u) s1,
    B = -2i lam s3 + u s1."""
    i = scalar(GR_I)
    u, up, z = sym("u"), sym("u", 1), sym("z")
    lam, lam_inv, C = sym("lambda"), sym("lambda", inv=True), sym("C")
    alpha = 8 * i * lam * lam + i * u * u - 2 * i * z
    gamma = _quarter() * C * lam_inv - 4 * lam * u
    a = [
        [alpha, -i * up + gamma],
        [i * up + gamma, -alpha],
    ]
    b = [
        [-2 * i * lam, u],
        [u, 2 * i * lam],
    ]
    return LaxPair("ncpii", a, b)


def build_toda_lax() -> LaxPair:
    """The Toda-side pair:
    L = 2 lam^2 I - q' i s2 + (-q^2 - 2 phi psi) s3 - 4 z Sigma,
    M = q s1 + lam I, with Sigma = diag(0, 1)."""
    q, qp, z = sym("q"), sym("q", 1), sym("z")
    phi, psi, lam = sym("phi"), sym("psi"), sym("lambda")
    lam2 = 2 * lam * lam
    qsq = q * q
    pp = phi * psi
    a = [
        [lam2 - qsq - 2 * pp, -qp],
        [qp, lam2 + qsq + 2 * pp - 4 * z],
    ]
    b = [
        [lam, q],
        [q, lam],
    ]
    return LaxPair("toda", a, b)


def build_quantum_lax() -> LaxPair:
    """The hbar-deformed pair: the classical A picks up +i hbar s2 and the
    z-part picks up an f2 I term:
    B = -2i lam s3 + f2 s1 + f2 I."""
    i = scalar(GR_I)
    f2, f2p, z = sym("f2"), sym("f2", 1), sym("z")
    lam, lam_inv = sym("lambda"), sym("lambda", inv=True)
    c, hbar = sym("c"), sym("hbar")
    alpha = 8 * i * lam * lam + i * f2 * f2 - 2 * i * z
    gamma = _quarter() * c * lam_inv - 4 * lam * f2
    a = [
        [alpha, -i * f2p + hbar + gamma],
        [i * f2p - hbar + gamma, -alpha],
    ]
    b = [
        [-2 * i * lam + f2, f2],
        [f2, 2 * i * lam + f2],
    ]
    return LaxPair("quantum", a, b)


BUILDERS = {
    "ncpii": build_ncpii_lax,
    "toda": build_toda_lax,
    "quantum": build_quantum_lax,
}


# ---------------------------------------------------------------------------
# symbolic zero curvature


def expr_matmul(x: ExprMatrix, y: ExprMatrix) -> ExprMatrix:
    return [
        [
            sum((x[i][k] * y[k][j] for k in range(2)), ZERO)
            for j in range(2)
        ]
        for i in range(2)
    ]


def expr_matsub(x: ExprMatrix, y: ExprMatrix) -> ExprMatrix:
    return [[x[i][j] - y[i][j] for j in range(2)] for i in range(2)]


def lax_time_derivative(pair: LaxPair) -> ExprMatrix:
    return [[derive(e) for e in row] for row in pair.a]


def lax_spectral_derivative(pair: LaxPair) -> ExprMatrix:
    return [[param_derivative(e, pair.lambda_name) for e in row] for row in pair.b]


def lax_bracket(pair: LaxPair) -> ExprMatrix:
    """[B, A] = BA - AB."""
    return expr_matsub(expr_matmul(pair.b, pair.a), expr_matmul(pair.a, pair.b))


def zero_curvature_symbolic(
    pair: LaxPair,
    system: RewriteSystem | None = None,
    relations: Sequence[NCExpr] = (),
) -> ExprMatrix:
    """Residual A_z - B_lambda - [B, A], normal-formed and reduced.

    ``relations`` are expressions declared zero; each is oriented on its
    highest-order word (q'' before products) and substituted to a fixed point.
    """
    res = expr_matsub(
        expr_matsub(lax_time_derivative(pair), lax_spectral_derivative(pair)),
        lax_bracket(pair),
    )
    atom_key = system.atom_key if system is not None else default_atom_key

    def crunch(e: NCExpr) -> NCExpr:
        if system is not None:
            e = normal_form(e, system)
        if relations:
            e = reduce_modulo(e, relations, atom_key=atom_key)
            if system is not None:
                e = normal_form(e, system)
        return e

    return [[crunch(e) for e in row] for row in res]


# ---------------------------------------------------------------------------
# quantum derivation


def solve_linear_param(e: NCExpr, name: str) -> NCExpr:
    """Solve e == 0 for the central parameter <name>, e = P*name + Q linear.

    Requires every word to carry <name> with exponent 0 or 1 and the two
    groups to be proportional; returns the unique solution as an expression.
    """
    p_terms: dict = {}
    q_terms: dict = {}
    for w, c in e.terms():
        exp = dict(w.params).get(name, 0)
        if exp == 0:
            q_terms[w] = c
        elif exp == 1:
            stripped = tuple((n, x) for n, x in w.params if n != name)
            from .algebra import Word

            p_terms[Word(stripped, w.ops)] = c
        else:
            raise ValueError(f"expression is not linear in {name!r}")
    if not p_terms:
        raise ValueError(f"{name!r} does not occur in the expression")
    P = NCExpr(p_terms)
    Q = NCExpr(q_terms)
    if Q.is_zero():
        return ZERO
    # Solve P*name + Q = 0 with P = p*w0 and Q sharing the same word shape up
    # to central factors: name = -(q/p) * (central part of Q / central of P).
    if len(P) != 1:
        raise ValueError(f"coefficient of {name!r} is not a single word")
    [(wp, cp)] = P.terms()
    sol_terms: dict = {}
    from .algebra import Word, _merge_params

    for wq, cq in Q.terms():
        if wq.ops != wp.ops:
            raise ValueError("linear solve requires matching word shapes")
        params = _merge_params(wq.params, tuple((n, -x) for n, x in wp.params))
        sol_terms[Word(params, ())] = -(cq * cp.inverse())
    solution = NCExpr(sol_terms)
    check = substitute_expr_param(e, name, solution)
    if not check.is_zero():
        raise ValueError(f"linear solve for {name!r} failed verification")
    return solution


def substitute_expr_param(e: NCExpr, name: str, value: NCExpr) -> NCExpr:
    """Replace a central parameter by a central expression (exponent 1 or 0 only)."""
    from .algebra import Word

    out = ZERO
    for w, c in e.terms():
        exp = dict(w.params).get(name, 0)
        stripped = Word(tuple((n, x) for n, x in w.params if n != name), w.ops)
        term = NCExpr({stripped: c})
        if exp == 0:
            out = out + term
        elif exp >= 1:
            piece = term
            for _ in range(exp):
                piece = piece * value
            out = out + piece
        else:
            raise ValueError(f"negative power of {name!r} cannot be substituted")
    return out


_PII_TEMPLATE = "f2'' - 2*f2^3 + 2*(z*f2 + f2*z) - c"


@dataclass
class QuantumDerivation:
    """Everything quantum_pii_derivation establishes, for reporting and tests."""

    residual_raw: ExprMatrix
    diagonal_normal_form: NCExpr
    kappa: NCExpr                       # unique central solution, linear in hbar
    lemma_derived: NCExpr               # [f2', f2] computed from the scaled relations
    lemma_printed: NCExpr               # the stated lemma value -4 lam hbar
    pii_expression: NCExpr              # f2'' - 2 f2^3 + 2[z,f2]_+ - c
    reduced_offdiag: dict[str, tuple[NCExpr, NCExpr]]
    pii_entry: tuple[int, int]          # which entry reduced exactly to +/- i * PII
    pii_sign: GaussRat
    asymmetry_defect: NCExpr            # leftover on the opposite entry
    classical_limit: NCExpr             # PII expression at hbar = 0 (z, f2 commute)
    classical_matches_ncpii: bool


def _commutator(x: NCExpr, y: NCExpr) -> NCExpr:
    return x * y - y * x


def scaled_qp1_system() -> RewriteSystem:
    """The commutation rules after f2 -> -(1/2) lam^-1 f2:
    [f0,f2] = [f2,f1] = -2 lam hbar and [f1,f0] = -hbar lam^-1 f2."""
    f0, f1, f2 = Atom("f0"), Atom("f1"), Atom("f2")
    lam_hbar = sym("lambda") * sym("hbar")
    rules = (
        Rule(
            (f1, f0),
            word_expr((f0, f1)) - sym("hbar") * sym("lambda", inv=True) * sym("f2"),
            lift="first",
        ),
        Rule((f2, f0), word_expr((f0, f2)) + 2 * lam_hbar, lift="first"),
        Rule((f2, f1), word_expr((f1, f2)) - 2 * lam_hbar, lift="first"),
    )
    return RewriteSystem("qp1-scaled", rules)


def derive_commutator_lemma() -> NCExpr:
    """[f2', f2] with f2' = f1 - f0 under the scaled commutation rules."""
    f2p = sym("f1") - sym("f0")
    lemma = normal_form(_commutator(f2p, sym("f2")), scaled_qp1_system())
    return lemma


def quantum_pii_derivation() -> QuantumDerivation:
    """Solve the zero-curvature residual of the quantum pair.

    Steps: (a) the diagonal entries, normal-formed under z f2 -> f2 z + kappa f2
    with symbolic kappa, vanish for a unique kappa linear in hbar; (b) the
    off-diagonal entries are reduced modulo [f2', f2] = -4 lam hbar (the stated
    lemma; the value computed from the scaled relations is kept alongside and
    flips its sign, which moves the exact reduction to the other corner);
    (c) at hbar = 0 the surviving expression is the classical PII residual.
    """
    pair = build_quantum_lax()
    residual = zero_curvature_symbolic(pair)

    zf = zf_system()  # symbolic kappa
    diag_nf = normal_form(residual[0][0], zf)
    kappa = solve_linear_param(diag_nf, "kappa")
    other_diag = substitute_expr_param(normal_form(residual[1][1], zf), "kappa", kappa)
    if not substitute_expr_param(diag_nf, "kappa", kappa).is_zero() or not other_diag.is_zero():
        raise RuntimeError("kappa solution does not annihilate the diagonal")

    lam_hbar = sym("lambda") * sym("hbar")
    lemma_printed = -4 * lam_hbar
    lemma_derived = derive_commutator_lemma()
    pii_expression = parse_expression(_PII_TEMPLATE)

    f2p_f2 = _commutator(sym("f2", 1), sym("f2"))
    reduced: dict[str, tuple[NCExpr, NCExpr]] = {}
    for tag, lemma in (("printed", lemma_printed), ("derived", lemma_derived)):
        rel = f2p_f2 - lemma
        r12 = reduce_modulo(residual[0][1], [rel])
        r21 = reduce_modulo(residual[1][0], [rel])
        reduced[tag] = (r12, r21)

    i = scalar(GR_I)
    r12_p, r21_p = reduced["printed"]
    if r21_p == i * pii_expression:
        entry, sign = (2, 1), GR_I
        defect = r12_p - (-(i * pii_expression))
    elif r12_p == -(i * pii_expression):
        entry, sign = (1, 2), -GR_I
        defect = r21_p - i * pii_expression
    else:
        raise RuntimeError("no off-diagonal entry reduced to the PII expression")

    # hbar -> 0: the kappa solution degenerates to plain commutation of z, f2
    commuting = zf_system(scalar(0))
    classical = substitute_param(
        normal_form(pii_expression, zf_system(kappa)), "hbar", GaussRat.of(0)
    )
    classical = normal_form(classical, commuting)

    ncpii_entry = zero_curvature_symbolic(build_ncpii_lax())[1][0]
    expected = rename_param(rename_generator(ncpii_entry, "u", "f2"), "C", "c")
    expected = normal_form(expected, commuting)
    matches = expected == normal_form(i * classical, commuting)

    return QuantumDerivation(
        residual_raw=residual,
        diagonal_normal_form=diag_nf,
        kappa=kappa,
        lemma_derived=lemma_derived,
        lemma_printed=lemma_printed,
        pii_expression=pii_expression,
        reduced_offdiag=reduced,
        pii_entry=entry,
        pii_sign=sign,
        asymmetry_defect=defect,
        classical_limit=classical,
        classical_matches_ncpii=matches,
    )


def quantum_pair_reduces_to_classical() -> bool:
    """Entrywise check: the quantum pair at hbar = 0, with f2 renamed to u,
    c renamed to C and the f2 I term dropped from the z-part, equals the
    classical pair."""
    quantum = build_quantum_lax()
    classical = build_ncpii_lax()
    f2 = sym("f2")
    identity_part = [[f2, ZERO], [ZERO, f2]]
    for i in range(2):
        for j in range(2):
            qa = substitute_param(quantum.a[i][j], "hbar", GaussRat.of(0))
            qa = rename_param(rename_generator(qa, "f2", "u"), "c", "C")
            if qa != classical.a[i][j]:
                return False
            qb = quantum.b[i][j] - identity_part[i][j]
            qb = substitute_param(qb, "hbar", GaussRat.of(0))
            qb = rename_param(rename_generator(qb, "f2", "u"), "c", "C")
            if qb != classical.b[i][j]:
                return False
    return True


# ---------------------------------------------------------------------------
# numeric zero curvature


def _env_grid(
    name: str,
    prime: int,
    grids: Mapping[str, GridFunction],
    cache: dict[str, GridFunction],
) -> GridFunction:
    label = name + "'" * prime
    if label in cache:
        return cache[label]
    if label in grids:
        cache[label] = grids[label]
        return grids[label]
    if prime == 0:
        raise KeyError(f"no grid supplied for generator {name!r}")
    base = _env_grid(name, prime - 1, grids, cache)
    out = fd1(base)
    cache[label] = out
    return out


def zero_curvature_numeric(
    pair: LaxPair,
    grids: Mapping[str, GridFunction],
    lambdas: Sequence[complex],
    params: Mapping[str, complex] | None = None,
) -> list[ResidualReport]:
    """Per grid point and per lambda, the Frobenius norm of A_z - B_lambda - [B, A].

    Generators take values from ``grids`` (missing derivatives come from
    4th-order finite differences of the base grid); z is the grid coordinate
    times the identity; parameters come from ``params``.
    """
    params = dict(params or {})
    ref = next(iter(grids.values()))
    d = ref.dim
    eye = np.eye(d, dtype=complex)
    az = lax_time_derivative(pair)
    bl = lax_spectral_derivative(pair)

    needed: set[tuple[str, int]] = set()
    for mat in (pair.a, pair.b, az, bl):
        for row in mat:
            for e in row:
                for a in e.atoms():
                    needed.add((a.name, a.prime))
    cache: dict[str, GridFunction] = {}
    value_grids: dict[str, GridFunction] = {}
    for name, prime in sorted(needed):
        if name == "z":
            continue
        value_grids[name + "'" * prime] = _env_grid(name, prime, grids, cache)

    reports = []
    for lam in lambdas:
        run_params = dict(params)
        run_params[pair.lambda_name] = lam
        norms = np.empty(ref.count, dtype=float)
        for k, z in enumerate(ref.zs):
            env: dict[str, complex | np.ndarray] = dict(run_params)
            env["z"] = z * eye
            for label, g in value_grids.items():
                env[label] = g.values[k]

            def ev(mat: ExprMatrix) -> np.ndarray:
                return np.block(
                    [[realize(mat[i][j], env, dim=d) for j in range(2)] for i in range(2)]
                )

            A = ev(pair.a)
            B = ev(pair.b)
            R = ev(az) - ev(bl) - (B @ A - A @ B)
            norms[k] = np.linalg.norm(R)
        reports.append(
            ResidualReport(
                label=f"zero-curvature:{pair.name}",
                zs=ref.zs,
                norms=norms,
                mask=ref.mask,
                metadata={
                    "lambda": [lam.real, lam.imag] if isinstance(lam, complex) else lam,
                    "params": {k: [complex(v).real, complex(v).imag] for k, v in params.items()},
                    "step": ref.step,
                    "count": ref.count,
                },
            )
        )
    return reports
