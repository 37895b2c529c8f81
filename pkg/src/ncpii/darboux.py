"""Darboux machinery: eigenfunction transforms, one-fold maps, the
quasideterminant arrays, and N-fold solution assembly.

One generic array builder covers the whole family of displays (the
transformed-eigenfunction arrays, the sandwich-factor arrays for phi and psi,
and the PII-side arrays): rows alternate the leading letter with its partner,
row r carries weight lambda^(r-1) column-wise, and the boxed entry sits at the
bottom-right.  The five near-identical printed patterns are data, not code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import SingularMatrixError, checked_inv
from .grids import (
    GridFunction,
    ResidualReport,
    fd1,
    frobenius,
    merge_masks,
    widen_mask,
)
from .integrators import integrate_linear_system
from .quasidet import QuasideterminantError, quasideterminant

COND_LIMIT = 1e12
POLE_MASK_RADIUS = 3


class DarbouxError(RuntimeError):
    pass


@dataclass(frozen=True)
class EigenTriple:
    """One solution pair of the linear system at a fixed spectral value."""

    lam: complex
    x: GridFunction
    y: GridFunction


@dataclass(frozen=True)
class EigenData:
    """Indexed eigensolutions on a common grid; slot 0 is the transformed
    ("arbitrary") solution, slots 1..N the particular solutions."""

    triples: tuple[EigenTriple, ...]
    kind: str = "toda"

    def __post_init__(self):
        base = self.triples[0].x
        for t in self.triples:
            if not (t.x.same_grid(base) and t.y.same_grid(base)):
                raise DarbouxError("all eigenfunction grids must coincide")

    def __getitem__(self, idx: int) -> EigenTriple:
        return self.triples[idx]

    def __len__(self) -> int:
        return len(self.triples)


def make_eigendata(
    q: GridFunction,
    lambdas: list[complex],
    inits: list[tuple[complex, complex]] | None = None,
    kind: str = "toda",
    tol_residual: float | None = 1e-4,
) -> EigenData:
    """Integrate the linear system at each lambda and verify on ingestion.

    The residual check compares finite-difference derivatives against the
    system's right side; it certifies the data actually solves the system.
    """
    triples = []
    for idx, lam in enumerate(lambdas):
        init = inits[idx] if inits else (1.0, 0.5 + 0.25 * idx)
        x, y = integrate_linear_system(q, lam, init, kind=kind)
        triples.append(EigenTriple(lam, x, y))
    data = EigenData(tuple(triples), kind)
    if tol_residual is not None:
        worst = ingest_residual(data, q)
        if worst > tol_residual:
            raise DarbouxError(
                f"eigendata fails its linear system: residual {worst:.3e} > {tol_residual:.1e}"
            )
    return data


def ingest_residual(data: EigenData, q: GridFunction) -> float:
    """Max norm of X' - (system rhs) over all triples, derivatives by FD."""
    worst = 0.0
    for t in data.triples:
        dx = fd1(t.x).values
        dy = fd1(t.y).values
        if data.kind == "toda":
            rx = dx - (t.lam * t.x.values + np.matmul(q.values, t.y.values))
            ry = dy - (t.lam * t.y.values + np.matmul(q.values, t.x.values))
        elif data.kind == "ncpii":
            rx = dx - (-2j * t.lam * t.x.values + np.matmul(q.values, t.y.values))
            ry = dy - (np.matmul(q.values, t.x.values) + 2j * t.lam * t.y.values)
        elif data.kind == "quantum":
            rx = dx - (
                (-2j * t.lam) * t.x.values
                + np.matmul(q.values, t.x.values)
                + np.matmul(q.values, t.y.values)
            )
            ry = dy - (
                np.matmul(q.values, t.x.values)
                + (2j * t.lam) * t.y.values
                + np.matmul(q.values, t.y.values)
            )
        else:
            raise DarbouxError(f"unknown system kind {data.kind!r}")
        worst = max(worst, frobenius(rx).max(), frobenius(ry).max())
    return float(worst)


# ---------------------------------------------------------------------------
# pointwise maps


def pointwise_ratio(num: GridFunction, den: GridFunction) -> GridFunction:
    """num * den^-1 per point; points where den is ill-conditioned are masked
    (with a 3-point radius) instead of aborting."""
    out = np.empty_like(num.values)
    bad = np.zeros(num.count, dtype=bool)
    for k in range(num.count):
        try:
            out[k] = num.values[k] @ checked_inv(den.values[k], COND_LIMIT)
        except SingularMatrixError:
            out[k] = np.nan
            bad[k] = True
    mask = widen_mask(bad, POLE_MASK_RADIUS) if bad.any() else None
    base = merge_masks(num, den)
    if base is not None:
        mask = base if mask is None else (mask | base)
    return num.with_values(out, mask)


def transform_eigenfunctions(
    x: GridFunction,
    y: GridFunction,
    x1: GridFunction,
    y1: GridFunction,
    lam: complex,
    lam1: complex,
) -> tuple[GridFunction, GridFunction]:
    """X -> lam Y - lam1 Y1 X1^-1 X and Y -> lam X - lam1 X1 Y1^-1 Y, pointwise."""
    s = pointwise_ratio(y1, x1)
    t = pointwise_ratio(x1, y1)
    new_x = x.with_values(
        lam * y.values - lam1 * np.matmul(s.values, x.values),
        merge_masks(x, y, s),
    )
    new_y = y.with_values(
        lam * x.values - lam1 * np.matmul(t.values, y.values),
        merge_masks(x, y, t),
    )
    return new_x, new_y


def one_fold_q(q: GridFunction, x1: GridFunction, y1: GridFunction) -> GridFunction:
    """q -> (Y1 X1^-1) q (Y1 X1^-1), the one-fold transformation of the
    z-part coefficient."""
    s = pointwise_ratio(y1, x1)
    vals = np.matmul(np.matmul(s.values, q.values), s.values)
    return q.with_values(vals, merge_masks(q, s))


def covariance_diagnostic(
    q: GridFunction,
    q1: GridFunction,
    x1: GridFunction,
    y1: GridFunction,
    lam: complex,
) -> ResidualReport:
    """Measure X[1]' - lam X[1] - q[1] Y[1] per point (the covariance defect).

    Purely a measurement: the defect carries a (lam - lam1) q (1 - s^2)
    factor, so it vanishes at lam = lam1 and is reported, not gated, at
    general lam.  The partner equation Y[1]' - lam Y[1] - q[1] X[1] is NOT
    adapted to the printed q[1] and stays nonzero even at lam = lam1; its
    norms ride along in the metadata as a secondary measurement.
    Derivatives come from finite differences.
    """
    dx = fd1(x1).values
    dy = fd1(y1).values
    rx = dx - lam * x1.values - np.matmul(q1.values, y1.values)
    ry = dy - lam * y1.values - np.matmul(q1.values, x1.values)
    mask = merge_masks(q, q1, x1, y1)
    if mask is not None:
        # FD stencils smear masked points over their neighbours
        mask = widen_mask(mask, POLE_MASK_RADIUS)
    y_norms = frobenius(ry)
    y_max = float(y_norms[~mask].max()) if mask is not None else float(y_norms.max())
    return ResidualReport(
        label="darboux-covariance",
        zs=x1.zs,
        norms=frobenius(rx),
        mask=mask,
        metadata={"lambda": [complex(lam).real, complex(lam).imag],
                  "partner_defect_max": y_max,
                  "step": x1.step, "count": x1.count},
    )


# ---------------------------------------------------------------------------
# quasideterminant arrays


def _indices_for_order(k: int) -> list[int]:
    # the printed base case uses the particular solution (index 1) alone;
    # from order 2 on, the arrays run over indices k-1, ..., 1, 0
    if k == 1:
        return [1]
    return list(range(k - 1, -1, -1))


def eigen_array_at(
    data: EigenData, indices: list[int], lead: str, point: int
) -> np.ndarray:
    """The m x m block array at one grid point.

    Row r (1-based) uses the lead letter when r is odd, the partner when r is
    even, each entry weighted by its column's lambda^(r-1).
    """
    m = len(indices)
    d = data[0].x.dim
    arr = np.empty((m, m, d, d), dtype=complex)
    for r in range(1, m + 1):
        use_lead = (r % 2) == 1
        for c, idx in enumerate(indices):
            t = data[idx]
            grid = (t.x if lead == "X" else t.y) if use_lead else (
                t.y if lead == "X" else t.x
            )
            arr[r - 1, c] = (t.lam ** (r - 1)) * grid.values[point]
    return arr


def eigen_array_qdet(data: EigenData, order: int, lead: str) -> GridFunction:
    """Quasideterminant (boxed bottom-right) of the order-k array, per point."""
    indices = _indices_for_order(order)
    if max(indices) >= len(data):
        raise DarbouxError(
            f"order {order} needs eigensolution indices up to {max(indices)}"
        )
    base = data[0].x
    out = np.empty_like(base.values)
    bad = np.zeros(base.count, dtype=bool)
    m = len(indices)
    for k in range(base.count):
        arr = eigen_array_at(data, indices, lead, k)
        try:
            out[k] = quasideterminant(arr, m, m, COND_LIMIT)
        except (QuasideterminantError, SingularMatrixError, np.linalg.LinAlgError):
            out[k] = np.nan
            bad[k] = True
    mask = widen_mask(bad, POLE_MASK_RADIUS) if bad.any() else None
    return base.with_values(out, mask)


def build_upsilon(data: EigenData, n: int, kind: str, parity: str) -> GridFunction:
    """The transformed eigenfunction of fold n as an order-(n+1) quasideterminant.

    ``kind`` is "X" or "Y"; ``parity`` must match the order (odd order arrays
    carry even n and vice versa, mirroring the printed superscripts).
    """
    order = n + 1
    expected = "odd" if order % 2 == 1 else "even"
    if parity not in ("odd", "even"):
        raise DarbouxError("parity must be 'odd' or 'even'")
    if parity != expected:
        raise DarbouxError(
            f"fold {n} yields an order-{order} array, which is {expected}"
        )
    if len(data) < n + 1:
        raise DarbouxError(f"need {n + 1} eigensolutions for fold {n}")
    indices = list(range(n, -1, -1))
    base = data[0].x
    out = np.empty_like(base.values)
    bad = np.zeros(base.count, dtype=bool)
    for k in range(base.count):
        arr = eigen_array_at(data, indices, kind, k)
        try:
            out[k] = quasideterminant(arr, order, order, COND_LIMIT)
        except (QuasideterminantError, SingularMatrixError, np.linalg.LinAlgError):
            out[k] = np.nan
            bad[k] = True
    mask = widen_mask(bad, POLE_MASK_RADIUS) if bad.any() else None
    return base.with_values(out, mask)


def theta_factor(data: EigenData, order: int) -> GridFunction:
    """Theta_k = (order-k Y-array qdet) (order-k X-array qdet)^-1."""
    lead_y = eigen_array_qdet(data, order, "Y")
    lead_x = eigen_array_qdet(data, order, "X")
    return pointwise_ratio(lead_y, lead_x)


def _sandwich(factors: list[GridFunction], core: GridFunction) -> GridFunction:
    """factors[N-1] ... factors[0] core factors[0] ... factors[N-1], pointwise."""
    left = factors[-1].values.copy()
    for f in reversed(factors[:-1]):
        left = np.matmul(left, f.values)
    right = factors[0].values.copy()
    for f in factors[1:]:
        right = np.matmul(right, f.values)
    vals = np.matmul(np.matmul(left, core.values), right)
    return core.with_values(vals, merge_masks(core, *factors))


def phi_n_fold(phi: GridFunction, data: EigenData, n: int) -> GridFunction:
    """N-fold transformation of phi via the quasideterminant sandwich factors."""
    if n < 1:
        raise DarbouxError("fold count must be >= 1")
    thetas = [theta_factor(data, k) for k in range(1, n + 1)]
    return _sandwich(thetas, phi)


def iterate_eigen_transforms(data: EigenData, n: int) -> list[GridFunction]:
    """Product-form sandwich factors from iterated pointwise transformations.

    Step 1 consumes the particular solution (index 1); each later step k
    consumes the (k-1)-times transformed solution of index k, applied to the
    running index-0 solution.  The ratios Y/X of the successive index-0
    transforms are exactly the Theta factors of the quasideterminant form.
    """
    if n < 1:
        raise DarbouxError("fold count must be >= 1")
    needed = max(1, n - 1)
    if len(data) < needed + 1:
        raise DarbouxError(f"need eigensolution indices 0..{needed} for fold {n}")
    current = {idx: data[idx] for idx in range(max(2, n))}
    particular = current.pop(1)
    thetas = [pointwise_ratio(particular.y, particular.x)]
    current = {
        idx: EigenTriple(
            t.lam,
            *transform_eigenfunctions(
                t.x, t.y, particular.x, particular.y, t.lam, particular.lam
            ),
        )
        for idx, t in current.items()
    }
    for step in range(2, n + 1):
        t0 = current[0]
        thetas.append(pointwise_ratio(t0.y, t0.x))
        if step == n:
            break
        particular = current.pop(step)
        current = {
            idx: EigenTriple(
                t.lam,
                *transform_eigenfunctions(
                    t.x, t.y, particular.x, particular.y, t.lam, particular.lam
                ),
            )
            for idx, t in current.items()
        }
    return thetas


def phi_n_fold_product(phi: GridFunction, data: EigenData, n: int) -> GridFunction:
    """N-fold transformation of phi via iterated one-fold maps (oracle path)."""
    thetas = iterate_eigen_transforms(data, n)
    return _sandwich(thetas, phi)


def psi_n_fold(psi: GridFunction, data: EigenData, n: int) -> GridFunction:
    """Same construction as phi (the printed K/Xi family is the Theta/Omega
    family under relabeling); exposed separately for the API surface."""
    return phi_n_fold(psi, data, n)


def ncpii_n_fold(u_seed: GridFunction, data: EigenData, n: int) -> GridFunction:
    """New PII candidate from a seed: Theta_1...Theta_N u Theta_N...Theta_1
    with Theta built from the PII-side eigensolutions.

    At n = 1 this is the printed one-fold form Phi_1 chi_1^-1 u Phi_1 chi_1^-1
    (the arrays use lead Phi over lead chi).  Residuals of the result are a
    reported diagnostic, not a gate.
    """
    if data.kind != "ncpii":
        raise DarbouxError("PII folds need eigendata of kind 'ncpii'")
    if n < 1:
        raise DarbouxError("fold count must be >= 1")
    # lead "Y" rows carry the second component (Phi); data triples store
    # (x, y) = (chi, Phi) so Theta = Lambda^phi (Lambda^chi)^-1 = Y-array/X-array
    thetas = [theta_factor(data, k) for k in range(1, n + 1)]
    left = thetas[0].values.copy()
    for f in thetas[1:]:
        left = np.matmul(left, f.values)
    right = thetas[-1].values.copy()
    for f in reversed(thetas[:-1]):
        right = np.matmul(right, f.values)
    vals = np.matmul(np.matmul(left, u_seed.values), right)
    return u_seed.with_values(vals, merge_masks(u_seed, *thetas))
