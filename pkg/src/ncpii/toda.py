"""Toda seed pair construction and the Painleve-II residual evaluator.

Integrates the coupled second-order system

    phi'' = 2 z phi - 2 phi psi phi,     psi'' = 2 z psi - 2 psi phi psi

whose first integral psi phi' - psi' phi stays equal to 2 beta, and certifies
that u = phi' phi^-1 satisfies u'' = 2u^3 - 2(zu + uz) + C with C = 4(beta + 1/2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import SingularMatrixError, checked_inv
from .grids import GridFunction, ResidualReport, fd2, frobenius
from .integrators import BLOWUP_NORM, IntegrationError, rk4_path


class TodaError(RuntimeError):
    pass


@dataclass(frozen=True)
class TodaPair:
    """Integrated (phi, psi) pair with derivative states and derived u grids."""

    phi: GridFunction
    dphi: GridFunction
    psi: GridFunction
    dpsi: GridFunction
    beta: complex
    u1: GridFunction        # phi' phi^-1
    u_neg1: GridFunction    # psi' psi^-1
    invariant_drift: np.ndarray  # || psi phi' - psi' phi - 2 beta I || per point

    @property
    def max_drift(self) -> float:
        return float(self.invariant_drift.max())


def _as_matrix(value, dim: int) -> np.ndarray:
    if isinstance(value, np.ndarray) and value.ndim == 2:
        return np.asarray(value, dtype=complex)
    return complex(value) * np.eye(dim, dtype=complex)


def integrate_toda_pair(
    beta: complex,
    init_phi,
    init_dphi,
    init_psi,
    init_dpsi,
    start: float,
    stop: float,
    step: float,
    dim: int = 1,
    tol_invariant: float = 1e-8,
    enforce_drift: bool = True,
) -> TodaPair:
    """RK4 on the first-order reduction of the coupled pair system.

    The initial data must satisfy psi0 phi0' - psi0' phi0 = 2 beta I to 1e-12;
    integration aborts if phi goes numerically singular or (optionally) if the
    conserved combination drifts past tol_invariant.
    """
    phi0 = _as_matrix(init_phi, dim)
    dphi0 = _as_matrix(init_dphi, dim)
    psi0 = _as_matrix(init_psi, dim)
    dpsi0 = _as_matrix(init_dpsi, dim)
    eye = np.eye(dim, dtype=complex)
    target = 2 * complex(beta) * eye
    defect = np.linalg.norm(psi0 @ dphi0 - dpsi0 @ phi0 - target)
    if defect > 1e-12:
        raise TodaError(
            f"initial data violates psi phi' - psi' phi = 2 beta I by {defect:.3e}"
        )

    def f(z: float, y: np.ndarray) -> np.ndarray:
        phi, dphi, psi, dpsi = y
        return np.stack(
            [
                dphi,
                2 * z * phi - 2 * phi @ psi @ phi,
                dpsi,
                2 * z * psi - 2 * psi @ phi @ psi,
            ]
        )

    count = int(round((stop - start) / step)) + 1
    try:
        path = rk4_path(f, start, np.stack([phi0, dphi0, psi0, dpsi0]), step, count)
    except IntegrationError as exc:
        raise TodaError(f"blow-up during integration: {exc}") from exc

    phi = GridFunction(start, step, path[:, 0])
    dphi = GridFunction(start, step, path[:, 1])
    psi = GridFunction(start, step, path[:, 2])
    dpsi = GridFunction(start, step, path[:, 3])

    u1_vals = np.empty_like(phi.values)
    uneg_vals = np.empty_like(psi.values)
    drift = np.empty(count, dtype=float)
    for k in range(count):
        z_here = start + k * step
        try:
            phi_inv = checked_inv(phi.values[k])
        except SingularMatrixError as exc:
            raise TodaError(f"phi numerically singular at z={z_here:.6g}: {exc}") from None
        try:
            psi_inv = checked_inv(psi.values[k])
        except SingularMatrixError as exc:
            raise TodaError(f"psi numerically singular at z={z_here:.6g}: {exc}") from None
        u1_vals[k] = dphi.values[k] @ phi_inv
        uneg_vals[k] = dpsi.values[k] @ psi_inv
        drift[k] = np.linalg.norm(
            psi.values[k] @ dphi.values[k] - dpsi.values[k] @ phi.values[k] - target
        )
        if enforce_drift and drift[k] > tol_invariant:
            raise TodaError(
                f"invariant drift {drift[k]:.3e} beyond {tol_invariant:.1e} at z={z_here:.6g}"
            )

    return TodaPair(
        phi=phi,
        dphi=dphi,
        psi=psi,
        dpsi=dpsi,
        beta=complex(beta),
        u1=GridFunction(start, step, u1_vals),
        u_neg1=GridFunction(start, step, uneg_vals),
        invariant_drift=drift,
    )


def ncpii_residual(u: GridFunction, C: complex) -> ResidualReport:
    """Per-point norm of u'' - 2u^3 + 2(zu + uz) - C*I with u'' from finite differences."""
    upp = fd2(u)
    eye = np.eye(u.dim, dtype=complex)
    res = np.empty_like(u.values)
    for k, z in enumerate(u.zs):
        uk = u.values[k]
        res[k] = upp.values[k] - 2 * uk @ uk @ uk + 2 * (z * uk + uk * z) - C * eye
    return ResidualReport(
        label="ncpii-residual",
        zs=u.zs,
        norms=frobenius(res),
        mask=u.mask,
        metadata={"C": [C.real, C.imag] if isinstance(C, complex) else C,
                  "step": u.step, "count": u.count},
    )


def best_fit_constant(u: GridFunction) -> tuple[complex, float]:
    """Measured C that best annihilates the PII residual of u, plus max deviation.

    Fits C per point as trace(u'' - 2u^3 + 2(zu+uz))/d and averages; the
    deviation reports how far the pointwise values spread around the mean.
    """
    upp = fd2(u)
    d = u.dim
    per_point = np.empty(u.count, dtype=complex)
    for k, z in enumerate(u.zs):
        uk = u.values[k]
        m = upp.values[k] - 2 * uk @ uk @ uk + 2 * (z * uk + uk * z)
        per_point[k] = np.trace(m) / d
    inner = per_point[3:-3] if u.count > 10 else per_point
    c = complex(np.mean(inner))
    return c, float(np.max(np.abs(inner - c)))
