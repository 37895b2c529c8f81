"""Riccati residual evaluation for the eigenvector-ratio equations.

The classical form is Gamma' = -4 i lam Gamma + u - Gamma u Gamma for
Gamma = chi Phi^-1; the deformed form reads
Delta' = -4 i lam Delta + f2 + [f2, Delta] - Delta f2 Delta, where the
printed version omits lam.  Both readings ship behind a mode flag.
"""

from __future__ import annotations

import numpy as np

from .grids import (
    GridFunction,
    ResidualReport,
    fd1,
    frobenius,
    merge_masks,
    widen_mask,
)
from .darboux import POLE_MASK_RADIUS, pointwise_ratio

POLE_EXCLUSION_RADIUS = 0.05  # grid units around closed-form poles


def gamma_from_linear(first: GridFunction, second: GridFunction) -> GridFunction:
    """Pointwise ratio first * second^-1 with pole masking."""
    return pointwise_ratio(first, second)


def ncpii_riccati_residual(
    gamma: GridFunction,
    u: GridFunction,
    lam: complex,
    dgamma: GridFunction | None = None,
) -> ResidualReport:
    """Per-point norm of Gamma' + 4 i lam Gamma - u + Gamma u Gamma.

    Gamma' comes from 4th-order finite differences unless an exact derivative
    grid is supplied.
    """
    dg = (dgamma or fd1(gamma)).values
    res = (
        dg
        + 4j * lam * gamma.values
        - u.values
        + np.matmul(np.matmul(gamma.values, u.values), gamma.values)
    )
    mask = merge_masks(gamma, u)
    if mask is not None:
        mask = widen_mask(mask, POLE_MASK_RADIUS)
    return ResidualReport(
        label="riccati-ncpii",
        zs=gamma.zs,
        norms=frobenius(res),
        mask=mask,
        metadata={"lambda": [complex(lam).real, complex(lam).imag],
                  "step": gamma.step, "count": gamma.count},
    )


def quantum_riccati_residual(
    delta: GridFunction,
    f2: GridFunction,
    lam: complex,
    mode: str = "with-lambda",
    ddelta: GridFunction | None = None,
) -> ResidualReport:
    """Defect of the deformed Riccati form in the selected reading.

    mode='bare' uses the printed -4 i Delta; mode='with-lambda' uses
    -4 i lam Delta (the form the linear system actually produces).  The two
    defects differ by exactly 4 i (1 - lam) Delta.
    """
    if mode not in ("bare", "with-lambda"):
        raise ValueError(f"unknown mode {mode!r}")
    coef = 4j if mode == "bare" else 4j * lam
    dd = (ddelta or fd1(delta)).values
    dv, fv = delta.values, f2.values
    res = (
        dd
        + coef * dv
        - fv
        - (np.matmul(fv, dv) - np.matmul(dv, fv))
        + np.matmul(np.matmul(dv, fv), dv)
    )
    mask = merge_masks(delta, f2)
    if mask is not None:
        mask = widen_mask(mask, POLE_MASK_RADIUS)
    return ResidualReport(
        label=f"riccati-quantum-{mode}",
        zs=delta.zs,
        norms=frobenius(res),
        mask=mask,
        metadata={"lambda": [complex(lam).real, complex(lam).imag], "mode": mode,
                  "step": delta.step, "count": delta.count},
    )


def remark_closed_form(
    lam1: complex, start: float, stop: float, step: float
) -> tuple[GridFunction, GridFunction]:
    """The stated closed-form pair: u[1] = -8 i lam1 (1 - e^{-8 i lam1 z})^-1 e^{-4 i lam1 z}
    and Gamma = e^{4 i lam1 z}, with points near the u[1] poles masked."""
    count = int(round((stop - start) / step)) + 1
    zs = start + step * np.arange(count)
    expm4 = np.exp(-4j * lam1 * zs)
    denom = 1.0 - np.exp(-8j * lam1 * zs)
    bad = np.abs(denom) < 1e-12
    safe = np.where(bad, 1.0, denom)
    u_vals = (-8j * lam1) * expm4 / safe
    # exclusion radius around the pole locations (denominator zeros)
    radius_pts = max(int(round(POLE_EXCLUSION_RADIUS / step)), POLE_MASK_RADIUS)
    mask = widen_mask(bad, radius_pts) if bad.any() else None
    u = GridFunction(start, step, u_vals[:, np.newaxis, np.newaxis], mask)
    gamma = GridFunction(
        start, step, np.exp(4j * lam1 * zs)[:, np.newaxis, np.newaxis]
    )
    return u, gamma
