"""Fixed-step classical Runge-Kutta integration for the linear eigensystems."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .grids import GridFunction, half_step_values


class IntegrationError(RuntimeError):
    pass


BLOWUP_NORM = 1e8

# z-part coefficient of the three supported first-order systems, as a pair of
# functions (a, b) so that X' = a(lam, q) X + q Y and Y' = q X + b(lam, q) Y
# with q multiplying from the left.
SYSTEM_KINDS = ("toda", "ncpii", "quantum")


def _diag_terms(kind: str, lam: complex):
    if kind == "toda":
        return lam, lam, False
    if kind == "ncpii":
        return -2j * lam, 2j * lam, False
    if kind == "quantum":
        # diagonal also carries +q (the f2*I term of the quantum z-part)
        return -2j * lam, 2j * lam, True
    raise ValueError(f"unknown linear system kind {kind!r}")


def rk4_path(
    f: Callable[[float, np.ndarray], np.ndarray],
    z0: float,
    y0: np.ndarray,
    step: float,
    count: int,
) -> np.ndarray:
    """Classical RK4 trajectory: returns an array of `count` states starting at y0."""
    out = np.empty((count,) + y0.shape, dtype=complex)
    out[0] = y0
    y = np.asarray(y0, dtype=complex)
    h = step
    for k in range(count - 1):
        z = z0 + k * h
        k1 = f(z, y)
        k2 = f(z + h / 2, y + h / 2 * k1)
        k3 = f(z + h / 2, y + h / 2 * k2)
        k4 = f(z + h, y + h * k3)
        y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.isfinite(y).all() or np.abs(y).max() > BLOWUP_NORM:
            raise IntegrationError(f"state norm exceeded {BLOWUP_NORM:.0e} at z={z + h:.6g}")
        out[k + 1] = y
    return out


def integrate_linear_system(
    q: GridFunction,
    lam: complex,
    init: tuple[np.ndarray | complex, np.ndarray | complex],
    kind: str = "toda",
) -> tuple[GridFunction, GridFunction]:
    """Integrate the 2-component linear system with coefficient grid q.

    kind='toda':     X' = lam X + q Y,            Y' = lam Y + q X
    kind='ncpii':    X' = -2i lam X + q Y,        Y' = q X + 2i lam Y
    kind='quantum':  X' = (-2i lam + q) X + q Y,  Y' = q X + (2i lam + q) Y

    q at half-steps comes from cubic interpolation of its samples, keeping
    the classical RK4 at 4th order.
    """
    a_coef, b_coef, add_q = _diag_terms(kind, lam)
    d = q.dim
    eye = np.eye(d, dtype=complex)
    x0 = init[0] if isinstance(init[0], np.ndarray) else complex(init[0]) * eye
    y0 = init[1] if isinstance(init[1], np.ndarray) else complex(init[1]) * eye
    mids = half_step_values(q)
    h = q.step

    def q_at(z: float) -> np.ndarray:
        t = (z - q.start) / h
        k = int(round(t))
        if abs(t - k) < 0.25:
            return q.values[min(max(k, 0), q.count - 1)]
        return mids[min(max(int(np.floor(t)), 0), len(mids) - 1)]

    def f(z: float, state: np.ndarray) -> np.ndarray:
        x, y = state
        qz = q_at(z)
        dx = a_coef * x + qz @ y
        dy = qz @ x + b_coef * y
        if add_q:
            dx = dx + qz @ x
            dy = dy + qz @ y
        return np.stack([dx, dy])

    path = rk4_path(f, q.start, np.stack([x0, y0]), h, q.count)
    X = GridFunction(q.start, h, path[:, 0])
    Y = GridFunction(q.start, h, path[:, 1])
    return X, Y


def convergence_order(errors: Sequence[float]) -> float:
    """Observed order from errors at successively halved steps (log2 slope mean)."""
    errs = [e for e in errors if e > 0]
    if len(errs) < 2:
        raise ValueError("need at least two positive errors")
    slopes = [np.log2(errs[k] / errs[k + 1]) for k in range(len(errs) - 1)]
    return float(np.mean(slopes))
