"""Damped (Levenberg-Marquardt) least squares with a central-difference Jacobian."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

CONVERGED = "converged"
MAX_ITERATIONS = "max-iterations"
SINGULAR = "singular"

JAC_STEP = 1e-6
LAMBDA_MAX = 1e16


@dataclass
class LMResult:
    x: np.ndarray
    residuals: np.ndarray
    jac: np.ndarray
    status: str
    iterations: int
    cost_history: list[float] = field(default_factory=list)

    @property
    def rss(self) -> float:
        return float(self.residuals @ self.residuals)


def numerical_jacobian(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                       rel_step: float = JAC_STEP) -> np.ndarray:
    """Central differences with step ``rel_step * max(|x_i|, 1)``."""
    cols = []
    for i in range(x.size):
        h = rel_step * max(abs(x[i]), 1.0)
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((fun(xp) - fun(xm)) / (2.0 * h))
    return np.column_stack(cols) if cols else np.empty((fun(x).size, 0))


def levenberg_marquardt(fun: Callable[[np.ndarray], np.ndarray], x0: np.ndarray,
                        max_iter: int = 200, lam: float = 1e-3, xtol: float = 1e-10,
                        gtol: float = 1e-12) -> LMResult:
    """
    Minimize ``sum(fun(x)**2)``.

    A trial step is accepted only if it lowers the residual sum of squares;
    the damping is divided by 10 on acceptance and multiplied by 10 on
    rejection, so the accepted cost sequence is non-increasing.
    """
    x = np.array(x0, dtype=float)
    r = fun(x)
    cost = float(r @ r)
    history = [cost]
    if x.size == 0:
        return LMResult(x, r, np.empty((r.size, 0)), CONVERGED, 0, history)
    J = numerical_jacobian(fun, x)
    status = MAX_ITERATIONS
    it = 0
    for it in range(1, max_iter + 1):
        A = J.T @ J
        diag = np.diag(A).copy()
        if not np.all(np.isfinite(A)) or np.max(diag) <= 0:
            status = SINGULAR
            break
        grad = J.T @ r
        if np.max(np.abs(grad)) < gtol:
            status = CONVERGED
            break
        diag = np.maximum(diag, 1e-12 * np.max(diag))
        accepted = False
        while lam <= LAMBDA_MAX:
            try:
                dx = np.linalg.solve(A + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + dx
            r_new = fun(x_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no downhill step exists at any damping: we sit at a minimum
            status = CONVERGED
            break
        x, r, cost = x_new, r_new, cost_new
        history.append(cost)
        lam = max(lam / 10.0, 1e-12)
        J = numerical_jacobian(fun, x)
        if np.linalg.norm(dx) <= xtol * (np.linalg.norm(x) + xtol):
            status = CONVERGED
            break
    return LMResult(x, r, J, status, it, history)


def covariance(result: LMResult) -> np.ndarray:
    """Gauss-Newton covariance ``s^2 (J^T J)^+`` with ``s^2 = RSS / (n - p)``."""
    n, p = result.jac.shape
    dof = n - p
    if p == 0:
        return np.empty((0, 0))
    s2 = result.rss / dof if dof > 0 else np.nan
    return s2 * np.linalg.pinv(result.jac.T @ result.jac)
