########################################################################################################################
# imports

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from mpcloc import config
from mpcloc.errors import SolverNoConverge


logger = logging.getLogger(__name__)

########################################################################################################################


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    starts: int
    diagnostics: dict = field(default_factory=dict)


def multistart_simplex(
    objective: Callable[[np.ndarray], float],
    starts: Sequence[np.ndarray],
    bounds: Optional[Sequence[tuple]] = None,
    xatol: float = config.SOLVER_XATOL,
    fatol: float = config.SOLVER_FATOL,
    maxiter: int = config.SOLVER_MAXITER,
) -> SimplexResult:
    """
    Minimizes an objective with Nelder-Mead from several starting points and keeps the best run.

    Non-finite objective values are treated as +inf, so a start outside the likelihood support is simply abandoned
    by the simplex.

    Args:
        objective (Callable): Function to minimize.
        starts (Sequence[np.ndarray]): Starting points.
        bounds (Sequence[tuple]): Optional per-coordinate (low, high) bounds.
        xatol (float): Absolute parameter tolerance.
        fatol (float): Absolute objective tolerance.
        maxiter (int): Iteration cap per start.

    Returns:
        SimplexResult: The best minimizer found.

    Raises:
        SolverNoConverge: If the best run hit the iteration cap while its simplex still spanned an objective change
            larger than SOLVER_NOCONVERGE_TOL.
    """

    def _safe(x):
        value = objective(np.asarray(x, dtype=float))
        return value if np.isfinite(value) else np.inf

    best = None
    iterations = 0
    for start in starts:
        start = np.asarray(start, dtype=float)
        if not np.isfinite(_safe(start)):
            continue
        res = minimize(
            _safe, start, method="Nelder-Mead", bounds=bounds,
            options={"xatol": xatol, "fatol": fatol, "maxiter": maxiter, "adaptive": start.size > 2},
        )
        iterations += int(res.nit)
        if best is None or res.fun < best.fun:
            best = res

    if best is None:
        raise SolverNoConverge("no starting point has a finite objective")

    spread = float(np.ptp(best.final_simplex[1]))
    if best.status == 2 and spread > config.SOLVER_NOCONVERGE_TOL:
        raise SolverNoConverge(f"iteration cap reached with objective spread {spread:.3g}")

    logger.debug("simplex finished: fun=%.6g after %d iterations over %d starts", best.fun, iterations, len(starts))
    return SimplexResult(
        x=np.asarray(best.x, dtype=float), fun=float(best.fun), iterations=iterations, starts=len(starts),
        diagnostics={"spread": spread},
    )
