import logging
from typing import Callable

from ..errors import NoBracket, SolverDidNotConverge

logger = logging.getLogger(__name__)

MAX_ITER = 200


def bisect_decreasing(
    func: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float,
    max_iter: int = MAX_ITER,
    name: str = "f",
) -> float:
    """Bisection for a strictly decreasing function with f(lo) > 0 > f(hi).

    Stops once |f| < tol or the bracket has collapsed to adjacent floats
    (the residual is then at rounding level). Raises NoBracket when the
    sign pattern is wrong and SolverDidNotConverge after ``max_iter`` halvings.
    """
    f_lo, f_hi = func(lo), func(hi)
    if not (f_lo > 0 > f_hi):
        raise NoBracket(
            f"{name} does not change sign on the bracket",
            {"lo": lo, "hi": hi, "f_lo": f_lo, "f_hi": f_hi},
        )
    mid = 0.5 * (lo + hi)
    for it in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = func(mid)
        if abs(f_mid) < tol:
            logger.debug("%s: converged after %d halvings, residual %.3g", name, it + 1, f_mid)
            return mid
        if mid <= lo or mid >= hi:
            logger.debug("%s: bracket collapsed at %.17g, residual %.3g", name, mid, f_mid)
            return mid
        if f_mid > 0:
            lo = mid
        else:
            hi = mid
    raise SolverDidNotConverge(
        f"{name} did not converge", {"lo": lo, "hi": hi, "iterations": max_iter}
    )
