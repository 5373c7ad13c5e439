"""Adaptive Simpson quadrature."""

import math

from .errors import NumericError


def _simpson(fa, fm, fb, a, b):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-6, max_depth: int = 50) -> float:
    """Integrate scalar ``f`` over [a, b] to absolute tolerance ``tol``.

    Uses the Richardson acceptance test ``|S_left + S_right - S| <= 15 tol`` and
    halves the tolerance at every bisection. Integrands with kinks should be
    split at the kinks by the caller.
    """
    if b == a:
        return 0.0
    if b < a:
        return -adaptive_simpson(f, b, a, tol, max_depth)
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = _simpson(fa, fm, fb, a, b)
    total = 0.0
    # explicit stack of (a, b, fa, fm, fb, whole, tol, depth)
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a, b, fa, fm, fb, whole, tol, depth = stack.pop()
        m = 0.5 * (a + b)
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = _simpson(fa, flm, fm, a, m)
        right = _simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if abs(delta) <= 15.0 * tol:
            total += left + right + delta / 15.0
        elif depth >= max_depth:
            raise NumericError(f"adaptive Simpson did not converge on [{a}, {b}]")
        else:
            stack.append((m, b, fm, frm, fb, right, 0.5 * tol, depth + 1))
            stack.append((a, m, fa, flm, fm, left, 0.5 * tol, depth + 1))
    if not math.isfinite(total):
        raise NumericError("adaptive Simpson produced a non-finite value")
    return total
