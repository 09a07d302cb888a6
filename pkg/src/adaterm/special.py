"""Special-function support: the digamma function and a pinned float32 floor.

digamma is evaluated by shifting the argument with psi(x) = psi(x+1) - 1/x
until it reaches 6, then applying the de Moivre asymptotic expansion.  With
terms through x**-14 the truncation error at x=6 is ~1e-13 relative, well
inside the 1e-10 contract.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["digamma", "EPS_FLOAT32", "W_NU_BAR_CEIL"]

# Smallest positive normal 32-bit binary float, pinned as a literal so the
# w_nu ceiling below is identical on every platform and build.
EPS_FLOAT32 = 1.17549435e-38

# Ceiling of w_nu_bar = w - ln(w) evaluated at the float32 floor, ~87.3365.
W_NU_BAR_CEIL = EPS_FLOAT32 - math.log(EPS_FLOAT32)

# Coefficients of -B_{2n}/(2n) for n = 1..7 (asymptotic tail of psi).
_ASYMPTOTIC_COEFFS = (
    -1.0 / 12.0,
    1.0 / 120.0,
    -1.0 / 252.0,
    1.0 / 240.0,
    -1.0 / 132.0,
    691.0 / 32760.0,
    -1.0 / 12.0,
)

_SHIFT_THRESHOLD = 6.0


def digamma(x):
    """Digamma function psi(x) for x > 0, accurate to 1e-10 relative.

    Accepts scalars or arrays; raises on any non-positive input.
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr <= 0.0):
        raise ValueError(f"digamma domain error (requires x > 0): {x}")

    work = arr.copy() if arr.ndim else arr.reshape(1).copy()
    acc = np.zeros_like(work)
    # psi(x) = psi(x + 1) - 1/x, applied until every element reaches the
    # asymptotic region.  At most ceil(threshold) rounds for any positive x.
    for _ in range(int(_SHIFT_THRESHOLD)):
        low = work < _SHIFT_THRESHOLD
        if not low.any():
            break
        acc[low] -= 1.0 / work[low]
        work[low] += 1.0

    inv2 = 1.0 / (work * work)
    tail = np.zeros_like(work)
    for c in reversed(_ASYMPTOTIC_COEFFS):
        tail = (tail + c) * inv2
    result = acc + np.log(work) - 0.5 / work + tail
    if arr.ndim == 0:
        return float(result[0])
    return result
