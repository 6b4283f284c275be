"""Digamma and log-gamma on positive reals.

Both functions accept scalars or arrays and return the same kind.
"""

import numpy as np

# Asymptotic digamma coefficients B_2n / (2n) for n = 1..9.
_PSI_ASYMPTOTIC = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
    43867.0 / 14364.0,
)
_PSI_SHIFT = 6.0

# Lanczos approximation, g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def _as_positive(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(arr > 0):
        raise ValueError(f"{name} requires strictly positive arguments")
    return arr


def digamma(x):
    """Logarithmic derivative of the gamma function for ``x > 0``.

    Shifts the argument up to at least 6 with psi(x) = psi(x + 1) - 1/x,
    then evaluates the asymptotic series.
    """
    arr = _as_positive(x, "digamma")
    z = arr.copy()
    acc = np.zeros_like(z)
    small = z < _PSI_SHIFT
    while np.any(small):
        acc[small] -= 1.0 / z[small]
        z[small] += 1.0
        small = z < _PSI_SHIFT
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    for c in reversed(_PSI_ASYMPTOTIC):
        series = series * inv2 + c
    out = acc + np.log(z) - 0.5 / z - series * inv2
    return out if out.ndim else float(out)


def gammaln(x):
    """Natural log of the gamma function for ``x > 0``."""
    arr = _as_positive(x, "gammaln")
    tiny = arr < 0.5
    z = np.where(tiny, arr + 1.0, arr) - 1.0
    series = np.full_like(z, _LANCZOS[0])
    for k in range(1, len(_LANCZOS)):
        series += _LANCZOS[k] / (z + k)
    t = z + _LANCZOS_G + 0.5
    out = _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(series)
    out = np.where(tiny, out - np.log(arr), out)
    return out if out.ndim else float(out)
