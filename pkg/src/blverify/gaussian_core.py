"""Standard-normal primitives.

Everything downstream (transport maps, local-time formulas, the embedding
simulator) reduces to four functions: the standard normal CDF and quantile,
the Gaussian heat kernel, and the density-at-quantile map.  They accept
scalars or numpy arrays and are stateless, so they are safe to call from any
number of threads.

Accuracy notes
--------------
* ``std_normal_cdf`` is evaluated through the complementary error function,
  which keeps full *relative* accuracy in the lower tail (down to ~1e-308).
  In the upper tail the returned double saturates at the representation
  limit near 1; callers that need relative tail accuracy should evaluate
  ``std_normal_cdf(-x)`` instead (the transport tables do exactly that).
* ``std_normal_quantile`` starts from a rational approximation and applies
  two Newton corrections against ``std_normal_cdf``, so the pair is
  self-consistent to the last few ulps.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erfc, ndtri

_SQRT2 = np.sqrt(2.0)
_SQRT_2PI = np.sqrt(2.0 * np.pi)
# Smallest/largest doubles we ever return as probabilities; keeps results
# inside the open interval (0, 1).
_P_MIN = 5e-324
_P_MAX = np.nextafter(1.0, 0.0)
# Quantile domain: inputs closer to {0, 1} than this are rejected.
_Q_EDGE = 1e-300


def _as_array(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    return arr, (arr.ndim == 0)


def std_normal_cdf(x):
    """CDF of the standard normal law, Phi(x) = P(Z <= x).

    Parameters
    ----------
    x : float or array_like
        Evaluation point(s); must be finite.

    Returns
    -------
    float or ndarray
        Probabilities in the open interval (0, 1).  For |x| beyond the
        resolution of float64 the value saturates at the nearest
        representable probability.
    """
    arr, scalar = _as_array(x)
    if not np.all(np.isfinite(arr)):
        raise ValueError("std_normal_cdf requires finite arguments")
    out = 0.5 * erfc(-arr / _SQRT2)
    out = np.clip(out, _P_MIN, _P_MAX)
    return float(out) if scalar else out


def std_normal_pdf(x):
    """Density of the standard normal law."""
    arr, scalar = _as_array(x)
    out = np.exp(-0.5 * arr * arr) / _SQRT_2PI
    return float(out) if scalar else out


def std_normal_quantile(u):
    """Inverse of ``std_normal_cdf`` on (0, 1).

    Inputs closer to 0 or 1 than 1e-300 are rejected rather than mapped to
    huge abscissas.  For u > 1/2 the computation runs through the exact
    complement 1 - u (exact in IEEE arithmetic for u >= 1/2), so both tails
    retain full relative accuracy.

    Raises
    ------
    ValueError
        If u is outside (0, 1) or within 1e-300 of an endpoint.
    """
    arr, scalar = _as_array(u)
    # note: (1 - u) >= 1e-300 holds for every double u < 1, so the upper
    # rejection reduces to u < 1
    if not np.all((arr >= _Q_EDGE) & (arr < 1.0)):
        raise ValueError("std_normal_quantile requires u in (0, 1), "
                         "at least 1e-300 away from the endpoints")
    upper = arr > 0.5
    v = np.where(upper, 1.0 - arr, arr)  # exact for arr >= 1/2
    z = ndtri(v)
    # Two Newton corrections against our own CDF; the lower-tail erfc
    # evaluation keeps the residual Phi(z) - v fully significant.
    for _ in range(2):
        z = z - (0.5 * erfc(-z / _SQRT2) - v) / (np.exp(-0.5 * z * z) / _SQRT_2PI)
    out = np.where(upper, -z, z)
    return float(out) if scalar else out


def heat_kernel(t, x):
    """Gaussian heat kernel p(t; x) = exp(-x^2 / 2t) / sqrt(2 pi t).

    Parameters
    ----------
    t : float
        Time, strictly positive.
    x : float or array_like
        Spatial position(s).

    Raises
    ------
    ValueError
        If t <= 0.
    """
    if not (t > 0.0):
        raise ValueError(f"heat_kernel requires t > 0, got t={t}")
    arr, scalar = _as_array(x)
    out = np.exp(-arr * arr / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)
    return float(out) if scalar else out


def gauss_density_of_quantile(xi):
    """The map xi -> Phi'(Phi^{-1}(xi)) on (0, 1).

    Concave, symmetric about xi = 1/2, with boundary limits 0 at both ends;
    its derivative is -Phi^{-1}(xi).  Used by the transport checks to compare
    a tilted density-at-quantile against the Gaussian one.
    """
    arr, scalar = _as_array(xi)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise ValueError("gauss_density_of_quantile requires xi in (0, 1)")
    out = std_normal_pdf(std_normal_quantile(np.clip(arr, _Q_EDGE, 1.0 - _Q_EDGE)))
    return float(out) if scalar else out
