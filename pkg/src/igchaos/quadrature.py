"""Adaptive cubature over boxes, used for every microstate integral.

Thin wrapper over :func:`scipy.integrate.cubature` with the Gauss-Kronrod 21
point product rule: the estimate and its embedded error come from the same
rule, and subdivision continues until the requested tolerances are met.
"""
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cubature

from .errors import QuadratureError


@dataclass(frozen=True)
class QuadratureSpec:
    rtol: float = 1e-10
    atol: float = 1e-13
    max_subdivisions: int = 20000

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("quadrature tolerances must be positive")


DEFAULT_QUADRATURE = QuadratureSpec()


def integrate_box(f, lower, upper, spec=DEFAULT_QUADRATURE):
    """Integrate a vectorised integrand over an axis-aligned box.

    Parameters
    ----------
    f : callable
        Maps an ``(npoints, ndim)`` array to an ``(npoints, ...)`` array.
    lower, upper : array_like
        Box corners, finite.
    spec : QuadratureSpec

    Returns
    -------
    estimate, error : ndarray
        Integral estimate and absolute error estimate, shaped like one output
        row of ``f``.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise QuadratureError("integration box must be finite")
    with np.errstate(over="ignore", invalid="ignore"):
        res = cubature(
            f, lower, upper, rule="gk21", rtol=spec.rtol, atol=spec.atol,
            max_subdivisions=spec.max_subdivisions,
        )
    est = np.asarray(res.estimate)
    err = np.asarray(res.error)
    if not np.all(np.isfinite(est)):
        raise QuadratureError("integral diverged (non-finite estimate)", achieved_error=err)
    if res.status != "converged":
        raise QuadratureError(
            f"cubature did not converge; achieved error {np.max(err):.3e}",
            achieved_error=err,
        )
    return est, err
