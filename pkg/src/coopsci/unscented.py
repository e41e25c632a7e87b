"""Sigma points, the unscented transform, and the range-constrained estimate.

The range-constrained estimate turns one scalar inter-robot range into a full
position estimate for the ranged robot: the unscented transform predicts the
range and its variance from the motion estimate, and the position is slid along
the anchor-to-robot bearing by the range innovation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from coopsci.core import EstimationError, GeometryError, _all_finite, _cholesky_psd, njit

# Minimum anchor-to-robot separation (m) for which the bearing is defined.
MIN_SEPARATION = 1e-6


@dataclass(frozen=True)
class UtParams:
    """Scaled unscented transform parameters.

    ``kappa`` defaults to ``3 - n``.  ``lam = alpha**2 * (n + kappa) - n``.
    """

    alpha: float = 1.0
    beta: float = 2.0
    kappa: float | None = None
    n: int = 4

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("state dimension must be positive")
        if self.kappa is None:
            object.__setattr__(self, "kappa", 3.0 - self.n)
        spread = self.n + self.lam
        if spread == 0:
            raise ValueError("degenerate scaling")
        if spread < 0:
            raise ValueError(f"n + lambda must be positive, got {spread}")

    @property
    def lam(self) -> float:
        return self.alpha**2 * (self.n + self.kappa) - self.n


@dataclass(frozen=True, eq=False)
class SigmaSet:
    points: np.ndarray  # (2n+1, n)
    w_mean: np.ndarray
    w_cov: np.ndarray


@dataclass(frozen=True)
class RangePrediction:
    d_hat: float
    s: float


@njit
def _weights(n, lam, alpha, beta):
    c = n + lam
    wm = np.full(2 * n + 1, 0.5 / c)
    wc = wm.copy()
    wm[0] = lam / c
    wc[0] = lam / c + (1.0 - alpha * alpha + beta)
    return wm, wc


def ut_weights(params: UtParams) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance weights for ``2n + 1`` sigma points."""
    lam = params.lam
    if params.n + lam == 0:
        raise ValueError("degenerate scaling")
    return _weights(params.n, lam, params.alpha, params.beta)


@njit
def _sigma_points(x, P, c):
    n = x.shape[0]
    L = np.sqrt(c) * _cholesky_psd(P)
    pts = np.empty((2 * n + 1, n))
    pts[0] = x
    for i in range(n):
        pts[1 + i] = x + L[:, i]
        pts[1 + n + i] = x - L[:, i]
    return pts


@njit
def _ut_stats(Y, wm, wc):
    mean = wm @ Y
    d = Y - mean
    cov = (d.T * wc) @ d
    return mean, 0.5 * (cov + cov.T)


def make_sigma_points(x, p, params: UtParams | None = None) -> SigmaSet:
    """Symmetric sigma set about ``x`` along the columns of chol((n + lam) P)."""
    x = np.array(x, dtype=float).reshape(-1)
    params = params or UtParams(n=x.size)
    if params.n != x.size:
        raise ValueError(f"UtParams.n={params.n} does not match state size {x.size}")
    p = np.asarray(p, dtype=float)
    wm, wc = ut_weights(params)
    return SigmaSet(_sigma_points(x, p, params.n + params.lam), wm, wc)


def unscented_transform(sigma: SigmaSet, f: Callable[[np.ndarray], np.ndarray]):
    """Push ``sigma`` through ``f``; return the weighted mean and covariance.

    Scalar-valued maps come back as a length-1 mean and a 1x1 covariance.
    """
    Y = np.array([np.atleast_1d(np.asarray(f(pt), dtype=float)) for pt in sigma.points])
    if not np.all(np.isfinite(Y)):
        raise EstimationError("transform overflow")
    return _ut_stats(Y, sigma.w_mean, sigma.w_cov)


@njit
def _predict_range(x, P, anchor, sensor_var, wm, wc, c):
    pts = _sigma_points(x, P, c)
    m = pts.shape[0]
    d = np.empty(m)
    for i in range(m):
        dx = pts[i, 0] - anchor[0]
        dy = pts[i, 1] - anchor[1]
        d[i] = np.sqrt(dx * dx + dy * dy)
    d_hat = 0.0
    for i in range(m):
        d_hat += wm[i] * d[i]
    s = 0.0
    for i in range(m):
        s += wc[i] * (d[i] - d_hat) ** 2
    return d_hat, s + sensor_var


def predict_range(x_motion, p_motion, anchor, sensor_var: float, params: UtParams | None = None) -> RangePrediction:
    """Predicted range to ``anchor`` and its variance including sensor noise.

    Sigma points span the full state; only their position rows enter the
    distance.
    """
    x = np.array(x_motion, dtype=float).reshape(-1)
    anchor = np.array(anchor, dtype=float).reshape(-1)
    if not np.all(np.isfinite(anchor)):
        raise ValueError("non-finite anchor")
    if sensor_var < 0:
        raise ValueError("negative sensor variance")
    params = params or UtParams(n=x.size)
    wm, wc = ut_weights(params)
    d_hat, s = _predict_range(x, np.asarray(p_motion, dtype=float), anchor, float(sensor_var), wm, wc, params.n + params.lam)
    return RangePrediction(float(d_hat), float(s))


@njit
def _range_estimate(x, P, anchor, r_meas, d_hat, s):
    if not (r_meas >= 0.0):
        raise ValueError("invalid range")
    dx = x[0] - anchor[0]
    dy = x[1] - anchor[1]
    dist = np.sqrt(dx * dx + dy * dy)
    if dist <= MIN_SEPARATION:
        raise GeometryError("undefined bearing")
    ux = dx / dist
    uy = dy / dist
    innov = r_meas - d_hat
    xr = x.copy()
    xr[0] += ux * innov
    xr[1] += uy * innov
    # Position block: S u u' + P_pos.  Velocity block copied, cross terms zeroed.
    Pr = np.zeros_like(P)
    Pr[0, 0] = s * ux * ux + P[0, 0]
    Pr[0, 1] = s * ux * uy + P[0, 1]
    Pr[1, 0] = s * uy * ux + P[1, 0]
    Pr[1, 1] = s * uy * uy + P[1, 1]
    n = x.shape[0]
    for i in range(2, n):
        for j in range(2, n):
            Pr[i, j] = P[i, j]
    return xr, 0.5 * (Pr + Pr.T)


def range_constrained_estimate(x_motion, p_motion, anchor, r_meas: float, pred: RangePrediction):
    """Position estimate placed along the anchor-to-robot bearing at the measured range.

    Returns ``(x_range, P_range)`` over the full state.  Velocity and its
    covariance block pass through from the motion estimate; position/velocity
    cross-covariance is zeroed.
    """
    x = np.array(x_motion, dtype=float).reshape(-1)
    P = np.asarray(p_motion, dtype=float)
    anchor = np.array(anchor, dtype=float).reshape(-1)
    if not (_all_finite(x) and _all_finite(anchor)):
        raise ValueError("non-finite input")
    return _range_estimate(x, P, anchor, float(r_meas), pred.d_hat, pred.s)
