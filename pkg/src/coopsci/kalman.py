"""Constant-velocity Kalman filter with Joseph-form measurement updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from coopsci.core import (
    DegenerateUpdateError,
    _cholesky_solve,
    _is_well_conditioned,
    _mm,
    _mv,
    _sandwich,
    _spd_cholesky,
    _symmetrize,
    njit,
)

# Innovation covariances with a larger condition number are rejected.
MAX_INNOVATION_COND = 1e12
DEFAULT_Q_DENSITY = 0.1  # m^2/s^3, white-noise acceleration spectral density


@dataclass(frozen=True, eq=False)
class LinearModel:
    F: np.ndarray
    Q: np.ndarray
    dt: float = 1.0


@dataclass(frozen=True, eq=False)
class GpsModel:
    H: np.ndarray
    R: np.ndarray


def cv_model(dt: float = 1.0, q: float = DEFAULT_Q_DENSITY) -> LinearModel:
    """2D constant-velocity model with continuous white-noise acceleration.

    State order is ``[x, y, vx, vy]``; ``q`` is the acceleration spectral
    density shared by both axes.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if q < 0:
        raise ValueError("process noise density must be non-negative")
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    Q = np.zeros((4, 4))
    for p, v in ((0, 2), (1, 3)):
        Q[p, p] = dt**3 / 3.0
        Q[p, v] = Q[v, p] = dt**2 / 2.0
        Q[v, v] = dt
    return LinearModel(F, q * Q, float(dt))


def gps_model(std: float, dim: int = 4) -> GpsModel:
    """Position-only fix with isotropic noise ``std`` (meters)."""
    if std < 0:
        raise ValueError("negative standard deviation")
    H = np.zeros((2, dim))
    H[0, 0] = H[1, 1] = 1.0
    return GpsModel(H, std**2 * np.eye(2))


@njit
def _kf_predict(x, P, F, Q):
    return _mv(F, x), _symmetrize(_sandwich(F, P) + Q)


@njit
def _kalman_gain(P, H, R):
    S = _symmetrize(_sandwich(H, P) + R)
    if not _is_well_conditioned(S, MAX_INNOVATION_COND):
        raise DegenerateUpdateError("degenerate measurement update")
    # K = P H' S^-1, solved rather than inverted.
    L, _ = _spd_cholesky(S)
    return _cholesky_solve(L, _mm(H, P)).T.copy()


@njit
def _joseph(P, K, H, R):
    A = np.eye(P.shape[0]) - _mm(K, H)
    return _symmetrize(_sandwich(A, P) + _sandwich(K, R))


@njit
def _kf_update(x, P, z, H, R):
    K = _kalman_gain(P, H, R)
    return x + _mv(K, z - _mv(H, x)), _joseph(P, K, H, R)


def _vec(x) -> np.ndarray:
    x = np.array(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite vector")
    return x


def kf_predict(est, model: LinearModel):
    """Propagate ``(x, P)`` one step: ``x <- F x``, ``P <- F P F' + Q``."""
    x, P = est
    return _kf_predict(_vec(x), np.asarray(P, dtype=float), model.F, model.Q)


def kf_update(est, z, model: GpsModel):
    """Position fix update with the Joseph-form covariance.

    Raises :class:`DegenerateUpdateError` if the innovation covariance is
    singular or its condition number exceeds ``MAX_INNOVATION_COND``.
    """
    x, P = est
    return _kf_update(_vec(x), np.asarray(P, dtype=float), _vec(z), model.H, model.R)
