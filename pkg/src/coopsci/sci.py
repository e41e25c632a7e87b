"""Split covariance intersection and split-aware GPS updates.

Each estimate carries ``P = P_dep + P_ind``.  Dependent parts are fused with
covariance-intersection weights ``omega`` / ``1 - omega``; independent parts
follow the ordinary Kalman combination.  ``omega`` is picked by minimizing the
log-determinant of the fused covariance (by default its position block).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from coopsci.core import (
    DegenerateUpdateError,
    SplitEstimate,
    _cholesky_solve,
    _is_well_conditioned,
    _mm,
    _mv,
    _sandwich,
    _spd_cholesky,
    _symmetrize,
    njit,
)
from coopsci.kalman import GpsModel, _joseph, _kalman_gain

MAX_FUSION_COND = 1e12
_INVGOLD = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class OmegaSearch:
    """Settings for the omega search.

    The searched interval is ``[lower + clamp, upper - clamp]``.  ``block`` is
    the number of leading state rows whose covariance determinant is
    minimized (2 = position only); ``None`` uses the full matrix.
    """

    lower: float = 0.0
    upper: float = 1.0
    tolerance: float = 1e-4
    clamp: float = 1e-3
    grid_points: int = 21
    block: int | None = 2

    def __post_init__(self):
        if not 0.0 <= self.lower < self.upper <= 1.0:
            raise ValueError("omega bounds must satisfy 0 <= lower < upper <= 1")
        if self.upper - self.lower <= 2 * self.clamp:
            raise ValueError("clamp leaves an empty search interval")
        if self.grid_points < 3:
            raise ValueError("grid_points must be at least 3")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")

    @property
    def interval(self) -> tuple[float, float]:
        return self.lower + self.clamp, self.upper - self.clamp

    def block_size(self, n: int) -> int:
        return n if self.block is None else min(self.block, n)


@njit
def _is_zero(m):
    for v in m.ravel():
        if v != 0.0:
            return False
    return True


@njit
def _inflate(p_dep, p_ind, weight):
    # weight == 0 is the limit convention: only allowed with no dependent part
    if weight == 0.0:
        return p_ind.copy()
    return p_dep / weight + p_ind


@njit
def _sci_fuse(xa, pda, pia, xb, pdb, pib, w):
    if not (0.0 <= w <= 1.0):
        raise ValueError("invalid weight")
    if (w == 0.0 and not _is_zero(pda)) or (w == 1.0 and not _is_zero(pdb)):
        raise ValueError("invalid weight")
    p1 = _inflate(pda, pia, w)
    p2 = _inflate(pdb, pib, 1.0 - w)
    s = p1 + p2
    if not _is_well_conditioned(s, MAX_FUSION_COND):
        raise DegenerateUpdateError("degenerate fusion")
    # K = P1 (P1 + P2)^-1; both symmetric so K' = S^-1 P1.
    L, _ = _spd_cholesky(_symmetrize(s))
    K = _cholesky_solve(L, p1).T.copy()
    A = np.eye(xa.shape[0]) - K
    x = xa + _mv(K, xb - xa)
    p = _symmetrize(_mm(A, p1))
    pi = _symmetrize(_sandwich(A, pia) + _sandwich(K, pib))
    return x, p - pi, pi


@njit
def _fused_logdet(pda, pia, pdb, pib, w, block):
    p1 = _inflate(pda, pia, w)
    p2 = _inflate(pdb, pib, 1.0 - w)
    L, ok = _spd_cholesky(_symmetrize(p1 + p2))
    if not ok:
        return np.inf
    # Fused P = P1 - P1 (P1 + P2)^-1 P1; only its leading block is needed.
    X = _cholesky_solve(L, p1[:, :block].copy())
    p = _symmetrize(p1[:block, :block] - _mm(p1[:block, :], X))
    if block == 1:
        return np.log(p[0, 0]) if p[0, 0] > 0.0 else np.inf
    if block == 2:
        det = p[0, 0] * p[1, 1] - p[0, 1] * p[1, 0]
        return np.log(det) if det > 0.0 and p[0, 0] > 0.0 else np.inf
    Lp, ok = _spd_cholesky(p)
    if not ok:
        return np.inf
    total = 0.0
    for i in range(block):
        total += 2.0 * np.log(Lp[i, i])
    return total


@njit
def _optimize_omega(pda, pia, pdb, pib, lo, hi, tol, ngrid, block):
    # Coarse grid first so the golden-section bracket holds the global minimum.
    step = (hi - lo) / (ngrid - 1)
    best_i = 0
    best_f = np.inf
    for i in range(ngrid):
        f = _fused_logdet(pda, pia, pdb, pib, lo + i * step, block)
        if f < best_f:
            best_f = f
            best_i = i
    best_w = lo + best_i * step
    if not np.isfinite(best_f):
        return 0.5 * (lo + hi)
    a = lo + max(best_i - 1, 0) * step
    b = lo + min(best_i + 1, ngrid - 1) * step
    c = b - _INVGOLD * (b - a)
    d = a + _INVGOLD * (b - a)
    fc = _fused_logdet(pda, pia, pdb, pib, c, block)
    fd = _fused_logdet(pda, pia, pdb, pib, d, block)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVGOLD * (b - a)
            fc = _fused_logdet(pda, pia, pdb, pib, c, block)
        else:
            a, c, fc = c, d, fd
            d = a + _INVGOLD * (b - a)
            fd = _fused_logdet(pda, pia, pdb, pib, d, block)
    mid = 0.5 * (a + b)
    if _fused_logdet(pda, pia, pdb, pib, mid, block) < best_f:
        return mid
    return best_w


@njit
def _gps_split_update(x, pd, pi, z, H, R, literal):
    p = pd + pi
    K = _kalman_gain(p, H, R)
    x_new = x + _mv(K, z - _mv(H, x))
    pi_new = _joseph(pi, K, H, R)
    if literal:
        # Printed form: the total is rebuilt from the independent part alone.
        p_new = pi_new.copy()
    else:
        p_new = _joseph(p, K, H, R)
    return x_new, p_new - pi_new, pi_new


def sci_fuse(a: SplitEstimate, b: SplitEstimate, omega: float) -> SplitEstimate:
    """Fuse two split estimates with a fixed CI weight ``omega``.

    ``omega`` weights ``a``'s dependent part (``P_dep / omega``) and
    ``1 - omega`` weights ``b``'s.  The endpoints 0 and 1 are accepted only
    when the dependent part they would divide is exactly zero.
    """
    x, pd, pi = _sci_fuse(a.state, a.p_dep, a.p_ind, b.state, b.p_dep, b.p_ind, float(omega))
    return SplitEstimate(x, pd, pi)


def fused_logdet(a: SplitEstimate, b: SplitEstimate, omega: float, search: OmegaSearch | None = None) -> float:
    """Objective minimized by :func:`optimize_omega` (``inf`` when degenerate)."""
    search = search or OmegaSearch()
    return float(_fused_logdet(a.p_dep, a.p_ind, b.p_dep, b.p_ind, float(omega), search.block_size(a.state.size)))


def optimize_omega(a: SplitEstimate, b: SplitEstimate, search: OmegaSearch | None = None) -> float:
    """Weight minimizing the log-determinant of the fused covariance."""
    search = search or OmegaSearch()
    lo, hi = search.interval
    return float(
        _optimize_omega(
            a.p_dep, a.p_ind, b.p_dep, b.p_ind,
            lo, hi, search.tolerance, search.grid_points, search.block_size(a.state.size),
        )
    )


def fuse(a: SplitEstimate, b: SplitEstimate, search: OmegaSearch | None = None) -> SplitEstimate:
    return sci_fuse(a, b, optimize_omega(a, b, search))


def information_fuse(xa, pa, xb, pb):
    """Information-form fusion of two independent estimates.

    Kept as an independent check on :func:`fuse` for inputs without dependent
    parts.
    """
    ia = np.linalg.inv(pa)
    ib = np.linalg.inv(pb)
    p = np.linalg.inv(ia + ib)
    return p @ (ia @ xa + ib @ xb), p


def gps_split_update(est: SplitEstimate, z, model: GpsModel, literal: bool = False) -> SplitEstimate:
    """Position fix applied to a split estimate.

    One gain is computed from the total covariance and both the total and the
    independent part receive the Joseph update; the dependent part is their
    difference.  ``literal=True`` instead rebuilds the total from the
    independent part alone, which zeroes the dependent part after every fix.
    """
    z = np.array(z, dtype=float).reshape(-1)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite measurement")
    x, pd, pi = _gps_split_update(est.state, est.p_dep, est.p_ind, z, model.H, model.R, literal)
    return SplitEstimate(x, pd, pi)
