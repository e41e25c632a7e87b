"""Shared numeric types, covariance hygiene and seeded randomness.

Vectors and matrices are plain float64 numpy arrays.  The small kernels here are
compiled with numba so the scenario loop can call them without leaving native
code; the public wrappers validate inputs and raise the package exceptions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

STATE_DIM = 4
POS = slice(0, 2)
VEL = slice(2, 4)

# Relative jitter levels tried, in order, when a factorization fails.
JITTER_LADDER = (1e-12, 1e-10, 1e-8)


class EstimationError(ValueError):
    """Base class for numerical failures inside the estimators."""


class CovarianceError(EstimationError):
    """A covariance could not be factorized or is not PSD."""


class DegenerateUpdateError(EstimationError):
    """Innovation or fusion matrix is singular."""


class GeometryError(EstimationError):
    """Range geometry is undefined (e.g. coincident positions)."""


def njit(*args, **kwargs):
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return numba.njit(*args, **kwargs)


@njit
def _all_finite(m):
    for v in m.ravel():
        if not np.isfinite(v):
            return False
    return True


@njit
def _symmetrize(m):
    n = m.shape[0]
    out = np.empty((n, n))
    for i in range(n):
        out[i, i] = m[i, i]
        for j in range(i + 1, n):
            v = 0.5 * (m[i, j] + m[j, i])
            out[i, j] = v
            out[j, i] = v
    return out


# Loop-based products: BLAS call overhead dominates at these sizes.
@njit
def _mm(a, b):
    n, m = a.shape
    p = b.shape[1]
    out = np.zeros((n, p))
    for i in range(n):
        for k in range(m):
            aik = a[i, k]
            for j in range(p):
                out[i, j] += aik * b[k, j]
    return out


@njit
def _mmt(a, b):
    """``a @ b.T``."""
    n, m = a.shape
    p = b.shape[0]
    out = np.zeros((n, p))
    for i in range(n):
        for j in range(p):
            s = 0.0
            for k in range(m):
                s += a[i, k] * b[j, k]
            out[i, j] = s
    return out


@njit
def _mv(a, x):
    n, m = a.shape
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        for k in range(m):
            s += a[i, k] * x[k]
        out[i] = s
    return out


@njit
def _sandwich(a, p):
    """``a @ p @ a.T``."""
    return _mmt(_mm(a, p), a)


@njit
def _is_well_conditioned(s, max_cond):
    """True if symmetric ``s`` is positive definite with cond below ``max_cond``."""
    if not _all_finite(s):
        return False
    eig = np.linalg.eigvalsh(_symmetrize(s))
    return eig[-1] > 0.0 and eig[0] * max_cond > eig[-1]


@njit
def _spd_cholesky(m):
    """Strict Cholesky factor of a symmetric positive-definite matrix.

    Returns ``(L, ok)``; ``ok`` is False when a pivot is not positive or the
    pivot spread implies a condition number above ~1e12.
    """
    n = m.shape[0]
    L = np.zeros((n, n))
    dmax = 0.0
    dmin = np.inf
    for j in range(n):
        d = m[j, j]
        for k in range(j):
            d -= L[j, k] * L[j, k]
        if not (d > 0.0):
            return L, False
        dmax = max(dmax, d)
        dmin = min(dmin, d)
        ljj = np.sqrt(d)
        L[j, j] = ljj
        for i in range(j + 1, n):
            s = m[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / ljj
    return L, dmin * 1e12 > dmax


@njit
def _cholesky_solve(L, B):
    """Solve ``(L L') X = B`` for a lower-triangular ``L``."""
    n = L.shape[0]
    X = B.copy()
    for c in range(X.shape[1]):
        for i in range(n):
            s = X[i, c]
            for k in range(i):
                s -= L[i, k] * X[k, c]
            X[i, c] = s / L[i, i]
        for i in range(n - 1, -1, -1):
            s = X[i, c]
            for k in range(i + 1, n):
                s -= L[k, i] * X[k, c]
            X[i, c] = s / L[i, i]
    return X


@njit
def _semidefinite_cholesky(m, out):
    """Cholesky that tolerates zero pivots on a PSD matrix.

    Writes the factor into ``out`` and returns False if ``m`` is not PSD.
    """
    n = m.shape[0]
    scale = 0.0
    for i in range(n):
        scale += abs(m[i, i])
    tol = 1e-13 * scale
    out[:, :] = 0.0
    for j in range(n):
        d = m[j, j]
        for k in range(j):
            d -= out[j, k] * out[j, k]
        if d < -tol:
            return False
        if d <= tol:
            # Zero pivot: the rest of the column has to vanish as well.
            for i in range(j + 1, n):
                s = m[i, j]
                for k in range(j):
                    s -= out[i, k] * out[j, k]
                if abs(s) > np.sqrt(tol * abs(m[i, i]) + 1e-300) + tol:
                    return False
            continue
        ljj = np.sqrt(d)
        out[j, j] = ljj
        for i in range(j + 1, n):
            s = m[i, j]
            for k in range(j):
                s -= out[i, k] * out[j, k]
            out[i, j] = s / ljj
    return True


@njit
def _cholesky_psd(m):
    n = m.shape[0]
    if not _all_finite(m):
        raise CovarianceError("covariance not PSD")
    out = np.zeros((n, n))
    if _semidefinite_cholesky(m, out):
        return out
    trace = 0.0
    for i in range(n):
        trace += m[i, i]
    for eps in (1e-12, 1e-10, 1e-8):
        jittered = m.copy()
        for i in range(n):
            jittered[i, i] += eps * trace / n
        if _semidefinite_cholesky(jittered, out):
            return out
    raise CovarianceError("covariance not PSD")


def _as_matrix(m) -> np.ndarray:
    m = np.array(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("non-finite matrix")
    return m


def symmetrize(m) -> np.ndarray:
    """Return ``(m + m.T) / 2``, which is exactly symmetric."""
    return _symmetrize(_as_matrix(m))


def cholesky_psd(m) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == m`` for a PSD matrix ``m``.

    Semidefinite input is accepted (zero pivots give zero columns).  If the
    factorization still fails, a diagonal jitter of ``eps * trace(m) / n`` is
    added for each ``eps`` in :data:`JITTER_LADDER` before giving up with
    :class:`CovarianceError`.
    """
    return _cholesky_psd(_as_matrix(m))


def is_psd(m, rel_tol: float = 1e-9) -> bool:
    m = np.asarray(m, dtype=float)
    if not np.allclose(m, m.T, rtol=rel_tol, atol=rel_tol * max(np.abs(m).max(), 1e-300)):
        return False
    eig = np.linalg.eigvalsh(symmetrize(m))
    return bool(eig.min() >= -rel_tol * max(np.trace(m), 0.0) - 1e-300)


def sample_gaussian(rng: np.random.Generator, mean: float, std: float) -> float:
    """One draw from N(mean, std**2); ``std == 0`` returns ``mean`` exactly."""
    if std < 0:
        raise ValueError("negative standard deviation")
    if std == 0:
        return float(mean)
    return float(rng.normal(mean, std))


@dataclass(frozen=True)
class RngStream:
    """Names an independent random stream by ``(seed, stream_id)``.

    Generators are derived through :class:`numpy.random.SeedSequence`, so the
    draws depend only on the key and not on platform or worker layout.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= int(v) < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v}")

    def generator(self, *subkeys: int) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), *subkeys))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, stream_id: int) -> "RngStream":
        """Derive a new stream deterministically from this one."""
        word = self.generator(0xC0FFEE, int(stream_id)).integers(0, 2**63, dtype=np.int64)
        return RngStream(int(word), int(stream_id))


@dataclass(frozen=True, eq=False)
class SplitEstimate:
    """State with its covariance split into dependent and independent parts.

    The total covariance is ``p_dep + p_ind``.
    """

    state: np.ndarray
    p_dep: np.ndarray
    p_ind: np.ndarray

    def __post_init__(self):
        state = np.array(self.state, dtype=float).reshape(-1)
        n = state.size
        p_dep = np.array(self.p_dep, dtype=float)
        p_ind = np.array(self.p_ind, dtype=float)
        if p_dep.shape != (n, n) or p_ind.shape != (n, n):
            raise ValueError(f"covariance shapes {p_dep.shape}, {p_ind.shape} do not match state of size {n}")
        if not (np.all(np.isfinite(state)) and np.all(np.isfinite(p_dep)) and np.all(np.isfinite(p_ind))):
            raise ValueError("non-finite estimate")
        for name, arr in (("state", state), ("p_dep", p_dep), ("p_ind", p_ind)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def p(self) -> np.ndarray:
        return self.p_dep + self.p_ind

    @classmethod
    def independent(cls, state, p) -> "SplitEstimate":
        p = np.asarray(p, dtype=float)
        return cls(state, np.zeros_like(p), p)

    @classmethod
    def dependent(cls, state, p) -> "SplitEstimate":
        p = np.asarray(p, dtype=float)
        return cls(state, p, np.zeros_like(p))

    def is_valid(self, rel_tol: float = 1e-9) -> bool:
        return is_psd(self.p, rel_tol) and is_psd(self.p_ind, rel_tol) and is_psd(self.p_dep, rel_tol)

    def __eq__(self, other):
        if not isinstance(other, SplitEstimate):
            return NotImplemented
        return (
            np.array_equal(self.state, other.state)
            and np.array_equal(self.p_dep, other.p_dep)
            and np.array_equal(self.p_ind, other.p_ind)
        )

    __hash__ = None
