"""Two-robot 2D world and the per-epoch cooperative estimation loop.

Robot 1 runs a plain Kalman filter on frequent GPS fixes.  Robot 2 predicts
with the same constant-velocity model; when its own (sporadic) GPS fix is
available it takes a split Joseph update, otherwise it builds a
range-constrained estimate from the inter-robot range and Robot 1's estimate
and fuses it with split covariance intersection.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from coopsci.core import RngStream, SplitEstimate, _mv, _sandwich, _symmetrize, njit
from coopsci.kalman import _kf_predict, _kf_update, cv_model
from coopsci.sci import OmegaSearch, _gps_split_update, _optimize_omega, _sci_fuse
from coopsci.unscented import MIN_SEPARATION, UtParams, _predict_range, _range_estimate, _weights

ARENA = (0.0, 200.0)
PATH_KINDS = ("circle", "rectangle", "donut")

# Substream ids inside one scenario seed.
_S_INIT, _S_RANGE, _S_GPS1, _S_GPS2, _S_DROPOUT = range(5)


@dataclass(frozen=True)
class PathSpec:
    """Closed path traversed at constant speed.

    circle: ``radius`` around ``center``.  rectangle: ``width`` x ``height``
    centered on ``center``, starting at the lower-left corner and running
    counter-clockwise.  donut: a lap of the outer circle (``radius``), a radial
    leg in, a lap of the inner circle (``inner_radius``) and a leg back out.
    ``phase`` is the starting fraction of the perimeter, in [0, 1).
    """

    kind: str = "circle"
    center: tuple[float, float] = (100.0, 100.0)
    radius: float = 70.0
    inner_radius: float = 35.0
    width: float = 60.0
    height: float = 40.0
    speed: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in PATH_KINDS:
            raise ValueError(f"unknown path kind {self.kind!r}; expected one of {PATH_KINDS}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.speed < 0:
            raise ValueError("speed must be non-negative")
        if self.kind == "donut" and not 0 < self.inner_radius < self.radius:
            raise ValueError("donut needs 0 < inner_radius < radius")
        if self.kind == "rectangle" and (self.width <= 0 or self.height <= 0):
            raise ValueError("rectangle needs positive width and height")
        if self.kind == "circle" and self.radius <= 0:
            raise ValueError("circle needs a positive radius")

    @property
    def perimeter(self) -> float:
        if self.kind == "circle":
            return 2 * math.pi * self.radius
        if self.kind == "rectangle":
            return 2 * (self.width + self.height)
        return 2 * math.pi * (self.radius + self.inner_radius) + 2 * (self.radius - self.inner_radius)

    def extent(self) -> tuple[float, float]:
        """Half-extent of the bounding box along x and y."""
        if self.kind == "rectangle":
            return self.width / 2, self.height / 2
        return self.radius, self.radius

    def position(self, s: np.ndarray) -> np.ndarray:
        """Positions at arc lengths ``s`` (wrapped onto the perimeter)."""
        s = np.mod(np.asarray(s, dtype=float), self.perimeter)
        cx, cy = self.center
        if self.kind == "circle":
            a = s / self.radius
            return np.column_stack([cx + self.radius * np.cos(a), cy + self.radius * np.sin(a)])
        if self.kind == "rectangle":
            w, h = self.width, self.height
            x0, y0 = cx - w / 2, cy - h / 2
            out = np.empty((s.size, 2))
            for i, si in enumerate(s.ravel()):
                if si < w:
                    out[i] = x0 + si, y0
                elif si < w + h:
                    out[i] = x0 + w, y0 + (si - w)
                elif si < 2 * w + h:
                    out[i] = x0 + w - (si - w - h), y0 + h
                else:
                    out[i] = x0, y0 + h - (si - 2 * w - h)
            return out
        R, r = self.radius, self.inner_radius
        outer, leg, inner = 2 * math.pi * R, R - r, 2 * math.pi * r
        out = np.empty((s.size, 2))
        for i, si in enumerate(s.ravel()):
            if si < outer:
                a = si / R
                out[i] = cx + R * math.cos(a), cy + R * math.sin(a)
            elif si < outer + leg:
                out[i] = cx + R - (si - outer), cy
            elif si < outer + leg + inner:
                a = (si - outer - leg) / r
                out[i] = cx + r * math.cos(a), cy + r * math.sin(a)
            else:
                out[i] = cx + r + (si - outer - leg - inner), cy
        return out


def gen_path(spec: PathSpec, epochs: int, dt: float = 1.0) -> np.ndarray:
    """True states ``[x, y, vx, vy]`` at epochs ``0..epochs``.

    Velocity at epoch k is the forward difference to epoch k + 1, so the
    truth moves exactly at constant velocity between samples.
    """
    if epochs < 0 or dt <= 0:
        raise ValueError("epochs must be >= 0 and dt > 0")
    s0 = spec.phase * spec.perimeter
    s = s0 + spec.speed * dt * np.arange(epochs + 2)
    pos = spec.position(s)
    lo, hi = ARENA
    if pos.min() < lo or pos.max() > hi:
        raise ValueError("path out of bounds")
    vel = (pos[1:] - pos[:-1]) / dt
    return np.hstack([pos[:-1], vel])


@njit
def _synth_range(p1, p2, std, z):
    d = np.sqrt((p1[0] - p2[0]) ** 2 + (p1[1] - p2[1]) ** 2) + std * z
    return max(d, 0.0)


def synth_range(p1, p2, noise_std: float, rng: np.random.Generator) -> float:
    """Euclidean range plus Gaussian noise, clamped at zero."""
    if noise_std < 0:
        raise ValueError("negative standard deviation")
    z = rng.standard_normal() if noise_std > 0 else 0.0
    return float(_synth_range(np.asarray(p1, dtype=float), np.asarray(p2, dtype=float), float(noise_std), z))


def synth_gps(truth, noise_std: float, rng: np.random.Generator) -> np.ndarray:
    """True position plus isotropic Gaussian noise."""
    if noise_std < 0:
        raise ValueError("negative standard deviation")
    pos = np.array(truth, dtype=float)[:2]
    if noise_std == 0:
        return pos
    return pos + noise_std * rng.standard_normal(2)


@dataclass(frozen=True)
class ScenarioConfig:
    epochs: int = 400
    dt: float = 1.0
    r1_path: PathSpec = field(default_factory=lambda: PathSpec("rectangle", width=140.0, height=100.0))
    r2_path: PathSpec = field(default_factory=PathSpec)
    range_noise_std: float = 5.0
    gps_noise_std_r1: float = 3.0
    gps_noise_std_r2: float = 3.0
    gps_period_r1: int = 1  # epochs; 0 disables
    gps_period_r2: int = 8
    gps_dropout_r2: float = 0.25
    range_enabled: bool = True
    init_pos_offset: float = 0.0
    init_vel_offset_std: float = 0.0
    process_noise: float = 0.1  # m^2/s^3
    ut: UtParams = field(default_factory=UtParams)
    omega: OmegaSearch = field(default_factory=OmegaSearch)
    literal_gps_update: bool = False
    burn_in: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.epochs <= 0:
            raise ValueError(f"epochs must be > 0, got {self.epochs}")
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        for name in ("range_noise_std", "gps_noise_std_r1", "gps_noise_std_r2", "init_pos_offset",
                     "init_vel_offset_std", "process_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 <= self.gps_dropout_r2 <= 1.0:
            raise ValueError(f"gps_dropout_r2 must be in [0, 1], got {self.gps_dropout_r2}")
        if self.gps_period_r1 < 0 or self.gps_period_r2 < 0:
            raise ValueError("gps periods must be >= 0")
        if not 0 <= self.burn_in < self.epochs:
            raise ValueError(f"burn_in must be in [0, epochs), got {self.burn_in}")
        if self.ut.n != 4:
            raise ValueError("ut.n must be 4 (planar position + velocity)")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def with_overrides(self, **kwargs) -> "ScenarioConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True, eq=False)
class ScenarioTrace:
    """Array form of a scenario run; row k is epoch k."""

    truth_r1: np.ndarray
    truth_r2: np.ndarray
    est_r1: np.ndarray
    est_r2: np.ndarray
    p_dep: np.ndarray
    p_ind: np.ndarray
    omega: np.ndarray
    gps_r1: np.ndarray
    gps_r2: np.ndarray
    ranged: np.ndarray

    @property
    def errors(self) -> np.ndarray:
        return np.hypot(*(self.est_r2[:, :2] - self.truth_r2[:, :2]).T)


@dataclass(frozen=True, eq=False)
class EpochRecord:
    epoch: int
    truth_r1: np.ndarray
    truth_r2: np.ndarray
    estimate: SplitEstimate
    error: float
    gps_r1_applied: bool
    gps_r2_applied: bool
    range_applied: bool


@njit
def _simulate(truth1, truth2, x1, p1, x2, pi2, F, Q, gps1_std, gps2_std, range_std,
              gps1_period, gps2_period, dropout, range_enabled, z_range, z_gps1, z_gps2, u_drop,
              wm, wc, ut_c, w_lo, w_hi, w_tol, w_grid, w_block, literal):
    n_ep = truth1.shape[0]
    est1 = np.zeros((n_ep, 4))
    est2 = np.zeros((n_ep, 4))
    pdep = np.zeros((n_ep, 4, 4))
    pind = np.zeros((n_ep, 4, 4))
    omega = np.full(n_ep, np.nan)
    g1 = np.zeros(n_ep, dtype=np.bool_)
    g2 = np.zeros(n_ep, dtype=np.bool_)
    rg = np.zeros(n_ep, dtype=np.bool_)

    H = np.zeros((2, 4))
    H[0, 0] = 1.0
    H[1, 1] = 1.0
    R1 = gps1_std**2 * np.eye(2)
    R2 = gps2_std**2 * np.eye(2)
    range_var = range_std**2

    pd2 = np.zeros((4, 4))
    est1[0] = x1
    est2[0] = x2
    pind[0] = pi2
    for k in range(1, n_ep):
        # Robot 1: predict, then GPS on schedule.
        x1, p1 = _kf_predict(x1, p1, F, Q)
        if gps1_period > 0 and k % gps1_period == 0:
            z = truth1[k, :2] + gps1_std * z_gps1[k]
            x1, p1 = _kf_update(x1, p1, z, H, R1)
            g1[k] = True

        # Robot 2: both split parts propagate; fresh process noise is independent.
        x2 = _mv(F, x2)
        pd2 = _symmetrize(_sandwich(F, pd2))
        pi2 = _symmetrize(_sandwich(F, pi2) + Q)

        if gps2_period > 0 and k % gps2_period == 0 and u_drop[k] >= dropout:
            z = truth2[k, :2] + gps2_std * z_gps2[k]
            x2, pd2, pi2 = _gps_split_update(x2, pd2, pi2, z, H, R2, literal)
            g2[k] = True
        elif range_enabled:
            dx = x2[0] - x1[0]
            dy = x2[1] - x1[1]
            if np.sqrt(dx * dx + dy * dy) > MIN_SEPARATION:
                r = _synth_range(truth1[k], truth2[k], range_std, z_range[k])
                p_motion = pd2 + pi2
                d_hat, s = _predict_range(x2, p_motion, x1[:2], range_var, wm, wc, ut_c)
                xr, pr = _range_estimate(x2, p_motion, x1[:2], r, d_hat, s)
                # The range estimate is built from the motion estimate: fully dependent.
                zero = np.zeros((4, 4))
                w = _optimize_omega(pd2, pi2, pr, zero, w_lo, w_hi, w_tol, w_grid, w_block)
                x2, pd2, pi2 = _sci_fuse(x2, pd2, pi2, xr, pr, zero, w)
                omega[k] = w
                rg[k] = True

        est1[k] = x1
        est2[k] = x2
        pdep[k] = pd2
        pind[k] = pi2
    return est1, est2, pdep, pind, omega, g1, g2, rg


def initial_estimate(truth: np.ndarray, offset: float, vel_std: float, rng: np.random.Generator):
    """Truth displaced by ``offset`` meters in a random direction plus a velocity error.

    Returns ``(x0, P0)`` with ``P0 = diag(offset^2 + 1, offset^2 + 1, 1, 1)``.
    """
    heading = rng.uniform(0.0, 2 * math.pi)
    dv = rng.standard_normal(2)
    x0 = np.array(truth, dtype=float)
    x0[:2] += offset * np.array([math.cos(heading), math.sin(heading)])
    x0[2:] += vel_std * dv
    return x0, np.diag([offset**2 + 1.0, offset**2 + 1.0, 1.0, 1.0])


def simulate(config: ScenarioConfig) -> ScenarioTrace:
    """Run one scenario and return its per-epoch arrays."""
    truth1 = gen_path(config.r1_path, config.epochs, config.dt)
    truth2 = gen_path(config.r2_path, config.epochs, config.dt)
    stream = RngStream(int(config.seed))
    n_ep = config.epochs + 1
    x2, p2 = initial_estimate(truth2[0], config.init_pos_offset, config.init_vel_offset_std,
                              stream.generator(_S_INIT))
    x1, p1 = truth1[0].copy(), np.eye(4)
    z_range = stream.generator(_S_RANGE).standard_normal(n_ep)
    z_gps1 = stream.generator(_S_GPS1).standard_normal((n_ep, 2))
    z_gps2 = stream.generator(_S_GPS2).standard_normal((n_ep, 2))
    u_drop = stream.generator(_S_DROPOUT).random(n_ep)

    model = cv_model(config.dt, config.process_noise)
    ut = config.ut
    wm, wc = _weights(ut.n, ut.lam, ut.alpha, ut.beta)
    lo, hi = config.omega.interval
    est1, est2, pdep, pind, omega, g1, g2, rg = _simulate(
        truth1, truth2, x1, p1, x2, p2, model.F, model.Q,
        float(config.gps_noise_std_r1), float(config.gps_noise_std_r2), float(config.range_noise_std),
        int(config.gps_period_r1), int(config.gps_period_r2), float(config.gps_dropout_r2),
        bool(config.range_enabled), z_range, z_gps1, z_gps2, u_drop,
        wm, wc, ut.n + ut.lam, lo, hi, config.omega.tolerance, config.omega.grid_points,
        config.omega.block_size(4), bool(config.literal_gps_update),
    )
    return ScenarioTrace(truth1, truth2, est1, est2, pdep, pind, omega, g1, g2, rg)


def run_scenario(config: ScenarioConfig) -> list[EpochRecord]:
    """Per-epoch records of one run (epoch 0 is the initial estimate)."""
    tr = simulate(config)
    err = tr.errors
    return [
        EpochRecord(
            epoch=k,
            truth_r1=tr.truth_r1[k],
            truth_r2=tr.truth_r2[k],
            estimate=SplitEstimate(tr.est_r2[k], tr.p_dep[k], tr.p_ind[k]),
            error=float(err[k]),
            gps_r1_applied=bool(tr.gps_r1[k]),
            gps_r2_applied=bool(tr.gps_r2[k]),
            range_applied=bool(tr.ranged[k]),
        )
        for k in range(tr.est_r2.shape[0])
    ]


TRACE_COLUMNS = (
    "epoch", "r1_true_x", "r1_true_y", "r2_true_x", "r2_true_y", "r2_est_x", "r2_est_y", "error_m",
    "p_xx", "p_xy", "p_yy", "gps_r1", "gps_r2", "range",
)


def write_trace(trace: ScenarioTrace, path) -> None:
    """Per-epoch CSV for plotting trajectories and their uncertainty."""
    p = trace.p_dep + trace.p_ind
    err = trace.errors
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for k in range(err.size):
            w.writerow([
                k,
                *(repr(float(v)) for v in (*trace.truth_r1[k, :2], *trace.truth_r2[k, :2], *trace.est_r2[k, :2],
                                           err[k], p[k, 0, 0], p[k, 0, 1], p[k, 1, 1])),
                int(trace.gps_r1[k]), int(trace.gps_r2[k]), int(trace.ranged[k]),
            ])
