"""Numerical integration of beta-Dyson Brownian motion and the multilevel
interlaced SDE, with stopping-time instrumentation.

Scheme: Euler-Maruyama with a per-step guard.  A proposed step is rejected
and retried at half the step size (fresh noise, up to ``max_halvings``) if it
would leave the state space (strict ordering / open cone) or move any
coordinate by more than half the distance to its nearest interacting
neighbour.  Contact monitors are evaluated on the refined grid, so a
delta-crossing inside a halved step is still recorded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .combinatorics import ConePoint, WeylPoint

__all__ = [
    "SdeConfig",
    "StoppingRecord",
    "StepUnderflowError",
    "DysonResult",
    "MultilevelResult",
    "dyson_drift",
    "multilevel_drift",
    "integrate_dyson",
    "integrate_multilevel",
    "bessel_step_reference",
    "expected_sum_sq_rate",
    "pack_cone",
    "unpack_cone",
    "level_slice",
]


class StepUnderflowError(RuntimeError):
    """Raised when the step-halving guard exhausts its budget; carries a dump."""

    def __init__(self, message: str, state: np.ndarray, time: float, dt: float):
        super().__init__(f"{message} (t={time}, dt={dt}, state={np.array2string(state)})")
        self.state = state
        self.time = time
        self.dt = dt


@dataclass(frozen=True)
class SdeConfig:
    """Configuration of an SDE integration run.

    ``theta`` is the Jack parameter (beta = 2*theta for the Dyson drift).
    ``initial`` may be None (Dyson only: zero start via an exact warm draw),
    a vector/WeylPoint, a ConePoint, or a per-path array.
    """

    n: int
    theta: float
    t_end: float
    dt: float
    seed: int
    delta_stop: float = 1e-4
    initial: object = None
    paths: int = 1
    snapshot_times: tuple[float, ...] = ()
    max_halvings: int = 40

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if not 0 < self.dt <= self.t_end:
            raise ValueError("need 0 < dt <= t_end")
        if self.delta_stop < 0:
            raise ValueError("delta_stop must be >= 0")
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        object.__setattr__(self, "snapshot_times", tuple(sorted(self.snapshot_times)))

    @property
    def beta(self) -> float:
        return 2.0 * self.theta


@dataclass
class StoppingRecord:
    """Per-path contact monitors (nan = never fired within the run)."""

    tau_delta: np.ndarray
    hat_tau_delta: np.ndarray
    min_gap_seen: np.ndarray
    delta: float


@dataclass
class DysonResult:
    times: np.ndarray
    snapshots: np.ndarray  # (paths, n_times, n)
    final: np.ndarray  # (paths, n)
    stopping: StoppingRecord
    config: SdeConfig


@dataclass
class MultilevelResult:
    times: np.ndarray
    snapshots: np.ndarray  # (paths, n_times, n(n+1)/2), packed
    final: np.ndarray  # (paths, n(n+1)/2), packed
    stopping: StoppingRecord
    config: SdeConfig
    collision_guarantee: bool
    stopped_on_contact: np.ndarray = field(default=None)  # bool mask, theta == 1 runs


# ---------------------------------------------------------------------------
# packed Gelfand-Tsetlin layout: level k occupies slice [k(k-1)/2, k(k+1)/2)
# ---------------------------------------------------------------------------


def level_slice(k: int) -> slice:
    return slice(k * (k - 1) // 2, k * (k + 1) // 2)


def pack_cone(cone: ConePoint) -> np.ndarray:
    return np.concatenate([cone.level(k) for k in range(1, cone.n_levels + 1)])


def unpack_cone(flat: np.ndarray, n: int, tol: float = 1e-9) -> ConePoint:
    levels = tuple(tuple(flat[level_slice(k)]) for k in range(1, n + 1))
    return ConePoint(levels, tol=tol)


def _cone_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (a, b) with the open-cone constraint x[a] < x[b]."""
    a, b = [], []
    for k in range(2, n + 1):
        off_k = k * (k - 1) // 2
        off_l = (k - 1) * (k - 2) // 2
        for i in range(1, k + 1):
            if i >= 2:
                a.append(off_l + i - 2)
                b.append(off_k + i - 1)
            if i <= k - 1:
                a.append(off_k + i - 1)
                b.append(off_l + i - 1)
    return np.array(a, dtype=int), np.array(b, dtype=int)


def _near_level_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    """All coordinate pairs on the same or adjacent levels (contact monitor set)."""
    a, b = [], []
    for k in range(1, n + 1):
        off_k = k * (k - 1) // 2
        for i in range(k):
            for j in range(i + 1, k):
                a.append(off_k + i)
                b.append(off_k + j)
        if k < n:
            off_u = k * (k + 1) // 2
            for i in range(k):
                for j in range(k + 1):
                    a.append(off_k + i)
                    b.append(off_u + j)
    return np.array(a, dtype=int), np.array(b, dtype=int)


def _triplet_centers(n: int) -> list[tuple[int, np.ndarray]]:
    """For each coordinate, the indices of all particles on strictly adjacent levels."""
    out = []
    for k in range(1, n + 1):
        off_k = k * (k - 1) // 2
        partners = []
        if k > 1:
            off_l = (k - 1) * (k - 2) // 2
            partners.extend(range(off_l, off_l + k - 1))
        if k < n:
            off_u = k * (k + 1) // 2
            partners.extend(range(off_u, off_u + k + 1))
        for i in range(k):
            if len(partners) >= 2:
                out.append((off_k + i, np.array(partners, dtype=int)))
    return out


class _ContactMonitor:
    """Tracks min gaps and first delta-contact times over a pair list.

    ``hat`` fires when any monitored pair comes within delta; ``tau`` fires
    when some particle has two distinct neighbours on strictly adjacent
    levels simultaneously within delta.
    """

    def __init__(
        self,
        paths: int,
        delta: float,
        pairs: tuple[np.ndarray, np.ndarray],
        centers: list[tuple[int, np.ndarray]] | None = None,
    ):
        self.delta = delta
        self.pair_a, self.pair_b = pairs
        self.centers = centers or []
        self.min_gap = np.full(paths, np.inf)
        self.hat_tau = np.full(paths, np.nan)
        self.tau = np.full(paths, np.nan)

    def update(self, x: np.ndarray, idx: np.ndarray, t: float):
        if self.pair_a.size == 0:
            return
        sub = x[idx]
        gaps = np.abs(sub[:, self.pair_a] - sub[:, self.pair_b])
        mg = gaps.min(axis=1)
        np.minimum.at(self.min_gap, idx, mg)
        fresh = np.isnan(self.hat_tau[idx]) & (mg <= self.delta)
        self.hat_tau[idx[fresh]] = t
        for c, partners in self.centers:
            d = np.abs(sub[:, partners] - sub[:, c : c + 1])
            second = np.partition(d, 1, axis=1)[:, 1]
            fire = np.isnan(self.tau[idx]) & (second <= self.delta)
            self.tau[idx[fire]] = t

    def record(self) -> StoppingRecord:
        return StoppingRecord(self.tau, self.hat_tau, self.min_gap, self.delta)


# ---------------------------------------------------------------------------
# drifts
# ---------------------------------------------------------------------------


def dyson_drift(x: "WeylPoint | Sequence[float]", beta: float) -> np.ndarray:
    """Drift b_i = (beta/2) * sum_{j != i} 1/(x_i - x_j); requires distinct coords."""
    arr = x.array() if isinstance(x, WeylPoint) else np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError("expected a single coordinate vector")
    diffs = arr[:, None] - arr[None, :]
    if np.any(np.abs(diffs + np.eye(len(arr))) == 0):
        raise ValueError("coincident coordinates have singular drift")
    return _dyson_drift_vec(arr[None, :], beta)[0]


def _dyson_drift_vec(x: np.ndarray, beta: float) -> np.ndarray:
    n = x.shape[1]
    diffs = x[:, :, None] - x[:, None, :]
    diffs[:, np.arange(n), np.arange(n)] = np.inf
    return (beta / 2.0) * (1.0 / diffs).sum(axis=2)


def multilevel_drift(y: "ConePoint | Sequence[Sequence[float]]", theta: float) -> list[np.ndarray]:
    """Drift of the interlaced SDE, level by level.

    Level-k coordinate i gets sum_{m != i} (1-theta)/(y^k_i - y^k_m)
    minus sum_m (1-theta)/(y^k_i - y^{k-1}_m); level 1 has zero drift.
    """
    if isinstance(y, ConePoint):
        levels = [y.level(k) for k in range(1, y.n_levels + 1)]
    else:
        levels = [np.asarray(lev, dtype=float) for lev in y]
    n = len(levels)
    flat = np.concatenate(levels)[None, :]
    for k in range(2, n + 1):
        lev = levels[k - 1]
        low = levels[k - 2]
        if np.any(lev[:-1] >= lev[1:]) or np.any(
            (lev[1:] <= low) | (lev[:-1] >= low)
        ):
            raise ValueError("point must lie in the open cone")
    out = _multi_drift_vec(flat, n, theta)[0]
    return [out[level_slice(k)] for k in range(1, n + 1)]


def _multi_drift_vec(x: np.ndarray, n: int, theta: float) -> np.ndarray:
    m = x.shape[0]
    out = np.zeros_like(x)
    c = 1.0 - theta
    if c == 0.0:
        return out
    for k in range(2, n + 1):
        sl = level_slice(k)
        sll = level_slice(k - 1)
        blk = x[:, sl]
        low = x[:, sll]
        diffs = blk[:, :, None] - blk[:, None, :]
        diffs[:, np.arange(k), np.arange(k)] = np.inf
        own = (1.0 / diffs).sum(axis=2)
        cross = (1.0 / (blk[:, :, None] - low[:, None, :])).sum(axis=2)
        out[:, sl] = c * (own - cross)
    return out


# ---------------------------------------------------------------------------
# guarded stepping kernel
# ---------------------------------------------------------------------------


def _nearest_gap(x: np.ndarray, partners: list[np.ndarray]) -> np.ndarray:
    """Per-coordinate distance to the nearest interacting neighbour."""
    m, dim = x.shape
    gap = np.full((m, dim), np.inf)
    for c in range(dim):
        p = partners[c]
        if p.size:
            gap[:, c] = np.abs(x[:, p] - x[:, c : c + 1]).min(axis=1)
    return gap


def _advance(
    x: np.ndarray,
    idx: np.ndarray,
    dt: float,
    t0: float,
    depth: int,
    drift: Callable[[np.ndarray], np.ndarray],
    valid: Callable[[np.ndarray], np.ndarray],
    partners: list[np.ndarray],
    rng: np.random.Generator,
    monitor: _ContactMonitor | None,
    max_halvings: int,
):
    """One guarded Euler-Maruyama step for the rows ``idx`` of ``x`` (in place)."""
    cur = x[idx]
    noise = rng.standard_normal(cur.shape)
    prop = cur + drift(cur) * dt + math.sqrt(dt) * noise
    ok = np.isfinite(prop).all(axis=1) & valid(prop)
    if partners:
        half_gap = 0.5 * _nearest_gap(cur, partners)
        ok &= (np.abs(prop - cur) <= half_gap).all(axis=1)
    good = idx[ok]
    if good.size:
        x[good] = prop[ok]
        if monitor is not None:
            monitor.update(x, good, t0 + dt)
    bad = idx[~ok]
    if bad.size:
        if depth >= max_halvings:
            raise StepUnderflowError(
                f"step halving exhausted after {max_halvings} levels",
                x[bad[0]],
                t0,
                dt,
            )
        _advance(x, bad, dt / 2, t0, depth + 1, drift, valid, partners, rng,
                 monitor, max_halvings)
        _advance(x, bad, dt / 2, t0 + dt / 2, depth + 1, drift, valid, partners,
                 rng, monitor, max_halvings)


def _time_grid(
    t_start: float,
    t_end: float,
    base_dt: float,
    snapshot_times: Sequence[float],
    ramp: float = 0.0,
    dt_floor: float = 1e-5,
) -> np.ndarray:
    """Step times from t_start to t_end, hitting every snapshot time exactly.

    With ``ramp`` > 0 the step size grows like ramp * t until it reaches
    base_dt, which keeps the relative step small right after a near-degenerate
    start.
    """
    marks = sorted({t for t in snapshot_times if t_start < t <= t_end} | {t_end})
    ts = [t_start]
    t = t_start
    for mark in marks:
        while t < mark - 1e-15:
            dt = base_dt if ramp == 0 else min(base_dt, max(dt_floor, ramp * t))
            t = min(t + dt, mark)
            ts.append(t)
    return np.array(ts)


def _integrate(
    x: np.ndarray,
    times: np.ndarray,
    drift: Callable[[np.ndarray], np.ndarray],
    valid: Callable[[np.ndarray], np.ndarray],
    partners: list[np.ndarray],
    rng: np.random.Generator,
    monitor: _ContactMonitor | None,
    snapshot_times: Sequence[float],
    max_halvings: int,
    active: np.ndarray | None = None,
    freeze_on_contact: bool = False,
) -> np.ndarray:
    """March ``x`` along ``times``; returns snapshots (paths, n_snaps, dim)."""
    paths, dim = x.shape
    snaps = np.zeros((paths, len(snapshot_times), dim))
    snap_lookup = {t: i for i, t in enumerate(snapshot_times)}
    if active is None:
        active = np.ones(paths, dtype=bool)
    for t in snapshot_times:
        if t <= times[0]:
            snaps[:, snap_lookup[t]] = x
    for a, b in zip(times[:-1], times[1:]):
        idx = np.flatnonzero(active)
        if idx.size:
            _advance(x, idx, b - a, a, 0, drift, valid, partners, rng, monitor,
                     max_halvings)
            if freeze_on_contact and monitor is not None:
                active &= np.isnan(monitor.hat_tau)
        if b in snap_lookup:
            snaps[:, snap_lookup[b]] = x
    return snaps


# ---------------------------------------------------------------------------
# public integrators
# ---------------------------------------------------------------------------


def _dyson_partners(n: int) -> list[np.ndarray]:
    return [np.array([j for j in range(n) if j != i], dtype=int) for i in range(n)]


def _as_paths_array(initial, paths: int, dim: int) -> np.ndarray:
    if isinstance(initial, WeylPoint):
        initial = initial.array()
    if isinstance(initial, ConePoint):
        initial = pack_cone(initial)
    arr = np.asarray(initial, dtype=float)
    if arr.ndim == 1:
        if arr.size != dim:
            raise ValueError(f"initial vector must have {dim} entries")
        return np.tile(arr, (paths, 1))
    if arr.shape != (paths, dim):
        raise ValueError(f"initial must have shape {(paths, dim)}")
    return arr.copy()


def integrate_dyson(cfg: SdeConfig) -> DysonResult:
    """Integrate beta-Dyson Brownian motion (beta = 2*theta).

    A None/all-zero initial condition is handled by one exact warm-start draw
    from the Hermite beta ensemble at variance dt0 (the exact law of the
    process at time dt0 from zero), which requires beta >= 1; integration
    then proceeds from t = dt0 with a ramped step size.
    """
    from . import ensembles  # local import: ensembles has no diffusion dependency

    n, paths, beta = cfg.n, cfg.paths, cfg.beta
    rng = np.random.default_rng(cfg.seed)
    init = cfg.initial.array() if isinstance(cfg.initial, WeylPoint) else cfg.initial
    zero_start = init is None or np.all(np.asarray(init, dtype=float) == 0.0)
    if zero_start:
        if beta < 1:
            raise ValueError("zero start requires beta >= 1 (no-collision regime)")
        dt0 = min(cfg.dt, 1e-5, cfg.t_end / 2)
        warm = ensembles.sample_hermite(
            ensembles.EnsembleParams(n, cfg.theta, dt0),
            paths,
            seed=int(rng.integers(2**63)),
        )
        x = warm.points.copy()
        times = _time_grid(dt0, cfg.t_end, cfg.dt, cfg.snapshot_times, ramp=0.05,
                           dt_floor=dt0)
    else:
        x = _as_paths_array(cfg.initial, paths, n)
        if np.any(np.diff(x, axis=1) <= 0):
            raise ValueError("initial Dyson state must be strictly ordered")
        times = _time_grid(0.0, cfg.t_end, cfg.dt, cfg.snapshot_times)

    def drift(sub: np.ndarray) -> np.ndarray:
        return _dyson_drift_vec(sub, beta)

    def valid(prop: np.ndarray) -> np.ndarray:
        return (np.diff(prop, axis=1) > 0).all(axis=1)

    partners = _dyson_partners(n)
    same_level_pairs = (
        np.array([i for i in range(n - 1)], dtype=int),
        np.array([i + 1 for i in range(n - 1)], dtype=int),
    )
    monitor = _ContactMonitor(paths, cfg.delta_stop, same_level_pairs)
    snaps = _integrate(x, times, drift, valid, partners, rng, monitor,
                       cfg.snapshot_times, cfg.max_halvings)
    return DysonResult(np.asarray(cfg.snapshot_times), snaps, x, monitor.record(), cfg)


def integrate_multilevel(cfg: SdeConfig) -> MultilevelResult:
    """Integrate the multilevel interlaced SDE from an interior cone point.

    theta < 1 is refused (the SDE is not the right object there).  theta == 1
    runs driftless coordinates and freezes each path at its first
    delta-contact, since without drift the cone is not preserved.  For
    1 < theta < 2 there is no guarantee against adjacent-level contacts;
    the result carries ``collision_guarantee = (theta >= 2)``.
    """
    if cfg.theta < 1:
        raise ValueError(
            "multilevel SDE runs require theta >= 1; the dynamics for smaller "
            "theta involves additional boundary terms and is out of scope"
        )
    if cfg.initial is None:
        raise ValueError("multilevel runs need an initial point in the open cone")
    n, paths = cfg.n, cfg.paths
    dim = n * (n + 1) // 2
    rng = np.random.default_rng(cfg.seed)
    x = _as_paths_array(cfg.initial, paths, dim)
    cone_a, cone_b = _cone_pairs(n)
    if cone_a.size and np.any(x[:, cone_a] >= x[:, cone_b]):
        raise ValueError("initial point must lie in the open cone")

    def drift(sub: np.ndarray) -> np.ndarray:
        return _multi_drift_vec(sub, n, cfg.theta)

    def valid(prop: np.ndarray) -> np.ndarray:
        if cone_a.size == 0:
            return np.ones(prop.shape[0], dtype=bool)
        return (prop[:, cone_a] < prop[:, cone_b]).all(axis=1)

    pair_a, pair_b = _near_level_pairs(n)
    partners: list[np.ndarray] = [np.array([], dtype=int) for _ in range(dim)]
    for a, b in zip(pair_a, pair_b):
        partners[a] = np.append(partners[a], b)
        partners[b] = np.append(partners[b], a)
    monitor = _ContactMonitor(paths, cfg.delta_stop, (pair_a, pair_b),
                              centers=_triplet_centers(n))
    freeze = cfg.theta == 1.0
    times = _time_grid(0.0, cfg.t_end, cfg.dt, cfg.snapshot_times)
    snaps = _integrate(x, times, drift, valid, partners, rng, monitor,
                       cfg.snapshot_times, cfg.max_halvings,
                       freeze_on_contact=freeze)
    return MultilevelResult(
        np.asarray(cfg.snapshot_times),
        snaps,
        x,
        monitor.record(),
        cfg,
        collision_guarantee=cfg.theta >= 2,
        stopped_on_contact=~np.isnan(monitor.hat_tau) if freeze else None,
    )


def bessel_step_reference(
    dim: float, x0: float, t: float, dt: float, seed: int, paths: int = 1
) -> np.ndarray:
    """Bessel process dR = ((dim-1)/2) / R dt + dW through the shared stepping
    kernel; the decoupled one-dimensional oracle for the guard machinery.

    Requires dim > 1 and x0 > 0.  For 1 < dim < 2 the positivity guard may
    trigger frequent refinement near the origin; dim >= 2 never hits zero.
    """
    if not dim > 1:
        raise ValueError("dimension must exceed 1")
    if not x0 > 0:
        raise ValueError("x0 must be positive")
    if t == 0:
        return np.full(paths, float(x0))
    rng = np.random.default_rng(seed)
    x = np.full((paths, 1), float(x0))
    c = (dim - 1.0) / 2.0

    def drift(sub: np.ndarray) -> np.ndarray:
        return c / sub

    times = _time_grid(0.0, t, dt, ())
    for a, b in zip(times[:-1], times[1:]):
        _advance_bessel(x, np.arange(paths), b - a, drift, rng, 0, 40)
    return x[:, 0]


def _advance_bessel(x, idx, dt, drift, rng, depth, max_halvings):
    # positivity plus a move cap of half the distance to the origin, the
    # one-dimensional analogue of the gap rule
    cur = x[idx]
    prop = cur + drift(cur) * dt + math.sqrt(dt) * rng.standard_normal(cur.shape)
    ok = (prop[:, 0] > 0) & (np.abs(prop[:, 0] - cur[:, 0]) <= 0.5 * cur[:, 0])
    good = idx[ok]
    x[good] = prop[ok]
    bad = idx[~ok]
    if bad.size:
        if depth >= max_halvings:
            raise StepUnderflowError("Bessel step halving exhausted", x[bad[0]], 0.0, dt)
        _advance_bessel(x, bad, dt / 2, drift, rng, depth + 1, max_halvings)
        _advance_bessel(x, bad, dt / 2, drift, rng, depth + 1, max_halvings)


def expected_sum_sq_rate(n: int, beta: float) -> float:
    """d/dt E[sum x_i^2] for Dyson BM: N + beta*N(N-1)/2 (Ito, pairing the
    repulsion terms into constants)."""
    return n + beta * n * (n - 1) / 2.0
