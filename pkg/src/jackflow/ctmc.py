"""Exact (event-driven) simulation of the single-level and multilevel
box-addition chains, plus vectorized fixed-time ensemble engines.

The single-level chain adds boxes to a Young diagram with at most N rows; its
total jump rate is exactly N*theta in every state, so the box count is a
Poisson process.  The multilevel chain runs interlaced diagrams with
block/push interactions: a rate vanishes when the addition would break
interlacing from below, and a jump that breaks interlacing from above pushes
the same row on higher levels instantaneously.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .combinatorics import (
    ConePoint,
    InterlacingArray,
    Partition,
    ScalingParams,
    interlacing_predecessors,
    rescale_array,
    rescale_level,
)
from .jack import jack_principal, psi

__all__ = [
    "ChainConfig",
    "EventRecord",
    "Trajectory",
    "PathSummary",
    "run_single",
    "run_multi",
    "batch",
    "state_at",
    "snapshot_rescaled",
    "child_seed",
    "ensemble_single_final",
    "ensemble_multi_final",
    "gibbs_conditional_table",
    "sample_gibbs_patterns",
]


@dataclass(frozen=True)
class ChainConfig:
    """Configuration of one chain run (single- or multilevel)."""

    n: int
    theta: float
    horizon_s: float
    seed: int
    initial: Partition | InterlacingArray | None = None
    snapshot_times: tuple[float, ...] = ()
    record_events: bool = True

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if self.horizon_s < 0:
            raise ValueError("horizon_s must be >= 0")
        if any(t < 0 or t > self.horizon_s for t in self.snapshot_times):
            raise ValueError("snapshot times must lie in [0, horizon_s]")
        if isinstance(self.initial, Partition) and self.initial.length() > self.n:
            raise ValueError("initial partition has more rows than n")
        if isinstance(self.initial, InterlacingArray) and self.initial.n_levels != self.n:
            raise ValueError("initial array must have exactly n levels")
        object.__setattr__(self, "snapshot_times", tuple(sorted(self.snapshot_times)))


@dataclass(frozen=True)
class EventRecord:
    time: float
    level: int
    row: int
    pushed: bool = False


@dataclass
class Trajectory:
    config: ChainConfig
    events: list[EventRecord]
    final: Partition | InterlacingArray
    snapshots: dict[float, Partition | InterlacingArray] = field(default_factory=dict)


@dataclass(frozen=True)
class PathSummary:
    path_id: int
    seed: int
    n_events: int
    final_size: int
    final: str


def child_seed(master: int, index: int) -> int:
    """Derive the per-path seed: one splitmix64 step of master + (index+1)*phi64.

    The mixing constant is the 64-bit golden ratio 0x9E3779B97F4A7C15; the
    finalizer is splitmix64's xor-shift-multiply.  Fixed so that runs can be
    reproduced path by path across machines.
    """
    mask = (1 << 64) - 1
    z = (master + (index + 1) * 0x9E3779B97F4A7C15) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return z ^ (z >> 31)


# ---------------------------------------------------------------------------
# scalar rate helpers on plain row lists (hot path of the event loops)
# ---------------------------------------------------------------------------


def _single_rates_rows(rows: Sequence[int], n: int, th: float) -> list[tuple[int, float]]:
    """(row, rate) for every addable row of a diagram with rows padded to n."""
    out = []
    for i in range(1, n + 1):
        li = rows[i - 1]
        if i > 1 and rows[i - 2] <= li:
            continue
        rate = th
        for c in range(i + 1, n + 1):
            d = li - rows[c - 1]
            rate *= (d + th * (c - i + 1)) / (d + th * (c - i))
        for l in range(1, i):
            d = rows[l - 1] - li
            rate *= (d + th * (i - l - 1)) / (d + th * (i - l))
        out.append((i, rate))
    return out


def _multi_rates_rows(
    upper: Sequence[int], lower: Sequence[int], k: int, th: float
) -> list[tuple[int, float]]:
    """(row, rate) for addable, unblocked rows of level k given level k-1.

    ``upper`` has k slots, ``lower`` has k-1 slots (zero padded).  Level 1
    passes lower = () and gets the constant rate theta at its single row.
    """
    out = []
    for i in range(1, k + 1):
        li = upper[i - 1]
        if i > 1 and upper[i - 2] <= li:
            continue
        if i >= 2 and lower[i - 2] <= li:
            continue  # blocked from below
        rate = th
        for m in range(1, i):
            dl = upper[m - 1] - li
            dm = lower[m - 1] - li
            rate *= (dl - 1 + th * (i - m + 1)) / (dl + th * (i - m))
            rate *= (dm + th * (i - 1 - m)) / (dm - 1 + th * (i - m))
        for nn in range(i, k):
            du = li - upper[nn]
            dv = li - lower[nn - 1]
            rate *= (du + th * (nn - i) + 1) / (du + th * (nn - i + 1))
            rate *= (dv + th * (nn - i + 1)) / (dv + th * (nn - i) + 1)
        out.append((i, rate))
    return out


# ---------------------------------------------------------------------------
# single-path event-driven runs
# ---------------------------------------------------------------------------


def run_single(cfg: ChainConfig) -> Trajectory:
    """Exact simulation of the single-level chain up to chain time horizon_s."""
    if isinstance(cfg.initial, InterlacingArray):
        raise TypeError("run_single expects a Partition initial state")
    init = cfg.initial if cfg.initial is not None else Partition()
    rows = list(init.padded(cfg.n))
    th = float(cfg.theta)
    total = cfg.n * th
    rng = np.random.default_rng(cfg.seed)
    events: list[EventRecord] = []
    snapshots: dict[float, Partition] = {}
    snap_iter = list(cfg.snapshot_times)
    t = 0.0
    while True:
        t_next = t + rng.exponential(1.0 / total)
        while snap_iter and snap_iter[0] < t_next:
            snapshots[snap_iter.pop(0)] = Partition(tuple(rows))
        if t_next > cfg.horizon_s:
            break
        t = t_next
        rates = _single_rates_rows(rows, cfg.n, th)
        u = rng.random() * sum(r for _, r in rates)
        acc = 0.0
        row = rates[-1][0]
        for i, r in rates:
            acc += r
            if u < acc:
                row = i
                break
        rows[row - 1] += 1
        if cfg.record_events:
            events.append(EventRecord(t, cfg.n, row))
    return Trajectory(cfg, events, Partition(tuple(rows)), snapshots)


def run_multi(cfg: ChainConfig) -> Trajectory:
    """Exact simulation of the multilevel chain with block/push interactions.

    Push cascades resolve bottom-up within a single event timestamp; pushed
    box additions are logged with pushed=True and share the trigger's time.
    """
    if isinstance(cfg.initial, Partition):
        raise TypeError("run_multi expects an InterlacingArray initial state")
    init = cfg.initial if cfg.initial is not None else InterlacingArray.empty(cfg.n)
    state = [list(init.level(k).padded(k)) for k in range(1, cfg.n + 1)]
    th = float(cfg.theta)
    rng = np.random.default_rng(cfg.seed)
    events: list[EventRecord] = []
    snapshots: dict[float, InterlacingArray] = {}
    snap_iter = list(cfg.snapshot_times)

    def freeze() -> InterlacingArray:
        return InterlacingArray(tuple(Partition(tuple(lev)) for lev in state))

    def level_rates(k: int) -> list[tuple[int, float]]:
        lower = state[k - 2] if k >= 2 else ()
        return _multi_rates_rows(state[k - 1], lower, k, th)

    tables = [level_rates(k) for k in range(1, cfg.n + 1)]
    t = 0.0
    while True:
        total = sum(r for tab in tables for _, r in tab)
        t_next = t + rng.exponential(1.0 / total)
        while snap_iter and snap_iter[0] < t_next:
            snapshots[snap_iter.pop(0)] = freeze()
        if t_next > cfg.horizon_s:
            break
        t = t_next
        u = rng.random() * total
        acc = 0.0
        level, row = cfg.n, tables[-1][-1][0] if tables[-1] else 1
        done = False
        for k in range(1, cfg.n + 1):
            for i, r in tables[k - 1]:
                acc += r
                if u < acc:
                    level, row = k, i
                    done = True
                    break
            if done:
                break
        state[level - 1][row - 1] += 1
        if cfg.record_events:
            events.append(EventRecord(t, level, row))
        top_changed = level
        for k in range(level + 1, cfg.n + 1):
            if state[k - 1][row - 1] < state[k - 2][row - 1]:
                state[k - 1][row - 1] += 1
                top_changed = k
                if cfg.record_events:
                    events.append(EventRecord(t, k, row, pushed=True))
            else:
                break
        # own rates change only for the levels whose diagram or whose lower
        # neighbour changed
        for k in range(level, min(top_changed + 1, cfg.n) + 1):
            tables[k - 1] = level_rates(k)
    return Trajectory(cfg, events, freeze(), snapshots)


def state_at(traj: Trajectory, at_s: float) -> Partition | InterlacingArray:
    """State strictly before the first event after ``at_s`` (replayed)."""
    cfg = traj.config
    if at_s > cfg.horizon_s:
        raise ValueError(f"at_s={at_s} beyond horizon {cfg.horizon_s}")
    if at_s in traj.snapshots:
        return traj.snapshots[at_s]
    if not cfg.record_events:
        raise ValueError("trajectory has no event log and no snapshot at requested time")
    multi = isinstance(traj.final, InterlacingArray)
    init = cfg.initial if cfg.initial is not None else (
        InterlacingArray.empty(cfg.n) if multi else Partition()
    )
    if multi:
        state = [list(init.level(k).padded(k)) for k in range(1, cfg.n + 1)]
        for ev in traj.events:
            if ev.time > at_s:
                break
            state[ev.level - 1][ev.row - 1] += 1
        return InterlacingArray(tuple(Partition(tuple(lev)) for lev in state))
    rows = list(init.padded(cfg.n))
    for ev in traj.events:
        if ev.time > at_s:
            break
        rows[ev.row - 1] += 1
    return Partition(tuple(rows))


def snapshot_rescaled(
    traj: Trajectory, params: ScalingParams, at_s: float
) -> np.ndarray | ConePoint:
    """Diffusively rescaled state at chain time ``at_s``.

    Single-level trajectories yield a nondecreasing coordinate vector,
    multilevel ones a cone point.
    """
    state = state_at(traj, at_s)
    if isinstance(state, InterlacingArray):
        return rescale_array(state, params, tol=1e-9)
    return rescale_level(state, params, traj.config.n)


# ---------------------------------------------------------------------------
# deterministic parallel fan-out
# ---------------------------------------------------------------------------


def _run_path(args: tuple[ChainConfig, int, bool]) -> PathSummary:
    cfg, path_id, multi = args
    sub = ChainConfig(
        n=cfg.n,
        theta=cfg.theta,
        horizon_s=cfg.horizon_s,
        seed=child_seed(cfg.seed, path_id),
        initial=cfg.initial,
        snapshot_times=cfg.snapshot_times,
        record_events=cfg.record_events,
    )
    traj = run_multi(sub) if multi else run_single(sub)
    if isinstance(traj.final, InterlacingArray):
        size = traj.final.top().size()
        text = traj.final.to_string()
    else:
        size = traj.final.size()
        text = traj.final.to_string()
    return PathSummary(path_id, sub.seed, len(traj.events), size, text)


def batch(cfg: ChainConfig, paths: int, workers: int = 1) -> list[PathSummary]:
    """Run ``paths`` independent chains; path p uses child_seed(cfg.seed, p).

    Results are identical for any worker count: each path is fully determined
    by its derived seed and results are returned in path order.
    """
    if paths < 1:
        raise ValueError("paths must be >= 1")
    multi = isinstance(cfg.initial, InterlacingArray)
    jobs = [(cfg, p, multi) for p in range(paths)]
    if workers <= 1:
        return [_run_path(j) for j in jobs]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_path, jobs, chunksize=max(1, paths // (8 * workers))))


# ---------------------------------------------------------------------------
# vectorized fixed-time ensembles (used by the heavy distributional checks)
# ---------------------------------------------------------------------------


def _single_rates_vec(lam: np.ndarray, n: int, th: float) -> np.ndarray:
    """Rates (paths, n) for all rows of a batch of diagrams (rows padded to n)."""
    m = lam.shape[0]
    q = np.zeros((m, n))
    for i in range(1, n + 1):
        li = lam[:, i - 1]
        rate = np.full(m, th)
        for c in range(i + 1, n + 1):
            d = li - lam[:, c - 1]
            rate *= (d + th * (c - i + 1)) / (d + th * (c - i))
        for l in range(1, i):
            d = lam[:, l - 1] - li
            rate *= (d + th * (i - l - 1)) / (d + th * (i - l))
        if i == 1:
            q[:, 0] = rate
        else:
            q[:, i - 1] = np.where(lam[:, i - 2] > li, rate, 0.0)
    return q


def ensemble_single_final(
    n: int,
    theta: float,
    s: float,
    paths: int,
    seed: int,
    initial: Partition | None = None,
) -> np.ndarray:
    """Final row lengths (paths, n) of the single-level chain at time s.

    Uses the fact that the total rate is constant (n*theta): the number of
    events per path is Poisson(n*theta*s) and the embedded jump chain is
    sampled directly.
    """
    th = float(theta)
    rng = np.random.default_rng(seed)
    lam = np.zeros((paths, n), dtype=np.int64)
    if initial is not None:
        lam[:] = np.asarray(initial.padded(n), dtype=np.int64)
    remaining = rng.poisson(n * th * s, size=paths)
    while True:
        idx = np.flatnonzero(remaining > 0)
        if idx.size == 0:
            break
        q = _single_rates_vec(lam[idx], n, th)
        cum = np.cumsum(q, axis=1)
        u = rng.random(idx.size) * cum[:, -1]
        rows = np.sum(cum < u[:, None], axis=1)
        lam[idx, rows] += 1
        remaining[idx] -= 1
    return lam


def _multi_rates_vec(L: np.ndarray, n: int, th: float) -> np.ndarray:
    """Rates (paths, n, n) for all (level, row) cells of a batch of patterns."""
    m = L.shape[0]
    q = np.zeros((m, n, n))
    q[:, 0, 0] = th
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(2, n + 1):
            lam = L[:, k - 1, :]
            mu = L[:, k - 2, :]
            for i in range(1, k + 1):
                li = lam[:, i - 1]
                rate = np.full(m, th)
                for mm in range(1, i):
                    dl = lam[:, mm - 1] - li
                    dm = mu[:, mm - 1] - li
                    rate = rate * (dl - 1 + th * (i - mm + 1)) / (dl + th * (i - mm))
                    rate = rate * (dm + th * (i - 1 - mm)) / (dm - 1 + th * (i - mm))
                for nn in range(i, k):
                    du = li - lam[:, nn]
                    dv = li - mu[:, nn - 1]
                    rate = rate * (du + th * (nn - i) + 1) / (du + th * (nn - i + 1))
                    rate = rate * (dv + th * (nn - i + 1)) / (dv + th * (nn - i) + 1)
                valid = np.ones(m, dtype=bool) if i == 1 else (lam[:, i - 2] > li)
                if i >= 2:
                    valid &= mu[:, i - 2] > li
                q[:, k - 1, i - 1] = np.where(valid, rate, 0.0)
    return q


def ensemble_multi_final(
    n: int,
    theta: float,
    s: float,
    paths: int,
    seed: int,
    initial: np.ndarray | None = None,
) -> np.ndarray:
    """Final patterns (paths, n, n) of the multilevel chain at time s.

    ``initial`` may supply per-path starting patterns as an integer array of
    the same shape (level k occupies row k-1, columns 0..k-1).
    """
    th = float(theta)
    rng = np.random.default_rng(seed)
    if initial is None:
        L = np.zeros((paths, n, n), dtype=np.int64)
    else:
        L = np.array(initial, dtype=np.int64, copy=True)
        if L.shape != (paths, n, n):
            raise ValueError(f"initial must have shape {(paths, n, n)}")
    t = np.zeros(paths)
    alive = np.ones(paths, dtype=bool)
    while alive.any():
        idx = np.flatnonzero(alive)
        q = _multi_rates_vec(L[idx], n, th)
        qf = q.reshape(idx.size, -1)
        total = qf.sum(axis=1)
        t_next = t[idx] + rng.exponential(1.0, idx.size) / total
        jump = t_next <= s
        t[idx] = np.minimum(t_next, s)
        alive[idx[~jump]] = False
        if not jump.any():
            continue
        jp = idx[jump]
        cum = np.cumsum(qf[jump], axis=1)
        u = rng.random(jp.size) * cum[:, -1]
        flat = np.sum(cum < u[:, None], axis=1)
        kk = flat // n
        ii = flat % n
        L[jp, kk, ii] += 1
        for lev in range(1, n):
            push = (lev > kk) & (L[jp, lev - 1, ii] > L[jp, lev, ii])
            if push.any():
                tgt = jp[push]
                L[tgt, lev, ii[push]] += 1
    return L


# ---------------------------------------------------------------------------
# exact conditional sampler for small patterns
# ---------------------------------------------------------------------------


def gibbs_conditional_table(
    top: Partition, n_levels: int, theta: float
) -> tuple[list[tuple[Partition, ...]], np.ndarray]:
    """Enumerate all patterns below ``top`` with their conditional probabilities.

    The weight of a pattern is the product of branching coefficients down the
    levels; the normalizer equals the principal Jack value of ``top``, which
    is asserted as a consistency check.
    """
    if top.length() > n_levels:
        raise ValueError("top partition has more rows than levels")
    chains: list[tuple[Partition, ...]] = []
    weights: list[float] = []

    def descend(partial: tuple[Partition, ...], weight_log: float):
        k = n_levels - len(partial)  # level to fill next
        current = partial[0]
        if k == 0:
            chains.append(partial)
            weights.append(weight_log)
            return
        for mu in interlacing_predecessors(current):
            if mu.length() > k:
                continue
            w = psi(current, mu, theta)
            descend((mu,) + partial, weight_log + w.log_abs)

    descend((top,), 0.0)
    logs = np.array(weights)
    ref = jack_principal(top, n_levels, theta).log_abs
    total = np.logaddexp.reduce(logs)
    if not np.isclose(total, ref, rtol=1e-9, atol=1e-12):
        raise AssertionError(
            f"conditional weights do not sum to the principal Jack value: {total} vs {ref}"
        )
    probs = np.exp(logs - total)
    probs /= probs.sum()
    return chains, probs


def sample_gibbs_patterns(
    top: Partition, n_levels: int, theta: float, paths: int, seed: int
) -> np.ndarray:
    """Sample (paths, n, n) integer patterns from the exact conditional law."""
    chains, probs = gibbs_conditional_table(top, n_levels, theta)
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(chains), size=paths, p=probs)
    out = np.zeros((paths, n_levels, n_levels), dtype=np.int64)
    for c, chain in enumerate(chains):
        mask = pick == c
        if not mask.any():
            continue
        for k, lam in enumerate(chain, start=1):
            out[mask, k - 1, : len(lam.rows)] = lam.rows
    return out
