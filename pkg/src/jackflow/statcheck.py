"""Statistical machinery that turns limit theorems into pass/fail tests:
two-sample KS, chi-square against exact bin masses, Poisson dispersion,
jump-rate expansion probes, and the semigroup intertwining pipeline test.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats

from . import diffusion, ensembles
from .combinatorics import Cell, ConePoint, Partition, WeylPoint
from .jack import multilevel_rate, single_level_rate

__all__ = [
    "TestReport",
    "ks_two_sample",
    "chi2_histogram",
    "poisson_dispersion",
    "RateProbeResult",
    "rate_expansion_probe",
    "rate_expansion_probe_multilevel",
    "intertwining_test",
    "KS_D_CEILING",
    "P_FLOOR",
]

# desk-scale decision thresholds: distinguish the right law from the wrong-theta
# law at n = 1e4 while keeping the false-alarm rate negligible
KS_D_CEILING = 0.05
P_FLOOR = 0.01


@dataclass
class TestReport:
    name: str
    statistic: float
    threshold: float
    p_value: float | None
    passed: bool
    n_samples: int
    runtime_s: float
    detail: dict = field(default_factory=dict)

    def as_json(self) -> dict:
        out = dataclasses.asdict(self)
        return out

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        pv = "-" if self.p_value is None else f"{self.p_value:.4g}"
        return (
            f"[{tag}] {self.name}: stat={self.statistic:.6g} "
            f"thr={self.threshold:.6g} p={pv} n={self.n_samples} "
            f"({self.runtime_s:.2f}s)"
        )


def timed_report(name: str, fn: Callable[[], tuple[float, float, float | None, bool, int, dict]]) -> TestReport:
    t0 = time.perf_counter()
    stat, threshold, p, passed, n, detail = fn()
    return TestReport(name, stat, threshold, p, passed, n, time.perf_counter() - t0, detail)


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    res = stats.ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)


def chi2_histogram(
    samples: Sequence[float],
    target_log_density: Callable[[float], float],
    bins: "int | Sequence[float]",
    support: tuple[float, float] | None = None,
) -> tuple[float, float]:
    """Pearson chi-square of ``samples`` against exact bin masses.

    Bin masses come from adaptive quadrature of exp(target_log_density) over
    each bin, renormalized over the covering range.  Raises on bins whose
    expected count drops below 5.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    if isinstance(bins, int):
        lo, hi = support if support is not None else (x.min(), x.max())
        edges = np.linspace(lo, hi, bins + 1)
    else:
        edges = np.asarray(bins, dtype=float)
    if x.min() < edges[0] - 1e-12 or x.max() > edges[-1] + 1e-12:
        raise ValueError("bins do not cover the sample range")
    masses = np.array([
        integrate.quad(lambda u: math.exp(target_log_density(u)), a, b, limit=200)[0]
        for a, b in zip(edges[:-1], edges[1:])
    ])
    masses = masses / masses.sum()
    expected = masses * x.size
    if np.any(expected < 5):
        raise ValueError(
            f"sparse bins: min expected count {expected.min():.2f} < 5; merge bins"
        )
    observed, _ = np.histogram(x, bins=edges)
    stat = float(np.sum((observed - expected) ** 2 / expected))
    p = float(stats.chi2.sf(stat, df=len(edges) - 2))
    return stat, p


def poisson_dispersion(
    counts: Sequence[int], band: tuple[float, float] = (0.9, 1.1)
) -> tuple[float, bool]:
    """Variance-to-mean dispersion index with a pass band."""
    c = np.asarray(counts, dtype=float)
    if c.size == 0:
        raise ValueError("empty counts")
    mean = c.mean()
    index = float(c.var(ddof=1) / mean) if mean > 0 else 0.0
    return index, band[0] <= index <= band[1]


# ---------------------------------------------------------------------------
# jump-rate expansion probes
# ---------------------------------------------------------------------------


@dataclass
class RateProbeResult:
    eps: np.ndarray
    residuals: np.ndarray  # (len(eps), n_coords)
    adjusted_points: list[np.ndarray]

    def max_growth_factor(self, floor: float = 1e-9) -> float:
        """Largest decade-to-decade growth of |residual| per coordinate."""
        r = np.abs(self.residuals)
        worst = 0.0
        for j in range(r.shape[1]):
            for i in range(r.shape[0] - 1):
                prev = max(r[i, j], floor)
                worst = max(worst, r[i + 1, j] / prev)
        return worst


def _round_rows(y: np.ndarray, shift: float, scale_inv: float) -> np.ndarray:
    """Integer rows lambda_{..} = round(shift + y/sqrt(eps)), decreasing order."""
    rows = np.rint(shift + y[::-1] * scale_inv).astype(np.int64)
    if np.any(rows < 0):
        raise ValueError("epsilon too large: rounded rows became negative")
    if np.any(np.diff(rows) > 0):
        raise ValueError("epsilon too large: rounded rows lost monotonicity")
    return rows


def rate_expansion_probe(
    n: int,
    theta: float,
    y: "WeylPoint | Sequence[float]",
    eps_list: Sequence[float],
    t_shift: float = 1.0,
) -> RateProbeResult:
    """Residuals q_eps - 1/eps - b(y)/sqrt(eps) of the rescaled single-level rates.

    ``y`` must lie in the open chamber; rows are rounded to integers and the
    rounding-adjusted point is used in the drift term.  Residuals stay O(1)
    as eps decreases when the rate expansion is correct.
    """
    arr = y.array() if isinstance(y, WeylPoint) else np.asarray(y, dtype=float)
    if arr.size != n or np.any(np.diff(arr) <= 0):
        raise ValueError("probe point must be strictly ordered with n coordinates")
    eps_arr = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    residuals = np.zeros((eps_arr.size, n))
    adjusted = []
    for e_idx, eps in enumerate(eps_arr):
        shift = t_shift / eps
        scale_inv = eps ** -0.5
        rows = _round_rows(arr, shift, scale_inv)
        y_adj = (rows[::-1] - shift) * eps ** 0.5
        if np.any(np.diff(y_adj) <= 0):
            raise ValueError("epsilon too large: particles collide after rounding")
        adjusted.append(y_adj)
        lam = Partition(tuple(int(r) for r in rows))
        for i_coord in range(n):
            row = n - i_coord  # coordinate i (ascending) sits in row n+1-i
            q = single_level_rate(lam, Cell(row, lam.row(row) + 1), n, theta)
            drift = theta * sum(
                1.0 / (y_adj[i_coord] - y_adj[j]) for j in range(n) if j != i_coord
            )
            residuals[e_idx, i_coord] = q / (theta * eps) - 1.0 / eps - drift / eps ** 0.5
    return RateProbeResult(eps_arr, residuals, adjusted)


def rate_expansion_probe_multilevel(
    n: int,
    theta: float,
    y: "ConePoint | Sequence[Sequence[float]]",
    eps_list: Sequence[float],
    t_shift: float = 1.0,
) -> RateProbeResult:
    """Residuals of the rescaled multilevel rates against the interlaced drift."""
    if isinstance(y, ConePoint):
        levels = [y.level(k) for k in range(1, y.n_levels + 1)]
    else:
        levels = [np.asarray(lev, dtype=float) for lev in y]
    if len(levels) != n:
        raise ValueError(f"expected {n} levels")
    eps_arr = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    n_coords = n * (n + 1) // 2
    residuals = np.zeros((eps_arr.size, n_coords))
    adjusted = []
    for e_idx, eps in enumerate(eps_arr):
        shift = t_shift / eps
        scale_inv = eps ** -0.5
        rows_by_level = []
        y_adj_levels = []
        for k in range(1, n + 1):
            rows = _round_rows(levels[k - 1], shift, scale_inv)
            rows_by_level.append(rows)
            y_adj_levels.append((rows[::-1] - shift) * eps ** 0.5)
        for k in range(2, n + 1):
            lo, hi = rows_by_level[k - 2], rows_by_level[k - 1]
            if np.any(hi[:-1] < lo) or np.any(lo < hi[1:]):
                raise ValueError("epsilon too large: interlacing lost after rounding")
        adjusted.append(np.concatenate(y_adj_levels))
        c = 0
        for k in range(1, n + 1):
            lam = Partition(tuple(int(r) for r in rows_by_level[k - 1]))
            mu = Partition(tuple(int(r) for r in rows_by_level[k - 2])) if k > 1 else Partition()
            yk = y_adj_levels[k - 1]
            for i_coord in range(k):
                row = k - i_coord
                q = multilevel_rate(lam, mu, Cell(row, lam.row(row) + 1), theta)
                drift = (1.0 - theta) * sum(
                    1.0 / (yk[i_coord] - yk[m]) for m in range(k) if m != i_coord
                )
                if k > 1:
                    ylo = y_adj_levels[k - 2]
                    drift -= (1.0 - theta) * sum(
                        1.0 / (yk[i_coord] - ylo[m]) for m in range(k - 1)
                    )
                residuals[e_idx, c] = q / (theta * eps) - 1.0 / eps - drift / eps ** 0.5
                c += 1
    return RateProbeResult(eps_arr, residuals, adjusted)


# ---------------------------------------------------------------------------
# intertwining of Dyson semigroups through the corners link
# ---------------------------------------------------------------------------


def intertwining_test(
    n: int,
    theta: float,
    t: float,
    n_samples: int,
    seed: int,
    t0: float = 1.0,
    dt: float = 1e-3,
) -> TestReport:
    """Compare link-then-evolve against evolve-then-link.

    Pipeline A: draw level-n Hermite points, sample level n-1 from the link,
    run (n-1)-dimensional Dyson for time t.  Pipeline B: run n-dimensional
    Dyson for time t first, then sample the link.  Per-coordinate two-sample
    KS with a Bonferroni-corrected p floor.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if theta < 0.5:
        raise ValueError("intertwining requires theta >= 1/2")
    t_start = time.perf_counter()
    rng = np.random.default_rng(seed)
    params = ensembles.EnsembleParams(n, theta, t0)
    tops = ensembles.sample_hermite(params, n_samples, seed=int(rng.integers(2**63)))
    link_rng_a = np.random.default_rng(int(rng.integers(2**63)))
    lower_a, _ = ensembles._sample_link_level(tops.points, theta, link_rng_a)
    out_a = lower_a
    if t > 0:
        res_a = diffusion.integrate_dyson(
            diffusion.SdeConfig(
                n=n - 1, theta=theta, t_end=t, dt=dt,
                seed=int(rng.integers(2**63)), initial=lower_a,
                paths=n_samples,
            )
        )
        out_a = res_a.final
    evolved = tops.points
    if t > 0:
        res_b = diffusion.integrate_dyson(
            diffusion.SdeConfig(
                n=n, theta=theta, t_end=t, dt=dt,
                seed=int(rng.integers(2**63)), initial=tops.points,
                paths=n_samples,
            )
        )
        evolved = res_b.final
    link_rng_b = np.random.default_rng(int(rng.integers(2**63)))
    out_b, _ = ensembles._sample_link_level(evolved, theta, link_rng_b)
    ds, ps = [], []
    for i in range(n - 1):
        d, p = ks_two_sample(out_a[:, i], out_b[:, i])
        ds.append(d)
        ps.append(p)
    worst_d = max(ds)
    worst_p = min(ps)
    p_floor = P_FLOOR / (n - 1)
    passed = worst_d <= KS_D_CEILING and worst_p >= p_floor
    return TestReport(
        name=f"intertwining n={n} theta={theta} t={t}",
        statistic=worst_d,
        threshold=KS_D_CEILING,
        p_value=worst_p,
        passed=passed,
        n_samples=n_samples,
        runtime_s=time.perf_counter() - t_start,
        detail={"per_coordinate_D": ds, "per_coordinate_p": ps, "p_floor": p_floor},
    )
