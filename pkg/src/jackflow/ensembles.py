"""Hermite beta ensemble, its corners (interlaced) extension, the conditional
link between adjacent levels, and seeded samplers for all three.

Densities are exposed in log form only, with normalization constants built
from log-Gamma.  The corners normalization is derived from the level-by-level
factorization

    corners = (top-level Hermite density) * prod_k (link of level k-1 given k),

each factor being individually normalized (the links integrate to one by the
Dixon-Anderson identity); this pins the constant to
t^(theta*N(N-1)/2 + N/2) * (2*pi)^(N/2) * Gamma(theta)^(N(N-1)/2).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .combinatorics import ConePoint, WeylPoint, interlaces_real

__all__ = [
    "EnsembleParams",
    "SamplerDiagnostics",
    "HermiteSample",
    "CornersSample",
    "hermite_log_normalization",
    "hermite_log_density",
    "corners_log_normalization",
    "corners_log_density",
    "theta_gibbs_link_log",
    "dixon_anderson_check",
    "sample_hermite",
    "sample_corners_given_top",
    "sample_corners",
]


@dataclass(frozen=True)
class EnsembleParams:
    n: int
    theta: float
    variance_t: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if not self.variance_t > 0:
            raise ValueError("variance_t must be positive")

    @property
    def beta(self) -> float:
        return 2.0 * self.theta


def hermite_log_normalization(n: int, theta: float, t: float) -> float:
    """log of the Selberg constant for the Hermite beta = 2*theta ensemble."""
    log_z = (theta * n * (n - 1) / 2.0 + n / 2.0) * math.log(t)
    log_z += (n / 2.0) * math.log(2.0 * math.pi)
    log_z += sum(math.lgamma(j * theta) - math.lgamma(theta) for j in range(1, n + 1))
    return log_z


def hermite_log_density(y: "WeylPoint | Sequence[float]", p: EnsembleParams) -> float:
    """Normalized log-density of the Hermite beta ensemble of variance t.

    -inf at coincident coordinates (the repulsion exponent 2*theta > 0).
    """
    arr = y.array() if isinstance(y, WeylPoint) else np.asarray(y, dtype=float)
    if arr.ndim != 1 or arr.size != p.n:
        raise ValueError(f"expected {p.n} sorted coordinates")
    if np.any(np.diff(arr) < 0):
        raise ValueError("coordinates must be sorted nondecreasing")
    log_f = -float(np.sum(arr**2)) / (2.0 * p.variance_t)
    for i in range(p.n):
        for j in range(i + 1, p.n):
            gap = arr[j] - arr[i]
            if gap == 0.0:
                return -math.inf
            log_f += 2.0 * p.theta * math.log(gap)
    return log_f - hermite_log_normalization(p.n, p.theta, p.variance_t)


def corners_log_normalization(n: int, theta: float, t: float) -> float:
    log_z = (theta * n * (n - 1) / 2.0 + n / 2.0) * math.log(t)
    log_z += (n / 2.0) * math.log(2.0 * math.pi)
    log_z += (n * (n - 1) / 2.0) * math.lgamma(theta)
    return log_z


def _log_vandermonde(values: np.ndarray) -> float:
    out = 0.0
    k = len(values)
    for i in range(k):
        for j in range(i + 1, k):
            gap = values[j] - values[i]
            if gap <= 0.0:
                return -math.inf
            out += math.log(gap)
    return out


def corners_log_density(
    y: "ConePoint | Sequence[Sequence[float]]", p: EnsembleParams
) -> float:
    """Normalized log-density of the Hermite beta corners process of variance t.

    The top level carries a plain Vandermonde and a Gaussian; every lower
    level m carries its Vandermonde to the power 2 - 2*theta and cross terms
    |y^m_a - y^{m+1}_b| to the power theta - 1.  Returns -inf outside the
    closed cone.  Exponents that vanish (theta = 1) contribute nothing even
    at coinciding coordinates.
    """
    if isinstance(y, ConePoint):
        levels = [y.level(k) for k in range(1, y.n_levels + 1)]
    else:
        levels = [np.asarray(lev, dtype=float) for lev in y]
    n = len(levels)
    if n != p.n:
        raise ValueError(f"expected {p.n} levels")
    for k in range(1, n):
        if not interlaces_real(levels[k - 1], levels[k], tol=0.0):
            return -math.inf
    top = levels[-1]
    log_f = _log_vandermonde(top) - float(np.sum(top**2)) / (2.0 * p.variance_t)
    if log_f == -math.inf:
        return -math.inf
    th = p.theta
    for m in range(1, n):
        lev = levels[m - 1]
        up = levels[m]
        if th != 1.0:
            v = _log_vandermonde(lev)
            if v == -math.inf:
                return -math.inf if th < 1.0 else math.inf
            log_f += (2.0 - 2.0 * th) * v
            with np.errstate(divide="ignore"):
                cross = np.log(np.abs(lev[:, None] - up[None, :]))
            log_f += (th - 1.0) * float(np.sum(cross))
    return log_f - corners_log_normalization(n, th, p.variance_t)


def theta_gibbs_link_log(
    u: Sequence[float], v: Sequence[float], theta: float
) -> float:
    """Normalized log-density of level k-1 values ``u`` given level k values ``v``.

    Gamma(k*theta)/Gamma(theta)^k times the Vandermonde of u, cross terms
    |v_j - u_i|^(theta-1), and the Vandermonde of v to the power 1 - 2*theta;
    -inf when u does not interlace v.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    k = len(v)
    if len(u) != k - 1:
        raise ValueError("u must have one fewer coordinate than v")
    if not interlaces_real(u, v, tol=0.0):
        return -math.inf
    log_f = math.lgamma(k * theta) - k * math.lgamma(theta)
    log_f += _log_vandermonde(u)
    if theta != 1.0:
        with np.errstate(divide="ignore"):
            cross = np.log(np.abs(v[None, :] - u[:, None]))
        log_f += (theta - 1.0) * float(np.sum(cross))
    if theta != 0.5:
        vv = _log_vandermonde(v)
        if vv == -math.inf:
            return math.inf if theta > 0.5 else -math.inf
        log_f += (1.0 - 2.0 * theta) * vv
    return log_f


def _checked_quad(func, a, b, **kw) -> float:
    val, err = integrate.quad(func, a, b, limit=200, **kw)
    if err > 1e-8 * (abs(val) + 1.0):
        raise RuntimeError(f"quadrature did not converge: value={val}, err={err}")
    return val


def dixon_anderson_check(v: Sequence[float], theta: float) -> tuple[float, float]:
    """Evaluate both sides of the Dixon-Anderson integral identity.

    Left side: the m-fold integral of the interleaved Vandermonde times
    |u_i - v_j|^(theta-1) over v_1 < u_1 < v_2 < ... < u_m < v_{m+1}, by
    adaptive quadrature with algebraic endpoint weights.  Right side:
    Gamma(theta)^(m+1)/Gamma((m+1)theta) * prod |v_i - v_j|^(2*theta-1).
    Supports m = 1 and m = 2.
    """
    v = np.asarray(sorted(v), dtype=float)
    m = len(v) - 1
    if m not in (1, 2):
        raise ValueError("only m = 1 and m = 2 are supported")
    if np.any(np.diff(v) <= 0):
        raise ValueError("v must be strictly ordered")
    th = float(theta)
    log_rhs = (m + 1) * math.lgamma(th) - math.lgamma((m + 1) * th)
    for i in range(m + 1):
        for j in range(i + 1, m + 1):
            log_rhs += (2 * th - 1) * math.log(v[j] - v[i])
    rhs = math.exp(log_rhs)
    wvar = (th - 1.0, th - 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        if m == 1:
            lhs = _checked_quad(lambda u: 1.0, v[0], v[1], weight="alg", wvar=wvar)
        else:
            def inner(u2: float) -> float:
                return _checked_quad(
                    lambda u1: (u2 - u1) * (v[2] - u1) ** (th - 1.0),
                    v[0],
                    v[1],
                    weight="alg",
                    wvar=wvar,
                )

            lhs = _checked_quad(
                lambda u2: inner(u2) * (u2 - v[0]) ** (th - 1.0),
                v[1],
                v[2],
                weight="alg",
                wvar=wvar,
            )
    return lhs, rhs


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


@dataclass
class SamplerDiagnostics:
    acceptance_rate: float = math.nan
    step_size: float = math.nan
    autocorr_time: float = math.nan
    burn_sweeps: int = 0
    degenerate_slots: int = 0
    flags: list[str] = field(default_factory=list)


@dataclass
class HermiteSample:
    points: np.ndarray  # (n_samples, n), each row sorted
    diagnostics: SamplerDiagnostics

    def weyl_points(self) -> list[WeylPoint]:
        return [WeylPoint(tuple(row)) for row in self.points]


@dataclass
class CornersSample:
    levels: np.ndarray  # (n_samples, n, n); level k in row k-1, zero padded
    diagnostics: SamplerDiagnostics

    def cone_point(self, i: int, tol: float = 1e-9) -> ConePoint:
        n = self.levels.shape[1]
        return ConePoint(
            tuple(tuple(self.levels[i, k - 1, :k]) for k in range(1, n + 1)), tol=tol
        )


def _hermite_logpdf_unnorm(x: np.ndarray, theta: float, t: float) -> np.ndarray:
    out = -np.sum(x**2, axis=1) / (2.0 * t)
    n = x.shape[1]
    for i in range(n):
        for j in range(i + 1, n):
            out += 2.0 * theta * np.log(x[:, j] - x[:, i])
    return out


def _estimate_autocorr_time(history: np.ndarray) -> float:
    """Integrated autocorrelation time from per-chain series (sweeps, chains)."""
    h = history - history.mean(axis=0, keepdims=True)
    var = (h**2).mean()
    if var == 0:
        return 1.0
    iat = 1.0
    for lag in range(1, min(200, h.shape[0] - 1)):
        rho = (h[lag:] * h[:-lag]).mean() / var
        if rho < 0.02:
            break
        iat += 2.0 * rho
    return iat


def sample_hermite(
    p: EnsembleParams,
    n_samples: int,
    seed: int,
    burn_sweeps: int = 1500,
) -> HermiteSample:
    """Draw Hermite beta points with adaptive random-walk Metropolis.

    ``n_samples`` independent chains run in lockstep on sorted coordinate
    vectors; the common step size adapts toward 30% acceptance during the
    first half of the burn-in and is frozen afterwards, so the draw is fully
    determined by the seed.  Diagnostics (acceptance rate, autocorrelation
    time of a probe statistic) are always reported; suspicious values are
    flagged rather than hidden.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    n, th, t = p.n, p.theta, p.variance_t
    rng = np.random.default_rng(seed)
    spread = math.sqrt(t * (1.0 + th * (n - 1)))
    x = np.sort(rng.normal(0.0, 1.3 * spread, size=(n_samples, n)), axis=1)
    # break ties from the sort on the (measure-zero) coincidence event
    x += np.arange(n) * 1e-12 * spread
    logp = _hermite_logpdf_unnorm(x, th, t)
    step = 0.7 * math.sqrt(t) / math.sqrt(n)
    adapt_until = burn_sweeps // 2
    accept_window: list[float] = []
    probe_chains = min(n_samples, 32)
    probe_window = min(400, burn_sweeps // 3)
    probe: list[np.ndarray] = []
    for sweep in range(burn_sweeps):
        prop = x + step * rng.standard_normal(x.shape)
        ordered = (np.diff(prop, axis=1) > 0).all(axis=1)
        logp_prop = np.full(n_samples, -np.inf)
        if ordered.any():
            logp_prop[ordered] = _hermite_logpdf_unnorm(prop[ordered], th, t)
        accept = np.log(rng.random(n_samples)) < logp_prop - logp
        x[accept] = prop[accept]
        logp[accept] = logp_prop[accept]
        rate = float(accept.mean())
        if sweep < adapt_until:
            step *= math.exp(0.05 * (rate - 0.30))
        else:
            accept_window.append(rate)
        if sweep >= burn_sweeps - probe_window:
            probe.append(x[:probe_chains].sum(axis=1).copy())
    diag = SamplerDiagnostics(
        acceptance_rate=float(np.mean(accept_window)) if accept_window else math.nan,
        step_size=step,
        autocorr_time=_estimate_autocorr_time(np.array(probe)),
        burn_sweeps=burn_sweeps,
    )
    if not 0.05 <= diag.acceptance_rate <= 0.8:
        diag.flags.append(f"acceptance rate {diag.acceptance_rate:.3f} outside [0.05, 0.8]")
    if diag.autocorr_time > burn_sweeps / 20:
        diag.flags.append(
            f"autocorrelation time {diag.autocorr_time:.1f} large for burn-in {burn_sweeps}"
        )
    for flag in diag.flags:
        warnings.warn(f"Hermite sampler diagnostics: {flag}", stacklevel=2)
    return HermiteSample(points=x, diagnostics=diag)


def _draw_slot_coordinate(
    a: np.ndarray,
    b: np.ndarray,
    log_rest,
    theta: float,
    rng: np.random.Generator,
    grid: int,
) -> tuple[np.ndarray, int]:
    """Inverse-CDF draw of one interlacing coordinate per sample.

    The slot (a, b) carries endpoint factors |x-a|^(theta-1) |x-b|^(theta-1);
    each half-slot is reparametrized by w = |x - endpoint|^p with p =
    min(theta, 1), which makes the integrand bounded for theta < 1.
    ``log_rest(x)`` must evaluate the remaining (smooth) log-factors,
    vectorized over a (samples, grid) array.
    """
    m = a.shape[0]
    width = b - a
    degenerate = width < 1e-12
    p_exp = min(theta, 1.0)
    w_max = np.maximum(0.5 * width, 1e-300) ** p_exp
    edges = np.linspace(0.0, 1.0, grid + 1)
    w_mid = (edges[:-1] + edges[1:]) / 2.0
    dw = 1.0 / grid

    def half_log_masses(endpoint: np.ndarray, other: np.ndarray, sign: float) -> np.ndarray:
        w = w_mid[None, :] * w_max[:, None]
        x = endpoint[:, None] + sign * w ** (1.0 / p_exp)
        logg = log_rest(x)
        logg += (theta - 1.0) * np.log(np.abs(x - other[:, None]))
        logg += ((theta - p_exp) / p_exp) * np.log(w) - math.log(p_exp)
        return logg

    logs = np.concatenate(
        [half_log_masses(a, b, +1.0), half_log_masses(b, a, -1.0)], axis=1
    )
    ref = logs.max(axis=1, keepdims=True)
    masses = np.exp(logs - ref)
    cum = np.cumsum(masses, axis=1)
    u = rng.random(m) * cum[:, -1]
    idx = np.minimum(np.sum(cum < u[:, None], axis=1), 2 * grid - 1)
    take = np.arange(m)
    prev = np.where(idx > 0, cum[take, np.maximum(idx - 1, 0)], 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.clip((u - prev) / masses[take, idx], 0.0, 1.0)
    frac = np.where(np.isfinite(frac), frac, 0.5)
    in_lo = idx < grid
    w_star = (edges[np.where(in_lo, idx, idx - grid)] + frac * dw) * w_max
    x_new = np.where(
        in_lo, a + w_star ** (1.0 / p_exp), b - w_star ** (1.0 / p_exp)
    )
    x_new = np.where(degenerate, 0.5 * (a + b), np.clip(x_new, a, b))
    return x_new, int(degenerate.sum())


def _sample_link_level(
    tops: np.ndarray,
    theta: float,
    rng: np.random.Generator,
    sweeps: int = 24,
    grid: int = 160,
) -> tuple[np.ndarray, int]:
    """Sample level k-1 values given level k values ``tops`` (m, k).

    Coordinate-wise Gibbs with exact one-dimensional conditionals drawn by
    grid inverse-CDF; a single pass suffices for k = 2 where the conditional
    is the full law.
    """
    m, k = tops.shape
    if k < 2:
        raise ValueError("link needs at least two top coordinates")
    us = tops[:, :-1] + (tops[:, 1:] - tops[:, :-1]) * rng.random((m, k - 1))
    n_deg = 0
    n_sweeps = 1 if k == 2 else sweeps
    for _ in range(n_sweeps):
        for i in range(k - 1):
            a = tops[:, i]
            b = tops[:, i + 1]

            def log_rest(x: np.ndarray) -> np.ndarray:
                out = np.zeros_like(x)
                for j in range(k):
                    if j in (i, i + 1):
                        continue  # slot endpoints handled by the weight
                    out += (theta - 1.0) * np.log(np.abs(x - tops[:, j][:, None]))
                for mm in range(k - 1):
                    if mm == i:
                        continue
                    out += np.log(np.abs(x - us[:, mm][:, None]))
                return out

            us[:, i], deg = _draw_slot_coordinate(a, b, log_rest, theta, rng, grid)
            n_deg += deg
    return us, n_deg


def sample_corners_given_top(
    v: "WeylPoint | Sequence[float]",
    theta: float,
    seed: int,
    sweeps: int = 24,
    grid: int = 160,
) -> ConePoint:
    """Sample the lower levels of a corners point given its top level."""
    arr = v.array() if isinstance(v, WeylPoint) else np.asarray(v, dtype=float)
    if np.any(np.diff(arr) <= 0):
        raise ValueError("top level must be strictly ordered")
    rng = np.random.default_rng(seed)
    n = arr.size
    levels: list[np.ndarray] = [arr]
    cur = arr[None, :]
    for k in range(n, 1, -1):
        cur, n_deg = _sample_link_level(cur, theta, rng, sweeps=sweeps, grid=grid)
        if n_deg:
            warnings.warn(f"degenerate interlacing slot at level {k - 1}", stacklevel=2)
        levels.append(cur[0])
    levels.reverse()
    return ConePoint(tuple(tuple(lev) for lev in levels), tol=1e-12)


def sample_corners(
    p: EnsembleParams,
    n_samples: int,
    seed: int,
    burn_sweeps: int = 1500,
    sweeps: int = 24,
    grid: int = 160,
) -> CornersSample:
    """Sample the corners process: Hermite top level, then links downward."""
    rng = np.random.default_rng(seed)
    top = sample_hermite(p, n_samples, seed=int(rng.integers(2**63)),
                         burn_sweeps=burn_sweeps)
    n = p.n
    out = np.zeros((n_samples, n, n))
    out[:, n - 1, :] = top.points
    diag = top.diagnostics
    cur = top.points
    for k in range(n, 1, -1):
        cur, n_deg = _sample_link_level(cur, p.theta, rng, sweeps=sweeps, grid=grid)
        diag.degenerate_slots += n_deg
        out[:, k - 2, : k - 1] = cur
    if diag.degenerate_slots:
        diag.flags.append(f"{diag.degenerate_slots} degenerate interlacing slots")
        warnings.warn(f"corners sampler: {diag.degenerate_slots} degenerate slots",
                      stacklevel=2)
    return CornersSample(levels=out, diagnostics=diag)
