"""Verification suites: exact identities, rate expansions, distributional
convergence, SDE invariants, and semigroup intertwining, each reported as a
pass/fail TestReport with pinned tolerances.

Suite map: identities (exact algebra), rates (expansion probes), convergence
(fixed-time laws of the chains), intertwining (continuous and discrete level
restriction), sde (integrator invariants).
"""

from __future__ import annotations

import math
import time

import numpy as np
from scipy import special, stats

from . import ctmc, diffusion, ensembles, statcheck
from .combinatorics import (
    Cell,
    Partition,
    all_partitions_up_to,
    addable_cells,
    interlacing_predecessors,
    partitions_with_size,
)
from .jack import jack_measure_log, jack_principal, psi, single_level_rate
from .statcheck import KS_D_CEILING, P_FLOOR, TestReport, ks_two_sample

__all__ = ["SUITES", "run_suite", "run_suites", "all_reports"]

_SEED = 20260809


def _report(name, stat, threshold, p, passed, n, t0, detail=None) -> TestReport:
    return TestReport(name, float(stat), float(threshold), p, bool(passed), int(n),
                      time.perf_counter() - t0, detail or {})


def _random_partition(rng: np.random.Generator, max_size: int, max_rows: int) -> Partition:
    lam = Partition()
    target = int(rng.integers(0, max_size + 1))
    for _ in range(target):
        cells = addable_cells(lam, max_rows)
        lam = lam.add_box(cells[int(rng.integers(len(cells)))])
    return lam


def check_total_rate(seed: int = _SEED) -> TestReport:
    """Sum of all addable-box rates equals N*theta exactly (to 1e-9 relative)."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    trials = 200
    for _ in range(trials):
        n = int(rng.integers(1, 7))
        theta = float(rng.choice([0.5, 1.0, 2.0, 2.5]))
        lam = _random_partition(rng, 30, n)
        total = sum(
            single_level_rate(lam, c, n, theta) for c in addable_cells(lam, n)
        )
        worst = max(worst, abs(total - n * theta) / (n * theta))
    return _report("total rate = N*theta", worst, 1e-9, None, worst <= 1e-9,
                   trials, t0)


def check_branching_recursion(seed: int = _SEED) -> TestReport:
    """Principal Jack values satisfy the one-box branching recursion."""
    t0 = time.perf_counter()
    worst = 0.0
    count = 0
    for theta in (0.5, 1.0, 2.0):
        for lam in all_partitions_up_to(8):
            for n in range(1, 6):
                lhs = jack_principal(lam, n, theta)
                acc = 0.0
                for mu in interlacing_predecessors(lam):
                    w = psi(lam, mu, theta)
                    if n == 1:
                        if mu.size() == 0:
                            acc += w.to_float()
                    else:
                        acc += (w * jack_principal(mu, n - 1, theta)).to_float()
                ref = lhs.to_float()
                err = abs(acc - ref) / max(ref, 1e-300) if ref > 0 else abs(acc)
                worst = max(worst, err)
                count += 1
    return _report("branching recursion", worst, 1e-10, None, worst <= 1e-10,
                   count, t0)


def check_measure_layers(seed: int = _SEED) -> TestReport:
    """Jack measure mass at |lambda| = m equals the Poisson(N*theta*s) pmf."""
    t0 = time.perf_counter()
    worst = 0.0
    count = 0
    for theta in (0.5, 1.0, 2.0):
        for n in (1, 2, 3):
            for s in (0.5, 2.0):
                rate = n * theta * s
                for m in range(0, 11):
                    total = 0.0
                    for lam in partitions_with_size(m, n):
                        total += jack_measure_log(lam, n, s, theta).to_float()
                    ref = math.exp(-rate + m * math.log(rate) - math.lgamma(m + 1)) \
                        if m > 0 else math.exp(-rate)
                    worst = max(worst, abs(total - ref) / ref)
                    count += 1
    return _report("measure Poisson layering", worst, 1e-9, None, worst <= 1e-9,
                   count, t0)


def check_dixon_anderson(seed: int = _SEED) -> TestReport:
    """Closed form vs adaptive quadrature for the interlacing integral identity."""
    t0 = time.perf_counter()
    worst = 0.0
    count = 0
    configs_m1 = [(0.0, 1.0), (-0.3, 0.9), (0.2, 2.7)]
    configs_m2 = [(0.0, 1.0, 2.5), (-1.2, -0.1, 0.7)]
    passed = True
    for theta in (0.5, 1.0, 1.5, 2.0):
        for v in configs_m1:
            lhs, rhs = ensembles.dixon_anderson_check(v, theta)
            err = abs(lhs - rhs) / abs(rhs)
            worst = max(worst, err)
            passed &= err <= 1e-6
            count += 1
        for v in configs_m2:
            lhs, rhs = ensembles.dixon_anderson_check(v, theta)
            err = abs(lhs - rhs) / abs(rhs)
            worst = max(worst, err)
            passed &= err <= 1e-5
            count += 1
    return _report("Dixon-Anderson identity", worst, 1e-5, None, passed, count, t0)


def check_rate_expansion(seed: int = _SEED) -> TestReport:
    """Rate-expansion residuals stay bounded across epsilon decades."""
    t0 = time.perf_counter()
    eps = (1e-2, 1e-4, 1e-6)
    worst = 0.0
    count = 0
    for theta in (0.5, 1.0, 2.0):
        probe = statcheck.rate_expansion_probe(2, theta, (-1.0, 1.0), eps)
        worst = max(worst, probe.max_growth_factor())
        count += 1
    probe = statcheck.rate_expansion_probe(3, 1.0, (-1.5, 0.2, 1.4), eps)
    worst = max(worst, probe.max_growth_factor())
    count += 1
    probe = statcheck.rate_expansion_probe(1, 1.0, (0.3,), eps)
    worst = max(worst, probe.max_growth_factor())
    count += 1
    for theta in (1.0, 2.0):
        probe = statcheck.rate_expansion_probe_multilevel(
            2, theta, ((0.1,), (-1.0, 1.2)), eps
        )
        worst = max(worst, probe.max_growth_factor())
        count += 1
    probe = statcheck.rate_expansion_probe_multilevel(
        3, 2.0, ((0.0,), (-1.1, 1.0), (-2.0, -0.2, 1.9)), eps
    )
    worst = max(worst, probe.max_growth_factor())
    count += 1
    return _report("rate expansion residuals", worst, 2.0, None, worst <= 2.0,
                   count, t0)


def check_fixed_time_hermite(seed: int = _SEED, paths: int = 5000) -> TestReport:
    """Rescaled single-level chain at fixed time vs MCMC Hermite samples."""
    t0 = time.perf_counter()
    n, theta, t, eps = 3, 1.0, 1.0, 2.5e-4
    s = t / (eps * theta)
    rows = ctmc.ensemble_single_final(n, theta, s, paths, seed)
    ys = (rows[:, ::-1] - t / eps) * math.sqrt(eps)
    ref = ensembles.sample_hermite(
        ensembles.EnsembleParams(n, theta, t), paths, seed + 1
    ).points
    ds, ps = [], []
    for i in range(n):
        d, p = ks_two_sample(ys[:, i], ref[:, i])
        ds.append(d)
        ps.append(p)
    passed = max(ds) <= KS_D_CEILING and min(ps) >= P_FLOOR / n
    return _report(
        "fixed-time law -> Hermite beta ensemble", max(ds), KS_D_CEILING,
        min(ps), passed, paths, t0,
        {"per_coordinate_D": ds, "per_coordinate_p": ps},
    )


def check_fixed_time_corners(seed: int = _SEED, paths: int = 5000) -> TestReport:
    """Multilevel chain at fixed time vs the corners sampler, plus a
    chi-square check of the conditional lower level against the link law."""
    t0 = time.perf_counter()
    n, t, eps = 2, 1.0, 2.5e-4
    all_pass = True
    detail = {}
    worst_d, worst_p = 0.0, 1.0
    for theta in (1.0, 2.0):
        s = t / (eps * theta)
        pats = ctmc.ensemble_multi_final(n, theta, s, paths, seed)
        shift = t / eps
        scale = math.sqrt(eps)
        y1 = (pats[:, 0, 0] - shift) * scale
        y2_lo = (pats[:, 1, 1] - shift) * scale
        y2_hi = (pats[:, 1, 0] - shift) * scale
        corners = ensembles.sample_corners(
            ensembles.EnsembleParams(n, theta, t), paths, seed + 7
        ).levels
        pairs = [
            (y1, corners[:, 0, 0]),
            (y2_lo, corners[:, 1, :2].min(axis=1)),
            (y2_hi, corners[:, 1, :2].max(axis=1)),
        ]
        ds, ps = [], []
        for a, b in pairs:
            d, p = ks_two_sample(a, b)
            ds.append(d)
            ps.append(p)
        # conditional law of the middle coordinate: exact Beta(theta, theta)
        # probability transform should be uniform
        gap_ok = y2_hi > y2_lo
        u = special.betainc(
            theta, theta, (y1[gap_ok] - y2_lo[gap_ok]) / (y2_hi[gap_ok] - y2_lo[gap_ok])
        )
        chi_stat, chi_p = statcheck.chi2_histogram(
            u, lambda _x: 0.0, bins=12, support=(0.0, 1.0)
        )
        ok = (
            max(ds) <= KS_D_CEILING
            and min(ps) >= P_FLOOR / 3
            and chi_p > P_FLOOR
        )
        all_pass &= ok
        worst_d = max(worst_d, max(ds))
        worst_p = min(worst_p, min(ps), chi_p)
        detail[f"theta={theta}"] = {
            "per_coordinate_D": ds,
            "per_coordinate_p": ps,
            "conditional_chi2": chi_stat,
            "conditional_p": chi_p,
        }
    return _report("fixed-time multilevel law -> corners process", worst_d,
                   KS_D_CEILING, worst_p, all_pass, paths, t0, detail)


def check_dyson_moments(seed: int = _SEED, paths: int = 10000) -> TestReport:
    """E[sum x_i^2(t)] = (N + beta*N(N-1)/2) t for the Dyson integrator."""
    t0 = time.perf_counter()
    n, t = 3, 1.0
    all_pass = True
    worst_sigma = 0.0
    detail = {}
    for beta in (1.0, 2.0, 4.0):
        cfg = diffusion.SdeConfig(
            n=n, theta=beta / 2.0, t_end=t, dt=2.5e-4, seed=seed + int(10 * beta),
            paths=paths,
        )
        res = diffusion.integrate_dyson(cfg)
        ssq = (res.final**2).sum(axis=1)
        target = diffusion.expected_sum_sq_rate(n, beta) * t
        se = ssq.std(ddof=1) / math.sqrt(paths)
        sigmas = abs(ssq.mean() - target) / se
        detail[f"beta={beta}"] = {
            "mean": float(ssq.mean()), "target": target, "se": float(se),
            "sigmas": float(sigmas),
        }
        all_pass &= sigmas <= 3.0
        worst_sigma = max(worst_sigma, sigmas)
    return _report("Dyson integrator second moment", worst_sigma, 3.0, None,
                   all_pass, paths, t0, detail)


def check_multilevel_sde(seed: int = _SEED, paths: int = 1000) -> TestReport:
    """theta = 2 multilevel SDE from a corners start: cone preserved, no
    two-particle delta-contacts, level-N second-moment increment matches Ito."""
    t0 = time.perf_counter()
    n, theta, t0_var, horizon = 3, 2.0, 1.0, 0.5
    start = ensembles.sample_corners(
        ensembles.EnsembleParams(n, theta, t0_var), paths, seed
    ).levels
    dim = n * (n + 1) // 2
    packed = np.zeros((paths, dim))
    for k in range(1, n + 1):
        packed[:, diffusion.level_slice(k)] = np.sort(start[:, k - 1, :k], axis=1)
    cfg = diffusion.SdeConfig(
        n=n, theta=theta, t_end=horizon, dt=2.5e-4, seed=seed + 1,
        delta_stop=1e-4, initial=packed, paths=paths,
    )
    res = diffusion.integrate_multilevel(cfg)
    top = res.final[:, diffusion.level_slice(n)]
    inc = (top**2).sum(axis=1) - (packed[:, diffusion.level_slice(n)] ** 2).sum(axis=1)
    target = diffusion.expected_sum_sq_rate(n, 2 * theta) * horizon
    se = inc.std(ddof=1) / math.sqrt(paths)
    sigmas = abs(inc.mean() - target) / se
    n_contacts = int(np.sum(~np.isnan(res.stopping.hat_tau_delta)))
    cone_a, cone_b = diffusion._cone_pairs(n)
    cone_ok = bool(np.all(res.final[:, cone_a] <= res.final[:, cone_b]))
    passed = sigmas <= 3.0 and n_contacts == 0 and cone_ok
    return _report(
        "multilevel SDE invariants (theta=2)", sigmas, 3.0, None, passed,
        paths, t0,
        {
            "increment_mean": float(inc.mean()), "target": target,
            "se": float(se), "delta_contacts": n_contacts,
            "min_gap_seen": float(res.stopping.min_gap_seen.min()),
            "cone_ok": cone_ok,
        },
    )


def check_intertwining(seed: int = _SEED, n_samples: int = 10000) -> TestReport:
    """Link-then-evolve equals evolve-then-link for n in {2,3}, t in {0.25,0.5}."""
    t0 = time.perf_counter()
    reports = []
    for n in (2, 3):
        for t in (0.25, 0.5):
            reports.append(
                statcheck.intertwining_test(n, 1.0, t, n_samples, seed + n * 100)
            )
    worst = max(r.statistic for r in reports)
    worst_p = min(r.p_value for r in reports)
    passed = all(r.passed for r in reports)
    return _report("Dyson semigroup intertwining", worst, KS_D_CEILING, worst_p,
                   passed, n_samples, t0,
                   {r.name: {"D": r.statistic, "p": r.p_value} for r in reports})


def check_level_restriction(seed: int = _SEED, paths: int = 5000) -> TestReport:
    """Top-level marginal of the multilevel chain from an exact conditional
    start equals the single-level chain from the same top diagram."""
    t0 = time.perf_counter()
    n, theta, s = 3, 1.0, 6.0
    top = Partition((2, 1))
    init = ctmc.sample_gibbs_patterns(top, n, theta, paths, seed)
    multi = ctmc.ensemble_multi_final(n, theta, s, paths, seed + 1, initial=init)
    single = ctmc.ensemble_single_final(n, theta, s, paths, seed + 2, initial=top)
    ds, ps = [], []
    for i in range(n):
        d, p = ks_two_sample(multi[:, n - 1, i], single[:, i])
        ds.append(d)
        ps.append(p)
    passed = max(ds) <= KS_D_CEILING
    return _report("discrete level restriction", max(ds), KS_D_CEILING, min(ps),
                   passed, paths, t0, {"per_coordinate_D": ds})


SUITES = {
    "identities": [check_total_rate, check_branching_recursion,
                   check_measure_layers, check_dixon_anderson],
    "rates": [check_rate_expansion],
    "convergence": [check_fixed_time_hermite, check_fixed_time_corners],
    "intertwining": [check_intertwining, check_level_restriction],
    "sde": [check_dyson_moments, check_multilevel_sde],
}


# reduced sizes for smoke runs; acceptance always uses the full defaults
_FAST_OVERRIDES = {
    check_fixed_time_hermite: {"paths": 800},
    check_fixed_time_corners: {"paths": 800},
    check_dyson_moments: {"paths": 2000},
    check_multilevel_sde: {"paths": 300},
    check_intertwining: {"n_samples": 1500},
    check_level_restriction: {"paths": 1000},
}


def run_suite(name: str, seed: int = _SEED, fast: bool = False) -> list[TestReport]:
    if name == "all":
        return run_suites(list(SUITES), seed, fast=fast)
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'")
    overrides = _FAST_OVERRIDES if fast else {}
    return [fn(seed, **overrides.get(fn, {})) for fn in SUITES[name]]


def run_suites(names: list[str], seed: int = _SEED, fast: bool = False) -> list[TestReport]:
    out = []
    for name in names:
        out.extend(run_suite(name, seed, fast=fast))
    return out


def all_reports(seed: int = _SEED) -> list[TestReport]:
    return run_suites(list(SUITES), seed)
