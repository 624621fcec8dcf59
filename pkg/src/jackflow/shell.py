"""Command-line interface, configuration, and run persistence.

Subcommands: ``jack eval``, ``chain single|multi``, ``sde dyson|multilevel``,
``sample hermite|corners``, ``verify <suite>``.  Every run writes a manifest
sufficient to reproduce it bit for bit (full config echo, master seed, code
version); chains emit an event-log CSV, everything else emits snapshot CSVs
in a shared path_id,level,index,value format.  Exit codes: 0 success, 1
failed verification, 2 bad arguments or configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, ctmc, diffusion, ensembles, verify
from .combinatorics import InterlacingArray, Partition, ScalingParams, rescale_level
from .jack import (
    dual_factor,
    jack_gibbs_weight,
    jack_measure_log,
    jack_plancherel,
    jack_principal,
    psi,
)

__all__ = ["main", "load_config", "ConfigError"]


class ConfigError(ValueError):
    pass


_CONFIG_TYPES = {
    "n": int,
    "theta": float,
    "beta": float,
    "time": float,
    "epsilon": float,
    "paths": int,
    "seed": int,
    "dt": float,
    "delta": float,
    "workers": int,
    "format": str,
    "out": str,
    "snapshots": str,
    "init_variance": float,
    "s": float,
}

_RANGES = {
    "n": lambda v: v >= 1,
    "theta": lambda v: v > 0,
    "beta": lambda v: v > 0,
    "time": lambda v: v >= 0,
    "epsilon": lambda v: v > 0,
    "paths": lambda v: v >= 1,
    "dt": lambda v: v > 0,
    "delta": lambda v: v >= 0,
    "workers": lambda v: v >= 1,
    "format": lambda v: v in ("csv", "json"),
    "init_variance": lambda v: v > 0,
    "s": lambda v: v >= 0,
}


def load_config(path: str | Path) -> dict:
    """Parse a flat key=value config file with typed, range-checked keys."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, text = line.partition("=")
        key = key.strip()
        text = text.strip()
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        caster = _CONFIG_TYPES[key]
        try:
            value = caster(text)
        except ValueError as exc:
            raise ConfigError(
                f"{path}:{lineno}: key {key!r} expects {caster.__name__}, got {text!r}"
            ) from exc
        if key in _RANGES and not _RANGES[key](value):
            raise ConfigError(f"{path}:{lineno}: key {key!r} out of range: {value!r}")
        values[key] = value
    _check_theta_beta(values, origin=str(path))
    return values


def _check_theta_beta(values: dict, origin: str = "arguments") -> None:
    theta, beta = values.get("theta"), values.get("beta")
    if theta is not None and beta is not None and not math.isclose(beta, 2 * theta):
        raise ConfigError(
            f"{origin}: theta={theta} and beta={beta} are inconsistent (beta = 2*theta)"
        )


def _resolve_theta(values: dict, default: float = 1.0) -> float:
    if values.get("theta") is not None:
        return values["theta"]
    if values.get("beta") is not None:
        return values["beta"] / 2.0
    return default


def _merge_config(args: argparse.Namespace, keys: list[str], defaults: dict) -> dict:
    """CLI flags override config-file values, which override defaults."""
    file_values = load_config(args.config) if getattr(args, "config", None) else {}
    merged = dict(defaults)
    merged.update({k: v for k, v in file_values.items() if k in keys or k in ("theta", "beta")})
    for key in keys + ["theta", "beta"]:
        cli = getattr(args, key, None)
        if cli is not None:
            merged[key] = cli
    for key, value in merged.items():
        if value is not None and key in _RANGES and not _RANGES[key](value):
            raise ConfigError(f"key {key!r} out of range: {value!r}")
    _check_theta_beta(merged)
    merged["theta"] = _resolve_theta(merged, defaults.get("theta", 1.0))
    merged.pop("beta", None)
    return merged


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def _workers(merged: dict) -> int:
    env = os.environ.get("JACKFLOW_WORKERS")
    if env is not None:
        try:
            value = int(env)
        except ValueError as exc:
            raise ConfigError(f"JACKFLOW_WORKERS must be an integer, got {env!r}") from exc
        if value < 1:
            raise ConfigError("JACKFLOW_WORKERS must be >= 1")
        return value
    return int(merged.get("workers") or 1)


class _RunWriter:
    """Owns the output directory, manifest, and tabular writers for one run."""

    def __init__(self, out_dir: str | Path, command: str, config: dict, seed: int):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.start = time.time()
        self.command = command
        self.config = config
        self.seed = seed
        self.outputs: list[str] = []
        self.extra: dict = {}

    def _table(self, name: str, header: list[str], rows, fmt: str):
        if fmt == "json":
            path = self.dir / f"{name}.json"
            payload = [dict(zip(header, row)) for row in rows]
            path.write_text(json.dumps(payload, indent=1))
        else:
            path = self.dir / f"{name}.csv"
            with path.open("w") as fh:
                fh.write(",".join(header) + "\n")
                for row in rows:
                    fh.write(",".join(
                        _fmt(v) if isinstance(v, float) else str(v) for v in row
                    ) + "\n")
        self.outputs.append(path.name)

    def events(self, rows, fmt: str = "csv"):
        self._table("events", ["path_id", "time", "level", "row", "pushed"], rows, fmt)

    def snapshots(self, rows, fmt: str = "csv"):
        self._table("snapshots", ["path_id", "level", "index", "value"], rows, fmt)

    def reports(self, reports):
        path = self.dir / "reports.json"
        path.write_text(json.dumps([r.as_json() for r in reports], indent=1))
        self.outputs.append(path.name)

    def finish(self):
        manifest = {
            "command": self.command,
            "config": self.config,
            "master_seed": self.seed,
            "code_version": __version__,
            "started": datetime.datetime.fromtimestamp(self.start).isoformat(),
            "finished": datetime.datetime.now().isoformat(),
            "outputs": self.outputs,
            **self.extra,
        }
        (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=1))


def read_snapshots_csv(path: str | Path) -> np.ndarray:
    """Re-ingest a snapshot CSV into (path_id, level, index, value) rows."""
    rows = []
    with Path(path).open() as fh:
        header = fh.readline()
        assert header.strip().startswith("path_id")
        for line in fh:
            pid, level, index, value = line.strip().split(",")
            rows.append((int(pid), int(level), int(index), float(value)))
    return np.array(rows, dtype=object)


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------


def _cmd_jack_eval(args: argparse.Namespace) -> int:
    theta = _resolve_theta({"theta": args.theta, "beta": args.beta})
    _check_theta_beta({"theta": args.theta, "beta": args.beta})
    lam = Partition.from_string(args.partition or "")
    kind = args.kind
    if kind == "principal":
        value = jack_principal(lam, args.n or 1, theta)
    elif kind == "plancherel":
        value = jack_plancherel(lam, args.s if args.s is not None else 1.0, theta)
    elif kind == "dual":
        value = dual_factor(lam, theta)
    elif kind == "psi":
        mu = Partition.from_string(args.mu or "")
        value = psi(lam, mu, theta)
    elif kind == "measure":
        value = jack_measure_log(lam, args.n or 1,
                                 args.s if args.s is not None else 1.0, theta)
    elif kind == "gibbs":
        arr = InterlacingArray.from_string(args.array)
        value = jack_gibbs_weight(arr, theta)
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown kind {kind}")
    print(json.dumps(value.as_json()))
    return 0


def _chain_snapshot_rows(traj, pid: int, params: ScalingParams | None, cfg):
    states = dict(traj.snapshots)
    states[cfg.horizon_s] = traj.final
    rows = []
    for at_s in sorted(states):
        state = states[at_s]
        if isinstance(state, InterlacingArray):
            for k in range(1, state.n_levels + 1):
                if params is not None:
                    p = ScalingParams(params.epsilon, at_s * params.epsilon * params.theta,
                                      params.theta)
                    vals = rescale_level(state.level(k), p, k)
                else:
                    vals = [float(v) for v in state.level(k).padded(k)]
                for i, v in enumerate(vals, start=1):
                    rows.append((pid, k, i, float(v)))
        else:
            if params is not None:
                p = ScalingParams(params.epsilon, at_s * params.epsilon * params.theta,
                                  params.theta)
                vals = rescale_level(state, p, cfg.n)
            else:
                vals = [float(v) for v in state.padded(cfg.n)]
            for i, v in enumerate(vals, start=1):
                rows.append((pid, cfg.n, i, float(v)))
    return rows


def _cmd_chain(args: argparse.Namespace) -> int:
    merged = _merge_config(args, ["n", "time", "paths", "seed", "out", "format",
                                  "epsilon", "workers", "snapshots"],
                           {"n": 2, "time": 1.0, "paths": 1, "seed": 0,
                            "out": "out", "format": "csv", "epsilon": None,
                            "snapshots": None})
    n, theta = merged["n"], merged["theta"]
    snap_times = tuple(
        float(tok) for tok in (merged.get("snapshots") or "").split(",") if tok
    )
    multi = args.mode == "multi"
    initial = InterlacingArray.empty(n) if multi else Partition()
    cfg = ctmc.ChainConfig(n=n, theta=theta, horizon_s=merged["time"],
                           seed=merged["seed"], initial=initial,
                           snapshot_times=snap_times)
    writer = _RunWriter(merged["out"], " ".join(sys.argv), merged, merged["seed"])
    params = None
    if merged.get("epsilon"):
        params = ScalingParams(merged["epsilon"], 1.0, theta)
    ev_rows, snap_rows = [], []
    runner = ctmc.run_multi if multi else ctmc.run_single
    for pid in range(merged["paths"]):
        sub = dataclasses.replace(cfg, seed=ctmc.child_seed(merged["seed"], pid))
        traj = runner(sub)
        for ev in traj.events:
            ev_rows.append((pid, ev.time, ev.level, ev.row, int(ev.pushed)))
        snap_rows.extend(_chain_snapshot_rows(traj, pid, params, cfg))
    writer.events(ev_rows, merged["format"])
    writer.snapshots(snap_rows, merged["format"])
    writer.finish()
    print(f"wrote {len(ev_rows)} events over {merged['paths']} paths to {writer.dir}")
    return 0


def _cmd_sde(args: argparse.Namespace) -> int:
    merged = _merge_config(args, ["n", "time", "dt", "paths", "seed", "out",
                                  "format", "delta", "init_variance"],
                           {"n": 2, "time": 1.0, "dt": 1e-3, "paths": 1,
                            "seed": 0, "out": "out", "format": "csv",
                            "delta": 1e-4, "init_variance": 1.0})
    n, theta = merged["n"], merged["theta"]
    writer = _RunWriter(merged["out"], " ".join(sys.argv), merged, merged["seed"])
    if args.mode == "dyson":
        cfg = diffusion.SdeConfig(n=n, theta=theta, t_end=merged["time"],
                                  dt=merged["dt"], seed=merged["seed"],
                                  delta_stop=merged["delta"], paths=merged["paths"])
        res = diffusion.integrate_dyson(cfg)
        rows = [
            (pid, n, i + 1, float(res.final[pid, i]))
            for pid in range(merged["paths"]) for i in range(n)
        ]
    else:
        start = ensembles.sample_corners(
            ensembles.EnsembleParams(n, theta, merged["init_variance"]),
            merged["paths"], merged["seed"] + 1,
        ).levels
        dim = n * (n + 1) // 2
        packed = np.zeros((merged["paths"], dim))
        for k in range(1, n + 1):
            packed[:, diffusion.level_slice(k)] = np.sort(start[:, k - 1, :k], axis=1)
        cfg = diffusion.SdeConfig(n=n, theta=theta, t_end=merged["time"],
                                  dt=merged["dt"], seed=merged["seed"],
                                  delta_stop=merged["delta"],
                                  initial=packed, paths=merged["paths"])
        res = diffusion.integrate_multilevel(cfg)
        rows = []
        for pid in range(merged["paths"]):
            for k in range(1, n + 1):
                for i, v in enumerate(res.final[pid, diffusion.level_slice(k)], start=1):
                    rows.append((pid, k, i, float(v)))
    writer.snapshots(rows, merged["format"])
    stopping = res.stopping
    writer.extra["stopping"] = [
        {
            "path_id": pid,
            "tau_delta": None if math.isnan(stopping.tau_delta[pid]) else stopping.tau_delta[pid],
            "hat_tau_delta": None if math.isnan(stopping.hat_tau_delta[pid]) else stopping.hat_tau_delta[pid],
            "min_gap_seen": float(stopping.min_gap_seen[pid]),
        }
        for pid in range(merged["paths"])
    ]
    writer.finish()
    print(f"integrated {merged['paths']} paths to t={merged['time']} in {writer.dir}")
    return 0


def _cmd_sample(args: argparse.Namespace) -> int:
    merged = _merge_config(args, ["n", "time", "paths", "seed", "out", "format"],
                           {"n": 2, "time": 1.0, "paths": 1, "seed": 0,
                            "out": "out", "format": "csv"})
    n, theta = merged["n"], merged["theta"]
    params = ensembles.EnsembleParams(n, theta, merged["time"])
    writer = _RunWriter(merged["out"], " ".join(sys.argv), merged, merged["seed"])
    rows = []
    if args.mode == "hermite":
        sample = ensembles.sample_hermite(params, merged["paths"], merged["seed"])
        for pid in range(merged["paths"]):
            for i in range(n):
                rows.append((pid, n, i + 1, float(sample.points[pid, i])))
        diag = sample.diagnostics
    else:
        sample = ensembles.sample_corners(params, merged["paths"], merged["seed"])
        for pid in range(merged["paths"]):
            for k in range(1, n + 1):
                for i in range(k):
                    rows.append((pid, k, i + 1, float(sample.levels[pid, k - 1, i])))
        diag = sample.diagnostics
    writer.snapshots(rows, merged["format"])
    writer.extra["sampler_diagnostics"] = dataclasses.asdict(diag)
    writer.finish()
    print(f"sampled {merged['paths']} points to {writer.dir}")
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    merged = _merge_config(args, ["seed", "out"], {"seed": verify._SEED, "out": None})
    reports = verify.run_suite(args.suite, merged["seed"], fast=args.fast)
    for rep in reports:
        print(rep.line())
    if merged.get("out"):
        writer = _RunWriter(merged["out"], " ".join(sys.argv), merged, merged["seed"])
        writer.reports(reports)
        writer.finish()
    return 0 if all(r.passed for r in reports) else 1


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser, *names: str) -> None:
    flags = {
        "n": dict(type=int, help="number of particles / levels"),
        "theta": dict(type=float, help="Jack parameter theta (> 0)"),
        "beta": dict(type=float, help="beta = 2*theta (alternative to --theta)"),
        "time": dict(type=float, help="chain time s / SDE horizon / ensemble variance"),
        "epsilon": dict(type=float, help="diffusive scale for rescaled snapshots"),
        "paths": dict(type=int, help="number of independent paths/samples"),
        "seed": dict(type=int, help="master seed"),
        "out": dict(type=str, help="output directory"),
        "format": dict(type=str, choices=["csv", "json"], help="table format"),
        "dt": dict(type=float, help="base integrator step"),
        "delta": dict(type=float, help="contact-monitor threshold"),
        "workers": dict(type=int, help="worker processes (JACKFLOW_WORKERS overrides)"),
        "snapshots": dict(type=str, help="comma-separated snapshot times"),
        "init_variance": dict(type=float, help="variance of the corners start"),
        "config": dict(type=str, help="key=value config file (flags override)"),
    }
    for name in names:
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name,
                            default=None, **flags[name])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jackflow",
        description="Jack-polynomial particle dynamics and beta-Dyson diffusions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_jack = sub.add_parser("jack", help="evaluate Jack-polynomial quantities")
    jack_sub = p_jack.add_subparsers(dest="jack_command", required=True)
    p_eval = jack_sub.add_parser("eval", help="print a log-domain value as JSON")
    p_eval.add_argument("--kind", required=True,
                        choices=["principal", "plancherel", "dual", "psi",
                                 "measure", "gibbs"])
    p_eval.add_argument("--partition", help="comma-separated rows, e.g. 3,1,1")
    p_eval.add_argument("--mu", help="lower partition for psi")
    p_eval.add_argument("--array", help="semicolon-joined levels for gibbs")
    p_eval.add_argument("--n", type=int)
    p_eval.add_argument("--s", type=float)
    p_eval.add_argument("--theta", type=float)
    p_eval.add_argument("--beta", type=float)
    p_eval.set_defaults(func=_cmd_jack_eval)

    p_chain = sub.add_parser("chain", help="run the discrete chains")
    p_chain.add_argument("mode", choices=["single", "multi"])
    _add_common(p_chain, "n", "theta", "beta", "time", "epsilon", "paths",
                "seed", "out", "format", "workers", "snapshots", "config")
    p_chain.set_defaults(func=_cmd_chain)

    p_sde = sub.add_parser("sde", help="integrate the diffusions")
    p_sde.add_argument("mode", choices=["dyson", "multilevel"])
    _add_common(p_sde, "n", "theta", "beta", "time", "dt", "paths", "seed",
                "out", "format", "delta", "init_variance", "config")
    p_sde.set_defaults(func=_cmd_sde)

    p_sample = sub.add_parser("sample", help="draw ensemble samples")
    p_sample.add_argument("mode", choices=["hermite", "corners"])
    _add_common(p_sample, "n", "theta", "beta", "time", "paths", "seed", "out",
                "format", "config")
    p_sample.set_defaults(func=_cmd_sample)

    p_verify = sub.add_parser("verify", help="run a verification suite")
    p_verify.add_argument("suite",
                          choices=sorted(verify.SUITES) + ["all"])
    p_verify.add_argument("--fast", action="store_true",
                          help="reduced sample sizes (smoke test, not acceptance)")
    _add_common(p_verify, "seed", "out", "config")
    p_verify.set_defaults(func=_cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
