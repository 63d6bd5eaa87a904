"""Batch front door: config parsing and the simulate / optimize / verify /
taylor / export-plot pipelines.

Configuration is flat key = value text with sections, read by configparser:

    [model]   nu, alpha1, alpha2, beta
    [disc]    M, grid (optional), dt, T
    [cost]    lambda, K, target_path          (optimize)
    [opt]     max_iter, tol                   (optimize)
    [run]     seed (optional; the --seed flag overrides)
    [init]    mode = "m,n", amplitude         (optional initial state)
    [control] mode, amplitude, omega          (optional forcing for simulate)
    [taylor]  amplitude, rhos                 (optional)
    [export]  input, what = norms | optimizer (export-plot)

Exit codes: 0 success, 2 configuration or validation error, 3 solver failure.
All outputs are written atomically into the --out directory.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .control import CostConfig, OptimizeOptions, eval_cost, optimize
from .errors import (
    ChecksumFailed,
    ConfigInvalid,
    FixedPointDiverged,
    GridMismatch,
    LineSearchFailed,
    MagicMismatch,
    NegativeModulus,
    NonAdmissible,
    ShapeMismatch,
    UnknownKind,
    VersionUnsupported,
)
from .linearized import gateaux_taylor_test
from .params import validate_params
from .spectral import Field, build_basis, set_fft_workers
from .state import solve_state
from .storage import (
    atomic_write_text,
    cost_history_csv,
    load_trajectory,
    norms_csv,
    save_trajectory,
)
from .trajectory import Trajectory, time_grid
from .verify import LEVELS, run_suite

VALIDATION_ERRORS = (
    ConfigInvalid,
    NonAdmissible,
    NegativeModulus,
    GridMismatch,
    ShapeMismatch,
    UnknownKind,
    MagicMismatch,
    VersionUnsupported,
    ChecksumFailed,
)
SOLVER_ERRORS = (FixedPointDiverged, LineSearchFailed)


class _Config:
    """configparser wrapper reporting missing keys by dotted path."""

    def __init__(self, path: str):
        if not os.path.exists(path):
            raise ConfigInvalid(f"config file {path} does not exist")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            with open(path) as handle:
                parser.read_file(handle)
        except configparser.Error as exc:
            raise ConfigInvalid(f"config file {path} does not parse: {exc}") from exc
        self.parser = parser
        with open(path, "rb") as handle:
            self.sha256 = hashlib.sha256(handle.read()).hexdigest()

    def has(self, section: str, key: str) -> bool:
        return self.parser.has_option(section, key)

    def _raw(self, section: str, key: str) -> str:
        if not self.parser.has_option(section, key):
            raise ConfigInvalid(f"missing required key {section}.{key}")
        return self.parser.get(section, key)

    def get_float(self, section: str, key: str, default=None) -> float:
        if default is not None and not self.has(section, key):
            return default
        raw = self._raw(section, key)
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigInvalid(f"{section}.{key} = {raw!r} is not a number") from exc

    def get_int(self, section: str, key: str, default=None) -> int:
        if default is not None and not self.has(section, key):
            return default
        raw = self._raw(section, key)
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigInvalid(f"{section}.{key} = {raw!r} is not an integer") from exc

    def get_str(self, section: str, key: str, default=None) -> str:
        if default is not None and not self.has(section, key):
            return default
        return self._raw(section, key)


def _model(cfg: _Config):
    return validate_params(
        cfg.get_float("model", "nu"),
        cfg.get_float("model", "alpha1"),
        cfg.get_float("model", "alpha2"),
        cfg.get_float("model", "beta"),
    )


def _disc(cfg: _Config, params):
    max_mode = cfg.get_int("disc", "M")
    grid = cfg.get_int("disc", "grid", default=-1)
    dt = cfg.get_float("disc", "dt")
    horizon = cfg.get_float("disc", "T")
    if dt <= 0 or horizon <= 0:
        raise ConfigInvalid("disc.dt and disc.T must be positive")
    ratio = horizon / dt
    n_steps = round(ratio)
    if n_steps < 1 or abs(ratio - n_steps) > 1e-9 * max(1.0, ratio):
        raise ConfigInvalid(f"disc.dt = {dt} does not divide disc.T = {horizon}")
    try:
        basis = build_basis(max_mode, params.alpha1, None if grid < 0 else grid)
    except ValueError as exc:
        raise ConfigInvalid(f"disc: {exc}") from exc
    return basis, time_grid(horizon, n_steps)


def _parse_mode(cfg: _Config, section: str, basis) -> int:
    raw = cfg.get_str(section, "mode")
    try:
        m, n = (int(p) for p in raw.split(","))
    except ValueError as exc:
        raise ConfigInvalid(f"{section}.mode = {raw!r}, expected 'm,n'") from exc
    hits = np.nonzero((basis.modes[:, 0] == m) & (basis.modes[:, 1] == n))[0]
    if hits.size == 0:
        raise ConfigInvalid(f"{section}.mode = {raw!r} is outside the basis (M={basis.max_mode})")
    return int(hits[0])


def _initial_state(cfg: _Config, basis) -> Field:
    coeffs = np.zeros(basis.n_modes)
    if cfg.parser.has_section("init") and cfg.has("init", "mode"):
        idx = _parse_mode(cfg, "init", basis)
        coeffs[idx] = cfg.get_float("init", "amplitude", default=0.1)
    return Field(coeffs, basis)


def _control(cfg: _Config, basis, times) -> Trajectory:
    coeffs = np.zeros((times.size, basis.n_modes))
    if cfg.parser.has_section("control") and cfg.has("control", "mode"):
        idx = _parse_mode(cfg, "control", basis)
        amp = cfg.get_float("control", "amplitude", default=0.1)
        omega = cfg.get_float("control", "omega", default=0.0)
        profile = amp * (1.0 + 0.5 * np.sin(omega * times)) if omega else amp * np.ones_like(times)
        coeffs[:, idx] = profile
    return Trajectory(times, coeffs, basis, "control")


def _seed(cfg: _Config, args) -> int:
    if args.seed is not None:
        return args.seed
    return cfg.get_int("run", "seed", default=0)


# -- commands ------------------------------------------------------------------


def _cmd_simulate(cfg: _Config, args) -> int:
    params = _model(cfg)
    basis, times = _disc(cfg, params)
    y0 = _initial_state(cfg, basis)
    control = _control(cfg, basis, times)
    traj, report = solve_state(y0, control, params)
    os.makedirs(args.out, exist_ok=True)
    save_trajectory(
        os.path.join(args.out, "state.traj"), traj, config_hash=cfg.sha256, seed=_seed(cfg, args)
    )
    atomic_write_text(os.path.join(args.out, "norms.csv"), norms_csv(traj))
    summary = {
        "command": "simulate",
        "gamma_sup_h3": report.gamma,
        "final_h1": report.h1[-1],
        "dissipation_total": report.dissipation[-1],
        "code_version": __version__,
    }
    atomic_write_text(
        os.path.join(args.out, "simulate_summary.json"),
        json.dumps(summary, sort_keys=True, indent=2) + "\n",
    )
    return 0


def _cmd_optimize(cfg: _Config, args) -> int:
    params = _model(cfg)
    basis, times = _disc(cfg, params)
    y0 = _initial_state(cfg, basis)
    lam = cfg.get_float("cost", "lambda")
    radius = cfg.get_float("cost", "K")
    target_path = cfg.get_str("cost", "target_path")
    if not os.path.isabs(target_path):
        target_path = os.path.join(os.path.dirname(os.path.abspath(args.config)), target_path)
    if not os.path.exists(target_path):
        raise ConfigInvalid(f"cost.target_path {target_path} does not exist")
    y_d = load_trajectory(target_path).with_kind("target")
    if not y_d.basis.compatible(basis) or y_d.times.size != times.size:
        raise GridMismatch("target trajectory does not match the disc section")
    cost_cfg = CostConfig(y_d=y_d, lam=lam, radius=radius)
    opts = OptimizeOptions(
        max_iter=cfg.get_int("opt", "max_iter"), tol=cfg.get_float("opt", "tol")
    )
    seed = _seed(cfg, args)
    u0 = Trajectory(times, np.zeros((times.size, basis.n_modes)), basis, "control")
    j0, _ = eval_cost(u0, y0, cost_cfg, params)
    u_star, report = optimize(u0, y0, cost_cfg, params, opts, np.random.default_rng(seed))
    os.makedirs(args.out, exist_ok=True)
    save_trajectory(
        os.path.join(args.out, "control.traj"), u_star, config_hash=cfg.sha256, seed=seed
    )
    atomic_write_text(os.path.join(args.out, "cost_history.csv"), cost_history_csv(report))
    out = {
        "command": "optimize",
        "initial_cost": j0,
        "final_cost": report.cost[-1],
        "iterations": report.n_iter,
        "converged": report.converged,
        "termination": report.termination,
        "vi_residual_min": min(report.vi_residuals),
        "seed": seed,
        "code_version": __version__,
    }
    atomic_write_text(
        os.path.join(args.out, "optimize_report.json"),
        json.dumps(out, sort_keys=True, indent=2) + "\n",
    )
    return 0


def _cmd_verify(cfg: _Config | None, args) -> int:
    seed = args.seed if args.seed is not None else (
        cfg.get_int("run", "seed", default=0) if cfg else 0
    )
    report = run_suite(args.level, seed=seed)
    os.makedirs(args.out, exist_ok=True)
    atomic_write_text(
        os.path.join(args.out, "verify_report.json"),
        json.dumps(report, sort_keys=True, indent=2) + "\n",
    )
    print(
        f"verify {args.level}: "
        + ("all checks passed" if report["all_passed"] else "CHECK FAILURES"),
        file=sys.stderr,
    )
    return 0


def _cmd_taylor(cfg: _Config, args) -> int:
    params = _model(cfg)
    basis, times = _disc(cfg, params)
    seed = _seed(cfg, args)
    rng = np.random.default_rng(seed)
    amp = cfg.get_float("taylor", "amplitude", default=0.3) if cfg.parser.has_section(
        "taylor"
    ) else 0.3
    if cfg.parser.has_section("taylor") and cfg.has("taylor", "rhos"):
        rhos = [float(p) for p in cfg.get_str("taylor", "rhos").split(",")]
    else:
        rhos = [1e-1, 1e-2, 1e-3, 1e-4]
    decay = 1.0 / (1.0 + basis.lam)
    control = Trajectory(
        times,
        (1.0 + 0.3 * np.sin(times))[:, None] * (amp * rng.normal(size=basis.n_modes) * decay),
        basis,
        "control",
    )
    psi = Trajectory(
        times,
        (1.0 + 0.3 * np.cos(2.0 * times))[:, None] * (amp * rng.normal(size=basis.n_modes) * decay),
        basis,
        "control",
    )
    y0 = Field(amp * rng.normal(size=basis.n_modes) * decay, basis)
    result = gateaux_taylor_test(control, psi, y0, rhos, params)
    os.makedirs(args.out, exist_ok=True)
    out = {
        "command": "taylor",
        "rhos": list(result.rhos),
        "remainders": list(result.remainders),
        "slopes": list(result.slopes),
        "min_slope": float(np.min(result.slopes)),
        "seed": seed,
        "code_version": __version__,
    }
    atomic_write_text(
        os.path.join(args.out, "taylor.json"), json.dumps(out, sort_keys=True, indent=2) + "\n"
    )
    lines = ["rho,remainder"] + [
        f"{repr(float(r))},{repr(float(e))}" for r, e in zip(result.rhos, result.remainders)
    ]
    atomic_write_text(os.path.join(args.out, "taylor.csv"), "\n".join(lines) + "\n")
    return 0


def _cmd_export_plot(cfg: _Config, args) -> int:
    what = cfg.get_str("export", "what", default="norms")
    path = cfg.get_str("export", "input")
    if not os.path.isabs(path):
        path = os.path.join(os.path.dirname(os.path.abspath(args.config)), path)
    os.makedirs(args.out, exist_ok=True)
    if what == "norms":
        traj = load_trajectory(path)
        atomic_write_text(os.path.join(args.out, "norms.csv"), norms_csv(traj))
    elif what == "optimizer":
        with open(path) as handle:
            data = json.load(handle)
        lines = ["key,value"] + [f"{k},{v}" for k, v in sorted(data.items())]
        atomic_write_text(os.path.join(args.out, "optimizer_summary.csv"), "\n".join(lines) + "\n")
    else:
        raise ConfigInvalid(f"export.what = {what!r}, expected 'norms' or 'optimizer'")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "optimize": _cmd_optimize,
    "verify": _cmd_verify,
    "taylor": _cmd_taylor,
    "export-plot": _cmd_export_plot,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tgflow",
        description="Spectral solver and verification suite for third grade fluid tracking control",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", help="path to the run configuration file")
    parser.add_argument("--out", required=True, help="output directory (caller-owned)")
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed")
    parser.add_argument("--threads", type=int, default=1, help="FFT worker count (default 1)")
    parser.add_argument("--level", choices=LEVELS, default="fast", help="verify suite level")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigInvalid("--threads must be >= 1")
        set_fft_workers(args.threads)
        if args.command == "verify":
            cfg = _Config(args.config) if args.config else None
        else:
            if not args.config:
                raise ConfigInvalid(f"{args.command} requires --config")
            cfg = _Config(args.config)
        return _COMMANDS[args.command](cfg, args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
