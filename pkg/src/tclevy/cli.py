"""Command line entry point: ``tclevy {sample,validate,converge,audit}``.

Configuration is a flat ``key = value`` file plus ``--set key=value``
overrides. Every run writes CSV data files (no timestamps, shortest
round-trip floats) and a JSON report echoing the effective configuration.
Exit status: 0 pass, 1 statistical failure, 2 usage or domain error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .convergence import (LevelLadder, strong_error, validate_increment_scaling, validate_inverse_moments,
                          validate_solution_moment_bound)
from .errors import DomainError, ExperimentAborted, SolverError
from .models import audit, builtin_cubic, builtin_linear, time_modulated, weierstrass_envelope
from .noise import JumpMeasureSpec
from .schemes import ThetaConfig, check_config
from .streams import derive
from .subordinator import StableSpec, generate_path, inverse_on_grid

SCHEMA_VERSION = 1
OUT_ENV = "TCLEVY_OUT_DIR"
ORDER_TOLERANCE = 0.15

DEFAULTS = {
    "alpha": 0.8,
    "T": 1.0,
    "delta": 0.01,
    "theta": 1.0,
    "master_seed": 0,
    "n_paths": 2000,
    "model": "linear",
    "a": -1.0,
    "mu": 1.0,
    "sigma": 0.5,
    "gamma": 0.2,
    "x0": 1.0,
    "radius": 10.0,
    "jump_family": "uniform",
    "lam": 1.0,
    "c": 0.5,
    "atom": 0.5,
    "total_mass": 1.0,
    "eta_F": 1.0,
    "eta_G": 1.0,
    "eta_H": 1.0,
    "env_scale_F": 0.5,
    "env_scale_G": 0.5,
    "env_scale_H": 0.5,
    "delta_fine": 2.0**-8,
    "n_levels": 5,
    "reference_delta": 2.0**-10,
    "sup_points": "union",
    "p_list": "1,2",
    "t_list": "0.5,1",
    "increment_lags": "",
    "oracle_scale": 1.0,
    "bound_scale": 1.0,
    "audit_samples": 10000,
    "audit_slack": 0.0,
    "backend": "auto",
}

MODELS = ("linear", "cubic", "zero")
FAMILIES = ("uniform", "two_point", "none")


class ConfigError(ValueError):
    """Malformed or out-of-range configuration; always names the key."""


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    text = raw.strip()
    try:
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            value = float(text)
            if not math.isfinite(value):
                raise ValueError
            return value
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r} as {type(default).__name__}") from None
    return text


def _float_list(key: str, text: str) -> list:
    if not text.strip():
        return []
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"key {key!r}: expected comma-separated numbers, got {text!r}") from None


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {body!r} (key {body.split()[0]!r})")
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r} on line {lineno}")
        out[key] = _coerce(key, value)
    return out


def parse_config_json(text: str) -> dict:
    """Accept a JSON report (its ``config`` echo) or a plain JSON object of keys."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON config at line {exc.lineno}: {exc.msg}") from None
    doc = doc.get("config", doc)
    out = {}
    for key, value in doc.items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r} in JSON config")
        out[key] = _coerce(key, repr(value) if isinstance(value, float) else str(value))
    return out


def parse_override(item: str) -> tuple:
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, value = (s.strip() for s in item.split("=", 1))
    if key not in DEFAULTS:
        raise ConfigError(f"unknown key {key!r} in --set")
    return key, _coerce(key, value)


def effective_config(config_path: str | None, overrides=(), seed: int | None = None) -> dict:
    cfg = dict(DEFAULTS)
    if config_path is not None:
        try:
            text = Path(config_path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {config_path}: {exc.strerror}") from None
        cfg.update(parse_config_json(text) if text.lstrip().startswith("{") else parse_config_text(text))
    for item in overrides:
        k, v = parse_override(item)
        cfg[k] = v
    if seed is not None:
        cfg["master_seed"] = seed
    return cfg


def build_model(cfg: dict):
    fam = cfg["jump_family"]
    if fam not in FAMILIES:
        raise ConfigError(f"key 'jump_family': expected one of {FAMILIES}, got {fam!r}")
    try:
        jumps = JumpMeasureSpec(lam=cfg["lam"], c=cfg["c"], total_mass=cfg["total_mass"], family=fam,
                                atom=cfg["atom"] if fam == "two_point" else 0.0)
    except DomainError as exc:
        raise ConfigError(f"jump measure keys (lam, c, total_mass, atom): {exc}") from None
    name = cfg["model"]
    if name == "linear":
        base = builtin_linear(cfg["a"], cfg["sigma"], cfg["gamma"], jumps, cfg["x0"], horizon=cfg["T"])
    elif name == "cubic":
        if cfg["mu"] < 0:
            raise ConfigError("key 'mu': cubic model needs mu >= 0")
        base = builtin_cubic(cfg["mu"], cfg["sigma"], cfg["gamma"], jumps, cfg["x0"], horizon=cfg["T"],
                             radius=cfg["radius"])
    elif name == "zero":
        base = builtin_linear(0.0, 0.0, 0.0, jumps, cfg["x0"], horizon=cfg["T"])
    else:
        raise ConfigError(f"key 'model': expected one of {MODELS}, got {name!r}")
    envs = []
    for part in "FGH":
        eta = cfg[f"eta_{part}"]
        if not 0.0 < eta <= 1.0:
            raise ConfigError(f"key 'eta_{part}': must lie in (0, 1], got {eta}")
        envs.append(None if eta == 1.0 else weierstrass_envelope(eta, scale=cfg[f"env_scale_{part}"]))
    if any(e is not None for e in envs):
        try:
            base = time_modulated(base, envs)
        except DomainError as exc:
            raise ConfigError(f"envelope keys (eta_*, env_scale_*): {exc}") from None
    return base


def check_ranges(cfg: dict, model, deltas) -> None:
    """Range-check everything before any computation."""
    if not 0.0 < cfg["alpha"] < 1.0:
        raise ConfigError(f"key 'alpha': must lie in (0, 1), got {cfg['alpha']}")
    if not 0.0 <= cfg["theta"] <= 1.0:
        raise ConfigError(f"key 'theta': must lie in [0, 1], got {cfg['theta']}")
    if cfg["n_paths"] < 1:
        raise ConfigError(f"key 'n_paths': must be >= 1, got {cfg['n_paths']}")
    if cfg["T"] <= 0.0:
        raise ConfigError(f"key 'T': must be positive, got {cfg['T']}")
    if cfg["sup_points"] not in ("union", "coarse"):
        raise ConfigError(f"key 'sup_points': expected 'union' or 'coarse', got {cfg['sup_points']!r}")
    if cfg["backend"] not in ("auto", "compiled", "python", "generic"):
        raise ConfigError(f"key 'backend': unknown backend {cfg['backend']!r}")
    for key, d in deltas:
        try:
            check_config(ThetaConfig(cfg["theta"], d), model)
        except DomainError as exc:
            raise ConfigError(f"key {key!r}: {exc}") from None


# ---------------------------------------------------------------------------
# output

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def write_json(path: Path, payload: dict, cfg: dict, command: str) -> None:
    doc = {"schema_version": SCHEMA_VERSION, "command": command, "config": cfg,
           "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}
    doc.update(payload)
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def _out_dir(arg: str | None) -> Path:
    out = Path(arg or os.environ.get(OUT_ENV) or "tclevy_out")
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc.strerror}") from None
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_sample(cfg: dict, out: Path, workers: int) -> int:
    if not 0.0 < cfg["alpha"] < 1.0:
        raise ConfigError(f"key 'alpha': must lie in (0, 1), got {cfg['alpha']}")
    if not 0.0 < cfg["delta"] < 1.0:
        raise ConfigError(f"key 'delta': must lie in (0, 1), got {cfg['delta']}")
    if cfg["T"] <= 0.0:
        raise ConfigError(f"key 'T': must be positive, got {cfg['T']}")
    path = generate_path(StableSpec(cfg["alpha"], cfg["delta"], cfg["T"]), cfg["master_seed"])
    n_rows = path.values.size
    t_grid = np.arange(n_rows) * (cfg["T"] / (n_rows - 1))
    e_tilde = inverse_on_grid(path, t_grid)
    rows = [("n", "t_grid", "D", "E_tilde")]
    rows += [(n, t_grid[n], path.values[n], e_tilde[n]) for n in range(n_rows)]
    write_csv(out / "sample.csv", rows)
    write_json(out / "sample.json", {"n_steps": path.n_steps, "n_rows": n_rows, "passed": True}, cfg, "sample")
    return 0


def cmd_validate(cfg: dict, out: Path, workers: int) -> int:
    model = build_model(cfg)
    check_ranges(cfg, model, [("delta", cfg["delta"])])
    checks = []
    for t in _float_list("t_list", cfg["t_list"]):
        checks += validate_inverse_moments(cfg["alpha"], t, _float_list("p_list", cfg["p_list"]), cfg["n_paths"],
                                           cfg["delta"], cfg["master_seed"], oracle_scale=cfg["oracle_scale"])
    checks.append(validate_solution_moment_bound(model, cfg["alpha"], cfg["T"], cfg["n_paths"], cfg["delta"],
                                                 cfg["master_seed"], cfg["theta"], bound_scale=cfg["bound_scale"],
                                                 workers=workers))
    lags = _float_list("increment_lags", cfg["increment_lags"])
    if lags:
        checks.append(validate_increment_scaling(model, cfg["alpha"], lags, cfg["n_paths"], cfg["delta"],
                                                 cfg["master_seed"], cfg["theta"], workers=workers))
    rows = [("check", "estimate", "std_error", "reference", "lower", "upper", "z_score", "passed")]
    rows += [(c.name, c.estimate, c.std_error, c.reference, c.lower, c.upper, c.z_score, c.passed) for c in checks]
    write_csv(out / "validate.csv", rows)
    passed = all(c.passed for c in checks)
    write_json(out / "validate.json", {"passed": passed, "checks": [c.to_dict() for c in checks]}, cfg, "validate")
    return 0 if passed else 1


def cmd_converge(cfg: dict, out: Path, workers: int) -> int:
    model = build_model(cfg)
    try:
        ladder = LevelLadder(cfg["delta_fine"], cfg["n_levels"], reference_delta=cfg["reference_delta"])
    except DomainError as exc:
        raise ConfigError(f"ladder keys (delta_fine, n_levels, reference_delta): {exc}") from None
    check_ranges(cfg, model, [("delta_fine", d) for d in ladder.deltas])
    rep = strong_error(model, cfg["alpha"], cfg["T"], ladder, cfg["theta"], cfg["n_paths"], cfg["master_seed"],
                       workers=workers, sup_points=cfg["sup_points"], backend=cfg["backend"])
    write_csv(out / "converge.csv", rep.csv_rows())
    summary = rep.summary()
    if rep.degenerate:
        summary["passed"] = None
        code = 0
    else:
        summary["passed"] = abs(rep.fitted_order - rep.predicted_order) <= ORDER_TOLERANCE
        code = 0 if summary["passed"] else 1
    write_json(out / "converge.json", summary, cfg, "converge")
    return code


def cmd_audit(cfg: dict, out: Path, workers: int) -> int:
    model = build_model(cfg)
    if cfg["audit_samples"] < 1:
        raise ConfigError(f"key 'audit_samples': must be >= 1, got {cfg['audit_samples']}")
    rep = audit(model, cfg["radius"], cfg["audit_samples"], derive(cfg["master_seed"], 0, "audit"),
                slack=cfg["audit_slack"])
    rows = [("assumption", "quantity", "ratio", "declared", "passed")]
    rows += [(e.assumption, e.quantity, e.ratio, e.declared, e.passed) for e in rep.entries]
    write_csv(out / "audit.csv", rows)
    payload = rep.to_dict()
    payload["constants"] = model.constants.__dict__
    write_json(out / "audit.json", payload, cfg, "audit")
    return 0 if rep.passed else 1


COMMANDS = {"sample": cmd_sample, "validate": cmd_validate, "converge": cmd_converge, "audit": cmd_audit}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tclevy", description="Time-changed Levy SDE experiments.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", metavar="PATH", help="flat key = value config file")
    p.add_argument("--seed", type=int, help="master seed (overrides master_seed)")
    p.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUT_ENV} or ./tclevy_out)")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: CPU count)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    return p


def _fail(out_dir, exc, kind) -> int:
    err = {"schema_version": SCHEMA_VERSION, "error": kind, "message": str(exc)}
    print(json.dumps(err, sort_keys=True), file=sys.stderr)
    if out_dir is not None:
        try:
            (out_dir / "error.json").write_text(json.dumps(err, indent=2, sort_keys=True) + "\n")
        except OSError:
            pass
    return 2


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out_dir = None
    try:
        out_dir = _out_dir(args.out)
    except OSError as exc:
        return _fail(None, exc, "io")
    try:
        cfg = effective_config(args.config, args.overrides, args.seed)
        workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
        if workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {workers}")
        return COMMANDS[args.command](cfg, out_dir, workers)
    except ConfigError as exc:
        return _fail(out_dir, exc, "config")
    except (DomainError, SolverError, ExperimentAborted) as exc:
        return _fail(out_dir, exc, type(exc).__name__)
    except OSError as exc:
        return _fail(out_dir, exc, "io")


if __name__ == "__main__":
    sys.exit(main())
