"""Command-line front end.

Subcommands: ``validate``, ``params``, ``verify`` and ``density``.  Every
option may also come from a JSON ``--config`` file; flags given on the
command line override the file.  Exit codes: 0 pass, 1 verification
failure, 2 configuration or spec error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .embedded import BudgetError, ConsistencyError, EmbeddingError
from .models import MembraneWalkSpec, SpecError, load_spec
from .reference import SbmParams, write_density_csv
from .verification import VerifyConfig, limit_parameters, verify_spec

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

OPTIONS = {
    "spec": str, "mode": str, "n": int, "paths": int, "horizon": float, "seed": int,
    "threads": int, "out": str, "alpha": float, "cycles": int, "radius_cutoff": int,
    "reference_gamma": float, "reference_weights": list,
    "gamma": float, "t": float, "x": float, "grid": str,
}
DEFAULTS = {
    "mode": "exact", "n": 10**4, "paths": 10**4, "horizon": 1.0, "seed": 0,
    "threads": os.cpu_count() or 1, "out": ".", "alpha": 0.01, "cycles": 10**5,
    "radius_cutoff": 512, "x": 0.0, "grid": "-4:4:801",
}
COMMAND_OPTIONS = {
    "validate": {"spec", "out"},
    "params": {"spec", "mode", "seed", "cycles", "radius_cutoff", "out"},
    "verify": {"spec", "mode", "n", "paths", "horizon", "seed", "threads", "out", "alpha",
               "cycles", "radius_cutoff", "reference_gamma", "reference_weights"},
    "density": {"gamma", "t", "x", "grid", "out"},
}


class ConfigError(ValueError):
    pass


def _weights_arg(text: str) -> list:
    return [float(w) for w in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="walshwalk", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("validate", "check the structural assumptions of a spec"),
                        ("params", "compute the limit parameters"),
                        ("verify", "run the statistical verification suite"),
                        ("density", "tabulate the skew Brownian density")):
        s = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS)
        s.add_argument("--config", help="JSON file supplying any option")
        opts = COMMAND_OPTIONS[name]
        if "spec" in opts:
            s.add_argument("--spec", help="chain spec JSON file")
        if "mode" in opts:
            s.add_argument("--mode", choices=("exact", "mc"))
        for flag in ("n", "paths", "seed", "threads", "cycles", "radius_cutoff"):
            if flag in opts:
                s.add_argument("--" + flag.replace("_", "-"), dest=flag, type=int)
        for flag in ("horizon", "alpha", "reference_gamma", "gamma", "t", "x"):
            if flag in opts:
                s.add_argument("--" + flag.replace("_", "-"), dest=flag, type=float)
        if "reference_weights" in opts:
            s.add_argument("--reference-weights", dest="reference_weights", type=_weights_arg,
                           help="comma-separated weights replacing the computed ones")
        if "grid" in opts:
            s.add_argument("--grid", help="LOW:HIGH:COUNT")
        s.add_argument("--out", help="output directory")
    return p


def resolve_config(command: str, args: dict) -> dict:
    """Merge defaults, the config file and flags; unknown keys are rejected."""
    allowed = COMMAND_OPTIONS[command]
    cfg = {k: v for k, v in DEFAULTS.items() if k in allowed}
    path = args.pop("config", None)
    if path is not None:
        try:
            with open(path) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(file_cfg) - allowed)
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {unknown}")
        for k, v in file_cfg.items():
            try:
                cfg[k] = [float(w) for w in v] if OPTIONS[k] is list else OPTIONS[k](v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {k}: {v!r}") from exc
    cfg.update(args)
    return cfg


def git_blob_sha1(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_manifest(out: Path, command: str, cfg: dict, outputs: list) -> None:
    manifest = {"command": command, "config": cfg, "outputs": outputs}
    if cfg.get("spec"):
        manifest["spec_sha1"] = git_blob_sha1(Path(cfg["spec"]).read_bytes())
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _need(cfg: dict, *keys) -> None:
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigError(f"missing required options: {missing}")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def cmd_validate(cfg: dict, out: Path) -> int:
    _need(cfg, "spec")
    spec = load_spec(cfg["spec"])
    checks = spec.validate()
    report = {c.name: {"passed": c.passed, "failures": c.failures, "notes": c.notes} for c in checks}
    _dump(out / "validate.json", report)
    for c in checks:
        print(f"{c.name}: {'pass' if c.passed else 'FAIL'}")
        for msg in c.failures:
            print(f"  {msg}")
    write_manifest(out, "validate", cfg, ["validate.json"])
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


def cmd_params(cfg: dict, out: Path) -> int:
    _need(cfg, "spec")
    spec = load_spec(cfg["spec"])
    spec.check()
    vc = VerifyConfig(mode=cfg["mode"], seed=cfg["seed"], cycles=cfg["cycles"],
                      radius_cutoff=cfg["radius_cutoff"])
    params = limit_parameters(spec, vc)
    _dump(out / "params.json", params)
    print(json.dumps(params, default=_json_default))
    write_manifest(out, "params", cfg, ["params.json"])
    return EXIT_OK


def cmd_verify(cfg: dict, out: Path) -> int:
    _need(cfg, "spec")
    spec = load_spec(cfg["spec"])
    spec.check()
    vc = VerifyConfig(mode=cfg["mode"], n=cfg["n"], paths=cfg["paths"], horizon=cfg["horizon"],
                      seed=cfg["seed"], threads=cfg["threads"], alpha=cfg["alpha"],
                      cycles=cfg["cycles"], radius_cutoff=cfg["radius_cutoff"])
    reference = {}
    if "reference_gamma" in cfg:
        reference["gamma"] = cfg["reference_gamma"]
    if "reference_weights" in cfg:
        reference["weights"] = cfg["reference_weights"]
    report, data = verify_spec(spec, vc, reference)
    report.write(out / "report.json")
    marginal = np.asarray(data["marginal"])
    with open(out / "marginals.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        if isinstance(spec, MembraneWalkSpec):
            w.writerow(["x_scaled"])
            w.writerows([repr(float(v))] for v in marginal)
        else:
            w.writerow([f"ray_{i}" for i in range(1, marginal.shape[1] + 1)])
            w.writerows([repr(float(v)) for v in row] for row in marginal)
    for o in report.outcomes:
        print(f"{'pass' if o.passed else 'FAIL'}  {o.name}: {o.statistic:.6g} (threshold {o.threshold:.6g})")
    write_manifest(out, "verify", cfg, ["report.json", "marginals.csv"])
    return EXIT_OK if report.passed else EXIT_FAIL


def _grid(text: str) -> np.ndarray:
    try:
        lo, hi, count = text.split(":")
        grid = np.linspace(float(lo), float(hi), int(count))
    except ValueError as exc:
        raise ConfigError(f"grid must be LOW:HIGH:COUNT, got {text!r}") from exc
    if len(grid) < 2:
        raise ConfigError("grid needs at least two points")
    return grid


def cmd_density(cfg: dict, out: Path) -> int:
    _need(cfg, "gamma", "t")
    p = SbmParams(cfg["gamma"], cfg["t"], cfg["x"])
    write_density_csv(p, _grid(cfg["grid"]), out / "density.csv")
    write_manifest(out, "density", cfg, ["density.csv"])
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "params": cmd_params, "verify": cmd_verify, "density": cmd_density}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    command = ns.command
    args = {k: v for k, v in vars(ns).items() if k != "command"}
    try:
        cfg = resolve_config(command, args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[command](cfg, out)
    except ConsistencyError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ConfigError, SpecError, ValueError, OSError, BudgetError, EmbeddingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
