"""Command-line interface.

Subcommands: ``tree``, ``transform``, ``energy``, ``verify <suite>`` and
``green``.  Settings come from flags, then an optional JSON config file
(``--config``), then defaults.  Each subcommand accepts only its own
settings; anything else is a usage error.

Exit codes: 0 success, 1 verification failure, 2 usage or config error.
Outputs go to ``--output`` (a directory), defaulting to
``$SHT_FRACLAP_OUTPUT`` or the current directory.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .dyadic import CellFunction, build_tree
from .energy import KernelParams, energy_haar, energy_haar_exact, energy_quadrature, holder_bump
from .geometry import make_model
from .haar import build_haar_system, haar_forward
from .solver import assemble, green_function
from .verify import RATIO_RADII, SUITES, run_suite

OUTPUT_ENV = "SHT_FRACLAP_OUTPUT"

DEFAULTS = {
    "model": "sierpinski",
    "J": 4,
    "m0": 0,
    "mode": "dyadic",
    "s": 0.9,
    "sigma": 0.5,
    "lambda": 1.0,
    "x": None,
    "seed": 0,
    "workers": 1,
    "output": None,
    "function": "random",
    "input": None,
    "via": "quadrature",
    "tol_solver": 1e-8,
    "tol_orthonormality": 1e-12,
    "tol_parseval": 1e-10,
}

COMMON = ("model", "J", "m0", "output")
ALLOWED = {
    "tree": COMMON,
    "transform": COMMON + ("function", "input", "seed"),
    "energy": COMMON + ("mode", "s", "sigma", "via", "function", "input", "seed", "workers"),
    "green": COMMON + ("mode", "s", "sigma", "lambda", "x", "tol_solver"),
    "verify:christ": COMMON,
    "verify:ultrametric": COMMON + ("seed",),
    "verify:lemma1": COMMON + ("s",),
    "verify:lemma2": COMMON + ("seed",),
    "verify:haar": COMMON + ("seed", "tol_orthonormality", "tol_parseval"),
    "verify:energy-equivalence": COMMON + ("seed",),
    "verify:coercivity": COMMON + ("lambda", "sigma", "seed"),
    "verify:duality": COMMON + ("s", "sigma", "seed"),
}

_FLAGS = {
    "model": dict(choices=["sierpinski", "halfline"]),
    "J": dict(type=int),
    "m0": dict(type=int),
    "mode": dict(choices=["metric", "dyadic", "ball"]),
    "s": dict(type=float),
    "sigma": dict(type=float),
    "lambda": dict(type=float, dest="lambda_"),
    "x": dict(help="leaf address, e.g. 4:1111 (Sierpinski) or 4:3 (half-line)"),
    "seed": dict(type=int),
    "workers": dict(type=int),
    "output": dict(help="output directory"),
    "function": dict(choices=["ones", "random", "bump"]),
    "input": dict(help="CSV with columns leaf_address,value"),
    "via": dict(choices=["quadrature", "haar", "haar-series"]),
    "tol_solver": dict(type=float),
    "tol_orthonormality": dict(type=float),
    "tol_parseval": dict(type=float),
}


# per-command overrides of DEFAULTS
COMMAND_DEFAULTS = {"verify:lemma1": {"J": 5, "s": 0.5}}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def output_dir(self) -> str:
        return self.values.get("output") or os.environ.get(OUTPUT_ENV) or os.getcwd()


def _add_flags(p: argparse.ArgumentParser, keys) -> None:
    p.add_argument("--config", help="JSON file with settings; flags take precedence")
    for key in keys:
        opts = dict(_FLAGS[key])
        flag = "--" + key.replace("_", "-")
        opts.setdefault("dest", key)
        opts["default"] = argparse.SUPPRESS
        p.add_argument(flag, **opts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sht-fraclap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in ("tree", "transform", "energy", "green"):
        _add_flags(sub.add_parser(cmd), ALLOWED[cmd])
    ver = sub.add_parser("verify")
    vsub = ver.add_subparsers(dest="suite", required=True)
    for suite in SUITES:
        _add_flags(vsub.add_parser(suite), ALLOWED[f"verify:{suite}"])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    key = args.command if args.command != "verify" else f"verify:{args.suite}"
    allowed = ALLOWED[key]
    values = {k: DEFAULTS[k] for k in allowed}
    values.update(COMMAND_DEFAULTS.get(key, {}))
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                file_values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_values, dict):
            raise UsageError("config file must hold a flat JSON object")
        extra = sorted(set(file_values) - set(allowed))
        if extra:
            raise UsageError(f"config keys not accepted by '{key.replace(':', ' ')}': {', '.join(extra)}")
        values.update(file_values)
    for k in allowed:
        dest = "lambda_" if k == "lambda" else k
        if hasattr(args, dest):
            values[k] = getattr(args, dest)
    cfg = RunConfig(key, values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    v = cfg.values
    if v["J"] < 0:
        raise UsageError("J must be >= 0")
    if v["m0"] < 0:
        raise UsageError("m0 must be >= 0")
    for k in ("tol_solver", "tol_orthonormality", "tol_parseval", "lambda"):
        if k in v and not v[k] > 0:
            raise UsageError(f"{k} must be positive")
    if "workers" in v and v["workers"] < 1:
        raise UsageError("workers must be >= 1")
    try:
        model = make_model(v["model"], v["m0"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if "mode" in v:
        try:
            KernelParams(v["mode"], s=v["s"] if v["mode"] == "metric" else None,
                         sigma=None if v["mode"] == "metric" else v["sigma"]).check_model(model)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    if cfg.command == "green":
        if v["mode"] == "metric" and not v["s"] > model.gamma / 2:
            raise UsageError(
                f"s={v['s']} is not above gamma/2 = {model.gamma / 2:.4f}: point evaluation is not "
                "defined and finite-energy functions need not be continuous in this range"
            )
        if v["J"] < 1:
            raise UsageError("green needs J >= 1")
    if cfg.command == "energy" and v["via"] != "quadrature" and v["mode"] != "dyadic":
        raise UsageError(f"--via {v['via']} is only available with --mode dyadic")
    if cfg.command in ("verify:lemma1",) and model.gamma is None:
        raise UsageError("lemma1 needs an Ahlfors model (sierpinski)")
    if cfg.command == "verify:lemma1":
        if not 0 <= v["s"] < 1:
            raise UsageError("s must lie in [0, 1)")
        if model.cell_diameter(v["J"]) > RATIO_RADII[-1]:
            raise UsageError(f"lemma1 probes radii down to {RATIO_RADII[-1]}; J={v['J']} is too coarse (use J >= 5)")
    if cfg.command == "verify:coercivity" and not 0 < v["sigma"] < 1:
        raise UsageError("sigma must lie in (0, 1)")
    if "sigma" in v and cfg.command.startswith("verify") and not 0 < v["sigma"] < 1:
        raise UsageError("sigma must lie in (0, 1)")
    out = cfg.output_dir
    try:
        os.makedirs(out, exist_ok=True)
        with tempfile.TemporaryFile(dir=out):
            pass
    except OSError as exc:
        raise UsageError(f"output directory {out} is not writable: {exc.strerror or exc}") from exc


def _model(cfg):
    return make_model(cfg["model"], cfg["m0"])


def _input_function(cfg, tree) -> CellFunction:
    if cfg["input"]:
        vals = np.full(tree.n_leaves, np.nan)
        try:
            with open(cfg["input"], newline="") as fh:
                for row in csv.DictReader(fh):
                    vals[tree.leaf_index(tree.parse_address(row["leaf_address"]))] = float(row["value"])
        except (OSError, KeyError, ValueError) as exc:
            raise UsageError(f"cannot read input {cfg['input']}: {exc}") from exc
        if np.isnan(vals).any():
            raise UsageError(f"input {cfg['input']} does not give a value for every leaf")
        return CellFunction(tree, vals)
    if cfg["function"] == "ones":
        return CellFunction.constant(tree, 1.0)
    if cfg["function"] == "bump":
        return holder_bump(tree, 1.0)
    return CellFunction(tree, np.random.default_rng(cfg["seed"]).standard_normal(tree.n_leaves))


def _write(cfg, name: str, text: str) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, name)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _dump(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def cmd_tree(cfg: RunConfig) -> int:
    t = build_tree(_model(cfg), cfg["J"])
    print(_write(cfg, "tree.json", t.to_json() + "\n"))
    return 0


def cmd_transform(cfg: RunConfig) -> int:
    t = build_tree(_model(cfg), cfg["J"])
    f = _input_function(cfg, t)
    d = haar_forward(build_haar_system(t), f)
    print(_write(cfg, "decomposition.csv", d.to_csv()))
    return 0


def cmd_energy(cfg: RunConfig) -> int:
    model = _model(cfg)
    t = build_tree(model, cfg["J"])
    f = _input_function(cfg, t)
    mode = cfg["mode"]
    p = KernelParams(mode, s=cfg["s"] if mode == "metric" else None, sigma=None if mode == "metric" else cfg["sigma"])
    if cfg["via"] == "haar":
        e = energy_haar_exact(build_haar_system(t), f, p.sigma)
    elif cfg["via"] == "haar-series":
        e = energy_haar(build_haar_system(t), f, p.sigma)
    else:
        e = energy_quadrature(t, f, p, workers=cfg["workers"])
    l2 = f.l2_norm_sq()
    doc = {
        "mode": mode,
        "via": cfg["via"],
        "params": p.as_dict(),
        "energy": e,
        "l2": l2,
        "sobolevNorm": float(np.sqrt(l2) + np.sqrt(e)),
        "J": t.J,
        "model": model.describe(),
        "workers": cfg["workers"],
    }
    print(_write(cfg, f"energy-{mode}-{cfg['via']}.json", _dump(doc)))
    return 0


def cmd_green(cfg: RunConfig) -> int:
    model = _model(cfg)
    t = build_tree(model, cfg["J"])
    mode = cfg["mode"]
    p = KernelParams(mode, s=cfg["s"] if mode == "metric" else None, sigma=None if mode == "metric" else cfg["sigma"])
    try:
        x = t.parse_address(cfg["x"]) if cfg["x"] else t.leaf_address(0)
        t.leaf_index(x)
        problem = assemble(build_haar_system(t), p, cfg["lambda"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    sol = green_function(problem, x, tol=cfg["tol_solver"])
    _write(cfg, "green.csv", sol.to_csv())
    _write(cfg, "green-plot.csv", sol.plot_csv())
    print(_write(cfg, "green.json", sol.metadata_json(x=t.format_address(x)) + "\n"))
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    suite = cfg.command.split(":", 1)[1]
    v = cfg.values
    kwargs = {"J": v["J"]}
    for key in ("seed", "s", "sigma", "tol_orthonormality", "tol_parseval"):
        if key in v:
            kwargs[key] = v[key]
    if "lambda" in v:
        kwargs["lam"] = v["lambda"]
    try:
        report = run_suite(suite, _model(cfg), **kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(_write(cfg, f"verify-{suite}.json", _dump(report)))
    for a in report["assertions"]:
        print(f"{'PASS' if a['pass'] else 'FAIL'}  {a['name']}")
    return 0 if report["pass"] else 1


COMMANDS = {"tree": cmd_tree, "transform": cmd_transform, "energy": cmd_energy, "green": cmd_green}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "verify":
            return cmd_verify(cfg)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
