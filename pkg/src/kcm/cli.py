"""Command line entry point: ``kcm <subcommand> [options]``."""
from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analysis, experiments, tables
from .dynsys import reference_manifold, register_example
from .greedy import GramBreakdown, p_greedy
from .integrate import IntegratorConfig, NewtonError, generate_dataset
from .kernels import KernelSpec
from .manifold import FitConfig, FitError, fit, load_approximant, save_approximant, taylor_of_approximant

log = logging.getLogger("kcm")

OUTPUT_ENV = "KCM_OUTPUT_DIR"
DEFAULT_OUTPUT = "kcm_output"

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

SCHEMA_HELP = """\
output files (CSV, header row, floats in round-trip precision):
  dataset.csv            x1..xd,y1..ym
  trajectory_<k>.csv     t,x1..xd,y1..ym          (simulate --trajectories)
  greedy_<kernel>.csv    step,index,power         (power = P before the step's selection)
  approximant_<k>.txt    flat key = value text with [centers] [alpha] [beta] blocks
  residual_<kernel>.csv  input,residual (d=1) or x1,x2,value (d=2, row-major)
  surface_<kernel>.csv   x1,x2,value (row-major)
  convergence_<k>.csv    N,e_N
  comparison_<k>.csv     t,err_abs,err_rel        (err_rel is nan once |x| <= 1e-12)
  taylor.csv             kernel,1,x1,...          (graded-lex monomials up to --order)
  summary.csv            check,expected,measured,tolerance,pass
A ".partial" file in the output directory marks a run that stopped early.

config file (--config): INI-style, key = value, one section per subcommand
plus an optional [common] section; command line flags take precedence.

exit codes: 0 all checks pass, 1 a check failed, 2 usage or config error,
3 numerical failure (integration, greedy or linear solve).

The default output directory is taken from $KCM_OUTPUT_DIR, else ./kcm_output.
"""


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v) -> tuple[float, ...]:
    if isinstance(v, (tuple, list)):
        return tuple(float(x) for x in v)
    return tuple(float(x) for x in str(v).split(","))


# name -> (converter, builtin default, help); None defaults are resolved per example
OPTIONS = {
    "example": (int, None, "example id (1, 2 or 3)"),
    "t_final": (float, 1000.0, "final integration time"),
    "dt": (float, 0.1, "implicit Euler step"),
    "newton_tol": (float, 1e-12, "Newton residual tolerance"),
    "dedupe_tol": (float, 0.0, "max-norm tolerance for duplicate removal (0: exact duplicates)"),
    "trajectories": (_bool, False, "also write every corner trajectory"),
    "data": (str, None, "dataset CSV (default: regenerate)"),
    "kernel": (str, None, "kernel family: poly, gauss or wendland"),
    "degree": (int, 4, "polynomial kernel degree"),
    "gamma": (float, 0.5, "polynomial kernel scale"),
    "shape": (float, 1.0, "Gaussian shape parameter"),
    "lam": (float, None, "regularization added to the data diagonal"),
    "eps_tol": (float, None, "greedy tolerance on the squared power function"),
    "max_points": (int, 200, "greedy selection cap"),
    "origin_constraints": (_bool, None, "greedy power relative to the origin constraints"),
    "approximant": (str, None, "approximant file written by 'fit'"),
    "x0": (_floats, None, "comma separated initial state (x1,..,xd,y1,..,ym)"),
    "order": (int, 4, "Taylor order"),
    "seed": (int, 0, "seed of the certificate perturbations"),
}

SUBCOMMANDS = {
    "simulate": ("generate the filtered dataset", ["example", "t_final", "dt", "newton_tol", "dedupe_tol", "trajectories"]),
    "fit": (
        "greedy selection and constrained fit",
        ["example", "data", "kernel", "degree", "gamma", "shape", "lam", "eps_tol", "max_points",
         "origin_constraints", "t_final", "dt", "newton_tol", "dedupe_tol"],
    ),
    "residual": ("invariance-equation residual on the test grid", ["example", "approximant"]),
    "taylor": ("Taylor coefficients of fitted approximants at the origin", ["approximant", "order"]),
    "convergence": (
        "error of every greedy prefix against the exact manifold",
        ["example", "data", "kernel", "degree", "gamma", "shape", "lam", "eps_tol", "max_points",
         "origin_constraints", "t_final", "dt", "newton_tol", "dedupe_tol"],
    ),
    "compare": ("full vs reduced trajectory", ["example", "approximant", "x0", "t_final", "dt", "newton_tol"]),
    "example": ("full pipeline with reference settings and pass/fail summary", ["seed", "t_final", "dt", "newton_tol", "dedupe_tol"]),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kcm",
        description="Kernel-based center manifold approximation from trajectory data.",
        epilog=SCHEMA_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (desc, opts) in SUBCOMMANDS.items():
        sp = sub.add_parser(name, help=desc, description=desc, epilog=SCHEMA_HELP,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        if name == "example":
            sp.add_argument("id", type=int, choices=(1, 2, 3), help="example id")
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--output-dir", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
        sp.add_argument("--log-level", default="WARNING", help="logging level")
        for key in opts:
            conv, default, text = OPTIONS[key]
            flag = "--" + key.replace("_", "-")
            if conv is _bool:
                sp.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction, default=None,
                                help=f"{text} (default {default})")
            elif key == "approximant" and name == "taylor":
                sp.add_argument(flag, dest=key, nargs="+", default=None, help=text)
            else:
                sp.add_argument(flag, dest=key, type=str, default=None,
                                help=text + ("" if default is None else f" (default {default})"))
    return parser


def read_config(path, command: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None, default_section="common")
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    allowed = set(SUBCOMMANDS[command][1])
    for section in cp.sections():
        if section not in SUBCOMMANDS:
            raise ConfigError(f"{path}: unknown section [{section}]")
    values = {}
    items = dict(cp.defaults())
    if cp.has_section(command):
        items.update({k: v for k, v in cp.items(command)})
    for raw_key, raw in items.items():
        key = raw_key.replace("-", "_")
        if key not in OPTIONS:
            raise ConfigError(f"{path}: unknown key {raw_key!r}")
        if key in allowed:
            values[key] = raw
    return values


def resolve(args: argparse.Namespace) -> dict:
    """Merge command line, config file and builtin defaults, converting types."""
    opts = SUBCOMMANDS[args.command][1]
    file_values = read_config(args.config, args.command) if args.config else {}
    out = {}
    for key in opts:
        conv, default, _ = OPTIONS[key]
        cli = getattr(args, key, None)
        raw = cli if cli is not None else file_values.get(key, default)
        if raw is None:
            out[key] = None
            continue
        try:
            if key == "approximant" and isinstance(raw, str) and args.command == "taylor":
                raw = raw.split()
            out[key] = [str(r) for r in raw] if isinstance(raw, list) else conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value for {key}: {raw!r} ({exc})") from exc
    if "example" in out and out["example"] is not None and out["example"] not in (1, 2, 3):
        raise ConfigError(f"example must be 1, 2 or 3, got {out['example']}")
    return out


def output_dir(args) -> Path:
    return Path(args.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def _integrator(o: dict) -> IntegratorConfig:
    try:
        return IntegratorConfig(T=o.get("t_final") or 1000.0, dt=o.get("dt") or 0.1,
                                newton_tol=o.get("newton_tol") or 1e-12)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _require(o: dict, key: str, command: str):
    if o.get(key) is None:
        raise ConfigError(f"'{command}' needs --{key.replace('_', '-')}")
    return o[key]


def _kernel(o: dict, cfg: experiments.ExampleConfig) -> tuple[KernelSpec, float]:
    base = cfg.runs[0]
    fam = o.get("kernel")
    try:
        if fam is None:
            k = base.kernel
        elif fam in ("poly", "polynomial"):
            k = KernelSpec.polynomial(o["degree"], o["gamma"])
        elif fam in ("gauss", "gaussian"):
            k = KernelSpec.gaussian(o["shape"])
        elif fam == "wendland":
            k = KernelSpec.wendland()
        else:
            raise ConfigError(f"unknown kernel {fam!r}; expected poly, gauss or wendland")
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    lam = o["lam"] if o.get("lam") is not None else base.lam
    if not lam > 0:
        raise ConfigError("lam must be positive")
    return k, lam


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if isinstance(exc, _NUMERIC_ERRORS) and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


_NUMERIC_ERRORS = (FitError, NewtonError, GramBreakdown, FloatingPointError, np.linalg.LinAlgError, RuntimeError)


def _dataset(o: dict, example: int):
    if o.get("data"):
        with _Stage("load dataset"):
            try:
                return tables.read_dataset(o["data"])
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read dataset {o['data']}: {exc}") from exc
    cfg = experiments.default_config(example)
    with _Stage("simulate"):
        return generate_dataset(register_example(example), _integrator(o), o.get("dedupe_tol") or cfg.dedupe_tol)


def _load(path):
    try:
        return load_approximant(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read approximant {path}: {exc}") from exc


def cmd_simulate(o, out: Path) -> int:
    ex = _require(o, "example", "simulate")
    sys_ = register_example(ex)
    with _Stage("simulate"):
        data, trajs = generate_dataset(sys_, _integrator(o), o["dedupe_tol"], return_trajectories=True)
    tables.write_dataset(out / "dataset.csv", data)
    if o["trajectories"]:
        for i, tr in enumerate(trajs):
            tables.write_trajectory(out / f"trajectory_{i}.csv", tr, sys_.d)
    print(f"example {ex}: N = {data.N} -> {out / 'dataset.csv'}")
    return EXIT_OK


def _select_and_fit(o, command):
    ex = _require(o, "example", command)
    cfg = experiments.default_config(ex)
    k, lam = _kernel(o, cfg)
    eps_tol = o["eps_tol"] if o.get("eps_tol") is not None else cfg.eps_tol
    oc = o["origin_constraints"] if o.get("origin_constraints") is not None else cfg.origin_constraints
    data = _dataset(o, ex)
    with _Stage("greedy"):
        gr = p_greedy(data.X, k, eps_tol, max_points=o["max_points"], origin_constraints=oc)
    return ex, data, k, lam, gr


def cmd_fit(o, out: Path) -> int:
    ex, data, k, lam, gr = _select_and_fit(o, "fit")
    with _Stage("fit"):
        hhat = fit(data.X[gr.indices], data.Y[gr.indices], FitConfig(k, lam))
    tables.write_greedy(out / f"greedy_{k.label}.csv", gr)
    path = out / f"approximant_{k.label}.txt"
    save_approximant(hhat, path)
    print(f"{k.label}: {gr.n_selected} centers ({gr.stop_reason}), h(0)={hhat.fit_diag['h0']:.3e} -> {path}")
    return EXIT_OK


def cmd_residual(o, out: Path) -> int:
    ex = _require(o, "example", "residual")
    hhat = _load(_require(o, "approximant", "residual"))
    sys_ = register_example(ex)
    if hhat.d != sys_.d:
        raise ConfigError(f"approximant has d={hhat.d}, example {ex} has d={sys_.d}")
    grid = analysis.test_grid(sys_.d)
    with _Stage("residual"):
        r = analysis.residual_on_grid(sys_, hhat, grid)
    path = tables.write_residual(out / f"residual_{hhat.kernel.label}.csv", grid, r)
    print(f"max |r| = {np.max(np.abs(r)):.3e} -> {path}")
    return EXIT_OK


def cmd_taylor(o, out: Path) -> int:
    paths = _require(o, "approximant", "taylor")
    paths = [paths] if isinstance(paths, str) else paths
    tabs = {}
    for p in paths:
        hhat = _load(p)
        label = hhat.kernel.label
        while label in tabs:
            label += "'"
        with _Stage("taylor"):
            try:
                tabs[label] = taylor_of_approximant(hhat, o["order"])
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
    try:
        path = tables.write_taylor(out / "taylor.csv", tabs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for label, coeffs in tabs.items():
        print(label, " ".join(f"{tables.monomial_name(a)}={c:.3e}" for a, c in coeffs))
    print(f"-> {path}")
    return EXIT_OK


def cmd_convergence(o, out: Path) -> int:
    if o.get("example") is None:
        o["example"] = 2
    ex, data, k, lam, gr = _select_and_fit(o, "convergence")
    if ex != 2:
        raise ConfigError("the convergence study needs an exact manifold (example 2)")
    grid = analysis.test_grid(1)
    with _Stage("convergence"):
        curve = analysis.convergence_study(data.X, data.Y, FitConfig(k, lam), gr.indices, grid,
                                           reference_manifold(2).evaluate_many)
    path = tables.write_convergence(out / f"convergence_{k.label}.csv", curve.N, curve.e_N)
    print(f"slope over N in {curve.window}: {curve.slope:.3f}; e_N(last) = {curve.e_N[-1]:.3e} -> {path}")
    return EXIT_OK


def cmd_compare(o, out: Path) -> int:
    if o.get("example") is None:
        o["example"] = 3
    ex = o["example"]
    hhat = _load(_require(o, "approximant", "compare"))
    sys_ = register_example(ex)
    x0 = _require(o, "x0", "compare")
    if len(x0) != sys_.n:
        raise ConfigError(f"--x0 needs {sys_.n} values for example {ex}")
    with _Stage("compare"):
        comp = analysis.trajectory_compare(sys_, hhat, x0, _integrator(o))
    path = tables.write_comparison(out / f"comparison_{hhat.kernel.label}.csv", comp.times, comp.abs_err, comp.rel_err)
    print(f"decay rate {comp.decay_rate:.4f}, rel-err plateau {comp.plateau:.4f} -> {path}")
    return EXIT_OK


def cmd_example(o, out: Path, ex: int) -> int:
    cfg = experiments.default_config(ex)
    cfg = replace(cfg, integrator=_integrator(o), certificate_seed=o["seed"],
                  dedupe_tol=o["dedupe_tol"] if o.get("dedupe_tol") is not None else cfg.dedupe_tol)
    with _Stage(f"example {ex}"):
        report = experiments.run_example(ex, cfg, out / f"example{ex}")
    print(report.text())
    return EXIT_OK if report.passed else EXIT_CHECK


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "residual": cmd_residual,
    "taylor": cmd_taylor,
    "convergence": cmd_convergence,
    "compare": cmd_compare,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    out = output_dir(args)
    marker = out / experiments.PARTIAL_MARKER
    try:
        o = resolve(args)
        out.mkdir(parents=True, exist_ok=True)
        marker.write_text("incomplete\n")
        if args.command == "example":
            code = cmd_example(o, out, args.id)
        else:
            code = _COMMANDS[args.command](o, out)
    except ConfigError as exc:
        print(f"kcm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"kcm: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    marker.unlink(missing_ok=True)
    return code


if __name__ == "__main__":
    sys.exit(main())
