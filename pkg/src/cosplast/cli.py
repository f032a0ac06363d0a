"""Command-line front end: config parsing, benchmark runs, comparison tables.

Configs are plain ``key = value`` text files.  ``cosplast run`` executes one
scenario and writes iteration traces, step reports, field dumps and an
aligned summary table; ``cosplast compare`` runs two configs and adds a
side-by-side iteration table.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from .energy import MaterialParams
from .grid import DofLayout, build_grid, dump_fields
from .optimizer import LbfgsConfig
from .solver import (BENDING_DEFAULTS, SHEAR_DEFAULTS, ScenarioSpec,
                     SolverError, StepReport, run_simulation)

__all__ = ["RunConfig", "ConfigError", "parse_config", "run_config", "main"]

PARAMETERIZATIONS = {
    "quaternion_full": "full",
    "quaternion_simple": "simplified",
    "euler": "euler",
}

_MATERIAL_KEYS = ("mu", "lam", "mu_c", "mu2", "rho", "sigma_y", "penalty",
                  "eps_reg")
_LBFGS_KEYS = {"eps0": float, "m": int, "max_iter": int}


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    """Scenario selection plus optional overrides of the benchmark defaults."""

    scenario: str = "shear"
    resolution: tuple = (10, 10, 10)
    parameterization: str = "quaternion_full"
    preconditioning: str = "on"
    h: float = 0.1
    t_final: float = 1.0
    beta_rate: float = 0.25
    bandz_mode: str = "multiply"
    material: dict = field(default_factory=dict)
    lbfgs: dict = field(default_factory=dict)
    reproducible: bool = False

    def to_scenario(self):
        params = dict(self.material)
        params["curvature_variant"] = PARAMETERIZATIONS[self.parameterization]
        return ScenarioSpec.benchmark(
            self.scenario, d=self.resolution, params=params,
            lbfgs=LbfgsConfig(**self.lbfgs), h=self.h, t_final=self.t_final,
            beta_rate=self.beta_rate, bandz_mode=self.bandz_mode,
            preconditioning="two_pass" if self.preconditioning == "on"
            else "off")


def _parse_value(key, raw, lineno):
    try:
        if key == "resolution":
            parts = raw.replace(",", " ").split()
            if len(parts) != 3:
                raise ValueError("need three integers")
            return tuple(int(p) for p in parts)
        if key in ("h", "t_final", "beta_rate") or key in _MATERIAL_KEYS:
            return float(raw)
        if key in _LBFGS_KEYS:
            return _LBFGS_KEYS[key](raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}")


def parse_config(text):
    """Parse the line-oriented key = value format into a RunConfig."""
    cfg = RunConfig()
    seen_material = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', "
                              f"got {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key == "scenario":
            if raw not in ("shear", "bending"):
                raise ConfigError(f"line {lineno}: unknown scenario {raw!r}")
            cfg.scenario = raw
        elif key == "resolution":
            cfg.resolution = _parse_value(key, raw, lineno)
        elif key == "parameterization":
            if raw not in PARAMETERIZATIONS:
                raise ConfigError(
                    f"line {lineno}: unknown parameterization {raw!r} "
                    f"(choose from {sorted(PARAMETERIZATIONS)})")
            cfg.parameterization = raw
        elif key == "preconditioning":
            if raw not in ("on", "off"):
                raise ConfigError(
                    f"line {lineno}: preconditioning must be on or off")
            cfg.preconditioning = raw
        elif key == "bandz_mode":
            if raw not in ("multiply", "solve"):
                raise ConfigError(
                    f"line {lineno}: bandz_mode must be multiply or solve")
            cfg.bandz_mode = raw
        elif key in ("h", "t_final", "beta_rate"):
            setattr(cfg, key, _parse_value(key, raw, lineno))
        elif key in _MATERIAL_KEYS:
            seen_material[key] = (_parse_value(key, raw, lineno), lineno)
        elif key in _LBFGS_KEYS:
            cfg.lbfgs[key] = _parse_value(key, raw, lineno)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    if cfg.parameterization == "euler" and "penalty" in seen_material:
        _, lineno = seen_material["penalty"]
        raise ConfigError(
            f"line {lineno}: penalty applies to the quaternion unit-norm "
            "term and cannot be overridden in euler mode")
    cfg.material = {k: v for k, (v, _) in seen_material.items()}
    return cfg


def _dof_counts(spec, grid):
    layout = DofLayout.create(grid, spec.mode)
    return layout.num_free, grid.num_nodes


def _write_summary(path, cfg, spec, grid, reports, zero_wall):
    num_free, num_nodes = _dof_counts(spec, grid)
    lines = [
        f"scenario          {cfg.scenario}",
        f"resolution        {spec.d[0]}x{spec.d[1]}x{spec.d[2]}",
        f"parameterization  {cfg.parameterization}",
        f"preconditioning   {cfg.preconditioning}",
        f"free unknowns     {num_free}",
        f"nodes             {num_nodes}",
        "",
        f"{'step':>4} {'t':>6} {'iters (pred/corr)':>18} {'energy':>13} "
        f"{'gradnorm':>13} {'constraint':>13} {'wall_ms':>10}",
    ]
    for r in reports:
        wall = 0.0 if zero_wall else r.wall_ms
        lines.append(
            f"{r.step:>4} {r.t:>6.3f} "
            f"{str(r.pred_iters) + '/' + str(r.corr_iters):>18} "
            f"{r.energy:>13.5e} {r.gradnorm:>13.5e} "
            f"{r.constraint_violation:>13.5e} {wall:>10.1f}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def run_config(cfg, out_dir):
    """Execute one configuration and write all artifacts into out_dir.

    Returns the list of StepReports.  Raises SolverError on failure after
    writing whatever partial artifacts exist.
    """
    os.makedirs(out_dir, exist_ok=True)
    spec = cfg.to_scenario()
    grid = build_grid(spec.lengths, spec.d)

    steps_path = os.path.join(out_dir, "steps.csv")

    def on_step(step, state, hist, report, traces):
        for phase, trace in traces.items():
            trace.write_csv(
                os.path.join(out_dir, f"trace_step{step:03d}_{phase}.csv"),
                header="iter,energy,gradnorm")
        dump_fields(os.path.join(out_dir, f"fields_step{step:03d}.dat"),
                    grid, state, hist.kappa0)

    try:
        reports, state, hist, grid, _ = run_simulation(spec, on_step)
    except SolverError as exc:
        partial = getattr(exc, "partial_reports", [])
        _write_step_csv(steps_path, partial, cfg.reproducible)
        raise
    _write_step_csv(steps_path, reports, cfg.reproducible)
    _write_summary(os.path.join(out_dir, "summary.txt"), cfg, spec, grid,
                   reports, cfg.reproducible)
    return reports


def _write_step_csv(path, reports, zero_wall):
    with open(path, "w") as fh:
        fh.write(StepReport.csv_header() + "\n")
        for r in reports:
            fh.write(r.csv_line(zero_wall=zero_wall) + "\n")


def _load(path, reproducible):
    try:
        with open(path) as fh:
            cfg = parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    cfg.reproducible = reproducible
    return cfg


def _cmd_run(args):
    cfg = _load(args.config, args.reproducible)
    if args.seed is not None:
        np.random.seed(args.seed)
    reports = run_config(cfg, args.out)
    print(f"completed {len(reports)} step(s); artifacts in {args.out}")
    return 0


def _cmd_compare(args):
    rows = []
    for tag, path in (("A", args.config_a), ("B", args.config_b)):
        cfg = _load(path, args.reproducible)
        out = os.path.join(args.out, f"run_{tag}")
        reports = run_config(cfg, out)
        rows.append((tag, path, cfg, reports))
    table = [f"{'run':>4} {'config':<30} {'parameterization':<18} "
             f"{'avg iters':>10} {'total':>10} {'final energy':>14}"]
    for tag, path, cfg, reports in rows:
        iters = [r.total_iters for r in reports]
        table.append(
            f"{tag:>4} {os.path.basename(path):<30} "
            f"{cfg.parameterization:<18} "
            f"{sum(iters) / len(iters):>10.1f} {sum(iters):>10} "
            f"{reports[-1].energy:>14.5e}")
    text = "\n".join(table) + "\n"
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "compare.txt"), "w") as fh:
        fh.write(text)
    print(text, end="")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cosplast",
        description="Cosserat plasticity benchmark runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default="out")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=None)
    p_run.add_argument("--reproducible", action="store_true",
                       help="zero wall-clock fields for byte-identical reruns")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="run two configs side by side")
    p_cmp.add_argument("config_a")
    p_cmp.add_argument("config_b")
    p_cmp.add_argument("--out", required=True)
    p_cmp.add_argument("--reproducible", action="store_true")
    p_cmp.set_defaults(func=_cmd_compare)

    args = parser.parse_args(argv)
    if getattr(args, "threads", None):
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    try:
        return args.func(args)
    except (ConfigError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
