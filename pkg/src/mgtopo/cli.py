"""Command-line front end.

``python -m mgtopo run --preset ex1 --levels 4 --solver ipm --out out/``
writes ``density.pgm``, ``density.csv``, ``log.csv`` and ``summary.json``.
``python -m mgtopo compare a.yaml b.yaml`` runs two configurations of the
same problem and reports their costs and the distance between designs.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .fem import Problem, ProblemSpec, preset
from .ipm import IpmConfig, ipm_solve
from .oc import OcConfig, oc_solve, report_density
from .runlog import ConvergenceError

__all__ = ["RunConfig", "RunResult", "load_config", "run", "compare", "render_density", "main"]

SOLVERS = ("ipm", "oc", "doc", "aoc")


@dataclass
class RunConfig:
    """Everything needed to reproduce one optimizer run."""

    preset: str | None = "ex1"
    levels: int = 3
    solver: str = "ipm"
    linear: str = "mgcg"
    model: str | None = None
    tau_ip: float = 1e-8
    tau_oc: float = 1e-5
    cg_tol: float | None = None
    cg_tol_mode: str = "fixed"
    cg_stop: str = "auto"
    x_lower: float = 1e-9
    max_outer: int = 5000
    mg_sweeps: int = 4
    out: str | None = None
    seed: int = 0  # reserved, the algorithms are deterministic
    problem: dict = field(default_factory=dict)  # explicit ProblemSpec fields

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.linear not in ("mgcg", "direct"):
            raise ValueError(f"unknown linear solver {self.linear!r}")
        if self.model not in (None, "vts", "simp"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.model == "simp" and self.solver != "ipm":
            raise ValueError("the SIMP model is only available with the ipm solver")

    def problem_spec(self) -> ProblemSpec:
        extra = dict(self.problem)
        if self.model is not None:
            extra["model"] = self.model
        if self.preset is None:
            return ProblemSpec(levels=self.levels, **extra)
        return preset(self.preset, self.levels, **extra)

    def ipm_config(self) -> IpmConfig:
        return IpmConfig(tau_ip=self.tau_ip, cg_tol=self.cg_tol or 1e-2, cg_tol_mode=self.cg_tol_mode,
                         cg_stop=self.cg_stop, linear_solver=self.linear, mg_sweeps=self.mg_sweeps)

    def oc_config(self) -> OcConfig:
        return OcConfig(variant=self.solver, tau_oc=self.tau_oc, x_lower=self.x_lower,
                        cg_tol=self.cg_tol or 1e-4, max_outer=self.max_outer,
                        linear_solver=self.linear, mg_sweeps=self.mg_sweeps)


@dataclass
class RunResult:
    config: RunConfig
    x: np.ndarray | None
    log: object
    summary: dict
    ok: bool


def load_config(path) -> dict:
    """Read a flat key-value YAML file; dashes in keys become underscores."""
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping of keys to values")
    data = {str(k).replace("-", "_"): v for k, v in data.items()}
    known = {f.name for f in fields(RunConfig)}
    spec_keys = {f.name for f in fields(ProblemSpec)}
    problem = dict(data.pop("problem", None) or {})
    for key in list(data):
        if key not in known and key in spec_keys:
            problem[key] = data.pop(key)
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    if problem:
        data["problem"] = problem
    return data


def render_density(x, mesh, path, xbar):
    """Write `x` as an 8-bit binary graymap plus a CSV of the raw values.

    Pixel value is ``round(255 * x / xbar)``; the first image row is the top
    row of elements. The CSV goes next to `path` with suffix ``.csv``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (mesh.m,):
        raise ValueError(f"expected {mesh.m} densities, got {x.shape}")
    if np.any(x < 0) or np.any(x > xbar * (1 + 1e-12)):
        raise ValueError("densities outside [0, xbar]")
    grid = x.reshape(mesh.nx, mesh.ny).T[::-1]
    pixels = np.clip(np.rint(255.0 * grid / xbar), 0, 255).astype(np.uint8)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{mesh.nx} {mesh.ny}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
    ex, ey = np.divmod(np.arange(mesh.m), mesh.ny)
    np.savetxt(path.with_suffix(".csv"), np.column_stack([np.arange(mesh.m), ex, ey, x]),
               fmt=["%d", "%d", "%d", "%.17g"], delimiter=",", header="element,ex,ey,x", comments="")
    return pixels


def _write(out, problem, x, log, summary):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if x is not None:
        render_density(x, problem.mesh, out / "density.pgm", problem.xbar)
    if log is not None:
        log.to_csv(out / "log.csv")
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def run(config: RunConfig) -> RunResult:
    """Execute one configuration and write its artifacts when ``config.out`` is set."""
    spec = config.problem_spec()
    problem = Problem(spec)
    header = {"problem": spec.name, "levels": spec.levels, "variables": problem.n,
              "elements": problem.m, "solver": config.solver, "linear": config.linear,
              "model": spec.model}
    x, log, ok = None, None, True
    try:
        if config.solver == "ipm":
            state, log = ipm_solve(problem, config.ipm_config())
            x = state.x
        else:
            x_raw, log = oc_solve(problem, config.oc_config())
            x = report_density(x_raw, config.x_lower)
        summary = {**header, **log.summary()}
    except ConvergenceError as exc:
        ok, log = False, exc.log
        summary = {**header, **(log.summary() if log is not None else {}),
                   "status": "failed", "reason": str(exc)}
        if exc.state is not None:
            x = np.clip(exc.state.x, 0.0, problem.xbar)
    if config.out:
        _write(config.out, problem, x, log, summary)
    return RunResult(config, x, log, summary, ok)


def compare(config_a: RunConfig, config_b: RunConfig, jobs: int = 1) -> dict:
    """Run two configurations of one problem and compare costs and designs."""
    if config_a.problem_spec() != config_b.problem_spec():
        raise ValueError("configurations describe different problems")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=2) as pool:
            a, b = pool.map(run, [config_a, config_b])
    else:
        a, b = run(config_a), run(config_b)
    report = {}
    for tag, res in (("a", a), ("b", b)):
        s = res.summary
        report[tag] = {k: s.get(k) for k in ("solver", "linear", "status", "feval", "total_cg_iters",
                                              "avg_cg_per_solve", "objective", "x_min")}
    if a.x is not None and b.x is not None:
        diff = a.x - b.x
        report["diff_l2"] = float(np.linalg.norm(diff))
        report["diff_linf"] = float(np.abs(diff).max())
    return report


def _add_run_flags(p):
    p.add_argument("--preset", help="ex1, ex2, ex3 or ex4")
    p.add_argument("--config", help="flat key-value YAML file; flags override it")
    p.add_argument("--levels", type=int)
    p.add_argument("--solver", choices=SOLVERS)
    p.add_argument("--linear", choices=("mgcg", "direct"))
    p.add_argument("--model", choices=("vts", "simp"))
    p.add_argument("--tau-ip", type=float)
    p.add_argument("--tau-oc", type=float)
    p.add_argument("--cg-tol", type=float)
    p.add_argument("--cg-tol-mode", choices=("fixed", "decreasing"))
    p.add_argument("--cg-stop", choices=("auto", "relative", "product", "kkt"))
    p.add_argument("--x-lower", type=float)
    p.add_argument("--max-outer", type=int)
    p.add_argument("--mg-sweeps", type=int)
    p.add_argument("--out")


def _config_from_args(args) -> RunConfig:
    data = load_config(args.config) if args.config else {}
    for key in ("preset", "levels", "solver", "linear", "model", "tau_ip", "tau_oc", "cg_tol",
                "cg_tol_mode", "cg_stop", "x_lower", "max_outer", "mg_sweeps", "out"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    return RunConfig(**data)


def build_parser():
    parser = argparse.ArgumentParser(prog="mgtopo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one optimization")
    _add_run_flags(p_run)
    p_cmp = sub.add_parser("compare", help="compare two configurations of one problem")
    p_cmp.add_argument("config_a")
    p_cmp.add_argument("config_b")
    p_cmp.add_argument("--jobs", type=int, default=1)
    p_cmp.add_argument("--out", help="write the report as JSON to this file")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            result = run(_config_from_args(args))
            s = result.summary
            print(f"{s['solver']}: status={s['status']} feval={s.get('feval')} "
                  f"cg={s.get('total_cg_iters')} objective={s.get('objective'):.10g}")
            if not result.ok:
                print(f"error: {s['reason']}", file=sys.stderr)
                return 2
            return 0
        report = compare(RunConfig(**load_config(args.config_a)), RunConfig(**load_config(args.config_b)),
                         args.jobs)
        text = json.dumps(report, indent=2, default=float)
        print(text)
        if args.out:
            Path(args.out).write_text(text + "\n")
        return 0
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
