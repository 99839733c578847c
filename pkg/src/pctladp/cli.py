"""Batch driver: exact and approximate solves, PCTL checks, and the two gridworld studies.

Every CSV is written with a header row and a ``<name>.meta.json`` sidecar
holding the config hash, the seed and library versions.  Outputs depend only
on the config and the seed.

Exit codes: 0 success, 2 input error, 3 solver non-convergence,
4 constraint-check failure, 1 anything else raised by the library.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import gridworld as gw
from .adp import GgkBasis, Problem, SamplerConfig, SolverConfig, outer_solve
from .errors import ConstraintViolation, ConvergenceError, InputError, PctlAdpError
from .exact import policy_from_value, q_from_value, value_iteration
from .experiments import (
    EXPERIMENT2_FORMULA,
    grid_centers,
    learning_curves,
    run_experiment1,
    run_experiment2,
)
from .mdp import Mdp, TabularPolicy, load_mdp
from .pctl import compile_all, empirical_check, parse

log = logging.getLogger("pctladp")

MODES = ("solve-exact", "solve-adp", "check-pctl", "experiment-1", "experiment-2")


@dataclass
class RunConfig:
    mode: str
    mdp: str | None = None
    grid: str | None = None
    pctl: str | None = None
    seed: int = 0
    out: str = "out"
    # exact solver
    tau: float = 5.0
    gamma: float | None = None
    tol: float = 1e-8
    # compiler
    epsilon: float = 0.01
    penalty: float | None = None
    # approximate solver
    b: float = 1.1
    rho: float = 0.25
    eta1: float = 0.1
    eta2: float | None = None
    nu1: float = 10.0
    nu2: float = 10.0
    lam0: float = 0.0
    xi0: float = 0.0
    eps0: float = 0.5
    stop_rule: str = "step"
    eta_rule: str = "factorial"
    max_inner: int = 500
    max_outer: int = 10
    baseline: bool = False
    sigma: float = 5.0
    centers: list = field(default_factory=list)
    # samplers
    n_onpolicy: int = 30
    len_onpolicy: int = 6
    n_chance: int = 100
    len_chance: int = 15
    # checks and studies
    policy: str = "softmax"
    n_check: int = 20000
    repeats: int = 10
    deltas: list = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3])

    def check(self) -> None:
        if self.mode not in MODES:
            raise InputError(f"unknown mode {self.mode!r}")
        for name in ("mdp", "grid", "pctl"):
            path = getattr(self, name)
            if path is not None and not (name == "grid" and path in ("experiment1", "experiment2")):
                if not Path(path).is_file():
                    raise InputError(f"--{name}: no such file {path}")
        if self.mode in ("solve-exact", "solve-adp", "check-pctl") and (self.mdp is None) == (self.grid is None):
            raise InputError(f"{self.mode} needs exactly one of --mdp or --grid")
        if self.mode == "check-pctl" and self.pctl is None:
            raise InputError("check-pctl needs --pctl")
        if self.tau < 0 or not 0 < self.epsilon < 1 or self.tol <= 0:
            raise InputError("need tau >= 0, 0 < epsilon < 1 and tol > 0")
        if self.gamma is not None and not 0 < self.gamma <= 1:
            raise InputError("gamma must lie in (0, 1]")
        if self.policy not in ("softmax", "uniform"):
            raise InputError("--policy must be 'softmax' or 'uniform'")
        if self.n_check < 1 or self.repeats < 1:
            raise InputError("n_check and repeats must be >= 1")
        if self.mode in ("solve-adp", "experiment-1", "experiment-2"):
            self.solver().check()
            self.sampler().check()

    def solver(self) -> SolverConfig:
        return SolverConfig(
            tau=self.tau,
            b=self.b,
            rho=self.rho,
            eta1=self.eta1,
            eta2=self.eta2,
            nu1=self.nu1,
            nu2=self.nu2,
            lam0=self.lam0,
            xi0=self.xi0,
            eps0=self.eps0,
            stop_rule=self.stop_rule,
            eta_rule=self.eta_rule,
            max_inner=self.max_inner,
            max_outer=self.max_outer,
            baseline=self.baseline,
        )

    def sampler(self) -> SamplerConfig:
        return SamplerConfig(self.n_onpolicy, self.len_onpolicy, self.n_chance, self.len_chance)

    def digest(self) -> str:
        data = {k: v for k, v in asdict(self).items() if k != "out"}
        text = json.dumps(data, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# output helpers


class Writer:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = Path(cfg.out)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def meta(self) -> dict:
        return {
            "config_hash": self.cfg.digest(),
            "seed": self.cfg.seed,
            "mode": self.cfg.mode,
            "versions": {
                "pctladp": __version__,
                "numpy": np.__version__,
                "python": platform.python_version(),
            },
        }

    def csv(self, name: str, header, rows) -> Path:
        path = self.root / name
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(x) for x in row])
        self.json(name.rsplit(".", 1)[0] + ".meta.json", {**self.meta(), "file": name, "columns": list(header)})
        self.files.append(name)
        return path

    def json(self, name: str, data) -> Path:
        path = self.root / name
        path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n")
        return path


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, (set, frozenset)):
        return sorted(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


# ---------------------------------------------------------------------------
# inputs


def _grid_config(spec: str) -> gw.GridConfig:
    if spec == "experiment1":
        return gw.experiment1_config()
    if spec == "experiment2":
        return gw.experiment2_config()
    try:
        data = json.loads(Path(spec).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{spec}:{exc.lineno}: {exc.msg}") from None
    return gw.GridConfig.from_dict(data)


def _load(cfg: RunConfig) -> tuple[Mdp, gw.GridConfig | None]:
    if cfg.grid is not None:
        grid = _grid_config(cfg.grid)
        mdp = gw.build(grid)
    else:
        grid, mdp = None, load_mdp(cfg.mdp)
    if cfg.gamma is not None:
        mdp = mdp.replace(gamma=cfg.gamma)
    return mdp, grid


def _read_pctl(path: str) -> str:
    text = Path(path).read_text()
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    formula = " & ".join(f"({ln})" for ln in lines if ln)
    if not formula:
        raise InputError(f"{path}: no formula found")
    return formula


def _centers(cfg: RunConfig, mdp: Mdp, grid) -> list[int]:
    if cfg.centers:
        idx = {n: i for i, n in enumerate(mdp.state_names)}
        try:
            return [idx[str(c)] for c in cfg.centers]
        except KeyError as exc:
            raise InputError(f"unknown center state {exc}") from None
    if grid is not None:
        return grid_centers(grid)
    return list(range(mdp.n_states))


# ---------------------------------------------------------------------------
# modes


def solve_exact(cfg: RunConfig, out: Writer) -> int:
    mdp, _ = _load(cfg)
    vt = value_iteration(mdp, cfg.tau, tol=cfg.tol)
    q = q_from_value(vt.values, mdp)
    pol = policy_from_value(vt.values, mdp, cfg.tau)
    names = mdp.state_names
    out.csv("value.csv", ["state", "name", "value"], ((s, names[s], vt.values[s]) for s in range(mdp.n_states)))
    out.csv("q.csv", ["state", "name", *mdp.action_names], ((s, names[s], *q[s]) for s in range(mdp.n_states)))
    out.csv("policy.csv", ["state", "name", *mdp.action_names], ((s, names[s], *pol.probs[s]) for s in range(mdp.n_states)))
    out.json("summary.json", {"iterations": vt.iterations, "residual": vt.residual, "tau": cfg.tau})
    return 0


def solve_adp(cfg: RunConfig, out: Writer) -> int:
    mdp, grid = _load(cfg)
    constraints = []
    if cfg.pctl is not None:
        constraints = compile_all(parse(_read_pctl(cfg.pctl)), mdp, epsilon=cfg.epsilon, penalty=cfg.penalty)
    basis = GgkBasis.for_mdp(mdp, _centers(cfg, mdp, grid), cfg.sigma)
    v_star = value_iteration(mdp, cfg.tau, tol=cfg.tol).values if cfg.tau > 0 else None
    problem = Problem(mdp, basis, constraints, tau=cfg.tau, reference=v_star)
    result = outer_solve(problem, cfg.solver(), cfg.sampler(), seed=cfg.seed)
    _write_trace(out, "trace.csv", result)
    ev = problem.evaluate(result.theta)
    cols = ["state", "name", "value", "bellman_gap"] + (["v_star"] if v_star is not None else [])
    rows = (
        (s, mdp.state_names[s], ev.V[s], ev.g[s], *([v_star[s]] if v_star is not None else []))
        for s in range(mdp.n_states)
    )
    out.csv("value.csv", cols, rows)
    out.json("theta.json", {"theta": result.theta, "centers": basis.centers, "sigma": cfg.sigma,
                            "converged": result.converged, "outer_iterations": len(result.trace)})
    if not result.converged:
        raise ConvergenceError(f"no convergence within {cfg.max_outer} outer iterations (partial trace written)")
    return 0


def _write_trace(out: Writer, name: str, result) -> None:
    header = ["k", "inner_iters", "objective", "mean_Bg", "max_Bg", "max_Bl", "lambda", "xi", "nu1", "nu2",
              "eta1", "theta_norm"]
    rows = [[r[h] if h != "xi" else ";".join(repr(float(x)) for x in r["xi"]) for h in header] for r in result.trace]
    out.csv(name, header, rows)
    out.json(name.replace(".csv", "_theta.json"), [{"k": r["k"], "theta": r["theta"]} for r in result.trace])


def check_pctl(cfg: RunConfig, out: Writer) -> int:
    mdp, _ = _load(cfg)
    if cfg.policy == "uniform":
        policy = TabularPolicy.uniform(mdp)
    else:
        policy = policy_from_value(value_iteration(mdp, cfg.tau, tol=cfg.tol).values, mdp, cfg.tau)
    formula = parse(_read_pctl(cfg.pctl))
    constraints = compile_all(formula, mdp, epsilon=cfg.epsilon, penalty=cfg.penalty)
    rows, ok = [], True
    per_state = max(1, cfg.n_check)
    for i, c in enumerate(constraints):
        res = empirical_check(c, policy, per_state, rng_seed=cfg.seed + i)
        ok &= res.verdict
        for s in sorted(res.satisfaction):
            rows.append((i, s, mdp.state_names[s], res.satisfaction[s], res.violation[s], c.beta, res.horizon,
                         res.verdict))
    out.csv("check.csv", ["constraint", "state", "name", "satisfaction", "violation", "beta", "horizon", "verdict"],
            rows)
    out.json("constraints.json", [c.to_dict(mdp) for c in constraints])
    out.json("summary.json", {"verdict": bool(ok), "formula": _read_pctl(cfg.pctl)})
    print(f"verdict: {'satisfied' if ok else 'violated'}")
    if not ok:
        raise ConstraintViolation("the policy violates the PCTL constraint on the sampled paths")
    return 0


def experiment_1(cfg: RunConfig, out: Writer) -> int:
    grid = _grid_config(cfg.grid or "experiment1")
    runs = [
        run_experiment1(seed=cfg.seed + r, config=grid, solver=cfg.solver(), sampler=cfg.sampler(), sigma=cfg.sigma)
        for r in range(cfg.repeats)
    ]
    first = runs[0]
    cells = gw.cells(grid)
    out.csv("value_surface.csv", ["x", "y", "v_adp", "v_star"],
            ((x, y, first.values[s], first.v_star[s]) for s, (x, y) in enumerate(cells)))
    out.csv("learning_curve.csv", ["iteration", "mean", "min", "max", "ground_truth"],
            ((int(row[0]), *row[1:]) for row in learning_curves(runs)))
    out.csv("error_visitation.csv", ["x", "y", "error", "visitation"],
            ((x, y, first.values[s] - first.v_star[s], first.c_hat[s]) for s, (x, y) in enumerate(cells)))
    _write_trace(out, "trace.csv", first.result)
    out.csv("runs.csv", ["seed", "outer_iterations", "converged", "max_hinge_gap", "objective", "ground_truth",
                         "error_visitation_weighted", "error_uniform"],
            ((r.seed, len(r.result.trace), r.result.converged, r.max_hinge_gap, r.objective, r.reference,
              r.error_weighted, r.error_uniform) for r in runs))
    return 0


def experiment_2(cfg: RunConfig, out: Writer) -> int:
    grid = _grid_config(cfg.grid or "experiment2")
    rows = []
    for i, delta in enumerate(cfg.deltas):
        run = run_experiment2(delta, seed=cfg.seed, n_check=cfg.n_check, config=grid, solver=cfg.solver(),
                              sampler=cfg.sampler(), sigma=cfg.sigma)
        rows.append((delta, run.satisfying, run.n_paths, run.fraction, run.verdict, len(run.result.trace),
                     run.result.converged))
        _write_trace(out, f"trace_delta{i}.csv", run.result)
    out.csv("satisfaction_table.csv", ["delta", "satisfying_paths", "paths", "fraction", "verdict",
                                       "outer_iterations", "converged"], rows)
    out.json("formula.json", {"template": EXPERIMENT2_FORMULA, "deltas": cfg.deltas})
    return 0


HANDLERS = {
    "solve-exact": solve_exact,
    "solve-adp": solve_adp,
    "check-pctl": check_pctl,
    "experiment-1": experiment_1,
    "experiment-2": experiment_2,
}

# the two studies use the paper's penalty for the chance constraint unless told otherwise
MODE_DEFAULTS = {"experiment-2": {"nu2": 500.0}}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pctladp", description=__doc__.split("\n\n")[0])
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--mdp", help="MDP JSON file")
    p.add_argument("--grid", help="grid config JSON, or 'experiment1' / 'experiment2'")
    p.add_argument("--pctl", help="file holding a PCTL formula (one per line, conjoined)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="JSON file; its keys override command-line flags")
    p.add_argument("-v", "--verbose", action="store_true")
    defaults = RunConfig(mode="solve-exact")
    for f in fields(RunConfig):
        if f.name in ("mode", "mdp", "grid", "pctl", "seed", "out"):
            continue
        flag = "--" + f.name.replace("_", "-")
        value = getattr(defaults, f.name)
        if isinstance(value, bool):
            p.add_argument(flag, action=argparse.BooleanOptionalAction, default=None)
        elif isinstance(value, list):
            p.add_argument(flag, nargs="+", default=None)
        else:
            kind = type(value) if value is not None else float
            p.add_argument(flag, type=kind, default=None, help=f"default {value}")
    return p


def config_from_args(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    values = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "verbose")}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise InputError(f"--config: no such file {path}")
        try:
            overrides = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{exc.lineno}: {exc.msg}") from None
        known = {f.name for f in fields(RunConfig)}
        unknown = set(overrides) - known
        if unknown:
            raise InputError(f"{path}: unknown keys {sorted(unknown)}")
        values.update(overrides)
    merged = {**MODE_DEFAULTS.get(values["mode"], {}), **values}
    if "deltas" in merged:
        merged["deltas"] = [float(d) for d in merged["deltas"]]
    cfg = RunConfig(**merged)
    cfg.check()
    return cfg


def run(cfg: RunConfig) -> int:
    out = Writer(cfg)
    return HANDLERS[cfg.mode](cfg, out)


def main(argv=None) -> int:
    verbose = argv is not None and ("-v" in argv or "--verbose" in argv) or "-v" in sys.argv or "--verbose" in sys.argv
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return run(config_from_args(argv))
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ConvergenceError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ConstraintViolation as exc:
        print(f"constraint violated: {exc}", file=sys.stderr)
        return exc.exit_code
    except PctlAdpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
