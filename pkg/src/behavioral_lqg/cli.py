"""Command-line experiment runner.

    behavioral-lqg solve    --config cfg.json --out results/
    behavioral-lqg simulate --config cfg.json --out results/ --seed 3
    behavioral-lqg pg       --config cfg.json --out results/
    behavioral-lqg imitate  --config cfg.json --out results/

Exit codes: 0 success, 2 standing assumptions violated, 3 numerical failure
(unstable loop, solver or line-search failure), 4 malformed input.
"""

import argparse
import csv
import json
import sys as _sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from .behavioral import (RankDeficiencyError, behavioral_state, current_output, gain_projector,
                         lift_system, lifted_rollout, solve_behavioral_lqg, sparsity_partition,
                         staticize)
from .classical_lqg import AssumptionError, lqg_design
from .imitation import (DemoFormatError, ExpertData, assemble_expert_data,
                        expert_log_from_trajectory, learn_gain, load_expert_csv, samples_used,
                        subspace_id_samples, sufficient_samples, validate_by_rollout)
from .linalg import ConvergenceError, UnstableError
from .lti_system import LqgWeights, LtiSystem, simulate, validate_assumptions
from .policy_opt import (ArmijoParams, LineSearchError, grad_descent_behavioral,
                         grad_descent_dynamic, stabilizing_compensator)

EXIT_OK, EXIT_ASSUMPTION, EXIT_NUMERICAL, EXIT_INPUT = 0, 2, 3, 4

_matrix = {"oneOf": [{"type": "number"},
                     {"type": "array", "items": {"oneOf": [{"type": "number"},
                                                           {"type": "array",
                                                            "items": {"type": "number"}}]}}]}
_pos_int = {"type": "integer", "minimum": 1}
_seed = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SCHEMA = _obj({
    "system": _obj({
        "A": _matrix, "B": _matrix, "C": _matrix, "Q_w": _matrix, "R_v": _matrix,
        "Sigma0": _matrix,
        "dims": _obj({"n": _pos_int, "m": _pos_int, "p": _pos_int}),
    }, required=("A", "B", "C", "Q_w", "R_v")),
    "weights": _obj({"Q_x": _matrix, "R_u": _matrix}, required=("Q_x", "R_u")),
    "experiment": _obj({
        "seed": _seed,
        "horizon": _pos_int,
        "controller": {"enum": ["none", "classical", "behavioral"]},
        "mode": {"enum": ["behavioral", "dynamic", "both"]},
        "seeds": {"type": "array", "items": _seed, "minItems": 1},
        "num_seeds": _pos_int,
        "armijo": _obj({"alpha0": {"type": "number"}, "beta": {"type": "number"},
                        "sigma": {"type": "number"}, "max_backtracks": _pos_int}),
        "max_iters": {"type": "integer", "minimum": 0},
        "grad_tol": {"type": "number", "minimum": 0},
        "eig_range": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "init": {"enum": ["pole_placement", "optimal"]},
        "freeze_k2": {"type": "boolean"},
        "workers": _pos_int,
        "demo": _obj({
            "source": {"enum": ["generate", "csv", "matrices"]},
            "path": {"type": "string"},
            "t0": {"type": "integer", "minimum": 0},
            "k": _pos_int,
            "horizon": _pos_int,
            "U_N": _matrix, "Y_N": _matrix,
        }),
        "validation": _obj({"horizon": _pos_int, "seed": _seed}),
    }),
    "output": _obj({"directory": {"type": "string"}, "prefix": {"type": "string"}}),
}, required=("system", "weights"))


class ConfigError(ValueError):
    pass


def validate_config(cfg):
    """Schema check; the message names the offending path, e.g. ``experiment.armijo.gamma``."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if not errors:
        return cfg
    err = errors[0]
    path = ".".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        keys = [f"{path}.{k}" if path != "<root>" else k for k in extra]
        raise ConfigError(f"unknown config key(s): {', '.join(keys)}")
    raise ConfigError(f"invalid config at {path}: {err.message}")


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return validate_config(cfg)


def build_problem(cfg):
    s, w = cfg["system"], cfg["weights"]
    try:
        sys = LtiSystem(A=s["A"], B=s["B"], C=s["C"], Qw=s["Q_w"], Rv=s["R_v"],
                        Sigma0=s.get("Sigma0"))
        weights = LqgWeights(Qx=w["Q_x"], Ru=w["R_u"])
        weights.check(sys)
    except ValueError as exc:
        raise ConfigError(f"invalid system/weights: {exc}") from None
    dims = s.get("dims")
    if dims and (dims.get("n", sys.n), dims.get("m", sys.m), dims.get("p", sys.p)) != (sys.n, sys.m, sys.p):
        raise ConfigError(f"system.dims {dims} disagrees with the matrices "
                          f"(n={sys.n}, m={sys.m}, p={sys.p})")
    return sys, weights


def sig6(x):
    """Round to 6 significant digits, recursively through lists and dicts."""
    if isinstance(x, dict):
        return {k: sig6(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [sig6(v) for v in x]
    if isinstance(x, np.ndarray):
        return sig6(x.tolist())
    if isinstance(x, (float, np.floating)):
        return float(f"{float(x):.6g}") if np.isfinite(x) else repr(float(x))
    return x


class Output:
    def __init__(self, directory, prefix=""):
        self.dir = Path(directory)
        self.prefix = prefix
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name):
        p = self.dir / f"{self.prefix}{name}"
        self.files.append(p)
        return p

    def json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(obj, fh, indent=2)
            fh.write("\n")

    def summary(self, title, obj):
        """Write summary.json (6 significant digits) and echo it to stdout."""
        rounded = sig6(obj)
        self.json("summary.json", rounded)
        print(title)
        for key, value in rounded.items():
            print(f"  {key}: {json.dumps(value)}")


def _check_assumptions(sys, weights):
    report = validate_assumptions(sys, weights)
    if not report.ok:
        raise AssumptionError("; ".join(report.failures()))


# --- subcommands ----------------------------------------------------------

def cmd_solve(cfg, out):
    """Closed-form behavioral LQG gain plus the classical design it comes from."""
    sys, weights = build_problem(cfg)
    _check_assumptions(sys, weights)
    t = time.perf_counter()
    design = lqg_design(sys, weights)
    gain, pair = solve_behavioral_lqg(sys, weights)
    bsys = lift_system(sys, weights)
    elapsed = time.perf_counter() - t
    part = sparsity_partition(gain)

    out.json("gain.json", {**gain.to_dict(), "K2_is_zero": part.k2_is_zero})
    out.json("riccati.json", {
        "M": pair.M.tolist(), "P": pair.P.tolist(),
        "residual_M": pair.residual_M, "residual_P": pair.residual_P,
        "stationarity": pair.stationarity, "cost": pair.cost,
    })
    ctrl = design.controller
    out.json("classical.json", {
        "K_lqr": design.K_lqr.tolist(), "K_kf": design.K_kf.tolist(),
        "X": design.control.X.tolist(), "P": design.filter.X.tolist(),
        **ctrl.to_dict(),
        "Au": bsys.Au.tolist(), "Ay": bsys.Ay.tolist(), "Aw": bsys.Aw.tolist(),
        "Av": bsys.Av.tolist(),
    })
    out.summary("solve", {
        "dims": {"n": sys.n, "m": sys.m, "p": sys.p, "dz": bsys.dz, "dy": bsys.dy},
        "K": gain.K, "K_lqr": design.K_lqr, "K_kf": design.K_kf,
        "E": ctrl.E, "F": ctrl.F, "G": ctrl.G, "H": ctrl.H,
        "cost": pair.cost, "residual_M": pair.residual_M, "residual_P": pair.residual_P,
        "stationarity": pair.stationarity, "seconds": elapsed,
    })
    return EXIT_OK


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(vals):
    return [repr(float(v)) for v in vals]


def cmd_simulate(cfg, out):
    """State-space loop and lifted loop under one noise realisation."""
    sys, weights = build_problem(cfg)
    exp = cfg.get("experiment", {})
    T, seed = exp.get("horizon", 50), exp.get("seed", 0)
    choice = exp.get("controller", "behavioral")
    n, m, p = sys.n, sys.m, sys.p

    gain = None
    if choice == "none":
        plant_ctrl, match = None, False
    else:
        _check_assumptions(sys, weights)
        gain, _ = solve_behavioral_lqg(sys, weights)
        if choice == "classical":
            plant_ctrl, match = lqg_design(sys, weights).controller, True
        else:
            plant_ctrl, match = gain, False
    traj = simulate(sys, plant_ctrl, T=T, seed=seed, match_behavioral=match)
    if choice != "none" and not np.all(np.isfinite(traj.x)):
        raise UnstableError("closed-loop rollout diverged")
    traj.to_csv(out.path("trajectory_state_space.csv"))

    bsys = lift_system(sys, weights)
    rows, dev_rows = [], []
    max_dev = 0.0
    if T >= n:
        z0, _ = behavioral_state(traj, n)
        z, u = lifted_rollout(bsys, z0, traj.w[n:], traj.v[n + 1:], gain)
        y = current_output(bsys, z)
        for k in range(z.shape[0]):
            t = n + k
            u_cells = _fmt(u[k]) if k < u.shape[0] else [""] * m
            rows.append([t] + u_cells + _fmt(y[k]) + _fmt(z[k] @ bsys.H.T))
            d = traj.y[t] - y[k]
            dmax = float(np.abs(d).max())
            max_dev = max(max_dev, dmax)
            dev_rows.append([t] + _fmt(d) + [repr(dmax)])
    _write_rows(out.path("trajectory_behavioral.csv"),
                ["t"] + [f"u{i + 1}" for i in range(m)] + [f"y{i + 1}" for i in range(p)]
                + [f"xhat{i + 1}" for i in range(n)], rows)
    _write_rows(out.path("deviation.csv"),
                ["t"] + [f"dy{i + 1}" for i in range(p)] + ["max_abs"], dev_rows)
    peak = float(np.abs(traj.y).max())
    out.summary("simulate", {"controller": choice, "T": T, "seed": seed,
                             "first_behavioral_step": n, "max_output_deviation": max_dev,
                             "max_relative_deviation": max_dev / peak if peak > 0 else 0.0})
    return EXIT_OK


def _pg_seeds(exp):
    if "seeds" in exp:
        seeds = list(exp["seeds"])
        if "_seed_override" in exp:
            seeds = [exp["_seed_override"] + i for i in range(len(seeds))]
        return seeds
    base = exp.get("_seed_override", exp.get("seed", 0))
    return [base + i for i in range(exp.get("num_seeds", 3))]


def _pg_run(args):
    """One (mode, seed) descent; module-level so it can run in a worker process."""
    cfg, mode, seed, reference = args
    sys, weights = build_problem(cfg)
    exp = cfg.get("experiment", {})
    params = ArmijoParams(**exp.get("armijo", {}))
    lo, hi = exp.get("eig_range", [0.45, 0.92])
    max_iters, grad_tol = exp.get("max_iters", 15000), exp.get("grad_tol", 1e-8)
    if exp.get("init", "pole_placement") == "optimal":
        ctrl0 = lqg_design(sys, weights).controller
    else:
        ctrl0 = stabilizing_compensator(sys, lo, hi, seed)
    t = time.perf_counter()
    try:
        if mode == "behavioral":
            bsys = lift_system(sys, weights)
            trace = grad_descent_behavioral(bsys, staticize(ctrl0, sys), weights, params,
                                            max_iters, grad_tol,
                                            freeze_k2=exp.get("freeze_k2", True),
                                            reference_cost=reference)
            final = trace.final.K
        else:
            trace = grad_descent_dynamic(sys, weights, ctrl0, params, max_iters, grad_tol,
                                         reference_cost=reference)
            final = trace.final.to_dict()
        error = None
    except LineSearchError as exc:
        trace, error = exc.trace, str(exc)
        final = None
    return mode, seed, trace, final, error, time.perf_counter() - t


def cmd_pg(cfg, out):
    """Gradient descent on the behavioral gain and/or the compensator matrices."""
    sys, weights = build_problem(cfg)
    _check_assumptions(sys, weights)
    exp = cfg.get("experiment", {})
    try:
        ArmijoParams(**exp.get("armijo", {}))
    except ValueError as exc:
        raise ConfigError(f"experiment.armijo: {exc}") from None
    lo, hi = exp.get("eig_range", [0.45, 0.92])
    if not 0 <= lo < hi < 1:
        raise ConfigError("experiment.eig_range must satisfy 0 <= low < high < 1")
    mode = exp.get("mode", "both")
    modes = ["behavioral", "dynamic"] if mode == "both" else [mode]
    seeds = _pg_seeds(exp)
    gain, pair = solve_behavioral_lqg(sys, weights)
    jobs = [(cfg, md, sd, pair.cost) for md in modes for sd in seeds]
    workers = min(exp.get("workers", 1), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_pg_run, jobs))
    else:
        results = [_pg_run(j) for j in jobs]

    runs, failed = [], []
    bsys = lift_system(sys, weights)
    proj = gain_projector(bsys, pair.P)
    for md, sd, trace, final, error, secs in results:
        trace.to_csv(out.path(f"trace_{md}_seed{sd}.csv"))
        run = {"mode": md, "seed": sd, "status": trace.status, "iterations": trace.iterations,
               "final_cost": trace.costs[-1], "final_gap": trace.costs[-1] - pair.cost,
               "final_grad_norm": trace.grad_norms[-1], "seconds": secs}
        if md == "behavioral" and final is not None:
            run["K"] = final
            run["projected_error"] = float(np.abs((np.asarray(final) - gain.K) @ proj).max())
        elif final is not None:
            run["controller"] = final
        if error:
            run["error"] = error
            failed.append(f"{md} seed {sd}: {error}")
        runs.append(run)
    out.summary("pg", {"reference_cost": pair.cost, "K_opt": gain.K, "runs": runs})
    if failed:
        raise LineSearchError("; ".join(failed))
    return EXIT_OK


def cmd_imitate(cfg, out):
    """Least-squares imitation of the optimal behavioral gain."""
    sys, weights = build_problem(cfg)
    exp = cfg.get("experiment", {})
    demo = exp.get("demo", {})
    source = demo.get("source", "generate")
    n, m, p = sys.n, sys.m, sys.p
    _check_assumptions(sys, weights)
    reference, _ = solve_behavioral_lqg(sys, weights)

    if source == "matrices":
        if "U_N" not in demo or "Y_N" not in demo:
            raise ConfigError("experiment.demo: source 'matrices' needs U_N and Y_N")
        U = np.atleast_2d(np.asarray(demo["U_N"], dtype=float))
        try:
            data = ExpertData(U_N=U, Y_N=demo["Y_N"], t0=demo.get("t0", n), k=U.shape[1])
        except ValueError as exc:
            raise ConfigError(f"experiment.demo: {exc}") from None
    else:
        t0 = demo.get("t0", n)
        k = demo.get("k", n * m + n * p)
        if source == "csv":
            if "path" not in demo:
                raise ConfigError("experiment.demo: source 'csv' needs a path")
            log = load_expert_csv(demo["path"], m, p)
        else:
            seed = exp.get("seed", 0)
            horizon = demo.get("horizon", t0 + k)
            log = expert_log_from_trajectory(simulate(sys, reference, T=horizon, seed=seed))
        try:
            data = assemble_expert_data(log, n, t0, k)
        except ValueError as exc:
            raise DemoFormatError(f"demonstration: {exc}") from None

    learned = learn_gain(data, sys)
    val = exp.get("validation", {})
    report = validate_by_rollout(sys, learned.gain, reference, val.get("horizon", 100),
                                 val.get("seed", exp.get("seed", 0)), weights)
    out.json("learned_gain.json", {**learned.gain.to_dict(), "rank_Y_N": learned.rank,
                                   "expected_rank": learned.expected_rank,
                                   "input_rank": learned.input_rank})
    required = sufficient_samples(n, m, p)
    used = samples_used(n, data.k)
    sufficiency = {"N_required": required, "N_used": used, "k": data.k,
                   "subspace_id_N": subspace_id_samples(n, m, p),
                   "sufficient": used >= required, "rank_Y_N": learned.rank,
                   "expected_rank": learned.expected_rank}
    out.json("sufficiency.json", sufficiency)
    out.json("rollout_report.json", report.to_dict())
    out.summary("imitate", {"source": source, "K_learned": learned.gain.K,
                            "K_reference": reference.K, **sufficiency,
                            "rollout": report.to_dict()})
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "pg": cmd_pg, "imitate": cmd_imitate}


def make_parser():
    parser = argparse.ArgumentParser(prog="behavioral-lqg",
                                     description="LQG through static behavioral feedback")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--out", help="output directory (overrides output.directory)")
        sp.add_argument("--seed", type=int, help="seed override")
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        exp = cfg.setdefault("experiment", {})
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            exp["seed"] = args.seed
            exp["_seed_override"] = args.seed
        outcfg = cfg.get("output", {})
        directory = args.out or outcfg.get("directory") or "."
        out = Output(directory, outcfg.get("prefix", ""))
        return COMMANDS[args.command](cfg, out)
    except AssumptionError as exc:
        print(f"error: assumption violated: {exc}", file=_sys.stderr)
        return EXIT_ASSUMPTION
    except (ConfigError, DemoFormatError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_INPUT
    except (UnstableError, ConvergenceError, LineSearchError, RankDeficiencyError,
            np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=_sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    _sys.exit(main())
