"""Batch front end: ``stewart-stack <command> --config run.json --out results/``.

Commands
--------
solve      optimal pose per target
feasible   ``feasible_count`` unoptimized poses per target
compare    optimal vs feasible poses under shared perturbations (table1.csv)
perturb    perturbation samples for configured poses or optimal solutions
linearity  predicted vs observed covariance per noise level (table2.csv)
sweep      FN ratio and median ratio over a target grid (sweep.csv)

Exit status is 0 on full success, 1 when some computation failed (partial
results are still written) and 2 for configuration errors (nothing written).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .config import ConfigError, load_config
from .montecarlo import (
    BLOCK_SIZE,
    RNG_NAME,
    NoiseSpec,
    compute_stats,
    f_factor,
    fn_vs_median_regression,
    get_n_perturbations,
    predicted_covariance_for,
)
from .solver import SolveError, solve_multiple, solve_optimal

COMMANDS = ("solve", "feasible", "compare", "perturb", "linearity", "sweep")
SOLVER_RNG = "numpy.PCG64(SeedSequence([rng_seed, attempt]))"


@dataclass
class TargetSolution:
    target: object
    optimal: object = None
    feasible: list = field(default_factory=list)
    error: dict | None = None

    @property
    def ok(self):
        return self.error is None

    def poses(self):
        return [self.optimal.state] + [f.state for f in self.feasible]

    def labels(self):
        return ["optimal"] + [f"nonopt{j + 1}" for j in range(len(self.feasible))]

    def to_dict(self):
        t = self.target
        return {
            "target": {"rho": t.rho, "z": t.z, "theta": t.theta, "phi": t.phi},
            "optimal": self.optimal.to_dict() if self.optimal else None,
            "feasible": [f.to_dict() for f in self.feasible],
            "error": self.error,
        }


def _error_record(exc):
    best = getattr(exc, "result", None)
    return {"type": type(exc).__name__, "message": str(exc), "best": best.to_dict() if best else None}


def _pmap(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _solve_pair(cfg, target, feasible_count):
    """Feasible poses first, then the optimum warm-started from them too."""
    sol = TargetSolution(target)
    try:
        if feasible_count:
            sol.feasible = solve_multiple(target, cfg.n, cfg.geometry, cfg.solver, feasible_count)
        sol.optimal = solve_optimal(target, cfg.n, cfg.geometry, cfg.solver, [f.state for f in sol.feasible])
    except SolveError as exc:
        sol.error = _error_record(exc)
    return sol


def _bundle(cfg, command):
    return {
        "tool": {"name": "stewart_stack", "version": __version__, "kernels": BACKEND},
        "command": command,
        "rng": {"solver": SOLVER_RNG, "noise": RNG_NAME, "noise_block_size": BLOCK_SIZE},
        "config": cfg.to_dict(),
    }


def _require_targets(cfg):
    if not cfg.targets:
        raise ConfigError("must contain at least one target", "targets")


def _write_samples(out, label, dataset, index):
    n = dataset.deltas.shape[1]
    header = ["index"]
    for i in range(n):
        header += [f"dx_rho_{i + 1}", f"dx_z_{i + 1}", f"dx_theta_{i + 1}"]
    header += ["rho_ee", "z_ee", "theta_ee"]
    flat = dataset.deltas.reshape(dataset.deltas.shape[0], -1)
    outputs = dataset.outputs[index]
    with open(out / f"samples_{label}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(flat.shape[0]):
            w.writerow([k, *map(repr, flat[k].tolist()), *map(repr, outputs[k].tolist())])


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["NA" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_bundle(out, bundle):
    text = json.dumps(_clean(bundle), indent=2, allow_nan=False)
    (out / "result.json").write_text(text + "\n")


def _poses_rows(solutions):
    rows = []
    for ti, sol in enumerate(solutions):
        results = ([("optimal", sol.optimal)] if sol.optimal else []) + [("feasible", f) for f in sol.feasible]
        counts = {}
        for mode, res in results:
            j = counts[mode] = counts.get(mode, -1) + 1
            for p, plat in enumerate(res.state.platforms):
                rows.append([ti, mode, j, p + 1, plat.rho, plat.z, plat.theta])
    return rows


POSES_HEADER = ["target_index", "mode", "solution_index", "platform", "rho", "z", "theta"]


def cmd_solve(cfg, out):
    _require_targets(cfg)

    def work(target):
        sol = TargetSolution(target)
        try:
            sol.optimal = solve_optimal(target, cfg.n, cfg.geometry, cfg.solver)
        except SolveError as exc:
            sol.error = _error_record(exc)
        return sol

    solutions = _pmap(work, list(cfg.targets), cfg.threads)
    bundle = _bundle(cfg, "solve")
    bundle["targets"] = [s.to_dict() for s in solutions]
    _write_csv(out / "poses.csv", POSES_HEADER, _poses_rows(solutions))
    return bundle, all(s.ok for s in solutions)


def cmd_feasible(cfg, out):
    _require_targets(cfg)
    count = max(cfg.feasible_count, 1)

    def work(target):
        sol = TargetSolution(target)
        try:
            sol.feasible = solve_multiple(target, cfg.n, cfg.geometry, cfg.solver, count)
        except SolveError as exc:
            sol.error = _error_record(exc)
        return sol

    solutions = _pmap(work, list(cfg.targets), cfg.threads)
    bundle = _bundle(cfg, "feasible")
    bundle["targets"] = [s.to_dict() for s in solutions]
    _write_csv(out / "poses.csv", POSES_HEADER, _poses_rows(solutions))
    return bundle, all(s.ok for s in solutions)


def _stats_block(labels, dataset):
    return {
        label: compute_stats(dataset.outputs[i], dataset.baselines[i]).to_dict() for i, label in enumerate(labels)
    }


def cmd_compare(cfg, out):
    _require_targets(cfg)
    noise = cfg.noise[0]
    solutions = _pmap(lambda t: _solve_pair(cfg, t, cfg.feasible_count), list(cfg.targets), cfg.threads)
    bundle = _bundle(cfg, "compare")
    entries, rows = [], []
    labels_all = ["optimal"] + [f"nonopt{j + 1}" for j in range(cfg.feasible_count)]
    for ti, sol in enumerate(solutions):
        entry = sol.to_dict()
        if sol.ok:
            dataset = get_n_perturbations(sol.poses(), noise, threads=cfg.threads)
            entry["stats"] = _stats_block(sol.labels(), dataset)
            entry["rng"] = dataset.rng_metadata()
            row = [ti, sol.target.rho, sol.target.z, sol.target.theta, sol.target.phi]
            for label in labels_all:
                s = entry["stats"][label]
                row += [s["median_distance"], s["ci95"][0], s["ci95"][1]]
            rows.append(row)
            if cfg.write_samples:
                for i, label in enumerate(sol.labels()):
                    _write_samples(out, f"t{ti}_{label}", dataset, i)
        entries.append(entry)
    bundle["targets"] = entries
    header = ["target_index", "rho", "z", "theta", "phi"]
    for label in labels_all:
        header += [f"{label}_median", f"{label}_ci_low", f"{label}_ci_high"]
    _write_csv(out / "table1.csv", header, rows)
    return bundle, all(s.ok for s in solutions)


def cmd_perturb(cfg, out):
    noise = cfg.noise[0]
    bundle = _bundle(cfg, "perturb")
    ok = True
    if cfg.poses:
        groups = {}
        for i, pose in enumerate(cfg.poses):
            groups.setdefault(pose.phi, []).append((f"p{i}", pose))
        bundle["poses"] = []
        for phi, members in groups.items():
            dataset = get_n_perturbations([p for _, p in members], noise, threads=cfg.threads)
            stats = _stats_block([label for label, _ in members], dataset)
            for i, (label, pose) in enumerate(members):
                bundle["poses"].append({"label": label, "state": pose.to_dict(), "stats": stats[label]})
                if cfg.write_samples:
                    _write_samples(out, label, dataset, i)
            bundle.setdefault("rng_streams", []).append(dataset.rng_metadata())
        return bundle, ok
    _require_targets(cfg)
    solutions = _pmap(lambda t: _solve_pair(cfg, t, 0), list(cfg.targets), cfg.threads)
    entries = []
    for ti, sol in enumerate(solutions):
        entry = sol.to_dict()
        if sol.ok:
            dataset = get_n_perturbations([sol.optimal.state], noise, threads=cfg.threads)
            entry["stats"] = _stats_block(["optimal"], dataset)
            entry["rng"] = dataset.rng_metadata()
            if cfg.write_samples:
                _write_samples(out, f"t{ti}_optimal", dataset, 0)
        else:
            ok = False
        entries.append(entry)
    bundle["targets"] = entries
    return bundle, ok


def linearity_row(poses, noise, threads=1):
    """Predicted and observed covariance plus F-factor for each pose."""
    dataset = get_n_perturbations(poses, noise, threads=threads)
    rows = []
    for i, pose in enumerate(poses):
        pred = predicted_covariance_for(pose, noise)
        if noise.n_samples >= 2:
            obs = compute_stats(dataset.outputs[i], dataset.baselines[i]).observed_covariance
        else:
            obs = np.zeros((2, 2))
        rows.append({"predicted_covariance": pred, "observed_covariance": obs, "f_factor": f_factor(pred, obs)})
    return rows


def cmd_linearity(cfg, out):
    _require_targets(cfg)
    solutions = _pmap(lambda t: _solve_pair(cfg, t, cfg.feasible_count), list(cfg.targets), cfg.threads)
    bundle = _bundle(cfg, "linearity")
    labels_all = ["optimal"] + [f"nonopt{j + 1}" for j in range(cfg.feasible_count)]
    entries, rows = [], []
    for ti, sol in enumerate(solutions):
        entry = sol.to_dict()
        if sol.ok:
            entry["linearity"] = []
            for ni, noise in enumerate(cfg.noise):
                per_pose = linearity_row(sol.poses(), noise, cfg.threads)
                entry["linearity"].append(
                    {"noise": noise.to_dict(), "poses": dict(zip(sol.labels(), per_pose))}
                )
                rows.append(
                    [ti, ni, noise.sigma_t, noise.sigma_theta, noise.n_samples]
                    + [p["f_factor"] for p in per_pose]
                )
        entries.append(entry)
    bundle["targets"] = entries
    header = ["target_index", "noise_index", "sigma_t", "sigma_theta", "n_samples"]
    header += [f"f_{label}" for label in labels_all]
    _write_csv(out / "table2.csv", header, rows)
    return bundle, all(s.ok for s in solutions)


def sweep_point(cfg, target, perturb, noise):
    """Optimal vs one feasible solve at ``target``; ``None`` if unreachable."""
    sol = _solve_pair(cfg, target, 1)
    if not sol.ok:
        return sol, None
    opt, feas = sol.optimal, sol.feasible[0]
    point = {
        "fn_optimal": opt.fn_value,
        "fn_feasible": feas.fn_value,
        "fn_ratio": math.sqrt(opt.fn_value / feas.fn_value),
        "median_optimal": None,
        "median_feasible": None,
        "median_ratio": None,
    }
    if perturb:
        dataset = get_n_perturbations(sol.poses(), noise)
        m = [compute_stats(dataset.outputs[i], dataset.baselines[i]).median_distance for i in range(2)]
        point.update(median_optimal=m[0], median_feasible=m[1], median_ratio=m[0] / m[1])
    return sol, point


def cmd_sweep(cfg, out):
    if cfg.sweep is None:
        raise ConfigError("required for the sweep command", "sweep")
    spec = cfg.sweep
    base = cfg.noise[0]
    noise = NoiseSpec(base.sigma_t, base.sigma_theta, spec.n_samples, base.rng_seed)
    targets = spec.targets()
    results = _pmap(lambda t: sweep_point(cfg, t, spec.perturb, noise), targets, cfg.threads)
    rows, skipped, pairs = [], [], []
    for target, (sol, point) in zip(targets, results):
        if point is None:
            skipped.append({"target": [target.rho, target.z, target.theta, target.phi], "error": sol.error})
            continue
        rows.append(
            [target.rho, target.z, target.theta, target.phi]
            + [point[k] for k in ("fn_optimal", "fn_feasible", "fn_ratio", "median_optimal", "median_feasible", "median_ratio")]
        )
        if point["median_ratio"] is not None:
            pairs.append((point["fn_ratio"], point["median_ratio"]))
    bundle = _bundle(cfg, "sweep")
    bundle["grid_size"] = len(targets)
    bundle["reachable"] = len(rows)
    bundle["skipped"] = skipped
    ok = bool(rows)
    bundle["regression"] = None
    if spec.perturb:
        try:
            slope, intercept, r2 = fn_vs_median_regression(pairs)
            bundle["regression"] = {"slope": slope, "intercept": intercept, "r_squared": r2, "points": len(pairs)}
        except ValueError as exc:
            bundle["regression_error"] = str(exc)
    header = ["rho", "z", "theta", "phi", "fn_optimal", "fn_feasible", "fn_ratio"]
    header += ["median_optimal", "median_feasible", "median_ratio"]
    _write_csv(out / "sweep.csv", header, rows)
    return bundle, ok


HANDLERS = {
    "solve": cmd_solve,
    "feasible": cmd_feasible,
    "compare": cmd_compare,
    "perturb": cmd_perturb,
    "linearity": cmd_linearity,
    "sweep": cmd_sweep,
}


def _check_command(cfg, command):
    if command in ("solve", "feasible", "compare", "linearity"):
        _require_targets(cfg)
    elif command == "perturb" and not cfg.poses:
        _require_targets(cfg)
    elif command == "sweep" and cfg.sweep is None:
        raise ConfigError("required for the sweep command", "sweep")


def run(command, config_path, out_dir, seed=None, samples=None, threads=None):
    """Execute one command; returns the process exit status."""
    try:
        cfg = load_config(config_path, seed=seed, samples=samples, threads=threads)
        _check_command(cfg, command)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle, ok = HANDLERS[command](cfg, out)
    bundle["status"] = "ok" if ok else "partial"
    write_bundle(out, bundle)
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stewart-stack",
        description="Frobenius-norm inverse kinematics and perturbation studies for Stewart platform stacks.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="master seed (overrides config and environment)")
    parser.add_argument("--samples", type=int, default=None, help="override the number of perturbation samples")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (does not change results)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.samples is not None and args.samples < 1:
        print("error: --samples must be at least 1", file=sys.stderr)
        return 2
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    return run(args.command, args.config, args.out, args.seed, args.samples, args.threads)


if __name__ == "__main__":
    sys.exit(main())
