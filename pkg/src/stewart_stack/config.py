"""Run configuration: JSON loading, validation and default resolution."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, fields

import numpy as np

from .geometry import PlatformGeometry
from .kinematics import AssemblerState
from .montecarlo import NoiseSpec
from .solver import EndEffectorTarget, SolverOptions

SEED_ENV = "STEWART_STACK_SEED"
THREADS_ENV = "STEWART_STACK_THREADS"

DEFAULT_LAYOUT = {"bottom_radius": 150.0, "top_radius": 120.0, "pair_half_angle": math.radians(10.0)}
DEFAULT_LIMITS = {"l_min": 300.0, "l_max": 500.0, "theta_min": 0.35}

TOP_KEYS = {
    "n",
    "platform",
    "targets",
    "poses",
    "solver",
    "noise",
    "feasible_count",
    "write_samples",
    "sweep",
    "seed",
    "threads",
}


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry when known."""

    def __init__(self, message, key=None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


@dataclass(frozen=True)
class SweepSpec:
    rho: tuple
    z: tuple
    theta_rule: str = "constant"
    theta: tuple = (0.0,)
    phi: float = 0.0
    perturb: bool = True
    n_samples: int = 2000

    def targets(self):
        """Grid targets in row-major (rho, z, theta) order."""
        rhos = np.linspace(*self.rho[:2], int(self.rho[2]))
        zs = np.linspace(*self.z[:2], int(self.z[2]))
        if self.theta_rule == "constant":
            thetas = [self.theta[0]]
        else:
            thetas = np.linspace(*self.theta[:2], int(self.theta[2]))
        return [
            EndEffectorTarget(float(r), float(z), float(t), self.phi)
            for r in rhos
            for z in zs
            for t in thetas
        ]

    def to_dict(self):
        out = {
            "rho": {"min": self.rho[0], "max": self.rho[1], "steps": self.rho[2]},
            "z": {"min": self.z[0], "max": self.z[1], "steps": self.z[2]},
            "phi": self.phi,
            "perturb": self.perturb,
            "n_samples": self.n_samples,
        }
        if self.theta_rule == "constant":
            out["theta"] = {"rule": "constant", "value": self.theta[0]}
        else:
            out["theta"] = {"rule": "grid", "min": self.theta[0], "max": self.theta[1], "steps": self.theta[2]}
        return out


@dataclass(frozen=True)
class RunConfig:
    n: int
    geometry: PlatformGeometry
    targets: tuple
    solver: SolverOptions
    noise: tuple
    feasible_count: int = 2
    write_samples: bool = True
    poses: tuple = ()
    sweep: SweepSpec | None = None
    seed: int = 0
    threads: int = 1
    source: str = field(default="", compare=False)

    def to_dict(self):
        """Fully resolved configuration, echoed into every result bundle."""
        return {
            "n": self.n,
            "platform": self.geometry.to_dict(),
            "targets": [[t.rho, t.z, t.theta, t.phi] for t in self.targets],
            "poses": [p.to_dict() for p in self.poses],
            "solver": self.solver.to_dict(),
            "noise": [ns.to_dict() for ns in self.noise],
            "feasible_count": self.feasible_count,
            "write_samples": self.write_samples,
            "sweep": self.sweep.to_dict() if self.sweep else None,
            "seed": self.seed,
        }


def _reject_unknown(section, allowed, prefix):
    if not isinstance(section, dict):
        raise ConfigError("must be an object", prefix or None)
    for key in section:
        if key not in allowed:
            raise ConfigError("unknown key", f"{prefix}.{key}" if prefix else key)


def _number(value, key, *, positive=False, nonneg=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("must be a number", key)
    if integer and not float(value).is_integer():
        raise ConfigError("must be an integer", key)
    if not math.isfinite(value):
        raise ConfigError("must be finite", key)
    if positive and value <= 0:
        raise ConfigError("must be positive", key)
    if nonneg and value < 0:
        raise ConfigError("must be non-negative", key)
    return int(value) if integer else float(value)


def _geometry(section):
    section = section or {}
    _reject_unknown(
        section,
        {"l_min", "l_max", "theta_min", "layout", "top_nodes", "bottom_nodes", "leg_pairs"},
        "platform",
    )
    limits = {}
    for key, default in DEFAULT_LIMITS.items():
        if key in section:
            limits[key] = _number(section[key], f"platform.{key}", positive=key != "theta_min", nonneg=True)
        else:
            limits[key] = default
    if not limits["l_min"] < limits["l_max"]:
        raise ConfigError("must be larger than platform.l_min", "platform.l_max")
    if not limits["theta_min"] < math.pi / 2:
        raise ConfigError("must be below pi/2", "platform.theta_min")
    explicit = {"top_nodes", "bottom_nodes"} & section.keys()
    if explicit and "layout" in section:
        raise ConfigError("give either layout or explicit nodes, not both", "platform.layout")
    if explicit:
        if explicit != {"top_nodes", "bottom_nodes"}:
            missing = ({"top_nodes", "bottom_nodes"} - explicit).pop()
            raise ConfigError("required with explicit nodes", f"platform.{missing}")
        kwargs = {}
        if "leg_pairs" in section:
            kwargs["leg_pairs"] = section["leg_pairs"]
        try:
            return PlatformGeometry(section["top_nodes"], section["bottom_nodes"], **kwargs, **limits)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), "platform") from None
    if "leg_pairs" in section:
        raise ConfigError("only valid with explicit nodes", "platform.leg_pairs")
    layout = dict(DEFAULT_LAYOUT)
    raw = section.get("layout", {})
    _reject_unknown(raw, set(DEFAULT_LAYOUT), "platform.layout")
    for key, value in raw.items():
        layout[key] = _number(value, f"platform.layout.{key}", positive=key != "pair_half_angle", nonneg=True)
    return PlatformGeometry.symmetric(**layout, **limits)


def _target(entry, key):
    if isinstance(entry, dict):
        _reject_unknown(entry, {"rho", "z", "theta", "phi"}, key)
        for req in ("rho", "z"):
            if req not in entry:
                raise ConfigError("missing", f"{key}.{req}")
        vals = [entry["rho"], entry["z"], entry.get("theta", 0.0), entry.get("phi", 0.0)]
    elif isinstance(entry, list) and len(entry) in (3, 4):
        vals = list(entry) + [0.0] * (4 - len(entry))
    else:
        raise ConfigError("must be [rho, z, theta, phi] or an object", key)
    vals = [_number(v, key) for v in vals]
    vals[3] = vals[3] % (2 * math.pi)
    return EndEffectorTarget(*vals)


def _pose(entry, key, n):
    if not isinstance(entry, dict):
        raise ConfigError("must be an object with platforms and phi", key)
    _reject_unknown(entry, {"platforms", "phi"}, key)
    plats = entry.get("platforms")
    if not isinstance(plats, list) or len(plats) != n:
        raise ConfigError(f"must list {n} [rho, z, theta] triples", f"{key}.platforms")
    rows = []
    for i, p in enumerate(plats):
        if not isinstance(p, list) or len(p) != 3:
            raise ConfigError("must be [rho, z, theta]", f"{key}.platforms[{i}]")
        rows.append([_number(v, f"{key}.platforms[{i}]") for v in p])
    return AssemblerState.from_array(rows, _number(entry.get("phi", 0.0), f"{key}.phi"))


def _solver(section, seed):
    section = section or {}
    names = {f.name for f in fields(SolverOptions)}
    _reject_unknown(section, names, "solver")
    kwargs = {"rng_seed": seed}
    for key, value in section.items():
        if key == "z_floor" and value is None:
            continue
        integer = key in ("max_iterations", "max_restarts", "rng_seed", "optimal_starts")
        kwargs[key] = _number(value, f"solver.{key}", integer=integer)
    try:
        return SolverOptions(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc), "solver") from None


def _noise(entry, key, seed):
    entry = entry or {}
    _reject_unknown(entry, {"sigma_t", "sigma_theta", "n_samples", "seed"}, key)
    return NoiseSpec(
        sigma_t=_number(entry.get("sigma_t", 1.0), f"{key}.sigma_t", nonneg=True),
        sigma_theta=_number(entry.get("sigma_theta", 0.005), f"{key}.sigma_theta", nonneg=True),
        n_samples=_number(entry.get("n_samples", 10000), f"{key}.n_samples", positive=True, integer=True),
        rng_seed=_number(entry.get("seed", seed), f"{key}.seed", integer=True),
    )


def _axis(section, key):
    _reject_unknown(section, {"min", "max", "steps"}, key)
    for req in ("min", "max", "steps"):
        if req not in section:
            raise ConfigError("missing", f"{key}.{req}")
    return (
        _number(section["min"], f"{key}.min"),
        _number(section["max"], f"{key}.max"),
        _number(section["steps"], f"{key}.steps", positive=True, integer=True),
    )


def _sweep(section, samples_override):
    _reject_unknown(section, {"rho", "z", "theta", "phi", "perturb", "n_samples"}, "sweep")
    for req in ("rho", "z"):
        if req not in section:
            raise ConfigError("missing", f"sweep.{req}")
    theta = section.get("theta", {"rule": "constant", "value": 0.0})
    _reject_unknown(theta, {"rule", "value", "min", "max", "steps"}, "sweep.theta")
    rule = theta.get("rule", "constant")
    if rule == "constant":
        thetas = (_number(theta.get("value", 0.0), "sweep.theta.value"),)
    elif rule == "grid":
        thetas = _axis({k: v for k, v in theta.items() if k != "rule"}, "sweep.theta")
    else:
        raise ConfigError("must be 'constant' or 'grid'", "sweep.theta.rule")
    perturb = section.get("perturb", True)
    if not isinstance(perturb, bool):
        raise ConfigError("must be true or false", "sweep.perturb")
    n_samples = _number(section.get("n_samples", 2000), "sweep.n_samples", positive=True, integer=True)
    if samples_override is not None:
        n_samples = samples_override
    return SweepSpec(
        rho=_axis(section["rho"], "sweep.rho"),
        z=_axis(section["z"], "sweep.z"),
        theta_rule=rule,
        theta=thetas,
        phi=_number(section.get("phi", 0.0), "sweep.phi") % (2 * math.pi),
        perturb=perturb,
        n_samples=n_samples,
    )


def _env_int(name):
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"environment variable must be an integer, got {raw!r}", name) from None


def parse_config(data, *, seed=None, samples=None, threads=None, source=""):
    """Validate a decoded config mapping and fill defaults.

    ``seed``, ``samples`` and ``threads`` are command-line overrides. The
    seed resolves as: command line, then an explicit config ``seed``, then
    ``STEWART_STACK_SEED``, then 0. Threads resolve as: command line,
    ``STEWART_STACK_THREADS``, config, then 1.
    """
    _reject_unknown(data, TOP_KEYS, "")
    if "n" not in data:
        raise ConfigError("missing", "n")
    n = _number(data["n"], "n", positive=True, integer=True)

    if seed is None:
        seed = _number(data["seed"], "seed", integer=True) if "seed" in data else _env_int(SEED_ENV)
    seed = 0 if seed is None else int(seed)
    if threads is None:
        threads = _env_int(THREADS_ENV)
    if threads is None:
        threads = _number(data.get("threads", 1), "threads", positive=True, integer=True)
    if threads < 1:
        raise ConfigError("must be at least 1", "threads")

    geometry = _geometry(data.get("platform"))
    targets = data.get("targets", [])
    if not isinstance(targets, list):
        raise ConfigError("must be a list", "targets")
    targets = tuple(_target(t, f"targets[{i}]") for i, t in enumerate(targets))
    poses = data.get("poses", [])
    if not isinstance(poses, list):
        raise ConfigError("must be a list", "poses")
    poses = tuple(_pose(p, f"poses[{i}]", n) for i, p in enumerate(poses))

    noise_raw = data.get("noise", {})
    is_list = isinstance(noise_raw, list)
    if not is_list:
        noise_raw = [noise_raw]
    if not noise_raw:
        raise ConfigError("must be an object or a non-empty list", "noise")
    noise = []
    for i, entry in enumerate(noise_raw):
        spec = _noise(entry, f"noise[{i}]" if is_list else "noise", seed)
        if samples is not None:
            spec = NoiseSpec(spec.sigma_t, spec.sigma_theta, int(samples), spec.rng_seed)
        noise.append(spec)

    feasible_count = _number(data.get("feasible_count", 2), "feasible_count", nonneg=True, integer=True)
    write_samples = data.get("write_samples", True)
    if not isinstance(write_samples, bool):
        raise ConfigError("must be true or false", "write_samples")
    sweep = _sweep(data["sweep"], samples) if "sweep" in data else None
    return RunConfig(
        n=n,
        geometry=geometry,
        targets=targets,
        solver=_solver(data.get("solver"), seed),
        noise=tuple(noise),
        feasible_count=feasible_count,
        write_samples=write_samples,
        poses=poses,
        sweep=sweep,
        seed=seed,
        threads=int(threads),
        source=source,
    )


def load_config(path, **overrides):
    """Read and validate a JSON run configuration from ``path``."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error in {path} at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(data, source=str(path), **overrides)
