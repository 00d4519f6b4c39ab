"""Batch experiment driver: config parsing, ensemble runs, serialization.

Configs are YAML documents.  A minimal one:

  problem: ring3
  model:
    pump: 2.4
    gamma: 1.0
    two_photon: 0.6
  grid:
    t_max: 8.0
    steps: 1200
  ensemble:
    n_traj: 100
    seed: 7

Every run writes `timeseries.csv` (one row per checkpoint: time, then mean
and standard error of each observable) and `metadata.json` (config hash,
seed, versions, wall time, jump statistics, error estimates).  The CSV is
bit-identical across reruns of the same config and seed.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import click
import numpy as np
import yaml

from . import __version__
from .engine import TimeGrid, estimate_timestep_error, run_ensemble
from .fock import FockGeometry, MultiModeState, cat_state, product_state
from .ising import ProblemInstance, builtin_instances, make_instance, maxcut_to_ising
from .model import NetworkModel, Schedule
from .observables import (MeanPhoton, SignProbability, SuccessRate,
                          ensemble_purity)

MEM_BUDGET_ENV = "CIMSIM_MEM_BUDGET"
DEFAULT_MEM_BUDGET = 2 * 1024 ** 3  # bytes
DEFAULT_CUTOFF = 16

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

INITIAL_KINDS = ("vacuum", "cat-product", "entangled-cat")


class ConfigError(Exception):
    """Carries every validation violation found, not just the first."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully validated experiment description."""

    problem: ProblemInstance
    cutoff: int
    initial_kind: str
    initial_alpha: float
    model: NetworkModel
    grid: TimeGrid
    n_traj: int
    seed: int
    workers: int
    observables: tuple[str, ...]
    purity_store: int
    purity_pair_budget: int | None
    estimate_errors: bool
    output_dir: str
    normalized: dict = field(compare=False, default_factory=dict)

    def config_hash(self) -> str:
        return hashlib.sha256(serialize_config(self).encode()).hexdigest()


def _schedule_from(node, t_max: float, path: str, errors: list) -> Schedule:
    if isinstance(node, (int, float)):
        return Schedule.constant(float(node))
    if isinstance(node, dict):
        kind = node.get("kind")
        if kind == "constant":
            return Schedule.constant(float(node.get("value", 0.0)))
        if kind in ("linear", "tanh"):
            try:
                start = float(node["start"])
                end = float(node["end"])
            except KeyError as exc:
                errors.append(f"{path}: missing key {exc}")
                return Schedule.constant(0.0)
            if kind == "linear":
                return Schedule.linear(start, end, t_max)
            return Schedule.tanh_ramp(start, end, t_max,
                                      float(node.get("sharpness", 3.0)))
        errors.append(f"{path}.kind: unknown schedule kind {kind!r}")
        return Schedule.constant(0.0)
    errors.append(f"{path}: expected a number or a schedule mapping")
    return Schedule.constant(0.0)


def _parse_problem(node, errors: list) -> ProblemInstance | None:
    builtins = builtin_instances()
    if isinstance(node, str):
        if node not in builtins:
            errors.append(f"problem: unknown built-in {node!r} "
                          f"(have {sorted(builtins)})")
            return None
        return builtins[node]()
    if isinstance(node, dict):
        if "name" in node:
            name = node["name"]
            if name not in builtins:
                errors.append(f"problem.name: unknown built-in {name!r}")
                return None
            kwargs = {k: v for k, v in node.items() if k != "name"}
            try:
                return builtins[name](**kwargs)
            except TypeError as exc:
                errors.append(f"problem: {exc}")
                return None
        if "matrix" in node:
            try:
                return make_instance(node.get("label", "custom"),
                                     np.array(node["matrix"], dtype=float))
            except ValueError as exc:
                errors.append(f"problem.matrix: {exc}")
                return None
        if "edges" in node:
            edges = node["edges"]
            size = int(node.get("size", max(max(e[0], e[1]) for e in edges)))
            w = np.zeros((size, size))
            for e in edges:
                a, b = int(e[0]), int(e[1])
                weight = float(e[2]) if len(e) > 2 else 1.0
                w[a - 1, b - 1] = w[b - 1, a - 1] = weight
            return maxcut_to_ising(w, name=node.get("label", "maxcut"))
        errors.append("problem: mapping needs one of name / matrix / edges")
        return None
    errors.append("problem: expected a name or a mapping")
    return None


_TOP_KEYS = {"problem", "cutoff", "initial", "model", "grid", "ensemble",
             "observables", "purity", "errors", "output", "sweep"}
_MODEL_KEYS = {"pump", "gamma", "two_photon", "j_coef", "detuning",
               "alpha_lock"}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a YAML config; raises ConfigError listing every
    violation found."""
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise ConfigError(["config: top level must be a mapping"])
    errors: list[str] = []
    for key in doc:
        if key not in _TOP_KEYS:
            errors.append(f"{key}: unknown key")

    problem = _parse_problem(doc.get("problem"), errors)
    m = problem.size if problem is not None else 1

    cutoff = int(doc.get("cutoff", DEFAULT_CUTOFF))
    if cutoff < 2:
        errors.append("cutoff: must be >= 2")
        cutoff = 2

    init = doc.get("initial", {}) or {}
    initial_kind = init.get("kind", "vacuum")
    initial_alpha = float(init.get("alpha", 0.0))
    if initial_kind not in INITIAL_KINDS:
        errors.append(f"initial.kind: must be one of {INITIAL_KINDS}")
    if initial_kind == "entangled-cat" and m < 2:
        errors.append("initial.kind: entangled-cat requires at least 2 modes")
    if initial_kind != "vacuum" and initial_alpha <= 0.0:
        errors.append("initial.alpha: must be > 0 for cat initial states")

    grid_node = doc.get("grid", {}) or {}
    t_max = float(grid_node.get("t_max", 1.0))
    steps = int(grid_node.get("steps", 0))
    stride = int(grid_node.get("checkpoint_stride", 10))
    if t_max <= 0.0:
        errors.append("grid.t_max: must be > 0")
    if steps < 1:
        errors.append("grid.steps: must be >= 1")
    if stride < 1:
        errors.append("grid.checkpoint_stride: must be >= 1")
    grid = None
    if not errors or (t_max > 0 and steps >= 1 and stride >= 1):
        grid = TimeGrid(t_max, max(steps, 1), max(stride, 1))

    model_node = doc.get("model", {}) or {}
    for key in model_node:
        if key not in _MODEL_KEYS:
            errors.append(f"model.{key}: unknown key")
    pump = _schedule_from(model_node.get("pump", 0.0), t_max, "model.pump",
                          errors)
    gamma = _schedule_from(model_node.get("gamma", 1.0), t_max,
                           "model.gamma", errors)
    two_photon = _schedule_from(model_node.get("two_photon", 0.0), t_max,
                                "model.two_photon", errors)
    j_coef = _schedule_from(model_node.get("j_coef", 1.0), t_max,
                            "model.j_coef", errors)
    detuning = model_node.get("detuning", 0.0)
    alpha_lock = model_node.get("alpha_lock")

    ens = doc.get("ensemble", {}) or {}
    n_traj = int(ens.get("n_traj", 100))
    seed = int(ens.get("seed", 0))
    workers = int(ens.get("workers", 1))
    if n_traj < 1:
        errors.append("ensemble.n_traj: must be >= 1")
    if workers < 1:
        errors.append("ensemble.workers: must be >= 1")

    obs_names = tuple(doc.get("observables", ["success_rate"]))
    for name in obs_names:
        if not _valid_observable(name, m):
            errors.append(f"observables: unknown observable {name!r}")

    pur = doc.get("purity", {}) or {}
    purity_store = int(pur.get("store_trajectories", 0))
    pair_budget = pur.get("pair_budget")
    if pair_budget is not None:
        pair_budget = int(pair_budget)
    if purity_store < 0:
        errors.append("purity.store_trajectories: must be >= 0")
    purity_store = min(purity_store, max(n_traj, 1))

    err_node = doc.get("errors", {}) or {}
    estimate_errors = bool(err_node.get("timestep", False))
    if estimate_errors and steps % 2 != 0:
        errors.append("errors.timestep: grid.steps must be even for the "
                      "half-step comparison")

    out_node = doc.get("output", {}) or {}
    output_dir = str(out_node.get("dir", "."))

    budget = int(os.environ.get(MEM_BUDGET_ENV, DEFAULT_MEM_BUDGET))
    dim = cutoff ** m
    n_cp = len(grid.checkpoint_steps) if grid is not None else 1
    bytes_needed = 16 * dim * (8 + purity_store * n_cp)
    if bytes_needed > budget:
        errors.append(
            f"cutoff/purity: run needs about {bytes_needed} bytes of state "
            f"storage, over the {budget}-byte budget (set {MEM_BUDGET_ENV})")

    if errors:
        raise ConfigError(errors)

    geometry = FockGeometry(m, cutoff)
    model = NetworkModel(geometry, problem.coupling, pump=pump, gamma=gamma,
                         two_photon=two_photon, j_coef=j_coef,
                         detuning=detuning,
                         alpha_lock=None if alpha_lock is None
                         else float(alpha_lock))
    normalized = _normalize_doc(doc, problem, cutoff, initial_kind,
                                initial_alpha, grid, n_traj, seed, workers,
                                obs_names, purity_store, pair_budget,
                                estimate_errors, output_dir)
    return ExperimentConfig(problem, cutoff, initial_kind, initial_alpha,
                            model, grid, n_traj, seed, workers, obs_names,
                            purity_store, pair_budget, estimate_errors,
                            output_dir, normalized)


def _valid_observable(name: str, m: int) -> bool:
    if name == "success_rate":
        return True
    for prefix in ("mean_photon_", "sign_plus_"):
        if name.startswith(prefix):
            tail = name[len(prefix):]
            return tail.isdigit() and 1 <= int(tail) <= m
    return False


def _normalize_doc(doc, problem, cutoff, initial_kind, initial_alpha, grid,
                   n_traj, seed, workers, obs_names, purity_store,
                   pair_budget, estimate_errors, output_dir) -> dict:
    """Canonical form of the config, used for hashing and round-trips."""
    prob_node = doc.get("problem")
    if not isinstance(prob_node, (str, dict)):
        prob_node = problem.name
    model_node = doc.get("model", {}) or {}
    out = {
        "problem": prob_node,
        "cutoff": cutoff,
        "initial": {"kind": initial_kind, "alpha": initial_alpha},
        "model": {k: model_node.get(k) for k in sorted(model_node)},
        "grid": {"t_max": grid.t_max, "steps": grid.steps,
                 "checkpoint_stride": grid.checkpoint_stride},
        "ensemble": {"n_traj": n_traj, "seed": seed, "workers": workers},
        "observables": list(obs_names),
        "purity": {"store_trajectories": purity_store,
                   "pair_budget": pair_budget},
        "errors": {"timestep": estimate_errors},
        "output": {"dir": output_dir},
    }
    if "sweep" in doc:
        out["sweep"] = doc["sweep"]
    return out


def serialize_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.normalized, sort_keys=True)


def build_entangled_cat(modes: int, alpha: float, cutoff: int) -> MultiModeState:
    """Equal superposition of M terms, each placing a cat in one mode and
    vacuum in the others; normalized numerically in the truncated space."""
    if modes < 2:
        raise ValueError("entangled-cat initial state needs >= 2 modes")
    cat, _ = cat_state(alpha, cutoff)
    vac = np.zeros(cutoff, dtype=np.complex128)
    vac[0] = 1.0
    total = None
    for m in range(modes):
        factors = [cat if k == m else vac for k in range(modes)]
        term = product_state(factors).amplitudes
        total = term if total is None else total + term
    return MultiModeState(FockGeometry(modes, cutoff), total).normalized()


def build_initial_state(config: ExperimentConfig) -> MultiModeState:
    geom = config.model.geometry
    if config.initial_kind == "vacuum":
        vac = np.zeros(geom.cutoff, dtype=np.complex128)
        vac[0] = 1.0
        return product_state([vac] * geom.modes)
    if config.initial_kind == "cat-product":
        cat, _ = cat_state(config.initial_alpha, geom.cutoff)
        return product_state([cat] * geom.modes).normalized()
    return build_entangled_cat(geom.modes, config.initial_alpha, geom.cutoff)


def build_observables(config: ExperimentConfig):
    obs = []
    for name in config.observables:
        if name == "success_rate":
            obs.append(SuccessRate(config.problem.ground_set))
        elif name.startswith("mean_photon_"):
            obs.append(MeanPhoton(int(name.rsplit("_", 1)[1])))
        else:
            obs.append(SignProbability(int(name.rsplit("_", 1)[1])))
    return obs


@dataclass(frozen=True)
class RunRecord:
    config: ExperimentConfig
    times: np.ndarray
    columns: dict          # name -> (mean array, stderr array or None)
    metadata: dict


def run_experiment(config: ExperimentConfig, output_dir=None) -> RunRecord:
    """Run one ensemble and serialize timeseries.csv plus metadata.json."""
    t_start = time.monotonic()
    initial = build_initial_state(config)
    observables = build_observables(config)
    stats = run_ensemble(initial, config.model, config.grid, config.n_traj,
                         config.seed, observables, workers=config.workers,
                         store_states=config.purity_store)
    mean = stats.mean
    err = stats.stderr
    columns = {}
    for i, name in enumerate(stats.names):
        columns[name] = (mean[:, i], None if err is None else err[:, i])
    if config.purity_store > 0 and stats.states is not None:
        est = ensemble_purity(stats.states, pair_budget=config.purity_pair_budget,
                              seed=config.seed)
        columns["purity"] = (np.array([e.value for e in est]),
                             np.array([0.0 if e.stderr is None else e.stderr
                                       for e in est]))
    error_block = {}
    if config.estimate_errors:
        est = estimate_timestep_error(initial, config.model, config.grid,
                                      min(config.n_traj, 50), config.seed,
                                      observables)
        error_block = {"timestep_rms": float(est.aggregate),
                       "timestep_n_traj": int(min(config.n_traj, 50))}
    jump_counts = stats.jump_counts
    metadata = {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "n_traj": config.n_traj,
        "versions": {"cimsim": __version__, "numpy": np.__version__,
                     "python": sys.version.split()[0]},
        "jump_stats": {
            "total": int(jump_counts.sum()),
            "mean_per_trajectory": float(jump_counts.mean()),
            "min": int(jump_counts.min()),
            "max": int(jump_counts.max()),
        },
        "max_step_decay": float(stats.max_step_decay),
        "errors": error_block,
        "wall_time_s": time.monotonic() - t_start,
    }
    record = RunRecord(config, stats.times, columns, metadata)
    out_dir = output_dir if output_dir is not None else config.output_dir
    _write_record(record, out_dir)
    return record


def _write_record(record: RunRecord, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    names = list(record.columns)
    header = ["time"]
    for name in names:
        header += [f"{name}_mean", f"{name}_stderr"]
    lines = [",".join(header)]
    for row, t in enumerate(record.times):
        cells = [f"{t:.12g}"]
        for name in names:
            mean, err = record.columns[name]
            cells.append(f"{mean[row]:.12g}")
            cells.append("" if err is None else f"{err[row]:.12g}")
        lines.append(",".join(cells))
    with open(os.path.join(out_dir, "timeseries.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    meta = dict(record.metadata)
    meta["config"] = record.config.normalized
    with open(os.path.join(out_dir, "metadata.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _set_by_path(doc: dict, path: str, value):
    keys = path.split(".")
    node = doc
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def run_sweep(text: str, output_dir=None, seed=None, workers=None):
    """Run one ensemble per sweep point; returns the list of RunRecords."""
    doc = yaml.safe_load(text)
    sweep = doc.get("sweep")
    if not isinstance(sweep, dict) or "parameter" not in sweep \
            or "values" not in sweep:
        raise ConfigError(["sweep: needs `parameter` (dotted path) and "
                           "`values` (list)"])
    param = sweep["parameter"]
    values = sweep["values"]
    base = {k: v for k, v in doc.items() if k != "sweep"}
    records = []
    for idx, value in enumerate(values):
        point = yaml.safe_load(yaml.safe_dump(base))
        _set_by_path(point, param, value)
        config = parse_config(yaml.safe_dump(point))
        config = _apply_overrides(config, seed, workers, None)
        root = output_dir if output_dir is not None else config.output_dir
        records.append(run_experiment(config,
                                      os.path.join(root, f"point_{idx:03d}")))
    return records


def _apply_overrides(config: ExperimentConfig, seed, workers, output_dir):
    changes = {}
    if seed is not None:
        changes["seed"] = int(seed)
    if workers is not None:
        changes["workers"] = int(workers)
    if output_dir is not None:
        changes["output_dir"] = str(output_dir)
    if not changes:
        return config
    doc = dict(config.normalized)
    ens = dict(doc["ensemble"])
    if "seed" in changes:
        ens["seed"] = changes["seed"]
    if "workers" in changes:
        ens["workers"] = changes["workers"]
    doc["ensemble"] = ens
    if "output_dir" in changes:
        doc["output"] = {"dir": changes["output_dir"]}
    return parse_config(yaml.safe_dump(doc))


@click.group()
def main():
    """Monte Carlo wave-function simulator for coupled DOPO networks."""


@main.command("run")
@click.argument("config_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Override master seed.")
@click.option("--workers", type=int, default=None, help="Worker processes.")
@click.option("--output-dir", type=click.Path(), default=None)
def cmd_run(config_path, seed, workers, output_dir):
    """Run the ensemble described by CONFIG_PATH."""
    with open(config_path) as fh:
        text = fh.read()
    try:
        config = parse_config(text)
        config = _apply_overrides(config, seed, workers, output_dir)
    except ConfigError as exc:
        for v in exc.violations:
            click.echo(f"invalid config: {v}", err=True)
        sys.exit(EXIT_VALIDATION)
    try:
        record = run_experiment(config)
    except (RuntimeError, FloatingPointError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)
    click.echo(f"wrote {os.path.join(config.output_dir, 'timeseries.csv')} "
               f"({len(record.times)} checkpoints, "
               f"{record.metadata['jump_stats']['total']} jumps)")


@main.command("sweep")
@click.argument("config_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--output-dir", type=click.Path(), default=None)
def cmd_sweep(config_path, seed, workers, output_dir):
    """Run one ensemble per value of the swept parameter."""
    with open(config_path) as fh:
        text = fh.read()
    try:
        records = run_sweep(text, output_dir=output_dir, seed=seed,
                            workers=workers)
    except ConfigError as exc:
        for v in exc.violations:
            click.echo(f"invalid config: {v}", err=True)
        sys.exit(EXIT_VALIDATION)
    except (RuntimeError, FloatingPointError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)
    click.echo(f"completed {len(records)} sweep points")


@main.command("validate")
@click.argument("config_path", type=click.Path(exists=True))
def cmd_validate(config_path):
    """Check a config without running it."""
    with open(config_path) as fh:
        text = fh.read()
    try:
        parse_config(text)
    except ConfigError as exc:
        for v in exc.violations:
            click.echo(f"invalid config: {v}", err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo("config ok")


@main.command("instances")
def cmd_instances():
    """List built-in problem instances with their ground-state data."""
    for name, build in sorted(builtin_instances().items()):
        inst = build()
        configs = ", ".join("(" + ",".join("+" if s > 0 else "-" for s in g)
                            + ")" for g in inst.ground_set)
        click.echo(f"{name}: M={inst.size}, E0={inst.ground_energy:.6g}, "
                   f"ground set {configs}")


if __name__ == "__main__":
    main()
