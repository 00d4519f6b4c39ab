"""Quantum-jump trajectory integration and seeded parallel ensembles.

Between jumps the unnormalized state evolves by RK4 under the effective
non-Hermitian generator; a jump fires at the first step boundary where the
squared norm (relative to the last jump) drops below a uniform threshold.
Each trajectory owns a counter-based RNG stream keyed by (master seed,
trajectory index), so ensemble results are bitwise reproducible for a fixed
seed regardless of worker count or execution order.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .fock import MultiModeState
from .model import NetworkModel, build_jump_set


class EngineError(RuntimeError):
    pass


class StepDecayWarning(UserWarning):
    """Per-step norm loss large enough to degrade jump-time resolution."""


#: per-step norm-loss fraction that triggers a warning / a hard error.
#: The paper-scale runs routinely exceed 0.1, so only outright numerical
#: breakdown is fatal by default; both are overridable per run.
DECAY_WARN_DEFAULT = 0.1
DECAY_ERROR_DEFAULT = 0.999


@dataclass(frozen=True)
class TimeGrid:
    """Uniform step grid over [0, t_max] with checkpointed boundaries."""

    t_max: float
    steps: int
    checkpoint_stride: int = 10

    def __post_init__(self):
        if self.t_max <= 0:
            raise ValueError("t_max must be > 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.checkpoint_stride < 1:
            raise ValueError("checkpoint_stride must be >= 1")

    @property
    def dt(self) -> float:
        return self.t_max / self.steps

    @property
    def checkpoint_steps(self) -> tuple[int, ...]:
        marks = list(range(0, self.steps, self.checkpoint_stride))
        marks.append(self.steps)
        return tuple(marks)

    @property
    def times(self) -> np.ndarray:
        return np.array(self.checkpoint_steps, dtype=np.float64) * self.dt

    def refined(self) -> "TimeGrid":
        """Same horizon and checkpoint times at half the time step."""
        return TimeGrid(self.t_max, 2 * self.steps, 2 * self.checkpoint_stride)


@dataclass
class TrajectoryResult:
    times: np.ndarray
    states: list[MultiModeState]
    jumps: list[tuple[float, str]]
    final_norm2: float
    max_step_decay: float


def trajectory_stream(master_seed: int, index: int) -> np.random.Generator:
    """Independent counter-based stream for one trajectory."""
    key = np.array([np.uint64(master_seed), np.uint64(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _select_jump(n_ops, weights, stream):
    total = weights.sum()
    if not total > 0.0:
        raise EngineError("jump fired but all channel weights vanish")
    r = stream.random()
    cum = np.cumsum(weights) / total
    idx = int(np.searchsorted(cum, r, side="left"))
    return min(idx, n_ops - 1)


def _jump_weights(psi, model: NetworkModel, ops, t_rate: float):
    """<C_n† C_n> for every collapse operator, up to a common norm factor."""
    (digits, strides, _delta, _wsum, pair_i, pair_j, _pj, sq, _sched,
     _lock, nc) = model.kernel_args()
    _n2, n_exp, nn_exp, hop_re = kernels.channel_expectations(
        psi, digits, strides, pair_i, pair_j, sq, nc)
    pair_index = {(int(pair_i[p]) + 1, int(pair_j[p]) + 1): p
                  for p in range(pair_i.size)}
    weights = np.empty(len(ops), dtype=np.float64)
    for n, op in enumerate(ops):
        rate = op.rate(t_rate)
        if op.kind == "one-photon":
            raw = n_exp[op.modes[0] - 1]
        elif op.kind == "two-photon":
            raw = nn_exp[op.modes[0] - 1]
        else:
            i, j = op.modes
            p = pair_index[(i, j) if i < j else (j, i)]
            raw = (n_exp[i - 1] + n_exp[j - 1]
                   - 2.0 * op.sign * hop_re[p])
        weights[n] = max(rate * raw, 0.0)
    return weights


def _run_single(initial_amps, model: NetworkModel, grid: TimeGrid,
                stream, observables, store_states: bool,
                decay_warn: float, decay_error: float):
    """Integrate one trajectory; evaluate observables at checkpoints."""
    args = model.kernel_args()
    geom = model.geometry
    d = geom.dimension
    psi = np.array(initial_amps, dtype=np.complex128).copy()
    work = np.empty((6, d), dtype=np.complex128)
    dt = grid.dt
    cp_steps = grid.checkpoint_steps
    n_cp = len(cp_steps)
    obs_values = np.empty((n_cp, len(observables)), dtype=np.float64)
    states = [] if store_states else None
    jump_set = build_jump_set(model)
    ops = jump_set.operators
    jumps: list[tuple[float, str]] = []
    max_dp = 0.0

    def record(cp_idx, norm2):
        normed = psi / math.sqrt(norm2)
        if store_states:
            states.append(MultiModeState(geom, normed.copy(), _norm2=1.0))
        view = MultiModeState(geom, normed, _norm2=1.0)
        for n, obs in enumerate(observables):
            obs_values[cp_idx, n] = obs.evaluate(view)

    eps = stream.random()
    norm2 = float(np.vdot(psi, psi).real)
    record(0, norm2)
    step = 0
    for cp_idx in range(1, n_cp):
        target = cp_steps[cp_idx]
        while step < target:
            done, norm2, dp, status = kernels.advance(
                psi, work, step * dt, dt, target - step, eps, *args)
            step += done
            max_dp = max(max_dp, dp)
            if status == kernels.STATUS_DIVERGED:
                raise EngineError(
                    f"integration diverged at t={step * dt:.6g} "
                    "(time step too large for this model)")
            if status == kernels.STATUS_UNDERFLOW:
                raise EngineError(f"norm underflow at t={step * dt:.6g}")
            if dp > decay_error:
                raise EngineError(
                    f"per-step norm loss {dp:.3g} exceeds {decay_error} "
                    f"at t={step * dt:.6g}; reduce the time step")
            if status == kernels.STATUS_JUMP:
                # resolve the crossing time inside the step: the norm decay
                # is close to exponential, so log-interpolate, step the
                # pre-crossing state to that time, jump there, and realign
                # to the step boundary with one partial step
                t_hi = step * dt
                t_lo = t_hi - dt
                pre = work[5]
                n_lo = float(np.vdot(pre, pre).real)
                if n_lo > eps and 0.0 < norm2 < n_lo:
                    frac = math.log(n_lo / eps) / math.log(n_lo / norm2)
                    frac = min(max(frac, 0.0), 1.0)
                else:
                    frac = 1.0
                t_jump = t_lo + frac * dt
                if frac < 1.0:
                    psi[:] = pre
                    kernels.single_step(psi, work, t_lo, frac * dt, *args)
                weights = _jump_weights(psi, model, ops, t_jump)
                idx = _select_jump(len(ops), weights, stream)
                op = ops[idx]
                raw = op.apply_raw(MultiModeState(geom, psi))
                raw_n2 = float(np.vdot(raw.amplitudes, raw.amplitudes).real)
                if not raw_n2 > 0.0:
                    raise EngineError(
                        f"jump operator {op.tag} annihilated the state")
                psi = raw.amplitudes / math.sqrt(raw_n2)
                jumps.append((t_jump, op.tag))
                eps = stream.random()
                norm2 = 1.0
                if frac < 1.0:
                    norm2 = kernels.single_step(psi, work, t_jump,
                                                (1.0 - frac) * dt, *args)
        record(cp_idx, norm2)
    return obs_values, jumps, states, norm2, max_dp


def evolve_trajectory(initial: MultiModeState, model: NetworkModel,
                      grid: TimeGrid, stream: np.random.Generator,
                      observables=(), decay_warn: float = DECAY_WARN_DEFAULT,
                      decay_error: float = DECAY_ERROR_DEFAULT
                      ) -> TrajectoryResult:
    """Run one trajectory, keeping normalized checkpoint states."""
    if initial.geometry != model.geometry:
        raise ValueError("geometry mismatch")
    if not initial.is_normalized(tol=1e-8):
        raise ValueError("initial state must be normalized")
    _obs, jumps, states, final_norm2, max_dp = _run_single(
        initial.amplitudes, model, grid, stream, tuple(observables),
        store_states=True, decay_warn=decay_warn, decay_error=decay_error)
    if max_dp > decay_warn:
        warnings.warn(
            f"max per-step norm loss {max_dp:.3g} exceeds {decay_warn}; "
            "jump timing is resolved to about one step", StepDecayWarning)
    return TrajectoryResult(grid.times, states, jumps, final_norm2, max_dp)


@dataclass
class EnsembleStats:
    """Per-checkpoint observable means and standard errors.

    Sums and squared sums are kept so that disjoint ensembles merge into
    exactly pooled statistics.  `states`, when present, holds normalized
    checkpoint states of the first stored trajectories, shape
    (n_stored, n_checkpoints, D).
    """

    times: np.ndarray
    names: tuple[str, ...]
    n_traj: int
    seed: int
    obs_sum: np.ndarray     # (n_cp, n_obs)
    obs_sumsq: np.ndarray   # (n_cp, n_obs)
    jump_counts: np.ndarray
    max_step_decay: float
    states: np.ndarray | None = None

    @property
    def mean(self) -> np.ndarray:
        return self.obs_sum / self.n_traj

    @property
    def variance(self) -> np.ndarray:
        if self.n_traj < 2:
            return np.full_like(self.obs_sum, np.nan)
        mean = self.mean
        v = (self.obs_sumsq - self.n_traj * mean * mean) / (self.n_traj - 1)
        return np.maximum(v, 0.0)

    @property
    def stderr(self) -> np.ndarray | None:
        """Standard error of the mean; None for a single trajectory."""
        if self.n_traj < 2:
            return None
        return np.sqrt(self.variance / self.n_traj)

    def column(self, name: str) -> int:
        return self.names.index(name)

    def merge(self, other: "EnsembleStats") -> "EnsembleStats":
        if self.names != other.names or self.times.shape != other.times.shape:
            raise ValueError("cannot merge ensembles with different layouts")
        states = None
        if self.states is not None and other.states is not None:
            states = np.concatenate([self.states, other.states], axis=0)
        return EnsembleStats(
            times=self.times, names=self.names,
            n_traj=self.n_traj + other.n_traj, seed=self.seed,
            obs_sum=self.obs_sum + other.obs_sum,
            obs_sumsq=self.obs_sumsq + other.obs_sumsq,
            jump_counts=np.concatenate([self.jump_counts, other.jump_counts]),
            max_step_decay=max(self.max_step_decay, other.max_step_decay),
            states=states)


def _run_chunk(payload):
    (model, initial_amps, grid, seed, start, stop, observables,
     store_upto, decay_warn, decay_error) = payload
    n_cp = len(grid.checkpoint_steps)
    obs = np.empty((stop - start, n_cp, len(observables)), dtype=np.float64)
    jump_counts = np.empty(stop - start, dtype=np.int64)
    stored = []
    max_dp = 0.0
    for idx in range(start, stop):
        stream = trajectory_stream(seed, idx)
        keep = idx < store_upto
        try:
            values, jumps, states, _n2, dp = _run_single(
                initial_amps, model, grid, stream, observables,
                store_states=keep, decay_warn=decay_warn,
                decay_error=decay_error)
        except EngineError as exc:
            raise EngineError(f"trajectory {idx}: {exc}") from exc
        obs[idx - start] = values
        jump_counts[idx - start] = len(jumps)
        max_dp = max(max_dp, dp)
        if keep:
            stored.append(np.stack([s.amplitudes for s in states]))
    states_arr = np.stack(stored) if stored else None
    return start, obs, jump_counts, states_arr, max_dp


def run_ensemble(initial: MultiModeState, model: NetworkModel, grid: TimeGrid,
                 n_traj: int, seed: int, observables=(), workers: int = 1,
                 store_states: int = 0,
                 decay_warn: float = DECAY_WARN_DEFAULT,
                 decay_error: float = DECAY_ERROR_DEFAULT) -> EnsembleStats:
    """Run a seeded trajectory ensemble and reduce registered observables.

    Trajectory k always uses the stream keyed by (seed, k); the reduction is
    performed in trajectory order, so the result does not depend on
    `workers`.  The first min(store_states, n_traj) trajectories keep
    normalized checkpoint states for purity estimation.
    """
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    if initial.geometry != model.geometry:
        raise ValueError("geometry mismatch")
    if not initial.is_normalized(tol=1e-8):
        raise ValueError("initial state must be normalized")
    observables = tuple(observables)
    store_upto = min(int(store_states), n_traj)

    n_chunks = max(1, min(n_traj, 4 * workers if workers > 1 else 1))
    bounds = np.linspace(0, n_traj, n_chunks + 1).astype(int)
    payloads = [(model, initial.amplitudes, grid, seed, int(a), int(b),
                 observables, store_upto, decay_warn, decay_error)
                for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, payloads))
    else:
        results = [_run_chunk(p) for p in payloads]
    results.sort(key=lambda r: r[0])

    n_cp = len(grid.checkpoint_steps)
    all_obs = np.concatenate([r[1] for r in results], axis=0)
    jump_counts = np.concatenate([r[2] for r in results])
    state_blocks = [r[3] for r in results if r[3] is not None]
    states = np.concatenate(state_blocks, axis=0) if state_blocks else None
    max_dp = max(r[4] for r in results)
    if max_dp > decay_warn:
        warnings.warn(
            f"max per-step norm loss {max_dp:.3g} exceeds {decay_warn}",
            StepDecayWarning)

    return EnsembleStats(
        times=grid.times,
        names=tuple(obs.name for obs in observables),
        n_traj=n_traj, seed=seed,
        obs_sum=all_obs.sum(axis=0),
        obs_sumsq=(all_obs * all_obs).sum(axis=0),
        jump_counts=jump_counts,
        max_step_decay=max_dp,
        states=states)


@dataclass
class StepErrorEstimate:
    """Deviation between a run and its half-step rerun with shared noise."""

    times: np.ndarray
    per_checkpoint: np.ndarray  # RMS over observables, per checkpoint
    aggregate: float            # RMS over all checkpoints and observables
    coarse: EnsembleStats
    fine: EnsembleStats


def estimate_timestep_error(initial: MultiModeState, model: NetworkModel,
                            grid: TimeGrid, n_traj: int, seed: int,
                            observables=(), workers: int = 1,
                            store_states: int = 0,
                            decay_warn: float = DECAY_WARN_DEFAULT,
                            decay_error: float = DECAY_ERROR_DEFAULT
                            ) -> StepErrorEstimate:
    """RMS relative deviation of ensemble means at dt versus dt/2.

    Both runs reuse the same per-trajectory streams, so the jump thresholds
    and channel selections are consumed in the same order and sampling noise
    cancels; relative deviations are normalized per observable by the
    largest fine-grid mean magnitude over the checkpoints.
    """
    if grid.steps % 2 != 0:
        raise ValueError("timestep-error estimation needs an even step count")
    coarse = run_ensemble(initial, model, grid, n_traj, seed, observables,
                          workers=workers, store_states=store_states,
                          decay_warn=decay_warn, decay_error=decay_error)
    fine = run_ensemble(initial, model, grid.refined(), n_traj, seed,
                        observables, workers=workers, decay_warn=decay_warn,
                        decay_error=decay_error)
    diff = coarse.mean - fine.mean
    scale = np.maximum(np.max(np.abs(fine.mean), axis=0), 1e-300)
    rel = diff / scale[None, :]
    per_cp = np.sqrt(np.mean(rel * rel, axis=1))
    aggregate = float(np.sqrt(np.mean(rel * rel)))
    return StepErrorEstimate(grid.times, per_cp, aggregate, coarse, fine)
