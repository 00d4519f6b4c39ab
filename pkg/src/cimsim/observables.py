"""Spin readout, quadrature distributions, purity, and photon moments.

The spin of mode i is the sign of its x quadrature.  With dimensionless
oscillator eigenfunctions psi_n(x) = (2^n n! sqrt(pi))^{-1/2} H_n(x)
exp(-x^2/2), the probability of a joint sign configuration reduces to a
contraction of the state with per-mode half-line overlap matrices

  L+-(m, m') = integral of psi_m(x) psi_{m'}(x) over x >= 0 (resp. x < 0),

evaluated in closed form with log-factorial arithmetic.  x = 0 counts as
spin up.  In this convention a coherent state of real amplitude a peaks at
x = sqrt(2) a.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .fock import MultiModeState

SpinConfig = tuple[int, ...]

_NORM_TOL = 1e-6
_MAX_TABLE_CUTOFF = 170


@dataclass(frozen=True)
class HermiteHalfTable:
    """Half-line overlap matrices of oscillator eigenfunctions."""

    cutoff: int
    plus: np.ndarray
    minus: np.ndarray

    def matrix(self, sign: int) -> np.ndarray:
        return self.plus if sign > 0 else self.minus


def _zero_values(cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """psi_n(0) and psi_n'(0) for n < cutoff (zero for the wrong parity)."""
    vals = np.zeros(cutoff + 2)
    vals[0] = math.pi ** -0.25
    for n in range(2, cutoff + 2, 2):
        vals[n] = -math.sqrt((n - 1.0) / n) * vals[n - 2]
    derivs = np.zeros(cutoff)
    for n in range(1, cutoff, 2):
        derivs[n] = (math.sqrt(n / 2.0) * vals[n - 1]
                     - math.sqrt((n + 1) / 2.0) * vals[n + 1])
    return vals[:cutoff], derivs


def _half_line_element(m: int, mp: int, vals: np.ndarray,
                       derivs: np.ndarray) -> float:
    """L+(m, m') for opposite-parity m, m', from the boundary-term identity.

    Integrating the Wronskian of the two oscillator equations over the
    half-line leaves only the x = 0 boundary term; the wrong-parity factors
    vanish at zero, leaving

      L+(m, m') = psi_even(0) * psi_odd'(0) / (2 (odd - even)).

    No cancellation occurs, so the table stays accurate at high order.
    """
    if m % 2 == 0:
        even, odd = m, mp
    else:
        even, odd = mp, m
    return vals[even] * derivs[odd] / (2.0 * (odd - even))


@functools.lru_cache(maxsize=16)
def build_hermite_half_table(cutoff: int) -> HermiteHalfTable:
    """Tabulate L+ and L- for all m, m' below the cutoff."""
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    if cutoff > _MAX_TABLE_CUTOFF:
        raise ValueError(f"cutoff above {_MAX_TABLE_CUTOFF} is not supported")
    vals, derivs = _zero_values(cutoff)
    plus = np.empty((cutoff, cutoff), dtype=np.float64)
    for m in range(cutoff):
        for mp in range(m, cutoff):
            if (m + mp) % 2 == 0:
                # even-parity integrand: half-line integral is exactly
                # half the orthonormality integral
                val = 0.5 if m == mp else 0.0
            else:
                val = _half_line_element(m, mp, vals, derivs)
            plus[m, mp] = plus[mp, m] = val
    parity = (-1.0) ** (np.add.outer(np.arange(cutoff), np.arange(cutoff)))
    minus = parity * plus
    return HermiteHalfTable(cutoff, plus, minus)


def _check_normalized(state: MultiModeState):
    if abs(state.norm2 - 1.0) > _NORM_TOL:
        raise ValueError("state must be normalized")


def config_probability(state: MultiModeState, config,
                       table: HermiteHalfTable) -> float:
    """Probability that every mode's quadrature sign matches `config`.

    Computed as <psi| (tensor of per-mode half-line projectors) |psi> by
    sequential per-mode contraction; never forms the D x D tensor.
    """
    geom = state.geometry
    config = tuple(config)
    if len(config) != geom.modes:
        raise ValueError("config length must equal the mode count")
    if table.cutoff != geom.cutoff:
        raise ValueError("table cutoff does not match the state")
    _check_normalized(state)
    phi = state.amplitudes.reshape(geom.shape)
    for axis, s in enumerate(config):
        mat = table.matrix(1 if s > 0 else -1)
        phi = np.moveaxis(np.tensordot(mat, phi, axes=(1, axis)), 0, axis)
    val = float(np.vdot(state.amplitudes, phi.ravel()).real)
    if val < -1e-8 or val > 1.0 + 1e-8:
        raise ValueError(f"projector expectation {val} outside [0, 1]")
    return min(max(val, 0.0), 1.0)


def success_rate(state: MultiModeState, ground_set,
                 table: HermiteHalfTable) -> float:
    """Total sign-configuration probability on the Ising ground set."""
    ground_set = list(ground_set)
    if not ground_set:
        raise ValueError("ground set is empty")
    return sum(config_probability(state, cfg, table) for cfg in ground_set)


def hermite_functions(n_max: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal oscillator eigenfunctions psi_0..psi_{n_max-1} on a grid.

    Uses the stable normalized three-term recurrence.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((n_max, x.size), dtype=np.float64)
    out[0] = math.pi ** -0.25 * np.exp(-0.5 * x * x)
    if n_max > 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(2, n_max):
        out[n] = (math.sqrt(2.0 / n) * x * out[n - 1]
                  - math.sqrt((n - 1) / n) * out[n - 2])
    return out


def reduced_density(state: MultiModeState, mode: int) -> np.ndarray:
    """Single-mode reduced density matrix (cutoff x cutoff)."""
    geom = state.geometry
    geom._check_mode(mode)
    tensor = state.amplitudes.reshape(geom.shape)
    a = np.moveaxis(tensor, mode - 1, 0).reshape(geom.cutoff, -1)
    return a @ a.conj().T


def quadrature_distribution(state: MultiModeState, mode: int,
                            x: np.ndarray) -> np.ndarray:
    """Marginal x-quadrature probability density of one mode."""
    _check_normalized(state)
    rho = reduced_density(state, mode)
    phi = hermite_functions(state.geometry.cutoff, x)
    return np.einsum("nm,ni,mi->i", rho, phi, phi).real


def mean_photon(state: MultiModeState, mode: int) -> float:
    """<a_i† a_i> of one mode."""
    _check_normalized(state)
    n = state.geometry.digit_array(mode)
    return float(np.sum(n * np.abs(state.amplitudes) ** 2))


@dataclass(frozen=True)
class PurityEstimate:
    value: float
    stderr: float | None = None


def purity(states: np.ndarray, pair_budget: int | None = None,
           exact_limit: int = 2000, seed: int = 0,
           block: int = 256) -> PurityEstimate:
    """Tr(rho²) of the trajectory-averaged density matrix.

    `states` holds normalized state vectors, shape (N, D).  Up to
    `exact_limit` trajectories the full Gram double sum
    (1/N²) sum_ij |<psi_i|psi_j>|² is evaluated in blocks; beyond that,
    `pair_budget` off-diagonal pairs are sampled uniformly (the diagonal is
    always included exactly) and a standard error is reported.
    """
    states = np.asarray(states)
    if states.ndim != 2 or states.shape[0] < 1:
        raise ValueError("need an (N, D) array of state vectors")
    n = states.shape[0]
    if n == 1:
        return PurityEstimate(1.0, None)
    if n <= exact_limit or pair_budget is None:
        total = 0.0
        conj = states.conj()
        for a in range(0, n, block):
            g = conj[a:a + block] @ states.T
            total += float(np.sum(np.abs(g) ** 2))
        return PurityEstimate(total / (n * n), None)
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    n_pairs = int(pair_budget)
    ii = rng.integers(0, n, size=n_pairs)
    jj = rng.integers(0, n - 1, size=n_pairs)
    jj = np.where(jj >= ii, jj + 1, jj)  # uniform over ordered i != j
    vals = np.empty(n_pairs, dtype=np.float64)
    for a in range(0, n_pairs, 4096):
        sl = slice(a, min(a + 4096, n_pairs))
        ov = np.einsum("kd,kd->k", states[ii[sl]].conj(), states[jj[sl]])
        vals[a:a + ov.size] = np.abs(ov) ** 2
    mu = float(vals.mean())
    sem = float(vals.std(ddof=1) / math.sqrt(n_pairs))
    off_weight = 1.0 - 1.0 / n
    return PurityEstimate(1.0 / n + off_weight * mu, off_weight * sem)


def ensemble_purity(stats_states: np.ndarray, pair_budget: int | None = None,
                    exact_limit: int = 2000, seed: int = 0):
    """Purity at every checkpoint from stored states (N, n_cp, D)."""
    n_cp = stats_states.shape[1]
    return [purity(stats_states[:, c, :], pair_budget=pair_budget,
                   exact_limit=exact_limit, seed=seed + c)
            for c in range(n_cp)]


class Observable:
    """Named scalar functional of a normalized state."""

    name: str

    def evaluate(self, state: MultiModeState) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class MeanPhoton(Observable):
    mode: int

    @property
    def name(self) -> str:
        return f"mean_photon_{self.mode}"

    def evaluate(self, state: MultiModeState) -> float:
        return mean_photon(state, self.mode)


@dataclass(frozen=True)
class SignProbability(Observable):
    """Probability that one mode's quadrature sign is positive."""

    mode: int

    @property
    def name(self) -> str:
        return f"sign_plus_{self.mode}"

    def evaluate(self, state: MultiModeState) -> float:
        geom = state.geometry
        table = build_hermite_half_table(geom.cutoff)
        config = tuple(1 if m == self.mode else 0 for m in range(1, geom.modes + 1))
        # contract only the selected mode; others get the identity
        phi = state.amplitudes.reshape(geom.shape)
        axis = self.mode - 1
        phi = np.moveaxis(np.tensordot(table.plus, phi, axes=(1, axis)), 0, axis)
        val = float(np.vdot(state.amplitudes, phi.ravel()).real)
        return min(max(val, 0.0), 1.0)


@dataclass(frozen=True)
class SuccessRate(Observable):
    """Ground-set quadrature-sign probability for a fixed problem."""

    ground_set: tuple[SpinConfig, ...]

    @property
    def name(self) -> str:
        return "success_rate"

    def evaluate(self, state: MultiModeState) -> float:
        table = build_hermite_half_table(state.geometry.cutoff)
        return success_rate(state, self.ground_set, table)
