"""Network model for coherently coupled DOPOs.

Holds the symmetric coupling matrix J, the (optionally time-scheduled)
scalar rates, derives the collapse-operator set of the master equation, and
applies the non-Hermitian effective-Hamiltonian generator to states.

Rate conventions (hbar = 1, dimensionless time in units of 1/gamma):
  one-photon channel   C = sqrt(2*gamma) a_i
  two-photon channel   C = g a_i^2
  coupling channel     C = sqrt(j_coef * |J_ij|) (a_i - sgn(J_ij) a_j),
                       one operator per ordered pair i != j with J_ij != 0
  H_sys = sum_i [ Delta_i n_i + i (lambda/2)(a_i†² - a_i²) ]

The ordered-pair coupling sum follows the master equation as printed, so
each unordered pair effectively contributes twice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .fock import FockGeometry, MultiModeState, SingleModeOp, apply_single_mode, digit_matrix

SCHEDULE_KINDS = ("constant", "linear", "tanh")


@dataclass(frozen=True)
class Schedule:
    """Scalar parameter, either constant or ramped over [0, t_max].

    linear:  v(t) = v_start + (v_end - v_start) * t / t_max
    tanh:    v(t) = v_start + (v_end - v_start) * tanh(sharpness * t / t_max),
             a fast initial rise that saturates near v_end (within 1% for
             sharpness >= 3).
    """

    kind: str
    v_start: float
    v_end: float = 0.0
    t_max: float = 1.0
    sharpness: float = 3.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind != "constant" and self.t_max <= 0:
            raise ValueError("ramp schedules need t_max > 0")
        if self.kind == "tanh" and self.sharpness <= 0:
            raise ValueError("tanh sharpness must be > 0")

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        return cls("constant", float(value), float(value))

    @classmethod
    def linear(cls, v_start: float, v_end: float, t_max: float) -> "Schedule":
        return cls("linear", float(v_start), float(v_end), float(t_max))

    @classmethod
    def tanh_ramp(cls, v_start: float, v_end: float, t_max: float,
                  sharpness: float = 3.0) -> "Schedule":
        return cls("tanh", float(v_start), float(v_end), float(t_max),
                   float(sharpness))

    def at(self, t: float) -> float:
        if self.kind == "constant":
            return self.v_start
        x = t / self.t_max
        if self.kind == "linear":
            return self.v_start + (self.v_end - self.v_start) * x
        return self.v_start + (self.v_end - self.v_start) * math.tanh(self.sharpness * x)

    def row(self) -> np.ndarray:
        code = SCHEDULE_KINDS.index(self.kind)
        return np.array([code, self.v_start, self.v_end,
                         self.t_max if self.kind != "constant" else 1.0,
                         self.sharpness], dtype=np.float64)


def _as_schedule(value) -> Schedule:
    if isinstance(value, Schedule):
        return value
    return Schedule.constant(float(value))


@dataclass
class NetworkModel:
    """Parameters of an M-mode coupled-DOPO network.

    `coupling` must be symmetric with zero diagonal.  With `alpha_lock` set,
    the pump follows lambda(t) = (alpha_lock * g(t))^2 so that sqrt(lambda)/g
    stays constant; the `pump` schedule is then ignored.
    """

    geometry: FockGeometry
    coupling: np.ndarray
    pump: Schedule = field(default_factory=lambda: Schedule.constant(0.0))
    gamma: Schedule = field(default_factory=lambda: Schedule.constant(0.0))
    two_photon: Schedule = field(default_factory=lambda: Schedule.constant(0.0))
    j_coef: Schedule = field(default_factory=lambda: Schedule.constant(1.0))
    detuning: np.ndarray | float = 0.0
    alpha_lock: float | None = None

    def __post_init__(self):
        m = self.geometry.modes
        j = np.array(self.coupling, dtype=np.float64)
        if j.shape != (m, m):
            raise ValueError(f"coupling matrix must be {m}x{m}")
        if not np.allclose(j, j.T, atol=1e-12):
            raise ValueError("coupling matrix must be symmetric")
        if np.any(np.abs(np.diag(j)) > 0):
            raise ValueError("coupling matrix must have zero diagonal")
        self.coupling = j
        self.pump = _as_schedule(self.pump)
        self.gamma = _as_schedule(self.gamma)
        self.two_photon = _as_schedule(self.two_photon)
        self.j_coef = _as_schedule(self.j_coef)
        delta = np.broadcast_to(np.asarray(self.detuning, dtype=np.float64),
                                (m,)).copy()
        self.detuning = delta
        self._kernel_args = None

    def pump_at(self, t: float) -> float:
        if self.alpha_lock is not None:
            return (self.alpha_lock * self.two_photon.at(t)) ** 2
        return self.pump.at(t)

    def pairs(self) -> list[tuple[int, int, float]]:
        """Unordered coupled pairs as (i, j, J_ij) with 1-based i < j."""
        m = self.geometry.modes
        return [(i + 1, j + 1, float(self.coupling[i, j]))
                for i in range(m) for j in range(i + 1, m)
                if self.coupling[i, j] != 0.0]

    def schedule_table(self) -> np.ndarray:
        return np.stack([self.pump.row(), self.gamma.row(),
                         self.two_photon.row(), self.j_coef.row()])

    def kernel_args(self) -> tuple:
        """Packed arrays consumed by the numba evolution kernels."""
        if self._kernel_args is None:
            geom = self.geometry
            nc = geom.cutoff
            pairs = self.pairs()
            pair_i = np.array([p[0] - 1 for p in pairs], dtype=np.int64)
            pair_j = np.array([p[1] - 1 for p in pairs], dtype=np.int64)
            pair_jval = np.array([p[2] for p in pairs], dtype=np.float64)
            wsum = np.abs(self.coupling).sum(axis=1)
            sq = np.sqrt(np.arange(nc + 2, dtype=np.float64))
            lock = -1.0 if self.alpha_lock is None else float(self.alpha_lock)
            self._kernel_args = (
                digit_matrix(geom), geom.strides(), self.detuning,
                wsum, pair_i, pair_j, pair_jval, sq,
                self.schedule_table(), lock, np.int64(nc),
            )
        return self._kernel_args

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_kernel_args"] = None  # rebuilt lazily in worker processes
        return state


@dataclass(frozen=True)
class JumpOperator:
    """One collapse operator C_n = prefactor(t) * raw operator."""

    kind: str          # "one-photon" | "two-photon" | "coupling"
    modes: tuple[int, ...]   # 1-based mode indices
    schedule: Schedule       # gamma / g / j_coef, by kind
    sign: float = 1.0        # sgn(J_ij) for coupling operators
    weight: float = 1.0      # |J_ij| for coupling operators

    @property
    def tag(self) -> str:
        if self.kind == "one-photon":
            return f"gamma:{self.modes[0]}"
        if self.kind == "two-photon":
            return f"g2:{self.modes[0]}"
        return f"J:{self.modes[0]}-{self.modes[1]}"

    def rate(self, t: float) -> float:
        """Squared prefactor: <C†C> = rate(t) * <raw† raw>."""
        v = self.schedule.at(t)
        if self.kind == "one-photon":
            return 2.0 * v
        if self.kind == "two-photon":
            return v * v
        return v * self.weight

    def prefactor(self, t: float) -> float:
        return math.sqrt(max(self.rate(t), 0.0))

    def apply_raw(self, state: MultiModeState) -> MultiModeState:
        """Apply the unscaled operator (a_i, a_i², or a_i - sgn(J) a_j)."""
        if self.kind == "one-photon":
            return apply_single_mode(state, SingleModeOp("a", self.modes[0]))
        if self.kind == "two-photon":
            return apply_single_mode(state, SingleModeOp("a2", self.modes[0]))
        i, j = self.modes
        ai = apply_single_mode(state, SingleModeOp("a", i))
        aj = apply_single_mode(state, SingleModeOp("a", j))
        return MultiModeState(state.geometry,
                              ai.amplitudes - self.sign * aj.amplitudes)

    def apply(self, state: MultiModeState, t: float) -> MultiModeState:
        raw = self.apply_raw(state)
        return MultiModeState(state.geometry,
                              self.prefactor(t) * raw.amplitudes)


@dataclass(frozen=True)
class JumpOperatorSet:
    """All collapse operators of the master equation for one model."""

    geometry: FockGeometry
    operators: tuple[JumpOperator, ...]

    def __len__(self):
        return len(self.operators)

    def __iter__(self):
        return iter(self.operators)


def _is_zero_schedule(s: Schedule) -> bool:
    return s.kind == "constant" and s.v_start == 0.0


def build_jump_set(model: NetworkModel) -> JumpOperatorSet:
    """Collapse operators reproducing every dissipative line of the master
    equation: M one-photon, M two-photon, and one coupling operator per
    ordered pair (i, j) with J_ij != 0.  Channels whose rate is identically
    zero are omitted."""
    ops: list[JumpOperator] = []
    m = model.geometry.modes
    if not _is_zero_schedule(model.gamma):
        for i in range(1, m + 1):
            ops.append(JumpOperator("one-photon", (i,), model.gamma))
    if not _is_zero_schedule(model.two_photon):
        for i in range(1, m + 1):
            ops.append(JumpOperator("two-photon", (i,), model.two_photon))
    if not _is_zero_schedule(model.j_coef):
        for i, j, jval in model.pairs():
            sign = 1.0 if jval > 0 else -1.0
            for a, b in ((i, j), (j, i)):
                ops.append(JumpOperator("coupling", (a, b), model.j_coef,
                                        sign=sign, weight=abs(jval)))
    return JumpOperatorSet(model.geometry, tuple(ops))


def apply_effective_hamiltonian(state: MultiModeState, model: NetworkModel,
                                t: float) -> MultiModeState:
    """Return (-i) H_eff |psi>: the deterministic part of d|psi>/dt."""
    if state.geometry != model.geometry:
        raise ValueError("geometry mismatch")
    out = np.empty_like(state.amplitudes)
    kernels.rhs(out, state.amplitudes, float(t), *model.kernel_args())
    return MultiModeState(model.geometry, out)


def alpha_from(pump: float, two_photon: float) -> float:
    """Characteristic coherent amplitude sqrt(lambda)/g."""
    if two_photon <= 0.0:
        raise ValueError("two-photon rate g must be > 0")
    if pump < 0.0:
        raise ValueError("pump strength must be >= 0")
    return math.sqrt(pump) / two_photon

def physical_to_reduced(gbar: float, epsilon: float, gamma1: float,
                        gamma2: float) -> tuple[float, float]:
    """Convert physical pump/coupling rates to the reduced (lambda, g)."""
    if gamma1 <= 0.0 or gamma2 <= 0.0:
        raise ValueError("decay rates must be > 0")
    lam = abs(gbar * epsilon) / (gamma1 * gamma2)
    g = math.sqrt(gbar * gbar / (2.0 * gamma1 * gamma2))
    return lam, g
