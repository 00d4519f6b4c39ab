"""Truncated multi-mode Fock space: states, elementary mode operators, overlaps.

States live in the tensor product of M single-mode number bases, each
truncated to `cutoff` levels (0 .. cutoff-1).  Mode 1 is the slowest-varying
digit of the flat index (row-major), so the flat amplitude vector of a
product state equals the chained Kronecker product of its factors.

Operators are applied by strided index arithmetic; no dense D x D matrix is
ever materialized.  Raising past the top retained level annihilates the
component (silent truncation).
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

#: pre-normalization tail mass above which a truncated coherent/cat state is
#: considered badly resolved by the chosen cutoff
LEAKAGE_WARN_THRESHOLD = 1e-2

OP_KINDS = ("a", "adag", "n", "a2", "adag2", "nn1")


class TruncationWarning(UserWarning):
    """Cutoff too small for the requested coherent amplitude."""


@dataclass(frozen=True)
class FockGeometry:
    """Shape of the truncated M-mode Fock space."""

    modes: int
    cutoff: int

    def __post_init__(self):
        if self.modes < 1:
            raise ValueError("modes must be >= 1")
        if self.cutoff < 2:
            raise ValueError("cutoff must be >= 2")

    @property
    def dimension(self) -> int:
        return self.cutoff ** self.modes

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cutoff,) * self.modes

    def stride(self, mode: int) -> int:
        """Flat-index stride of a 1-based mode index."""
        self._check_mode(mode)
        return self.cutoff ** (self.modes - mode)

    def strides(self) -> np.ndarray:
        return np.array([self.stride(m) for m in range(1, self.modes + 1)],
                        dtype=np.int64)

    def encode(self, digits) -> int:
        digits = tuple(digits)
        if len(digits) != self.modes:
            raise ValueError("wrong number of occupation digits")
        k = 0
        for d in digits:
            if not 0 <= d < self.cutoff:
                raise ValueError(f"occupation {d} outside [0, {self.cutoff})")
            k = k * self.cutoff + int(d)
        return k

    def decode(self, k: int) -> tuple[int, ...]:
        if not 0 <= k < self.dimension:
            raise ValueError("flat index out of range")
        digits = []
        for m in range(1, self.modes + 1):
            digits.append((k // self.stride(m)) % self.cutoff)
        return tuple(digits)

    def digit_array(self, mode: int) -> np.ndarray:
        """Occupation of `mode` (1-based) for every flat index, shape (D,)."""
        self._check_mode(mode)
        return _digit_array(self, mode)

    def _check_mode(self, mode: int):
        if not 1 <= mode <= self.modes:
            raise ValueError(f"mode {mode} outside [1, {self.modes}]")


@functools.lru_cache(maxsize=64)
def _digit_array(geometry: FockGeometry, mode: int) -> np.ndarray:
    k = np.arange(geometry.dimension, dtype=np.int64)
    return (k // geometry.stride(mode)) % geometry.cutoff


@functools.lru_cache(maxsize=32)
def digit_matrix(geometry: FockGeometry) -> np.ndarray:
    """Occupation digits for every flat index, shape (D, M), int16."""
    cols = [geometry.digit_array(m).astype(np.int16)
            for m in range(1, geometry.modes + 1)]
    return np.ascontiguousarray(np.stack(cols, axis=1))


@dataclass
class MultiModeState:
    """Complex amplitude vector over the truncated M-mode number basis."""

    geometry: FockGeometry
    amplitudes: np.ndarray
    _norm2: float | None = field(default=None, repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128).ravel()
        if amps.size != self.geometry.dimension:
            raise ValueError("amplitude vector does not match geometry")
        self.amplitudes = amps

    @property
    def norm2(self) -> float:
        if self._norm2 is None:
            self._norm2 = float(np.vdot(self.amplitudes, self.amplitudes).real)
        return self._norm2

    def is_normalized(self, tol: float = 1e-10) -> bool:
        return abs(self.norm2 - 1.0) < tol

    def normalized(self) -> "MultiModeState":
        n2 = self.norm2
        if n2 <= 0.0:
            raise ValueError("cannot normalize a zero state")
        return MultiModeState(self.geometry, self.amplitudes / math.sqrt(n2),
                              _norm2=1.0)

    def copy(self) -> "MultiModeState":
        return MultiModeState(self.geometry, self.amplitudes.copy(),
                              _norm2=self._norm2)


def basis_state(geometry: FockGeometry, digits) -> MultiModeState:
    """Number state |n_1, ..., n_M>."""
    amps = np.zeros(geometry.dimension, dtype=np.complex128)
    amps[geometry.encode(digits)] = 1.0
    return MultiModeState(geometry, amps, _norm2=1.0)


@dataclass(frozen=True)
class SingleModeOp:
    """Elementary operator on one mode: a, a†, n, a², a†², or n(n-1)."""

    kind: str
    mode: int

    def __post_init__(self):
        if self.kind not in OP_KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")


def coherent_state(alpha: complex, cutoff: int) -> tuple[np.ndarray, float]:
    """Truncated coherent state |alpha>, renormalized after truncation.

    Returns (amplitudes, leakage) where leakage is the pre-normalization
    tail mass P(n >= cutoff) of the exact photon-number distribution.
    Warns when leakage exceeds LEAKAGE_WARN_THRESHOLD.
    """
    if cutoff < 2:
        raise ValueError("cutoff must be >= 2")
    alpha = complex(alpha)
    n = np.arange(cutoff)
    mag = abs(alpha)
    if mag == 0.0:
        amps = np.zeros(cutoff, dtype=np.complex128)
        amps[0] = 1.0
        return amps, 0.0
    phase = alpha / mag
    # log-space magnitudes: |c_n| = e^{-|a|^2/2} |a|^n / sqrt(n!)
    log_mag = -0.5 * mag * mag + n * math.log(mag) - 0.5 * gammaln(n + 1.0)
    amps = np.exp(log_mag) * phase ** n
    kept = float(np.sum(np.abs(amps) ** 2))
    leakage = max(0.0, 1.0 - kept)
    if leakage > LEAKAGE_WARN_THRESHOLD:
        warnings.warn(
            f"coherent state |alpha|={mag:.3g} leaks {leakage:.3g} of its "
            f"photon distribution past cutoff {cutoff}", TruncationWarning)
    amps /= math.sqrt(kept)
    return amps, leakage


def cat_state(alpha: complex, cutoff: int) -> tuple[np.ndarray, float]:
    """Truncated even cat state proportional to |alpha> + |-alpha>.

    Odd-number amplitudes are exactly zero.  Leakage is the relative tail
    mass of the exact (untruncated) cat state lost to the cutoff.
    """
    if cutoff < 2:
        raise ValueError("cutoff must be >= 2")
    alpha = complex(alpha)
    mag = abs(alpha)
    if mag == 0.0:
        amps = np.zeros(cutoff, dtype=np.complex128)
        amps[0] = 1.0
        return amps, 0.0
    n = np.arange(cutoff)
    phase = alpha / mag
    log_mag = -0.5 * mag * mag + n * math.log(mag) - 0.5 * gammaln(n + 1.0)
    amps = 2.0 * np.exp(log_mag) * phase ** n
    amps[1::2] = 0.0
    kept = float(np.sum(np.abs(amps) ** 2))
    exact = 2.0 * (1.0 + math.exp(-2.0 * mag * mag))
    leakage = max(0.0, 1.0 - kept / exact)
    if leakage > LEAKAGE_WARN_THRESHOLD:
        warnings.warn(
            f"cat state |alpha|={mag:.3g} leaks {leakage:.3g} of its "
            f"photon distribution past cutoff {cutoff}", TruncationWarning)
    amps /= math.sqrt(kept)
    return amps, leakage


def product_state(factors) -> MultiModeState:
    """Tensor product of single-mode amplitude vectors (mode 1 first)."""
    factors = [np.asarray(f, dtype=np.complex128).ravel() for f in factors]
    if not factors:
        raise ValueError("need at least one factor")
    cutoff = factors[0].size
    if any(f.size != cutoff for f in factors):
        raise ValueError("all factors must share the same cutoff")
    amps = factors[0]
    for f in factors[1:]:
        amps = np.kron(amps, f)
    return MultiModeState(FockGeometry(len(factors), cutoff), amps)


def _mode_view(amps: np.ndarray, geometry: FockGeometry, mode: int):
    pre = geometry.cutoff ** (mode - 1)
    post = geometry.cutoff ** (geometry.modes - mode)
    return amps.reshape(pre, geometry.cutoff, post)


def apply_single_mode(state: MultiModeState, op: SingleModeOp) -> MultiModeState:
    """Apply an elementary operator to one mode, cost O(D)."""
    geom = state.geometry
    geom._check_mode(op.mode)
    nc = geom.cutoff
    out = np.zeros_like(state.amplitudes)
    v = _mode_view(state.amplitudes, geom, op.mode)
    o = _mode_view(out, geom, op.mode)
    n = np.arange(nc, dtype=np.float64)
    if op.kind == "a":
        o[:, :-1, :] = v[:, 1:, :] * np.sqrt(n[1:])[None, :, None]
    elif op.kind == "adag":
        o[:, 1:, :] = v[:, :-1, :] * np.sqrt(n[1:])[None, :, None]
    elif op.kind == "n":
        o[:] = v * n[None, :, None]
    elif op.kind == "a2":
        w = np.sqrt(n[2:] * (n[2:] - 1.0))
        o[:, :-2, :] = v[:, 2:, :] * w[None, :, None]
    elif op.kind == "adag2":
        w = np.sqrt(n[2:] * (n[2:] - 1.0))
        o[:, 2:, :] = v[:, :-2, :] * w[None, :, None]
    elif op.kind == "nn1":
        o[:] = v * (n * (n - 1.0))[None, :, None]
    return MultiModeState(geom, out)


def _add_hop(out_t: np.ndarray, src_t: np.ndarray, geometry: FockGeometry,
             up: int, down: int, scale: float = 1.0):
    """out += scale * (a_up† a_down) src, on tensor views of shape (Nc,)*M."""
    nc = geometry.cutoff
    m = geometry.modes
    ax_u, ax_d = up - 1, down - 1
    sl_out = [slice(None)] * m
    sl_src = [slice(None)] * m
    sl_out[ax_u] = slice(1, nc)
    sl_src[ax_u] = slice(0, nc - 1)
    sl_out[ax_d] = slice(0, nc - 1)
    sl_src[ax_d] = slice(1, nc)
    w = np.sqrt(np.arange(1, nc, dtype=np.float64))

    def on_axis(axis):
        shape = [1] * m
        shape[axis] = nc - 1
        return w.reshape(shape)

    out_t[tuple(sl_out)] += scale * src_t[tuple(sl_src)] * on_axis(ax_u) * on_axis(ax_d)


def apply_two_mode_hop(state: MultiModeState, i: int, j: int,
                       sign: int = 1) -> MultiModeState:
    """Apply (a_i† a_j + sign * a_j† a_i) by strided index arithmetic."""
    geom = state.geometry
    geom._check_mode(i)
    geom._check_mode(j)
    if i == j:
        raise ValueError("hop requires two distinct modes")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    out = np.zeros_like(state.amplitudes)
    src_t = state.amplitudes.reshape(geom.shape)
    out_t = out.reshape(geom.shape)
    _add_hop(out_t, src_t, geom, up=i, down=j)
    _add_hop(out_t, src_t, geom, up=j, down=i, scale=float(sign))
    return MultiModeState(geom, out)


def inner(state_a: MultiModeState, state_b: MultiModeState) -> complex:
    """<a|b>, conjugate-linear in the first argument."""
    if state_a.geometry != state_b.geometry:
        raise ValueError("geometry mismatch")
    return complex(np.vdot(state_a.amplitudes, state_b.amplitudes))
