"""Dense reference implementations for cross-checking the trajectory engine.

Everything here is a direct transcription of the underlying equations with
dense Kronecker-product operators and a fixed-step RK4 integrator.  It is
deliberately slow and memory-hungry (the density matrix is D x D) and is
guarded to small Hilbert spaces; it exists only to validate the fast path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .fock import FockGeometry
from .model import NetworkModel, build_jump_set
from .observables import hermite_functions

DENSE_DIM_LIMIT = 4096
TRACE_DRIFT_LIMIT = 1e-6


def annihilation(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff, dtype=np.float64)), 1)


def mode_operator(geometry: FockGeometry, op: np.ndarray,
                  mode: int) -> np.ndarray:
    """Embed a single-mode matrix into the full space by Kronecker products."""
    geometry._check_mode(mode)
    full = np.eye(1)
    eye = np.eye(geometry.cutoff)
    for m in range(1, geometry.modes + 1):
        full = np.kron(full, op if m == mode else eye)
    return full


def _check_dense(geometry: FockGeometry):
    if geometry.dimension > DENSE_DIM_LIMIT:
        raise ValueError(
            f"dense reference limited to dimension {DENSE_DIM_LIMIT}")


def collapse_matrices(model: NetworkModel, t: float) -> list[np.ndarray]:
    """All collapse operators as dense matrices, prefactors evaluated at t."""
    _check_dense(model.geometry)
    a_ops = [mode_operator(model.geometry, annihilation(model.geometry.cutoff), m)
             for m in range(1, model.geometry.modes + 1)]
    mats = []
    for op in build_jump_set(model):
        pre = op.prefactor(t)
        if op.kind == "one-photon":
            mats.append(pre * a_ops[op.modes[0] - 1])
        elif op.kind == "two-photon":
            mats.append(pre * (a_ops[op.modes[0] - 1] @ a_ops[op.modes[0] - 1]))
        else:
            i, j = op.modes
            mats.append(pre * (a_ops[i - 1] - op.sign * a_ops[j - 1]))
    return mats


def system_hamiltonian(model: NetworkModel, t: float) -> np.ndarray:
    """Dense H_sys = sum_i [Delta_i n_i + i (lambda/2)(a_i†² - a_i²)]
    + j_coef * sum_{i<j} ... (the coupling number and hop terms live in the
    Lindblad part; only detuning and pump are Hamiltonian here)."""
    geom = model.geometry
    _check_dense(geom)
    lam = model.pump_at(t)
    h = np.zeros((geom.dimension, geom.dimension), dtype=np.complex128)
    a1 = annihilation(geom.cutoff)
    for m in range(1, geom.modes + 1):
        a = mode_operator(geom, a1, m)
        ad = a.conj().T
        h += model.detuning[m - 1] * (ad @ a)
        h += 0.5j * lam * (ad @ ad - a @ a)
    return h


def effective_generator(model: NetworkModel, t: float) -> np.ndarray:
    """Dense matrix G with d|psi>/dt = G |psi> between jumps:
    G = -i (H_sys - (i/2) sum_n C_n† C_n)."""
    h = system_hamiltonian(model, t)
    for c in collapse_matrices(model, t):
        h = h - 0.5j * (c.conj().T @ c)
    return -1j * h


def lindblad_rhs(model: NetworkModel, rho: np.ndarray, t: float) -> np.ndarray:
    """drho/dt of the full master equation, literal transcription."""
    h = system_hamiltonian(model, t)
    out = -1j * (h @ rho - rho @ h)
    for c in collapse_matrices(model, t):
        cd = c.conj().T
        out += c @ rho @ cd - 0.5 * (cd @ c @ rho + rho @ cd @ c)
    return out


@dataclass(frozen=True)
class DensityMatrix:
    geometry: FockGeometry
    rho: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    def purity(self) -> float:
        return float(np.trace(self.rho @ self.rho).real)

    def mode_number(self, mode: int) -> float:
        n = self.geometry.digit_array(mode)
        return float(np.sum(n * np.diag(self.rho).real))

    def reduced(self, mode: int) -> np.ndarray:
        """Partial trace down to one mode."""
        geom = self.geometry
        m = geom.modes
        t = self.rho.reshape(geom.shape + geom.shape)
        # bring the kept mode's ket and bra axes to the front
        t = np.moveaxis(t, (mode - 1, m + mode - 1), (0, 1))
        rest = geom.dimension // geom.cutoff
        t = t.reshape(geom.cutoff, geom.cutoff, rest, rest)
        return np.einsum("nmkk->nm", t)


def integrate_master_equation(model: NetworkModel, rho0: np.ndarray,
                              t_max: float, steps: int,
                              sample_times=None) -> list:
    """RK4 integration of the master equation.

    Returns [(t, DensityMatrix)] at the requested sample times (defaults to
    the final time only).  Aborts if the trace drifts by more than
    TRACE_DRIFT_LIMIT per unit time, which signals an unstable step size.
    """
    geom = model.geometry
    _check_dense(geom)
    rho = np.array(rho0, dtype=np.complex128)
    if rho.shape != (geom.dimension, geom.dimension):
        raise ValueError("density matrix shape does not match geometry")
    dt = t_max / steps
    if sample_times is None:
        sample_times = [t_max]
    targets = sorted(set(round(t / dt) for t in sample_times))
    if any(not 0 <= k <= steps for k in targets):
        raise ValueError("sample times must lie in [0, t_max]")
    out = []
    if 0 in targets:
        out.append((0.0, DensityMatrix(geom, rho.copy())))
    for step in range(steps):
        t = step * dt
        k1 = lindblad_rhs(model, rho, t)
        k2 = lindblad_rhs(model, rho + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = lindblad_rhs(model, rho + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = lindblad_rhs(model, rho + dt * k3, t + dt)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        drift = abs(np.trace(rho).real - 1.0)
        if drift > TRACE_DRIFT_LIMIT * (step + 1) * dt + 1e-9:
            raise RuntimeError(
                f"trace drift {drift:.3g} at t={t + dt:.4g}; step too large")
        if step + 1 in targets:
            out.append(((step + 1) * dt, DensityMatrix(geom, rho.copy())))
    return out


def integrate_mean_field(model: NetworkModel, alpha0, t_max: float,
                         steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Classical mean-field amplitudes alpha_i(t) by RK4.

    d alpha_i/dt = -gamma alpha_i + sum_k j_coef (J_ik alpha_k
                   - |J_ik| alpha_i) + alpha_i* (lambda - g² alpha_i²)
    Returns (times, alphas) with alphas of shape (steps + 1, M).
    """
    m = model.geometry.modes
    alpha = np.array(alpha0, dtype=np.complex128).reshape(m)
    j = model.coupling
    wsum = np.abs(j).sum(axis=1)

    def rhs(a, t):
        lam = model.pump_at(t)
        gam = model.gamma.at(t)
        g = model.two_photon.at(t)
        jc = model.j_coef.at(t)
        return (-gam * a + jc * (j @ a - wsum * a)
                + np.conj(a) * (lam - g * g * a * a))

    dt = t_max / steps
    times = np.linspace(0.0, t_max, steps + 1)
    out = np.empty((steps + 1, m), dtype=np.complex128)
    out[0] = alpha
    for step in range(steps):
        t = step * dt
        k1 = rhs(alpha, t)
        k2 = rhs(alpha + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = rhs(alpha + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = rhs(alpha + dt * k3, t + dt)
        alpha = alpha + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        out[step + 1] = alpha
    return times, out


def hermite_half_integral_quad(m: int, mp: int) -> float:
    """L+(m, m') by adaptive numerical quadrature (independent oracle)."""

    def integrand(x):
        xs = np.array([x])
        phi = hermite_functions(max(m, mp) + 1, xs)
        return float(phi[m, 0] * phi[mp, 0])

    val, _ = quad(integrand, 0.0, np.inf, limit=200)
    return val


def quadrature_oracle(rho_mode: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Single-mode P(x) from a reduced density matrix, direct double sum."""
    nc = rho_mode.shape[0]
    phi = hermite_functions(nc, x)
    out = np.zeros(x.size)
    for n in range(nc):
        for m in range(nc):
            out += (rho_mode[n, m] * phi[n] * phi[m]).real
    return out
