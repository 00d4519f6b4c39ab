"""Numba kernels for the trajectory hot path.

All kernels operate on flat complex amplitude vectors; occupation digits are
looked up from a precomputed (D, M) table.  The right-hand side evaluated
here is d|psi>/dt = (-i) H_eff |psi| with

  diagonal:  -(gamma n + (g²/2) n(n-1) + j_coef * w_m n) - i Delta_m n, summed
             over modes, where w_m = sum_j |J_mj| collects the coupling
             number terms of the ordered-pair Lindblad sum,
  pump:      +(lambda/2)(a†² - a²) per mode,
  hopping:   +j_coef * J_ij (a_i† a_j + a_j† a_i) per unordered pair.
"""

import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_JUMP = 1
STATUS_UNDERFLOW = 2
STATUS_DIVERGED = 3

NORM_UNDERFLOW = 1e-30
NORM_BLOWUP = 4.0


@njit(cache=True)
def sched_eval(row, t):
    kind = int(row[0])
    if kind == 0:
        return row[1]
    x = t / row[3]
    if kind == 1:
        return row[1] + (row[2] - row[1]) * x
    return row[1] + (row[2] - row[1]) * np.tanh(row[4] * x)


@njit(cache=True)
def stage_rates(sched, lock_alpha, t):
    gam = sched_eval(sched[1], t)
    g = sched_eval(sched[2], t)
    jc = sched_eval(sched[3], t)
    if lock_alpha >= 0.0:
        lam = (lock_alpha * g) ** 2
    else:
        lam = sched_eval(sched[0], t)
    return lam, gam, g, jc


@njit(cache=True)
def rhs(out, psi, t, digits, strides, delta, wsum, pair_i, pair_j, pair_jval,
        sq, sched, lock_alpha, nc):
    lam, gam, g, jc = stage_rates(sched, lock_alpha, t)
    m_count = strides.size
    p_count = pair_i.size
    d = psi.size
    clam = 0.5 * lam
    cg2 = 0.5 * g * g

    diag = np.empty((m_count, nc), np.complex128)
    for m in range(m_count):
        for n in range(nc):
            diag[m, n] = complex(
                -(gam * n + cg2 * n * (n - 1.0) + jc * wsum[m] * n),
                -delta[m] * n)
    pump_lo = np.zeros(nc, np.float64)
    pump_hi = np.zeros(nc, np.float64)
    for n in range(nc):
        if n >= 2:
            pump_lo[n] = clam * sq[n] * sq[n - 1]
        if n <= nc - 3:
            pump_hi[n] = clam * sq[n + 1] * sq[n + 2]

    for k in range(d):
        dval = 0.0j
        acc = 0.0j
        for m in range(m_count):
            n = digits[k, m]
            dval += diag[m, n]
            if n >= 2:
                acc += pump_lo[n] * psi[k - 2 * strides[m]]
            if n <= nc - 3:
                acc -= pump_hi[n] * psi[k + 2 * strides[m]]
        for p in range(p_count):
            i = pair_i[p]
            j = pair_j[p]
            ni = digits[k, i]
            nj = digits[k, j]
            c = jc * pair_jval[p]
            if ni >= 1 and nj <= nc - 2:
                acc += c * sq[ni] * sq[nj + 1] * psi[k - strides[i] + strides[j]]
            if nj >= 1 and ni <= nc - 2:
                acc += c * sq[nj] * sq[ni + 1] * psi[k - strides[j] + strides[i]]
        out[k] = dval * psi[k] + acc


@njit(cache=True)
def _norm2(psi):
    s = 0.0
    for k in range(psi.size):
        s += psi[k].real * psi[k].real + psi[k].imag * psi[k].imag
    return s


@njit(cache=True)
def rk4_step(psi, k1, k2, k3, k4, tmp, t, dt, digits, strides, delta, wsum,
             pair_i, pair_j, pair_jval, sq, sched, lock_alpha, nc):
    d = psi.size
    rhs(k1, psi, t, digits, strides, delta, wsum, pair_i, pair_j, pair_jval,
        sq, sched, lock_alpha, nc)
    half = 0.5 * dt
    for k in range(d):
        tmp[k] = psi[k] + half * k1[k]
    rhs(k2, tmp, t + half, digits, strides, delta, wsum, pair_i, pair_j,
        pair_jval, sq, sched, lock_alpha, nc)
    for k in range(d):
        tmp[k] = psi[k] + half * k2[k]
    rhs(k3, tmp, t + half, digits, strides, delta, wsum, pair_i, pair_j,
        pair_jval, sq, sched, lock_alpha, nc)
    for k in range(d):
        tmp[k] = psi[k] + dt * k3[k]
    rhs(k4, tmp, t + dt, digits, strides, delta, wsum, pair_i, pair_j,
        pair_jval, sq, sched, lock_alpha, nc)
    sixth = dt / 6.0
    for k in range(d):
        psi[k] += sixth * (k1[k] + 2.0 * (k2[k] + k3[k]) + k4[k])


@njit(cache=True)
def advance(psi, work, t0, dt, max_steps, eps, digits, strides, delta, wsum,
            pair_i, pair_j, pair_jval, sq, sched, lock_alpha, nc):
    """Integrate up to max_steps RK4 steps; stop early when norm² <= eps.

    Returns (steps_done, norm2, max_step_decay, status).  norm² is relative
    to the last jump (the caller renormalizes at jumps).  On a jump stop,
    work[5] holds the state at the start of the crossing step so the caller
    can resolve the crossing time inside the step.
    """
    k1 = work[0]
    k2 = work[1]
    k3 = work[2]
    k4 = work[3]
    tmp = work[4]
    saved = work[5]
    t = t0
    prev = _norm2(psi)
    nrm = prev
    max_dp = 0.0
    steps = 0
    for _ in range(max_steps):
        saved[:] = psi
        rk4_step(psi, k1, k2, k3, k4, tmp, t, dt, digits, strides, delta,
                 wsum, pair_i, pair_j, pair_jval, sq, sched, lock_alpha, nc)
        t += dt
        steps += 1
        nrm = _norm2(psi)
        dp = 1.0 - nrm / prev
        if dp > max_dp:
            max_dp = dp
        if not np.isfinite(nrm) or nrm > NORM_BLOWUP * prev or nrm > NORM_BLOWUP:
            return steps, nrm, max_dp, STATUS_DIVERGED
        if nrm < NORM_UNDERFLOW:
            return steps, nrm, max_dp, STATUS_UNDERFLOW
        if nrm <= eps:
            return steps, nrm, max_dp, STATUS_JUMP
        prev = nrm
    return steps, nrm, max_dp, STATUS_OK


@njit(cache=True)
def single_step(psi, work, t, h, digits, strides, delta, wsum, pair_i,
                pair_j, pair_jval, sq, sched, lock_alpha, nc):
    """One RK4 step of arbitrary length h; returns the new squared norm."""
    rk4_step(psi, work[0], work[1], work[2], work[3], work[4], t, h, digits,
             strides, delta, wsum, pair_i, pair_j, pair_jval, sq, sched,
             lock_alpha, nc)
    return _norm2(psi)


@njit(cache=True)
def channel_expectations(psi, digits, strides, pair_i, pair_j, sq, nc):
    """Raw sums <n_m>, <n_m(n_m-1)>, Re<a_i† a_j> and |psi|² in one pass.

    All values are unnormalized (scaled by the squared norm of psi).
    """
    m_count = strides.size
    p_count = pair_i.size
    n_exp = np.zeros(m_count, np.float64)
    nn_exp = np.zeros(m_count, np.float64)
    hop_re = np.zeros(p_count, np.float64)
    norm2 = 0.0
    for k in range(psi.size):
        pr = psi[k].real
        pi = psi[k].imag
        w = pr * pr + pi * pi
        norm2 += w
        for m in range(m_count):
            n = digits[k, m]
            n_exp[m] += w * n
            nn_exp[m] += w * n * (n - 1.0)
        for p in range(p_count):
            ni = digits[k, pair_i[p]]
            nj = digits[k, pair_j[p]]
            if ni >= 1 and nj <= nc - 2:
                src = psi[k - strides[pair_i[p]] + strides[pair_j[p]]]
                amp = sq[ni] * sq[nj + 1]
                hop_re[p] += amp * (pr * src.real + pi * src.imag)
    return norm2, n_exp, nn_exp, hop_re
