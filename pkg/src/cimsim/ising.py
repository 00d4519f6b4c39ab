"""Ising problem instances, exact ground states, and max-cut mapping.

Energy convention (ordered double sum, no 1/2):

  E(sigma) = - sum_{i != j} J_ij sigma_i sigma_j - sum_i h_i sigma_i

so each unordered coupled pair contributes twice.  Spins are +-1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SpinConfig = tuple[int, ...]

BRUTE_FORCE_LIMIT = 24
_ENUM_BLOCK = 1 << 16


@dataclass(frozen=True)
class ProblemInstance:
    """An Ising instance with its exact ground-state data."""

    name: str
    coupling: np.ndarray
    field_h: np.ndarray
    ground_energy: float
    ground_set: tuple[SpinConfig, ...]

    @property
    def size(self) -> int:
        return self.coupling.shape[0]


def energy(coupling: np.ndarray, sigma, field_h=None) -> float:
    """Ising energy of one spin configuration."""
    s = np.asarray(sigma, dtype=np.float64)
    j = np.asarray(coupling, dtype=np.float64)
    val = -float(s @ j @ s)
    if field_h is not None:
        val -= float(np.dot(np.asarray(field_h, dtype=np.float64), s))
    return val


def _spin_block(start: int, count: int, m: int) -> np.ndarray:
    """Spin rows for integer codes start .. start+count-1, bit i = spin i."""
    codes = np.arange(start, start + count, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(m)[None, :]) & 1
    return 2.0 * bits - 1.0


def brute_force_ground(coupling: np.ndarray, field_h=None,
                       tol: float = 1e-9):
    """Exhaustive ground search.  Returns (ground_energy, ground_set).

    Enumerates all 2^M configurations in blocks; refuses M above
    BRUTE_FORCE_LIMIT.
    """
    j = np.asarray(coupling, dtype=np.float64)
    m = j.shape[0]
    if m > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_LIMIT} spins")
    h = None if field_h is None else np.asarray(field_h, dtype=np.float64)
    best = np.inf
    winners: list[SpinConfig] = []
    total = 1 << m
    for start in range(0, total, _ENUM_BLOCK):
        s = _spin_block(start, min(_ENUM_BLOCK, total - start), m)
        e = -np.einsum("ki,ij,kj->k", s, j, s)
        if h is not None:
            e -= s @ h
        lo = float(e.min())
        if lo < best - tol:
            best = lo
            winners = []
        mask = e <= best + tol
        winners.extend(tuple(int(v) for v in row) for row in s[mask])
    # drop near-misses admitted before the running minimum settled
    winners = [w for w in winners
               if energy(j, w, h) <= best + tol]
    return best, tuple(sorted(winners, reverse=True))


def make_instance(name: str, coupling, field_h=None) -> ProblemInstance:
    j = np.asarray(coupling, dtype=np.float64)
    if not np.allclose(j, j.T, atol=1e-12):
        raise ValueError("coupling matrix must be symmetric")
    if np.any(np.abs(np.diag(j)) > 0):
        raise ValueError("coupling matrix must have zero diagonal")
    m = j.shape[0]
    h = (np.zeros(m) if field_h is None
         else np.asarray(field_h, dtype=np.float64).copy())
    e0, ground = brute_force_ground(j, None if field_h is None else h)
    return ProblemInstance(name, j, h, e0, ground)


def cut_value(weights: np.ndarray, sigma) -> float:
    """Total weight of edges crossing the partition sigma (+1 / -1 sides)."""
    s = np.asarray(sigma, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    return float(0.5 * np.sum(np.triu(w, 1) * (1.0 - np.outer(s, s))))


def maxcut_to_ising(weights: np.ndarray, name: str = "maxcut") -> ProblemInstance:
    """Map a weighted max-cut problem to an Ising instance.

    With J = -w, minimizing the Ising energy maximizes the cut: the cut of a
    partition sigma is sum_{i<j} w_ij (1 - sigma_i sigma_j) / 2.
    """
    w = np.asarray(weights, dtype=np.float64)
    if not np.allclose(w, w.T, atol=1e-12):
        raise ValueError("weight matrix must be symmetric")
    return make_instance(name, -w)


def ring_instance(m: int) -> ProblemInstance:
    """Nearest-neighbor antiferromagnetic ring with one flipped bond.

    All ring bonds have J = -1 except J_12 = +1, which frustrates odd rings.
    """
    if m < 3:
        raise ValueError("ring needs at least 3 modes")
    j = np.zeros((m, m))
    for i in range(m):
        k = (i + 1) % m
        j[i, k] = j[k, i] = -1.0
    j[0, 1] = j[1, 0] = 1.0
    return make_instance(f"ring{m}", j)


def eq23_instance(j12: float = 0.295) -> ProblemInstance:
    """Four-spin instance with a tunable bond between spins 1 and 2."""
    j = np.array([
        [0.0, j12, -0.4, -0.2],
        [j12, 0.0, -0.2, -0.1],
        [-0.4, -0.2, 0.0, -0.1],
        [-0.2, -0.1, -0.1, 0.0],
    ])
    return make_instance("eq23", j)


def ferro_weighted_instance(j12: float = -0.295) -> ProblemInstance:
    """Ferromagnetic variant: same bond magnitudes, positive signs except
    the tunable (negative) bond between spins 1 and 2."""
    j = np.array([
        [0.0, j12, 0.4, 0.2],
        [j12, 0.0, 0.2, 0.1],
        [0.4, 0.2, 0.0, 0.1],
        [0.2, 0.1, 0.1, 0.0],
    ])
    return make_instance("ferro_weighted", j)


def maxcut5_instance() -> ProblemInstance:
    """Five-vertex unweighted max-cut with maximum cut 5 at S = {1, 4}."""
    w = np.zeros((5, 5))
    for a, b in [(1, 2), (1, 3), (1, 5), (4, 3), (4, 5)]:
        w[a - 1, b - 1] = w[b - 1, a - 1] = 1.0
    return maxcut_to_ising(w, name="maxcut5")


def builtin_instances() -> dict:
    """Registry of named problem builders used by the CLI."""
    return {
        "ring3": lambda: ring_instance(3),
        "ring4": lambda: ring_instance(4),
        "ring5": lambda: ring_instance(5),
        "eq23": eq23_instance,
        "ferro_weighted": ferro_weighted_instance,
        "maxcut5": maxcut5_instance,
    }
