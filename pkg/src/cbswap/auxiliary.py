"""The three-state chasing chain on labels {1 = U, 2 = F, 3 = D}.

``Z`` is a Markov chain with transition matrix ``Q`` built from three rates.
:func:`dominated_z_step` advances it jointly with the label ``B`` of a
coupled state so that ``Z <= B`` at all times while ``Z`` keeps the law of
``Q``.  Once ``Z`` reaches 3 the coupled chains have met.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .coupled import PartitionThresholds
from .errors import InvalidBranchProbability, NotAdjacentOrDiagonal, NTooSmall
from .state import CBModel, CoupledState


@dataclass(frozen=True, eq=False)
class QMatrix:
    xi_uf: float
    xi_fu: float
    xi_fd: float
    n: int
    entries: np.ndarray = field(repr=False)


def build_q(xi_uf: float, xi_fu: float, xi_fd: float, n: int) -> QMatrix:
    if min(xi_uf, xi_fu, xi_fd) <= 0:
        raise ValueError("rates must be positive")
    uf, fu, fd = xi_uf / n, xi_fu / n, xi_fd / n
    if 1.0 - uf < 0 or 1.0 - fu - fd < 0:
        raise NTooSmall(f"N={n} too small for rates ({xi_uf}, {xi_fu}, {xi_fd})")
    q = np.array([
        [1.0 - uf, uf, 0.0],
        [fu, 1.0 - fu - fd, fd],
        [0.0, 0.0, 1.0],
    ])
    q.setflags(write=False)
    return QMatrix(float(xi_uf), float(xi_fu), float(xi_fd), int(n), q)


def second_eigenvalue(q: QMatrix) -> float:
    s = q.xi_fd + q.xi_fu + q.xi_uf
    disc = s * s - 4.0 * q.xi_fd * q.xi_uf
    return 1.0 - (s - math.sqrt(disc)) / (2.0 * q.n)


def absorption_probability(q: QMatrix, t: int, start: int = 1) -> float:
    """P(Z_t = 3 | Z_0 = start) by repeated vector-matrix products."""
    if start not in (1, 2):
        raise ValueError("start must be 1 or 2")
    v = np.zeros(3)
    v[start - 1] = 1.0
    for _ in range(t):
        v = v @ q.entries
    return float(v[2])


def _check_prob(p: float, what: str) -> float:
    if not (0.0 <= p <= 1.0) or math.isnan(p):
        raise InvalidBranchProbability(f"{what} = {p!r} outside [0, 1]; N too small for these rates")
    return p


def _ratio(num: float, den: float) -> float:
    if den <= 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def dominated_z_step(prev_z: int, b_t: int, b_t1: int, transition_probs, q: QMatrix,
                     rng=None, u: float | None = None) -> int:
    """Next Z given Z_t, B_t, B_{t+1} and P(B_{t+1} = k | coupled state).

    ``transition_probs`` is (P(B'=1), P(B'=2), P(B'=3)).  Consumes one uniform
    (``u`` if given, else from ``rng``).  Every branch probability usable from
    (Z_t, B_t) is validated, not only the realized one, since the marginal law
    of Z is Q only if all of them lie in [0, 1].

    Raises:
        InvalidBranchProbability: if the rates are too large (or, for the
            F -> U rate, too small) for the supplied probabilities.
    """
    if prev_z > b_t:
        raise ValueError(f"precondition Z <= B violated: Z={prev_z}, B={b_t}")
    if u is None:
        u = rng.random()
    n = q.n
    p1, p2, p3 = (float(v) for v in transition_probs)

    if b_t == 3:
        row = q.entries[prev_z - 1]
        return 1 if u < row[0] else (2 if u < row[0] + row[1] else 3)

    if prev_z == 1:
        promote = _check_prob(_ratio(q.xi_uf / n, p2 + p3), "P(Z'=2 | Z=1, B' in {2,3})")
        if b_t1 == 1:
            return 1
        return 2 if u < promote else 1

    if prev_z == 2:  # b_t == 2 here
        demote = _check_prob(_ratio(q.xi_fu / n - p1, p2), "P(Z'=1 | Z=2, B'=2)")
        absorb = _check_prob(_ratio(q.xi_fd / n, p3), "P(Z'=3 | Z=2, B'=3)")
        if b_t1 == 1:
            return 1
        if b_t1 == 2:
            return 1 if u < demote else 2
        return 3 if u < absorb else 2

    raise ValueError(f"invalid Z={prev_z}, B={b_t}")


@dataclass
class ZTrajectory:
    labels: np.ndarray
    dominated_by: np.ndarray
    seed: int


def class_trajectory(model: CBModel, c: CoupledState, thresholds: PartitionThresholds,
                     n_steps: int, rng):
    """Run the coupled chain ``n_steps`` from ``c`` (in place).

    Returns (B labels of length n_steps + 1, exact next-label laws of shape
    (n_steps, 3)).
    """
    s = c.sets
    labels = np.empty(n_steps + 1, dtype=np.int64)
    probs = np.empty((n_steps, 3))
    bad = K.class_trajectory(s.members, s.sizes, s.label, s.pos, model.odds,
                             thresholds.w_lo, thresholds.w_hi, rng.random((n_steps, 3)),
                             labels, probs)
    if bad >= 0:
        raise NotAdjacentOrDiagonal(f"coupled state left the adjacent regime at step {bad}")
    return labels, probs


def attach_z(labels: np.ndarray, probs: np.ndarray, q: QMatrix, rng, z0: int = 1) -> np.ndarray:
    """Build Z along a recorded label trajectory, asserting Z <= B at every step."""
    z = np.empty_like(labels)
    z[0] = z0
    assert z0 <= labels[0]
    us = rng.random(len(labels) - 1)
    for t in range(len(labels) - 1):
        z[t + 1] = dominated_z_step(int(z[t]), int(labels[t]), int(labels[t + 1]),
                                    probs[t], q, u=us[t])
        assert z[t + 1] <= labels[t + 1], f"dominance broken at step {t + 1}"
    return z


def rate_envelope(labels: np.ndarray, probs: np.ndarray, n: int):
    """Extremes over a trajectory of the N-scaled next-label probabilities.

    Returns a dict with the quantities the construction needs:
    ``uf_max`` (largest admissible xi_UF), ``fu_min`` / ``fu_max`` (range for
    xi_FU) and ``fd_max`` (largest admissible xi_FD).
    """
    b = labels[:-1]
    out = {"uf_max": math.inf, "fu_min": 0.0, "fu_max": math.inf, "fd_max": math.inf}
    up = (b == 1) | (b == 2)
    if up.any():
        out["uf_max"] = float(n * (probs[up, 1] + probs[up, 2]).min())
    f = b == 2
    if f.any():
        out["fu_min"] = float(n * probs[f, 0].max())
        out["fu_max"] = float(n * (probs[f, 0] + probs[f, 1]).min())
        out["fd_max"] = float(n * probs[f, 2].min())
    return out
