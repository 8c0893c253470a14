"""Coupled swap kernel, adjacent-pair contraction and the U/F/D partition.

The coupled kernel draws (i0, it0) from the maximal coupling of the uniform
laws on S0 and S0~, draws (i1, it1) likewise on S1 and S1~, and decides both
acceptances with one common uniform.  Each marginal is the swap kernel, and
the Hamming distance between the chains never increases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import swap
from .errors import DegenerateSupport, NotAdjacentOrDiagonal
from .state import (
    CBModel,
    ChainState,
    CoupledState,
    PartitionLabel,
    discrepancy_indices,
    hamming_distance,
)


@dataclass(frozen=True)
class PartitionThresholds:
    w_lo: float
    w_hi: float

    def __post_init__(self):
        if not (0.0 < self.w_lo < self.w_hi < np.inf):
            raise ValueError(f"need 0 < w_lo < w_hi < inf, got ({self.w_lo}, {self.w_hi})")

    @classmethod
    def from_percentiles(cls, model: CBModel, lo: float = 10.0, hi: float = 90.0):
        """Thresholds at empirical percentiles of the instance odds."""
        w_lo, w_hi = np.percentile(model.odds, [lo, hi])
        return cls(float(w_lo), float(w_hi))


def _check(model: CBModel, c: CoupledState) -> None:
    if c.n != model.n:
        raise ValueError(f"state has {c.n} components, model has {model.n}")
    sz = c.sets.sizes
    if sz[K.S00] + sz[K.S01] == 0 or sz[K.S10] + sz[K.S11] == 0:
        raise DegenerateSupport("coupled kernel needs both S0 and S1 nonempty")


def coupled_step(model: CBModel, c: CoupledState, rng) -> CoupledState:
    """One step of the coupled kernel, in place.  Consumes three uniforms."""
    _check(model, c)
    before = hamming_distance(c)
    v0, v1, u = rng.random(3)
    s = c.sets
    K.coupled_step(s.members, s.sizes, s.label, s.pos, model.odds, v0, v1, u)
    assert hamming_distance(c) <= before, "coupled step increased the distance"
    return c


def run_until_meet(model: CBModel, c: CoupledState, rng, max_steps: int,
                   chunk: int = 4096) -> int:
    """Step ``c`` in place until the chains meet or ``max_steps`` is reached.

    Returns the number of steps taken.  Uniforms are drawn in blocks of
    ``chunk`` rows; the tail of the last block is discarded.
    """
    _check(model, c)
    s = c.sets
    taken = 0
    while taken < max_steps and not c.met:
        m = min(chunk, max_steps - taken)
        taken += K.coupled_run(s.members, s.sizes, s.label, s.pos, model.odds, rng.random((m, 3)))
        chunk = min(chunk * 2, 1 << 20)
    return taken


def contraction_rate(model: CBModel, c: CoupledState) -> float:
    """Probability that one coupled step from an adjacent pair reaches the diagonal."""
    a, b = discrepancy_indices(c, model)
    w = model.odds
    wa, wb = w[a], w[b]
    s11 = c.s(1, 1)
    s00 = c.s(0, 0)
    total = (
        abs(1.0 - wa / wb)
        + np.minimum(1.0, wa / w[s11]).sum()
        + np.minimum(1.0, w[s00] / wb).sum()
    )
    return float(total / ((model.n - model.target) * model.target))


def classify(c: CoupledState, thresholds: PartitionThresholds, model: CBModel) -> PartitionLabel:
    d = hamming_distance(c)
    if d == 0:
        return PartitionLabel.D
    if d != 2:
        raise NotAdjacentOrDiagonal(f"pair is at distance {d}")
    a, b = discrepancy_indices(c, model)
    if model.odds[a] < thresholds.w_lo and model.odds[b] > thresholds.w_hi:
        return PartitionLabel.U
    return PartitionLabel.F


def transition_law(model: CBModel, c: CoupledState, thresholds: PartitionThresholds):
    """Exact one-step probabilities (P(U), P(F), P(D)) of the next label."""
    d = hamming_distance(c)
    if d == 0:
        return 0.0, 0.0, 1.0
    if d != 2:
        raise NotAdjacentOrDiagonal(f"pair is at distance {d}")
    s = c.sets
    pu, pf, pd = K.adjacent_transition_law(s.members, s.sizes, model.odds,
                                           thresholds.w_lo, thresholds.w_hi)
    return float(pu), float(pf), float(pd)


def _rejection_mass(w: np.ndarray, zeros: np.ndarray, ones: np.ndarray) -> float:
    """Sum over (i0, i1) in zeros x ones of 1 - min(1, w[i0]/w[i1]), in O(N log N)."""
    w0 = np.sort(w[zeros])
    prefix = np.concatenate(([0.0], np.cumsum(w0)))
    w1 = w[ones]
    below = np.searchsorted(w0, w1, side="left")
    return float(np.sum(below - prefix[below] / w1))


def _edge_conditional(model: CBModel, z: np.ndarray, a: int, b: int,
                      z_next: np.ndarray, u: float) -> np.ndarray:
    """Draw the second output of the coupled kernel from the adjacent pair
    (z, zt), zt = z with a -> 1, b -> 0, given its first output ``z_next``."""
    w = model.odds
    zt = z.copy()
    zt[a], zt[b] = 1, 0
    out = zt.copy()
    changed = np.flatnonzero(z != z_next)
    if changed.size:
        i0 = int(changed[z[changed] == 0][0])
        i1 = int(changed[z[changed] == 1][0])
        it0 = b if i0 == a else i0
        it1 = a if i1 == b else i1
        r = min(1.0, w[i0] / w[i1])
        rt = min(1.0, w[it0] / w[it1])
        # given acceptance in z, u is uniform on [0, r)
        if u * r < rt:
            out[it0], out[it1] = 1, 0
        return out

    zeros = np.flatnonzero(z == 0)
    ones = np.flatnonzero(z == 1)
    reject = _rejection_mass(w, zeros, ones)
    s00 = zeros[zeros != a]
    s11 = ones[ones != b]
    # rejected in z but accepted in zt: mass max(0, rt - r) per proposal
    gain_k = np.maximum(0.0, np.minimum(1.0, w[b] / w[s11]) - np.minimum(1.0, w[a] / w[s11]))
    gain_j = np.maximum(0.0, np.minimum(1.0, w[s00] / w[a]) - np.minimum(1.0, w[s00] / w[b]))
    gain_ab = max(0.0, min(1.0, w[b] / w[a]) - min(1.0, w[a] / w[b]))
    target = u * reject
    acc = 0.0
    for k, g in zip(s11, gain_k):
        acc += g
        if target < acc:
            out[b], out[k] = 1, 0
            return out
    for j, g in zip(s00, gain_j):
        acc += g
        if target < acc:
            out[j], out[a] = 1, 0
            return out
    acc += gain_ab
    if target < acc:
        out[b], out[a] = 1, 0
    return out


def path_coupled_step(model: CBModel, x: ChainState, xt: ChainState, rng):
    """Coupled step for an arbitrary pair via the left-to-right discrepancy path.

    The path pairs the k-th index (in increasing order) where x=0, xt=1 with
    the k-th index where x=1, xt=0, giving D/2 adjacent edges.  The first
    chain takes an ordinary kernel step; each later element of the path is
    drawn from the coupled kernel's conditional given its neighbour's output.
    Only the current edge is materialized.  Cost per edge is O(N log N).

    Returns new states (x', xt'); the inputs are not modified.
    """
    bx, bxt = x.bits, xt.bits
    if np.array_equal(bx, bxt):
        c = coupled_step(model, CoupledState(bx, bxt), rng)
        return c.marginals()
    ups = np.flatnonzero((bx == 0) & (bxt == 1))
    downs = np.flatnonzero((bx == 1) & (bxt == 0))
    if ups.size != downs.size:
        raise ValueError("states must have the same sum")

    first = x.copy()
    swap.step(model, first, rng)
    x_new = first.bits
    z = bx.copy()
    z_next = x_new
    for a, b in zip(ups, downs):
        z_next = _edge_conditional(model, z, int(a), int(b), z_next, float(rng.random()))
        z[a], z[b] = 1, 0
    return ChainState(x_new), ChainState(z_next)


def coupled_one_step_samples(model: CBModel, c: CoupledState, n_samples: int, rng):
    """Bitmask codes of both outputs of ``n_samples`` independent coupled steps from ``c``.

    Requires N <= 62.
    """
    if model.n > 62:
        raise ValueError("bitmask codes need N <= 62")
    _check(model, c)
    out_x = np.empty(n_samples, dtype=np.int64)
    out_xt = np.empty(n_samples, dtype=np.int64)
    K.coupled_one_step_codes(c.sets.label, model.odds, rng.random((n_samples, 3)), out_x, out_xt)
    return out_x, out_xt


def adjacent_pairs(x: ChainState):
    """All (a, b) with x[a] = 0, x[b] = 1, i.e. every pair adjacent to ``x`` on one side."""
    return [(int(a), int(b)) for a in x.s0 for b in x.s1]

