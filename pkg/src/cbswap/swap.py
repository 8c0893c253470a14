"""Metropolis-Hastings swap kernel targeting CB(p, I).

Each step draws i0 uniformly from S0 and i1 uniformly from S1, and swaps the
two bits with probability min(1, w[i0] / w[i1]).  Exactly three uniforms are
consumed per step, also when the ratio clamps to one.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .errors import DegenerateSupport
from .state import CBModel, ChainState


class Proposal(NamedTuple):
    i0: int
    i1: int
    u: float
    accepted: bool


def _check(model: CBModel, state: ChainState) -> None:
    sz = state.sets.sizes
    if sz[0] == 0 or sz[1] == 0:
        raise DegenerateSupport("swap kernel needs both S0 and S1 nonempty")
    if state.n != model.n:
        raise ValueError(f"state has {state.n} components, model has {model.n}")


def step(model: CBModel, state: ChainState, rng) -> ChainState:
    """Advance ``state`` in place by one kernel step and return it."""
    step_recorded(model, state, rng)
    return state


def step_recorded(model: CBModel, state: ChainState, rng) -> tuple[ChainState, Proposal]:
    """As :func:`step`, also returning the proposal and uniform consumed."""
    _check(model, state)
    u0, u1, u = rng.random(3)
    s = state.sets
    i0, i1, acc = K.swap_step(s.members, s.sizes, s.label, s.pos, model.odds, u0, u1, u)
    return state, Proposal(int(i0), int(i1), float(u), bool(acc))


def run(model: CBModel, state: ChainState, n_steps: int, rng, chunk: int = 1 << 16) -> int:
    """Apply ``n_steps`` kernel steps in place; return the number of accepted swaps.

    Consumes randomness in exactly the same order as repeated :func:`step`.
    """
    _check(model, state)
    s = state.sets
    accepted = 0
    done = 0
    while done < n_steps:
        m = min(chunk, n_steps - done)
        accepted += K.swap_run(s.members, s.sizes, s.label, s.pos, model.odds, rng.random((m, 3)))
        done += m
    return int(accepted)


def trace(model: CBModel, state: ChainState, n_steps: int, rng):
    """Run ``n_steps`` and return the proposals as arrays (i0, i1, accepted)."""
    _check(model, state)
    s = state.sets
    i0 = np.empty(n_steps, dtype=np.int64)
    i1 = np.empty(n_steps, dtype=np.int64)
    acc = np.empty(n_steps, dtype=np.bool_)
    K.swap_trace(s.members, s.sizes, s.label, s.pos, model.odds, rng.random((n_steps, 3)),
                 i0, i1, acc)
    return i0, i1, acc


def one_step_samples(model: CBModel, state: ChainState, n_samples: int, rng) -> np.ndarray:
    """Bitmask codes of ``n_samples`` independent one-step outcomes from ``state``.

    Requires N <= 62.
    """
    if model.n > 62:
        raise ValueError("bitmask codes need N <= 62")
    _check(model, state)
    out = np.empty(n_samples, dtype=np.int64)
    K.swap_one_step_codes(state.sets.label, model.odds, rng.random((n_samples, 3)), out)
    return out
