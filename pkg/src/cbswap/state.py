"""Problem instances and constant-time-mutable chain states.

Indices are 0-based throughout the Python API.  File outputs convert to
1-based indices where they report positions.
"""

from __future__ import annotations

import enum
import numbers
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import (
    InvalidTarget,
    NotAdjacent,
    OutOfRangeProbability,
)


@dataclass(frozen=True, eq=False)
class CBModel:
    """A conditional Bernoulli instance CB(p, I).

    Attributes:
        n: number of components N.
        target: the conditioned sum I, with 1 <= I <= N/2.
        probs: success probabilities, each strictly inside (0, 1).
        odds: p / (1 - p).
    """

    n: int
    target: int
    probs: np.ndarray = field(repr=False)
    odds: np.ndarray = field(repr=False)

    @property
    def log_odds(self) -> np.ndarray:
        return np.log(self.odds)


def build_model(probs, target) -> CBModel:
    """Validate ``probs`` and ``target`` and return an immutable model.

    Raises:
        OutOfRangeProbability: if any probability is outside (0, 1).
        InvalidTarget: if ``target`` is not an integer in [1, N/2], or N < 2.
    """
    p = np.array(probs, dtype=np.float64).ravel()
    n = p.shape[0]
    if isinstance(target, bool):
        raise InvalidTarget("target must be an integer, got a bool")
    if not isinstance(target, numbers.Integral):
        if isinstance(target, numbers.Real) and float(target).is_integer():
            target = int(target)
        else:
            raise InvalidTarget(f"target must be an integer, got {target!r}")
    target = int(target)
    if n < 2:
        raise InvalidTarget(f"need at least 2 components, got {n}")
    if not np.all((p > 0.0) & (p < 1.0)):
        bad = np.flatnonzero(~((p > 0.0) & (p < 1.0)))
        raise OutOfRangeProbability(
            f"probabilities must lie in (0,1); offending index {int(bad[0]) + 1}"
        )
    if target < 1 or 2 * target > n:
        raise InvalidTarget(f"target must satisfy 1 <= I <= N/2, got I={target}, N={n}")
    odds = p / (1.0 - p)
    if not np.all(np.isfinite(odds)) or not np.all(odds > 0):
        raise OutOfRangeProbability("odds overflow: probabilities too close to 0 or 1")
    p.setflags(write=False)
    odds.setflags(write=False)
    return CBModel(n=n, target=target, probs=p, odds=odds)


class IndexSets:
    """Disjoint index sets partitioning ``range(n)``.

    Array-plus-position-map layout: uniform draws, membership tests and moves
    between sets all cost O(1).
    """

    __slots__ = ("members", "sizes", "label", "pos")

    def __init__(self, label: np.ndarray, n_sets: int):
        label = np.ascontiguousarray(label, dtype=np.int8)
        n = label.shape[0]
        self.label = label.copy()
        self.members = np.empty((n_sets, n), dtype=np.int32)
        self.sizes = np.zeros(n_sets, dtype=np.int64)
        self.pos = np.empty(n, dtype=np.int32)
        K.fill_sets(self.label, self.members, self.sizes, self.pos)

    def __len__(self):
        return self.label.shape[0]

    def set(self, k: int) -> np.ndarray:
        """Elements of set ``k`` (a view, unordered)."""
        return self.members[k, : self.sizes[k]]

    def contains(self, k: int, e: int) -> bool:
        return int(self.label[e]) == k

    def draw(self, k: int, u: float) -> int:
        """Map a uniform ``u`` in [0, 1) to a uniformly chosen element of set ``k``."""
        size = int(self.sizes[k])
        if size == 0:
            raise IndexError(f"set {k} is empty")
        return int(self.members[k, K.pick(size, u)])

    def move(self, e: int, dst: int) -> None:
        K.move(self.members, self.sizes, self.label, self.pos, e, dst)

    def copy(self) -> "IndexSets":
        new = object.__new__(IndexSets)
        new.label = self.label.copy()
        new.members = self.members.copy()
        new.sizes = self.sizes.copy()
        new.pos = self.pos.copy()
        return new

    def check(self) -> None:
        """Assert internal consistency (for tests and debugging)."""
        for k in range(self.sizes.shape[0]):
            for q, e in enumerate(self.set(k)):
                assert self.label[e] == k and self.pos[e] == q
        assert int(self.sizes.sum()) == len(self)


class ChainState:
    """Binary vector with sum I, stored as the index sets S0 and S1.

    Kernels mutate a state in place; use :meth:`copy` to branch.
    """

    __slots__ = ("sets",)

    def __init__(self, bits):
        bits = np.asarray(bits)
        if bits.ndim != 1 or not np.all((bits == 0) | (bits == 1)):
            raise ValueError("bits must be a 1-d 0/1 vector")
        self.sets = IndexSets(bits.astype(np.int8), 2)

    @classmethod
    def _wrap(cls, sets: IndexSets) -> "ChainState":
        obj = object.__new__(cls)
        obj.sets = sets
        return obj

    @property
    def n(self) -> int:
        return len(self.sets)

    @property
    def bits(self) -> np.ndarray:
        return self.sets.label.copy()

    @property
    def s0(self) -> np.ndarray:
        return self.sets.set(0)

    @property
    def s1(self) -> np.ndarray:
        return self.sets.set(1)

    @property
    def total(self) -> int:
        return int(self.sets.sizes[1])

    def copy(self) -> "ChainState":
        return ChainState._wrap(self.sets.copy())

    def key(self) -> bytes:
        return self.sets.label.tobytes()

    def __eq__(self, other):
        if not isinstance(other, ChainState):
            return NotImplemented
        return np.array_equal(self.sets.label, other.sets.label)

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"ChainState({''.join(map(str, self.sets.label.tolist()))})"


class CoupledState:
    """A pair (x, xt) held as the four sets S_ij = {n : x_n = i, xt_n = j}."""

    __slots__ = ("sets",)

    def __init__(self, x, xt):
        x = x.bits if isinstance(x, ChainState) else np.asarray(x)
        xt = xt.bits if isinstance(xt, ChainState) else np.asarray(xt)
        if x.shape != xt.shape:
            raise ValueError("states must have the same length")
        if int(x.sum()) != int(xt.sum()):
            raise ValueError("states must have the same sum")
        label = (2 * x.astype(np.int8) + xt.astype(np.int8)).astype(np.int8)
        self.sets = IndexSets(label, 4)

    @classmethod
    def _wrap(cls, sets: IndexSets) -> "CoupledState":
        obj = object.__new__(cls)
        obj.sets = sets
        return obj

    @property
    def n(self) -> int:
        return len(self.sets)

    @property
    def x(self) -> np.ndarray:
        return (self.sets.label >> 1).astype(np.int8)

    @property
    def xt(self) -> np.ndarray:
        return (self.sets.label & 1).astype(np.int8)

    def marginals(self) -> tuple[ChainState, ChainState]:
        return ChainState(self.x), ChainState(self.xt)

    def s(self, i: int, j: int) -> np.ndarray:
        return self.sets.set(2 * i + j)

    def sizes(self) -> dict[str, int]:
        sz = self.sets.sizes
        return {"s00": int(sz[0]), "s01": int(sz[1]), "s10": int(sz[2]), "s11": int(sz[3])}

    @property
    def met(self) -> bool:
        return self.sets.sizes[K.S01] == 0

    def copy(self) -> "CoupledState":
        return CoupledState._wrap(self.sets.copy())

    def __repr__(self):
        x = "".join(map(str, self.x.tolist()))
        xt = "".join(map(str, self.xt.tolist()))
        return f"CoupledState(x={x}, xt={xt})"


class PartitionLabel(enum.IntEnum):
    U = K.LABEL_U
    F = K.LABEL_F
    D = K.LABEL_D


def hamming_distance(c: CoupledState) -> int:
    return int(c.sets.sizes[K.S01] + c.sets.sizes[K.S10])


def discrepancy_indices(c: CoupledState, model: CBModel) -> tuple[int, int]:
    """Discrepant indices (a, b) of an adjacent pair, ordered so w_a <= w_b.

    Before ordering, ``a`` is the index with x=0, xt=1 and ``b`` the index with
    x=1, xt=0.  Equal odds are broken by putting the smaller index first.
    """
    if hamming_distance(c) != 2:
        raise NotAdjacent(f"pair is at distance {hamming_distance(c)}, not 2")
    a = int(c.sets.members[K.S01, 0])
    b = int(c.sets.members[K.S10, 0])
    wa, wb = model.odds[a], model.odds[b]
    if wa > wb or (wa == wb and a > b):
        a, b = b, a
    return a, b


def initial_state(model: CBModel, mode: str = "uniform-subset", rng=None) -> ChainState:
    """Starting state: I ones at uniformly chosen positions, or at 0..I-1."""
    bits = np.zeros(model.n, dtype=np.int8)
    if mode == "first-I":
        bits[: model.target] = 1
    elif mode == "uniform-subset":
        if rng is None:
            raise ValueError("uniform-subset mode needs an rng")
        bits[rng.choice(model.n, size=model.target, replace=False)] = 1
    else:
        raise ValueError(f"unknown init mode {mode!r}")
    return ChainState(bits)


def adjacent_pair(x: ChainState, a: int, b: int) -> CoupledState:
    """Pair (x, xt) where xt flips x at a (0 -> 1) and b (1 -> 0)."""
    bits = x.bits
    if bits[a] != 0 or bits[b] != 1:
        raise ValueError("need x[a] = 0 and x[b] = 1")
    xt = bits.copy()
    xt[a], xt[b] = 1, 0
    return CoupledState(bits, xt)


def replicate_seed(master_seed: int, replicate: int) -> int:
    """64-bit seed of one replicate, derived from (master seed, replicate id)."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(replicate,))
    return int(ss.generate_state(1, np.uint64)[0])


def replicate_rng(master_seed: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng(replicate_seed(master_seed, replicate))
