"""Exact sampling from CB(p, I) by dynamic programming.

The table holds log q(i, n) where q(i, n) is the probability that independent
Bernoulli(p_m) variables, m = n..N, sum to i.  Columns are filled right to
left in log space; a draw then walks left to right, choosing each bit from
its conditional given the remaining count.  Table cost is O(IN), each draw
O(N).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericalUnderflow
from .state import CBModel, ChainState

_MAGIC = b"CBQT"


@dataclass(frozen=True, eq=False)
class SuffixSumTable:
    """log q(i, n) for i = 0..I and 0-based column n = 0..N-1.

    Stored column-major so each column is contiguous; ``-inf`` encodes q = 0.
    """

    logq: np.ndarray

    @property
    def target(self) -> int:
        return self.logq.shape[0] - 1

    @property
    def n(self) -> int:
        return self.logq.shape[1]

    def q(self) -> np.ndarray:
        return np.exp(self.logq)


def build_table(model: CBModel) -> SuffixSumTable:
    n, top = model.n, model.target
    log_p = np.log(model.probs)
    log_1mp = np.log1p(-model.probs)
    logq = np.full((top + 1, n), -np.inf, order="F")
    logq[0, n - 1] = log_1mp[n - 1]
    if top >= 1:
        logq[1, n - 1] = log_p[n - 1]
    for col in range(n - 2, -1, -1):
        nxt = logq[:, col + 1]
        cur = logq[:, col]
        cur[0] = log_1mp[col] + nxt[0]
        # q(i, n) = p_n q(i-1, n+1) + (1-p_n) q(i, n+1)
        cur[1:] = np.logaddexp(log_p[col] + nxt[:-1], log_1mp[col] + nxt[1:])
    logq.setflags(write=False)
    return SuffixSumTable(logq)


def conditional_one_probability(model: CBModel, table: SuffixSumTable, col: int,
                                remaining):
    """P(x_col = 1 | sum of x_col..x_{N-1} equals ``remaining``).

    ``col`` is 0-based and must be < N - 1.  Vectorized over ``remaining``.
    """
    r = np.asarray(remaining)
    logq = table.logq
    num_idx = np.maximum(r - 1, 0)
    with np.errstate(invalid="ignore"):
        log_num = np.log(model.probs[col]) + logq[num_idx, col + 1]
        out = np.exp(log_num - logq[r, col])
    return np.where(r > 0, out, 0.0)


def sample_exact_batch(model: CBModel, table: SuffixSumTable, rng, size: int) -> np.ndarray:
    """``size`` independent draws as an (size, N) int8 array."""
    n = model.n
    out = np.zeros((size, n), dtype=np.int8)
    remaining = np.full(size, model.target, dtype=np.int64)
    uniforms = rng.random((size, n - 1))
    for col in range(n - 1):
        prob = conditional_one_probability(model, table, col, remaining)
        if np.isnan(prob).any():
            raise NumericalUnderflow(f"NaN conditional at column {col + 1}")
        bit = uniforms[:, col] < prob
        out[:, col] = bit
        remaining -= bit
    if np.any((remaining != 0) & (remaining != 1)):
        raise NumericalUnderflow("final bit outside {0,1}: corrupted table")
    out[:, n - 1] = remaining
    return out


def sample_exact(model: CBModel, table: SuffixSumTable, rng) -> ChainState:
    return ChainState(sample_exact_batch(model, table, rng, 1)[0])


def save_table(table: SuffixSumTable, path) -> None:
    """Write the table as a 16-byte header then little-endian float64, row-major (i outer)."""
    rows, cols = table.logq.shape
    header = _MAGIC + struct.pack("<III", rows, cols, 0)
    body = np.ascontiguousarray(table.logq, dtype="<f8").tobytes(order="C")
    Path(path).write_bytes(header + body)


def load_table(path) -> SuffixSumTable:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError("not a CBQT table file")
    rows, cols, _ = struct.unpack("<III", raw[4:16])
    data = np.frombuffer(raw, dtype="<f8", offset=16, count=rows * cols)
    logq = np.asfortranarray(data.reshape(rows, cols).astype(np.float64))
    logq.setflags(write=False)
    return SuffixSumTable(logq)
