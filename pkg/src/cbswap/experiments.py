"""Empirical studies of the swap chain.

Lagged meeting times and the total-variation upper bound built from them,
mixing-time estimates, Monte Carlo estimates of one-step transitions between
favorable / unfavorable / diagonal pairs, and brute-force oracles for small N.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from . import auxiliary, coupled, exact, swap
from .coupled import PartitionThresholds
from .errors import CensoredData, EmptyClass, NotReached, TooLarge
from .state import (
    CBModel,
    ChainState,
    CoupledState,
    PartitionLabel,
    adjacent_pair,
    build_model,
    discrepancy_indices,
    initial_state,
    replicate_seed,
)

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# instances

def stream_rng(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=key))


def instance_rng(master_seed: int, n: int) -> np.random.Generator:
    """Generator for the probability vector of size ``n``; independent of replicate streams."""
    return stream_rng(master_seed, 0x5EED, n)


def generate_probs(source: str, n: int, rng) -> np.ndarray:
    """Probability vector from ``uniform``, ``equal:<p>`` or ``csv:<path>``.

    CSV input holds one probability per line; it must contain exactly ``n``
    values (or ``n`` may be None to take them all).
    """
    if source == "uniform":
        p = rng.random(n)
        # a draw of exactly 0 has probability ~2^-53 per entry, but guard it
        while np.any(p == 0.0):
            p[p == 0.0] = rng.random(int(np.sum(p == 0.0)))
        return p
    if source.startswith("equal:"):
        return np.full(n, float(source.split(":", 1)[1]))
    if source.startswith("csv:"):
        path = Path(source.split(":", 1)[1])
        vals = [float(line) for line in path.read_text().split() if line.strip()]
        p = np.asarray(vals, dtype=np.float64)
        if n is not None and p.shape[0] != n:
            raise ValueError(f"{path} holds {p.shape[0]} probabilities, expected {n}")
        return p
    raise ValueError(f"unknown probability source {source!r}")


def default_cap(n: int) -> int:
    return int(math.ceil(100 * n * math.log(n)))


# --------------------------------------------------------------------------
# lagged meetings and TV bounds

@dataclass(frozen=True)
class MeetingRecord:
    replicate: int
    seed: int
    lag: int
    tau: int
    censored: bool
    cap: int


def lagged_meeting_time(model: CBModel, x0: ChainState, y0: ChainState, lag: int, cap: int,
                        rng) -> tuple[int, bool]:
    """Meeting time of the lag-``lag`` coupling started from (x0, y0).

    The first chain runs ``lag`` steps alone, then the pair (x_t, y_{t-lag})
    evolves under the coupled kernel.  Returns (tau, censored), with
    tau = min{t >= lag : x_t = y_{t-lag}}, or (cap, True) if not met by ``cap``.
    """
    x = x0.copy()
    swap.run(model, x, lag, rng)
    c = CoupledState(x.bits, y0.bits)
    if c.met:
        return lag, False
    if cap <= lag:
        return cap, True
    steps = coupled.run_until_meet(model, c, rng, cap - lag)
    if c.met:
        return lag + steps, False
    return cap, True


def _one_replicate(model, lag, cap, init_mode, master_seed, rep):
    seed = replicate_seed(master_seed, rep)
    rng = np.random.default_rng(seed)
    x0 = initial_state(model, init_mode, rng)
    y0 = initial_state(model, init_mode, rng)
    tau, censored = lagged_meeting_time(model, x0, y0, lag, cap, rng)
    return MeetingRecord(rep, seed, lag, tau, censored, cap)


def run_meetings(model: CBModel, lag: int = 1, replicates: int = 500, cap: int | None = None,
                 init_mode: str = "uniform-subset", master_seed: int = 0,
                 threads: int = 1) -> list[MeetingRecord]:
    """Independent lagged meeting times; replicate r uses seed (master_seed, r)."""
    if lag < 1 or replicates < 1:
        raise ValueError("lag and replicates must be >= 1")
    cap = default_cap(model.n) if cap is None else int(cap)

    def work(rep):
        return _one_replicate(model, lag, cap, init_mode, master_seed, rep)

    if threads <= 1:
        records = [work(r) for r in range(replicates)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(work, range(replicates)))
    n_cens = sum(r.censored for r in records)
    if n_cens:
        log.warning("%d of %d replicates censored at cap=%d", n_cens, replicates, cap)
    return records


@dataclass
class TvBoundCurve:
    times: np.ndarray
    bounds: np.ndarray
    stderr: np.ndarray
    replicates: int
    lag: int


def _lag_terms(taus: np.ndarray, lag: int, t) -> np.ndarray:
    t = np.asarray(t)
    k = np.ceil((taus[..., None] - lag - t) / lag)
    return np.maximum(0.0, k)


def geometric_grid(cap: int, points: int = 64) -> np.ndarray:
    return np.unique(np.round(np.geomspace(1, cap, points)).astype(np.int64))


def tv_upper_bound(records, times=None) -> TvBoundCurve:
    """Plug meeting times into E[max(0, ceil((tau - L - t) / L))] at each t.

    ``times`` defaults to every integer from 0 to max(tau) - L, where the
    bound reaches zero.
    """
    records = list(records)
    if any(r.censored for r in records):
        raise CensoredData("censored meeting times: raise the cap")
    lags = {r.lag for r in records}
    if len(lags) != 1:
        raise ValueError("records mix different lags")
    lag = lags.pop()
    taus = np.array([r.tau for r in records], dtype=np.float64)
    if times is None:
        times = np.arange(0, int(taus.max()) - lag + 1)
    times = np.asarray(times, dtype=np.int64)
    bounds = np.empty(times.shape[0])
    stderr = np.empty(times.shape[0])
    for lo in range(0, times.shape[0], 1024):
        terms = _lag_terms(taus, lag, times[lo:lo + 1024])
        bounds[lo:lo + 1024] = terms.mean(axis=0)
        if len(taus) > 1:
            stderr[lo:lo + 1024] = terms.std(axis=0, ddof=1) / math.sqrt(len(taus))
        else:
            stderr[lo:lo + 1024] = 0.0
    return TvBoundCurve(times, bounds, stderr, len(taus), lag)


def estimate_mixing_time(curve: TvBoundCurve, epsilon: float = 0.01) -> int:
    """Smallest grid time whose bound is below ``epsilon``."""
    hit = np.flatnonzero(curve.bounds < epsilon)
    if hit.size == 0:
        raise NotReached(f"bound never drops below {epsilon}")
    return int(curve.times[hit[0]])


def mixing_time_from_taus(taus, lag: int, epsilon: float = 0.01) -> int:
    """Exact smallest integer t with the plug-in bound below ``epsilon`` (bisection)."""
    taus = np.asarray(taus, dtype=np.float64)

    def bound(t):
        return np.maximum(0.0, np.ceil((taus - lag - t) / lag)).mean()

    lo, hi = 0, max(0, int(taus.max()) - lag)
    if bound(lo) < epsilon:
        return 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if bound(mid) < epsilon:
            hi = mid
        else:
            lo = mid
    return hi


def bootstrap_mixing_ci(taus, lag: int, epsilon: float = 0.01, n_boot: int = 1000,
                        level: float = 0.95, rng=None):
    rng = np.random.default_rng(0) if rng is None else rng
    taus = np.asarray(taus)
    est = np.array([
        mixing_time_from_taus(rng.choice(taus, size=taus.shape[0], replace=True), lag, epsilon)
        for _ in range(n_boot)
    ])
    alpha = (1.0 - level) / 2.0
    return float(np.quantile(est, alpha)), float(np.quantile(est, 1.0 - alpha))


# --------------------------------------------------------------------------
# favorable / unfavorable transitions

_Z95 = 1.959963984540054


def wilson_interval(k: int, n: int, z: float = _Z95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    phat = k / n
    den = 1.0 + z * z / n
    centre = (phat + z * z / (2 * n)) / den
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class TransitionBoundEstimate:
    from_label: PartitionLabel
    to_label: PartitionLabel
    estimate: float
    ci_low: float
    ci_high: float
    n_samples: int
    count: int
    n: int

    @property
    def scaled(self) -> float:
        return self.estimate * self.n

    @property
    def scaled_ci(self) -> tuple[float, float]:
        return self.ci_low * self.n, self.ci_high * self.n


def _sample_pair_indices(bits: np.ndarray, w: np.ndarray, th: PartitionThresholds,
                         label: PartitionLabel, rng, max_tries: int = 10_000):
    """Uniform (a, b) with bits[a] = 0, bits[b] = 1 whose pair has class ``label``.

    Returns None when no such pair exists for this background.
    """
    zeros = np.flatnonzero(bits == 0)
    ones = np.flatnonzero(bits == 1)
    if label == PartitionLabel.U:
        z_lo, z_hi = zeros[w[zeros] < th.w_lo], zeros[w[zeros] > th.w_hi]
        o_lo, o_hi = ones[w[ones] < th.w_lo], ones[w[ones] > th.w_hi]
        c1 = z_lo.size * o_hi.size
        c2 = z_hi.size * o_lo.size
        if c1 + c2 == 0:
            return None
        if rng.random() * (c1 + c2) < c1:
            return int(rng.choice(z_lo)), int(rng.choice(o_hi))
        return int(rng.choice(z_hi)), int(rng.choice(o_lo))
    for _ in range(max_tries):
        a = int(zeros[rng.integers(zeros.size)])
        b = int(ones[rng.integers(ones.size)])
        lo, hi = min(w[a], w[b]), max(w[a], w[b])
        if not (lo < th.w_lo and hi > th.w_hi):
            return a, b
    return None


def sample_class_pairs(model: CBModel, thresholds: PartitionThresholds, label: PartitionLabel,
                       n_pairs: int, rng, table=None, batch: int = 2048):
    """Adjacent pairs of a given class over exact CB(p, I) backgrounds.

    Returns (backgrounds (n_pairs, N) int8, a indices, b indices), where the
    pair is x = background and xt = x with a -> 1, b -> 0.
    """
    table = exact.build_table(model) if table is None else table
    bits_out = np.empty((n_pairs, model.n), dtype=np.int8)
    a_out = np.empty(n_pairs, dtype=np.int64)
    b_out = np.empty(n_pairs, dtype=np.int64)
    filled = 0
    misses = 0
    while filled < n_pairs:
        draws = exact.sample_exact_batch(model, table, rng, batch)
        for row in draws:
            pick = _sample_pair_indices(row, model.odds, thresholds, label, rng)
            if pick is None:
                misses += 1
                if misses > 50 * batch and filled == 0:
                    raise EmptyClass(f"no adjacent pair of class {label.name} found")
                continue
            bits_out[filled] = row
            a_out[filled], b_out[filled] = pick
            filled += 1
            if filled == n_pairs:
                break
    return bits_out, a_out, b_out


def estimate_partition_transitions(model: CBModel, thresholds: PartitionThresholds,
                                   samples_per_class: int, rng, table=None):
    """One-step class transitions of the coupled kernel, by Monte Carlo.

    For each origin class in (U, F), draws ``samples_per_class`` adjacent
    pairs (exact CB background, discrepancy positions uniform given the
    class), applies one coupled step and tallies the destination class.
    Returns estimates for all six (origin, destination) combinations with 95%
    Wilson intervals.

    Raises:
        EmptyClass: if a class has no adjacent pair under ``thresholds``.
    """
    lo = thresholds.w_lo
    if not np.any(model.odds < lo) or not np.any(model.odds > thresholds.w_hi):
        raise EmptyClass("no odds below w_lo or above w_hi: class U is empty")
    table = exact.build_table(model) if table is None else table
    results = []
    for origin in (PartitionLabel.U, PartitionLabel.F):
        bits, a, b = sample_class_pairs(model, thresholds, origin, samples_per_class, rng, table)
        out = np.empty((samples_per_class, 2), dtype=np.int64)
        K.adjacent_one_step_classes(bits, a, b, model.odds, thresholds.w_lo, thresholds.w_hi,
                                    rng.random((samples_per_class, 3)), out)
        assert np.all(out[:, 0] == origin)
        for dest in PartitionLabel:
            k = int(np.sum(out[:, 1] == dest))
            ci = wilson_interval(k, samples_per_class)
            results.append(TransitionBoundEstimate(origin, dest, k / samples_per_class, ci[0],
                                                   ci[1], samples_per_class, k, model.n))
    return results


# --------------------------------------------------------------------------
# brute-force oracles

def enumerate_cb(model: CBModel, max_support: int = 10**7):
    """Exact CB(p, I) law: (supports as (K, N) int8 rows, probabilities)."""
    if model.n > 25 or math.comb(model.n, model.target) > max_support:
        raise TooLarge(f"C({model.n},{model.target}) supports is too many to enumerate")
    combos = list(itertools.combinations(range(model.n), model.target))
    idx = np.array(combos, dtype=np.int64).reshape(len(combos), model.target)
    supports = np.zeros((len(combos), model.n), dtype=np.int8)
    np.put_along_axis(supports, idx, 1, axis=1)
    logw = np.log(model.odds)[idx].sum(axis=1)
    probs = np.exp(logw - logw.max())
    return supports, probs / probs.sum()


def support_codes(supports: np.ndarray) -> np.ndarray:
    """Bitmask code of each 0/1 row (bit n set when x_n = 1)."""
    weights = 1 << np.arange(supports.shape[1], dtype=np.int64)
    return supports.astype(np.int64) @ weights


def swap_transition_matrix(model: CBModel):
    """Exact swap-kernel matrix over the enumerated supports (same ordering)."""
    supports, _ = enumerate_cb(model)
    codes = support_codes(supports)
    where = {int(c): k for k, c in enumerate(codes)}
    size = len(codes)
    w = model.odds
    scale = 1.0 / ((model.n - model.target) * model.target)
    P = np.zeros((size, size))
    for k, row in enumerate(supports):
        zeros = np.flatnonzero(row == 0)
        ones = np.flatnonzero(row == 1)
        for i0 in zeros:
            for i1 in ones:
                acc = min(1.0, w[i0] / w[i1]) * scale
                dest = int(codes[k]) | (1 << int(i0))
                dest &= ~(1 << int(i1))
                P[k, where[dest]] += acc
        P[k, k] += 1.0 - P[k].sum()
    return supports, P


def exact_tv_curve(model: CBModel, times, init_mode: str = "uniform-subset") -> np.ndarray:
    """Exact ||law(x_t) - CB(p,I)||_TV at each t, by transition-matrix powers."""
    supports, P = swap_transition_matrix(model)
    _, target = enumerate_cb(model)
    if init_mode == "uniform-subset":
        law = np.full(len(supports), 1.0 / len(supports))
    elif init_mode == "first-I":
        law = np.zeros(len(supports))
        first = np.zeros(model.n, dtype=np.int8)
        first[: model.target] = 1
        law[np.flatnonzero((supports == first).all(axis=1))[0]] = 1.0
    else:
        raise ValueError(init_mode)
    times = np.asarray(times, dtype=np.int64)
    out = np.empty(times.shape[0])
    t_now = 0
    for k in np.argsort(times, kind="stable"):
        for _ in range(int(times[k]) - t_now):
            law = law @ P
        t_now = int(times[k])
        out[k] = 0.5 * np.abs(law - target).sum()
    return out


@dataclass
class ContractionReport:
    n_pairs: int
    min_rate: float
    max_rate: float
    worst_pair: tuple[int, int]
    worst_odds: tuple[float, float]
    path_checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.min_rate > 0 and all(chk["ok"] for chk in self.path_checks)


def verify_adjacent_contraction(model: CBModel, rng=None, n_paths: int = 3,
                                n_mc: int = 20_000) -> ContractionReport:
    """Contraction over every adjacent pair, plus a Monte Carlo path-coupling check.

    For ``n_paths`` random non-adjacent pairs, the mean distance after one
    path-coupled step is compared with (1 - min rate) * d; a check passes when
    the mean is within three standard errors of the bound or below it.
    """
    if model.n > 10:
        raise TooLarge("exhaustive adjacent-pair enumeration is limited to N <= 10")
    rng = np.random.default_rng(0) if rng is None else rng
    supports, _ = enumerate_cb(model)
    rates = []
    pairs = []
    for row in supports:
        x = ChainState(row)
        for a in np.flatnonzero(row == 0):
            for b in np.flatnonzero(row == 1):
                c = adjacent_pair(x, int(a), int(b))
                rates.append(coupled.contraction_rate(model, c))
                pairs.append(discrepancy_indices(c, model))
    rates = np.array(rates)
    k = int(np.argmin(rates))
    worst = pairs[k]
    report = ContractionReport(len(rates), float(rates.min()), float(rates.max()), worst,
                               (float(model.odds[worst[0]]), float(model.odds[worst[1]])))
    far = [(i, j) for i in range(len(supports)) for j in range(len(supports))
           if np.sum(supports[i] != supports[j]) >= 4]
    if not far:
        return report
    for pick in rng.choice(len(far), size=min(n_paths, len(far)), replace=False):
        i, j = far[int(pick)]
        x, xt = ChainState(supports[i]), ChainState(supports[j])
        d = int(np.sum(supports[i] != supports[j]))
        dists = np.empty(n_mc)
        for s in range(n_mc):
            xn, xtn = coupled.path_coupled_step(model, x, xt, rng)
            dists[s] = np.sum(xn.bits != xtn.bits)
        mean = float(dists.mean())
        se = float(dists.std(ddof=1) / math.sqrt(n_mc))
        bound = (1.0 - report.min_rate) * d
        report.path_checks.append({"d": d, "mean": mean, "se": se, "bound": bound,
                                   "ok": mean <= bound + 3 * se})
    return report


# --------------------------------------------------------------------------
# chasing chain attached to coupled trajectories

@dataclass
class ChasingResult:
    q: auxiliary.QMatrix
    envelope: dict
    counts: np.ndarray          # 3 x 3 pooled Z transition counts
    n_trajectories: int
    n_steps: int
    absorbed: int               # trajectories with Z reaching 3
    met: int                    # trajectories whose chains met


def initial_adjacent_pair(model: CBModel, table, rng) -> CoupledState:
    x = exact.sample_exact_batch(model, table, rng, 1)[0]
    a = int(rng.choice(np.flatnonzero(x == 0)))
    b = int(rng.choice(np.flatnonzero(x == 1)))
    return adjacent_pair(ChainState(x), a, b)


def run_chasing(model: CBModel, thresholds: PartitionThresholds, n_trajectories: int,
                n_steps: int, master_seed: int = 0, rates=None, margin: float = 0.5,
                keep: int = 0):
    """Coupled trajectories with an attached chasing chain Z.

    Each trajectory starts from an adjacent pair (exact CB draw plus a uniform
    discrepancy) with Z_0 = 1.  When ``rates`` is None they are set from the
    envelope of exact next-label probabilities seen on the trajectories:
    xi_UF and xi_FD at ``margin`` times their admissible maximum, xi_FU at
    the admissible minimum divided by ``margin`` (capped at its maximum).
    The label process does not depend on Z, so choosing rates from it leaves
    the law of Z equal to Q.

    Returns a :class:`ChasingResult` and the first ``keep`` ZTrajectory objects.
    """
    table = exact.build_table(model)
    all_labels = np.empty((n_trajectories, n_steps + 1), dtype=np.int64)
    all_probs = np.empty((n_trajectories, n_steps, 3))
    for r in range(n_trajectories):
        rng = stream_rng(master_seed, r, 0)
        c = initial_adjacent_pair(model, table, rng)
        all_labels[r], all_probs[r] = auxiliary.class_trajectory(model, c, thresholds, n_steps, rng)
    env = auxiliary.rate_envelope(_flat_labels(all_labels), all_probs.reshape(-1, 3), model.n)
    if rates is None:
        xi_uf = margin * env["uf_max"]
        xi_fd = margin * env["fd_max"]
        xi_fu = min(env["fu_min"] / margin, env["fu_max"]) if env["fu_min"] > 0 else margin * env["fu_max"]
        rates = (xi_uf, xi_fu, xi_fd)
    q = auxiliary.build_q(*rates, model.n)
    counts = np.zeros((3, 3), dtype=np.int64)
    absorbed = 0
    kept = []
    for r in range(n_trajectories):
        zrng = stream_rng(master_seed, r, 1)
        z = auxiliary.attach_z(all_labels[r], all_probs[r], q, zrng)
        np.add.at(counts, (z[:-1] - 1, z[1:] - 1), 1)
        absorbed += int(z[-1] == 3)
        if r < keep:
            kept.append(auxiliary.ZTrajectory(z, all_labels[r].copy(), r))
    met = int(np.sum(all_labels[:, -1] == 3))
    return ChasingResult(q, env, counts, n_trajectories, n_steps, absorbed, met), kept


def _flat_labels(all_labels: np.ndarray) -> np.ndarray:
    """Concatenate per-trajectory labels so that label[t] pairs with probs row t.

    The envelope reads labels[:-1] as the origin of each recorded law; per
    trajectory the origin labels are all_labels[r, :-1].  Returns them plus a
    trailing pad so the caller's probs rows line up.
    """
    origins = all_labels[:, :-1].reshape(-1)
    return np.concatenate([origins, [0]])


# --------------------------------------------------------------------------
# figure sweeps

def resolve_target(rule: str, n: int) -> int:
    """Target sum from ``K``, ``fixed:K`` or ``ratio:R`` (floor(R * n))."""
    if rule.startswith("ratio:"):
        return int(math.floor(float(rule.split(":", 1)[1]) * n))
    if rule.startswith("fixed:"):
        return int(rule.split(":", 1)[1])
    return int(rule)


def mixing_sweep(ns, target_rule: str, scale: str, master_seed: int = 0, replicates: int = 500,
                 lag: int = 1, epsilon: float = 0.01, prob_source: str = "uniform",
                 threads: int = 1, n_boot: int = 1000, cap_factor: float = 100.0):
    """Mixing-time estimates for each N; ``scale`` is ``nlogn`` or ``n``.

    Probabilities are generated once per N from (master_seed, N) and reused
    across replicates.  Returns one dict per N.
    """
    rows = []
    for n in ns:
        probs = generate_probs(prob_source, n, instance_rng(master_seed, n))
        model = build_model(probs, resolve_target(target_rule, n))
        cap = int(math.ceil(cap_factor * n * math.log(n)))
        records = run_meetings(model, lag, replicates, cap, "uniform-subset", master_seed, threads)
        taus = np.array([r.tau for r in records])
        censored = int(sum(r.censored for r in records))
        denom = n * math.log(n) if scale == "nlogn" else float(n)
        row = {"n": n, "target": model.target, "replicates": replicates, "lag": lag,
               "epsilon": epsilon, "censored": censored,
               "mean_tau": float(taus.mean()), "mean_tau_scaled": float(taus.mean() / denom)}
        if censored:
            row.update(mixing_time=float("nan"), mixing_scaled=float("nan"),
                       ci_low=float("nan"), ci_high=float("nan"))
        else:
            mix = mixing_time_from_taus(taus, lag, epsilon)
            lo, hi = bootstrap_mixing_ci(taus, lag, epsilon, n_boot,
                                         rng=stream_rng(master_seed, 0xB007, n))
            row.update(mixing_time=mix, mixing_scaled=mix / denom,
                       ci_low=lo / denom, ci_high=hi / denom)
        rows.append(row)
        log.info("N=%d I=%d mixing=%s", n, model.target, row["mixing_time"])
    return rows
