"""Small-N oracle checks, runnable in a few seconds from the command line."""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from . import auxiliary, coupled, exact, experiments, swap
from .state import ChainState, CoupledState, adjacent_pair, build_model


class CheckResult(NamedTuple):
    name: str
    ok: bool
    detail: str


def _exact_vs_enumeration(rng) -> CheckResult:
    model = build_model(rng.random(7), 3)
    supports, law = experiments.enumerate_cb(model)
    draws = exact.sample_exact_batch(model, exact.build_table(model), rng, 200_000)
    where = {int(c): k for k, c in enumerate(experiments.support_codes(supports))}
    counts = np.bincount([where[int(c)] for c in experiments.support_codes(draws)],
                         minlength=len(law))
    tv = 0.5 * np.abs(counts / counts.sum() - law).sum()
    return CheckResult("exact-vs-enumeration", tv < 0.01, f"tv={tv:.4g}")


def _swap_stationary(rng) -> CheckResult:
    model = build_model(rng.random(7), 3)
    _, law = experiments.enumerate_cb(model)
    _, P = experiments.swap_transition_matrix(model)
    err = float(np.abs(law @ P - law).max())
    return CheckResult("swap-stationary", err < 1e-12, f"max|pi P - pi|={err:.3g}")


def _coupled_marginals(rng) -> CheckResult:
    model = build_model(rng.random(6), 3)
    x = np.array([1, 1, 1, 0, 0, 0], dtype=np.int8)
    xt = np.array([0, 1, 0, 1, 1, 0], dtype=np.int8)
    c = CoupledState(x, xt)
    n = 200_000
    cx, cxt = coupled.coupled_one_step_samples(model, c, n, rng)
    worst = 0.0
    for bits, codes in ((x, cx), (xt, cxt)):
        ref = swap.one_step_samples(model, ChainState(bits), n, rng)
        keys = np.union1d(codes, ref)
        a = np.array([np.sum(codes == k) for k in keys]) / n
        b = np.array([np.sum(ref == k) for k in keys]) / n
        worst = max(worst, 0.5 * float(np.abs(a - b).sum()))
    return CheckResult("coupled-marginals", worst < 0.01, f"tv={worst:.4g}")


def _contraction_formula(rng) -> CheckResult:
    model = build_model(rng.random(8), 3)
    th = coupled.PartitionThresholds.from_percentiles(model)
    x = ChainState(np.array([1, 0, 1, 0, 1, 0, 0, 0], dtype=np.int8))
    worst = 0.0
    for a in x.s0:
        for b in x.s1:
            c = adjacent_pair(x, int(a), int(b))
            worst = max(worst, abs(coupled.contraction_rate(model, c)
                                   - coupled.transition_law(model, c, th)[2]))
    return CheckResult("contraction-formula", worst < 1e-12, f"max diff={worst:.3g}")


def _equal_p_rate(rng) -> CheckResult:
    n, i = 10, 4
    model = build_model(np.full(n, 0.3), i)
    rep = experiments.verify_adjacent_contraction(model, rng, n_paths=1, n_mc=2000)
    want = (n - 2) / ((n - i) * i)
    ok = abs(rep.min_rate - want) < 1e-12 and abs(rep.max_rate - want) < 1e-12
    return CheckResult("equal-p-rate", ok, f"rate={rep.min_rate:.6g} want={want:.6g}")


def _q_eigen(rng) -> CheckResult:
    worst = 0.0
    for _ in range(50):
        r = rng.uniform(0.1, 3.0, 3)
        q = auxiliary.build_q(*r, 100)
        num = float(np.max(np.linalg.eigvals(q.entries[:2, :2]).real))
        worst = max(worst, abs(num - auxiliary.second_eigenvalue(q)))
    return CheckResult("q-eigenvalue", worst < 1e-10, f"max diff={worst:.3g}")


def _tv_bound(rng) -> CheckResult:
    """Exact TV against the plug-in bound wherever some replicate is still unmet.

    Past max(tau) - L the bound and its standard error are both exactly zero
    while the exact TV stays positive, so those points carry no information.
    """
    model = build_model(rng.random(6), 3)
    records = experiments.run_meetings(model, 1, 2000, 10_000, master_seed=int(rng.integers(2**31)))
    curve = experiments.tv_upper_bound(records)
    tv = experiments.exact_tv_curve(model, curve.times)
    live = curve.bounds > 0
    slack = float(np.min((curve.bounds + 3 * curve.stderr - tv)[live]))
    return CheckResult("tv-bound", slack >= 0, f"min slack={slack:.4g}")


SUITES: dict[str, Callable] = {
    "exact-vs-enumeration": _exact_vs_enumeration,
    "swap-stationary": _swap_stationary,
    "coupled-marginals": _coupled_marginals,
    "contraction-formula": _contraction_formula,
    "equal-p-rate": _equal_p_rate,
    "q-eigenvalue": _q_eigen,
    "tv-bound": _tv_bound,
}


def run_all(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [fn(rng) for fn in SUITES.values()]
