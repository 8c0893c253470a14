"""Command-line entry point: ``cbswap <subcommand> [options]``.

Every CSV starts with ``#`` comment lines holding the resolved run
configuration, enough to replay the run bit for bit.  Files are written only
under the output directory (``--out``, else ``$CBSWAP_OUT``, else ``.``).

Exit codes: 0 success, 1 data or validation error (one ``error:`` line on
stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, auxiliary, coupled, exact, experiments, selftest, swap
from .coupled import PartitionThresholds
from .errors import CBError, TooLarge
from .state import CoupledState, build_model, hamming_distance, initial_state

OUT_ENV = "CBSWAP_OUT"
log = logging.getLogger("cbswap")


class DataError(Exception):
    """Raised for bad option values detected after parsing."""


# --------------------------------------------------------------------------
# output helpers

def _out_dir(args) -> Path:
    path = Path(args.out or os.environ.get(OUT_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config_lines(args, extra=None) -> list[str]:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    if extra:
        cfg.update(extra)
    lines = [f"# cbswap {__version__}"]
    lines += [f"# {k}={v}" for k, v in cfg.items()]
    return lines


def write_csv(path: Path, header, rows, args, extra=None) -> Path:
    with open(path, "w", newline="") as fh:
        for line in _config_lines(args, extra):
            fh.write(line + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    print(path)
    return path


# --------------------------------------------------------------------------
# argument resolution

def _parse_ns(text: str) -> list[int]:
    try:
        ns = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad N list {text!r}")
    if not ns:
        raise argparse.ArgumentTypeError("empty N list")
    return ns


def _resolve_model(args, n: int | None = None):
    n = args.n if n is None else n
    probs = experiments.generate_probs(args.probs, n, experiments.instance_rng(args.seed, n))
    target = experiments.resolve_target(args.target, probs.shape[0])
    return build_model(probs, target)


def _resolve_thresholds(args, model) -> PartitionThresholds:
    if args.w_lo is not None or args.w_hi is not None:
        if args.w_lo is None or args.w_hi is None:
            raise DataError("--w-lo and --w-hi must be given together")
        return PartitionThresholds(args.w_lo, args.w_hi)
    return PartitionThresholds.from_percentiles(model, args.lo_pct, args.hi_pct)


def _threads(args) -> int:
    return args.threads if args.threads else (os.cpu_count() or 1)


# --------------------------------------------------------------------------
# subcommands

def cmd_exact(args) -> int:
    model = _resolve_model(args)
    rng = experiments.stream_rng(args.seed, 1)
    table = exact.build_table(model)
    draws = exact.sample_exact_batch(model, table, rng, args.samples)
    out = _out_dir(args)
    if args.save_table:
        exact.save_table(table, out / "table.cbqt")
    write_csv(out / "exact_samples.csv", ["sample", "ones"],
              ([k, " ".join(map(str, np.flatnonzero(row) + 1))] for k, row in enumerate(draws)), args,
              {"n_resolved": model.n, "target_resolved": model.target})
    # marginal inclusion frequencies, plus an oracle comparison when enumerable
    freq = draws.mean(axis=0)
    rows = [["inclusion_max_abs_dev", ""]]
    try:
        supports, law = experiments.enumerate_cb(model)
        incl = law @ supports
        codes = experiments.support_codes(supports)
        where = {int(c): k for k, c in enumerate(codes)}
        counts = np.bincount([where[int(c)] for c in experiments.support_codes(draws)],
                             minlength=len(law))
        tv = 0.5 * float(np.abs(counts / counts.sum() - law).sum())
        rows = [["inclusion_max_abs_dev", float(np.abs(freq - incl).max())], ["tv_vs_oracle", tv]]
    except TooLarge:
        rows = [["inclusion_mean_sum", float(freq.sum())]]
    write_csv(out / "exact_stats.csv", ["statistic", "value"], rows, args)
    return 0


def cmd_mcmc(args) -> int:
    model = _resolve_model(args)
    rng = experiments.stream_rng(args.seed, 1)
    x = initial_state(model, args.init, rng)
    logw = model.log_odds
    rows = []
    done = accepted = 0
    for t in experiments.geometric_grid(args.steps, args.points):
        accepted += swap.run(model, x, int(t) - done, rng)
        done = int(t)
        rows.append([done, accepted, accepted / done, float(logw[x.s1].sum())])
    write_csv(_out_dir(args) / "mcmc_trace.csv", ["t", "accepted", "acceptance_rate", "log_weight"],
              rows, args, {"target_resolved": model.target})
    return 0


def cmd_coupled(args) -> int:
    model = _resolve_model(args)
    rng = experiments.stream_rng(args.seed, 1)
    c = CoupledState(initial_state(model, "uniform-subset", rng).bits,
                     initial_state(model, "uniform-subset", rng).bits)
    rows = [[0, hamming_distance(c)]]
    for t in range(1, args.steps + 1):
        d_prev = rows[-1][1]
        coupled.coupled_step(model, c, rng)
        d = hamming_distance(c)
        if d != d_prev:
            rows.append([t, d])
        if c.met:
            break
    write_csv(_out_dir(args) / "coupled_distance.csv", ["t", "hamming"], rows, args,
              {"target_resolved": model.target, "met": c.met})
    return 0


def _meetings(args, model):
    cap = args.cap or experiments.default_cap(model.n)
    return experiments.run_meetings(model, args.lag, args.replicates, cap, args.init, args.seed,
                                    _threads(args)), cap


def cmd_meetings(args) -> int:
    model = _resolve_model(args)
    records, cap = _meetings(args, model)
    write_csv(_out_dir(args) / "meetings.csv", ["replicate", "seed", "lag", "tau", "censored"],
              ([r.replicate, r.seed, r.lag, r.tau, int(r.censored)] for r in records), args,
              {"cap_resolved": cap, "target_resolved": model.target})
    return 0


def cmd_mix(args) -> int:
    model = _resolve_model(args)
    records, cap = _meetings(args, model)
    out = _out_dir(args)
    extra = {"cap_resolved": cap, "target_resolved": model.target}
    curve = experiments.tv_upper_bound(records, experiments.geometric_grid(cap, 64))
    write_csv(out / "tv_curve.csv", ["t", "bound", "stderr"],
              zip(curve.times, curve.bounds, curve.stderr), args, extra)
    taus = np.array([r.tau for r in records])
    mix = experiments.mixing_time_from_taus(taus, args.lag, args.epsilon)
    lo, hi = experiments.bootstrap_mixing_ci(taus, args.lag, args.epsilon, args.bootstrap,
                                             rng=experiments.stream_rng(args.seed, 0xB007, model.n))
    write_csv(out / "mixing.csv", ["n", "target", "epsilon", "mixing_time", "ci_low", "ci_high",
                                   "mean_tau"],
              [[model.n, model.target, args.epsilon, mix, lo, hi, float(taus.mean())]], args, extra)
    return 0


def cmd_partition(args) -> int:
    model = _resolve_model(args)
    th = _resolve_thresholds(args, model)
    res = experiments.estimate_partition_transitions(model, th, args.samples,
                                                     experiments.stream_rng(args.seed, 1))
    write_csv(_out_dir(args) / "transitions.csv",
              ["from", "to", "estimate", "ci_low", "ci_high", "n", "scaled"],
              ([r.from_label.name, r.to_label.name, r.estimate, r.ci_low, r.ci_high, r.n_samples,
                r.scaled] for r in res), args,
              {"w_lo": th.w_lo, "w_hi": th.w_hi, "target_resolved": model.target})
    return 0


def cmd_chasing(args) -> int:
    model = _resolve_model(args)
    th = _resolve_thresholds(args, model)
    rates = None
    if args.rates:
        try:
            rates = tuple(float(v) for v in args.rates.split(","))
        except ValueError:
            raise DataError(f"bad --rates {args.rates!r}")
        if len(rates) != 3:
            raise DataError("--rates needs xi_uf,xi_fu,xi_fd")
    res, _ = experiments.run_chasing(model, th, args.trajectories, args.steps, args.seed, rates)
    q = res.q
    rows = [["xi_uf", q.xi_uf], ["xi_fu", q.xi_fu], ["xi_fd", q.xi_fd],
            ["second_eigenvalue", auxiliary.second_eigenvalue(q)],
            ["absorption_at_steps", auxiliary.absorption_probability(q, args.steps, 1)],
            ["absorbed_fraction", res.absorbed / res.n_trajectories],
            ["met_fraction", res.met / res.n_trajectories]]
    rows += [[f"envelope_{k}", v] for k, v in res.envelope.items()]
    for i in range(3):
        tot = res.counts[i].sum()
        for j in range(3):
            rows.append([f"z_{i + 1}{j + 1}_empirical", res.counts[i, j] / tot if tot else float("nan")])
            rows.append([f"z_{i + 1}{j + 1}_q", q.entries[i, j]])
    write_csv(_out_dir(args) / "chasing.csv", ["quantity", "value"], rows, args,
              {"w_lo": th.w_lo, "w_hi": th.w_hi, "target_resolved": model.target})
    return 0


def _figure(args, target_rule: str, scale: str, stem: str, ylabel: str) -> int:
    rows = experiments.mixing_sweep(args.n, target_rule, scale, args.seed, args.replicates,
                                    args.lag, args.epsilon, args.probs, _threads(args),
                                    args.bootstrap)
    out = _out_dir(args)
    keys = ["n", "target", "replicates", "lag", "epsilon", "censored", "mean_tau",
            "mean_tau_scaled", "mixing_time", "mixing_scaled", "ci_low", "ci_high"]
    write_csv(out / f"{stem}.csv", keys, ([r[k] for k in keys] for r in rows), args,
              {"target_rule": target_rule, "scale": scale})
    from .svg import line_chart

    line_chart([r["n"] for r in rows], [r["mixing_scaled"] for r in rows], out / f"{stem}.svg",
               title=f"{int(args.epsilon * 100)}% mixing time", xlabel="N", ylabel=ylabel,
               lows=[r["ci_low"] for r in rows], highs=[r["ci_high"] for r in rows])
    print(out / f"{stem}.svg")
    return 0


def cmd_figure1(args) -> int:
    return _figure(args, "ratio:0.5", "nlogn", "figure1", "mixing / (N log N)")


def cmd_figure3(args) -> int:
    return _figure(args, f"fixed:{args.fixed_target}", "n", "figure3", "mixing / N")


def cmd_selftest(args) -> int:
    results = selftest.run_all(args.seed)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'} {r.name} {r.detail}")
    return 0 if all(r.ok for r in results) else 1


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cbswap", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    common.add_argument("--threads", type=int, default=0, help="worker cap (0 = all cores)")
    common.add_argument("--verbose", "-v", action="store_true")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--n", type=int, default=100)
    model.add_argument("--target", default="ratio:0.5", help="K, fixed:K or ratio:R")
    model.add_argument("--probs", default="uniform", help="uniform, equal:<p> or csv:<path>")

    meet = argparse.ArgumentParser(add_help=False)
    meet.add_argument("--lag", type=int, default=1)
    meet.add_argument("--replicates", type=int, default=500)
    meet.add_argument("--cap", type=int, default=0, help="step cap (0 = ceil(100 N log N))")
    meet.add_argument("--init", choices=["uniform-subset", "first-I"], default="uniform-subset")

    mix = argparse.ArgumentParser(add_help=False)
    mix.add_argument("--epsilon", type=float, default=0.01)
    mix.add_argument("--bootstrap", type=int, default=1000, help="bootstrap resamples for CIs")

    thr = argparse.ArgumentParser(add_help=False)
    thr.add_argument("--lo-pct", type=float, default=10.0)
    thr.add_argument("--hi-pct", type=float, default=90.0)
    thr.add_argument("--w-lo", type=float, help="absolute lower odds threshold")
    thr.add_argument("--w-hi", type=float, help="absolute upper odds threshold")

    def add(name, func, parents, help_):
        sp = sub.add_parser(name, parents=parents, help=help_)
        sp.set_defaults(func=func)
        return sp

    sp = add("exact", cmd_exact, [common, model], "exact draws and oracle statistics")
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--save-table", action="store_true", help="also write table.cbqt")

    sp = add("mcmc", cmd_mcmc, [common, model], "run the swap chain and record a trace")
    sp.add_argument("--steps", type=int, default=100_000)
    sp.add_argument("--points", type=int, default=64)
    sp.add_argument("--init", choices=["uniform-subset", "first-I"], default="uniform-subset")

    sp = add("coupled", cmd_coupled, [common, model], "run one coupled pair until it meets")
    sp.add_argument("--steps", type=int, default=1_000_000)

    add("meetings", cmd_meetings, [common, model, meet], "lagged meeting times")
    add("mix", cmd_mix, [common, model, meet, mix], "TV bound curve and mixing time")

    sp = add("partition", cmd_partition, [common, model, thr], "U/F/D one-step transitions")
    sp.add_argument("--samples", type=int, default=100_000, help="pairs per origin class")

    sp = add("chasing", cmd_chasing, [common, model, thr], "chasing chain diagnostics")
    sp.add_argument("--trajectories", type=int, default=1000)
    sp.add_argument("--steps", type=int, default=0, help="steps per trajectory (0 = N)")
    sp.add_argument("--rates", help="xi_uf,xi_fu,xi_fd (default: from observed envelope)")

    for name, func, default_ns in (("figure1", cmd_figure1, "128,256,512,1024"),
                                   ("figure3", cmd_figure3, "128,256,512,1024")):
        sp = add(name, func, [common, meet, mix], f"{name} mixing-time sweep")
        sp.set_defaults(n=_parse_ns(default_ns))
        sp.add_argument("--n", type=_parse_ns, default=_parse_ns(default_ns),
                        help="comma-separated sizes")
        sp.add_argument("--probs", default="uniform")
        if name == "figure3":
            sp.add_argument("--fixed-target", type=int, default=10)

    add("selftest", cmd_selftest, [common], "small-N oracle checks")
    return p


def _validate(args) -> None:
    positive = ("samples", "steps", "replicates", "lag", "trajectories", "points", "bootstrap")
    for name in positive:
        v = getattr(args, name, None)
        if v is not None and v < (0 if (name == "steps" and args.command == "chasing") else 1):
            raise DataError(f"--{name} must be positive")
    if getattr(args, "epsilon", None) is not None and not (0 < args.epsilon < 1):
        raise DataError("--epsilon must lie in (0, 1)")
    if args.command == "chasing" and args.steps == 0:
        args.steps = args.n


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        _validate(args)
        code = args.func(args)
    except (DataError, CBError, ValueError, ArithmeticError, OSError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: type={type(exc).__name__} message={msg}", file=sys.stderr)
        return 1
    log.info("%s finished in %.2fs", args.command, time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
