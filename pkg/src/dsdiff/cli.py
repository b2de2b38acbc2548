"""Command-line entry point: ``dsdiff <subcommand> [options]``.

Exit codes: 0 success, 1 verify failure, 2 config error, 3 numeric abort,
4 checkpoint mismatch, 5 oracle cap exceeded.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List

import numpy as np

from . import diagnostics as dg
from . import io
from .exceptions import (CheckpointMismatchError, FullSupportError, InvalidStateError,
                         OracleCapError, RateBoundError, TrainingAborted)
from .sampler import JumpTrace, SamplerConfig, exact_reverse_marginal, sample_reverse, tabulate
from .score_net import load_checkpoint, save_checkpoint
from .state_process import StateSpace
from .trainer import draw_dataset, resolve_C, train

log = logging.getLogger("dsdiff")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECKPOINT, EXIT_CAP = range(6)
CHECKPOINT_DIR = "checkpoints"


def checkpoint_name(k: int) -> str:
    return f"net_{k:03d}.bin"


# -- shared helpers ---------------------------------------------------------------

def load_config(args):
    overrides = io.parse_overrides(args.set or [])
    if args.seed is not None:
        for key in ("seed_dataset", "seed_train", "seed_sample"):
            overrides.setdefault(key, str(args.seed))
    return io.load_run_config(args.config, overrides)


def out_dir(args) -> Path:
    path = Path(args.out or "out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def require_p0(cfg, space: StateSpace):
    if not cfg.p0:
        raise io.ConfigError("missing required key 'p0' (an analytic law such as "
                             "'uniform' or 'product:0.7,0.3')")
    space.require_enumerable()
    return io.parse_p0(cfg.p0, space)


def resolve_clip(cfg, p0, data, space):
    """``(B or None, C)`` following the config's C policy."""
    if cfg.C != "auto":
        try:
            C = float(cfg.C)
        except ValueError:
            raise io.ConfigError(f"key 'C': expected 'auto' or a number, got {cfg.C!r}") from None
        if not C > 1:
            raise io.ConfigError(f"key 'C': clip bound must exceed 1, got {C}")
        return None, C
    if p0 is not None:
        try:
            return resolve_C(p0)
        except FullSupportError as exc:
            raise io.ConfigError(f"C=auto needs a full-support p0 ({exc}); set C explicitly") from None
    return resolve_C(data, space, cfg.smoothing_alpha)


def load_checkpoints(directory):
    """Load ``net_*.bin`` from ``directory`` and check the headers agree."""
    directory = Path(directory)
    files = sorted(directory.glob("net_*.bin")) if directory.is_dir() else []
    if not files:
        raise io.ConfigError(f"no checkpoints (net_*.bin) found in {directory}")
    try:
        loaded = [load_checkpoint(f) for f in files]
    except (ValueError, OSError) as exc:
        raise CheckpointMismatchError(str(exc)) from None
    ref = loaded[0][1]
    keys = ("S", "d", "K", "h", "delta", "C", "widths", "version")
    for f, (_, hdr) in zip(files, loaded):
        diff = [k for k in keys if hdr[k] != ref[k]]
        if diff:
            raise CheckpointMismatchError(f"{f.name} disagrees with {files[0].name} on {diff}")
    ks = sorted(hdr["k"] for _, hdr in loaded)
    if ks != list(range(ref["K"])):
        raise CheckpointMismatchError(f"expected intervals 0..{ref['K'] - 1}, found {ks}")
    nets = [net for net, _ in sorted(loaded, key=lambda item: item[1]["k"])]
    return nets, ref


def checkpoint_dir(args) -> Path:
    if getattr(args, "checkpoints", None):
        return Path(args.checkpoints)
    return Path(args.out or "out") / CHECKPOINT_DIR


# -- subcommands ------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg, _ = load_config(args)
    space = cfg.space
    p0 = require_p0(cfg, space) if cfg.p0 else None
    if cfg.dataset:
        try:
            data = io.read_states(cfg.dataset, space)
        except OSError as exc:
            raise io.ConfigError(f"key 'dataset': {exc}") from None
        if len(data) == 0:
            raise io.ConfigError(f"key 'dataset': {cfg.dataset} is empty")
        cfg = cfg.replace(n_k=len(data), batch_size=min(cfg.batch_size, len(data)))
    elif p0 is not None:
        data = draw_dataset(p0, cfg.n_k, np.random.default_rng(cfg.seed_dataset))
    else:
        raise io.ConfigError("missing training data: set key 'dataset' (a file of states) "
                             "or key 'p0' (an analytic law)")
    B, C = resolve_clip(cfg, p0, data, space)
    log.info("training K=%d nets on %d samples, C=%g", cfg.K, len(data), C)
    nets, trace = train(data, cfg, C)

    out = out_dir(args)
    ck = out / CHECKPOINT_DIR
    ck.mkdir(exist_ok=True)
    for stale in ck.glob("net_*.bin"):
        stale.unlink()
    for net in nets:
        save_checkpoint(net, ck / checkpoint_name(net.k), cfg.K, cfg.h, cfg.delta)
    io.write_training_log(trace, out / "train_log.csv")
    with open(out / "weights.csv", "w") as fh:
        fh.write("k,max_abs_param\n")
        for k, w in enumerate(trace.max_abs_param):
            fh.write(f"{k},{w!r}\n")
    if not cfg.dataset:
        io.write_states(out / "dataset.txt", data)
    header = f"# resolved clip bound C = {C!r}" + ("" if B is None else f" (ratio bound B = {B!r})")
    (out / "config.txt").write_text(header + "\n" + io.format_config(cfg))
    print(f"wrote {len(nets)} checkpoints to {ck} and {len(trace.epoch_rows())} log rows")
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg, _ = load_config(args)
    nets, hdr = load_checkpoints(checkpoint_dir(args))
    if args.count < 0:
        raise io.ConfigError("--count must be nonnegative")
    space = StateSpace(hdr["S"], hdr["d"])
    scfg = SamplerConfig(hdr["K"], hdr["h"], hdr["delta"], seed=cfg.seed_sample)
    trace = JumpTrace() if args.trace else None
    if args.count:
        z = sample_reverse(nets, scfg, args.count, space, trace=trace)
    else:
        z = np.zeros((0, space.d), dtype=np.int64)
    out = out_dir(args)
    io.write_states(out / "samples.txt", z)
    if trace is not None:
        trace.to_csv(out / "jump_trace.csv")
    print(f"wrote {len(z)} samples to {out / 'samples.txt'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg, _ = load_config(args)
    space = cfg.space
    try:
        space.require_enumerable()
    except OracleCapError as exc:
        raise OracleCapError(f"{exc}; exact evaluation is impossible here, compare sampled "
                             f"histograms from 'dsdiff sample' instead") from None
    p0 = require_p0(cfg, space)
    nets, hdr = load_checkpoints(checkpoint_dir(args))
    if (hdr["S"], hdr["d"]) != (space.S, space.d):
        raise CheckpointMismatchError(f"checkpoints are for S={hdr['S']}, d={hdr['d']} but the "
                                      f"config says S={space.S}, d={space.d}")
    K, h, delta = hdr["K"], hdr["h"], hdr["delta"]
    out_law = exact_reverse_marginal(nets, SamplerConfig(K, h, delta), space)
    terms = dg.error_terms_for_nets(p0, nets, h, delta)
    T = K * h + delta
    trunc, trunc_bound = dg.truncation_error(p0, T)
    metrics = {
        "S": space.S, "d": space.d, "K": K, "h": h, "delta": delta, "C": hdr["C"],
        "kl": dg.kl(p0, out_law),
        "truncation": {"kl": trunc, "bound": trunc_bound},
        "error_terms": [{"k": k, "A": et.A, "B": et.B, "C": et.C} for k, et in enumerate(terms)],
    }
    try:
        tables = [tabulate(net, space) for net in nets]
        gap, bound, ct, dt = dg.discretization_gap(p0, tables, K, h, delta, C=hdr["C"])
        metrics["discretization"] = {"gap": gap, "bound": bound, "continuous": ct, "discrete": dt}
    except FullSupportError as exc:
        metrics["discretization"] = {"skipped": str(exc)}
    violations = {k: et.violations() for k, et in enumerate(terms) if et.violations()}
    metrics["error_term_violations"] = {str(k): v for k, v in violations.items()}

    out = out_dir(args)
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    dg.write_error_terms_csv(terms, out / "error_terms.csv")
    print(f"KL(p_data || p_out) = {metrics['kl']:.6g}; truncation {trunc:.3g} <= {trunc_bound:.3g}")
    if violations:
        print(f"error-term inequalities violated at intervals {sorted(violations)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg, extras = load_config(args)
    p_data = require_p0(cfg, cfg.space)
    n_grid = io.parse_int_list(extras["n_grid"], "n_grid")
    seeds = io.parse_int_list(extras["seeds"], "seeds")
    if min(n_grid) < 1:
        raise io.ConfigError("key 'n_grid': sample counts must be positive")
    jobs = args.jobs or os.cpu_count() or 1

    def progress(row):
        log.info("n_k=%d seed=%d err=%.4g kl=%.4g (%.0f ms)", row.n_k, row.seed,
                 row.mean_score_err, row.kl, row.wall_ms)

    rows, fit = dg.sweep(cfg, p_data, n_grid, seeds, jobs=jobs, progress=progress)
    out = out_dir(args)
    dg.write_sweep_csv(rows, out / "sweep.csv")
    ns = sorted(set(n_grid))
    geo_err = [float(np.exp(np.mean([np.log(r.mean_score_err) for r in rows if r.n_k == n])))
               for n in ns]
    _, med_kl = dg.median_kl_by_n(rows)
    dg.write_xy(out / "score_err_vs_n.xy", ns, geo_err)
    dg.write_xy(out / "score_err_fit.xy", ns, np.exp(fit.intercept) * np.asarray(ns, float) ** fit.slope)
    dg.write_xy(out / "kl_vs_n.xy", ns, med_kl)
    rho = dg.kl_monotonicity(rows) if len(ns) > 1 else None
    lo, hi = fit.ci95 if len(rows) > 2 else (float("nan"), float("nan"))
    summary = {"slope": fit.slope, "ci95": [lo, hi], "intercept": fit.intercept,
               "n_grid": ns, "seeds": seeds, "median_kl": med_kl, "kl_spearman": rho}
    (out / "sweep_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"slope of log score error vs log n_k: {fit.slope:.4f} (95% CI {lo:.4f} .. {hi:.4f})")
    print("median KL by n_k: " + ", ".join(f"{n}: {k:.4g}" for n, k in zip(ns, med_kl)))
    if rho is not None:
        print(f"Spearman rho (n_k vs median KL): {rho:.3f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import format_result, run_suites

    _, extras = load_config(args)
    try:
        scale = float(extras["verify_scale"])
        clip = None if extras["verify_clip_C"] == "auto" else float(extras["verify_clip_C"])
    except ValueError as exc:
        raise io.ConfigError(f"verify settings: {exc}") from None
    results = run_suites(scale=scale, clip_C=clip, suites=args.suite or None,
                         progress=lambda r: print(format_result(r), flush=True))
    suites = {}
    for r in results:
        suites.setdefault(r.suite, []).append(r.passed)
    print()
    for name, flags in suites.items():
        print(f"suite {name:<16} {'PASS' if all(flags) else 'FAIL'} ({sum(flags)}/{len(flags)})")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def parse_eps(items: List[str]) -> List[float]:
    vals = []
    for item in items:
        for s in item.split(","):
            if s.strip():
                try:
                    vals.append(float(s))
                except ValueError:
                    raise io.ConfigError(f"--eps: cannot parse {s!r}") from None
    return vals


def cmd_hardness(args) -> int:
    eps = parse_eps(args.eps) if args.eps else np.geomspace(1e-4, 0.039, 12).tolist()
    bad = [e for e in eps if not 0 < e < 1 / 25]
    if bad:
        raise io.ConfigError(f"--eps values must lie in (0, 1/25); rejected {bad}")
    rows = []
    print(f"{'eps':>12} {'KL(P||Q)':>14} {'H^2':>14} {'7.5 eps':>12} {'KL/eps':>10}  pass")
    for e in eps:
        kl_pq, h2, lb = dg.hardness_pair(e)
        ok = h2 > lb
        rows.append((e, kl_pq, h2, lb, ok))
        print(f"{e:12.6g} {kl_pq:14.8g} {h2:14.8g} {lb:12.6g} {kl_pq / e:10.5f}  {'yes' if ok else 'NO'}")
    if args.out:
        out = out_dir(args)
        with open(out / "hardness.csv", "w") as fh:
            fh.write("eps,kl,hellinger2,lower_bound,pass\n")
            for e, kl_pq, h2, lb, ok in rows:
                fh.write(f"{e!r},{kl_pq!r},{h2!r},{lb!r},{int(ok)}\n")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--out", help="output directory (default: ./out)")
    common.add_argument("--seed", type=int, help="set seed_dataset, seed_train and seed_sample")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="dsdiff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train one score net per interval")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", parents=[common], help="draw samples from trained checkpoints")
    p.add_argument("--checkpoints", help="checkpoint directory (default: OUT/checkpoints)")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--trace", action="store_true", help="also write jump_trace.csv")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("evaluate", parents=[common], help="exact KL and error terms vs p0")
    p.add_argument("--checkpoints", help="checkpoint directory (default: OUT/checkpoints)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common], help="sample-complexity sweep over n_grid x seeds")
    p.add_argument("--jobs", type=int, help="worker processes (default: logical cores)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", parents=[common], help="run the property suites")
    p.add_argument("--suite", action="append", help="run only this suite (repeatable)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("hardness", parents=[common], help="two-point hardness table")
    p.add_argument("--eps", action="append", help="comma-separated eps values in (0, 1/25)")
    p.set_defaults(func=cmd_hardness)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except io.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvalidStateError, FullSupportError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingAborted, RateBoundError) as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CheckpointMismatchError as exc:
        print(f"checkpoint mismatch: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except OracleCapError as exc:
        print(f"oracle cap: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
