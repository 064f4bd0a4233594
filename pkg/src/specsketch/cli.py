"""Command line workflow: generate, sketch, estimate, baseline, compare, bench.

Every run writes a JSON manifest beside its primary output recording the
subcommand, all flags, the toolkit version and wall clock time; rerunning
with the same flags reproduces the outputs byte for byte. Output files are
written atomically.

Exit codes: 2 usage error, 3 file format error, 4 numeric failure.
The environment variable SPECSKETCH_THREADS caps bench parallelism.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from . import io as skio
from .baselines import (
    SamplingScheme,
    autocorr_entrywise,
    autocorr_particle_subsampled,
    autocorr_time_subsampled,
    block_correlator,
    hierarchical_correlator,
    interpolate_missing_lags,
    sample_entries,
    sample_time,
)
from .metrics import psd_errors, storage_report
from .seeding import generator
from .spectral import (
    AllocationAudit,
    AutocorrEstimate,
    autocorr_fft,
    bartlett_window,
    estimate_from_blocks,
    psd_from_autocorr,
    run_pipeline,
    sketch_blocks,
)
from .synth import (
    AdversarialConfig,
    TwoFrequencyConfig,
    gen_adversarial,
    gen_two_frequency,
    two_frequency_truth,
)

EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_NUMERIC = 4

SKETCH_METHODS = ("gaussian", "haar", "fjlt")
BASELINE_METHODS = ("time-random", "power-series", "sparse-ruler",
                    "block", "hier", "particle", "entries")
CSV_HEADER = "method,gamma_eff,rel_l1,rel_l2,rel_linf"


def _thread_cap() -> int:
    raw = os.environ.get("SPECSKETCH_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"SPECSKETCH_THREADS must be an integer, got {raw!r}")


def _write_manifest(args: argparse.Namespace, outputs: list[str],
                    wall_clock: float) -> None:
    if not outputs:
        return
    flags = {k: v for k, v in vars(args).items()
             if k not in ("func", "subcommand") and v is not None}
    payload = {
        "subcommand": args.subcommand,
        "flags": flags,
        "master_seed": getattr(args, "seed", None),
        "version": __version__,
        "wall_clock_s": round(wall_clock, 6),
        "outputs": [os.path.abspath(p) for p in outputs],
    }
    path = outputs[0] + ".manifest.json"
    skio._atomic_write(path, lambda fh: fh.write(
        json.dumps(payload, indent=2, default=str).encode("utf-8")))


def _save_two_col(path, col_a, col_b, header):
    if str(path).endswith(".dmat"):
        skio.write_dense(np.column_stack([col_a, col_b]), path)
    else:
        skio.save_table(path, col_a, col_b, header=header)


# ---------------------------------------------------------------- synth

def cmd_synth(args) -> list[str]:
    if args.kind == "two-freq":
        cfg = TwoFrequencyConfig(
            n_particles=args.n, n_steps=args.t, seed=args.seed,
            f_fast=args.f_fast, f_slow=args.f_slow,
            dt=args.dt if args.dt is not None else 1e-3)
        src = gen_two_frequency(cfg)
    else:
        overrides = {k: v for k, v in (
            ("omega", args.omega), ("omega_prime", args.omega_prime),
            ("n_special", args.n_special),
            ("noise_sigma", args.noise_sigma), ("dt", args.dt),
        ) if v is not None}
        cfg = AdversarialConfig(n_particles=args.n, n_steps=args.t,
                                seed=args.seed, **overrides)
        src = gen_adversarial(cfg)

    if args.out is None or args.out == "-":
        skio.write_csv(src, None)
        return []
    if args.out.endswith(".csv"):
        skio.write_csv(src, args.out)
    else:
        skio.write_dense(src, args.out)
    return [args.out]


# ---------------------------------------------------------------- sketch

def cmd_sketch(args) -> list[str]:
    audit = AllocationAudit() if args.mem_audit else None
    src = skio.read_dense(args.infile, audit=audit)
    os.makedirs(args.out_dir, exist_ok=True)

    paths = []
    for block in sketch_blocks(src, args.blocks, args.m, args.method,
                               args.seed, transform=args.transform,
                               audit=audit):
        path = os.path.join(args.out_dir, f"block_{block.block_index:05d}.skb")
        skio.write_sketched(block, path)
        paths.append(path)
    manifest = os.path.join(args.out_dir, "blocks.txt")
    skio.write_block_manifest(paths, manifest)

    if audit is not None:
        # The intended working set: one compressed block, one operator
        # payload, one bounded row chunk. Anything larger (in particular a
        # full T_long x N buffer) breaks the streaming contract.
        n_steps = src.n_steps // args.blocks
        op_cells = args.m * src.n_particles
        intended = max(n_steps * args.m, op_cells, 64 * src.n_particles)
        peak = audit.max_cells
        print(f"mem-audit: peak allocation {peak} cells, "
              f"intended working set {intended} cells, "
              f"full matrix {src.n_steps * src.n_particles} cells",
              file=sys.stderr)
        if peak > intended:
            raise ArithmeticError(
                f"streaming contract violated: allocated {peak} cells, "
                f"intended working set is {intended}")
    return [manifest] + paths


# ---------------------------------------------------------------- estimate

def cmd_estimate(args) -> list[str]:
    manifest = args.manifest or os.path.join(args.in_dir, "blocks.txt")
    block_paths = skio.read_block_manifest(manifest)
    blocks = (skio.read_sketched(p) for p in block_paths)
    window = False if args.no_window else None
    est, psd = estimate_from_blocks(blocks, window=window)
    _save_two_col(args.acf_out, np.arange(est.n_lags, dtype=float), est.r,
                  "lag autocorrelation")
    _save_two_col(args.psd_out, psd.freqs, psd.density,
                  "frequency_hz spectral_density")
    return [args.acf_out, args.psd_out]


# ---------------------------------------------------------------- baseline

def _zero_fill_tail(est: AutocorrEstimate) -> AutocorrEstimate:
    """Interpolate interior gaps, then zero out lags beyond the last valid.

    Used for the windowed on-the-fly correlators: long lags were never
    observed at all, and treating them as zero correlation is the standard
    truncation estimate (at the cost of PSD resolution).
    """
    taus = np.arange(est.n_lags)
    last = taus[est.valid][-1]
    interior = est.valid | (taus > last)
    if not interior.all():
        clipped = AutocorrEstimate(est.r[:last + 1], est.counts[:last + 1],
                                   valid=est.valid[:last + 1])
        filled = interpolate_missing_lags(clipped)
        r = np.concatenate([filled.r, np.zeros(est.n_lags - last - 1)])
    else:
        r = np.where(taus <= last, np.nan_to_num(est.r), 0.0)
    return AutocorrEstimate(r, est.counts.copy(),
                            valid=np.ones(est.n_lags, dtype=bool))


def baseline_estimate(x: np.ndarray, method: str, *, gamma=None, k=None,
                      seed=0, ell=None, coarse=2, levels=None,
                      ) -> tuple[AutocorrEstimate, float]:
    """Run one classical estimator on a full matrix.

    Returns the (PSD-ready, fully valid) estimate and the honest
    compression ratio including meta-data. Missing lags are spline
    interpolated for the subsampling estimators and zero-filled past the
    observation window for the on-the-fly correlators.
    """
    n_steps, n_particles = x.shape

    if method in ("time-random", "power-series", "sparse-ruler"):
        if method == "time-random":
            if gamma is None:
                raise ValueError("time-random needs --gamma")
            idx = sample_time(SamplingScheme.RANDOM, n_steps, gamma, seed)
        else:
            scheme = SamplingScheme(method.replace("time-", ""))
            if k is None:
                if gamma is None:
                    raise ValueError(f"{method} needs --k or --gamma")
                k = pick_block_exponent(scheme, n_steps, gamma)
            idx = sample_time(scheme, n_steps, k, seed)
        est = autocorr_time_subsampled(x[idx.indices - 1], idx)
        gamma_eff = storage_report("time", n_steps, n_particles,
                                   sample_size=len(idx)).gamma_eff
        if not est.valid.all():
            est = interpolate_missing_lags(est)
        return est, gamma_eff

    if method == "particle":
        if gamma is None:
            raise ValueError("particle needs --gamma")
        size = int(np.ceil(gamma * n_particles))
        cols = np.unique(generator(seed).integers(0, n_particles, size=size))
        est = autocorr_particle_subsampled(x[:, cols])
        gamma_eff = storage_report("particle", n_steps, n_particles,
                                   sample_size=cols.size).gamma_eff
        return est, gamma_eff

    if method == "entries":
        if gamma is None:
            raise ValueError("entries needs --gamma")
        entries = sample_entries(x, gamma, seed)
        est = autocorr_entrywise(entries)
        gamma_eff = storage_report("entries", n_steps, n_particles,
                                   nnz=entries.n_sampled).gamma_eff
        if not est.valid.all():
            est = interpolate_missing_lags(est)
        return est, gamma_eff

    if method == "block":
        if ell is None:
            ell = max(2, int(np.ceil((gamma or 0.1) * n_steps)))
        est = block_correlator(iter(x), ell)
        gamma_eff = ell / n_steps  # rolling-buffer equivalent storage
        return _zero_fill_tail(est), gamma_eff

    if method == "hier":
        if ell is None:
            ell = 16
        if levels is None:
            levels = max(1, int(math.ceil(
                math.log(max(n_steps / ell, 1.0), coarse))) + 1)
        est = hierarchical_correlator(iter(x), ell, coarse, levels)
        gamma_eff = (ell * levels) / n_steps
        return _zero_fill_tail(est), gamma_eff

    raise ValueError(f"unknown baseline method {method!r}")


def pick_block_exponent(scheme: SamplingScheme, n_steps: int,
                        gamma: float) -> int:
    """Block exponent k whose realized sample size best matches gamma."""
    target = gamma * n_steps
    best_k, best_err = 1, float("inf")
    for k in range(1, max(2, int(math.log2(n_steps)) + 1)):
        size = len(sample_time(scheme, n_steps, k))
        err = abs(size - target)
        if err < best_err:
            best_k, best_err = k, err
    return best_k


def cmd_baseline(args) -> list[str]:
    src = skio.read_dense(args.infile)
    x = src.to_matrix()
    est, gamma_eff = baseline_estimate(
        x, args.method, gamma=args.gamma, k=args.k, seed=args.seed,
        ell=args.ell, coarse=args.coarse, levels=args.levels)
    if args.window:
        est = bartlett_window(est)
    psd = psd_from_autocorr(est, src.dt)
    print(f"{args.method}: gamma_eff={gamma_eff:.6g}", file=sys.stderr)
    _save_two_col(args.acf_out, np.arange(est.n_lags, dtype=float), est.r,
                  "lag autocorrelation")
    _save_two_col(args.psd_out, psd.freqs, psd.density,
                  "frequency_hz spectral_density")
    return [args.acf_out, args.psd_out]


# ---------------------------------------------------------------- compare

def cmd_compare(args) -> list[str]:
    _, est_vals = skio.load_table(args.est)
    _, truth_vals = skio.load_table(args.truth)
    if est_vals.size != truth_vals.size:
        raise skio.FormatError(
            f"length mismatch: {est_vals.size} vs {truth_vals.size} bins")
    report = psd_errors(est_vals, truth_vals)
    row = report.csv_row(args.label, args.gamma_eff)
    print(row)
    if args.out:
        skio._atomic_write(args.out, lambda fh: fh.write(
            f"{CSV_HEADER}\n{row}\n".encode("utf-8")))
        return [args.out]
    return []


# ---------------------------------------------------------------- bench

def sketch_estimate(x: np.ndarray, dt: float, method: str, gamma: float,
                    seed: int, n_blocks: int = 1,
                    window: bool | None = None,
                    ) -> tuple[AutocorrEstimate, float]:
    """Sketch pipeline on an in-memory matrix at a target ratio."""
    from .spectral import TimeSeriesSource
    n_particles = x.shape[1]
    m = max(1, round(gamma * n_particles))
    if method == "haar":
        m = min(m, n_particles)
    src = TimeSeriesSource.from_matrix(x, dt=dt)
    est, _ = run_pipeline(src, n_blocks, m, method, seed, window=window)
    gamma_eff = storage_report("sketch", x.shape[0], n_particles,
                               m=m).gamma_eff
    return est, gamma_eff


def _bench_cell(x, dt, truth_density, method, gamma, seed, window=False):
    if method in SKETCH_METHODS:
        est, gamma_eff = sketch_estimate(x, dt, method, gamma, seed,
                                         window=window or None)
    else:
        est, gamma_eff = baseline_estimate(x, method, gamma=gamma, seed=seed)
        if window:
            est = bartlett_window(est)
    density = psd_from_autocorr(est, dt).density
    report = psd_errors(density, truth_density)
    return report.csv_row(method, gamma_eff)


def _gnuplot_script(csv_path: str, methods: list[str]) -> str:
    lines = [
        "set datafile separator ','",
        "set logscale xy",
        "set xlabel 'effective compression ratio'",
        "set ylabel 'relative l2 error'",
        "set key outside",
        "plot " + ", \\\n     ".join(
            f"'{os.path.basename(csv_path)}' using 2:4 every ::1 "
            f"with linespoints title '{m}'" for m in methods),
    ]
    return "\n".join(lines) + "\n"


def cmd_bench(args) -> list[str]:
    gammas = [float(g) for g in args.gammas.split(",") if g]
    methods = [m for m in args.methods.split(",") if m]
    unknown = set(methods) - set(SKETCH_METHODS) - set(BASELINE_METHODS)
    if unknown:
        raise ValueError(f"unknown bench methods: {sorted(unknown)}")

    if args.consistency:
        return _bench_consistency(args, gammas, methods)

    if args.kind == "two-freq":
        cfg = TwoFrequencyConfig(n_particles=args.n, n_steps=args.t,
                                 seed=args.seed)
        src = gen_two_frequency(cfg)
    else:
        cfg = AdversarialConfig(n_particles=args.n, n_steps=args.t,
                                seed=args.seed)
        src = gen_adversarial(cfg)
    x = src.to_matrix()
    exact = autocorr_fft(x)
    if args.window:
        exact = bartlett_window(exact)
    truth = psd_from_autocorr(exact, src.dt).density

    cells = [(g, m) for g in gammas for m in methods]
    workers = _thread_cap()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(
                lambda cell: _bench_cell(x, src.dt, truth, cell[1], cell[0],
                                         args.seed, args.window), cells))
    else:
        rows = [_bench_cell(x, src.dt, truth, m, g, args.seed, args.window)
                for g, m in cells]

    csv_path = args.out_prefix + ".csv"
    gp_path = args.out_prefix + ".gp"
    skio._atomic_write(csv_path, lambda fh: fh.write(
        "\n".join([CSV_HEADER] + rows).encode("utf-8") + b"\n"))
    skio._atomic_write(gp_path, lambda fh: fh.write(
        _gnuplot_script(csv_path, methods).encode("utf-8")))
    return [csv_path, gp_path]


def _bench_consistency(args, gammas, methods) -> list[str]:
    """Error of the first lags versus total stream length, blocked sqrt(T).

    Sketch methods only: each doubling of the stream is split into
    B = floor(sqrt(T_long)) blocks with fresh sketches and compared to the
    phase-averaged truth of the generator.
    """
    bad = [m for m in methods if m not in SKETCH_METHODS]
    if bad:
        raise ValueError(f"--consistency supports sketch methods only, "
                         f"got {bad}")
    gamma = gammas[0]
    t_longs = [int(t) for t in args.t_longs.split(",")]
    n_lags = args.consistency_lags

    rows = []
    for t_long in t_longs:
        n_blocks = int(math.isqrt(t_long))
        while t_long % n_blocks:
            n_blocks -= 1
        cfg = TwoFrequencyConfig(n_particles=args.n, n_steps=t_long,
                                 seed=args.seed)
        n_eval = min(n_lags, t_long // n_blocks)
        truth = two_frequency_truth(cfg, n_eval)
        for method in methods:
            m = max(1, round(gamma * args.n))
            est, _ = run_pipeline(gen_two_frequency(cfg), n_blocks, m,
                                  method, args.seed)
            report = psd_errors(est.r[:n_eval], truth)
            rows.append(f"{t_long},{report.csv_row(method)}")

    csv_path = args.out_prefix + ".csv"
    skio._atomic_write(csv_path, lambda fh: fh.write(
        ("t_long," + CSV_HEADER + "\n" + "\n".join(rows) + "\n")
        .encode("utf-8")))
    return [csv_path]


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specsketch",
        description="Sketch-compressed autocorrelation and spectral "
                    "density estimation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--kind", choices=("two-freq", "adversarial"),
                   required=True)
    p.add_argument("--n", type=int, default=10_000, help="particles")
    p.add_argument("--t", type=int, default=2000, help="time steps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output .dmat/.csv ('-' for stdout)")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--f-fast", type=float, default=50.0)
    p.add_argument("--f-slow", type=float, default=5.0)
    p.add_argument("--omega", type=float, default=None)
    p.add_argument("--omega-prime", type=float, default=None)
    p.add_argument("--n-special", type=int, default=None)
    p.add_argument("--noise-sigma", type=float, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sketch", help="compress a dense file into "
                                      "sketched blocks")
    p.add_argument("--method", choices=SKETCH_METHODS, required=True)
    p.add_argument("--m", type=int, required=True,
                   help="compressed dimension")
    p.add_argument("--blocks", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--transform", choices=("wht", "dct"), default="wht")
    p.add_argument("--mem-audit", action="store_true",
                   help="assert the streaming memory contract")
    p.set_defaults(func=cmd_sketch)

    p = sub.add_parser("estimate", help="autocorrelation and PSD from "
                                        "sketched blocks")
    p.add_argument("--in-dir", required=True)
    p.add_argument("--manifest", help="block manifest "
                                      "(default <in-dir>/blocks.txt)")
    p.add_argument("--acf-out", required=True)
    p.add_argument("--psd-out", required=True)
    p.add_argument("--no-window", action="store_true")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("baseline", help="classical subsampling estimator")
    p.add_argument("--method", choices=BASELINE_METHODS, required=True)
    p.add_argument("--gamma", type=float)
    p.add_argument("--k", type=int, help="block exponent for "
                                         "power-series / sparse-ruler")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--acf-out", required=True)
    p.add_argument("--psd-out", required=True)
    p.add_argument("--ell", type=int, help="correlator window")
    p.add_argument("--coarse", type=int, default=2)
    p.add_argument("--levels", type=int)
    p.add_argument("--window", action="store_true",
                   help="Bartlett-window the lag estimate before the PSD")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("compare", help="error metrics of an estimate "
                                       "against a reference table")
    p.add_argument("--est", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--label", default="estimate")
    p.add_argument("--gamma-eff", type=float, default=float("nan"))
    p.add_argument("--out", help="also write the CSV row to a file")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="error versus compression sweep")
    p.add_argument("--kind", choices=("two-freq", "adversarial"),
                   default="adversarial")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--t", type=int, default=2048)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gammas", default="0.01,0.02,0.05,0.1")
    p.add_argument("--methods",
                   default=",".join(SKETCH_METHODS
                                    + ("time-random", "particle", "entries")))
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--window", action="store_true",
                   help="Bartlett-window every estimate and the reference")
    p.add_argument("--consistency", action="store_true",
                   help="sweep stream length with B = floor(sqrt(T_long))")
    p.add_argument("--t-longs", default="1024,4096,16384,65536")
    p.add_argument("--consistency-lags", type=int, default=15)
    p.set_defaults(func=cmd_bench)

    return parser


def run(argv=None) -> int:
    """Parse and execute; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else EXIT_USAGE

    started = time.monotonic()
    try:
        outputs = args.func(args)
    except skio.FormatError as exc:
        print(f"specsketch: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"specsketch: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"specsketch: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _write_manifest(args, outputs, time.monotonic() - started)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
