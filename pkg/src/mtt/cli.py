"""Command-line front end.

Subcommands either reproduce the built-in experiments (``ex1``, ``ex3``,
``images``) or run the generic pipeline on user matrices (``fit``,
``compress``, ``decompress``).  Exit codes: 0 success, 1 usage error,
2 I/O error, 3 numerical failure.
"""

import argparse
import os
import sys
from pathlib import Path

from . import experiments, matio, solver
from .errors import NumericalError
from .experiments import (
    CorpusSpec,
    gen_example1,
    image_corpus_experiment,
    q_sweep,
    run_trials,
    write_image_csv,
    write_image_summary_csv,
    write_qsweep_csv,
    write_reconstructions,
    write_summary_csv,
    write_trials_csv,
)
from .solver import MttConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; we reserve 2 for I/O."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _resolve_seed(args):
    if args.seed is not None:
        return args.seed
    return int(os.environ.get("MTT_SEED", "0"))


def _out_dir(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _add_solver_flags(p, k1, k2, delta=1e-5, max_iter=500, iterates=True):
    p.add_argument("--k1", type=int, default=k1, help="first-term rank budget")
    p.add_argument("--k2", type=int, default=k2, help="second-term rank budget")
    if iterates:
        p.add_argument("--delta", type=float, default=delta,
                       help="stopping tolerance on the raw error decrease")
        p.add_argument("--max-iter", type=int, default=max_iter,
                       help="iteration cap")
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed (default: MTT_SEED env var, else 0)")
    p.add_argument("--pinv-tol", type=float, default=None,
                   help="relative pseudo-inverse cutoff")


def _add_output_flags(p):
    p.add_argument("--out-dir", default="out", help="output directory")
    p.add_argument("--no-figures", action="store_true",
                   help="skip figure rendering, write CSV only")


def _add_runner_flags(p, trials):
    p.add_argument("--trials", type=int, default=trials,
                   help="number of independent trials")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel trial workers (default: logical cores)")
    _add_output_flags(p)


def _note_if_small(trials):
    if trials < 100:
        print(f"note: {trials} trials is below the 100-trial baseline for "
              f"statistical comparisons")


def cmd_ex1(args):
    """Synthetic masked-source benchmark with heavy additive noise."""
    seed = _resolve_seed(args)
    cfg = MttConfig(k1=args.k1, k2=args.k2, q=args.q, delta=args.delta,
                    max_iter=args.max_iter, seed=seed, pinv_tol=args.pinv_tol)
    generator = lambda s: gen_example1(s, noise_amp=args.noise_amp)
    reports, agg = run_trials(generator, cfg, args.trials, jobs=args.jobs)
    out = _out_dir(args)
    write_trials_csv(out / "trials.csv", reports)
    write_summary_csv(out / "summary.csv", agg, cfg)
    if not args.no_figures:
        from . import figures

        figures.trial_curves(reports, agg, out / "errors_vs_iteration.png")
    print(f"trials: {agg.n_trials} ({agg.n_failed} failed)")
    print(f"median initial error:     {agg.median_eps0:.6g}")
    print(f"median final error:       {agg.median_final:.6g}")
    print(f"median single-term error: {agg.median_gbt1:.6g}")
    print(f"median improvement vs single-term: "
          f"{agg.median_improvement_vs_gbt1:.1%}")
    print(f"median improvement vs initial:     "
          f"{agg.median_improvement_vs_eps0:.1%}")
    _note_if_small(args.trials)
    return EXIT_OK


def cmd_ex3(args):
    """Initial error as a function of the injection dimension."""
    seed = _resolve_seed(args)
    q_values = args.q
    cfg = MttConfig(k1=args.k1, k2=args.k2, q=max(q_values), seed=seed,
                    pinv_tol=args.pinv_tol)
    generator = lambda s, q: experiments.gen_example3(
        s, q, sigma=args.noise_amp
    )
    rows = q_sweep(q_values, cfg, args.trials, generator=generator,
                   jobs=args.jobs)
    out = _out_dir(args)
    write_qsweep_csv(out / "qsweep.csv", rows)
    if not args.no_figures:
        from . import figures

        figures.qsweep_plot(rows, out / "qsweep.png")
    print(f"{'q':>6} {'mean_eps0':>14} {'std_eps0':>14}")
    for r in rows:
        print(f"{r.q:>6} {r.mean_eps0:>14.6g} {r.std_eps0:>14.6g}")
    _note_if_small(args.trials)
    return EXIT_OK


def cmd_images(args):
    """Compression, filtering and decompression of an image corpus."""
    seed = _resolve_seed(args)
    corpus = Path(args.corpus)
    count = args.count
    if count is None:
        count = len(sorted(corpus.glob("*.pgm"))) if corpus.is_dir() else 0
        if count == 0:
            raise experiments.CorpusError(f"no PGM images found in {corpus}")
    sample_size = args.sample_size or max(1, count // 2)
    spec = CorpusSpec(
        source=str(corpus),
        count=count,
        sample_size=sample_size,
        width=args.width,
        height=args.height,
        noise_amp=args.noise_amp,
        match_tol=args.match_tol,
    )
    cfg = MttConfig(k1=args.k1, k2=args.k2, q=args.k2, delta=args.delta,
                    max_iter=args.max_iter, seed=seed, pinv_tol=args.pinv_tol)
    report = image_corpus_experiment(spec, cfg, injection_blocks=args.blocks)
    out = _out_dir(args)
    write_image_csv(out / "images.csv", report)
    write_image_summary_csv(out / "images_summary.csv", report)
    write_reconstructions(report, out)
    if not args.no_figures:
        from . import figures

        figures.image_mse_plot(report, out / "images_mse.png")
    print(f"{'transform':>10} {'mean MSE':>14}")
    for method in ("gbt1", "gbt2", "mtt"):
        print(f"{method:>10} {report.mean_mse[method]:>14.6g}")
    ordered = (report.mean_mse["mtt"] < report.mean_mse["gbt2"]
               < report.mean_mse["gbt1"])
    print(f"ordering mtt < gbt2 < gbt1: {'yes' if ordered else 'no'}")
    return EXIT_OK


def cmd_fit(args):
    """Fit a model to X/Y sample matrices and save it."""
    seed = _resolve_seed(args)
    x = matio.read_matrix_csv(args.x)
    y = matio.read_matrix_csv(args.y)
    q = args.q if args.q is not None else x.shape[0]
    cfg = MttConfig(k1=args.k1, k2=args.k2, q=q, delta=args.delta,
                    max_iter=args.max_iter, seed=seed, pinv_tol=args.pinv_tol)
    model, trace = solver.mtt_fit(x, y, cfg)
    matio.save_model(args.model, model, cfg)
    if args.trace:
        branches = [solver.BRANCH_INIT] + list(trace.branches)
        experiments._write_csv(
            args.trace,
            ("iter", "epsilon", "branch"),
            [(i, eps, branches[i]) for i, eps in enumerate(trace.errors.tolist())],
        )
    print(f"initial error: {trace.errors[0]:.6g}")
    print(f"final error:   {trace.errors[-1]:.6g} "
          f"after {trace.iterations} iterations "
          f"({'converged' if trace.converged else 'iteration cap reached'})")
    return EXIT_OK


def cmd_compress(args):
    model, _ = matio.load_model(args.model)
    y = matio.read_matrix_csv(args.y)
    v = matio.read_matrix_csv(args.v)
    u1, u2 = solver.compress(model, y, v)
    matio.write_matrix_csv(args.u1, u1)
    matio.write_matrix_csv(args.u2, u2)
    print(f"wrote {args.u1} ({u1.shape[0]} x {u1.shape[1]}) and "
          f"{args.u2} ({u2.shape[0]} x {u2.shape[1]})")
    return EXIT_OK


def cmd_decompress(args):
    model, _ = matio.load_model(args.model)
    u1 = matio.read_matrix_csv(args.u1)
    u2 = matio.read_matrix_csv(args.u2)
    xhat = solver.decompress(model, u1, u2)
    matio.write_matrix_csv(args.out, xhat)
    print(f"wrote {args.out} ({xhat.shape[0]} x {xhat.shape[1]})")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="mtt",
                     description="rank-reduced multi-term transform toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ex1", help=cmd_ex1.__doc__,
                       description=cmd_ex1.__doc__)
    _add_solver_flags(p, k1=25, k2=25)
    p.add_argument("--q", type=int, default=100, help="injection dimension")
    p.add_argument("--noise-amp", type=float, default=10.0,
                   help="additive noise amplitude")
    _add_runner_flags(p, trials=100)
    p.set_defaults(func=cmd_ex1)

    p = sub.add_parser("ex3", help=cmd_ex3.__doc__,
                       description=cmd_ex3.__doc__)
    _add_solver_flags(p, k1=12, k2=12, iterates=False)
    p.add_argument("--q", type=_int_list, default=[12, 24, 36, 48, 60],
                   help="comma-separated injection dimensions")
    p.add_argument("--noise-amp", type=float, default=2.0,
                   help="white-noise standard deviation")
    _add_runner_flags(p, trials=100)
    p.set_defaults(func=cmd_ex3)

    p = sub.add_parser("images", help=cmd_images.__doc__,
                       description=cmd_images.__doc__)
    p.add_argument("--corpus", required=True, help="directory of PGM images")
    _add_solver_flags(p, k1=20, k2=20, max_iter=10)
    p.add_argument("--count", type=int, default=None,
                   help="number of corpus images (default: all)")
    p.add_argument("--sample-size", type=int, default=None,
                   help="fitting sample size (default: count // 2)")
    p.add_argument("--width", type=int, default=None,
                   help="expected image width (default: first image)")
    p.add_argument("--height", type=int, default=None,
                   help="expected image height (default: first image)")
    p.add_argument("--noise-amp", type=float, default=1.0,
                   help="additive noise amplitude on [0, 1] pixels")
    p.add_argument("--match-tol", type=float, default=float("inf"),
                   help="per-pixel squared-distance bound for sample matching")
    p.add_argument("--blocks", type=int, default=None,
                   help="distinct injection blocks (default: sample size)")
    _add_output_flags(p)
    p.set_defaults(func=cmd_images)

    p = sub.add_parser("fit", help=cmd_fit.__doc__, description=cmd_fit.__doc__)
    p.add_argument("--x", required=True, help="reference sample matrix CSV")
    p.add_argument("--y", required=True, help="observed sample matrix CSV")
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--trace", default=None, help="optional error-trace CSV")
    _add_solver_flags(p, k1=1, k2=1)
    p.add_argument("--q", type=int, default=None,
                   help="injection dimension (default: rows of X)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compress", help=cmd_compress.__doc__,
                       description=cmd_compress.__doc__)
    p.add_argument("--model", required=True, help="model file from fit")
    p.add_argument("--y", required=True, help="observed sample matrix CSV")
    p.add_argument("--v", required=True, help="injection matrix CSV")
    p.add_argument("--u1", required=True, help="output CSV for C1 Y")
    p.add_argument("--u2", required=True, help="output CSV for C2 (V G)")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help=cmd_decompress.__doc__,
                       description=cmd_decompress.__doc__)
    p.add_argument("--model", required=True, help="model file from fit")
    p.add_argument("--u1", required=True, help="compressed block CSV (C1 Y)")
    p.add_argument("--u2", required=True, help="compressed block CSV (C2 V G)")
    p.add_argument("--out", required=True, help="output reconstruction CSV")
    p.set_defaults(func=cmd_decompress)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except OSError as exc:           # includes CorpusError
        print(f"mtt: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"mtt: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"mtt: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry_point():
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
