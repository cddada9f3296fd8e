"""Command line entry point: ``blindlmmse <subcommand> [options]``.

Exit codes: 0 success, 1 unexpected failure, 2 usage error, 3 configuration
error, 4 I/O failure, 5 numerical failure (divergence, singular moments),
6 malformed or incompatible data files.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import harness
from .datagen import _write_blob, generate_dataset, load_dataset, read_manifest, save_dataset
from .errors import (ArtifactIOError, BlindLmmseError, ConfigError, DatasetError, DivergenceError,
                     InvalidArgumentError, SingularMomentsError)
from .lmmse import empirical_moments, tikhonov_residual
from .solvers import KERNEL, SIGMA

EXIT_OK, EXIT_FAILURE, EXIT_USAGE, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_DATA = range(7)

log = logging.getLogger("blindlmmse")


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    common.add_argument("--seed", type=int, metavar="U64", help="base seed (overrides config)")
    common.add_argument("--out", metavar="DIR", default="results", help="output directory")
    preset = common.add_mutually_exclusive_group()
    preset.add_argument("--desk", action="store_true", help="small, fast preset")
    preset.add_argument("--paper", action="store_true", help="full-scale preset")
    common.add_argument("--dataset", metavar="DIR", help="use a saved dataset instead of generating one")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--max-iter", type=int, help="outer MAP iterations (overrides config)")
    common.add_argument("--cache", metavar="DIR", help="theoretical moment cache directory")
    common.add_argument("-v", "--verbose", action="store_true")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--variant", choices=[SIGMA, KERNEL], default=SIGMA)
    solver.add_argument("--boost", action="store_true", help="start from the LMMSE estimate")
    solver.add_argument("--lambda-alpha", type=float, default=0.1)
    solver.add_argument("--lambda-h", type=float, default=0.001)
    solver.add_argument("--instance", type=int, default=0)

    p = argparse.ArgumentParser(prog="blindlmmse", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True
    sub.add_parser("gen", parents=[common], help="generate and save a dataset")
    mom = sub.add_parser("moments", parents=[common], help="compute and save moments")
    mom.add_argument("--empirical", type=int, metavar="N",
                     help="empirical moments from the first N dataset instances")
    sub.add_parser("lmmse", parents=[common], help="LMMSE estimates for every dataset instance")
    sub.add_parser("map", parents=[common, solver], help="run one MAP solver on one instance")
    grid = sub.add_parser("grid", parents=[common], help="regularization grid search")
    grid.add_argument("--plot", action="store_true", help="also write grid.svg")
    ev = sub.add_parser("evolve", parents=[common], help="per-iteration traces")
    ev.add_argument("--instance", type=int, default=0)
    ev.add_argument("--plot", action="store_true", help="also write SVG trace plots")
    sub.add_parser("empconv", parents=[common], help="empirical vs theoretical LMMSE convergence")
    return p


def _config_from_dataset(path):
    m = read_manifest(path)
    return cfgmod.ExperimentConfig(
        n=int(m["n"]), K=int(m["K"]), b=float(m["b"]), d=int(m["d"]), a=float(m["a"]),
        beta=float(m["beta"]), c_eps=float(m["c_eps"]), dataset_size=int(m["count"]),
        base_seed=int(m["base_seed"]), lambda_alpha_grid=cfgmod.PAPER_LAMBDA_ALPHA,
        lambda_h_grid=cfgmod.PAPER_LAMBDA_H)


def resolve_config(args):
    base = None
    if args.paper:
        base = cfgmod.paper_preset()
    elif args.desk:
        base = cfgmod.desk_preset()
    elif args.dataset and not args.config:
        base = _config_from_dataset(args.dataset)
    values = cfgmod.read_config_file(args.config) if args.config else {}
    return cfgmod.build_config(base, values, base_seed=args.seed, workers=args.workers,
                               max_iter=args.max_iter)


def _dataset(args, cfg):
    if args.dataset:
        return load_dataset(args.dataset)
    signal, kernel, noise = harness.build_priors(cfg)
    return generate_dataset(signal, kernel, noise, cfg.dataset_size, cfg.base_seed)


def _cmd_gen(args, cfg, out):
    ds = _dataset(args, cfg)
    save_dataset(ds, out / "dataset")
    harness.write_manifest(out / "manifest.json", cfg, "gen", {"dataset": "dataset"})


def _cmd_moments(args, cfg, out):
    from .cache import cached_theoretical_moments, save_moments

    if args.empirical:
        m = empirical_moments(_dataset(args, cfg), args.empirical)
    else:
        signal, kernel, noise = harness.build_priors(cfg)
        if args.dataset:
            ds = load_dataset(args.dataset)
            signal, kernel, noise = ds.signal, ds.kernel, ds.noise
        m = cached_theoretical_moments(signal, kernel, noise, cfg.quad_nodes, args.cache)
    save_moments(m, out / "moments")
    harness.write_manifest(out / "manifest.json", cfg, "moments", {"kind": m.kind})


def _cmd_lmmse(args, cfg, out):
    problem = harness.prepare(cfg, _dataset(args, cfg), args.cache)
    rows = []
    for i, (est, inst) in enumerate(zip(problem.lmmse, problem.dataset.instances)):
        _write_blob(out / f"inst{i}_x_hat.f64", est.x_hat)
        _write_blob(out / f"inst{i}_h_hat.f64", est.h_hat)
        rows.append((i, harness.mse(est.x_hat, inst.x), harness.mse(est.h_hat, inst.h),
                     tikhonov_residual(problem.moments, est, inst.y)))
    harness.write_csv(out / "lmmse.csv", ["instance", "mse_x", "mse_h", "tikhonov_residual"], rows)
    harness.write_manifest(out / "manifest.json", cfg, "lmmse",
                           {"mean_mse_x": float(np.mean([r[1] for r in rows])),
                            "mean_mse_h": float(np.mean([r[2] for r in rows]))})


def _cmd_map(args, cfg, out):
    cfg = cfg.replace(lambda_alpha_grid=(args.lambda_alpha,), lambda_h_grid=(args.lambda_h,))
    problem = harness.prepare(cfg, _dataset(args, cfg), args.cache)
    if not 0 <= args.instance < len(problem.dataset.instances):
        raise InvalidArgumentError(f"instance {args.instance} not in dataset")
    res, ex, eh = harness.run_unit(problem, args.variant, args.boost, args.lambda_alpha,
                                   args.lambda_h, args.instance, traced=True)
    _write_blob(out / "x_hat.f64", res.x_hat)
    _write_blob(out / "h_hat.f64", res.h_hat)
    series = harness.TraceSeries(harness.METHOD_NAMES[args.variant], args.boost, "",
                                 args.lambda_alpha, args.lambda_h, res.trace)
    harness.write_trace_csv([series], out / "trace.csv")
    harness.write_manifest(out / "manifest.json", cfg, "map",
                           {"variant": args.variant, "boost": args.boost, "instance": args.instance,
                            "mse_x": ex, "mse_h": eh})


def _cmd_grid(args, cfg, out):
    problem = harness.prepare(cfg, _dataset(args, cfg), args.cache)
    result = harness.run_grid_search(cfg, problem)
    harness.write_grid_csv(result, out / "grid.csv")
    best = result.best(boost=False)
    harness.write_manifest(out / "manifest.json", cfg, "grid",
                           {"lmmse_mean_mse_x": result.baseline.mean_mse_x,
                            "best_unboosted": best.__dict__})
    if args.plot:
        harness.plot_grid(result, out)


def _cmd_evolve(args, cfg, out):
    problem = harness.prepare(cfg, _dataset(args, cfg), args.cache)
    traces = harness.run_evolution(cfg, args.instance, problem=problem)
    harness.write_trace_csv(traces, out / "trace.csv")
    est, inst = problem.lmmse[args.instance], problem.dataset.instances[args.instance]
    ref = (harness.mse(est.x_hat, inst.x), harness.mse(est.h_hat, inst.h))
    harness.write_manifest(out / "manifest.json", cfg, "evolve",
                           {"instance": args.instance, "lmmse_mse_x": ref[0], "lmmse_mse_h": ref[1]})
    if args.plot:
        harness.plot_traces(traces, ref, out)


def _cmd_empconv(args, cfg, out):
    result = harness.run_empirical_convergence(cfg)
    harness.write_empconv_csv(result, out / "empconv.csv")
    harness.write_manifest(out / "manifest.json", cfg, "empconv", {"slopes": result.slopes})
    print(f"slope x: {result.slopes['x']:.3f}  slope h: {result.slopes['h']:.3f}")


COMMANDS = {"gen": _cmd_gen, "moments": _cmd_moments, "lmmse": _cmd_lmmse, "map": _cmd_map,
            "grid": _cmd_grid, "evolve": _cmd_evolve, "empconv": _cmd_empconv}


def cli_main(argv=None):
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, cfg, out)
    except ConfigError as exc:
        print(f"blindlmmse: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError,) as exc:
        if isinstance(exc, ArtifactIOError):
            print(f"blindlmmse: I/O error: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"blindlmmse: bad data file: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ArtifactIOError, OSError) as exc:
        print(f"blindlmmse: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DivergenceError, SingularMomentsError) as exc:
        print(f"blindlmmse: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BlindLmmseError as exc:
        print(f"blindlmmse: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
