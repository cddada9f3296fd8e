"""Experiment drivers: regularization grid search, iteration traces and
empirical-moment convergence.

Work is cut into pure, individually seeded units (one solver run per
method, grid cell and instance).  Units can be spread over worker
processes; results are gathered in a fixed order, so outputs do not depend
on the number of workers.
"""

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as streams
from ._backend import BACKEND
from .cache import cached_theoretical_moments
from .conv import make_dictionary
from .datagen import generate_dataset, load_dataset, sample_batch
from .errors import DivergenceError, InvalidArgumentError
from .lmmse import LmmseEstimate, LmmseEstimator, empirical_moments
from .priors import KernelPrior, NoiseModel, SignalPrior
from .solvers import KERNEL, PRIOR_INIT, SIGMA, MapConfig, map_solve, mse

log = logging.getLogger(__name__)

METHOD_NAMES = {SIGMA: "map_sigma", KERNEL: "map_kernel"}
LMMSE = "lmmse"
GRID_HEADER = ["method", "boost", "lambda_alpha", "lambda_h", "mean_mse_x", "mean_mse_h"]
TRACE_HEADER = ["method", "boost", "lambda_alpha", "lambda_h", "iter", "mse_x", "mse_h", "objective"]
EMPCONV_HEADER = ["target", "n_samples", "run", "mse_vs_theoretical"]

PAPER_EVOLUTION_SETS = [
    {"label": "opt", SIGMA: (0.1, 0.001), KERNEL: (0.1, 0.001)},
    {"label": "non-opt", SIGMA: (0.0001, 0.001), KERNEL: (0.001, 0.001)},
]


def build_priors(cfg):
    dictionary = make_dictionary(cfg.n, cfg.K, streams.seed_sequence(cfg.base_seed, streams.DICTIONARY))
    return (SignalPrior(dictionary, cfg.b), KernelPrior(cfg.d, cfg.a, cfg.beta), NoiseModel(cfg.c_eps))


def solver_config(cfg, variant, lambda_alpha, lambda_h, init=PRIOR_INIT, max_iter=None):
    return MapConfig(variant=variant, lambda_alpha=lambda_alpha, lambda_h=lambda_h,
                     step_alpha=cfg.step_alpha, step_h=cfg.step_h, inner_steps=cfg.inner_steps,
                     max_iter=cfg.max_iter if max_iter is None else max_iter,
                     init=init, sigma_floor=cfg.sigma_floor)


@dataclass
class Problem:
    """Everything shared by the work units of one experiment."""

    cfg: object
    signal: SignalPrior
    kernel: KernelPrior
    noise: NoiseModel
    dataset: object
    moments: object
    lmmse: list = field(default_factory=list)

    @property
    def dictionary(self):
        return self.signal.dictionary


def prepare(cfg, dataset=None, cache_dir=None):
    """Dataset, theoretical moments and the per-instance LMMSE baseline (computed once)."""
    if dataset is None:
        signal, kernel, noise = build_priors(cfg)
        dataset = generate_dataset(signal, kernel, noise, cfg.dataset_size, cfg.base_seed)
    elif isinstance(dataset, (str, Path)):
        dataset = load_dataset(dataset)
    signal, kernel, noise = dataset.signal, dataset.kernel, dataset.noise
    moments = cached_theoretical_moments(signal, kernel, noise, cfg.quad_nodes, cache_dir)
    est = LmmseEstimator(moments, cfg.ridge)
    xs, hs = est.estimate_many(np.stack([inst.y for inst in dataset.instances]))
    lmmse = [LmmseEstimate(x_hat=x, h_hat=h) for x, h in zip(xs, hs)]
    return Problem(cfg=cfg, signal=signal, kernel=kernel, noise=noise, dataset=dataset,
                   moments=moments, lmmse=lmmse)


_PROBLEM = None


def _init_worker(problem):
    global _PROBLEM
    _PROBLEM = problem


def run_unit(problem, variant, boost, lambda_alpha, lambda_h, index, traced=False, max_iter=None):
    """One solver run on instance ``index``; prior draws come from the instance's init stream."""
    inst = problem.dataset.instances[index]
    init = problem.lmmse[index] if boost else PRIOR_INIT
    scfg = solver_config(problem.cfg, variant, lambda_alpha, lambda_h, init, max_iter)
    rng = streams.stream(problem.cfg.base_seed, streams.MAP_INIT, index)
    try:
        res = map_solve(inst.y, problem.dictionary, (problem.signal, problem.kernel), scfg,
                        rng=rng, ground_truth=inst if traced else None)
    except DivergenceError as exc:
        raise DivergenceError(exc.iteration, f"{METHOD_NAMES[variant]} boost={boost} "
                              f"lambda_alpha={lambda_alpha:g} lambda_h={lambda_h:g} instance={index}: "
                              f"{exc.detail}") from exc
    return res, mse(res.x_hat, inst.x), mse(res.h_hat, inst.h)


def _unit_metrics(args):
    res, ex, eh = run_unit(_PROBLEM, *args)
    return ex, eh


def _unit_trace(args):
    res, ex, eh = run_unit(_PROBLEM, *args[:5], traced=True, max_iter=args[5])
    return res.trace


def _map_units(problem, fn, units, workers):
    if workers <= 1:
        _init_worker(problem)
        out = []
        step = max(1, len(units) // 20)
        for k, u in enumerate(units, 1):
            out.append(fn(u))
            if k % step == 0:
                log.info("%d/%d units done", k, len(units))
        return out
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(problem,)) as pool:
        return list(pool.map(fn, units, chunksize=max(1, len(units) // (8 * workers))))


@dataclass(frozen=True)
class GridRow:
    method: str
    boost: bool
    lambda_alpha: float
    lambda_h: float
    mean_mse_x: float
    mean_mse_h: float


@dataclass
class GridResult:
    rows: list
    baseline: GridRow
    per_instance: dict = field(default_factory=dict, repr=False)

    def cells(self, method, boost):
        return [r for r in self.rows if r.method == method and r.boost == boost]

    def cell(self, method, boost, lambda_alpha, lambda_h):
        for r in self.rows:
            if (r.method == method and r.boost == boost and math.isclose(r.lambda_alpha, lambda_alpha)
                    and math.isclose(r.lambda_h, lambda_h)):
                return r
        raise KeyError((method, boost, lambda_alpha, lambda_h))

    def best(self, method=None, boost=False):
        rows = [r for r in self.rows if r.boost == boost and (method is None or r.method == method)]
        return min(rows, key=lambda r: r.mean_mse_x)


def grid_units(cfg):
    units = []
    for variant in (SIGMA, KERNEL):
        for boost in (False, True):
            for la in cfg.lambda_alpha_grid:
                for lh in cfg.lambda_h_grid:
                    for i in range(cfg.dataset_size):
                        units.append((variant, boost, float(la), float(lh), i))
    return units


def run_grid_search(cfg, problem=None, workers=None):
    """Mean MSE of every method on every (lambda_alpha, lambda_h) cell, plus the LMMSE baseline."""
    problem = problem or prepare(cfg)
    count = len(problem.dataset.instances)
    cfg = cfg.replace(dataset_size=count)
    units = grid_units(cfg)
    log.info("grid search: %d solver runs", len(units))
    results = _map_units(problem, _unit_metrics, units, workers or cfg.workers)

    rows, per_instance = [], {}
    for start in range(0, len(units), count):
        variant, boost, la, lh, _ = units[start]
        chunk = np.array(results[start:start + count])
        per_instance[(METHOD_NAMES[variant], boost, la, lh)] = chunk
        rows.append(GridRow(METHOD_NAMES[variant], boost, la, lh,
                            float(chunk[:, 0].mean()), float(chunk[:, 1].mean())))
    base = np.array([[mse(e.x_hat, inst.x), mse(e.h_hat, inst.h)]
                     for e, inst in zip(problem.lmmse, problem.dataset.instances)])
    per_instance[(LMMSE, False, math.nan, math.nan)] = base
    baseline = GridRow(LMMSE, False, math.nan, math.nan, float(base[:, 0].mean()), float(base[:, 1].mean()))
    return GridResult(rows=rows, baseline=baseline, per_instance=per_instance)


@dataclass(frozen=True)
class TraceSeries:
    method: str
    boost: bool
    label: str
    lambda_alpha: float
    lambda_h: float
    records: list


def _parameter_pairs(pset, variant):
    if isinstance(pset, dict):
        return pset.get("label", ""), tuple(pset[variant])
    la, lh = pset
    return f"{la:g},{lh:g}", (la, lh)


def run_evolution(cfg, instance_index=0, parameter_sets=None, problem=None, workers=None):
    """Per-iteration traces of all four methods on one instance for each parameter set.

    A parameter set is a ``(lambda_alpha, lambda_h)`` pair used by both
    variants, or a dict with a ``label`` and one pair per variant.
    """
    problem = problem or prepare(cfg)
    if not 0 <= instance_index < len(problem.dataset.instances):
        raise InvalidArgumentError(f"instance {instance_index} not in dataset")
    parameter_sets = PAPER_EVOLUTION_SETS if parameter_sets is None else parameter_sets
    units, meta = [], []
    for pset in parameter_sets:
        for variant in (SIGMA, KERNEL):
            label, (la, lh) = _parameter_pairs(pset, variant)
            for boost in (False, True):
                units.append((variant, boost, float(la), float(lh), instance_index, cfg.max_iter))
                meta.append((METHOD_NAMES[variant], boost, label, float(la), float(lh)))
    traces = _map_units(problem, _unit_trace, units, workers or cfg.workers)
    return [TraceSeries(*m, records=t) for m, t in zip(meta, traces)]


@dataclass
class EmpConvResult:
    rows: list
    mean_curves: dict
    slopes: dict
    n_samples_list: tuple


def loglog_slope(ns, values):
    """Least-squares slope of ``log(values)`` against ``log(ns)`` over the upper half of the points."""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    start = len(ns) // 2
    return float(np.polyfit(np.log(ns[start:]), np.log(values[start:]), 1)[0])


def run_empirical_convergence(cfg, signal_priors=None):
    """Distance between empirical-moment and theoretical-moment LMMSE estimates vs sample count.

    Each ``(run, n_samples)`` draws a fresh training set from its own stream;
    both estimators are evaluated on one held-out set from a disjoint stream.
    """
    if any(ns < 2 for ns in cfg.n_samples_list):
        raise InvalidArgumentError("every n_samples must be >= 2")
    signal, kernel, noise = signal_priors or build_priors(cfg)
    moments = cached_theoretical_moments(signal, kernel, noise, cfg.quad_nodes)
    heldout = sample_batch(signal, kernel, noise, streams.stream(cfg.base_seed, streams.HELDOUT),
                           cfg.heldout_size)
    tx, th = LmmseEstimator(moments, cfg.ridge).estimate_many(heldout.Y)

    rows = []
    errs = {"x": np.zeros((len(cfg.n_samples_list), cfg.repeats)),
            "h": np.zeros((len(cfg.n_samples_list), cfg.repeats))}
    for j, ns in enumerate(cfg.n_samples_list):
        for run in range(cfg.repeats):
            train = sample_batch(signal, kernel, noise,
                                 streams.stream(cfg.base_seed, streams.TRAIN, run, ns), ns)
            ex, eh = LmmseEstimator(empirical_moments(train)).estimate_many(heldout.Y)
            errs["x"][j, run] = mse(ex, tx)
            errs["h"][j, run] = mse(eh, th)
            rows.append(("x", ns, run, errs["x"][j, run]))
            rows.append(("h", ns, run, errs["h"][j, run]))
    curves = {k: v.mean(axis=1) for k, v in errs.items()}
    for j, ns in enumerate(cfg.n_samples_list):
        rows.append(("x", ns, "mean", curves["x"][j]))
        rows.append(("h", ns, "mean", curves["h"][j]))
    slopes = {k: loglog_slope(cfg.n_samples_list, c) for k, c in curves.items()}
    return EmpConvResult(rows=rows, mean_curves=curves, slopes=slopes,
                         n_samples_list=tuple(cfg.n_samples_list))


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_grid_csv(result, path):
    rows = [(r.method, r.boost, r.lambda_alpha, r.lambda_h, r.mean_mse_x, r.mean_mse_h)
            for r in [result.baseline] + result.rows]
    write_csv(path, GRID_HEADER, rows)


def read_grid_csv(path):
    """Inverse of :func:`write_grid_csv` (per-instance values are not stored)."""
    rows, baseline = [], None
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != GRID_HEADER:
            raise InvalidArgumentError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            row = GridRow(rec["method"], rec["boost"] == "1",
                          float(rec["lambda_alpha"] or "nan"), float(rec["lambda_h"] or "nan"),
                          float(rec["mean_mse_x"]), float(rec["mean_mse_h"]))
            if row.method == LMMSE:
                baseline = row
            else:
                rows.append(row)
    if baseline is None:
        raise InvalidArgumentError(f"{path}: no {LMMSE} baseline row")
    return GridResult(rows=rows, baseline=baseline)


def write_trace_csv(traces, path):
    rows = [(t.method, t.boost, t.lambda_alpha, t.lambda_h, rec.iter, rec.mse_x, rec.mse_h, rec.objective)
            for t in traces for rec in t.records]
    write_csv(path, TRACE_HEADER, rows)


def write_empconv_csv(result, path):
    write_csv(path, EMPCONV_HEADER, result.rows)


def write_manifest(path, cfg, command, extra=None):
    doc = {"version": __version__, "command": command, "backend": BACKEND,
           "seed": cfg.base_seed, "config": cfg.as_dict()}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, default=float))


def plot_traces(traces, lmmse_mse, out_dir):
    """SVG plots of mse_x and mse_h against iteration; needs matplotlib."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    paths = []
    for key, ref in (("mse_x", lmmse_mse[0]), ("mse_h", lmmse_mse[1])):
        fig, ax = plt.subplots(figsize=(7, 4))
        for t in traces:
            its = [r.iter for r in t.records]
            vals = [getattr(r, key) for r in t.records]
            style = "-" if t.boost else "--"
            ax.semilogy(its, vals, style, label=f"{t.method}{' boost' if t.boost else ''} ({t.label})")
        ax.axhline(ref, color="k", lw=1, label="lmmse")
        ax.set_xlabel("iteration")
        ax.set_ylabel(key)
        ax.legend(fontsize=6)
        p = out_dir / f"trace_{key}.svg"
        fig.savefig(p)
        plt.close(fig)
        paths.append(p)
    return paths


def plot_grid(result, out_dir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    las = sorted({r.lambda_alpha for r in result.rows})
    lhs = sorted({r.lambda_h for r in result.rows})
    fig, axes = plt.subplots(1, 4, figsize=(16, 4))
    for ax, (method, boost) in zip(axes, [(m, b) for m in METHOD_NAMES.values() for b in (False, True)]):
        img = np.array([[result.cell(method, boost, la, lh).mean_mse_x for la in las] for lh in lhs])
        im = ax.imshow(img, origin="lower")
        ax.set_xticks(range(len(las)), [f"{v:g}" for v in las], rotation=45)
        ax.set_yticks(range(len(lhs)), [f"{v:g}" for v in lhs])
        ax.set_title(f"{method}{' boost' if boost else ''}")
        fig.colorbar(im, ax=ax)
    p = Path(out_dir) / "grid.svg"
    fig.tight_layout()
    fig.savefig(p)
    plt.close(fig)
    return p
