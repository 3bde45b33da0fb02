"""Ground-truth scoring and the replicated synthetic benchmark.

The ground-truth side never sees the extraction pipeline: it evaluates the
closed-form attribution with exact inducing-term coefficients, the exact
dependence graph, coefficients solved from total effects, and a
high-capacity conditional-expectation oracle fit on fresh exogenous draws.
Estimates are scored against it by rank-biased overlap (weighted by the
normalized true attribution mass) and by mean squared error.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from multiprocessing import get_context

import numpy as np

from .extraction import eel
from .sem import InducingStructure, SemModel, inducing_structure, total_effects
from .shapley import KnnCondExp, attribute, batched_attribution_values, make_estimator
from .stats.regression import standardize
from .synth import GenConfig, generate_model, rng_stream, sample_dataset

TRUTH_EXACT_THRESHOLD = 7
TRUTH_MC_DRAWS = 128


def rbo_sample(est_ranking, truth_order, truth_weights):
    """Weighted prefix overlap of one estimated ranking against the truth.

    truth_order lists the true root causes best-first; truth_weights are
    their normalized attribution values (sum 1).  The contribution at depth
    i is weight_i * |overlap of the two i-prefixes| / i.
    """
    r = len(truth_order)
    if len(est_ranking) < r:
        raise ValueError("estimated ranking is shorter than the true root-cause list")
    est_prefix = set()
    truth_prefix = set()
    score = 0.0
    for i in range(r):
        est_prefix.add(int(est_ranking[i]))
        truth_prefix.add(int(truth_order[i]))
        score += truth_weights[i] * len(est_prefix & truth_prefix) / (i + 1)
    return score


@dataclass(frozen=True)
class RboResult:
    value: float
    n_scored: int
    n_skipped: int


def rbo(est_values, truth_values) -> RboResult:
    """Mean weighted prefix overlap across samples.

    Samples without true root causes contribute 1 when the estimate also
    marks none and are skipped (and counted) otherwise.
    """
    est = np.asarray(est_values, dtype=np.float64)
    truth = np.asarray(truth_values, dtype=np.float64)
    if est.shape != truth.shape:
        raise ValueError("estimate and truth must have matching shapes")
    n, q = truth.shape
    total = 0.0
    used = 0
    skipped = 0
    est_rankings = np.argsort(-est, axis=1, kind="stable")
    for k in range(n):
        pos = np.nonzero(truth[k] > 0)[0]
        if pos.size == 0:
            if np.all(est[k] <= 0):
                total += 1.0
                used += 1
            else:
                skipped += 1
            continue
        order = pos[np.argsort(-truth[k][pos], kind="stable")]
        mass = truth[k][order]
        weights = mass / mass.sum()
        total += rbo_sample(est_rankings[k], order, weights)
        used += 1
    value = total / used if used else 0.0
    return RboResult(value=float(value), n_scored=used, n_skipped=skipped)


def mse(est_values, truth_values):
    est = np.asarray(est_values, dtype=np.float64)
    truth = np.asarray(truth_values, dtype=np.float64)
    if est.shape != truth.shape:
        raise ValueError("estimate and truth must have matching shapes")
    return float(np.mean((est - truth) ** 2))


DELTA_ZERO_TOL = 1e-6


def oracle_delta(model: SemModel, structure: InducingStructure):
    """Coefficients expressing the target log-odds over the exact terms.

    The log-odds are linear in the exogenous vector; the exact inducing-term
    columns span that vector's observable image, so the system solves
    exactly (checked).  Solver noise on structurally zero coefficients is
    snapped to exact zero: a spurious 1e-12 coefficient would otherwise
    mint strictly positive ground-truth attributions for variables that
    cannot influence the target, corrupting the root-cause sets.
    """
    theta = total_effects(model).theta
    w = theta @ model.target_weights
    a = structure.estar_coeffs
    delta, *_ = np.linalg.lstsq(a, w, rcond=None)
    if np.max(np.abs(a @ delta - w)) > 1e-8:
        raise RuntimeError("target log-odds not representable over exact terms")
    delta[np.abs(delta) < DELTA_ZERO_TOL] = 0.0
    if np.max(np.abs(a @ delta - w)) > 1e-8:
        raise RuntimeError("zero-snapping broke the log-odds representation")
    return delta


def ground_truth_shapley(model: SemModel, structure: InducingStructure,
                         t_samples, estimator=None, n_oracle=100_000, seed=0):
    """Exact-ingredient attribution for synthetic rows with known exogenous draws.

    Conditional expectations come from an estimator fit on n_oracle fresh
    exogenous draws of the exact terms, with the empty-set prediction pinned
    to the population mean (zero): errors are centered by construction.
    Neighborhoods past the usual exact-size threshold fall back to shared
    subset sampling, mirroring the estimation side's routing.
    """
    t = np.asarray(t_samples, dtype=np.float64)
    if t.ndim != 2 or t.shape[1] != structure.estar_coeffs.shape[0]:
        raise ValueError("t_samples must be n x (q+m) exogenous draws")
    q = model.q
    delta = oracle_delta(model, structure)
    estar_rows = t @ structure.estar_coeffs

    rng = rng_stream(seed, 9)
    fresh = np.empty((n_oracle, len(model.error_dists)))
    for j, dist in enumerate(model.error_dists):
        fresh[:, j] = dist.sample(rng, n_oracle)
    train = fresh @ structure.estar_coeffs

    if estimator is None:
        estimator = KnnCondExp(empty_value=0.0)
    if not getattr(estimator, "is_fit", False):
        estimator.fit(train)

    hoods = [structure.neighborhood(i) for i in range(q)]
    values, _ = batched_attribution_values(
        estar_rows, delta, hoods, estimator,
        exact_threshold=TRUTH_EXACT_THRESHOLD, mc_samples=TRUTH_MC_DRAWS,
        rng=rng_stream(seed, 10))
    return values


@dataclass(frozen=True)
class BenchConfig:
    latent_fractions: tuple = (0.0, 0.1, 0.2)
    sample_sizes: tuple = (10_000,)
    replicates: int = 30
    alpha: float = 0.05
    seed: int = 0
    parallelism: int = 1
    backend: str = "taustar"
    estimator: str = "knn"
    mc_threshold: int = 10
    max_cond: int | None = None
    p: int = 15
    expected_degree: float = 2.0
    n_oracle: int = 100_000
    mc_samples: int = 10_000

    def to_dict(self):
        return {
            "latent_fractions": list(self.latent_fractions),
            "sample_sizes": list(self.sample_sizes),
            "replicates": self.replicates,
            "alpha": self.alpha,
            "seed": self.seed,
            "parallelism": self.parallelism,
            "backend": self.backend,
            "estimator": self.estimator,
            "mc_threshold": self.mc_threshold,
            "max_cond": self.max_cond,
            "p": self.p,
            "expected_degree": self.expected_degree,
            "n_oracle": self.n_oracle,
            "mc_samples": self.mc_samples,
        }


@dataclass(frozen=True)
class BenchmarkSummary:
    cells: tuple
    config: dict
    seed: int

    def to_dict(self):
        return {"format_version": 1, "seed": self.seed, "config": self.config,
                "cells": list(self.cells)}

    def table_rows(self):
        header = ["latent_fraction", "n", "replicates", "failures",
                  "mean_rbo", "mean_mse", "mean_runtime_seconds"]
        rows = [
            [c["latent_fraction"], c["n"], c["replicates"], c["failures"],
             c["mean_rbo"], c["mean_mse"], c["mean_runtime_seconds"]]
            for c in self.cells
        ]
        return header, rows

    def replicate_rows(self):
        header = ["latent_fraction", "n", "replicate", "rbo", "mse",
                  "runtime_seconds", "rbo_skipped", "edges_remaining",
                  "partials", "failure"]
        rows = []
        for c in self.cells:
            for r in c["records"]:
                rows.append([c["latent_fraction"], c["n"], r["replicate"],
                             r.get("rbo", ""), r.get("mse", ""),
                             r.get("runtime_seconds", ""),
                             r.get("rbo_skipped", ""),
                             r.get("edges_remaining", ""),
                             r.get("partials", ""),
                             r.get("failure") or ""])
        return header, rows


def _derived_seed(master, size_idx, replicate):
    """Replicate seed, shared across latent fractions of one sample size.

    Latent-fraction cells of the same replicate index are paired: they draw
    the same base graph, weights and exogenous samples, and differ only in
    which eligible roots are hidden.  Cell contrasts in latent fraction are
    then within-replicate comparisons instead of independent redraws, and
    any replicate of any cell stays reproducible in isolation.
    """
    ss = np.random.SeedSequence(entropy=int(master),
                                spawn_key=(int(size_idx), int(replicate)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_replicate(master_seed, size_idx, replicate, latent_fraction, n, cfg: BenchConfig):
    """One generate -> sample -> extract -> attribute -> score pass.

    runtime_seconds covers the estimation pipeline (standardize, extract,
    fit, attribute), not generation or ground-truth scoring.
    """
    seed = _derived_seed(master_seed, size_idx, replicate)
    model = generate_model(GenConfig(p=cfg.p, expected_degree=cfg.expected_degree,
                                     latent_fraction=latent_fraction, seed=seed))
    ds = sample_dataset(model, n, seed=seed)

    t0 = time.perf_counter()
    xs, _, _ = standardize(ds.observed)
    res = eel(xs, alpha=cfg.alpha, max_cond=cfg.max_cond, backend=cfg.backend)
    estimator = make_estimator(cfg.estimator)
    report = attribute(res.estar, ds.target, res.dep_graph, estimator=estimator,
                       exact_threshold=cfg.mc_threshold,
                       mc_samples=cfg.mc_samples, seed=seed)
    runtime = time.perf_counter() - t0

    structure = inducing_structure(model)
    truth = ground_truth_shapley(model, structure, ds.hidden_t,
                                 n_oracle=cfg.n_oracle, seed=seed)
    r = rbo(report.values, truth)
    return {
        "replicate": replicate,
        "rbo": r.value,
        "rbo_skipped": r.n_skipped,
        "mse": mse(report.values, truth),
        "runtime_seconds": runtime,
        "edges_remaining": len(res.dep_graph),
        "partials": len(res.partial_log),
        "failure": None,
    }


def _replicate_task(args):
    master_seed, cell_idx, size_idx, replicate, latent_fraction, n, cfg = args
    try:
        return (cell_idx, replicate,
                run_replicate(master_seed, size_idx, replicate, latent_fraction, n, cfg))
    except Exception as exc:  # recorded, not fatal: cell means use successes
        return (cell_idx, replicate,
                {"replicate": replicate, "failure": f"{type(exc).__name__}: {exc}"})


def run_benchmark(cfg: BenchConfig) -> BenchmarkSummary:
    """Replicated grid over latent fractions and sample sizes.

    Fully deterministic for a given (config, seed): every replicate draws
    from its own counter-split stream, and aggregation is an ordered reduce
    over (cell, replicate), so parallel execution cannot reorder results.
    """
    cells_spec = [(lf, n) for lf in cfg.latent_fractions for n in cfg.sample_sizes]
    tasks = [
        (cfg.seed, cell_idx, cfg.sample_sizes.index(n), rep, lf, n, cfg)
        for cell_idx, (lf, n) in enumerate(cells_spec)
        for rep in range(cfg.replicates)
    ]

    results = {}
    if cfg.parallelism > 1:
        ctx = get_context("fork")
        with ctx.Pool(cfg.parallelism) as pool:
            for cell_idx, rep, rec in pool.imap_unordered(_replicate_task, tasks):
                results[(cell_idx, rep)] = rec
    else:
        for t in tasks:
            cell_idx, rep, rec = _replicate_task(t)
            results[(cell_idx, rep)] = rec

    cells = []
    for cell_idx, (lf, n) in enumerate(cells_spec):
        records = [results[(cell_idx, rep)] for rep in range(cfg.replicates)]
        ok = [r for r in records if r.get("failure") is None]
        cells.append({
            "latent_fraction": lf,
            "n": n,
            "replicates": cfg.replicates,
            "failures": len(records) - len(ok),
            "mean_rbo": float(np.mean([r["rbo"] for r in ok])) if ok else float("nan"),
            "mean_mse": float(np.mean([r["mse"] for r in ok])) if ok else float("nan"),
            "mean_runtime_seconds":
                float(np.mean([r["runtime_seconds"] for r in ok])) if ok else float("nan"),
            "records": records,
        })
    return BenchmarkSummary(cells=tuple(cells), config=cfg.to_dict(), seed=cfg.seed)
