"""Batch command-line interface.

Four commands cover the pipeline: ``generate`` (model + dataset),
``extract`` (recovered terms + dependence graph), ``attribute``
(per-sample attribution report) and ``bench`` (replicated benchmark grid);
``replay`` re-executes any of them from a written manifest.  Commands never
mutate their inputs, and each output directory receives exactly one
manifest sufficient to reproduce the run.

Exit codes: 0 success, 2 usage error, 3 data error, 4 budget exceeded.
Environment overrides are limited to ROOTSHAP_PARALLELISM and
ROOTSHAP_TMPDIR; every other knob must be an explicit flag for the sake of
reproducibility.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .evalharness import BenchConfig, run_benchmark
from .extraction import direct_lingam, eel, extract_errors
from .serialize import dump_json, load_json, read_csv_matrix, write_csv
from .shapley import attribute as shapley_attribute
from .shapley import make_estimator
from .stats.regression import DegenerateInputError, standardize
from .synth import RNG_SCHEME, Dataset, GenConfig, generate_model, sample_dataset

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_BUDGET = 4


class DataError(Exception):
    pass


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir, command, params, inputs, outputs, t0):
    manifest = {
        "format_version": 1,
        "tool": "rootshap",
        "tool_version": __version__,
        "rng_scheme": RNG_SCHEME,
        "command": command,
        "params": params,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(outputs),
        "wall_clock_seconds": time.perf_counter() - t0,
    }
    dump_json(manifest, Path(out_dir) / "manifest.json")


def _prepare_out(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset_csv(path):
    try:
        header, data = read_csv_matrix(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read dataset CSV {path}: {exc}") from exc
    if not header or header[-1] != "D":
        raise DataError("dataset CSV must end with the binary target column 'D'")
    observed = data[:, :-1]
    target = data[:, -1]
    if not np.all(np.isin(target, (0.0, 1.0))):
        raise DataError("target column must be binary 0/1")
    return Dataset(observed=observed, target=target.astype(np.int8),
                   column_names=tuple(header[:-1]))


def cmd_generate(args):
    t0 = time.perf_counter()
    out = _prepare_out(args.out)
    cfg = GenConfig(p=args.p, expected_degree=args.expected_degree,
                    latent_fraction=args.latent, seed=args.seed)
    model = generate_model(cfg)
    ds = sample_dataset(model, args.n, seed=args.seed)

    model_path = out / "model.json"
    data_path = out / "dataset.csv"
    hidden_path = out / "hidden_t.csv"
    dump_json(model.to_dict(), model_path)
    ds.write_csv(data_path, hidden_path)
    _write_manifest(out, "generate",
                    {"p": args.p, "n": args.n, "latent": args.latent,
                     "expected_degree": args.expected_degree, "seed": args.seed},
                    [], [model_path.name, data_path.name, hidden_path.name], t0)
    return EXIT_OK


def cmd_extract(args):
    t0 = time.perf_counter()
    out = _prepare_out(args.out)
    ds = _load_dataset_csv(args.data)
    try:
        xs, _, _ = standardize(ds.observed)
    except DegenerateInputError as exc:
        raise DataError(str(exc)) from exc

    if args.method == "eel":
        res = eel(xs, alpha=args.alpha, max_cond=args.max_cond,
                  backend=args.backend, budget=args.budget, seed=args.seed)
    elif args.method == "ee":
        res = extract_errors(xs, alpha=args.alpha, backend=args.backend,
                             budget=args.budget, seed=args.seed)
    elif args.method == "dl":
        res = direct_lingam(xs)
    else:  # pragma: no cover - argparse restricts choices
        raise DataError(f"unknown method {args.method}")

    estar_path = out / "estar.csv"
    write_csv(estar_path, list(ds.column_names),
              (res.estar[i] for i in range(res.estar.shape[0])))
    dump_json(res.to_dict(estar_ref=estar_path.name), out / "extraction.json")
    _write_manifest(out, "extract",
                    {"data": str(args.data), "method": args.method,
                     "alpha": args.alpha, "max_cond": args.max_cond,
                     "backend": args.backend, "budget": args.budget,
                     "seed": args.seed},
                    [args.data], [estar_path.name, "extraction.json"], t0)
    return EXIT_BUDGET if res.budget_exhausted else EXIT_OK


def cmd_attribute(args):
    t0 = time.perf_counter()
    out = _prepare_out(args.out)
    ds = _load_dataset_csv(args.data)
    try:
        _, estar = read_csv_matrix(args.estar)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read terms CSV {args.estar}: {exc}") from exc
    if estar.shape[0] != ds.n:
        raise DataError("terms matrix and dataset row counts differ")
    extraction = load_json(args.extraction)
    dep_graph = frozenset((int(a), int(b)) for a, b in extraction["dep_graph"])

    if np.unique(ds.target).size < 2:
        raise DataError("target column has a single class; cannot fit")

    estimator = make_estimator(args.estimator)
    report = shapley_attribute(estar, ds.target, dep_graph, estimator=estimator,
                               exact_threshold=args.mc_threshold,
                               mc_samples=args.mc_samples, seed=args.seed)

    q = estar.shape[1]
    header = [f"S_{name}" for name in ds.column_names]
    header += [f"rank_{k + 1}" for k in range(q)]
    header += [f"root_{name}" for name in ds.column_names]
    rows = (
        list(report.values[i]) + [int(r) for r in report.rankings[i]]
        + [int(b) for b in report.root_cause_mask[i]]
        for i in range(estar.shape[0])
    )
    report_path = out / "report.csv"
    write_csv(report_path, header, rows)
    dump_json(report.to_meta_dict(), out / "report.json")
    _write_manifest(out, "attribute",
                    {"data": str(args.data), "estar": str(args.estar),
                     "extraction": str(args.extraction),
                     "estimator": args.estimator,
                     "mc_threshold": args.mc_threshold,
                     "mc_samples": args.mc_samples, "seed": args.seed},
                    [args.data, args.estar, args.extraction],
                    [report_path.name, "report.json"], t0)
    return EXIT_OK


_BENCH_KEYS = {
    "latent_fractions": lambda v: tuple(float(x) for x in v.split(",")),
    "sample_sizes": lambda v: tuple(int(x) for x in v.split(",")),
    "replicates": int,
    "alpha": float,
    "seed": int,
    "parallelism": int,
    "backend": str,
    "estimator": str,
    "mc_threshold": int,
    "max_cond": lambda v: None if v.lower() == "none" else int(v),
    "p": int,
    "expected_degree": float,
    "n_oracle": int,
    "mc_samples": int,
}


def parse_bench_config(path):
    """Flat key = value file; '#' starts a comment; lists are comma-separated."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _BENCH_KEYS:
            raise DataError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _BENCH_KEYS[key](val)
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    env_par = os.environ.get("ROOTSHAP_PARALLELISM")
    if env_par:
        values["parallelism"] = int(env_par)
    return BenchConfig(**values)


def cmd_bench(args):
    t0 = time.perf_counter()
    out = _prepare_out(args.out)
    cfg = parse_bench_config(args.config)
    summary = run_benchmark(cfg)

    dump_json(summary.to_dict(), out / "summary.json")
    header, rows = summary.table_rows()
    write_csv(out / "table.csv", header, rows)
    header, rows = summary.replicate_rows()
    write_csv(out / "replicates.csv", header, rows)
    _write_manifest(out, "bench", {"config": str(args.config)},
                    [args.config],
                    ["summary.json", "table.csv", "replicates.csv"], t0)
    failures = sum(c["failures"] for c in summary.cells)
    if failures:
        print(f"warning: {failures} replicate(s) failed; cell means cover successes",
              file=sys.stderr)
    return EXIT_OK


def cmd_replay(args):
    manifest = load_json(args.manifest)
    command = manifest["command"]
    params = manifest["params"]
    out = args.out if args.out else str(Path(args.manifest).parent)
    argv = [command]
    for key, val in params.items():
        if val is None:
            continue
        argv.append(f"--{key.replace('_', '-')}")
        argv.append(str(val))
    argv += ["--out", out]
    return main(argv)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="rootshap",
        description="Sample-specific root-cause attribution under latent confounding")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a benchmark model and dataset")
    g.add_argument("--p", type=int, default=15)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--latent", type=float, default=0.0)
    g.add_argument("--expected-degree", type=float, default=2.0)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("extract", help="recover terms and the dependence graph")
    e.add_argument("--data", required=True)
    e.add_argument("--method", choices=("eel", "ee", "dl"), default="eel")
    e.add_argument("--alpha", type=float, default=0.05)
    e.add_argument("--max-cond", type=int, default=None)
    e.add_argument("--backend", choices=("taustar", "dcor"), default="taustar")
    e.add_argument("--budget", type=int, default=1_000_000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_extract)

    a = sub.add_parser("attribute", help="per-sample attribution report")
    a.add_argument("--data", required=True)
    a.add_argument("--estar", required=True)
    a.add_argument("--extraction", required=True)
    a.add_argument("--estimator", choices=("knn", "linear"), default="knn")
    a.add_argument("--mc-threshold", type=int, default=10)
    a.add_argument("--mc-samples", type=int, default=10_000)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_attribute)

    b = sub.add_parser("bench", help="replicated benchmark grid from a config file")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("replay", help="re-execute a command from its manifest")
    r.add_argument("--manifest", required=True)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_replay)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
