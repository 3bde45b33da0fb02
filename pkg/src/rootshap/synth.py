"""Synthetic benchmark generator and fixtures.

Models are drawn the way the benchmark protocol prescribes: a Bernoulli
upper-triangular DAG over p vertices with expected neighborhood size two,
a terminal binary target chosen among childless vertices with parents,
a fraction of eligible root vertices promoted to latent confounders, edge
weights uniform on [-1, -0.25] u [0.25, 1], and error distributions drawn
from {t(5), chi-square(3), uniform(-1, 1)}, each centered to mean zero.

All randomness flows through named Philox streams split off a single
64-bit seed (scheme "philox-sskey-v1"), so any replicate of any cell is
reproducible in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sem import ErrorDist, SemModel, total_effects
from .serialize import write_csv

RNG_SCHEME = "philox-sskey-v1"
MAX_MODEL_ATTEMPTS = 1000
_DIST_KINDS = ("t", "chisq", "uniform")


class GenerationError(RuntimeError):
    pass


def rng_stream(seed, *key):
    """Counter-based generator for a named substream of the master seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _make_dist(kind):
    if kind == "t":
        return ErrorDist("t", {"df": 5})
    if kind == "chisq":
        return ErrorDist("chisq", {"df": 3})
    return ErrorDist("uniform", {"low": -1.0, "high": 1.0})


def _draw_weight(rng):
    w = rng.uniform(0.25, 1.0)
    return -w if rng.random() < 0.5 else w


@dataclass(frozen=True)
class GenConfig:
    p: int = 15
    expected_degree: float = 2.0
    latent_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.p < 3:
            raise ValueError("p must be at least 3")
        if not (0.0 <= self.latent_fraction < 1.0):
            raise ValueError("latent_fraction must be in [0, 1)")
        if self.expected_degree <= 0:
            raise ValueError("expected_degree must be positive")


@dataclass(frozen=True)
class Dataset:
    observed: np.ndarray
    target: np.ndarray
    column_names: tuple
    hidden_t: np.ndarray | None = None

    def __post_init__(self):
        if self.observed.ndim != 2 or self.observed.shape[0] < 1:
            raise ValueError("observed must be a nonempty n x q matrix")
        if self.target.shape != (self.observed.shape[0],):
            raise ValueError("target must align with observed rows")
        if not np.all(np.isin(self.target, (0, 1))):
            raise ValueError("target must be binary")

    @property
    def n(self):
        return self.observed.shape[0]

    def write_csv(self, path, hidden_path=None):
        header = list(self.column_names) + ["D"]
        rows = (list(self.observed[i]) + [int(self.target[i])] for i in range(self.n))
        write_csv(path, header, rows)
        if hidden_path is not None and self.hidden_t is not None:
            q = self.observed.shape[1]
            t_names = [f"T_{name}" for name in self.column_names]
            t_names += [f"T_L{k + 1}" for k in range(self.hidden_t.shape[1] - q)]
            write_csv(hidden_path, t_names, (self.hidden_t[i] for i in range(self.n)))


def generate_model(config: GenConfig) -> SemModel:
    """Draw a benchmark SEM; deterministic function of (config, seed).

    The target count of latents is round(latent_fraction * p); promotion is
    restricted to root vertices with at least two non-target children that
    are not themselves parents of the target, so the model stays expressible
    with observed-only target weights.  Fewer eligible roots than the target
    count simply yields fewer latents.
    """
    rng = rng_stream(config.seed, 0)
    p = config.p
    edge_prob = config.expected_degree / (p - 1)

    for _ in range(MAX_MODEL_ATTEMPTS):
        adj = np.triu(rng.random((p, p)) < edge_prob, k=1)
        has_child = adj.any(axis=1)
        has_parent = adj.any(axis=0)
        eligible_d = np.nonzero(~has_child & has_parent)[0]
        if eligible_d.size == 0:
            continue
        d_vertex = int(eligible_d[rng.integers(eligible_d.size)])

        n_latent_target = int(round(config.latent_fraction * p))
        candidates = [
            v for v in range(p)
            if v != d_vertex
            and not has_parent[v]
            and np.count_nonzero(adj[v]) - bool(adj[v, d_vertex]) >= 2
        ]
        order = rng.permutation(len(candidates))

        # promoting a parent of the target hides that edge (the target
        # depends on observed variables only), so the last remaining
        # observed parent of the target is never promoted
        d_parents = set(np.nonzero(adj[:, d_vertex])[0].tolist())
        obs_d_parents = len(d_parents)
        latents = []
        for idx in order:
            if len(latents) >= n_latent_target:
                break
            v = candidates[idx]
            if v in d_parents:
                if obs_d_parents <= 1:
                    continue
                obs_d_parents -= 1
            latents.append(v)
        latents.sort()

        weights = np.zeros((p, p))
        for u in range(p):
            for v in range(u + 1, p):
                if adj[u, v]:
                    weights[u, v] = _draw_weight(rng)

        latent_set = set(latents)
        observed = [v for v in range(p) if v != d_vertex and v not in latent_set]
        obs_index = {v: i for i, v in enumerate(observed)}
        q, m = len(observed), len(latents)

        beta = np.zeros((q, q))
        for u in observed:
            for v in observed:
                if adj[u, v]:
                    beta[obs_index[u], obs_index[v]] = weights[u, v]
        gamma = np.zeros((m, q))
        for k, u in enumerate(latents):
            for v in np.nonzero(adj[u])[0]:
                if v != d_vertex:
                    gamma[k, obs_index[v]] = weights[u, v]

        target_weights = np.zeros(q)
        for u in observed:
            if adj[u, d_vertex]:
                target_weights[obs_index[u]] = weights[u, d_vertex]

        # kinds are drawn per vertex so a vertex keeps its distribution no
        # matter which side of the observed/latent split it lands on
        kind_of = {v: _DIST_KINDS[rng.integers(3)]
                   for v in range(p) if v != d_vertex}
        dists = tuple(_make_dist(kind_of[v]) for v in observed + latents)
        names = tuple(f"X{v + 1}" for v in observed)
        return SemModel(
            q=q,
            m=m,
            beta=beta,
            gamma=gamma,
            error_dists=dists,
            target_weights=target_weights,
            target_intercept=0.0,
            names=names,
        )

    raise GenerationError(
        f"no vertex without children and with a parent in {MAX_MODEL_ATTEMPTS} draws")


def sample_dataset(model: SemModel, n, seed) -> Dataset:
    """Forward-sample n rows; exogenous draws are retained as hidden_t."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng_stream(seed, 1)
    q, m = model.q, model.m
    t = np.empty((n, q + m))
    for j in range(q + m):
        t[:, j] = model.error_dists[j].sample(rng, n)

    observed = np.zeros((n, q))
    latents = t[:, q:]
    for i in model.topological_order():
        col = t[:, i].copy()
        for j in np.nonzero(model.beta[:, i])[0]:
            col += observed[:, j] * model.beta[j, i]
        for k in np.nonzero(model.gamma[:, i])[0] if m else ():
            col += latents[:, k] * model.gamma[k, i]
        observed[:, i] = col

    logit = observed @ model.target_weights + model.target_intercept
    prob = 1.0 / (1.0 + np.exp(-logit))
    target = (rng.random(n) < prob).astype(np.int8)
    return Dataset(observed=observed, target=target,
                   column_names=model.names, hidden_t=t)


_DIABETES_EDGES = (
    ("age", "preg"),
    ("age", "BMI"),
    ("age", "BP"),
    ("age", "glucose"),
    ("BMI", "BP"),
    ("BMI", "skin"),
    ("pedigree", "BMI"),
    ("pedigree", "glucose"),
    ("pedigree", "insulin"),
    ("glucose", "insulin"),
)
_DIABETES_NAMES = ("age", "pedigree", "preg", "BMI", "BP", "glucose", "skin", "insulin")
_DIABETES_SEED = 8451
_DIABETES_TARGET_PARENTS = ("glucose", "insulin")


def diabetes_fixture() -> SemModel:
    """Eight-variable metabolic graph with benchmark-scheme weights.

    The edge structure is fixed; coefficients, error kinds and target
    weights are drawn once from a pinned seed, since the real-world values
    would come from patient data this package does not ship.  The target is
    parented by glucose and insulin.
    """
    rng = rng_stream(_DIABETES_SEED, 7)
    q = len(_DIABETES_NAMES)
    idx = {name: i for i, name in enumerate(_DIABETES_NAMES)}
    beta = np.zeros((q, q))
    for u, v in _DIABETES_EDGES:
        beta[idx[u], idx[v]] = _draw_weight(rng)
    target_weights = np.zeros(q)
    for name in _DIABETES_TARGET_PARENTS:
        target_weights[idx[name]] = _draw_weight(rng)
    dists = tuple(_make_dist(_DIST_KINDS[rng.integers(3)]) for _ in range(q))
    return SemModel(
        q=q,
        m=0,
        beta=beta,
        gamma=np.zeros((0, q)),
        error_dists=dists,
        target_weights=target_weights,
        target_intercept=0.0,
        names=_DIABETES_NAMES,
    )


def check_hidden_consistency(model: SemModel, ds: Dataset, tol=1e-10):
    """Max abs deviation between stored observed rows and hidden_t @ theta."""
    if ds.hidden_t is None:
        raise ValueError("dataset has no hidden exogenous draws")
    theta = total_effects(model).theta
    return float(np.max(np.abs(ds.hidden_t @ theta - ds.observed)))
