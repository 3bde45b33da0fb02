"""Linear SEMs with latent confounders and their analytic oracles.

Everything here is exact structure: total effects by topological
back-substitution, directed-inducing-path enumeration, the resulting
inducing-term coefficients and dependence graph.  These objects serve as
ground truth for data generation and for conformance testing of the
extraction algorithms; none of it touches sample data.

Index conventions: the exogenous vector T has length q + m with T[j] the
error of observed variable j for j < q and T[q + k] the k-th latent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .serialize import dumps_json

ORACLE_SIZE_LIMIT = 20  # path enumeration is exponential; oracles stay small
COEF_TOL = 1e-9


class StructuralError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorDist:
    """Continuous non-Gaussian error distribution, centered to mean zero."""

    kind: str
    params: dict

    _VARIANCES = {
        "t": lambda p: p["df"] / (p["df"] - 2.0),
        "chisq": lambda p: 2.0 * p["df"],
        "uniform": lambda p: (p["high"] - p["low"]) ** 2 / 12.0,
    }

    def __post_init__(self):
        if self.kind not in self._VARIANCES:
            raise StructuralError(f"unknown error distribution kind {self.kind!r}")

    @property
    def variance(self):
        return float(self._VARIANCES[self.kind](self.params))

    def sample(self, rng, size):
        if self.kind == "t":
            return rng.standard_t(self.params["df"], size)
        if self.kind == "chisq":
            return rng.chisquare(self.params["df"], size) - self.params["df"]
        low, high = self.params["low"], self.params["high"]
        return rng.uniform(low, high, size) - 0.5 * (low + high)

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], params=dict(d["params"]))


@dataclass(frozen=True)
class SemModel:
    """Canonical latent-variable linear SEM with a terminal binary target.

    beta[j, i] is the direct coefficient of observed j on observed i;
    gamma[k, i] the loading of latent k on observed i.  Latents are
    parentless and need at least two observed children.  The binary target
    is logistic in the observed variables and depends on nothing else.
    """

    q: int
    m: int
    beta: np.ndarray
    gamma: np.ndarray
    error_dists: tuple
    target_weights: np.ndarray
    target_intercept: float
    names: tuple

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        gamma = np.asarray(self.gamma, dtype=np.float64).reshape(self.m, self.q)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "target_weights",
                           np.asarray(self.target_weights, dtype=np.float64))
        object.__setattr__(self, "error_dists", tuple(self.error_dists))
        object.__setattr__(self, "names", tuple(self.names))
        self._validate()

    def _validate(self):
        if self.q < 1 or self.m < 0:
            raise StructuralError("need q >= 1 observed and m >= 0 latent variables")
        if self.beta.shape != (self.q, self.q):
            raise StructuralError("beta must be q x q")
        if self.gamma.shape != (self.m, self.q):
            raise StructuralError("gamma must be m x q")
        if self.target_weights.shape != (self.q,):
            raise StructuralError("target_weights must have length q")
        if len(self.error_dists) != self.q + self.m:
            raise StructuralError("need one error distribution per T entry")
        if len(self.names) != self.q:
            raise StructuralError("need one name per observed variable")
        for a in (self.beta, self.gamma, self.target_weights):
            if not np.all(np.isfinite(a)):
                raise StructuralError("coefficients must be finite")
        if not np.isfinite(self.target_intercept):
            raise StructuralError("target intercept must be finite")
        for k in range(self.m):
            if np.count_nonzero(self.gamma[k]) < 2:
                raise StructuralError(f"latent {k} has fewer than two observed children")
        self.topological_order()  # raises on cycles

    def topological_order(self):
        """Kahn's algorithm over the nonzero pattern of beta."""
        children = [np.nonzero(self.beta[j])[0] for j in range(self.q)]
        indeg = np.zeros(self.q, dtype=int)
        for j in range(self.q):
            for i in children[j]:
                indeg[i] += 1
        stack = sorted(np.nonzero(indeg == 0)[0].tolist())
        order = []
        indeg = indeg.copy()
        while stack:
            j = stack.pop(0)
            order.append(j)
            for i in children[j]:
                indeg[i] -= 1
                if indeg[i] == 0:
                    stack.append(int(i))
            stack.sort()
        if len(order) != self.q:
            raise StructuralError("observed coefficient graph contains a cycle")
        return order

    @property
    def t_variances(self):
        return np.array([d.variance for d in self.error_dists])

    def to_dict(self):
        return {
            "q": self.q,
            "m": self.m,
            "beta": self.beta,
            "gamma": self.gamma,
            "error_dists": [d.to_dict() for d in self.error_dists],
            "target_weights": self.target_weights,
            "target_intercept": float(self.target_intercept),
            "names": list(self.names),
        }

    def to_json(self):
        return dumps_json(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        return cls(
            q=int(d["q"]),
            m=int(d["m"]),
            beta=np.array(d["beta"], dtype=np.float64).reshape(d["q"], d["q"]),
            gamma=np.array(d["gamma"], dtype=np.float64).reshape(d["m"], d["q"]),
            error_dists=tuple(ErrorDist.from_dict(e) for e in d["error_dists"]),
            target_weights=np.array(d["target_weights"], dtype=np.float64),
            target_intercept=float(d["target_intercept"]),
            names=tuple(d["names"]),
        )


@dataclass(frozen=True)
class ThetaMatrix:
    """Total effects theta[j, i] of each T_j on each observed i."""

    theta: np.ndarray

    @property
    def observed_block(self):
        q = self.theta.shape[1]
        return self.theta[:q]


def total_effects(model: SemModel) -> ThetaMatrix:
    """theta = [lambda; gamma lambda] with lambda = (I - beta)^{-1}.

    lambda is accumulated column-by-column in topological order (beta is
    nilpotent under any topological order), so no general inverse is formed.
    """
    q = model.q
    lam = np.zeros((q, q))
    for i in model.topological_order():
        col = np.zeros(q)
        col[i] = 1.0
        parents = np.nonzero(model.beta[:, i])[0]
        for j in parents:
            col += lam[:, j] * model.beta[j, i]
        lam[:, i] = col
    theta = np.vstack([lam, model.gamma @ lam]) if model.m else lam.copy()
    return ThetaMatrix(theta=theta)


@dataclass(frozen=True)
class InducingStructure:
    """Which exogenous terms contaminate each observed variable, and how.

    c_sets[i] is the set of T indices with a directed inducing path to
    observed i; estar_coeffs is theta with support restricted to those sets,
    so column i gives the exact linear expression of the i-th recoverable
    term over T.  dep_edges joins observed pairs whose sets overlap.
    depth_d bounds the number of observed variables that a single exogenous
    chain feeds, which is what limits the conditioning sets the extraction
    algorithm ever needs.
    """

    q: int
    m: int
    c_sets: tuple
    estar_coeffs: np.ndarray
    dep_edges: frozenset
    depth_d: int

    def neighborhood(self, i):
        out = {i}
        for (a, b) in self.dep_edges:
            if a == i:
                out.add(b)
            elif b == i:
                out.add(a)
        return out


def _build_arc_graph(model):
    """Directed arcs over nodes 0..q-1 (observed) and q..q+q+m-1 (T).

    T node for error j is q + j; for latent k it is q + q + k.
    """
    q, m = model.q, model.m
    n_nodes = q + q + m
    out_edges = [[] for _ in range(n_nodes)]
    in_edges = [[] for _ in range(n_nodes)]

    def add(u, v):
        out_edges[u].append(v)
        in_edges[v].append(u)

    for j in range(q):
        add(q + j, j)  # error -> its variable
        for i in np.nonzero(model.beta[j])[0]:
            add(j, int(i))
    for k in range(m):
        for i in np.nonzero(model.gamma[k])[0]:
            add(q + q + k, int(i))
    return n_nodes, out_edges, in_edges


def _reachability(n_nodes, out_edges):
    """reach[u, v] true when a directed path (length >= 0) runs u -> v."""
    reach = np.eye(n_nodes, dtype=bool)
    # iterate to a fixpoint; graphs here are small
    changed = True
    while changed:
        changed = False
        for u in range(n_nodes):
            for v in out_edges[u]:
                new = reach[v] & ~reach[u]
                if new.any():
                    reach[u] |= reach[v]
                    changed = True
    return reach


def _enumerate_paths(model, target_obs, reach, collect_confounding):
    """DFS over the edge skeleton enumerating simple paths from T nodes.

    A path is valid relative to the observed target when every interior
    collider reaches the target by directed edges and every interior
    non-collider is a latent node.  With collect_confounding=False the
    walk returns the T sources of valid paths ending exactly at the target.
    With collect_confounding=True it returns the largest number of observed
    vertices entered directly from a T node along any valid path ending at
    an observed vertex: the observed children a single exogenous chain
    feeds, which is the quantity bounding useful conditioning-set sizes.
    """
    q, m = model.q, model.m
    _, out_edges, in_edges = _build_arc_graph(model)
    out_sets = [set(e) for e in out_edges]
    t_nodes = range(q, q + q + m)

    def is_obs(u):
        return u < q

    def is_latent(u):
        return u >= q + q

    sources = set()
    depth_best = 0

    def extend(path, into_flags, t_child):
        nonlocal depth_best
        u = path[-1]
        if collect_confounding and is_obs(u):
            depth_best = max(depth_best, t_child)
        if not collect_confounding and u == target_obs:
            sources.add(path[0])
        for v in out_edges[u] + in_edges[u]:
            if v in path:
                continue
            arrow_into_v = v in out_sets[u]
            if len(path) >= 2:
                # u becomes an interior vertex of the extended path
                collider_at_u = into_flags[-1] and not arrow_into_v
                if collider_at_u:
                    if not reach[u, target_obs]:
                        continue
                elif not is_latent(u):
                    continue
            fed_by_t = is_obs(v) and arrow_into_v and u >= q
            path.append(v)
            into_flags.append(arrow_into_v)
            extend(path, into_flags, t_child + (1 if fed_by_t else 0))
            path.pop()
            into_flags.pop()

    for t in t_nodes:
        extend([t], [], 0)

    if collect_confounding:
        return depth_best
    return sources


def inducing_structure(model: SemModel) -> InducingStructure:
    """Exhaustive-path oracle for the contamination structure of a model."""
    q, m = model.q, model.m
    if q + m > ORACLE_SIZE_LIMIT:
        raise StructuralError(
            f"path-enumeration oracle is limited to q + m <= {ORACLE_SIZE_LIMIT}")
    theta = total_effects(model).theta
    n_nodes, out_edges, _ = _build_arc_graph(model)
    reach = _reachability(n_nodes, out_edges)

    c_sets = []
    for i in range(q):
        sources = _enumerate_paths(model, i, reach, collect_confounding=False)
        # map arc-graph T nodes back to T indices: error j -> j, latent k -> q + k
        c = frozenset(s - q for s in sources)
        assert i in c, "every variable's own error lies on a trivial inducing path"
        c_sets.append(c)

    coeffs = np.zeros_like(theta)
    for i in range(q):
        for j in c_sets[i]:
            coeffs[j, i] = theta[j, i]

    dep = set()
    for i in range(q):
        for j in range(i + 1, q):
            if c_sets[i] & c_sets[j]:
                dep.add((i, j))

    depth = 0
    for i in range(q):
        depth = max(depth, _enumerate_paths(model, i, reach, collect_confounding=True))

    return InducingStructure(
        q=q,
        m=m,
        c_sets=tuple(c_sets),
        estar_coeffs=coeffs,
        dep_edges=frozenset(dep),
        depth_d=int(depth),
    )


def oracle_inducing_terms(structure: InducingStructure, t_sample):
    """Exact recoverable terms for exogenous draws: row(s) of T -> row(s) of E*."""
    t = np.asarray(t_sample, dtype=np.float64)
    expected = structure.estar_coeffs.shape[0]
    if t.shape[-1] != expected:
        raise ValueError(f"t_sample must have length {expected}")
    return t @ structure.estar_coeffs


def oracle_target_logit(model: SemModel, o_sample):
    """Log-odds of the target for observed row(s)."""
    o = np.asarray(o_sample, dtype=np.float64)
    return o @ model.target_weights + model.target_intercept
