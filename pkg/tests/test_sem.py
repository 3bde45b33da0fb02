import json

import numpy as np
import pytest

from rootshap.sem import (
    ErrorDist,
    SemModel,
    StructuralError,
    inducing_structure,
    oracle_inducing_terms,
    oracle_target_logit,
    total_effects,
)
from rootshap.synth import GenConfig, generate_model

from conftest import chain_model, make_dist


def brute_c_sets(model):
    """Independent path oracle: breadth-first over explicit edge lists.

    Nodes are ('o', i), ('e', j), ('l', k); a path is valid for target i
    when interior colliders are ancestors of target (reflexively) and
    interior non-colliders are latent.  Written without reference to the
    production enumerator.
    """
    q, m = model.q, model.m
    edges = []
    for j in range(q):
        edges.append((("e", j), ("o", j)))
        for i in np.nonzero(model.beta[j])[0]:
            edges.append((("o", j), ("o", int(i))))
    for k in range(m):
        for i in np.nonzero(model.gamma[k])[0]:
            edges.append((("l", k), ("o", int(i))))

    nbrs = {}
    for u, v in edges:
        nbrs.setdefault(u, []).append(("out", v))
        nbrs.setdefault(v, []).append(("in", u))

    # ancestor closure over observed nodes
    anc = {("o", i): {("o", i)} for i in range(q)}
    changed = True
    while changed:
        changed = False
        for u, v in edges:
            for t in range(q):
                if v in anc[("o", t)] or v == ("o", t):
                    if u not in anc[("o", t)]:
                        anc[("o", t)].add(u)
                        changed = True
    for t in range(q):
        anc[("o", t)].add(("o", t))

    def valid_paths_to(target):
        found = set()
        t_nodes = [("e", j) for j in range(q)] + [("l", k) for k in range(m)]
        goal = ("o", target)

        def walk(node, seen, entry_dir):
            if node == goal:
                found.add(seen[0])
            for direction, nxt in nbrs.get(node, []):
                if nxt in seen:
                    continue
                if len(seen) >= 2:
                    # 'node' becomes interior: classify it
                    collider = entry_dir == "in" and direction == "in"
                    if collider:
                        if node not in anc[goal] and node != goal:
                            continue
                    else:
                        if node[0] != "l":
                            continue
                walk(nxt, seen + [nxt], "in" if direction == "out" else "out")

        for src in t_nodes:
            walk(src, [src], None)
        return found

    out = []
    for i in range(q):
        sources = valid_paths_to(i)
        c = set()
        for kind, idx in sources:
            c.add(idx if kind == "e" else q + idx)
        out.append(frozenset(c))
    return out


class TestTotalEffects:
    def test_identity_when_no_edges(self):
        model = SemModel(q=3, m=0, beta=np.zeros((3, 3)), gamma=np.zeros((0, 3)),
                         error_dists=tuple(make_dist("t") for _ in range(3)),
                         target_weights=np.zeros(3), target_intercept=0.0,
                         names=("a", "b", "c"))
        assert np.array_equal(total_effects(model).theta, np.eye(3))

    def test_two_chain_hand_expansion(self):
        model = chain_model(weights=(0.5,))
        theta = total_effects(model).theta
        assert theta == pytest.approx(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_confounded_pair_worked_values(self, fig3_model):
        g11, g12, b12 = 1.0, 0.5, 0.5
        theta = total_effects(fig3_model).theta
        assert theta[2, 1] == pytest.approx(g12 + g11 * b12)
        assert theta[0, 1] == pytest.approx(b12)

    def test_inverse_identity(self):
        for seed in range(20):
            model = generate_model(GenConfig(p=9, latent_fraction=0.1, seed=seed))
            lam = total_effects(model).observed_block
            resid = lam @ (np.eye(model.q) - model.beta) - np.eye(model.q)
            assert np.max(np.abs(resid)) < 1e-12

    def test_cycle_rejected(self):
        beta = np.array([[0.0, 0.5], [0.5, 0.0]])
        with pytest.raises(StructuralError, match="cycle"):
            SemModel(q=2, m=0, beta=beta, gamma=np.zeros((0, 2)),
                     error_dists=(make_dist("t"), make_dist("t")),
                     target_weights=np.zeros(2), target_intercept=0.0,
                     names=("a", "b"))


class TestInducingStructure:
    def test_unconfounded_trivial(self):
        model = chain_model(weights=(0.5, 0.4))
        st = inducing_structure(model)
        assert all(st.c_sets[i] == frozenset({i}) for i in range(3))
        assert st.dep_edges == frozenset()
        assert st.depth_d == 1

    def test_confounded_pair_sets(self, fig3_model):
        st = inducing_structure(fig3_model)
        assert st.c_sets[1] == frozenset({0, 1, 2})
        assert st.c_sets[0] == frozenset({0, 2})
        assert st.dep_edges == frozenset({(0, 1)})

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_independent_brute_force(self, seed):
        model = generate_model(GenConfig(p=7, latent_fraction=0.25, seed=seed))
        if model.q + model.m > 8:
            pytest.skip("oracle comparison kept small")
        st = inducing_structure(model)
        assert list(st.c_sets) == brute_c_sets(model)
        # dependence edges are exactly pairwise intersections
        expect = {
            (i, j)
            for i in range(model.q) for j in range(i + 1, model.q)
            if st.c_sets[i] & st.c_sets[j]
        }
        assert st.dep_edges == frozenset(expect)

    def test_own_error_always_present(self):
        for seed in range(10):
            model = generate_model(GenConfig(p=8, latent_fraction=0.2, seed=seed))
            st = inducing_structure(model)
            assert all(i in st.c_sets[i] for i in range(model.q))


class TestOracleTerms:
    def test_no_latents_returns_errors(self):
        model = chain_model(weights=(0.7,))
        st = inducing_structure(model)
        t = np.array([1.5, -2.0])
        assert oracle_inducing_terms(st, t) == pytest.approx(t)

    def test_worked_example(self, fig3_model):
        st = inducing_structure(fig3_model)
        got = oracle_inducing_terms(st, np.array([1.0, 0.0, 2.0]))
        assert got == pytest.approx([3.0, 2.5])

    def test_zero_input_zero_output(self, fig3_model):
        st = inducing_structure(fig3_model)
        assert oracle_inducing_terms(st, np.zeros(3)) == pytest.approx([0.0, 0.0])

    def test_linearity(self, fig3_model):
        st = inducing_structure(fig3_model)
        rng = np.random.default_rng(0)
        t1, t2 = rng.standard_normal(3), rng.standard_normal(3)
        lhs = oracle_inducing_terms(st, 2.0 * t1 - 3.0 * t2)
        rhs = 2.0 * oracle_inducing_terms(st, t1) - 3.0 * oracle_inducing_terms(st, t2)
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_dimension_mismatch(self, fig3_model):
        st = inducing_structure(fig3_model)
        with pytest.raises(ValueError):
            oracle_inducing_terms(st, np.zeros(5))


class TestTargetLogit:
    def test_zero_sample(self, fig3_model):
        assert oracle_target_logit(fig3_model, np.zeros(2)) == 0.0

    def test_projection(self):
        model = chain_model(weights=(0.5,))
        m2 = SemModel(q=2, m=0, beta=model.beta, gamma=model.gamma,
                      error_dists=model.error_dists,
                      target_weights=np.array([1.0, 0.0]),
                      target_intercept=0.0, names=model.names)
        assert oracle_target_logit(m2, np.array([2.0, 5.0])) == pytest.approx(2.0)

    def test_monte_carlo_probability_consistency(self):
        from rootshap.synth import sample_dataset
        model = generate_model(GenConfig(p=8, latent_fraction=0.0, seed=3))
        ds = sample_dataset(model, 50_000, seed=3)
        logit = oracle_target_logit(model, ds.observed)
        p = 1.0 / (1.0 + np.exp(-logit))
        assert ds.target.mean() == pytest.approx(p.mean(), abs=0.01)


class TestSerialization:
    def test_bit_exact_round_trip(self):
        for seed in (0, 5):
            model = generate_model(GenConfig(p=10, latent_fraction=0.2, seed=seed))
            again = SemModel.from_dict(json.loads(model.to_json()))
            assert np.array_equal(again.beta, model.beta)
            assert np.array_equal(again.gamma, model.gamma)
            assert np.array_equal(again.target_weights, model.target_weights)
            assert again.error_dists == model.error_dists
            assert again.names == model.names
            assert again.to_json() == model.to_json()

    def test_latent_needs_two_children(self):
        with pytest.raises(StructuralError, match="two observed children"):
            SemModel(q=2, m=1, beta=np.zeros((2, 2)),
                     gamma=np.array([[1.0, 0.0]]),
                     error_dists=tuple(make_dist("t") for _ in range(3)),
                     target_weights=np.zeros(2), target_intercept=0.0,
                     names=("a", "b"))

    def test_error_dist_variances(self):
        assert ErrorDist("t", {"df": 5}).variance == pytest.approx(5.0 / 3.0)
        assert ErrorDist("chisq", {"df": 3}).variance == pytest.approx(6.0)
        assert ErrorDist("uniform", {"low": -1.0, "high": 1.0}).variance == pytest.approx(1.0 / 3.0)
