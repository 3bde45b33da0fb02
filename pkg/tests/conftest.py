import numpy as np
import pytest

from rootshap.sem import ErrorDist, SemModel


def make_dist(kind):
    if kind == "t":
        return ErrorDist("t", {"df": 5})
    if kind == "chisq":
        return ErrorDist("chisq", {"df": 3})
    return ErrorDist("uniform", {"low": -1.0, "high": 1.0})


def confounded_pair_model(g11=1.0, g12=0.5, b12=0.5):
    """Two observed variables sharing one latent parent, plus an edge between them."""
    return SemModel(
        q=2,
        m=1,
        beta=np.array([[0.0, b12], [0.0, 0.0]]),
        gamma=np.array([[g11, g12]]),
        error_dists=(make_dist("uniform"), make_dist("t"), make_dist("chisq")),
        target_weights=np.array([0.3, 0.9]),
        target_intercept=0.0,
        names=("O1", "O2"),
    )


def chain_model(weights=(0.5, 0.4), kinds=("t", "chisq", "uniform")):
    """O1 -> O2 -> ... with the given edge weights."""
    q = len(weights) + 1
    beta = np.zeros((q, q))
    for i, w in enumerate(weights):
        beta[i, i + 1] = w
    return SemModel(
        q=q,
        m=0,
        beta=beta,
        gamma=np.zeros((0, q)),
        error_dists=tuple(make_dist(k) for k in kinds[:q]),
        target_weights=np.zeros(q),
        target_intercept=0.0,
        names=tuple(f"O{i + 1}" for i in range(q)),
    )


@pytest.fixture(scope="session")
def fig3_model():
    return confounded_pair_model()


@pytest.fixture(scope="session")
def unconfounded_runs():
    """Twenty p=8 unconfounded models with n=50k draws, shared across tests."""
    from rootshap.synth import GenConfig, generate_model, sample_dataset
    from rootshap.stats.regression import standardize

    runs = []
    for seed in range(1, 21):
        model = generate_model(GenConfig(p=8, latent_fraction=0.0, seed=seed))
        ds = sample_dataset(model, 50_000, seed=seed)
        xs, _, _ = standardize(ds.observed)
        runs.append((model, ds, xs))
    return runs
