import json
import math

import numpy as np
import pytest
from scipy import stats

from copulaabc import reftable as rt
from copulaabc.copula import MetaTPosterior, TCopulaParams
from copulaabc.drf import ForestConfig
from copulaabc.evaluation import exact_poisson_posterior
from copulaabc.inference import (QUANTILE_LEVELS, InferenceConfig, copula_abc, mode_mle_extra_draws,
                                 mode_mle_from_candidates, posterior_from_weights, reduce_table,
                                 select_model, summarize)
from copulaabc.models import registry
from copulaabc.models.priors import GammaPrior, UniformPrior
from copulaabc.reftable import ReferenceTable

FAST = InferenceConfig(forest=ForestConfig(n_trees=100, seed=3))


class Margin:
    def __init__(self, dist):
        self.dist = dist

    def logpdf(self, t):
        return self.dist.logpdf(t)


def normal_post(rng, n=4000, r=0.5):
    vals = rng.normal(size=(n, 2))
    R = np.array([[1.0, r], [r, 1.0]])
    return MetaTPosterior(vals, np.full((2, n), 1 / n), [Margin(stats.norm())] * 2, TCopulaParams(6.0, R))


def test_summarize_point_mass():
    theta = np.array([[1.0], [2.0], [3.0]])
    mean, sd, qs = summarize(np.array([[0.0, 1.0, 0.0]]), theta)
    assert mean[0] == 2.0 and sd[0] == 0.0 and np.all(qs == 2.0)


def test_summarize_sorted_and_interval(rng):
    theta = rng.normal(size=(500, 3))
    w = rng.dirichlet(np.ones(500), size=3)
    mean, sd, qs = summarize(w, theta)
    assert np.all(np.diff(qs, axis=0) >= 0) and np.all(sd >= 0)
    for k in range(3):
        assert set(qs[:, k]) <= set(theta[:, k])   # quantiles are attained atoms
        assert qs[0, k] <= qs[2, k] <= qs[4, k]


def test_uniform_prior_mode_equals_mle(rng):
    post = normal_post(rng)
    cands = rng.uniform(-2, 2, size=(300, 2))
    mode, mle, i, j = mode_mle_from_candidates(post, UniformPrior((-5, -5), (5, 5)), cands)
    assert i == j and np.array_equal(mode, mle)


def test_single_candidate(rng):
    post = normal_post(rng)
    mode, mle, i, j = mode_mle_from_candidates(post, UniformPrior((-5, -5), (5, 5)), [[0.1, 0.2]])
    assert i == j == 0 and mode.tolist() == [0.1, 0.2]


def test_all_candidates_infinite(rng):
    post = normal_post(rng)
    with pytest.raises(ValueError):
        mode_mle_from_candidates(post, UniformPrior((-5, -5), (5, 5)), [[50.0, 0.0], [0.0, 60.0]])


def test_ties_go_to_lowest_index(rng):
    post = normal_post(rng)
    c = np.array([[1.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
    assert mode_mle_from_candidates(post, UniformPrior((-5, -5), (5, 5)), c)[2] == 1


def test_mode_ignores_infinite_candidates(rng):
    post = normal_post(rng)
    cands = rng.uniform(-2, 2, size=(50, 2))
    prior = UniformPrior((-5, -5), (5, 5))
    base = mode_mle_from_candidates(post, prior, cands)[0]
    more = np.vstack([[[40.0, 0.0]], cands, [[0.0, -40.0]]])
    assert np.array_equal(mode_mle_from_candidates(post, prior, more)[0], base)


def test_mle_divides_out_prior(rng):
    post = normal_post(rng)
    prior = GammaPrior((1.0, 1.0), (1.0, 1.0))
    cands = np.abs(rng.normal(size=(400, 2))) + 0.01
    mode, mle, i, j = mode_mle_from_candidates(post, prior, cands)
    score = post.log_density(cands) - prior.log_density_many(cands)
    assert j == int(np.argmax(score))
    assert i == int(np.argmax(post.log_density(cands)))


@pytest.mark.parametrize("seed", range(10))
def test_mode_near_known_peak(seed):
    rng = np.random.default_rng(seed)
    post = normal_post(rng, n=10_000)
    cands = post.sample(10_000, rng)
    mode = mode_mle_from_candidates(post, UniformPrior((-9, -9), (9, 9)), cands)[0]
    assert np.all(np.abs(mode) < stats.norm.ppf(0.75))


def test_extra_draws_deterministic_and_same_path(rng):
    post = normal_post(rng)
    prior = UniformPrior((-9, -9), (9, 9))
    a = mode_mle_extra_draws(post, prior, 2000, np.random.default_rng(4))
    b = mode_mle_extra_draws(post, prior, 2000, np.random.default_rng(4))
    c = mode_mle_from_candidates(post, prior, post.sample(2000, np.random.default_rng(4)))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[0], c[0]) and a[2] == c[2]
    with pytest.raises(ValueError):
        mode_mle_extra_draws(post, prior, 0, rng)


# --- model selection ---------------------------------------------------------------------------

def _two_model_table(rng, informative, n=1200):
    labels = rng.integers(0, 2, size=n)
    s = rng.normal(size=(n, 2)) + (3.0 * labels[:, None] if informative else 0.0)
    meta = {"models": [{"params": ["a"]}, {"params": ["a", "b"]}], "param_names": ["theta1", "theta2"]}
    theta = rng.normal(size=(n, 2))
    theta[labels == 0, 1] = 0.0
    return ReferenceTable(labels, theta, s, np.zeros_like(theta), meta)


def test_identical_summaries_give_flat_probabilities(rng):
    tab = _two_model_table(rng, informative=False, n=4000)
    tab.summaries[:] = 1.0
    probs = select_model(tab, [1.0, 1.0], FAST).probs
    assert abs(probs[0] - 0.5) < 0.05 and probs.sum() == pytest.approx(1.0)


def test_noise_summaries_flat_on_average(rng):
    from copulaabc.inference import select_model_many
    tab = _two_model_table(rng, informative=False, n=4000)
    P = select_model_many(tab, rng.normal(size=(20, 2)), FAST, seed=0)
    assert np.allclose(P.sum(axis=1), 1.0)
    assert abs(P[:, 0].mean() - 0.5) < 0.05


def test_select_and_reduce(rng):
    tab = _two_model_table(rng, informative=True)
    sel = select_model(tab, [3.0, 3.0], FAST)
    assert sel.best == 1 and sel.probs[1] > 0.9
    assert np.all(sel.reduced.model == 1) and sel.reduced.N == int(np.sum(tab.model == 1))
    assert sel.reduced.param_names == ["a", "b"]
    low = reduce_table(tab, 0)
    assert low.theta.shape[1] == 1 and np.array_equal(low.theta[:, 0], tab.theta[tab.model == 0, 0])


def test_selection_relabel_invariant(rng):
    tab = _two_model_table(rng, informative=True)
    swapped = ReferenceTable(1 - tab.model, tab.theta, tab.summaries, tab.jitter,
                             dict(tab.meta, models=tab.meta["models"][::-1]))
    p = select_model(tab, [1.5, 1.2], FAST).probs
    q = select_model(swapped, [1.5, 1.2], FAST).probs
    assert np.allclose(p, q[::-1], atol=1e-12)


def test_selection_needs_every_model(rng):
    tab = _two_model_table(rng, informative=True)
    with pytest.raises(ValueError):
        select_model(tab.subset(np.flatnonzero(tab.model == 0)), [0.0, 0.0], FAST)


# --- end to end ----------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def poisson_case():
    model = registry.poisson_mixture()
    table = rt.build(model, 3000, 100, seed=11)
    data = model.simulate(np.array([3.0, 0.0]), 100, np.random.default_rng(5))
    return model, table, data


def test_poisson_pipeline(poisson_case, tmp_path):
    model, table, data = poisson_case
    rep = copula_abc(table, model.summarize(data), model.prior,
                     InferenceConfig(forest=ForestConfig(n_trees=300, seed=1)), seed=2)
    exact = exact_poisson_posterior(np.asarray(data)[:, 0])
    assert abs(rep.mean[0] - exact.mean) < 0.3
    assert np.all(np.diff(rep.quantiles, axis=0) >= 0)
    lo, hi = rep.interval(0.95)
    assert np.all(lo <= rep.median) and np.all(rep.median <= hi)
    # rows survive the (0,1) filter only inside both narrow weighted supports
    if rep.diagnostics["n_pseudo_obs"] >= 4:
        assert 1 <= rep.copula_nu <= 1000
    else:
        assert rep.diagnostics["copula_fallback"] == "independence"
    rep.to_csv(tmp_path / "r.csv", "config_hash=abc")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "# config_hash=abc"
    assert lines[1].split(",") == ["method", "parameter", "mean", "median", "mode", "MLE", "s.d.",
                                   "q2.5", "q25", "q50", "q75", "q97.5"]
    assert float(lines[2].split(",")[2]) == rep.mean[0]
    rep.to_json(tmp_path / "r.json")
    back = json.loads((tmp_path / "r.json").read_text())
    assert back["quantile_levels"] == list(QUANTILE_LEVELS) and back["mean"] == rep.mean.tolist()


def test_pipeline_deterministic_across_workers(poisson_case):
    model, table, data = poisson_case
    s = model.summarize(data)
    a = copula_abc(table, s, model.prior, InferenceConfig(forest=ForestConfig(n_trees=60, seed=1)), seed=2)
    b = copula_abc(table, s, model.prior,
                   InferenceConfig(forest=ForestConfig(n_trees=60, seed=1), workers=2), seed=2)
    assert a.csv_rows() == b.csv_rows()


def test_independence_fallback_when_few_rows(rng):
    theta = np.vstack([[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]], rng.uniform(5, 9, size=(7, 2))])
    w = np.zeros((2, 10))
    w[:, :3] = 1 / 3
    tab = ReferenceTable(np.zeros(10), theta, rng.normal(size=(10, 1)), np.zeros_like(theta))
    rep = posterior_from_weights(tab, w, UniformPrior((-9, -9), (9, 9)), InferenceConfig(n_plus=0))
    assert rep.diagnostics["n_pseudo_obs"] == 2
    assert rep.diagnostics["copula_fallback"] == "independence" and math.isinf(rep.copula_nu)
    assert rep.mode.tolist() == [1.0, 1.0]
