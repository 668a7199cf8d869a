import numpy as np
import pytest

from counterfact.boolean import TooManyRootsError
from counterfact.gaussian import counterfactual, intervene, prior_moments
from counterfact.model import LinearScm
from counterfact.oracle import (
    ZeroAcceptanceError,
    convergence_sweep,
    enumerate_boolean,
    mc_prior,
    minimal_layer,
    rejection_counterfactual,
)
from helpers import coffee_model, firing_squad, firing_squad_deterministic, random_boolean_model, random_linear_model


def test_mc_prior_coffee_mean():
    est = mc_prior(coffee_model(), 1_000_000, seed=1)
    assert est.n_accepted == 1_000_000
    assert np.all(np.abs(est.mean - [5.0, 10.0, 8.0]) <= 3 * est.std_err)


def test_mc_prior_standard_normal():
    model = LinearScm(("a", "b", "c"), np.zeros((3, 3)), np.zeros(3), np.eye(3))
    est = mc_prior(model, 1_000_000, seed=2)
    assert np.all(np.abs(est.mean) <= 3 * est.std_err)
    np.testing.assert_allclose(est.std_err, 1 / np.sqrt(1_000_000), rtol=0.01)


def test_mc_prior_seed_determinism():
    a = mc_prior(coffee_model(), 200_000, seed=5)
    b = mc_prior(coffee_model(), 200_000, seed=5)
    assert a.mean.tobytes() == b.mean.tobytes() and a.cov.tobytes() == b.cov.tobytes()
    c = mc_prior(coffee_model(), 200_000, seed=6)
    assert not np.array_equal(a.mean, c.mean)


def test_mc_prior_needs_two_draws():
    with pytest.raises(ValueError):
        mc_prior(coffee_model(), 1, seed=0)


def test_rejection_query_three():
    est = rejection_counterfactual(coffee_model(), {"r": 4}, {"p": 7}, delta=0.05, n=1_000_000, seed=3)
    assert est.n_accepted > 500
    assert abs(est.mean[1] - 5.13) <= 3 * est.std_err[1] + 0.05 + 0.005
    assert est.mean[0] == 7.0 and est.std_err[0] < 1e-12


def test_rejection_without_observations_is_interventional_sampling():
    model = coffee_model()
    est = rejection_counterfactual(model, {}, {"p": 7}, delta=0.05, n=400_000, seed=4)
    assert est.n_accepted == 400_000
    analytic = intervene(model, {"p": 7})
    assert np.all(np.abs(est.mean - analytic.mean) <= 3 * est.std_err + 1e-12)


def test_rejection_zero_acceptance():
    with pytest.raises(ZeroAcceptanceError):
        rejection_counterfactual(coffee_model(), {"r": 4}, {"p": 7}, delta=1e-12, n=100, seed=0)


def test_rejection_seed_determinism():
    args = (coffee_model(), {"r": 4}, {"p": 7}, 0.1, 200_000, 9)
    a, b = rejection_counterfactual(*args), rejection_counterfactual(*args)
    assert a.mean.tobytes() == b.mean.tobytes() and a.n_accepted == b.n_accepted


def test_convergence_sweep_tracks_analytic_value():
    model = coffee_model()
    analytic = counterfactual(model, {"r": 4}, {"p": 7}).mean
    sweep = convergence_sweep(model, {"r": 4}, {"p": 7}, [0.2, 0.1, 0.05], n0=250_000, seed=11)
    assert [n for _, n, _ in sweep] == [250_000, 500_000, 1_000_000]
    bounds = []
    for delta, _, est in sweep:
        bound = 4 * est.std_err + 2 * delta
        assert np.all(np.abs(est.mean - analytic) <= bound)
        bounds.append(bound[1])
    assert bounds[0] > bounds[1] > bounds[2]


def test_rejection_matches_analytic_on_random_models():
    rng = np.random.default_rng(99)
    for i in range(20):
        n = 2 + i % 5
        model = random_linear_model(rng, n, cyclic=i % 2 == 1)
        prior = prior_moments(model)
        obs_var, act_var = rng.choice(model.variables, size=2, replace=False)
        sd = np.sqrt(prior.variance(obs_var))
        obs = {obs_var: prior.mean_of(obs_var) + 0.5 * sd}
        act = {act_var: float(rng.normal(scale=2.0))}
        delta = 0.02 * sd
        est = rejection_counterfactual(model, obs, act, delta=delta, n=200_000, seed=i)
        analytic = counterfactual(model, obs, act)
        assert est.n_accepted > 1000
        assert np.all(np.abs(est.mean - analytic.mean) <= 4 * est.std_err + 2 * delta), i


def test_enumerate_firing_squad_minimal_layer():
    everything = enumerate_boolean(firing_squad(), {"C": 0, "T": 1})
    layer = minimal_layer(everything)
    assert [w.as_dict() for w in layer] == [
        {"C": 0, "ab_b1": 0, "ab_b2": 0, "ab_t1": 0, "ab_t2": 1},
        {"C": 0, "ab_b1": 1, "ab_b2": 0, "ab_t1": 0, "ab_t2": 0},
    ]
    assert min(c for _, c in everything) == 1


def test_enumerate_without_observations_lists_everything():
    assert len(enumerate_boolean(firing_squad(), {})) == 32


def test_enumerate_contradiction_is_empty():
    assert enumerate_boolean(firing_squad_deterministic(), {"B": 1, "C": 0}) == []
    assert minimal_layer([]) == []


def test_enumerate_root_limit():
    with pytest.raises(TooManyRootsError):
        enumerate_boolean(random_boolean_model(np.random.default_rng(1), 4, 1), {}, max_roots=3)


def test_forcing_the_observed_value_reproduces_the_factual_world():
    # Observing p and then forcing p to that same value changes nothing, so
    # the counterfactual equals plain conditioning; the sampler confirms it.
    from counterfact.gaussian import condition

    model = coffee_model()
    obs, act = {"r": 8.5, "p": 5.5}, {"p": 5.5}
    analytic = counterfactual(model, obs, act)
    np.testing.assert_allclose(analytic.mean[:2], condition(model, obs).mean[:2], atol=1e-9)
    est = rejection_counterfactual(model, obs, act, delta=0.05, n=1_000_000, seed=21)
    assert est.n_accepted > 500
    assert np.all(np.abs(est.mean - analytic.mean) <= 4 * est.std_err + 2 * 0.05)
