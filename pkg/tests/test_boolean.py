import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from counterfact.boolean import (
    NoConsistentWorldError,
    TooManyRootsError,
    Verdict,
    World,
    abduce,
    counterfactual_bool,
    descendants,
    forward_eval,
    intervene_bool,
)
from counterfact.model import BooleanScm, Const, ModelError, UnknownVariableError, Var
from counterfact.oracle import enumerate_boolean, minimal_layer
from helpers import firing_squad, firing_squad_deterministic, random_boolean_model

ROOTS = ("C", "ab_b1", "ab_b2", "ab_t1", "ab_t2")
ITCHY_FINGER = {"C": 0, "ab_b1": 1, "ab_b2": 0, "ab_t1": 0, "ab_t2": 0}
FRIGHT = {"C": 0, "ab_b1": 0, "ab_b2": 0, "ab_t1": 0, "ab_t2": 1}


def test_forward_eval_deterministic_order_given():
    values = forward_eval(firing_squad_deterministic(), {"C": 1})
    assert values == {"C": 1, "B": 1, "T": 1}


def test_forward_eval_itchy_finger_world():
    values = forward_eval(firing_squad(), ITCHY_FINGER)
    assert values["B"] == 1 and values["T"] == 1


def test_forward_eval_all_roots_zero():
    values = forward_eval(firing_squad(), dict.fromkeys(ROOTS, 0))
    assert values["B"] == 0 and values["T"] == 0


def test_forward_eval_requires_total_world():
    with pytest.raises(ModelError):
        forward_eval(firing_squad(), {"C": 1})


def test_abduce_release_signal_and_death():
    result = abduce(firing_squad(), {"C": 0, "T": 1})
    assert result.abnormality_count == 1
    assert [w.as_dict() for w in result.worlds] == [FRIGHT, ITCHY_FINGER]
    assert result.total_consistent == len(enumerate_boolean(firing_squad(), {"C": 0, "T": 1}))


def test_abduce_deterministic_infers_order_to_fire():
    result = abduce(firing_squad_deterministic(), {"B": 1, "T": 1})
    assert [w.as_dict() for w in result.worlds] == [{"C": 1}]
    assert result.abnormality_count == 0


def test_abduce_no_observations():
    result = abduce(firing_squad(), {})
    assert result.abnormality_count == 0
    assert [w.as_dict()["C"] for w in result.worlds] == [0, 1]
    assert all(sum(w.values[1:]) == 0 for w in result.worlds)
    assert result.total_consistent == 2**5


def test_abduce_contradiction():
    with pytest.raises(NoConsistentWorldError):
        abduce(firing_squad_deterministic(), {"B": 1, "C": 0})


def test_abduce_rejects_bad_values_and_names():
    with pytest.raises(ModelError):
        abduce(firing_squad(), {"C": 2})
    with pytest.raises(UnknownVariableError):
        abduce(firing_squad(), {"X": 1})


def test_abduce_root_limit():
    model = random_boolean_model(np.random.default_rng(0), 6, 2)
    with pytest.raises(TooManyRootsError):
        abduce(model, {}, max_roots=5)


def test_intervene_deterministic_gives_cut_model():
    cut = intervene_bool(firing_squad_deterministic(), {"B": 0})
    assert cut.equations["B"] == Const(0)
    assert cut.equations["T"] == firing_squad_deterministic().equations["T"]
    assert cut.roots == ("C",)


def test_intervene_with_exceptions_gives_cut_model():
    model = firing_squad()
    cut = intervene_bool(model, {"B": 0})
    assert cut.equations["B"] == Const(0)
    assert cut.equations["T"] == model.equations["T"]
    assert cut.roots == model.roots


def test_intervene_on_root_removes_it():
    cut = intervene_bool(firing_squad(), {"ab_t2": 0})
    assert "ab_t2" not in cut.roots and "ab_t2" not in cut.abnormals
    assert cut.equations["ab_t2"] == Const(0)


def test_intervene_empty_is_identity():
    model = firing_squad()
    assert intervene_bool(model, {}) == model


def test_counterfactual_deterministic_traitor_still_dies():
    verdict = counterfactual_bool(firing_squad_deterministic(), {"B": 1, "T": 1}, {"B": 0}, {"T": 0})
    assert verdict.aggregate == {"T": Verdict.ALL_FALSE}
    assert [(w.as_dict(), o) for w, o in verdict.per_world] == [({"C": 1}, {"T": 1})]


def test_counterfactual_with_exceptions_is_ambiguous():
    verdict = counterfactual_bool(firing_squad(), {"C": 0, "T": 1}, {"B": 0}, {"T": 0})
    assert verdict.aggregate == {"T": Verdict.AMBIGUOUS}
    outcomes = {tuple(w.values): o["T"] for w, o in verdict.per_world}
    assert outcomes[tuple(ITCHY_FINGER[r] for r in ROOTS)] == 0
    assert outcomes[tuple(FRIGHT[r] for r in ROOTS)] == 1


def test_non_counterfactual_antecedent_reproduces_observations():
    verdict = counterfactual_bool(
        firing_squad_deterministic(), {"B": 1, "T": 1}, {"B": 1}, {"B": 1, "T": 1}
    )
    assert verdict.aggregate == {"B": Verdict.ALL_TRUE, "T": Verdict.ALL_TRUE}


def test_ranking_by_declared_weights():
    base = firing_squad()
    weighted = BooleanScm(base.variables, base.roots, base.abnormals, base.equations, {"ab_b1": 3.0})
    result = abduce(weighted, {"C": 0, "T": 1})
    ranked = result.ranked(weighted)
    assert ranked[0][0].as_dict() == ITCHY_FINGER
    assert ranked[0][1] == 3.0 and ranked[1][1] == 1.0
    # canonical list is unaffected by weights
    assert result.worlds == abduce(base, {"C": 0, "T": 1}).worlds


def test_world_ordering_is_lexicographic():
    a = World((0, 1), ("x", "y"))
    b = World((1, 0), ("x", "y"))
    assert sorted([b, a]) == [a, b]


def _observed_from_world(rng, model):
    world = {r: int(rng.integers(2)) for r in model.roots}
    values = forward_eval(model, world)
    names = [v for v in model.variables if rng.random() < 0.4]
    return {v: values[v] for v in names}


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_roots=st.integers(0, 8), n_inner=st.integers(1, 6))
def test_abduction_sound_minimal_and_canonical(seed, n_roots, n_inner):
    rng = np.random.default_rng(seed)
    model = random_boolean_model(rng, n_roots, n_inner)
    obs = _observed_from_world(rng, model)
    result = abduce(model, obs)
    for w in result.worlds:
        values = forward_eval(model, w)
        assert all(values[k] == v for k, v in obs.items())
        assert w.abnormality_count(model.abnormals) == result.abnormality_count
    everything = enumerate_boolean(model, obs)
    assert list(result.worlds) == minimal_layer(everything)
    assert result.total_consistent == len(everything)
    assert list(result.worlds) == sorted(result.worlds)
    assert abduce(model, obs).worlds == result.worlds


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_roots=st.integers(1, 7), n_inner=st.integers(1, 6))
def test_intervention_locality(seed, n_roots, n_inner):
    rng = np.random.default_rng(seed)
    model = random_boolean_model(rng, n_roots, n_inner)
    obs = _observed_from_world(rng, model)
    target = model.variables[int(rng.integers(len(model.variables)))]
    antecedent = {target: int(rng.integers(2))}
    cut = intervene_bool(model, antecedent)
    downstream = descendants(cut, set(antecedent))
    everything = [v for v in model.variables]
    verdict = counterfactual_bool(model, obs, antecedent, dict.fromkeys(everything, 1))
    for world, outcome in verdict.per_world:
        factual = forward_eval(model, world)
        for v in everything:
            if v not in downstream:
                assert outcome[v] == factual[v]
        assert outcome[target] == antecedent[target]


def test_descendants():
    model = firing_squad_deterministic()
    assert descendants(model, {"B"}) == {"B", "T"}
    assert descendants(model, {"C"}) == {"C", "B", "T"}


def test_var_and_const_evaluate_consistently():
    env = {"a": 1}
    assert Var("a").evaluate(env) == 1
    assert Const(0).evaluate(env) == 0
