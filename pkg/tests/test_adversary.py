from fractions import Fraction

import numpy as np
import pytest

from config.settings import get_settings
from src.adversary import (
    AttackResult,
    CheatingStrategy,
    a_chain_table,
    attack_value,
    base_case_game,
    guesser_shape,
    honest_family,
    honest_strategy,
    independence_parameter,
    induced_ak,
    iter_responder_families,
    iter_strategies,
    masked_independence_parameter,
    mixture_value,
    optimal_attack_exact,
    proposition1_check,
    random_strategy,
    responder_shape,
    theorem1_bound,
    theorem1_holds,
    to_game_strategy,
)
from src.errors import InstanceTooLargeError, StrategyMismatchError
from src.games import classical_value_exact, strategy_value
from src.gf import FieldSpec, make_rng
from src.protocol import ProtocolParams, honest_response, prepare, recover_chain


def params_for(q: int, k: int) -> ProtocolParams:
    return ProtocolParams(field=FieldSpec.from_order(q), rounds=k, strict_paper_mode=False)


def test_responders_cannot_see_the_previous_challenge():
    assert responder_shape(5, 1) == (5,)
    assert responder_shape(5, 2) == (2, 5)
    assert responder_shape(5, 4) == (2, 5, 5, 5)
    assert guesser_shape(5, 1) == (2,)
    assert guesser_shape(5, 3) == (2, 5, 5)


def test_strategy_tables_are_validated(gf3):
    with pytest.raises(StrategyMismatchError):
        CheatingStrategy(field=gf3, responders=(np.zeros(3), np.zeros((2, 3, 3))), guesser=np.zeros((2, 3)))
    with pytest.raises(StrategyMismatchError):
        CheatingStrategy(field=gf3, responders=(np.full(3, 3),), guesser=np.zeros(2))
    with pytest.raises(StrategyMismatchError):
        CheatingStrategy(field=gf3, responders=(), guesser=np.zeros(2))


def test_strategy_tables_are_read_only(gf3, rng):
    strategy = random_strategy(gf3, 2, rng)
    with pytest.raises(ValueError):
        strategy.responders[0][0] = 1


def test_respond_reads_only_legal_coordinates(gf3, rng):
    strategy = random_strategy(gf3, 3, rng)
    # b_2 is invisible to y_3
    assert strategy.respond(3, 1, [2, 0, 1]) == strategy.respond(3, 1, [2, 1, 1]) == strategy.respond(3, 1, [2, 2, 1])
    assert strategy.respond(1, 0, [2]) == strategy.respond(1, 1, [2])


def test_worked_trace_induces_a2(gf3):
    responders = (np.zeros(3, dtype=np.int64), np.full((2, 3), 2))
    strategy = CheatingStrategy(field=gf3, responders=responders, guesser=np.zeros((2, 3)))
    assert induced_ak(strategy, 1, [1, 2]) == gf3.element(1)


@pytest.mark.parametrize("q,k", [(2, 1), (3, 2), (4, 3), (256, 3)])
def test_honest_strategy_reproduces_honest_chain(q, k, rng):
    spec = FieldSpec.from_order(q)
    params = params_for(q, k)
    for d in (0, 1):
        shared = prepare(params, rng)
        strategy = honest_strategy(spec, shared.a, d)
        responses = [honest_response(shared, d, j, shared.b[j - 1]) for j in range(1, k + 1)]
        assert induced_ak(strategy, d, shared.b) == shared.a[-1]
        assert recover_chain(shared.b, responses, d)[-1] == shared.a[-1]


def test_honest_committer_cannot_switch(gf3):
    strategy = honest_strategy(gf3, [1, 2], d=0)
    result = attack_value(strategy, params_for(3, 2))
    assert result.p0 == 1
    # a_2 seen when revealing 1 is a_2 + b_1 b_2
    assert result.p1 == Fraction(5, 9)


def test_optimal_attack_q2_k1():
    params = params_for(2, 1)
    result, witness = optimal_attack_exact(params)
    assert result.epsilon == Fraction(1, 2)
    assert result.success_rate == Fraction(3, 4)
    assert witness.responders[0].tolist() == [0, 0]
    assert witness.guesser.tolist() == [0, 0]
    assert attack_value(witness, params) == result


def test_optimal_attack_q3_k1_matches_the_base_game():
    params = params_for(3, 1)
    result, witness = optimal_attack_exact(params)
    game_value, _ = classical_value_exact(base_case_game(params))
    assert game_value == Fraction(2, 3)
    assert result.epsilon == 2 * game_value - 1 == Fraction(1, 3)
    assert strategy_value(base_case_game(params), to_game_strategy(witness)) == result.success_rate


def test_optimal_attack_q2_k2():
    params = params_for(2, 2)
    result, witness = optimal_attack_exact(params)
    assert result.epsilon <= min(1, theorem1_bound(params))
    assert theorem1_holds(result, params)
    assert attack_value(witness, params) == result
    best = max((attack_value(s, params) for s in iter_strategies(params)), key=lambda r: r.epsilon)
    assert best.epsilon == result.epsilon


def test_optimizer_refuses_large_instances():
    with pytest.raises(InstanceTooLargeError):
        optimal_attack_exact(params_for(4, 1))
    with pytest.raises(InstanceTooLargeError):
        optimal_attack_exact(params_for(2, 3))


@pytest.mark.parametrize("q,k", [(2, 1), (3, 1)])
def test_binding_bound_over_every_strategy(q, k):
    params = params_for(q, k)
    count = 0
    for strategy in iter_strategies(params, guessers="all"):
        assert theorem1_holds(attack_value(strategy, params), params)
        count += 1
    assert count == q ** (q + 2)


@pytest.mark.parametrize("q", [2, 3, 4, 5])
@pytest.mark.parametrize("k", [1, 2])
def test_binding_bound_for_many_small_random_strategies(q, k):
    params = params_for(q, k)
    rng = make_rng(1000 * q + k)
    for _ in range(1000):
        strategy = random_strategy(params.field, k, rng)
        assert theorem1_holds(attack_value(strategy, params), params)


@pytest.mark.parametrize("q,k", [(2, 3), (3, 3), (7, 2), (8, 3), (16, 2), (256, 2)])
def test_binding_bound_for_random_strategies(q, k, rng):
    params = params_for(q, k)
    for _ in range(20):
        strategy = random_strategy(params.field, k, rng)
        assert theorem1_holds(attack_value(strategy, params), params)


def test_pointwise_guesser_dominates(gf3):
    params = params_for(3, 1)
    for strategy in iter_strategies(params, guessers="optimal"):
        mine = attack_value(strategy, params)
        for guess in np.ndindex(3, 3):
            other = CheatingStrategy(field=strategy.field, responders=strategy.responders, guesser=np.array(guess))
            assert attack_value(other, params).epsilon <= mine.epsilon


def test_mixture_is_a_convex_combination(gf3, rng):
    params = params_for(3, 2)
    strategies = [random_strategy(gf3, 2, rng) for _ in range(3)]
    weights = ["1/2", "1/3", "1/6"]
    mixed = mixture_value(strategies, weights, params)
    singles = [attack_value(s, params) for s in strategies]
    assert mixed.p0 == sum(Fraction(w) * r.p0 for w, r in zip(weights, singles))
    assert theorem1_holds(mixed, params)
    with pytest.raises(ValueError):
        mixture_value(strategies, ["1/2", "1/2", "1/2"], params)


def test_attack_value_checks_the_instance(gf3, rng, monkeypatch):
    strategy = random_strategy(gf3, 2, rng)
    with pytest.raises(StrategyMismatchError):
        attack_value(strategy, params_for(3, 3))
    monkeypatch.setattr(get_settings(), "max_attack_space", 8)
    with pytest.raises(InstanceTooLargeError):
        attack_value(strategy, params_for(3, 2))


def test_attack_result_range():
    with pytest.raises(ValueError):
        AttackResult(p0=Fraction(3, 2), p1=Fraction(0))


def test_independence_parameter_examples():
    q = 5
    x, y = np.indices((q, q))
    assert independence_parameter(x) == 1
    assert independence_parameter(y) == Fraction(1, q)
    assert independence_parameter((x + y) % q) == Fraction(1, q)
    assert independence_parameter(y, y_weights=["1/2", "1/8", "1/8", "1/8", "1/8"]) == Fraction(1, 2)
    with pytest.raises(ValueError):
        independence_parameter(np.zeros((0, 3)))


@pytest.mark.parametrize("q", [2, 3])
def test_increments_stay_below_the_bound(q, rng):
    params = params_for(q, 2)
    for _ in range(100):
        report = proposition1_check(random_strategy(params.field, 2, rng), params)
        assert report.holds, report.to_frame()


@pytest.mark.parametrize("q,k,families", [(2, 1, 2), (3, 1, 3), (2, 2, 64), pytest.param(3, 2, 19683, marks=pytest.mark.slow)])
def test_independence_chain_over_every_responder_family(q, k, families):
    params = params_for(q, k)
    count = 0
    for strategy in iter_responder_families(params):
        report = proposition1_check(strategy, params)
        assert report.holds, report.to_frame()
        count += 1
    assert count == families


def test_responder_families_are_capped(monkeypatch):
    monkeypatch.setattr(get_settings(), "max_attack_space", 1000)
    with pytest.raises(InstanceTooLargeError):
        next(iter_responder_families(params_for(3, 2)))


@pytest.mark.parametrize("q,k", [(4, 3), (5, 3), (8, 4)])
def test_independence_chain_on_larger_fields(q, k, rng):
    params = params_for(q, k)
    for _ in range(10):
        assert proposition1_check(random_strategy(params.field, k, rng), params).holds


def test_optimal_witnesses_respect_the_chain():
    for q, k in [(2, 1), (2, 2), (3, 1)]:
        params = params_for(q, k)
        _, witness = optimal_attack_exact(params)
        assert proposition1_check(witness, params).holds


@pytest.mark.parametrize("q,k", [(2, 2), (3, 3), (5, 2)])
def test_report_matches_the_averaged_independence_parameter(q, k, rng):
    params = params_for(q, k)
    strategy = random_strategy(params.field, k, rng)
    report = proposition1_check(strategy, params)
    for j in range(1, k + 1):
        assert report.ip(j) == independence_parameter(a_chain_table(strategy, j))


@pytest.mark.parametrize("q", [2, 3, 5, 16])
def test_honest_first_round_independence(q, rng):
    params = params_for(q, 3)
    strategy = honest_strategy(params.field, prepare(params, rng).a, d=1)
    report = proposition1_check(strategy, params)
    assert report.ip(1) == (1 + Fraction(1, q)) / 2
    assert report.holds


@pytest.mark.parametrize("q", [2, 3, 5])
@pytest.mark.parametrize("d", [0, 1])
def test_masked_honest_committer_is_independent(q, d):
    field = FieldSpec.from_order(q)
    for j in (1, 2):
        assert masked_independence_parameter(honest_family(field, 2, d), j) == Fraction(1, q)


def test_masked_independence_needs_a_family():
    with pytest.raises(ValueError):
        masked_independence_parameter([], 1)



def test_base_case_mapping_over_every_strategy():
    params = params_for(3, 1)
    game = base_case_game(params)
    for strategy in iter_strategies(params, guessers="all"):
        assert strategy_value(game, to_game_strategy(strategy)) == attack_value(strategy, params).success_rate


def test_base_case_needs_one_round(gf3, rng):
    with pytest.raises(StrategyMismatchError):
        base_case_game(params_for(3, 2))
    with pytest.raises(StrategyMismatchError):
        to_game_strategy(random_strategy(gf3, 2, rng))


def test_random_strategies_are_seeded(gf3):
    assert random_strategy(gf3, 3, make_rng(5)) == random_strategy(gf3, 3, make_rng(5))
