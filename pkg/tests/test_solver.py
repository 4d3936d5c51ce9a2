import itertools

import numpy as np
import pytest

import oracles
from conftest import random_game, random_gamma
from spbe.belief import BeliefVector
from spbe.game import GameSpec, validate_game
from spbe.pubgoods import (
    PubGoodsParams,
    build_game,
    from_gamma,
    to_belief,
    to_gamma,
)
from spbe.solver import (
    CertificationError,
    EquilibriumGenerator,
    FixedPointConfig,
    MissingContinuation,
    NoFixedPointFound,
    best_response_row,
    forward_construct,
    solve_stage_fixed_point,
    solve_value,
    stage_objective,
    tree_size,
)


@pytest.fixture(scope="module")
def pg():
    return build_game(PubGoodsParams())


def test_stage_two_objective_matches_closed_form(pg):
    rng = np.random.default_rng(0)
    xL = 0.2
    for _ in range(20):
        pi1, pi2 = rng.random(2)
        p = rng.random(4)
        row = np.array([1 - p[0], p[0]])
        got = stage_objective(0, 0, row, to_gamma(p), to_belief(pi1, pi2), None, pg, 2)
        want = (1 - p[0]) * ((1 - pi2) * p[1] + pi2 * p[3]) + p[0] * (1 - xL)
        assert got == pytest.approx(want, abs=1e-14)


def test_zero_rewards_give_zero_objective():
    rng = np.random.default_rng(1)
    game = random_game(rng)
    game = validate_game(
        GameSpec(2, 2, [2, 2], [2, 2], game.priors, [np.zeros((2, 2, 2, 2))] * 2, [list(game.kernels[0])])
    )
    belief = BeliefVector.from_priors(game.priors)
    zero = lambda b: (np.zeros(2), np.zeros(2))  # noqa: E731
    for row in (np.array([1.0, 0.0]), np.array([0.3, 0.7])):
        assert stage_objective(1, 1, row, random_gamma(rng, game), belief, zero, game, 1) == 0.0


@pytest.mark.parametrize("seed", range(8))
def test_stage_objective_matches_nested_sum_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    game = random_game(rng, players=n, types=2, actions=[2, 3, 2][:n])
    belief = BeliefVector(tuple(rng.dirichlet(np.ones(x)) for x in game.type_sizes))
    gamma = random_gamma(rng, game, sparse=0.4)

    # an arbitrary smooth continuation of the child belief
    weights = [rng.normal(size=(x, x)) for x in game.type_sizes]

    def cont(b):
        return tuple(w @ np.asarray(b[i]) for i, w in enumerate(weights))

    for i in range(game.num_players):
        for x in range(game.type_sizes[i]):
            row = rng.dirichlet(np.ones(game.action_sizes[i]))
            for t in (1, 2):
                got = stage_objective(i, x, row, gamma, belief, cont, game, t)
                want = oracles.stage_objective(game, t, belief, gamma, cont, i, x, row)
                assert got == pytest.approx(want, abs=1e-12)


def test_missing_continuation_before_last_stage():
    game = random_game(np.random.default_rng(0))
    belief = BeliefVector.from_priors(game.priors)
    with pytest.raises(MissingContinuation):
        stage_objective(0, 0, np.array([1.0, 0.0]), random_gamma(np.random.default_rng(0), game), belief, None, game, 1)


def test_high_type_never_contributes(pg):
    rng = np.random.default_rng(2)
    for _ in range(10):
        br = best_response_row(0, 1, to_gamma(rng.random(4)), to_belief(*rng.random(2)), None, pg, 2)
        np.testing.assert_array_equal(br, [1.0, 0.0])


def test_ties_give_uniform_row():
    spec = GameSpec(1, 1, [1], [3], [[1.0]], [np.zeros((1, 3))])
    game = validate_game(spec)
    br = best_response_row(0, 0, (np.array([[1.0, 0.0, 0.0]]),), BeliefVector.from_priors(game.priors), None, game, 1)
    np.testing.assert_allclose(br, [1 / 3] * 3)


def test_low_type_contributes_against_likely_free_rider(pg):
    # pi2 = 0.5 > xL, opponent low contributes: free riding yields 0.5 < 0.8
    br = best_response_row(0, 0, to_gamma((0.0, 1.0, 0.0, 0.0)), to_belief(0.3, 0.5), None, pg, 2)
    np.testing.assert_array_equal(br, [0.0, 1.0])


def test_stage_two_region_one(pg):
    sol = solve_stage_fixed_point(2, to_belief(0.5, 0.1), None, pg)
    assert from_gamma(sol.gamma) == (0.0, 1.0, 0.0, 0.0)
    np.testing.assert_allclose(sol.values[0], [0.9, 0.9], atol=1e-12)
    np.testing.assert_allclose(sol.values[1], [0.8, 0.0], atol=1e-12)
    assert sol.residual <= 1e-9


def test_interior_seed_lands_on_mixed_solution(pg):
    start = to_gamma((0.8, 0.8, 0.0, 0.0))
    cfg = FixedPointConfig(seed_list=(start,))
    sol = solve_stage_fixed_point(2, to_belief(0.05, 0.05), None, pg, cfg)
    np.testing.assert_allclose(from_gamma(sol.gamma), (0.8 / 0.95, 0.8 / 0.95, 0, 0), atol=1e-9)
    for v in sol.values:
        np.testing.assert_allclose(v, [0.8, 0.8], atol=1e-9)


def test_single_player_needs_at_most_two_iterations():
    rng = np.random.default_rng(4)
    spec = GameSpec(1, 1, [3], [4], [rng.dirichlet(np.ones(3))], [rng.normal(size=(3, 4))])
    game = validate_game(spec)
    cfg = FixedPointConfig(damping=1.0)
    sol = solve_stage_fixed_point(1, BeliefVector.from_priors(game.priors), None, game, cfg)
    assert sol.iterations <= 2
    np.testing.assert_array_equal(sol.gamma[0].argmax(axis=1), spec.rewards[0].argmax(axis=1))


def _matching_pennies():
    r = np.zeros((1, 1, 2, 2))
    r[0, 0] = [[1, -1], [-1, 1]]
    return validate_game(GameSpec(2, 1, [1, 1], [2, 2], [[1.0], [1.0]], [r, -r]))


def test_cycling_run_reports_every_seed():
    game = _matching_pennies()
    cfg = FixedPointConfig(damping=1.0, polish=False, max_iterations=200, support_enumeration_limit=0)
    with pytest.raises(NoFixedPointFound) as info:
        solve_stage_fixed_point(1, BeliefVector.from_priors(game.priors), None, game, cfg, enumerate_all=True)
    diags = info.value.diagnostics
    assert [d["seed"] for d in diags] == [f"pure-{k}" for k in range(4)]
    assert all(d["residual"] > 0.5 for d in diags)


def test_damping_and_polish_find_matching_pennies_mixture():
    game = _matching_pennies()
    sol = solve_stage_fixed_point(1, BeliefVector.from_priors(game.priors), None, game)
    np.testing.assert_allclose(sol.gamma[0], [[0.5, 0.5]], atol=1e-12)
    np.testing.assert_allclose(sol.gamma[1], [[0.5, 0.5]], atol=1e-12)


def test_value_past_horizon_is_zero(pg):
    gen = EquilibriumGenerator(pg)
    for v in solve_value(3, to_belief(0.4, 0.7), pg, gen):
        np.testing.assert_array_equal(v, [0.0, 0.0])


def test_stage_two_region_three_values(pg):
    gen = EquilibriumGenerator(pg)
    v = solve_value(2, to_belief(0.5, 0.5), pg, gen)
    np.testing.assert_allclose(v[0], [0.8, 0.5], atol=1e-12)


def test_memo_returns_identical_object(pg):
    gen = EquilibriumGenerator(pg)
    b = to_belief(0.5, 0.5)
    first = gen.solve(2, b)
    again = gen.solve(2, to_belief(0.5 + 1e-11, 0.5))
    assert first is again
    assert gen.solve_count == 1


def test_uncertifiable_rule_is_rejected(pg):
    gen = EquilibriumGenerator(pg, fixed_stages={2: lambda b: to_gamma((0.0, 0.0, 1.0, 1.0))})
    with pytest.raises(CertificationError):
        gen.solve(2, to_belief(0.5, 0.5))


def test_forward_construction_of_asymmetric_equilibrium(asymmetric_equilibrium, params):
    eq = asymmetric_equilibrium
    root = eq.profile.prescriptions[()]
    assert from_gamma(root) == (0.0, 1.0, 0.0, 0.0)
    q = params.q
    want = {(0, 0): (q, 1.0), (0, 1): (q, 0.0), (1, 0): (q, 1.0), (1, 1): (q, 0.0)}
    for a, (pi1, pi2) in want.items():
        b = eq.beliefs[(a,)]
        assert b[0][1] == pytest.approx(pi1, abs=1e-15)
        assert b[1][1] == pytest.approx(pi2, abs=1e-15)


def test_single_stage_tree_is_root_only():
    game = random_game(np.random.default_rng(0), horizon=1)
    gen = EquilibriumGenerator(game)
    profile, beliefs = forward_construct(game, gen)
    assert list(profile.prescriptions) == [()]
    assert profile.prescriptions[()] is gen.solve(1, BeliefVector.from_priors(game.priors)).gamma


@pytest.mark.parametrize("actions,horizon", [([2, 2], 2), ([2, 3], 2), ([2, 2], 3)])
def test_tree_node_count(actions, horizon):
    game = random_game(np.random.default_rng(7), actions=actions, horizon=horizon)
    profile, beliefs = forward_construct(game, EquilibriumGenerator(game))
    m = int(np.prod(actions))
    expected = sum(m**t for t in range(horizon))
    assert tree_size(game) == expected
    assert len(profile.prescriptions) + len(profile.unsolved) == expected


def test_forward_children_are_updates_of_parents(random_solved):
    from spbe.belief import update_vector

    solved, _, _ = random_solved
    for s in solved[:5]:
        for h, gamma in s.profile.prescriptions.items():
            if len(h) + 1 == s.game.horizon:
                continue
            for a in s.game.joint_actions:
                want = update_vector(s.beliefs[h], gamma, a, s.game.kernels[len(h)])
                assert s.beliefs[h + (a,)] == want


def test_solutions_are_deterministic():
    rng = np.random.default_rng(9)
    game = random_game(rng)
    runs = []
    for _ in range(2):
        gen = EquilibriumGenerator(game)
        profile, _ = forward_construct(game, gen)
        runs.append(profile)
    for h in runs[0].prescriptions:
        for a, b in zip(runs[0].prescriptions[h], runs[1].prescriptions[h]):
            assert a.tobytes() == b.tobytes()
        for a, b in zip(runs[0].values[h], runs[1].values[h]):
            assert a.tobytes() == b.tobytes()


def test_threaded_construction_matches_serial():
    game = random_game(np.random.default_rng(12), horizon=3)
    serial, _ = forward_construct(game, EquilibriumGenerator(game))
    threaded, _ = forward_construct(game, EquilibriumGenerator(game), workers=4)
    assert serial.nodes() == threaded.nodes()
    for h in serial.prescriptions:
        for a, b in zip(serial.prescriptions[h], threaded.prescriptions[h]):
            assert a.tobytes() == b.tobytes()


def test_stored_solutions_are_epsilon_fixed_points(random_solved):
    solved, _, _ = random_solved
    for s in solved:
        gen = s.generator
        for (t, key), sol in gen.memo.items():
            assert sol.gap <= gen.config.argmax_tolerance
            assert sol.residual <= gen.config.fixed_point_tolerance
            assert all(np.isfinite(v).all() for v in sol.values)


def test_random_seeds_used_for_large_profiles():
    game = random_game(np.random.default_rng(0), types=4, actions=3, horizon=1)
    from spbe.solver import default_seeds

    seeds = default_seeds(game, FixedPointConfig())
    assert [s for s, _ in seeds[:2]] == ["uniform", "random-0"]
    assert len(seeds) == 33
    again = default_seeds(game, FixedPointConfig())
    for (_, a), (_, b) in zip(seeds, again):
        for x, y in zip(a, b):
            assert x.tobytes() == y.tobytes()


@pytest.mark.parametrize(
    "kwargs", [{"damping": 0.0}, {"damping": 1.5}, {"argmax_tolerance": 0.0}, {"max_iterations": 0}]
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        FixedPointConfig(**kwargs)


def test_config_round_trips_through_dict():
    cfg = FixedPointConfig(seed_list=(to_gamma((0.5, 0.5, 0, 0)),), damping=0.25)
    again = FixedPointConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()


def test_pure_profile_order(pg):
    from spbe.solver import pure_profiles

    profiles = list(itertools.islice(pure_profiles(pg), 3))
    assert from_gamma(profiles[0]) == (0, 0, 0, 0)
    # the last row (player 2, high type) varies fastest
    assert from_gamma(profiles[1]) == (0, 0, 0, 1)
