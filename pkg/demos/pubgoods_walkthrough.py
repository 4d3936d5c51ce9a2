"""
Two-stage public goods game, end to end
=======================================

Two players with private costs decide twice whether to contribute.
Run with ``python3 demos/pubgoods_walkthrough.py``.
"""

import numpy as np

from spbe.game import expected_total_reward
from spbe.pubgoods import (
    PubGoodsParams,
    analytic_theta2,
    build_game,
    canonical_theta2_prescription,
    child_beliefs,
    equilibrium_for,
    format_prescription,
    from_gamma,
    solve_stage1,
    symmetric_stage1_point,
    to_belief,
)
from spbe.solver import solve_stage_fixed_point
from spbe.verify import check_sequential_rationality, simulate

params = PubGoodsParams(q=0.1, xL=0.2, xH=1.2)
game = build_game(params)

# Stage 2 on its own: the last stage is a one-shot game at a given belief.
# pi = (P(player 1 is high cost), P(player 2 is high cost))
for pi in [(0.5, 0.1), (0.5, 0.5), (0.05, 0.05)]:
    found = solve_stage_fixed_point(2, to_belief(*pi), None, game, enumerate_all=True)
    print("belief", pi)
    for sol in found:
        print("   solver   ", format_prescription(from_gamma(sol.gamma)), "seed", sol.seed_id)
    for s in analytic_theta2(pi, params):
        print("   formula  ", s.label, format_prescription(s.prescription))
    print("   selected ", *canonical_theta2_prescription(pi, params))

# Stage 1 with the selected stage-2 rule plugged in
print()
print("stage-1 fixed points:")
for sol in solve_stage1(params):
    print("  ", format_prescription(from_gamma(sol.gamma)))
print("symmetric formula point", round(symmetric_stage1_point(params), 6))

# Forward construction: player 1 never contributes, player 2 reveals their type
game, gen, profile, beliefs = equilibrium_for(params, (0.0, 1.0, 0.0, 0.0))
print()
print("beliefs after each first-stage action pair:")
for k, v in child_beliefs(params, (0.0, 1.0, 0.0, 0.0)).items():
    print("  ", k, v)

report = check_sequential_rationality(game, profile, beliefs)
print()
print(report.to_table())

exact = [expected_total_reward(game, profile, i) for i in range(2)]
mc = simulate(game, profile, 200_000, rng_seed=1)
print()
print("expected totals", np.round(exact, 6))
print("monte carlo    ", np.round(mc.means, 6), "+/-", np.round(mc.stderrs, 6))

# The symmetric point: the posterior after nobody contributes, from Bayes' rule
p = symmetric_stage1_point(params)
print()
print("symmetric stage-1 point beliefs:", child_beliefs(params, (p, p, 0.0, 0.0)))
