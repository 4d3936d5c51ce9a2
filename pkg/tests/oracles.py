"""Brute-force reference computations for the test-suite.

These are written from the model definitions with plain loops and share no
code paths with the library beyond the game container itself.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def joint_histories(game, strategy, t):
    """``{(x_{1:t}, a_{1:t}): prob}`` by depth-first recursion."""
    n = game.num_players
    out = {}

    def visit(s, prob, xs, acts):
        dists = [np.asarray(strategy(i, s, acts, tuple(x[i] for x in xs))) for i in range(n)]
        for a in itertools.product(*(range(k) for k in game.action_sizes)):
            pa = prob
            for i in range(n):
                pa *= float(dists[i][a[i]])
            if pa == 0.0:
                continue
            acts2 = acts + (a,)
            if s == t:
                out[(xs, acts2)] = out.get((xs, acts2), 0.0) + pa
                continue
            for y in itertools.product(*(range(k) for k in game.type_sizes)):
                py = pa
                for i in range(n):
                    py *= float(game.kernels[s - 1][i][(xs[-1][i],) + a + (y[i],)])
                if py > 0.0:
                    visit(s + 1, py, xs + (y,), acts2)

    for x in itertools.product(*(range(k) for k in game.type_sizes)):
        p = 1.0
        for i in range(n):
            p *= float(game.priors[i][x[i]])
        if p > 0.0:
            visit(1, p, (x,), ())
    return out


def outcome_distribution(game, strategy, t):
    """``{(x_t, a_t): prob}`` marginalized from :func:`joint_histories`."""
    out = {}
    for (xs, acts), p in joint_histories(game, strategy, t).items():
        key = (xs[-1], acts[-1])
        out[key] = out.get(key, 0.0) + p
    return out


def total_variation(p, q):
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def bayes_marginal(pi, gamma, action, kernel_rows):
    """Posterior of one player's next type: loops over current types.

    ``kernel_rows[x]`` is the next-type distribution from type ``x`` under
    the realized joint action.
    """
    nx = len(pi)
    den = sum(pi[x] * gamma[x][action] for x in range(nx))
    weights = [pi[x] * gamma[x][action] / den if den > 1e-12 else pi[x] for x in range(nx)]
    return np.array([sum(weights[x] * kernel_rows[x][y] for x in range(nx)) for y in range(nx)])


def stage_objective(game, t, belief, profile, continuation, player, own_type, row):
    """Nested-sum evaluation of one row's expected reward-to-go."""
    n = game.num_players
    others = [j for j in range(n) if j != player]
    total = 0.0
    for xo in itertools.product(*(range(game.type_sizes[j]) for j in others)):
        px = 1.0
        for j, xj in zip(others, xo):
            px *= belief[j][xj]
        x = list(xo)
        x.insert(player, own_type)
        x = tuple(x)
        for a in itertools.product(*(range(k) for k in game.action_sizes)):
            w = px * row[a[player]]
            for j, xj in zip(others, xo):
                w *= profile[j][xj][a[j]]
            if w == 0.0:
                continue
            value = float(game.rewards[player][x + a])
            if t < game.horizon:
                child = []
                for j in range(n):
                    krows = [game.kernels[t - 1][j][(xx,) + a] for xx in range(game.type_sizes[j])]
                    child.append(bayes_marginal(belief[j], profile[j], a[j], krows))
                vnext = continuation(child)[player]
                krow = game.kernels[t - 1][player][(own_type,) + a]
                value += sum(krow[y] * vnext[y] for y in range(game.type_sizes[player]))
            total += w * value
    return total


def posterior_given_public(game, strategy, t):
    """``{a_{1:t-1}: P(x_t | a_{1:t-1})}`` as dense joint arrays, for ``t >= 2``."""
    out = {}
    for (xs, acts), p in joint_histories(game, strategy, t - 1).items():
        a = acts[-1]
        arr = out.setdefault(acts, np.zeros(game.type_sizes))
        for y in itertools.product(*(range(k) for k in game.type_sizes)):
            py = p
            for i in range(game.num_players):
                py *= float(game.kernels[t - 2][i][(xs[-1][i],) + a + (y[i],)])
            arr[y] += py
    return {h: arr / arr.sum() for h, arr in out.items()}


def exhaustive_best_deviation(game, profile, player):
    """Best root value per own type over every deterministic deviation.

    Only for two-stage games. A deviation maps the root type to a stage-1
    action and ``(a_1, x^i_1, x^i_2)`` to a stage-2 action, so it may use the
    whole private history. Each deviation's value is accumulated explicitly
    (vectorized over the stage-2 rules).
    """
    assert game.horizon == 2
    n = game.num_players
    nx, na = game.type_sizes[player], game.action_sizes[player]
    joint_as = list(itertools.product(*(range(k) for k in game.action_sizes)))
    infosets = [(a, x1, x2) for a in joint_as for x1 in range(nx) for x2 in range(nx)]
    index = {s: k for k, s in enumerate(infosets)}
    root = profile.prescriptions[()]
    best = np.full(nx, -np.inf)
    for rule1 in itertools.product(range(na), repeat=nx):
        # contribution[x1][k][b]: weight of playing b at stage-2 infoset k
        base = np.zeros(nx)
        contrib = np.zeros((nx, len(infosets), na))
        mass = np.zeros(nx)
        for x in itertools.product(*(range(k) for k in game.type_sizes)):
            px = math.prod(float(game.priors[j][x[j]]) for j in range(n) if j != player)
            x1 = x[player]
            mass[x1] += px
            for a in joint_as:
                if a[player] != rule1[x1]:
                    continue
                w = px
                for j in range(n):
                    if j != player:
                        w *= float(root[j][x[j], a[j]])
                if w == 0.0:
                    continue
                base[x1] += w * float(game.rewards[player][x + a])
                child = profile.prescriptions[(a,)]
                for y in itertools.product(*(range(k) for k in game.type_sizes)):
                    wy = w * math.prod(float(game.kernels[0][j][(x[j],) + a + (y[j],)]) for j in range(n))
                    if wy == 0.0:
                        continue
                    for b in joint_as:
                        wb = wy
                        for j in range(n):
                            if j != player:
                                wb *= float(child[j][y[j], b[j]])
                        if wb == 0.0:
                            continue
                        k = index[(a, x1, y[player])]
                        contrib[x1, k, b[player]] += wb * float(game.rewards[player][y + b])
        m = len(infosets)
        for x1 in range(nx):
            # every stage-2 rule, encoded in base ``na`` over the infosets
            codes = np.arange(na**m)
            vals = np.full(codes.shape, base[x1])
            for k in range(m):
                digit = (codes // na**k) % na
                vals += contrib[x1, k, digit]
            best[x1] = max(best[x1], vals.max() / mass[x1])
    return best
