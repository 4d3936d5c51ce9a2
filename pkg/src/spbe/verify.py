"""Independent certification of constructed equilibria.

Nothing here calls into the fixed-point solver. Best responses are
computed by dynamic programming over ``(public history, own current type)``,
which is a controlled Markov state for a deviating player when the others
follow their type-Markov prescriptions. Consistency and structural checks
use exact enumeration over full histories.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .belief import BeliefVector
from .game import (
    DEFAULT_ENUMERATION_CAP,
    GeneralStrategy,
    PublicHistory,
    ValidatedGame,
    estimate_history_count,
    iter_histories,
)
from .solver import BeliefSystem, StrategyProfile

DEFAULT_TOLERANCE = 1e-8


class MissingNode(KeyError):
    pass


def _node(profile: StrategyProfile, beliefs: BeliefSystem, h: PublicHistory):
    if h not in profile.prescriptions:
        raise MissingNode(f"no prescription at history {h}")
    if h not in beliefs.beliefs:
        raise MissingNode(f"no belief at history {h}")
    return profile.prescriptions[h], beliefs.beliefs[h]


def _opponent_weights(
    game: ValidatedGame, gamma, belief: BeliefVector, player: int
) -> list[tuple[float, tuple[int, ...], tuple[int, ...]]]:
    """``(weight, x^{-i}, a^{-i})`` with weight ``mu^{-i}(x^{-i}) beta^{-i}(a^{-i}|x^{-i})``."""
    others = [j for j in range(game.num_players) if j != player]
    out = []
    for xs in itertools.product(*(range(game.type_sizes[j]) for j in others)):
        px = math.prod(float(belief[j][x]) for j, x in zip(others, xs))
        if px == 0.0:
            continue
        for acts in itertools.product(*(range(game.action_sizes[j]) for j in others)):
            w = px * math.prod(float(gamma[j][x, a]) for j, x, a in zip(others, xs, acts))
            if w > 0.0:
                out.append((w, xs, acts))
    return out


def _splice(player: int, own: int, rest: Sequence[int]) -> tuple[int, ...]:
    lst = list(rest)
    lst.insert(player, own)
    return tuple(lst)


def _backward(
    game: ValidatedGame,
    profile: StrategyProfile,
    beliefs: BeliefSystem,
    player: int,
    maximize: bool,
) -> dict[tuple[PublicHistory, int], float]:
    values: dict[tuple[PublicHistory, int], float] = {}
    nodes = sorted(profile.prescriptions, key=len, reverse=True)
    for h in nodes:
        t = len(h) + 1
        gamma, belief = _node(profile, beliefs, h)
        opp = _opponent_weights(game, gamma, belief, player)
        for x in range(game.type_sizes[player]):
            q = np.zeros(game.action_sizes[player])
            for ai in range(game.action_sizes[player]):
                total = 0.0
                for w, xs, acts in opp:
                    joint_x = _splice(player, x, xs)
                    joint_a = _splice(player, ai, acts)
                    r = float(game.rewards[player][joint_x + joint_a])
                    if t < game.horizon:
                        child = h + (joint_a,)
                        row = game.kernel(t, player)[(x,) + joint_a]
                        for y in range(game.type_sizes[player]):
                            if row[y] > 0.0:
                                key = (child, y)
                                if key not in values:
                                    raise MissingNode(f"no value at history {child}")
                                r += float(row[y]) * values[key]
                    total += w * r
                q[ai] = total
            values[(h, x)] = float(q.max()) if maximize else float(gamma[player][x] @ q)
    return values


def best_response_values(
    game: ValidatedGame, profile: StrategyProfile, beliefs: BeliefSystem, player: int
) -> dict[tuple[PublicHistory, int], float]:
    """Optimal reward-to-go of ``player`` at every ``(node, own type)``.

    Opponents follow ``profile`` and their types are distributed by the
    stored beliefs. Because ``(node, own type)`` is a controlled Markov
    state for the deviator, this is the supremum over all deviations.
    """
    return _backward(game, profile, beliefs, player, maximize=True)


def policy_values(
    game: ValidatedGame, profile: StrategyProfile, beliefs: BeliefSystem, player: int
) -> dict[tuple[PublicHistory, int], float]:
    """Reward-to-go of ``player`` when everybody follows ``profile``."""
    return _backward(game, profile, beliefs, player, maximize=False)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass
class GapEntry:
    player: int
    history: PublicHistory
    own_type: int
    equilibrium_value: float
    best_response_value: float

    @property
    def gap(self) -> float:
        return self.best_response_value - self.equilibrium_value


@dataclass
class BeliefConsistency:
    max_error: float
    worst_node: PublicHistory | None
    node_errors: dict[PublicHistory, float] = field(default_factory=dict)

    def passed(self, tol: float) -> bool:
        return self.max_error <= tol


@dataclass
class VerificationReport:
    entries: list[GapEntry]
    tolerance: float
    nodes_expected: int
    nodes_checked: int
    belief_consistency_max_error: float = float("nan")
    belief_worst_node: PublicHistory | None = None
    unsolved: dict[PublicHistory, str] = field(default_factory=dict)

    @property
    def max_gap(self) -> float:
        return max((e.gap for e in self.entries), default=0.0)

    @property
    def covered(self) -> bool:
        return self.nodes_checked == self.nodes_expected and not self.unsolved

    @property
    def passed(self) -> bool:
        return self.max_gap <= self.tolerance and self.covered

    def violations(self) -> list[GapEntry]:
        return [e for e in self.entries if e.gap > self.tolerance]

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "tolerance": self.tolerance,
            "max_gap": self.max_gap,
            "nodes_expected": self.nodes_expected,
            "nodes_checked": self.nodes_checked,
            "belief_consistency_max_error": self.belief_consistency_max_error,
            "belief_worst_node": None
            if self.belief_worst_node is None
            else [list(a) for a in self.belief_worst_node],
            "unsolved": {str(list(map(list, h))): msg for h, msg in self.unsolved.items()},
            "entries": [
                {
                    "player": e.player,
                    "history": [list(a) for a in e.history],
                    "type": e.own_type,
                    "equilibrium_value": e.equilibrium_value,
                    "best_response_value": e.best_response_value,
                    "gap": e.gap,
                }
                for e in self.entries
            ],
        }

    def to_table(self, only_violations: bool = False) -> str:
        rows = self.violations() if only_violations else self.entries
        head = f"{'player':>6} {'type':>4} {'history':<24} {'eq value':>14} {'br value':>14} {'gap':>11}"
        lines = [head, "-" * len(head)]
        for e in rows:
            hist = "".join(f"({','.join(map(str, a))})" for a in e.history) or "root"
            lines.append(
                f"{e.player:>6} {e.own_type:>4} {hist:<24} {e.equilibrium_value:>14.9f} "
                f"{e.best_response_value:>14.9f} {e.gap:>11.3e}"
            )
        lines.append(
            f"max gap {self.max_gap:.3e} (tol {self.tolerance:g}); "
            f"nodes {self.nodes_checked}/{self.nodes_expected}; "
            f"belief error {self.belief_consistency_max_error:.3e}; "
            f"{'PASS' if self.passed else 'FAIL'}"
        )
        return "\n".join(lines)


def _expected_nodes(game: ValidatedGame) -> int:
    m = game.num_joint_actions
    return sum(m**t for t in range(game.horizon))


def check_sequential_rationality(
    game: ValidatedGame,
    profile: StrategyProfile,
    beliefs: BeliefSystem,
    tol: float = DEFAULT_TOLERANCE,
    check_beliefs: bool = True,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> VerificationReport:
    """Compare equilibrium and best-response values at every information set.

    An information set is ``(player, public history, current own type)``;
    earlier own types do not matter for type-Markov opponents. Belief
    consistency is added to the report when enumeration fits under ``cap``.
    """
    entries = []
    for i in range(game.num_players):
        br = best_response_values(game, profile, beliefs, i)
        eq = policy_values(game, profile, beliefs, i)
        for (h, x), v in sorted(eq.items(), key=lambda kv: (len(kv[0][0]), kv[0])):
            entries.append(GapEntry(i, h, x, v, br[(h, x)]))
    report = VerificationReport(
        entries=entries,
        tolerance=tol,
        nodes_expected=_expected_nodes(game),
        nodes_checked=len(profile.prescriptions),
        unsolved=dict(profile.unsolved),
    )
    if check_beliefs:
        if estimate_history_count(game, game.horizon) <= cap:
            bc = check_belief_consistency(game, profile, beliefs, cap=cap)
            report.belief_consistency_max_error = bc.max_error
            report.belief_worst_node = bc.worst_node
    return report


# --------------------------------------------------------------------------
# enumeration-based checks
# --------------------------------------------------------------------------


def profile_strategy(profile: StrategyProfile) -> GeneralStrategy:
    return profile


def check_belief_consistency(
    game: ValidatedGame,
    profile: StrategyProfile,
    beliefs: BeliefSystem,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> BeliefConsistency:
    """Brute-force ``P(x_t | a_{1:t-1})`` against the product of stored marginals.

    Only positive-probability nodes are compared. Errors are max absolute
    differences over joint types; the worst node is reported.
    """
    node_errors: dict[PublicHistory, float] = {}
    root = np.asarray(beliefs[()].joint())
    prior = np.ones(())
    for p in game.priors:
        prior = np.multiply.outer(prior, p)
    node_errors[()] = float(np.abs(root - prior).max())
    for t in range(2, game.horizon + 1):
        joint: dict[PublicHistory, np.ndarray] = {}
        # histories through t-1, then one kernel step to x_t
        for p, xh, ah in iter_histories(game, profile, t - 1, cap):
            arr = joint.setdefault(ah, np.zeros(game.type_sizes))
            x = xh[-1]
            a = ah[-1]
            rows = [game.kernel(t - 1, i)[(x[i],) + a] for i in range(game.num_players)]
            step = np.ones(())
            for r in rows:
                step = np.multiply.outer(step, r)
            arr += p * step
        for h, arr in joint.items():
            post = arr / arr.sum()
            if h not in beliefs.beliefs:
                node_errors[h] = math.inf
                continue
            node_errors[h] = float(np.abs(post - beliefs[h].joint()).max())
    worst = max(node_errors, key=node_errors.get)
    return BeliefConsistency(node_errors[worst], worst, node_errors)


@dataclass
class TypeMarkovStrategy:
    """``s^i_t(a | a_{1:t-1}, x^i_t)`` stored per ``(t, public history, type)``."""

    player: int
    num_actions: int
    table: dict[tuple[int, PublicHistory, int], np.ndarray]

    def __call__(self, player: int, t: int, public: PublicHistory, private: tuple[int, ...]) -> np.ndarray:
        key = (t, tuple(public), private[-1])
        row = self.table.get(key)
        if row is None:
            return np.full(self.num_actions, 1.0 / self.num_actions)
        return row


def project_to_s(
    game: ValidatedGame,
    g: GeneralStrategy,
    player: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> TypeMarkovStrategy:
    """Collapse player ``player``'s private history to its current type.

    ``s(a | h, x_t) = P^g(a^i_t = a | h, x^i_t)``; arguments of probability
    zero get the uniform distribution.
    """
    num: dict[tuple[int, PublicHistory, int], np.ndarray] = {}
    na = game.action_sizes[player]
    for t in range(1, game.horizon + 1):
        for p, xh, ah in iter_histories(game, g, t, cap):
            key = (t, ah[:-1], xh[-1][player])
            row = num.setdefault(key, np.zeros(na))
            row[ah[-1][player]] += p
    table = {k: v / v.sum() for k, v in num.items() if v.sum() > 0.0}
    return TypeMarkovStrategy(player, na, table)


def replace_player(g: GeneralStrategy, player: int, s: GeneralStrategy) -> GeneralStrategy:
    """Profile where ``player`` follows ``s`` and everybody else follows ``g``."""

    def strategy(i, t, public, private):
        return s(i, t, public, private) if i == player else g(i, t, public, private)

    return strategy


def conditional_reward_to_go(
    game: ValidatedGame,
    strategy: GeneralStrategy,
    t: int,
    player: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> dict[tuple[PublicHistory, int], float]:
    """``E[sum_{n>=t} R^i | a_{1:t-1}, x^i_t]`` at every positive-probability argument."""
    num: dict[tuple[PublicHistory, int], float] = {}
    den: dict[tuple[PublicHistory, int], float] = {}
    r = game.rewards[player]
    for p, xh, ah in iter_histories(game, strategy, game.horizon, cap):
        key = (ah[: t - 1], xh[t - 1][player])
        tail = sum(float(r[xh[n] + ah[n]]) for n in range(t - 1, game.horizon))
        num[key] = num.get(key, 0.0) + p * tail
        den[key] = den.get(key, 0.0) + p
    return {k: num[k] / den[k] for k in num}


def continuation_given_history(
    game: ValidatedGame,
    strategy: GeneralStrategy,
    t: int,
    player: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> dict[tuple[PublicHistory, tuple[int, ...]], float]:
    """``E[sum_{n>t} R^i | a_{1:t}, x^i_{1:t+1}]`` for ``t < T``."""
    if not 1 <= t < game.horizon:
        raise ValueError("continuation needs 1 <= t < T")
    num: dict = {}
    den: dict = {}
    r = game.rewards[player]
    for p, xh, ah in iter_histories(game, strategy, game.horizon, cap):
        key = (ah[:t], tuple(x[player] for x in xh[: t + 1]))
        tail = sum(float(r[xh[n] + ah[n]]) for n in range(t, game.horizon))
        num[key] = num.get(key, 0.0) + p * tail
        den[key] = den.get(key, 0.0) + p
    return {k: num[k] / den[k] for k in num}


def one_step_deviation_gaps(
    game: ValidatedGame,
    profile: StrategyProfile,
    beliefs: BeliefSystem,
    player: int,
    rows: Sequence[np.ndarray] | None = None,
) -> float:
    """Largest one-step lookahead gain over the stored values.

    At each node the deviator plays an alternative row for one stage and
    the stored values ``profile.values`` are used from the next stage on,
    evaluated at the equilibrium child beliefs. Pure actions are always
    tried; ``rows`` adds mixed alternatives.
    """
    worst = -math.inf
    na = game.action_sizes[player]
    alts = [np.eye(na)[a] for a in range(na)] + [np.asarray(r, float) for r in (rows or [])]
    for h, gamma in profile.prescriptions.items():
        t = len(h) + 1
        belief = beliefs[h]
        opp = _opponent_weights(game, gamma, belief, player)
        for x in range(game.type_sizes[player]):
            q = np.zeros(na)
            for ai in range(na):
                for w, xs, acts in opp:
                    ja = _splice(player, ai, acts)
                    val = float(game.rewards[player][_splice(player, x, xs) + ja])
                    if t < game.horizon:
                        child = h + (ja,)
                        if child not in profile.values:
                            raise MissingNode(f"no stored values at {child}")
                        row = game.kernel(t, player)[(x,) + ja]
                        val += float(row @ profile.values[child][player])
                    q[ai] += w * val
            stored = float(profile.values[h][player][x])
            for alt in alts:
                worst = max(worst, float(alt @ q) - stored)
    return worst


# --------------------------------------------------------------------------
# Monte Carlo
# --------------------------------------------------------------------------


@dataclass
class SimulationResult:
    episodes: int
    means: np.ndarray
    stderrs: np.ndarray
    rng_seed: int

    def to_dict(self) -> dict:
        return {
            "episodes": self.episodes,
            "rng_seed": self.rng_seed,
            "means": self.means.tolist(),
            "stderrs": self.stderrs.tolist(),
        }


CHUNK_EPISODES = 1 << 16


def _tables(game: ValidatedGame, profile: StrategyProfile):
    """Prescriptions per stage as arrays ``[node, x, a]`` per player."""
    m = game.num_joint_actions
    stage_tables = []
    for t in range(1, game.horizon + 1):
        per_player = []
        for i in range(game.num_players):
            arr = np.zeros((m ** (t - 1), game.type_sizes[i], game.action_sizes[i]))
            for k, h in enumerate(itertools.product(game.joint_actions, repeat=t - 1)):
                if h not in profile.prescriptions:
                    raise MissingNode(f"no prescription at history {h}")
                arr[k] = profile.prescriptions[h][i]
            per_player.append(np.cumsum(arr, axis=2))
        stage_tables.append(per_player)
    return stage_tables


def _simulate_chunk(args) -> tuple[np.ndarray, np.ndarray]:
    game, tables, n, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    N = game.num_players
    m = game.num_joint_actions
    types = np.stack(
        [rng.choice(game.type_sizes[i], size=n, p=game.priors[i]) for i in range(N)], axis=1
    )
    node = np.zeros(n, dtype=np.int64)
    total = np.zeros((n, N))
    strides = [math.prod(game.action_sizes[j + 1 :]) for j in range(N)]
    for t in range(1, game.horizon + 1):
        acts = np.empty((n, N), dtype=np.int64)
        for i in range(N):
            cdf = tables[t - 1][i][node, types[:, i]]
            u = rng.random(n)[:, None]
            acts[:, i] = np.minimum((u >= cdf).sum(axis=1), game.action_sizes[i] - 1)
        idx = tuple(types[:, i] for i in range(N)) + tuple(acts[:, i] for i in range(N))
        for i in range(N):
            total[:, i] += game.rewards[i][idx]
        if t < game.horizon:
            joint = sum(acts[:, j] * strides[j] for j in range(N))
            new_types = np.empty_like(types)
            for i in range(N):
                rows = game.kernels[t - 1][i][(types[:, i],) + tuple(acts[:, j] for j in range(N))]
                cdf = np.cumsum(rows, axis=1)
                u = rng.random(n)[:, None]
                new_types[:, i] = np.minimum((u >= cdf).sum(axis=1), game.type_sizes[i] - 1)
            types = new_types
            node = node * m + joint
    return total.sum(axis=0), (total**2).sum(axis=0)


def simulate(
    game: ValidatedGame,
    profile: StrategyProfile,
    episodes: int,
    rng_seed: int = 0,
    workers: int = 1,
) -> SimulationResult:
    """Monte Carlo estimate of every player's total reward.

    Episodes are split into fixed-size chunks, each with its own stream
    spawned from ``rng_seed``, so the result does not depend on ``workers``.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    tables = _tables(game, profile)
    sizes = [CHUNK_EPISODES] * (episodes // CHUNK_EPISODES)
    if episodes % CHUNK_EPISODES:
        sizes.append(episodes % CHUNK_EPISODES)
    streams = np.random.SeedSequence(rng_seed).spawn(len(sizes))
    jobs = [(game, tables, n, s) for n, s in zip(sizes, streams)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_simulate_chunk, jobs))
    else:
        parts = [_simulate_chunk(j) for j in jobs]
    s1 = np.sum([p[0] for p in parts], axis=0)
    s2 = np.sum([p[1] for p in parts], axis=0)
    mean = s1 / episodes
    if episodes > 1:
        var = np.maximum(s2 - episodes * mean**2, 0.0) / (episodes - 1)
        stderr = np.sqrt(var / episodes)
    else:
        stderr = np.zeros_like(mean)
    return SimulationResult(episodes, mean, stderr, rng_seed)
