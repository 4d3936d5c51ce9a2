"""Finite dynamic games with privately observed Markov types.

A game has ``N`` players and ``T`` stages. Player ``i`` holds a private type
in ``range(X[i])`` that evolves through its own controlled kernel, and picks
an action in ``range(A[i])`` every stage. Actions are public. All tables are
dense numpy arrays indexed by integers:

* ``priors[i]`` has shape ``(X[i],)``;
* ``kernels[t-1][i]`` has shape ``(X[i], A[0], ..., A[N-1], X[i])`` and holds
  the transition from stage ``t`` to stage ``t + 1``;
* ``rewards[i]`` has shape ``(X[0], ..., X[N-1], A[0], ..., A[N-1])``.

Besides the model itself this module provides exact enumeration over full
histories, which every oracle in the package is built on.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

STOCHASTIC_ATOL = 1e-12
DEFAULT_ENUMERATION_CAP = 10**7

JointType = tuple[int, ...]
JointAction = tuple[int, ...]
PublicHistory = tuple[JointAction, ...]

# (player, stage, public history a_{1:t-1}, private history x^i_{1:t}) -> P(A^i)
GeneralStrategy = Callable[[int, int, PublicHistory, tuple[int, ...]], np.ndarray]


# --------------------------------------------------------------------------
# validation errors
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NonStochasticRow:
    """A prior or kernel row that is not a probability vector."""

    field: str
    player: int
    t: int | None
    index: tuple[int, ...]
    total: float
    min_entry: float

    def __str__(self) -> str:
        where = f"player {self.player}"
        if self.t is not None:
            where += f", t={self.t}"
        return (
            f"{self.field}: row {self.index} of {where} is not stochastic "
            f"(sum={self.total!r}, min={self.min_entry!r})"
        )


@dataclass(frozen=True)
class DimensionMismatch:
    field: str
    expected: object
    got: object

    def __str__(self) -> str:
        return f"{self.field}: expected {self.expected}, got {self.got}"


@dataclass(frozen=True)
class NonFiniteReward:
    player: int
    count: int

    def __str__(self) -> str:
        return f"rewards: player {self.player} has {self.count} non-finite entries"


Violation = NonStochasticRow | DimensionMismatch | NonFiniteReward


class InvalidGameError(ValueError):
    """Raised by :func:`validate_game`; ``errors`` lists every violation."""

    def __init__(self, errors: Sequence[Violation]):
        self.errors = list(errors)
        lines = "\n".join(f"  - {e}" for e in self.errors)
        super().__init__(f"{len(self.errors)} game constraint(s) violated:\n{lines}")


class EnumerationTooLarge(RuntimeError):
    def __init__(self, estimated_count: int, cap: int):
        self.estimated_count = estimated_count
        self.cap = cap
        super().__init__(
            f"exact enumeration needs ~{estimated_count} branches (cap {cap})"
        )


# --------------------------------------------------------------------------
# model
# --------------------------------------------------------------------------


@dataclass
class GameSpec:
    """Unvalidated game description.

    ``kernels`` may be ``None`` (all types static) and any per-player entry
    may be ``None``; both expand to the identity kernel on validation.
    """

    num_players: int
    horizon: int
    type_space_sizes: Sequence[int]
    action_space_sizes: Sequence[int]
    priors: Sequence[Sequence[float]]
    rewards: Sequence[object]
    kernels: Sequence[Sequence[object | None]] | None = None
    type_labels: Sequence[Sequence[str]] | None = None


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ValidatedGame:
    """Immutable game handle. Build it with :func:`validate_game`."""

    num_players: int
    horizon: int
    type_sizes: tuple[int, ...]
    action_sizes: tuple[int, ...]
    priors: tuple[np.ndarray, ...]
    kernels: tuple[tuple[np.ndarray, ...], ...]
    rewards: tuple[np.ndarray, ...]
    type_labels: tuple[tuple[str, ...], ...] | None = None
    # explicit-kernel flags, used only when serializing back to a document
    explicit_kernels: tuple[tuple[bool, ...], ...] = field(default=(), compare=False)

    @property
    def joint_actions(self) -> list[JointAction]:
        return list(itertools.product(*(range(n) for n in self.action_sizes)))

    @property
    def joint_types(self) -> list[JointType]:
        return list(itertools.product(*(range(n) for n in self.type_sizes)))

    @property
    def num_joint_actions(self) -> int:
        return math.prod(self.action_sizes)

    def kernel(self, t: int, player: int) -> np.ndarray:
        """Kernel moving player ``player`` from stage ``t`` to ``t + 1``."""
        return self.kernels[t - 1][player]

    def reward(self, player: int, joint_type: JointType, joint_action: JointAction) -> float:
        return float(self.rewards[player][tuple(joint_type) + tuple(joint_action)])


def _check_rows(
    table: np.ndarray, fieldname: str, player: int, t: int | None, errors: list
) -> None:
    flat = table.reshape(-1, table.shape[-1])
    lead = table.shape[:-1]
    for k, row in enumerate(flat):
        total = float(row.sum())
        lo = float(row.min())
        if not np.all(np.isfinite(row)) or lo < 0.0 or abs(total - 1.0) > STOCHASTIC_ATOL:
            index = tuple(int(v) for v in np.unravel_index(k, lead)) if lead else ()
            errors.append(NonStochasticRow(fieldname, player, t, index, total, lo))


def check_game(spec: GameSpec) -> list[Violation]:
    """Return every violated constraint of ``spec`` (empty if valid)."""
    errors: list[Violation] = []
    n, horizon = spec.num_players, spec.horizon
    if not isinstance(n, (int, np.integer)) or n < 1:
        return [DimensionMismatch("players", "positive integer", n)]
    if not isinstance(horizon, (int, np.integer)) or horizon < 1:
        return [DimensionMismatch("horizon", "positive integer", horizon)]
    xs, acts = list(spec.type_space_sizes), list(spec.action_space_sizes)
    for name, sizes in (("type_spaces", xs), ("action_spaces", acts)):
        if len(sizes) != n:
            errors.append(DimensionMismatch(name, f"{n} entries", len(sizes)))
        elif any(not isinstance(s, (int, np.integer)) or s < 1 for s in sizes):
            errors.append(DimensionMismatch(name, "positive integers", sizes))
    if errors:
        return errors

    if len(spec.priors) != n:
        errors.append(DimensionMismatch("priors", f"{n} rows", len(spec.priors)))
    else:
        for i, row in enumerate(spec.priors):
            row = np.asarray(row, dtype=float)
            if row.shape != (xs[i],):
                errors.append(DimensionMismatch(f"priors[{i}]", (xs[i],), row.shape))
            else:
                _check_rows(row, "priors", i, None, errors)

    if spec.kernels is not None:
        if len(spec.kernels) != horizon - 1:
            errors.append(
                DimensionMismatch("kernels", f"{horizon - 1} stages", len(spec.kernels))
            )
        else:
            for t, stage in enumerate(spec.kernels, start=1):
                if stage is None:
                    continue
                if len(stage) != n:
                    errors.append(DimensionMismatch(f"kernels[{t - 1}]", f"{n} players", len(stage)))
                    continue
                for i, k in enumerate(stage):
                    if k is None:
                        continue
                    k = np.asarray(k, dtype=float)
                    shape = (xs[i], *acts, xs[i])
                    if k.shape != shape:
                        errors.append(DimensionMismatch(f"kernels[{t - 1}][{i}]", shape, k.shape))
                    else:
                        _check_rows(k, "kernels", i, t, errors)

    if len(spec.rewards) != n:
        errors.append(DimensionMismatch("rewards", f"{n} tables", len(spec.rewards)))
    else:
        shape = (*xs, *acts)
        for i, r in enumerate(spec.rewards):
            r = np.asarray(r, dtype=float)
            if r.shape != shape:
                errors.append(DimensionMismatch(f"rewards[{i}]", shape, r.shape))
            elif not np.all(np.isfinite(r)):
                errors.append(NonFiniteReward(i, int(np.sum(~np.isfinite(r)))))

    if spec.type_labels is not None:
        if len(spec.type_labels) != n or any(
            len(lab) != xs[i] for i, lab in enumerate(spec.type_labels)
        ):
            errors.append(DimensionMismatch("type_labels", xs, [len(x) for x in spec.type_labels]))
    return errors


def identity_kernel(num_types: int, action_sizes: Sequence[int]) -> np.ndarray:
    eye = np.eye(num_types)
    shape = (num_types, *([1] * len(action_sizes)), num_types)
    return np.broadcast_to(eye.reshape(shape), (num_types, *action_sizes, num_types)).copy()


def validate_game(spec: GameSpec) -> ValidatedGame:
    """Validate ``spec`` and freeze it.

    Raises:
        InvalidGameError: carrying every violation found, with its location.
    """
    errors = check_game(spec)
    if errors:
        raise InvalidGameError(errors)
    n = int(spec.num_players)
    xs = tuple(int(v) for v in spec.type_space_sizes)
    acts = tuple(int(v) for v in spec.action_space_sizes)
    kernels = []
    explicit = []
    for t in range(spec.horizon - 1):
        stage = None if spec.kernels is None else spec.kernels[t]
        row, flags = [], []
        for i in range(n):
            k = None if stage is None else stage[i]
            flags.append(k is not None)
            row.append(_frozen(identity_kernel(xs[i], acts) if k is None else k))
        kernels.append(tuple(row))
        explicit.append(tuple(flags))
    labels = None
    if spec.type_labels is not None:
        labels = tuple(tuple(str(s) for s in lab) for lab in spec.type_labels)
    return ValidatedGame(
        num_players=n,
        horizon=int(spec.horizon),
        type_sizes=xs,
        action_sizes=acts,
        priors=tuple(_frozen(p) for p in spec.priors),
        kernels=tuple(kernels),
        rewards=tuple(_frozen(r) for r in spec.rewards),
        type_labels=labels,
        explicit_kernels=tuple(explicit),
    )


# --------------------------------------------------------------------------
# exact enumeration
# --------------------------------------------------------------------------


def estimate_history_count(game: ValidatedGame, t: int) -> int:
    """Number of weighted branches enumerated through stage ``t``."""
    per_stage = math.prod(game.type_sizes) * game.num_joint_actions
    return per_stage**t


def iter_histories(
    game: ValidatedGame,
    strategy: GeneralStrategy,
    t: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> Iterator[tuple[float, tuple[JointType, ...], PublicHistory]]:
    """Yield ``(prob, x_{1:t}, a_{1:t})`` for every positive-probability history.

    Types are listed as joint tuples per stage; ``x_hist[s][i]`` is player
    ``i``'s type at stage ``s + 1``.
    """
    if not 1 <= t <= game.horizon:
        raise ValueError(f"stage {t} outside 1..{game.horizon}")
    count = estimate_history_count(game, t)
    if count > cap:
        raise EnumerationTooLarge(count, cap)

    n = game.num_players
    frontier: list[tuple[float, tuple[JointType, ...], PublicHistory]] = []
    for x in game.joint_types:
        p = math.prod(float(game.priors[i][x[i]]) for i in range(n))
        if p > 0.0:
            frontier.append((p, (x,), ()))

    for s in range(1, t + 1):
        nxt = []
        for p, xh, ah in frontier:
            dists = [
                np.asarray(strategy(i, s, ah, tuple(x[i] for x in xh)), dtype=float)
                for i in range(n)
            ]
            for a in game.joint_actions:
                pa = p * math.prod(float(dists[i][a[i]]) for i in range(n))
                if pa <= 0.0:
                    continue
                ah2 = ah + (a,)
                if s == t:
                    nxt.append((pa, xh, ah2))
                    continue
                x = xh[-1]
                rows = [game.kernel(s, i)[(x[i],) + a] for i in range(n)]
                for y in game.joint_types:
                    py = pa * math.prod(float(rows[i][y[i]]) for i in range(n))
                    if py > 0.0:
                        nxt.append((py, xh + (y,), ah2))
        frontier = nxt
    yield from frontier


def enumerate_outcome_distribution(
    game: ValidatedGame,
    strategy: GeneralStrategy,
    t: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> dict[tuple[JointType, JointAction], float]:
    """Exact ``P^g(x_t, a_t)`` by summing over all histories through stage ``t``."""
    out: dict[tuple[JointType, JointAction], float] = {}
    for p, xh, ah in iter_histories(game, strategy, t, cap):
        key = (xh[-1], ah[-1])
        out[key] = out.get(key, 0.0) + p
    return out


def expected_total_reward(
    game: ValidatedGame,
    strategy: GeneralStrategy,
    player: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """Exact ``J^{i,g} = E^g[sum_t R^i(X_t, A_t)]``."""
    r = game.rewards[player]
    total = 0.0
    for t in range(1, game.horizon + 1):
        dist = enumerate_outcome_distribution(game, strategy, t, cap)
        total += sum(p * float(r[x + a]) for (x, a), p in dist.items())
    return total
