"""Backward construction of the equilibrium generating function and the
forward construction of strategies and beliefs on the public-history tree.

At every stage ``t`` and public belief ``pi`` the solver looks for a
prescription profile ``gamma`` such that, for every player ``i`` and type
``x``, the row ``gamma[i][x]`` maximizes

    E[ R^i(X_t, A_t) + V^i_{t+1}(F(pi, gamma, A_t), X^i_{t+1}) | x ]

where the belief update inside ``F`` uses ``gamma`` itself, held fixed while
the row varies. Only the row enters the maximization, so the objective is
linear in it.
"""

from __future__ import annotations

import itertools
import logging
import math
import threading
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy import optimize

from .belief import (
    DEFAULT_RESOLUTION,
    DEGENERACY_TOL,
    BeliefVector,
    GammaProfile,
    quantize_key,
    update_vector,
)
from .game import JointAction, PublicHistory, ValidatedGame

log = logging.getLogger(__name__)

# belief at t+1 -> (V^1_{t+1}(belief, .), ..., V^N_{t+1}(belief, .))
Continuation = Callable[[BeliefVector], Sequence[np.ndarray]]


class NoFixedPointFound(RuntimeError):
    """No seed converged to an epsilon fixed point of the stage equation."""

    def __init__(self, t: int, belief: BeliefVector, diagnostics: list[dict]):
        self.t = t
        self.belief = belief
        self.diagnostics = diagnostics
        self.path: list[tuple[int, BeliefVector]] = [(t, belief)]
        best = min((d["residual"] for d in diagnostics), default=float("nan"))
        super().__init__(
            f"no fixed point at t={t}, belief={belief.tolist()} "
            f"({len(diagnostics)} seeds tried, best residual {best:.3g})"
        )


class MissingContinuation(KeyError):
    pass


class CertificationError(ValueError):
    """A stage solution failed the epsilon fixed-point check on insertion."""


@dataclass(frozen=True)
class FixedPointConfig:
    max_iterations: int = 10000
    damping: float = 0.5
    fixed_point_tolerance: float = 1e-9
    argmax_tolerance: float = 1e-8
    seed_list: tuple[GammaProfile, ...] | None = None
    random_seed: int = 0
    num_random_seeds: int = 32
    pure_seed_limit: int = 4096
    selection_rule: str = "first"
    # ties inside the iteration are resolved much tighter than the
    # certification tolerance so that per-stage slack does not add up
    tie_tolerance: float = 1e-11
    # rows within this sup distance of a unique best response jump onto it
    snap_tolerance: float = 1e-6
    polish: bool = True
    polish_interval: int = 32
    # a seed is abandoned after this many iterations without a new best gap
    patience: int = 256
    # when every seed fails, try indifference solves on each support profile
    support_enumeration_limit: int = 4096
    support_threshold: float = 1e-4
    quantize_resolution: float = DEFAULT_RESOLUTION
    degeneracy_tolerance: float = DEGENERACY_TOL
    dedup_tolerance: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        for name in ("fixed_point_tolerance", "argmax_tolerance", "tie_tolerance", "quantize_resolution"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.selection_rule != "first":
            raise ValueError(f"unknown selection rule {self.selection_rule!r}")

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "seed_list"}
        d["seed_list"] = (
            None
            if self.seed_list is None
            else [[np.asarray(g).tolist() for g in prof] for prof in self.seed_list]
        )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FixedPointConfig":
        d = dict(d)
        seeds = d.pop("seed_list", None)
        if seeds is not None:
            d["seed_list"] = tuple(tuple(np.asarray(g, dtype=float) for g in prof) for prof in seeds)
        return cls(**d)


@dataclass(frozen=True, eq=False)
class StageSolution:
    gamma: GammaProfile
    values: tuple[np.ndarray, ...]
    residual: float
    gap: float
    iterations: int
    seed_id: str
    polished: bool = False

    def __repr__(self) -> str:
        g = [np.round(x, 6).tolist() for x in self.gamma]
        return f"StageSolution(gamma={g}, seed={self.seed_id}, gap={self.gap:.2e})"


# --------------------------------------------------------------------------
# stage objective
# --------------------------------------------------------------------------


def _action_marginals(belief: BeliefVector, gamma: GammaProfile) -> list[np.ndarray]:
    return [belief[j] @ gamma[j] for j in range(len(gamma))]


def _needed_joint_actions(game: ValidatedGame, marg: list[np.ndarray]) -> Iterator[JointAction]:
    """Joint actions some player can face with positive probability.

    ``a`` matters for player ``i`` whenever the opponents play ``a^{-i}``
    with positive probability; ``a^i`` itself may be a deviation.
    """
    n = game.num_players
    for a in game.joint_actions:
        for i in range(n):
            if all(marg[j][a[j]] > 0.0 for j in range(n) if j != i):
                yield a
                break


def stage_action_values(
    game: ValidatedGame,
    t: int,
    belief: BeliefVector,
    profile: GammaProfile,
    continuation: Continuation | None,
    degeneracy_tol: float = DEGENERACY_TOL,
) -> list[np.ndarray]:
    """Pure-action values ``Q^i[x, a^i]`` of the stage objective, every player.

    The profile is frozen both in the opponents' play and inside the belief
    update. At ``t == T`` the continuation is ignored.
    """
    n = game.num_players
    cont_terms = [np.zeros((game.type_sizes[i], *game.action_sizes)) for i in range(n)]
    if t < game.horizon:
        if continuation is None:
            raise MissingContinuation(f"stage {t} < T needs a continuation")
        kernels = game.kernels[t - 1]
        marg = _action_marginals(belief, profile)
        for a in _needed_joint_actions(game, marg):
            child = update_vector(belief, profile, a, kernels, degeneracy_tol)
            vnext = continuation(child)
            for i in range(n):
                q = kernels[i][(slice(None),) + a]  # (X^i, X^i)
                cont_terms[i][(slice(None),) + a] = q @ np.asarray(vnext[i], dtype=float)
    out = []
    for i in range(n):
        total = np.asarray(game.rewards[i], dtype=float)
        shape = [1] * (2 * n)
        shape[i] = game.type_sizes[i]
        for j in range(n):
            shape[n + j] = game.action_sizes[j]
        total = total + cont_terms[i].reshape(shape)
        operands: list = [total, list(range(2 * n))]
        for j in range(n):
            if j != i:
                operands += [belief[j][:, None] * profile[j], [j, n + j]]
        operands.append([i, n + i])
        out.append(np.einsum(*operands))
    return out


def stage_objective(
    player: int,
    own_type: int,
    row: np.ndarray,
    profile: GammaProfile,
    belief: BeliefVector,
    continuation: Continuation | None,
    game: ValidatedGame,
    t: int,
) -> float:
    """Expected reward-to-go of playing ``row`` at type ``own_type``."""
    q = stage_action_values(game, t, belief, profile, continuation)[player]
    return float(np.asarray(row, dtype=float) @ q[own_type])


def _argmax_row(values: np.ndarray, eps: float) -> np.ndarray:
    best = values.max()
    mask = values >= best - eps
    return mask / mask.sum()


def best_response_row(
    player: int,
    own_type: int,
    profile: GammaProfile,
    belief: BeliefVector,
    continuation: Continuation | None,
    game: ValidatedGame,
    t: int,
    argmax_tolerance: float = 1e-8,
) -> np.ndarray:
    """Uniform mixture over the actions within ``argmax_tolerance`` of the best."""
    q = stage_action_values(game, t, belief, profile, continuation)[player]
    return _argmax_row(q[own_type], argmax_tolerance)


def profile_gaps(profile: GammaProfile, values: list[np.ndarray]) -> list[np.ndarray]:
    """Per-row shortfall ``max_a Q[x, a] - row . Q[x]`` for every player."""
    return [q.max(axis=1) - np.einsum("xa,xa->x", g, q) for g, q in zip(profile, values)]


def profile_values(profile: GammaProfile, values: list[np.ndarray]) -> tuple[np.ndarray, ...]:
    return tuple(np.einsum("xa,xa->x", g, q) for g, q in zip(profile, values))


# --------------------------------------------------------------------------
# seeds and iteration
# --------------------------------------------------------------------------


def pure_profiles(game: ValidatedGame) -> Iterator[GammaProfile]:
    """Every deterministic prescription profile, in canonical row order."""
    rows = [(i, x) for i in range(game.num_players) for x in range(game.type_sizes[i])]
    choices = [range(game.action_sizes[i]) for i, _ in rows]
    for combo in itertools.product(*choices):
        prof = [np.zeros((game.type_sizes[i], game.action_sizes[i])) for i in range(game.num_players)]
        for (i, x), a in zip(rows, combo):
            prof[i][x, a] = 1.0
        yield tuple(prof)


def default_seeds(game: ValidatedGame, config: FixedPointConfig) -> list[tuple[str, GammaProfile]]:
    if config.seed_list is not None:
        return [(f"user-{k}", tuple(np.asarray(g, float) for g in s)) for k, s in enumerate(config.seed_list)]
    count = math.prod(a**x for a, x in zip(game.action_sizes, game.type_sizes))
    if count <= config.pure_seed_limit:
        return [(f"pure-{k}", p) for k, p in enumerate(pure_profiles(game))]
    uniform = tuple(
        np.full((x, a), 1.0 / a) for x, a in zip(game.type_sizes, game.action_sizes)
    )
    seeds = [("uniform", uniform)]
    rng = np.random.default_rng(config.random_seed)
    for k in range(config.num_random_seeds):
        prof = tuple(
            rng.dirichlet(np.ones(a), size=x) for x, a in zip(game.type_sizes, game.action_sizes)
        )
        seeds.append((f"random-{k}", prof))
    return seeds


def _damped_step(
    profile: GammaProfile, values: list[np.ndarray], config: FixedPointConfig
) -> tuple[GammaProfile, float]:
    lam, eps = config.damping, config.tie_tolerance
    new, residual = [], 0.0
    for g, q in zip(profile, values):
        best = q.max(axis=1, keepdims=True)
        movers = (best[:, 0] - np.einsum("xa,xa->x", g, q)) > eps
        if not movers.any():
            new.append(g)
            continue
        mask = q >= best - eps
        br = mask / mask.sum(axis=1, keepdims=True)
        g2 = np.where(movers[:, None], lam * br + (1.0 - lam) * g, g)
        # unique best responses that are nearly reached are taken exactly
        snap = movers & (mask.sum(axis=1) == 1) & (np.abs(g2 - br).max(axis=1) <= config.snap_tolerance)
        g2[snap] = br[snap]
        residual = max(residual, float(np.abs(g2 - g).max()))
        new.append(g2)
    return tuple(new), residual


def _finish(
    profile: GammaProfile,
    q: list[np.ndarray],
    gap: float,
    evaluate: Callable[[GammaProfile], list[np.ndarray]],
    config: FixedPointConfig,
) -> tuple[GammaProfile, list[np.ndarray], float]:
    """Move rows that stalled just short of a unique best response onto it.

    Near a degenerate point the gain of a row can shrink quadratically in its
    distance to the best response, so damped steps stop once the gain drops
    below ``tie_tolerance`` while the row is still visibly mixed. All such
    rows are snapped together and the result is kept only if it certifies.
    """
    eps = config.tie_tolerance
    snapped, changed = [], False
    for g, v in zip(profile, q):
        best = v.max(axis=1, keepdims=True)
        mask = v >= best - eps
        unique = mask.sum(axis=1) == 1
        dist = np.abs(g - mask).max(axis=1)
        rows = unique & (dist > 0.0) & (dist <= config.support_threshold)
        g2 = np.where(rows[:, None], mask.astype(float), g)
        changed |= bool(rows.any())
        snapped.append(g2)
    if not changed:
        return profile, q, gap
    cand = tuple(snapped)
    try:
        q2 = evaluate(cand)
    except NoFixedPointFound:
        return profile, q, gap
    gap2 = max(float(g.max()) for g in profile_gaps(cand, q2))
    if gap2 <= config.argmax_tolerance:
        return cand, q2, gap2
    return profile, q, gap


def _supports(profile: GammaProfile, threshold: float) -> list[list[np.ndarray]]:
    return [[np.flatnonzero(row > threshold) for row in g] for g in profile]


def _polish(
    game: ValidatedGame,
    t: int,
    belief: BeliefVector,
    anchor: GammaProfile,
    evaluate: Callable[[GammaProfile], list[np.ndarray]],
    config: FixedPointConfig,
) -> GammaProfile | None:
    """Solve the indifference conditions on the support of ``anchor``."""
    supports = _supports(anchor, config.support_threshold)
    free = [(i, x) for i, rows in enumerate(supports) for x, s in enumerate(rows) if len(s) > 1]

    def unpack(z: np.ndarray) -> GammaProfile:
        prof = [np.zeros_like(g) for g in anchor]
        k = 0
        for i, rows in enumerate(supports):
            for x, s in enumerate(rows):
                if len(s) == 1:
                    prof[i][x, s[0]] = 1.0
                    continue
                head = np.clip(z[k : k + len(s) - 1], 0.0, 1.0)
                k += len(s) - 1
                tail = max(0.0, 1.0 - head.sum())
                vals = np.append(head, tail)
                prof[i][x, s] = vals / vals.sum()
        return tuple(prof)

    if free:
        z0 = np.concatenate([anchor[i][x, supports[i][x][:-1]] for i, x in free])

        def indifference(z: np.ndarray) -> np.ndarray:
            q = evaluate(unpack(z))
            eqs = []
            for i, x in free:
                s = supports[i][x]
                eqs.extend(q[i][x, s[:-1]] - q[i][x, s[-1]])
            return np.asarray(eqs)

        try:
            sol = optimize.root(indifference, z0, method="hybr", options={"xtol": 1e-13})
        except (ValueError, FloatingPointError, NoFixedPointFound):
            return None
        z = sol.x
        # reject solutions that leave the simplex rather than clipping them in
        k = 0
        for i, x in free:
            m = len(supports[i][x]) - 1
            head = z[k : k + m]
            k += m
            if head.min() < -1e-9 or head.sum() > 1.0 + 1e-9:
                return None
        cand = unpack(z)
    else:
        cand = unpack(np.zeros(0))
    try:
        q = evaluate(cand)
    except NoFixedPointFound:
        return None
    if max(float(g.max()) for g in profile_gaps(cand, q)) <= config.argmax_tolerance:
        return cand
    return None


def _run_seed(
    game: ValidatedGame,
    t: int,
    belief: BeliefVector,
    evaluate: Callable[[GammaProfile], list[np.ndarray]],
    seed: GammaProfile,
    config: FixedPointConfig,
) -> tuple[StageSolution | None, dict]:
    profile = tuple(np.array(g, dtype=float) for g in seed)
    window: deque = deque(maxlen=config.polish_interval)
    residual = best_gap = float("inf")
    last_progress = 0
    tried: set = set()
    for k in range(1, config.max_iterations + 1):
        q = evaluate(profile)
        gap = max(float(g.max()) for g in profile_gaps(profile, q))
        new, residual = _damped_step(profile, q, config)
        if residual <= config.fixed_point_tolerance and gap <= config.argmax_tolerance:
            profile, q, gap = _finish(profile, q, gap, evaluate, config)
            sol = StageSolution(
                gamma=profile,
                values=profile_values(profile, q),
                residual=residual,
                gap=gap,
                iterations=k,
                seed_id="",
            )
            return sol, {"residual": residual, "gap": gap, "iterations": k}
        if gap < best_gap * (1.0 - 1e-3):
            best_gap, last_progress = gap, k
        elif k - last_progress > config.patience:
            return None, {"residual": residual, "gap": best_gap, "iterations": k, "stalled": True}
        profile = new
        window.append(profile)
        if config.polish and k % config.polish_interval == 0:
            anchor = tuple(np.mean([p[i] for p in window], axis=0) for i in range(len(profile)))
            # a cycling run keeps proposing the same support; try each once
            sig = tuple(tuple(map(tuple, rows)) for rows in _supports(anchor, config.support_threshold))
            if sig in tried:
                continue
            tried.add(sig)
            cand = _polish(game, t, belief, anchor, evaluate, config)
            if cand is not None:
                sol = _polished_solution(cand, evaluate(cand), k)
                return sol, {"residual": sol.residual, "gap": sol.gap, "iterations": k}
    return None, {"residual": residual, "gap": best_gap, "iterations": config.max_iterations}


def _polished_solution(cand: GammaProfile, q: list[np.ndarray], iterations: int) -> StageSolution:
    """Wrap an indifference solution that :func:`_polish` already certified.

    Every row of ``cand`` is within ``argmax_tolerance`` of optimal, so no
    row moves under the damped update and the residual is zero.
    """
    return StageSolution(
        gamma=cand,
        values=profile_values(cand, q),
        residual=0.0,
        gap=max(float(g.max()) for g in profile_gaps(cand, q)),
        iterations=iterations,
        seed_id="",
        polished=True,
    )


def _support_search(
    game: ValidatedGame,
    t: int,
    belief: BeliefVector,
    evaluate: Callable[[GammaProfile], list[np.ndarray]],
    config: FixedPointConfig,
) -> StageSolution | None:
    """Fallback: anchor an indifference solve at the uniform row on every support.

    Supports are visited smallest first. Only used at the last stage, where
    each player's indifference system is linear in the opponents' rows, so
    the search finds the mixed equilibria that best-response dynamics cycle
    around. Earlier stages would need a child solve per evaluation.
    """
    rows = [(i, x) for i in range(game.num_players) for x in range(game.type_sizes[i])]
    row_supports = [
        [np.array(c) for r in range(1, game.action_sizes[i] + 1)
         for c in itertools.combinations(range(game.action_sizes[i]), r)]
        for i, _ in rows
    ]
    if math.prod(len(c) for c in row_supports) > config.support_enumeration_limit:
        return None
    combos = sorted(itertools.product(*row_supports), key=lambda c: sum(len(s) for s in c))
    for combo in combos:
        anchor = [np.zeros((game.type_sizes[i], game.action_sizes[i])) for i in range(game.num_players)]
        for (i, x), supp in zip(rows, combo):
            anchor[i][x, supp] = 1.0 / len(supp)
        cand = _polish(game, t, belief, tuple(anchor), evaluate, config)
        if cand is not None:
            return replace(_polished_solution(cand, evaluate(cand), 0), seed_id="support-search")
    return None


def _same_profile(a: GammaProfile, b: GammaProfile, tol: float) -> bool:
    return all(np.abs(x - y).max() <= tol for x, y in zip(a, b))


def solve_stage_fixed_point(
    t: int,
    belief: BeliefVector,
    continuation: Continuation | None,
    game: ValidatedGame,
    config: FixedPointConfig | None = None,
    enumerate_all: bool = False,
) -> StageSolution | list[StageSolution]:
    """Find prescription profiles satisfying the stage fixed-point equation.

    Each seed runs damped synchronous best-response iteration; rows that
    are already maximizers stay put, others move ``damping`` of the way to
    the uniform mixture over near-optimal actions. Every ``polish_interval``
    iterations the running average is used as the anchor of an indifference
    solve on its support, which lets oscillating runs land on interior
    mixed fixed points.

    Returns the first converged seed's solution, or with ``enumerate_all``
    all distinct converged solutions in seed order. At the last stage a
    failed seed hands over to an enumeration of support profiles.

    Raises:
        NoFixedPointFound: if no seed converges.
    """
    config = config or FixedPointConfig()
    deg = config.degeneracy_tolerance

    def evaluate(prof: GammaProfile) -> list[np.ndarray]:
        return stage_action_values(game, t, belief, prof, continuation, deg)

    diagnostics, found = [], []
    for seed_id, seed in default_seeds(game, config):
        try:
            sol, diag = _run_seed(game, t, belief, evaluate, seed, config)
        except NoFixedPointFound as exc:
            sol, diag = None, {"residual": float("inf"), "gap": float("inf"), "iterations": 0, "error": str(exc)}
        diag["seed"] = seed_id
        diagnostics.append(diag)
        if sol is None:
            if t == game.horizon and not enumerate_all:
                # the support search below is complete here and cheaper
                # than running out the remaining seeds
                break
            continue
        sol = replace(sol, seed_id=seed_id)
        if not enumerate_all:
            return sol
        if not any(_same_profile(sol.gamma, s.gamma, config.dedup_tolerance) for s in found):
            found.append(sol)
    if not found:
        sol = _support_search(game, t, belief, evaluate, config) if t == game.horizon else None
        if sol is None:
            raise NoFixedPointFound(t, belief, diagnostics)
        found.append(sol)
        if not enumerate_all:
            return sol
    return found


# --------------------------------------------------------------------------
# equilibrium generating function
# --------------------------------------------------------------------------


class EquilibriumGenerator:
    """Memoized ``(t, belief) -> StageSolution`` built on demand.

    ``fixed_stages`` maps a stage to a prescription rule used instead of
    solving; its outputs are still certified as fixed points on insertion.
    Insertions are idempotent, so concurrent solves of one key are safe.
    """

    def __init__(
        self,
        game: ValidatedGame,
        config: FixedPointConfig | None = None,
        fixed_stages: dict[int, Callable[[BeliefVector], GammaProfile]] | None = None,
    ):
        self.game = game
        self.config = config or FixedPointConfig()
        self.fixed_stages = dict(fixed_stages or {})
        self.memo: dict[tuple[int, tuple], StageSolution] = {}
        self.failures: dict[tuple[int, tuple], NoFixedPointFound] = {}
        self.solve_count = 0
        self._lock = threading.Lock()

    def key(self, t: int, belief: BeliefVector) -> tuple[int, tuple]:
        return (t, quantize_key(belief, self.config.quantize_resolution))

    def continuation(self, t: int) -> Continuation | None:
        """Value lookup used by the stage-``t`` problem."""
        if t >= self.game.horizon:
            return None
        return lambda b: self.solve_value(t + 1, b)

    def solve(self, t: int, belief: BeliefVector) -> StageSolution:
        key = self.key(t, belief)
        with self._lock:
            hit = self.memo.get(key)
            failed = self.failures.get(key)
        if hit is not None:
            return hit
        if failed is not None:
            raise failed
        try:
            sol = self._solve_uncached(t, belief)
        except NoFixedPointFound as exc:
            if exc.t != t:
                exc.path.append((t, belief))
            with self._lock:
                self.failures.setdefault(key, exc)
            raise
        self._certify(t, belief, sol)
        with self._lock:
            self.solve_count += 1
            return self.memo.setdefault(key, sol)

    def _solve_uncached(self, t: int, belief: BeliefVector) -> StageSolution:
        cont = self.continuation(t)
        rule = self.fixed_stages.get(t)
        if rule is None:
            return solve_stage_fixed_point(t, belief, cont, self.game, self.config)
        gamma = tuple(np.asarray(g, dtype=float) for g in rule(belief))
        q = stage_action_values(self.game, t, belief, gamma, cont, self.config.degeneracy_tolerance)
        gap = max(float(g.max()) for g in profile_gaps(gamma, q))
        return StageSolution(gamma, profile_values(gamma, q), 0.0, gap, 0, "fixed")

    def _certify(self, t: int, belief: BeliefVector, sol: StageSolution) -> None:
        if not sol.gap <= self.config.argmax_tolerance or not all(
            np.all(np.isfinite(v)) for v in sol.values
        ):
            raise CertificationError(
                f"stage {t} solution at {belief.tolist()} has gap {sol.gap!r}"
            )

    def solve_value(self, t: int, belief: BeliefVector) -> tuple[np.ndarray, ...]:
        """``V_t(belief, .)`` for every player; zeros past the horizon."""
        if t == self.game.horizon + 1:
            return tuple(np.zeros(x) for x in self.game.type_sizes)
        if not 1 <= t <= self.game.horizon:
            raise ValueError(f"stage {t} outside 1..{self.game.horizon + 1}")
        return self.solve(t, belief).values

    def root_belief(self) -> BeliefVector:
        return BeliefVector.from_priors(self.game.priors)


def solve_value(
    t: int, belief: BeliefVector, game: ValidatedGame, generator: EquilibriumGenerator
) -> tuple[np.ndarray, ...]:
    if generator.game is not game:
        raise ValueError("generator was built for a different game")
    return generator.solve_value(t, belief)


# --------------------------------------------------------------------------
# forward construction
# --------------------------------------------------------------------------


@dataclass
class StrategyProfile:
    """``beta*`` on the public-history tree: node -> prescription profile.

    ``prescriptions[h][i][x]`` is player ``i``'s action distribution at
    public history ``h`` with current type ``x``.
    """

    prescriptions: dict[PublicHistory, GammaProfile] = field(default_factory=dict)
    values: dict[PublicHistory, tuple[np.ndarray, ...]] = field(default_factory=dict)
    residuals: dict[PublicHistory, float] = field(default_factory=dict)
    unsolved: dict[PublicHistory, str] = field(default_factory=dict)

    def __call__(self, player: int, t: int, public: PublicHistory, private: tuple[int, ...]) -> np.ndarray:
        return self.prescriptions[tuple(public)][player][private[-1]]

    def nodes(self) -> list[PublicHistory]:
        return sorted(self.prescriptions, key=lambda h: (len(h), h))


@dataclass
class BeliefSystem:
    beliefs: dict[PublicHistory, BeliefVector] = field(default_factory=dict)

    def __getitem__(self, h: PublicHistory) -> BeliefVector:
        return self.beliefs[tuple(h)]

    def __contains__(self, h) -> bool:
        return tuple(h) in self.beliefs


def tree_size(game: ValidatedGame) -> int:
    m = game.num_joint_actions
    return sum(m**t for t in range(game.horizon))


def forward_construct(
    game: ValidatedGame, generator: EquilibriumGenerator, workers: int = 1
) -> tuple[StrategyProfile, BeliefSystem]:
    """Walk the full public-history tree, zero-probability branches included.

    A stage failure below the root is recorded on its node and the subtree
    under it is left out; a failure at the root propagates. With
    ``workers > 1`` the nodes of each level are solved on a thread pool;
    results are gathered in tree order, so the output does not change.
    """
    profile, system = StrategyProfile(), BeliefSystem()
    root: PublicHistory = ()
    system.beliefs[root] = generator.root_belief()
    generator.solve(1, system.beliefs[root])

    def attempt(t: int, h: PublicHistory) -> StageSolution | NoFixedPointFound:
        try:
            return generator.solve(t, system.beliefs[h])
        except NoFixedPointFound as exc:
            return exc

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        frontier = [root]
        for t in range(1, game.horizon + 1):
            if pool is None:
                results = [attempt(t, h) for h in frontier]
            else:
                results = list(pool.map(lambda h: attempt(t, h), frontier))
            nxt = []
            for h, sol in zip(frontier, results):
                if isinstance(sol, NoFixedPointFound):
                    if not h:
                        raise sol
                    log.warning("stage %d node %s unsolved: %s", t, h, sol)
                    profile.unsolved[h] = str(sol)
                    continue
                profile.prescriptions[h] = sol.gamma
                profile.values[h] = sol.values
                profile.residuals[h] = sol.residual
                if t == game.horizon:
                    continue
                for a in game.joint_actions:
                    child = h + (a,)
                    system.beliefs[child] = update_vector(
                        system.beliefs[h],
                        sol.gamma,
                        a,
                        game.kernels[t - 1],
                        generator.config.degeneracy_tolerance,
                    )
                    nxt.append(child)
            frontier = nxt
    finally:
        if pool is not None:
            pool.shutdown()
    return profile, system
