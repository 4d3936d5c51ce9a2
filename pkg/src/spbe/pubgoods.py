"""Two-stage public goods game with private contribution costs.

Two players each hold a cost ``x in {xL, xH}`` with ``0 < xL < 1 < xH``,
drawn once with ``P(xH) = q``. In both stages each player decides whether to
contribute (action 1) or not (action 0). A non-contributor earns 1 if the
other contributes and 0 otherwise; a contributor earns ``1 - x``.

Type index 0 is ``xL`` and 1 is ``xH``. Beliefs in this module are scalars
``pi^i = P(X^i = xH)``; :func:`to_belief` and :func:`from_belief` convert to
and from :class:`~spbe.belief.BeliefVector`.

Prescriptions are written as tuples ``(p1L, p2L, p1H, p2H)`` of
contribution probabilities.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .belief import BeliefVector, GammaProfile, update_vector
from .game import GameSpec, ValidatedGame, validate_game
from .solver import (
    EquilibriumGenerator,
    FixedPointConfig,
    StageSolution,
    forward_construct,
    pure_profiles,
    solve_stage_fixed_point,
)

LOW, HIGH = 0, 1
Prescription = tuple[float, float, float, float]


@dataclass(frozen=True)
class PubGoodsParams:
    q: float = 0.1
    xL: float = 0.2
    xH: float = 1.2

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if not 0.0 < self.xL < 1.0 < self.xH:
            raise ValueError(f"need 0 < xL < 1 < xH, got xL={self.xL}, xH={self.xH}")


def build_spec(params: PubGoodsParams) -> GameSpec:
    costs = (params.xL, params.xH)
    rewards = np.zeros((2, 2, 2, 2, 2))
    for i in range(2):
        for x1, x2, a1, a2 in np.ndindex(2, 2, 2, 2):
            x, a = (x1, x2), (a1, a2)
            rewards[i, x1, x2, a1, a2] = 1.0 - costs[x[i]] if a[i] == 1 else float(a[1 - i])
    prior = [1.0 - params.q, params.q]
    return GameSpec(
        num_players=2,
        horizon=2,
        type_space_sizes=[2, 2],
        action_space_sizes=[2, 2],
        priors=[prior, prior],
        rewards=list(rewards),
        kernels=None,
        type_labels=[["xL", "xH"], ["xL", "xH"]],
    )


def build_game(params: PubGoodsParams) -> ValidatedGame:
    return validate_game(build_spec(params))


# --------------------------------------------------------------------------
# conversions
# --------------------------------------------------------------------------


def to_belief(pi1: float, pi2: float) -> BeliefVector:
    return BeliefVector((np.array([1.0 - pi1, pi1]), np.array([1.0 - pi2, pi2])))


def from_belief(belief: BeliefVector) -> tuple[float, float]:
    return float(belief[0][HIGH]), float(belief[1][HIGH])


def to_gamma(p: Sequence[float]) -> GammaProfile:
    p1L, p2L, p1H, p2H = (float(v) for v in p)
    return (
        np.array([[1.0 - p1L, p1L], [1.0 - p1H, p1H]]),
        np.array([[1.0 - p2L, p2L], [1.0 - p2H, p2H]]),
    )


def from_gamma(gamma: GammaProfile) -> Prescription:
    g1, g2 = gamma
    return (float(g1[LOW, 1]), float(g2[LOW, 1]), float(g1[HIGH, 1]), float(g2[HIGH, 1]))


def format_prescription(p: Sequence[float]) -> str:
    return "(" + ",".join(f"{v:.6g}" for v in p) + ")"


# --------------------------------------------------------------------------
# analytic stage-2 fixed points
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Theta2Solution:
    """One closed-form stage-2 fixed point.

    ``free`` names the coordinate (index into the prescription tuple) that
    may take any value in ``interval``; it is ``None`` for point solutions.
    ``values[i]`` is ``(V(xL), V(xH))`` for player ``i``, evaluated at the
    representative prescription, and ``value_fn`` gives the values at any
    admissible free coordinate.
    """

    label: int
    prescription: Prescription
    values: tuple[tuple[float, float], tuple[float, float]]
    free: int | None = None
    interval: tuple[float, float] | None = None
    pi: tuple[float, float] = (0.0, 0.0)
    xL: float = 0.0

    def values_at(self, p: Sequence[float]) -> tuple[tuple[float, float], tuple[float, float]]:
        if self.free is None:
            return self.values
        return _boundary_values(self.label, self.pi, self.xL, p[self.free])

    def contains(self, p: Sequence[float], tol: float = 1e-6) -> bool:
        for k in range(4):
            if k == self.free:
                lo, hi = self.interval
                if not lo - tol <= p[k] <= hi + tol:
                    return False
            elif abs(p[k] - self.prescription[k]) > tol:
                return False
        return True


def _ratio(num: float, den: float) -> float:
    return math.inf if den <= 0.0 else num / den


def _boundary_values(label, pi, xL, p):
    pi1, pi2 = pi
    if label == 4:  # (1, p, 0, 0) at pi1 = xL
        return ((1 - xL, (1 - pi2) * p), (1 - xL, 1 - pi1))
    return ((1 - xL, 1 - pi2), (1 - xL, (1 - pi1) * p))  # (p, 1, 0, 0) at pi2 = xL


def analytic_theta2(belief2: tuple[float, float], params: PubGoodsParams) -> list[Theta2Solution]:
    """Every closed-form stage-2 fixed point whose region contains ``belief2``.

    High types never contribute since ``1 - xH < 0``. Regions overlap on
    their boundaries, so several solutions may apply.
    """
    pi1, pi2 = (float(v) for v in belief2)
    if not (0.0 <= pi1 <= 1.0 and 0.0 <= pi2 <= 1.0):
        raise ValueError(f"belief coordinates must lie in [0, 1], got {belief2}")
    xL = params.xL
    c = 1.0 - xL
    out = []
    if pi2 <= xL:
        out.append(Theta2Solution(1, (0.0, 1.0, 0.0, 0.0), ((1 - pi2, 1 - pi2), (c, 0.0))))
    if pi1 <= xL:
        out.append(Theta2Solution(2, (1.0, 0.0, 0.0, 0.0), ((c, 0.0), (1 - pi1, 1 - pi1))))
    if pi1 >= xL and pi2 >= xL:
        out.append(Theta2Solution(3, (1.0, 1.0, 0.0, 0.0), ((c, 1 - pi2), (c, 1 - pi1))))
    if pi1 == xL:
        hi = min(1.0, _ratio(c, 1 - pi2))
        out.append(
            Theta2Solution(
                4,
                (1.0, hi, 0.0, 0.0),
                _boundary_values(4, (pi1, pi2), xL, hi),
                free=1,
                interval=(0.0, hi),
                pi=(pi1, pi2),
                xL=xL,
            )
        )
    if pi2 == xL:
        hi = min(1.0, _ratio(c, 1 - pi1))
        out.append(
            Theta2Solution(
                5,
                (hi, 1.0, 0.0, 0.0),
                _boundary_values(5, (pi1, pi2), xL, hi),
                free=0,
                interval=(0.0, hi),
                pi=(pi1, pi2),
                xL=xL,
            )
        )
    if pi1 <= xL and pi2 <= xL:
        out.append(
            Theta2Solution(6, (c / (1 - pi1), c / (1 - pi2), 0.0, 0.0), ((c, c), (c, c)))
        )
    return out


def canonical_theta2_prescription(belief2: tuple[float, float], params: PubGoodsParams) -> tuple[str, Prescription]:
    """Single-valued stage-2 selection; first matching branch wins on overlaps."""
    pi1, pi2 = (float(v) for v in belief2)
    xL = params.xL
    if pi1 < xL and pi2 < xL:
        return "mixed", ((1 - xL) / (1 - pi1), (1 - xL) / (1 - pi2), 0.0, 0.0)
    if pi1 <= xL and pi2 >= xL:
        return "(1,0,0,0)", (1.0, 0.0, 0.0, 0.0)
    if pi1 >= xL and pi2 <= xL:
        return "(0,1,0,0)", (0.0, 1.0, 0.0, 0.0)
    return "(1,1,0,0)", (1.0, 1.0, 0.0, 0.0)


def canonical_theta2(belief2: tuple[float, float], params: PubGoodsParams) -> GammaProfile:
    return to_gamma(canonical_theta2_prescription(belief2, params)[1])


def canonical_rule(params: PubGoodsParams):
    """``canonical_theta2`` as a rule on belief vectors, for the generator."""
    return lambda belief: canonical_theta2(from_belief(belief), params)


# --------------------------------------------------------------------------
# stage 1 and the full pipeline
# --------------------------------------------------------------------------


def stage1_seeds(game: ValidatedGame) -> tuple[GammaProfile, ...]:
    """Pure profiles followed by the uniform profile."""
    seeds = list(pure_profiles(game))
    seeds.append((np.full((2, 2), 0.5), np.full((2, 2), 0.5)))
    return tuple(seeds)


def solve_stage1(
    params: PubGoodsParams, config: FixedPointConfig | None = None
) -> list[StageSolution]:
    """All distinct stage-1 fixed points when stage 2 follows the canonical rule."""
    game = build_game(params)
    config = config or FixedPointConfig(seed_list=stage1_seeds(game))
    gen = EquilibriumGenerator(game, config, fixed_stages={2: canonical_rule(params)})
    return solve_stage_fixed_point(
        1, gen.root_belief(), gen.continuation(1), game, config, enumerate_all=True
    )


def symmetric_stage1_point(params: PubGoodsParams) -> float:
    """Low-type contribution probability of the symmetric stage-1 mixture."""
    return (1 - params.xL) / ((1 - params.q) * (1 + params.xL))


def stated_symmetric_belief(params: PubGoodsParams) -> float:
    """``q(1+xL) / (q(1+xL) + 1 - xL)`` as printed for the symmetric equilibrium."""
    num = params.q * (1 + params.xL)
    return num / (num + 1 - params.xL)


def bayes_symmetric_belief(params: PubGoodsParams) -> float:
    """Posterior on ``xH`` after a non-contribution under the symmetric mixture."""
    p = symmetric_stage1_point(params)
    return params.q / (params.q + (1 - params.q) * (1 - p))


def symmetric_point_exists(params: PubGoodsParams) -> bool:
    """Whether the symmetric formula point is a stage-1 fixed point.

    Requires ``p < 1`` (``xL > q/(2-q)``) and that the posterior after a
    non-contribution stays strictly above ``xL``, so that the canonical rule
    plays ``(1,1,0,0)`` there; the indifference behind ``p`` relies on it.
    """
    p = symmetric_stage1_point(params)
    return p < 1.0 and bayes_symmetric_belief(params) > params.xL


def equilibrium_for(
    params: PubGoodsParams, stage1: Prescription, config: FixedPointConfig | None = None
):
    """Forward-construct the equilibrium whose stage-1 prescription is ``stage1``."""
    game = build_game(params)
    base = config or FixedPointConfig()
    cfg = FixedPointConfig(**{**base.__dict__, "seed_list": (to_gamma(stage1),)})
    gen = EquilibriumGenerator(game, cfg, fixed_stages={2: canonical_rule(params)})
    profile, beliefs = forward_construct(game, gen)
    return game, gen, profile, beliefs


@dataclass
class Check:
    name: str
    expected: object
    actual: object
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "expected": self.expected, "actual": self.actual, "passed": self.passed}


@dataclass
class ExampleReport:
    params: PubGoodsParams
    stage1_solutions: list[Prescription]
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "params": self.params.__dict__,
            "stage1_solutions": [list(p) for p in self.stage1_solutions],
            "checks": [c.to_dict() for c in self.checks],
            "passed": self.passed,
        }

    def to_text(self) -> str:
        lines = [
            f"public goods game q={self.params.q} xL={self.params.xL} xH={self.params.xH}",
            "stage-1 fixed points: " + ", ".join(format_prescription(p) for p in self.stage1_solutions),
            "",
        ]
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            lines.append(f"[{mark}] {c.name}: expected {c.expected}, got {c.actual}")
        lines.append("")
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def _beliefs_of(beliefs) -> dict[str, list[float]]:
    out = {}
    for a in ((0, 0), (0, 1), (1, 0), (1, 1)):
        out[f"{a[0]}{a[1]}"] = list(from_belief(beliefs[(a,)]))
    return out


def _close(a: Sequence[float], b: Sequence[float], tol: float) -> bool:
    return all(abs(x - y) <= tol for x, y in zip(a, b))


def reproduce_paper_equilibrium(params: PubGoodsParams = PubGoodsParams(), tol: float = 1e-6) -> ExampleReport:
    """Rebuild the asymmetric and symmetric equilibria and check them.

    Belief and prescription checks compare against the closed-form
    expressions; both profiles are run through the sequential-rationality
    verifier.
    """
    from .verify import check_sequential_rationality

    q = params.q
    sols = [from_gamma(s.gamma) for s in solve_stage1(params)]
    report = ExampleReport(params, sols)
    add = report.checks.append

    asym = (0.0, 1.0, 0.0, 0.0)
    twin = (1.0, 0.0, 0.0, 0.0)
    p_sym = symmetric_stage1_point(params)
    sym = (p_sym, p_sym, 0.0, 0.0)
    for name, target in (("asymmetric", asym), ("antisymmetric", twin)):
        add(Check(f"stage-1 fixed point {name}", list(target), None, False))
        hit = next((s for s in sols if _close(s, target, tol)), None)
        report.checks[-1].actual = None if hit is None else list(hit)
        report.checks[-1].passed = hit is not None
    hit = next((s for s in sols if _close(s, sym, tol)), None)
    add(Check("stage-1 symmetric fixed point", list(sym), None if hit is None else list(hit), hit is not None))

    game, _, prof, bel = equilibrium_for(params, asym)
    got = _beliefs_of(bel)
    want = {"00": [q, 1.0], "01": [q, 0.0], "10": [q, 1.0], "11": [q, 0.0]}
    for k in want:
        add(Check(f"asymmetric belief mu2[{k}]", want[k], got[k], _close(got[k], want[k], 1e-12)))
    rep = check_sequential_rationality(game, prof, bel, tol=1e-8)
    add(Check("asymmetric sequential rationality (max gap)", "<= 1e-08", rep.max_gap, rep.passed))

    if hit is not None:
        game, _, prof, bel = equilibrium_for(params, hit)
        got = _beliefs_of(bel)
        p = stated_symmetric_belief(params)
        want = {"00": [p, p], "01": [p, 0.0], "10": [0.0, p], "11": [0.0, 0.0]}
        for k in want:
            add(Check(f"symmetric belief mu2[{k}]", want[k], got[k], _close(got[k], want[k], tol)))
        rep = check_sequential_rationality(game, prof, bel, tol=1e-8)
        add(Check("symmetric sequential rationality (max gap)", "<= 1e-08", rep.max_gap, rep.passed))
    return report


# --------------------------------------------------------------------------
# region maps
# --------------------------------------------------------------------------


def grid_points(resolution: float) -> list[float]:
    n = round(1.0 / resolution)
    if n < 1 or abs(n * resolution - 1.0) > 1e-9:
        raise ValueError(f"resolution must divide 1 evenly, got {resolution}")
    return [k / n for k in range(n + 1)]


def _fmt(v: float) -> str:
    return f"{v:.12g}"


def _map_rows(args) -> list[list[str]]:
    pi1, pis, params, mode = args
    rows = []
    for pi2 in pis:
        if mode == "canonical":
            label, p = canonical_theta2_prescription((pi1, pi2), params)
            rows.append([_fmt(pi1), _fmt(pi2), *(_fmt(v) for v in p), label])
        else:
            sols = analytic_theta2((pi1, pi2), params)
            cols = []
            for k in range(4):
                parts = []
                for s in sols:
                    if k == s.free:
                        parts.append(f"{_fmt(s.interval[0])}:{_fmt(s.interval[1])}")
                    else:
                        parts.append(_fmt(s.prescription[k]))
                cols.append("|".join(parts))
            rows.append([_fmt(pi1), _fmt(pi2), *cols, "|".join(str(s.label) for s in sols)])
    return rows


def emit_region_map(
    resolution: float = 0.01,
    params: PubGoodsParams = PubGoodsParams(),
    mode: str = "canonical",
    workers: int = 1,
) -> str:
    """CSV over the ``(pi1, pi2)`` grid of stage-2 prescriptions.

    ``canonical`` writes the selected prescription and its branch label;
    ``all_solutions`` writes every applicable closed-form solution, joined
    by ``|`` and aligned with the ``labels`` column (free coordinates as
    ``lo:hi``). Output does not depend on ``workers``.
    """
    if mode not in ("canonical", "all_solutions"):
        raise ValueError(f"unknown mode {mode!r}")
    pts = grid_points(resolution)
    jobs = [(pi1, pts, params, mode) for pi1 in pts]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            chunks = list(ex.map(_map_rows, jobs))
    else:
        chunks = [_map_rows(j) for j in jobs]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pi1", "pi2", "p1L", "p2L", "p1H", "p2H", "labels"])
    for chunk in chunks:
        w.writerows(chunk)
    return buf.getvalue()


def child_beliefs(params: PubGoodsParams, stage1: Prescription) -> dict[str, tuple[float, float]]:
    """Stage-2 beliefs after each stage-1 joint action under ``stage1``."""
    prior = to_belief(params.q, params.q)
    gamma = to_gamma(stage1)
    return {
        f"{a1}{a2}": from_belief(update_vector(prior, gamma, (a1, a2), None))
        for a1 in (0, 1)
        for a2 in (0, 1)
    }
