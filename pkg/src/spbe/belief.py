"""Factorized common-information beliefs and their Bayes updates.

The public belief over the joint type is always a product of per-player
marginals. Each marginal is updated from its own prescription and the
observed joint action only, so the update never couples players.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEGENERACY_TOL = 1e-12
CLAMP_TOL = 1e-15
DISTRIBUTION_ATOL = 1e-9
DEFAULT_RESOLUTION = 1e-9

# gamma^i as an array of shape (X^i, A^i); a profile is one per player.
PartialFunction = np.ndarray
GammaProfile = tuple[np.ndarray, ...]


class DimensionMismatch(ValueError):
    pass


def check_distribution(values: np.ndarray, atol: float = DISTRIBUTION_ATOL) -> None:
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ValueError(f"distribution must be a non-empty vector, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("distribution has non-finite entries")
    if values.min() < -CLAMP_TOL:
        raise ValueError(f"distribution has negative entry {values.min()!r}")
    if abs(values.sum() - 1.0) > atol:
        raise ValueError(f"distribution sums to {values.sum()!r}")


def clean_distribution(values: np.ndarray) -> np.ndarray:
    """Clamp float-noise negatives (>= -1e-15) to zero and renormalize."""
    v = np.asarray(values, dtype=float).copy()
    if v.min() < -CLAMP_TOL:
        raise ValueError(f"negative probability {v.min()!r} beyond clamp tolerance")
    v[v < 0.0] = 0.0
    return v / v.sum()


@dataclass(frozen=True, eq=False)
class BeliefVector:
    """Per-player marginals ``(pi^i)``; the joint is their product."""

    marginals: tuple[np.ndarray, ...]

    def __post_init__(self):
        ms = []
        for m in self.marginals:
            m = np.array(m, dtype=float)
            check_distribution(m)
            m.flags.writeable = False
            ms.append(m)
        object.__setattr__(self, "marginals", tuple(ms))

    @classmethod
    def from_priors(cls, priors: Sequence[np.ndarray]) -> "BeliefVector":
        return cls(tuple(priors))

    def __len__(self) -> int:
        return len(self.marginals)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.marginals[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, BeliefVector) or len(other) != len(self):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.marginals, other.marginals))

    __hash__ = None  # type: ignore[assignment]

    def joint(self) -> np.ndarray:
        """Dense joint distribution, axes ordered by player."""
        out = np.ones(())
        for m in self.marginals:
            out = np.multiply.outer(out, m)
        return out

    def tolist(self) -> list[list[float]]:
        return [m.tolist() for m in self.marginals]

    def __repr__(self) -> str:
        inner = ", ".join(np.array2string(m, precision=6) for m in self.marginals)
        return f"BeliefVector({inner})"


def check_gamma(gamma: GammaProfile, type_sizes: Sequence[int], action_sizes: Sequence[int]) -> None:
    if len(gamma) != len(type_sizes):
        raise DimensionMismatch(f"profile has {len(gamma)} players, expected {len(type_sizes)}")
    for i, g in enumerate(gamma):
        g = np.asarray(g)
        if g.shape != (type_sizes[i], action_sizes[i]):
            raise DimensionMismatch(
                f"player {i} prescription has shape {g.shape}, "
                f"expected {(type_sizes[i], action_sizes[i])}"
            )
        for row in g:
            check_distribution(row)


def update_marginal(
    pi_i: np.ndarray,
    gamma_i: np.ndarray,
    player: int,
    joint_action: Sequence[int],
    kernel_i: np.ndarray | None,
    degeneracy_tol: float = DEGENERACY_TOL,
) -> np.ndarray:
    """Bayes-update player ``player``'s marginal after observing ``joint_action``.

    The posterior over the current type given that ``a^i`` was drawn from
    ``gamma_i`` is pushed through ``kernel_i`` (shape ``(X, *A, X)``; ``None``
    means static types). If the observed action has probability at most
    ``degeneracy_tol`` the observation is ignored and the prior is only
    propagated through the kernel.
    """
    pi_i = np.asarray(pi_i, dtype=float)
    gamma_i = np.asarray(gamma_i, dtype=float)
    a = tuple(int(v) for v in joint_action)
    if gamma_i.ndim != 2 or gamma_i.shape[0] != pi_i.shape[0]:
        raise DimensionMismatch(f"prescription shape {gamma_i.shape} vs belief {pi_i.shape}")
    if not 0 <= a[player] < gamma_i.shape[1]:
        raise DimensionMismatch(f"action {a[player]} outside prescription width {gamma_i.shape[1]}")
    weights = pi_i * gamma_i[:, a[player]]
    denom = weights.sum()
    if denom <= degeneracy_tol:
        post = pi_i
    else:
        post = weights / denom
    if kernel_i is None:
        out = post
    else:
        kernel_i = np.asarray(kernel_i)
        if kernel_i.ndim != len(a) + 2 or kernel_i.shape[0] != pi_i.shape[0]:
            raise DimensionMismatch(f"kernel shape {kernel_i.shape} incompatible with action {a}")
        out = post @ kernel_i[(slice(None),) + a]
    return clean_distribution(out)


def update_vector(
    belief: BeliefVector,
    gamma: GammaProfile,
    joint_action: Sequence[int],
    kernels: Sequence[np.ndarray | None] | None,
    degeneracy_tol: float = DEGENERACY_TOL,
) -> BeliefVector:
    """Apply :func:`update_marginal` to every player."""
    n = len(belief)
    if len(gamma) != n or len(joint_action) != n:
        raise DimensionMismatch("belief, profile and joint action disagree on player count")
    return BeliefVector(
        tuple(
            update_marginal(
                belief[i],
                gamma[i],
                i,
                joint_action,
                None if kernels is None else kernels[i],
                degeneracy_tol,
            )
            for i in range(n)
        )
    )


def quantize_key(
    belief: BeliefVector | Sequence[np.ndarray], resolution: float = DEFAULT_RESOLUTION
) -> tuple:
    """Hashable fixed-point key: every coordinate rounded to ``resolution``."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    marginals = belief.marginals if isinstance(belief, BeliefVector) else belief
    return tuple(
        tuple(int(v) for v in np.rint(np.asarray(m, dtype=float) / resolution))
        for m in marginals
    )


def dequantize_key(key: tuple, resolution: float = DEFAULT_RESOLUTION) -> list[np.ndarray]:
    """Coordinates represented by ``key``; not renormalized."""
    return [np.asarray(k, dtype=float) * resolution for k in key]
