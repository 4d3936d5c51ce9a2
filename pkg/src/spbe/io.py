"""JSON documents for games and constructed equilibria.

A game document looks like::

    {
      "players": 2,
      "horizon": 2,
      "type_spaces": [["low", "high"], 2],
      "action_spaces": [2, 2],
      "priors": [[0.9, 0.1], [0.9, 0.1]],
      "kernels": null,
      "rewards": [<nested list of shape X0 x X1 x A0 x A1>, ...]
    }

``type_spaces`` entries are either a count or a list of labels. ``kernels``
is optional; when present it lists, for each stage ``t = 1..T-1``, one entry
per player which is either ``null`` (static type) or a nested list of shape
``(X^i, A^0, ..., A^{N-1}, X^i)``. Floats are written with ``repr``, so
reading a written document gives back bit-identical arrays.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Any

import numpy as np

from .belief import BeliefVector
from .game import GameSpec, ValidatedGame, validate_game
from .solver import BeliefSystem, FixedPointConfig, StrategyProfile

GAME_FORMAT = "spbe-game/1"
EQUILIBRIUM_FORMAT = "spbe-equilibrium/1"
REPORT_FORMAT = "spbe-verification/1"

_GAME_KEYS = ("players", "horizon", "type_spaces", "action_spaces", "priors", "rewards")


class ParseError(ValueError):
    """Malformed document. ``line`` is 1-based, or ``None`` if unknown."""

    def __init__(self, line: int | None, message: str):
        self.line = line
        self.message = message
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


def _line_of(text: str, key: str) -> int | None:
    m = re.search(rf'"{re.escape(key)}"\s*:', text)
    return None if m is None else text.count("\n", 0, m.start()) + 1


def _loads(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.lineno, exc.msg) from None


# --------------------------------------------------------------------------
# games
# --------------------------------------------------------------------------


def game_spec_from_dict(doc: dict, text: str = "") -> GameSpec:
    """Build an unvalidated :class:`GameSpec` from a parsed game document."""
    if not isinstance(doc, dict):
        raise ParseError(1, "game document must be a JSON object")
    for key in _GAME_KEYS:
        if key not in doc:
            raise ParseError(None, f"missing key {key!r}")
    fmt = doc.get("format", GAME_FORMAT)
    if fmt != GAME_FORMAT:
        raise ParseError(_line_of(text, "format"), f"unsupported format {fmt!r}")

    sizes, labels = [], []
    for entry in doc["type_spaces"] if isinstance(doc["type_spaces"], list) else [None]:
        if isinstance(entry, list):
            sizes.append(len(entry))
            labels.append([str(s) for s in entry])
        elif isinstance(entry, int) and not isinstance(entry, bool):
            sizes.append(entry)
            labels.append(None)
        else:
            raise ParseError(
                _line_of(text, "type_spaces"), "type_spaces entries must be counts or label lists"
            )
    type_labels = None
    if any(lab is not None for lab in labels):
        type_labels = [
            lab if lab is not None else [str(k) for k in range(n)] for lab, n in zip(labels, sizes)
        ]

    def arrays(key: str, value: Any) -> Any:
        try:
            return np.asarray(value, dtype=float)
        except (TypeError, ValueError):
            raise ParseError(_line_of(text, key), f"{key} must hold numeric arrays") from None

    action_sizes = doc["action_spaces"]
    if not isinstance(action_sizes, list):
        raise ParseError(_line_of(text, "action_spaces"), "action_spaces must be a list")
    kernels = doc.get("kernels")
    if kernels is not None:
        if not isinstance(kernels, list):
            raise ParseError(_line_of(text, "kernels"), "kernels must be a list or null")
        kernels = [
            None
            if stage is None
            else [None if k is None else arrays("kernels", k) for k in stage]
            for stage in kernels
        ]
    return GameSpec(
        num_players=doc["players"],
        horizon=doc["horizon"],
        type_space_sizes=sizes,
        action_space_sizes=action_sizes,
        priors=[arrays("priors", p) for p in doc["priors"]],
        rewards=[arrays("rewards", r) for r in doc["rewards"]],
        kernels=kernels,
        type_labels=type_labels,
    )


def game_from_dict(doc: dict, text: str = "") -> ValidatedGame:
    return validate_game(game_spec_from_dict(doc, text))


def game_to_dict(game: ValidatedGame) -> dict:
    if game.type_labels is None:
        type_spaces: list = list(game.type_sizes)
    else:
        type_spaces = [list(lab) for lab in game.type_labels]
    kernels = None
    if any(any(flags) for flags in game.explicit_kernels):
        kernels = [
            [k.tolist() if flag else None for k, flag in zip(stage, flags)]
            for stage, flags in zip(game.kernels, game.explicit_kernels)
        ]
    return {
        "format": GAME_FORMAT,
        "players": game.num_players,
        "horizon": game.horizon,
        "type_spaces": type_spaces,
        "action_spaces": list(game.action_sizes),
        "priors": [p.tolist() for p in game.priors],
        "kernels": kernels,
        "rewards": [r.tolist() for r in game.rewards],
    }


def load_game(path: str | Path) -> ValidatedGame:
    text = Path(path).read_text()
    return game_from_dict(_loads(text), text)


def dump_game(game: ValidatedGame, path: str | Path) -> None:
    Path(path).write_text(json.dumps(game_to_dict(game), indent=1) + "\n")


# --------------------------------------------------------------------------
# equilibria
# --------------------------------------------------------------------------


def _history_to_json(h) -> list[list[int]]:
    return [list(a) for a in h]


def _history_from_json(h) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(int(v) for v in a) for a in h)


def equilibrium_to_dict(
    game: ValidatedGame,
    profile: StrategyProfile,
    beliefs: BeliefSystem,
    config: FixedPointConfig,
    run: dict | None = None,
) -> dict:
    """Document with one entry per public-history node of the constructed tree."""
    nodes = []
    for h in sorted(beliefs.beliefs, key=lambda h: (len(h), h)):
        entry: dict[str, Any] = {
            "history": _history_to_json(h),
            "belief": beliefs[h].tolist(),
        }
        if h in profile.prescriptions:
            entry["prescriptions"] = [g.tolist() for g in profile.prescriptions[h]]
            entry["values"] = [v.tolist() for v in profile.values[h]]
            entry["residual"] = profile.residuals[h]
        elif h in profile.unsolved:
            entry["unsolved"] = profile.unsolved[h]
        else:
            # last-stage children carry no node of their own
            continue
        nodes.append(entry)
    return {
        "format": EQUILIBRIUM_FORMAT,
        "config": config.to_dict(),
        "run": dict(run or {}),
        "game": game_to_dict(game),
        "nodes": nodes,
    }


def equilibrium_from_dict(
    doc: dict, text: str = ""
) -> tuple[ValidatedGame, StrategyProfile, BeliefSystem, FixedPointConfig]:
    if not isinstance(doc, dict) or doc.get("format") != EQUILIBRIUM_FORMAT:
        raise ParseError(_line_of(text, "format") or 1, f"expected format {EQUILIBRIUM_FORMAT!r}")
    for key in ("game", "nodes", "config"):
        if key not in doc:
            raise ParseError(None, f"missing key {key!r}")
    game = game_from_dict(doc["game"], text)
    try:
        config = FixedPointConfig.from_dict(doc["config"])
    except (TypeError, ValueError) as exc:
        raise ParseError(_line_of(text, "config"), f"bad config: {exc}") from None
    profile, beliefs = StrategyProfile(), BeliefSystem()
    for entry in doc["nodes"]:
        try:
            h = _history_from_json(entry["history"])
            beliefs.beliefs[h] = BeliefVector(tuple(np.asarray(m, dtype=float) for m in entry["belief"]))
            if "unsolved" in entry:
                profile.unsolved[h] = str(entry["unsolved"])
                continue
            profile.prescriptions[h] = tuple(np.asarray(g, dtype=float) for g in entry["prescriptions"])
            profile.values[h] = tuple(np.asarray(v, dtype=float) for v in entry["values"])
            profile.residuals[h] = float(entry["residual"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(_line_of(text, "nodes"), f"bad node entry: {exc!r}") from None
    return game, profile, beliefs, config


def dump_equilibrium(path: str | Path, *args, **kwargs) -> None:
    Path(path).write_text(json.dumps(equilibrium_to_dict(*args, **kwargs), indent=1) + "\n")


def load_equilibrium(path: str | Path):
    text = Path(path).read_text()
    return equilibrium_from_dict(_loads(text), text)
