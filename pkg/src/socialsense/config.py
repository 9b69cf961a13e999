"""Scenario configuration: a flat ``key = value`` format with dotted sections.

Example::

    scenario = qd-social
    seed = 1
    model.transition = 1 0; 0.05 0.95
    model.obs_likelihood = 0.9 0.1; 0.1 0.9

Matrices list rows separated by ``;`` with entries separated by spaces or
commas. ``#`` starts a comment. Keys may appear once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from socialsense.belief import ModelParams, model_problems

KINDS = ("social-learning", "reputation", "qd-classic", "qd-social", "privacy", "game")


class ConfigError(Exception):
    pass


class ParseError(ConfigError):
    def __init__(self, path, lineno: Optional[int], message: str):
        self.path, self.lineno = str(path), lineno
        where = f"{path}:{lineno}" if lineno else str(path)
        super().__init__(f"{where}: {message}")


class ValidationError(ConfigError):
    def __init__(self, path, problems: list[str]):
        self.path = str(path)
        self.problems = list(problems)
        super().__init__(f"{path}: " + "; ".join(self.problems))


def _matrix(text: str) -> np.ndarray:
    rows = [r.replace(",", " ").split() for r in text.split(";") if r.strip()]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError("rows must be non-empty and of equal length")
    return np.array([[float(v) for v in r] for r in rows])


def _vector(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.replace(",", " ").split()])


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


PARSERS = {"matrix": _matrix, "vector": _vector, "ints": _ints, "int": int, "float": float, "str": str.strip, "bool": _bool}

MODEL_KEYS = {
    "model.transition": ("matrix", False, None),
    "model.obs_likelihood": ("matrix", True, None),
    "model.costs": ("matrix", False, None),
    "model.prior": ("vector", True, None),
    "model.reveal": ("bool", False, False),
}
SOLVER_KEYS = {
    "solver.grid_size": ("int", False, 1000),
    "solver.max_iters": ("int", False, 200),
    "solver.tolerance": ("float", False, 1e-9),
    "solver.init": ("str", False, "zero"),
}
COMMON = {"scenario": ("str", True, None), "seed": ("int", False, 0)}

SCHEMAS: dict[str, dict[str, tuple]] = {
    "social-learning": {**MODEL_KEYS, "run.horizon": ("int", True, None)},
    "reputation": {
        **MODEL_KEYS,
        "graph.file": ("str", True, None),
        "reputation.fusion": ("str", False, "fair"),
        "reputation.nodes": ("int", False, None),
    },
    "qd-classic": {**MODEL_KEYS, **SOLVER_KEYS, "detection.delay": ("float", True, None), "detection.false_alarm": ("float", True, None)},
    "qd-social": {**MODEL_KEYS, **SOLVER_KEYS, "detection.delay": ("float", True, None), "detection.false_alarm": ("float", True, None)},
    "privacy": {
        **MODEL_KEYS,
        **SOLVER_KEYS,
        "solver.max_iters": ("int", False, 1000),
        "privacy.discount": ("float", True, None),
        "privacy.target_state": ("int", False, 1),
        "privacy.herd_costs": ("matrix", False, None),
        "privacy.rollouts": ("int", False, 0),
        "privacy.rollout_horizon": ("int", False, 100),
    },
    "game": {
        "game.actions": ("ints", True, None),
        "game.steps": ("int", True, None),
        "game.checkpoints": ("ints", False, []),
        "game.normalizers": ("vector", False, None),
    },
}


@dataclass
class ScenarioConfig:
    kind: str
    seed: int
    values: dict[str, Any]
    path: Path
    text: str = ""
    model: Optional[ModelParams] = None
    extras: dict[str, Any] = field(default_factory=dict)

    def get(self, key: str, default=None):
        return self.values.get(key, default)


def read_pairs(path) -> list[tuple[int, str, str]]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(path, None, f"cannot read config: {exc.strerror}") from exc
    pairs = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(path, lineno, f"expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParseError(path, lineno, "empty key")
        if key in seen:
            raise ParseError(path, lineno, f"duplicate key {key!r} (first on line {seen[key]})")
        seen[key] = lineno
        pairs.append((lineno, key, value))
    return pairs


def parse_config(path) -> ScenarioConfig:
    """Parse and fully validate a scenario file.

    Raises :class:`ParseError` for syntax problems, unknown keys or an
    unknown scenario kind, and :class:`ValidationError` listing every
    violated precondition otherwise.
    """
    path = Path(path)
    pairs = read_pairs(path)
    lookup = {k: (ln, v) for ln, k, v in pairs}
    if "scenario" not in lookup:
        raise ParseError(path, None, "missing 'scenario' key")
    ln, kind = lookup["scenario"]
    if kind not in KINDS:
        raise ParseError(path, ln, f"unknown scenario kind {kind!r}; expected one of {', '.join(KINDS)}")
    schema = {**COMMON, **SCHEMAS[kind]}

    values: dict[str, Any] = {}
    problems: list[str] = []
    n_players = None
    if kind == "game" and "game.actions" in lookup:
        try:
            n_players = len(_ints(lookup["game.actions"][1]))
        except ValueError:
            pass
    for ln, key, raw in pairs:
        if key in schema:
            typ = schema[key][0]
        elif kind == "game" and key.startswith("game.utility."):
            typ = "vector"
        else:
            raise ParseError(path, ln, f"unknown key {key!r} for scenario {kind}")
        try:
            values[key] = PARSERS[typ](raw)
        except ValueError as exc:
            problems.append(f"line {ln}: {key}: cannot parse {typ}: {exc}")
    for key, (typ, required, default) in schema.items():
        if key not in lookup:
            if required:
                problems.append(f"missing required key {key}")
            else:
                values[key] = default

    cfg = ScenarioConfig(kind, values.get("seed", 0) or 0, values, path, path.read_text())
    if problems:
        raise ValidationError(path, problems)
    problems += _validate(cfg, n_players)
    if problems:
        raise ValidationError(path, problems)
    return cfg


def _positive(values, key, problems, minimum=1):
    v = values.get(key)
    if v is not None and v < minimum:
        problems.append(f"{key} must be >= {minimum}, got {v}")


def _validate(cfg: ScenarioConfig, n_players) -> list[str]:
    v = cfg.values
    problems: list[str] = []
    if not 0 <= cfg.seed < 2**64:
        problems.append("seed must be an unsigned 64-bit integer")
    if cfg.kind != "game":
        B = v["model.obs_likelihood"]
        X = B.shape[0]
        P = v["model.transition"]
        if P is None:
            if cfg.kind in ("qd-classic", "qd-social"):
                problems.append("missing required key model.transition")
            P = np.eye(X)
        msgs = model_problems(P, B, v["model.costs"], v["model.prior"], v["model.reveal"])
        problems += [f"model: {m}" for m in msgs]
        if not msgs:
            cfg.model = ModelParams(P, B, v["model.costs"], v["model.prior"], v["model.reveal"])
    if cfg.kind == "social-learning":
        _positive(v, "run.horizon", problems)
    if cfg.kind in ("qd-classic", "qd-social", "privacy"):
        _positive(v, "solver.grid_size", problems, 2)
        _positive(v, "solver.max_iters", problems)
        if v["solver.tolerance"] < 0:
            problems.append("solver.tolerance must be >= 0 (0 runs the full iteration budget)")
        if v["solver.init"] not in ("zero", "stop"):
            problems.append("solver.init must be 'zero' or 'stop'")
        if v["model.obs_likelihood"].shape[0] != 2:
            problems.append("stopping solvers need exactly two states")
    if cfg.kind in ("qd-classic", "qd-social"):
        if v["detection.delay"] < 0 or v["detection.false_alarm"] < 0:
            problems.append("detection penalties must be nonnegative")
        elif v["detection.delay"] == 0 and v["detection.false_alarm"] == 0:
            problems.append("at least one detection penalty must be positive")
        P = v["model.transition"]
        if P is not None and P.shape[0] == 2 and not np.array_equal(P[0], [1.0, 0.0]):
            problems.append("model.transition row 1 must be (1, 0): state 1 is the absorbing post-change state")
    if cfg.kind == "privacy":
        if not 0 <= v["privacy.discount"] < 1:
            problems.append("privacy.discount must lie in [0, 1)")
        if v["privacy.target_state"] not in (1, 2):
            problems.append("privacy.target_state must be 1 or 2")
        _positive(v, "privacy.rollouts", problems, 0)
        _positive(v, "privacy.rollout_horizon", problems)
    if cfg.kind == "reputation":
        if v["reputation.fusion"] not in ("fair", "naive"):
            problems.append("reputation.fusion must be 'fair' or 'naive'")
        graph_file = cfg.path.parent / v["graph.file"]
        if not graph_file.is_file():
            problems.append(f"graph.file {graph_file} does not exist")
        cfg.extras["graph_file"] = graph_file
        _positive(v, "reputation.nodes", problems)
    if cfg.kind == "game":
        actions = v["game.actions"]
        if any(a < 1 for a in actions):
            problems.append("game.actions entries must be >= 1")
        _positive(v, "game.steps", problems)
        size = int(np.prod(actions)) if actions else 0
        for l in range(1, (n_players or 0) + 1):
            table = v.get(f"game.utility.{l}")
            if table is None:
                problems.append(f"missing required key game.utility.{l}")
            elif table.size != size:
                problems.append(f"game.utility.{l} needs {size} entries in row-major profile order, got {table.size}")
        extra = [k for k in v if k.startswith("game.utility.") and not (k[13:].isdigit() and 1 <= int(k[13:]) <= (n_players or 0))]
        problems += [f"{k} does not match a player in game.actions" for k in extra]
        if v["game.normalizers"] is not None:
            C = v["game.normalizers"]
            if len(C) != len(actions):
                problems.append("game.normalizers needs one value per player")
            elif np.any(C <= 0):
                problems.append("game.normalizers must be positive")
        if any(c < 1 for c in v["game.checkpoints"]):
            problems.append("game.checkpoints must be >= 1")
    return problems
