"""Command-line front end: ``socialsense <kind> --config PATH [--seed N] [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 model error raised by an
engine. Failures print a one-line JSON error record to stderr and, when the
output directory is usable, also write it to ``error.json``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from socialsense import __version__
from socialsense.config import KINDS, ConfigError, ParseError, ScenarioConfig, ValidationError, parse_config
from socialsense.detection import (
    DetectionCosts,
    count_policy_switches,
    decision_intervals,
    max_adjacent_jump,
    simulate_privacy,
    solve_classical_qd,
    solve_privacy_stopping,
    solve_social_qd,
    HERD,
)
from socialsense.errors import SocialSenseError
from socialsense.games import GameSpec, run_repeated_game
from socialsense.incest import fusion_weights, read_edge_list, run_reputation_protocol, transitive_closure
from socialsense.social import analyze_trace, run_protocol

EXIT_OK, EXIT_CONFIG, EXIT_MODEL = 0, 2, 3


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


@dataclass
class Table:
    name: str
    header: list[str]
    rows: list[list] = field(default_factory=list)


@dataclass
class RunManifest:
    config_text: str
    version: str
    duration: float
    files: list[tuple[str, int]]
    summary: dict[str, str]

    def render(self) -> str:
        lines = [f"socialsense {self.version}", f"duration_seconds = {self.duration:.3f}", "", "[outputs]"]
        lines += [f"{name} rows={n}" for name, n in self.files]
        lines += ["", "[summary]"] + [f"{k} = {v}" for k, v in self.summary.items()]
        lines += ["", "[config]", self.config_text.rstrip("\n")]
        return "\n".join(lines) + "\n"


def _policy_tables(policy) -> list[Table]:
    pol = Table("policy.csv", ["pi2", "decision", "value"])
    val = Table("value.csv", ["pi2", "value"])
    for g, d, v in zip(policy.grid, policy.decision, policy.value):
        pol.rows.append([g, int(d), v])
        val.rows.append([g, v])
    return [pol, val]


def _solver_kwargs(v) -> dict:
    return dict(grid_size=v["solver.grid_size"], max_iters=v["solver.max_iters"], tol=v["solver.tolerance"], init=v["solver.init"])


def _run_social_learning(cfg: ScenarioConfig):
    params = cfg.model
    trace = run_protocol(params, cfg.values["run.horizon"], cfg.seed)
    X = params.n_states
    t = Table("trace.csv", ["k", "x", "y", "a"] + [f"pi{i}" for i in range(1, X + 1)])
    for k in range(len(trace)):
        t.rows.append([k + 1, trace.true_state[k] + 1, trace.obs[k] + 1, trace.actions[k] + 1, *trace.public[k + 1]])
    rep = analyze_trace(trace, params)
    na = lambda v: "none" if v is None else str(v)
    summary = {"individual_herd_at": na(rep.individual_herd_at), "herd_at": na(rep.herd_at), "cascade_at": na(rep.cascade_at)}
    return [t], summary


def _run_reputation(cfg: ScenarioConfig):
    v = cfg.values
    graph = read_edge_list(cfg.extras["graph_file"])
    if v["reputation.nodes"] is not None:
        graph = graph.prefix(v["reputation.nodes"])
    closure = transitive_closure(graph)
    N = graph.node_count
    w = Table("weights.csv", ["n"] + [f"w{m}" for m in range(1, N)])
    for n in range(2, N + 1):
        fw = fusion_weights(closure, n)
        w.rows.append([n, *fw.weights] + [""] * (N - n))
    x, records = run_reputation_protocol(graph, cfg.model, cfg.seed, v["reputation.fusion"])
    X = cfg.model.n_states
    t = Table(
        "trace.csv",
        ["n", "s", "k"] + [f"fused{i}" for i in range(1, X + 1)] + ["a"] + [f"pi{i}" for i in range(1, X + 1)] + ["achievable"],
    )
    for r in records:
        t.rows.append([r.node, r.agent, r.epoch, *r.fused, r.action + 1, *r.public, bool(r.achievable)])
    return [w, t], {"true_state": str(x + 1), "nodes": str(N), "fusion": v["reputation.fusion"]}


def _run_qd(cfg: ScenarioConfig):
    v = cfg.values
    costs = DetectionCosts(v["detection.delay"], v["detection.false_alarm"])
    solve = solve_social_qd if cfg.kind == "qd-social" else solve_classical_qd
    policy = solve(cfg.model, costs, **_solver_kwargs(v))
    summary = {
        "iterations": str(policy.iterations),
        "switches_1_to_2": str(count_policy_switches(policy, 1, 2)),
        "switches_total": str(count_policy_switches(policy)),
        "max_adjacent_value_jump": fmt(max_adjacent_jump(policy)),
    }
    return _policy_tables(policy), summary


def _run_privacy(cfg: ScenarioConfig):
    v = cfg.values
    policy = solve_privacy_stopping(
        cfg.model,
        v["privacy.discount"],
        target_state=v["privacy.target_state"] - 1,
        herd_costs=v["privacy.herd_costs"],
        **_solver_kwargs(v),
    )
    herd = decision_intervals(policy, HERD)
    summary = {
        "iterations": str(policy.iterations),
        "herd_intervals": " ".join(f"[{fmt(lo)},{fmt(hi)}]" for lo, hi in herd) or "none",
    }
    if v["privacy.rollouts"] > 0:
        roll = simulate_privacy(policy, cfg.model, cfg.seed, v["privacy.rollouts"], v["privacy.rollout_horizon"])
        summary["revealed_after_herd"] = str(roll.revealed_after_herd).lower()
        summary["herded_fraction"] = fmt(float(np.mean(roll.herd_time >= 0)))
    return _policy_tables(policy), summary


def build_game(v) -> GameSpec:
    actions = v["game.actions"]
    return GameSpec.from_flat(actions, [v[f"game.utility.{l}"] for l in range(1, len(actions) + 1)])


def _run_game(cfg: ScenarioConfig):
    v = cfg.values
    game = build_game(v)
    steps = v["game.steps"]
    marks = sorted(set(v["game.checkpoints"]) | {steps})
    run = run_repeated_game(game, steps, cfg.seed, normalizers=v["game.normalizers"], checkpoints=marks)
    L = game.n_players
    t = Table("regrets.csv", ["n"] + [f"max_regret{l}" for l in range(1, L + 1)] + ["ce_violation"])
    for cp in run.checkpoints:
        t.rows.append([cp.step, *cp.max_positive_regret, cp.ce_violation])
    last = run.checkpoints[-1]
    return [t], {"final_ce_violation": fmt(last.ce_violation), "final_max_regret": fmt(max(last.max_positive_regret))}


RUNNERS = {
    "social-learning": _run_social_learning,
    "reputation": _run_reputation,
    "qd-classic": _run_qd,
    "qd-social": _run_qd,
    "privacy": _run_privacy,
    "game": _run_game,
}


def write_table(table: Table, out_dir: Path) -> int:
    with open(out_dir / table.name, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.header)
        for row in table.rows:
            w.writerow(["" if c == "" else fmt(c) for c in row])
    return len(table.rows)


def run_scenario(cfg: ScenarioConfig, out_dir, seed: Optional[int] = None) -> RunManifest:
    """Run the scenario and write its CSV files, then ``manifest.txt``.

    Tables are computed in full before anything is written, and the manifest
    is written last, so a manifest implies every listed output exists.
    """
    if seed is not None:
        cfg.seed = seed
    out_dir = Path(out_dir)
    start = time.perf_counter()
    tables, summary = RUNNERS[cfg.kind](cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = [(t.name, write_table(t, out_dir)) for t in tables]
    summary = {"scenario": cfg.kind, "seed": str(cfg.seed), **summary}
    manifest = RunManifest(cfg.text, __version__, time.perf_counter() - start, files, summary)
    (out_dir / "manifest.txt").write_text(manifest.render())
    return manifest


def error_record(exc: BaseException, kind: str) -> dict:
    rec = {"status": "error", "kind": kind, "type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ValidationError):
        rec["problems"] = exc.problems
    if isinstance(exc, ParseError):
        rec["line"] = exc.lineno
    return rec


def _fail(exc, kind, code, out_dir: Optional[Path]) -> int:
    rec = error_record(exc, kind)
    print(json.dumps(rec), file=sys.stderr)
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(json.dumps(rec, indent=2) + "\n")
        except OSError:
            pass
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="socialsense", description="Run a social learning scenario and write CSV outputs.")
    p.add_argument("kind", choices=KINDS, help="scenario kind; must match the config's 'scenario' key")
    p.add_argument("--config", required=True, type=Path, help="scenario file (key = value)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory (default: current directory)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if cfg.kind != args.kind:
            raise ValidationError(args.config, [f"config declares scenario {cfg.kind}, command asked for {args.kind}"])
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ValidationError(args.config, ["--seed must be an unsigned 64-bit integer"])
    except ConfigError as exc:
        return _fail(exc, "config", EXIT_CONFIG, args.out)
    try:
        run_scenario(cfg, args.out, args.seed)
    except (SocialSenseError, ValueError) as exc:
        return _fail(exc, "model", EXIT_MODEL, args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
