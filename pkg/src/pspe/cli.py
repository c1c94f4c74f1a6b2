"""Command-line entry point: ``pspe {sweep,practice,run,oracle-check}``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import oracle
from .agents import AgentConfig
from .errors import ConfigError
from .harness import ExperimentConfig, default_agents, load_config, run_practice_study, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

PRESETS = {
    "full": dict(trials=50, episodes=1000, eval_samples=1000),
    "desk": dict(trials=20, episodes=600, eval_samples=500),
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pspe", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config; flags override its values")
    common.add_argument("--preset", choices=sorted(PRESETS), help="trial/episode/sample budget")
    common.add_argument("--env", choices=["chain", "file"])
    common.add_argument("--env-file", help="MDP JSON file (with --env file)")
    common.add_argument("--chain-n", type=int)
    common.add_argument("--left-reward", type=float, dest="left_reward_mean")
    common.add_argument("--beta", type=float, action="append", help="PSPE beta (repeatable)")
    common.add_argument("--no-random", action="store_true", help="drop the random-exploration baseline")
    common.add_argument("--episodes", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--eval-samples", type=int)
    common.add_argument("--metrics-every", type=int)
    common.add_argument("--seed", type=int, dest="master_seed")
    common.add_argument("--workers", type=int)
    common.add_argument("--out", dest="output")

    sub.add_parser("sweep", parents=[common], help="simple regret of each agent over time")
    pr = sub.add_parser("practice", parents=[common], help="practice-then-evaluate correlation study")
    pr.add_argument("--practice", type=int, action="append", dest="practice_grid",
                    help="practice length (repeatable)")
    pr.add_argument("--t-eval", type=int)
    run = sub.add_parser("run", parents=[common], help="a single agent")
    run.add_argument("--agent", choices=["psrl", "pspe", "random"], default="pspe")
    sub.add_parser("oracle-check", help="brute-force invariant suite")
    return p


def _build_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = dict(PRESETS[args.preset]) if args.preset else {}
    for name in ("env", "env_file", "chain_n", "left_reward_mean", "episodes", "trials", "eval_samples",
                 "metrics_every", "master_seed", "workers", "output", "practice_grid", "t_eval"):
        v = getattr(args, name, None)
        if v is not None:
            overrides[name] = v
    if args.env_file and "env" not in overrides:
        overrides["env"] = "file"

    if args.command == "run":
        kind = args.agent.upper()
        beta = args.beta[0] if args.beta else 0.5
        overrides["agents"] = [AgentConfig(kind, beta if kind == "PSPE" else 1.0 if kind == "PSRL" else 0.0)]
    elif args.beta:
        agents = [AgentConfig("PSPE", b) for b in args.beta]
        if not args.no_random:
            agents.append(AgentConfig("RANDOM", 0.0))
        overrides["agents"] = agents
    elif args.no_random:
        overrides["agents"] = [a for a in (cfg.agents or default_agents()) if a.kind != "RANDOM"]

    try:
        cfg = replace(cfg, **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "oracle-check":
        try:
            return EXIT_OK if oracle.run_all() else EXIT_RUNTIME
        except Exception as exc:  # noqa: BLE001
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
    try:
        cfg = _build_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "practice":
            res = run_practice_study(cfg)
            print(f"wrote {res.path} ({len(res.rows)} rows), {res.summary_path}, {res.correlation_path}")
            print(f"pearson={res.pearson:.4f} spearman={res.spearman:.4f} over {len(res.cells)} cells")
        else:
            res = run_sweep(cfg)
            print(f"wrote {res.path} ({len(res.rows)} rows) and {res.summary_path}")
            last = max(r["episode"] for r in res.summary) if res.summary else None
            for r in res.summary:
                if r["episode"] == last:
                    beta = f" beta={r['beta']}" if r["beta"] else ""
                    print(f"  {r['agent_kind']}{beta}: simple regret at {last} = "
                          f"{float(r['simple_regret_mean']):.4f} ± {float(r['simple_regret_se']):.4f}")
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
