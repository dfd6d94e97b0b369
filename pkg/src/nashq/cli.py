"""Command-line entry point.

Verbs::

    nashq run CONFIG [--out DIR] [--require-pass]
    nashq compare CONFIG [CONFIG ...] --seeds N [--out DIR] [--jobs J]
    nashq verify TABLES GAME --tol T [-o CERT] [--require-pass]
    nashq gen-game SPEC -o PATH

Exit codes: 0 success, 2 config error, 3 solver failure, 4 certification
failure (only with ``--require-pass``). Results go to files; stdout gets one
summary line.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .core import InvalidGameError, InvalidSimplexError, StrategyProfile, load_game
from .equilibrium import SolverFailure
from .experiment import (ConfigError, compare_learners, generate_game_file, load_config,
                         run_experiment)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CERT = 4


def _cmd_run(args):
    cfg = load_config(args.config)
    res = run_experiment(cfg, args.out)
    c = res.certificate
    print(f"run: gap_1={c['gap_1']:.6g} gap_2={c['gap_2']:.6g} tol={c['tolerance']} "
          f"passed={c['passed']} out={res.output_dir}")
    if args.require_pass and not c["passed"]:
        return EXIT_CERT
    return EXIT_OK


def _cmd_compare(args):
    cfgs = [load_config(p) for p in args.configs]
    rows, summary = compare_learners(cfgs, args.seeds, args.out, args.jobs)
    print(f"compare: {len(rows)} runs over {len(cfgs)} configs -> {args.out}")
    return EXIT_OK


def _cmd_verify(args):
    from .verify import certificate_document, certify_nash, marginal_consistency, reconstruct_full_q

    if args.tol <= 0:
        raise ConfigError("--tol: must be positive")
    try:
        game = load_game(args.game)
    except (OSError, json.JSONDecodeError, InvalidGameError) as exc:
        raise ConfigError(f"{args.game}: {exc}") from exc
    try:
        with open(args.tables) as fh:
            doc = json.load(fh)
        profile = StrategyProfile.from_dict(doc["profile"])
    except (OSError, json.JSONDecodeError, KeyError, InvalidSimplexError) as exc:
        raise ConfigError(f"{args.tables}: {exc}") from exc
    if profile.pi_1.shape != (game.n_states, game.n_actions_1) or \
            profile.pi_2.shape != (game.n_states, game.n_actions_2):
        raise ConfigError(f"{args.tables}: profile shape does not match {args.game}")
    recon = reconstruct_full_q(game, profile)
    cert = certify_nash(game, profile, args.tol)
    consistency = []
    for i, (kind, table) in enumerate(zip(doc.get("kinds", []), doc.get("tables", []))):
        q = np.asarray(table, dtype=float)
        ok = kind == "marginal" and q.shape == profile.strategy(i).shape
        consistency.append(marginal_consistency(q, recon, profile, i) if ok else None)
    out = certificate_document(cert, recon, {"game_sha256": game.fingerprint()},
                               {"marginal_consistency": consistency})
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(out, fh, sort_keys=True, indent=1)
            fh.write("\n")
    print(f"verify: gap_1={cert.gap_1:.6g} gap_2={cert.gap_2:.6g} tol={cert.tolerance} "
          f"passed={cert.passed}")
    if args.require_pass and not cert.passed:
        return EXIT_CERT
    return EXIT_OK


def _cmd_gen_game(args):
    game = generate_game_file(args.spec, args.output)
    print(f"gen-game: {game!r} -> {args.output}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="nashq", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="output directory (overrides the config)")
    p.add_argument("--require-pass", action="store_true",
                   help="exit 4 when the final profile fails certification")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="head-to-head comparison over seeds")
    p.add_argument("configs", nargs="+")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--out", default=".")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("verify", help="certify a learned profile against a game")
    p.add_argument("tables")
    p.add_argument("game")
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("-o", "--output", default=None, help="write the certificate JSON here")
    p.add_argument("--require-pass", action="store_true")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("gen-game", help="write a game JSON from an environment spec")
    p.add_argument("spec")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_gen_game)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if getattr(args, "seeds", 1) < 1:
        print("error: --seeds must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
