"""Command-line interface.

Subcommands:
  compile    sentence text -> SDPA sparse file (.dat-s)
  solve      .dat-s file -> solver result (embedded or external)
  search     tree search at fixed (r, R), printing the best sentence found
  campaign   the full game loop, driven by a config file and/or flags
  report     diagnostics CSVs and a summary from a persisted state file

Exit codes: 0 success, 2 invalid configuration or arguments, 3 campaign
halted on an I/O failure, 4 search failed to produce a converged sentence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from typing import List, Optional

from .campaign import (
    CampaignConfig,
    CampaignIOError,
    ConfigError,
    load,
    run_campaign,
    solve_external,
)
from .compiler import assemble_sdp, emit_sdpa
from .grammar import ParseError, render, tokenize_and_parse
from .mcts import RewardCache, SearchCaps, SearchFailedError, run_search
from .polys import GeometricParams
from .solver import read_sdpa_instance, solve_embedded, system_to_instance

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SEARCH = 4


def _add_geometry(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int, default=8, help="ambient dimension n")
    p.add_argument("--r", type=float, required=True, help="inner geometric parameter")
    p.add_argument("--R", type=float, required=True, help="outer geometric parameter")
    p.add_argument("--pivots", type=int, default=50, help="pivot count K")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="packbound",
        description="Searched SDP certificates for sphere-packing density upper bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile a sentence into a .dat-s file")
    c.add_argument("sentence", help='sentence text, e.g. "P1 <ES> P3 <*> P3 <EOS>"')
    _add_geometry(c)
    c.add_argument("--degree", type=int, default=4, help="basis degree d")
    c.add_argument("--digits", type=int, default=40, help="significant digits emitted")
    c.add_argument("--out", default="-", help="output path or - for stdout")

    s = sub.add_parser("solve", help="solve a .dat-s instance file")
    s.add_argument("instance", help="path to a .dat-s file")
    s.add_argument("--solver", choices=["embedded", "external"], default="embedded")
    s.add_argument("--solver-cmd", default="", help="external solver command line")
    s.add_argument("--tol-eq", type=float, default=1e-8)
    s.add_argument("--tol-psd", type=float, default=1e-8)
    s.add_argument("--max-iterations", type=int, default=50000)

    q = sub.add_parser("search", help="tree search for the best sentence at fixed (r, R)")
    _add_geometry(q)
    q.add_argument("--degree-search", type=int, default=2)
    q.add_argument("--degree-final", type=int, default=4)
    q.add_argument("--iterations", type=int, default=24)
    q.add_argument("--max-monomials", type=int, default=8)
    q.add_argument("--top-k", type=int, default=3)
    q.add_argument("--tree-dump", default=None, help="optional tree dump path")

    g = sub.add_parser("campaign", help="run the full campaign loop")
    g.add_argument("--config", default=None, help="JSON config file (flags override)")
    g.add_argument("--dim", type=int, default=None)
    g.add_argument("--degree-search", type=int, default=None)
    g.add_argument("--degree-final", type=int, default=None)
    g.add_argument("--pivots", type=int, default=None)
    g.add_argument("--budget-rounds", type=int, default=None)
    g.add_argument("--budget-seconds", type=float, default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--solver", choices=["embedded", "external"], default=None)
    g.add_argument("--solver-cmd", default=None)
    g.add_argument("--out", default=None, help="output directory")
    g.add_argument("--resume", action="store_true", help="continue a persisted campaign")
    g.add_argument("--quiet", action="store_true")

    r = sub.add_parser("report", help="summarize a persisted campaign state")
    r.add_argument("state", help="path to state.jsonl")
    r.add_argument("--out", default=".", help="directory for diagnostics CSVs")
    r.add_argument("--reference", default=None, help="reference monomial list file")
    return parser


def _cmd_compile(args) -> int:
    try:
        sentence = tokenize_and_parse(args.sentence)
        params = GeometricParams(args.r, args.R)
        inst = assemble_sdp(sentence, params, n=args.dim, d=args.degree,
                            K=args.pivots, seed=args.seed)
    except (ParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = emit_sdpa(inst, digits=args.digits)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


def _cmd_solve(args) -> int:
    try:
        with open(args.instance, "r", encoding="utf-8") as fh:
            system = read_sdpa_instance(fh.read())
        inst = system_to_instance(system)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.solver == "external":
        if not args.solver_cmd:
            print("error: --solver external requires --solver-cmd", file=sys.stderr)
            return EXIT_CONFIG
        res = solve_external(inst, args.solver_cmd)
    else:
        res = solve_embedded(inst, tol_eq=args.tol_eq, tol_psd=args.tol_psd,
                             max_iterations=args.max_iterations)
    print(json.dumps({
        "status": res.status.value,
        "objective": res.objective_value,
        "equality_residual": res.equality_residual,
        "psd_residual": res.psd_residual,
        "iterations": res.iterations,
        "message": res.message,
    }, indent=2))
    return EXIT_OK


def _cmd_search(args) -> int:
    try:
        params = GeometricParams(args.r, args.R)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    caps = SearchCaps(degree_cap=args.degree_search, max_monomials=args.max_monomials)
    try:
        out = run_search(
            params, iterations=args.iterations, d_search=args.degree_search,
            d_final=args.degree_final, K=args.pivots, caps=caps, seed=args.seed,
            n=args.dim, top_k=args.top_k, cache=RewardCache(),
            tree_dump_path=args.tree_dump,
        )
    except SearchFailedError as exc:
        print(f"search failed: {exc}", file=sys.stderr)
        for entry in exc.log:
            print(f"  {entry.sentence}  d={entry.d}  {entry.status}", file=sys.stderr)
        return EXIT_SEARCH
    print(json.dumps({
        "sentence": render(out.sentence),
        "bound": out.outcome.bound,
        "objective": out.outcome.objective,
        "d": out.outcome.d,
        "evaluations": len(out.evaluations),
        "seconds": out.wall_time,
    }, indent=2))
    return EXIT_OK


def _cmd_campaign(args) -> int:
    try:
        config = CampaignConfig.from_file(args.config) if args.config else CampaignConfig()
        overrides = {
            "dimension": args.dim,
            "d_search": args.degree_search,
            "d_final": args.degree_final,
            "pivots": args.pivots,
            "budget_rounds": args.budget_rounds,
            "budget_seconds": args.budget_seconds,
            "seed": args.seed,
            "solver": args.solver,
            "solver_cmd": args.solver_cmd,
            "out_dir": args.out,
        }
        config = dataclasses.replace(
            config, **{k: v for k, v in overrides.items() if v is not None}
        )
        config.validate()
    except (ConfigError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        state = run_campaign(config, resume=args.resume, progress=not args.quiet)
    except CampaignIOError as exc:
        print(f"campaign halted: {exc}", file=sys.stderr)
        return EXIT_IO
    best = state.best_record()
    print(json.dumps({
        "rounds": len(state.rounds),
        "best_bound": best.bound if best else None,
        "best_sentence": best.sentence if best else None,
        "out_dir": config.out_dir,
    }, indent=2))
    return EXIT_OK


def _cmd_report(args) -> int:
    from . import diagnostics

    try:
        state = load(args.state)
        ref = (diagnostics.ReferenceSet.from_file(args.reference)
               if args.reference else diagnostics.ReferenceSet.empty())
        diagnostics.write_campaign_csvs(state, args.out, ref)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    best = state.best_record()
    print(json.dumps({
        "rounds": len(state.rounds),
        "converged": sum(1 for r in state.rounds if r.converged),
        "best_round": best.round if best else None,
        "best_bound": best.bound if best else None,
        "best_sentence": best.sentence if best else None,
    }, indent=2))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "compile": _cmd_compile,
        "solve": _cmd_solve,
        "search": _cmd_search,
        "campaign": _cmd_campaign,
        "report": _cmd_report,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
