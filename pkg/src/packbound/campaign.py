"""Play the full search game: propose (r, R), search sentences, solve, verify, log.

A campaign is a sequence of rounds.  Each round fits the surrogate on the
converged history, proposes the next (r, R), runs the tree search at the
cheap degree, re-solves the winning sentence at the final degree, verifies
the certificate independently, and appends one immutable round record.  Any
stage failure is recorded with its status and the campaign continues; state
is flushed to disk after every round, so a killed process loses at most the
in-flight round.  Per-round seeds derive from (base seed, round index), so
identical configurations replay identically and resumed campaigns match
uninterrupted ones.
"""

from __future__ import annotations

import json
import math
import os
import shlex
import subprocess
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional, Sequence

import numpy as np

from .bo import Observation, SearchBox, fit_surrogate, propose_next
from .compiler import assemble_sdp, compute_bound, emit_sdpa
from .mcts import RewardCache, SearchCaps, SearchFailedError, run_search
from .polys import GeometricParams
from .solver import (
    SolverStatus,
    parse_external_output,
    solve_embedded,
    verify_certificate,
)


class ConfigError(ValueError):
    """Invalid campaign configuration."""


class SchemaError(ValueError):
    """Persisted state does not match the frozen record schema."""


class CampaignIOError(RuntimeError):
    """Unrecoverable I/O failure; state was flushed up to the last full round."""


@dataclass(frozen=True)
class CampaignConfig:
    dimension: int = 8
    r_lo: float = 1.4142135623730951
    r_hi: float = 1.6
    R_lo: float = 1.8
    R_hi: float = 2.6
    d_search: int = 2
    d_final: int = 4
    pivots: int = 50
    pivot_scheme: str = "plane"
    mcts_iterations: int = 24
    mcts_rollouts: int = 1
    mcts_restarts: int = 1
    top_k: int = 3
    max_monomials: int = 8
    c_explore: float = math.sqrt(2.0)
    eos_bias: float = 2.0
    acquisition: str = "ei"
    bo_starts: int = 4
    bo_max_evals: int = 80
    solver: str = "embedded"
    solver_cmd: str = ""
    tol_eq: float = 1e-8
    tol_psd: float = 1e-8
    solver_max_iterations: int = 20000
    budget_rounds: int = 10
    budget_seconds: float = 0.0  # 0 disables the wall-clock budget
    seed: int = 0
    out_dir: str = "campaign-out"

    def validate(self) -> None:
        box_ok = 0 < self.r_lo <= self.r_hi and 0 < self.R_lo <= self.R_hi
        if not box_ok or self.r_lo >= self.R_hi:
            raise ConfigError(
                f"search box r in [{self.r_lo}, {self.r_hi}], R in [{self.R_lo}, {self.R_hi}] "
                "is malformed or admits no r < R"
            )
        if self.dimension < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.dimension}")
        if not (0 <= self.d_search <= self.d_final):
            raise ConfigError(f"need 0 <= d_search <= d_final, got {self.d_search}, {self.d_final}")
        if self.pivots < 1:
            raise ConfigError(f"need at least one pivot, got {self.pivots}")
        if self.mcts_iterations < 1 or self.mcts_rollouts < 1 or self.mcts_restarts < 1:
            raise ConfigError("search budgets must be >= 1")
        if self.budget_rounds < 0 or self.budget_seconds < 0:
            raise ConfigError("budgets must be nonnegative")
        if self.solver not in ("embedded", "external"):
            raise ConfigError(f"solver must be 'embedded' or 'external', got {self.solver!r}")
        if self.solver == "external" and not self.solver_cmd:
            raise ConfigError("external solver requires solver_cmd")
        if self.acquisition not in ("ei", "ucb", "multi"):
            raise ConfigError(f"unknown acquisition {self.acquisition!r}")

    @property
    def box(self) -> SearchBox:
        return SearchBox(self.r_lo, self.r_hi, self.R_lo, self.R_hi)

    def to_file(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_file(cls, path: str) -> "CampaignConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg


ROUND_FIELDS = (
    "round", "r", "R", "sentence", "d_search", "d_final", "K",
    "objective", "bound", "status", "eq_residual", "psd_residual",
    "search_seconds", "solve_seconds", "seed",
)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    r: float
    R: float
    sentence: Optional[str]
    d_search: int
    d_final: int
    K: int
    objective: Optional[float]
    bound: Optional[float]
    status: str
    eq_residual: Optional[float]
    psd_residual: Optional[float]
    search_seconds: float
    solve_seconds: float
    seed: int

    @property
    def converged(self) -> bool:
        return self.status == "converged" and self.bound is not None


@dataclass
class GameState:
    """Append-only campaign history with the best-round pointer."""

    rounds: List[RoundRecord] = field(default_factory=list)

    def append(self, record: RoundRecord) -> None:
        expected = len(self.rounds) + 1
        if record.round != expected:
            raise ValueError(f"round index must be {expected}, got {record.round}")
        self.rounds.append(record)

    @property
    def best(self) -> Optional[int]:
        """1-based index of the round with the smallest converged bound."""
        best_idx: Optional[int] = None
        best_key = None
        for rec in self.rounds:
            if not rec.converged:
                continue
            monomials = rec.sentence.count("<ES>") + 1 if rec.sentence else 0
            key = (rec.bound, monomials, rec.sentence or "")
            if best_key is None or key < best_key:
                best_key, best_idx = key, rec.round
        return best_idx

    def best_record(self) -> Optional[RoundRecord]:
        idx = self.best
        return self.rounds[idx - 1] if idx is not None else None

    def observations(self) -> List[Observation]:
        """Converged rounds as surrogate training data (failed rounds feed nothing)."""
        return [
            Observation(GeometricParams(rec.r, rec.R), rec.bound)
            for rec in self.rounds
            if rec.converged
        ]


def persist(state: GameState, path: str) -> None:
    """One JSON record per line; numeric fields keep full repr precision."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in state.rounds:
                fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
    except OSError as exc:
        raise CampaignIOError(f"cannot persist state to {path}: {exc}") from exc


def _append_record(record: RoundRecord, path: str) -> None:
    try:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(asdict(record), sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
    except OSError as exc:
        raise CampaignIOError(f"cannot append round to {path}: {exc}") from exc


def load(path: str) -> GameState:
    """Strict inverse of persist: unknown or missing fields are schema errors.

    One concession to crash safety: a malformed trailing fragment (a record
    interrupted mid-write by a kill) is dropped with a warning, since losing
    the in-flight round is the documented behaviour.  Malformed lines
    anywhere else still raise.
    """
    import warnings

    state = GameState()
    expected = set(ROUND_FIELDS)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError:
            if lineno == len(lines):
                warnings.warn(f"dropping truncated final record at line {lineno} of {path}")
                break
            raise SchemaError(f"malformed record at line {lineno}")
        unknown = set(raw) - expected
        if unknown:
            raise SchemaError(f"unknown field {sorted(unknown)[0]!r} at line {lineno}")
        missing = expected - set(raw)
        if missing:
            raise SchemaError(f"missing field {sorted(missing)[0]!r} at line {lineno}")
        state.append(RoundRecord(**raw))
    return state


def _round_seed(base: int, round_idx: int, salt: int = 0) -> int:
    return int(np.random.SeedSequence([base, round_idx, salt]).generate_state(1)[0])


def _solve_final(sentence, params, config: CampaignConfig):
    """Re-solve the finalist at d_final with full blocks for verification."""
    inst = assemble_sdp(
        sentence, params, n=config.dimension, d=config.d_final,
        K=config.pivots, seed=config.seed, pivot_scheme=config.pivot_scheme,
    )
    if config.solver == "external":
        res = solve_external(inst, config.solver_cmd)
    else:
        res = solve_embedded(
            inst, tol_eq=config.tol_eq, tol_psd=config.tol_psd,
            max_iterations=config.solver_max_iterations,
        )
    return inst, res


def solve_external(inst, solver_cmd: str, digits: int = 40):
    """Emit the instance, run the configured solver command, parse its output.

    The command receives the .dat-s path as its final argument; binary and
    arguments come from configuration only.
    """
    with tempfile.NamedTemporaryFile("w", suffix=".dat-s", delete=False) as fh:
        fh.write(emit_sdpa(inst, digits=digits))
        path = fh.name
    try:
        proc = subprocess.run(
            shlex.split(solver_cmd) + [path],
            capture_output=True, text=True, timeout=3600,
        )
        return parse_external_output(proc.stdout)
    finally:
        os.unlink(path)


def play_round(state: GameState, config: CampaignConfig) -> GameState:
    """Run one round and append its record; stage failures append a failed record."""
    config.validate()
    round_idx = len(state.rounds) + 1
    seed = _round_seed(config.seed, round_idx)
    box = config.box

    observations = state.observations()
    surrogate = None
    if observations:
        try:
            surrogate = fit_surrogate(
                observations, box, seed,
                n_starts=config.bo_starts, max_evals=config.bo_max_evals,
            )
        except (np.linalg.LinAlgError, RuntimeError):
            surrogate = None  # fall back to a space-filling proposal
    params = propose_next(surrogate, box, seed, acquisition=config.acquisition)

    caps = SearchCaps(degree_cap=config.d_search, max_monomials=config.max_monomials)
    search_start = time.monotonic()
    best_outcome = None
    best_sentence = None
    fail_reason = "search-failed"
    cache = RewardCache()
    for restart in range(config.mcts_restarts):
        try:
            out = run_search(
                params,
                iterations=config.mcts_iterations,
                d_search=config.d_search,
                d_final=config.d_final,
                K=config.pivots,
                caps=caps,
                seed=_round_seed(config.seed, round_idx, salt=restart + 1),
                n=config.dimension,
                c_explore=config.c_explore,
                rollouts=config.mcts_rollouts,
                top_k=config.top_k,
                eos_bias=config.eos_bias,
                cache=cache,
                solver_max_iterations=config.solver_max_iterations,
            )
        except SearchFailedError:
            continue
        if best_outcome is None or out.outcome.bound < best_outcome.bound:
            best_outcome, best_sentence = out.outcome, out.sentence
    search_seconds = time.monotonic() - search_start

    if best_sentence is None:
        state.append(RoundRecord(
            round=round_idx, r=params.r, R=params.R, sentence=None,
            d_search=config.d_search, d_final=config.d_final, K=config.pivots,
            objective=None, bound=None, status=fail_reason,
            eq_residual=None, psd_residual=None,
            search_seconds=search_seconds, solve_seconds=0.0, seed=seed,
        ))
        return state

    solve_start = time.monotonic()
    status = "converged"
    objective = bound = eq_res = psd_res = None
    try:
        inst, res = _solve_final(best_sentence, params, config)
        if res.status is SolverStatus.CONVERGED:
            report = verify_certificate(inst, res) if res.primal_blocks else None
            objective = res.objective_value
            bound = compute_bound(objective, params, config.dimension).bound
            eq_res = report.equality_residual if report else res.equality_residual
            psd_res = report.psd_residual if report else res.psd_residual
            if report and report.equality_residual > 10 * config.tol_eq:
                status = "verification-failed"
                objective = bound = None
        else:
            status = res.status.value
            eq_res, psd_res = res.equality_residual, res.psd_residual
    except Exception as exc:
        status = f"solve-error: {type(exc).__name__}"
    solve_seconds = time.monotonic() - solve_start

    from .grammar import render

    state.append(RoundRecord(
        round=round_idx, r=params.r, R=params.R,
        sentence=render(best_sentence),
        d_search=config.d_search, d_final=config.d_final, K=config.pivots,
        objective=objective, bound=bound, status=status,
        eq_residual=eq_res, psd_residual=psd_res,
        search_seconds=search_seconds, solve_seconds=solve_seconds, seed=seed,
    ))
    return state


def run_campaign(
    config: CampaignConfig,
    resume: bool = False,
    progress: bool = False,
) -> GameState:
    """Play rounds until the round or wall-clock budget is hit, flushing each round."""
    config.validate()
    state_path = os.path.join(config.out_dir, "state.jsonl")
    try:
        os.makedirs(config.out_dir, exist_ok=True)
        config.to_file(os.path.join(config.out_dir, "config.json"))
    except OSError as exc:
        raise CampaignIOError(f"cannot prepare output directory {config.out_dir}: {exc}") from exc

    state = GameState()
    if resume and os.path.exists(state_path):
        state = load(state_path)
    else:
        persist(state, state_path)

    start = time.monotonic()
    while len(state.rounds) < config.budget_rounds:
        if config.budget_seconds and time.monotonic() - start > config.budget_seconds:
            break
        play_round(state, config)
        _append_record(state.rounds[-1], state_path)
        if progress:
            rec = state.rounds[-1]
            print(
                f"round {rec.round}: (r={rec.r:.4f}, R={rec.R:.4f}) "
                f"status={rec.status} bound={rec.bound}"
            )

    _write_report(state, config)
    return state


def _write_report(state: GameState, config: CampaignConfig) -> None:
    from . import diagnostics

    best = state.best_record()
    report = {
        "rounds": len(state.rounds),
        "converged_rounds": sum(1 for r in state.rounds if r.converged),
        "best_round": best.round if best else None,
        "best_bound": best.bound if best else None,
        "best_sentence": best.sentence if best else None,
        "best_r": best.r if best else None,
        "best_R": best.R if best else None,
        "acquisition": config.acquisition
        + (" (rank-aggregated approximation)" if config.acquisition == "multi" else ""),
    }
    try:
        with open(os.path.join(config.out_dir, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        diagnostics.write_campaign_csvs(state, config.out_dir)
    except OSError as exc:
        raise CampaignIOError(f"cannot write report under {config.out_dir}: {exc}") from exc
