"""Grammar-constrained Monte Carlo tree search over certificate sentences.

Nodes hold legal token prefixes; edges append one token allowed by
legal_next_tokens under the degree and monomial-count caps.  The four-phase
loop (UCB selection, single-child expansion, rollout evaluation,
backpropagation) is deterministic given the seed; rollouts complete a prefix
by seeded uniform draws with a configurable bias toward terminating once a
monomial is complete, and every completed sentence is evaluated through a
pluggable evaluator (by default: compile the SDP at the search degree and
solve it with the embedded solver).  Evaluations are cached by canonical
sentence, so permuted factor orders and constant padding share solver calls;
visit statistics live on the token-prefix tree itself.

Single-writer tree: rollout evaluations may be expensive but are issued
sequentially, keeping runs reproducible.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .compiler import assemble_sdp, compute_bound
from .grammar import (
    Monomial,
    Sentence,
    Token,
    analyze_prefix,
    legal_next_tokens,
    prefix_sentence,
    render,
    tokenize_and_parse,
)
from .polys import GeometricParams
from .solver import SolverStatus, solve_embedded


@dataclass(frozen=True)
class SearchCaps:
    degree_cap: int
    max_monomials: int = 8


@dataclass(frozen=True)
class EvalOutcome:
    """Summary of one sentence evaluation at a given degree."""

    sentence: str
    d: int
    converged: bool
    objective: float
    bound: float
    status: str

    def reward(self) -> float:
        """Bounded reward in [0, 1]: monotone decreasing in the bound.

        1 / (1 + max(bound, 0)) for converged certificates; failed solves
        score 0 so they can never outrank any converged one.
        """
        if not self.converged:
            return 0.0
        return 1.0 / (1.0 + max(self.bound, 0.0))


Evaluator = Callable[[Sentence, int], EvalOutcome]


class RewardCache:
    """Evaluation store keyed by (canonical sentence, r, R, d, K, seed).

    Hits return the identical EvalOutcome object, so rewards are
    bit-identical and repeated sentences cost no solver calls.
    """

    def __init__(self) -> None:
        self._store: Dict[tuple, EvalOutcome] = {}
        self.hits = 0
        self.misses = 0

    def key(self, text: str, params: GeometricParams, d: int, K: int, seed: int) -> tuple:
        return (text, params.r.hex(), params.R.hex(), d, K, seed)

    def get(self, key: tuple) -> Optional[EvalOutcome]:
        out = self._store.get(key)
        if out is not None:
            self.hits += 1
        return out

    def put(self, key: tuple, outcome: EvalOutcome) -> None:
        self.misses += 1
        self._store[key] = outcome

    def outcomes(self) -> List[EvalOutcome]:
        return list(self._store.values())


def make_sdp_evaluator(
    params: GeometricParams,
    n: int,
    K: int,
    seed: int,
    cache: Optional[RewardCache] = None,
    tol_eq: float = 1e-8,
    tol_psd: float = 1e-8,
    max_iterations: int = 20000,
    pivot_scheme: str = "plane",
) -> Evaluator:
    """Default evaluator: assemble at the requested degree, solve, compute bound."""

    def evaluate(s: Sentence, d: int) -> EvalOutcome:
        canon = s.canonical()
        text = render(canon)
        key = cache.key(text, params, d, K, seed) if cache is not None else None
        if key is not None:
            hit = cache.get(key)
            if hit is not None:
                return hit
        try:
            inst = assemble_sdp(canon, params, n=n, d=d, K=K, seed=seed,
                                pivot_scheme=pivot_scheme)
            res = solve_embedded(inst, tol_eq=tol_eq, tol_psd=tol_psd,
                                 max_iterations=max_iterations)
            converged = res.status is SolverStatus.CONVERGED
            bound = compute_bound(res.objective_value, params, n).bound if converged else math.inf
            outcome = EvalOutcome(text, d, converged, res.objective_value, bound,
                                  res.status.value)
        except Exception as exc:  # failed compiles become penalty rewards
            outcome = EvalOutcome(text, d, False, math.nan, math.inf, f"error: {exc}")
        if key is not None:
            cache.put(key, outcome)
        return outcome

    return evaluate


def _canonical_prefix_key(state: Tuple[Token, ...]) -> tuple:
    info = analyze_prefix(state)
    current = None
    if info.current is not None:
        current = Monomial(info.current).canonical().alpha
    completed = tuple(sorted(Monomial(a).canonical().alpha for a in info.completed))
    return (completed, current, info.after_p)


class SearchNode:
    """One token prefix in the tree.

    Tokens whose appension leaves the canonical prefix unchanged (appending
    another constant factor to a nonempty monomial) are excluded from the
    untried set: such children alias their parent exactly, and growing alias
    chains would bleed the exploration budget while every alias evaluates to
    the same cached sentences anyway.
    """

    __slots__ = ("state", "N", "W", "self_evals", "children", "untried", "terminal")

    def __init__(self, state: Tuple[Token, ...], caps: SearchCaps):
        self.state = state
        self.N = 0
        self.W = 0.0
        self.self_evals = 0
        self.children: Dict[Token, SearchNode] = {}
        legal = legal_next_tokens(state, caps.degree_cap, caps.max_monomials)
        if legal:
            key = _canonical_prefix_key(state)
            legal = {
                t for t in legal
                if t is not Token.P7 or _canonical_prefix_key(state + (t,)) != key
            }
        self.untried: List[Token] = sorted(legal)
        self.terminal = not legal and bool(state) and state[-1] is Token.EOS

    @property
    def expanded(self) -> bool:
        return not self.untried

    def __repr__(self) -> str:
        return f"SearchNode({' '.join(t.name for t in self.state)!r}, N={self.N}, W={self.W:.3f})"


def select_path(root: SearchNode, c_explore: float) -> List[SearchNode]:
    """Descend by UCB until the first non-fully-expanded node or a terminal.

    Unvisited children score +infinity; ties break by token order P1 < ... < EOS
    (the children dict is consulted in that order).
    """
    path = [root]
    node = root
    while node.expanded and not node.terminal:
        best_token, best_score = None, -math.inf
        log_parent = math.log(node.N) if node.N > 0 else 0.0
        for token in sorted(node.children):
            child = node.children[token]
            if child.N == 0:
                score = math.inf
            else:
                score = child.W / child.N + c_explore * math.sqrt(log_parent / child.N)
            if score > best_score:
                best_token, best_score = token, score
        if best_token is None:
            break
        node = node.children[best_token]
        path.append(node)
    return path


def expand_node(node: SearchNode, caps: SearchCaps, rng: np.random.Generator) -> SearchNode:
    """Create exactly one child by a seeded draw from the untried legal tokens."""
    if node.terminal:
        raise ValueError("cannot expand a terminal node")
    if not node.untried:
        raise ValueError("node is fully expanded")
    idx = int(rng.integers(len(node.untried)))
    token = node.untried.pop(idx)
    child = SearchNode(node.state + (token,), caps)
    node.children[token] = child
    return child


def rollout_completion(
    state: Tuple[Token, ...],
    caps: SearchCaps,
    rng: np.random.Generator,
    eos_bias: float = 2.0,
) -> Sentence:
    """Complete a prefix to a terminal sentence by seeded weighted-uniform draws.

    EOS, when legal, gets its probability weight multiplied by eos_bias (the
    prefix then already holds a completable monomial), keeping rollouts short.
    """
    tokens = list(state)
    while not (tokens and tokens[-1] is Token.EOS):
        legal = sorted(legal_next_tokens(tokens, caps.degree_cap, caps.max_monomials))
        weights = np.array(
            [eos_bias if t is Token.EOS else 1.0 for t in legal], dtype=float
        )
        weights /= weights.sum()
        tokens.append(legal[int(rng.choice(len(legal), p=weights))])
    return prefix_sentence(analyze_prefix(tokens))


def simulate_rollout(
    node: SearchNode,
    evaluator: Evaluator,
    d_search: int,
    rollouts: int,
    caps: SearchCaps,
    rng: np.random.Generator,
    eos_bias: float = 2.0,
) -> float:
    """Mean reward over seeded completions of the node's prefix.

    A terminal node is its own single completion: one evaluation, no
    randomness, regardless of the rollout count.
    """
    if rollouts < 1:
        raise ValueError("need rollouts >= 1")
    if node.terminal:
        sentence = prefix_sentence(analyze_prefix(node.state))
        return evaluator(sentence, d_search).reward()
    total = 0.0
    for _ in range(rollouts):
        sentence = rollout_completion(node.state, caps, rng, eos_bias)
        total += evaluator(sentence, d_search).reward()
    return total / rollouts


def backpropagate(path: Sequence[SearchNode], reward: float) -> None:
    """N += 1 and W += reward along the path; the endpoint logs a self-evaluation."""
    for node in path:
        node.N += 1
        node.W += reward
    path[-1].self_evals += 1


class SearchFailedError(RuntimeError):
    """No terminal sentence produced a converged certificate."""

    def __init__(self, message: str, log: List[EvalOutcome]):
        super().__init__(message)
        self.log = log


@dataclass
class SearchOutcome:
    sentence: Sentence
    outcome: EvalOutcome
    evaluations: List[EvalOutcome]
    tree_root: SearchNode
    wall_time: float


def audit_counts(root: SearchNode) -> bool:
    """Count conservation: N equals children's N plus evaluations ending here."""
    stack = [root]
    while stack:
        node = stack.pop()
        if node.N != sum(c.N for c in node.children.values()) + node.self_evals:
            return False
        stack.extend(node.children.values())
    return True


def dump_tree(root: SearchNode, path: str) -> None:
    """One node per line: state hash, visit count, value sum (debug aid)."""
    with open(path, "w", encoding="utf-8") as fh:
        stack = [root]
        while stack:
            node = stack.pop()
            key = " ".join(t.name for t in node.state)
            fh.write(f"{hash(key) & 0xFFFFFFFFFFFF:012x} {node.N} {node.W!r}\n")
            stack.extend(node.children.values())


def run_search(
    params: GeometricParams,
    iterations: int,
    d_search: int,
    d_final: int,
    K: int,
    caps: SearchCaps,
    seed: int,
    n: int = 8,
    c_explore: float = math.sqrt(2.0),
    rollouts: int = 1,
    top_k: int = 3,
    eos_bias: float = 2.0,
    evaluator: Optional[Evaluator] = None,
    cache: Optional[RewardCache] = None,
    seed_sentences: Optional[Sequence[Sentence]] = None,
    tree_dump_path: Optional[str] = None,
    solver_max_iterations: int = 20000,
) -> SearchOutcome:
    """Search for the sentence minimizing the solved bound at fixed (r, R).

    Runs the four-phase loop at degree d_search for the iteration budget,
    then re-evaluates the top_k best converged terminal sentences at the
    more expressive degree d_final and returns the one with the smallest
    converged bound (ties prefer fewer monomials, then the lexicographically
    smaller canonical text).  Deterministic given all inputs.

    seed_sentences optionally pre-inserts known-good sentences at the root
    (one evaluation each) so searches can warm-start from earlier runs.
    """
    if iterations < 1:
        raise ValueError("need iterations >= 1")
    if d_search > d_final:
        raise ValueError(f"d_search={d_search} must not exceed d_final={d_final}")
    start = time.monotonic()
    rng = np.random.default_rng(seed)
    if cache is None:
        cache = RewardCache()
    if evaluator is None:
        evaluator = make_sdp_evaluator(
            params, n=n, K=K, seed=seed, cache=cache,
            max_iterations=solver_max_iterations,
        )

    caps = SearchCaps(min(caps.degree_cap, d_search), caps.max_monomials)
    root = SearchNode((), caps)
    evaluations: List[EvalOutcome] = []
    seen_keys = set()

    def record(outcome: EvalOutcome) -> None:
        if (outcome.sentence, outcome.d) not in seen_keys:
            seen_keys.add((outcome.sentence, outcome.d))
            evaluations.append(outcome)

    if seed_sentences:
        for s in seed_sentences:
            path = [root]
            node = root
            for token in _sentence_tokens(s.canonical()):
                if token in node.children:
                    node = node.children[token]
                else:
                    if token in node.untried:
                        node.untried.remove(token)
                    child = SearchNode(node.state + (token,), caps)
                    node.children[token] = child
                    node = child
                path.append(node)
            outcome = evaluator(s, d_search)
            record(outcome)
            backpropagate(path, outcome.reward())

    for _ in range(iterations):
        path = select_path(root, c_explore)
        leaf = path[-1]
        if not leaf.terminal and leaf.untried:
            child = expand_node(leaf, caps, rng)
            path.append(child)
            leaf = child
        if leaf.terminal:
            sentence = prefix_sentence(analyze_prefix(leaf.state))
            outcome = evaluator(sentence, d_search)
            record(outcome)
            reward = outcome.reward()
        else:
            total = 0.0
            for _ in range(rollouts):
                sentence = rollout_completion(leaf.state, caps, rng, eos_bias)
                outcome = evaluator(sentence, d_search)
                record(outcome)
                total += outcome.reward()
            reward = total / rollouts
        backpropagate(path, reward)

    if tree_dump_path:
        dump_tree(root, tree_dump_path)

    converged = [e for e in evaluations if e.converged]
    if not converged:
        raise SearchFailedError(
            f"no terminal sentence converged in {iterations} iterations "
            f"({len(evaluations)} distinct sentences tried)",
            evaluations,
        )

    def rank_key(e: EvalOutcome):
        monomials = e.sentence.count("<ES>") + 1
        return (e.bound, monomials, e.sentence)

    finalists = sorted(converged, key=rank_key)[:top_k]
    final_results = []
    for e in finalists:
        sentence = tokenize_and_parse(e.sentence)
        outcome = evaluator(sentence, d_final) if d_final != e.d else e
        record(outcome)
        if outcome.converged:
            final_results.append((rank_key(outcome), sentence, outcome))
    if not final_results:
        raise SearchFailedError(
            f"no finalist converged at d_final={d_final}", evaluations
        )
    final_results.sort(key=lambda item: item[0])
    _, best_sentence, best_outcome = final_results[0]
    return SearchOutcome(
        sentence=best_sentence.canonical(),
        outcome=best_outcome,
        evaluations=evaluations,
        tree_root=root,
        wall_time=time.monotonic() - start,
    )


def _sentence_tokens(s: Sentence) -> List[Token]:
    from .grammar import tokenize

    return tokenize(render(s))
