"""Solve block SDP instances and verify the resulting certificates.

The embedded solver is a first-order operator-splitting scheme (ADMM):
alternate between projection onto the affine subspace of the equality rows
(one Cholesky factorization of the row Gram matrix, reused every iteration)
and projection onto the PSD cone per block (symmetric eigendecomposition
with negative eigenvalues clipped), with a scaled dual update carrying the
objective.  It works in float64 and targets desk-scale instances; larger or
higher-precision runs go through file emission to an external SDPA-family
solver, whose text output is parsed here as well.

Certificate verification recomputes every trace, the eigenvalue floors and
the objective directly from the instance data; it never trusts the fields
reported by a solver.
"""

from __future__ import annotations

import math
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .compiler import SdpInstance, block_arrays


class SolverStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    INFEASIBLE = "infeasible-detected"
    NUMERIC_FAILURE = "numeric-failure"


@dataclass
class SolverResult:
    """Outcome of one solve.

    equality_residual is the largest violation across equality rows, each
    scaled by (1 + Frobenius norm of the row); psd_residual is the most
    negative eigenvalue across the returned blocks (0 when all are PSD).
    """

    status: SolverStatus
    objective_value: float
    primal_blocks: List[np.ndarray]
    equality_residual: float
    psd_residual: float
    iterations: int
    wall_time: float
    message: str = ""
    residual_checkpoints: List[float] = field(default_factory=list)


class SolveSetupError(RuntimeError):
    """Instance cannot be prepared for the embedded solver (e.g. redundant rows)."""


def _stack_rows(inst: SdpInstance) -> Tuple[np.ndarray, np.ndarray, np.ndarray, List[slice]]:
    """Flatten instance rows and objective into a dense system.

    Returns (M, b, c, block_slices) where each equality row of the instance
    becomes one row of M over the concatenated flattened blocks.  Zero rows
    with zero right-hand side are dropped (they constrain nothing); a zero
    row with nonzero right-hand side marks the instance trivially infeasible
    and is kept so the solver reports it.
    """
    dims = inst.block_dims
    offsets = []
    pos = 0
    for dim in dims:
        offsets.append(pos)
        pos += dim * dim
    total = pos
    slices = [slice(off, off + dim * dim) for off, dim in zip(offsets, dims)]

    def flatten(blocks) -> np.ndarray:
        vec = np.zeros(total)
        for sl, mat in zip(slices, block_arrays(blocks)):
            vec[sl] = mat.ravel()
        return vec

    rows = [flatten(row) for row in inst.constraints]
    rows.append(flatten(inst.normalization))
    b = np.zeros(len(rows))
    b[-1] = 1.0
    M = np.array(rows) if rows else np.zeros((0, total))
    c = flatten(inst.objective)
    return M, b, c, slices


def _congruence_scale(M: np.ndarray, slices: Sequence[slice], dims: Sequence[int]) -> np.ndarray:
    """Per-coordinate scaling induced by a diagonal change of basis per block.

    Basis evaluation vectors mix magnitudes across many orders (powers of
    h + v reach the thousands), which wrecks the conditioning of the row
    system.  Rescaling basis coordinate i by t_i is a congruence X -> T X T,
    which preserves positive semidefiniteness, so the solver may work in
    scaled coordinates and map the result back exactly.
    """
    scale = np.ones(M.shape[1])
    for sl, dim in zip(slices, dims):
        colrms = np.sqrt(np.mean(M[:, sl] ** 2, axis=0)).reshape(dim, dim)
        diagmag = np.sqrt(np.diag(colrms))
        t = np.where(diagmag > 1e-150, 1.0 / np.maximum(diagmag, 1e-150), 1.0)
        scale[sl] = np.outer(t, t).ravel()
    return scale


def _facial_rows(
    M: np.ndarray,
    b: np.ndarray,
    slices: Sequence[slice],
    dims: Sequence[int],
) -> List[np.ndarray]:
    """Kernel constraints implied by homogeneous rows of PSD rank-1 blocks.

    When a row reads sum_i s_i * u_i^T X_i u_i = 0 with every s_i >= 0 and
    every X_i constrained PSD, each term must vanish individually, which for
    a PSD matrix means X_i u_i = 0.  Adding these linear consequences is a
    facial reduction: it leaves the feasible set unchanged but restores a
    relative interior, without which the splitting iteration crawls.  Rows
    that do not match the rank-1 PSD pattern are left untouched.
    """
    extra: List[np.ndarray] = []
    width = M.shape[1]
    for row, rhs in zip(M, b):
        if rhs != 0.0:
            continue
        vectors = []
        admissible = True
        for sl, dim in zip(slices, dims):
            B = row[sl].reshape(dim, dim)
            top = float(np.abs(B).max()) if B.size else 0.0
            if top == 0.0:
                vectors.append(None)
                continue
            k = int(np.argmax(np.diag(B)))
            dk = float(B[k, k])
            if dk <= 0.0:
                admissible = False
                break
            u = B[:, k] / math.sqrt(dk)
            s = dk / (u[k] ** 2)
            if float(np.abs(B - s * np.outer(u, u)).max()) > 1e-10 * top:
                admissible = False
                break
            vectors.append(u / np.linalg.norm(u))
        if not admissible:
            continue
        for sl, dim, u in zip(slices, dims, vectors):
            if u is None:
                continue
            for k in range(dim):
                r = np.zeros(width)
                E = np.zeros((dim, dim))
                E[:, k] += u / 2.0
                E[k, :] += u / 2.0
                r[sl] = E.ravel()
                extra.append(r)
    return extra


def solve_embedded(
    inst: SdpInstance,
    tol_eq: float = 1e-8,
    tol_psd: float = 1e-8,
    max_iterations: int = 50000,
    rho: float = 1.0,
    over_relaxation: float = 1.7,
    objective_floor: float = -1e3,
    norm_cap: float = 1e10,
) -> SolverResult:
    """Minimize sum_i Tr(X_i^T C_i) over the instance's equality rows and PSD cone.

    Deterministic given (instance, settings).  Convergence requires the scaled
    equality residual of the returned (PSD) iterate to reach tol_eq while
    successive iterates stabilize; residuals alone are not enough, because an
    instance whose objective is unbounded below has feasible iterates drifting
    along a recession ray.  Stalled residuals far above tolerance are reported
    as infeasible-detected; a diverging iterate norm or an objective below
    objective_floor is a numeric failure.  Linearly dependent rows (inevitable
    once the pivot count exceeds the blocks' symmetric dimension) are handled
    by reducing the row system to an orthonormal spanning set; residuals are
    always reported against the original rows.
    """
    if tol_eq <= 0 or tol_psd <= 0:
        raise ValueError("tolerances must be positive")
    start = time.monotonic()
    M, b, c, slices = _stack_rows(inst)
    dims = inst.block_dims
    norms_orig = np.linalg.norm(M, axis=1)

    def result(status, z, res, iterations, message="", checkpoints=None):
        blocks = [z[sl].reshape(dim, dim) for sl, dim in zip(slices, dims)]
        psd_res = 0.0
        for mat in blocks:
            if mat.size:
                psd_res = min(psd_res, float(np.linalg.eigvalsh(0.5 * (mat + mat.T)).min()))
        if status is SolverStatus.CONVERGED and psd_res < -tol_psd:
            status = SolverStatus.MAX_ITERATIONS
            message = "psd residual above tolerance at the accepted iterate"
        return SolverResult(
            status=status,
            objective_value=float(c @ z),
            primal_blocks=blocks,
            equality_residual=res,
            psd_residual=psd_res,
            iterations=iterations,
            wall_time=time.monotonic() - start,
            message=message,
            residual_checkpoints=checkpoints or [],
        )

    def eq_residual(z: np.ndarray) -> float:
        if M.shape[0] == 0:
            return 0.0
        return float(np.max(np.abs((M @ z - b) / (1.0 + norms_orig))))

    dead = norms_orig < 1e-300
    if np.any(dead & (np.abs(b) > 0)):
        return result(
            SolverStatus.INFEASIBLE,
            np.zeros_like(c),
            eq_residual(np.zeros_like(c)),
            0,
            "a zero row has nonzero right-hand side",
        )

    scale = _congruence_scale(M, slices, dims)
    extra = _facial_rows(M, b, slices, dims)
    M_aug = np.vstack([M] + [e[None, :] for e in extra]) if extra else M
    b_aug = np.concatenate([b, np.zeros(len(extra))])
    Ms = M_aug * scale[None, :]
    cs = c * scale
    row_norms = np.linalg.norm(Ms, axis=1)
    alive = row_norms > 1e-300
    Ms, b_k, row_norms = Ms[alive], b_aug[alive], row_norms[alive]

    if Ms.shape[0] > 0:
        Mn = Ms / row_norms[:, None]
        bn = b_k / row_norms
        U, S, Vt = np.linalg.svd(Mn, full_matrices=False)
        keep_dirs = S > S[0] * 1e-12 if S.size else np.zeros(0, bool)
        if not np.any(keep_dirs):
            return result(
                SolverStatus.NUMERIC_FAILURE,
                np.zeros_like(c),
                eq_residual(np.zeros_like(c)),
                0,
                "row system has no usable spectrum (degenerate pivots)",
            )
        W = Vt[keep_dirs]
        beta = (U[:, keep_dirs].T @ bn) / S[keep_dirs]

        def project_affine(y: np.ndarray) -> np.ndarray:
            return y + W.T @ (beta - W @ y)
    else:
        def project_affine(y: np.ndarray) -> np.ndarray:
            return y

    def project_psd(y: np.ndarray) -> np.ndarray:
        out = np.empty_like(y)
        for sl, dim in zip(slices, dims):
            mat = y[sl].reshape(dim, dim)
            sym = 0.5 * (mat + mat.T)
            vals, vecs = np.linalg.eigh(sym)
            np.clip(vals, 0.0, None, out=vals)
            out[sl] = ((vecs * vals) @ vecs.T).ravel()
        return out

    alpha = over_relaxation
    z = np.zeros_like(cs)
    u = np.zeros_like(cs)
    best_z = z * scale
    best_res = eq_residual(best_z)
    checkpoints: List[float] = [best_res]
    status = SolverStatus.MAX_ITERATIONS
    message = ""
    iterations = 0
    step_tol = tol_eq
    plateau_window = 1000
    last_window_best = best_res

    for it in range(1, max_iterations + 1):
        iterations = it
        x = project_affine(z - u - cs / rho)
        x_rel = alpha * x + (1.0 - alpha) * z
        z_new = project_psd(x_rel + u)
        u = u + x_rel - z_new
        step = float(np.max(np.abs(z_new - z))) if z.size else 0.0
        z = z_new

        z_orig = z * scale
        res = eq_residual(z_orig)
        if res < best_res:
            best_res = res
            best_z = z_orig
        if it % 100 == 0:
            checkpoints.append(best_res)
        if res <= tol_eq and step <= step_tol:
            status = SolverStatus.CONVERGED
            best_res, best_z = res, z_orig
            break
        if not np.all(np.isfinite(z)):
            status = SolverStatus.NUMERIC_FAILURE
            message = "non-finite values in iterates"
            break
        objective_now = float(c @ z_orig)
        if objective_now < objective_floor:
            status = SolverStatus.NUMERIC_FAILURE
            message = (
                f"objective fell below the floor {objective_floor:g}; "
                "unbounded below along a feasible ray"
            )
            break
        if float(np.linalg.norm(z)) > norm_cap:
            status = SolverStatus.NUMERIC_FAILURE
            message = "iterate norm diverged"
            break
        if it % plateau_window == 0:
            if best_res > 1e3 * tol_eq and best_res > 0.99 * last_window_best:
                status = SolverStatus.INFEASIBLE
                message = "equality residual stalled far above tolerance"
                break
            last_window_best = best_res

    checkpoints.append(best_res)
    return result(status, best_z, best_res, iterations, message, checkpoints)


# ---------------------------------------------------------------------------
# Certificate verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerificationReport:
    equality_residual: float
    psd_residual: float
    objective_recomputed: float


def verify_certificate(inst: SdpInstance, res: SolverResult) -> VerificationReport:
    """Recompute all traces, eigenvalue floors and the objective from scratch.

    Works directly on the instance's block matrices (not the solver's stacked
    representation) so a bug in the solve path cannot silently corrupt the
    report.  Residuals use the same (1 + row Frobenius norm) scaling the
    solver reports, making the two directly comparable.
    """
    if len(res.primal_blocks) != inst.n_blocks:
        raise ValueError(
            f"block count mismatch: result has {len(res.primal_blocks)}, "
            f"instance has {inst.n_blocks}"
        )
    for mat, dim in zip(res.primal_blocks, inst.block_dims):
        if mat.shape != (dim, dim):
            raise ValueError(f"block shape mismatch: {mat.shape} vs ({dim}, {dim})")

    def row_value_and_norm(blocks) -> Tuple[float, float]:
        arr = block_arrays(blocks)
        value = 0.0
        sq = 0.0
        for a, x in zip(arr, res.primal_blocks):
            value += float(np.tensordot(a, x))
            sq += float(np.sum(a * a))
        return value, math.sqrt(sq)

    worst = 0.0
    for row in inst.constraints:
        value, norm = row_value_and_norm(row)
        worst = max(worst, abs(value) / (1.0 + norm))
    value, norm = row_value_and_norm(inst.normalization)
    worst = max(worst, abs(value - 1.0) / (1.0 + norm))

    psd = 0.0
    for mat in res.primal_blocks:
        if mat.size:
            psd = min(psd, float(np.linalg.eigvalsh(0.5 * (mat + mat.T)).min()))

    objective, _ = row_value_and_norm(inst.objective)
    return VerificationReport(
        equality_residual=worst,
        psd_residual=psd,
        objective_recomputed=objective,
    )


# ---------------------------------------------------------------------------
# SDPA sparse file reading (round-trip of the emitter's output)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SparseSystem:
    """Numeric content of a .dat-s file: rows indexed 0 (objective) to m."""

    n_rows: int
    block_dims: Tuple[int, ...]
    rhs: Tuple[float, ...]
    entries: Tuple[Tuple[int, int, int, int, float], ...]


class FormatError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"{message} (line {line})")
        self.line = line


def read_sdpa_instance(text: str) -> SparseSystem:
    """Parse SDPA sparse format as written by emit_sdpa (comments tolerated)."""
    lines = text.splitlines()
    header: List[Tuple[int, str]] = [
        (i + 1, ln) for i, ln in enumerate(lines)
        if ln.strip() and not ln.lstrip().startswith(("*", '"'))
    ]
    if len(header) < 4:
        raise FormatError("truncated file: missing header", len(lines))
    try:
        n_rows = int(header[0][1])
        n_blocks = int(header[1][1])
        dims = tuple(abs(int(tok)) for tok in header[2][1].split())
        rhs = tuple(float(tok) for tok in header[3][1].split())
    except ValueError as exc:
        raise FormatError(f"bad header: {exc}", header[0][0]) from exc
    if len(dims) != n_blocks:
        raise FormatError(f"expected {n_blocks} block sizes, got {len(dims)}", header[2][0])
    if len(rhs) != n_rows:
        raise FormatError(f"expected {n_rows} right-hand sides, got {len(rhs)}", header[3][0])
    entries = []
    for lineno, ln in header[4:]:
        toks = ln.split()
        if len(toks) != 5:
            raise FormatError(f"expected 5 fields, got {len(toks)}", lineno)
        try:
            entries.append((int(toks[0]), int(toks[1]), int(toks[2]), int(toks[3]), float(toks[4])))
        except ValueError as exc:
            raise FormatError(f"bad entry: {exc}", lineno) from exc
    return SparseSystem(n_rows=n_rows, block_dims=dims, rhs=rhs, entries=tuple(entries))


def system_to_instance(sys: SparseSystem) -> SdpInstance:
    """Reconstruct an SdpInstance from a parsed sparse system.

    The last row is taken as the normalization row (the emitter's layout);
    its right-hand side must be 1.
    """
    from .compiler import make_instance

    if sys.n_rows < 1:
        raise ValueError("need at least the normalization row")
    if sys.rhs[-1] != 1.0 or any(x != 0.0 for x in sys.rhs[:-1]):
        raise ValueError("expected right-hand sides of K zeros then 1")

    def empty_rows():
        return [
            [[0.0] * dim for _ in range(dim)]
            for dim in sys.block_dims
        ]

    rows = [empty_rows() for _ in range(sys.n_rows + 1)]  # index 0 = objective
    for row, block, i, j, val in sys.entries:
        mat = rows[row][block - 1]
        mat[i - 1][j - 1] = val
        mat[j - 1][i - 1] = val
    return make_instance(
        block_dims=sys.block_dims,
        constraints=rows[1:-1],
        objective=rows[0],
        normalization=rows[-1],
    )


# ---------------------------------------------------------------------------
# External solver output parsing
# ---------------------------------------------------------------------------

_PHASE_MAP = {
    "pdOPT": SolverStatus.CONVERGED,
    "pdINF": SolverStatus.INFEASIBLE,
    "pINF_dFEAS": SolverStatus.INFEASIBLE,
    "pFEAS_dINF": SolverStatus.INFEASIBLE,
}


def parse_external_output(text: str) -> SolverResult:
    """Parse the stdout of an SDPA-family solver run.

    Extracts the primal objective, the termination phase and, when an
    "xMat" section is present, the primal blocks.  Status mapping is
    conservative: only an explicitly optimal phase maps to converged; the
    infeasible phases map to infeasible-detected; anything else becomes
    max_iterations.
    """
    lines = text.splitlines()
    phase: Optional[str] = None
    primal: Optional[float] = None
    gap = 0.0
    iterations = 0
    for ln in lines:
        if "phase.value" in ln:
            phase = ln.split("=", 1)[1].strip()
        elif "objValPrimal" in ln:
            try:
                primal = float(ln.split("=", 1)[1].strip())
            except (IndexError, ValueError) as exc:
                raise FormatError(f"unreadable objValPrimal: {exc}", lines.index(ln) + 1)
        elif "objValDual" in ln and primal is not None:
            try:
                gap = abs(primal - float(ln.split("=", 1)[1].strip()))
            except (IndexError, ValueError):
                pass
        elif re.match(r"\s*Iteration\s*=", ln):
            try:
                iterations = int(ln.split("=", 1)[1].strip())
            except (IndexError, ValueError):
                pass
    if phase is None or primal is None:
        missing = "phase.value" if phase is None else "objValPrimal"
        raise FormatError(f"missing {missing}; output truncated?", len(lines))
    blocks = _parse_xmat(lines)
    return SolverResult(
        status=_PHASE_MAP.get(phase, SolverStatus.MAX_ITERATIONS),
        objective_value=primal,
        primal_blocks=blocks,
        equality_residual=gap,
        psd_residual=0.0,
        iterations=iterations,
        wall_time=0.0,
        message=f"external phase {phase}",
    )


def _parse_xmat(lines: Sequence[str]) -> List[np.ndarray]:
    """Parse the brace-delimited xMat section if present, else return []."""
    try:
        start = next(i for i, ln in enumerate(lines) if ln.strip().startswith("xMat"))
    except StopIteration:
        return []
    body = []
    depth = 0
    for ln in lines[start:]:
        body.append(ln)
        depth += ln.count("{") - ln.count("}")
        if "{" in "".join(body) and depth == 0:
            break
    blob = " ".join(body)
    blob = blob[blob.index("{") + 1:blob.rindex("}")]
    blocks = []
    for match in re.finditer(r"\{((?:[^{}]|\{[^{}]*\})*)\}", blob):
        rows = re.findall(r"\{([^{}]*)\}", match.group(1))
        if rows:
            mat = [[float(tok) for tok in re.split(r"[,\s]+", row.strip()) if tok] for row in rows]
            blocks.append(np.array(mat))
        else:
            vals = [float(tok) for tok in re.split(r"[,\s]+", match.group(1).strip()) if tok]
            blocks.append(np.array([vals]))
    return blocks
