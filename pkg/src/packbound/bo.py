"""Gaussian-process surrogate over (r, R) -> bound, with proposal machinery.

The surrogate is a Matern-5/2 GP with per-dimension lengthscales, fit by
maximizing the marginal likelihood over a seeded multi-start Nelder-Mead
search.  Inputs are normalized to the search box and passed through a
per-dimension two-parameter monotone warp (Kumaraswamy CDF); outputs are
standardized and passed through a one-parameter sign-preserving power warp.
Bounds are minimized, so all acquisition math is written for minimization:
expected improvement by default, a confidence-bound alternative, and a
rank-aggregated multi-acquisition mode (an approximation of multi-objective
acquisition ensembles, and labelled as such in reports).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm, qmc

from .polys import GeometricParams

NOISE_FLOOR = 1e-14
ACQUISITIONS = ("ei", "ucb", "multi")


@dataclass(frozen=True)
class Observation:
    """One evaluated configuration: the best bound achieved at x."""

    x: GeometricParams
    y: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.y):
            raise ValueError(f"observation value must be finite, got {self.y}")


@dataclass(frozen=True)
class SearchBox:
    """Axis-aligned box for (r, R) proposals; points must satisfy r < R."""

    r_lo: float
    r_hi: float
    R_lo: float
    R_hi: float

    def __post_init__(self) -> None:
        if not (0 < self.r_lo <= self.r_hi and 0 < self.R_lo <= self.R_hi):
            raise ValueError(f"malformed box {self}")
        if self.r_lo >= self.R_hi:
            raise ValueError(f"box {self} has no feasible point with r < R")

    def contains(self, p: GeometricParams) -> bool:
        return self.r_lo <= p.r <= self.r_hi and self.R_lo <= p.R <= self.R_hi

    def normalize(self, X: np.ndarray) -> np.ndarray:
        lo = np.array([self.r_lo, self.R_lo])
        hi = np.array([self.r_hi, self.R_hi])
        span = np.where(hi > lo, hi - lo, 1.0)
        return (X - lo) / span

    def denormalize(self, Z: np.ndarray) -> np.ndarray:
        lo = np.array([self.r_lo, self.R_lo])
        hi = np.array([self.r_hi, self.R_hi])
        return lo + Z * (hi - lo)


def _kumaraswamy(z: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    zc = np.clip(z, 0.0, 1.0)
    return 1.0 - (1.0 - zc**a) ** b


def _matern52(scaled_dist: np.ndarray) -> np.ndarray:
    t = math.sqrt(5.0) * scaled_dist
    return (1.0 + t + t * t / 3.0) * np.exp(-t)


@dataclass
class Hyperparams:
    lengthscales: np.ndarray  # per input dimension, in warped [0,1] coords
    signal_var: float
    noise_var: float
    warp_a: np.ndarray  # input warp, per dimension
    warp_b: np.ndarray
    power: float  # output warp exponent

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            np.log(self.lengthscales),
            [math.log(self.signal_var), math.log(self.noise_var)],
            np.log(self.warp_a),
            np.log(self.warp_b),
            [math.log(self.power)],
        ])

    @staticmethod
    def from_vector(vec: np.ndarray) -> "Hyperparams":
        v = np.asarray(vec, dtype=float)
        ls = np.exp(np.clip(v[0:2], math.log(1e-2), math.log(1e2)))
        sig = float(np.exp(np.clip(v[2], math.log(1e-6), math.log(1e4))))
        noise = float(np.exp(np.clip(v[3], math.log(NOISE_FLOOR), math.log(1e-2))))
        wa = np.exp(np.clip(v[4:6], math.log(0.1), math.log(10.0)))
        wb = np.exp(np.clip(v[6:8], math.log(0.1), math.log(10.0)))
        power = float(np.exp(np.clip(v[8], math.log(0.25), math.log(4.0))))
        return Hyperparams(ls, sig, noise, wa, wb, power)


def _default_hyperparams() -> Hyperparams:
    return Hyperparams(
        lengthscales=np.array([0.5, 0.5]),
        signal_var=1.0,
        noise_var=NOISE_FLOOR,
        warp_a=np.array([1.0, 1.0]),
        warp_b=np.array([1.0, 1.0]),
        power=1.0,
    )


@dataclass
class Surrogate:
    """Fitted GP posterior; immutable after fit_surrogate returns it."""

    data: Tuple[Observation, ...]
    box: SearchBox
    hyper: Hyperparams
    input_warp: bool = True
    output_warp: bool = True
    # fitted state
    _Xn: np.ndarray = field(default=None, repr=False)
    _y_loc: float = 0.0
    _y_spread: float = 1.0
    _yw: np.ndarray = field(default=None, repr=False)
    _mean_w: float = 0.0
    _chol: np.ndarray = field(default=None, repr=False)
    _alpha: np.ndarray = field(default=None, repr=False)

    # ---- warps ----

    def _warp_inputs(self, Z: np.ndarray) -> np.ndarray:
        if not self.input_warp:
            return Z
        return _kumaraswamy(Z, self.hyper.warp_a, self.hyper.warp_b)

    def _warp_output(self, y: np.ndarray) -> np.ndarray:
        if not self.output_warp:
            return np.asarray(y, dtype=float)
        t = (np.asarray(y, dtype=float) - self._y_loc) / self._y_spread
        return np.sign(t) * np.abs(t) ** self.hyper.power

    def _unwarp_output(self, v: float) -> float:
        if not self.output_warp:
            return float(v)
        return float(self._y_loc + self._y_spread * math.copysign(abs(v) ** (1.0 / self.hyper.power), v))

    # ---- GP internals ----

    def _kernel(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        ls = self.hyper.lengthscales
        diff = (A[:, None, :] - B[None, :, :]) / ls
        return self.hyper.signal_var * _matern52(np.sqrt(np.sum(diff * diff, axis=-1)))

    def refresh(self) -> None:
        """(Re)build the cached Cholesky state from data and hyperparameters."""
        X = np.array([[o.x.r, o.x.R] for o in self.data], dtype=float)
        y = np.array([o.y for o in self.data], dtype=float)
        self._y_loc = float(np.mean(y))
        spread = float(np.std(y))
        self._y_spread = spread if spread > 0 else 1.0
        self._Xn = self._warp_inputs(self.box.normalize(X))
        self._yw = self._warp_output(y)
        self._mean_w = float(np.mean(self._yw))
        K = self._kernel(self._Xn, self._Xn)
        K[np.diag_indices_from(K)] += max(self.hyper.noise_var, NOISE_FLOOR)
        jitter = 1e-14
        for _ in range(12):
            try:
                self._chol = np.linalg.cholesky(K + jitter * np.eye(len(K)))
                break
            except np.linalg.LinAlgError:
                jitter *= 10.0
        else:
            raise RuntimeError("kernel matrix is not positive definite even with jitter")
        resid = self._yw - self._mean_w
        self._alpha = np.linalg.solve(self._chol.T, np.linalg.solve(self._chol, resid))

    def nll(self) -> float:
        """Negative log marginal likelihood at the current hyperparameters."""
        resid = self._yw - self._mean_w
        n = len(resid)
        return float(
            0.5 * resid @ self._alpha
            + np.sum(np.log(np.diag(self._chol)))
            + 0.5 * n * math.log(2 * math.pi)
        )

    def predict_warped(self, Z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Posterior mean and stddev in warped output space, at normalized inputs."""
        Zw = self._warp_inputs(np.atleast_2d(Z))
        Ks = self._kernel(Zw, self._Xn)
        mu = self._mean_w + Ks @ self._alpha
        half = np.linalg.solve(self._chol, Ks.T)
        var = self.hyper.signal_var - np.sum(half * half, axis=0)
        return mu, np.sqrt(np.clip(var, 0.0, None))

    def best_warped(self) -> float:
        return float(np.min(self._yw))

    def posterior(self, x: GeometricParams) -> Tuple[float, float]:
        """(mu, sigma) at x in original output units; x must lie in the box.

        The mean is the inverse warp of the warped-space mean; sigma is a
        symmetric-difference transform of the warped-space deviation (exact
        for the identity warp, a monotone-consistent approximation otherwise).
        """
        if not self.box.contains(x):
            raise ValueError(f"point ({x.r}, {x.R}) lies outside the search box {self.box}")
        Z = self.box.normalize(np.array([[x.r, x.R]]))
        mu_w, sd_w = self.predict_warped(Z)
        mu = self._unwarp_output(float(mu_w[0]))
        hi = self._unwarp_output(float(mu_w[0] + sd_w[0]))
        lo = self._unwarp_output(float(mu_w[0] - sd_w[0]))
        return mu, max(0.0, 0.5 * (hi - lo))


def _dedupe(data: Sequence[Observation]) -> List[Observation]:
    by_x: dict = {}
    for obs in data:
        key = (obs.x.r, obs.x.R)
        if key in by_x and by_x[key].y != obs.y:
            warnings.warn(
                f"duplicate input ({key[0]}, {key[1]}) with conflicting values "
                f"{by_x[key].y} and {obs.y}; keeping the smaller",
                stacklevel=3,
            )
            if obs.y < by_x[key].y:
                by_x[key] = obs
        elif key not in by_x:
            by_x[key] = obs
    return list(by_x.values())


def fit_surrogate(
    data: Sequence[Observation],
    box: SearchBox,
    seed: int,
    n_starts: int = 6,
    max_evals: int = 150,
    input_warp: bool = True,
    output_warp: bool = True,
) -> Surrogate:
    """Fit hyperparameters by seeded multi-start Nelder-Mead on the marginal NLL.

    Deterministic given (data, seed, budgets).  Duplicate inputs with
    conflicting values keep the smaller value (bounds are minimized) and
    record a warning.
    """
    clean = _dedupe(data)
    if not clean:
        raise ValueError("need at least one observation to fit")
    base = Surrogate(tuple(clean), box, _default_hyperparams(), input_warp, output_warp)
    base.refresh()
    if len(clean) == 1:
        return base

    rng = np.random.default_rng(seed)
    x0 = base.hyper.to_vector()

    def objective(vec: np.ndarray) -> float:
        trial = Surrogate(tuple(clean), box, Hyperparams.from_vector(vec), input_warp, output_warp)
        try:
            trial.refresh()
            return trial.nll()
        except (np.linalg.LinAlgError, RuntimeError, FloatingPointError):
            return 1e12

    # Stage 1: kernel hyperparameters only (lengthscales, signal, noise) with
    # the warps held at identity; the reduced search is far more reliable at
    # small evaluation budgets than the joint nine-dimensional one.  The
    # pairwise input differences and the standardized outputs are constant
    # here, so the likelihood is evaluated on precomputed tensors.
    kernel_idx = np.arange(4)
    X_fixed = base._Xn
    sq_diff = (X_fixed[:, None, :] - X_fixed[None, :, :]) ** 2
    resid_fixed = base._yw - base._mean_w
    n_obs = len(resid_fixed)

    def kernel_nll(sub: np.ndarray) -> float:
        hyper = Hyperparams.from_vector(np.concatenate([sub, x0[4:]]))
        ls2 = hyper.lengthscales**2
        K = hyper.signal_var * _matern52(np.sqrt(sq_diff[:, :, 0] / ls2[0] + sq_diff[:, :, 1] / ls2[1]))
        K[np.diag_indices_from(K)] += max(hyper.noise_var, NOISE_FLOOR) + 1e-14
        try:
            chol = np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            return 1e12
        alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, resid_fixed))
        return float(
            0.5 * resid_fixed @ alpha
            + np.sum(np.log(np.diag(chol)))
            + 0.5 * n_obs * math.log(2 * math.pi)
        )

    structured = [
        x0[kernel_idx],
        np.array([math.log(0.15), math.log(0.15), 0.0, math.log(NOISE_FLOOR)]),
        np.array([math.log(1.0), math.log(1.0), 0.0, math.log(NOISE_FLOOR)]),
    ]
    starts = structured[: max(1, n_starts)] + [
        x0[kernel_idx] + rng.uniform(-1.5, 1.5, size=4)
        for _ in range(max(0, n_starts - len(structured)))
    ]
    best_sub, best_val = starts[0], kernel_nll(starts[0])
    for s in starts:
        out = minimize(kernel_nll, s, method="Nelder-Mead",
                       options={"maxfev": max_evals, "xatol": 1e-4, "fatol": 1e-8})
        if out.fun < best_val - 1e-12:
            best_val, best_sub = out.fun, out.x
    best_vec = x0.copy()
    best_vec[kernel_idx] = best_sub
    best_val = objective(best_vec)

    # Stage 2: joint refinement including warps, kept only if it helps.
    if input_warp or output_warp:
        out = minimize(objective, best_vec, method="Nelder-Mead",
                       options={"maxfev": max_evals, "xatol": 1e-4, "fatol": 1e-8})
        if out.fun < best_val - 1e-12:
            best_val, best_vec = out.fun, out.x

    fitted = Surrogate(tuple(clean), box, Hyperparams.from_vector(best_vec), input_warp, output_warp)
    fitted.refresh()
    return fitted


def posterior(s: Surrogate, x: GeometricParams) -> Tuple[float, float]:
    return s.posterior(x)


# ---------------------------------------------------------------------------
# Acquisition functions (all written for minimization)
# ---------------------------------------------------------------------------

def expected_improvement(s: Surrogate, Z: np.ndarray) -> np.ndarray:
    """EI over the current best observed value, in warped output space; >= 0."""
    mu, sd = s.predict_warped(Z)
    best = s.best_warped()
    gap = best - mu
    out = np.maximum(gap, 0.0)
    positive = sd > 0
    u = gap[positive] / sd[positive]
    out[positive] = gap[positive] * norm.cdf(u) + sd[positive] * norm.pdf(u)
    return np.maximum(out, 0.0)


def log_expected_improvement(s: Surrogate, Z: np.ndarray) -> np.ndarray:
    """log EI, stable where EI underflows; used for ranking proposals.

    With many observations the improvement probability collapses and EI
    underflows float64 across the whole box, which would reduce the argmax
    to noise.  For u = gap / sigma far below zero, EI = sigma * h(u) with
    h(u) = pdf(u) + u * cdf(u) ~ pdf(u) / u^2, giving the asymptotic branch.
    """
    mu, sd = s.predict_warped(Z)
    gap = s.best_warped() - mu
    out = np.full(len(gap), -np.inf)
    zero_sd = sd <= 0
    certain = zero_sd & (gap > 0)
    out[certain] = np.log(gap[certain])
    positive = ~zero_sd
    u = gap[positive] / sd[positive]
    vals = np.empty_like(u)
    near = u > -10.0
    h = norm.pdf(u[near]) + u[near] * norm.cdf(u[near])
    vals[near] = np.log(np.maximum(h, 1e-300))
    far = ~near
    uf = u[far]
    vals[far] = -0.5 * uf * uf - 0.5 * math.log(2 * math.pi) - 2.0 * np.log(-uf)
    out[positive] = np.log(sd[positive]) + vals
    return out


def confidence_bound(s: Surrogate, Z: np.ndarray, kappa: float = 2.0) -> np.ndarray:
    """Negated lower confidence bound, so larger is better for minimization."""
    mu, sd = s.predict_warped(Z)
    return -(mu - kappa * sd)


def probability_of_improvement(s: Surrogate, Z: np.ndarray) -> np.ndarray:
    mu, sd = s.predict_warped(Z)
    best = s.best_warped()
    out = (best - mu > 0).astype(float)
    positive = sd > 0
    out[positive] = norm.cdf((best - mu[positive]) / sd[positive])
    return out


def acquisition_scores(s: Surrogate, Z: np.ndarray, kind: str, kappa: float = 2.0) -> np.ndarray:
    """Scores where larger is better.

    "multi" aggregates the ranks of EI, the confidence bound and the
    probability of improvement; it is a rank-level approximation of a
    multi-objective acquisition ensemble, not a reproduction of one.
    """
    if kind == "ei":
        return log_expected_improvement(s, Z)
    if kind == "ucb":
        return confidence_bound(s, Z, kappa)
    if kind == "multi":
        parts = [
            log_expected_improvement(s, Z),
            confidence_bound(s, Z, kappa),
            probability_of_improvement(s, Z),
        ]
        total = np.zeros(len(Z))
        for p in parts:
            order = np.argsort(np.argsort(-p, kind="stable"), kind="stable")
            total -= order  # smaller summed rank is better
        return total
    raise ValueError(f"unknown acquisition {kind!r}; expected one of {ACQUISITIONS}")


def _sobol_candidates(box: SearchBox, seed: int, count: int) -> np.ndarray:
    sampler = qmc.Sobol(d=2, scramble=True, seed=seed)
    pts = box.denormalize(sampler.random(count))
    return pts[pts[:, 0] < pts[:, 1]]


def propose_next(
    s: Optional[Surrogate],
    box: SearchBox,
    seed: int,
    acquisition: str = "ei",
    kappa: float = 2.0,
    n_candidates: int = 256,
    refine_evals: int = 60,
) -> GeometricParams:
    """Next (r, R) to evaluate: seeded multi-start maximization of the acquisition.

    With no fitted data the proposal is the first point of the seeded
    low-discrepancy sequence inside the box satisfying r < R.  Every returned
    point lies in the box with r < R.
    """
    if s is None or not s.data:
        for count in (8, 64, 512, 4096):
            pts = _sobol_candidates(box, seed, count)
            if len(pts):
                return GeometricParams(r=float(pts[0, 0]), R=float(pts[0, 1]))
        raise ValueError(f"no feasible r < R point found in box {box}")

    cands = _sobol_candidates(box, seed, n_candidates)
    if len(cands) == 0:
        cands = _sobol_candidates(box, seed, 64 * n_candidates)
        if len(cands) == 0:
            raise ValueError(f"no feasible r < R point found in box {box}")
    # The improvement peak near the incumbent narrows as data accumulate, so
    # space-filling candidates alone can miss it; add seeded jitter around
    # the best observed point at several scales.
    best_obs = min(s.data, key=lambda o: o.y)
    rng = np.random.default_rng(seed)
    around = np.array([best_obs.x.r, best_obs.x.R]) + np.concatenate([
        scale * rng.standard_normal((8, 2))
        for scale in (0.2, 0.05, 0.01)
    ]) * np.array([box.r_hi - box.r_lo, box.R_hi - box.R_lo])
    around[:, 0] = np.clip(around[:, 0], box.r_lo, box.r_hi)
    around[:, 1] = np.clip(around[:, 1], box.R_lo, box.R_hi)
    around = around[around[:, 0] < around[:, 1]]
    if len(around):
        cands = np.vstack([cands, around])
    Z = box.normalize(cands)
    scores = acquisition_scores(s, Z, acquisition, kappa)
    top = int(np.argmax(scores))

    def neg_acq(z: np.ndarray) -> float:
        if np.any(z < 0.0) or np.any(z > 1.0):
            return 1e12
        pt = box.denormalize(z[None, :])[0]
        if not pt[0] < pt[1]:
            return 1e12
        return -float(acquisition_scores(s, z[None, :], acquisition, kappa)[0])

    out = minimize(neg_acq, Z[top], method="Nelder-Mead",
                   options={"maxfev": refine_evals, "xatol": 1e-6, "fatol": 1e-12})
    choice = Z[top]
    if out.fun <= -scores[top] and neg_acq(out.x) < 1e12:
        choice = out.x
    pt = box.denormalize(np.clip(choice, 0.0, 1.0)[None, :])[0]
    if not pt[0] < pt[1]:
        pt = cands[top]
    return GeometricParams(r=float(pt[0]), R=float(pt[1]))
