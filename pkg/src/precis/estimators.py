"""Precision-matrix estimators.

Four families: the plain sample inverse, Ledoit-Wolf shrinkage toward a
scaled identity, a PCA truncation, and penalized quasi-maximum-likelihood
with l1 / l2 / elastic-net penalties on the off-diagonal entries.

The penalized problem maximizes, over symmetric positive definite psi,

    (T/2) log det(psi) - (T/2) trace(S psi) - rho * P(psi)

with P summing |psi_ij| (l1), psi_ij^2 (l2), or the (1-alpha)/alpha blend
(elastic) over i != j; the diagonal is never penalized. Internally the
objective is divided by T/2 (effective penalty weight 2 rho / T), which
leaves the maximizer unchanged while keeping rho on the scale used for
grid tuning. Two solvers are provided:

  * "row_cd"   - primal block coordinate ascent: sweep the rows/columns of
                 psi, solving each row's soft-threshold coordinate-descent
                 subproblem while the rest of the matrix is held fixed.
                 Default for the l1 penalty. Monotone in the objective and
                 positive definite by construction (each row update fixes
                 the Schur complement at 1/s_ii > 0).
  * "proximal" - proximal gradient ascent with backtracking line search;
                 candidate steps are rejected unless a Cholesky
                 factorization succeeds and the objective does not
                 decrease. Default for the l2 and elastic penalties.

Both solvers stop on the same first-order optimality residual: the largest
entrywise distance between the smooth-part gradient and the penalty
subdifferential, measured on the T/2-normalized objective.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a normal install, but optional
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap

from .errors import (
    DegenerateMatrixError,
    InsufficientDataError,
    SingularMatrixError,
    TuningError,
)
from .linalg import (
    SINGULARITY_RTOL,
    check_symmetric,
    invert_spd,
    sample_covariance,
    sym_eigen,
    symmetrize,
)

logger = logging.getLogger(__name__)

PENALTY_KINDS = ("l1", "l2", "elastic")


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty kind plus intensity rho and, for elastic, the l2-weight share alpha."""

    kind: str
    rho: float
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ValueError(f"kind must be one of {PENALTY_KINDS}, got {self.kind!r}")
        if self.rho < 0:
            raise ValueError(f"rho must be nonnegative, got {self.rho}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    @property
    def weights(self) -> tuple[float, float]:
        """(l1 share, l2 share): l1 -> (1, 0), l2 -> (0, 1), elastic -> (1-alpha, alpha)."""
        if self.kind == "l1":
            return 1.0, 0.0
        if self.kind == "l2":
            return 0.0, 1.0
        return 1.0 - self.alpha, self.alpha

    def value(self, psi: np.ndarray) -> float:
        """rho * P(psi) over the off-diagonal entries (both triangles counted)."""
        off = psi[~np.eye(psi.shape[0], dtype=bool)]
        l1w, l2w = self.weights
        return self.rho * (l1w * float(np.abs(off).sum()) + l2w * float((off**2).sum()))


@dataclass(frozen=True)
class SolverOptions:
    """Knobs for the penalized QML solvers.

    tol bounds the first-order optimality residual on the T/2-normalized
    objective, measured relative to max(1, max|S_ij|) so the same setting
    is meaningful for unit-scale matrices and percent-unit return data.
    max_iter counts outer sweeps (row_cd) or gradient steps (proximal).
    algorithm "auto" picks row_cd for l1 and proximal for l2 / elastic.
    """

    tol: float = 1e-6
    max_iter: int = 10000
    algorithm: str = "auto"
    record_trace: bool = True

    def __post_init__(self):
        if self.algorithm not in ("auto", "row_cd", "proximal"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter at least 1")


@dataclass(frozen=True)
class PrecisionEstimate:
    """An estimated precision matrix plus solver provenance."""

    psi: np.ndarray
    estimator_kind: str
    penalty: PenaltySpec | None = None
    objective_value: float = math.nan
    iterations: int = 0
    converged: bool = True
    residual: float = 0.0
    objective_trace: np.ndarray | None = None
    lw_intensity: float | None = None


@dataclass(frozen=True)
class PcaEstimate:
    """Reduced-dimension precision from the dominant principal components.

    components holds the retained eigenvectors as p x k columns (descending
    eigenvalue order); reduced_precision is the k x k diagonal of inverse
    eigenvalues.
    """

    k: int
    components: np.ndarray
    reduced_precision: np.ndarray
    explained_fraction: float
    eigenvalues: np.ndarray  # the k retained eigenvalues, descending


def sample_precision(s: np.ndarray) -> PrecisionEstimate:
    """Directly invert the sample covariance; fails on singular windows."""
    s = check_symmetric(s)
    return PrecisionEstimate(psi=invert_spd(s), estimator_kind="sample")


def ledoit_wolf_intensity(window: np.ndarray) -> float:
    """Analytic shrinkage intensity toward the scaled identity.

    Ratio of the averaged squared deviation of per-observation outer
    products around the sample covariance to the squared distance between
    the sample covariance and the target, clipped to [0, 1]. Uses the 1/n
    covariance convention internally, as in the original derivation.
    """
    x = np.asarray(window, dtype=float)
    n, p = x.shape
    if n < 2:
        raise InsufficientDataError("need at least 2 observations")
    xc = x - x.mean(axis=0)
    s_n = xc.T @ xc / n
    mu = float(np.trace(s_n)) / p
    d2 = float(np.sum((s_n - mu * np.eye(p)) ** 2))
    if d2 <= 0:
        return 0.0
    b2 = 0.0
    for t in range(n):
        outer = np.outer(xc[t], xc[t])
        b2 += float(np.sum((outer - s_n) ** 2))
    b2 /= n * n
    return min(b2 / d2, 1.0)


def ledoit_wolf(
    s: np.ndarray, alpha: float | None = None, *, window: np.ndarray | None = None
) -> PrecisionEstimate:
    """Precision from the shrunk covariance (1 - alpha) S + alpha sigma2bar I.

    sigma2bar is the mean of the diagonal of S. When alpha is omitted it is
    set from the analytic optimal-intensity estimator, which needs the raw
    return window; pass it via the window keyword.
    """
    s = check_symmetric(s)
    sigma2bar = float(np.mean(np.diag(s)))
    if sigma2bar <= 0:
        raise DegenerateMatrixError("average variance is zero; nothing to shrink toward")
    if alpha is None:
        if window is None:
            raise ValueError("either a fixed alpha or the raw window is required")
        alpha = ledoit_wolf_intensity(window)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"shrinkage intensity must lie in [0, 1], got {alpha}")
    shrunk = (1.0 - alpha) * s + alpha * sigma2bar * np.eye(s.shape[0])
    return PrecisionEstimate(
        psi=invert_spd(shrunk), estimator_kind="ledoit_wolf", lw_intensity=float(alpha)
    )


def pca_precision(window: np.ndarray, threshold: float = 0.99) -> PcaEstimate:
    """Keep the fewest leading principal components explaining >= threshold.

    Eigenvalues are taken in descending order from the window's sample
    covariance; the reduced precision is the diagonal of their inverses.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    decomp = sym_eigen(sample_covariance(window))
    lam = decomp.eigenvalues[::-1]
    vecs = decomp.eigenvectors[:, ::-1]
    positive = np.maximum(lam, 0.0)
    total = float(positive.sum())
    if total <= 0:
        raise DegenerateMatrixError("window has zero total variance")
    shares = np.cumsum(positive) / total
    k = int(np.searchsorted(shares, threshold - 1e-15) + 1)
    k = min(k, len(lam))
    retained = lam[:k]
    if retained[-1] <= 0:
        raise DegenerateMatrixError("threshold reaches into the null spectrum")
    return PcaEstimate(
        k=k,
        components=vecs[:, :k].copy(),
        reduced_precision=np.diag(1.0 / retained),
        explained_fraction=float(shares[k - 1]),
        eigenvalues=retained.copy(),
    )


# --------------------------------------------------------------------------
# Penalized QML
# --------------------------------------------------------------------------

def _qml_objective(psi: np.ndarray, s: np.ndarray, lam1: float, lam2: float) -> float:
    """Normalized objective logdet - trace - penalty; -inf when not PD."""
    sign, logdet = np.linalg.slogdet(psi)
    if sign <= 0:
        return -np.inf
    off = psi[~np.eye(psi.shape[0], dtype=bool)]
    return (
        logdet
        - float(np.sum(s * psi))
        - lam1 * float(np.abs(off).sum())
        - lam2 * float((off**2).sum())
    )


def _optimality_residual(
    psi: np.ndarray, w: np.ndarray, s: np.ndarray, lam1: float, lam2: float
) -> float:
    """Max entrywise distance of the gradient from the penalty subdifferential.

    w must be the inverse of psi. Diagonal entries are unpenalized, so their
    residual is just |w_ii - s_ii|; off-diagonals subtract the l2 gradient
    and measure distance to lam1 * [-1, 1] at zeros.
    """
    diag = np.eye(psi.shape[0], dtype=bool)
    grad = w - s
    grad[~diag] -= 2.0 * lam2 * psi[~diag]
    res_diag = float(np.abs(grad[diag]).max())
    off_grad = grad[~diag]
    off_psi = psi[~diag]
    at_zero = off_psi == 0.0
    res_off = 0.0
    if np.any(~at_zero):
        res_off = float(np.abs(off_grad[~at_zero] - lam1 * np.sign(off_psi[~at_zero])).max())
    if np.any(at_zero):
        res_off = max(res_off, float(np.maximum(np.abs(off_grad[at_zero]) - lam1, 0.0).max()))
    return max(res_diag, res_off)


def _chol_inverse(psi: np.ndarray) -> np.ndarray:
    ident = np.eye(psi.shape[0])
    chol = np.linalg.cholesky(psi)
    half = np.linalg.solve(chol, ident)
    return symmetrize(half.T @ half)


@njit(cache=True)
def _row_cd_kernel(a, c, beta, lam1, lam2, inner_tol, max_sweeps):
    """Cyclic coordinate descent for 0.5 b'Ab + c'b + lam1 |b|_1 + lam2 |b|_2^2."""
    k = beta.shape[0]
    u = a @ beta
    for _ in range(max_sweeps):
        biggest = 0.0
        bmax = 0.0
        for j in range(k):
            partial = c[j] + u[j] - a[j, j] * beta[j]
            mag = abs(partial) - lam1
            if mag < 0.0:
                mag = 0.0
            new = -np.sign(partial) * mag / (a[j, j] + 2.0 * lam2)
            delta = new - beta[j]
            if delta != 0.0:
                for t in range(k):
                    u[t] += a[t, j] * delta
                beta[j] = new
                if abs(delta) > biggest:
                    biggest = abs(delta)
            if abs(new) > bmax:
                bmax = abs(new)
        if biggest <= inner_tol * (1.0 + bmax):
            break
    return beta


def _row_subproblem(
    a: np.ndarray, c: np.ndarray, beta: np.ndarray, lam1: float, lam2: float, inner_tol: float
) -> np.ndarray:
    return _row_cd_kernel(
        np.ascontiguousarray(a), c, beta, float(lam1), float(lam2), float(inner_tol), 100
    )


def _solve_row_cd(
    s: np.ndarray, lam1: float, lam2: float, psi0: np.ndarray, opts: SolverOptions
) -> tuple[np.ndarray, int, bool, float, list[float]]:
    """Primal row/column sweep: each pass re-solves every hedge-row problem.

    Holding all but one row/column of psi fixed, the optimal row solves a
    penalized quadratic whose Gram matrix is s_ii times the inverse of the
    retained block; that inverse comes from the maintained w = psi^{-1} via
    the block-inverse identity, and the diagonal update pins the Schur
    complement at 1/s_ii, so every iterate stays positive definite.
    """
    p = s.shape[0]
    psi = psi0.copy()
    w = _chol_inverse(psi)
    inner_tol = max(opts.tol * 1e-2, 1e-13)
    trace: list[float] = []
    converged = False
    residual = np.inf
    sweeps = 0
    for sweeps in range(1, opts.max_iter + 1):
        for i in range(p):
            rest = np.arange(p) != i
            s22 = s[i, i]
            w12 = w[rest, i]
            q = w[np.ix_(rest, rest)] - np.outer(w12, w12) / w[i, i]
            beta = _row_subproblem(
                s22 * q, s[rest, i].copy(), psi[rest, i].copy(), lam1, lam2, inner_tol
            )
            qb = q @ beta
            psi[rest, i] = beta
            psi[i, rest] = beta
            psi[i, i] = 1.0 / s22 + float(beta @ qb)
            w[i, i] = s22
            w[rest, i] = -s22 * qb
            w[i, rest] = -s22 * qb
            w[np.ix_(rest, rest)] = q + s22 * np.outer(qb, qb)
        w = _chol_inverse(psi)  # kill incremental drift once per sweep
        residual = _optimality_residual(psi, w, s, lam1, lam2)
        if opts.record_trace:
            trace.append(_qml_objective(psi, s, lam1, lam2))
        if residual <= opts.tol:
            converged = True
            break
    return symmetrize(psi), sweeps, converged, residual, trace


def _solve_proximal(
    s: np.ndarray, lam1: float, lam2: float, psi0: np.ndarray, opts: SolverOptions
) -> tuple[np.ndarray, int, bool, float, list[float]]:
    """Proximal gradient ascent with a positive-definiteness-preserving search.

    The smooth part (log-likelihood plus the l2 penalty) is stepped along
    its gradient; the l1 part enters through soft-thresholding of the
    off-diagonals. Trial steps use the Barzilai-Borwein spectral length,
    then backtrack: a candidate is rejected, and the step halved, unless
    its Cholesky factorization succeeds, the majorization inequality holds,
    and the composite objective has not decreased.
    """
    p = s.shape[0]
    diag = np.eye(p, dtype=bool)
    psi = psi0.copy()
    w = _chol_inverse(psi)
    # 1/L for the initial iterate: the log-det Hessian norm is the squared
    # largest eigenvalue of psi^{-1}, and psi0 is diagonal.
    step = float(1.0 / (np.max(1.0 / np.diag(psi0)) ** 2 + 2.0 * lam2 + 1e-300))

    def smooth(m: np.ndarray) -> float:
        sign, logdet = np.linalg.slogdet(m)
        if sign <= 0:
            return -np.inf
        return logdet - float(np.sum(s * m)) - lam2 * float((m[~diag] ** 2).sum())

    def gradient() -> np.ndarray:
        g = w - s
        g[~diag] -= 2.0 * lam2 * psi[~diag]
        return g

    h_cur = smooth(psi)
    obj_cur = h_cur - lam1 * float(np.abs(psi[~diag]).sum())
    grad = gradient()
    trace: list[float] = []
    converged = False
    residual = np.inf
    steps = 0
    for steps in range(1, opts.max_iter + 1):
        accepted = False
        while step > 1e-18:
            cand = psi + step * grad
            cand[~diag] = np.sign(cand[~diag]) * np.maximum(
                np.abs(cand[~diag]) - step * lam1, 0.0
            )
            cand = symmetrize(cand)
            try:
                chol = np.linalg.cholesky(cand)
            except np.linalg.LinAlgError:
                step *= 0.5
                continue
            diff = cand - psi
            h_cand = smooth(cand)
            bound = h_cur + float(np.sum(grad * diff)) - float(np.sum(diff * diff)) / (2 * step)
            obj_cand = h_cand - lam1 * float(np.abs(cand[~diag]).sum())
            if h_cand < bound - 1e-12 * abs(bound) or obj_cand < obj_cur - 1e-12 * abs(obj_cur):
                step *= 0.5
                continue
            accepted = True
            break
        if not accepted:
            break  # step size underflow: report the best iterate, not converged
        half = np.linalg.solve(chol, np.eye(p))
        w = symmetrize(half.T @ half)
        psi_prev, grad_prev = psi, grad
        psi = cand
        h_cur, obj_cur = h_cand, obj_cand
        if opts.record_trace:
            trace.append(obj_cur)
        grad = gradient()
        residual = _optimality_residual(psi, w, s, lam1, lam2)
        if residual <= opts.tol:
            converged = True
            break
        # Spectral (Barzilai-Borwein) trial length for the next step; the
        # curvature product is nonpositive for a concave smooth part.
        s_diff = psi - psi_prev
        y_diff = grad - grad_prev
        curv = -float(np.sum(s_diff * y_diff))
        if curv > 0:
            step = float(np.sum(s_diff * s_diff)) / curv
        else:
            step *= 2.0
    return symmetrize(psi), steps, converged, residual, trace


def penalized_qml(
    s: np.ndarray, t: int, penalty: PenaltySpec, opts: SolverOptions | None = None
) -> PrecisionEstimate:
    """Maximize the penalized Gaussian quasi-likelihood over PD precisions.

    s is the sample covariance of a window of t observations. With rho = 0
    the problem is unconstrained and requires a nonsingular s (the optimum
    is its plain inverse); any rho > 0 yields a finite positive definite
    maximizer even when s is singular, provided its diagonal is positive.
    A solver that exhausts its iteration budget returns the best iterate
    with converged=False rather than raising.
    """
    s = check_symmetric(s)
    opts = opts or SolverOptions()
    t = int(t)
    if t < 2:
        raise InsufficientDataError(f"sample count must be at least 2, got {t}")
    p = s.shape[0]
    if np.any(np.diag(s) <= 0):
        raise DegenerateMatrixError("sample covariance has a non-positive diagonal entry")
    rho_eff = 2.0 * penalty.rho / t
    l1_share, l2_share = penalty.weights
    lam1 = rho_eff * l1_share
    lam2 = rho_eff * l2_share
    if penalty.rho == 0.0:
        # force the singularity check the unpenalized problem requires
        invert_spd(s)

    scale = max(1.0, float(np.abs(s).max()))
    psi0 = np.diag(1.0 / (np.diag(s) + penalty.rho / t))
    algorithm = opts.algorithm
    if algorithm == "auto":
        algorithm = "row_cd" if penalty.kind == "l1" else "proximal"
    solver = _solve_row_cd if algorithm == "row_cd" else _solve_proximal
    scaled_opts = SolverOptions(
        tol=opts.tol * scale,
        max_iter=opts.max_iter,
        algorithm=opts.algorithm,
        record_trace=opts.record_trace,
    )
    psi, iterations, converged, residual, trace = solver(s, lam1, lam2, psi0, scaled_opts)
    residual /= scale

    scale = t / 2.0
    objective = scale * _qml_objective(psi, s, lam1, lam2)
    if not converged:
        logger.warning(
            "penalized_qml (%s, rho=%.4g) stopped after %d iterations, residual %.3e",
            penalty.kind,
            penalty.rho,
            iterations,
            residual,
        )
    return PrecisionEstimate(
        psi=psi,
        estimator_kind=f"qml_{penalty.kind}",
        penalty=penalty,
        objective_value=objective,
        iterations=iterations,
        converged=converged,
        residual=residual,
        objective_trace=scale * np.asarray(trace) if opts.record_trace else None,
    )


def predictive_loglik(psi: np.ndarray, s_holdout: np.ndarray) -> float:
    """Unpenalized Gaussian score logdet(psi) - trace(S_holdout psi)."""
    sign, logdet = np.linalg.slogdet(psi)
    if sign <= 0:
        return -np.inf
    return logdet - float(np.sum(s_holdout * psi))


def tune_rho(
    in_sample: np.ndarray,
    kind: str,
    grid,
    split: float = 0.75,
    alpha: float = 0.5,
    opts: SolverOptions | None = None,
) -> tuple[float, list[tuple[float, float]]]:
    """Grid-search rho by held-out predictive likelihood.

    Fits on the first ceil(split * n) rows of the in-sample block and scores
    each fitted precision by logdet - trace(S_holdout psi) on the rest (pure
    in-sample likelihood is maximized at rho = 0, so a holdout is forced).
    Grid points whose solver fails to converge score -inf. Ties break toward
    the smaller rho. Returns (rho_star, [(rho, score), ...]).
    """
    block = np.asarray(in_sample, dtype=float)
    if block.ndim != 2 or block.shape[0] < 24:
        raise InsufficientDataError("tuning needs an in-sample block of at least 24 rows")
    grid = [float(g) for g in grid]
    if not grid:
        raise TuningError("empty rho grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise TuningError("rho grid must be strictly ascending")
    if not 0.0 < split < 1.0:
        raise ValueError(f"split must lie in (0, 1), got {split}")
    n = block.shape[0]
    n_fit = math.ceil(split * n)
    if n - n_fit < 2 or n_fit < 2:
        raise InsufficientDataError(f"split {split} leaves too few rows on one side of {n}")
    s_fit = sample_covariance(block[:n_fit])
    s_hold = sample_covariance(block[n_fit:])

    curve: list[tuple[float, float]] = []
    for rho in grid:
        try:
            estimate = penalized_qml(s_fit, n_fit, PenaltySpec(kind=kind, rho=rho, alpha=alpha), opts)
        except (SingularMatrixError, DegenerateMatrixError) as exc:
            logger.warning("tuning point rho=%.4g failed: %s", rho, exc)
            curve.append((rho, -np.inf))
            continue
        if not estimate.converged:
            logger.warning("tuning point rho=%.4g did not converge; scored -inf", rho)
            curve.append((rho, -np.inf))
            continue
        curve.append((rho, predictive_loglik(estimate.psi, s_hold)))
    scores = np.asarray([score for _, score in curve])
    if not np.any(np.isfinite(scores)):
        raise TuningError("every grid point failed to produce a converged estimate", curve=curve)
    rho_star = curve[int(np.argmax(scores))][0]  # argmax takes the first (smallest rho) on ties
    return rho_star, curve
