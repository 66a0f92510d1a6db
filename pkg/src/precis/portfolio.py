"""Portfolio weight construction from precision / covariance estimates.

All constructors return unit-sum weight vectors; the no-short-sale variant
also returns its KKT certificate so callers can verify optimality instead
of trusting the solver.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMatrixError, NonconvergenceError, SingularMatrixError
from .linalg import check_symmetric, condition_number

WEIGHT_SUM_TOL = 1e-10


@dataclass(frozen=True)
class WeightVector:
    """Unit-sum portfolio weights tagged with their strategy and window."""

    weights: np.ndarray
    strategy: str
    window_id: int = -1

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if not np.all(np.isfinite(w)):
            raise DegenerateMatrixError(f"non-finite weights for strategy {self.strategy!r}")
        if abs(float(w.sum()) - 1.0) > WEIGHT_SUM_TOL:
            raise DegenerateMatrixError(
                f"weights sum to {w.sum():.12f}, not 1, for strategy {self.strategy!r}"
            )

    @property
    def p(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class KktCertificate:
    """Evidence of QP optimality: the equality multiplier and the residual

    max(|gradient - multiplier| on the support, positive part of
    multiplier - gradient off it).
    """

    multiplier: float
    residual: float
    iterations: int


def mvp_weights(psi: np.ndarray, strategy: str = "mvp", window_id: int = -1) -> WeightVector:
    """Global minimum-variance weights psi e / (e' psi e)."""
    psi = check_symmetric(psi)
    row_sums = psi.sum(axis=1)
    denom = float(row_sums.sum())
    if abs(denom) < 1e-12 * max(float(np.linalg.norm(psi)), 1e-300):
        raise DegenerateMatrixError("e' psi e is numerically zero; MVP undefined")
    w = row_sums / denom
    return WeightVector(weights=w / w.sum(), strategy=strategy, window_id=window_id)


def mean_variance_weights(
    psi: np.ndarray, mu: np.ndarray, r: float, strategy: str = "mean_variance", window_id: int = -1
) -> WeightVector:
    """Closed-form mean-variance weights hitting unit sum and target return r.

    With a = e' psi e, b = e' psi mu, c = mu' psi mu the solution is
    ((c - b r) psi e + (a r - b) psi mu) / (a c - b^2); mu parallel to the
    ones vector makes the system degenerate.
    """
    psi = check_symmetric(psi)
    mu = np.asarray(mu, dtype=float)
    ones = np.ones(psi.shape[0])
    psi_e = psi @ ones
    psi_mu = psi @ mu
    a = float(ones @ psi_e)
    b = float(ones @ psi_mu)
    c = float(mu @ psi_mu)
    det = a * c - b * b
    if abs(det) <= 1e-12 * (abs(a) * abs(c) + b * b + 1e-300):
        raise DegenerateMatrixError("a c - b^2 is numerically zero (mu parallel to e)")
    w = ((c - b * r) * psi_e + (a * r - b) * psi_mu) / det
    if abs(float(w.sum()) - 1.0) > 1e-8 or abs(float(w @ mu) - r) > 1e-8 * max(1.0, abs(r)):
        raise DegenerateMatrixError("mean-variance system too ill-conditioned to hit constraints")
    return WeightVector(weights=w / w.sum(), strategy=strategy, window_id=window_id)


def equal_weights(p: int, window_id: int = -1) -> WeightVector:
    """1/p in every asset."""
    if p < 1:
        raise DegenerateMatrixError("cannot build equal weights over zero assets")
    return WeightVector(weights=np.full(p, 1.0 / p), strategy="equal", window_id=window_id)


def no_short_mvp(
    s: np.ndarray,
    max_iter: int = 1000,
    allow_singular: bool = False,
    window_id: int = -1,
) -> tuple[WeightVector, KktCertificate]:
    """Minimize w' S w over the simplex (unit sum, nonnegative weights).

    Primal active set: start from equal weights, repeatedly solve the
    equality-constrained subproblem on the free assets (that restricted
    MVP), take a ratio-test step when the candidate leaves the simplex, and
    release the lowest-index pinned asset whose multiplier is negative.
    Pivoting is deterministic (lowest index) so runs are reproducible.

    By default a singular S is rejected up front, matching the convention
    of reporting no portfolio for windows with more assets than
    observations. allow_singular=True solves a hair-regularized problem
    instead (S plus a relative 1e-10 ridge), whose certificate refers to
    that regularized objective.
    """
    s = check_symmetric(s)
    p = s.shape[0]
    if not allow_singular and not np.isfinite(condition_number(s)):
        raise SingularMatrixError("covariance is singular; no-short MVP not constructed")
    if allow_singular:
        s = s + (1e-10 * (np.trace(s) / p + 1.0)) * np.eye(p)

    w = np.full(p, 1.0 / p)
    free = np.ones(p, dtype=bool)
    ones_cache = np.ones(p)

    def eqp(idx: np.ndarray) -> np.ndarray:
        rhs = ones_cache[: idx.size]
        sub = s[np.ix_(idx, idx)]
        try:
            y = np.linalg.solve(sub, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError(f"free-set covariance block is singular: {exc}") from exc
        total = float(y.sum())
        if not np.all(np.isfinite(y)) or total <= 0:
            raise SingularMatrixError("free-set subproblem is numerically singular")
        return y / total

    iterations = 0
    for iterations in range(1, max_iter + 1):
        idx = np.flatnonzero(free)
        cand = eqp(idx)
        if cand.min() >= -1e-12:
            w = np.zeros(p)
            w[idx] = np.clip(cand, 0.0, None)
            w /= w.sum()
            grad = 2.0 * (s @ w)
            lam = float(grad[idx].mean())
            release_tol = 1e-10 * max(1.0, float(np.abs(grad).max()))
            pinned = np.flatnonzero(~free)
            violated = pinned[grad[pinned] < lam - release_tol]
            if violated.size == 0:
                res_free = float(np.abs(grad[idx] - lam).max())
                res_pinned = (
                    float(np.maximum(lam - grad[pinned], 0.0).max()) if pinned.size else 0.0
                )
                cert = KktCertificate(
                    multiplier=lam, residual=max(res_free, res_pinned), iterations=iterations
                )
                return WeightVector(weights=w, strategy="no_short", window_id=window_id), cert
            free[int(violated.min())] = True
        else:
            direction = np.zeros(p)
            direction[idx] = cand - w[idx]
            shrinking = idx[direction[idx] < -1e-16]
            ratios = w[shrinking] / -direction[shrinking]
            alpha = float(ratios.min())
            blockers = shrinking[ratios <= alpha * (1.0 + 1e-12)]
            block = int(blockers.min())
            w = np.clip(w + alpha * direction, 0.0, None)
            w[block] = 0.0
            w /= w.sum()
            free[block] = False
    raise NonconvergenceError(
        f"active-set QP did not converge in {max_iter} iterations",
        best=WeightVector(weights=w / w.sum(), strategy="no_short", window_id=window_id),
    )
