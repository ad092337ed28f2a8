"""Solvers for the non-negative lasso and non-negative least squares.

The non-negative lasso (NLasso) is::

    minimize  0.5 * ||y - A x||_2^2 + gamma * sum(x)   subject to  x >= 0

and reduces to NNLS at ``gamma == 0``.  :func:`solve_nlasso` is a
variable-splitting augmented-Lagrangian (ADMM) scheme in the style of SUnSAL,
finished by an active-face polishing step.  :func:`solve_nnls` is an
independent Lawson-Hanson active-set method.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    DEFAULT_RANK_TOL,
    SubdictionaryCache,
    as_support,
    check_dictionary,
    check_observation,
)
from .errors import InvalidSupportError, NumericFailure

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and tuning knobs shared by every solver.

    ``zero_tol`` is relative to the largest entry of the solution and
    ``support_tol`` is relative to ``max(1, ||x||_inf)``.
    """

    tol: float = 1e-9
    max_iter: int = 20000
    zero_tol: float = 1e-8
    support_tol: float = 1e-6
    kkt_tol: float = 1e-6
    rho: float = 1.0
    rho_balance: float = 10.0
    rho_factor: float = 2.0
    rho_update_every: int = 10
    polish: bool = True
    polish_every: int = 10
    rank_tol: float = DEFAULT_RANK_TOL


DEFAULT_OPTIONS = SolverOptions()


@dataclass(frozen=True)
class Problem:
    """A non-negative lasso instance ``(A, y, gamma)``."""

    A: np.ndarray
    y: np.ndarray
    gamma: float = 0.0

    def __post_init__(self):
        A = check_dictionary(self.A)
        y = check_observation(self.y, A.shape[0])
        gamma = float(self.gamma)
        if not np.isfinite(gamma) or gamma < 0:
            raise ValueError(f"gamma must be finite and >= 0, got {self.gamma}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "gamma", gamma)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def with_gamma(self, gamma: float) -> "Problem":
        return replace(self, gamma=gamma)

    def restrict(self, support) -> "Problem":
        support = as_support(support, self.A.shape[1])
        return Problem(self.A[:, support], self.y, self.gamma)

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        r = self.y - self.A @ x
        return float(0.5 * (r @ r) + self.gamma * np.sum(x))


@dataclass(frozen=True)
class KKTCertificate:
    """Optimality residuals of a candidate ``x`` for a :class:`Problem`.

    ``stationarity_residuals[j] = gamma - a_j^T (y - A x)`` are the implied
    Lagrange multipliers of the constraints ``x_j >= 0``.
    """

    stationarity_residuals: np.ndarray
    complementarity_max: float
    dual_feasibility_min: float
    primal_feasibility_min: float

    def is_optimal(self, kkt_tol: float = 1e-6) -> bool:
        return (
            self.dual_feasibility_min >= -kkt_tol
            and self.primal_feasibility_min >= -kkt_tol
            and self.complementarity_max <= kkt_tol
        )

    def summary(self) -> dict:
        return {
            "stationarity_residuals": [float(v) for v in self.stationarity_residuals],
            "complementarity_max": self.complementarity_max,
            "dual_feasibility_min": self.dual_feasibility_min,
            "primal_feasibility_min": self.primal_feasibility_min,
        }


def kkt_certificate(p: Problem, x) -> KKTCertificate:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != p.A.shape[1]:
        raise ValueError(f"x has length {x.shape[0]}, expected {p.A.shape[1]}")
    lam = p.gamma - p.A.T @ (p.y - p.A @ x)
    return KKTCertificate(
        stationarity_residuals=lam,
        complementarity_max=float(np.max(np.abs(lam * x))),
        dual_feasibility_min=float(np.min(lam)),
        primal_feasibility_min=float(np.min(x)),
    )


@dataclass(frozen=True)
class Solution:
    """Result of a solver call.

    Attributes
    ----------
    x : ndarray
        Non-negative coefficients, zero-padded to the full dictionary width
        for restricted solves.
    objective : float
        ``0.5 * ||y - A x||^2 + gamma * sum(x)`` recomputed at ``x``.
    support : ndarray of int
        Indices with ``x_i > support_tol * max(1, ||x||_inf)``.
    kkt : KKTCertificate
    iterations : int
    converged : bool
    unique : bool
        False when the minimiser is not guaranteed unique (rank-deficient
        restricted subdictionary).
    method : str
    objective_trace : ndarray
        Objective of the accepted iterates, in order.
    """

    x: np.ndarray
    objective: float
    support: np.ndarray
    kkt: KKTCertificate
    iterations: int
    converged: bool
    unique: bool = True
    method: str = "admm"
    polished: bool = False
    objective_trace: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)


def extract_support(x, support_tol: float = DEFAULT_OPTIONS.support_tol) -> np.ndarray:
    """Indices counted as active under the relative support threshold."""
    x = np.asarray(x, dtype=float)
    scale = max(1.0, float(np.max(np.abs(x), initial=0.0)))
    return np.flatnonzero(x > support_tol * scale)


def _clip_small(x, zero_tol):
    x = np.maximum(x, 0.0)
    top = float(np.max(x, initial=0.0))
    if top > 0:
        x[x < zero_tol * top] = 0.0
    return x


def _finish(p, x, iterations, converged, opts, method, trace, unique=True, polished=False):
    x = _clip_small(np.array(x, dtype=float), opts.zero_tol)
    return Solution(
        x=x,
        objective=p.objective(x),
        support=extract_support(x, opts.support_tol),
        kkt=kkt_certificate(p, x),
        iterations=iterations,
        converged=converged,
        unique=unique,
        method=method,
        polished=polished,
        objective_trace=np.asarray(trace, dtype=float),
    )


def _polish(A, y, gamma, z, tol):
    """Solve the stationarity equations on the face ``{z > 0}``.

    Returns the candidate only if it lies strictly inside the face and every
    multiplier off the face is non-negative up to ``tol``.
    """
    n = A.shape[1]
    face = np.flatnonzero(z > 0)
    x = np.zeros(n)
    if face.size:
        sub = A[:, face]
        rhs = sub.T @ y - gamma
        coef, *_ = np.linalg.lstsq(sub.T @ sub, rhs, rcond=None)
        if not np.all(coef > 0):
            return None
        x[face] = coef
    r = y - A @ x
    lam = gamma - A.T @ r
    scale = max(1.0, float(np.max(np.abs(A.T @ y))))
    if np.max(np.abs(lam[face]), initial=0.0) > tol * scale:
        return None
    if np.min(lam, initial=0.0) < -tol * scale:
        return None
    return x


def solve_nlasso(p: Problem, opts: SolverOptions = DEFAULT_OPTIONS) -> Solution:
    """Solve the non-negative lasso by ADMM with residual balancing.

    The splitting is ``x = z`` with the quadratic in the ``x``-step and the
    penalty plus non-negativity in the ``z``-step, so every ``z`` iterate is
    feasible.  Every ``opts.polish_every`` iterations the active face of ``z``
    is solved exactly; a polished point that passes the optimality test at
    ``opts.tol`` ends the iteration.

    Returns a :class:`Solution` whose ``converged`` flag is False if neither
    the residual test nor polishing succeeded within ``opts.max_iter``.

    Raises
    ------
    NumericFailure
        If the iterates become non-finite.
    """
    A, y, gamma = p.A, p.y, p.gamma
    n = A.shape[1]
    G = A.T @ A
    Aty = A.T @ y
    eye = np.eye(n)
    mu = float(opts.rho)
    M = np.linalg.inv(G + mu * eye)

    half_yy = 0.5 * float(y @ y)

    def objective(v):
        return half_yy + v @ (0.5 * (G @ v) - Aty + gamma)

    z = np.zeros(n)
    u = np.zeros(n)
    best = objective(z)
    trace = [best]
    converged = False
    k = 0
    for k in range(1, opts.max_iter + 1):
        x = M @ (Aty + mu * (z - u))
        z_old = z
        z = np.maximum(x + u - gamma / mu, 0.0)
        u += x - z

        f = objective(z)
        if f <= best:
            best = f
            trace.append(f)

        dr = x - z
        ds = z - z_old
        r_norm = np.sqrt(dr @ dr)
        s_norm = mu * np.sqrt(ds @ ds)
        if r_norm <= opts.tol and s_norm <= opts.tol:
            converged = True
            break

        if k % opts.rho_update_every == 0:
            if not (np.isfinite(r_norm) and np.isfinite(s_norm) and np.isfinite(f)):
                raise NumericFailure(f"ADMM produced non-finite iterates at iteration {k}")
            if r_norm > opts.rho_balance * s_norm:
                mu *= opts.rho_factor
                u /= opts.rho_factor
                M = np.linalg.inv(G + mu * eye)
            elif s_norm > opts.rho_balance * r_norm:
                mu /= opts.rho_factor
                u *= opts.rho_factor
                M = np.linalg.inv(G + mu * eye)

        if opts.polish and k % opts.polish_every == 0:
            xp = _polish(A, y, gamma, z, opts.tol)
            if xp is not None:
                fp = objective(xp)
                if fp <= best:
                    trace.append(fp)
                log.debug("polished at iteration %d", k)
                return _finish(p, xp, k, True, opts, "admm", trace, polished=True)

    if not np.all(np.isfinite(z)):
        raise NumericFailure("ADMM produced non-finite iterates")
    if opts.polish:
        xp = _polish(A, y, gamma, z, opts.tol)
        if xp is not None:
            return _finish(p, xp, k, True, opts, "admm", trace, polished=True)
    if not converged:
        log.warning("ADMM stopped after %d iterations without converging", k)
    return _finish(p, z, k, converged, opts, "admm", trace)


def _active_set(G, b, max_iter, tol):
    """Lawson-Hanson active set for ``min 0.5 x'Gx - b'x  s.t. x >= 0``.

    Returns ``(x, iterations, converged, trace)`` where ``trace`` holds the
    quadratic objective after every outer step.
    """
    n = b.shape[0]
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = b.copy()
    trace = [0.0]
    it = 0
    while it < max_iter:
        candidates = ~passive & (w > tol)
        if not np.any(candidates):
            return x, it, True, trace
        j = np.flatnonzero(candidates)[np.argmax(w[candidates])]
        passive[j] = True
        while it < max_iter:
            it += 1
            idx = np.flatnonzero(passive)
            s = np.zeros(n)
            s[idx] = np.linalg.lstsq(G[np.ix_(idx, idx)], b[idx], rcond=None)[0]
            if np.all(s[idx] > 0):
                x = s
                break
            blocking = idx[s[idx] <= 0]
            alpha = np.min(x[blocking] / (x[blocking] - s[blocking]))
            x = x + alpha * (s - x)
            passive &= x > tol
            x[~passive] = 0.0
            if not np.any(passive):
                break
        w = b - G @ x
        trace.append(float(0.5 * x @ G @ x - b @ x))
    return x, it, False, trace


def solve_nnls(A, y, opts: SolverOptions = DEFAULT_OPTIONS, gamma: float = 0.0) -> Solution:
    """Lawson-Hanson active-set solver for NNLS (``gamma == 0``).

    A non-zero ``gamma`` solves the non-negative lasso through the same
    active-set iteration, since the penalty only shifts the linear term.
    """
    p = Problem(A, y, gamma)
    G = p.A.T @ p.A
    b = p.A.T @ p.y - p.gamma
    tol = 10 * np.finfo(float).eps * max(p.A.shape) * max(1.0, float(np.max(np.abs(b))))
    x, it, ok, trace = _active_set(G, b, opts.max_iter, tol)
    const = 0.5 * float(p.y @ p.y)
    return _finish(p, x, it, ok, opts, "active_set", np.asarray(trace) + const)


def solve_restricted(p: Problem, support, opts: SolverOptions = DEFAULT_OPTIONS) -> Solution:
    """Solve the non-negative lasso using only the atoms in ``support``.

    The returned ``x`` is zero-padded to length N.  ``unique`` is False when
    the restricted subdictionary is rank deficient, in which case the solver
    returns one minimiser out of a set.
    """
    support = as_support(support, p.A.shape[1])
    if support.size == 0:
        raise InvalidSupportError("restricted solve needs a non-empty support")
    sub = p.restrict(support)
    s = np.linalg.svd(sub.A, compute_uv=False)
    unique = bool(np.sum(s > opts.rank_tol * s[0]) == support.size)
    if not unique:
        warnings.warn(
            f"subdictionary on {support.tolist()} is rank deficient; the restricted "
            "minimiser is not unique",
            stacklevel=2,
        )
    inner = solve_nlasso(sub, opts)
    x = np.zeros(p.A.shape[1])
    x[support] = inner.x
    out = _finish(
        p, x, inner.iterations, inner.converged, opts, "admm-restricted",
        inner.objective_trace, unique=unique, polished=inner.polished,
    )
    return out


def restricted_closed_form(cache: SubdictionaryCache, y, gamma: float) -> np.ndarray:
    """``A_S^+ y - gamma * inv(A_S^T A_S) 1`` on a full-rank support.

    This equals the restricted minimiser only when every entry is positive;
    the caller checks that.
    """
    cache.require_full_rank("the closed-form restricted solution")
    y = np.asarray(y, dtype=float)
    return cache.coordinates(y) - gamma * cache.gram_inverse.sum(axis=1)


def pad(values, support, n_atoms: int) -> np.ndarray:
    """Scatter ``values`` into a zero vector of length ``n_atoms``."""
    out = np.zeros(n_atoms)
    out[np.asarray(support, dtype=int)] = values
    return out
