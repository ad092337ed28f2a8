"""Brute-force ground truth for small problems.

The enumeration never calls the iterative solvers.  For every support ``T``
it solves the stationarity equations ``A_T^T A_T c = A_T^T y - gamma`` and
keeps ``c`` only if it is strictly positive, i.e. a feasible point in the
relative interior of that face.  Some minimiser of the non-negative lasso
always sits on a face with linearly independent atoms, so the smallest
objective over these candidates is the exact optimum.  The optimum over a
support ``S`` (the restricted problem) is the best candidate over all
subsets of ``S``, which a pass over bitmasks in increasing order computes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CombinatorialGuardError, NumericFailure
from .solvers import Problem, kkt_certificate

MAX_ATOMS = 16
TIE_TOL = 1e-9


@dataclass(frozen=True)
class OracleResult:
    best_support: np.ndarray
    best_x: np.ndarray
    best_objective: float
    certified: bool
    per_support_objectives: dict = field(default_factory=dict, repr=False)


def _bits(mask: int) -> tuple:
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def _face_candidates(p: Problem, max_support: int):
    """Objective and coefficients of every strictly positive face stationary point."""
    A, y, gamma = p.A, p.y, p.gamma
    n = A.shape[1]
    G = A.T @ A
    b = A.T @ y - gamma
    half_yy = 0.5 * float(y @ y)
    faces = {0: (half_yy, np.zeros(0))}
    for mask in range(1, 1 << n):
        idx = _bits(mask)
        if len(idx) > max_support:
            continue
        ix = np.asarray(idx)
        Gs = G[np.ix_(ix, ix)]
        try:
            c = np.linalg.solve(Gs, b[ix])
        except np.linalg.LinAlgError:
            continue
        if not np.all(c > 0) or not np.all(np.isfinite(c)):
            continue
        x = np.zeros(n)
        x[ix] = c
        faces[mask] = (p.objective(x), c)
    return faces


def _better(a, b, tie) -> bool:
    """Order ``(objective, support_tuple)`` pairs with a tie band on the objective."""
    if a[0] < b[0] - tie:
        return True
    if a[0] > b[0] + tie:
        return False
    return (len(a[1]), a[1]) < (len(b[1]), b[1])


def _search(p: Problem, max_support: int, keep_all: bool, tie_tol: float):
    n = p.A.shape[1]
    if n > MAX_ATOMS:
        raise CombinatorialGuardError(
            f"exhaustive enumeration is limited to {MAX_ATOMS} atoms, got {n}"
        )
    if not 0 <= max_support <= n:
        raise ValueError(f"max_support must lie in [0, {n}], got {max_support}")
    faces = _face_candidates(p, max_support)
    tie = tie_tol * max(0.5 * float(p.y @ p.y), np.finfo(float).tiny)

    best_key = (faces[0][0], ())
    best_mask = 0
    per_support = {}
    if keep_all:
        # restricted optimum over every support: best face among its subsets
        restricted = {0: (faces[0][0], ())}
        for mask in range(1, 1 << n):
            idx = _bits(mask)
            if len(idx) > max_support:
                continue
            cand = (faces[mask][0], idx) if mask in faces else None
            for i in idx:
                sub = restricted[mask & ~(1 << i)]
                if cand is None or _better(sub, cand, tie):
                    cand = sub
            restricted[mask] = cand
            per_support[idx] = cand[0]
        per_support[()] = faces[0][0]
    for mask, (obj, _) in faces.items():
        key = (obj, _bits(mask))
        if _better(key, best_key, tie):
            best_key, best_mask = key, mask

    x = np.zeros(n)
    support = np.asarray(best_key[1], dtype=int)
    if best_mask:
        x[support] = faces[best_mask][1]
    return support, x, float(p.objective(x)), per_support


def enumerate_global(
    p: Problem,
    max_support: int | None = None,
    keep_all: bool = False,
    kkt_tol: float = 1e-7,
    tie_tol: float = 1e-12,
) -> OracleResult:
    """Global minimiser of the non-negative lasso by exhaustive face enumeration.

    With ``keep_all`` the optimum of the restricted problem on every support
    of size at most ``max_support`` is reported in ``per_support_objectives``.

    Raises
    ------
    CombinatorialGuardError
        If the dictionary has more than 16 atoms.
    NumericFailure
        If ``max_support == N`` and the winner fails the KKT test.
    """
    n = p.A.shape[1]
    max_support = n if max_support is None else int(max_support)
    support, x, obj, per = _search(p, max_support, keep_all, tie_tol)
    certified = kkt_certificate(p, x).is_optimal(kkt_tol)
    if max_support == n and not certified:
        raise NumericFailure("enumerated optimum failed its KKT certificate")
    return OracleResult(support, x, obj, certified, per)


def cardinality_nnls(A, y, k: int, tie_tol: float = TIE_TOL, keep_all: bool = False) -> OracleResult:
    """Best non-negative least-squares fit using at most ``k`` atoms.

    Among fits whose error is within ``tie_tol`` (relative to ``0.5 ||y||^2``)
    of the smallest, the one with the fewest atoms wins, then the
    lexicographically smallest support.
    """
    p = Problem(A, y, 0.0)
    if not 0 <= k <= p.A.shape[1]:
        raise ValueError(f"k must lie in [0, {p.A.shape[1]}], got {k}")
    support, x, obj, per = _search(p, int(k), keep_all, tie_tol)
    certified = kkt_certificate(p, x).is_optimal(1e-7)
    return OracleResult(support, x, obj, certified, per)


def feasible_direction_probe(
    p: Problem,
    x,
    trials: int = 1000,
    step: float = 1e-3,
    rng: np.random.Generator | int | None = None,
) -> float:
    """Largest objective decrease over random feasible perturbations of ``x``.

    Perturbations keep ``x + dx >= 0``: active coordinates move by at most
    ``step`` either way (and never below zero), inactive ones only upward.
    Half of the trials perturb a single coordinate, the rest all coordinates.
    A value ``<= ~1e-10`` is expected at an optimum.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("probe point must be non-negative")
    rng = np.random.default_rng(rng)
    A, y, gamma = p.A, p.y, p.gamma
    n = A.shape[1]
    r = y - A @ x
    low = -np.minimum(x, step)
    worst = -np.inf
    for t in range(trials):
        if t % 2 == 0:
            dx = np.zeros(n)
            j = rng.integers(n)
            dx[j] = rng.uniform(low[j], step)
        else:
            dx = rng.uniform(low, step)
        Adx = A @ dx
        # f(x) - f(x + dx), expanded to avoid cancellation
        decrease = r @ Adx - 0.5 * (Adx @ Adx) - gamma * dx.sum()
        worst = max(worst, float(decrease))
    return worst
