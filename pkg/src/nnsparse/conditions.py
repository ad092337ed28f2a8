"""Recovery metrics and model-recovery conditions for the non-negative lasso.

Every check returns signed margins (positive means the inequality holds with
room to spare) so callers can apply their own tolerance band.  Verdicts use
``strict_tol`` (default 0, a literal sign test): a strict inequality holds
when its margin is ``> strict_tol`` and a non-strict one when it is
``>= -strict_tol``.

Notation: ``S`` is the candidate support, ``A_S^+`` its pseudoinverse,
``G = A_S^T A_S`` and ``P_perp`` the projector onto the orthogonal complement
of ``range(A_S)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import (
    DEFAULT_RANK_TOL,
    SubdictionaryCache,
    as_support,
    build_cache,
    complement,
    inf_inf_norm,
)
from .errors import PreconditionError
from .solvers import (
    DEFAULT_OPTIONS,
    Problem,
    Solution,
    SolverOptions,
    kkt_certificate,
    restricted_closed_form,
    solve_restricted,
)


def _cache_for(A, support, cache, rank_tol=DEFAULT_RANK_TOL) -> SubdictionaryCache:
    support = as_support(support, A.shape[1])
    if cache is None:
        cache = build_cache(A, support, rank_tol)
    elif not np.array_equal(cache.support, support):
        raise ValueError(
            f"cache built for {cache.support.tolist()}, not for {support.tolist()}"
        )
    return cache


def _outside(A, support):
    return complement(support, A.shape[1])


def erc(A, support, cache: SubdictionaryCache | None = None) -> float:
    """Exact recovery coefficient ``1 - max_{n not in S} ||A_S^+ a_n||_1``."""
    A = np.asarray(A, dtype=float)
    cache = _cache_for(A, support, cache)
    cache.require_full_rank("ERC")
    out = _outside(A, cache.support)
    if out.size == 0:
        raise ValueError("ERC needs at least one atom outside the support")
    coords = cache.coordinates(A[:, out])
    return float(1.0 - np.max(np.sum(np.abs(coords), axis=0)))


def psc(cache: SubdictionaryCache, a_j) -> float:
    """Positive subset coherence ``1 - 1^T A_S^+ a_j``.

    Positive when the projection of ``a_j`` onto ``range(A_S)`` falls on the
    origin side of the hyperplane through the atoms of ``S``, zero on the
    hyperplane and negative beyond it.
    """
    cache.require_full_rank("PSC")
    return float(1.0 - np.sum(cache.coordinates(a_j)))


def psc_per_atom(A, support, cache: SubdictionaryCache | None = None) -> dict[int, float]:
    """PSC of every atom outside ``support``, keyed by atom index."""
    A = np.asarray(A, dtype=float)
    cache = _cache_for(A, support, cache)
    cache.require_full_rank("PSC")
    out = _outside(A, cache.support)
    vals = 1.0 - np.sum(cache.coordinates(A[:, out]), axis=0)
    return {int(j): float(v) for j, v in zip(out, np.atleast_1d(vals))}


def perc(A, support, cache: SubdictionaryCache | None = None) -> float:
    """Positive exact recovery coefficient: the smallest PSC outside ``support``."""
    values = psc_per_atom(A, support, cache)
    if not values:
        raise ValueError("PERC needs at least one atom outside the support")
    return min(values.values())


def residual_correlations(A, cache: SubdictionaryCache, v) -> np.ndarray:
    """``A^T P_perp v`` for every atom of ``A``."""
    return np.asarray(A, dtype=float).T @ cache.residual(v)


class APMRCMargins(NamedTuple):
    mcc_margin: float
    nscc_margins: dict
    holds: bool


def check_apmrc(
    p: Problem, support, cache: SubdictionaryCache | None = None, strict_tol: float = 0.0
) -> APMRCMargins:
    """Minimum coefficient and nonlinearity-vs-subset-coherence margins.

    ``mcc_margin = min_i (A_S^+ y - gamma G^{-1} 1)_i``;
    ``nscc_margins[j] = gamma * PSC(S; j) - y^T P_perp a_j`` for ``j`` outside ``S``.
    """
    cache = _cache_for(p.A, support, cache)
    cache.require_full_rank("the APMRC")
    mcc = float(np.min(restricted_closed_form(cache, p.y, p.gamma)))
    pscs = psc_per_atom(p.A, cache.support, cache)
    corr = residual_correlations(p.A, cache, p.y)
    nscc = {j: p.gamma * s - float(corr[j]) for j, s in pscs.items()}
    holds = mcc > strict_tol and min(nscc.values(), default=math.inf) > strict_tol
    return APMRCMargins(mcc, nscc, holds)


def check_apmrc_nnls(A, support, cache: SubdictionaryCache | None, y, strict_tol: float = 0.0) -> bool:
    """APMRC at ``gamma = 0``: ``A_S^+ y > 0`` and ``max_j y^T P_perp a_j < 0``."""
    return check_apmrc(Problem(A, y, 0.0), support, cache, strict_tol).holds


def check_perc_max(p: Problem, support, cache: SubdictionaryCache | None = None) -> float:
    """Margin ``gamma * PERC - max_{j outside S} a_j^T P_perp y``."""
    cache = _cache_for(p.A, support, cache)
    out = _outside(p.A, cache.support)
    corr = residual_correlations(p.A, cache, p.y)
    return p.gamma * perc(p.A, cache.support, cache) - float(np.max(corr[out]))


def check_perc_amax(p: Problem, support, cache: SubdictionaryCache | None = None) -> float:
    """Margin ``gamma * PERC - ||A^T P_perp y||_inf`` (all N atoms)."""
    cache = _cache_for(p.A, support, cache)
    corr = residual_correlations(p.A, cache, p.y)
    return p.gamma * perc(p.A, cache.support, cache) - float(np.max(np.abs(corr)))


@dataclass(frozen=True)
class GroundTruth:
    """Generating coefficients ``x_true >= 0`` and distortion ``e`` of ``y = A x_true + e``."""

    coefficients: np.ndarray
    distortion: np.ndarray

    def __post_init__(self):
        x = np.array(self.coefficients, dtype=float).reshape(-1)
        e = np.array(self.distortion, dtype=float).reshape(-1)
        if np.any(x < 0) or not np.all(np.isfinite(x)):
            raise ValueError("ground-truth coefficients must be finite and non-negative")
        if not np.all(np.isfinite(e)):
            raise ValueError("distortion must be finite")
        object.__setattr__(self, "coefficients", x)
        object.__setattr__(self, "distortion", e)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.coefficients > 0)

    def observation(self, A) -> np.ndarray:
        return np.asarray(A, dtype=float) @ self.coefficients + self.distortion


class ERCMargins(NamedTuple):
    erc: float
    noise_margin: float
    coef_margin: float
    holds: bool


def check_erc_mrc(
    truth: GroundTruth,
    A,
    support,
    cache: SubdictionaryCache | None,
    gamma: float,
    strict_tol: float = 0.0,
) -> ERCMargins:
    """ERC-based recovery condition; needs the generating coefficients and distortion.

    ``noise_margin = gamma * ERC - ||A^T P_perp e||_inf`` (non-strict) and
    ``coef_margin = min_i x_true_i - (gamma * ||G^{-1}||_{inf,inf} - (A_S^+ e)_i)``
    (strict).  The verdict also requires ``ERC >= 0``.
    """
    A = np.asarray(A, dtype=float)
    cache = _cache_for(A, support, cache)
    cache.require_full_rank("the ERC-based condition")
    value = erc(A, cache.support, cache)
    e = truth.distortion
    noise = gamma * value - float(np.max(np.abs(residual_correlations(A, cache, e))))
    bound = gamma * inf_inf_norm(cache.gram_inverse) - cache.coordinates(e)
    coef = float(np.min(truth.coefficients[cache.support] - bound))
    holds = value >= -strict_tol and noise >= -strict_tol and coef > strict_tol
    return ERCMargins(value, noise, coef, holds)


class BaseMargins(NamedTuple):
    margins: dict
    holds: bool


def check_base(
    p: Problem,
    support,
    restricted_solution,
    strict: bool = True,
    strict_tol: float = 0.0,
    kkt_tol: float = 1e-7,
) -> BaseMargins:
    """Margins ``gamma - (y - A_S v)^T a_j`` for ``j`` outside ``support``.

    ``restricted_solution`` (a :class:`Solution` or a length-N vector that is
    zero off ``support``) must be an optimum of the restricted problem; this is
    verified through its KKT certificate.  With ``strict`` the verdict asks
    every margin to be ``> strict_tol``, otherwise ``>= -strict_tol``.

    Raises
    ------
    PreconditionError
        If the restricted solution is not certified optimal.
    """
    support = as_support(support, p.A.shape[1])
    x = restricted_solution.x if isinstance(restricted_solution, Solution) else restricted_solution
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != p.A.shape[1]:
        raise ValueError(f"restricted solution has length {x.shape[0]}, expected {p.A.shape[1]}")
    out = _outside(p.A, support)
    if np.any(x[out] != 0):
        raise PreconditionError("restricted solution has entries outside the support")
    if support.size:
        cert = kkt_certificate(p.restrict(support), x[support])
        if not cert.is_optimal(kkt_tol):
            raise PreconditionError(
                "restricted solution is not KKT-certified optimal "
                f"(summary: {cert.summary()})"
            )
    r = p.y - p.A @ x
    vals = p.gamma - p.A[:, out].T @ r
    margins = {int(j): float(v) for j, v in zip(out, vals)}
    lowest = min(margins.values(), default=math.inf)
    holds = lowest > strict_tol if strict else lowest >= -strict_tol
    return BaseMargins(margins, holds)


def restricted_optimum(
    p: Problem, support, cache: SubdictionaryCache | None = None, opts: SolverOptions = DEFAULT_OPTIONS
) -> np.ndarray:
    """Zero-padded optimum of the restricted problem.

    Uses the closed form when it is strictly positive (it is then the unique
    restricted optimum) and the iterative solver otherwise.
    """
    support = as_support(support, p.A.shape[1])
    if cache is not None and cache.full_rank:
        v = restricted_closed_form(cache, p.y, p.gamma)
        if np.all(v > 0):
            x = np.zeros(p.A.shape[1])
            x[support] = v
            return x
    return solve_restricted(p, support, opts).x


def gamma_interval(A, y, support, cache: SubdictionaryCache | None = None):
    """Open interval of ``gamma > 0`` meeting both the MCC and every NSCC.

    Each MCC row ``c_i - gamma g_i > 0`` (``c = A_S^+ y``, ``g = G^{-1} 1``) and
    each NSCC row ``p_j - gamma PSC_j < 0`` (``p_j = y^T P_perp a_j``) is a
    half-line in ``gamma``; the result is their intersection with
    ``(0, inf)``.  Returns ``(lower, upper)`` (``upper`` may be ``inf``) or
    ``None`` when no ``gamma`` qualifies.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    cache = _cache_for(A, support, cache)
    cache.require_full_rank("the gamma interval")
    lo, hi = 0.0, math.inf

    # (slope, offset): need offset - gamma * slope > 0
    rows = [(g, c) for c, g in zip(cache.coordinates(y), cache.gram_inverse.sum(axis=1))]
    corr = residual_correlations(A, cache, y)
    rows += [(-s, -float(corr[j])) for j, s in psc_per_atom(A, cache.support, cache).items()]
    for slope, offset in rows:
        if slope > 0:
            hi = min(hi, offset / slope)
        elif slope < 0:
            lo = max(lo, offset / slope)
        elif offset <= 0:
            return None
    if lo >= hi:
        return None
    return (float(lo), float(hi))


@dataclass
class ConditionReport:
    """All metrics, margins and verdicts for one ``(problem, support)`` pair.

    Margins of strict inequalities are positive when the condition holds.
    ``erc_mrc_*`` fields are ``None`` without ground truth, and the ``erc``
    field is ``None`` when every atom is in the support.
    """

    support: list
    gamma: float
    erc: float | None
    psc_per_atom: dict
    perc: float | None
    mcc_margin: float
    nscc_margins: dict
    perc_max_margin: float
    perc_amax_margin: float
    erc_mrc_noise_margin: float | None
    erc_mrc_coef_margin: float | None
    base_margins: dict | None
    verdicts: dict = field(default_factory=dict)
    strict_tol: float = 0.0

    def margins(self) -> list[float]:
        """Every condition margin, for boundary-band screening."""
        vals = [self.mcc_margin, *self.nscc_margins.values()]
        vals += [self.perc_max_margin, self.perc_amax_margin]
        if self.erc_mrc_noise_margin is not None:
            vals += [self.erc_mrc_noise_margin, self.erc_mrc_coef_margin]
        return [v for v in vals if math.isfinite(v)]

    def min_abs_margin(self) -> float:
        return min((abs(v) for v in self.margins()), default=math.inf)

    def to_dict(self) -> dict:
        def keyed(d):
            return None if d is None else {str(k): v for k, v in d.items()}

        return {
            "support": [int(i) for i in self.support],
            "gamma": self.gamma,
            "erc": self.erc,
            "psc_per_atom": keyed(self.psc_per_atom),
            "perc": self.perc,
            "mcc_margin": self.mcc_margin,
            "nscc_margins": keyed(self.nscc_margins),
            "perc_max_margin": self.perc_max_margin,
            "perc_amax_margin": self.perc_amax_margin,
            "erc_mrc_noise_margin": self.erc_mrc_noise_margin,
            "erc_mrc_coef_margin": self.erc_mrc_coef_margin,
            "base_margins": keyed(self.base_margins),
            "verdicts": dict(self.verdicts),
            "strict_tol": self.strict_tol,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConditionReport":
        # non-finite floats arrive as strings ("inf") from the JSON writer
        def num(v):
            return None if v is None else float(v)

        def keyed(m):
            return None if m is None else {int(k): float(v) for k, v in m.items()}

        return cls(
            support=list(d["support"]),
            gamma=float(d["gamma"]),
            erc=num(d["erc"]),
            psc_per_atom=keyed(d["psc_per_atom"]),
            perc=num(d["perc"]),
            mcc_margin=float(d["mcc_margin"]),
            nscc_margins=keyed(d["nscc_margins"]),
            perc_max_margin=float(d["perc_max_margin"]),
            perc_amax_margin=float(d["perc_amax_margin"]),
            erc_mrc_noise_margin=num(d["erc_mrc_noise_margin"]),
            erc_mrc_coef_margin=num(d["erc_mrc_coef_margin"]),
            base_margins=keyed(d["base_margins"]),
            verdicts=dict(d["verdicts"]),
            strict_tol=float(d.get("strict_tol", 0.0)),
        )


def evaluate_conditions(
    p: Problem,
    support,
    truth: GroundTruth | None = None,
    cache: SubdictionaryCache | None = None,
    strict_tol: float = 0.0,
    with_base: bool = True,
    opts: SolverOptions = DEFAULT_OPTIONS,
) -> ConditionReport:
    """Evaluate every recovery condition for ``support`` on problem ``p``.

    Raises
    ------
    RankDeficientError
        If the atoms in ``support`` are not linearly independent.
    """
    cache = _cache_for(p.A, support, cache, opts.rank_tol)
    cache.require_full_rank("the recovery conditions")
    S = cache.support
    has_outside = S.size < p.A.shape[1]

    apmrc = check_apmrc(p, S, cache, strict_tol)
    pscs = psc_per_atom(p.A, S, cache)
    if has_outside:
        erc_value = erc(p.A, S, cache)
        perc_value = min(pscs.values())
        pm = check_perc_max(p, S, cache)
        pam = check_perc_amax(p, S, cache)
    else:
        erc_value = perc_value = None
        pm = pam = math.inf

    noise = coef = None
    erc_ok = None
    if truth is not None:
        if has_outside:
            em = check_erc_mrc(truth, p.A, S, cache, p.gamma, strict_tol)
            noise, coef, erc_ok = em.noise_margin, em.coef_margin, em.holds
        else:
            erc_ok = None

    mcc_ok = apmrc.mcc_margin > strict_tol
    verdicts = {
        "mcc": mcc_ok,
        "nscc": min(apmrc.nscc_margins.values(), default=math.inf) > strict_tol,
        "apmrc": apmrc.holds,
        "perc_max": mcc_ok and pm > strict_tol,
        "perc_amax": mcc_ok and pam > strict_tol,
        "erc_mrc": erc_ok,
    }

    base = None
    if with_base:
        x = restricted_optimum(p, S, cache, opts)
        base = check_base(p, S, x, strict=True, kkt_tol=10 * opts.kkt_tol)
        verdicts["base_strict"] = base.holds
        lowest = min(base.margins.values(), default=math.inf)
        verdicts["base_weak"] = lowest >= -strict_tol
        base = base.margins

    return ConditionReport(
        support=S.tolist(),
        gamma=p.gamma,
        erc=erc_value,
        psc_per_atom=pscs,
        perc=perc_value,
        mcc_margin=apmrc.mcc_margin,
        nscc_margins=apmrc.nscc_margins,
        perc_max_margin=pm,
        perc_amax_margin=pam,
        erc_mrc_noise_margin=noise,
        erc_mrc_coef_margin=coef,
        base_margins=base,
        verdicts=verdicts,
        strict_tol=strict_tol,
    )
