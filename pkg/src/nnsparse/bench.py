"""Synthetic instances, batch evaluation and confusion-matrix tallies.

Instances follow ``y = A x_true + e`` with unit-norm atoms, a random support of
size ``J`` and one of four distortions ``e``:

``none``
    ``e = 0``.
``gaussian:sigma=s``
    i.i.d. ``N(0, s^2)`` entries.
``directional:j=<atom>,beta=<b>,sign=<+|->``
    ``e = sign * b * P_perp a_j / ||P_perp a_j||`` for an atom ``j`` outside
    the support (chosen at random when ``j`` is omitted).
``bilinear:w=<w>``
    ``e = w * sqrt(L) * sum_{p<q} x_p x_q (a_p * a_q)`` over support pairs.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import NamedTuple, Sequence

import numpy as np

from .conditions import GroundTruth, check_apmrc, evaluate_conditions, gamma_interval
from .core import build_cache, check_dictionary
from .errors import GenerationError, RankDeficientError
from .solvers import DEFAULT_OPTIONS, Problem, SolverOptions, solve_nlasso

log = logging.getLogger(__name__)

CONDITIONS = ("apmrc", "perc_max", "perc_amax", "erc_mrc")
BOUNDARY_TOL = 1e-8
MAX_REJECTIONS = 200


@dataclass(frozen=True)
class DistortionSpec:
    kind: str = "none"
    sigma: float = 0.0
    target_atom: int | None = None
    magnitude: float = 0.0
    sign: int = 1
    weight: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "directional", "bilinear"):
            raise ValueError(f"unknown distortion kind {self.kind!r}")
        if self.sigma < 0 or self.magnitude < 0:
            raise ValueError("distortion magnitudes must be >= 0")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")

    @classmethod
    def parse(cls, text: str) -> "DistortionSpec":
        """Parse ``kind[:key=value,...]``, e.g. ``directional:j=5,beta=0.1,sign=-``."""
        kind, _, rest = text.strip().partition(":")
        kw = {}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, eq, value = item.partition("=")
            if not eq:
                raise ValueError(f"malformed distortion parameter {item!r}")
            key = key.strip()
            value = value.strip()
            if key == "sigma":
                kw["sigma"] = float(value)
            elif key == "j":
                kw["target_atom"] = int(value)
            elif key == "beta":
                kw["magnitude"] = float(value)
            elif key == "sign":
                if value not in ("+", "-", "+1", "-1", "1"):
                    raise ValueError(f"sign must be '+' or '-', got {value!r}")
                kw["sign"] = -1 if value.startswith("-") else 1
            elif key == "w":
                kw["weight"] = float(value)
            else:
                raise ValueError(f"unknown distortion parameter {key!r}")
        return cls(kind=kind.strip(), **kw)

    def __str__(self) -> str:
        if self.kind == "gaussian":
            return f"gaussian:sigma={self.sigma!r}"
        if self.kind == "directional":
            j = "" if self.target_atom is None else f"j={self.target_atom},"
            return f"directional:{j}beta={self.magnitude!r},sign={'+' if self.sign > 0 else '-'}"
        if self.kind == "bilinear":
            return f"bilinear:w={self.weight!r}"
        return "none"


@dataclass(frozen=True)
class InstanceSpec:
    """Recipe for one synthetic instance.

    ``coherence_target`` caps the largest pairwise atom cosine; atom cosines
    to the shared component are drawn from
    ``[sqrt(coherence_floor), sqrt(coherence_target)]`` so pairwise cosines
    land roughly in ``[coherence_floor, coherence_target]``.
    """

    L: int
    N: int
    J: int
    coherence_target: float = 0.5
    coefficient_range: tuple = (0.2, 1.0)
    distortion: DistortionSpec = field(default_factory=DistortionSpec)
    seed: int = 0
    coherence_floor: float = 0.0

    def __post_init__(self):
        if self.L < 1 or self.N < 1:
            raise ValueError("L and N must be positive")
        if not 1 <= self.J <= min(self.L, self.N):
            raise ValueError(f"J={self.J} must satisfy 1 <= J <= min(L, N) = {min(self.L, self.N)}")
        if not 0 <= self.coherence_target < 1:
            raise ValueError("coherence_target must lie in [0, 1)")
        if not 0 <= self.coherence_floor <= self.coherence_target:
            raise ValueError("coherence_floor must lie in [0, coherence_target]")
        lo, hi = self.coefficient_range
        if not 0 < lo <= hi:
            raise ValueError("coefficient_range needs 0 < min <= max")
        if self.distortion.kind == "directional":
            if self.J >= self.N:
                raise ValueError("directional distortion needs an atom outside the support")
            j = self.distortion.target_atom
            if j is not None and not 0 <= j < self.N:
                raise ValueError(f"directional target atom {j} out of range")


class Instance(NamedTuple):
    dictionary: np.ndarray
    truth: GroundTruth
    observation: np.ndarray
    support: np.ndarray
    spec: InstanceSpec | None = None


def coherence(A) -> float:
    """Largest absolute cosine between distinct atoms."""
    A = np.asarray(A, dtype=float)
    U = A / np.linalg.norm(A, axis=0)
    C = np.abs(U.T @ U)
    np.fill_diagonal(C, 0.0)
    return float(C.max(initial=0.0))


def correlated_dictionary(L, N, target, floor, rng) -> np.ndarray:
    """Unit-norm atoms with pairwise coherence at most ``target``.

    With ``N < L`` each atom is ``cos(t_j) u + sin(t_j) q_j`` for orthonormal
    ``u, q_1..q_N``, so the cosine of atoms ``i, j`` is exactly
    ``cos(t_i) cos(t_j)``; a random jitter that respects the cap is mixed in.
    Otherwise Gaussian atoms are drawn until the cap is met.
    """
    if N < L:
        Q, _ = np.linalg.qr(rng.standard_normal((L, N + 1)))
        u, basis = Q[:, 0], Q[:, 1:]
        c = rng.uniform(math.sqrt(floor), math.sqrt(target), N)
        base = u[:, None] * c + basis * np.sqrt(1 - c**2)
        noise = rng.standard_normal((L, N)) / math.sqrt(L)
        jitter = 0.1
        for _ in range(MAX_REJECTIONS):
            A = base + jitter * noise
            A /= np.linalg.norm(A, axis=0)
            if coherence(A) <= target:
                return A
            jitter /= 2
        return base / np.linalg.norm(base, axis=0)
    for _ in range(MAX_REJECTIONS):
        A = rng.standard_normal((L, N))
        A /= np.linalg.norm(A, axis=0)
        if coherence(A) <= target:
            return A
    raise GenerationError(
        f"could not reach coherence <= {target} with N={N} atoms in L={L} dimensions "
        f"after {MAX_REJECTIONS} draws"
    )


def make_distortion(dist: DistortionSpec, A, x, support, rng) -> np.ndarray:
    L = A.shape[0]
    if dist.kind == "none":
        return np.zeros(L)
    if dist.kind == "gaussian":
        return dist.sigma * rng.standard_normal(L)
    if dist.kind == "directional":
        cache = build_cache(A, support)
        r = cache.residual(A[:, dist.target_atom])
        norm = np.linalg.norm(r)
        if norm <= 1e-12 * np.linalg.norm(A[:, dist.target_atom]):
            raise GenerationError(
                f"atom {dist.target_atom} lies in the span of the support; no orthogonal direction"
            )
        return dist.sign * dist.magnitude * r / norm
    e = np.zeros(L)
    for p, q in combinations(support, 2):
        e += x[p] * x[q] * A[:, p] * A[:, q]
    return dist.weight * math.sqrt(L) * e


def generate(spec: InstanceSpec) -> Instance:
    """Draw a dictionary, support, coefficients and distortion from ``spec``.

    Deterministic for a fixed ``spec.seed``.

    Raises
    ------
    GenerationError
        If the coherence cap or the directional distortion cannot be realised.
    """
    rng = np.random.default_rng(spec.seed)
    A = correlated_dictionary(spec.L, spec.N, spec.coherence_target, spec.coherence_floor, rng)
    dist = spec.distortion
    pool = np.arange(spec.N)
    if dist.kind == "directional":
        j = dist.target_atom
        if j is None:
            j = int(rng.integers(spec.N))
            dist = DistortionSpec("directional", magnitude=dist.magnitude, sign=dist.sign, target_atom=j)
        pool = pool[pool != j]
    support = np.sort(rng.choice(pool, size=spec.J, replace=False))
    x = np.zeros(spec.N)
    x[support] = rng.uniform(*spec.coefficient_range, size=spec.J)
    e = make_distortion(dist, A, x, support, rng)
    y = A @ x + e
    A = check_dictionary(A)
    if dist is not spec.distortion:
        spec = InstanceSpec(**{**_spec_fields(spec), "distortion": dist})
    return Instance(A, GroundTruth(x, e), y, support, spec)


def _spec_fields(spec: InstanceSpec) -> dict:
    return {f: getattr(spec, f) for f in spec.__dataclass_fields__}


@dataclass
class ConfusionMatrix:
    """Condition verdict (True/False) against solver outcome (Correct/Incorrect)."""

    true_correct: int = 0
    true_incorrect: int = 0
    false_correct: int = 0
    false_incorrect: int = 0

    def add(self, verdict: bool, correct: bool) -> None:
        if verdict and correct:
            self.true_correct += 1
        elif verdict:
            self.true_incorrect += 1
        elif correct:
            self.false_correct += 1
        else:
            self.false_incorrect += 1

    @property
    def total(self) -> int:
        return self.true_correct + self.true_incorrect + self.false_correct + self.false_incorrect

    def row(self) -> tuple:
        return (self.true_correct, self.true_incorrect, self.false_correct, self.false_incorrect)

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(*(a + b for a, b in zip(self.row(), other.row())))


def effective_gamma(A, y, gamma: float, mode: str = "relative") -> float:
    """``gamma`` itself (``absolute``) or ``gamma * ||A^T y||_inf`` (``relative``).

    ``||A^T y||_inf`` bounds the useful range: above it the zero vector is optimal.
    """
    if mode == "absolute":
        return float(gamma)
    if mode == "relative":
        return float(gamma) * float(np.max(np.abs(np.asarray(A).T @ np.asarray(y))))
    raise ValueError(f"gamma mode must be 'relative' or 'absolute', got {mode!r}")


def _evaluate_instance(args):
    index, inst, gammas, mode, opts, boundary_tol = args
    out = []
    for g in gammas:
        gamma = effective_gamma(inst.dictionary, inst.observation, g, mode)
        p = Problem(inst.dictionary, inst.observation, gamma)
        rec = {"instance": index, "gamma": g, "gamma_effective": gamma, "status": "ok"}
        if inst.spec is not None:
            rec.update(
                J=inst.spec.J,
                coherence_target=inst.spec.coherence_target,
                distortion=str(inst.spec.distortion),
                seed=inst.spec.seed,
            )
        rec["support_true"] = " ".join(map(str, inst.support))
        sol = solve_nlasso(p, opts)
        rec["support_solver"] = " ".join(map(str, sol.support))
        rec["converged"] = sol.converged
        correct = bool(np.array_equal(sol.support, inst.support))
        rec["correct"] = correct
        if not sol.converged:
            rec["status"] = "nonconverged"
            out.append(rec)
            continue
        try:
            rep = evaluate_conditions(p, inst.support, inst.truth, with_base=False, opts=opts)
        except RankDeficientError:
            rec["status"] = "rank_deficient"
            out.append(rec)
            continue
        rec.update(
            erc=rep.erc,
            perc=rep.perc,
            mcc_margin=rep.mcc_margin,
            nscc_min_margin=min(rep.nscc_margins.values(), default=math.inf),
            perc_max_margin=rep.perc_max_margin,
            perc_amax_margin=rep.perc_amax_margin,
            erc_mrc_noise_margin=rep.erc_mrc_noise_margin,
            erc_mrc_coef_margin=rep.erc_mrc_coef_margin,
            min_abs_margin=rep.min_abs_margin(),
        )
        for c in CONDITIONS:
            rec[c] = bool(rep.verdicts[c])
        if rep.min_abs_margin() < boundary_tol:
            rec["status"] = "boundary"
        out.append(rec)
    return out


@dataclass
class BatchResult:
    gammas: list
    confusion: dict
    records: list
    n_instances: int
    nonconverged: int = 0
    boundary: int = 0
    rank_deficient: int = 0

    def table(self, gamma) -> dict:
        return self.confusion[gamma]


def worker_count() -> int:
    """Workers for batch evaluation, capped by ``NNSPARSE_THREADS``."""
    cpus = os.cpu_count() or 1
    env = os.environ.get("NNSPARSE_THREADS")
    if env:
        try:
            return max(1, min(int(env), cpus))
        except ValueError:
            log.warning("ignoring non-integer NNSPARSE_THREADS=%r", env)
    return cpus


def evaluate_batch(
    instances: Sequence[Instance | InstanceSpec],
    gammas: Sequence[float],
    opts: SolverOptions = DEFAULT_OPTIONS,
    gamma_mode: str = "relative",
    boundary_tol: float = BOUNDARY_TOL,
    workers: int | None = None,
) -> BatchResult:
    """Solve every instance at every ``gamma`` and tally condition verdicts.

    An outcome is Correct when the solver support equals the generating
    support exactly.  Non-converged solves and instances with any condition
    margin inside ``boundary_tol`` of zero are recorded but left out of the
    tallies.  Records come back in instance order whatever the worker count.
    """
    insts = [generate(i) if isinstance(i, InstanceSpec) else i for i in instances]
    gammas = list(gammas)
    jobs = [(k, inst, gammas, gamma_mode, opts, boundary_tol) for k, inst in enumerate(insts)]
    workers = worker_count() if workers is None else max(1, workers)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_evaluate_instance, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        chunks = [_evaluate_instance(j) for j in jobs]

    confusion = {g: {c: ConfusionMatrix() for c in CONDITIONS} for g in gammas}
    result = BatchResult(gammas, confusion, [], len(insts))
    for recs in chunks:
        for rec in recs:
            result.records.append(rec)
            status = rec["status"]
            if status == "nonconverged":
                result.nonconverged += 1
                continue
            if status == "rank_deficient":
                result.rank_deficient += 1
                continue
            if status == "boundary":
                result.boundary += 1
                log.info("boundary case excluded: instance %d gamma %g", rec["instance"], rec["gamma"])
                continue
            for c in CONDITIONS:
                if rec[c] is None:
                    continue
                confusion[rec["gamma"]][c].add(rec[c], rec["correct"])
    if result.nonconverged:
        log.warning("%d solves did not converge and were excluded", result.nonconverged)
    return result


def make_specs(
    count: int,
    L: int,
    N: int,
    J: Sequence[int] = (2, 3),
    coherence: Sequence[float] = (0.3, 0.6, 0.9),
    distortions: Sequence[DistortionSpec | str] = ("none",),
    coefficient_range: tuple = (0.2, 1.0),
    seed: int = 0,
) -> list[InstanceSpec]:
    """``count`` instance specs mixing the given choices, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    dists = [DistortionSpec.parse(d) if isinstance(d, str) else d for d in distortions]
    seeds = rng.integers(0, 2**31 - 1, size=count)
    specs = []
    for k in range(count):
        specs.append(
            InstanceSpec(
                L=L,
                N=N,
                J=int(J[rng.integers(len(J))]),
                coherence_target=float(coherence[rng.integers(len(coherence))]),
                coefficient_range=tuple(coefficient_range),
                distortion=dists[rng.integers(len(dists))],
                seed=int(seeds[k]),
            )
        )
    return specs


@dataclass
class SweepResult:
    gammas: np.ndarray
    correct: np.ndarray
    false_alarm: np.ndarray
    missed: np.ndarray
    apmrc: np.ndarray
    mcc_margin: np.ndarray
    nscc_min_margin: np.ndarray
    supports: list
    interval: tuple | None
    converged: np.ndarray

    @property
    def success_lower(self) -> float | None:
        """Smallest grid gamma where the solver recovers the support."""
        hits = self.gammas[self.correct]
        return float(hits.min()) if hits.size else None

    @property
    def success_upper(self) -> float | None:
        hits = self.gammas[self.correct]
        return float(hits.max()) if hits.size else None

    @property
    def false_alarm_free_from(self) -> float | None:
        """Smallest grid gamma from which on no false alarm occurs."""
        bad = np.flatnonzero(self.false_alarm)
        start = 0 if bad.size == 0 else bad[-1] + 1
        return float(self.gammas[start]) if start < self.gammas.size else None

    @property
    def missed_free_until(self) -> float | None:
        """Largest grid gamma up to which no atom of the support is missed."""
        bad = np.flatnonzero(self.missed)
        stop = self.gammas.size if bad.size == 0 else bad[0]
        return float(self.gammas[stop - 1]) if stop > 0 else None

    def summary(self) -> dict:
        return {
            "interval": self.interval,
            "success_lower": self.success_lower,
            "success_upper": self.success_upper,
            "false_alarm_free_from": self.false_alarm_free_from,
            "missed_free_until": self.missed_free_until,
        }


def gamma_sweep(
    instance: Instance, gamma_grid, opts: SolverOptions = DEFAULT_OPTIONS
) -> SweepResult:
    """Solve ``instance`` along an absolute ``gamma_grid`` and record outcomes."""
    A, y, S = instance.dictionary, instance.observation, instance.support
    grid = np.asarray(gamma_grid, dtype=float)
    cache = build_cache(A, S, opts.rank_tol)
    n = grid.size
    correct = np.zeros(n, bool)
    fa = np.zeros(n, bool)
    md = np.zeros(n, bool)
    ap = np.zeros(n, bool)
    conv = np.zeros(n, bool)
    mcc = np.zeros(n)
    nscc = np.zeros(n)
    supports = []
    in_support = np.zeros(A.shape[1], bool)
    in_support[S] = True
    for k, g in enumerate(grid):
        p = Problem(A, y, g)
        sol = solve_nlasso(p, opts)
        conv[k] = sol.converged
        supports.append(sol.support.tolist())
        mask = np.zeros(A.shape[1], bool)
        mask[sol.support] = True
        fa[k] = bool(np.any(mask & ~in_support))
        md[k] = bool(np.any(in_support & ~mask))
        correct[k] = not fa[k] and not md[k]
        m = check_apmrc(p, S, cache)
        ap[k] = m.holds
        mcc[k] = m.mcc_margin
        nscc[k] = min(m.nscc_margins.values(), default=math.inf)
    return SweepResult(
        gammas=grid,
        correct=correct,
        false_alarm=fa,
        missed=md,
        apmrc=ap,
        mcc_margin=mcc,
        nscc_min_margin=nscc,
        supports=supports,
        interval=gamma_interval(A, y, S, cache),
        converged=conv,
    )


def spec_to_dict(spec: InstanceSpec) -> dict:
    d = asdict(spec)
    d["distortion"] = str(spec.distortion)
    d["coefficient_range"] = list(spec.coefficient_range)
    return d
