"""Dense linear-algebra substrate shared by the solvers and recovery conditions.

Dictionaries are plain ``(L, N)`` float arrays whose columns are the atoms.
Supports are sorted, duplicate-free integer arrays of 0-based column indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSupportError, RankDeficientError

DEFAULT_RANK_TOL = 1e-10


def check_dictionary(A) -> np.ndarray:
    """Validate a dictionary matrix and return it as a read-only float array."""
    A = np.array(A, dtype=float, copy=True)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"dictionary must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("dictionary has non-finite entries")
    zero = np.flatnonzero(np.linalg.norm(A, axis=0) == 0)
    if zero.size:
        raise ValueError(f"dictionary has all-zero atoms at columns {zero.tolist()}")
    A.setflags(write=False)
    return A


def check_observation(y, L: int | None = None) -> np.ndarray:
    y = np.array(y, dtype=float, copy=True).reshape(-1)
    if not np.all(np.isfinite(y)):
        raise ValueError("observation has non-finite entries")
    if L is not None and y.shape[0] != L:
        raise ValueError(f"observation length {y.shape[0]} does not match dictionary rows {L}")
    y.setflags(write=False)
    return y


def as_support(indices, n_atoms: int) -> np.ndarray:
    """Return ``indices`` as a validated, strictly increasing support.

    Raises
    ------
    InvalidSupportError
        On duplicates, negative indices or indices ``>= n_atoms``.
    """
    idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices)
    if idx.size == 0:
        return np.zeros(0, dtype=int)
    if idx.dtype.kind not in "iu":
        if not np.all(np.equal(np.mod(idx, 1), 0)):
            raise InvalidSupportError(f"support indices must be integers, got {idx.tolist()}")
        idx = idx.astype(int)
    idx = idx.reshape(-1).astype(int)
    if np.unique(idx).size != idx.size:
        raise InvalidSupportError(f"support has duplicate indices: {idx.tolist()}")
    if idx.min() < 0 or idx.max() >= n_atoms:
        raise InvalidSupportError(
            f"support indices {idx.tolist()} out of range for {n_atoms} atoms"
        )
    return np.sort(idx)


def complement(support, n_atoms: int) -> np.ndarray:
    """Indices of ``range(n_atoms)`` not in ``support``."""
    mask = np.ones(n_atoms, dtype=bool)
    mask[np.asarray(support, dtype=int)] = False
    return np.flatnonzero(mask)


def subdictionary(A, support) -> np.ndarray:
    """Columns of ``A`` at ``support``, in support order."""
    A = np.asarray(A, dtype=float)
    support = as_support(support, A.shape[1])
    return A[:, support]


def inf_inf_norm(m) -> float:
    """Matrix (inf, inf) operator norm: the largest row l1-norm."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(m), axis=1)))


@dataclass(frozen=True)
class SubdictionaryCache:
    """Factorisation of a subdictionary ``A_S`` reused by every condition.

    Attributes
    ----------
    support : ndarray of int
        The support ``S`` the cache was built for.
    sub : ndarray, shape (L, J)
        ``A[:, S]``.
    pseudoinverse : ndarray, shape (J, L)
        Moore-Penrose pseudoinverse of ``sub`` (SVD based).
    gram_inverse : ndarray or None
        ``inv(sub.T @ sub)``; only present when ``rank == J``.
    rank : int
        Numerical rank under the relative tolerance used at build time.
    """

    support: np.ndarray
    sub: np.ndarray
    pseudoinverse: np.ndarray
    gram_inverse: np.ndarray | None
    rank: int
    singular_values: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.support.size)

    @property
    def full_rank(self) -> bool:
        return self.rank == self.size

    @property
    def rank_deficient(self) -> bool:
        return not self.full_rank

    def require_full_rank(self, what: str = "this operation") -> None:
        if not self.full_rank:
            raise RankDeficientError(
                f"{what} needs linearly independent atoms; subdictionary on "
                f"{self.support.tolist()} has rank {self.rank} < {self.size}"
            )

    def coordinates(self, v) -> np.ndarray:
        """Least-squares coordinates ``A_S^+ v`` (works for vectors or matrices)."""
        return self.pseudoinverse @ np.asarray(v, dtype=float)

    def project(self, v) -> np.ndarray:
        """Orthogonal projection of ``v`` onto the range of ``A_S``."""
        return self.sub @ self.coordinates(v)

    def residual(self, v) -> np.ndarray:
        """Apply ``P_perp = I - A_S A_S^+`` without forming the ``L x L`` matrix."""
        v = np.asarray(v, dtype=float)
        return v - self.project(v)


def build_cache(A, support, rank_tol: float = DEFAULT_RANK_TOL) -> SubdictionaryCache:
    """Factorise ``A[:, support]`` through its thin SVD.

    Singular values below ``rank_tol * s_max`` are treated as zero.  A
    rank-deficient subdictionary still yields a usable pseudoinverse and
    projector, but ``gram_inverse`` is ``None``.
    """
    A = np.asarray(A, dtype=float)
    support = as_support(support, A.shape[1])
    if support.size == 0:
        raise InvalidSupportError("cannot build a subdictionary cache for an empty support")
    sub = A[:, support]
    U, s, Vt = np.linalg.svd(sub, full_matrices=False)
    cutoff = rank_tol * s[0] if s.size else 0.0
    keep = s > cutoff
    rank = int(np.count_nonzero(keep))
    Uk, sk, Vk = U[:, keep], s[keep], Vt[keep].T
    pinv = (Vk / sk) @ Uk.T
    gram_inv = None
    if rank == support.size:
        gram_inv = (Vk / sk**2) @ Vk.T
        gram_inv = 0.5 * (gram_inv + gram_inv.T)
    for arr in (sub, pinv, s):
        arr.setflags(write=False)
    if gram_inv is not None:
        gram_inv.setflags(write=False)
    return SubdictionaryCache(
        support=support,
        sub=sub,
        pseudoinverse=pinv,
        gram_inverse=gram_inv,
        rank=rank,
        singular_values=s,
    )
