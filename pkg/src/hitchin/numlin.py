"""Dense linear algebra for real-split matrices.

Matrices are plain ``numpy.ndarray`` objects of shape ``(d, d)``.  The
extended-precision path uses :mod:`mpmath` matrices and is only needed when
powers of eigenvalue ratios fall below double precision.

Index conventions: eigen-data is stored 0-based (``values[0]`` is the
eigenvalue of largest modulus).  Index tuples passed to :func:`minor` are
0-based and strictly increasing.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Iterator, Sequence

import mpmath
import numpy as np

from .errors import InputError, ModulusCollision, NotRealSplit

TOL_GAP = 1e-9
TOL_RECON = 1e-10
TOL_DUAL = 1e-10
TOL_DET = 1e-9
EXTENDED_DPS = 50


def as_matrix(M) -> np.ndarray:
    """Return ``M`` as a finite square float array (a copy is not forced)."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError("matrix has non-finite entries")
    return A


def is_unimodular(M, tol_det: float = TOL_DET) -> bool:
    A = as_matrix(M)
    return abs(np.linalg.det(A) - 1.0) <= tol_det * A.shape[0]


def normalize_det(M) -> np.ndarray:
    """Rescale ``M`` by ``det(M)**(-1/d)`` so the result is unimodular.

    For even ``d`` a non-positive determinant cannot be fixed by a real
    scalar and raises :class:`InputError`.
    """
    A = as_matrix(M)
    d = A.shape[0]
    det = np.linalg.det(A)
    if det == 0 or (det < 0 and d % 2 == 0):
        raise InputError(f"cannot normalize determinant {det!r} in dimension {d}")
    scale = np.sign(det) * abs(det) ** (1.0 / d)
    return A / scale


def _canonical_sign(v: np.ndarray, rel: float = 1e-12) -> np.ndarray:
    # unit norm, first non-negligible component positive
    v = v / np.linalg.norm(v)
    big = np.flatnonzero(np.abs(v) > rel * np.max(np.abs(v)))
    if v[big[0]] < 0:
        v = -v
    return v


@dataclass(frozen=True)
class EigenSplit:
    """Eigenvalues sorted by descending modulus with vectors and duals.

    ``vectors[:, i]`` is the unit eigenvector for ``values[i]`` and
    ``duals[i]`` the covector with ``duals[i] @ vectors[:, j] == delta_ij``.
    ``gap`` is the smallest relative drop between consecutive moduli.
    """

    values: np.ndarray
    vectors: np.ndarray
    duals: np.ndarray
    gap: float

    @property
    def dim(self) -> int:
        return len(self.values)

    def projector(self, i: int) -> np.ndarray:
        return np.outer(self.vectors[:, i], self.duals[i])

    def projectors(self) -> list[np.ndarray]:
        return [self.projector(i) for i in range(self.dim)]

    def coefficients(self, B) -> np.ndarray:
        """Matrix of ``B`` in the eigenbasis: entry (i, j) is <e^i | B e_j>."""
        return self.duals @ np.asarray(B) @ self.vectors

    def is_proximal(self, k: int, tol_gap: float = TOL_GAP) -> bool:
        mods = np.abs(np.asarray(self.values, dtype=float))
        return all(mods[i] - mods[i + 1] > tol_gap * mods[i] for i in range(k))

    def rescaled(self, i: int, c: float) -> "EigenSplit":
        """Scale ``e_i`` by ``c`` and ``e^i`` by ``1/c``; projectors are unchanged."""
        vecs = self.vectors.copy()
        duals = self.duals.copy()
        vecs[:, i] *= c
        duals[i] /= c
        return EigenSplit(self.values, vecs, duals, self.gap)


def _check_spectrum(values, radius: float, tol_gap: float):
    imag = np.abs(np.imag(values))
    if radius == 0 or np.any(imag > tol_gap * radius):
        raise NotRealSplit(f"eigenvalues are not real: {values}")
    real = np.real(values)
    order = np.argsort(-np.abs(real), kind="stable")
    real = real[order]
    mods = np.abs(real)
    if len(mods) == 1:
        return real, order, np.inf
    gaps = (mods[:-1] - mods[1:]) / mods[:-1]
    if np.min(gaps) < tol_gap:
        raise ModulusCollision(f"eigenvalue moduli collide: {mods}")
    return real, order, float(np.min(gaps))


def eig_split(M, tol_gap: float = TOL_GAP, precision: str = "double") -> EigenSplit:
    """Split a purely loxodromic matrix into eigenvalues, vectors and duals.

    Raises :class:`NotRealSplit` when some eigenvalue has an imaginary part
    above ``tol_gap`` times the spectral radius and :class:`ModulusCollision`
    when two consecutive moduli are within ``tol_gap`` relatively.

    With ``precision="extended"`` the computation runs in mpmath at
    :data:`EXTENDED_DPS` digits and the arrays hold ``mpf`` objects.
    """
    if precision == "extended":
        return _eig_split_mp(M, tol_gap)
    if precision != "double":
        raise InputError(f"unknown precision {precision!r}")
    A = as_matrix(M)
    w, V = np.linalg.eig(A)
    radius = float(np.max(np.abs(w)))
    values, order, gap = _check_spectrum(w, radius, tol_gap)
    V = np.real(V[:, order])
    V = np.column_stack([_canonical_sign(V[:, i]) for i in range(V.shape[1])])
    duals = np.linalg.inv(V)
    return EigenSplit(values, V, duals, gap)


def eig_split_with_inverse(M, M_inv, tol_gap: float = TOL_GAP) -> EigenSplit:
    """:func:`eig_split` using ``M_inv`` for the lower half of the spectrum.

    Eigenvalues far below ``|M|`` lose relative accuracy in a direct solve;
    the same lines are the top of ``M^-1``, where they are resolved to full
    precision.  ``M_inv`` should be computed independently (e.g. from the
    inverse word), not by inverting ``M``.
    """
    hi = eig_split(M, tol_gap)
    lo = eig_split(M_inv, tol_gap)
    d = hi.dim
    k = (d + 1) // 2
    values = np.concatenate([hi.values[:k], 1.0 / lo.values[::-1][k:]])
    V = np.column_stack([hi.vectors[:, :k], lo.vectors[:, ::-1][:, k:]])
    gaps = (np.abs(values[:-1]) - np.abs(values[1:])) / np.abs(values[:-1])
    return EigenSplit(values, V, np.linalg.inv(V), float(np.min(gaps)) if d > 1 else np.inf)


def _eig_split_mp(M, tol_gap: float) -> EigenSplit:
    with mpmath.workdps(EXTENDED_DPS):
        A = to_mp(M)
        w, ER = mpmath.eig(A)
        wc = np.array([complex(x) for x in w])
        radius = float(max(abs(x) for x in wc))
        _, order, gap = _check_spectrum(wc, radius, tol_gap)
        d = A.rows
        values = np.array([mpmath.re(w[k]) for k in order], dtype=object)
        cols = []
        for k in order:
            v = [mpmath.re(ER[r, k]) for r in range(d)]
            norm = mpmath.sqrt(mpmath.fsum(x * x for x in v))
            v = [x / norm for x in v]
            lead = next(x for x in v if abs(x) > mpmath.mpf(10) ** (-30))
            if lead < 0:
                v = [-x for x in v]
            cols.append(v)
        V = mpmath.matrix(d, d)
        for c, v in enumerate(cols):
            for r in range(d):
                V[r, c] = v[r]
        Vi = V**-1
        vectors = np.array([[V[r, c] for c in range(d)] for r in range(d)], dtype=object)
        duals = np.array([[Vi[r, c] for c in range(d)] for r in range(d)], dtype=object)
    return EigenSplit(values, vectors, duals, gap)


def from_eigensplit(es: EigenSplit) -> np.ndarray:
    """Reassemble ``sum_i lambda_i e_i e^i``."""
    vals = np.asarray(es.values)
    return (es.vectors * vals) @ es.duals


def to_mp(M) -> mpmath.matrix:
    """Exact conversion of a float (or mpf) array to an mpmath matrix."""
    A = np.asarray(M)
    out = mpmath.matrix(A.shape[0], A.shape[1])
    for i in range(A.shape[0]):
        for j in range(A.shape[1]):
            out[i, j] = mpmath.mpf(A[i, j])
    return out


def mp_eigenvalues(M: mpmath.matrix) -> list:
    """Eigenvalues of an mpmath matrix sorted by descending modulus."""
    w = mpmath.eig(M, left=False, right=False)
    return sorted(w, key=lambda x: -abs(x))


def subsets(d: int, k: int) -> list[tuple[int, ...]]:
    """k-subsets of range(d) in lexicographic order."""
    return list(itertools.combinations(range(d), k))


def _check_indices(idx: Sequence[int], d: int):
    if any(i < 0 or i >= d for i in idx):
        raise InputError(f"index out of range in {tuple(idx)} for dimension {d}")
    if any(a >= b for a, b in zip(idx, idx[1:])):
        raise InputError(f"indices must be strictly increasing: {tuple(idx)}")


def minor(M, rows: Sequence[int], cols: Sequence[int]) -> float:
    A = np.asarray(M, dtype=float)
    if len(rows) != len(cols):
        raise InputError("row and column index lists differ in length")
    _check_indices(rows, A.shape[0])
    _check_indices(cols, A.shape[1])
    if len(rows) == 0:
        return 1.0
    return float(np.linalg.det(A[np.ix_(rows, cols)]))


def enumerate_minors(M, k: int) -> Iterator[tuple[tuple[tuple[int, ...], tuple[int, ...]], float]]:
    """Yield ``((rows, cols), value)`` for all k x k minors, rows-major lexicographic."""
    A = np.asarray(M, dtype=float)
    d = A.shape[0]
    if not 1 <= k <= d:
        raise InputError(f"minor size {k} out of range for dimension {d}")
    idx = subsets(d, k)
    for I in idx:
        for J in idx:
            yield (I, J), float(np.linalg.det(A[np.ix_(I, J)]))


def exterior_power(M, k: int) -> np.ndarray:
    """k-th compound matrix on lexicographically ordered k-wedges.

    Column ``J`` holds the coordinates of ``M e_J``; entry (I, J) is the minor
    of ``M`` on rows ``I`` and columns ``J``.
    """
    A = as_matrix(M)
    d = A.shape[0]
    if not 1 <= k <= d:
        raise InputError(f"exterior power {k} out of range for dimension {d}")
    idx = subsets(d, k)
    n = comb(d, k)
    out = np.empty((n, n))
    for a, I in enumerate(idx):
        for b, J in enumerate(idx):
            out[a, b] = np.linalg.det(A[np.ix_(I, J)])
    return out


def top_eigenvalue(M) -> float:
    """Real eigenvalue of largest modulus; complex or tied tops raise."""
    w = np.linalg.eigvals(as_matrix(M))
    order = np.argsort(-np.abs(w))
    top = w[order[0]]
    if abs(top.imag) > TOL_GAP * abs(top):
        raise NotRealSplit(f"top eigenvalue is not real: {top}")
    if len(w) > 1 and abs(w[order[1]]) >= abs(top) * (1 - TOL_GAP):
        raise ModulusCollision("top eigenvalue is not simple in modulus")
    return float(top.real)
