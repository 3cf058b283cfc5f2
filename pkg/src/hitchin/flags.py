"""Flags, transverse pairs and Lusztig positivity.

A flag is stored by an invertible basis matrix whose leading ``i`` columns
span its ``i``-dimensional part.  The frame of a transverse pair ``(a, b)``
is a basis ``e_0..e_{d-1}`` with ``a^j = <e_0..e_{j-1}>`` and
``b^j = <e_{d-j}..e_{d-1}>``; unipotent matrices "in the frame" are written
in that basis.

All indices are 0-based: ``jacobi(d, i, j, t)`` adds ``t`` at entry
``(i, j)``, permutations are tuples with ``perm[k]`` the image of ``k``, and
compositions of transpositions are listed in the order they are applied.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.linalg import subspace_angles

from .errors import InputError, NotInSchubertCell, NotTransverse, NotUnipotent, ZeroMinor
from .numlin import _canonical_sign, subsets

TOL_RANK = 1e-10
TOL_FLAG = 1e-8
TOL_MINOR = 1e-12
TOL_UNIPOTENT = 1e-9
MAX_ENUM_DIM = 8


@dataclass(frozen=True, eq=False)
class Flag:
    basis: np.ndarray

    def __post_init__(self):
        B = np.array(self.basis, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise InputError("flag basis must be square")
        norms = np.linalg.norm(B, axis=0)
        if np.min(norms) == 0:
            raise InputError("flag basis is not invertible")
        # column scaling does not change the flag, so test rank on unit columns
        q, r = np.linalg.qr(B / norms)
        if np.min(np.abs(np.diag(r))) <= TOL_RANK * np.max(np.abs(np.diag(r))):
            raise InputError("flag basis is not invertible")
        B.setflags(write=False)
        object.__setattr__(self, "basis", B)
        # nested orthonormal basis: q[:, :i] spans the first i columns
        q.setflags(write=False)
        object.__setattr__(self, "_ortho", q)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def part(self, i: int) -> np.ndarray:
        """Orthonormal basis of the ``i``-dimensional subspace."""
        return self._ortho[:, :i]

    def transformed(self, g) -> "Flag":
        return Flag(np.asarray(g) @ self.basis)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Flag):
            return NotImplemented
        return flag_distance(self, other) <= TOL_FLAG

    __hash__ = None


def flag_distance(f: Flag, g: Flag) -> float:
    """Largest principal angle between corresponding parts of two flags."""
    if f.dim != g.dim:
        raise InputError("flags of different dimension")
    return max(
        (float(np.max(subspace_angles(f.part(i), g.part(i)))) for i in range(1, f.dim)),
        default=0.0,
    )


def standard_flag(d: int) -> Flag:
    return Flag(np.eye(d))


def reversed_standard_flag(d: int) -> Flag:
    return Flag(np.eye(d)[:, ::-1])


def compositions(d: int, n: int) -> Iterator[tuple[int, ...]]:
    """Non-negative integer vectors of length ``n`` summing to ``d``."""
    for cuts in itertools.combinations(range(d + n - 1), n - 1):
        prev = -1
        parts = []
        for c in cuts + (d + n - 1,):
            parts.append(c - prev - 1)
            prev = c
        yield tuple(parts)


def _spans(blocks: list[np.ndarray], tol: float) -> bool:
    M = np.hstack(blocks)
    s = np.linalg.svd(M, compute_uv=False)
    return s[-1] > tol


def is_transverse(flags: Sequence[Flag], tol_rank: float = TOL_RANK) -> bool:
    """True iff every composition of d picks out a direct-sum decomposition."""
    if not flags:
        return True
    d = flags[0].dim
    if any(f.dim != d for f in flags):
        raise InputError("flags of different dimension")
    for comp in compositions(d, len(flags)):
        blocks = [f.part(k) for f, k in zip(flags, comp) if k]
        if not _spans(blocks, tol_rank):
            return False
    return True


@dataclass(frozen=True)
class PairFrame:
    """Lines ``L_i = a^(i+1) ∩ b^(d-i)`` of a transverse pair, one unit vector each."""

    a: Flag
    b: Flag
    basis: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def duals(self) -> np.ndarray:
        return np.linalg.inv(self.basis)

    def line(self, i: int) -> np.ndarray:
        return self.basis[:, i]

    def resigned(self, signs: Sequence[float]) -> "PairFrame":
        return PairFrame(self.a, self.b, self.basis * np.asarray(signs, dtype=float))

    def complementary(self) -> "PairFrame":
        """The basis ``(-1)^i e_i`` (1-based parity), consistent with the same pair."""
        d = self.dim
        return self.resigned([(-1) ** (i + 1) for i in range(d)])

    def to_frame(self, g) -> np.ndarray:
        """Matrix of the ambient map ``g`` in the frame basis."""
        return np.linalg.solve(self.basis, np.asarray(g) @ self.basis)

    def from_frame(self, u) -> np.ndarray:
        """Ambient matrix of the frame-coordinate matrix ``u``."""
        return self.basis @ np.asarray(u) @ np.linalg.inv(self.basis)


def pair_frame(a: Flag, b: Flag) -> PairFrame:
    if not is_transverse([a, b]):
        raise NotTransverse("flags are not transverse")
    d = a.dim
    cols = []
    for i in range(d):
        Qa, Qb = a.part(i + 1), b.part(d - i)
        # null vector of [Qa, -Qb] gives the intersection line
        _, _, vt = np.linalg.svd(np.hstack([Qa, -Qb]))
        x = vt[-1, : i + 1]
        cols.append(_canonical_sign(Qa @ x))
    return PairFrame(a, b, np.column_stack(cols))


def jacobi(d: int, i: int, j: int, t: float) -> np.ndarray:
    """Identity except ``J e_j = e_j + t e_i``."""
    if i == j:
        raise InputError("jacobi needs i != j")
    if not (0 <= i < d and 0 <= j < d):
        raise InputError("jacobi index out of range")
    J = np.eye(d)
    J[i, j] = t
    return J


def minor_tolerance(sub: np.ndarray, tol: float = TOL_MINOR, scale: float | None = None) -> float:
    """Scale-aware zero threshold for the determinant of ``sub``.

    Exact zeros are taken as structural.  Every other entry may carry an
    error of ``tol * (|a_ij| + scale)``, where ``scale`` is the size of the
    whole matrix (default: of ``sub``); to first order this moves the
    determinant by at most that weighted sum of absolute cofactors.  Small
    but well-conditioned minors keep their sign, while rounding noise in a
    computed zero reads as zero.
    """
    A = np.atleast_2d(np.asarray(sub, dtype=float))
    if scale is None:
        scale = float(np.max(np.abs(A)))
    weight = np.where(A != 0, np.abs(A) + scale, 0.0)
    k = A.shape[0]
    if k == 1:
        return tol * float(weight[0, 0])
    # adj(A) = det(U) det(V^T) V diag(prod_{j != i} s_j) U^T, stable when A is singular
    U, s, Vt = np.linalg.svd(A)
    others = np.array([np.prod(np.delete(s, i)) for i in range(k)])
    adj = np.linalg.det(U) * np.linalg.det(Vt) * (Vt.T * others) @ U.T
    return tol * float(np.sum(weight * np.abs(adj.T)))


def _all_minors(M: np.ndarray, pairs=None, tol: float = TOL_MINOR):
    d = M.shape[0]
    if d > MAX_ENUM_DIM:
        raise InputError(f"minor enumeration limited to d <= {MAX_ENUM_DIM}")
    if pairs is None:
        pairs = ((I, J) for k in range(1, d + 1) for I in subsets(d, k) for J in subsets(d, k))
    scale = float(np.max(np.abs(M)))
    for I, J in pairs:
        sub = M[np.ix_(I, J)]
        yield (I, J), float(np.linalg.det(sub)), minor_tolerance(sub, tol, scale)


def is_totally_nonneg(M, tol: float = TOL_MINOR) -> bool:
    M = np.asarray(M, dtype=float)
    return all(v >= -t for _, v, t in _all_minors(M, tol=tol))


def is_totally_positive(M, tol: float = TOL_MINOR) -> bool:
    M = np.asarray(M, dtype=float)
    return all(v > t and v > 0 for _, v, t in _all_minors(M, tol=tol))


def initial_minor_indices(d: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Contiguous square blocks bordering the first row or column (d^2 of them)."""
    out = []
    for i in range(d):
        for j in range(d):
            k = min(i, j) + 1
            out.append((tuple(range(i - k + 1, i + 1)), tuple(range(j - k + 1, j + 1))))
    return out


def initial_minors(M) -> list[tuple[tuple, float, float]]:
    M = np.asarray(M, dtype=float)
    return list(_all_minors(M, initial_minor_indices(M.shape[0])))


def initial_minors_positive(M) -> bool:
    return all(v > t and v > 0 for _, v, t in initial_minors(M))


class Positivity(enum.Enum):
    POSITIVE = "positive"
    NONNEG_ONLY = "nonneg_only"
    OUTSIDE = "outside"


def upper_minor_indices(d: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Minors ``(I, J)`` with ``I[k] <= J[k]`` for every k."""
    out = []
    for k in range(1, d + 1):
        for I in subsets(d, k):
            for J in subsets(d, k):
                if all(i <= j for i, j in zip(I, J)):
                    out.append((I, J))
    return out


def check_unipotent(u, tol: float = TOL_UNIPOTENT) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    scale = max(1.0, float(np.max(np.abs(u))))
    lower = np.tril(u, -1)
    if np.max(np.abs(lower), initial=0.0) > tol * scale or np.max(np.abs(np.diag(u) - 1)) > tol * scale:
        raise NotUnipotent("matrix is not unipotent upper triangular")
    return u


def unipotent_positive(u, frame: PairFrame | None = None) -> Positivity:
    """Classify a unipotent by the signs of its upper minors.

    ``u`` is taken in frame coordinates; when ``frame`` is given, ``u`` is
    an ambient matrix and is first rewritten in that frame.
    """
    if frame is not None:
        u = frame.to_frame(u)
    u = check_unipotent(u)
    vals = list(_all_minors(u, upper_minor_indices(u.shape[0])))
    if all(v > t and v > 0 for _, v, t in vals):
        return Positivity.POSITIVE
    if all(v >= -t for _, v, t in vals):
        return Positivity.NONNEG_ONLY
    return Positivity.OUTSIDE


def unipotent_transition(frame: PairFrame, f: Flag) -> np.ndarray:
    """The unipotent upper-triangular ``u`` (frame coordinates) with ``u(b) = f``.

    Column ``c`` of ``u`` must lie in ``f^(d-c)``, vanish below row ``c`` and
    have a 1 in row ``c``; each column is one small linear solve.
    """
    d = frame.dim
    F = np.linalg.solve(frame.basis, f.part(d))
    u = np.eye(d)
    for k in range(d):
        c = d - 1 - k
        block = F[c:, : k + 1]
        s = np.linalg.svd(block, compute_uv=False)
        if s[-1] <= TOL_RANK * max(1.0, s[0]):
            raise NotInSchubertCell("flag is not transverse to the first flag of the frame")
        rhs = np.zeros(k + 1)
        rhs[0] = 1.0
        x = np.linalg.solve(block, rhs)
        col = F[:, : k + 1] @ x
        col[c + 1 :] = 0.0
        col[c] = 1.0
        u[:, c] = col
    return u


def sign_gauge(u: np.ndarray) -> np.ndarray | None:
    """Signs ``s`` making the superdiagonal of ``diag(s) u diag(s)`` positive.

    Returns ``None`` when some superdiagonal entry vanishes.
    """
    d = u.shape[0]
    s = np.ones(d)
    for i in range(d - 1):
        x = u[i, i + 1]
        if abs(x) <= TOL_MINOR * max(1.0, float(np.max(np.abs(u)))):
            return None
        s[i + 1] = s[i] * np.sign(x)
    return s


@dataclass(frozen=True)
class PositiveTupleWitness:
    """Flags ``(a, x_n, ..., x_1, b)`` with ``x_p = (u_1 ... u_p)(b)``.

    ``unipotents`` are in the coordinates of ``frame``.
    """

    flags: tuple[Flag, ...]
    frame: PairFrame
    unipotents: tuple[np.ndarray, ...]

    def check(self) -> bool:
        b = self.flags[-1]
        xs = list(reversed(self.flags[1:-1]))
        prod = np.eye(self.frame.dim)
        for u, x in zip(self.unipotents, xs):
            prod = prod @ u
            if b.transformed(self.frame.from_frame(prod)) != x:
                return False
        return True


def positivity_witness(flags: Sequence[Flag]) -> PositiveTupleWitness | None:
    """Witness that ``(a, x_n, ..., x_1, b)`` is positive, or ``None``.

    Positivity is decided quadruple by quadruple: ``(a, x_{i+1}, x_i, b)``
    is positive when the transition to ``x_i`` and the quotient transition
    ``T_i^-1 T_{i+1}`` are both totally positive.  The consistent basis is
    fixed once, by signing the frame so that the first transition has a
    positive superdiagonal; this covers the frame basis, its complementary
    basis and every other signing of the lines.
    """
    flags = tuple(flags)
    if len(flags) < 3:
        raise InputError("a positive tuple needs at least three flags")
    a, b = flags[0], flags[-1]
    if not is_transverse([a, b]):
        raise NotTransverse("endpoints are not transverse")
    xs = list(reversed(flags[1:-1]))
    for x in xs:
        if not (is_transverse([a, x]) and is_transverse([x, b])):
            raise NotTransverse("interior flag not transverse to the endpoints")
    frame = pair_frame(a, b)
    T = [unipotent_transition(frame, x) for x in xs]
    s = sign_gauge(T[0])
    if s is None:
        return None
    frame = frame.resigned(s)
    T = [t * np.outer(s, s) for t in T]
    us = [T[0]]
    for prev, cur in zip(T, T[1:]):
        us.append(np.linalg.solve(prev, cur))
    if any(unipotent_positive(u) is not Positivity.POSITIVE for u in us):
        return None
    return PositiveTupleWitness(flags, frame, tuple(us))


def is_positive_tuple(flags: Sequence[Flag]) -> bool:
    return positivity_witness(flags) is not None


def reduced_word_jacobi(d: int) -> list[tuple[int, int]]:
    """Index pairs of the word (s1)(s2 s1)(s3 s2 s1)... as Jacobi factors."""
    return [(k, k + 1) for m in range(d - 1) for k in range(m, -1, -1)]


def positive_unipotent(d: int, rng: np.random.Generator, low: float = 0.1, high: float = 10.0) -> np.ndarray:
    """Product of Jacobi factors along the fixed reduced word, log-uniform parameters."""
    u = np.eye(d)
    for i, j in reduced_word_jacobi(d):
        t = float(np.exp(rng.uniform(np.log(low), np.log(high))))
        u = u @ jacobi(d, i, j, t)
    return u


def generate_positive_tuple(seed: int, n: int, d: int) -> PositiveTupleWitness:
    """Positive tuple ``(a, x_n, ..., x_1, b)`` with ``a`` standard, ``b`` reversed."""
    if n < 1 or d < 2:
        raise InputError("need n >= 1 and d >= 2")
    rng = np.random.default_rng(seed)
    a, b = standard_flag(d), reversed_standard_flag(d)
    us = [positive_unipotent(d, rng) for _ in range(n)]
    xs = []
    prod = np.eye(d)
    for u in us:
        prod = prod @ u
        xs.append(b.transformed(prod))
    flags = (a, *reversed(xs), b)
    frame = PairFrame(a, b, np.eye(d))
    return PositiveTupleWitness(flags, frame, tuple(us))


def veronese_vector_flag(v, d: int) -> Flag:
    """Osculating flag of the Veronese curve at the point of RP^1 spanned by ``v``.

    The curve is ``phi(p, q)_k = C(d-1, k) p^(d-1-k) q^k``, the one
    intertwined by :func:`hitchin.reps.tau_d`.  The ``i``-th column is the
    ``i``-th derivative along the line, i.e. the polarization
    ``phi(v, ..., v, w, ..., w)`` with ``i`` copies of a complement ``w``.
    """
    from math import comb

    p, q = (float(x) for x in v)
    w = (-q, p)
    n = d - 1
    cols = []
    for i in range(d):
        # coefficients of (p + s w0)^(n-k) (q + s w1)^k at s^i, up to i!
        col = np.empty(d)
        for k in range(d):
            left = np.array([comb(n - k, r) * p ** (n - k - r) * w[0] ** r for r in range(n - k + 1)])
            right = np.array([comb(k, r) * q ** (k - r) * w[1] ** r for r in range(k + 1)])
            poly = np.convolve(left, right)
            col[k] = comb(n, k) * (poly[i] if i < len(poly) else 0.0)
        cols.append(col)
    return Flag(np.column_stack(cols))


def veronese_flag(x: float, d: int) -> Flag:
    """Veronese flag at the point ``x`` of RP^1, the line of ``(1, x)``.

    ``x = 0`` gives the standard flag and ``x = inf`` the reversed one.
    """
    if np.isinf(x):
        return reversed_standard_flag(d)
    return veronese_vector_flag((1.0, x), d)


def rearranged_flag(frame: PairFrame, perm: Sequence[int], side: int) -> Flag:
    """Flag built from the frame lines reordered by ``perm``.

    Side 0 spans ``L_perm[0], L_perm[1], ...`` in that order; side 1 spans
    ``L_perm[d-1], L_perm[d-2], ...``.
    """
    perm = _check_perm(perm)
    if side not in (0, 1):
        raise InputError("side must be 0 or 1")
    order = list(perm) if side == 0 else list(reversed(perm))
    return Flag(frame.basis[:, order])


def _check_perm(perm: Sequence[int]) -> tuple[int, ...]:
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(len(perm))):
        raise InputError(f"not a permutation of 0..{len(perm) - 1}: {perm}")
    return perm


def compose(p: Sequence[int], q: Sequence[int]) -> tuple[int, ...]:
    """``p ∘ q``: apply ``q`` first."""
    return tuple(p[x] for x in q)


def inverse_perm(p: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(p)
    for i, x in enumerate(p):
        inv[x] = i
    return tuple(inv)


def transposition(d: int, i: int, j: int) -> tuple[int, ...]:
    t = list(range(d))
    t[i], t[j] = j, i
    return tuple(t)


def factor_permutation(perm: Sequence[int]) -> list[tuple[int, int]]:
    """Transpositions ``(i_l, j_l)``, ``i_l < j_l``, listed in application order.

    Their composition (first listed applied first) equals ``perm`` and
    ``Q^-1(i_l) < Q^-1(j_l)`` for the product ``Q`` of the earlier ones.
    Built by peeling off the element sent to the smallest open slot and
    recursing on the rest.
    """
    P = _check_perm(perm)
    d = len(P)
    out: list[tuple[int, int]] = []
    for m in range(d):
        r = inverse_perm(P)[m]
        steps = [(m, k) for k in range(m + 1, r + 1)]
        P1 = tuple(range(d))
        for i, j in steps:
            P1 = compose(transposition(d, i, j), P1)
        P = compose(P, inverse_perm(P1))
        out.extend(steps)
    return out


def check_factorization(perm: Sequence[int], factors: Sequence[tuple[int, int]]) -> bool:
    """Product and nesting conditions for a factorization."""
    P = _check_perm(perm)
    d = len(P)
    Q = tuple(range(d))
    for i, j in factors:
        if not i < j:
            return False
        Qi = inverse_perm(Q)
        if not Qi[i] < Qi[j]:
            return False
        Q = compose(transposition(d, i, j), Q)
    return Q == P


def cross_matrix(frame_ab: PairFrame, frame_xy: PairFrame) -> np.ndarray:
    """Pairings ``<e^i(a, b) | e_j(x, y)>``."""
    if frame_ab.dim != frame_xy.dim:
        raise InputError("frames of different dimension")
    return np.linalg.solve(frame_ab.basis, frame_xy.basis)


def sign_normalize_tp(M) -> np.ndarray | None:
    """Flip row and column signs so every initial minor is positive.

    The signs are forced by the first row and column (up to an overall
    sign that changes no minor); ``None`` if the result still has a
    non-positive initial minor.
    """
    M = np.asarray(M, dtype=float)
    for (I, J), v, t in initial_minors(M):
        if abs(v) <= t or v == 0:
            raise ZeroMinor(f"initial minor {I}x{J} vanishes")
    col = np.sign(M[0, :])
    row = np.sign(M[:, 0]) * col[0]
    N = row[:, None] * M * col[None, :]
    if not initial_minors_positive(N):
        return None
    return N


def lines_in_general_position(frame1: PairFrame, frame2: PairFrame) -> float:
    """Smallest singular value over all d-subsets of the 2d unit line vectors."""
    d = frame1.dim
    vecs = np.hstack([frame1.basis, frame2.basis])
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    worst = np.inf
    for S in itertools.combinations(range(2 * d), d):
        s = np.linalg.svd(vecs[:, S], compute_uv=False)
        worst = min(worst, float(s[-1]))
    return worst
