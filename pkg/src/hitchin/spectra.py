"""Spectral invariants of word images.

Eigen-projector indices in :func:`correlation` are 1-based with ``0``
standing for the full image ``rho(w)``; everywhere else indices are 0-based.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import mpmath
import numpy as np

from . import numlin
from .errors import (
    DegenerateCoefficients,
    DegeneratePair,
    InputError,
    ModulusCollision,
    NoDominantEigenvalue,
    NotRealSplit,
    UnderflowBudget,
)
from .reps import Representation, exterior_rep
from .words import ConjClass, Word, enumerate_classes, reduce

EPS = np.finfo(float).eps
TOL_COEFF = 1e-12
TOL_RANK_ONE = 1e-10
MIN_LENGTH = 1e-6
MP_GUARD_DIGITS = 25


def _word(rep: Representation, w) -> Word:
    if isinstance(w, ConjClass):
        w = w.representative
    return reduce(w, rep.rank).with_rank(rep.rank)


def split(rep: Representation, w) -> numlin.EigenSplit:
    """Memoized eigen-splitting of a word image.

    Eigenvectors come from the word image, with the lower half of the
    spectrum read off the inverse word.  Eigenvalues are ratios of top
    eigenvalues of the exterior powers ``E^k(rho)(w)``, evaluated letter by
    letter; a top eigenvalue keeps full relative precision, so middle
    eigenvalues of long words are not swamped by the spectral radius.
    """
    w = _word(rep, w)
    key = ("split", w.letters)
    es = rep._cache.get(key)
    if es is None:
        es = numlin.eig_split_with_inverse(rep(w), rep(w.inverse()))
        values = _exterior_values(rep, w)
        if values is not None:
            es = numlin.EigenSplit(values, es.vectors, es.duals, es.gap)
        with rep._lock:
            rep._cache[key] = es
    return es


def _exterior_values(rep: Representation, w: Word) -> np.ndarray | None:
    d = rep.dim
    if d < 3 or not w.letters:
        return None
    tops = [1.0]
    for k in range(1, d):
        tops.append(numlin.top_eigenvalue(exterior_rep(rep, k)(w)))
    # the top exterior power is the determinant, a product over the letters
    dets = [np.linalg.det(M) for M in rep.images]
    tops.append(math.prod(dets[abs(x) - 1] ** np.sign(x) for x in w.letters))
    return np.array([tops[k] / tops[k - 1] for k in range(1, d + 1)])


def positive_lift(values: np.ndarray) -> tuple[np.ndarray, bool]:
    """Flip an all-negative spectrum; report whether the result is all positive."""
    values = np.asarray(values, dtype=float)
    if np.all(values < 0) and len(values) % 2 == 0:
        values = -values
    return values, bool(np.all(values > 0))


@dataclass(frozen=True)
class SpectrumReport:
    word: str
    eigenvalues: np.ndarray
    length: float
    hilbert: float
    abs_trace: float
    positive: bool

    def row(self) -> list:
        return [self.word, self.length, self.hilbert, self.abs_trace, *self.eigenvalues]


def spectrum_of_matrix(M, word: str = "") -> SpectrumReport:
    es = numlin.eig_split(M)
    values, positive = positive_lift(es.values)
    mods = np.abs(values)
    return SpectrumReport(
        word=word,
        eigenvalues=values,
        length=float(np.log(mods[0])),
        hilbert=float(np.log(mods[0]) - np.log(mods[-1])),
        abs_trace=float(abs(np.sum(values))),
        positive=positive,
    )


def spectrum(rep: Representation, word) -> SpectrumReport:
    w = _word(rep, word)
    es = split(rep, w)
    values, positive = positive_lift(es.values)
    mods = np.abs(values)
    return SpectrumReport(
        word=str(w),
        eigenvalues=values,
        length=float(np.log(mods[0])),
        hilbert=float(np.log(mods[0]) - np.log(mods[-1])),
        abs_trace=float(abs(np.sum(values))),
        positive=positive,
    )


def length(rep: Representation, word) -> float:
    """``log`` of the spectral radius; no real-split check."""
    w = np.linalg.eigvals(rep(_word(rep, word)))
    return float(np.log(np.max(np.abs(w))))


def is_sign_ambiguous(indices: Sequence[int]) -> bool:
    """A full image in the product makes the value depend on the chosen lift."""
    return any(i == 0 for i in indices)


def correlation(rep: Representation, words: Sequence, indices: Sequence[int]) -> float:
    """``Tr`` of the ordered product of projectors ``p_i(rho(w))`` (``p_0 = rho(w)``).

    With at least one projector the trace is evaluated as a cyclic chain of
    brackets ``<e^i | ... | e_j>``, which avoids forming products of large
    rank-one matrices.
    """
    if len(words) != len(indices):
        raise InputError("words and indices differ in length")
    d = rep.dim
    for i in indices:
        if not 0 <= i <= d:
            raise InputError(f"projector index {i} outside 0..{d}")
    factors = list(zip(words, indices))
    first = next((n for n, (_, i) in enumerate(factors) if i > 0), None)
    if first is None:
        prod = np.eye(d)
        for w, _ in factors:
            prod = prod @ rep(_word(rep, w))
        return float(np.trace(prod))
    # rotate so the chain starts and ends at a projector p = e_i e^i
    factors = factors[first:] + factors[:first]
    es = split(rep, factors[0][0])
    i0 = factors[0][1] - 1
    start, row = es.vectors[:, i0], es.duals[i0]
    value = 1.0
    for w, i in factors[1:]:
        if i == 0:
            row = row @ rep(_word(rep, w))
        else:
            e = split(rep, w)
            value *= float(row @ e.vectors[:, i - 1])
            row = e.duals[i - 1]
    return value * float(row @ start)


def rank_one_reduce(P, A, Q, tol: float = TOL_RANK_ONE) -> float:
    """The scalar ``s`` with ``P A Q = s P Q`` for rank-one projectors P, Q."""
    P, A, Q = (np.asarray(x, dtype=float) for x in (P, A, Q))
    PQ = P @ Q
    t = np.trace(PQ)
    if abs(t) <= tol * np.linalg.norm(P) * np.linalg.norm(Q):
        raise DegeneratePair(f"Tr(PQ) = {t!r} vanishes")
    PAQ = P @ A @ Q
    s = float(np.trace(PAQ) / t)
    if np.linalg.norm(PAQ - s * PQ) > tol * max(np.linalg.norm(PAQ), 1.0) * 1e3:
        raise InputError("P and Q are not rank-one projectors")
    return s


# --- asymptotic expansion of lambda_1(A^n B) ------------------------------------


@dataclass(frozen=True)
class ExpansionFit:
    b11_est: float
    c2_est: float
    z_est: float
    n_range: tuple[int, int]
    ns: tuple[int, ...]
    r: tuple[float, ...]
    residuals: tuple[float, ...]
    b11: float
    c2: float
    z: float
    precision: str

    def rel_errors(self) -> dict:
        return {
            "b11": abs(self.b11_est - self.b11) / abs(self.b11),
            "z": abs(self.z_est - self.z) / abs(self.z),
            "c2": abs(self.c2_est - self.c2) / abs(self.c2) if self.c2 else abs(self.c2_est),
        }


def frame_coefficients(A, B) -> tuple[numlin.EigenSplit, np.ndarray]:
    es = numlin.eig_split(A)
    return es, es.coefficients(B)


def _check_coefficients(Bf) -> None:
    scale = float(np.max(np.abs(Bf)))
    for name, v in (("b11", Bf[0, 0]), ("b12", Bf[0, 1]), ("b21", Bf[1, 0])):
        if abs(v) <= TOL_COEFF * scale:
            raise DegenerateCoefficients(f"frame coefficient {name} vanishes")


def _radius_sequence_double(A, B, lam1: float, ns: Sequence[int]) -> list[float]:
    M = np.asarray(A) / lam1
    out = []
    for n in ns:
        P = np.linalg.matrix_power(M, n)
        out.append(numlin.top_eigenvalue(P @ B))
    return out


def _mp_top(M: mpmath.matrix):
    w = numlin.mp_eigenvalues(M)
    top = w[0]
    if abs(mpmath.im(top)) > abs(top) * mpmath.mpf(10) ** (-20):
        raise NotRealSplit("top eigenvalue is not real")
    return mpmath.re(top)


def _radius_sequence_mp(A, B, ns: Sequence[int], dps: int) -> list:
    with mpmath.workdps(dps):
        Am, Bm = numlin.to_mp(A), numlin.to_mp(B)
        lam1 = _mp_top(Am)
        M = Am / lam1
        out = []
        for n in ns:
            out.append(_mp_top((M**n) * Bm))
    return out


def radius_sequence(A, B, ns: Sequence[int], precision: str = "double", dps: int | None = None) -> list:
    """``r_n = lambda_1((A / lambda_1)^n B)``; mpf values in extended precision."""
    if precision == "extended":
        return _radius_sequence_mp(A, B, ns, dps or numlin.EXTENDED_DPS)
    lam1 = numlin.top_eigenvalue(A)
    return _radius_sequence_double(A, B, lam1, ns)


def _aitken(r0, r1, r2):
    d1, d2 = r1 - r0, r2 - r1
    den = d2 - d1
    if den == 0:
        return r2
    return r2 - d2 * d2 / den


def expansion_estimate_matrices(A, B, n_range=(8, 40), precision: str = "double") -> ExpansionFit:
    n0, n1 = (int(x) for x in n_range)
    if n0 < 1 or n1 < n0 + 3:
        raise InputError("n_range needs at least four values starting at 1 or more")
    es, Bf = frame_coefficients(A, B)
    if not es.is_proximal(2):
        raise ModulusCollision("first word image is not 2-proximal")
    _check_coefficients(Bf)
    b11 = float(Bf[0, 0])
    c2 = float(Bf[0, 1] * Bf[1, 0] / Bf[0, 0])
    z = float(es.values[1] / es.values[0])
    ns = list(range(n0, n1 + 1))
    floor_abs = abs(z) ** n1
    if precision == "double":
        if floor_abs < 1e3 * EPS:
            raise UnderflowBudget(
                f"(lambda2/lambda1)^{n1} = {floor_abs:.3g} is below double resolution; use extended precision"
            )
        dps = 16
        r = _radius_sequence_double(A, B, float(es.values[0]), ns)
        ctx_r = [mpmath.mpf(x) for x in r]
    elif precision == "extended":
        dps = int(math.ceil(-math.log10(floor_abs))) + MP_GUARD_DIGITS if floor_abs > 0 else numlin.EXTENDED_DPS
        dps = max(dps, numlin.EXTENDED_DPS)
        ctx_r = _radius_sequence_mp(A, B, ns, dps)
    else:
        raise InputError(f"unknown precision {precision!r}")

    with mpmath.workdps(dps):
        b11_est = _aitken(*ctx_r[-3:])
        e = [x - b11_est for x in ctx_r]
        resolved = mpmath.mpf(10) ** (-(dps - 8)) * max(1, abs(b11_est))
        usable = [k for k in range(len(ns) - 1) if abs(e[k]) > resolved and abs(e[k + 1]) > resolved]
        if not usable:
            raise UnderflowBudget("no resolved residuals in the requested range")
        # late ratios are least contaminated by faster-decaying terms
        top = usable[len(usable) // 2 :]
        ratios = sorted(e[k + 1] / e[k] for k in top)
        z_est = ratios[len(ratios) // 2]
        k = top[0]
        c2_est = e[k] / z_est ** ns[k]
        fit = [b11_est + c2_est * z_est**n for n in ns]
        residuals = tuple(float(abs(x - f)) for x, f in zip(ctx_r, fit))
        return ExpansionFit(
            b11_est=float(b11_est),
            c2_est=float(c2_est),
            z_est=float(z_est),
            n_range=(n0, n1),
            ns=tuple(ns),
            r=tuple(float(x) for x in ctx_r),
            residuals=residuals,
            b11=b11,
            c2=c2,
            z=z,
            precision=precision,
        )


def expansion_estimate(rep: Representation, alpha, beta, n_range=(8, 40), precision: str = "double") -> ExpansionFit:
    return expansion_estimate_matrices(rep(_word(rep, alpha)), rep(_word(rep, beta)), n_range, precision)


def spectral_radius_fn(B_frame, u: Sequence[float]) -> float:
    """Top eigenvalue of ``diag(1, u_1, ..., u_{d-1}) @ B_frame``."""
    Bf = np.asarray(B_frame, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape != (Bf.shape[0] - 1,):
        raise InputError("u must have d - 1 entries")
    try:
        return numlin.top_eigenvalue(np.diag(np.concatenate([[1.0], u])) @ Bf)
    except (NotRealSplit, ModulusCollision) as exc:
        raise NoDominantEigenvalue(str(exc)) from None


# --- Hilbert-length expansion in dimension 3 -------------------------------------


@dataclass(frozen=True)
class HilbertSide:
    leading: float
    coeff_z: float
    coeff_w: float
    z: float
    w: float
    b11: float
    b12b21: float
    sequence: tuple[float, ...]

    @property
    def positive_coefficients(self) -> bool:
        return self.b11 > 0 and self.b12b21 > 0


def _hilbert_side(rep: Representation, alpha, beta, ns, precision) -> HilbertSide:
    if rep.dim != 3:
        raise InputError("the Hilbert expansion report needs d = 3")
    A, B = rep(_word(rep, alpha)), rep(_word(rep, beta))
    # positive lift of B so the frame coefficients have canonical sign
    if np.all(np.real(np.linalg.eigvals(B)) < 0):
        B = -B
    es, Bf = frame_coefficients(A, B)
    _check_coefficients(Bf)
    As, Bs = np.linalg.inv(A).T, np.linalg.inv(B).T
    ess, Df = frame_coefficients(As, Bs)
    _check_coefficients(Df)
    lam = es.values
    z = float(lam[1] / lam[0])
    w = float(lam[2] / lam[1])
    b11, d11 = float(Bf[0, 0]), float(Df[0, 0])
    bb = float(Bf[0, 1] * Bf[1, 0])
    dd = float(Df[0, 1] * Df[1, 0])
    r = radius_sequence(A, B, ns, precision)
    rs = radius_sequence(As, Bs, ns, precision)
    seq = tuple(float(x * y) for x, y in zip(r, rs))
    return HilbertSide(
        leading=b11 * d11,
        coeff_z=d11 * bb / b11,
        coeff_w=b11 * dd / d11,
        z=z,
        w=w,
        b11=b11,
        b12b21=bb,
        sequence=seq,
    )


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


@dataclass(frozen=True)
class HilbertReport:
    rho: HilbertSide
    sigma: HilbertSide
    leading_delta: float
    rates: str
    rate_delta: float
    coeff_delta: float
    sequence_delta: float
    positive_coefficients: bool

    def metrics(self) -> dict:
        return {
            "leading_rho": self.rho.leading,
            "leading_sigma": self.sigma.leading,
            "leading_delta": self.leading_delta,
            "rates": self.rates,
            "rate_delta": self.rate_delta,
            "coeff_delta": self.coeff_delta,
            "sequence_delta": self.sequence_delta,
            "rho_rates": [self.rho.z, self.rho.w],
            "sigma_rates": [self.sigma.z, self.sigma.w],
            "b11": self.rho.b11,
            "b12b21": self.rho.b12b21,
            "positive_coefficients": self.positive_coefficients,
        }


def hilbert_expansion_d3(rho: Representation, sigma: Representation, alpha, beta, n_range=(1, 12),
                         precision: str = "double", tol: float = 1e-10) -> HilbertReport:
    """Compare the normalized Hilbert-ratio expansions of two d = 3 representations.

    The sequence ``(lambda_1(n) / lambda_3(n)) (lambda_3 / lambda_1)^n`` is
    the product of the top-eigenvalue ratios for ``rho`` and its
    contragredient.  Both decay rates ``z = lambda_2 / lambda_1`` and
    ``w = lambda_3 / lambda_2`` are reported; ``rates`` says whether they
    match ``sigma``'s in the same order, swapped, both (when ``z = w``) or
    not at all.
    """
    ns = list(range(int(n_range[0]), int(n_range[1]) + 1))
    R = _hilbert_side(rho, alpha, beta, ns, precision)
    S = _hilbert_side(sigma, alpha, beta, ns, precision)
    same = max(_rel(R.z, S.z), _rel(R.w, S.w))
    swapped = max(_rel(R.z, S.w), _rel(R.w, S.z))
    if same <= tol and swapped <= tol:
        rates, rate_delta = "symmetric", same
        coeff_delta = min(
            max(_rel(R.coeff_z, S.coeff_z), _rel(R.coeff_w, S.coeff_w)),
            max(_rel(R.coeff_z, S.coeff_w), _rel(R.coeff_w, S.coeff_z)),
        )
    elif same <= tol:
        rates, rate_delta = "same", same
        coeff_delta = max(_rel(R.coeff_z, S.coeff_z), _rel(R.coeff_w, S.coeff_w))
    elif swapped <= tol:
        rates, rate_delta = "swapped", swapped
        coeff_delta = max(_rel(R.coeff_z, S.coeff_w), _rel(R.coeff_w, S.coeff_z))
    else:
        rates, rate_delta = "mismatch", min(same, swapped)
        coeff_delta = max(_rel(R.coeff_z, S.coeff_z), _rel(R.coeff_w, S.coeff_w))
    seq_delta = max(_rel(a, b) for a, b in zip(R.sequence, S.sequence))
    return HilbertReport(
        rho=R,
        sigma=S,
        leading_delta=_rel(R.leading, S.leading),
        rates=rates,
        rate_delta=rate_delta,
        coeff_delta=coeff_delta,
        sequence_delta=seq_delta,
        positive_coefficients=R.positive_coefficients,
    )


# --- resonances ---------------------------------------------------------------


def resonance_scan(eigenvalues: Sequence[float], max_degree: int, tol: float = 1e-9) -> list[tuple[tuple[int, ...], int]]:
    """Integer relations ``prod (l_{i+1}/l_1)^{m_i} = l_{j+1}/l_1``.

    Returns ``(m, j)`` pairs with ``m`` non-negative, ``1 <= |m| <= max_degree``
    and ``j`` 1-based among the ratios; the tautologies ``m = e_j`` are left out.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if np.any(lam <= 0) or np.any(np.diff(lam) >= 0):
        raise InputError("eigenvalues must be positive and strictly descending")
    logs = np.log(lam[1:] / lam[0])
    n = len(logs)
    found = []
    for total in range(1, max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(n), total):
            m = tuple(combo.count(i) for i in range(n))
            s = float(np.dot(m, logs))
            for j in range(n):
                if total == 1 and m[j] == 1:
                    continue
                if abs(s - logs[j]) <= tol:
                    found.append((m, j + 1))
    return found


# --- growth-rate estimators -----------------------------------------------------


def class_lengths(rep: Representation, classes: Sequence[ConjClass], workers: int = 1) -> list[float]:
    def one(c):
        return length(rep, c)

    if workers <= 1:
        return [one(c) for c in classes]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, classes, chunksize=256))


def _length_table(rep: Representation, max_len: int, workers: int):
    classes = enumerate_classes(rep.rank, max_len)
    Ls = class_lengths(rep, classes, workers)
    return classes, Ls


def _coverage_check(classes, Ls, T: float, max_len: int) -> None:
    shell = [L for c, L in zip(classes, Ls) if len(c.representative) == max_len and L > MIN_LENGTH]
    if shell and min(shell) <= T:
        warnings.warn(
            f"classes of word length {max_len} still have L <= T = {T}; the count may be incomplete",
            RuntimeWarning,
            stacklevel=3,
        )


def ball(rep: Representation, T: float, max_len: int = 10, workers: int = 1):
    """Classes with ``0 < L <= T`` among words of length at most ``max_len``.

    Classes with (numerically) zero length, such as parabolic boundary
    words, are left out.
    """
    classes, Ls = _length_table(rep, max_len, workers)
    _coverage_check(classes, Ls, T, max_len)
    return [(c, L) for c, L in zip(classes, Ls) if MIN_LENGTH < L <= T]


def entropy_estimate(rep: Representation, T: float, max_len: int = 10, workers: int = 1) -> float:
    """``log(#R_T) / T`` at finite T."""
    if T <= 0:
        raise InputError("T must be positive")
    n = len(ball(rep, T, max_len, workers))
    return math.log(n) / T if n else 0.0


def intersection_estimate(rho: Representation, sigma: Representation, T: float, max_len: int = 10,
                          workers: int = 1) -> float:
    """Average of ``L(sigma) / L(rho)`` over ``R_T(rho)``."""
    if rho.rank != sigma.rank:
        raise InputError("representations of different rank")
    members = ball(rho, T, max_len, workers)
    if not members:
        raise InputError(f"R_T is empty at T = {T}")
    Ls = class_lengths(sigma, [c for c, _ in members], workers)
    return math.fsum(ls / lr for ls, (_, lr) in zip(Ls, members)) / len(members)


def is_self_dual_spectrum(rep: Representation, words: Iterable, tol: float = 1e-9) -> bool:
    """``L^H = 2 L`` on every word, the spectral shadow of self-duality."""
    for w in words:
        s = spectrum(rep, w)
        if abs(s.hilbert - 2 * s.length) > tol * max(1.0, s.hilbert):
            return False
    return True


# --- tabular output ------------------------------------------------------------


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def spectrum_csv(reports: Sequence[SpectrumReport]) -> str:
    d = max((len(r.eigenvalues) for r in reports), default=0)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["word", "L", "LH", "abs_trace", *[f"lambda{i + 1}" for i in range(d)]])
    for r in reports:
        wr.writerow([fmt(x) for x in r.row()])
    return buf.getvalue()


def expansion_csv(fit: ExpansionFit) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["n", "r_n", "residual"])
    for n, r, e in zip(fit.ns, fit.r, fit.residuals):
        wr.writerow([n, fmt(r), fmt(e)])
    return buf.getvalue()
