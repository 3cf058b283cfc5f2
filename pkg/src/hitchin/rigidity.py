"""Reconstruction from correlation invariants and rigidity experiments.

Ratio tensors are stored 0-based: ``R[i, j, k]`` pairs the i-th eigenline
of the first word with the j-th of the second and k-th of the third.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import subspace_angles

from . import numlin
from .errors import DegenerateConfiguration, InputError, LostLoxodromy, NoConjugator, SingularAssembly
from .reps import Representation
from .spectra import _word, positive_lift, split

TOL_PAIRING = 1e-12
TOL_CONJ = 1e-8
TOL_ASSEMBLY = 1e-12
FD_STEP = 1e-5
GAP_RATIO = 1e3


@dataclass(frozen=True)
class TripleInvariants:
    """Eigenvalues of three word images and the ratio tensor ``T_ijk / T_jk``."""

    lam_a: np.ndarray
    lam_b: np.ndarray
    lam_d: np.ndarray
    R: np.ndarray
    crosscheck: float

    @property
    def dim(self) -> int:
        return len(self.lam_a)

    def tampered(self, index: tuple[int, int, int], factor: float) -> "TripleInvariants":
        R = self.R.copy()
        R[index] *= factor
        return TripleInvariants(self.lam_a, self.lam_b, self.lam_d, R, self.crosscheck)


def _pairings(esA, esB, esD):
    ab = esA.duals @ esB.vectors  # <a^i | b_j>
    da = esD.duals @ esA.vectors  # <d^k | a_i>
    db = esD.duals @ esB.vectors  # <d^k | b_j>
    bd = esB.duals @ esD.vectors  # <b^j | d_k>
    return ab, da, db, bd


def _relative(P, vecs, duals):
    scale = np.outer(np.linalg.norm(duals, axis=1), np.linalg.norm(vecs, axis=0))
    return np.abs(P) / scale


def triple_invariants_from_matrices(A, B, D, strict: bool = True) -> TripleInvariants:
    """Ratio tensor of a matrix triple, by brackets and cross-checked by traces.

    With ``strict=False`` vanishing pairings are allowed and undefined
    entries come out as ``nan``.
    """
    esA, esB, esD = (numlin.eig_split(M) for M in (A, B, D))
    ab, da, db, bd = _pairings(esA, esB, esD)
    if strict:
        checks = (
            ("<a^i|b_j>", _relative(ab, esB.vectors, esA.duals)),
            ("<d^k|a_i>", _relative(da, esA.vectors, esD.duals)),
            ("<d^k|b_j>", _relative(db, esB.vectors, esD.duals)),
            ("<b^j|d_k>", _relative(bd, esD.vectors, esB.duals)),
        )
        for name, rel in checks:
            if np.min(rel) <= TOL_PAIRING:
                raise DegenerateConfiguration(f"pairing {name} vanishes (min relative size {np.min(rel):.3g})")
    with np.errstate(divide="ignore", invalid="ignore"):
        # R[i, j, k] = <a^i|b_j> <d^k|a_i> / <d^k|b_j>
        R = ab[:, :, None] * da.T[:, None, :] / db.T[None, :, :]
        pa, pb, pd = esA.projectors(), esB.projectors(), esD.projectors()
        d = len(pa)
        T3 = np.array([[[np.trace(pa[i] @ pb[j] @ pd[k]) for k in range(d)] for j in range(d)] for i in range(d)])
        T2 = np.array([[np.trace(pb[j] @ pd[k]) for k in range(d)] for j in range(d)])
        R2 = T3 / T2[None, :, :]
        finite = np.isfinite(R) & np.isfinite(R2)
        diff = np.abs(R - R2)[finite] / np.maximum(np.abs(R[finite]), 1e-300)
    if not strict:
        R = np.where(np.abs(db.T[None, :, :]) <= TOL_PAIRING, np.nan, R)
    cross = float(np.max(diff)) if diff.size else 0.0
    return TripleInvariants(
        np.asarray(esA.values, dtype=float),
        np.asarray(esB.values, dtype=float),
        np.asarray(esD.values, dtype=float),
        R,
        cross,
    )


def triple_invariants(rep: Representation, alpha, beta, delta, strict: bool = True) -> TripleInvariants:
    return triple_invariants_from_matrices(
        rep(_word(rep, alpha)), rep(_word(rep, beta)), rep(_word(rep, delta)), strict
    )


def _check_cond(M, what: str):
    s = np.linalg.svd(M, compute_uv=False)
    if not np.all(np.isfinite(s)) or s[-1] <= TOL_ASSEMBLY * s[0]:
        raise SingularAssembly(f"{what} is singular")


def reconstruct_triple(inv: TripleInvariants) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Matrices ``(A, B, D)`` in the normal form with ``a_i = e_i`` and ``b_0 = (1, ..., 1)``.

    The covector ``d^k`` is normalized by ``<d^k|b_0> = 1``, which makes
    ``d^k_i = R[i, 0, k]``.  Each ``b_j`` is scaled so ``<a^0|b_j> = 1``;
    then ``<d^k|b_j> = d^k_0 / R[0, j, k]`` pins ``b_j`` down.
    """
    R = inv.R
    if not np.all(np.isfinite(R)) or np.any(R == 0):
        raise SingularAssembly("ratio tensor has zero or undefined entries")
    A = np.diag(inv.lam_a)
    dual_D = R[:, 0, :].T.copy()
    _check_cond(dual_D, "dual basis of the third word")
    Dvec = np.linalg.inv(dual_D)
    cols = []
    for j in range(inv.dim):
        v = dual_D[:, 0] / R[0, j, :]
        cols.append(Dvec @ v)
    Bvec = np.column_stack(cols)
    _check_cond(Bvec, "eigenbasis of the second word")
    B = Bvec @ np.diag(inv.lam_b) @ np.linalg.inv(Bvec)
    D = Dvec @ np.diag(inv.lam_d) @ dual_D
    return A, B, D


def _residual(C, As, Bs) -> tuple[float, int]:
    Ci = np.linalg.inv(C)
    worst, where = 0.0, 0
    for k, (X, Y) in enumerate(zip(As, Bs)):
        r = np.linalg.norm(C @ Y @ Ci - X) / np.linalg.norm(X)
        if r > worst:
            worst, where = float(r), k
    return worst, where


def find_conjugator_matrices(As: Sequence, Bs: Sequence, tol: float = TOL_CONJ, names: Sequence[str] | None = None):
    """``C`` with ``C Bs[k] C^-1 = As[k]`` for all k, normalized to ``|det C| = 1``.

    Built from the eigenframes of the first pair and the top eigenline of the
    second pair; raises :class:`NoConjugator` naming the worst element.
    """
    if len(As) != len(Bs) or len(As) < 2:
        raise NoConjugator("need at least two matching elements")
    names = list(names) if names is not None else [str(k) for k in range(len(As))]
    try:
        esA, esB = numlin.eig_split(As[0]), numlin.eig_split(Bs[0])
        ya = numlin.eig_split(As[1]).vectors[:, 0]
        yb = numlin.eig_split(Bs[1]).vectors[:, 0]
    except (numlin.NotRealSplit, numlin.ModulusCollision) as exc:
        raise NoConjugator(f"word images are not purely loxodromic: {exc}", names[0], np.inf) from None
    x = esA.duals @ ya
    y = esB.duals @ yb
    if np.any(np.abs(y) <= TOL_PAIRING * np.linalg.norm(y)) or np.any(np.abs(x) <= TOL_PAIRING * np.linalg.norm(x)):
        raise NoConjugator("second element shares an eigenline with the first", names[1], np.inf)
    C = esA.vectors @ np.diag(x / y) @ esB.duals
    d = C.shape[0]
    C = C / abs(np.linalg.det(C)) ** (1.0 / d)
    res, k = _residual(C, As, Bs)
    if not res <= tol:
        raise NoConjugator(f"residual {res:.3g} on {names[k]}", names[k], res)
    return C, res


def find_conjugator(repA: Representation, repB: Representation, words: Sequence, tol: float = TOL_CONJ):
    ws = [_word(repA, w) for w in words]
    return find_conjugator_matrices([repA(w) for w in ws], [repB(w) for w in ws], tol, [str(w) for w in ws])


@dataclass(frozen=True)
class RoundTrip:
    conjugator_residual: float
    invariant_residual: float

    @property
    def residual(self) -> float:
        return max(self.conjugator_residual, self.invariant_residual)


def round_trip(source: Sequence, inv: TripleInvariants) -> RoundTrip:
    """Reconstruct from ``inv`` and measure how far the result is from ``source``."""
    rec = reconstruct_triple(inv)
    try:
        _, res = find_conjugator_matrices(list(source), list(rec), tol=np.inf)
    except NoConjugator as exc:
        res = exc.residual
    back = triple_invariants_from_matrices(*rec)
    inv_res = float(np.max(np.abs(back.R - inv.R) / np.abs(inv.R)))
    lam_res = max(
        float(np.max(np.abs(x - y) / np.abs(y)))
        for x, y in ((back.lam_a, inv.lam_a), (back.lam_b, inv.lam_b), (back.lam_d, inv.lam_d))
    )
    return RoundTrip(float(res), max(inv_res, lam_res))


# --- spectrum comparison ------------------------------------------------------

MODES = ("length", "hilbert", "trace", "eigenvalue")


def _spectral_values(rep: Representation, w, mode: str):
    es = split(rep, w)
    values, _ = positive_lift(es.values)
    mods = np.abs(values)
    if mode == "length":
        return np.log(mods[0])
    if mode == "hilbert":
        return np.log(mods[0]) - np.log(mods[-1])
    if mode == "trace":
        return abs(np.sum(values))
    return values


def compare_spectra(repA: Representation, repB: Representation, classes: Sequence, mode: str = "length") -> dict:
    """Per-class discrepancies; absolute for lengths, relative for traces and eigenvalues."""
    if mode not in MODES:
        raise InputError(f"mode must be one of {MODES}")
    if (repA.rank, repA.dim) != (repB.rank, repB.dim):
        raise InputError("representations differ in rank or dimension")
    rows = []
    for c in classes:
        w = _word(repA, c)
        a, b = _spectral_values(repA, w, mode), _spectral_values(repB, w, mode)
        if mode in ("trace", "eigenvalue"):
            delta = float(np.max(np.abs(np.asarray(a) - b) / np.abs(a)))
        else:
            delta = float(abs(a - b))
        rows.append((str(w), delta))
    return {"mode": mode, "deltas": rows, "max_delta": max((r[1] for r in rows), default=0.0)}


# --- finite-difference Jacobians -----------------------------------------------


@dataclass(frozen=True)
class JacobianReport:
    mode: str
    classes: tuple[str, ...]
    matrix: np.ndarray
    singular_values: np.ndarray
    rank: int
    gap_ratio: float

    @property
    def n_params(self) -> int:
        return self.matrix.shape[1]

    def kernel(self) -> np.ndarray:
        _, _, vt = np.linalg.svd(self.matrix)
        return vt[self.rank :].T


def numeric_rank(s: np.ndarray, gap: float = GAP_RATIO) -> tuple[int, float]:
    """Rank at the largest drop between consecutive singular values.

    Returns ``(rank, ratio)``; without a drop of at least ``gap`` the matrix
    counts as full rank (or zero if every singular value is tiny).
    """
    s = np.asarray(s, dtype=float)
    if s.size == 0 or s[0] < 1e-10:
        return 0, np.inf
    floor = s[0] * np.finfo(float).eps
    ratios = s[:-1] / np.maximum(s[1:], floor)
    if ratios.size == 0:
        return s.size, np.inf
    k = int(np.argmax(ratios))
    if ratios[k] >= gap:
        return k + 1, float(ratios[k])
    return s.size, float(ratios[k])


def _class_values(rep: Representation, words, mode: str) -> np.ndarray:
    out = np.empty(len(words))
    for n, w in enumerate(words):
        M = rep(w)
        if mode == "det":
            out[n] = np.linalg.det(M)
        elif mode == "trace":
            out[n] = np.trace(M)
        else:
            try:
                numlin.eig_split(M)
            except (numlin.NotRealSplit, numlin.ModulusCollision) as exc:
                raise LostLoxodromy(f"{w}: {exc}") from None
            out[n] = np.log(np.max(np.abs(np.linalg.eigvals(M))))
    return out


def _shifted(rep: Representation, p: int, delta: float) -> Representation:
    d = rep.dim
    g, r = divmod(p, d * d)
    images = [np.array(M) for M in rep.images]
    images[g].flat[r] += delta
    images[g] = numlin.normalize_det(images[g])
    return Representation(tuple(images), rep.label)


def length_jacobian(rep: Representation, classes: Sequence, mode: str = "length", h: float = FD_STEP,
                    workers: int = 1) -> JacobianReport:
    """Central-difference gradients over all generator entries (det restored after each step)."""
    if mode not in ("length", "trace", "det"):
        raise InputError("mode must be length, trace or det")
    words = [_word(rep, c) for c in classes]
    n_params = rep.rank * rep.dim**2

    def column(p: int) -> np.ndarray:
        up = _class_values(_shifted(rep, p, h), words, mode)
        down = _class_values(_shifted(rep, p, -h), words, mode)
        return (up - down) / (2 * h)

    if workers <= 1:
        cols = [column(p) for p in range(n_params)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cols = list(pool.map(column, range(n_params)))
    J = np.column_stack(cols)
    s = np.linalg.svd(J, compute_uv=False)
    rank, ratio = numeric_rank(s)
    return JacobianReport(mode, tuple(str(w) for w in words), J, s, rank, ratio)


def kernel_rank_report(JL: JacobianReport, JT: JacobianReport, tol: float = 1e-3) -> dict:
    if JL.n_params != JT.n_params:
        raise InputError("Jacobians use different parameterizations")
    KL, KT = JL.kernel(), JT.kernel()
    if KL.shape[1] and KT.shape[1]:
        angles = subspace_angles(KL, KT)
        max_angle = float(np.max(angles))
    else:
        angles = np.zeros(0)
        max_angle = 0.0 if KL.shape[1] == KT.shape[1] else float(np.pi / 2)
    same_dim = KL.shape[1] == KT.shape[1]
    return {
        "rank_length": JL.rank,
        "rank_trace": JT.rank,
        "kernel_dim_length": int(KL.shape[1]),
        "kernel_dim_trace": int(KT.shape[1]),
        "gap_ratio_length": JL.gap_ratio,
        "gap_ratio_trace": JT.gap_ratio,
        "singular_values_length": JL.singular_values.tolist(),
        "singular_values_trace": JT.singular_values.tolist(),
        "principal_angles": angles.tolist(),
        "max_angle": max_angle,
        "kernels_agree": bool(same_dim and max_angle <= tol),
    }


# --- report rendering -----------------------------------------------------------


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    return x


def render_report(name: str, inputs: dict, metrics: dict, passed: dict) -> str:
    """JSON report with fields ``name, inputs, metrics, pass``; stable key order."""
    doc = {"name": name, "inputs": _plain(inputs), "metrics": _plain(metrics), "pass": _plain(passed)}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
