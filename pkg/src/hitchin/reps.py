"""Representations of free groups into SL(d, R).

A :class:`Representation` stores one unimodular matrix per generator and
evaluates words by ordered products, ``rho(w1 w2) = rho(w1) @ rho(w2)``.

Points of the circle RP^1 used by the presets are Möbius coordinates
``z = v[0] / v[1]`` of vectors ``v`` in R^2.
"""

from __future__ import annotations

import json
import math
import string
import threading
from dataclasses import dataclass, field
from math import comb
from typing import Iterable, Sequence

import numpy as np

from . import numlin
from .errors import InputError, LeftHitchinLocus, LinkedAxes, NotUnimodular, SchemaError
from .words import Word, enumerate_classes, reduce, schema_an_b

FORMAT_VERSION = 1
PERTURB_ATTEMPTS = 20


def tau_d(M, d: int) -> np.ndarray:
    """Irreducible image of an SL(2) matrix in SL(d).

    Acts on binary forms of degree ``d - 1`` in the monomial basis
    ``x^(d-1), x^(d-2) y, ..., y^(d-1)``; equivalently ``tau_d(g) phi(v) =
    phi(g v)`` where ``phi(p, q)_k = C(d-1, k) p^(d-1-k) q^k``.  For ``d = 3``
    this gives ``[[a^2, ab, b^2], [2ac, ad+bc, 2bd], [c^2, cd, d^2]]``.
    """
    if d < 2:
        raise InputError("tau_d needs d >= 2")
    g = np.asarray(M, dtype=float)
    if g.shape != (2, 2):
        raise InputError("tau_d expects a 2x2 matrix")
    (a, b), (c, dd) = g
    n = d - 1
    out = np.empty((d, d))
    for k in range(d):
        # coefficients of (a p + b q)^(n-k) (c p + dd q)^k in powers of q
        left = np.array([comb(n - k, i) * a ** (n - k - i) * b**i for i in range(n - k + 1)])
        right = np.array([comb(k, i) * c ** (k - i) * dd**i for i in range(k + 1)])
        poly = np.convolve(left, right)
        for m in range(d):
            out[k, m] = comb(n, k) * poly[m] / comb(n, m)
    return out


def _readonly(M) -> np.ndarray:
    A = np.array(M, dtype=float)
    A.setflags(write=False)
    return A


@dataclass(frozen=True, eq=False)
class Representation:
    """Generator images of a free-group representation.

    Word images are memoized per instance, keyed by the reduced word; the
    cache is guarded by a lock so concurrent readers are safe.
    """

    images: tuple[np.ndarray, ...]
    label: str = ""
    tol_det: float = numlin.TOL_DET
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        imgs = tuple(_readonly(numlin.as_matrix(M)) for M in self.images)
        if not imgs:
            raise InputError("a representation needs at least one generator")
        d = imgs[0].shape[0]
        for k, M in enumerate(imgs):
            if M.shape != (d, d):
                raise InputError("generator images differ in dimension")
            det = np.linalg.det(M)
            if abs(det - 1.0) > self.tol_det * d:
                raise NotUnimodular(f"generator {k + 1} has det {det!r}")
        object.__setattr__(self, "images", imgs)

    @classmethod
    def from_images(cls, images: Iterable, label: str = "") -> "Representation":
        return cls(tuple(images), label)

    @property
    def rank(self) -> int:
        return len(self.images)

    @property
    def dim(self) -> int:
        return self.images[0].shape[0]

    def generator(self, letter: int) -> np.ndarray:
        if letter > 0:
            return self.images[letter - 1]
        return self._inverse(-letter)

    def _inverse(self, k: int) -> np.ndarray:
        key = ("inv", k)
        inv = self._cache.get(key)
        if inv is None:
            inv = _readonly(np.linalg.inv(self.images[k - 1]))
            with self._lock:
                self._cache[key] = inv
        return inv

    def __call__(self, word: Word | str) -> np.ndarray:
        return self.image(word)

    def image(self, word: Word | str) -> np.ndarray:
        w = reduce(word, self.rank)
        if w.rank > self.rank and any(abs(x) > self.rank for x in w.letters):
            raise InputError(f"word {w} uses generators beyond rank {self.rank}")
        key = w.letters
        M = self._cache.get(key)
        if M is not None:
            return M
        if not key:
            M = np.eye(self.dim)
        elif len(key) == 1:
            M = self.generator(key[0])
        else:
            half = len(key) // 2
            M = self.image(Word(self.rank, key[:half])) @ self.image(Word(self.rank, key[half:]))
        M = _readonly(M)
        with self._lock:
            self._cache[key] = M
        return M

    def conjugate(self, G) -> "Representation":
        G = np.asarray(G, dtype=float)
        Gi = np.linalg.inv(G)
        return Representation(tuple(G @ M @ Gi for M in self.images), self.label + "^G")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Representation):
            return NotImplemented
        return self.rank == other.rank and all(
            np.array_equal(a, b) for a, b in zip(self.images, other.images)
        )

    def __hash__(self):
        return hash(tuple(M.tobytes() for M in self.images))


def punctured_torus_preset() -> Representation:
    """Rank-2 Fuchsian pair with parabolic commutator (trace -2)."""
    A = [[1.0, 1.0], [1.0, 2.0]]
    B = [[1.0, -1.0], [-1.0, 2.0]]
    return Representation((A, B), "punctured-torus")


def schottky_preset(lam: float = 3.0, mu: float = 3.0, axis_endpoints=(1.0, 2.0)) -> Representation:
    """Rank-2 pair with disjoint, unlinked axes.

    The first image is ``diag(lam, 1/lam)`` (axis from 0 to infinity); the
    second is a conjugate of ``diag(mu, 1/mu)`` with attracting and
    repelling fixed points at ``axis_endpoints``.
    """
    if lam <= 1 or mu <= 1:
        raise InputError("translation factors must exceed 1")
    p, q = (float(x) for x in axis_endpoints)
    if not (np.isfinite(p) and np.isfinite(q)) or p == q:
        raise InputError("axis endpoints must be distinct finite points")
    if p * q <= 0:
        raise LinkedAxes(f"axis ({p}, {q}) meets or links the axis (0, inf)")
    A = np.diag([lam, 1.0 / lam])
    G = np.array([[p, q], [1.0, 1.0]])
    B = G @ np.diag([mu, 1.0 / mu]) @ np.linalg.inv(G)
    return Representation((A, B), f"schottky({lam},{mu},{p},{q})")


def lift_rep(rep2: Representation, d: int) -> Representation:
    """Compose with tau_d after making every generator trace positive."""
    if rep2.dim != 2:
        raise InputError("lift_rep expects a 2-dimensional representation")
    images = []
    for M in rep2.images:
        g = -M if np.trace(M) < 0 else M
        images.append(tau_d(g, d))
    label = f"tau{d}({rep2.label})" if rep2.label else f"tau{d}"
    return Representation(tuple(images), label)


def contragredient(rep: Representation) -> Representation:
    return Representation(
        tuple(np.linalg.inv(M).T for M in rep.images),
        (rep.label + "*") if rep.label else "*",
    )


def exterior_rep(rep: Representation, k: int) -> Representation:
    """``k``-th exterior power representation, memoized on ``rep``."""
    key = ("exterior", k)
    out = rep._cache.get(key)
    if out is None:
        out = Representation(
            tuple(numlin.exterior_power(M, k) for M in rep.images),
            f"{rep.label}^{k}",
            tol_det=rep.tol_det * math.comb(rep.dim, k),
        )
        with rep._lock:
            rep._cache[key] = out
    return out


def validation_words(rank: int, extra: Sequence[Word] = ()) -> list[Word]:
    """Classes of length at most 4 plus ``a^n b`` for n = 0..10 and ``extra``."""
    words = [c.representative for c in enumerate_classes(rank, 4)]
    if rank >= 2:
        words += [schema_an_b(n, rank=rank) for n in range(11)]
    return words + list(extra)


def is_loxodromic_on(rep: Representation, words: Iterable[Word]) -> bool:
    for w in words:
        try:
            numlin.eig_split(rep(w))
        except (numlin.NotRealSplit, numlin.ModulusCollision):
            return False
    return True


def perturb(rep: Representation, eps: float, seed: int, extra_words: Sequence[Word] = ()) -> Representation:
    """Add uniform noise in [-eps, eps] to every entry and restore det 1.

    Each attempt is validated by checking pure loxodromy on those
    :func:`validation_words` that are loxodromic for ``rep`` itself (a
    parabolic boundary word such as a cusp commutator cannot stay real-split
    under generic noise); after 20 failed draws from the seeded stream
    :class:`LeftHitchinLocus` is raised.
    """
    if eps == 0:
        return Representation(rep.images, rep.label)
    rng = np.random.default_rng(seed)
    words = [w for w in validation_words(rep.rank, extra_words) if is_loxodromic_on(rep, [w])]
    d = rep.dim
    for _ in range(PERTURB_ATTEMPTS):
        try:
            images = tuple(
                numlin.normalize_det(M + rng.uniform(-eps, eps, size=(d, d))) for M in rep.images
            )
        except InputError:
            continue
        cand = Representation(images, f"{rep.label}~{eps}@{seed}")
        if is_loxodromic_on(cand, words):
            return cand
    raise LeftHitchinLocus(f"perturbation of size {eps} failed validation {PERTURB_ATTEMPTS} times")


def generator_names(rank: int) -> list[str]:
    return list(string.ascii_lowercase[:rank])


def _fmt(x: float) -> str:
    return format(float(x), ".16e")


def serialize(rep: Representation) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "rank": rep.rank,
        "dim": rep.dim,
        "label": rep.label,
        "generators": [
            {"name": name, "matrix": [[_fmt(x) for x in row] for row in M]}
            for name, M in zip(generator_names(rep.rank), rep.images)
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def deserialize(text: str) -> Representation:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("document must be an object")
    for key in ("format_version", "rank", "dim", "generators"):
        if key not in doc:
            raise SchemaError(f"missing field {key!r}")
    if doc["format_version"] != FORMAT_VERSION:
        raise SchemaError(f"unsupported format_version {doc['format_version']!r}")
    rank, dim, gens = doc["rank"], doc["dim"], doc["generators"]
    if not isinstance(rank, int) or not isinstance(dim, int) or rank < 1 or dim < 1:
        raise SchemaError("rank and dim must be positive integers")
    if not isinstance(gens, list) or len(gens) != rank:
        raise SchemaError(f"expected {rank} generators, found {len(gens) if isinstance(gens, list) else gens!r}")
    images = []
    for g in gens:
        rows = g.get("matrix") if isinstance(g, dict) else None
        if not isinstance(rows, list) or len(rows) != dim or any(
            not isinstance(r, list) or len(r) != dim for r in rows
        ):
            raise SchemaError(f"generator matrix must be {dim}x{dim}")
        if any(not isinstance(x, str) for r in rows for x in r):
            raise SchemaError("matrix entries must be decimal strings")
        try:
            M = np.array([[float(x) for x in r] for r in rows])
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"bad matrix entry: {exc}") from None
        images.append(M)
    return Representation(tuple(images), str(doc.get("label", "")))
