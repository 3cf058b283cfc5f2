"""Words in free groups and their conjugacy classes.

A letter is a nonzero integer: ``k`` stands for the generator ``g_k`` and
``-k`` for its inverse.  In text, generators are ``a b c ...`` and inverses
the matching capitals, so ``"aab"`` is ``g1 g1 g2`` and ``"aB"`` is
``g1 g2^-1``.

Letters are ordered ``g1 < g1^-1 < g2 < g2^-1 < ...``; the canonical
representative of a conjugacy class is its lexicographically least rotation
under this order after cyclic reduction.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Iterable

from .errors import BudgetExceeded, InputError

MAX_LEN_RANK2 = 14
# rough count of cyclically reduced words we are willing to walk
WORD_BUDGET = 6_000_000


def letter_key(letter: int) -> int:
    return 2 * (abs(letter) - 1) + (letter < 0)


def key_letter(key: int) -> int:
    k = key // 2 + 1
    return -k if key % 2 else k


def _free_reduce(letters: Iterable[int]) -> tuple[int, ...]:
    out: list[int] = []
    for x in letters:
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


@dataclass(frozen=True, order=True)
class Word:
    """A freely reduced word in the free group of the given rank."""

    rank: int
    letters: tuple[int, ...]

    def __post_init__(self):
        letters = tuple(int(x) for x in self.letters)
        for x in letters:
            if x == 0 or abs(x) > self.rank:
                raise InputError(f"letter {x} outside rank {self.rank}")
        object.__setattr__(self, "letters", _free_reduce(letters))

    @classmethod
    def parse(cls, text: str, rank: int | None = None) -> "Word":
        text = text.strip()
        letters = []
        for ch in text:
            if ch in " 1":
                continue
            if ch not in string.ascii_letters:
                raise InputError(f"bad letter {ch!r} in word {text!r}")
            k = string.ascii_lowercase.index(ch.lower()) + 1
            letters.append(k if ch.islower() else -k)
        if rank is None:
            rank = max((abs(x) for x in letters), default=1)
        return cls(rank, tuple(letters))

    def __str__(self) -> str:
        return "".join(
            string.ascii_lowercase[abs(x) - 1] if x > 0 else string.ascii_uppercase[abs(x) - 1]
            for x in self.letters
        )

    def __len__(self) -> int:
        return len(self.letters)

    def __mul__(self, other: "Word") -> "Word":
        return Word(max(self.rank, other.rank), self.letters + other.letters)

    def __pow__(self, n: int) -> "Word":
        base = self if n >= 0 else self.inverse()
        return Word(self.rank, base.letters * abs(n))

    def inverse(self) -> "Word":
        return Word(self.rank, tuple(-x for x in reversed(self.letters)))

    def with_rank(self, rank: int) -> "Word":
        return Word(rank, self.letters)


def reduce(w: Word | str | Iterable[int], rank: int | None = None) -> Word:
    if isinstance(w, Word):
        return w
    if isinstance(w, str):
        return Word.parse(w, rank)
    letters = tuple(w)
    return Word(rank or max((abs(x) for x in letters), default=1), letters)


def cyclically_reduce(w: Word) -> Word:
    letters = w.letters
    lo, hi = 0, len(letters)
    while hi - lo >= 2 and letters[lo] == -letters[hi - 1]:
        lo += 1
        hi -= 1
    return Word(w.rank, letters[lo:hi])


@dataclass(frozen=True, order=True)
class ConjClass:
    """Conjugacy class, stored by its canonical representative."""

    representative: Word

    def __str__(self) -> str:
        return str(self.representative)

    @property
    def word(self) -> Word:
        return self.representative


def _min_rotation(keys: tuple[int, ...]) -> tuple[int, ...]:
    if not keys:
        return keys
    return min(keys[i:] + keys[:i] for i in range(len(keys)))


def cyclic_canonical(w: Word | str) -> ConjClass:
    w = reduce(w)
    core = cyclically_reduce(w)
    keys = _min_rotation(tuple(letter_key(x) for x in core.letters))
    return ConjClass(Word(w.rank, tuple(key_letter(k) for k in keys)))


def unoriented_canonical(w: Word | str) -> ConjClass:
    """Class of ``w`` merged with the class of its inverse."""
    w = reduce(w)
    c1 = cyclic_canonical(w)
    c2 = cyclic_canonical(w.inverse())
    k1 = tuple(letter_key(x) for x in c1.representative.letters)
    k2 = tuple(letter_key(x) for x in c2.representative.letters)
    return c1 if (len(k1), k1) <= (len(k2), k2) else c2


def _necklaces(rank: int, length: int):
    """Canonical cyclically reduced key sequences of exactly ``length`` letters.

    Depth-first over freely reduced prefixes, pruned to prefixes that can
    still be the least rotation of a word (prenecklace condition).
    """
    n_keys = 2 * rank
    out: list[tuple[int, ...]] = []
    prefix: list[int] = []

    def extend():
        m = len(prefix)
        if m == length:
            if prefix[0] ^ 1 == prefix[-1]:
                return
            t = tuple(prefix)
            if _min_rotation(t) == t:
                out.append(t)
            return
        for k in range(prefix[0] if prefix else 0, n_keys):
            if prefix and prefix[-1] ^ 1 == k:
                continue
            prefix.append(k)
            if _is_prenecklace(prefix):
                extend()
            prefix.pop()

    extend()
    return out


def _is_prenecklace(p: list[int]) -> bool:
    # every suffix must not be smaller than the prefix of equal length
    n = len(p)
    for i in range(1, n):
        for j in range(n - i):
            if p[i + j] != p[j]:
                if p[i + j] < p[j]:
                    return False
                break
    return True


def count_budget(rank: int, max_len: int) -> int:
    return sum(2 * rank * (2 * rank - 1) ** (n - 1) for n in range(1, max_len + 1))


def enumerate_classes(rank: int, max_len: int, oriented: bool = True) -> list[ConjClass]:
    """All nontrivial conjugacy classes of cyclic length at most ``max_len``.

    Output is sorted by length, then by canonical letter order.  With
    ``oriented=False`` each class is merged with its inverse and the
    smaller representative kept.
    """
    if rank < 1 or max_len < 0:
        raise InputError("rank must be positive and max_len non-negative")
    if (rank == 2 and max_len > MAX_LEN_RANK2) or count_budget(rank, max_len) > WORD_BUDGET:
        raise BudgetExceeded(f"enumeration of rank {rank} up to length {max_len} exceeds budget")
    classes: list[ConjClass] = []
    seen: set[ConjClass] = set()
    for n in range(1, max_len + 1):
        for keys in _necklaces(rank, n):
            c = ConjClass(Word(rank, tuple(key_letter(k) for k in keys)))
            if not oriented:
                c = unoriented_canonical(c.representative)
                if c in seen:
                    continue
                seen.add(c)
            classes.append(c)
    return classes


def schema_an_b(n: int, alpha: Word | str = "a", beta: Word | str = "b", rank: int = 2) -> Word:
    """The word ``alpha^n beta`` (default letters ``a``, ``b``)."""
    alpha = reduce(alpha, rank).with_rank(rank)
    beta = reduce(beta, rank).with_rank(rank)
    return alpha**n * beta


def schema_pqr(p: int, q: int, r: int, rank: int = 4) -> Word:
    """The word ``a^p b^q c d^r`` in a free group of rank at least 4."""
    if rank < 4:
        raise InputError("schema_pqr needs rank >= 4")
    a, b, c, d = (Word(rank, (k,)) for k in (1, 2, 3, 4))
    return a**p * b**q * c * d**r


def schema_family(n_max: int, rank: int = 2) -> list[Word]:
    """``a^n b, b^n a, a^n B, b^n A`` for n = 0..n_max (duplicates at n = 0 kept)."""
    pairs = (("a", "b"), ("b", "a"), ("a", "B"), ("b", "A"))
    return [schema_an_b(n, x, y, rank) for x, y in pairs for n in range(n_max + 1)]
