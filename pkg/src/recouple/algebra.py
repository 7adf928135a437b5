"""Sums of spin-1/2 product operators.

Every Hamiltonian in the package is an :class:`OperatorSum`: a map from
spin words to complex coefficients.  A word is a string over ``E, X, Y, Z``
with one letter per spin, where ``E`` is the single-site identity and
``X, Y, Z`` stand for the spin operators ``I^x, I^y, I^z`` (half the Pauli
matrices).  Coefficients are angular frequencies in rad/s with hbar = 1.

Rotations by multiples of pi/2 about coordinate axes act on words as signed
letter permutations, so toggling-frame identities come out exact rather
than merely close.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Mapping

import numpy as np

LETTERS = "EXYZ"
AXES = "XYZ"
PRUNE_ATOL = 1e-14
MAX_DENSE_SPINS = 12

ALL = None  # SiteRotation.site value addressing every spin

# single-site products: (a, b) -> (coefficient, letter)
_PRODUCT: dict[tuple[str, str], tuple[complex, str]] = {}
for _a in LETTERS:
    _PRODUCT[("E", _a)] = (1.0, _a)
    _PRODUCT[(_a, "E")] = (1.0, _a)
for _a in AXES:
    _PRODUCT[(_a, _a)] = (0.25, "E")
for _a, _b, _c in ("XYZ", "YZX", "ZXY"):
    _PRODUCT[(_a, _b)] = (0.5j, _c)
    _PRODUCT[(_b, _a)] = (-0.5j, _c)

_PAULI_HALF = {
    "E": np.eye(2, dtype=complex),
    "X": np.array([[0, 0.5], [0.5, 0]], dtype=complex),
    "Y": np.array([[0, -0.5j], [0.5j, 0]], dtype=complex),
    "Z": np.array([[0.5, 0], [0, -0.5]], dtype=complex),
}


class DimensionError(ValueError):
    """Operands live on different numbers of spins, or a size cap was hit."""


def _check_word(word: str, n: int) -> str:
    if len(word) != n or any(ch not in LETTERS for ch in word):
        raise ValueError(f"invalid spin word {word!r} for {n} spins")
    return word


class OperatorSum:
    """Immutable complex-weighted sum of n-site spin words.

    Parameters
    ----------
    n : int
        Number of spins.
    terms : mapping of str to complex, optional
        Word -> coefficient.  Coefficients with magnitude below ``atol``
        are dropped.
    atol : float
        Prune threshold, inherited by results of arithmetic.
    """

    __slots__ = ("n", "atol", "_terms")

    def __init__(self, n: int, terms: Mapping[str, complex] | None = None,
                 atol: float = PRUNE_ATOL):
        if n < 1:
            raise ValueError("need at least one spin")
        self.n = int(n)
        self.atol = float(atol)
        clean: dict[str, complex] = {}
        for word, c in (terms or {}).items():
            c = complex(c)
            if abs(c) >= self.atol:
                clean[_check_word(word, self.n)] = c
        self._terms = clean

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls, n: int) -> OperatorSum:
        return cls(n)

    @classmethod
    def identity(cls, n: int, coeff: complex = 1.0) -> OperatorSum:
        return cls(n, {"E" * n: coeff})

    @classmethod
    def product(cls, n: int, letters: Mapping[int, str], coeff: complex = 1.0) -> OperatorSum:
        """Single word with the given ``{site: letter}`` assignment."""
        word = ["E"] * n
        for site, letter in letters.items():
            if not 0 <= site < n:
                raise IndexError(f"site {site} out of range for {n} spins")
            word[site] = letter.upper()
        return cls(n, {"".join(word): coeff})

    @classmethod
    def spin(cls, n: int, site: int, axis: str, coeff: complex = 1.0) -> OperatorSum:
        """``coeff * I^axis`` on one site."""
        return cls.product(n, {site: axis}, coeff)

    # -- mapping-ish access -------------------------------------------
    @property
    def terms(self) -> dict[str, complex]:
        return dict(self._terms)

    def __iter__(self):
        return iter(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def coeff(self, word: str) -> complex:
        return self._terms.get(word, 0.0)

    def items(self):
        return self._terms.items()

    def is_zero(self) -> bool:
        return not self._terms

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        # every word is Hermitian, so the sum is Hermitian iff coefficients are real
        return all(abs(c.imag) <= tol * max(1.0, abs(c)) for c in self._terms.values())

    def support(self, word: str) -> tuple[int, ...]:
        return tuple(i for i, ch in enumerate(word) if ch != "E")

    # -- arithmetic ---------------------------------------------------
    def _same_n(self, other: OperatorSum) -> None:
        if other.n != self.n:
            raise DimensionError(f"spin counts differ: {self.n} vs {other.n}")

    def __add__(self, other):
        if not isinstance(other, OperatorSum):
            return NotImplemented
        return op_add(self, other)

    def __sub__(self, other):
        if not isinstance(other, OperatorSum):
            return NotImplemented
        return op_add(self, -other)

    def __neg__(self):
        return self.scale(-1.0)

    def scale(self, factor: complex) -> OperatorSum:
        return OperatorSum(self.n, {w: factor * c for w, c in self._terms.items()}, self.atol)

    def __mul__(self, other):
        if isinstance(other, OperatorSum):
            return op_mul(self, other)
        if isinstance(other, (int, float, complex, np.number)):
            return self.scale(other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return self.scale(other)
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return self.scale(1.0 / other)
        return NotImplemented

    def __eq__(self, other) -> bool:
        if not isinstance(other, OperatorSum):
            return NotImplemented
        return self.n == other.n and self._terms == other._terms

    def __hash__(self):
        return hash((self.n, frozenset(self._terms.items())))

    def close_to(self, other: OperatorSum, atol: float = 1e-12) -> bool:
        return op_norm(self - other) <= atol

    def conj(self) -> OperatorSum:
        return OperatorSum(self.n, {w: c.conjugate() for w, c in self._terms.items()}, self.atol)

    def __repr__(self) -> str:
        if not self._terms:
            return f"OperatorSum(n={self.n}, 0)"
        body = " + ".join(f"({_fmt(c)})*{w}" for w, c in sorted(self._terms.items()))
        return f"OperatorSum(n={self.n}, {body})"


def _fmt(c: complex) -> str:
    if c.imag == 0:
        return f"{c.real:.6g}"
    return f"{c:.6g}"


def op_add(a: OperatorSum, b: OperatorSum) -> OperatorSum:
    a._same_n(b)
    out = dict(a._terms)
    for w, c in b._terms.items():
        out[w] = out.get(w, 0.0) + c
    return OperatorSum(a.n, out, a.atol)


def op_sum(ops: Iterable[OperatorSum], n: int | None = None) -> OperatorSum:
    ops = list(ops)
    if not ops:
        if n is None:
            raise ValueError("empty sum needs an explicit spin count")
        return OperatorSum.zero(n)
    return reduce(op_add, ops)


def _word_product(u: str, v: str) -> tuple[complex, str]:
    coeff: complex = 1.0
    letters = []
    for a, b in zip(u, v):
        c, letter = _PRODUCT[(a, b)]
        coeff *= c
        letters.append(letter)
    return coeff, "".join(letters)


def op_mul(a: OperatorSum, b: OperatorSum) -> OperatorSum:
    a._same_n(b)
    out: dict[str, complex] = {}
    for u, cu in a._terms.items():
        for v, cv in b._terms.items():
            c, w = _word_product(u, v)
            out[w] = out.get(w, 0.0) + c * cu * cv
    return OperatorSum(a.n, out, a.atol)


def commutator(a: OperatorSum, b: OperatorSum) -> OperatorSum:
    """``ab - ba``, computed word by word without forming either product."""
    a._same_n(b)
    out: dict[str, complex] = {}
    for u, cu in a._terms.items():
        for v, cv in b._terms.items():
            c1, w = _word_product(u, v)
            c2, _ = _word_product(v, u)
            d = c1 - c2
            if d != 0:
                out[w] = out.get(w, 0.0) + d * cu * cv
    return OperatorSum(a.n, out, a.atol)


# -- rotations ---------------------------------------------------------

@dataclass(frozen=True)
class SiteRotation:
    """The unitary ``exp(-i angle axis.I)`` on one site, or every site.

    ``site=None`` (alias :data:`ALL`) is a broadband rotation.
    """

    site: int | None
    axis: tuple[float, float, float]
    angle: float

    def __post_init__(self):
        axis = tuple(float(x) for x in self.axis)
        if len(axis) != 3:
            raise ValueError("rotation axis must be a 3-vector")
        if abs(math.sqrt(sum(x * x for x in axis)) - 1.0) > 1e-12:
            raise ValueError(f"rotation axis {axis} is not a unit vector")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "angle", float(self.angle))

    @property
    def broadband(self) -> bool:
        return self.site is None

    def inverse(self) -> SiteRotation:
        return SiteRotation(self.site, self.axis, -self.angle)

    def conjugation_matrix(self) -> np.ndarray:
        """3x3 matrix ``O`` with ``R^dag I^a R = sum_b O[a, b] I^b``.

        Integer-valued (dtype int) for pi/2 multiples about coordinate axes.
        """
        return rotation_matrix(self.axis, self.angle)

    def unitary(self) -> np.ndarray:
        """2x2 single-site unitary ``exp(-i angle axis.I)``."""
        nx, ny, nz = self.axis
        c, s = math.cos(self.angle / 2), math.sin(self.angle / 2)
        return np.array([[c - 1j * s * nz, -1j * s * (nx - 1j * ny)],
                         [-1j * s * (nx + 1j * ny), c + 1j * s * nz]])

    def label(self) -> str:
        quarter = self.angle / (math.pi / 2)
        name = None
        for letter, vec in zip(AXES, np.eye(3)):
            for sign in (1, -1):
                if np.allclose(self.axis, sign * vec, atol=1e-12):
                    name = (letter, sign)
        where = "" if self.site is None else f"_{self.site}"
        if name is not None and abs(quarter - round(quarter)) < 1e-12:
            q = int(round(quarter)) * name[1]
            if q in (1, -1):
                return f"P{'-' if q < 0 else ''}{name[0].lower()}{where}"
            if q in (2, -2):
                return f"{name[0]}{where}{'' if q > 0 else '^-1'}"
        return f"R({self.axis},{self.angle:.6g}){where}"


def _clifford_matrix(axis, angle) -> np.ndarray | None:
    quarter = angle / (math.pi / 2)
    q = round(quarter)
    if abs(quarter - q) > 1e-12:
        return None
    for idx in range(3):
        for sign in (1, -1):
            vec = np.zeros(3)
            vec[idx] = sign
            if np.allclose(axis, vec, atol=1e-12):
                turns = (q * sign) % 4
                c = (1, 0, -1, 0)[turns]
                s = (0, 1, 0, -1)[turns]
                m = np.eye(3, dtype=int)
                j, k = (idx + 1) % 3, (idx + 2) % 3
                m[j, j], m[j, k] = c, -s
                m[k, j], m[k, k] = s, c
                return m
    return None


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """Active rotation matrix (Rodrigues) about ``axis`` by ``angle``.

    This is also the conjugation action ``R^dag I^a R`` for
    ``R = exp(-i angle axis.I)``.
    """
    exact = _clifford_matrix(axis, angle)
    if exact is not None:
        return exact
    n = np.asarray(axis, dtype=float)
    k = np.array([[0, -n[2], n[1]], [n[2], 0, -n[0]], [-n[1], n[0], 0]])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


def transform_sites(h: OperatorSum, site_matrices: Mapping[int, np.ndarray]) -> OperatorSum:
    """Replace ``I^a`` at each listed site by ``sum_b M[a, b] I^b``."""
    for site in site_matrices:
        if not 0 <= site < h.n:
            raise IndexError(f"site {site} out of range for {h.n} spins")
    out: dict[str, complex] = {}
    for word, c in h.items():
        partial = [("", c)]
        for site, letter in enumerate(word):
            m = site_matrices.get(site)
            if letter == "E" or m is None:
                partial = [(p + letter, pc) for p, pc in partial]
                continue
            row = m[AXES.index(letter)]
            nxt = []
            for p, pc in partial:
                for b, weight in zip(AXES, row):
                    if weight != 0:
                        nxt.append((p + b, pc * weight))
            partial = nxt
        for w, pc in partial:
            out[w] = out.get(w, 0.0) + pc
    return OperatorSum(h.n, out, h.atol)


def rotate_conj(h: OperatorSum, r: SiteRotation) -> OperatorSum:
    """``R^dag h R`` for the rotation ``R`` described by ``r``."""
    m = r.conjugation_matrix()
    if r.site is None:
        sites = {s: m for s in range(h.n)}
    else:
        if not 0 <= r.site < h.n:
            raise IndexError(f"site {r.site} out of range for {h.n} spins")
        sites = {r.site: m}
    return transform_sites(h, sites)


# -- dense realization -------------------------------------------------

def word_matrix(word: str) -> np.ndarray:
    return reduce(np.kron, (_PAULI_HALF[ch] for ch in word))


def to_dense(h: OperatorSum, max_spins: int = MAX_DENSE_SPINS) -> np.ndarray:
    """Kronecker-product realization; site 0 is the leftmost factor."""
    if h.n > max_spins:
        raise DimensionError(f"{h.n} spins exceeds the dense cap of {max_spins}")
    dim = 2 ** h.n
    out = np.zeros((dim, dim), dtype=complex)
    for word, c in h.items():
        out += c * word_matrix(word)
    return out


def op_norm(h: OperatorSum) -> float:
    """Frobenius norm of the dense realization, from word orthogonality."""
    total = 0.0
    for word, c in h.items():
        weight = sum(ch != "E" for ch in word)
        total += abs(c) ** 2 * 2.0 ** h.n / 4.0 ** weight
    return math.sqrt(total)
