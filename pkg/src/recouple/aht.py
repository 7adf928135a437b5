"""Toggling frames and average Hamiltonians.

The accumulated frame before each free interval is tracked per site as a
3x3 conjugation matrix (``U^dag I^a U = sum_b M[a, b] I^b``), so the
toggled Hamiltonian is a word-level relabelling.  Zeroth-order averages
are accumulated in exact rational arithmetic from the (float) durations
and coefficients, and rounded once at the end; sums that cancel
analytically therefore cancel to exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .algebra import AXES, OperatorSum, commutator, op_add, op_norm, transform_sites
from .model import dipolar_pair
from .sequence import NONE, Delta, Free, PulseSequence, _compose, build_w_cycle


@dataclass(frozen=True)
class Interval:
    duration: float
    frame: tuple  # per-site 3x3 conjugation matrices
    hamiltonian: OperatorSum


@dataclass(frozen=True)
class TogglingFrame:
    intervals: tuple
    final_frame: tuple

    @property
    def cycle_time(self) -> float:
        return math.fsum(iv.duration for iv in self.intervals)

    def closes(self) -> bool:
        return all(np.allclose(m, np.eye(3), atol=1e-12) for m in self.final_frame)

    def frame_labels(self, site: int = 0) -> list[str]:
        """Signed axis carrying ``I^z`` of ``site`` in each interval."""
        labels = []
        for iv in self.intervals:
            row = iv.frame[site][2]
            idx = int(np.argmax(np.abs(row)))
            if not np.isclose(abs(row[idx]), 1.0) or np.count_nonzero(np.round(row, 12)) != 1:
                labels.append("?")
                continue
            labels.append(("-" if row[idx] < 0 else "") + AXES[idx])
        return labels


def toggling_frames(seq: PulseSequence, h: OperatorSum) -> TogglingFrame:
    """Toggled copy of ``h`` for every free interval of ``seq``."""
    n = h.n
    frame = [np.eye(3, dtype=int) for _ in range(n)]
    intervals = []
    cache: dict = {}
    for e in seq.events:
        if isinstance(e, Delta):
            m = e.rotation.conjugation_matrix()
            sites = range(n) if e.rotation.site is None else [e.rotation.site]
            for s in sites:
                if not 0 <= s < n:
                    raise IndexError(f"pulse addresses spin {s} in a {n}-spin system")
                frame[s] = _compose(m, frame[s])
        elif isinstance(e, Free):
            key = tuple(f.tobytes() + str(f.dtype).encode() for f in frame)
            if key not in cache:
                cache[key] = transform_sites(h, dict(enumerate(frame)))
            intervals.append(Interval(e.duration, tuple(frame), cache[key]))
    return TogglingFrame(tuple(intervals), tuple(frame))


def _exact_average(pieces, total) -> dict[str, complex]:
    acc: dict[str, list] = {}
    for weight, op in pieces:
        w = Fraction(weight)
        for word, c in op.items():
            slot = acc.setdefault(word, [Fraction(0), Fraction(0)])
            slot[0] += w * Fraction(c.real)
            slot[1] += w * Fraction(c.imag)
    total = Fraction(total)
    return {word: complex(float(re / total), float(im / total)) for word, (re, im) in acc.items()}


def average0(seq: PulseSequence, h: OperatorSum) -> OperatorSum:
    """Zeroth-order average ``(1/t_c) sum_i d_i H_i`` over one cycle."""
    frames = toggling_frames(seq, h)
    total = sum(Fraction(iv.duration) for iv in frames.intervals)
    if total == 0:
        raise ValueError("sequence has zero cycle time")
    pieces = [(iv.duration, iv.hamiltonian) for iv in frames.intervals]
    return OperatorSum(h.n, _exact_average(pieces, total), h.atol)


def magnus1(seq: PulseSequence, h: OperatorSum) -> OperatorSum:
    """First Magnus term ``(-i/2t_c) sum_{j>i} d_j d_i [H_j, H_i]``.

    Accumulated on ``h`` divided by its largest coefficient with durations in
    units of ``t_c``, so the prune threshold acts relative to the natural
    scale ``max|c|^2 t_c`` rather than on the raw products.
    """
    tc = math.fsum(e.duration for e in seq.events if isinstance(e, Free))
    if tc == 0:
        raise ValueError("sequence has zero cycle time")
    scale = max((abs(c) for _, c in h.items()), default=0.0)
    if scale == 0:
        return OperatorSum.zero(h.n)
    unit = h.scale(1 / scale)
    out = OperatorSum.zero(h.n)
    prefix = OperatorSum.zero(h.n)
    for iv in toggling_frames(seq, unit).intervals:
        w = iv.duration / tc
        if prefix:
            out = op_add(out, commutator(iv.hamiltonian, prefix).scale(w))
        prefix = op_add(prefix, iv.hamiltonian.scale(w))
    factor = -0.5j * scale * scale * tc
    return OperatorSum(h.n, {word: factor * c for word, c in out.items()},
                       h.atol * scale * scale * tc)


# -- offset averaging ----------------------------------------------------------

@dataclass(frozen=True)
class OffsetVectors:
    """Cycle averages of ``I^z`` (zeta), ``I^x`` (xi) and ``I^y`` (eta)."""

    zeta: np.ndarray
    xi: np.ndarray
    eta: np.ndarray


def _single_site_vector(op: OperatorSum) -> np.ndarray:
    vec = np.zeros(3)
    for word, c in op.items():
        if word not in AXES:
            raise ValueError(f"averaged offset operator leaves one site: {word}")
        if c.imag != 0:
            raise ValueError("averaged offset operator is not Hermitian")
        vec[AXES.index(word)] = c.real
    return vec


def offset_vectors(seq: PulseSequence) -> OffsetVectors:
    vecs = [_single_site_vector(average0(seq, OperatorSum.spin(1, 0, a))) for a in "ZXY"]
    return OffsetVectors(*vecs)


def resonant_carrier(vectors: OffsetVectors, offset: float) -> float:
    """Drive carrier offset resonant with a spin at ``offset`` under the cycle."""
    return float(np.linalg.norm(vectors.zeta)) * offset


def secular_vector(vectors: OffsetVectors, phase: float) -> np.ndarray:
    """Direction/weight ``u`` of the secular drive ``-(w_RF/2) u.I``.

    ``u = (xi_p - zhat x eta) cos(phase) + (eta_p + zhat x xi) sin(phase)``
    with ``_p`` the parts perpendicular to zeta.  Derived for the drive
    ``-w_RF [cos(a) I^x - sin(a) I^y]``, ``a = w' t - phase``, at resonance.
    """
    norm = float(np.linalg.norm(vectors.zeta))
    if norm == 0:
        raise ValueError("offset averaging vector zeta vanishes; no resonance exists")
    z = vectors.zeta / norm
    xi_p = vectors.xi - np.dot(vectors.xi, z) * z
    eta_p = vectors.eta - np.dot(vectors.eta, z) * z
    return ((xi_p - np.cross(z, vectors.eta)) * math.cos(phase)
            + (eta_p + np.cross(z, vectors.xi)) * math.sin(phase))


def secular_selective(vectors: OffsetVectors, amplitude: float, phase: float,
                      target: int, n: int = 1) -> OperatorSum:
    """Secular interaction-picture drive on ``target`` under the cycle."""
    if amplitude == 0:
        return OperatorSum.zero(n)
    u = secular_vector(vectors, phase)
    return OperatorSum(n, {
        _site_word(n, target, a): -0.5 * amplitude * u[i] for i, a in enumerate(AXES)
    })


def _site_word(n, site, letter):
    word = ["E"] * n
    word[site] = letter
    return "".join(word)


# -- recoupling table ---------------------------------------------------------

def effective_pair_coupling(alpha: str, beta: str, D: float, T: float = 1.0) -> OperatorSum:
    """Average of ``D (2ZZ - XX - YY)`` under ``W_0(alpha)`` with ``W_1(beta)``."""
    seq = build_w_cycle({0: alpha, 1: beta}, T)
    return average0(seq, dipolar_pair(2, 0, 1, D))


def table_closed_form(D: float) -> dict[str, OperatorSum]:
    """Closed-form entries used as the oracle for the recoupling table."""
    third = lambda num: float(Fraction(num, 3) * Fraction(D))  # noqa: E731
    return {
        "0": OperatorSum.zero(2),
        "H1": OperatorSum(2, {"XX": third(-4), "YY": third(-2)}),
        "H2": OperatorSum(2, {"ZZ": third(-4), "YY": third(-2)}),
        "H3": OperatorSum(2, {"XX": third(4), "YY": third(4), "ZZ": third(4)}),
    }


TABLE_LAYOUT = {
    NONE: {NONE: "0", "X": "H1", "Y": "H2", "Z": "H3"},
    "X": {NONE: "H1", "X": "0", "Y": "H3", "Z": "H2"},
    "Y": {NONE: "H2", "X": "H3", "Y": "0", "Z": "H1"},
    "Z": {NONE: "H3", "X": "H2", "Y": "H1", "Z": "0"},
}


def relative_norm(op: OperatorSum, scale: float) -> float:
    return op_norm(op) / scale if scale else op_norm(op)
