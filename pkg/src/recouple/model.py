"""Spin systems and the Hamiltonians they carry.

Everything lives in the frame rotating with the broadband carrier, so the
Zeeman term only keeps the per-spin offsets and counter-rotating terms
never appear.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import constants

from .algebra import OperatorSum, op_sum

GAMMA_PROTON = 2.675e8  # rad s^-1 T^-1


@dataclass(frozen=True)
class Geometry:
    """Nuclear positions (m) in a static field along ``field_axis``."""

    positions: np.ndarray
    gamma: float = GAMMA_PROTON
    field_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.shape[1] != 3:
            raise ValueError("positions must be an (n, 3) array")
        axis = np.asarray(self.field_axis, dtype=float)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ValueError("field_axis must be a unit vector")
        for k in range(len(pos)):
            for l in range(k + 1, len(pos)):
                if np.linalg.norm(pos[k] - pos[l]) == 0:
                    raise ValueError(f"spins {k} and {l} share a position")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "field_axis", tuple(axis))

    @property
    def n(self) -> int:
        return len(self.positions)


def dipolar_constant(geometry: Geometry, k: int, l: int) -> float:
    """Secular dipolar coupling ``D_kl`` in rad/s.

    ``(mu0/4pi) gamma^2 hbar (1 - 3 cos^2 theta) / (2 r^3)``; one factor of
    hbar of the energy expression is absorbed by working in rad/s.
    """
    if k == l:
        raise ValueError("dipolar constant needs two distinct spins")
    r = geometry.positions[l] - geometry.positions[k]
    dist = float(np.linalg.norm(r))
    if dist == 0:
        raise ValueError(f"spins {k} and {l} coincide")
    cos_theta = float(np.dot(r, geometry.field_axis)) / dist
    prefactor = constants.mu_0 / (4 * math.pi) * geometry.gamma ** 2 * constants.hbar
    return prefactor * (1 - 3 * cos_theta ** 2) / (2 * dist ** 3)


@dataclass(frozen=True)
class SpinSystem:
    """Spin count, rotating-frame offsets (rad/s) and couplings ``D_kl`` (rad/s)."""

    offsets: np.ndarray
    couplings: np.ndarray
    degenerate_offsets: bool = field(init=False, default=False)

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=float).reshape(-1)
        n = len(offsets)
        if n < 1:
            raise ValueError("need at least one spin")
        if not np.all(np.isfinite(offsets)):
            raise ValueError("offsets must be finite")
        couplings = np.asarray(self.couplings, dtype=float)
        if couplings.shape != (n, n):
            raise ValueError(f"coupling matrix must be {n}x{n}")
        if not np.array_equal(couplings, couplings.T):
            raise ValueError("coupling matrix must be symmetric")
        if np.any(np.diag(couplings) != 0):
            raise ValueError("coupling matrix must have a zero diagonal")
        degenerate = len(np.unique(offsets)) < n
        if degenerate:
            warnings.warn("coincident offsets: selective addressing is impossible", stacklevel=3)
        offsets.setflags(write=False)
        couplings = couplings.copy()
        couplings.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "couplings", couplings)
        object.__setattr__(self, "degenerate_offsets", degenerate)

    @property
    def n(self) -> int:
        return len(self.offsets)

    @classmethod
    def from_pairs(cls, offsets, pairs: dict[tuple[int, int], float]) -> SpinSystem:
        offsets = np.asarray(offsets, dtype=float)
        d = np.zeros((len(offsets), len(offsets)))
        for (k, l), value in pairs.items():
            d[k, l] = d[l, k] = value
        return cls(offsets, d)

    @classmethod
    def from_geometry(cls, geometry: Geometry, offsets=None) -> SpinSystem:
        n = geometry.n
        d = np.zeros((n, n))
        for k in range(n):
            for l in range(k + 1, n):
                d[k, l] = d[l, k] = dipolar_constant(geometry, k, l)
        return cls(np.zeros(n) if offsets is None else offsets, d)

    def relabel(self, perm) -> SpinSystem:
        """System with spin ``i`` renamed ``perm[i]``."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        return SpinSystem(self.offsets[inv], self.couplings[np.ix_(inv, inv)])


@dataclass(frozen=True)
class SelectiveDrive:
    """A weak RF drive tuned to spin ``target``.

    The drive reaches every spin; only the carrier offset singles out the
    target.  ``phase`` is in radians, times in seconds.
    """

    target: int
    amplitude: float
    carrier_offset: float
    phase: float = 0.0
    start: float = 0.0
    duration: float = 1.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("drive amplitude must be non-negative")
        if self.duration <= 0:
            raise ValueError("drive duration must be positive")

    @property
    def end(self) -> float:
        return self.start + self.duration

    def active(self, t: float) -> bool:
        return self.start <= t < self.end

    def drive_angle(self, t: float) -> float:
        """Instantaneous angle ``carrier_offset*(t - start) - phase``."""
        return self.carrier_offset * (t - self.start) - self.phase


def build_zeeman(system: SpinSystem) -> OperatorSum:
    """Rotating-frame offset term ``-sum_k dw_k I_k^z``."""
    n = system.n
    return op_sum((OperatorSum.spin(n, k, "Z", -w) for k, w in enumerate(system.offsets)), n)


def dipolar_pair(n: int, k: int, l: int, d: float) -> OperatorSum:
    """``d (2 I_k^z I_l^z - I_k^x I_l^x - I_k^y I_l^y)``."""
    return OperatorSum(n, {
        _pair_word(n, k, l, "Z"): 2.0 * d,
        _pair_word(n, k, l, "X"): -d,
        _pair_word(n, k, l, "Y"): -d,
    })


def heisenberg_pair(n: int, k: int, l: int, j: float) -> OperatorSum:
    """``j I_k . I_l``."""
    return OperatorSum(n, {_pair_word(n, k, l, a): j for a in "XYZ"})


def _pair_word(n, k, l, letter):
    word = ["E"] * n
    word[k] = word[l] = letter
    return "".join(word)


def build_dipolar(system: SpinSystem) -> OperatorSum:
    """Secular dipolar coupling summed over all pairs ``k < l``."""
    n = system.n
    pieces = [dipolar_pair(n, k, l, system.couplings[k, l])
              for k in range(n) for l in range(k + 1, n) if system.couplings[k, l] != 0]
    return op_sum(pieces, n)


def drive_hamiltonian(drive: SelectiveDrive, system: SpinSystem, t: float) -> OperatorSum:
    """Instantaneous selective-drive term acting on every spin.

    ``-w_RF sum_k [cos(a) I_k^x - sin(a) I_k^y]`` with
    ``a = carrier_offset*(t - start) - phase``; zero outside the window.
    """
    n = system.n
    if not drive.active(t) or drive.amplitude == 0:
        return OperatorSum.zero(n)
    a = drive.drive_angle(t)
    cx, cy = -drive.amplitude * math.cos(a), drive.amplitude * math.sin(a)
    terms = []
    for k in range(n):
        terms.append(OperatorSum.spin(n, k, "X", cx))
        terms.append(OperatorSum.spin(n, k, "Y", cy))
    return op_sum(terms, n)
