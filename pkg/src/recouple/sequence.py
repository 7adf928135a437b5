"""Pulse sequences: Mansfield cycle notation, WHH-4/MREV-16, recoupling cycles.

A :class:`PulseSequence` is an ordered tuple of events.  Delta rotations
(:class:`Delta`) take no time; :class:`Free` intervals carry all of the
cycle time; :class:`DriveWindow` marks a selective drive by reference.

Cycle text follows Mansfield's bracket notation, e.g. ``[Z,Y,X][Z,-Y,X]``.
Each bracket lists the toggling-frame images of ``I^z`` over the 6 tau
pattern ``tau P tau P 2tau P tau P tau``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .algebra import AXES, SiteRotation
from .model import SelectiveDrive

log = logging.getLogger(__name__)

HALF_PI = math.pi / 2
UNIT = {"X": (1.0, 0.0, 0.0), "Y": (0.0, 1.0, 0.0), "Z": (0.0, 0.0, 1.0)}
NONE = "-"  # W subcycle without selective pulses
IDEALIZED = None  # pi-train spacing meaning "zero the offsets analytically"
PI_TRAIN_FRACTION = 1 / 20  # default explicit pi-train spacing, in units of T


class SequenceSyntaxError(ValueError):
    """Malformed cycle text.  ``column`` is 1-based."""

    def __init__(self, message: str, column: int | None = None):
        self.column = column
        where = f" at column {column}" if column is not None else ""
        super().__init__(f"{message}{where}")


# -- events ----------------------------------------------------------------

@dataclass(frozen=True)
class Delta:
    rotation: SiteRotation

    @property
    def kind(self) -> str:
        return "DELTA_BROADBAND" if self.rotation.site is None else "DELTA_SELECTIVE"

    def inverse(self) -> Delta:
        return Delta(self.rotation.inverse())


@dataclass(frozen=True)
class Free:
    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("free-evolution intervals need a positive duration")

    kind = "FREE"


@dataclass(frozen=True)
class DriveWindow:
    drive: SelectiveDrive

    kind = "DRIVE_WINDOW"


Event = Union[Delta, Free, DriveWindow]


def pulse(axis: str, angle: float = HALF_PI, site: int | None = None) -> Delta:
    """Delta rotation about a signed coordinate axis, e.g. ``pulse('-y')``."""
    axis = axis.strip().upper()
    sign = -1.0 if axis.startswith("-") else 1.0
    return Delta(SiteRotation(site, UNIT[axis.lstrip("+-")], sign * angle))


@dataclass(frozen=True)
class PulseSequence:
    """Ordered events forming one cycle.

    ``zeeman_suppressed`` marks sequences whose fast broadband pi-train is
    treated analytically: propagation drops the offset term.
    """

    events: tuple
    zeeman_suppressed: bool = False
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))

    @property
    def cycle_time(self) -> float:
        return math.fsum(e.duration for e in self.events if isinstance(e, Free))

    @property
    def free_intervals(self) -> list[Free]:
        return [e for e in self.events if isinstance(e, Free)]

    def broadband_frame(self) -> np.ndarray:
        """Composed conjugation matrix of the broadband rotations."""
        m = np.eye(3, dtype=int)
        for e in self.events:
            if isinstance(e, Delta) and e.rotation.site is None:
                m = _compose(e.rotation.conjugation_matrix(), m)
        return m

    def closes(self, atol: float = 1e-12) -> bool:
        """True when the broadband rotations compose to the identity."""
        return bool(np.allclose(self.broadband_frame(), np.eye(3), atol=atol))

    def reflected(self) -> PulseSequence:
        """Time-reversed copy with every rotation inverted."""
        events = [e.inverse() if isinstance(e, Delta) else e for e in reversed(self.events)]
        return PulseSequence(tuple(events), self.zeeman_suppressed, self.label + "*")

    def is_time_symmetric(self) -> bool:
        return _canonical(self.events) == _canonical(self.reflected().events)

    def __add__(self, other: PulseSequence) -> PulseSequence:
        if self.zeeman_suppressed != other.zeeman_suppressed:
            raise ValueError("cannot join idealized and explicit pi-train sequences")
        label = "".join(x for x in (self.label, other.label))
        return PulseSequence(self.events + other.events, self.zeeman_suppressed, label)

    def describe(self) -> str:
        parts = []
        for e in self.events:
            if isinstance(e, Free):
                parts.append(f"{e.duration:.6g}")
            elif isinstance(e, Delta):
                parts.append(e.rotation.label())
            else:
                parts.append(f"drive[{e.drive.target}]")
        return ", ".join(parts)


def _compose(newer: np.ndarray, older: np.ndarray) -> np.ndarray:
    out = newer @ older
    if out.dtype.kind == "f":
        rounded = np.rint(out)
        if np.allclose(out, rounded, atol=1e-12):
            return rounded.astype(int)
    return out


def _canonical(events) -> list:
    """Event list with runs of commuting selective deltas sorted by site."""
    out, run = [], []

    def flush():
        sites = [d.rotation.site for d in run]
        if len(set(sites)) == len(sites):
            run.sort(key=lambda d: d.rotation.site)
        out.extend(run)
        run.clear()

    for e in events:
        if isinstance(e, Delta) and e.rotation.site is not None:
            run.append(e)
            continue
        flush()
        out.append(e)
    flush()
    return out


# -- Mansfield notation --------------------------------------------------------

@dataclass(frozen=True)
class CycleSpec:
    """Brackets of signed frame labels such as ``(('Z', 'Y', 'X'),)``."""

    brackets: tuple

    def __str__(self) -> str:
        return "".join("[" + ",".join(b) + "]" for b in self.brackets)

    @property
    def frames(self) -> list[str]:
        return [axis for b in self.brackets for axis in b]


def parse_mansfield(text: str) -> CycleSpec:
    """Parse bracketed cycle notation; case- and whitespace-insensitive."""
    brackets = []
    i, n = 0, len(text)

    def skip(i):
        while i < n and text[i].isspace():
            i += 1
        return i

    i = skip(i)
    if i == n:
        raise SequenceSyntaxError("empty cycle text")
    while i < n:
        if text[i] != "[":
            raise SequenceSyntaxError(f"expected '[' but found {text[i]!r}", i + 1)
        open_col = i + 1
        i = skip(i + 1)
        axes: list[tuple[str, int]] = []
        while True:
            col = i + 1
            sign = ""
            if i < n and text[i] == "-":
                sign = "-"
                i = skip(i + 1)
            if i >= n:
                raise SequenceSyntaxError("unterminated bracket", open_col)
            letter = text[i].upper()
            if letter not in AXES:
                raise SequenceSyntaxError(f"unknown axis {text[i]!r}", i + 1)
            axes.append((sign + letter, col))
            i = skip(i + 1)
            if i < n and text[i] == ",":
                i = skip(i + 1)
                continue
            if i < n and text[i] == "]":
                i = skip(i + 1)
                break
            found = repr(text[i]) if i < n else "end of text"
            raise SequenceSyntaxError(f"expected ',' or ']' but found {found}", i + 1)
        if len(axes) != 3:
            raise SequenceSyntaxError(f"bracket has {len(axes)} frames, expected 3", open_col)
        if axes[0][0] != "Z":
            raise SequenceSyntaxError(f"bracket must start in frame Z, not {axes[0][0]}",
                                      axes[0][1])
        letters = [a.lstrip("-") for a, _ in axes]
        if len(set(letters)) != 3:
            raise SequenceSyntaxError("bracket frames must use three distinct axes", open_col)
        brackets.append(tuple(a for a, _ in axes))
    return CycleSpec(tuple(brackets))


_HALF_PULSES = [pulse(a) for a in ("x", "-x", "y", "-y")]


def _frame_row(label: str) -> np.ndarray:
    sign = -1 if label.startswith("-") else 1
    row = np.zeros(3, dtype=int)
    row[AXES.index(label.lstrip("-"))] = sign
    return row


def _pulse_to(target: str, frame: np.ndarray) -> tuple[Delta, np.ndarray]:
    """The +-pi/2 x/y pulse that carries I^z to ``target`` after ``frame``."""
    want = _frame_row(target)
    for p in _HALF_PULSES:
        nxt = _compose(p.rotation.conjugation_matrix(), frame)
        if np.array_equal(nxt[2], want):
            return p, nxt
    raise ValueError(f"no pi/2 pulse reaches frame {target}")


def _bracket_events(bracket, tau: float) -> list:
    p1, f1 = _pulse_to(bracket[1], np.eye(3, dtype=int))
    p2, _ = _pulse_to(bracket[2], f1)
    durations = (tau, tau, 2 * tau, tau, tau)
    pulses = (p1, p2, p2.inverse(), p1.inverse())
    events = []
    for idx, d in enumerate(durations):
        events.append(Free(d))
        if idx < 4:
            events.append(pulses[idx])
    return events


def expand_cycle(spec: CycleSpec | str, tau: float) -> PulseSequence:
    """Timed events for a cycle spec, 6 tau per bracket."""
    if isinstance(spec, str):
        spec = parse_mansfield(spec)
    if not tau > 0:
        raise ValueError("tau must be positive")
    events = []
    for bracket in spec.brackets:
        events.extend(_bracket_events(bracket, tau))
    return PulseSequence(tuple(events), label=str(spec))


WHH4 = "[Z,Y,X]"
MREV16 = "[Z,Y,X][Z,-Y,X][Z,Y,-X][Z,-Y,-X]"


def build_whh4(tau: float) -> PulseSequence:
    return expand_cycle(WHH4, tau)


def build_mrev16(tau: float) -> PulseSequence:
    return expand_cycle(MREV16, tau)


# -- recoupling subcycles --------------------------------------------------------

def _pi_train(length: float, spacing: float | None) -> list:
    """Free evolution of ``length`` with an even broadband pi_x train."""
    if spacing is None:
        return [Free(length)]
    if not 0 < spacing < length:
        raise ValueError("pi-train spacing must lie strictly inside the interval")
    count = max(2, int(round(length / spacing)))
    if count % 2:
        log.warning("odd pi-train count %d per interval; using %d", count, count + 1)
        count += 1
    step = length / count
    events = [Free(step / 2)]
    for i in range(count):
        events.append(pulse("x" if i % 2 == 0 else "-x", math.pi))
        events.append(Free(step if i < count - 1 else step / 2))
    return events


def _w_events(assign: dict[int, str], T: float, spacing: float | None) -> list:
    """Slow WHH-4 skeleton with selective pi pulses opening and closing each interval."""
    skeleton = _bracket_events(("Z", "Y", "X"), T)
    selective = [(site, axis) for site, axis in sorted(assign.items()) if axis != NONE]
    events = []
    for e in skeleton:
        if isinstance(e, Free):
            events.extend(pulse(axis, math.pi, site) for site, axis in selective)
            events.extend(_pi_train(e.duration, spacing))
            events.extend(pulse(axis, -math.pi, site) for site, axis in reversed(selective))
        else:
            events.append(e)
    return events


def _check_axis(axis: str) -> str:
    axis = (axis or NONE).strip().upper()
    if axis in ("NONE", ""):
        axis = NONE
    if axis != NONE and axis not in AXES:
        raise ValueError(f"W subcycle axis must be one of -, X, Y, Z; got {axis!r}")
    return axis


def build_w_cycle(assign: dict[int, str], T: float,
                  pi_train_spacing: float | None = IDEALIZED) -> PulseSequence:
    """One W subcycle with ``W_k(assign[k])`` applied to each listed spin."""
    if not T > 0:
        raise ValueError("T must be positive")
    assign = {int(k): _check_axis(a) for k, a in assign.items()}
    label = "".join(f"W{k}({a})" for k, a in sorted(assign.items()))
    return PulseSequence(tuple(_w_events(assign, T, pi_train_spacing)),
                         zeeman_suppressed=pi_train_spacing is None, label=label)


def default_pi_train_spacing(T: float) -> float:
    """Explicit pi-train spacing used when none is given: ``T/20``."""
    return T * PI_TRAIN_FRACTION


def build_w_subcycle(target: int, axis: str, T: float,
                     pi_train_spacing: float | None = IDEALIZED,
                     n: int | None = None) -> PulseSequence:
    """``W_target(axis)``; ``axis='-'`` gives the broadband-only ``W(-)``."""
    if target < 0 or (n is not None and target >= n):
        raise IndexError(f"target spin {target} out of range")
    return build_w_cycle({target: axis}, T, pi_train_spacing)


PLAIN = "PLAIN"
SYMMETRIZED = "SYMMETRIZED"


@dataclass(frozen=True)
class SuperCycle:
    """Per-spin subcycle schedule and the merged event list."""

    schedule: dict
    sequence: PulseSequence
    spectator_schedule: tuple = field(default=())

    def axes_for(self, spin: int) -> tuple:
        return self.schedule.get(spin, self.spectator_schedule)


def build_super_whh(k: int, l: int, T: float, mode: str = PLAIN,
                    pi_train_spacing: float | None = IDEALIZED) -> SuperCycle:
    """Super-WHH recoupling ``k`` and ``l`` while every other spin sees ``W(-)``.

    PLAIN runs 3 subcycles (18 T); SYMMETRIZED appends their time
    reflections for a 36 T cycle whose odd Magnus orders vanish.
    """
    if k == l:
        raise ValueError("recoupling needs two distinct spins")
    mode = mode.upper()
    if mode not in (PLAIN, SYMMETRIZED):
        raise ValueError(f"unknown super-WHH mode {mode!r}")
    k_axes, l_axes = ["Z", "Y", "X"], ["Z", "X", "Y"]
    parts = [build_w_cycle({k: a, l: b}, T, pi_train_spacing) for a, b in zip(k_axes, l_axes)]
    if mode == SYMMETRIZED:
        parts += [p.reflected() for p in reversed(parts)]
        k_axes += [a + "*" for a in reversed(k_axes)]
        l_axes += [a + "*" for a in reversed(l_axes)]
    seq = parts[0]
    for p in parts[1:]:
        seq = seq + p
    seq = PulseSequence(seq.events, seq.zeeman_suppressed, f"super-WHH({k},{l},{mode.lower()})")
    schedule = {k: tuple(k_axes), l: tuple(l_axes)}
    return SuperCycle(schedule, seq, tuple(NONE for _ in k_axes))
