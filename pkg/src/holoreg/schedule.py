"""Timed pulse schedules and their line-oriented text form.

Each segment is a small frozen dataclass. A schedule serialises to one line
per segment, ``kind key=value ...``, and parses back to an equal schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterable, Union


class ScheduleError(ValueError):
    pass


class GradientLimitError(ScheduleError):
    pass


@dataclass(frozen=True)
class GradientPulse:
    delta_k: float
    duration: float
    delta_B: float = 0.0
    kind = "gradient"


@dataclass(frozen=True)
class ResonanceWindow:
    """Bring ``target`` ('spins' or 'cpb') into resonance with the cavity.

    For the CPB, ``detuning`` is its offset from the cavity during the
    window and ``phase`` the phase of the exchange coupling. The 'ramp'
    profile sweeps the spin detuning linearly from +ramp_span to -ramp_span.
    """

    duration: float
    target: str = "spins"
    profile: str = "square"
    detuning: float = 0.0
    phase: float = 0.0
    ramp_span: float = 0.0
    kind = "window"


@dataclass(frozen=True)
class CpbDrive:
    nx: float
    ny: float
    nz: float
    angle: float
    duration: float = 0.0
    kind = "drive"


@dataclass(frozen=True)
class EchoPulse:
    """Refocusing pulse on all spins with area pi(1 + error)."""

    error: float = 0.0
    phase: float = 0.0
    duration: float = 0.0
    kind = "echo"


@dataclass(frozen=True)
class Wait:
    duration: float
    kind = "wait"


@dataclass(frozen=True)
class FrameShift:
    """Virtual Z: multiplies each basis state by e^{i phase n_target}."""

    target: str
    phase: float
    duration: float = 0.0
    kind = "frame"


@dataclass(frozen=True)
class Measure:
    target: str = "cpb"
    label: str = ""
    duration: float = 0.0
    kind = "measure"


Segment = Union[GradientPulse, ResonanceWindow, CpbDrive, EchoPulse, Wait, FrameShift, Measure]
SEGMENT_TYPES = {cls.kind: cls for cls in (GradientPulse, ResonanceWindow, CpbDrive, EchoPulse, Wait, FrameShift, Measure)}
_TARGETS = {"spins", "cpb", "cavity"}


def _check_segment(seg: Segment) -> None:
    if seg.duration < 0:
        raise ScheduleError(f"{seg.kind} segment has negative duration {seg.duration}")
    if isinstance(seg, ResonanceWindow):
        if seg.target not in ("spins", "cpb"):
            raise ScheduleError(f"resonance window target {seg.target!r}")
        if seg.profile not in ("square", "ramp"):
            raise ScheduleError(f"unknown window profile {seg.profile!r}")
    if isinstance(seg, (FrameShift, Measure)) and seg.target not in _TARGETS:
        raise ScheduleError(f"unknown target {seg.target!r}")


@dataclass(frozen=True)
class PulseSchedule:
    segments: tuple = ()

    def __post_init__(self):
        segs = tuple(self.segments)
        for seg in segs:
            _check_segment(seg)
        object.__setattr__(self, "segments", segs)

    def __iter__(self):
        return iter(self.segments)

    def __len__(self):
        return len(self.segments)

    def __add__(self, other: "PulseSchedule") -> "PulseSchedule":
        return PulseSchedule(self.segments + tuple(other.segments))

    @property
    def duration(self) -> float:
        return sum(seg.duration for seg in self.segments)

    def net_delta_k(self) -> float:
        return sum(seg.delta_k for seg in self.segments if isinstance(seg, GradientPulse))

    def check_limits(self, max_delta_B: float) -> None:
        """Raise if any gradient pulse needs more than ``max_delta_B``."""
        for i, seg in enumerate(self.segments):
            if isinstance(seg, GradientPulse) and abs(seg.delta_B) > max_delta_B * (1 + 1e-12):
                raise GradientLimitError(
                    f"segment {i}: |dB| = {abs(seg.delta_B):.4g} T exceeds the "
                    f"hardware limit {max_delta_B:.4g} T"
                )

    def to_text(self) -> str:
        lines = []
        for seg in self.segments:
            parts = [seg.kind]
            for f in fields(seg):
                value = getattr(seg, f.name)
                if not isinstance(value, str):
                    value = repr(float(value))
                parts.append(f"{f.name}={value}")
            lines.append(" ".join(parts))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str) -> "PulseSchedule":
        segments = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            kind, *pairs = line.split()
            if kind not in SEGMENT_TYPES:
                raise ScheduleError(f"line {lineno}: unknown segment kind {kind!r}")
            seg_cls = SEGMENT_TYPES[kind]
            types = {f.name: f.type for f in fields(seg_cls)}
            kwargs = {}
            for pair in pairs:
                key, _, raw = pair.partition("=")
                if key not in types:
                    raise ScheduleError(f"line {lineno}: {kind} has no field {key!r}")
                kwargs[key] = raw if types[key] == "str" else float(raw)
            segments.append(seg_cls(**kwargs))
        return cls(tuple(segments))


def concat(parts: Iterable[PulseSchedule]) -> PulseSchedule:
    segs: list = []
    for p in parts:
        segs.extend(p.segments)
    return PulseSchedule(tuple(segs))
