"""Joint-space demand histories: load, synthesize, filter, splice.

A task is a uniformly sampled history of joint velocities and torques that
a candidate drivetrain must realize.  On disk it is a plain CSV with header

    t,w1,...,wn,tau1,...,taun

(time in seconds, velocities rad/s, torques N*m).  In memory a Trajectory
additionally remembers named segments so spliced tasks (walk then lift)
keep their provenance for per-segment energy reporting.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import butter, filtfilt

from .errors import DimensionError, ParseError, ValidationError

# Samples may deviate from uniform spacing by at most this (seconds).
DT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Segment:
    """Half-open sample range [start, stop) with a provenance label."""

    name: str
    start: int
    stop: int

    @property
    def length(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray         # (T,) seconds, uniform spacing
    velocities: np.ndarray    # (T, n) rad/s
    torques: np.ndarray       # (T, n) N*m
    segments: tuple[Segment, ...] = ()

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        w = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        tau = np.atleast_2d(np.asarray(self.torques, dtype=float))
        if t.ndim != 1 or len(t) < 2:
            raise ValidationError("times", "need at least 2 samples")
        if w.shape != tau.shape or w.shape[0] != len(t):
            raise DimensionError(
                f"shape mismatch: times {t.shape}, velocities {w.shape}, torques {tau.shape}"
            )
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(w)) and np.all(np.isfinite(tau))):
            raise ValidationError("samples", "all samples must be finite")
        steps = np.diff(t)
        dt = float(steps[0])
        if dt <= 0 or np.any(np.abs(steps - dt) > DT_TOLERANCE):
            raise ValidationError("times", f"sampling must be uniform to within {DT_TOLERANCE} s")
        segments = tuple(self.segments) or (Segment("task", 0, len(t)),)
        covered = 0
        for seg in segments:
            if seg.start != covered or seg.stop <= seg.start:
                raise ValidationError("segments", f"segment {seg.name!r} breaks the partition")
            covered = seg.stop
        if covered != len(t):
            raise ValidationError("segments", "segments must cover all samples")
        for arr in (t, w, tau):
            arr.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "velocities", w)
        object.__setattr__(self, "torques", tau)
        object.__setattr__(self, "segments", segments)

    def __eq__(self, other):
        return (
            isinstance(other, Trajectory)
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.velocities, other.velocities)
            and np.array_equal(self.torques, other.torques)
            and self.segments == other.segments
        )

    @property
    def sample_count(self) -> int:
        return len(self.times)

    @property
    def joint_count(self) -> int:
        return self.velocities.shape[1]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def segment_slice(self, name: str) -> slice:
        for seg in self.segments:
            if seg.name == name:
                return slice(seg.start, seg.stop)
        raise KeyError(f"no segment {name!r}")


def synthesize_harmonic(
    velocity_amplitudes,
    torque_amplitudes,
    frequency_hz: float,
    sample_count: int,
    dt: float,
    name: str = "harmonic",
) -> Trajectory:
    """Single-tone task: w_i = w_hat_i cos(2 pi f t), tau_i = tau_hat_i sin(2 pi f t).

    The quarter-period phase shift between velocity and torque visits all
    four quadrants of each motor's operation domain.
    """
    w_hat = np.asarray(velocity_amplitudes, dtype=float)
    tau_hat = np.asarray(torque_amplitudes, dtype=float)
    if w_hat.shape != tau_hat.shape or w_hat.ndim != 1:
        raise DimensionError("amplitude vectors must be 1-D and equal length")
    t = np.arange(sample_count) * dt
    phase = 2.0 * np.pi * frequency_hz * t
    return Trajectory(
        times=t,
        velocities=np.cos(phase)[:, None] * w_hat[None, :],
        torques=np.sin(phase)[:, None] * tau_hat[None, :],
        segments=(Segment(name, 0, sample_count),),
    )


def lowpass(trajectory: Trajectory, cutoff_hz: float) -> Trajectory:
    """Zero-phase first-order Butterworth smoothing of velocities and torques.

    The channel means are removed before filtering and restored after, so
    the DC content survives exactly; forward-backward filtering keeps the
    result time-reversal symmetric.
    """
    nyquist = 0.5 / trajectory.dt
    if not (0.0 < cutoff_hz < nyquist):
        raise ValidationError("cutoff_hz", f"cutoff must lie in (0, {nyquist:g}) Hz")
    b, a = butter(1, cutoff_hz / nyquist)

    def smooth(arr):
        mean = arr.mean(axis=0, keepdims=True)
        return filtfilt(b, a, arr - mean, axis=0) + mean

    return Trajectory(
        times=trajectory.times,
        velocities=smooth(trajectory.velocities),
        torques=smooth(trajectory.torques),
        segments=trajectory.segments,
    )


def concatenate(parts: list[Trajectory]) -> Trajectory:
    """Splice tasks end to end; all parts must share dt and joint count."""
    if not parts:
        raise ValueError("nothing to concatenate")
    dt = parts[0].dt
    width = parts[0].joint_count
    for p in parts[1:]:
        if abs(p.dt - dt) > DT_TOLERANCE:
            raise ValidationError("times", f"parts disagree on dt ({p.dt} vs {dt})")
        if p.joint_count != width:
            raise DimensionError(f"parts disagree on joint count ({p.joint_count} vs {width})")
    total = sum(p.sample_count for p in parts)
    segments, offset = [], 0
    for p in parts:
        for seg in p.segments:
            segments.append(Segment(seg.name, seg.start + offset, seg.stop + offset))
        offset += p.sample_count
    return Trajectory(
        times=np.arange(total) * dt,
        velocities=np.concatenate([p.velocities for p in parts]),
        torques=np.concatenate([p.torques for p in parts]),
        segments=tuple(segments),
    )


def load_trajectory(path, name: str | None = None) -> Trajectory:
    """Read the documented CSV format; segment name defaults to the file stem."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return parse_trajectory_csv(text, name=name or path.stem)


def parse_trajectory_csv(text: str, name: str = "task") -> Trajectory:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty trajectory file")
    header = [h.strip() for h in lines[0].split(",")]
    if header[0] != "t":
        raise ParseError(f"first column must be 't', got {header[0]!r}")
    n = (len(header) - 1) // 2
    expected = ["t"] + [f"w{i}" for i in range(1, n + 1)] + [f"tau{i}" for i in range(1, n + 1)]
    if n < 1 or header != expected:
        raise ParseError(f"header must be t,w1..wn,tau1..taun; got {','.join(header)}")
    try:
        data = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ParseError(f"bad numeric row: {exc}") from exc
    if data.shape[1] != len(header):
        raise ParseError(f"rows have {data.shape[1]} fields, header has {len(header)}")
    return Trajectory(
        times=data[:, 0],
        velocities=data[:, 1 : 1 + n],
        torques=data[:, 1 + n :],
        segments=(Segment(name, 0, data.shape[0]),),
    )


def save_trajectory(trajectory: Trajectory, path) -> None:
    n = trajectory.joint_count
    header = ",".join(["t"] + [f"w{i}" for i in range(1, n + 1)] + [f"tau{i}" for i in range(1, n + 1)])
    rows = [header]
    for k in range(trajectory.sample_count):
        fields = [repr(float(trajectory.times[k]))]
        fields += [repr(float(x)) for x in trajectory.velocities[k]]
        fields += [repr(float(x)) for x in trajectory.torques[k]]
        rows.append(",".join(fields))
    Path(path).write_text("\n".join(rows) + "\n")
