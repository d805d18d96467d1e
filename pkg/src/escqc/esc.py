"""Extremum-seeking controller.

Each knob k is dithered as ``A_k sin(w_k t_i + phase_k)`` on the grid
``t_i = i / N_t``. All knobs are dithered at once; the objective samples are
high-pass filtered (mean removed), correlated with each dither to give ``xi_k``,
and the base value moves by ``gain_k * xi_k``.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np


class EscError(RuntimeError):
    """Objective failure inside an ESC iteration."""


@dataclass(frozen=True)
class EscKnob:
    name: str
    amplitude: float
    omega: float
    phase: float = 0.0
    gain: float = 1.0

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError(f"knob {self.name!r}: amplitude must be > 0, got {self.amplitude}")
        if not math.isfinite(self.gain) or not math.isfinite(self.phase):
            raise ValueError(f"knob {self.name!r}: gain and phase must be finite")
        cycles = self.omega / (2 * math.pi)
        if not self.omega > 0 or abs(cycles - round(cycles)) > 1e-9:
            raise ValueError(f"knob {self.name!r}: omega must be a positive multiple of 2*pi, got {self.omega}")


@dataclass(frozen=True)
class EscSchedule:
    n_points: int = 30

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError(f"n_points must be >= 2, got {self.n_points}")

    @property
    def times(self) -> np.ndarray:
        # half-open grid on [0, 1): full periods sum exactly
        return np.arange(self.n_points) / self.n_points


@dataclass(frozen=True)
class EscRecord:
    iteration: int
    knob: str
    base: float  # after the update
    xi: float
    delta: float


@dataclass
class EscState:
    base: dict[str, float]
    iteration: int = 0
    history: list[EscRecord] = field(default_factory=list)

    def __post_init__(self):
        for k, v in self.base.items():
            if not math.isfinite(v):
                raise ValueError(f"base value for {k!r} must be finite, got {v}")

    def values(self, knobs: Sequence[EscKnob]) -> np.ndarray:
        return np.array([self.base[k.name] for k in knobs], dtype=float)


# Table I: the g1*g2 product and the two spin phases
TABLE_I_KNOBS = (
    EscKnob("g1g2", 0.00525, 8 * math.pi, 0.0, 10000.0),
    EscKnob("psi1", 0.021, 4 * math.pi, 0.0, 7500.0),
    EscKnob("psi2", 0.021, 4 * math.pi, math.pi, 10500.0),
)

# Same as TABLE_I_KNOBS except psi2 is dithered in quadrature (phase pi/2). With
# phase pi the two psi dithers are exact negatives of each other, so the
# common-mode phase error psi1 + psi2 never shows up in either channel.
DEFAULT_KNOBS = (
    TABLE_I_KNOBS[0],
    TABLE_I_KNOBS[1],
    EscKnob("psi2", 0.021, 4 * math.pi, math.pi / 2, 10500.0),
)

KNOB_PRESETS = {"default": DEFAULT_KNOBS, "table1": TABLE_I_KNOBS}


def perturbation_sequence(knob: EscKnob, schedule: EscSchedule) -> np.ndarray:
    return knob.amplitude * np.sin(knob.omega * schedule.times + knob.phase)


def high_pass(samples: Sequence[float]) -> np.ndarray:
    """Remove the window mean (rejects DC and drift slower than the window)."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("high_pass needs at least two samples")
    return x - x.mean()


def demodulate(perturbation: Sequence[float], filtered: Sequence[float]) -> float:
    """xi = sum_i perturbation_i * filtered_i / N_t."""
    a = np.asarray(perturbation, dtype=float)
    f = np.asarray(filtered, dtype=float)
    if a.shape != f.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {f.shape}")
    return float(np.dot(a, f) / a.size)


def esc_iteration(
    state: EscState,
    knobs: Sequence[EscKnob],
    schedule: EscSchedule,
    objective: Callable[[np.ndarray], float],
) -> EscState:
    """One dither/demodulate/update cycle; exactly ``N_t`` objective calls.

    ``objective`` receives the vector of knob values in ``knobs`` order. It is
    maximized.
    """
    dithers = np.stack([perturbation_sequence(k, schedule) for k in knobs])
    base = state.values(knobs)
    samples = np.empty(schedule.n_points)
    for i in range(schedule.n_points):
        try:
            samples[i] = float(objective(base + dithers[:, i]))
        except Exception as exc:
            raise EscError(
                f"objective failed at ESC iteration {state.iteration}, sample {i} of {schedule.n_points}"
            ) from exc
    filtered = high_pass(samples)
    new_base = dict(state.base)
    history = list(state.history)
    for j, k in enumerate(knobs):
        xi = demodulate(dithers[j], filtered)
        delta = k.gain * xi
        new_base[k.name] = state.base[k.name] + delta
        history.append(EscRecord(state.iteration, k.name, new_base[k.name], xi, delta))
    return EscState(new_base, state.iteration + 1, history)


def run_esc(
    state: EscState,
    knobs: Sequence[EscKnob],
    schedule: EscSchedule,
    objective: Callable[[np.ndarray], float],
    n_iterations: int,
) -> tuple[EscState, list[EscRecord]]:
    """Apply ``n_iterations`` updates. Returns the final state and this run's records."""
    if n_iterations < 1:
        raise ValueError(f"n_iterations must be >= 1, got {n_iterations}")
    start = len(state.history)
    for _ in range(n_iterations):
        state = esc_iteration(state, knobs, schedule, objective)
    return state, state.history[start:]


def write_trace_csv(path, records: Sequence[EscRecord], header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "knob", "base", "xi", "delta"])
        for r in records:
            w.writerow([r.iteration, r.knob, repr(r.base), repr(r.xi), repr(r.delta)])
