"""Closed-loop driver: drifting plant + DRB objective + ESC on a simulated clock."""

from __future__ import annotations

import bisect
import csv
import itertools
import logging
import math
from collections.abc import Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .drb import DrbDesign, drb_runtime, run_drb
from .esc import DEFAULT_KNOBS, EscKnob, EscRecord, EscSchedule, EscState, esc_iteration
from .ion import (
    HOUR,
    K_MS,
    ControlState,
    DriftConfig,
    DriftTrajectory,
    IonPlant,
    PhysicalFn,
    PhysicalState,
    map_ms,
    trajectory_physical,
)
from .quantum import average_gate_fidelity, ms_gate
from .rng import derive_seed

log = logging.getLogger(__name__)

MINUTE = 60.0
NOMINAL_KNOBS = {"g1g2": 1.0, "psi1": 0.0, "psi2": 0.0}
GAIN_FLOOR = 1e-3  # RF gain product cannot go negative

# Table II rows: calibration interval, DRB circuits/shots, ESC iterations, N_t
TABLE_II = {
    1: dict(interval_min=75.0, circuits_per_depth=5, shots_per_circuit=18, iterations=3, n_points=30),
    2: dict(interval_min=70.0, circuits_per_depth=6, shots_per_circuit=16, iterations=5, n_points=28),
    3: dict(interval_min=50.0, circuits_per_depth=6, shots_per_circuit=21, iterations=5, n_points=30),
}


@dataclass(frozen=True)
class LoopConfig:
    duration_h: float = 15.0
    interval_min: float = 75.0
    iterations: int = 3
    n_points: int = 30
    knobs: tuple[EscKnob, ...] = DEFAULT_KNOBS
    drb: DrbDesign = field(default_factory=DrbDesign)
    drift: DriftConfig = field(default_factory=DriftConfig)
    initial_offsets: Mapping[str, float] = field(default_factory=dict)
    report_every_min: float = 5.0
    advance_drift: bool = True

    def __post_init__(self):
        if not self.interval_min > 0:
            raise ValueError(f"interval_min must be > 0, got {self.interval_min}")
        if not self.duration_h * 60 >= self.interval_min:
            raise ValueError(
                f"duration_h ({self.duration_h} h) must be at least one interval ({self.interval_min} min)"
            )
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not self.report_every_min > 0:
            raise ValueError(f"report_every_min must be > 0, got {self.report_every_min}")
        names = [k.name for k in self.knobs]
        unknown = set(names) - set(NOMINAL_KNOBS)
        if unknown or len(set(names)) != len(names):
            raise ValueError(f"knobs must be distinct names from {sorted(NOMINAL_KNOBS)}, got {names}")
        bad = set(self.initial_offsets) - set(NOMINAL_KNOBS)
        if bad:
            raise ValueError(f"initial_offsets has unknown knobs {sorted(bad)}")
        EscSchedule(self.n_points)

    @property
    def schedule(self) -> EscSchedule:
        return EscSchedule(self.n_points)

    def initial_knobs(self) -> dict[str, float]:
        return {k: v + float(self.initial_offsets.get(k, 0.0)) for k, v in NOMINAL_KNOBS.items()}

    def with_overrides(self, params: Mapping[str, object]) -> "LoopConfig":
        """Copy with overrides; DrbDesign field names are routed into ``drb``."""
        loop_names = {f.name for f in fields(LoopConfig)}
        drb_names = {f.name for f in fields(DrbDesign)}
        top, drb = {}, {}
        for k, v in params.items():
            if k in loop_names:
                top[k] = v
            elif k in drb_names:
                drb[k] = v
            else:
                raise ValueError(f"unknown hyperparameter {k!r}")
        if drb:
            top["drb"] = replace(top.get("drb", self.drb), **drb)
        return replace(self, **top)


def table_ii_config(set_id: int, base: LoopConfig | None = None) -> LoopConfig:
    return (base or LoopConfig()).with_overrides(TABLE_II[set_id])


# ---------------------------------------------------------------------------
# plant helpers


def controls_from_knobs(values: Mapping[str, float]) -> tuple[ControlState, ControlState]:
    """The g1g2 knob sets g1 = g2 = sqrt(g1g2); psi knobs set each qubit's phase.

    The applied product is floored at ``GAIN_FLOOR``; the knob value itself is not
    touched, so the controller state stays exactly what the update rule produced.
    """
    v = {**NOMINAL_KNOBS, **values}
    if not math.isfinite(v["g1g2"]):
        raise ValueError(f"g1g2 must be finite, got {v['g1g2']}")
    if v["g1g2"] < GAIN_FLOOR:
        log.info("g1g2 command %.4g below actuator floor, applying %g", v["g1g2"], GAIN_FLOOR)
    g = math.sqrt(max(v["g1g2"], GAIN_FLOOR))
    return ControlState(g, v["psi1"]), ControlState(g, v["psi2"])


def ideal_knobs(p1: PhysicalState, p2: PhysicalState) -> dict[str, float]:
    """Knob values that restore the nominal MS gate (analytic inverse of the map)."""
    return {"g1g2": 1.0 / (p1.g2e * p2.g2e), "psi1": -p1.psi_2q, "psi2": -p2.psi_2q}


_MS_NOMINAL = ms_gate(K_MS, 0.0, 0.0)


def true_error_rate(p1: PhysicalState, p2: PhysicalState, controls: tuple[ControlState, ControlState]) -> float:
    """Exact MS gate infidelity against MS(pi/2, 0, 0); the out-of-loop probe."""
    mp = map_ms(p1, controls[0], p2, controls[1])
    return 1.0 - average_gate_fidelity(ms_gate(mp.chi, mp.phi1, mp.phi2), _MS_NOMINAL)


class Calibrator:
    """Runs ESC iterations against DRB on a plant, charging device time to a clock."""

    def __init__(self, cfg: LoopConfig, physical: PhysicalFn, clock: float = 0.0):
        self.cfg = cfg
        self.physical = physical
        self.clock = clock
        self.eval_cost = drb_runtime(cfg.drb, 1)
        self.n_evals = 0
        self.samples: list[tuple[float, float]] = []  # (plant time, F-hat)
        self.state = EscState(cfg.initial_knobs())

    def knob_values(self) -> dict[str, float]:
        return dict(self.state.base)

    def objective_at(self, values: Mapping[str, float], t: float, seed: int) -> float:
        plant = IonPlant(self.physical, controls_from_knobs(values))
        return run_drb(self.cfg.drb, plant, t, seed=seed).objective

    def iterate(self) -> EscState:
        names = [k.name for k in self.cfg.knobs]
        t_iter = self.clock

        def objective(v: np.ndarray) -> float:
            t = self.clock if self.cfg.advance_drift else t_iter
            seed = derive_seed(self.cfg.drb.rng_seed, "eval", self.n_evals)
            f = self.objective_at({**self.state.base, **dict(zip(names, v))}, t, seed)
            self.n_evals += 1
            self.clock += self.eval_cost
            self.samples.append((t, f))
            return f

        self.state = esc_iteration(self.state, self.cfg.knobs, self.cfg.schedule, objective)
        return self.state


# ---------------------------------------------------------------------------
# closed loop


KNOB_COLUMNS = ("g1g2", "psi1", "psi2")
PHYS_COLUMNS = ("g2e_0", "g2e_1", "psi_2q_0", "psi_2q_1")


@dataclass
class LoopTrace:
    t: np.ndarray  # seconds
    err_controlled: np.ndarray
    err_uncontrolled: np.ndarray
    knobs: np.ndarray  # (n, 3) in KNOB_COLUMNS order, controls in effect at t
    physical: np.ndarray  # (n, 4) in PHYS_COLUMNS order
    fhat: np.ndarray  # mean F-hat of the latest finished ESC iteration (nan before the first)
    records: list[EscRecord] = field(default_factory=list)
    samples: list[tuple[float, float]] = field(default_factory=list)
    charged_seconds: float = 0.0
    n_calibrations: int = 0

    COLUMNS = ("t_min", "err_controlled", "err_uncontrolled", *KNOB_COLUMNS, *PHYS_COLUMNS, "fhat")

    def rows(self):
        for i in range(self.t.size):
            yield [
                self.t[i] / MINUTE, self.err_controlled[i], self.err_uncontrolled[i],
                *self.knobs[i], *self.physical[i], self.fhat[i],
            ]

    def to_csv(self, path, header: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for row in self.rows():
                w.writerow([repr(float(x)) for x in row])


def runtime_min_per_hour(cfg: LoopConfig) -> float:
    """Device minutes spent calibrating per wall-clock hour."""
    per_cal = cfg.iterations * cfg.n_points * drb_runtime(cfg.drb, 1)
    return per_cal / MINUTE * (60.0 / cfg.interval_min)


def _horizon(cfg: LoopConfig) -> float:
    per_cal = cfg.iterations * cfg.n_points * drb_runtime(cfg.drb, 1)
    return cfg.duration_h * HOUR + per_cal + 2 * cfg.drift.dt


def run_closed_loop(cfg: LoopConfig, trajectory: DriftTrajectory | None = None) -> LoopTrace:
    """Calibrate every ``interval_min`` (first at t=0) and probe the true error.

    Controls are held between ESC updates. A calibration that overruns its slot
    delays the next one. The uncontrolled baseline keeps the t=0 controls.
    """
    duration = cfg.duration_h * HOUR
    traj = trajectory or DriftTrajectory(cfg.drift, horizon=_horizon(cfg))
    physical = trajectory_physical(traj)
    cal = Calibrator(cfg, physical)
    initial = cfg.initial_knobs()

    update_t = [0.0]
    update_v = [initial]
    update_f = [math.nan]
    n_cal = 0
    while True:
        start = max(n_cal * cfg.interval_min * MINUTE, cal.clock)
        if start >= duration:
            break
        cal.clock = start
        for _ in range(cfg.iterations):
            first = len(cal.samples)
            cal.iterate()
            update_t.append(cal.clock)
            update_v.append(cal.knob_values())
            update_f.append(float(np.mean([f for _, f in cal.samples[first:]])))
        n_cal += 1

    times = np.arange(0.0, duration + 1e-9, cfg.report_every_min * MINUTE)
    n = times.size
    err_c, err_u, fhat = np.empty(n), np.empty(n), np.empty(n)
    knobs = np.empty((n, len(KNOB_COLUMNS)))
    phys = np.empty((n, len(PHYS_COLUMNS)))
    c_unc = controls_from_knobs(initial)
    for i, t in enumerate(times):
        j = bisect.bisect_right(update_t, t) - 1
        vals = {**NOMINAL_KNOBS, **update_v[j]}
        p1, p2 = physical(0, t), physical(1, t)
        err_c[i] = true_error_rate(p1, p2, controls_from_knobs(vals))
        err_u[i] = true_error_rate(p1, p2, c_unc)
        knobs[i] = [vals[k] for k in KNOB_COLUMNS]
        phys[i] = [p1.g2e, p2.g2e, p1.psi_2q, p2.psi_2q]
        fhat[i] = update_f[j]
    return LoopTrace(
        t=times, err_controlled=err_c, err_uncontrolled=err_u, knobs=knobs, physical=phys, fhat=fhat,
        records=list(cal.state.history), samples=cal.samples,
        charged_seconds=cal.n_evals * cal.eval_cost, n_calibrations=n_cal,
    )


def suppression_ratio(trace: LoopTrace) -> float:
    """mean(uncontrolled error) / mean(controlled error); +inf when control is perfect."""
    if trace.t.size == 0:
        raise ValueError("empty trace")
    unc = float(np.mean(trace.err_uncontrolled))
    ctrl = float(np.mean(trace.err_controlled))
    if ctrl <= 0.0:
        log.warning("controlled error is identically zero; suppression ratio is degenerate (+inf)")
        return math.inf
    return unc / ctrl


# ---------------------------------------------------------------------------
# grid search


@dataclass
class GridResult:
    params: dict
    runtime_min_per_hour: float
    suppression: float
    mean_err_controlled: float = math.nan
    mean_err_uncontrolled: float = math.nan
    error: str | None = None
    uncontrolled: np.ndarray | None = field(default=None, repr=False)


def expand_space(space) -> list[dict]:
    """A dict of lists is a cartesian product; a list of dicts is an explicit point list."""
    if isinstance(space, Mapping):
        if "points" in space:
            return expand_space(space["points"])
        if not space:
            raise ValueError("empty search space")
        keys = list(space)
        for k in keys:
            if not isinstance(space[k], Sequence) or isinstance(space[k], str) or not space[k]:
                raise ValueError(f"space entry {k!r} must be a non-empty list")
        return [dict(zip(keys, combo)) for combo in itertools.product(*(space[k] for k in keys))]
    points = [dict(p) for p in space]
    if not points:
        raise ValueError("empty search space")
    return points


def _run_cell(args) -> GridResult:
    base, params = args
    try:
        cfg = base.with_overrides(params)
        trace = run_closed_loop(cfg)
        return GridResult(
            params=params, runtime_min_per_hour=runtime_min_per_hour(cfg),
            suppression=suppression_ratio(trace),
            mean_err_controlled=float(trace.err_controlled.mean()),
            mean_err_uncontrolled=float(trace.err_uncontrolled.mean()),
            uncontrolled=trace.err_uncontrolled,
        )
    except Exception as exc:  # per-cell failures are recorded, the search continues
        log.warning("grid cell %s failed: %s", params, exc)
        return GridResult(params=params, runtime_min_per_hour=math.nan, suppression=math.nan, error=repr(exc))


def grid_search(space, base: LoopConfig, max_workers: int = 1) -> list[GridResult]:
    """Run every cell on the drift trajectory defined by ``base.drift``.

    Results come back in space order regardless of ``max_workers``.
    """
    jobs = [(base, p) for p in expand_space(space)]
    if max_workers > 1:
        with ProcessPoolExecutor(max_workers) as ex:
            return list(ex.map(_run_cell, jobs))
    return [_run_cell(j) for j in jobs]


def write_grid_csv(path, results: Sequence[GridResult], header: str | None = None) -> None:
    keys = sorted({k for r in results for k in r.params})
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*keys, "runtime_min_per_hour", "suppression", "mean_err_controlled",
                    "mean_err_uncontrolled", "error"])
        for r in results:
            w.writerow([
                *(_fmt(r.params.get(k, "")) for k in keys),
                repr(r.runtime_min_per_hour), repr(r.suppression),
                repr(r.mean_err_controlled), repr(r.mean_err_uncontrolled), r.error or "",
            ])


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return str(v)


# ---------------------------------------------------------------------------
# static-offset recovery


@dataclass
class OffsetDemoRow:
    calibration: int
    t_min: float
    knobs: dict[str, float]
    residual: dict[str, float]
    reference_fhat: float
    error_rate: float


def run_offset_demo(
    cfg: LoopConfig,
    n_calibrations: int = 8,
    trajectory: DriftTrajectory | None = None,
    reference: DrbDesign | None = None,
) -> list[OffsetDemoRow]:
    """Start from ``cfg.initial_offsets`` and let ESC remove them.

    After each calibration (``cfg.iterations`` ESC iterations) a reference DRB run
    with the current controls probes the gate, as an out-of-loop check. Row 0 is
    the state before any calibration.
    """
    if n_calibrations < 1:
        raise ValueError("n_calibrations must be >= 1")
    per_cal = cfg.iterations * cfg.n_points * drb_runtime(cfg.drb, 1)
    horizon = n_calibrations * max(cfg.interval_min * MINUTE, per_cal) + per_cal + 2 * cfg.drift.dt
    traj = trajectory or DriftTrajectory(cfg.drift, horizon=horizon)
    physical = trajectory_physical(traj)
    cal = Calibrator(cfg, physical)
    ref = reference or cfg.drb

    def row(k: int) -> OffsetDemoRow:
        t = cal.clock
        p1, p2 = physical(0, t), physical(1, t)
        vals = cal.knob_values()
        ideal = ideal_knobs(p1, p2)
        plant = IonPlant(physical, controls_from_knobs(vals))
        f = run_drb(ref, plant, t, seed=derive_seed(ref.rng_seed, "reference", k)).objective
        return OffsetDemoRow(
            calibration=k, t_min=t / MINUTE, knobs=vals,
            residual={n: vals[n] - ideal[n] for n in NOMINAL_KNOBS},
            reference_fhat=f, error_rate=true_error_rate(p1, p2, controls_from_knobs(vals)),
        )

    rows = [row(0)]
    for k in range(1, n_calibrations + 1):
        cal.clock = max(cal.clock, (k - 1) * cfg.interval_min * MINUTE)
        for _ in range(cfg.iterations):
            cal.iterate()
        rows.append(row(k))
    return rows


def write_offset_csv(path, rows: Sequence[OffsetDemoRow], header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["calibration", "t_min", *KNOB_COLUMNS, *(f"residual_{k}" for k in KNOB_COLUMNS),
                    "reference_fhat", "error_rate"])
        for r in rows:
            w.writerow([r.calibration, repr(r.t_min), *(repr(r.knobs[k]) for k in KNOB_COLUMNS),
                        *(repr(r.residual[k]) for k in KNOB_COLUMNS), repr(r.reference_fhat), repr(r.error_rate)])
