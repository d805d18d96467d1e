"""JSON run configuration.

A run config is one JSON object with optional blocks ``drift``, ``drb``, ``esc``,
``loop`` and ``output`` plus a master ``seed``. Every block is validated before
anything runs; errors carry the offending field and its line in the file.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .drb import DrbDesign, calibrate_overhead
from .esc import KNOB_PRESETS, EscKnob
from .ion import PARAM_IDS, DriftConfig, DriftParam
from .loop import NOMINAL_KNOBS, LoopConfig
from .rng import derive_seed


class ConfigError(ValueError):
    def __init__(self, field: str, message: str, line: int | None = None, source: str | None = None):
        self.field, self.message, self.line, self.source = field, message, line, source
        where = f"{source or '<config>'}:{line}" if line else (source or "<config>")
        super().__init__(f"{where}: {field}: {message}")


BLOCK_KEYS = {
    "seed", "drift", "drb", "esc", "loop", "output",
}
DRIFT_KEYS = {"dt", "g2e", "psi_2q", "overrides"}
DRIFT_PARAM_KEYS = {"amplitude", "period_h", "rel_sigma_a", "rel_sigma_omega"}
DRB_KEYS = {
    "depths", "circuits_per_depth", "shots_per_circuit", "two_qubit_fraction",
    "noisy_inversion", "t_overhead", "target_iteration_minutes",
}
ESC_KEYS = {"preset", "knobs", "n_points", "iterations"}
KNOB_KEYS = {"name", "amplitude", "cycles", "phase_deg", "gain"}
LOOP_KEYS = {"duration_h", "interval_min", "report_every_min", "advance_drift", "initial_offsets", "n_calibrations"}
OUTPUT_KEYS = {"dir"}


@dataclass
class RunConfig:
    loop: LoopConfig
    seed: int
    seeds: dict[str, int]
    out_dir: Path
    n_calibrations: int = 8
    target_iteration_minutes: float | None = None
    calibrated_overhead: float | None = None
    raw: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def header(self, version: str) -> str:
        s = self.seeds
        return (
            f"escqc {version} config_sha256={self.digest} seed={self.seed} "
            f"drift_seed={s['drift']} drb_seed={s['drb']} esc_seed={s['esc']}"
        )


class _Reader:
    def __init__(self, text: str, source: str | None):
        self.lines = text.splitlines()
        self.source = source

    def line_of(self, path: str) -> int | None:
        # first occurrence of each key along the dotted path, in file order
        start = 0
        found = None
        for key in path.split("."):
            if key.isdigit():
                continue
            token = f'"{key}"'
            for i in range(start, len(self.lines)):
                if token in self.lines[i]:
                    found, start = i + 1, i
                    break
            else:
                return found
        return found

    def error(self, path: str, message: str) -> ConfigError:
        return ConfigError(path, message, self.line_of(path), self.source)

    def obj(self, value, path: str, allowed: set[str]) -> dict:
        if value is None:
            return {}
        if not isinstance(value, dict):
            raise self.error(path, f"expected an object, got {type(value).__name__}")
        extra = set(value) - allowed
        if extra:
            k = sorted(extra)[0]
            raise self.error(f"{path}.{k}" if path else k, f"unknown field (allowed: {', '.join(sorted(allowed))})")
        return value

    def number(self, block: dict, key: str, path: str, default=None, *, integer=False, positive=False,
               non_negative=False):
        if key not in block:
            return default
        v = block[key]
        full = f"{path}.{key}"
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.error(full, f"expected a number, got {v!r}")
        if integer and not (isinstance(v, int) or float(v).is_integer()):
            raise self.error(full, f"expected an integer, got {v!r}")
        if not math.isfinite(v):
            raise self.error(full, "must be finite")
        if positive and not v > 0:
            raise self.error(full, f"must be > 0, got {v!r}")
        if non_negative and v < 0:
            raise self.error(full, f"must be >= 0, got {v!r}")
        return int(v) if integer else float(v)


def _drift_param(r: _Reader, raw, path: str, default: DriftParam) -> DriftParam:
    block = r.obj(raw, path, DRIFT_PARAM_KEYS)
    if not block:
        return default
    default_period = 2 * math.pi / default.omega / 3600 if default.omega > 0 else 24.0
    amp = r.number(block, "amplitude", path, default.amplitude)
    period = r.number(block, "period_h", path, default_period, positive=True)
    rel_a = r.number(block, "rel_sigma_a", path,
                     default.sigma_a / abs(default.amplitude) if default.amplitude else 0.0, non_negative=True)
    rel_w = r.number(block, "rel_sigma_omega", path,
                     default.sigma_omega / default.omega if default.omega else 0.0, non_negative=True)
    return DriftParam.relative(amp, period, rel_a, rel_w)


def _drift(r: _Reader, raw, seed: int) -> DriftConfig:
    block = r.obj(raw, "drift", DRIFT_KEYS)
    base = DriftConfig()
    g2e = _drift_param(r, block.get("g2e"), "drift.g2e", base.g2e)
    psi = _drift_param(r, block.get("psi_2q"), "drift.psi_2q", base.psi_2q)
    overrides = {}
    ov = r.obj(block.get("overrides"), "drift.overrides", set(PARAM_IDS))
    for pid, spec in ov.items():
        overrides[pid] = _drift_param(r, spec, f"drift.overrides.{pid}", g2e if pid.startswith("g2e") else psi)
    dt = r.number(block, "dt", "drift", base.dt, positive=True)
    return DriftConfig(g2e=g2e, psi_2q=psi, dt=dt, seed=seed, overrides=overrides)


def _drb(r: _Reader, raw, seed: int) -> tuple[DrbDesign, float | None]:
    block = r.obj(raw, "drb", DRB_KEYS)
    base = DrbDesign()
    depths = block.get("depths", list(base.depths))
    if (not isinstance(depths, list) or not depths
            or any(isinstance(d, bool) or not isinstance(d, int) or d < 1 for d in depths)
            or any(b <= a for a, b in zip(depths, depths[1:]))):
        raise r.error("drb.depths", f"must be a non-empty strictly increasing list of integers >= 1, got {depths!r}")
    frac = r.number(block, "two_qubit_fraction", "drb", base.two_qubit_fraction)
    if not 0 <= frac <= 1:
        raise r.error("drb.two_qubit_fraction", f"must be in [0, 1], got {frac}")
    noisy = block.get("noisy_inversion", False)
    if not isinstance(noisy, bool):
        raise r.error("drb.noisy_inversion", "expected true or false")
    design = DrbDesign(
        depths=tuple(depths),
        circuits_per_depth=r.number(block, "circuits_per_depth", "drb", base.circuits_per_depth,
                                    integer=True, positive=True),
        shots_per_circuit=r.number(block, "shots_per_circuit", "drb", base.shots_per_circuit,
                                   integer=True, positive=True),
        two_qubit_fraction=frac,
        rng_seed=seed,
        noisy_inversion=noisy,
        t_overhead=r.number(block, "t_overhead", "drb", 0.0, non_negative=True),
    )
    target = r.number(block, "target_iteration_minutes", "drb", None, positive=True) \
        if block.get("target_iteration_minutes") is not None else None
    return design, target


def _knobs(r: _Reader, block: dict) -> tuple[EscKnob, ...]:
    preset = block.get("preset", "default")
    if preset not in KNOB_PRESETS:
        raise r.error("esc.preset", f"unknown preset {preset!r} (choose from {sorted(KNOB_PRESETS)})")
    if "knobs" not in block:
        return KNOB_PRESETS[preset]
    raw = block["knobs"]
    if not isinstance(raw, list) or not raw:
        raise r.error("esc.knobs", "must be a non-empty list of knob objects")
    presets = {k.name: k for k in KNOB_PRESETS[preset]}
    knobs = []
    for i, kb in enumerate(raw):
        path = f"esc.knobs.{i}"
        kb = r.obj(kb, path, KNOB_KEYS)
        name = kb.get("name")
        if name not in NOMINAL_KNOBS:
            raise r.error(f"{path}.name", f"must be one of {sorted(NOMINAL_KNOBS)}, got {name!r}")
        d = presets.get(name)
        cycles = r.number(kb, "cycles", path, d.omega / (2 * math.pi) if d else None, integer=True, positive=True)
        amp = r.number(kb, "amplitude", path, d.amplitude if d else None, positive=True)
        gain = r.number(kb, "gain", path, d.gain if d else None)
        phase = r.number(kb, "phase_deg", path, math.degrees(d.phase) if d else 0.0)
        if cycles is None or amp is None or gain is None:
            raise r.error(path, "knob needs amplitude, cycles and gain")
        knobs.append(EscKnob(name, amp, 2 * math.pi * cycles, math.radians(phase), gain))
    names = [k.name for k in knobs]
    if len(set(names)) != len(names):
        raise r.error("esc.knobs", f"duplicate knob names {names}")
    return tuple(knobs)


def load_config(path: str | Path | None = None, *, text: str | None = None, seed: int | None = None,
                out_dir: str | Path | None = None) -> RunConfig:
    """Parse and validate a run config. ``seed`` and ``out_dir`` override the file."""
    source = str(path) if path is not None else None
    if text is None:
        if path is None:
            raise ConfigError("<path>", "no config given")
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("<path>", f"cannot read config: {exc.strerror}", None, source) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", exc.msg, exc.lineno, source) from None
    r = _Reader(text, source)
    data = r.obj(data, "", BLOCK_KEYS)

    master = seed if seed is not None else r.number(data, "seed", "", 0, integer=True, non_negative=True)
    if master < 0:
        raise ConfigError("seed", f"must be >= 0, got {master}")
    seeds = {k: derive_seed(master, k) for k in ("drift", "drb", "esc")}

    drift = _drift(r, data.get("drift"), seeds["drift"])
    design, target = _drb(r, data.get("drb"), seeds["drb"])

    esc = r.obj(data.get("esc"), "esc", ESC_KEYS)
    knobs = _knobs(r, esc)
    n_points = r.number(esc, "n_points", "esc", 30, integer=True)
    if n_points < 2:
        raise r.error("esc.n_points", f"must be >= 2, got {n_points}")
    iterations = r.number(esc, "iterations", "esc", 3, integer=True, positive=True)

    loop = r.obj(data.get("loop"), "loop", LOOP_KEYS)
    duration = r.number(loop, "duration_h", "loop", 15.0, positive=True)
    interval = r.number(loop, "interval_min", "loop", 75.0, positive=True)
    if duration * 60 < interval:
        raise r.error("loop.duration_h", f"{duration} h is shorter than one interval ({interval} min)")
    report = r.number(loop, "report_every_min", "loop", 5.0, positive=True)
    advance = loop.get("advance_drift", True)
    if not isinstance(advance, bool):
        raise r.error("loop.advance_drift", "expected true or false")
    offsets = r.obj(loop.get("initial_offsets"), "loop.initial_offsets", set(NOMINAL_KNOBS))
    offsets = {k: r.number(offsets, k, "loop.initial_offsets") for k in offsets}
    n_cal = r.number(loop, "n_calibrations", "loop", 8, integer=True, positive=True)

    calibrated = None
    if target is not None:
        calibrated = calibrate_overhead(design, n_points, target * 60.0)
        design = DrbDesign(**{**design.__dict__, "t_overhead": calibrated})

    try:
        cfg = LoopConfig(
            duration_h=duration, interval_min=interval, iterations=iterations, n_points=n_points,
            knobs=knobs, drb=design, drift=drift, initial_offsets=offsets,
            report_every_min=report, advance_drift=advance,
        )
    except ValueError as exc:
        raise ConfigError("loop", str(exc), None, source) from None

    out = r.obj(data.get("output"), "output", OUTPUT_KEYS)
    out_path = Path(out_dir) if out_dir is not None else Path(out.get("dir", "out"))
    raw = dict(data)
    raw["seed"] = master
    return RunConfig(
        loop=cfg, seed=master, seeds=seeds, out_dir=out_path, n_calibrations=n_cal,
        target_iteration_minutes=target, calibrated_overhead=calibrated, raw=raw,
    )


def load_space(path: str | Path) -> list[dict]:
    """Grid-search space: ``{"key": [values...]}`` (cartesian) or ``{"points": [{...}, ...]}``."""
    from .loop import expand_space

    source = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<path>", f"cannot read space file: {exc.strerror}", None, source) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", exc.msg, exc.lineno, source) from None
    try:
        points = expand_space(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError("space", str(exc), None, source) from None
    allowed = {"interval_min", "iterations", "n_points", "duration_h", "circuits_per_depth",
               "shots_per_circuit", "depths", "two_qubit_fraction", "t_overhead"}
    r = _Reader(text, source)
    for p in points:
        for k, v in p.items():
            if k not in allowed:
                raise r.error(k, f"not a searchable hyperparameter (allowed: {', '.join(sorted(allowed))})")
            if k == "depths":
                p[k] = tuple(v)
    return points
