"""Trapped-ion plant: latent drifting parameters, control maps and the noisy executor."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .quantum import Circuit, Gate, Layer
from .rng import stream

log = logging.getLogger(__name__)

# calibration anchors: nominal controls on a nominal plant give theta = chi = pi/2
K_SINGLE = math.pi / 2
K_MS = math.pi / 2
G2E_FLOOR = 0.01

HOUR = 3600.0
PARAM_IDS = ("g2e_0", "g2e_1", "psi_2q_0", "psi_2q_1")


@dataclass(frozen=True)
class PhysicalState:
    g2e: float = 1.0
    psi_2q: float = 0.0

    def __post_init__(self):
        if not self.g2e > 0:
            raise ValueError(f"g2e must be positive, got {self.g2e}")


@dataclass(frozen=True)
class ControlState:
    g: float = 1.0
    psi: float = 0.0

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError(f"gain g must be positive, got {self.g}")


@dataclass(frozen=True)
class SingleQubitParams:
    theta: float
    phi: float


@dataclass(frozen=True)
class MSParams:
    chi: float
    phi1: float
    phi2: float


def map_single(p: PhysicalState, c: ControlState) -> SingleQubitParams:
    return SingleQubitParams(theta=K_SINGLE * c.g * p.g2e, phi=c.psi)


def map_ms(p1: PhysicalState, c1: ControlState, p2: PhysicalState, c2: ControlState) -> MSParams:
    return MSParams(
        chi=K_MS * (c1.g * p1.g2e) * (c2.g * p2.g2e),
        phi1=c1.psi + p1.psi_2q,
        phi2=c2.psi + p2.psi_2q,
    )


def ideal_single_controls(p: PhysicalState) -> ControlState:
    """Analytic inverse of map_single: controls that restore (pi/2, 0)."""
    return ControlState(g=1.0 / p.g2e, psi=0.0)


def ideal_ms_controls(p1: PhysicalState, p2: PhysicalState) -> tuple[ControlState, ControlState]:
    """Analytic inverse of map_ms with the gain product split evenly between qubits."""
    g = math.sqrt(1.0 / (p1.g2e * p2.g2e))
    return ControlState(g, -p1.psi_2q), ControlState(g, -p2.psi_2q)


# ---------------------------------------------------------------------------
# drift


@dataclass(frozen=True)
class DriftParam:
    """Random-walk sinusoid A(t) sin(w(t) t) for one latent parameter.

    amplitude is A(0) in parameter units, omega is w(0) in rad/s, and the sigmas
    are the standard deviations of the per-step Gaussian increments.
    """

    amplitude: float
    omega: float
    sigma_a: float = 0.0
    sigma_omega: float = 0.0

    def __post_init__(self):
        for name in ("amplitude", "omega", "sigma_a", "sigma_omega"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if self.sigma_a < 0 or self.sigma_omega < 0:
            raise ValueError("drift sigmas must be non-negative")

    @classmethod
    def relative(cls, amplitude: float, period_h: float, rel_sigma_a: float, rel_sigma_omega: float):
        omega = 2 * math.pi / (period_h * HOUR)
        return cls(amplitude, omega, rel_sigma_a * abs(amplitude), rel_sigma_omega * omega)


def _default_g2e() -> DriftParam:
    return DriftParam.relative(0.03, period_h=24.0, rel_sigma_a=0.01, rel_sigma_omega=0.002)


def _default_psi() -> DriftParam:
    return DriftParam.relative(0.1, period_h=24.0, rel_sigma_a=0.01, rel_sigma_omega=0.002)


@dataclass(frozen=True)
class DriftConfig:
    """Drift of g2e and psi_2q on both qubits (four independent trajectories)."""

    g2e: DriftParam = field(default_factory=_default_g2e)
    psi_2q: DriftParam = field(default_factory=_default_psi)
    dt: float = 60.0
    seed: int = 0
    # per-parameter overrides keyed by PARAM_IDS entries
    overrides: dict[str, DriftParam] = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        unknown = set(self.overrides) - set(PARAM_IDS)
        if unknown:
            raise ValueError(f"unknown drift parameter ids {sorted(unknown)}")

    def param(self, pid: str) -> DriftParam:
        if pid in self.overrides:
            return self.overrides[pid]
        return self.g2e if pid.startswith("g2e") else self.psi_2q

    @classmethod
    def static(cls, **kw) -> "DriftConfig":
        """Zero drift on every parameter."""
        zero = DriftParam(0.0, 0.0)
        return cls(g2e=zero, psi_2q=zero, **kw)


class DriftTrajectory:
    """Pre-sampled random walks for every latent parameter up to ``horizon`` seconds.

    A and w are piecewise constant on steps of length dt; the value on step k is the
    initial value plus the sum of the first k Gaussian increments. Each parameter
    draws from its own sub-stream ``(seed, "drift", pid, "a" | "omega")``.
    """

    def __init__(self, config: DriftConfig, horizon: float = 48 * HOUR):
        if not horizon > 0:
            raise ValueError("horizon must be positive")
        self.config = config
        self.horizon = float(horizon)
        n = int(math.floor(horizon / config.dt)) + 1
        self._amp: dict[str, np.ndarray] = {}
        self._omega: dict[str, np.ndarray] = {}
        for pid in PARAM_IDS:
            spec = config.param(pid)
            tau_a = stream(config.seed, "drift", pid, "a").normal(0.0, 1.0, n - 1) * spec.sigma_a
            tau_w = stream(config.seed, "drift", pid, "omega").normal(0.0, 1.0, n - 1) * spec.sigma_omega
            self._amp[pid] = spec.amplitude + np.concatenate(([0.0], np.cumsum(tau_a)))
            self._omega[pid] = spec.omega + np.concatenate(([0.0], np.cumsum(tau_w)))
        for arr in (*self._amp.values(), *self._omega.values()):
            arr.setflags(write=False)

    def _step(self, t: float) -> int:
        if not t >= 0:
            raise ValueError(f"t must be >= 0, got {t}")
        if t > self.horizon:
            raise ValueError(f"t={t} beyond trajectory horizon {self.horizon}")
        return int(t // self.config.dt)

    def amplitude(self, pid: str, t: float) -> float:
        return float(self._series(self._amp, pid)[self._step(t)])

    def omega(self, pid: str, t: float) -> float:
        return float(self._series(self._omega, pid)[self._step(t)])

    @staticmethod
    def _series(table, pid):
        try:
            return table[pid]
        except KeyError:
            raise ValueError(f"unknown drift parameter {pid!r}; expected one of {PARAM_IDS}") from None

    def value(self, pid: str, t: float) -> float:
        k = self._step(t)
        a = self._series(self._amp, pid)[k]
        w = self._series(self._omega, pid)[k]
        return float(a * math.sin(w * t))


def drift_value(traj: DriftTrajectory, param_id: str, t: float) -> float:
    return traj.value(param_id, t)


def physical_state_at(traj: DriftTrajectory, qubit: int, t: float) -> PhysicalState:
    if qubit not in (0, 1):
        raise ValueError(f"qubit must be 0 or 1, got {qubit}")
    g2e = 1.0 + traj.value(f"g2e_{qubit}", t)
    if g2e < G2E_FLOOR:
        log.info("g2e on qubit %d clamped from %.4g to %g at t=%.1f s", qubit, g2e, G2E_FLOOR, t)
        g2e = G2E_FLOOR
    return PhysicalState(g2e=g2e, psi_2q=traj.value(f"psi_2q_{qubit}", t))


# ---------------------------------------------------------------------------
# noisy execution

PhysicalFn = Callable[[int, float], PhysicalState]


def static_physical(*states: PhysicalState) -> PhysicalFn:
    """Time-independent plant, e.g. ``static_physical(PhysicalState(psi_2q=0.1), PhysicalState())``."""
    states = states or (PhysicalState(), PhysicalState())
    if len(states) != 2:
        raise ValueError("need one PhysicalState per qubit")

    def fn(qubit: int, t: float) -> PhysicalState:
        return states[qubit]

    return fn


def trajectory_physical(traj: DriftTrajectory) -> PhysicalFn:
    def fn(qubit: int, t: float) -> PhysicalState:
        return physical_state_at(traj, qubit, t)

    return fn


@dataclass(frozen=True)
class IonPlant:
    """Executes ideal circuits with gate parameters distorted by the plant.

    An ideal MS(chi, a, b) runs as MS(chi * chi_m / (pi/2), a + phi1_m, b + phi2_m)
    where (chi_m, phi1_m, phi2_m) = map_ms(...) for the current physical state and
    MS controls. Single-qubit rotations use their own controls (``sq_controls``);
    they see g2e drift only when ``single_qubit_drift`` is set. Explicit ``"U"``
    layers pass through untouched.
    """

    physical: PhysicalFn = field(default_factory=static_physical)
    controls: tuple[ControlState, ControlState] = (ControlState(), ControlState())
    sq_controls: tuple[ControlState, ControlState] = (ControlState(), ControlState())
    single_qubit_drift: bool = False

    def ms_params(self, t: float) -> MSParams:
        p1, p2 = self.physical(0, t), self.physical(1, t)
        return map_ms(p1, self.controls[0], p2, self.controls[1])

    def single_params(self, qubit: int, t: float) -> SingleQubitParams:
        p = self.physical(qubit, t) if self.single_qubit_drift else PhysicalState()
        return map_single(p, self.sq_controls[qubit])

    def noisy_gate(self, gate: Gate, t: float) -> Gate:
        if gate.kind == "U":
            return gate
        if gate.kind == "MS":
            a, b = gate.targets
            mp = self.ms_params(t)
            off = {0: mp.phi1, 1: mp.phi2}
            chi, phi1, phi2 = gate.params
            return Gate.ms(chi * mp.chi / K_MS, phi1 + off[a], phi2 + off[b], targets=gate.targets)
        q = gate.targets[0]
        sp = self.single_params(q, t)
        theta, phi = gate.params
        return Gate.r(q, theta * sp.theta / K_SINGLE, phi + sp.phi)

    def noisy_layer(self, layer: Layer, t: float) -> Layer:
        return tuple(self.noisy_gate(g, t) for g in layer)

    def __call__(self, circuit: Circuit, t: float) -> Circuit:
        return Circuit(circuit.n_qubits, tuple(self.noisy_layer(layer, t) for layer in circuit.layers))
