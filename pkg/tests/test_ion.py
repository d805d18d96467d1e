import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from escqc.ion import (
    G2E_FLOOR,
    HOUR,
    PARAM_IDS,
    ControlState,
    DriftConfig,
    DriftParam,
    DriftTrajectory,
    IonPlant,
    PhysicalState,
    drift_value,
    ideal_ms_controls,
    ideal_single_controls,
    map_ms,
    map_single,
    physical_state_at,
    static_physical,
)
from escqc.quantum import Circuit, Gate


def test_state_invariants():
    with pytest.raises(ValueError):
        PhysicalState(g2e=0.0)
    with pytest.raises(ValueError):
        ControlState(g=-1.0)


# --- drift ------------------------------------------------------------------


def test_drift_zero_at_t0():
    traj = DriftTrajectory(DriftConfig(seed=3), horizon=HOUR)
    for pid in PARAM_IDS:
        assert drift_value(traj, pid, 0.0) == 0.0


def test_degenerate_walk_is_pure_sinusoid():
    a0, w0 = 0.07, 2 * math.pi / 5000.0
    cfg = DriftConfig(g2e=DriftParam(a0, w0), psi_2q=DriftParam(a0, w0), seed=1)
    traj = DriftTrajectory(cfg, horizon=4 * HOUR)
    for t in np.linspace(0, 4 * HOUR, 57):
        assert drift_value(traj, "psi_2q_1", t) == a0 * math.sin(w0 * t)


def test_degenerate_walk_period_within_one_step():
    period = 3 * HOUR
    cfg = DriftConfig(g2e=DriftParam(0.02, 2 * math.pi / period), dt=60.0)
    traj = DriftTrajectory(cfg, horizon=8 * HOUR)
    ts = np.arange(0.0, 8 * HOUR, cfg.dt)
    v = np.array([traj.value("g2e_0", t) for t in ts])
    ups = ts[1:][(v[:-1] < 0) & (v[1:] >= 0)]
    assert ups.size >= 2
    assert np.all(np.abs(np.diff(ups) - period) <= cfg.dt)


def test_drift_deterministic_and_bit_identical():
    a = DriftTrajectory(DriftConfig(seed=11), horizon=10 * HOUR)
    b = DriftTrajectory(DriftConfig(seed=11), horizon=10 * HOUR)
    for t in (0.0, 123.4, 5 * HOUR, 10 * HOUR):
        for pid in PARAM_IDS:
            assert a.value(pid, t) == b.value(pid, t)
            assert a.value(pid, t) == a.value(pid, t)
    c = DriftTrajectory(DriftConfig(seed=12), horizon=10 * HOUR)
    assert a.value("g2e_0", 5 * HOUR) != c.value("g2e_0", 5 * HOUR)


def test_walk_is_piecewise_constant_with_gaussian_steps():
    cfg = DriftConfig(g2e=DriftParam(0.05, 1e-4, sigma_a=0.002, sigma_omega=1e-6), dt=30.0, seed=4)
    traj = DriftTrajectory(cfg, horizon=40 * HOUR)
    assert traj.amplitude("g2e_0", 31.0) == traj.amplitude("g2e_0", 59.9)
    steps = np.diff([traj.amplitude("g2e_0", k * cfg.dt) for k in range(4000)])
    assert abs(steps.std() / 0.002 - 1) < 0.05
    assert abs(steps.mean()) < 4 * 0.002 / math.sqrt(steps.size)


def test_drift_errors():
    traj = DriftTrajectory(DriftConfig(), horizon=HOUR)
    with pytest.raises(ValueError, match="unknown drift parameter"):
        drift_value(traj, "g2e_7", 1.0)
    with pytest.raises(ValueError):
        drift_value(traj, "g2e_0", -1.0)
    with pytest.raises(ValueError):
        drift_value(traj, "g2e_0", 2 * HOUR)
    with pytest.raises(ValueError):
        physical_state_at(traj, 2, 1.0)
    with pytest.raises(ValueError):
        DriftConfig(overrides={"nope": DriftParam(0, 0)})


def test_zero_variance_gives_nominal_state():
    traj = DriftTrajectory(DriftConfig.static(), horizon=HOUR)
    for t in (0.0, 1000.0, HOUR):
        for q in (0, 1):
            assert physical_state_at(traj, q, t) == PhysicalState()


def test_qubits_use_independent_streams():
    cfg = DriftConfig(g2e=DriftParam(0.03, 1e-4, sigma_a=0.003, sigma_omega=0.0), seed=2)
    traj = DriftTrajectory(cfg, horizon=48 * HOUR)
    k = np.arange(1, 2800)
    a0 = np.diff([traj.amplitude("g2e_0", i * cfg.dt) for i in k])
    a1 = np.diff([traj.amplitude("g2e_1", i * cfg.dt) for i in k])
    assert not np.array_equal(a0, a1)
    # increments of two independent walks: |corr| well inside 4/sqrt(n)
    assert abs(np.corrcoef(a0, a1)[0, 1]) < 4 / math.sqrt(a0.size)


def test_g2e_clamped_under_extreme_drift(caplog):
    cfg = DriftConfig(g2e=DriftParam(5.0, 2 * math.pi / HOUR, sigma_a=1.0, sigma_omega=1e-4), seed=0)
    traj = DriftTrajectory(cfg, horizon=6 * HOUR)
    with caplog.at_level(logging.INFO, logger="escqc.ion"):
        states = [physical_state_at(traj, q, t) for t in np.arange(0, 6 * HOUR, 60.0) for q in (0, 1)]
    g = np.array([s.g2e for s in states])
    assert g.min() == G2E_FLOOR
    assert np.all(g >= G2E_FLOOR)
    assert any("clamped" in r.message for r in caplog.records)


# --- maps -------------------------------------------------------------------


def test_map_single_examples():
    sp = map_single(PhysicalState(), ControlState())
    assert (sp.theta, sp.phi) == (math.pi / 2, 0.0)
    assert map_single(PhysicalState(), ControlState(g=2.0)).theta == math.pi
    assert map_single(PhysicalState(), ControlState(psi=0.3)).phi == 0.3


def test_map_ms_examples():
    mp = map_ms(PhysicalState(), ControlState(), PhysicalState(), ControlState())
    assert (mp.chi, mp.phi1, mp.phi2) == (math.pi / 2, 0.0, 0.0)
    s = 1.7
    assert map_ms(PhysicalState(), ControlState(g=s), PhysicalState(), ControlState()).chi == pytest.approx(
        s * math.pi / 2, abs=1e-15
    )
    mp = map_ms(PhysicalState(psi_2q=0.05), ControlState(psi=0.1), PhysicalState(), ControlState())
    assert mp.phi1 == pytest.approx(0.15, abs=1e-15)


pos = st.floats(0.2, 3.0)
ang = st.floats(-math.pi, math.pi)


@given(pos, pos, pos, pos, pos)
def test_map_linearity(g2e1, g2e2, g1, g2, s):
    p1, p2 = PhysicalState(g2e1), PhysicalState(g2e2)
    base = map_ms(p1, ControlState(g1), p2, ControlState(g2)).chi
    assert map_ms(p1, ControlState(s * g1), p2, ControlState(g2)).chi == pytest.approx(s * base, rel=1e-12)
    assert map_ms(p1, ControlState(g1), p2, ControlState(s * g2)).chi == pytest.approx(s * base, rel=1e-12)
    assert map_single(p1, ControlState(s * g1)).theta == pytest.approx(s * map_single(p1, ControlState(g1)).theta)


@settings(max_examples=200)
@given(pos, pos, ang, ang)
def test_analytic_inverse_restores_nominal(g2e1, g2e2, d1, d2):
    p1, p2 = PhysicalState(g2e1, d1), PhysicalState(g2e2, d2)
    c1, c2 = ideal_ms_controls(p1, p2)
    mp = map_ms(p1, c1, p2, c2)
    assert mp.chi == pytest.approx(math.pi / 2, abs=1e-12)
    assert mp.phi1 == pytest.approx(0.0, abs=1e-12)
    assert mp.phi2 == pytest.approx(0.0, abs=1e-12)
    sp = map_single(p1, ideal_single_controls(p1))
    assert sp.theta == pytest.approx(math.pi / 2, abs=1e-12)


# --- plant ------------------------------------------------------------------


def test_plant_preserves_structure_and_maps_parameters():
    phys = static_physical(PhysicalState(1.1, 0.05), PhysicalState(0.9, -0.02))
    plant = IonPlant(phys, (ControlState(1.0, 0.01), ControlState(1.0, 0.0)))
    circ = Circuit(2, (
        (Gate.ms(math.pi / 2, 0.0, math.pi / 2),),
        (Gate.r(0, math.pi / 2, math.pi), Gate.r(1, math.pi / 2, 0.0)),
        (Gate.unitary(np.eye(4)),),
    ))
    out = plant(circ, 0.0)
    assert [len(layer) for layer in out.layers] == [len(layer) for layer in circ.layers]
    chi, a, b = out.layers[0][0].params
    assert chi == pytest.approx(math.pi / 2 * 1.1 * 0.9)
    assert a == pytest.approx(0.06)
    assert b == pytest.approx(math.pi / 2 - 0.02)
    # single-qubit gates untouched by default
    assert out.layers[1] == circ.layers[1]
    assert out.layers[2] == circ.layers[2]


def test_plant_reversed_ms_targets_use_per_qubit_offsets():
    plant = IonPlant(static_physical(PhysicalState(psi_2q=0.3), PhysicalState(psi_2q=-0.1)))
    g = plant.noisy_gate(Gate.ms(math.pi / 2, 0.0, 0.0, targets=(1, 0)), 0.0)
    assert g.params[1:] == pytest.approx((-0.1, 0.3))


def test_plant_single_qubit_drift_flag():
    phys = static_physical(PhysicalState(g2e=1.2), PhysicalState())
    g = Gate.r(0, math.pi / 2, 0.0)
    assert IonPlant(phys).noisy_gate(g, 0.0) == g
    theta = IonPlant(phys, single_qubit_drift=True).noisy_gate(g, 0.0).params[0]
    assert theta == pytest.approx(1.2 * math.pi / 2)
