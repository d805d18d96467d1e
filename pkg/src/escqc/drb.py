"""Randomized-benchmarking objective on two qubits.

Circuits are random native layers followed by one layer that inverts the ideal
circuit, so an error-free run always returns ``|00>``. The success probability
decays with depth as ``A p^d + 1/4`` and the fitted ``p`` is the objective.
"""

from __future__ import annotations

import csv
import math
import warnings
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .quantum import Circuit, Gate, Layer, basis_state, circuit_unitary, layer_unitary, sample_measurements
from .rng import stream

T_1Q = 90e-6
T_2Q = 700e-6
ASYMPTOTE = 0.25

SQ_PHASES = (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)
MS_PHASES = (0.0, math.pi / 2)

NoisyPlant = Callable[[Circuit, float], Circuit]


@dataclass(frozen=True)
class DrbDesign:
    depths: tuple[int, ...] = (1, 32, 128)
    circuits_per_depth: int = 5
    shots_per_circuit: int = 18
    two_qubit_fraction: float = 0.75
    n_qubits: int = 2
    rng_seed: int = 0
    noisy_inversion: bool = False
    t_overhead: float = 0.0  # seconds charged per shot on top of gate time

    def __post_init__(self):
        object.__setattr__(self, "depths", tuple(int(d) for d in self.depths))
        d = self.depths
        if not d:
            raise ValueError("depths must be non-empty")
        if any(x < 1 for x in d) or any(b <= a for a, b in zip(d, d[1:])):
            raise ValueError(f"depths must be strictly increasing and >= 1, got {list(d)}")
        if self.circuits_per_depth < 1:
            raise ValueError(f"circuits_per_depth must be >= 1, got {self.circuits_per_depth}")
        if self.shots_per_circuit < 1:
            raise ValueError(f"shots_per_circuit must be >= 1, got {self.shots_per_circuit}")
        if not 0.0 <= self.two_qubit_fraction <= 1.0:
            raise ValueError(f"two_qubit_fraction must be in [0, 1], got {self.two_qubit_fraction}")
        if self.n_qubits != 2:
            raise ValueError("only two-qubit benchmarking is supported")
        if not self.t_overhead >= 0:
            raise ValueError(f"t_overhead must be >= 0, got {self.t_overhead}")


@dataclass(frozen=True)
class DrbEstimate:
    p_hat: float
    objective: float
    depths: tuple[int, ...]
    success: tuple[float, ...]  # mean success probability per depth
    p_stderr: float
    amplitude: float
    low_confidence: bool = False
    counts: tuple[tuple[int, int, int, int], ...] = field(default=(), repr=False)  # (depth, circuit, successes, shots)

    def error_rate(self) -> float:
        return error_rate_from_p(self.p_hat)


def error_rate_from_p(p: float, n_qubits: int = 2) -> float:
    """Average gate error of a depolarizing channel with decay p: (d-1)(1-p)/d."""
    d = 2**n_qubits
    return (d - 1) * (1.0 - p) / d


# ---------------------------------------------------------------------------
# circuits


MS_LAYERS: tuple[Layer, ...] = tuple((Gate.ms(math.pi / 2, a, b),) for a in MS_PHASES for b in MS_PHASES)
SQ_LAYERS: tuple[Layer, ...] = tuple(
    (Gate.r(0, math.pi / 2, a), Gate.r(1, math.pi / 2, b)) for a in SQ_PHASES for b in SQ_PHASES
)


def random_layer(design: DrbDesign, rng: np.random.Generator) -> Layer:
    """MS(pi/2, a, b) with probability ``two_qubit_fraction``, else R(pi/2, .) on both qubits."""
    if rng.random() < design.two_qubit_fraction:
        return MS_LAYERS[int(rng.integers(len(MS_LAYERS)))]
    return SQ_LAYERS[int(rng.integers(len(SQ_LAYERS)))]


def inverse_layer(layer: Layer) -> Layer:
    """Native-gate inverse: R(t, f)^dag = R(t, f + pi), MS(c, a, b)^dag = MS(c, a + pi, b)."""
    out = []
    for g in layer:
        if g.kind == "R":
            theta, phi = g.params
            out.append(Gate.r(g.targets[0], theta, phi + math.pi))
        elif g.kind == "MS":
            chi, a, b = g.params
            out.append(Gate.ms(chi, a + math.pi, b, targets=g.targets))
        else:
            u = g.matrix().conj().T
            out.append(Gate.unitary(u, g.targets))
    return tuple(out)


def sample_drb_circuit(design: DrbDesign, depth: int, rng: np.random.Generator) -> Circuit:
    """``depth`` random layers plus the inversion.

    By default the inversion is a single explicit unitary layer (run noiselessly);
    with ``design.noisy_inversion`` it is the mirrored native-gate sequence, which
    the plant distorts like any other layer.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    core = Circuit(2, tuple(random_layer(design, rng) for _ in range(depth)))
    if design.noisy_inversion:
        return core.append(*(inverse_layer(layer) for layer in reversed(core.layers)))
    inv = circuit_unitary(core).conj().T
    return core.append((Gate.unitary(inv),))


def circuit_rng(design: DrbDesign, depth: int, index: int, purpose: str, seed: int | None = None):
    base = design.rng_seed if seed is None else seed
    return stream(base, "drb", depth, index, purpose)


# ---------------------------------------------------------------------------
# fitting


def _model(d, a, p):
    return a * np.power(p, d) + ASYMPTOTE


def two_point_fit(depths: Sequence[int], success: Sequence[float]) -> tuple[float, float]:
    """Closed-form (A, p) through two points of A p^d + 1/4 (p unclamped, may be nan)."""
    (d1, d2), (s1, s2) = depths, success
    y1, y2 = s1 - ASYMPTOTE, s2 - ASYMPTOTE
    if y1 <= 0 or y2 <= 0:
        return float("nan"), float("nan")
    p = (y2 / y1) ** (1.0 / (d2 - d1))
    return y1 / p**d1, p


def fit_decay(depths, success, stderr=None) -> tuple[float, float, float, bool]:
    """Least-squares fit of S(d) = A p^d + 1/4 with the asymptote fixed.

    Returns ``(A, p, stderr_p, low_confidence)``. p is clamped to [0, 1]; a clamp or
    a failed fit sets ``low_confidence``.
    """
    d = np.asarray(depths, dtype=float)
    s = np.asarray(success, dtype=float)
    sig = None if stderr is None else np.asarray(stderr, dtype=float)
    if d.size < 2:
        raise ValueError("need at least two depths to fit a decay")
    a0, p0 = two_point_fit(d[[0, -1]], s[[0, -1]])
    if d.size == 2:
        low = not (0.0 <= p0 <= 1.0)
        p = float(np.clip(np.nan_to_num(p0, nan=0.0), 0.0, 1.0))
        a = a0 if math.isfinite(a0) else float(s[0] - ASYMPTOTE)
        err = _two_point_stderr(d, s, sig, p)
        return float(a), p, err, low
    start = (
        float(np.clip(a0, 1e-6, 1.0)) if math.isfinite(a0) else 0.75,
        float(np.clip(p0, 1e-6, 1.0)) if math.isfinite(p0) else 0.5,
    )
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, pcov = curve_fit(
                _model, d, s, p0=start, sigma=sig, absolute_sigma=sig is not None,
                bounds=([0.0, 0.0], [1.0, 1.0]), method="trf", xtol=1e-12, ftol=1e-12,
            )
    except (RuntimeError, ValueError):
        p = float(np.clip(np.nan_to_num(p0, nan=0.0), 0.0, 1.0))
        return float(np.nan_to_num(a0, nan=0.0)), p, float("nan"), True
    a, p = (float(v) for v in popt)
    # trf stays strictly inside the bounds; treat a bound-pinned p as the bound
    if p > 1.0 - 1e-9:
        p = 1.0
    elif p < 1e-9:
        p = 0.0
    err = float(math.sqrt(pcov[1, 1])) if np.isfinite(pcov[1, 1]) and pcov[1, 1] >= 0 else float("nan")
    low = not math.isfinite(err) or p >= 1.0 or p <= 0.0 or bool(np.any(s <= ASYMPTOTE))
    return a, p, err, low


def _two_point_stderr(d, s, sig, p):
    if sig is None or p <= 0:
        return float("nan")
    y = s - ASYMPTOTE
    if np.any(y <= 0):
        return float("nan")
    var_log = float(np.sum((sig / y) ** 2)) / (d[1] - d[0]) ** 2
    return p * math.sqrt(var_log)


# ---------------------------------------------------------------------------
# benchmark


def _layer_cache(plant: NoisyPlant, t: float):
    """Memoized noisy-layer unitaries for one evaluation at fixed plant time."""
    cache: dict[Layer, np.ndarray] = {}
    noisy_layer = getattr(plant, "noisy_layer", None)

    def unitary_of(layer: Layer, n_qubits: int) -> np.ndarray:
        u = cache.get(layer)
        if u is None:
            if noisy_layer is not None:
                executed = noisy_layer(layer, t)
            else:
                executed = plant(Circuit(n_qubits, (layer,)), t).layers[0]
            u = cache[layer] = layer_unitary(executed, n_qubits)
        return u

    return unitary_of


def run_drb(design: DrbDesign, plant: NoisyPlant, t: float = 0.0, seed: int | None = None) -> DrbEstimate:
    """Benchmark ``plant`` at plant time ``t``.

    ``seed`` overrides ``design.rng_seed`` so that repeated evaluations can draw
    fresh circuits; every circuit's sampling and shot streams derive from
    ``(seed, depth, circuit index)``.
    """
    unitary_of = _layer_cache(plant, t)
    psi0 = basis_state("00")
    shots = design.shots_per_circuit
    means, errs, counts = [], [], []
    for depth in design.depths:
        succ = np.empty(design.circuits_per_depth)
        for i in range(design.circuits_per_depth):
            circ = sample_drb_circuit(design, depth, circuit_rng(design, depth, i, "circuit", seed))
            psi = psi0
            for layer in circ.layers:
                psi = unitary_of(layer, 2) @ psi
            psi = psi / np.linalg.norm(psi)
            hist = sample_measurements(psi, shots, circuit_rng(design, depth, i, "shots", seed))
            k = hist.get("00", 0)
            counts.append((depth, i, k, shots))
            succ[i] = k / shots
        m = float(succ.mean())
        n_tot = shots * design.circuits_per_depth
        between = float(succ.std(ddof=1) / math.sqrt(succ.size)) if succ.size > 1 else 0.0
        # binomial floor keeps the weight finite when all shots agree
        floor = math.sqrt(max(m * (1 - m), 1.0 / n_tot) / n_tot)
        means.append(m)
        errs.append(max(between, floor))
    a, p, err, low = fit_decay(design.depths, means, errs)
    return DrbEstimate(
        p_hat=p, objective=p, depths=design.depths, success=tuple(means), p_stderr=err,
        amplitude=a, low_confidence=low, counts=tuple(counts),
    )


def drb_runtime(design: DrbDesign, n_evals: int = 1) -> float:
    """Seconds of device time for ``n_evals`` benchmark evaluations."""
    f = design.two_qubit_fraction
    layer_time = f * T_2Q + (1 - f) * T_1Q
    per_eval = sum(
        design.circuits_per_depth * design.shots_per_circuit * (d * layer_time + design.t_overhead)
        for d in design.depths
    )
    return n_evals * per_eval


def calibrate_overhead(design: DrbDesign, n_evals: int, target_seconds: float) -> float:
    """Per-shot overhead that makes ``drb_runtime(design, n_evals)`` hit the target."""
    gate_only = drb_runtime(replace(design, t_overhead=0.0), n_evals)
    shots = n_evals * len(design.depths) * design.circuits_per_depth * design.shots_per_circuit
    return max(0.0, (target_seconds - gate_only) / shots)


def write_counts_csv(path, estimate: DrbEstimate, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["depth", "circuit", "successes", "shots"])
        w.writerows(estimate.counts)
