"""Dense state-vector simulation for one or two qubits.

Qubit 0 is the most significant bit: the basis state ``|q0 q1>`` has index
``2*q0 + q1`` and the bitstring ``"q0q1"``.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .rng import SeedLike, as_generator

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)

# swaps the two tensor factors of a 4x4 operator
_SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


def _check_finite(**values: float) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


def kron2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two 2x2 matrices (faster than np.kron at this size)."""
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(4, 4)


def pauli_phi(phi: float) -> np.ndarray:
    """cos(phi) X + sin(phi) Y."""
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[0, c - 1j * s], [c + 1j * s, 0]], dtype=complex)


def rot_gate(theta: float, phi: float) -> np.ndarray:
    """Single-qubit rotation exp(-i theta/2 sigma_phi)."""
    _check_finite(theta=theta, phi=phi)
    # sigma_phi squares to identity, so the exponential is closed form
    return math.cos(theta / 2) * I2 - 1j * math.sin(theta / 2) * pauli_phi(phi)


def ms_gate(chi: float, phi1: float, phi2: float) -> np.ndarray:
    """Molmer-Sorensen gate exp(-i chi/2 sigma_phi1 (x) sigma_phi2).

    ``chi = pi/2`` is maximally entangling.
    """
    _check_finite(chi=chi, phi1=phi1, phi2=phi2)
    gen = kron2(pauli_phi(phi1), pauli_phi(phi2))
    return math.cos(chi / 2) * np.eye(4, dtype=complex) - 1j * math.sin(chi / 2) * gen


def is_unitary(u: np.ndarray, atol: float = 1e-10) -> bool:
    u = np.asarray(u)
    return u.ndim == 2 and u.shape[0] == u.shape[1] and np.allclose(
        u.conj().T @ u, np.eye(u.shape[0]), rtol=0, atol=atol
    )


@dataclass(frozen=True)
class Gate:
    """A gate placement: kind, target qubits and parameters.

    kind is ``"R"`` (params ``(theta, phi)``), ``"MS"`` (``(chi, phi1, phi2)``) or
    ``"U"`` (an explicit 4x4 unitary on both qubits, stored row-major in params
    so that placements stay hashable).
    """

    kind: str
    targets: tuple[int, ...]
    params: tuple = ()

    def __post_init__(self):
        arity = {"R": 1, "MS": 2, "U": 2}.get(self.kind)
        if arity is None:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(self.targets) != arity or len(set(self.targets)) != arity:
            raise ValueError(f"{self.kind} gate needs {arity} distinct targets, got {self.targets}")
        if any(t < 0 for t in self.targets):
            raise ValueError(f"negative target in {self.targets}")

    @classmethod
    def r(cls, qubit: int, theta: float, phi: float) -> "Gate":
        return cls("R", (qubit,), (float(theta), float(phi)))

    @classmethod
    def ms(cls, chi: float, phi1: float, phi2: float, targets=(0, 1)) -> "Gate":
        return cls("MS", tuple(targets), (float(chi), float(phi1), float(phi2)))

    @classmethod
    def unitary(cls, u: np.ndarray, targets=(0, 1)) -> "Gate":
        u = np.asarray(u, dtype=complex)
        if u.shape != (4, 4):
            raise ValueError(f"explicit unitary must be 4x4, got {u.shape}")
        return cls("U", tuple(targets), tuple(complex(v) for v in u.ravel()))

    def matrix(self) -> np.ndarray:
        """Matrix in target order (first target is the most significant factor)."""
        if self.kind == "R":
            return rot_gate(*self.params)
        if self.kind == "MS":
            return ms_gate(*self.params)
        return np.array(self.params, dtype=complex).reshape(4, 4)


Layer = tuple[Gate, ...]


def _validate_layer(layer: Layer, n_qubits: int) -> None:
    used: list[int] = []
    for g in layer:
        for t in g.targets:
            if t >= n_qubits:
                raise ValueError(f"target {t} out of range for {n_qubits} qubit(s)")
        used.extend(g.targets)
    if len(used) != len(set(used)):
        raise ValueError(f"overlapping targets in layer {layer}")
    if any(len(g.targets) == 2 for g in layer) and len(layer) != 1:
        raise ValueError("a two-qubit gate must be alone in its layer")


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    layers: tuple[Layer, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.n_qubits not in (1, 2):
            raise ValueError(f"only 1 or 2 qubits supported, got {self.n_qubits}")
        object.__setattr__(self, "layers", tuple(tuple(layer) for layer in self.layers))
        for layer in self.layers:
            _validate_layer(layer, self.n_qubits)

    def __len__(self) -> int:
        return len(self.layers)

    def append(self, *layers: Iterable[Gate]) -> "Circuit":
        return Circuit(self.n_qubits, self.layers + tuple(tuple(layer) for layer in layers))


def layer_unitary(layer: Layer, n_qubits: int) -> np.ndarray:
    """Full 2^n x 2^n unitary of one layer; idle qubits get the identity."""
    if n_qubits == 1:
        return layer[0].matrix() if layer else I2.copy()
    if len(layer) == 1 and len(layer[0].targets) == 2:
        g = layer[0]
        m = g.matrix()
        return m if g.targets == (0, 1) else _SWAP @ m @ _SWAP
    factors = [I2, I2]
    for g in layer:
        factors[g.targets[0]] = g.matrix()
    return kron2(factors[0], factors[1])


@lru_cache(maxsize=4096)
def cached_layer_unitary(layer: Layer, n_qubits: int) -> np.ndarray:
    """Read-only memoized ``layer_unitary``; worthwhile for small discrete gate sets."""
    u = layer_unitary(layer, n_qubits)
    u.setflags(write=False)
    return u


def circuit_unitary(circuit: Circuit, unitary_of=cached_layer_unitary) -> np.ndarray:
    u = np.eye(2**circuit.n_qubits, dtype=complex)
    for layer in circuit.layers:
        u = unitary_of(layer, circuit.n_qubits) @ u
    return u


def basis_state(bits: str) -> np.ndarray:
    """Computational basis state, e.g. ``basis_state("01")``."""
    if not bits or set(bits) - {"0", "1"} or len(bits) > 2:
        raise ValueError(f"bad bitstring {bits!r}")
    psi = np.zeros(2 ** len(bits), dtype=complex)
    psi[int(bits, 2)] = 1.0
    return psi


def check_state(state: np.ndarray, atol: float = 1e-10) -> np.ndarray:
    psi = np.asarray(state, dtype=complex)
    if psi.ndim != 1 or psi.size not in (2, 4):
        raise ValueError(f"state must be a vector of length 2 or 4, got shape {psi.shape}")
    if abs(np.linalg.norm(psi) - 1.0) > atol:
        raise ValueError(f"state is not normalized (norm {np.linalg.norm(psi)!r})")
    return psi


def apply_circuit(
    state: np.ndarray,
    circuit: Circuit,
    unitary_of: Callable[[Layer, int], np.ndarray] = layer_unitary,
) -> np.ndarray:
    """Apply each layer in order. ``unitary_of`` allows callers to memoize layers."""
    psi = check_state(state)
    if psi.size != 2**circuit.n_qubits:
        raise ValueError(
            f"state of dimension {psi.size} does not match a {circuit.n_qubits}-qubit circuit"
        )
    for layer in circuit.layers:
        psi = unitary_of(layer, circuit.n_qubits) @ psi
    return psi


def probabilities(state: np.ndarray) -> np.ndarray:
    p = np.abs(np.asarray(state)) ** 2
    return p / p.sum()


def bitstrings(n_qubits: int) -> list[str]:
    return [format(i, f"0{n_qubits}b") for i in range(2**n_qubits)]


def sample_measurements(state: np.ndarray, shots: int, rng_seed: SeedLike) -> dict[str, int]:
    """Multinomial computational-basis measurement; only observed outcomes appear."""
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    psi = check_state(state, atol=1e-8)
    n = int(math.log2(psi.size))
    counts = as_generator(rng_seed).multinomial(int(shots), probabilities(psi))
    return {b: int(c) for b, c in zip(bitstrings(n), counts) if c}


def average_gate_fidelity(u_actual: np.ndarray, u_ideal: np.ndarray) -> float:
    """(|Tr(U_ideal^dag U_actual)|^2 + d) / (d^2 + d)."""
    a, b = np.asarray(u_actual), np.asarray(u_ideal)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a.shape[0]
    overlap = abs(np.trace(b.conj().T @ a)) ** 2
    return float(min(1.0, (overlap + d) / (d * d + d)))


def state_overlap(a: Sequence[complex], b: Sequence[complex]) -> float:
    """|<a|b>|, the phase-insensitive comparison used throughout."""
    return float(abs(np.vdot(np.asarray(a), np.asarray(b))))
