"""Gate-model realization: the evolution is compiled into n_segments blocks,
each one an R_y and an R_z on every qubit followed by a ZZ coupler on every
pair (lexicographic order). The ZZ coupler on (i, j) is the hardware-native
sandwich CNOT(i->j) R_z(theta on j) CNOT(i->j) = exp(-i theta Z_i Z_j / 2).

Rotation convention: R_a(theta) = exp(-i theta sigma_a / 2).

Weight layout: for each segment, [ry angle per qubit, rz angle per qubit,
zz angle per pair], so len(angles) = n_segments * (2 N + N(N-1)/2).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from . import seeding
from .dynamics import CLASS_BIAS, CLASS_COUPLING, CLASS_TUNNELING, qubit_pairs
from .qstate import (
    QuantumState,
    WitnessEstimate,
    estimate_from_value,
    mixed_state,
    pure_state,
    sample_witness,
    witness_expectation,
    witness_parity,
)

DEFAULT_N_SEGMENTS = 4


class BackendError(RuntimeError):
    """Raised when a measurement backend cannot serve a request."""


@dataclass(frozen=True)
class Backend:
    """Measurement backend: exact expectations, seeded shot sampling, or an
    external submitter consuming the JSON gate list."""

    mode: str = "exact"
    shots: int = 0
    seed: int | None = None
    submitter: object = None

    def __post_init__(self):
        if self.mode not in ("exact", "shots", "external"):
            raise ValueError(f"unknown backend mode {self.mode!r}")
        if self.mode != "exact" and self.shots < 1:
            raise ValueError(f"{self.mode} backend needs shots >= 1")
        if self.mode == "shots" and self.seed is None:
            raise ValueError("shots backend needs a seed")

    def with_seed(self, seed: int) -> Backend:
        return replace(self, seed=seed)


@dataclass(frozen=True, eq=False)
class CircuitWeights:
    """Flat angle vector for the segmented circuit."""

    n_qubits: int
    n_segments: int
    angles: np.ndarray

    def __post_init__(self):
        a = np.array(self.angles, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "angles", a)
        if self.n_qubits < 1 or self.n_segments < 1:
            raise ValueError("need at least one qubit and one segment")
        expected = self.n_segments * self.segment_width
        if a.shape != (expected,):
            raise ValueError(f"expected {expected} angles, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("angles must be finite")

    @property
    def n_pairs(self) -> int:
        return self.n_qubits * (self.n_qubits - 1) // 2

    @property
    def segment_width(self) -> int:
        return 2 * self.n_qubits + self.n_pairs

    def segment(self, s: int) -> np.ndarray:
        w = self.segment_width
        return self.angles[s * w : (s + 1) * w]

    def split_segment(self, s: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(ry angles, rz angles, zz angles) of one segment."""
        seg = self.segment(s)
        n = self.n_qubits
        return seg[:n], seg[n : 2 * n], seg[2 * n :]

    def with_angles(self, angles: np.ndarray) -> CircuitWeights:
        return replace(self, angles=angles)

    def weight_classes(self) -> np.ndarray:
        """Hyperparameter class of each angle (ry <- tunneling, rz <- bias,
        zz <- coupling)."""
        n, p = self.n_qubits, self.n_pairs
        per_seg = [CLASS_TUNNELING] * n + [CLASS_BIAS] * n + [CLASS_COUPLING] * p
        return np.array(per_seg * self.n_segments)


# ---------------------------------------------------------------------------
# gates
# ---------------------------------------------------------------------------

def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz_matrix(theta: float) -> np.ndarray:
    return np.diag([np.exp(-1j * theta / 2), np.exp(1j * theta / 2)])


def cnot_matrix(control: int, target: int, n_qubits: int) -> np.ndarray:
    if control == target:
        raise ValueError("control and target must differ")
    dim = 1 << n_qubits
    idx = np.arange(dim)
    ctrl_bit = (idx >> (n_qubits - 1 - control)) & 1
    flipped = np.where(ctrl_bit == 1, idx ^ (1 << (n_qubits - 1 - target)), idx)
    m = np.zeros((dim, dim), dtype=complex)
    m[flipped, idx] = 1.0
    return m


def _z_diag(qubit: int, n_qubits: int) -> np.ndarray:
    idx = np.arange(1 << n_qubits)
    return 1.0 - 2.0 * ((idx >> (n_qubits - 1 - qubit)) & 1)


def segment_unitary(weights: CircuitWeights, s: int) -> np.ndarray:
    """Unitary of segment s: ZZ couplers after the R_z layer after the R_y layer."""
    n = weights.n_qubits
    ry, rz, zz = weights.split_segment(s)
    u = np.array([[1.0 + 0.0j]])
    for q in range(n):
        u = np.kron(u, ry_matrix(ry[q]))
    diag = np.ones(1 << n, dtype=complex)
    for q in range(n):
        diag *= np.exp(-0.5j * rz[q] * _z_diag(q, n))
    for (i, j), theta in zip(qubit_pairs(n), zz):
        diag *= np.exp(-0.5j * theta * _z_diag(i, n) * _z_diag(j, n))
    return diag[:, None] * u


def circuit_unitary(weights: CircuitWeights) -> np.ndarray:
    u = np.eye(1 << weights.n_qubits, dtype=complex)
    for s in range(weights.n_segments):
        u = segment_unitary(weights, s) @ u
    return u


# ---------------------------------------------------------------------------
# wire format
# ---------------------------------------------------------------------------

def circuit_gates(weights: CircuitWeights, prep: list[dict] | None = None) -> list[dict]:
    """Gate list consumed by external backends. ZZ couplers are emitted as
    their CNOT / R_z / CNOT decomposition."""
    gates: list[dict] = list(prep) if prep else []
    n = weights.n_qubits
    for s in range(weights.n_segments):
        ry, rz, zz = weights.split_segment(s)
        for q in range(n):
            gates.append({"gate": "ry", "qubits": [q], "angle": float(ry[q])})
        for q in range(n):
            gates.append({"gate": "rz", "qubits": [q], "angle": float(rz[q])})
        for (i, j), theta in zip(qubit_pairs(n), zz):
            gates.append({"gate": "cnot", "qubits": [i, j]})
            gates.append({"gate": "rz", "qubits": [j], "angle": float(theta)})
            gates.append({"gate": "cnot", "qubits": [i, j]})
    return gates


def gates_to_json(gates: list[dict]) -> str:
    return json.dumps(gates)


def apply_gates(state: QuantumState, gates: list[dict]) -> QuantumState:
    """Reference interpreter for the wire format (used to exercise external
    submitters and to validate serialization round trips)."""
    n = state.n_qubits
    pure = state.kind == "pure"
    data = np.array(state.data)
    for g in gates:
        name, qubits = g["gate"], g["qubits"]
        if name in ("ry", "rz"):
            single = ry_matrix(g["angle"]) if name == "ry" else rz_matrix(g["angle"])
            u = np.array([[1.0 + 0.0j]])
            for q in range(n):
                u = np.kron(u, single if q == qubits[0] else np.eye(2, dtype=complex))
        elif name == "cnot":
            u = cnot_matrix(qubits[0], qubits[1], n)
        else:
            raise ValueError(f"unknown gate {name!r}")
        data = u @ data if pure else u @ data @ u.conj().T
    return pure_state(data) if pure else mixed_state(data)


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def _final_state(weights: CircuitWeights, state: QuantumState) -> QuantumState:
    u = circuit_unitary(weights)
    if state.kind == "pure":
        return pure_state(u @ state.data)
    return mixed_state(u @ state.data @ u.conj().T)


def run_circuit(
    weights: CircuitWeights,
    state: QuantumState,
    alpha: int,
    beta: int,
    backend: Backend,
    prep: list[dict] | None = None,
) -> WitnessEstimate:
    """Apply the circuit to state and measure the (alpha, beta) witness."""
    if state.n_qubits != weights.n_qubits:
        raise ValueError("state and weights disagree on qubit count")
    if backend.mode == "external":
        if backend.submitter is None:
            raise BackendError("external backend unavailable: no submitter configured")
        if prep is None:
            probs = state.probabilities()
            if state.kind != "pure" or abs(probs[0] - 1.0) > 1e-12:
                raise BackendError("external backend needs a gate preparation for non |0..0> inputs")
            prep = []
        payload = {"n_qubits": weights.n_qubits, "gates": circuit_gates(weights, prep)}
        counts = backend.submitter(gates_to_json(payload["gates"]), weights.n_qubits, backend.shots)
        return _estimate_from_counts(counts, alpha, beta, weights.n_qubits, backend.shots)
    final = _final_state(weights, state)
    if backend.mode == "exact":
        return WitnessEstimate(value=witness_expectation(final, alpha, beta))
    return sample_witness(final, alpha, beta, backend.shots, backend.seed)


def _estimate_from_counts(counts: dict, alpha: int, beta: int, n_qubits: int, shots: int) -> WitnessEstimate:
    total = sum(counts.values())
    if total != shots:
        raise BackendError(f"external backend returned {total} shots, expected {shots}")
    acc = 0
    for bits, c in counts.items():
        if len(bits) != n_qubits or set(bits) - {"0", "1"}:
            raise BackendError(f"malformed bitstring {bits!r} from external backend")
        acc += c if bits[alpha] == bits[beta] else -c
    return estimate_from_value(acc / shots, shots=shots)


def parameter_shift_grad(
    weights: CircuitWeights,
    j: int,
    state: QuantumState,
    alpha: int,
    beta: int,
    backend: Backend,
) -> float:
    """d<O>/d angle_j by the parameter-shift rule (O(w + pi/2) - O(w - pi/2))/2.

    In shots mode each side draws from its own derived stream so parallel
    evaluation order cannot change the result.
    """
    if not 0 <= j < weights.angles.shape[0]:
        raise ValueError(f"weight index {j} out of range")
    grads = []
    for sign in (+1, -1):
        shifted = weights.angles.copy()
        shifted[j] += sign * np.pi / 2
        b = backend
        if backend.mode == "shots":
            b = backend.with_seed(seeding.derive_seed(backend.seed, j, 1 if sign > 0 else 2))
        grads.append(run_circuit(weights.with_angles(shifted), state, alpha, beta, b).value)
    return (grads[0] - grads[1]) / 2.0


# ---------------------------------------------------------------------------
# bridge to the continuous model
# ---------------------------------------------------------------------------

def equivalent_parameter_schedule(weights: CircuitWeights, t_f: float) -> list[tuple[float, np.ndarray]]:
    """Piecewise-constant control schedule whose evolution reproduces the
    circuit exactly.

    Each segment becomes four equal intervals. R_y is not generated by any
    sigma_x/sigma_z/ZZ Hamiltonian directly, but
    R_y(theta) = R_z(pi/2) R_x(theta) R_z(-pi/2) holds exactly, so a segment
    [ry / rz / zz] maps to bias(-pi/2), tunneling(theta_ry),
    bias(phi_rz + pi/2), coupling(theta_zz) intervals, using
    exp(-i w G tau) = R_G(2 w tau) for each commuting layer.
    """
    n, p = weights.n_qubits, weights.n_pairs
    n_gen = 2 * n + p
    tau = (t_f / weights.n_segments) / 4.0
    schedule: list[tuple[float, np.ndarray]] = []

    def interval(k_vals=None, eps_vals=None, zeta_vals=None):
        v = np.zeros(n_gen)
        if k_vals is not None:
            v[:n] = k_vals
        if eps_vals is not None:
            v[n : 2 * n] = eps_vals
        if zeta_vals is not None:
            v[2 * n :] = zeta_vals
        schedule.append((tau, v))

    for s in range(weights.n_segments):
        ry, rz, zz = weights.split_segment(s)
        interval(eps_vals=np.full(n, -np.pi / (4.0 * tau)))
        interval(k_vals=ry / (2.0 * tau))
        interval(eps_vals=(rz + np.pi / 2.0) / (2.0 * tau))
        interval(zeta_vals=zz / (2.0 * tau))
    return schedule


def weights_from_params(values: np.ndarray, n_qubits: int, t_f: float) -> CircuitWeights:
    """Translate segment-midpoint control values (rows of
    piecewise_constant_params) into circuit angles, angle = 2 * value * dt_seg,
    so each rotation carries the control's time integral over its segment.
    This seeds a gate model from trained continuous controls; it is not a
    dynamical equivalence (the exact direction is
    equivalent_parameter_schedule, circuit -> schedule)."""
    values = np.asarray(values, dtype=float)
    n_segments = values.shape[0]
    dt_seg = t_f / n_segments
    return CircuitWeights(
        n_qubits=n_qubits,
        n_segments=n_segments,
        angles=(2.0 * dt_seg * values).reshape(-1),
    )


# ---------------------------------------------------------------------------
# serialization (checkpoint format)
# ---------------------------------------------------------------------------

def weights_to_json(weights: CircuitWeights) -> str:
    payload = {
        "n_qubits": weights.n_qubits,
        "n_segments": weights.n_segments,
        "angles": weights.angles.tolist(),
    }
    return json.dumps(payload, indent=2)


def weights_from_json(text: str) -> CircuitWeights:
    payload = json.loads(text)
    for key in ("n_qubits", "n_segments", "angles"):
        if key not in payload:
            raise ValueError(f"weights JSON is missing key {key!r}")
    return CircuitWeights(
        n_qubits=int(payload["n_qubits"]),
        n_segments=int(payload["n_segments"]),
        angles=np.array(payload["angles"], dtype=float),
    )
