"""States, operators, and measurements for small N-qubit systems.

Qubit ordering convention, fixed for the whole package: qubit 0 is the
leftmost tensor factor, i.e. the most significant bit of a computational
basis index. On two qubits |01> is basis index 1, with qubit 0 in |0> and
qubit 1 in |1>.

Tolerances: 1e-12 for algebraic identities checked at construction, 1e-10
for quantities accumulated over an evolution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

ATOL_ALGEBRA = 1e-12
ATOL_EVOLVE = 1e-10
MAX_QUBITS = 12

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)
_PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}

_SY_SY = np.kron(SIGMA_Y, SIGMA_Y)


def _frozen_array(values, dtype=complex) -> np.ndarray:
    a = np.array(values, dtype=dtype)
    a.setflags(write=False)
    return a


def _n_qubits_for_dim(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 2 or (1 << n) != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True, eq=False)
class QuantumState:
    """A pure state vector or a density matrix on n_qubits.

    kind is "pure" (data is an amplitude vector of length 2**n_qubits) or
    "mixed" (data is a 2**n x 2**n density matrix). Invariants are checked
    at construction: unit squared norm for pure states; Hermiticity, unit
    trace, and eigenvalues >= -1e-10 for mixed ones.
    """

    n_qubits: int
    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in ("pure", "mixed"):
            raise ValueError(f"unknown state kind {self.kind!r}")
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {self.n_qubits}")
        dim = 1 << self.n_qubits
        data = _frozen_array(self.data)
        object.__setattr__(self, "data", data)
        if self.kind == "pure":
            if data.shape != (dim,):
                raise ValueError(f"pure state on {self.n_qubits} qubits needs shape ({dim},)")
            norm2 = float(np.sum(np.abs(data) ** 2))
            if abs(norm2 - 1.0) > ATOL_ALGEBRA:
                raise ValueError(f"pure state squared norm {norm2} is not 1 within {ATOL_ALGEBRA}")
        else:
            if data.shape != (dim, dim):
                raise ValueError(f"density matrix on {self.n_qubits} qubits needs shape ({dim}, {dim})")
            if not np.allclose(data, data.conj().T, atol=ATOL_ALGEBRA, rtol=0.0):
                raise ValueError("density matrix is not Hermitian within 1e-12")
            tr = complex(np.trace(data))
            if abs(tr - 1.0) > ATOL_ALGEBRA:
                raise ValueError(f"density matrix trace {tr} is not 1 within {ATOL_ALGEBRA}")
            evals = np.linalg.eigvalsh(data)
            if float(evals.min()) < -ATOL_EVOLVE:
                raise ValueError(f"density matrix has negative eigenvalue {evals.min()}")

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    def density(self) -> np.ndarray:
        """Density-matrix view of the state (outer product for pure states)."""
        if self.kind == "pure":
            return np.outer(self.data, self.data.conj())
        return np.array(self.data)

    def probabilities(self) -> np.ndarray:
        """Computational-basis probabilities, clipped and renormalized."""
        if self.kind == "pure":
            p = np.abs(self.data) ** 2
        else:
            p = np.real(np.diagonal(self.data)).copy()
        p = np.clip(p, 0.0, None)
        return p / p.sum()


@dataclass(frozen=True, eq=False)
class Observable:
    """A Hermitian operator with a human-readable label."""

    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        m = _frozen_array(self.matrix)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("observable must be a square matrix")
        if not np.allclose(m, m.conj().T, atol=ATOL_ALGEBRA, rtol=0.0):
            raise ValueError(f"observable {self.label!r} is not Hermitian within 1e-12")


@dataclass(frozen=True)
class WitnessEstimate:
    """A witness measurement: exact (shots = 0) or shot-sampled."""

    value: float
    shots: int = 0
    std_err: float = 0.0

    def __post_init__(self):
        if not -1.0 - ATOL_EVOLVE <= self.value <= 1.0 + ATOL_EVOLVE:
            raise ValueError(f"witness value {self.value} outside [-1, 1]")
        if self.shots < 0:
            raise ValueError("shots must be >= 0")
        expected = 0.0 if self.shots == 0 else float(np.sqrt(max(0.0, 1.0 - self.value**2) / self.shots))
        if abs(self.std_err - expected) > ATOL_ALGEBRA:
            raise ValueError(f"std_err {self.std_err} inconsistent with value/shots (expected {expected})")


def estimate_from_value(value: float, shots: int = 0) -> WitnessEstimate:
    """Build a WitnessEstimate with the std_err the (value, shots) pair implies."""
    value = float(min(1.0, max(-1.0, value)))
    err = 0.0 if shots == 0 else float(np.sqrt(max(0.0, 1.0 - value**2) / shots))
    return WitnessEstimate(value=value, shots=shots, std_err=err)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def pure_state(amplitudes, normalize: bool = False) -> QuantumState:
    """Pure state from an amplitude vector."""
    a = np.asarray(amplitudes, dtype=complex)
    if normalize:
        a = a / np.linalg.norm(a)
    return QuantumState(n_qubits=_n_qubits_for_dim(a.shape[0]), kind="pure", data=a)


def mixed_state(matrix) -> QuantumState:
    m = np.asarray(matrix, dtype=complex)
    return QuantumState(n_qubits=_n_qubits_for_dim(m.shape[0]), kind="mixed", data=m)


def basis_state(n_qubits: int, index: int = 0) -> QuantumState:
    """|index> in the computational basis (qubit 0 = most significant bit)."""
    dim = 1 << n_qubits
    if not 0 <= index < dim:
        raise ValueError(f"basis index {index} out of range for {n_qubits} qubits")
    a = np.zeros(dim, dtype=complex)
    a[index] = 1.0
    return QuantumState(n_qubits=n_qubits, kind="pure", data=a)


def bell_state() -> QuantumState:
    """(|00> + |11>)/sqrt(2)."""
    return pure_state([1.0, 0.0, 0.0, 1.0], normalize=True)


def maximally_mixed(n_qubits: int) -> QuantumState:
    dim = 1 << n_qubits
    return mixed_state(np.eye(dim) / dim)


# ---------------------------------------------------------------------------
# operator construction
# ---------------------------------------------------------------------------

def tensor_product(a: np.ndarray, b: np.ndarray, max_qubits: int = MAX_QUBITS) -> np.ndarray:
    """Kronecker product of two vectors or two operators, with a size guard."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != b.ndim or a.ndim not in (1, 2):
        raise ValueError("tensor_product expects two vectors or two square matrices")
    na = _n_qubits_for_dim(a.shape[0])
    nb = _n_qubits_for_dim(b.shape[0])
    if na + nb > max_qubits:
        raise ValueError(f"tensor product would span {na + nb} qubits, above the cap of {max_qubits}")
    return np.kron(a, b)


def pauli_on(axis: str, qubit: int, n_qubits: int) -> Observable:
    """sigma_axis acting on one qubit, identity elsewhere."""
    if axis not in _PAULI:
        raise ValueError(f"axis must be one of x, y, z, got {axis!r}")
    if not 0 <= qubit < n_qubits:
        raise ValueError(f"qubit {qubit} out of range for {n_qubits} qubits")
    op = np.array([[1.0 + 0.0j]])
    for q in range(n_qubits):
        op = np.kron(op, _PAULI[axis] if q == qubit else IDENTITY_2)
    return Observable(matrix=op, label=f"sigma_{axis}({qubit})")


def _bit(indices: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    return (indices >> (n_qubits - 1 - qubit)) & 1


def witness_parity(alpha: int, beta: int, n_qubits: int) -> np.ndarray:
    """Diagonal of sigma_z(alpha) sigma_z(beta): +1 where bits agree, -1 where not."""
    if alpha == beta:
        raise ValueError("witness qubits must be distinct")
    for q in (alpha, beta):
        if not 0 <= q < n_qubits:
            raise ValueError(f"qubit {q} out of range for {n_qubits} qubits")
    idx = np.arange(1 << n_qubits)
    return np.where(_bit(idx, alpha, n_qubits) == _bit(idx, beta, n_qubits), 1.0, -1.0)


def witness_observable(alpha: int, beta: int, n_qubits: int) -> Observable:
    """The pairwise witness operator sigma_z(alpha) sigma_z(beta)."""
    diag = witness_parity(alpha, beta, n_qubits)
    return Observable(matrix=np.diag(diag.astype(complex)), label=f"sz({alpha})sz({beta})")


# ---------------------------------------------------------------------------
# measurement
# ---------------------------------------------------------------------------

def witness_expectation(state: QuantumState, alpha: int, beta: int) -> float:
    """tr[rho sigma_z(alpha) sigma_z(beta)], exact."""
    parity = witness_parity(alpha, beta, state.n_qubits)
    if state.kind == "pure":
        value = float(np.sum((np.abs(state.data) ** 2) * parity))
    else:
        diag = np.diagonal(state.data)
        if float(np.max(np.abs(diag.imag))) > ATOL_EVOLVE:
            raise ValueError("density matrix diagonal has imaginary residue above 1e-10")
        value = float(np.sum(diag.real * parity))
    return min(1.0, max(-1.0, value))


def sample_witness(state: QuantumState, alpha: int, beta: int, shots: int, rng_seed: int) -> WitnessEstimate:
    """Shot-sampled witness: measure every qubit, reduce each shot to the
    (alpha, beta) parity, and average (n_same - n_diff)/shots."""
    if shots < 1:
        raise ValueError("shots must be >= 1 when sampling")
    parity = witness_parity(alpha, beta, state.n_qubits)
    probs = state.probabilities()
    rng = np.random.default_rng(rng_seed)
    counts = rng.multinomial(shots, probs)
    n_same = int(counts[parity > 0].sum())
    value = (2 * n_same - shots) / shots
    return estimate_from_value(value, shots=shots)


# ---------------------------------------------------------------------------
# entanglement oracle
# ---------------------------------------------------------------------------

def concurrence2(state: QuantumState) -> float:
    """Wootters concurrence of a two-qubit state.

    C = max(0, l1 - l2 - l3 - l4) where l_i are the square roots of the
    eigenvalues of rho (sy x sy) rho* (sy x sy) in decreasing order.
    """
    if state.n_qubits != 2:
        raise ValueError("concurrence2 is defined for two-qubit states")
    rho = state.density()
    rho_tilde = _SY_SY @ rho.conj() @ _SY_SY
    # rho rho_tilde is not normal; sqrt(rho) rho_tilde sqrt(rho) has the same
    # spectrum, is Hermitian PSD, and diagonalizes at machine precision
    w, v = np.linalg.eigh(rho)
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    evals = np.linalg.eigvalsh(root @ rho_tilde @ root)
    lam = np.sqrt(np.clip(evals, 0.0, None))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


# ---------------------------------------------------------------------------
# embedding and reduction
# ---------------------------------------------------------------------------

def embed_pair_state(pair_amplitudes, alpha: int, beta: int, n_qubits: int) -> QuantumState:
    """Place a two-qubit pure state on qubits (alpha, beta) with every other
    qubit in |0>."""
    if alpha == beta:
        raise ValueError("pair qubits must be distinct")
    amps = np.asarray(pair_amplitudes, dtype=complex)
    if amps.shape != (4,):
        raise ValueError("pair state needs 4 amplitudes")
    full = np.zeros(1 << n_qubits, dtype=complex)
    for a_bit in (0, 1):
        for b_bit in (0, 1):
            idx = (a_bit << (n_qubits - 1 - alpha)) | (b_bit << (n_qubits - 1 - beta))
            full[idx] = amps[(a_bit << 1) | b_bit]
    return pure_state(full)


def partial_trace(state: QuantumState, keep: tuple[int, ...]) -> QuantumState:
    """Reduced density matrix on the kept qubits (in the order given)."""
    n = state.n_qubits
    keep = tuple(keep)
    if len(set(keep)) != len(keep) or any(not 0 <= q < n for q in keep):
        raise ValueError(f"keep={keep} is not a valid subset of 0..{n - 1}")
    drop = [q for q in range(n) if q not in keep]
    if state.kind == "pure":
        psi = state.data.reshape([2] * n)
        psi = np.transpose(psi, list(keep) + drop)
        mat = psi.reshape(1 << len(keep), 1 << len(drop))
        rho = mat @ mat.conj().T
    else:
        rho_t = state.data.reshape([2] * (2 * n))
        order = list(keep) + drop
        rho_t = np.transpose(rho_t, order + [n + q for q in order])
        k, d = 1 << len(keep), 1 << len(drop)
        rho_t = rho_t.reshape(k, d, k, d)
        rho = np.einsum("aibi->ab", rho_t)
    return mixed_state(rho)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def state_to_json(state: QuantumState) -> str:
    """JSON form {n_qubits, kind, re, im}; matrices are row-major."""
    flat = state.data.reshape(-1)
    payload = {
        "n_qubits": state.n_qubits,
        "kind": state.kind,
        "re": flat.real.tolist(),
        "im": flat.imag.tolist(),
    }
    return json.dumps(payload)


def state_from_json(text: str) -> QuantumState:
    payload = json.loads(text)
    for key in ("n_qubits", "kind", "re", "im"):
        if key not in payload:
            raise ValueError(f"state JSON is missing key {key!r}")
    n = int(payload["n_qubits"])
    kind = payload["kind"]
    data = np.array(payload["re"], dtype=float) + 1j * np.array(payload["im"], dtype=float)
    dim = 1 << n
    if kind == "mixed":
        data = data.reshape(dim, dim)
    return QuantumState(n_qubits=n, kind=kind, data=data)
