"""Flat-weight-vector adapters the trainers drive.

Both system models expose the same small surface: a weight vector, the class
label of each weight (tunneling / bias / coupling, which is what the
per-class hyperparameters key on), the witness output for a training pair
under a backend, and one Jacobian row d<O>/dw. The continuous model
differentiates by the adjoint method (exact backend) or central finite
differences (shots); the gate model uses the parameter-shift rule.
"""

from __future__ import annotations

import numpy as np

from .circuit import Backend, BackendError, CircuitWeights, parameter_shift_grad, run_circuit, weights_to_json
from .dynamics import (
    CLASS_BIAS,
    CLASS_COUPLING,
    CLASS_TUNNELING,
    DEFAULT_HARMONICS,
    DEFAULT_N_STEPS,
    DEFAULT_T_F,
    EvolutionConfig,
    FourierParam,
    HamiltonianParams,
    evolve,
    params_to_json,
    propagators,
    qubit_pairs,
)
from .optim import backprop_gradient
from .qstate import sample_witness, witness_expectation
from . import seeding

# Per-class hyperparameters: initial magnitude (rad/ns), relative
# perturbation for forward differences (0.02%), and gradient-descent rate.
HAMILTONIAN_HYPER = {
    CLASS_TUNNELING: {"init": 2.5e-3, "perturbation": 2e-4, "rate": 2e-8},
    CLASS_BIAS: {"init": 1.0e-4, "perturbation": 2e-4, "rate": 0.0},
    CLASS_COUPLING: {"init": 1.0e-4, "perturbation": 2e-4, "rate": 4e-7},
}
CIRCUIT_HYPER = {
    CLASS_TUNNELING: {"init": 2.0e-3, "perturbation": 2e-4, "rate": 1e-2},
    CLASS_BIAS: {"init": 1.0e-4, "perturbation": 2e-4, "rate": 1e-3},
    CLASS_COUPLING: {"init": 1.0e-4, "perturbation": 2e-4, "rate": 1e-3},
}


class HamiltonianModel:
    """Fourier-parameterized continuous model behind the trainer interface."""

    kind = "hamiltonian"

    def __init__(self, params: HamiltonianParams, cfg: EvolutionConfig | None = None, hyper: dict | None = None):
        self.params = params
        self.cfg = cfg or EvolutionConfig()
        hyper = hyper or HAMILTONIAN_HYPER
        self.class_scales = {cls: hyper[cls]["init"] for cls in hyper}
        self.fd_rel = 1e-2  # relative step for the shots-mode Jacobian
        self._table = None

    @property
    def n_qubits(self) -> int:
        return self.params.n_qubits

    @property
    def n_weights(self) -> int:
        return self.params.flatten().shape[0]

    def weights(self) -> np.ndarray:
        return self.params.flatten()

    def set_weights(self, vec: np.ndarray) -> None:
        self.params = self.params.with_flat(vec)
        self._table = None

    def weight_classes(self) -> np.ndarray:
        return self.params.coefficient_classes()

    def table(self):
        """Step propagators for the current parameters, shared across pairs."""
        if self._table is None:
            self._table = propagators(self.params, self.cfg)
        return self._table

    @staticmethod
    def _measure(final, pair, backend: Backend) -> float:
        if backend.mode == "exact":
            return witness_expectation(final, pair.alpha, pair.beta)
        if backend.mode == "shots":
            return sample_witness(final, pair.alpha, pair.beta, backend.shots, backend.seed).value
        raise BackendError("external backends serve the gate model only")

    def output(self, pair, backend: Backend) -> float:
        final = evolve(pair.input, self.params, self.cfg, table=self.table()).final
        return self._measure(final, pair, backend)

    def jacobian_row(self, pair, backend: Backend) -> np.ndarray:
        if backend.mode == "exact":
            return backprop_gradient(self.params, pair, self.cfg, kind="output", table=self.table())
        # central differences on shifted parameter copies; model state is
        # never touched, so rows can be computed concurrently
        w = self.weights()
        classes = self.weight_classes()
        row = np.empty_like(w)
        for j in range(w.shape[0]):
            step = max(self.fd_rel * abs(w[j]), self.fd_rel * self.class_scales[classes[j]])
            vals = []
            for sign, tag in ((+1, 1), (-1, 2)):
                shifted = w.copy()
                shifted[j] += sign * step
                hp = self.params.with_flat(shifted)
                b = backend.with_seed(seeding.derive_seed(backend.seed, j, tag))
                vals.append(self._measure(evolve(pair.input, hp, self.cfg).final, pair, b))
            row[j] = (vals[0] - vals[1]) / (2.0 * step)
        return row

    def error_gradient(self, pair) -> np.ndarray:
        """dE/dw for E = (target - <O>)^2 / 2, by the adjoint method."""
        return backprop_gradient(self.params, pair, self.cfg, kind="error", table=self.table())

    def checkpoint_text(self) -> str:
        return params_to_json(self.params)


class CircuitModel:
    """Segmented gate circuit behind the trainer interface."""

    kind = "circuit"

    def __init__(self, weights: CircuitWeights, hyper: dict | None = None, t_f: float = DEFAULT_T_F):
        self.w = weights
        hyper = hyper or CIRCUIT_HYPER
        dt_seg = t_f / weights.n_segments
        # class scale in angle units: theta = 2 * w * dt_seg
        self.class_scales = {cls: 2.0 * hyper[cls]["init"] * dt_seg for cls in hyper}

    @property
    def n_qubits(self) -> int:
        return self.w.n_qubits

    @property
    def n_weights(self) -> int:
        return self.w.angles.shape[0]

    def weights(self) -> np.ndarray:
        return np.array(self.w.angles)

    def set_weights(self, vec: np.ndarray) -> None:
        self.w = self.w.with_angles(np.asarray(vec, dtype=float))

    def weight_classes(self) -> np.ndarray:
        return self.w.weight_classes()

    def output(self, pair, backend: Backend) -> float:
        return run_circuit(self.w, pair.input, pair.alpha, pair.beta, backend, prep=pair.prep).value

    def jacobian_row(self, pair, backend: Backend) -> np.ndarray:
        return np.array(
            [
                parameter_shift_grad(self.w, j, pair.input, pair.alpha, pair.beta, backend)
                for j in range(self.n_weights)
            ]
        )

    def checkpoint_text(self) -> str:
        return weights_to_json(self.w)


# ---------------------------------------------------------------------------
# seeded initialization
# ---------------------------------------------------------------------------

def init_hamiltonian_params(
    n_qubits: int,
    rng: np.random.Generator,
    t_f: float = DEFAULT_T_F,
    harmonics: int = DEFAULT_HARMONICS,
    hyper: dict | None = None,
) -> HamiltonianParams:
    """Random starting point below the nominal per-class magnitudes: constant
    terms drawn as scale * U(0.35, 0.75), harmonics at a tenth of the scale.
    The draw keeps initial rotations gentle enough that fresh 2-qubit
    training sets start in the 0.3..0.8 RMS band."""
    hyper = hyper or HAMILTONIAN_HYPER

    def draw(cls: str) -> FourierParam:
        scale = hyper[cls]["init"]
        w0 = scale * rng.uniform(0.35, 0.75)
        s = 0.1 * scale * rng.standard_normal(harmonics)
        c = 0.1 * scale * rng.standard_normal(harmonics)
        return FourierParam(w0=w0, s=s, c=c)

    k = tuple(draw(CLASS_TUNNELING) for _ in range(n_qubits))
    eps = tuple(draw(CLASS_BIAS) for _ in range(n_qubits))
    zeta = tuple(draw(CLASS_COUPLING) for _ in range(len(qubit_pairs(n_qubits))))
    return HamiltonianParams(n_qubits=n_qubits, t_f=t_f, k=k, eps=eps, zeta=zeta)


def init_circuit_weights(
    n_qubits: int,
    rng: np.random.Generator,
    n_segments: int = 4,
    t_f: float = DEFAULT_T_F,
    hyper: dict | None = None,
) -> CircuitWeights:
    """Random starting angles at the nominal magnitudes, theta = 2 w dt_seg."""
    hyper = hyper or CIRCUIT_HYPER
    dt_seg = t_f / n_segments
    n_pairs = n_qubits * (n_qubits - 1) // 2
    angles = []
    for _ in range(n_segments):
        for cls, count in (
            (CLASS_TUNNELING, n_qubits),
            (CLASS_BIAS, n_qubits),
            (CLASS_COUPLING, n_pairs),
        ):
            scale = 2.0 * hyper[cls]["init"] * dt_seg
            angles.extend(scale * rng.uniform(0.5, 1.5, size=count))
    return CircuitWeights(n_qubits=n_qubits, n_segments=n_segments, angles=np.array(angles))


def default_hyper(model_kind: str) -> dict:
    if model_kind == "hamiltonian":
        return {cls: dict(v) for cls, v in HAMILTONIAN_HYPER.items()}
    if model_kind == "circuit":
        return {cls: dict(v) for cls, v in CIRCUIT_HYPER.items()}
    raise ValueError(f"unknown model kind {model_kind!r}")
