"""Train a simulated quantum system to act as a pairwise entanglement witness.

A final-time spin-correlation measurement <sigma_z^a sigma_z^b> is trained to
reproduce the concurrence of the reduced (a, b) state over a small set of
canonical two-qubit states. Two models of the system are provided (a
continuous-time Fourier-parameterized Hamiltonian and a segmented gate
circuit) together with three trainers: adjoint backpropagation,
finite-difference gradient descent, and a modified Levenberg-Marquardt
method designed to tolerate shot-sampled outputs.
"""

from .qstate import (
    QuantumState,
    Observable,
    WitnessEstimate,
    pure_state,
    mixed_state,
    basis_state,
    bell_state,
    maximally_mixed,
    estimate_from_value,
    tensor_product,
    pauli_on,
    witness_observable,
    witness_expectation,
    sample_witness,
    concurrence2,
    partial_trace,
    embed_pair_state,
    state_to_json,
    state_from_json,
)
from .dynamics import (
    FourierParam,
    HamiltonianParams,
    EvolutionConfig,
    Trajectory,
    PropagatorTable,
    fourier_eval,
    build_hamiltonian,
    evolve,
    evolve_piecewise,
    piecewise_constant_params,
    propagators,
    params_to_json,
    params_from_json,
)
from .circuit import (
    CircuitWeights,
    Backend,
    BackendError,
    segment_unitary,
    run_circuit,
    parameter_shift_grad,
    circuit_gates,
    equivalent_parameter_schedule,
    weights_from_params,
    weights_to_json,
    weights_from_json,
)
from .models import HamiltonianModel, CircuitModel, init_hamiltonian_params, init_circuit_weights
from .optim import (
    LmState,
    Residuals,
    residuals,
    backprop_gradient,
    backprop_epoch,
    fdgd_epoch,
    lm_jacobian,
    lm_step,
    lm_update_scaling,
    lm_damping_grid,
    lm_schedule,
    uphill_accept,
    lm_epoch,
    run_training,
)
from .training import TrainingPair, StagePlan, make_training_set, transfer_init, run_stage_plan

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
