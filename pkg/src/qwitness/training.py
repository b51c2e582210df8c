"""Training-set construction, transfer-learning growth, and the multi-stage
driver.

For every qubit pair (a, b) the training set holds four canonical two-qubit
states with all spectator qubits in |0>: a Bell state (target 1), |00>
(target 0), the flat product state (target 0, uncorrelated but classical),
and the partially entangled cos(pi/8)|00> + sin(pi/8)|11> (target sin(pi/4)).
Targets are the concurrence of the reduced (a, b) state and are cross-checked
against the concurrence oracle at construction.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .circuit import Backend, CircuitWeights
from .dynamics import (
    DEFAULT_HARMONICS,
    DEFAULT_N_STEPS,
    DEFAULT_T_F,
    EvolutionConfig,
    FourierParam,
    HamiltonianParams,
    param_from_coefficients,
    params_from_json,
    params_to_json,
    qubit_pairs,
)
from .models import (
    CircuitModel,
    HamiltonianModel,
    default_hyper,
    init_circuit_weights,
    init_hamiltonian_params,
)
from .optim import run_training
from .qstate import QuantumState, concurrence2, embed_pair_state, partial_trace
from .circuit import weights_from_json, weights_to_json

TARGET_CHECK_ATOL = 1e-9
DEFAULT_STAGE_EPOCHS = (20, 20, 20, 10, 10, 10, 10)

_SQ2 = 1.0 / np.sqrt(2.0)
_CANONICAL_PAIR_STATES = (
    # label, amplitudes on (a, b), target concurrence, prep angles
    ("bell", np.array([_SQ2, 0.0, 0.0, _SQ2]), 1.0, "bell"),
    ("zeros", np.array([1.0, 0.0, 0.0, 0.0]), 0.0, "none"),
    ("flat", np.array([0.5, 0.5, 0.5, 0.5]), 0.0, "flat"),
    ("partial", np.array([np.cos(np.pi / 8), 0.0, 0.0, np.sin(np.pi / 8)]), float(np.sin(np.pi / 4)), "partial"),
)


@dataclass(frozen=True)
class TrainingPair:
    """One input state, the witness pair it exercises, and its target."""

    input: QuantumState
    alpha: int
    beta: int
    target: float
    prep: tuple = ()
    label: str = ""

    def __post_init__(self):
        if not 0.0 <= self.target <= 1.0:
            raise ValueError(f"target {self.target} outside [0, 1]")
        reduced = partial_trace(self.input, (self.alpha, self.beta))
        c = concurrence2(reduced)
        if abs(c - self.target) > TARGET_CHECK_ATOL:
            raise ValueError(
                f"target {self.target} disagrees with the concurrence {c} of the reduced state"
            )

    @property
    def pair(self) -> tuple[int, int]:
        return (self.alpha, self.beta)


def _prep_gates(kind: str, alpha: int, beta: int) -> tuple:
    """State-preparation gates for the wire format (inputs start at |0..0>)."""
    if kind == "none":
        return ()
    if kind == "bell":
        return (
            {"gate": "ry", "qubits": [alpha], "angle": float(np.pi / 2)},
            {"gate": "cnot", "qubits": [alpha, beta]},
        )
    if kind == "flat":
        return (
            {"gate": "ry", "qubits": [alpha], "angle": float(np.pi / 2)},
            {"gate": "ry", "qubits": [beta], "angle": float(np.pi / 2)},
        )
    if kind == "partial":
        return (
            {"gate": "ry", "qubits": [alpha], "angle": float(np.pi / 4)},
            {"gate": "cnot", "qubits": [alpha, beta]},
        )
    raise ValueError(f"unknown prep kind {kind!r}")


def make_training_set(n_qubits: int) -> list[TrainingPair]:
    """Four canonical states per qubit pair, pairs in lexicographic order."""
    if n_qubits < 2:
        raise ValueError("need at least two qubits for pairwise training")
    pairs = []
    for alpha, beta in qubit_pairs(n_qubits):
        for label, amps, target, prep_kind in _CANONICAL_PAIR_STATES:
            pairs.append(
                TrainingPair(
                    input=embed_pair_state(amps, alpha, beta, n_qubits),
                    alpha=alpha,
                    beta=beta,
                    target=target,
                    prep=_prep_gates(prep_kind, alpha, beta),
                    label=f"{label}({alpha},{beta})",
                )
            )
    return pairs


# ---------------------------------------------------------------------------
# transfer learning
# ---------------------------------------------------------------------------

def _mean_param(params: tuple[FourierParam, ...]) -> FourierParam:
    stack = np.stack([p.coefficients() for p in params])
    return param_from_coefficients(stack.mean(axis=0))


def transfer_init(params, n_qubits: int | None = None):
    """Grow a trained system by one qubit: existing per-qubit and per-pair
    parameters are kept, the new qubit starts at the mean of the existing
    per-qubit controls, and every new pair at the mean of the existing
    couplings. Works on Fourier params and on circuit weights. A target size
    equal to the current one is the degenerate self-transfer and returns the
    params unchanged."""
    if n_qubits is not None:
        if n_qubits == params.n_qubits:
            return params
        if n_qubits != params.n_qubits + 1:
            raise ValueError("transfer grows the system by at most one qubit")
    if isinstance(params, HamiltonianParams):
        n_old = params.n_qubits
        n_new = n_old + 1
        k = params.k + (_mean_param(params.k),)
        eps = params.eps + (_mean_param(params.eps),)
        zeta_by_pair = dict(zip(qubit_pairs(n_old), params.zeta))
        zeta_mean = _mean_param(params.zeta)
        zeta = tuple(zeta_by_pair.get(p, zeta_mean) for p in qubit_pairs(n_new))
        return HamiltonianParams(n_qubits=n_new, t_f=params.t_f, k=k, eps=eps, zeta=zeta)
    if isinstance(params, CircuitWeights):
        n_old = params.n_qubits
        n_new = n_old + 1
        segments = []
        for s in range(params.n_segments):
            ry, rz, zz = params.split_segment(s)
            zz_by_pair = dict(zip(qubit_pairs(n_old), zz))
            zz_mean = float(np.mean(zz))
            segments.append(
                np.concatenate(
                    [
                        np.append(ry, np.mean(ry)),
                        np.append(rz, np.mean(rz)),
                        [zz_by_pair.get(p, zz_mean) for p in qubit_pairs(n_new)],
                    ]
                )
            )
        return CircuitWeights(n_qubits=n_new, n_segments=params.n_segments, angles=np.concatenate(segments))
    raise TypeError(f"cannot transfer {type(params).__name__}")


# ---------------------------------------------------------------------------
# stage plan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StagePlan:
    """A transfer-learning schedule: train at qubits[0], grow by one qubit at
    a time, training epochs[i] epochs at stage i."""

    qubits: tuple[int, ...]
    epochs: tuple[int, ...]
    optimizer: str = "lm"
    model_kind: str = "hamiltonian"
    backend_mode: str = "exact"
    shots: int = 1024
    seed: int = 0
    t_f: float = DEFAULT_T_F
    n_steps: int = DEFAULT_N_STEPS
    harmonics: int = DEFAULT_HARMONICS
    n_segments: int = 4
    hyper: dict | None = None
    n_workers: int = 1

    def __post_init__(self):
        if len(self.qubits) != len(self.epochs) or not self.qubits:
            raise ValueError("qubits and epochs must be equal-length, nonempty")
        if self.qubits[0] < 2:
            raise ValueError("the first stage needs at least two qubits")
        if any(b - a != 1 for a, b in zip(self.qubits, self.qubits[1:])):
            raise ValueError("stages must grow by exactly one qubit")
        if any(e < 1 for e in self.epochs):
            raise ValueError("every stage needs at least one epoch")

    def backend(self, n_qubits: int) -> Backend:
        if self.backend_mode == "exact":
            return Backend(mode="exact")
        return Backend(mode="shots", shots=self.shots, seed=seeding.derive_seed(self.seed, seeding.STAGE, n_qubits))


def _stage_model(plan: StagePlan, params):
    if plan.model_kind == "hamiltonian":
        return HamiltonianModel(params, EvolutionConfig(n_steps=plan.n_steps), hyper=plan.hyper)
    return CircuitModel(params, hyper=plan.hyper, t_f=plan.t_f)


def _stage_init(plan: StagePlan, n_qubits: int):
    rng = seeding.derive_rng(plan.seed, seeding.INIT, n_qubits)
    if plan.model_kind == "hamiltonian":
        return init_hamiltonian_params(n_qubits, rng, t_f=plan.t_f, harmonics=plan.harmonics, hyper=plan.hyper)
    return init_circuit_weights(n_qubits, rng, n_segments=plan.n_segments, t_f=plan.t_f, hyper=plan.hyper)


def _checkpoint_text(plan: StagePlan, params) -> str:
    return params_to_json(params) if plan.model_kind == "hamiltonian" else weights_to_json(params)


def _checkpoint_parse(plan: StagePlan, text: str):
    return params_from_json(text) if plan.model_kind == "hamiltonian" else weights_from_json(text)


def run_stage_plan(plan: StagePlan, out_dir: str | None = None, resume: bool = False) -> list[dict]:
    """Execute the plan, returning one summary record per stage. With an
    output directory, each stage writes its epoch log and checkpoint (atomic
    write-then-rename) and the running stage summary; resume skips stages
    whose checkpoint already exists and restarts after the last good one."""
    hyper = plan.hyper or default_hyper(plan.model_kind)
    stage_records: list[dict] = []
    params = None
    for i, (n_qubits, n_epochs) in enumerate(zip(plan.qubits, plan.epochs)):
        stage_dir = None
        if out_dir is not None:
            stage_dir = os.path.join(out_dir, f"stage_{n_qubits}")
            os.makedirs(stage_dir, exist_ok=True)
            ckpt_path = os.path.join(stage_dir, "checkpoint.json")
            if resume and os.path.exists(ckpt_path) and os.path.exists(os.path.join(stage_dir, "stage.csv")):
                params = _checkpoint_parse(plan, open(ckpt_path).read())
                with open(os.path.join(stage_dir, "stage.csv")) as fh:
                    row = list(csv.DictReader(fh))[0]
                stage_records.append({k: _parse_cell(v) for k, v in row.items()})
                if out_dir is not None:
                    write_stage_summary(os.path.join(out_dir, "stage_summary.csv"), stage_records)
                continue
        params = _stage_init(plan, n_qubits) if params is None else transfer_init(params)
        if params_n_qubits(params) != n_qubits:
            raise ValueError("transfer produced the wrong qubit count")
        model = _stage_model(plan, params)
        training_set = make_training_set(n_qubits)
        t0 = time.perf_counter()
        records = run_training(
            model,
            training_set,
            plan.optimizer,
            n_epochs,
            plan.backend(n_qubits),
            hyper=hyper,
            n_workers=plan.n_workers,
        )
        params = model.params if plan.model_kind == "hamiltonian" else model.w
        stage_rec = {
            "n_qubits": n_qubits,
            "n_pairs": len(training_set),
            "epochs": n_epochs,
            "start_rms": records[0]["rms"],
            "finish_rms": records[-1]["rms"],
        }
        stage_records.append(stage_rec)
        if stage_dir is not None:
            write_epoch_csv(os.path.join(stage_dir, "epochs.csv"), records)
            atomic_write_text(os.path.join(stage_dir, "checkpoint.json"), _checkpoint_text(plan, params))
            atomic_write_text(
                os.path.join(stage_dir, "stage.csv"),
                stage_csv_header() + "\n" + stage_csv_row(stage_rec) + "\n",
            )
            write_stage_summary(os.path.join(out_dir, "stage_summary.csv"), stage_records)
    return stage_records


def params_n_qubits(params) -> int:
    return params.n_qubits


# ---------------------------------------------------------------------------
# artifact formatting (shared with the command line)
# ---------------------------------------------------------------------------

EPOCH_CSV_COLUMNS = ("epoch", "rms", "lambda", "grid_idx", "accepted", "uphill", "n_rejections", "wall_ms")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_cell(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        return float(text)


def epoch_csv_text(records: list[dict]) -> str:
    # wall_ms is serialized empty: logs must be byte-identical across reruns
    # of the same seed and config, and wall time is not. Timing stays in the
    # in-memory records and in the run summary.
    lines = [",".join(EPOCH_CSV_COLUMNS)]
    for rec in records:
        cells = [_fmt(None if c == "wall_ms" else rec[c]) for c in EPOCH_CSV_COLUMNS]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_epoch_csv(path: str, records: list[dict]) -> None:
    atomic_write_text(path, epoch_csv_text(records))


def stage_csv_header() -> str:
    return "n_qubits,n_pairs,epochs,start_rms,finish_rms"


def stage_csv_row(rec: dict) -> str:
    return ",".join(
        _fmt(rec[k]) for k in ("n_qubits", "n_pairs", "epochs", "start_rms", "finish_rms")
    )


def write_stage_summary(path: str, stage_records: list[dict]) -> None:
    text = stage_csv_header() + "\n" + "\n".join(stage_csv_row(r) for r in stage_records) + "\n"
    atomic_write_text(path, text)


def atomic_write_text(path: str, text: str) -> None:
    """Write to a sibling temp file and rename into place."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
