"""The three trainers: adjoint backpropagation, finite-difference gradient
descent, and a modified Levenberg-Marquardt method for shot-sampled outputs.

The LM modifications relative to the textbook method: a damping value drawn
from a precomputed logarithmic grid anchored to the J^T J eigenvalue cluster,
a delayed-gratification schedule (10 grid steps down on acceptance, 1 up on
rejection, recompute-and-reset on exhaustion), a scaling matrix D^T D that
remembers the largest J^T J diagonal seen so far, and an uphill acceptance
test that admits error increases when the proposed step stays aligned with
the previous accepted one.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import seeding
from .circuit import Backend
from .dynamics import (
    EvolutionConfig,
    HamiltonianParams,
    coefficient_gradient_from_sensitivities,
    evolve,
    step_generator_sensitivities,
)
from .qstate import witness_expectation, witness_observable

GRID_SIZE = 100
CLUSTER_THRESHOLD = 1e-3     # relative to the largest J^T J eigenvalue
DTD_FLOOR = 1e-6
ACCEPT_JUMP = 10             # grid steps down on acceptance
REJECT_STEP = 1              # grid steps up on rejection
FALLBACK_RANGE = (1e-7, 1e7)
MAX_TRAVERSALS = 2           # full grid traversals per epoch before stalling


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Residuals:
    """Residual vector r_i = d_i - <O>_i and its root-mean-square."""

    r: np.ndarray
    rms: float


def _pair_backend(backend: Backend, epoch: int, tag: int, extra: int, i: int) -> Backend:
    if backend.mode != "shots":
        return backend
    return backend.with_seed(seeding.derive_seed(backend.seed, epoch, tag, extra, i))


def residuals(model, training_set, backend: Backend, epoch: int = 0, tag: int = seeding.RESIDUAL, extra: int = 0) -> Residuals:
    """Residuals over the whole training set; one derived stream per pair."""
    r = np.empty(len(training_set))
    for i, pair in enumerate(training_set):
        out = model.output(pair, _pair_backend(backend, epoch, tag, extra, i))
        r[i] = pair.target - out
    return Residuals(r=r, rms=float(np.sqrt(np.mean(r**2))))


# ---------------------------------------------------------------------------
# adjoint backpropagation
# ---------------------------------------------------------------------------

def backprop_gradient(
    hp: HamiltonianParams,
    pair,
    cfg: EvolutionConfig = EvolutionConfig(),
    kind: str = "error",
    return_costate: bool = False,
    table=None,
):
    """Gradient via the costate equation, exact for the discrete step map.

    kind "error" differentiates E = (d - <O>)^2 / 2 (costate boundary
    p(t_f) = -[d - <O>] M); kind "output" differentiates <O> itself
    (boundary p(t_f) = M). Returns the flat coefficient gradient, plus the
    costate trajectory when requested. A propagator table for (hp, cfg) is
    reused when supplied.
    """
    if kind not in ("error", "output"):
        raise ValueError(f"unknown gradient kind {kind!r}")
    traj = evolve(pair.input, hp, cfg, keep_eig=True, table=table)
    m = witness_observable(pair.alpha, pair.beta, hp.n_qubits).matrix
    if kind == "output":
        p_final = np.array(m)
    else:
        o = witness_expectation(traj.final, pair.alpha, pair.beta)
        p_final = -(pair.target - o) * m
    sens, costate = step_generator_sensitivities(traj, p_final, keep_costate=return_costate)
    grad = coefficient_gradient_from_sensitivities(hp, traj.mid_times, sens)
    if return_costate:
        return grad, costate
    return grad


def backprop_epoch(model, training_set, hyper: dict, backend: Backend, epoch: int) -> dict:
    """One epoch of gradient descent on adjoint gradients: for each pair in
    turn, w <- w - eta_class * dE/dw."""
    t0 = time.perf_counter()
    rates = _class_rates(model, hyper)
    for pair in training_set:
        grad = model.error_gradient(pair)
        model.set_weights(model.weights() - rates * grad)
    rms = residuals(model, training_set, backend, epoch=epoch).rms
    return _record(epoch, rms, wall_ms=(time.perf_counter() - t0) * 1e3)


# ---------------------------------------------------------------------------
# finite-difference gradient descent
# ---------------------------------------------------------------------------

def _class_rates(model, hyper: dict) -> np.ndarray:
    classes = model.weight_classes()
    return np.array([hyper[c]["rate"] for c in classes])


def fdgd_epoch(model, training_set, hyper: dict, backend: Backend, epoch: int) -> dict:
    """One finite-difference epoch: for each pair, measure E_old, then for
    each coefficient in turn perturb by delta * |w| (class-scale fallback at
    exactly zero), form the forward difference, and descend."""
    t0 = time.perf_counter()
    classes = model.weight_classes()
    deltas = np.array([hyper[c]["perturbation"] for c in classes])
    rates = _class_rates(model, hyper)
    for i, pair in enumerate(training_set):
        out = model.output(pair, _pair_backend(backend, epoch, seeding.FDGD, 0, i))
        e_old = 0.5 * (pair.target - out) ** 2
        w = model.weights()
        for j in range(w.shape[0]):
            if rates[j] == 0.0:
                continue  # frozen class
            dw = deltas[j] * abs(w[j])
            if dw == 0.0:
                dw = deltas[j] * model.class_scales[classes[j]]
            trial = w.copy()
            trial[j] += dw
            model.set_weights(trial)
            out = model.output(pair, _pair_backend(backend, epoch, seeding.FDGD, j + 1, i))
            e_new = 0.5 * (pair.target - out) ** 2
            grad = (e_new - e_old) / dw
            w[j] -= rates[j] * grad
            model.set_weights(w)
    rms = residuals(model, training_set, backend, epoch=epoch).rms
    return _record(epoch, rms, wall_ms=(time.perf_counter() - t0) * 1e3)


# ---------------------------------------------------------------------------
# modified Levenberg-Marquardt
# ---------------------------------------------------------------------------

@dataclass
class LmState:
    """Damping grid position, scaling diagonal, and acceptance history.

    A fresh state starts at the top of the grid (maximum damping): early
    epochs then take small scaled-gradient steps and the index walks down as
    steps are accepted, which keeps the first accepted updates from throwing
    the weights far outside the initialization scale.
    """

    grid: np.ndarray | None = None
    idx: int = GRID_SIZE - 1
    dtd: np.ndarray | None = None
    err_history: list[float] = field(default_factory=list)
    last_step: np.ndarray | None = None

    @property
    def lam(self) -> float:
        if self.grid is None:
            raise ValueError("damping grid not initialized")
        return float(self.grid[self.idx])


def lm_damping_grid(jac: np.ndarray) -> np.ndarray:
    """Logarithmic damping grid anchored to the J^T J eigenvalue cluster.

    The cluster is every eigenvalue within 1e-3 of the largest; the range is
    [l_min/10, 1/l_max] (endpoints sorted so the grid always ascends), with
    the fixed fallback [1e-7, 1e7] when no eigenvalue rises above the floor.
    """
    jtj = jac.T @ jac
    evals = np.linalg.eigvalsh(jtj)
    l_max = float(evals[-1])
    if not np.isfinite(l_max) or l_max <= 1e-300:
        lo, hi = FALLBACK_RANGE
    else:
        cluster = evals[evals >= CLUSTER_THRESHOLD * l_max]
        lo, hi = float(cluster[0]) / 10.0, 1.0 / float(cluster[-1])
        if lo > hi:
            lo, hi = hi, lo
    return np.geomspace(lo, hi, GRID_SIZE)


def lm_update_scaling(state: LmState, jac: np.ndarray) -> np.ndarray:
    """D^T D keeps the largest J^T J diagonal seen so far, floored at 1e-6."""
    diag = np.einsum("ij,ij->j", jac, jac)
    if state.dtd is None:
        state.dtd = np.maximum(diag, DTD_FLOOR)
    else:
        state.dtd = np.maximum(state.dtd, np.maximum(diag, DTD_FLOOR))
    return state.dtd


def lm_step(jac: np.ndarray, r: np.ndarray, state: LmState, lam: float | None = None) -> np.ndarray:
    """Solve (J^T J + lam D^T D) dw = J^T r by Cholesky factorization.

    A singular or non-finite system raises ValueError; the epoch driver
    treats that as a rejection and escalates the damping.
    """
    if lam is None:
        lam = state.lam
    a = jac.T @ jac + lam * np.diag(state.dtd)
    b = jac.T @ r
    try:
        dw = scipy.linalg.cho_solve(scipy.linalg.cho_factor(a), b)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise ValueError(f"LM system not solvable at lambda={lam}: {exc}") from None
    if not np.all(np.isfinite(dw)):
        raise ValueError(f"LM step not finite at lambda={lam}")
    return dw


def lm_schedule(state: LmState, accepted: bool, jac: np.ndarray | None = None) -> bool:
    """Delayed gratification: 10 steps down on acceptance, 1 up on rejection.
    Walking past the top recomputes the grid from the current J^T J and
    resets to the bottom; returns True when that wrap happened."""
    if accepted:
        state.idx = max(0, state.idx - ACCEPT_JUMP)
        return False
    state.idx += REJECT_STEP
    if state.idx >= GRID_SIZE:
        if jac is None:
            raise ValueError("grid exhausted and no Jacobian to recompute from")
        state.grid = lm_damping_grid(jac)
        state.idx = 0
        return True
    return False


def uphill_accept(e_new: float, err_history: list[float], dw_new: np.ndarray, dw_old: np.ndarray | None) -> bool:
    """Accept an uphill step iff (1 - beta) E_new <= min of the accepted error
    history, beta = cos(angle(dw_new, dw_old)). No previous step: reject."""
    if dw_old is None or not err_history:
        return False
    n_new, n_old = float(np.linalg.norm(dw_new)), float(np.linalg.norm(dw_old))
    beta = 0.0 if n_new == 0.0 or n_old == 0.0 else float(dw_new @ dw_old) / (n_new * n_old)
    return (1.0 - beta) * e_new <= min(err_history)


def lm_jacobian(model, training_set, backend: Backend, epoch: int, n_workers: int = 1) -> np.ndarray:
    """J[i, j] = d<O>_i / dw_j, one derived stream per training pair."""

    def row(i: int) -> np.ndarray:
        pair = training_set[i]
        b = backend
        if backend.mode == "shots":
            b = backend.with_seed(seeding.derive_seed(backend.seed, epoch, seeding.JACOBIAN, i))
        return model.jacobian_row(pair, b)

    if n_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        warm = getattr(model, "table", None)
        if warm is not None:
            warm()  # share one propagator table instead of racing to build it
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            rows = list(pool.map(row, range(len(training_set))))
    else:
        rows = [row(i) for i in range(len(training_set))]
    jac = np.stack(rows)
    if not np.all(np.isfinite(jac)):
        raise ValueError("Jacobian has non-finite entries")
    return jac


def lm_epoch(
    model,
    training_set,
    state: LmState,
    backend: Backend,
    epoch: int,
    max_traversals: int = MAX_TRAVERSALS,
    n_workers: int = 1,
) -> dict:
    """One LM epoch: Jacobian once, then propose/evaluate/reschedule until a
    step is accepted or the retry budget (max_traversals grid sweeps) is
    spent, in which case the epoch is recorded as stalled with weights
    unchanged."""
    t0 = time.perf_counter()
    jac = lm_jacobian(model, training_set, backend, epoch, n_workers=n_workers)
    if state.grid is None:
        state.grid = lm_damping_grid(jac)
    lm_update_scaling(state, jac)
    base = residuals(model, training_set, backend, epoch=epoch, tag=seeding.RESIDUAL)
    if not state.err_history:
        state.err_history.append(base.rms)

    w = model.weights()
    rejections = 0
    traversals = 0
    accepted = False
    uphill = False
    lam_used = state.lam
    idx_used = state.idx
    rms_out = base.rms

    while True:
        lam_used, idx_used = state.lam, state.idx
        e_new = None
        dw = None
        try:
            dw = lm_step(jac, base.r, state)
        except ValueError:
            pass  # unsolvable at this damping; escalate
        if dw is not None:
            model.set_weights(w + dw)
            e_new = residuals(model, training_set, backend, epoch=epoch, tag=seeding.TRIAL, extra=rejections).rms
            if e_new < base.rms:
                accepted = True
            elif epoch > 1 and uphill_accept(e_new, state.err_history, dw, state.last_step):
                accepted = True
                uphill = True
        if accepted:
            state.err_history.append(e_new)
            state.last_step = dw
            lm_schedule(state, True)
            rms_out = e_new
            break
        if dw is not None:
            model.set_weights(w)  # rejected proposals never stick
        rejections += 1
        if lm_schedule(state, False, jac=jac):
            traversals += 1
            if traversals >= max_traversals:
                break  # stalled epoch: an outcome, not an error
    return _record(
        epoch,
        rms_out,
        lam=lam_used,
        grid_idx=idx_used,
        accepted=accepted,
        uphill=uphill,
        n_rejections=rejections,
        wall_ms=(time.perf_counter() - t0) * 1e3,
    )


# ---------------------------------------------------------------------------
# epoch driver
# ---------------------------------------------------------------------------

def _record(
    epoch: int,
    rms: float,
    lam: float | None = None,
    grid_idx: int | None = None,
    accepted: bool = True,
    uphill: bool = False,
    n_rejections: int = 0,
    wall_ms: float = 0.0,
) -> dict:
    return {
        "epoch": epoch,
        "rms": rms,
        "lambda": lam,
        "grid_idx": grid_idx,
        "accepted": accepted,
        "uphill": uphill,
        "n_rejections": n_rejections,
        "wall_ms": wall_ms,
    }


OPTIMIZERS = ("lm", "fdgd", "backprop")


def run_training(
    model,
    training_set,
    optimizer: str,
    epochs: int,
    backend: Backend,
    hyper: dict | None = None,
    n_workers: int = 1,
    on_record=None,
    first_epoch: int = 1,
    lm_state: LmState | None = None,
) -> list[dict]:
    """Run one trainer for a fixed number of epochs; epoch 0 logs the
    starting RMS. Records are appended in order and streamed to on_record."""
    if optimizer not in OPTIMIZERS:
        raise ValueError(f"unknown optimizer {optimizer!r}")
    if optimizer in ("fdgd", "backprop") and hyper is None:
        raise ValueError(f"{optimizer} needs per-class hyperparameters")
    records = []

    def emit(rec: dict) -> None:
        records.append(rec)
        if on_record is not None:
            on_record(rec)

    if first_epoch == 1:
        start = residuals(model, training_set, backend, epoch=0)
        emit(_record(0, start.rms))
    state = lm_state if lm_state is not None else LmState()
    for epoch in range(first_epoch, first_epoch + epochs):
        if optimizer == "lm":
            rec = lm_epoch(model, training_set, state, backend, epoch, n_workers=n_workers)
        elif optimizer == "fdgd":
            rec = fdgd_epoch(model, training_set, hyper, backend, epoch)
        else:
            rec = backprop_epoch(model, training_set, hyper, backend, epoch)
        emit(rec)
    return records
