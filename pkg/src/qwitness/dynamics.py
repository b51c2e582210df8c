"""Continuous-time model: Fourier-parameterized spin Hamiltonian and its
piecewise unitary propagation.

H(t) = sum_i K_i(t) sx(i) + sum_i eps_i(t) sz(i) + sum_{i<j} zeta_ij(t) sz(i)sz(j)

with hbar = 1 and parameters in rad/ns. Each control w(t) is a truncated
Fourier series w0 + sum_j S_j sin(j pi t / t_f) + C_j cos(j pi t / t_f).
The density matrix is advanced step by step, rho_{k+1} = U_k rho_k U_k^dag
with U_k = exp(-i H(t_k + dt/2) dt): midpoint sampling, second order in dt.
Every generator is real symmetric, so propagators come from a real
eigendecomposition, which also yields the exact step derivatives used by
backpropagation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .qstate import ATOL_ALGEBRA, Observable, QuantumState, pure_state, mixed_state

DEFAULT_T_F = 200.0     # ns
DEFAULT_N_STEPS = 400
DEFAULT_HARMONICS = 3

CLASS_TUNNELING = "tunneling"
CLASS_BIAS = "bias"
CLASS_COUPLING = "coupling"


@dataclass(frozen=True, eq=False)
class FourierParam:
    """One control w(t) = w0 + sum_j s_j sin(j pi t/t_f) + c_j cos(j pi t/t_f)."""

    w0: float
    s: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        s = np.array(self.s, dtype=float)
        c = np.array(self.c, dtype=float)
        s.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "c", c)
        if s.ndim != 1 or c.shape != s.shape:
            raise ValueError("s and c must be 1-d arrays of the same length")
        if not np.isfinite(self.w0) or not np.all(np.isfinite(s)) or not np.all(np.isfinite(c)):
            raise ValueError("Fourier coefficients must be finite")

    @property
    def n(self) -> int:
        return self.s.shape[0]

    def coefficients(self) -> np.ndarray:
        """Flat layout [w0, s_1..s_n, c_1..c_n]."""
        return np.concatenate(([self.w0], self.s, self.c))


def constant_param(w0: float, n: int = DEFAULT_HARMONICS) -> FourierParam:
    return FourierParam(w0=float(w0), s=np.zeros(n), c=np.zeros(n))


def param_from_coefficients(vec: np.ndarray) -> FourierParam:
    vec = np.asarray(vec, dtype=float)
    n = (vec.shape[0] - 1) // 2
    return FourierParam(w0=float(vec[0]), s=vec[1 : 1 + n], c=vec[1 + n :])


def fourier_basis(times: np.ndarray, t_f: float, n: int) -> np.ndarray:
    """Rows [1, sin(j pi t/t_f).., cos(j pi t/t_f)..] for each time."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    j = np.arange(1, n + 1)
    phase = np.pi * np.outer(times, j) / t_f
    return np.hstack([np.ones((times.shape[0], 1)), np.sin(phase), np.cos(phase)])


def fourier_eval(param: FourierParam, t: float, t_f: float) -> float:
    """Evaluate the series at time t in [0, t_f]."""
    if not -ATOL_ALGEBRA <= t <= t_f + ATOL_ALGEBRA:
        raise ValueError(f"t={t} outside [0, {t_f}]")
    basis = fourier_basis(np.array([t]), t_f, param.n)[0]
    return float(basis @ param.coefficients())


def qubit_pairs(n_qubits: int) -> list[tuple[int, int]]:
    """Lexicographic (i, j), i < j."""
    return [(i, j) for i in range(n_qubits) for j in range(i + 1, n_qubits)]


@dataclass(frozen=True, eq=False)
class HamiltonianParams:
    """Per-qubit tunneling K and bias eps, per-pair coupling zeta, over [0, t_f]."""

    n_qubits: int
    t_f: float
    k: tuple[FourierParam, ...]
    eps: tuple[FourierParam, ...]
    zeta: tuple[FourierParam, ...]

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(self.k))
        object.__setattr__(self, "eps", tuple(self.eps))
        object.__setattr__(self, "zeta", tuple(self.zeta))
        n_pairs = self.n_qubits * (self.n_qubits - 1) // 2
        if len(self.k) != self.n_qubits or len(self.eps) != self.n_qubits:
            raise ValueError("need one K and one eps per qubit")
        if len(self.zeta) != n_pairs:
            raise ValueError(f"need {n_pairs} couplings for {self.n_qubits} qubits")
        if self.t_f <= 0:
            raise ValueError("t_f must be positive")
        orders = {p.n for p in self.k + self.eps + self.zeta}
        if len(orders) > 1:
            raise ValueError("all controls must share the same harmonic order")

    @property
    def harmonics(self) -> int:
        return self.k[0].n

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return qubit_pairs(self.n_qubits)

    def params_in_order(self) -> tuple[FourierParam, ...]:
        """Controls in canonical generator order: K per qubit, eps per qubit,
        zeta per pair (lexicographic)."""
        return self.k + self.eps + self.zeta

    def coefficient_matrix(self) -> np.ndarray:
        """(n_controls, 1 + 2 n) matrix of Fourier coefficients."""
        return np.stack([p.coefficients() for p in self.params_in_order()])

    def flatten(self) -> np.ndarray:
        return self.coefficient_matrix().reshape(-1)

    def with_flat(self, vec: np.ndarray) -> HamiltonianParams:
        """Rebuild with the same shape from a flat coefficient vector."""
        vec = np.asarray(vec, dtype=float)
        width = 1 + 2 * self.harmonics
        mat = vec.reshape(-1, width)
        n = self.n_qubits
        params = [param_from_coefficients(row) for row in mat]
        return replace(
            self,
            k=tuple(params[:n]),
            eps=tuple(params[n : 2 * n]),
            zeta=tuple(params[2 * n :]),
        )

    def coefficient_classes(self) -> np.ndarray:
        """Class label (tunneling/bias/coupling) of each flat coefficient."""
        width = 1 + 2 * self.harmonics
        n, p = self.n_qubits, len(self.zeta)
        labels = [CLASS_TUNNELING] * (n * width) + [CLASS_BIAS] * (n * width) + [CLASS_COUPLING] * (p * width)
        return np.array(labels)


def generator_stack(n_qubits: int) -> tuple[np.ndarray, list[str]]:
    """Real symmetric generators in canonical order with their class labels."""
    dim = 1 << n_qubits
    idx = np.arange(dim)
    mats = []
    classes = []
    for q in range(n_qubits):
        m = np.zeros((dim, dim))
        flip = idx ^ (1 << (n_qubits - 1 - q))
        m[idx, flip] = 1.0
        mats.append(m)
        classes.append(CLASS_TUNNELING)
    z_bits = [1.0 - 2.0 * ((idx >> (n_qubits - 1 - q)) & 1) for q in range(n_qubits)]
    for q in range(n_qubits):
        mats.append(np.diag(z_bits[q]))
        classes.append(CLASS_BIAS)
    for i, j in qubit_pairs(n_qubits):
        mats.append(np.diag(z_bits[i] * z_bits[j]))
        classes.append(CLASS_COUPLING)
    return np.stack(mats), classes


def control_values(hp: HamiltonianParams, times: np.ndarray) -> np.ndarray:
    """(len(times), n_controls) control values in canonical generator order."""
    basis = fourier_basis(times, hp.t_f, hp.harmonics)
    return basis @ hp.coefficient_matrix().T


def build_hamiltonian(hp: HamiltonianParams, t: float) -> Observable:
    """H(t) as an Observable."""
    if not -ATOL_ALGEBRA <= t <= hp.t_f + ATOL_ALGEBRA:
        raise ValueError(f"t={t} outside [0, {hp.t_f}]")
    gens, _ = generator_stack(hp.n_qubits)
    values = control_values(hp, np.array([t]))[0]
    h = np.tensordot(values, gens, axes=1)
    return Observable(matrix=h.astype(complex), label=f"H(t={t:g})")


@dataclass(frozen=True)
class EvolutionConfig:
    n_steps: int = DEFAULT_N_STEPS

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")


@dataclass(eq=False)
class Trajectory:
    """States at every step boundary plus what the adjoint pass needs.

    states[k] is the state at time k*dt (amplitude vectors for a pure input,
    density matrices for a mixed one); values[k] are the control values at
    the k-th step midpoint. Eigendecompositions of each step Hamiltonian are
    kept when requested, otherwise recomputed on demand.
    """

    n_qubits: int
    kind: str
    dt: float
    times: np.ndarray
    mid_times: np.ndarray
    values: np.ndarray
    states: np.ndarray
    eig_vectors: np.ndarray | None = None
    eig_values: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    def state(self, k: int) -> QuantumState:
        data = self.states[k]
        if self.kind == "pure":
            return pure_state(data)
        return mixed_state(data)

    @property
    def final(self) -> QuantumState:
        return self.state(self.n_steps)


def _batched_eigh(h_stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecompose a (m, dim, dim) stack of real symmetric matrices in
    memory-bounded chunks. Returns (eigenvalues, eigenvectors)."""
    m, dim = h_stack.shape[0], h_stack.shape[1]
    chunk = max(1, (1 << 22) // (dim * dim))
    lams = np.empty((m, dim))
    vecs = np.empty((m, dim, dim))
    for start in range(0, m, chunk):
        stop = min(m, start + chunk)
        lams[start:stop], vecs[start:stop] = np.linalg.eigh(h_stack[start:stop])
    return lams, vecs


def _hamiltonian_stack(values: np.ndarray, gens: np.ndarray) -> np.ndarray:
    return np.tensordot(values, gens, axes=([1], [0]))


@dataclass(eq=False)
class PropagatorTable:
    """Eigendecomposed step propagators for one parameter set.

    Depends only on (hp, cfg), not on the propagated state, so one table
    serves every input state of the same size. lams/vecs are the spectra and
    eigenbases of the step-midpoint Hamiltonians; U_k = V_k e^{-i dt L_k} V_k^T.
    """

    n_qubits: int
    t_f: float
    dt: float
    times: np.ndarray
    mid_times: np.ndarray
    values: np.ndarray
    lams: np.ndarray
    vecs: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]


def propagators(hp: HamiltonianParams, cfg: EvolutionConfig = EvolutionConfig()) -> PropagatorTable:
    """Diagonalize every step Hamiltonian once, for reuse across states."""
    n_steps = cfg.n_steps
    dt = hp.t_f / n_steps
    times = np.linspace(0.0, hp.t_f, n_steps + 1)
    mid_times = times[:-1] + dt / 2
    gens, _ = generator_stack(hp.n_qubits)
    values = control_values(hp, mid_times)
    lams, vecs = _batched_eigh(_hamiltonian_stack(values, gens))
    return PropagatorTable(
        n_qubits=hp.n_qubits,
        t_f=hp.t_f,
        dt=dt,
        times=times,
        mid_times=mid_times,
        values=values,
        lams=lams,
        vecs=vecs,
    )


def evolve(
    state: QuantumState,
    hp: HamiltonianParams,
    cfg: EvolutionConfig = EvolutionConfig(),
    keep_eig: bool = False,
    table: PropagatorTable | None = None,
) -> Trajectory:
    """Propagate a state through [0, t_f] under hp with the midpoint rule.

    Pass a table from propagators(hp, cfg) to reuse the step diagonalization
    across many input states; it must match hp and cfg.
    """
    if state.n_qubits != hp.n_qubits:
        raise ValueError(f"state has {state.n_qubits} qubits, params have {hp.n_qubits}")
    if table is None:
        table = propagators(hp, cfg)
    elif table.n_qubits != hp.n_qubits or table.n_steps != cfg.n_steps or table.t_f != hp.t_f:
        raise ValueError("propagator table does not match the parameters")
    n_steps = cfg.n_steps
    dt = table.dt
    times = table.times
    mid_times = table.mid_times
    values = table.values
    lams, vecs = table.lams, table.vecs
    phases = np.exp(-1j * dt * lams)

    dim = state.dim
    if state.kind == "pure":
        states = np.empty((n_steps + 1, dim), dtype=complex)
        states[0] = state.data
        psi = state.data
        for k in range(n_steps):
            v = vecs[k]
            psi = v @ (phases[k] * (v.T @ psi))
            states[k + 1] = psi
    else:
        states = np.empty((n_steps + 1, dim, dim), dtype=complex)
        states[0] = state.data
        rho = state.data
        for k in range(n_steps):
            v = vecs[k]
            u = v @ (phases[k][:, None] * v.T)
            rho = u @ rho @ u.conj().T
            states[k + 1] = rho

    return Trajectory(
        n_qubits=hp.n_qubits,
        kind=state.kind,
        dt=dt,
        times=times,
        mid_times=mid_times,
        values=values,
        states=states,
        eig_vectors=vecs if keep_eig else None,
        eig_values=lams if keep_eig else None,
    )


# ---------------------------------------------------------------------------
# adjoint sensitivities
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class CostateTrajectory:
    """Backward-propagated adjoint matrices p(t_k), k = 0..n_steps."""

    times: np.ndarray
    p: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.p[-1]


def _phi_matrix(lam: np.ndarray, dt: float) -> np.ndarray:
    """Divided differences of exp(-i dt lam): Phi_ab = (e^ma - e^mb)/(ma - mb),
    m = -i dt lam, with the stable limit e^ma on the diagonal."""
    mu = -1j * dt * lam
    e = np.exp(mu)
    d = mu[:, None] - mu[None, :]
    small = np.abs(d) < 1e-9
    d_safe = np.where(small, 1.0, d)
    ratio = np.where(small, 1.0 + d / 2.0 + d * d / 6.0, np.expm1(d_safe) / d_safe)
    return e[None, :] * ratio


def step_generator_sensitivities(
    traj: Trajectory,
    p_final: np.ndarray,
    keep_costate: bool = False,
) -> tuple[np.ndarray, CostateTrajectory | None]:
    """Exact derivative of Re tr[p_final rho(t_f)] with respect to the
    per-step generator coefficients.

    Returns S with S[k, g] = d(Re tr[p_final rho(t_f)]) / d h_{k,g} where the
    step-k Hamiltonian is sum_g h_{k,g} G_g, plus the costate trajectory when
    requested. The costate obeys p_k = U_k^dag p_{k+1} U_k.
    """
    gens, _ = generator_stack(traj.n_qubits)
    n_steps, dt = traj.n_steps, traj.dt
    if traj.eig_vectors is not None:
        lams, vecs = traj.eig_values, traj.eig_vectors
    else:
        lams, vecs = _batched_eigh(_hamiltonian_stack(traj.values, gens))

    sens = np.empty((n_steps, gens.shape[0]))
    gens_flat = gens.reshape(gens.shape[0], -1)
    p = np.asarray(p_final, dtype=complex)
    costates = None
    if keep_costate:
        costates = np.empty((n_steps + 1,) + p.shape, dtype=complex)
        costates[n_steps] = p

    for k in range(n_steps - 1, -1, -1):
        v = vecs[k]
        u_diag = np.exp(-1j * dt * lams[k])
        p_tilde = v.T @ p @ v
        if traj.kind == "pure":
            psi_t = v.T @ traj.states[k]
            rho_tilde = np.outer(psi_t, psi_t.conj())
        else:
            rho_tilde = v.T @ traj.states[k] @ v
        # Z = (rho_tilde . diag(u*)) @ p_tilde; the step sensitivity for
        # generator g is 2 dt Im sum(Phi * (V^T G_g V) * Z^T), contracted as
        # sum_bc (G_g)_bc (V W V^T)_bc with W = Phi * Z^T
        z = (rho_tilde * u_diag.conj()[None, :]) @ p_tilde
        w = _phi_matrix(lams[k], dt) * z.T
        y = v @ w @ v.T
        sens[k] = 2.0 * dt * (gens_flat @ y.ravel()).imag
        # costate one step back: p_k = U^dag p_{k+1} U
        p = v @ ((np.outer(u_diag.conj(), u_diag)) * p_tilde) @ v.T
        if keep_costate:
            costates[k] = p

    costate_traj = CostateTrajectory(times=traj.times, p=costates) if keep_costate else None
    return sens, costate_traj


def coefficient_gradient_from_sensitivities(
    hp: HamiltonianParams, mid_times: np.ndarray, sens: np.ndarray
) -> np.ndarray:
    """Chain rule from per-step generator sensitivities to the flat Fourier
    coefficient vector: grad[c of control g] = sum_k basis_c(t_k) S[k, g]."""
    basis = fourier_basis(mid_times, hp.t_f, hp.harmonics)
    per_control = sens.T @ basis            # (n_controls, 1 + 2n)
    return per_control.reshape(-1)


# ---------------------------------------------------------------------------
# piecewise-constant controls
# ---------------------------------------------------------------------------

def piecewise_constant_params(hp: HamiltonianParams, n_segments: int = 4) -> np.ndarray:
    """Segment-midpoint control values, shape (n_segments, n_controls), in
    canonical generator order. Bridges the Fourier model to the gate model."""
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    dt_seg = hp.t_f / n_segments
    mids = (np.arange(n_segments) + 0.5) * dt_seg
    return control_values(hp, mids)


def evolve_piecewise(
    state: QuantumState,
    schedule: list[tuple[float, np.ndarray]],
    steps_per_interval: int = 1,
) -> QuantumState:
    """Evolve under a list of (duration, control values) intervals. Constant
    Hamiltonians propagate exactly regardless of steps_per_interval."""
    gens, _ = generator_stack(state.n_qubits)
    pure = state.kind == "pure"
    data = np.array(state.data)
    for duration, values in schedule:
        h = np.tensordot(np.asarray(values, dtype=float), gens, axes=1)
        lam, v = np.linalg.eigh(h)
        dt = duration / steps_per_interval
        phases = np.exp(-1j * dt * lam)
        for _ in range(steps_per_interval):
            if pure:
                data = v @ (phases * (v.T @ data))
            else:
                u = v @ (phases[:, None] * v.T)
                data = u @ data @ u.conj().T
    return pure_state(data) if pure else mixed_state(data)


# ---------------------------------------------------------------------------
# serialization (checkpoint format)
# ---------------------------------------------------------------------------

def _param_payload(p: FourierParam) -> dict:
    return {"w0": p.w0, "S": p.s.tolist(), "C": p.c.tolist()}


def _param_from_payload(d: dict) -> FourierParam:
    return FourierParam(w0=float(d["w0"]), s=np.array(d["S"], dtype=float), c=np.array(d["C"], dtype=float))


def params_to_json(hp: HamiltonianParams) -> str:
    payload = {
        "n_qubits": hp.n_qubits,
        "t_f_ns": hp.t_f,
        "K": [_param_payload(p) for p in hp.k],
        "eps": [_param_payload(p) for p in hp.eps],
        "zeta": [_param_payload(p) for p in hp.zeta],
    }
    return json.dumps(payload, indent=2)


def params_from_json(text: str) -> HamiltonianParams:
    payload = json.loads(text)
    for key in ("n_qubits", "t_f_ns", "K", "eps", "zeta"):
        if key not in payload:
            raise ValueError(f"params JSON is missing key {key!r}")
    return HamiltonianParams(
        n_qubits=int(payload["n_qubits"]),
        t_f=float(payload["t_f_ns"]),
        k=tuple(_param_from_payload(d) for d in payload["K"]),
        eps=tuple(_param_from_payload(d) for d in payload["eps"]),
        zeta=tuple(_param_from_payload(d) for d in payload["zeta"]),
    )
