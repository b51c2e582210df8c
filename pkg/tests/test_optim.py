"""Trainer contracts: residual bookkeeping, adjoint gradients against
finite-difference oracles, FDGD update arithmetic, and the modified LM
mechanics (grid, scaling, schedule, uphill rule, epoch driver)."""

import numpy as np
import pytest

import qwitness as qw
from qwitness import seeding
from qwitness.circuit import Backend
from qwitness.dynamics import EvolutionConfig
from qwitness.models import HAMILTONIAN_HYPER, HamiltonianModel, init_hamiltonian_params
from qwitness.optim import (
    FALLBACK_RANGE,
    GRID_SIZE,
    LmState,
    backprop_gradient,
    fdgd_epoch,
    lm_damping_grid,
    lm_epoch,
    lm_jacobian,
    lm_schedule,
    lm_step,
    lm_update_scaling,
    residuals,
    run_training,
    uphill_accept,
)
from qwitness.training import make_training_set

EXACT = Backend(mode="exact")
FAST = EvolutionConfig(n_steps=50)


class StubPair:
    """Duck-typed training pair for models that ignore quantum state."""

    def __init__(self, idx, target):
        self.idx = idx
        self.target = target
        self.alpha, self.beta = 0, 1
        self.input = None
        self.prep = ()
        self.label = f"stub{idx}"


class LinearModel:
    """O_i = (A w)_i; the LM step solves this in one Gauss-Newton iteration."""

    kind = "linear"

    def __init__(self, a, w0):
        self.a = np.asarray(a, dtype=float)
        self._w = np.asarray(w0, dtype=float).copy()
        self.class_scales = {"tunneling": 1.0}

    def weights(self):
        return self._w.copy()

    def set_weights(self, vec):
        self._w = np.asarray(vec, dtype=float).copy()

    def weight_classes(self):
        return np.array(["tunneling"] * self.a.shape[1])

    def output(self, pair, backend):
        return float(self.a[pair.idx] @ self._w)

    def jacobian_row(self, pair, backend):
        return self.a[pair.idx].copy()


def linear_set(targets):
    return [StubPair(i, t) for i, t in enumerate(targets)]


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------

class TestResiduals:
    def test_zero_when_outputs_match_targets(self):
        model = LinearModel(np.eye(2), [0.25, -0.5])
        res = residuals(model, linear_set([0.25, -0.5]), EXACT)
        assert res.rms == 0.0
        assert np.array_equal(res.r, np.zeros(2))

    def test_single_unit_residual_rms(self):
        model = LinearModel(np.zeros((4, 2)), [0.0, 0.0])
        res = residuals(model, linear_set([1.0, 0.0, 0.0, 0.0]), EXACT)
        assert res.rms == pytest.approx(0.5)
        assert np.array_equal(res.r, np.array([1.0, 0.0, 0.0, 0.0]))

    def test_rms_is_sqrt_mean_square(self):
        model = LinearModel(np.zeros((3, 1)), [0.0])
        res = residuals(model, linear_set([0.3, -0.4, 0.5]), EXACT)
        assert res.rms == pytest.approx(np.sqrt(np.mean([0.09, 0.16, 0.25])), rel=1e-12)

    def test_untrained_two_qubit_rms_band(self):
        # fresh random inits should start in a loose 0.3..0.8 band
        ts = make_training_set(2)
        for seed in range(8):
            hp = init_hamiltonian_params(2, np.random.default_rng(seed))
            model = HamiltonianModel(hp, FAST)
            rms = residuals(model, ts, EXACT).rms
            assert 0.3 < rms < 0.8, f"seed {seed} starts at {rms}"

    def test_shot_streams_deterministic_per_epoch_and_tag(self):
        hp = init_hamiltonian_params(2, np.random.default_rng(3))
        model = HamiltonianModel(hp, FAST)
        ts = make_training_set(2)
        be = Backend(mode="shots", shots=256, seed=11)
        a = residuals(model, ts, be, epoch=4, tag=seeding.TRIAL, extra=1)
        b = residuals(model, ts, be, epoch=4, tag=seeding.TRIAL, extra=1)
        assert np.array_equal(a.r, b.r)
        c = residuals(model, ts, be, epoch=4, tag=seeding.TRIAL, extra=2)
        assert not np.array_equal(a.r, c.r)
        d = residuals(model, ts, be, epoch=5, tag=seeding.TRIAL, extra=1)
        assert not np.array_equal(a.r, d.r)


# ---------------------------------------------------------------------------
# adjoint gradients
# ---------------------------------------------------------------------------

class TestBackpropGradient:
    def test_output_gradient_matches_central_differences(self):
        hp = init_hamiltonian_params(2, np.random.default_rng(7))
        pair = make_training_set(2)[0]
        grad = backprop_gradient(hp, pair, FAST, kind="output")
        w = hp.flatten()

        def out(vec):
            final = qw.evolve(pair.input, hp.with_flat(vec), FAST).final
            return qw.witness_expectation(final, pair.alpha, pair.beta)

        for j in range(w.shape[0]):
            h = 1e-4 * max(abs(w[j]), 1e-4)
            wp, wm = w.copy(), w.copy()
            wp[j] += h
            wm[j] -= h
            fd = (out(wp) - out(wm)) / (2.0 * h)
            assert abs(fd - grad[j]) <= 1e-4 * max(abs(grad[j]), 1e-8), f"coeff {j}"

    def test_error_gradient_is_scaled_output_gradient(self):
        hp = init_hamiltonian_params(2, np.random.default_rng(9))
        pair = make_training_set(2)[3]
        g_out = backprop_gradient(hp, pair, FAST, kind="output")
        g_err = backprop_gradient(hp, pair, FAST, kind="error")
        o = qw.witness_expectation(qw.evolve(pair.input, hp, FAST).final, pair.alpha, pair.beta)
        np.testing.assert_allclose(g_err, -(pair.target - o) * g_out, rtol=0, atol=1e-10)

    def test_zero_residual_gives_zero_gradient(self):
        hp = init_hamiltonian_params(2, np.random.default_rng(2))
        bell = make_training_set(2)[0]
        o = qw.witness_expectation(qw.evolve(bell.input, hp, FAST).final, bell.alpha, bell.beta)
        matched = StubPair(0, o)
        matched.input = bell.input
        grad = backprop_gradient(hp, matched, FAST, kind="error")
        assert np.array_equal(grad, np.zeros_like(grad))

    def test_swap_symmetric_input_gives_swap_symmetric_gradient(self):
        # identical per-qubit params + Bell input: swapping the qubits is a
        # symmetry, so K0 and K1 coefficient gradients must coincide
        fp_k = qw.FourierParam(w0=2.5e-3, s=np.array([1e-4, -2e-4, 5e-5]), c=np.array([2e-4, 1e-4, -1e-4]))
        fp_e = qw.FourierParam(w0=1e-4, s=np.array([2e-5, 1e-5, -3e-5]), c=np.array([-1e-5, 4e-5, 2e-5]))
        fp_z = qw.FourierParam(w0=1e-4, s=np.array([1e-5, -2e-5, 3e-5]), c=np.array([2e-5, -1e-5, 1e-5]))
        hp = qw.HamiltonianParams(n_qubits=2, t_f=200.0, k=(fp_k, fp_k), eps=(fp_e, fp_e), zeta=(fp_z,))
        bell = make_training_set(2)[0]
        grad = backprop_gradient(hp, bell, FAST, kind="output")
        np.testing.assert_allclose(grad[0:7], grad[7:14], rtol=0, atol=1e-12)
        np.testing.assert_allclose(grad[14:21], grad[21:28], rtol=0, atol=1e-12)

    def test_costate_boundary_and_conservation(self):
        hp = init_hamiltonian_params(2, np.random.default_rng(5))
        pair = make_training_set(2)[0]
        grad, costate = backprop_gradient(hp, pair, FAST, kind="output", return_costate=True)
        m = qw.witness_observable(pair.alpha, pair.beta, 2).matrix
        np.testing.assert_allclose(costate.p[-1], m, rtol=0, atol=1e-12)
        assert costate.p.shape[0] == FAST.n_steps + 1

        # Re tr[p_k rho_k] is conserved along the trajectory: both sides are
        # propagated by the same step unitaries
        traj = qw.evolve(pair.input, hp, FAST)
        overlaps = []
        for k in range(FAST.n_steps + 1):
            psi = traj.states[k]
            overlaps.append(float(np.real(np.conj(psi) @ (costate.p[k] @ psi))))
        np.testing.assert_allclose(overlaps, overlaps[0], rtol=0, atol=1e-10)

    def test_unknown_kind_rejected(self):
        hp = init_hamiltonian_params(2, np.random.default_rng(0))
        pair = make_training_set(2)[0]
        with pytest.raises(ValueError, match="kind"):
            backprop_gradient(hp, pair, FAST, kind="hessian")


# ---------------------------------------------------------------------------
# finite-difference gradient descent
# ---------------------------------------------------------------------------

class RecordingModel(LinearModel):
    """Linear model that logs every output evaluation's weight vector."""

    def __init__(self, a, w0):
        super().__init__(a, w0)
        self.calls = []

    def output(self, pair, backend):
        self.calls.append(self._w.copy())
        return super().output(pair, backend)


class TestFdgd:
    def test_forward_difference_update_arithmetic(self):
        # one pair, one weight: O = w, target 0.0, w0 = 1.0
        # E_old = 0.5, E_new = 0.5 (1 + dw)^2, grad = (E_new - E_old)/dw
        model = LinearModel(np.array([[1.0]]), [1.0])
        hyper = {"tunneling": {"init": 1.0, "perturbation": 1e-2, "rate": 0.1}}
        rec = fdgd_epoch(model, linear_set([0.0]), hyper, EXACT, epoch=1)
        dw = 1e-2 * 1.0
        e_old = 0.5
        e_new = 0.5 * (1.0 + dw) ** 2
        grad = (e_new - e_old) / dw
        expected = 1.0 - 0.1 * grad
        assert model.weights()[0] == pytest.approx(expected, rel=1e-12)
        assert rec["rms"] == pytest.approx(abs(expected), rel=1e-12)
        assert rec["accepted"] is True

    def test_zero_rate_class_frozen(self):
        model = RecordingModel(np.eye(2), [1.0, 1.0])

        def classes():
            return np.array(["tunneling", "bias"])

        model.weight_classes = classes
        model.class_scales = {"tunneling": 1.0, "bias": 1.0}
        hyper = {
            "tunneling": {"init": 1.0, "perturbation": 1e-2, "rate": 0.0},
            "bias": {"init": 1.0, "perturbation": 1e-2, "rate": 0.0},
        }
        rec = fdgd_epoch(model, linear_set([0.0, 0.0]), hyper, EXACT, epoch=1)
        assert np.array_equal(model.weights(), np.array([1.0, 1.0]))
        # frozen classes are never even perturbed: one E_old call per pair
        # plus the final residual sweep
        assert len(model.calls) == 2 + 2
        assert rec["accepted"] is True

    def test_zero_weight_uses_class_scale_perturbation(self):
        model = RecordingModel(np.array([[1.0]]), [0.0])
        model.class_scales = {"tunneling": 0.5}
        hyper = {"tunneling": {"init": 0.5, "perturbation": 1e-2, "rate": 0.1}}
        fdgd_epoch(model, linear_set([0.0]), hyper, EXACT, epoch=1)
        # calls: E_old at w=0, E_new at w=dw, final residual sweep
        assert model.calls[1][0] == pytest.approx(1e-2 * 0.5, rel=1e-12)


# ---------------------------------------------------------------------------
# LM mechanics
# ---------------------------------------------------------------------------

class TestLmDampingGrid:
    def test_cluster_example(self):
        # J^T J eigenvalues {1e-5, 1e-4} -> grid over [1e-6, 1e4]
        jac = np.diag(np.sqrt(np.array([1e-5, 1e-4])))
        grid = lm_damping_grid(jac)
        assert grid.shape == (GRID_SIZE,)
        assert grid[0] == pytest.approx(1e-6, rel=1e-9)
        assert grid[-1] == pytest.approx(1e4, rel=1e-9)

    def test_cluster_threshold_excludes_vanishing_eigenvalues(self):
        # eigenvalues {1e-4, 1e-9}: the small one sits below 1e-3 * max and
        # must not widen the range
        jac = np.diag(np.sqrt(np.array([1e-4, 1e-9])))
        grid = lm_damping_grid(jac)
        assert grid[0] == pytest.approx(1e-5, rel=1e-9)
        assert grid[-1] == pytest.approx(1e4, rel=1e-9)

    def test_single_eigenvalue_cluster(self):
        jac = np.array([[2.0]])  # J^T J = 4
        grid = lm_damping_grid(jac)
        lo, hi = sorted((4.0 / 10.0, 1.0 / 4.0))
        assert grid[0] == pytest.approx(lo, rel=1e-12)
        assert grid[-1] == pytest.approx(hi, rel=1e-12)

    def test_zero_jacobian_falls_back(self):
        grid = lm_damping_grid(np.zeros((3, 4)))
        assert grid[0] == pytest.approx(FALLBACK_RANGE[0], rel=1e-12)
        assert grid[-1] == pytest.approx(FALLBACK_RANGE[1], rel=1e-12)

    def test_log_spacing_and_ascending(self):
        grid = lm_damping_grid(np.diag(np.sqrt(np.array([1e-5, 1e-4]))))
        ratios = grid[1:] / grid[:-1]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)
        assert np.all(np.diff(grid) > 0)


class TestLmScaling:
    def test_elementwise_max_with_floor(self):
        state = LmState(dtd=np.array([1e-4, 1e-6]))
        jac = np.array([[np.sqrt(2e-4), np.sqrt(5e-7)]])
        dtd = lm_update_scaling(state, jac)
        np.testing.assert_allclose(dtd, [2e-4, 1e-6], rtol=1e-12)

    def test_first_update_floors_small_entries(self):
        state = LmState(dtd=None)
        dtd = lm_update_scaling(state, np.full((1, 3), 1e-9))
        assert np.all(dtd == 1e-6)

    def test_never_decreases(self):
        state = LmState(dtd=None)
        rng = np.random.default_rng(0)
        prev = None
        for _ in range(5):
            dtd = lm_update_scaling(state, rng.normal(size=(4, 3))).copy()
            if prev is not None:
                assert np.all(dtd >= prev)
            prev = dtd


class TestLmStep:
    def state(self, lam_grid=(1e-9, 1e2), dtd=(1.0, 1.0)):
        return LmState(grid=np.geomspace(*lam_grid, GRID_SIZE), idx=0, dtd=np.array(dtd, dtype=float))

    def test_gauss_newton_limit(self):
        dw = lm_step(np.eye(2), np.array([1.0, 0.0]), self.state(), lam=1e-14)
        np.testing.assert_allclose(dw, [1.0, 0.0], rtol=0, atol=1e-10)

    def test_unit_damping_halves_identity_step(self):
        dw = lm_step(np.eye(2), np.array([1.0, 0.0]), self.state(), lam=1.0)
        np.testing.assert_allclose(dw, [0.5, 0.0], rtol=0, atol=1e-12)

    def test_huge_damping_crushes_step(self):
        jac = np.array([[1.0, 0.2], [-0.3, 0.8]])
        r = np.array([0.5, -0.25])
        gn = lm_step(jac, r, self.state(), lam=1e-14)
        crushed = lm_step(jac, r, self.state(), lam=1e9)
        assert np.linalg.norm(crushed) < 1e-3 * np.linalg.norm(gn)

    def test_applies_current_grid_lambda_by_default(self):
        state = self.state()
        state.idx = GRID_SIZE - 1
        dw_default = lm_step(np.eye(2), np.array([1.0, 0.0]), state)
        dw_named = lm_step(np.eye(2), np.array([1.0, 0.0]), state, lam=state.lam)
        assert np.array_equal(dw_default, dw_named)

    def test_singular_system_raises(self):
        state = LmState(grid=np.geomspace(1e-9, 1e2, GRID_SIZE), idx=0, dtd=np.zeros(2))
        with pytest.raises(ValueError, match="not solvable"):
            lm_step(np.zeros((2, 2)), np.array([1.0, 0.0]), state, lam=1.0)


class TestLmSchedule:
    def grid_state(self, idx):
        return LmState(grid=np.geomspace(1e-6, 1e4, GRID_SIZE), idx=idx, dtd=np.ones(2))

    def test_accept_jumps_ten_down(self):
        state = self.grid_state(50)
        wrapped = lm_schedule(state, True)
        assert (state.idx, wrapped) == (40, False)

    def test_accept_clamps_at_zero(self):
        state = self.grid_state(4)
        lm_schedule(state, True)
        assert state.idx == 0

    def test_reject_steps_one_up(self):
        state = self.grid_state(50)
        wrapped = lm_schedule(state, False)
        assert (state.idx, wrapped) == (51, False)

    def test_exhaustion_recomputes_and_resets(self):
        state = self.grid_state(GRID_SIZE - 1)
        old_grid = state.grid.copy()
        jac = np.diag(np.sqrt(np.array([1e-5, 1e-4])))
        wrapped = lm_schedule(state, False, jac=jac)
        assert wrapped is True
        assert state.idx == 0
        assert not np.array_equal(state.grid, old_grid)
        assert state.grid[0] == pytest.approx(1e-6, rel=1e-9)

    def test_exhaustion_without_jacobian_raises(self):
        state = self.grid_state(GRID_SIZE - 1)
        with pytest.raises(ValueError, match="exhausted"):
            lm_schedule(state, False)

    def test_index_stays_in_range(self):
        state = self.grid_state(0)
        jac = np.eye(2)
        rng = np.random.default_rng(1)
        for _ in range(500):
            lm_schedule(state, bool(rng.integers(2)), jac=jac)
            assert 0 <= state.idx < GRID_SIZE


class TestUphillAccept:
    def test_parallel_steps_always_accept(self):
        dw = np.array([1.0, 0.0])
        assert uphill_accept(1e9, [0.5], dw, 2.0 * dw) is True

    def test_orthogonal_steps_compare_to_history_min(self):
        dw_new, dw_old = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        assert uphill_accept(0.4, [0.5, 0.8], dw_new, dw_old) is True
        assert uphill_accept(0.6, [0.5, 0.8], dw_new, dw_old) is False

    def test_antiparallel_needs_half_history_min(self):
        dw = np.array([1.0, 0.0])
        assert uphill_accept(0.25, [0.5], dw, -dw) is True
        assert uphill_accept(0.26, [0.5], dw, -dw) is False

    def test_no_previous_step_rejects(self):
        assert uphill_accept(0.0, [0.5], np.array([1.0]), None) is False

    def test_empty_history_rejects(self):
        assert uphill_accept(0.0, [], np.array([1.0]), np.array([1.0])) is False

    def test_zero_norm_step_treated_as_orthogonal(self):
        zero = np.zeros(2)
        assert uphill_accept(0.4, [0.5], zero, np.array([1.0, 0.0])) is True
        assert uphill_accept(0.6, [0.5], zero, np.array([1.0, 0.0])) is False


class TestLmEpoch:
    def test_linear_model_converges_immediately(self):
        model = LinearModel(np.array([[1.0, 0.0], [0.0, 2.0]]), [0.0, 0.0])
        ts = linear_set([0.6, -0.8])
        state = LmState(grid=np.geomspace(1e-12, 1.0, GRID_SIZE), idx=0, dtd=None)
        recs = run_training(model, ts, "lm", 3, EXACT, lm_state=state)
        assert recs[0]["epoch"] == 0
        assert recs[-1]["rms"] < 1e-10
        np.testing.assert_allclose(model.weights(), [0.6, -0.4], rtol=0, atol=1e-9)

    def test_rejected_proposals_never_mutate_weights(self):
        # zero Jacobian: every proposal is a zero step, never an improvement,
        # and the epoch stalls after two grid traversals with w untouched
        model = LinearModel(np.zeros((2, 2)), [0.3, -0.7])
        ts = linear_set([1.0, 1.0])
        state = LmState(grid=None, idx=0, dtd=None)
        rec = lm_epoch(model, ts, state, EXACT, epoch=1)
        assert rec["accepted"] is False
        assert rec["uphill"] is False
        assert np.array_equal(model.weights(), np.array([0.3, -0.7]))
        assert rec["n_rejections"] >= GRID_SIZE

    def test_stalled_epoch_at_exact_optimum(self):
        model = LinearModel(np.eye(2), [0.5, 0.5])
        ts = linear_set([0.5, 0.5])  # residual identically zero
        state = LmState(grid=np.geomspace(1e-6, 1e2, GRID_SIZE), idx=0, dtd=None)
        rec = lm_epoch(model, ts, state, EXACT, epoch=1)
        assert rec["accepted"] is False
        assert rec["rms"] == 0.0
        assert np.array_equal(model.weights(), np.array([0.5, 0.5]))

    def test_record_fields(self):
        model = LinearModel(np.eye(2), [0.0, 0.0])
        state = LmState(grid=np.geomspace(1e-12, 1.0, GRID_SIZE), idx=0, dtd=None)
        rec = lm_epoch(model, linear_set([1.0, 0.0]), state, EXACT, epoch=7)
        assert rec["epoch"] == 7
        assert rec["accepted"] is True
        assert rec["lambda"] == pytest.approx(1e-12)
        assert rec["grid_idx"] == 0
        assert rec["wall_ms"] >= 0.0


class TestLmJacobian:
    def test_parallel_matches_serial_exact(self):
        hp = init_hamiltonian_params(2, np.random.default_rng(4))
        ts = make_training_set(2)
        serial = lm_jacobian(HamiltonianModel(hp, FAST), ts, EXACT, epoch=1, n_workers=1)
        parallel = lm_jacobian(HamiltonianModel(hp, FAST), ts, EXACT, epoch=1, n_workers=4)
        assert np.array_equal(serial, parallel)

    def test_parallel_matches_serial_shots(self):
        hp = init_hamiltonian_params(2, np.random.default_rng(4))
        ts = make_training_set(2)
        be = Backend(mode="shots", shots=128, seed=21)
        serial = lm_jacobian(HamiltonianModel(hp, FAST), ts, be, epoch=3, n_workers=1)
        parallel = lm_jacobian(HamiltonianModel(hp, FAST), ts, be, epoch=3, n_workers=4)
        assert np.array_equal(serial, parallel)

    def test_shots_rows_use_per_pair_streams(self):
        hp = init_hamiltonian_params(2, np.random.default_rng(4))
        ts = make_training_set(2)
        be = Backend(mode="shots", shots=128, seed=21)
        j1 = lm_jacobian(HamiltonianModel(hp, FAST), ts, be, epoch=3)
        j2 = lm_jacobian(HamiltonianModel(hp, FAST), ts, be, epoch=4)
        assert not np.array_equal(j1, j2)

    def test_non_finite_jacobian_rejected(self):
        model = LinearModel(np.eye(2), [0.0, 0.0])

        def bad_row(pair, backend):
            return np.array([np.nan, 0.0])

        model.jacobian_row = bad_row
        with pytest.raises(ValueError, match="finite"):
            lm_jacobian(model, linear_set([1.0, 0.0]), EXACT, epoch=1)


# ---------------------------------------------------------------------------
# epoch driver
# ---------------------------------------------------------------------------

class TestRunTraining:
    def test_epoch_zero_record_only_on_fresh_runs(self):
        model = LinearModel(np.eye(2), [0.0, 0.0])
        ts = linear_set([0.5, 0.5])
        state = LmState(grid=np.geomspace(1e-12, 1.0, GRID_SIZE), idx=0, dtd=None)
        fresh = run_training(model, ts, "lm", 2, EXACT, lm_state=state)
        assert [r["epoch"] for r in fresh] == [0, 1, 2]

        model2 = LinearModel(np.eye(2), [0.0, 0.0])
        state2 = LmState(grid=np.geomspace(1e-12, 1.0, GRID_SIZE), idx=0, dtd=None)
        resumed = run_training(model2, ts, "lm", 2, EXACT, lm_state=state2, first_epoch=5)
        assert [r["epoch"] for r in resumed] == [5, 6]

    def test_on_record_streams_in_order(self):
        model = LinearModel(np.eye(1), [0.0])
        ts = linear_set([1.0])
        seen = []
        state = LmState(grid=np.geomspace(1e-12, 1.0, GRID_SIZE), idx=0, dtd=None)
        recs = run_training(model, ts, "lm", 2, EXACT, lm_state=state, on_record=seen.append)
        assert seen == recs

    def test_unknown_optimizer_rejected(self):
        model = LinearModel(np.eye(1), [0.0])
        with pytest.raises(ValueError, match="optimizer"):
            run_training(model, linear_set([1.0]), "adam", 1, EXACT)

    def test_gradient_methods_require_hyper(self):
        model = LinearModel(np.eye(1), [0.0])
        with pytest.raises(ValueError, match="hyper"):
            run_training(model, linear_set([1.0]), "fdgd", 1, EXACT)
        with pytest.raises(ValueError, match="hyper"):
            run_training(model, linear_set([1.0]), "backprop", 1, EXACT)

    def test_fdgd_against_hamiltonian_model_smoke(self):
        hp = init_hamiltonian_params(2, np.random.default_rng(6))
        model = HamiltonianModel(hp, FAST)
        ts = make_training_set(2)
        recs = run_training(model, ts, "fdgd", 1, EXACT, hyper=HAMILTONIAN_HYPER)
        assert len(recs) == 2
        assert recs[1]["rms"] > 0.0
