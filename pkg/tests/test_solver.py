import math

import numpy as np
import pytest

from rlsa.core import BoundEstimates, ProblemInstance, uniform_noise, zero_noise
from rlsa.errors import ConfigurationError, CouplingError, OracleError
from rlsa.problems import make_affine_vi, make_bilinear_minimax
from rlsa.sets import Box, QuadraticConstraint
from rlsa.solver import (RandomStreams, SolverConfig, _advance, check_coupling, geometric_checkpoints,
                         initial_state, linear_checkpoints, max_coupled_gamma, rlsa_step, run,
                         step_sizes)

from conftest import line_instance


def _bounds(C_f):
    return BoundEstimates(1.0, C_f, 1.0, 1.0, 0.0)


class TestStepSizes:
    def test_k0(self):
        assert step_sizes(0, SolverConfig(rho0=1.0, gamma0=0.5)) == (1.0, 0.5, 1.0)

    def test_k1_clamped(self):
        raw = 1.0 / (math.sqrt(2) * math.log(2))
        assert raw == pytest.approx(1.0201, abs=1e-4)
        rho, gamma, t = step_sizes(1, SolverConfig(rho0=1.0, gamma0=0.5))
        assert (rho, gamma, t) == (1.0, 0.5, 1.0)

    def test_k99(self):
        rho, gamma, t = step_sizes(99, SolverConfig(rho0=1.0, gamma0=0.5))
        assert rho == pytest.approx(1.0 / (10 * math.log(100)))
        assert rho == pytest.approx(0.02171, abs=1e-5)
        assert gamma == pytest.approx(0.5 * rho) and t == pytest.approx(rho)

    def test_nonincreasing(self):
        cfg = SolverConfig(rho0=2.0, gamma0=0.3)
        vals = np.array([step_sizes(k, cfg) for k in range(2000)])
        assert np.all(np.diff(vals, axis=0) <= 0)

    def test_constant(self):
        assert step_sizes(500, SolverConfig(rho0=2.0, gamma0=0.3, schedule="constant")) == (2.0, 0.3, 1.0)


class TestSingleStep:
    def _inst(self):
        return line_instance([QuadraticConstraint.halfspace([1.0], 1.0)], -2.0, 2.0)

    def test_hand_computed(self):
        inst = self._inst()
        cfg = SolverConfig(rho0=1.0, gamma0=0.5, x0=(2.0,))
        s1 = _advance(initial_state(inst, cfg), inst, cfg, np.array([0.0]), 0)
        assert s1.lam[0] == 1.0
        assert s1.x[0] == 0.5
        assert s1.sum_t == 1.0 and s1.sum_x[0] == 2.0

    def test_through_streams(self):
        inst = self._inst()
        cfg = SolverConfig(rho0=1.0, gamma0=0.5, x0=(2.0,))
        s1 = rlsa_step(initial_state(inst, cfg), inst, cfg, RandomStreams(inst, 0, 0))
        assert (s1.lam[0], s1.x[0], s1.j_k) == (1.0, 0.5, 0)

    def test_dual_stays_zero_when_feasible(self, affine5):
        cfg = SolverConfig(rho0=3.0, gamma0=0.1)
        state = initial_state(affine5, cfg)
        slater = affine5.base_set.project(np.zeros(5))
        assert np.all(affine5.f(slater) <= 0)
        for j in range(affine5.J):
            assert np.all(_advance(state, affine5, cfg, np.zeros(5), j).lam == 0.0)

    def test_oracle_failure_reports_iteration(self):
        def mapping(x, xi):
            return x / 0.0 if abs(x[0]) < 1.5 else x
        inst = line_instance([QuadraticConstraint.halfspace([1.0], 1.0)], mapping=mapping)
        with np.errstate(divide="ignore", invalid="ignore"), pytest.raises(OracleError) as info:
            run(inst, SolverConfig(iters=5, x0=(1.8,), gamma0=0.5), gap=None)
        assert info.value.iteration == 1


class TestRun:
    def test_zero_iterations(self, affine2):
        cfg = SolverConfig(iters=0, x0=(0.1, -0.2))
        res = run(affine2, cfg, timing=False)
        np.testing.assert_array_equal(res.xbar, [0.1, -0.2])
        assert len(res.trace) == 1 and res.trace[0].k == 0

    def test_default_start_is_projected_origin(self, affine2):
        res = run(affine2, SolverConfig(iters=0))
        np.testing.assert_array_equal(res.xbar, affine2.base_set.project(np.zeros(2)))

    def test_identical_runs_deterministic_noise(self):
        inst = line_instance([QuadraticConstraint.halfspace([1.0], 1.0)])
        a = run(inst, SolverConfig(iters=300, noise_seed=1, index_seed=2, x0=(2.0,)), record_trajectory=True)
        b = run(inst, SolverConfig(iters=300, noise_seed=9, index_seed=5, x0=(2.0,)), record_trajectory=True)
        assert a.trajectory["x"].tobytes() == b.trajectory["x"].tobytes()

    def test_inactive_constraints_reduce_to_projected_sa(self):
        # f = -1 everywhere: the hinge never opens and x follows projected SA on F
        never = QuadraticConstraint.halfspace([0.0, 0.0], 1.0)
        A = np.array([[1.0, 0.5], [-0.5, 0.2]])
        b = np.array([0.3, -1.0])
        inst = ProblemInstance(Box([-1.0, -1.0], [1.0, 1.0]), [never, never],
                               lambda x, xi: A @ x + b + xi, uniform_noise(2, 0.2))
        cfg = SolverConfig(rho0=2.0, gamma0=0.4, iters=500, noise_seed=3, index_seed=4)
        res = run(inst, cfg, record_trajectory=True, gap=None)
        assert np.all(res.trajectory["lam"] == 0.0)
        streams = RandomStreams(inst, 3, 4)
        noise, _ = streams.take(500)
        x = inst.base_set.project(np.zeros(2))
        for k in range(500):
            _, gamma, _ = step_sizes(k, cfg)
            x = inst.base_set.project(x - gamma * (A @ x + b + noise[k]))
            assert np.array_equal(x, res.trajectory["x"][k + 1])

    def test_infeasibility_decreases(self, one_ball_instance):
        infeas = []
        for K in (100, 1_000, 10_000, 100_000):
            # a small rho0 keeps the multiplier lagging, so the average stays outside the ball
            res = run(one_ball_instance, SolverConfig(rho0=0.1, gamma0=0.5, iters=K),
                      checkpoints=[K], gap=None, timing=False)
            infeas.append(res.trace[-1].infeas_xbar)
        assert infeas[0] > 0
        assert all(b < a for a, b in zip(infeas, infeas[1:]))

    def test_coupling_failure(self, affine2):
        with pytest.raises(CouplingError, match=r"\(rho\*gamma\)\^2 <= J/\(120\*C_f\^2\)") as info:
            run(affine2, SolverConfig(rho0=10.0, gamma0=1.0, iters=10, check_coupling=True))
        assert info.value.report.lhs == 100.0 and info.value.report.rhs > 0

    def test_coupling_pass_recorded(self, affine2):
        res = run(affine2, SolverConfig(rho0=0.01, gamma0=0.01, iters=10, check_coupling=True))
        assert res.coupling.passed and res.coupling.margin > 0

    @pytest.mark.parametrize("field,value", [("rho0", 0.0), ("gamma0", -1.0), ("iters", -1),
                                             ("schedule", "adaptive"), ("backend", "gpu")])
    def test_invalid_config(self, affine2, field, value):
        with pytest.raises(ConfigurationError, match=field if field != "backend" else "backend"):
            run(affine2, SolverConfig(**{field: value}))

    def test_trace_sink_receives_records(self, affine2):
        got = []
        res = run(affine2, SolverConfig(iters=64), got.append, gap=None)
        assert got == res.trace and [r.k for r in got] == geometric_checkpoints(64)


@pytest.fixture(scope="module")
def traj():
    inst = make_affine_vi(3, 3, 6, 0.2)
    cfg = SolverConfig(rho0=5.0, gamma0=0.5, iters=1000, noise_seed=1, index_seed=2)
    return inst, cfg, run(inst, cfg, record_trajectory=True, gap=None)


class TestInvariants:
    def test_dual_nonnegative(self, traj):
        assert np.all(traj[2].trajectory["lam"] >= 0)

    def test_iterates_in_base_set(self, traj):
        inst = traj[0]
        assert all(inst.base_set.contains(x, tol=1e-12) for x in traj[2].trajectory["x"])

    def test_single_coordinate_changes(self, traj):
        lam = traj[2].trajectory["lam"]
        changed = np.count_nonzero(np.diff(lam, axis=0), axis=1)
        assert changed.max() <= 1
        assert changed.sum() > 0

    def test_ergodic_average_offline(self, traj):
        _, _, res = traj
        x, t = res.trajectory["x"], res.trajectory["t"]
        offline = (t[:, None] * x).sum(axis=0) / t.sum()
        np.testing.assert_allclose(res.xbar, offline, rtol=1e-10)

    def test_average_in_base_set(self, traj):
        assert traj[0].base_set.contains(traj[2].xbar, tol=1e-12)


class TestStreams:
    def test_index_seed_does_not_touch_noise(self, affine5):
        a = RandomStreams(affine5, 1, 2).take(5000)
        b = RandomStreams(affine5, 1, 3).take(5000)
        c = RandomStreams(affine5, 4, 2).take(5000)
        np.testing.assert_array_equal(a[0], b[0])
        assert not np.array_equal(a[1], b[1])
        np.testing.assert_array_equal(a[1], c[1])
        assert not np.array_equal(a[0], c[0])

    def test_slicing_invariant(self, affine2):
        whole = RandomStreams(affine2, 5, 6).take(10_000)
        s = RandomStreams(affine2, 5, 6)
        parts = [s.take(m) for m in (1, 4095, 3, 5901)]
        np.testing.assert_array_equal(whole[0], np.concatenate([p[0] for p in parts]))
        np.testing.assert_array_equal(whole[1], np.concatenate([p[1] for p in parts]))

    def test_indices_uniform(self, affine5):
        _, idx = RandomStreams(affine5, 0, 0).take(100_000)
        counts = np.bincount(idx, minlength=10)
        # chi-square with 9 degrees of freedom; 27.9 is the 0.999 quantile
        chi2 = np.sum((counts - 10_000) ** 2 / 10_000)
        assert chi2 < 27.9 and idx.min() == 0 and idx.max() == 9


class TestBackends:
    @pytest.mark.parametrize("make", [lambda: make_affine_vi(2, 4, 6, 0.3),
                                      lambda: make_bilinear_minimax(1, 2, 3, 2, 2, 0.3)])
    def test_compiled_matches_python(self, make):
        inst = make()
        kw = dict(rho0=4.0, gamma0=0.3, iters=3000, noise_seed=7, index_seed=8)
        a = run(inst, SolverConfig(backend="python", **kw), gap=None)
        b = run(inst, SolverConfig(backend="compiled", **kw), gap=None)
        np.testing.assert_allclose(a.xbar, b.xbar, rtol=1e-12, atol=1e-13)
        np.testing.assert_allclose(a.state.lam, b.state.lam, rtol=1e-12, atol=1e-13)
        assert a.lambda_sq_max == pytest.approx(b.lambda_sq_max, rel=1e-12)

    def test_compiled_unavailable(self):
        inst = line_instance([QuadraticConstraint.halfspace([1.0], 1.0)])
        with pytest.raises(ConfigurationError, match="compiled"):
            run(inst, SolverConfig(backend="compiled", iters=1))


class TestCoupling:
    def test_boundary_passes_with_zero_margin(self):
        rep = check_coupling(SolverConfig(rho0=1.0, gamma0=1.0), _bounds(1.0), 120)
        assert rep.passed and rep.margin == 0.0

    def test_fails(self):
        rep = check_coupling(SolverConfig(rho0=1.0, gamma0=1.0), _bounds(1.0), 1)
        assert not rep.passed and rep.lhs == 1.0 and rep.rhs == pytest.approx(1 / 120)

    def test_vacuous(self):
        assert check_coupling(SolverConfig(rho0=1e6, gamma0=1e6), _bounds(0.0), 3).passed

    def test_max_coupled_gamma_is_boundary(self):
        g = max_coupled_gamma(0.7, _bounds(2.3), 10)
        rep = check_coupling(SolverConfig(rho0=0.7, gamma0=g), _bounds(2.3), 10)
        assert rep.passed and abs(rep.margin) < 1e-15

    def test_description_states_interpretation(self):
        text = check_coupling(SolverConfig(), _bounds(1.0), 1).describe()
        assert "rearrangement" in text and "violated" in text


class TestCheckpoints:
    def test_geometric(self):
        assert geometric_checkpoints(10) == [1, 2, 4, 8, 10]
        assert geometric_checkpoints(8) == [1, 2, 4, 8]
        assert geometric_checkpoints(0) == [0]

    def test_linear(self):
        assert linear_checkpoints(100, 4) == [25, 50, 75, 100]


def test_zero_noise_sampler_shape():
    assert zero_noise(3)(None, 5).shape == (5, 3)
