import numpy as np
import pytest

from rlsa.baselines import dykstra_project, feasible_grid_2d, grid_gap, projected_extragradient
from rlsa.errors import InsufficientDataError, InvalidArgumentError, SamplingError
from rlsa.harness.acceptance import kkt_instances
from rlsa.metrics import (TRACE_COLUMNS, dual_gap_affine, dual_gap_sampled, infeasibility,
                          kkt_error_function, kkt_residual, rate_fit, rate_fit_trace)
from rlsa.problems import affine_instance, default_zoo, make_affine_vi
from rlsa.sets import Box, QuadraticConstraint
from rlsa.solver import SolverConfig, run

from conftest import line_instance

# least-squares slope of log(ln(k+1)/sqrt(k+2)) on log k at k = 1e2..1e6, from scipy.stats.linregress
ANALYTIC_RATE_SLOPE = -0.381681703859063


def _valued(values):
    """1-D instance whose constraints take ``values`` at x = 0."""
    return line_instance([QuadraticConstraint.halfspace([1.0], -v) for v in values])


def _identity_interval():
    """``F(y) = y`` on ``[-1, 1]`` with the redundant constraint ``y <= 1``."""
    return affine_instance([[1.0]], [0.0], [QuadraticConstraint.halfspace([1.0], 1.0)], Box([-1.0], [1.0]))


class TestInfeasibility:
    @pytest.mark.parametrize("values,expected", [((-1.0, -2.0), 0.0), ((1.0, -1.0), 0.5),
                                                 ((0.2, 0.4, 0.0), 0.2)])
    def test_examples(self, values, expected):
        assert infeasibility([0.0], _valued(values)) == pytest.approx(expected)


class TestDualGapAffine:
    def test_at_minimizer(self):
        assert dual_gap_affine(_identity_interval(), [0.0]).value == pytest.approx(0.0, abs=1e-12)

    def test_parabola_vertex(self):
        est = dual_gap_affine(_identity_interval(), [1.0])
        assert est.value == pytest.approx(0.25, abs=1e-12)
        assert est.argmax[0] == pytest.approx(0.5)
        assert est.method == "exact-concave-oracle" and est.converged

    def test_matches_grid(self, affine2):
        grid = feasible_grid_2d(affine2, 1_000_000)
        rng = np.random.default_rng(7)
        lo, hi = affine2.base_set.bounding_box()
        for x in rng.uniform(lo, hi, (10, 2)):
            est = dual_gap_affine(affine2, x)
            g = grid_gap(affine2, x, grid)
            # the grid is a subset of the feasible set, so it can only undershoot
            assert g - 1e-12 <= est.value <= g + 1e-3

    def test_not_converged_flag(self, affine5):
        est = dual_gap_affine(affine5, np.ones(5), inner_budget=1)
        assert not est.converged and est.iterations == 1

    def test_python_path_matches_compiled(self, affine2):
        from rlsa.metrics import _ascent_step, _gap_ascent_python

        x = np.array([0.7, -0.4])
        y, _, _ = _gap_ascent_python(affine2, x, x, _ascent_step(affine2.affine[0]), 1e-10, 100_000, 1e-13)
        A, b = affine2.affine
        assert (A @ y + b) @ (x - y) == pytest.approx(dual_gap_affine(affine2, x).value, abs=1e-9)

    def test_requires_affine(self):
        with pytest.raises(InvalidArgumentError):
            dual_gap_affine(_valued([0.0]), [0.0])

    def test_nonnegative_at_run_averages(self):
        for name, inst in default_zoo(0.1).items():
            if inst.affine is None:
                continue
            res = run(inst, SolverConfig(rho0=1.0, gamma0=0.2, iters=2000, noise_seed=1, index_seed=1),
                      gap=None, timing=False)
            # measured at the nearest feasible point, as the gap is defined on the feasible set
            x = dykstra_project(res.xbar, inst).point
            assert dual_gap_affine(inst, x).value >= -1e-8, name


class TestDualGapSampled:
    def test_self_evaluation(self, affine2):
        y = np.array([0.0, 0.0])
        est = dual_gap_sampled(affine2, y, sample_budget=0, candidates=[y], include_reference=False)
        assert est.value == 0.0 and est.samples == 1

    def test_grid_argmax_matches_oracle(self, affine2):
        grid = feasible_grid_2d(affine2, 1_000_000)
        x = np.array([0.9, 0.9])
        A, b = affine2.affine
        best = grid[np.argmax(np.einsum("ij,ij->i", grid @ A.T + b, x - grid))]
        est = dual_gap_sampled(affine2, x, sample_budget=0, candidates=[best])
        assert est.value == pytest.approx(dual_gap_affine(affine2, x).value, abs=1e-3)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_budget_monotone(self, affine5, seed):
        x = np.full(5, 0.3)
        small = dual_gap_sampled(affine5, x, 500, rng=seed).value
        large = dual_gap_sampled(affine5, x, 1000, rng=seed).value
        assert large >= small

    def test_no_feasible_samples(self):
        tiny = affine_instance(np.eye(2), np.zeros(2), [QuadraticConstraint.ball([0.0, 0.0], 1e-6)],
                               Box([-1.0, -1.0], [1.0, 1.0]))
        with pytest.raises(SamplingError, match="increase sample_budget"):
            dual_gap_sampled(tiny, np.zeros(2), sample_budget=10, include_reference=False)

    def test_sandwich_on_affine_zoo(self):
        rng = np.random.default_rng(4)
        for name, inst in default_zoo(0.0).items():
            for x in inst.base_set.sample(rng, 50):
                lower = dual_gap_sampled(inst, x, 500, rng=1).value
                assert lower <= dual_gap_affine(inst, x).value + 1e-8, name


class TestKKT:
    def test_scalar_pair(self, scalar):
        r = kkt_residual(scalar, [1.0], [1.0])
        assert r.max_violation() == 0.0

    def test_interior_stationary_point(self):
        inst = affine_instance(np.eye(2), [-0.1, 0.2], [QuadraticConstraint.ball([0.0, 0.0], 1.0)],
                               Box([-1.0, -1.0], [1.0, 1.0]))
        r = kkt_residual(inst, [0.1, -0.2], [0.0])
        assert (r.stationarity, r.complementarity, r.primal_feasibility, r.dual_feasibility) == (0, 0, 0, 0)

    def test_negative_multiplier_reported(self, scalar):
        assert kkt_residual(scalar, [1.0], [-0.5]).dual_feasibility == -0.5

    def test_box_face_counts_as_normal_cone(self):
        # F = -1 pushes against the upper bound x = 1 of X; no functional constraint is active
        inst = affine_instance([[0.0]], [-1.0], [QuadraticConstraint.halfspace([1.0], 5.0)], Box([0.0], [1.0]))
        assert kkt_residual(inst, [1.0], [0.0]).stationarity == 0.0

    def test_baselines_certify_metrics(self):
        for name, inst in default_zoo(0.1).items():
            eg = projected_extragradient(inst)
            assert infeasibility(eg.x, inst) <= 1e-6, name
            assert dual_gap_affine(inst, eg.x).value <= 1e-4, name

    def test_kkt_error_function_nonnegative_at_hand_solved_pairs(self, one_ball_instance):
        cases = [(inst, xs, ls) for _, inst, xs, ls in kkt_instances()]
        cases.append((one_ball_instance, *one_ball_instance.reference))
        rng = np.random.default_rng(0)
        for inst, xs, ls in cases:
            assert kkt_residual(inst, xs, ls).max_violation() <= 1e-12
            for x in inst.base_set.sample(rng, 1000):
                assert kkt_error_function(inst, x, xs, ls) >= -1e-10


class TestRateFit:
    def test_power_law(self):
        ks = 2.0 ** np.arange(1, 15)
        fit = rate_fit(ks, ks**-0.5)
        assert fit.slope == pytest.approx(-0.5, abs=1e-12) and fit.r2 == pytest.approx(1.0)

    def test_analytic_rate(self):
        ks = np.array([1e2, 1e3, 1e4, 1e5, 1e6])
        fit = rate_fit(ks, np.log(ks + 1) / np.sqrt(ks + 2))
        assert fit.slope == pytest.approx(ANALYTIC_RATE_SLOPE, abs=1e-10)
        assert -0.50 <= fit.slope <= -0.35

    def test_constant(self):
        fit = rate_fit([1, 2, 4, 8, 16], [3.0] * 5)
        assert fit.slope == pytest.approx(0.0, abs=1e-12)

    def test_k_min_and_nonpositive_values_dropped(self):
        ks = np.array([1, 2, 4, 8, 16, 32, 64, 128])
        vals = ks**-1.0
        vals[5] = 0.0
        fit = rate_fit(ks, vals, k_min=4)
        assert fit.points == 5
        with pytest.raises(InsufficientDataError):
            rate_fit(ks, vals, k_min=8)

    def test_from_trace(self, affine2):
        res = run(affine2, SolverConfig(iters=4096), timing=False)
        fit = rate_fit_trace(res.trace, "t_k", k_min=2)
        assert fit.slope < 0


def test_trace_columns():
    assert TRACE_COLUMNS == ("k", "rho_k", "gamma_k", "t_k", "infeas_xbar", "gap_xbar",
                             "gap_method", "lambda_norm", "wall_ms")


def test_trace_row_order(affine2):
    rec = run(affine2, SolverConfig(iters=4), timing=False).trace[-1]
    assert rec.row()[0] == 4 and rec.row()[6] == "exact-concave-oracle" and rec.row()[-1] == 0.0


def test_sampled_gap_in_trace_for_generic_instance(one_ball_instance):
    rec = run(one_ball_instance, SolverConfig(iters=8), gap="sampled", timing=False).trace[-1]
    assert rec.gap_method == "sampled-lower-bound" and np.isfinite(rec.gap_xbar)


def test_make_affine_reference_feasible():
    inst = make_affine_vi(0, 5, 10, 0.1, boundary_offset=0.0)
    xs, ls = inst.reference
    assert infeasibility(xs, inst) == 0.0 and np.max(inst.f(xs)) == pytest.approx(0.0, abs=1e-12)
    assert kkt_residual(inst, xs, ls).max_violation() <= 1e-12
