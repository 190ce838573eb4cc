import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlsa.baselines import projected_extragradient
from rlsa.core import check_monotonicity
from rlsa.errors import InstanceGenerationError, InvalidArgumentError
from rlsa.harness.acceptance import kkt_instances
from rlsa.metrics import kkt_residual
from rlsa.problems import (InstanceDescriptor, build, cournot_sizes, default_zoo, flatten_index,
                           make_affine_vi, make_bilinear_minimax, make_nash_cournot, outward_start,
                           rate_benchmark_descriptor, scalar_kkt_instance, unflatten_index)


def _block_feasible(inst, lo, n_block, points_per_axis):
    """Feasible grid of one bilinear block: ``[-1, 1]^2`` filtered by that block's balls."""
    axis = np.linspace(-1.0, 1.0, points_per_axis)
    g = np.array(list(itertools.product(axis, axis)))
    keep = np.ones(len(g), dtype=bool)
    for c in inst.constraints:
        p, q = c.p[lo:lo + n_block], c.q[lo:lo + n_block]
        if not np.any(p) and not np.any(q):
            continue
        keep &= ((0.5 * p * g + q) * g).sum(axis=1) + c.r <= 0
    return g[keep]


class TestScalar:
    def test_kkt_pair(self, scalar):
        assert scalar.reference[0][0] == 1.0 and scalar.reference[1][0] == 1.0
        assert kkt_residual(scalar, [1.0], [1.0]).max_violation() == 0.0
        np.testing.assert_array_equal(scalar.F([1.0]), [-1.0])

    def test_noise_zero_ignores_draw(self):
        inst = scalar_kkt_instance(0.0)
        draw = inst.sample_noise(np.random.default_rng(0), 3)
        assert np.all(draw == 0.0)
        np.testing.assert_array_equal(inst.mapping(np.array([0.3]), draw[0]), inst.F([0.3]))


class TestAffine:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 8))
    def test_monotone_for_any_seed(self, seed, n, J):
        inst = make_affine_vi(seed, n, J, 0.1)
        assert inst.J == J and inst.n == n
        assert check_monotonicity(inst, 500, 1e-10, rng=seed).passed

    def test_regeneration_is_exact(self):
        a, b = make_affine_vi(7, 4, 6, 0.2), make_affine_vi(7, 4, 6, 0.2)
        pts = a.base_set.sample(np.random.default_rng(0), 1000)
        for x in pts[:50]:
            np.testing.assert_array_equal(a.F(x), b.F(x))
            np.testing.assert_array_equal(a.f(x), b.f(x))
        np.testing.assert_array_equal(a.affine[0], b.affine[0])
        np.testing.assert_array_equal(a.affine[0] @ pts.T, b.affine[0] @ pts.T)

    def test_seed_changes_instance(self):
        assert not np.array_equal(make_affine_vi(0, 3, 3).affine[0], make_affine_vi(1, 3, 3).affine[0])

    def test_default_has_active_constraint_at_solution(self, affine5):
        eg = projected_extragradient(affine5)
        assert np.max(eg.lam) > 1e-3

    def test_boundary_offset_zero_records_reference(self):
        inst = make_affine_vi(0, 3, 4, boundary_offset=0.0)
        xs, ls = inst.reference
        np.testing.assert_allclose(inst.F(xs), 0.0, atol=1e-12)
        np.testing.assert_array_equal(ls, 0.0)

    @pytest.mark.parametrize("n,J", [(0, 2), (2, 0)])
    def test_bad_dims(self, n, J):
        with pytest.raises(InvalidArgumentError):
            make_affine_vi(0, n, J)

    def test_impossible_geometry_raises(self):
        # a zero radius leaves no interior point
        with pytest.raises(InstanceGenerationError):
            make_affine_vi(0, 2, 2, radius=0.0)


class TestBilinear:
    def test_uv_saddle_at_origin(self):
        inst = make_bilinear_minimax(0, 1, 1, 1, 1, Q=[[1.0]], a=[0.0], c=[0.0],
                                     u_balls=[[[0.0], 0.9]], v_balls=[[[0.0], 0.9]])
        np.testing.assert_array_equal(inst.F([0.0, 0.0]), [0.0, 0.0])
        eg = projected_extragradient(inst)
        np.testing.assert_allclose(eg.x, [0.0, 0.0], atol=1e-8)

    def test_block_constraints_have_zero_gradient_in_other_block(self):
        inst = make_bilinear_minimax(3, 2, 3, 2, 2)
        rng = np.random.default_rng(0)
        for x in inst.base_set.sample(rng, 20):
            g = inst.grad_f(x)
            assert np.all(g[:2, 2:] == 0.0) and np.all(g[2:, :2] == 0.0)

    def test_noise_is_bilinear(self):
        inst = make_bilinear_minimax(1, 2, 2, 1, 1, noise_level=0.3)
        x = np.array([0.2, -0.1, 0.4, 0.3])
        xi = inst.sample_noise(np.random.default_rng(1), 1)[0]
        X = xi.reshape(2, 2)
        expected = inst.affine[0] @ x + inst.affine[1] + np.concatenate([X @ x[2:], -(X.T @ x[:2])])
        np.testing.assert_allclose(inst.mapping(x, xi), expected, atol=1e-15)

    def test_saddle_value_matches_nested_grid(self):
        inst = default_zoo()["bilinear-minimax(2,2)"]
        A, b = inst.affine
        Q, a, c = A[:2, 2:], b[:2], b[2:]
        eg = projected_extragradient(inst, tol=1e-12)
        u, v = eg.x[:2], eg.x[2:]
        value = u @ Q @ v + a @ u - c @ v
        U = _block_feasible(inst, 0, 2, 201)
        V = _block_feasible(inst, 2, 2, 201)
        best = np.inf
        for chunk in np.array_split(U, 40):
            inner = (chunk @ Q) @ V.T - (V @ c)[None, :]
            best = min(best, float(np.min(inner.max(axis=1) + chunk @ a)))
        # grid spacing 0.01; the min-max error shrinks to ~1e-5 at 401 points per axis
        assert value == pytest.approx(best, abs=1e-3)

    def test_bad_dims(self):
        with pytest.raises(InvalidArgumentError):
            make_bilinear_minimax(0, 0, 1, 1, 1)

    def test_no_interior_point(self):
        with pytest.raises(InstanceGenerationError):
            make_bilinear_minimax(0, 1, 1, 1, 1, u_balls=[[[0.8], 0.1]])


class TestCournot:
    def _sym(self, caps=None):
        return make_nash_cournot(0, 2, caps=caps, c=1.0, q=0.5, p0=10.0, beta=1.0, kappa=0.1)

    def test_symmetric_interior_equilibrium(self):
        inst = self._sym()
        np.testing.assert_allclose(inst.F([2.25, 2.25]), 0.0, atol=1e-14)
        eg = projected_extragradient(inst, tol=1e-12)
        np.testing.assert_allclose(eg.x, [2.25, 2.25], atol=1e-8)
        np.testing.assert_allclose(eg.lam, 0.0, atol=1e-8)

    def test_binding_capacity(self):
        _, inst, xs, ls = kkt_instances()[1]
        eg = projected_extragradient(inst, tol=1e-12)
        assert eg.lam[0] > 0 and eg.lam[2] > 0
        assert eg.x[0] == pytest.approx(eg.x[1], abs=1e-10)
        assert kkt_residual(inst, eg.x, eg.lam).max_violation() <= 1e-6
        np.testing.assert_allclose(eg.x, xs, atol=1e-6)
        np.testing.assert_allclose(eg.lam, ls, atol=1e-6)

    def test_random_games_monotone(self):
        for seed in range(5):
            assert check_monotonicity(make_nash_cournot(seed, 4), 2000, 1e-10).passed

    def test_constraint_layout(self):
        inst = make_nash_cournot(2, 3)
        assert inst.J == sum(cournot_sizes(3)) == 6
        assert [c.label for c in inst.constraints[:2]] == ["capacity0", "budget0"]

    def test_needs_two_players(self):
        with pytest.raises(InvalidArgumentError):
            make_nash_cournot(0, 1)

    def test_nonpositive_caps(self):
        with pytest.raises(InstanceGenerationError):
            self._sym(caps=0.0)


class TestIndices:
    def test_round_trip_exhaustive(self):
        for sizes in ([1], [2, 3], [3, 1, 4, 1], [2] * 5):
            seen = []
            for i, s in enumerate(sizes):
                for l in range(s):
                    j = flatten_index(i, l, sizes)
                    assert unflatten_index(j, sizes) == (i, l)
                    seen.append(j)
            assert seen == list(range(sum(sizes)))

    @pytest.mark.parametrize("i,l", [(-1, 0), (2, 0), (0, 2), (1, -1)])
    def test_flatten_out_of_range(self, i, l):
        with pytest.raises(InvalidArgumentError):
            flatten_index(i, l, [2, 3])

    @pytest.mark.parametrize("j", [5, 6])
    def test_unflatten_out_of_range(self, j):
        with pytest.raises(InvalidArgumentError):
            unflatten_index(j, [2, 3])


class TestDescriptor:
    @pytest.mark.parametrize("desc", [
        InstanceDescriptor("affine-vi", 3, {"n": 3, "J": 4}, 0.1),
        rate_benchmark_descriptor(),
        InstanceDescriptor("bilinear-minimax", 1, {"n1": 2, "n2": 1, "J1": 1, "J2": 2}, 0.05),
        InstanceDescriptor("nash-cournot", 2, {"N": 3}, 0.0, {"symmetric": True}),
    ])
    def test_json_round_trip_rebuilds_same_instance(self, desc):
        again = InstanceDescriptor.from_json(desc.to_json())
        assert again == desc
        a, b = build(desc), build(again)
        np.testing.assert_array_equal(a.affine[0], b.affine[0])
        np.testing.assert_array_equal(a.affine[1], b.affine[1])
        assert a.descriptor == json.loads(desc.to_json())

    def test_unknown_family(self):
        with pytest.raises(InvalidArgumentError, match="family"):
            InstanceDescriptor.from_dict({"family": "nope"})

    def test_unknown_field(self):
        with pytest.raises(InvalidArgumentError, match="unknown"):
            InstanceDescriptor.from_dict({"family": "affine-vi", "colour": 1})


def test_outward_start_is_outside_feasible_set():
    inst = build(rate_benchmark_descriptor())
    x0 = outward_start(inst, 0.3)
    assert inst.base_set.contains(x0)
    assert np.max(inst.f(x0)) > 0


def test_outward_start_needs_reference(affine2):
    with pytest.raises(InvalidArgumentError):
        outward_start(affine2, 0.3)


def test_zoo_families_and_monotonicity():
    zoo = default_zoo(0.1)
    assert {inst.name for inst in zoo.values()} == {"affine-vi", "bilinear-minimax", "nash-cournot"}
    for name, inst in zoo.items():
        assert check_monotonicity(inst, 10_000, 1e-10).passed, name
