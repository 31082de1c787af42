"""Norm and Clarke-gradient envelopes, backward Jacobian propagation, bound modes."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipcert import (
    BoxDomain,
    DeltaState,
    LayerIntervals,
    LinearForm,
    abs_norm_relaxation,
    clarke_relaxation,
    interval_clarke_relaxation,
    jacobian_backward_step,
    jacobian_entry_bounds,
    jacobian_interval_bounds,
    lipschitz_upper_bound,
    preactivation_bounds,
    recurjac_reference,
    sample_lower_bound,
)
from lipcert.jacobian_bounds import DELTA_UNSTABLE, abs_upper_line
from lipcert.model import AffineLayer, Network
from conftest import delta_extreme_norm, jac_norm, make_net, random_net


def unstable_state(n=1):
    return DeltaState(np.full(n, DELTA_UNSTABLE, dtype=np.int8))


def state_of(kinds):
    return DeltaState(np.array(kinds, dtype=np.int8))


class TestAbsNormRelaxation:
    def test_asymmetric_interval(self):
        # [-1, 1.5]: line through (-1, 1) and (1.5, 1.5)
        coeff, bias = abs_norm_relaxation(np.array([-1.0]), np.array([1.5]))
        np.testing.assert_allclose(coeff, [0.2])
        assert bias == pytest.approx(1.2)
        for j in np.linspace(-1.0, 1.5, 200):
            assert coeff[0] * j + bias >= abs(j) - 1e-12

    def test_point_interval(self):
        coeff, bias = abs_norm_relaxation(np.array([-2.0]), np.array([-2.0]))
        np.testing.assert_allclose(coeff, [0.0])
        assert bias == pytest.approx(2.0)

    def test_nonnegative_interval_is_exact(self):
        coeff, bias = abs_norm_relaxation(np.array([0.0]), np.array([3.0]))
        np.testing.assert_allclose(coeff, [1.0])
        assert bias == pytest.approx(0.0)

    def test_bias_is_sum_of_per_entry_intercepts(self):
        L = np.array([-1.0, 0.0, -2.0])
        U = np.array([1.5, 3.0, -2.0])
        slope, intercept = abs_upper_line(L, U)
        coeff, bias = abs_norm_relaxation(L, U)
        np.testing.assert_allclose(coeff, slope)
        assert bias == pytest.approx(np.sum(intercept))

    def test_rejects_inverted(self):
        with pytest.raises(ValueError):
            abs_norm_relaxation(np.array([1.0]), np.array([0.0]))

    @given(st.floats(-100, 100), st.floats(0, 200))
    @settings(max_examples=400, deadline=None)
    def test_sound_with_endpoint_equality(self, L, width):
        U = L + width
        slope, intercept = abs_upper_line(np.array([L]), np.array([U]))
        line = lambda j: slope[0] * j + intercept[0]
        assert line(L) == pytest.approx(abs(L), abs=1e-12, rel=1e-12)
        assert line(U) == pytest.approx(abs(U), abs=1e-12, rel=1e-12)
        for j in np.linspace(L, U, 64):
            assert line(j) >= abs(j) - 1e-12


class TestClarkeRelaxation:
    def test_symmetric_unstable_interval(self):
        # [-1.5, 1.5]: upper 0.5 J + 0.75, lower 0.5 J - 0.75
        rel = clarke_relaxation(np.array([-1.5]), np.array([1.5]), unstable_state())
        np.testing.assert_allclose(rel.upper_slope, [0.5])
        np.testing.assert_allclose(rel.upper_intercept, [0.75])
        np.testing.assert_allclose(rel.lower_slope, [0.5])
        np.testing.assert_allclose(rel.lower_intercept, [-0.75])

    def test_nonnegative_interval_reduces_to_fixed_case(self):
        rel = clarke_relaxation(np.array([0.2]), np.array([1.0]), unstable_state())
        np.testing.assert_allclose(rel.lower_slope, [0.0])
        np.testing.assert_allclose(rel.lower_intercept, [0.0])
        np.testing.assert_allclose(rel.upper_slope, [1.0])
        np.testing.assert_allclose(rel.upper_intercept, [0.0])

    def test_nonpositive_interval_mirrored(self):
        rel = clarke_relaxation(np.array([-2.0]), np.array([-0.5]), unstable_state())
        np.testing.assert_allclose(rel.lower_slope, [1.0])
        np.testing.assert_allclose(rel.lower_intercept, [0.0])
        np.testing.assert_allclose(rel.upper_slope, [0.0])
        np.testing.assert_allclose(rel.upper_intercept, [0.0])

    def test_fixed_gradient_states(self):
        rel = clarke_relaxation(np.array([-1.0, -1.0]), np.array([2.0, 2.0]), state_of([0, 1]))
        np.testing.assert_allclose(rel.lower_slope, [0.0, 1.0])
        np.testing.assert_allclose(rel.upper_slope, [0.0, 1.0])
        np.testing.assert_allclose(rel.lower_intercept, [0.0, 0.0])
        np.testing.assert_allclose(rel.upper_intercept, [0.0, 0.0])

    def test_degenerate_unstable_interval(self):
        rel = clarke_relaxation(np.array([3.0]), np.array([3.0]), unstable_state())
        np.testing.assert_allclose(rel.lower_slope, [0.0])
        np.testing.assert_allclose(rel.lower_intercept, [0.0])  # min(3, 0)
        np.testing.assert_allclose(rel.upper_intercept, [3.0])  # max(3, 0)

    @given(st.floats(-100, 100), st.floats(0, 200))
    @settings(max_examples=400, deadline=None)
    def test_sound_over_product_set(self, L, width):
        U = L + width
        rel = clarke_relaxation(np.array([L]), np.array([U]), unstable_state())
        for j in np.linspace(L, U, 32):
            for d in (0.0, 0.25, 0.75, 1.0):
                prod = j * d
                assert rel.upper_slope[0] * j + rel.upper_intercept[0] >= prod - 1e-12
                assert rel.lower_slope[0] * j + rel.lower_intercept[0] <= prod + 1e-12

    def test_endpoint_touch_points(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            L = rng.uniform(-10, 10)
            U = L + rng.uniform(1e-6, 20)
            rel = clarke_relaxation(np.array([L]), np.array([U]), unstable_state())
            up = lambda j: rel.upper_slope[0] * j + rel.upper_intercept[0]
            lo = lambda j: rel.lower_slope[0] * j + rel.lower_intercept[0]
            assert up(L) == pytest.approx(max(L, 0.0), abs=1e-12)
            assert up(U) == pytest.approx(max(U, 0.0), abs=1e-12)
            assert lo(L) == pytest.approx(min(L, 0.0), abs=1e-12)
            assert lo(U) == pytest.approx(min(U, 0.0), abs=1e-12)

    def test_no_tighter_line_is_sound(self):
        # any line dipping strictly below the upper envelope at an interior
        # point is violated by some (J, delta) pair, and symmetrically below
        rng = np.random.default_rng(22)
        grid_d = np.array([0.0, 1.0])
        for _ in range(60):
            L = rng.uniform(-5, -0.1)
            U = rng.uniform(0.1, 5)
            rel = clarke_relaxation(np.array([L]), np.array([U]), unstable_state())
            j_star = rng.uniform(L + 1e-3, U - 1e-3)
            up_at = rel.upper_slope[0] * j_star + rel.upper_intercept[0]
            for ds in (-0.05, 0.0, 0.05):
                s = rel.upper_slope[0] + ds
                t = (up_at - 1e-3) - s * j_star  # strictly below ours at j_star
                grid_j = np.linspace(L, U, 401)
                worst = np.max(grid_j[:, None] * grid_d[None, :] - (s * grid_j)[:, None] - t)
                assert worst > 0, "a line below the optimal envelope must be unsound"
            lo_at = rel.lower_slope[0] * j_star + rel.lower_intercept[0]
            for ds in (-0.05, 0.0, 0.05):
                s = rel.lower_slope[0] + ds
                t = (lo_at + 1e-3) - s * j_star  # strictly above ours at j_star
                grid_j = np.linspace(L, U, 401)
                worst = np.max((s * grid_j)[:, None] + t - grid_j[:, None] * grid_d[None, :])
                assert worst > 0


class TestIntervalClarkeRelaxation:
    def test_straddling_entries_become_constants(self):
        rel = interval_clarke_relaxation(np.array([-1.0]), np.array([2.0]), unstable_state())
        np.testing.assert_allclose(rel.lower_slope, [0.0])
        np.testing.assert_allclose(rel.upper_slope, [0.0])
        np.testing.assert_allclose(rel.lower_intercept, [-1.0])
        np.testing.assert_allclose(rel.upper_intercept, [2.0])

    def test_fixed_one_with_straddle_still_constant(self):
        rel = interval_clarke_relaxation(np.array([-1.0]), np.array([2.0]), state_of([1]))
        np.testing.assert_allclose(rel.lower_intercept, [-1.0])
        np.testing.assert_allclose(rel.upper_intercept, [2.0])
        np.testing.assert_allclose(rel.upper_slope, [0.0])

    def test_fixed_zero_is_exact_zero(self):
        rel = interval_clarke_relaxation(np.array([-1.0]), np.array([2.0]), state_of([0]))
        for arr in (rel.lower_slope, rel.upper_slope, rel.lower_intercept, rel.upper_intercept):
            np.testing.assert_allclose(arr, [0.0])

    def test_sign_fixed_entries_stay_linear(self):
        rel = interval_clarke_relaxation(np.array([0.5]), np.array([2.0]), unstable_state())
        np.testing.assert_allclose(rel.lower_slope, [0.0])
        np.testing.assert_allclose(rel.upper_slope, [1.0])
        np.testing.assert_allclose(rel.upper_intercept, [0.0])

    def test_always_at_least_as_loose_as_linear(self):
        rng = np.random.default_rng(23)
        for _ in range(300):
            L = rng.uniform(-5, 5)
            U = L + rng.uniform(0, 10)
            kind = int(rng.integers(0, 3))
            tight = clarke_relaxation(np.array([L]), np.array([U]), state_of([kind]))
            loose = interval_clarke_relaxation(np.array([L]), np.array([U]), state_of([kind]))
            for j in np.linspace(L, U, 33):
                t_up = tight.upper_slope[0] * j + tight.upper_intercept[0]
                l_up = loose.upper_slope[0] * j + loose.upper_intercept[0]
                assert t_up <= l_up + 1e-12
                t_lo = tight.lower_slope[0] * j + tight.lower_intercept[0]
                l_lo = loose.lower_slope[0] * j + loose.lower_intercept[0]
                assert t_lo >= l_lo - 1e-12


class TestJacobianBackwardStep:
    def test_all_one_neurons_fold_weight(self):
        layer = AffineLayer(np.array([[1.0, -2.0], [0.5, 1.0]]), np.zeros(2))
        rel = clarke_relaxation(np.array([-1.0, -1.0]), np.array([1.0, 1.0]), state_of([1, 1]))
        form = jacobian_backward_step(LinearForm(np.array([[1.0, 2.0]]), np.zeros(1)), layer, rel)
        np.testing.assert_allclose(form.coeff, np.array([[1.0, 2.0]]) @ layer.weight.T)
        np.testing.assert_allclose(form.bias_acc, [0.0])

    def test_all_zero_neurons_clear_coefficients(self):
        layer = AffineLayer(np.array([[1.0], [2.0]]), np.zeros(2))
        rel = clarke_relaxation(np.array([-1.0, -1.0]), np.array([1.0, 1.0]), state_of([0, 0]))
        form = jacobian_backward_step(LinearForm(np.array([[1.0]]), np.array([0.5])), layer, rel)
        np.testing.assert_allclose(form.coeff, [[0.0, 0.0]])
        np.testing.assert_allclose(form.bias_acc, [0.5])

    def test_hand_substitution_with_relaxed_line(self):
        # upper line 0.5 J + 0.75 on a single neuron, positive coefficient 1
        layer = AffineLayer(np.array([[1.0]]), np.zeros(1))
        rel = clarke_relaxation(np.array([-1.5]), np.array([1.5]), unstable_state())
        form = jacobian_backward_step(LinearForm(np.array([[1.0]]), np.zeros(1)), layer, rel)
        np.testing.assert_allclose(form.coeff, [[0.5]])
        np.testing.assert_allclose(form.bias_acc, [0.75])


class TestJacobianIntervalBounds:
    def test_all_active_chain_is_exact_product(self):
        net = make_net(([[1.0, 1.0], [1.0, -1.0]], [5.0, 5.0]), ([[2.0, 1.0]], [0.0]))
        intervals = preactivation_bounds(net, BoxDomain.ball(np.zeros(2), 0.01))
        jac = jacobian_interval_bounds(net, intervals, row=0)
        product = net.layers[1].weight @ net.layers[0].weight
        np.testing.assert_allclose(jac[0].L, product[0], atol=1e-12)
        np.testing.assert_allclose(jac[0].U, product[0], atol=1e-12)

    def test_single_unstable_neuron_delta_extremes(self):
        # W1=[[1]], W2=[[3]]: J entry ranges over {0, 3} by delta in {0, 1}
        net = make_net(([[1.0]], [0.0]), ([[3.0]], [0.0]))
        intervals = [LayerIntervals(np.array([-1.0]), np.array([1.0]))]
        jac = jacobian_interval_bounds(net, intervals, row=0)
        expected = [3.0 * d for d in (0.0, 1.0)]
        np.testing.assert_allclose(jac[0].L, [min(expected)])
        np.testing.assert_allclose(jac[0].U, [max(expected)])
        np.testing.assert_allclose(jac[1].L, [3.0])
        np.testing.assert_allclose(jac[1].U, [3.0])

    def test_zero_last_row(self):
        net = make_net(([[1.0, -1.0]], [0.0]), ([[0.0]], [0.0]))
        intervals = preactivation_bounds(net, BoxDomain.ball(np.zeros(2), 1.0))
        jac = jacobian_interval_bounds(net, intervals, row=0)
        for piece in jac:
            np.testing.assert_allclose(piece.L, 0.0)
            np.testing.assert_allclose(piece.U, 0.0)

    def test_entry_bounds_contain_sampled_jacobians(self):
        rng = np.random.default_rng(31)
        for _ in range(25):
            dims = [3, 6, 5, 2]
            net = random_net(rng, dims, bscale=0.3)
            box = BoxDomain.ball(rng.normal(size=3), 0.2)
            intervals = preactivation_bounds(net, box)
            per_row = [jacobian_interval_bounds(net, intervals, r) for r in range(2)]
            from lipcert import jacobian_at
            for x in rng.uniform(box.lo, box.hi, size=(50, 3)):
                jac = jacobian_at(net, x)
                for r in range(2):
                    assert np.all(jac[r] >= per_row[r][0].L - 1e-9)
                    assert np.all(jac[r] <= per_row[r][0].U + 1e-9)


class TestLipschitzUpperBound:
    def test_all_stable_net_exact_in_linear_and_interval(self):
        net = make_net(([[1.0, 1.0], [1.0, -1.0]], [5.0, 5.0]), ([[2.0, 1.0]], [0.0]))
        box = BoxDomain.ball(np.zeros(2), 0.01)
        # ||W2 W1||_inf = ||[3, 1]||_1 = 4, naive = 3 * 2 = 6
        assert lipschitz_upper_bound(net, box, "linear").bound == pytest.approx(4.0, abs=1e-9)
        assert lipschitz_upper_bound(net, box, "interval").bound == pytest.approx(4.0, abs=1e-9)
        assert lipschitz_upper_bound(net, box, "naive").bound == pytest.approx(6.0)

    def test_single_unstable_toy_is_exact(self, toy_unstable):
        net, box = toy_unstable
        expected = delta_extreme_norm(net, [([0.0],), ([1.0],)])
        assert expected == 1.0
        assert lipschitz_upper_bound(net, box, "linear").bound == pytest.approx(1.0, abs=1e-12)

    def test_zero_network(self):
        net = make_net(([[0.0, 0.0]], [0.0]), ([[0.0]], [0.0]))
        box = BoxDomain.ball(np.zeros(2), 1.0)
        for mode in ("linear", "interval", "naive"):
            assert lipschitz_upper_bound(net, box, mode).bound == pytest.approx(0.0, abs=1e-12)

    def test_zero_width_box_equals_pointwise_jacobian_norm(self):
        rng = np.random.default_rng(32)
        for _ in range(20):
            net = random_net(rng, [4, 7, 6, 3], bscale=0.3)
            x0 = rng.normal(size=4)
            from lipcert import forward
            _, pre = forward(net, x0)
            if min(np.min(np.abs(z)) for z in pre) < 1e-6:
                continue
            box = BoxDomain(x0, x0)
            for mode in ("linear", "interval"):
                got = lipschitz_upper_bound(net, box, mode).bound
                assert got == pytest.approx(jac_norm(net, x0), abs=1e-9)

    def test_dominance_chain_on_random_nets(self):
        rng = np.random.default_rng(33)
        for _ in range(60):
            n_layers = int(rng.integers(1, 5))
            dims = [int(rng.integers(2, 10)) for _ in range(n_layers + 1)]
            net = random_net(rng, dims, wscale=float(rng.uniform(0.5, 2.0)), bscale=0.3)
            box = BoxDomain.ball(rng.normal(size=dims[0]), float(rng.uniform(0.01, 0.5)))
            linear = lipschitz_upper_bound(net, box, "linear").bound
            interval = lipschitz_upper_bound(net, box, "interval").bound
            naive = lipschitz_upper_bound(net, box, "naive").bound
            assert linear <= interval + 1e-9
            assert interval <= naive + 1e-9

    def test_sound_against_sampled_gradients(self):
        rng = np.random.default_rng(34)
        for _ in range(20):
            dims = [4, 8, 8, 3]
            net = random_net(rng, dims, bscale=0.3)
            box = BoxDomain.ball(rng.normal(size=4), 0.2)
            bound = lipschitz_upper_bound(net, box, "linear").bound
            sample = sample_lower_bound(net, box, n_samples=500, seed=int(rng.integers(1 << 30)))
            assert sample.lower_bound <= bound + 1e-9

    def test_row_aggregation_is_max(self):
        rng = np.random.default_rng(35)
        net = random_net(rng, [3, 6, 4], bscale=0.3)
        box = BoxDomain.ball(np.zeros(3), 0.2)
        report = lipschitz_upper_bound(net, box, "linear")
        assert report.bound == pytest.approx(np.max(report.row_bounds))
        assert report.argmax_row == int(np.argmax(report.row_bounds))
        assert np.all(report.row_bounds >= -1e-12)
        assert np.isfinite(report.row_bounds).all()

    def test_interval_mode_matches_recurjac_reference(self):
        rng = np.random.default_rng(36)
        for trial in range(30):
            n_layers = int(rng.integers(2, 4))
            dims = [int(rng.integers(2, 8)) for _ in range(n_layers + 1)]
            net = random_net(rng, dims, wscale=float(rng.uniform(0.5, 2.0)), bscale=0.3)
            box = BoxDomain.ball(rng.normal(size=dims[0]), float(rng.uniform(0.05, 0.4)))
            got = lipschitz_upper_bound(net, box, "interval").bound
            want = recurjac_reference(net, box)
            assert got == pytest.approx(want, abs=1e-9)

    def test_rejects_unknown_mode(self):
        net = make_net(([[1.0]], [0.0]))
        with pytest.raises(ValueError):
            lipschitz_upper_bound(net, BoxDomain.ball(np.zeros(1), 0.1), "exact")


class TestJacobianEntryBounds:
    def test_all_stable_gives_exact_product(self):
        net = make_net(([[1.0, 1.0], [1.0, -1.0]], [5.0, 5.0]), ([[2.0, 1.0], [0.0, 1.0]], [0.0, 0.0]))
        box = BoxDomain.ball(np.zeros(2), 0.01)
        lo, hi = jacobian_entry_bounds(net, box)
        product = net.layers[1].weight @ net.layers[0].weight
        np.testing.assert_allclose(lo, product, atol=1e-12)
        np.testing.assert_allclose(hi, product, atol=1e-12)

    def test_nonnegative_weights_give_nonnegative_lower(self):
        rng = np.random.default_rng(41)
        for _ in range(10):
            layers = []
            dims = [3, 5, 4, 2]
            for i in range(3):
                layers.append(AffineLayer(
                    rng.uniform(0.05, 1.0, size=(dims[i + 1], dims[i])),
                    rng.uniform(0.0, 0.5, size=dims[i + 1]),
                ))
            net = Network(tuple(layers))
            box = BoxDomain.ball(rng.uniform(0.0, 1.0, size=3), 0.3)
            lo, hi = jacobian_entry_bounds(net, box)
            assert np.all(lo >= -1e-12)
            # sampled Jacobians stay inside
            from lipcert import jacobian_at
            for x in rng.uniform(box.lo, box.hi, size=(30, 3)):
                jac = jacobian_at(net, x)
                assert np.all(jac >= lo - 1e-9)
                assert np.all(jac <= hi + 1e-9)

    def test_negating_last_layer_mirrors_bounds(self):
        rng = np.random.default_rng(42)
        net = random_net(rng, [3, 6, 2], bscale=0.3)
        flipped = Network((
            net.layers[0],
            AffineLayer(-net.layers[1].weight, -net.layers[1].bias),
        ))
        box = BoxDomain.ball(rng.normal(size=3), 0.2)
        lo, hi = jacobian_entry_bounds(net, box)
        lo2, hi2 = jacobian_entry_bounds(flipped, box)
        np.testing.assert_allclose(lo2, -hi, atol=1e-12)
        np.testing.assert_allclose(hi2, -lo, atol=1e-12)
