import numpy as np
import pytest

from turingpinn.acceptance import brute_force_loss, gradient_errors, toy_problem
from turingpinn.core import GridSpec, ParameterError, Pattern, RDParams, params_for_pattern
from turingpinn.nn import Mlp, TrainableSet
from turingpinn.pinn import (N_BC, N_F, W_F, LossBreakdown, NonFiniteLossError, PointSets, backprop, build_point_sets,
                             field_residual, loss, residual, residual_terms, stencil_points)
from turingpinn.solver import SolverConfig, run_to_steady_state

ZERO = RDParams(d1=0.0, d2=0.0, alpha=0.0, beta=1.0, r1=0.0, r2=0.0)


def _zero_pattern(n=5):
    g = GridSpec(n, n, -2.0, 2.0, -2.0, 2.0)
    return Pattern(g, np.zeros(g.shape), np.zeros(g.shape))


def test_defaults():
    assert (N_F, N_BC, W_F) == (2500, 200, 10.0)


def test_point_sets_use_every_node_and_edge_boundaries():
    g = GridSpec()
    pat = Pattern(g, np.zeros(g.shape), np.zeros(g.shape))
    sets = build_point_sets(pat)
    assert sets.n_h == sets.n_f == 2500 and sets.n_bc == 200
    bx, by = sets.boundary_points.T
    on_edge = np.isclose(np.abs(bx), 30.0) | np.isclose(np.abs(by), 30.0)
    assert on_edge.all()
    sub = build_point_sets(pat, n_h=100, n_f=300)
    assert sub.n_h == 100 and sub.n_f == 300


def test_stencil_order():
    pts = stencil_points(np.array([[1.0, 2.0]]), (0.5, 0.25))
    np.testing.assert_array_equal(pts, [[1, 2], [1.5, 2], [0.5, 2], [1, 2.25], [1, 1.75]])


def test_zero_network_zero_pattern_zero_params_gives_zero_loss():
    pat = _zero_pattern()
    ts = TrainableSet.create(Mlp((2, 3, 2), input_lo=(-2, -2), input_hi=(2, 2)), ZERO, [True] * 5)
    br, _ = loss(ts, build_point_sets(pat, n_bc=8))
    assert (br.mse_h, br.mse_f, br.mse_bc, br.total) == (0.0, 0.0, 0.0, 0.0)


def test_constant_prediction_against_zero_pattern():
    c = 0.37
    net = Mlp((2, 3, 2), input_lo=(-2, -2), input_hi=(2, 2))
    net.biases[-1][...] = c
    ts = TrainableSet.create(net, ZERO, [True] * 5)
    br, _ = loss(ts, build_point_sets(_zero_pattern(), n_bc=8))
    assert br.mse_h == pytest.approx(c * c, rel=1e-15)
    # constant fields: zero Laplacian, f_u = v, f_v = beta*v
    assert br.mse_f == pytest.approx(2 * c * c, rel=1e-15)


def test_loss_terms_match_brute_force_and_total_is_exact():
    for seed in range(3):
        ts, sets = toy_problem(seed)
        br, _ = loss(ts, sets)
        for got, want in zip((br.mse_h, br.mse_f, br.mse_bc), brute_force_loss(ts, sets)):
            assert got == pytest.approx(want, rel=1e-12)
        parts = br.mse_h + W_F * br.mse_f + br.mse_bc
        assert abs(br.total - parts) <= 1e-12 * parts


def test_batched_loss_matches_brute_force_on_subsets():
    ts, sets = toy_problem(0)
    idx = np.array([3, 7, 11, 20])
    br, _ = loss(ts, sets, data_idx=idx, colloc_idx=idx, shared=True, include_bc=False)
    sub = PointSets(sets.data_points[idx], sets.data_targets[idx], sets.collocation_points[idx],
                    sets.boundary_points, sets.stencil_h)
    mse_h, mse_f, _ = brute_force_loss(ts, sub)
    assert br.mse_h == pytest.approx(mse_h, rel=1e-12)
    assert br.mse_f == pytest.approx(mse_f, rel=1e-12)
    assert br.mse_bc == 0.0


@pytest.mark.parametrize("seed,layers", [(0, (2, 8, 8, 2)), (1, (2, 2, 2, 2)), (2, (2, 5, 2))])
def test_full_loss_gradient_matches_finite_differences(seed, layers):
    ts, sets = toy_problem(seed, layers)
    assert gradient_errors(ts, sets).max() < 1e-5


def test_shared_batch_gradient_matches_finite_differences():
    ts, sets = toy_problem(4)
    idx = np.array([0, 5, 12, 24])
    kw = dict(data_idx=idx, colloc_idx=idx, shared=True)
    _, graph = loss(ts, sets, **kw)
    grad = backprop(ts, graph)
    step = 1e-6
    for i in list(range(0, ts.n_net, 7)) + list(range(ts.n_net, ts.theta.size)):
        keep = ts.theta[i]
        ts.theta[i] = keep + step
        up = loss(ts, sets, **kw)[0].total
        ts.theta[i] = keep - step
        down = loss(ts, sets, **kw)[0].total
        ts.theta[i] = keep
        fd = (up - down) / (2 * step)
        assert abs(grad[i] - fd) / max(abs(grad[i]), abs(fd), 1e-8) < 1e-5


def test_d1_gradient_vanishes_when_network_laplacian_is_zero():
    # an affine network has zero stencil Laplacian; D1 only multiplies the Laplacian
    net = Mlp((2, 2), input_lo=(-2, -2), input_hi=(2, 2))
    net.weights[0][...] = [[0.3, -0.2], [0.1, 0.4]]
    net.biases[0][...] = [0.05, -0.1]
    ts = TrainableSet.create(net, params_for_pattern("P"), [True] * 5)
    ts_sets = build_point_sets(_zero_pattern(), n_bc=8)
    _, graph = loss(ts, ts_sets)
    assert abs(backprop(ts, graph)[ts.n_net]) < 1e-15


def test_masked_parameter_gradients_are_zero():
    ts, sets = toy_problem(0)
    ts = TrainableSet.create(ts.net, ts.params, [False, True, False, True, False])
    _, graph = loss(ts, sets)
    g = backprop(ts, graph)[ts.n_net:]
    assert g[0] == g[2] == g[4] == 0.0 and g[1] != 0.0 and g[3] != 0.0


def test_residual_terms_need_nonzero_beta():
    class Raw:
        d1 = d2 = alpha = r1 = r2 = gamma = 1.0
        beta = 0.0
    with pytest.raises(ParameterError):
        residual_terms(1.0, 1.0, 0.0, 0.0, Raw())


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_names_component():
    ts, sets = toy_problem(0)
    ts.net.biases[-1][0] = np.inf
    with pytest.raises(NonFiniteLossError, match="mse"):
        loss(ts, sets)


def test_negative_weight_rejected():
    ts, sets = toy_problem(0)
    with pytest.raises(ValueError):
        loss(ts, sets, w_f=-1.0)


def test_pointwise_residual_matches_loss_blocks():
    ts, sets = toy_problem(1)
    x, y = sets.collocation_points[6]
    fu, fv = residual(ts.net, ts.params, x, y, sets.stencil_h)
    _, graph = loss(ts, sets)
    blk = graph.blocks[0]
    assert fu == pytest.approx(blk.f_u[6], rel=1e-12) and fv == pytest.approx(blk.f_v[6], rel=1e-12)


def test_loss_breakdown_total():
    br = LossBreakdown(1.0, 2.0, 3.0, 10.0)
    assert br.total == 24.0 and br.as_dict()["total"] == 24.0


def test_converged_pattern_has_small_field_residual():
    g = GridSpec(16, 16, -9.0, 9.0, -9.0, 9.0)
    p = params_for_pattern("P")
    cfg = SolverConfig.for_problem(p, g, steady_tol=1e-7)
    res = run_to_steady_state(p, g, cfg)
    assert res.converged
    fu, fv = field_residual(res.pattern, p)
    assert float(np.mean(fu ** 2 + fv ** 2)) <= cfg.steady_tol ** 2
