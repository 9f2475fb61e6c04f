import dataclasses

import numpy as np
import pytest
from scipy.linalg import expm

from chpctl import dhs, dispatch
from chpctl.model import assemble, build_dhs_matrices, layout
from conftest import rk4, scalar_thermal_rhs


def test_scalar_matches_matrix(toy):
    lay = layout(toy)
    cm = assemble(toy)
    dm = cm.dm
    keys = [("e", j) for j in lay.edges] + [("n", k) for k in lay.nodes]
    h_src = {j: 1.0e5 * (i + 1) for i, j in enumerate(lay.source_edges)}
    h_hp = {j: 0.05 for j in lay.hp_edges}
    h_load = {j: 2.0e5 for j in lay.load_edges}
    scalar = scalar_thermal_rhs(toy, h_src, h_hp, h_load)
    hG = np.array([h_src[j] for j in lay.source_edges])
    hP = np.array([h_hp[j] for j in lay.hp_edges])
    hL = np.array([h_load[j] for j in lay.load_edges])

    def f_scalar(t, y):
        d = scalar(dict(zip(keys, y)))
        return np.array([d[k] for k in keys])

    def f_matrix(t, y):
        return -dm.A @ y + dm.B1 @ hG + dm.B2 @ hP + dm.W_L @ hL

    y0 = np.random.default_rng(3).normal(size=lay.n_x)
    np.testing.assert_allclose(f_matrix(0, y0), f_scalar(0, y0), rtol=1e-12, atol=1e-14)
    a = rk4(f_scalar, y0, 0.05, 2000)
    b = rk4(f_matrix, y0, 0.05, 2000)
    assert np.linalg.norm(a - b) <= 1e-10 * np.linalg.norm(a)


def test_zero_field(toy):
    cm = assemble(toy)
    out = dhs.dhs_derivative(cm, np.zeros(cm.n_aug), np.zeros(cm.n_g), np.zeros(cm.n_hp), np.zeros(cm.dm.layout.n_x))
    assert not out.any()


def test_dispatch_point_is_equilibrium(toy):
    cm = assemble(toy)
    dm = cm.dm
    w_h = dm.heat_to_w(1.0e5 * dm.load_shares)
    sol = dispatch.solve_dispatch(dm, None, w_h)
    x = np.concatenate([sol.T, np.zeros(cm.n_g)])
    d = dhs.dhs_derivative(cm, x, sol.h_g, np.zeros(cm.n_hp), w_h)
    assert np.max(np.abs(d)) <= 1e-12 * np.max(np.abs(sol.T))
    e, sig = dhs.error_signal(dm, sol.T, sol.h_g)
    assert np.max(np.abs(e)) < 1e-12


def test_thermal_feedback_term(toy):
    cm6 = assemble(toy.with_gains(0.6, 0.6))
    cm0 = assemble(toy.with_gains(0.6, 0.0))
    dm = cm6.dm
    pen = np.diag(dm.F_D)
    T = pen / (pen @ pen)  # Sig^H = 1
    x = np.concatenate([T, np.zeros(cm6.n_g)])
    zero = (np.zeros(cm6.n_g), np.zeros(cm6.n_hp), np.zeros(dm.layout.n_x))
    diff = dhs.dhs_derivative(cm6, x, *zero) - dhs.dhs_derivative(cm0, x, *zero)
    r = dm.layout.n_g  # first heat-pump edge
    hp = toy.heat_pumps[0]
    rcp = toy.constants.rho * toy.constants.cp
    expect = hp.cop * 0.6 * toy.constants.power_base / (rcp * dm.volumes[r])
    assert diff[r] == pytest.approx(expect, rel=1e-12)
    diff[r] = 0.0
    assert np.max(np.abs(diff)) == 0.0


def test_output_pH(toy, toy_joint):
    cm = assemble(toy)
    w = np.array([0.01])
    K = toy_joint.K
    np.testing.assert_allclose(dhs.output_pH(cm, np.zeros(cm.n_aug), w, K), cm.gamma_e @ w)
    x = np.random.default_rng(0).normal(size=cm.n_aug)
    np.testing.assert_allclose(dhs.output_pH(cm, x, w, np.zeros_like(K)), cm.gamma_e @ w + cm.S_C @ x)
    cz = assemble(toy.with_gains(0.0, 0.0))
    assert not dhs.output_pH(cz, x, w, K).any()


def test_error_signal_examples(minimal, toy):
    dm = build_dhs_matrices(minimal)  # F^D = I
    _, sig = dhs.error_signal(dm, np.array([1.0, -1.0, 0.0, 0.0]), np.zeros(1))
    assert sig == 0.0

    lay = layout(toy)
    costs = dataclasses.replace(toy.costs, source_cost={lay.source_edges[0]: 1.0, lay.source_edges[1]: 2.0})
    dm2 = build_dhs_matrices(dataclasses.replace(toy, costs=costs))
    e, _ = dhs.error_signal(dm2, np.zeros(lay.n_x), np.array([2.0, 1.0]))
    assert e[0] == 0.0


def test_open_loop_with_zero_gain(toy):
    cm = assemble(toy)
    clp = dhs.closed_loop(cm, np.zeros((cm.n_g, cm.n_aug)))
    np.testing.assert_array_equal(clp.A_cl, cm.A_aug)
    assert clp.abscissa >= -1e-12


def test_blockwise_closed_loop(toy):
    cm = assemble(toy)
    K = np.random.default_rng(1).normal(size=(cm.n_g, cm.n_aug))
    clp = dhs.closed_loop(cm, K)
    np.testing.assert_allclose(clp.A_cl, cm.A_aug - cm.B_aug @ K, rtol=1e-13, atol=1e-16)
    np.testing.assert_allclose(clp.C_y, cm.S_C - cm.S_D @ K)
    with pytest.raises(ValueError):
        dhs.closed_loop(cm, K[:, :-1])


def test_synthesized_gain_is_stabilizing(toy, toy_joint, toy_baseline):
    cm = assemble(toy)
    assert dhs.closed_loop(cm, toy_joint.K).abscissa < 0
    assert dhs.closed_loop(cm, toy_baseline.K).abscissa < 0


def _response(clp, x0, omega, w_h, t):
    xs = dhs.equilibrium(clp, omega, w_h)
    return xs + expm(clp.A_cl * t) @ (x0 - xs), xs


def test_error_converges(toy, toy_joint):
    cm = assemble(toy)
    K = toy_joint.K
    clp = dhs.closed_loop(cm, K)
    n_x = cm.dm.layout.n_x
    rng = np.random.default_rng(5)
    x0 = rng.normal(size=cm.n_aug)
    omega = np.array([2e-3])
    w_h = cm.dm.heat_to_w(1.0e5 * cm.dm.load_shares)
    t_f = 20.0 / abs(clp.abscissa)

    def err(x):
        return dhs.error_signal(cm.dm, x[:n_x], -K @ x)[0]

    x_f, xs = _response(clp, x0, omega, w_h, t_f)
    assert np.linalg.norm(err(x_f)) <= 1e-8 * np.linalg.norm(err(x0))
    assert np.max(np.abs(err(xs))) <= 1e-12 * np.max(np.abs(xs))


def test_equilibrium_matches_simulation(toy, toy_joint):
    cm = assemble(toy)
    clp = dhs.closed_loop(cm, toy_joint.K)
    omega = np.array([-1e-3])
    w_h = cm.dm.heat_to_w(1.0e5 * cm.dm.load_shares)
    xs = dhs.equilibrium(clp, omega, w_h)
    h = 1.0 / np.max(np.abs(np.linalg.eigvals(clp.A_cl)))
    n = int(30.0 / abs(clp.abscissa) / h)
    x_f = rk4(lambda t, x: clp.A_cl @ x + clp.B_w @ omega + clp.B_h @ w_h, np.zeros(cm.n_aug), h, n)
    assert np.linalg.norm(x_f - xs) <= 1e-6 * np.linalg.norm(xs)
