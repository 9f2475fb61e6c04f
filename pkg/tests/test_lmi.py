import dataclasses
import json

import numpy as np
import pytest

from chpctl import lmi
from chpctl.dhs import closed_loop
from chpctl.model import assemble
from conftest import hinf_congruence, passivity_congruence


def random_point(rng, d):
    n, m = d.n, d.m
    Q = rng.normal(size=(n, n))
    X = Q @ Q.T + 0.1 * np.eye(n)
    Y = rng.normal(size=(m, n))
    return X, Y, float(rng.uniform(1e-3, 1.0)), float(rng.uniform(0.1, 10.0)), float(rng.uniform(0.1, 10.0))


def lmi_data(cfg, scaled=True):
    cm = assemble(cfg)
    d = lmi.LmiData.from_coupled(cm)
    return lmi.default_scaling(cfg, cm).apply(d) if scaled else d


@pytest.mark.parametrize("scaled", [False, True])
def test_congruence_identities(toy, scaled):
    d = lmi_data(toy, scaled)
    w = lmi.WeightFilter(toy.weights.cutoff, toy.weights.alpha)
    rng = np.random.default_rng(11)
    for _ in range(20):
        X, Y, rho, q_w, g2 = random_point(rng, d)
        a, b = passivity_congruence(d, X, Y, rho)
        assert np.max(np.abs(a - b)) <= 1e-10 * max(1.0, np.max(np.abs(b)))
        a, b = hinf_congruence(d, w, X, Y, q_w, g2)
        assert np.max(np.abs(a - b)) <= 1e-10 * max(1.0, np.max(np.abs(b)))


def test_open_loop_passivity_block(toy):
    d = lmi_data(toy, scaled=False)
    L = lmi.passivity_lmi(d, np.eye(d.n), np.zeros((d.m, d.n)), 0.1)
    np.testing.assert_array_equal(L[: d.n, : d.n], d.A + d.A.T)
    assert lmi.max_eig(L) >= 0


def test_gamma_block(toy):
    d = lmi_data(toy)
    w = lmi.WeightFilter(toy.weights.cutoff, toy.weights.alpha)
    X, Y, _, q_w, _ = random_point(np.random.default_rng(0), d)
    L = lmi.hinf_lmi(d, w, X, Y, q_w, 3.7)
    np.testing.assert_array_equal(L[-d.p:, -d.p:], -3.7 * np.eye(d.p))


def test_weight_filter(toy):
    w = lmi.WeightFilter(0.02, 0.01)
    assert w.response(0.0) == 0.01
    assert w.response(1e12) == pytest.approx(1.01, rel=1e-9)
    # realization: the weighted channel at s equals W(s) times the port's strictly proper part
    cm = assemble(toy)
    d = lmi.LmiData.from_coupled(cm)
    K = np.random.default_rng(2).normal(size=(d.m, d.n)) * 1e-6
    A_lp, B_lp, C_lp = w.realization(d, K)
    Acl, Cy = d.A - d.B @ K, d.SC - d.SD @ K
    s = 0.3j
    G = Cy @ np.linalg.solve(s * np.eye(d.n) - Acl, d.Bw)
    Z = C_lp @ np.linalg.solve(s * np.eye(A_lp.shape[0]) - A_lp, B_lp)
    np.testing.assert_allclose(Z, w.response(s) * G, rtol=1e-9)


def test_hinf_norm_textbook():
    assert lmi.hinf_norm([[-1.0]], [[1.0]], [[1.0]]) == pytest.approx(1.0, rel=1e-6)
    assert lmi.hinf_norm([[-1.0]], [[2.0]], [[1.0]]) == pytest.approx(2.0, rel=1e-6)
    # lightly damped resonance: peak 1 / (2 zeta sqrt(1 - zeta^2)) at w_n = 1
    z = 0.05
    A = [[0, 1], [-1, -2 * z]]
    assert lmi.hinf_norm(A, [[0], [1]], [[1, 0]]) == pytest.approx(1 / (2 * z * np.sqrt(1 - z * z)), rel=1e-6)
    with pytest.raises(ValueError, match="Hurwitz"):
        lmi.hinf_norm([[0.1]], [[1.0]], [[1.0]])


def test_hinf_norm_feedthrough():
    assert lmi.hinf_norm([[-1.0]], [[1.0]], [[-2.0]], [[1.0]]) == pytest.approx(1.0, rel=1e-6)


def test_toy_joint_certificates(toy, toy_joint):
    rep = lmi.verify_certificates(toy_joint, assemble(toy))
    assert rep.passed, rep.checks
    assert rep.lmi_passivity <= -toy.weights.eps
    assert rep.lmi_hinf <= -toy.weights.eps
    assert rep.min_eig_X > toy.weights.eps
    assert rep.dc_deviation <= 1e-6
    assert rep.pr_margin >= 0
    assert rep.hinf_weighted <= toy_joint.gamma * 1.01


def test_decay_certified(toy, toy_joint):
    assert closed_loop(assemble(toy), toy_joint.K).abscissa <= -toy.weights.decay * (1 - 1e-6)


def test_toy_baseline(toy, toy_baseline):
    cm = assemble(toy)
    rep = lmi.verify_certificates(toy_baseline, cm)
    assert rep.passed, rep.checks
    assert toy_baseline.gamma is None
    assert toy_baseline.rho == pytest.approx(toy.weights.rho_max, rel=1e-3)


def test_decoupled_case(toy):
    cfg = toy.with_gains(0.0, 0.0)
    res = lmi.synthesize(cfg, "joint")
    cm = assemble(cfg)
    assert not cm.B_cl_w.any()
    # the channel vanishes; only the strictness margin keeps gamma off zero
    assert res.gamma <= 10 * res.scaling.output * np.sqrt(cfg.weights.eps)
    assert closed_loop(cm, res.K).abscissa < 0
    rep = lmi.verify_certificates(res, cm)
    assert rep.hinf_weighted == 0.0
    assert rep.passed, rep.checks


def test_baseline_without_electrical_gain(toy):
    cfg = toy.with_gains(0.0, 0.6)
    res = lmi.synthesize(cfg, "passivity-only")
    assert lmi.verify_certificates(res, assemble(cfg)).passed


def test_absurd_margin_infeasible(toy):
    with pytest.raises(lmi.InfeasibleError):
        lmi.synthesize(toy.with_weights(eps=1e6), "joint")


def test_zero_gain_not_hurwitz(toy, toy_joint):
    zero = dataclasses.replace(toy_joint, K=np.zeros_like(toy_joint.K))
    rep = lmi.verify_certificates(zero, assemble(toy))
    assert not rep.hurwitz
    assert not rep.passed


def test_weighted_channel_norm_against_sweep(toy, toy_joint):
    cm = assemble(toy)
    w = lmi.WeightFilter(toy.weights.cutoff, toy.weights.alpha)
    A, B, C = lmi.weighted_channel(lmi.LmiData.from_coupled(cm), w, toy_joint.K)
    norm = lmi.hinf_norm(A, B, C)
    grid = np.logspace(-6, 3, 10_000)
    n = A.shape[0]
    sweep = max(np.linalg.svd(C @ np.linalg.solve(1j * x * np.eye(n) - A, B), compute_uv=False)[0] for x in grid)
    assert norm >= sweep * (1 - 1e-6)
    assert abs(norm - sweep) <= 1e-4 * norm


def test_gamma_monotone_in_cutoff(toy):
    gammas = [lmi.synthesize(toy.with_weights(cutoff=c), "joint").gamma for c in (0.005, 0.02, 0.08)]
    # a wider exemption band can only lower the optimum; allow the solver's relative gap
    assert gammas[1] <= gammas[0] * (1 + 1e-3)
    assert gammas[2] <= gammas[1] * (1 + 1e-3)


def test_bisection_fallback_agrees(toy, toy_joint):
    res = lmi.solve_joint_bisection(toy, rtol=1e-3)
    assert res.gamma == pytest.approx(toy_joint.gamma, rel=2e-2)
    assert closed_loop(assemble(toy), res.K).abscissa < 0


def test_result_round_trip(toy_joint):
    back = lmi.SynthesisResult.from_dict(json.loads(toy_joint.dumps()))
    np.testing.assert_array_equal(back.K, toy_joint.K)
    np.testing.assert_array_equal(back.X, toy_joint.X)
    assert back.gamma == toy_joint.gamma
    assert back.weights == toy_joint.weights


def test_gain_recovery(toy_joint):
    K_scaled = toy_joint.Y @ np.linalg.inv(toy_joint.X)
    np.testing.assert_allclose(toy_joint.K_scaled, K_scaled, rtol=1e-8, atol=1e-14)


def test_unknown_mode(toy):
    with pytest.raises(ValueError):
        lmi.synthesize(toy, "robust")
