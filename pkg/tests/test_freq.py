import numpy as np
import pytest

from chpctl import freq, lmi, netgen
from chpctl.dhs import ClosedLoopDhs, closed_loop
from chpctl.model import assemble


@pytest.fixture(scope="module")
def clp(toy, toy_joint):
    return closed_loop(assemble(toy), toy_joint.K)


def test_high_frequency_limit(clp):
    np.testing.assert_allclose(freq.transfer_at(clp, 1e9), clp.gamma_e, atol=1e-8)


def test_dc_gain(clp):
    np.testing.assert_allclose(freq.transfer_at(clp, 0.0), clp.gamma_e, atol=1e-6)


def test_conjugate_symmetry(clp):
    for w in (1e-4, 0.03, 2.0):
        np.testing.assert_allclose(freq.transfer_at(clp, -w), np.conj(freq.transfer_at(clp, w)), rtol=1e-12)


def test_resolvent_error_names_eigenvalue(toy):
    cm = assemble(toy)
    open_loop = closed_loop(cm, np.zeros((cm.n_g, cm.n_aug)))
    with pytest.raises(freq.ResolventError, match="eigenvalue"):
        freq.transfer_at(open_loop, 0.0)


def test_single_point_sweep(clp):
    fr = freq.sweep(clp, [0.0])
    assert fr.sigma_max[0] == pytest.approx(np.linalg.svd(clp.gamma_e, compute_uv=False)[0], abs=1e-6)
    assert fr.peak_index is None


def test_certified_margin(clp):
    assert freq.positive_real_margin(clp, freq.default_verification_grid()) >= 0


def test_endpoint_margin():
    # no dynamics: the port is gamma^E at every frequency
    g = 0.6 * np.eye(2)
    c = ClosedLoopDhs(-np.eye(3), np.zeros((2, 3)), np.zeros((3, 2)), np.zeros((3, 3)), g)
    assert freq.positive_real_margin(c, freq.default_verification_grid()) == pytest.approx(0.6)


def test_sign_flipped_gain_detected(toy, toy_joint):
    flipped = closed_loop(assemble(toy), -toy_joint.K)
    assert flipped.abscissa > 0
    assert freq.positive_real_margin(flipped, freq.default_verification_grid()) < 0


def test_partial_fraction_form(clp):
    lam, V = np.linalg.eig(clp.A_cl)
    Vi = np.linalg.inv(V)
    left, right = clp.C_y @ V, Vi @ clp.B_w
    for w in np.logspace(-5, 3, 17):
        G_pf = clp.gamma_e + (left / (1j * w - lam)) @ right
        G = freq.transfer_at(clp, w)
        assert np.linalg.norm(G - G_pf) <= 1e-8 * np.linalg.norm(G)


def test_default_grid():
    g = freq.default_grid()
    assert g.size == 480
    assert np.all(np.diff(g) > 0)
    assert g[0] == pytest.approx(1e-5) and g[-1] == pytest.approx(1e3)
    assert freq.default_verification_grid().size == 400


def test_grid_must_increase(clp):
    with pytest.raises(ValueError):
        freq.sweep(clp, [1.0, 0.5])


def test_csv_rows(clp):
    fr = freq.sweep(clp)
    lines = fr.to_csv().splitlines()
    assert lines[0].split(",")[:4] == ["omega_rad_s", "f_hz", "sigma_max", "pr_margin"]
    assert len(lines) == 481
    assert fr.eigenloci.shape == (480, clp.n_hp)


def _three_hp_loop():
    cfg = netgen.gen_network(8, "ring", 0)
    cm = assemble(cfg)
    K = 1e-3 * np.random.default_rng(4).normal(size=(cm.n_g, cm.n_aug))
    return closed_loop(cm, K)


def test_sigma_invariant_under_reordering():
    c = _three_hp_loop()
    P = np.eye(3)[[2, 0, 1]]
    cp = ClosedLoopDhs(c.A_cl, P @ c.C_y, c.B_w @ P.T, c.B_h, P @ c.gamma_e @ P.T)
    grid = np.logspace(-3, 2, 40)
    np.testing.assert_allclose(freq.sweep(cp, grid).sigma_max, freq.sweep(c, grid).sigma_max, rtol=1e-12)


def test_eigenloci_continuity():
    c = _three_hp_loop()
    fr = freq.sweep(c, np.logspace(-3, 2, 400))
    assert fr.eigenloci.shape == (400, 3)
    # each step is a minimum-total-distance assignment, so never worse than solver order
    raw = np.array([np.linalg.eigvals(G) for G in fr.G])
    for i in range(1, 400):
        matched = np.abs(fr.eigenloci[i] - fr.eigenloci[i - 1]).sum()
        assert matched <= np.abs(raw[i] - fr.eigenloci[i - 1]).sum() + 1e-12


def test_match_eigenvalues():
    prev = np.array([1.0, 2.0, 3.0 + 1j])
    np.testing.assert_array_equal(freq.match_eigenvalues(prev, prev[::-1]), prev)


def test_mid_band_peak():
    grid = 2 * np.pi * np.logspace(-4, 0, 200)
    sigma = 1.0 + np.exp(-np.log(grid / (2 * np.pi * 0.01)) ** 2)
    i = freq.mid_band_peak(grid, sigma)
    assert grid[i] / (2 * np.pi) == pytest.approx(0.01, rel=0.05)
    assert freq.mid_band_peak(grid, -sigma) is None


def test_baseline_margin(toy, toy_baseline):
    c = closed_loop(assemble(toy), toy_baseline.K)
    assert freq.positive_real_margin(c, freq.default_verification_grid()) >= 0
    assert lmi.verify_certificates(toy_baseline, assemble(toy)).dc_deviation <= 1e-6
