import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chpctl import config, netgen
from chpctl.model import assemble, build_dhs_matrices, build_error_maps, build_kirchhoff, layout


def test_minimal_ring_dimensions(minimal):
    lay = layout(minimal)
    assert lay.n_e == 2
    assert len(lay.nodes) == 2


def test_two_reference_buses_rejected(toy):
    buses = tuple(dataclasses.replace(b, is_reference=True) if b.id <= 2 else b for b in toy.buses)
    with pytest.raises(config.ConfigError, match="reference"):
        config.validate(dataclasses.replace(toy, buses=buses))


def test_hydraulic_imbalance_names_node(toy):
    raw = toy.to_dict()
    raw["dhs"]["edges"][0]["flow"] *= 1.5
    with pytest.raises(config.ConfigError, match=r"node \d+ hydraulic imbalance"):
        config.from_dict(raw)


def test_parse_error():
    with pytest.raises(config.ConfigError, match="parse error"):
        config.loads("eps: [unclosed")


def test_unknown_key_rejected(toy):
    raw = toy.to_dict()
    raw["constants"]["gravity"] = 9.81
    with pytest.raises(config.ConfigError, match="unknown keys"):
        config.from_dict(raw)


def test_ring33_heat_pumps():
    cfg = netgen.gen_network(33, "ring", 7)
    assert sorted(hp.bus for hp in cfg.heat_pumps) == [1, 32, 33]
    assert sorted(hp.edge for hp in cfg.heat_pumps) == [1, 32, 33]
    assert layout(cfg).n_hp == 3


def test_minimal_ring_kirchhoff(minimal):
    A_h, vol = build_kirchhoff(minimal)
    expect = np.array([[1, 0, -1, 0], [0, 1, 0, -1], [0, -1, 1, 0], [-1, 0, 0, 1]], dtype=float)
    np.testing.assert_array_equal(A_h, expect)
    np.testing.assert_array_equal(vol, np.ones(4))


@settings(max_examples=30, deadline=None)
@given(size=st.integers(2, 33), topology=st.sampled_from(["ring", "radial"]), seed=st.integers(0, 10_000))
def test_kirchhoff_zero_sums(size, topology, seed):
    cfg = netgen.gen_network(size, topology, seed)
    A_h, _ = build_kirchhoff(cfg)
    norm = np.linalg.norm(A_h)
    assert np.max(np.abs(A_h.sum(axis=1))) <= 1e-12 * norm
    assert np.max(np.abs(A_h.sum(axis=0))) <= 1e-12 * norm


def test_doubling_flow_doubles_kirchhoff(toy):
    doubled = dataclasses.replace(toy, edges=tuple(dataclasses.replace(e, flow=2 * e.flow) for e in toy.edges))
    np.testing.assert_allclose(build_kirchhoff(doubled)[0], 2 * build_kirchhoff(toy)[0], rtol=0, atol=1e-15)


def test_two_source_marginal_map(toy):
    lay = layout(toy)
    costs = dataclasses.replace(toy.costs, source_cost={lay.source_edges[0]: 1.0, lay.source_edges[1]: 2.0})
    *_, F_M, _ = build_error_maps(dataclasses.replace(toy, costs=costs))
    np.testing.assert_array_equal(F_M, [[1.0, -2.0]])


def test_single_source_error_map(minimal):
    C, D, s_T, F_M, F_D = build_error_maps(minimal)
    assert F_M.shape == (0, 1)
    assert C.shape == (1, 4)
    np.testing.assert_array_equal(s_T, [[1.0]])
    # F^D = I and T = 1 give Sig^H = number of thermal states
    assert (C @ np.ones(4))[-1] == 4.0


def test_decoupled_thermal_feedback(toy):
    cm = assemble(toy.with_gains(gain_h=0.0))
    assert not cm.B_s.any()
    np.testing.assert_array_equal(cm.A_e, -cm.dm.A)
    np.testing.assert_array_equal(cm.B_e, cm.dm.B1)


def test_no_frequency_input(toy):
    assert not assemble(toy.with_gains(gain_e=0.0)).B_w.any()


def test_frequency_input_column(toy):
    cm = assemble(toy.with_gains(0.6, 0.6))
    np.testing.assert_allclose(cm.B_w[:, 0], 1.8 * cm.dm.B2[:, 0], rtol=1e-15)


def test_coupled_block_identities(toy):
    cm = assemble(toy)
    dm = cm.dm
    n_x, n_g = dm.layout.n_x, dm.layout.n_g
    ones = np.ones((cm.n_hp, 1))
    np.testing.assert_allclose(cm.A_e, -dm.A + cm.B_s @ dm.C)
    np.testing.assert_allclose(cm.B_e, dm.B1 + cm.B_s @ dm.D)
    np.testing.assert_allclose(cm.B_s, dm.B2 @ cm.cop @ cm.gamma_h @ ones @ dm.s_T)
    np.testing.assert_array_equal(cm.A_aug[:n_x, n_x:], 0)
    np.testing.assert_array_equal(cm.A_aug[n_x:, :n_x], dm.C)
    np.testing.assert_array_equal(cm.B_aug[n_x:], dm.D)
    np.testing.assert_allclose(cm.S_D, cm.gamma_h @ ones @ dm.s_T @ dm.D)
    assert cm.A_aug.shape == (n_x + n_g, n_x + n_g)


def test_volume_scaled_selectors(toy):
    dm = build_dhs_matrices(toy)
    rcp = toy.constants.rho * toy.constants.cp
    n_g = dm.layout.n_g
    np.testing.assert_allclose(np.diag(dm.B1[:n_g]), 1 / (rcp * dm.volumes[:n_g]))
    np.testing.assert_allclose(dm.A, dm.A_h / dm.volumes[:, None])


def test_round_trip_bit_identical(tmp_path):
    cfg = netgen.gen_network(12, "radial", 3)
    path = tmp_path / "net.yaml"
    config.save_config(cfg, path)
    back = config.load_config(path)
    assert back == cfg
    a, b = assemble(cfg), assemble(back)
    for name in ("A_aug", "B_aug", "B_cl_w", "S_C", "S_D"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_augmented_kernel(toy):
    # nullity(A_aug) = n_G integrator directions + directions with A_e x = 0 and C x = 0
    for gains in [(0.0, 0.0), (0.6, 0.6)]:
        cm = assemble(toy.with_gains(*gains))
        n_aug, n_g = cm.n_aug, cm.n_g
        stacked = np.vstack([cm.A_e, cm.dm.C])
        nullity_aug = n_aug - np.linalg.matrix_rank(cm.A_aug)
        assert nullity_aug == n_g + (stacked.shape[1] - np.linalg.matrix_rank(stacked))
        ev = np.linalg.eigvals(cm.A_aug)
        assert np.sum(np.abs(ev) < 1e-9) >= n_g


def test_gen_network_errors():
    with pytest.raises(config.ConfigError):
        netgen.gen_network(1)
    with pytest.raises(config.ConfigError):
        netgen.gen_network(5, "mesh")
