import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holobeam.channel import (
    ChannelParams,
    ChannelSet,
    NonPositiveDistance,
    array_response_rx,
    array_response_tx,
    assemble_channel,
    dbm_to_watts,
    load_channel_set,
    path_loss_db,
    sample_channel_set,
    watts_to_dbm,
)
from holobeam.rhs import RhsGeometry

PARAMS = ChannelParams()
LAM = PARAMS.wavelength


@pytest.mark.parametrize("d, loss", [(1.0, 53.22), (10.0, 88.52), (100.0, 123.82)])
def test_path_loss(d, loss):
    assert path_loss_db(d) == pytest.approx(loss, abs=1e-12)


@pytest.mark.parametrize("d", [0.0, -3.0])
def test_path_loss_rejects_nonpositive(d):
    with pytest.raises(NonPositiveDistance):
        path_loss_db(d)


def test_unit_conversions():
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert watts_to_dbm(1e-3) == pytest.approx(0.0)
    # -174 dBm/Hz over 100 MHz is -94 dBm
    assert PARAMS.noise_power == pytest.approx(10 ** (-124 / 10), rel=1e-12)


class TestResponses:
    def test_broadside_tx_is_flat(self):
        g = RhsGeometry(3, 1, LAM)
        np.testing.assert_allclose(array_response_tx(g, 0.7, 0.0), np.full(9, 1 / 3))

    def test_quarter_wavelength_phases(self):
        g = RhsGeometry(2, 1, LAM, element_spacing=LAM / 4)
        a = array_response_tx(g, 0.0, np.pi / 2)
        phases = np.angle(a * 2)
        # along x: m = 0, 1 at m' = 0
        assert phases[g.element_index(0, 0)] == pytest.approx(0.0, abs=1e-12)
        assert phases[g.element_index(1, 0)] == pytest.approx(np.pi / 2, abs=1e-12)
        # no y progression at phi = 0
        assert phases[g.element_index(0, 1)] == pytest.approx(0.0, abs=1e-12)

    def test_rx_examples(self):
        np.testing.assert_allclose(array_response_rx(3, LAM / 2, 0.0, LAM), np.ones(3) / np.sqrt(3))
        np.testing.assert_allclose(array_response_rx(2, LAM / 2, np.pi / 2, LAM), np.array([1, -1]) / np.sqrt(2), atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 5), st.floats(0, 2 * np.pi), st.floats(-np.pi / 2, np.pi / 2), st.integers(1, 4))
    def test_unit_norm(self, M, phi, theta, D):
        g = RhsGeometry(M, 1, LAM)
        assert np.linalg.norm(array_response_tx(g, phi, theta)) == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(array_response_rx(D, LAM / 2, phi, LAM)) == pytest.approx(1.0, abs=1e-12)


def test_single_path_is_scaled_outer_product():
    g = RhsGeometry(3, 2, LAM)
    D, beta = 2, 90.0
    H = assemble_channel(beta, [1.0], [0.4], [0.3], [1.2], g, D, LAM / 2, LAM)
    a_r = array_response_rx(D, LAM / 2, 1.2, LAM)
    a_t = array_response_tx(g, 0.4, 0.3)
    oracle = np.sqrt(10 ** (-beta / 10)) * np.sqrt(9 * D) * np.outer(a_r, a_t.conj())
    np.testing.assert_allclose(H, oracle, rtol=1e-12, atol=0)


class TestSampling:
    geom = RhsGeometry(3, 2, LAM)

    def test_deterministic(self):
        a = sample_channel_set(7, PARAMS, self.geom, 3)
        b = sample_channel_set(7, PARAMS, self.geom, 3)
        assert a.H.tobytes() == b.H.tobytes()
        assert a.digest() == b.digest()
        assert sample_channel_set(8, PARAMS, self.geom, 3).digest() != a.digest()

    def test_users_do_not_depend_on_user_count(self):
        a = sample_channel_set(3, PARAMS, self.geom, 2)
        b = sample_channel_set(3, PARAMS, self.geom, 4)
        np.testing.assert_array_equal(a.H, b.H[:2])

    def test_geometry_and_shapes(self):
        params = ChannelParams(D=2)
        cs = sample_channel_set(1, params, self.geom, 4)
        assert cs.H.shape == (4, 2, 9)
        r = np.hypot(cs.positions[:, 0], cs.positions[:, 1])
        assert np.all((r >= params.min_distance) & (r <= params.cell_radius))
        assert np.all((cs.directions[:, 0] >= 0) & (cs.directions[:, 0] <= np.pi / 2))

    def test_rank_bounded_by_paths(self):
        params = ChannelParams(D=3, path_count=2)
        cs = sample_channel_set(5, params, self.geom, 4)
        for H in cs.H:
            s = np.linalg.svd(H, compute_uv=False)
            assert np.sum(s > 1e-10 * s[0]) <= min(params.D, params.path_count)

    def test_mean_energy_matches_path_loss(self):
        # E||H||^2 = 10^(-beta/10) M^2 D; divide out the per-draw loss
        params = ChannelParams(D=2)
        ratios = []
        for seed in range(500):
            cs = sample_channel_set(seed, params, self.geom, 1)
            d = np.hypot(np.hypot(*cs.positions[0, :2]), params.bs_height - params.ue_height)
            ratios.append(np.linalg.norm(cs.H[0]) ** 2 / (10 ** (-path_loss_db(d) / 10) * 9 * 2))
        assert np.mean(ratios) == pytest.approx(1.0, rel=0.1)

    def test_roundtrip(self, tmp_path):
        cs = sample_channel_set(2, PARAMS, self.geom, 2)
        path = tmp_path / "ch.json"
        path.write_text(cs.dumps())
        back = load_channel_set(path)
        np.testing.assert_array_equal(back.H, cs.H)
        assert back.noise_power == cs.noise_power
        assert back.digest() == cs.digest()

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            sample_channel_set(1, PARAMS, self.geom, 0)
        with pytest.raises(ValueError):
            ChannelSet(H=np.zeros((1, 1, 1)), noise_power=0.0)
        with pytest.raises(ValueError):
            ChannelParams(path_count=0)
