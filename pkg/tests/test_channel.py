import numpy as np
import pytest

from irsec.channel import (
    AnglePair,
    apply_spatial_correlation,
    cbs_departure_angle,
    ChannelRealization,
    effective_channel,
    geometry_to_params,
    half_wavelength_geometry,
    irs_element_positions,
    kronecker_correlation,
    node_angles_at_irs,
    sinc_correlation,
    synth_cbs_irs_channel,
    synth_irs_user_channel,
    ula_steering,
    upa_steering,
    upa_steering_grid,
)


@pytest.fixture
def geom():
    return half_wavelength_geometry(m=4, n1=2, n2=2)


class TestUlaSteering:
    def test_broadside_all_equal(self):
        g = half_wavelength_geometry(m=4, n1=1, n2=1)
        np.testing.assert_allclose(ula_steering(g, 0.0), 0.5 * np.ones(4), atol=1e-14)

    def test_unit_norm(self):
        g = half_wavelength_geometry(m=7, n1=1, n2=1)
        for eta in np.linspace(-np.pi / 2, np.pi / 2, 9):
            assert np.linalg.norm(ula_steering(g, eta)) == pytest.approx(1.0, abs=1e-12)

    def test_endfire_two_elements(self):
        # hand evaluation: offsets -1/2, +1/2; phase = +-(2pi/lambda)(lambda/2)(1/2) = +-pi/2
        g = half_wavelength_geometry(m=2, n1=1, n2=1)
        a = ula_steering(g, np.pi / 2)
        expected = np.array([np.exp(-1j * np.pi / 2), np.exp(1j * np.pi / 2)]) / np.sqrt(2)
        np.testing.assert_allclose(a, expected, atol=1e-12)


class TestUpaSteering:
    def test_boresight_all_equal(self, geom):
        a = upa_steering(geom, AnglePair(np.pi / 2, np.pi / 2))
        np.testing.assert_allclose(a, np.ones(4) / 2, atol=1e-14)

    def test_center_element_of_odd_array(self):
        g = half_wavelength_geometry(m=1, n1=3, n2=3)
        for ang in [AnglePair(0.3, 0.4), AnglePair(1.2, 2.9), AnglePair(0.0, 0.0)]:
            a = upa_steering(g, ang)
            center = (3 + 1) // 2 - 1  # zero offset on both axes
            assert a[center * 3 + center] == pytest.approx(1 / 3, abs=1e-14)

    def test_kronecker_factorization(self, geom):
        # independent construction from the horizontal/vertical factors
        ang = AnglePair(0.7, 1.1)
        k = 2 * np.pi / geom.wavelength
        a_h = np.exp(1j * k * geom.d1 * np.sin(ang.theta) * np.cos(ang.phi) * np.array([-0.5, 0.5]))
        a_v = np.exp(1j * k * geom.d2 * np.cos(ang.theta) * np.array([-0.5, 0.5]))
        np.testing.assert_allclose(upa_steering(geom, ang), np.kron(a_h, a_v) / 2, atol=1e-12)

    def test_unit_norm_and_grid_agreement(self, geom):
        rng = np.random.default_rng(0)
        thetas = rng.uniform(0, np.pi / 2, 6)
        phis = rng.uniform(0, np.pi, 6)
        grid = upa_steering_grid(geom, thetas, phis)
        for i in range(6):
            one = upa_steering(geom, AnglePair(thetas[i], phis[i]))
            np.testing.assert_allclose(grid[i], one, atol=1e-12)
            assert np.linalg.norm(one) == pytest.approx(1.0, abs=1e-12)

    def test_rejects_out_of_domain(self, geom):
        with pytest.raises(ValueError):
            upa_steering(geom, AnglePair(2.0, 0.5))
        with pytest.raises(ValueError):
            upa_steering(geom, AnglePair(0.5, -0.2))


def los_only_params(angles, rho=1.0):
    from irsec.channel import ChannelParams

    return ChannelParams(
        path_count=1, avg_path_loss=rho, path_loss_exponent=2.0, los_angles=angles
    )


class TestSynthesis:
    def test_single_path_direction(self, geom):
        params = los_only_params(AnglePair(0.5, 1.0))
        h = synth_irs_user_channel(geom, params, rng_seed=3)
        a = np.sqrt(geom.n) * upa_steering(geom, params.los_angles)
        corr = abs(h.conj() @ a) / (np.linalg.norm(h) * np.linalg.norm(a))
        assert corr == pytest.approx(1.0, abs=1e-12)

    def test_deterministic_for_seed(self, geom):
        lg = geometry_to_params(
            np.array([-80.0, 29, 15]), np.zeros(3), np.array([0.0, 18.5, 18.5]),
            np.array([80.0, 29, 15]), [], exponent=2.0, path_count=5, rng_seed=11,
        )
        h1 = synth_irs_user_channel(geom, lg.irs_su, rng_seed=21)
        h2 = synth_irs_user_channel(geom, lg.irs_su, rng_seed=21)
        np.testing.assert_array_equal(h1, h2)

    def test_mean_power_matches_path_loss(self, geom):
        # Monte Carlo oracle: E||h||^2 = N / rho for unit-norm steering and CN(0,1) gains
        from irsec.channel import ChannelParams

        rng = np.random.default_rng(17)
        params = ChannelParams(
            path_count=5,
            avg_path_loss=4.0,
            path_loss_exponent=2.0,
            los_angles=AnglePair(0.6, 1.2),
            nlos_angle_offsets=[AnglePair(0.1 * i, -0.2 * i) for i in range(1, 5)],
        )
        powers = [
            np.linalg.norm(synth_irs_user_channel(geom, params, rng)) ** 2 for _ in range(10_000)
        ]
        assert np.mean(powers) == pytest.approx(geom.n / 4.0, rel=0.05)

    def test_cbs_irs_rank1_and_shape(self, geom):
        params = los_only_params(AnglePair(0.4, 0.9))
        params.cbs_los_eta = 0.3
        h = synth_cbs_irs_channel(geom, params, rng_seed=5)
        assert h.shape == (geom.n, geom.m)
        s = np.linalg.svd(h, compute_uv=False)
        assert s[1] <= 1e-10 * s[0]

    def test_cbs_irs_mean_power(self, geom):
        from irsec.channel import ChannelParams

        rng = np.random.default_rng(23)
        params = ChannelParams(
            path_count=5,
            avg_path_loss=2.0,
            path_loss_exponent=2.0,
            los_angles=AnglePair(0.6, 1.2),
            nlos_angle_offsets=[AnglePair(0.05 * i, 0.1 * i) for i in range(1, 5)],
            cbs_los_eta=0.2,
            cbs_nlos_eta_offsets=[0.1, -0.3, 0.5, -0.2],
        )
        powers = [
            np.linalg.norm(synth_cbs_irs_channel(geom, params, rng)) ** 2 for _ in range(10_000)
        ]
        assert np.mean(powers) == pytest.approx(geom.n * geom.m / 2.0, rel=0.05)


class TestEffectiveChannel:
    def test_all_ones_is_identity_on_h(self, geom):
        rng = np.random.default_rng(4)
        h_ci = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        np.testing.assert_allclose(effective_channel(np.ones(4), h_ci), h_ci, atol=0)

    def test_basis_vector_keeps_one_row(self, geom):
        rng = np.random.default_rng(5)
        h_ci = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        e1 = np.zeros(4)
        e1[0] = 1.0
        out = effective_channel(e1, h_ci)
        np.testing.assert_allclose(out[0], h_ci[0], atol=0)
        np.testing.assert_allclose(out[1:], 0.0, atol=0)

    def test_bilinear_identity_double_loop(self):
        # independent elementwise evaluation of q^H diag(h^H) H w
        rng = np.random.default_rng(6)
        n, m = 5, 3
        h = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        h_ci = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
        q = np.exp(1j * rng.uniform(0, 2 * np.pi, n))
        w = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        lhs = q.conj() @ effective_channel(h, h_ci) @ w
        rhs = 0.0 + 0.0j
        for i in range(n):
            for j in range(m):
                rhs += np.conj(q[i]) * np.conj(h[i]) * h_ci[i, j] * w[j]
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            effective_channel(np.ones(3), np.ones((4, 2)))


class TestGeometry:
    def test_boresight_node(self):
        ang, dist = node_angles_at_irs(np.zeros(3), np.array([0.0, 10.0, 0.0]))
        assert dist**2 == pytest.approx(100.0)
        assert ang.phi == pytest.approx(np.pi / 2, abs=1e-12)
        assert ang.theta == pytest.approx(np.pi / 2, abs=1e-12)

    def test_path_loss_quadruples_with_distance(self):
        lg1 = geometry_to_params(
            np.array([-10.0, 5, 1]), np.zeros(3), np.array([0.0, 10, 0]),
            np.array([0.0, 20, 0]), [], exponent=2.0, path_count=1, rng_seed=0,
        )
        assert lg1.irs_pu.avg_path_loss == pytest.approx(4 * lg1.irs_su.avg_path_loss)

    def test_reference_su_angles_hand_trigonometry(self):
        # SU at (0, 18.5, 18.5), IRS at the origin: horizontal offset 0 -> phi = 90 deg;
        # elevation arccos(18.5 / sqrt(18.5^2 + 18.5^2)) = 45 deg
        ang, dist = node_angles_at_irs(np.zeros(3), np.array([0.0, 18.5, 18.5]))
        assert ang.phi == pytest.approx(np.pi / 2, abs=1e-12)
        assert ang.theta == pytest.approx(np.pi / 4, abs=1e-12)
        assert dist == pytest.approx(18.5 * np.sqrt(2), rel=1e-12)

    def test_rejects_node_behind_facade(self):
        with pytest.raises(ValueError, match="behind"):
            node_angles_at_irs(np.zeros(3), np.array([3.0, -5.0, 1.0]))

    def test_rotated_frame_accepts_negative_y(self):
        ang, _ = node_angles_at_irs(
            np.array([50.0, 10.0, 0.0]), np.array([50.0, 0.0, 0.0]), irs_rotation_z=np.pi
        )
        assert ang.phi == pytest.approx(np.pi / 2, abs=1e-12)

    def test_cbs_departure(self):
        eta = cbs_departure_angle(np.array([-10.0, 0, 0]), np.array([0.0, 10.0, 0.0]))
        assert eta == pytest.approx(np.arcsin(10 / np.sqrt(200)), abs=1e-12)


class TestCorrelation:
    def test_kronecker_zero_is_identity(self):
        np.testing.assert_allclose(kronecker_correlation(0.0, 4), np.eye(4), atol=0)

    def test_kronecker_first_row(self):
        r = kronecker_correlation(0.5, 3)
        np.testing.assert_allclose(r[0], [1.0, 0.5, 0.25], atol=1e-14)

    def test_kronecker_psd(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            rho = rng.uniform(0, 0.99) * np.exp(1j * rng.uniform(0, 2 * np.pi))
            r = kronecker_correlation(rho, 6)
            assert np.linalg.eigvalsh(r)[0] >= -1e-10

    def test_kronecker_rejects_large_rho(self):
        with pytest.raises(ValueError):
            kronecker_correlation(1.2, 3)

    def test_sinc_unit_diagonal_and_nulls(self):
        g = half_wavelength_geometry(m=1, n1=3, n2=3)
        r = sinc_correlation(g)
        np.testing.assert_allclose(np.diag(r), 1.0, atol=0)
        # half-wavelength neighbors: sinc(1) = 0
        pos = irs_element_positions(g)
        d = np.linalg.norm(pos[0] - pos[1])
        assert d == pytest.approx(g.wavelength / 2)
        assert r[0, 1] == pytest.approx(0.0, abs=1e-14)
        np.testing.assert_allclose(r, r.T, atol=0)
        assert np.isrealobj(r)


def make_realization(geom, seed):
    lg = geometry_to_params(
        np.array([-80.0, 29, 15]), np.zeros(3), np.array([0.0, 18.5, 18.5]),
        np.array([80.0, 29, 15]), [np.array([-44.0, 25.5, 18.5])],
        exponent=2.0, path_count=5, rng_seed=seed,
    )
    rng = np.random.default_rng(seed + 1)
    return ChannelRealization(
        geom=geom,
        h_ci=synth_cbs_irs_channel(geom, lg.cbs_irs, rng),
        h_is=synth_irs_user_channel(geom, lg.irs_su, rng),
        h_ip=synth_irs_user_channel(geom, lg.irs_pu, rng),
        eve_nominal=[synth_irs_user_channel(geom, lg.irs_eves[0], rng)],
        eve_params=lg.irs_eves,
    )


class TestSpatialCorrelation:
    def test_identity_leaves_realization(self, geom):
        real = make_realization(geom, 2)
        out = apply_spatial_correlation(real, np.eye(geom.m), np.eye(geom.n))
        np.testing.assert_allclose(out.h_ci, real.h_ci, atol=1e-12)
        np.testing.assert_allclose(out.h_is, real.h_is, atol=1e-12)

    def test_correlation_concentrates_column_space(self, geom):
        # Monte Carlo oracle over 100 draws: strong CBS correlation raises the
        # ratio of the top singular value to the Frobenius norm
        r_cbs = kronecker_correlation(0.9, geom.m)
        ratios_plain, ratios_corr = [], []
        for seed in range(100):
            real = make_realization(geom, 100 + seed)
            s0 = np.linalg.svd(real.h_ci, compute_uv=False)
            corr = apply_spatial_correlation(real, r_cbs, np.eye(geom.n))
            s1 = np.linalg.svd(corr.h_ci, compute_uv=False)
            ratios_plain.append(s0[0] / np.linalg.norm(s0))
            ratios_corr.append(s1[0] / np.linalg.norm(s1))
        assert np.mean(ratios_corr) > np.mean(ratios_plain)

    def test_sqrt_composition(self, geom):
        real = make_realization(geom, 3)
        r = kronecker_correlation(0.6, geom.n)
        once = apply_spatial_correlation(real, np.eye(geom.m), r @ r)
        twice = apply_spatial_correlation(
            apply_spatial_correlation(real, np.eye(geom.m), r), np.eye(geom.m), r
        )
        np.testing.assert_allclose(once.h_ci, twice.h_ci, atol=1e-10)
