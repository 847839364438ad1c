import numpy as np
import pytest

from mrsim import kernels
from mrsim.estimator import (
    MIN_ESTIMATE,
    EstimatorConfig,
    EstimatorState,
    TravelTimeSeries,
    build_F,
    estimate_travel_time,
    fit_ar_coefficients,
    predict,
    psi_terms,
    sample_innovation,
    update,
)
from mrsim.worldsim import TravelObservation

from .oracles import bilinear_direct, psi_direct, scalar_kalman, state_windows


def make_state(r, rng=None, mu=0.0, k=1):
    n = 2 * r + 1
    if rng is None:
        s = np.zeros(n)
        P = np.eye(n) * 0.1
    else:
        s = rng.normal(size=n)
        A = rng.normal(size=(n, n))
        P = A @ A.T * 0.1
    s[0] = 1.0
    P[0, :] = 0.0
    P[:, 0] = 0.0
    return EstimatorState(s=s, P=P, mu=mu, k=k)


def random_config(rng, r):
    return EstimatorConfig(
        regression_no=r,
        phi=rng.uniform(-1, 1, size=r),
        b=rng.uniform(-1, 1, size=r),
        c=rng.uniform(-0.5, 0.5, size=(r, r)),
        process_noise_var=float(rng.uniform(0, 0.5)),
        obs_noise_var=float(rng.uniform(0, 0.5)),
    )


class TestSampleInnovation:
    def test_single_observation(self):
        assert sample_innovation([10.0]) == 0.0

    def test_two_observations(self):
        assert sample_innovation([10.0, 10.4]) == pytest.approx(0.4)

    def test_five_values_matches_scan(self):
        values = [3.0, 7.5, 2.2, 9.1, 8.4]
        diffs = [b - a for a, b in zip(values, values[1:])]  # scan oracle
        assert sample_innovation(values) == pytest.approx(diffs[-1])

    def test_empty_is_zero(self):
        assert sample_innovation([]) == 0.0


class TestPsiTerms:
    def test_zero_c_gives_b(self):
        rng = np.random.default_rng(1)
        for r in (1, 3, 5):
            cfg = EstimatorConfig(regression_no=r, b=rng.normal(size=r), c=np.zeros((r, r)))
            st = make_state(r, rng)
            assert psi_terms(cfg, st) == pytest.approx(cfg.b)

    def test_hand_example_r1(self):
        cfg = EstimatorConfig(
            regression_no=1, phi=np.array([0.0]), b=np.array([0.5]), c=np.array([[0.1]])
        )
        st = make_state(1)
        st.s[2] = 10.0  # X(k-1)
        assert psi_terms(cfg, st) == pytest.approx([1.5])

    def test_dense_c_matches_double_loop(self):
        rng = np.random.default_rng(2)
        for r in (2, 4, 6):
            cfg = random_config(rng, r)
            st = make_state(r, rng)
            _, x_mrf = state_windows(st.s)
            expected = psi_direct(list(cfg.b), [list(row) for row in cfg.c], x_mrf)
            assert psi_terms(cfg, st) == pytest.approx(expected)


class TestBuildF:
    def test_zero_model_structure(self):
        cfg = EstimatorConfig(regression_no=1, phi=np.array([0.0]))
        st = make_state(1, mu=0.0)
        F = build_F(cfg, st)
        assert F[0, 0] == 1.0
        assert np.all(F[-1] == 0.0)
        assert (F @ st.s)[-1] == 0.0

    def test_random_walk_identity(self):
        cfg = EstimatorConfig(regression_no=1)  # phi_1 = -1 default
        st = make_state(1, mu=0.0)
        st.s[2] = 7.25
        F = build_F(cfg, st)
        assert (F @ st.s)[-1] == pytest.approx(7.25)

    def test_mean_term_vanishes_for_random_walk(self):
        cfg = EstimatorConfig(regression_no=3)
        st = make_state(3, mu=42.0)
        F = build_F(cfg, st)
        assert F[-1, 0] == pytest.approx(0.0)

    def test_last_row_matches_direct_evaluation(self):
        rng = np.random.default_rng(3)
        for r in (2, 4):
            cfg = random_config(rng, r)
            st = make_state(r, rng, mu=float(rng.normal()))
            F = build_F(cfg, st)
            xi_mrf, x_mrf = state_windows(st.s)
            expected = bilinear_direct(
                list(cfg.phi), list(cfg.b), [list(row) for row in cfg.c],
                st.mu, xi_mrf, x_mrf, xi_hat=0.0,
            )
            assert (F @ st.s)[-1] == pytest.approx(expected, abs=1e-9)

    def test_shift_blocks_advance_windows(self):
        cfg = EstimatorConfig(regression_no=3, phi=np.zeros(3))
        st = make_state(3)
        st.s[:] = [1, 11, 12, 13, 21, 22, 23]
        out = build_F(cfg, st) @ st.s
        assert list(out[1:3]) == [12, 13]  # innovation window shifted
        assert list(out[4:6]) == [22, 23]  # cost window shifted


class TestPredict:
    def test_q_zero_covariance_is_fpft(self):
        rng = np.random.default_rng(4)
        cfg = EstimatorConfig(regression_no=2, process_noise_var=0.0)
        st = make_state(2, rng)
        F = build_F(cfg, st)
        _, P_pred = kernels.predict_step_py(
            cfg.phi, cfg.b, cfg.c, st.mu, 0.0, st.s, st.P, 0.3
        )
        assert P_pred == pytest.approx(F @ st.P @ F.T)

    def test_random_walk_with_innovation(self):
        cfg = EstimatorConfig(regression_no=1)
        st = make_state(1, mu=0.0)
        st.s[2] = 10.0
        s_pred, _ = predict(cfg, st, xi_hat=0.4)
        assert s_pred[-1] == pytest.approx(10.4)
        assert s_pred[0] == 1.0
        assert s_pred[1] == pytest.approx(0.4)  # newest innovation slot

    def test_psd_preserved_over_random_inputs(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            r = int(rng.integers(1, 5))
            cfg = random_config(rng, r)
            st = make_state(r, rng)
            _, P_pred = predict(cfg, st, xi_hat=float(rng.normal()))
            assert np.abs(P_pred - P_pred.T).max() < 1e-9
            assert np.linalg.eigvalsh(P_pred).min() > -1e-9


class TestUpdate:
    def test_huge_obs_noise_leaves_prediction(self):
        rng = np.random.default_rng(6)
        cfg = EstimatorConfig(regression_no=3, obs_noise_var=1e12)
        st = make_state(3, rng, mu=5.0, k=4)
        xi = 0.7
        s_pred, P_pred = predict(cfg, st, xi_hat=xi)
        updated = update(cfg, st, y=9.0, xi_hat=xi)
        scale = np.abs(s_pred).max()
        assert np.abs(updated.s - s_pred).max() / scale < 1e-6
        assert np.abs(updated.P - P_pred).max() / np.abs(P_pred).max() < 1e-6

    def test_zero_obs_noise_pins_newest_cost_to_y(self):
        # random-walk config with a nonzero sampled innovation: the
        # perfect measurement propagates exactly into the advanced window
        cfg = EstimatorConfig(regression_no=2, obs_noise_var=0.0)
        st = make_state(2, np.random.default_rng(7), mu=0.0, k=3)
        st.P[:, :] = 0.0
        for i in range(1, 5):
            st.P[i, i] = 1.0
        updated = update(cfg, st, y=14.0, xi_hat=1.0)
        assert updated.s[-1] == pytest.approx(14.0, abs=1e-12)

    def test_rejects_nonpositive_observation(self):
        cfg = EstimatorConfig(regression_no=1)
        with pytest.raises(ValueError):
            update(cfg, make_state(1), y=0.0)

    def test_mean_and_count_updated(self):
        cfg = EstimatorConfig(regression_no=1)
        st = make_state(1, mu=10.0, k=2)
        updated = update(cfg, st, y=16.0)
        assert updated.k == 3
        assert updated.mu == pytest.approx((10.0 * 2 + 16.0) / 3)

    def test_scalar_random_walk_matches_closed_form(self):
        # full filter vs the hand-rolled 1-D filter, gains to 1e-10
        rng = np.random.default_rng(8)
        q, r_var = 0.3, 0.5
        cfg = EstimatorConfig(regression_no=1, process_noise_var=q, obs_noise_var=r_var)
        values = list(20.0 + np.cumsum(rng.normal(size=12)))
        ser = TravelTimeSeries(cfg, prior_cost=20.0)
        ser.incorporate(0, values[0], own=True)
        p0 = ser.state.P[-1, -1]
        gains_expected, x_expected, p_expected = scalar_kalman(values, q, r_var, p0)
        gains_got = []
        for i, y in enumerate(values[1:], start=1):
            p_before = ser.state.P[-1, -1]
            gains_got.append(p_before / (p_before + r_var))
            ser.incorporate(i, y, own=True)
        assert gains_got == pytest.approx(gains_expected, abs=1e-10)
        assert ser.state.s[-1] == pytest.approx(x_expected, abs=1e-10)
        assert ser.state.P[-1, -1] == pytest.approx(p_expected, abs=1e-10)


class TestEstimate:
    def test_composition_predict_after_update(self):
        rng = np.random.default_rng(9)
        cfg = EstimatorConfig(regression_no=3)
        ser = TravelTimeSeries(cfg, prior_cost=5.0)
        for i, y in enumerate(10.0 + rng.uniform(0, 1, size=8)):
            ser.incorporate(i, float(y), own=True)
        est, prior_only = ser.estimate(99)
        s_pred, _ = predict(cfg, ser.state, xi_hat=sample_innovation(ser.values))
        assert not prior_only
        assert est == pytest.approx(s_pred[-1])

    def test_empty_series_with_fallback(self):
        ser = TravelTimeSeries(EstimatorConfig(regression_no=4), prior_cost=3.0)
        obs = TravelObservation(arc=0, robot=2, instance=6, travel_time=12.0)
        est, prior_only = estimate_travel_time(ser, 8, obs)
        assert est == pytest.approx(12.0)
        assert not prior_only

    def test_empty_series_no_fallback_uses_prior(self):
        ser = TravelTimeSeries(EstimatorConfig(regression_no=4), prior_cost=3.0)
        est, prior_only = estimate_travel_time(ser, 5, None)
        assert est == pytest.approx(3.0)
        assert prior_only

    def test_estimate_floor(self):
        cfg = EstimatorConfig(regression_no=1)
        ser = TravelTimeSeries(cfg, prior_cost=1.0)
        ser.incorporate(0, 5.0, own=True)
        ser.incorporate(1, 0.1, own=True)  # crashes the momentum below zero
        est, _ = ser.estimate(9)
        assert est >= MIN_ESTIMATE

    def test_target_must_be_ahead(self):
        ser = TravelTimeSeries(EstimatorConfig(regression_no=1), prior_cost=1.0)
        ser.incorporate(7, 5.0, own=True)
        with pytest.raises(ValueError):
            ser.estimate(7)

    def test_reoffered_fallback_is_noop(self):
        ser = TravelTimeSeries(EstimatorConfig(regression_no=2), prior_cost=3.0)
        obs = TravelObservation(arc=0, robot=2, instance=6, travel_time=12.0)
        est1, _ = estimate_travel_time(ser, 8, obs)
        rev = ser.revision
        est2, _ = estimate_travel_time(ser, 9, obs)
        assert est1 == est2
        assert ser.revision == rev


class TestInvariants:
    def test_state_dimension_and_constant_slot(self):
        rng = np.random.default_rng(10)
        for r in (1, 4, 7):
            cfg = random_config(rng, r)
            cfg.obs_noise_var = max(cfg.obs_noise_var, 1e-3)
            ser = TravelTimeSeries(cfg, prior_cost=10.0)
            for i in range(12):
                ser.incorporate(i, float(10 + rng.uniform(0, 1)), own=True)
                assert ser.state.s.shape == (2 * r + 1,)
                assert ser.state.s[0] == 1.0

    def test_covariance_symmetric_psd_over_sequences(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            r = int(rng.integers(1, 8))
            cfg = random_config(rng, r)
            st = make_state(r, rng)
            for _ in range(5):
                if rng.random() < 0.5:
                    s, P = predict(cfg, st, xi_hat=float(rng.normal()))
                    st = EstimatorState(s, P, st.mu, st.k)
                else:
                    st = update(cfg, st, y=float(rng.uniform(0.1, 20)), xi_hat=float(rng.normal()))
                assert np.abs(st.P - st.P.T).max() < 1e-9
                assert np.linalg.eigvalsh(st.P).min() > -1e-9

    def test_linear_reduction_matches_direct_evaluation(self):
        # b = c = 0: one-step prediction equals the plain autoregression
        rng = np.random.default_rng(12)
        for _ in range(1000):
            r = int(rng.integers(1, 8))
            phi = rng.uniform(-1, 1, size=r)
            cfg = EstimatorConfig(regression_no=r, phi=phi)
            st = make_state(r, rng, mu=float(rng.normal()))
            xi_hat = float(rng.normal())
            s_pred, _ = predict(cfg, st, xi_hat=xi_hat)
            xi_mrf, x_mrf = state_windows(st.s)
            expected = bilinear_direct(
                list(phi), [0.0] * r, [[0.0] * r for _ in range(r)],
                st.mu, xi_mrf, x_mrf, xi_hat,
            )
            assert s_pred[-1] == pytest.approx(expected, abs=1e-9)

    def test_determinism_bit_identical(self):
        def run():
            cfg = EstimatorConfig(regression_no=4)
            ser = TravelTimeSeries(cfg, prior_cost=5.0)
            for i, y in enumerate([5.0, 5.5, 5.2, 6.0, 5.9, 6.3]):
                ser.incorporate(i, y, own=True)
            return ser.state

        a, b = run(), run()
        assert np.array_equal(a.s, b.s)
        assert np.array_equal(a.P, b.P)
        assert a.mu == b.mu and a.k == b.k


class TestFitting:
    def test_fit_recovers_ar_coefficients(self):
        rng = np.random.default_rng(13)
        # strong AR(1) around mean 10: phi_1 = -0.8 in model convention
        xs = [10.0]
        for _ in range(400):
            xs.append(10.0 + 0.8 * (xs[-1] - 10.0) + rng.normal() * 0.1)
        phi = fit_ar_coefficients(xs, r=3)
        assert phi is not None
        assert phi[0] == pytest.approx(-0.8, abs=0.05)
        assert abs(phi[1]) < 0.15 and abs(phi[2]) < 0.15

    def test_fit_is_stability_capped(self):
        rng = np.random.default_rng(14)
        xs = list(np.linspace(1, 40, 60) + rng.normal(size=60) * 0.01)
        phi = fit_ar_coefficients(xs, r=4)
        assert phi is not None
        assert np.abs(phi).sum() <= 0.98 + 1e-9

    def test_series_fits_after_warmup(self):
        rng = np.random.default_rng(15)
        cfg = EstimatorConfig(regression_no=3, fit_phi=True)
        ser = TravelTimeSeries(cfg, prior_cost=10.0)
        warmup = 2 * 3 + 2
        for i in range(warmup + 1):
            ser.incorporate(i, float(10 + rng.uniform(0, 1)), own=True)
            if i + 1 < warmup:
                assert ser.fitted_phi is None
        assert ser.fitted_phi is not None


class TestBackends:
    def test_backend_parity(self):
        if not kernels.HAVE_COMPILED:
            pytest.skip("compiled kernel not built")
        rng = np.random.default_rng(16)
        for r in (1, 2, 4, 7):
            n = 2 * r + 1
            phi = rng.normal(size=r)
            b = rng.normal(size=r)
            c = rng.normal(size=(r, r))
            s = rng.normal(size=n)
            s[0] = 1.0
            A = rng.normal(size=(n, n))
            P = A @ A.T
            args = (phi, b, c, 1.7, 0.3, s, P, 0.9)
            s1, P1 = kernels.predict_step_py(*args)
            s2, P2 = kernels._ckernels.predict_step(*args)
            assert np.abs(s1 - s2).max() < 1e-12
            assert np.abs(P1 - P2).max() < 1e-9
            u1 = kernels.measurement_step_py(s, P, 0.4, 3.3, 0.9)
            u2 = kernels._ckernels.measurement_step(s, P, 0.4, 3.3, 0.9)
            assert np.abs(u1[0] - u2[0]).max() < 1e-12
            assert np.abs(u1[1] - u2[1]).max() < 1e-9
            v1 = kernels.predict_scalar_py(phi, b, c, 1.7, s, 0.9)
            v2 = kernels._ckernels.predict_scalar(phi, b, c, 1.7, s, 0.9)
            assert abs(v1 - v2) < 1e-10
