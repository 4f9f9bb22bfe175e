import json

import numpy as np
import pytest

from heatcast.errors import InsufficientData
from heatcast.forecast import ExogenousInputs
from heatcast.graybox import (GaussianFactor, GammaFactor, GrayboxPriors,
                              filtered_state_at, fit_variational, forecast,
                              load_checkpoint, save_checkpoint)
from heatcast.simulate import SimConfig, simulate_building


@pytest.fixture(scope="module")
def fitted(medium_dataset):
    return fit_variational(medium_dataset, GrayboxPriors(), max_iters=120, tol=1e-9)


class TestFitContracts:
    def test_insufficient_rows_rejected(self, site):
        ds = simulate_building(SimConfig(seed=1), site, 80)
        with pytest.raises(InsufficientData):
            fit_variational(ds)

    def test_elbo_trace_non_decreasing(self, fitted):
        trace = fitted.elbo_trace
        scale = np.maximum(1.0, np.abs(trace[:-1]))
        assert np.all(np.diff(trace) >= -1e-6 * scale)

    def test_tol_infinity_returns_after_one_iteration(self, medium_dataset):
        post = fit_variational(medium_dataset, max_iters=50, tol=np.inf)
        assert len(post.elbo_trace) == 1
        assert np.isfinite(post.elbo_trace[0])

    def test_factor_counts(self, fitted):
        assert len(fitted.coeffs) == 51
        assert len(fitted.ard) == 51
        assert isinstance(fitted.process_precision, GammaFactor)
        assert isinstance(fitted.obs_precision, GammaFactor)

    def test_gamma_shape_bookkeeping(self, fitted, medium_dataset):
        """Posterior shape = prior shape + n/2, exactly."""
        n = len(medium_dataset)
        a0 = fitted.priors.gamma_shape
        assert fitted.obs_precision.shape == pytest.approx(a0 + n / 2)
        assert fitted.process_precision.shape == pytest.approx(a0 + (n - 1) / 2)
        for g in fitted.ard:
            assert g.shape == pytest.approx(a0 + 0.5)

    def test_parameter_recovery_within_15_percent(self, fitted):
        cfg = SimConfig()
        for i, true in enumerate([cfg.supply_rate, cfg.outdoor_rate, cfg.solar_gain]):
            rel = abs(fitted.coeff_means[i] - true) / true
            assert rel < 0.15, f"coefficient {i}: {rel:.3f}"

    def test_obs_precision_grows_on_clean_data(self, site):
        ds = simulate_building(SimConfig(seed=2, process_std=0.0, obs_std=0.0),
                               site, 400)
        sequence = []
        for iters in (1, 2, 3, 5, 8):
            post = fit_variational(ds, max_iters=iters, tol=0.0)
            sequence.append(post.obs_precision.mean)
        assert all(b > a for a, b in zip(sequence, sequence[1:]))

    def test_posterior_predictive_covers_training_data(self, fitted, medium_dataset):
        """At least 90% of observations inside +-3 predictive std."""
        obs_var = fitted.obs_precision.mean_inverse
        std = np.sqrt(fitted.state_vars + obs_var)
        inside = np.abs(medium_dataset.t_in - fitted.state_means) <= 3 * std
        assert inside.mean() >= 0.90

    def test_segmented_data_still_fits(self, site):
        base = simulate_building(SimConfig(seed=8), site, 900)
        records = list(base.records[:400]) + list(base.records[520:])
        from heatcast.data import BuildingDataset
        gappy = BuildingDataset(site, records)
        assert gappy.gap_indices
        post = fit_variational(gappy, max_iters=40, tol=1e-8)
        trace = post.elbo_trace
        assert np.all(np.diff(trace) >= -1e-6 * np.maximum(1.0, np.abs(trace[:-1])))


class TestForecast:
    def make_future(self, dataset, start_row, horizon):
        from heatcast.data import hour_of_week_index
        recs = dataset.records[start_row:start_row + horizon]
        return ExogenousInputs(
            t_sup=np.array([r.t_sup for r in recs]),
            t_out=np.array([r.t_out for r in recs]),
            ghi=np.array([r.ghi for r in recs]),
            sun_elevation=np.zeros(horizon), sun_azimuth=np.zeros(horizon),
            hour_of_week=np.array([float(hour_of_week_index(r.timestamp, dataset.site))
                                   for r in recs]))

    def test_one_step_noiseless_equals_recurrence(self, fitted, medium_dataset):
        future = self.make_future(medium_dataset, 500, 1)
        state = GaussianFactor(21.0, 1e-12)
        params = fitted.expected_params()
        fc = forecast(fitted, state, future)
        expected = (params.transition_coeff * 21.0
                    + params.offsets(np.column_stack([
                        future.t_sup, future.t_out, future.ghi, future.hour_of_week]))[0])
        assert fc.mean[0] == pytest.approx(expected, abs=1e-9)

    def test_variance_non_decreasing(self, fitted, medium_dataset):
        future = self.make_future(medium_dataset, 500, 24)
        state = GaussianFactor(21.0, 0.01)
        fc = forecast(fitted, state, future)
        assert np.all(np.diff(fc.step_std) >= -1e-12)
        assert np.all(np.diff(fc.cum_std) >= 0)

    def test_constant_inputs_converge_to_fixed_point(self, fitted):
        horizon = 600
        future = ExogenousInputs(
            t_sup=np.full(horizon, 55.0), t_out=np.full(horizon, -2.0),
            ghi=np.zeros(horizon), sun_elevation=np.zeros(horizon),
            sun_azimuth=np.zeros(horizon), hour_of_week=np.full(horizon, 30.0))
        params = fitted.expected_params()
        phi = params.transition_coeff
        offset = (params.supply_rate * 55.0 + params.outdoor_rate * -2.0
                  + params.internal_gain_profile[29])
        fixed_point = offset / (1.0 - phi)
        fc = forecast(fitted, GaussianFactor(21.0, 0.01), future)
        assert fc.mean[-1] == pytest.approx(fixed_point, abs=1e-6)

    def test_filtered_state_tracks_observations(self, fitted, medium_dataset):
        instant = medium_dataset.records[800].timestamp
        state = filtered_state_at(fitted, medium_dataset, instant)
        assert state.mean == pytest.approx(medium_dataset.t_in[800], abs=0.5)
        assert 0 < state.variance < 1.0


class TestCheckpoint:
    def test_round_trip(self, fitted, tmp_path):
        path = tmp_path / "gb.json"
        save_checkpoint(fitted, path)
        again = load_checkpoint(path)
        np.testing.assert_allclose(again.coeff_means, fitted.coeff_means)
        np.testing.assert_allclose(again.coeff_cov, fitted.coeff_cov)
        assert again.process_precision == fitted.process_precision
        assert again.obs_precision == fitted.obs_precision
        np.testing.assert_allclose(again.elbo_trace, fitted.elbo_trace)

    def test_checkpoint_is_valid_json_with_version(self, fitted, tmp_path):
        path = tmp_path / "gb.json"
        save_checkpoint(fitted, path)
        raw = json.loads(path.read_text())
        assert raw["format_version"] == 1
        assert raw["kind"] == "graybox"
        assert len(raw["coeff_means"]) == 51
