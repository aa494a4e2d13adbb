import logging
import math

import numpy as np
import pytest

from conftest import C_REF, random_physical_cm
from cv_markers.channel import back_propagate, evolve
from cv_markers.errors import (
	DegenerateTrace,
	InsufficientSamples,
	InvalidConfig,
	MissingMode,
	NonStationaryTrace,
	NoPurePreimage,
)
from cv_markers.gaussian import StandardFormCM
from cv_markers.homodyne import (
	SHOT_LABEL,
	HomodyneTrace,
	ModeSelector,
	SimConfig,
	effective_state,
	mode_moments,
	simulate_record,
	simulate_shot_noise,
	simulate_trace,
)
from cv_markers.markers import MarkerReport, classify
from cv_markers.reconstruction import (
	ELEMENTS,
	MeasurementRecord,
	ModeMoments,
	assemble_cm,
	bootstrap_markers,
	calibrate,
	correct_visibility,
	design_matrix,
	exact_moments,
	fit_moments,
	gaussianity_check,
	reconstruct,
)

IDEAL = dict(visibility=1.0, electronic_noise_db_below_shot=None)


@pytest.fixture(scope="module")
def ideal_record():
	state = evolve(StandardFormCM(1.0, 1.0, C_REF, -C_REF), 0.63)
	return state, MeasurementRecord.from_traces(simulate_record(state, SimConfig(samples_per_trace=100_000, **IDEAL)))


def test_design_matrix_reproduces_mode_moments(rng):
	X = design_matrix()
	assert X.shape == (18, 10)
	assert np.linalg.matrix_rank(X) == 10
	for _ in range(20):
		cm = random_physical_cm(rng)
		unique = np.array([cm.matrix[i, j] for i, j in ELEMENTS])
		expected = np.concatenate([mode_moments(cm, mode) for mode in ModeSelector])
		np.testing.assert_allclose(X @ unique, expected, atol=1e-12)


def test_exact_inversion(ref, rng):
	result = assemble_cm(exact_moments(ref))
	assert result.cm.allclose(ref, atol=1e-12)
	assert result.residual == pytest.approx(0, abs=1e-20)
	for _ in range(20):
		cm = random_physical_cm(rng)
		assert assemble_cm(exact_moments(cm)).cm.allclose(cm, atol=1e-10)


def test_assemble_missing_mode(ref):
	moments = [m for m in exact_moments(ref) if m.mode is not ModeSelector.E]
	with pytest.raises(MissingMode, match="e"):
		assemble_cm(moments)


def test_assemble_does_not_coerce(caplog):
	moments = exact_moments(np.diag([0.5, 0.5, 0.5, 0.5]))
	squeezed = [
		ModeMoments(m.mode, m.var_x * 0.5, m.var_y * 0.5, m.cov_xy) for m in moments
	]
	with caplog.at_level(logging.WARNING, logger="cv_markers.reconstruction"):
		result = assemble_cm(squeezed)
	assert not result.physical
	np.testing.assert_allclose(result.cm.matrix, np.eye(4) / 4, atol=1e-12)
	assert "not bona fide" in caplog.text


def test_calibrate_maps_shot_noise_to_half():
	cfg = SimConfig(samples_per_trace=10_000, detector_gain=7.0)
	shot = simulate_shot_noise(cfg)
	calibrated = calibrate(shot, shot)
	assert calibrated.calibrated
	assert np.var(calibrated.values, ddof=1) == pytest.approx(0.5)
	assert calibrated.variance_offset == 0

	vacuum = calibrate(shot, shot, subtract_electronic=True)
	assert np.var(vacuum.values, ddof=1) - vacuum.variance_offset == pytest.approx(0.5)
	assert vacuum.variance_offset > 0


def test_calibrate_degenerate_shot():
	shot = HomodyneTrace(None, np.linspace(0, 1, 10), np.zeros(10))
	with pytest.raises(DegenerateTrace):
		calibrate(shot, shot)


def test_fit_moments_recovers_modes(ideal_record):
	state, record = ideal_record
	for mode in (ModeSelector.C, ModeSelector.E):
		fitted = fit_moments(calibrate(record.modes[mode], record.shot))
		expected = np.array(mode_moments(state, mode))
		# SE plus the calibration uncertainty of the 1e5-sample shot trace
		bound = 4 * fitted.errors + 0.015 * np.abs(expected).max()
		assert np.all(np.abs(fitted.values - expected) <= bound)
		assert fitted.chi2_dof < 5


def test_fit_moments_warns_when_uncalibrated(ideal_record, caplog):
	_, record = ideal_record
	with caplog.at_level(logging.WARNING, logger="cv_markers.reconstruction"):
		fit_moments(record.modes[ModeSelector.A])
	assert "uncalibrated" in caplog.text


def test_fit_moments_bin_requirements(ref):
	raw = simulate_trace(ref, "a", SimConfig(samples_per_trace=1000))
	trace = calibrate(raw, raw)
	with pytest.raises(InsufficientSamples):
		fit_moments(trace, bins=8)
	with pytest.raises(InsufficientSamples):
		fit_moments(trace, bins=32)


def test_fit_moments_rejects_drifting_trace(ref):
	trace = simulate_trace(ref, "a", SimConfig(samples_per_trace=100_000, **IDEAL))
	values = trace.values.copy()
	values[trace.phases >= math.pi] *= 2
	with pytest.raises(NonStationaryTrace):
		fit_moments(trace.replace(values=values, calibrated=True))


def test_fit_moments_zero_variance():
	phases = 2 * np.pi * np.arange(10_000) / 10_000
	with pytest.raises(DegenerateTrace):
		fit_moments(HomodyneTrace("a", phases, np.zeros_like(phases), calibrated=True))


def test_reconstruct_ideal_record(ideal_record):
	state, record = ideal_record
	result = reconstruct(record)
	np.testing.assert_allclose(result.cm.matrix, state.matrix, atol=0.03)
	assert result.errors.shape == (4, 4)
	assert np.all(result.errors > 0)
	assert set(result.gaussianity) == {mode.value for mode in ModeSelector}
	assert not any(report.flagged for report in result.gaussianity.values())
	assert result.residual < 5


def test_reconstruct_default_config_with_electronic_subtraction(ref):
	cfg = SimConfig(samples_per_trace=100_000, seed=9)
	record = MeasurementRecord.from_traces(simulate_record(ref, cfg))
	result = reconstruct(record, subtract_electronic=True)
	np.testing.assert_allclose(result.cm.matrix, effective_state(ref, cfg).matrix, atol=0.03)


def test_measurement_record_requires_every_trace(ref):
	traces = simulate_record(ref, SimConfig(samples_per_trace=10))
	partial = {label: trace for label, trace in traces.items() if label != "e"}
	with pytest.raises(MissingMode, match="e"):
		MeasurementRecord.from_traces(partial)
	no_shot = [trace for label, trace in traces.items() if label != SHOT_LABEL]
	with pytest.raises(MissingMode, match="shot"):
		MeasurementRecord.from_traces(no_shot)
	record = MeasurementRecord.from_traces(traces.values())
	assert [t.label for t in record.traces()] == list(traces)


def test_gaussianity_check():
	rng = np.random.default_rng(3)
	n = 100_000
	phases = 2 * np.pi * np.arange(n) / n
	gaussian = gaussianity_check(HomodyneTrace("a", phases, rng.standard_normal(n)), bins=16)
	assert not gaussian.flagged
	assert gaussian.excess_kurtosis.shape == (16,)
	uniform = gaussianity_check(HomodyneTrace("a", phases, rng.uniform(-1, 1, n)), bins=16)
	assert uniform.flagged
	assert uniform.worst > 5
	np.testing.assert_allclose(uniform.excess_kurtosis, -1.2, atol=0.1)
	with pytest.raises(InsufficientSamples):
		gaussianity_check(HomodyneTrace("a", phases[:10], np.zeros(10)), bins=16)


def test_bootstrap_markers(ref):
	record = MeasurementRecord.from_traces(
		simulate_record(evolve(ref, 0.63), SimConfig(samples_per_trace=20_000, **IDEAL))
	)
	estimate = bootstrap_markers(record, resamples=5, seed=1, bins=16)
	assert estimate.resamples == 5 and estimate.seed == 1
	assert set(estimate.std) == set(MarkerReport.value_columns())
	assert estimate.std["w_phs"] > 0
	assert estimate.mean["w_phs"] == pytest.approx(estimate.report.w_phs, abs=0.2)
	assert estimate.report.entangled_phs
	assert estimate.cm_std.shape == (4, 4)
	assert estimate.T is None
	again = bootstrap_markers(record, resamples=5, seed=1, bins=16)
	np.testing.assert_equal(again.std, estimate.std)


@pytest.mark.parametrize(
	"T, samples",
	[(0.63, 100_000), (0.3, 100_000), (0.1, 100_000), (0.01, 1_000_000)],
)
def test_bootstrap_recovers_transmission(ref, T, samples):
	cfg = SimConfig(samples_per_trace=samples, seed=5, **IDEAL)
	record = MeasurementRecord.from_traces(simulate_record(evolve(ref, T), cfg))
	estimate = bootstrap_markers(record, resamples=20, infer_T=True)
	assert estimate.T_resamples >= 10
	assert math.isfinite(estimate.T) and math.isfinite(estimate.T_std)
	assert abs(estimate.T - T) <= 3 * estimate.T_std
	assert abs(estimate.T_mean - T) <= 3 * estimate.T_std


def test_transmission_spread_needs_half_the_resamples(ideal_record, monkeypatch, caplog):
	def no_preimage(*args, **kwargs):
		raise NoPurePreimage("no pure-source preimage", 1.0)

	monkeypatch.setattr("cv_markers.reconstruction.infer_transmission", no_preimage)
	with caplog.at_level(logging.WARNING, logger="cv_markers.reconstruction"):
		estimate = bootstrap_markers(ideal_record[1], resamples=3, bins=16, infer_T=True)
	assert estimate.T_resamples == 0
	assert math.isnan(estimate.T) and math.isnan(estimate.T_mean) and math.isnan(estimate.T_std)
	assert "0 of 3 resamples" in caplog.text


def test_reconstruct_corrects_visibility(ref):
	record = MeasurementRecord.from_traces(simulate_record(ref, SimConfig(samples_per_trace=100_000, seed=3)))
	assert record.visibility == 0.98
	detected = reconstruct(record, subtract_electronic=True)
	result = reconstruct(record, subtract_electronic=True, visibility=record.visibility)
	np.testing.assert_allclose(result.cm.matrix, back_propagate(detected.cm, 0.98**2).matrix)
	np.testing.assert_allclose(result.errors, detected.errors / 0.98**2)
	assert abs(result.cm.matrix[0, 2] - C_REF) <= 3 * result.errors[0, 2]
	assert abs(result.cm.matrix[1, 3] + C_REF) <= 3 * result.errors[1, 3]
	assert correct_visibility(detected, 1.0) is detected


def test_bootstrap_error_bars_cover_the_source(ref):
	record = MeasurementRecord.from_traces(simulate_record(ref, SimConfig(samples_per_trace=100_000, seed=11)))
	estimate = bootstrap_markers(record, resamples=50, seed=11, subtract_electronic=True, visibility=0.98)
	deviation = np.abs(estimate.reconstruction.cm.matrix - ref.matrix)
	assert np.all(deviation <= 3 * estimate.cm_std)
	assert estimate.cm_std[0, 2] <= 0.02
	assert 1e-4 <= estimate.std["w_phs"] <= 0.1


def test_binned_variance_fit_matches_sampling_error(ideal_record):
	_, record = ideal_record
	for mode in ModeSelector:
		fitted = fit_moments(calibrate(record.modes[mode], record.shot), bins=128)
		assert 0.5 <= fitted.chi2_dof <= 2


CONSISTENCY_MARKERS = (
	"mu", "entropy", "w_phs", "w_duan", "w_epr_1to2", "w_epr_2to1",
	"fidelity", "mutual_info", "discord_meas2", "discord_meas1",
)


def test_markers_agree_with_the_truth_within_bootstrap_spread(ref):
	state = evolve(ref, 0.63)
	truth = classify(state)
	trials = 40
	agree = dict.fromkeys(CONSISTENCY_MARKERS, 0)
	for trial in range(trials):
		cfg = SimConfig(samples_per_trace=20_000, seed=100 + trial, **IDEAL)
		record = MeasurementRecord.from_traces(simulate_record(state, cfg))
		estimate = bootstrap_markers(record, resamples=20, seed=trial, bins=16)
		for name in CONSISTENCY_MARKERS:
			error = abs(getattr(estimate.report, name) - getattr(truth, name))
			agree[name] += error <= 3 * estimate.std[name]
	assert all(count >= 0.95 * trials for count in agree.values()), agree


def test_bootstrap_needs_two_resamples(ideal_record):
	with pytest.raises(InvalidConfig):
		bootstrap_markers(ideal_record[1], resamples=1)


def test_marker_estimate_in_bits(ideal_record):
	estimate = bootstrap_markers(ideal_record[1], resamples=3, bins=16)
	bits = estimate.in_bits()
	for name in MarkerReport.ENTROPIC:
		assert getattr(bits.report, name) == pytest.approx(getattr(estimate.report, name) / math.log(2))
		assert bits.std[name] == pytest.approx(estimate.std[name] / math.log(2))
	assert bits.std["w_phs"] == estimate.std["w_phs"]
	assert bits.reconstruction is estimate.reconstruction
