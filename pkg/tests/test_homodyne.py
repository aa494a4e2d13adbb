import math

import numpy as np
import pytest

from conftest import C_REF, random_physical_cm
from cv_markers.channel import evolve
from cv_markers.errors import DegenerateTrace, DomainError, InvalidConfig, UnphysicalState
from cv_markers.gaussian import StandardFormCM
from cv_markers.homodyne import (
	SHOT_LABEL,
	HomodyneTrace,
	ModeSelector,
	Moments,
	SimConfig,
	effective_state,
	mode_moments,
	quadrature_variance,
	simulate_record,
	simulate_shot_noise,
	simulate_trace,
	trace_seed,
)

IDEAL = dict(visibility=1.0, electronic_noise_db_below_shot=None)


def test_mode_moments_examples(ref):
	assert mode_moments(ref, "c") == pytest.approx((1.866025, 0.133975, 0), abs=1e-6)
	assert mode_moments(ref, ModeSelector.D) == pytest.approx((0.133975, 1.866025, 0), abs=1e-6)
	assert mode_moments(ref, "a") == pytest.approx((1, 1, 0))
	var_x, var_y, cov_xy = mode_moments(ref, "e")
	assert (var_x, var_y) == pytest.approx((1, 1))
	# the +-45 degree modes carry the correlations in their covariance
	assert cov_xy == pytest.approx(C_REF)
	assert mode_moments(ref, "f").cov_xy == pytest.approx(-C_REF)


def test_mode_moments_sum_rules(rng):
	for _ in range(50):
		cm = random_physical_cm(rng)
		m = {mode: mode_moments(cm, mode) for mode in ModeSelector}
		photons = [m[x].var_x + m[x].var_y + m[y].var_x + m[y].var_y for x, y in ("ab", "cd", "ef")]
		assert photons == pytest.approx([photons[0]] * 3)
		assert m["c"].var_x + m["d"].var_x == pytest.approx(m["a"].var_x + m["b"].var_x)


def test_quadrature_variance_examples():
	moments = Moments(1.866025, 0.133975, 0)
	assert quadrature_variance(moments, 0) == pytest.approx(1.866025)
	assert quadrature_variance(moments, math.pi / 2) == pytest.approx(0.133975)
	assert quadrature_variance(Moments(1, 2, 0.3), math.pi / 4) == pytest.approx(1.8)
	np.testing.assert_allclose(quadrature_variance(moments, np.array([0, math.pi])), [1.866025] * 2)


@pytest.mark.parametrize(
	"changes",
	[
		dict(samples_per_trace=0),
		dict(samples_per_trace=10.5),
		dict(visibility=0.0),
		dict(visibility=1.2),
		dict(electronic_noise_db_below_shot=-3.0),
		dict(detector_gain=0.0),
	],
)
def test_sim_config_validation(changes):
	with pytest.raises(InvalidConfig):
		SimConfig(**changes)


def test_sim_config_derived_values():
	cfg = SimConfig()
	assert cfg.efficiency == pytest.approx(0.9604)
	assert cfg.electronic_variance == pytest.approx(0.5 * 10**-1.6)
	assert SimConfig(electronic_noise_db_below_shot=None).electronic_variance == 0


def test_trace_seeds_are_distinct_and_stable():
	cfg = SimConfig(seed=5)
	seeds = [trace_seed(cfg)] + [trace_seed(cfg, mode) for mode in ModeSelector]
	assert len(set(seeds)) == 7
	assert trace_seed(SimConfig(seed=5), "c") == trace_seed(cfg, ModeSelector.C)
	assert trace_seed(SimConfig(seed=6), "c") != trace_seed(cfg, "c")


def test_simulation_is_deterministic(ref):
	cfg = SimConfig(samples_per_trace=1000, seed=3)
	first = simulate_trace(ref, "c", cfg)
	again = simulate_trace(ref, "c", cfg)
	np.testing.assert_array_equal(first.values, again.values)
	other = simulate_trace(ref, "c", SimConfig(samples_per_trace=1000, seed=4))
	assert not np.array_equal(first.values, other.values)


def test_simulated_trace_layout(ref):
	trace = simulate_trace(ref, "b", SimConfig(samples_per_trace=1000))
	assert len(trace) == 1000
	assert trace.label == "b"
	assert not trace.calibrated
	np.testing.assert_allclose(trace.phases, 2 * np.pi * np.arange(1000) / 1000)


def test_simulated_variance_matches_moments(ref):
	n = 200_000
	trace = simulate_trace(ref, "c", SimConfig(samples_per_trace=n, **IDEAL))
	# averaged over a full sweep the variance is (var_x + var_y) / 2
	assert np.var(trace.values) == pytest.approx(1.0, abs=5 * math.sqrt(2 / n) * 1.3)
	near_zero = np.cos(trace.phases) ** 2 > 0.999
	assert np.var(trace.values[near_zero]) == pytest.approx(1.866025, rel=0.1)


def test_visibility_degrades_squeezing(ref):
	cfg = SimConfig(samples_per_trace=200_000)
	trace = simulate_trace(ref, "d", cfg)
	near_min = np.cos(trace.phases) ** 2 > 0.999
	expected = cfg.efficiency * 0.133975 + (1 - cfg.efficiency) * 0.5 + cfg.electronic_variance
	measured = np.var(trace.values[near_min])
	assert measured == pytest.approx(expected, rel=0.1)
	assert measured < 0.5


def test_detector_gain_scales_values(ref):
	base = simulate_trace(ref, "a", SimConfig(samples_per_trace=500))
	scaled = simulate_trace(ref, "a", SimConfig(samples_per_trace=500, detector_gain=4.0))
	np.testing.assert_allclose(scaled.values, 2 * base.values)
	assert scaled.electronic_variance == pytest.approx(4 * base.electronic_variance)


def test_shot_noise_reference():
	n = 200_000
	cfg = SimConfig(samples_per_trace=n)
	shot = simulate_shot_noise(cfg)
	assert shot.mode is None and shot.label == SHOT_LABEL
	assert np.var(shot.values) == pytest.approx(0.5 + cfg.electronic_variance, rel=5 * math.sqrt(2 / n))


def test_simulate_record(ref):
	record = simulate_record(ref, SimConfig(samples_per_trace=100))
	assert list(record) == [SHOT_LABEL, "a", "b", "c", "d", "e", "f"]
	assert all(len(trace) == 100 for trace in record.values())
	assert all(trace.visibility == 0.98 for trace in record.values())


def test_simulate_rejects_unphysical():
	with pytest.raises(UnphysicalState):
		simulate_trace(StandardFormCM(1, 1, 0.9, 0.9), "a", SimConfig(samples_per_trace=10))


def test_homodyne_trace_validation():
	with pytest.raises(DomainError):
		HomodyneTrace("a", np.zeros(3), np.zeros(4))
	with pytest.raises(DegenerateTrace):
		HomodyneTrace("a", np.zeros(0), np.zeros(0))
	with pytest.raises(DomainError):
		HomodyneTrace("a", np.array([0.0, 2.0, 1.0]), np.zeros(3))
	with pytest.raises(DomainError):
		HomodyneTrace("a", np.zeros(2), np.zeros(2), visibility=1.5)
	with pytest.raises(ValueError):
		HomodyneTrace("g", np.zeros(2), np.zeros(2))
	trace = HomodyneTrace("a", [0.0, 1.0], [0.1, -0.1])
	assert trace.replace(calibrated=True).calibrated


def test_effective_state(ref):
	cfg = SimConfig(visibility=0.9)
	assert effective_state(ref, cfg).allclose(evolve(ref, 0.81))
