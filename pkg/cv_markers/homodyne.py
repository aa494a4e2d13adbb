"""Synthetic homodyne record: six polarisation-selected modes plus shot noise.

Samples are already-demodulated quadrature values taken over one uniform
2*pi sweep of the local-oscillator phase.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, NamedTuple, Optional

import numpy as np

from .channel import evolve
from .errors import DegenerateTrace, DomainError, InvalidConfig, UnphysicalState
from .gaussian import SQL, State, as_covariance, is_bona_fide

log = logging.getLogger(__name__)

_R = 1 / math.sqrt(2)


class ModeSelector(str, Enum):
	A = "a"  # signal
	B = "b"  # idler
	C = "c"  # (a + b)/sqrt2
	D = "d"  # (a - b)/sqrt2
	E = "e"  # (ia + b)/sqrt2
	F = "f"  # (ia - b)/sqrt2


SHOT_LABEL = "shot"

# (X, Y) of every selectable mode as rows acting on (X1, Y1, X2, Y2)
MODE_QUADRATURES = {
	ModeSelector.A: (np.array([1.0, 0, 0, 0]), np.array([0, 1.0, 0, 0])),
	ModeSelector.B: (np.array([0, 0, 1.0, 0]), np.array([0, 0, 0, 1.0])),
	ModeSelector.C: (np.array([_R, 0, _R, 0]), np.array([0, _R, 0, _R])),
	ModeSelector.D: (np.array([_R, 0, -_R, 0]), np.array([0, _R, 0, -_R])),
	ModeSelector.E: (np.array([0, -_R, _R, 0]), np.array([_R, 0, 0, _R])),
	ModeSelector.F: (np.array([0, -_R, -_R, 0]), np.array([_R, 0, 0, -_R])),
}


class Moments(NamedTuple):
	var_x: float
	var_y: float
	cov_xy: float


@dataclass(frozen=True)
class SimConfig:
	samples_per_trace: int = 1_000_000
	visibility: float = 0.98
	electronic_noise_db_below_shot: Optional[float] = 16.0  # None disables it
	seed: int = 0
	detector_gain: float = 1.0  # raw units per shot-noise unit of variance
	# metadata only, the demodulation chain is not modelled
	demodulation_hz: float = 3e6
	bandwidth_hz: float = 3e5

	def __post_init__(self):
		if int(self.samples_per_trace) != self.samples_per_trace or self.samples_per_trace <= 0:
			raise InvalidConfig(f"samples_per_trace must be a positive integer, got {self.samples_per_trace}")
		if not 0 < self.visibility <= 1:
			raise InvalidConfig(f"visibility must lie in (0, 1], got {self.visibility}")
		noise = self.electronic_noise_db_below_shot
		if noise is not None and not noise > 0:
			raise InvalidConfig(f"electronic noise must sit below the shot noise, got {noise} dB")
		if not self.detector_gain > 0:
			raise InvalidConfig(f"detector gain must be positive, got {self.detector_gain}")

	@property
	def efficiency(self) -> float:
		return self.visibility**2

	@property
	def electronic_variance(self) -> float:
		"""Electronic noise floor in shot-noise units."""
		if self.electronic_noise_db_below_shot is None:
			return 0.0
		return SQL * 10 ** (-self.electronic_noise_db_below_shot / 10)


@dataclass(eq=False)
class HomodyneTrace:
	mode: Optional[ModeSelector]  # None for the shot-noise reference
	phases: np.ndarray
	values: np.ndarray
	calibrated: bool = False
	seed: Optional[int] = None
	sweep: str = "uniform 2pi"
	electronic_variance: float = 0.0  # in the units of `values`
	variance_offset: float = 0.0  # subtracted from fitted variances
	visibility: Optional[float] = None  # interferometer visibility, when known

	def __post_init__(self):
		self.phases = np.asarray(self.phases, dtype=float)
		self.values = np.asarray(self.values, dtype=float)
		if self.mode is not None:
			self.mode = ModeSelector(self.mode)
		if self.phases.shape != self.values.shape or self.phases.ndim != 1:
			raise DomainError("phases and values must be 1-D arrays of equal length")
		if self.values.size == 0:
			raise DegenerateTrace(f"trace '{self.label}' has no samples")
		if np.any(np.diff(self.phases) < 0):
			raise DomainError(f"trace '{self.label}' phases are not monotone within the sweep")
		if self.visibility is not None and not 0 < self.visibility <= 1:
			raise DomainError(f"trace '{self.label}' visibility must lie in (0, 1], got {self.visibility}")

	@property
	def label(self) -> str:
		return SHOT_LABEL if self.mode is None else self.mode.value

	def __len__(self):
		return self.values.size

	def replace(self, **changes) -> "HomodyneTrace":
		return dataclasses.replace(self, **changes)


def mode_moments(state: State, mode) -> Moments:
	"""Second moments of the X and Y quadratures of the selected mode."""
	sigma = as_covariance(state).matrix
	u, v = MODE_QUADRATURES[ModeSelector(mode)]
	return Moments(float(u @ sigma @ u), float(v @ sigma @ v), float(u @ sigma @ v))


def quadrature_variance(moments: Moments, theta):
	var_x, var_y, cov_xy = moments
	c, s = np.cos(theta), np.sin(theta)
	return c * c * var_x + s * s * var_y + 2 * s * c * cov_xy


def trace_seed(cfg: SimConfig, mode=None) -> int:
	"""Independent per-trace seed derived from the configured seed."""
	index = 0 if mode is None else list(ModeSelector).index(ModeSelector(mode)) + 1
	return int(np.random.SeedSequence([cfg.seed, index]).generate_state(1)[0])


def _sweep(cfg: SimConfig) -> np.ndarray:
	n = cfg.samples_per_trace
	return 2 * math.pi * np.arange(n) / n


def simulate_trace(state: State, mode, cfg: SimConfig) -> HomodyneTrace:
	if not is_bona_fide(state).flag:
		raise UnphysicalState("cannot simulate an unphysical state")
	mode = ModeSelector(mode)
	seed = trace_seed(cfg, mode)
	rng = np.random.default_rng(seed)
	phases = _sweep(cfg)
	eta = cfg.efficiency
	variance = (
		eta * quadrature_variance(mode_moments(state, mode), phases)
		+ (1 - eta) * SQL
		+ cfg.electronic_variance
	)
	values = math.sqrt(cfg.detector_gain) * np.sqrt(variance) * rng.standard_normal(phases.size)
	log.debug("simulated mode %s: %d samples, seed %d", mode.value, phases.size, seed)
	return HomodyneTrace(
		mode, phases, values, seed=seed,
		electronic_variance=cfg.detector_gain * cfg.electronic_variance,
		visibility=cfg.visibility,
	)


def simulate_shot_noise(cfg: SimConfig) -> HomodyneTrace:
	"""Vacuum-input trace used as the calibration reference."""
	seed = trace_seed(cfg)
	rng = np.random.default_rng(seed)
	phases = _sweep(cfg)
	std = math.sqrt(cfg.detector_gain * (SQL + cfg.electronic_variance))
	return HomodyneTrace(
		None, phases, std * rng.standard_normal(phases.size), seed=seed,
		electronic_variance=cfg.detector_gain * cfg.electronic_variance,
		visibility=cfg.visibility,
	)


def simulate_record(state: State, cfg: SimConfig) -> Dict[str, HomodyneTrace]:
	"""Shot-noise trace plus one trace per selectable mode, keyed by label."""
	record = {SHOT_LABEL: simulate_shot_noise(cfg)}
	for mode in ModeSelector:
		record[mode.value] = simulate_trace(state, mode, cfg)
	return record


def effective_state(state: State, cfg: SimConfig):
	"""Matrix an ideal reconstruction returns once the electronic floor is removed
	and no visibility correction is applied."""
	return evolve(state, cfg.efficiency)
