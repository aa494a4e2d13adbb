"""From a shot-noise trace and six mode traces to a calibrated 4x4 covariance
matrix with error bars.

Pipeline: calibrate against the shot-noise reference, bin every trace by LO
phase, fit the binned variances to A + B cos 2theta + C sin 2theta, then
solve the overdetermined linear system for the ten independent CM elements.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Union

import numpy as np
from scipy.stats import kurtosis

from .channel import back_propagate, infer_transmission
from .errors import (
	CVMarkersError,
	DegenerateTrace,
	InsufficientSamples,
	InvalidConfig,
	MissingMode,
	NonStationaryTrace,
	RankDeficient,
)
from .gaussian import SQL, CovarianceMatrix4, State, is_bona_fide
from .homodyne import MODE_QUADRATURES, SHOT_LABEL, HomodyneTrace, ModeSelector, mode_moments
from .markers import MarkerReport, classify

log = logging.getLogger(__name__)

DEFAULT_BINS = 32
MIN_BINS = 16
MIN_SAMPLES_PER_BIN = 100
CHI2_LIMIT = 5.0
KURTOSIS_FLAG_SE = 5.0
DEFAULT_RESAMPLES = 200

# upper-triangle element order of the ten unknowns
ELEMENTS = tuple((i, j) for i in range(4) for j in range(i, 4))


@dataclass(frozen=True)
class ModeMoments:
	mode: Optional[ModeSelector]
	var_x: float
	var_y: float
	cov_xy: float
	se_x: float = 0.0
	se_y: float = 0.0
	se_xy: float = 0.0
	chi2_dof: float = 0.0

	def __post_init__(self):
		if not (self.var_x > 0 and self.var_y > 0):
			raise DegenerateTrace(
				f"mode {self.label}: fitted variances must be positive, got {self.var_x}, {self.var_y}"
			)

	@property
	def label(self) -> str:
		return SHOT_LABEL if self.mode is None else ModeSelector(self.mode).value

	@property
	def values(self) -> np.ndarray:
		return np.array([self.var_x, self.var_y, self.cov_xy])

	@property
	def errors(self) -> np.ndarray:
		return np.array([self.se_x, self.se_y, self.se_xy])


class GaussianityReport(NamedTuple):
	label: str
	excess_kurtosis: np.ndarray  # one entry per phase bin
	standard_error: np.ndarray
	flagged: bool

	@property
	def worst(self) -> float:
		"""Largest |kurtosis| in units of its standard error."""
		return float(np.max(np.abs(self.excess_kurtosis) / self.standard_error))


@dataclass(eq=False)
class ReconstructedCM:
	cm: CovarianceMatrix4
	errors: np.ndarray
	residual: float
	gaussianity: Dict[str, GaussianityReport] = field(default_factory=dict)
	moments: Dict[str, ModeMoments] = field(default_factory=dict)

	@property
	def physical(self) -> bool:
		return is_bona_fide(self.cm).flag


@dataclass
class MeasurementRecord:
	"""Shot-noise reference plus one trace per selectable mode."""

	shot: HomodyneTrace
	modes: Dict[ModeSelector, HomodyneTrace]

	def __post_init__(self):
		missing = [m.value for m in ModeSelector if m not in self.modes]
		if missing:
			raise MissingMode(f"missing mode(s): {', '.join(missing)}")

	@classmethod
	def from_traces(cls, traces: Union[Mapping[str, HomodyneTrace], Iterable[HomodyneTrace]]):
		if isinstance(traces, Mapping):
			traces = traces.values()
		shot, modes = None, {}
		for trace in traces:
			if trace.mode is None:
				shot = trace
			else:
				modes[trace.mode] = trace
		if shot is None:
			raise MissingMode("missing shot-noise calibration trace")
		return cls(shot, modes)

	def traces(self) -> List[HomodyneTrace]:
		return [self.shot] + [self.modes[m] for m in ModeSelector]

	@property
	def visibility(self) -> Optional[float]:
		"""Visibility recorded with the shot-noise reference, if any."""
		return self.shot.visibility


def _calibration(shot_values: np.ndarray, electronic_variance: float, subtract_electronic: bool):
	"""(variance scale, calibrated variance offset) mapping the vacuum level onto SQL."""
	if shot_values.size < 2:
		raise DegenerateTrace("shot-noise trace needs at least two samples")
	shot_var = float(np.var(shot_values, ddof=1))
	if not shot_var > 0:
		raise DegenerateTrace(f"shot-noise variance must be positive, got {shot_var}")
	if not subtract_electronic:
		return SQL / shot_var, 0.0
	vacuum = shot_var - electronic_variance
	if not vacuum > 0:
		raise DegenerateTrace("electronic noise exceeds the shot-noise variance")
	scale = SQL / vacuum
	return scale, electronic_variance * scale


def calibrate(trace: HomodyneTrace, shot: HomodyneTrace, subtract_electronic: bool = False) -> HomodyneTrace:
	"""Rescale so the pooled shot-noise variance maps to 1/2.

	With `subtract_electronic` the electronic floor recorded on the shot trace
	is removed in the variance domain instead of being absorbed in the scale.
	"""
	scale, offset = _calibration(shot.values, shot.electronic_variance, subtract_electronic)
	factor = math.sqrt(scale)
	log.debug("calibrating %s: variance scale %.6g, offset %.3g", trace.label, scale, offset)
	return trace.replace(
		values=trace.values * factor,
		calibrated=True,
		variance_offset=offset,
		electronic_variance=trace.electronic_variance * scale,
	)


def _bin_index(phases: np.ndarray, bins: int) -> np.ndarray:
	idx = np.floor(np.mod(phases, 2 * math.pi) * bins / (2 * math.pi)).astype(np.intp)
	return np.minimum(idx, bins - 1)


def _check_bins(bins: int):
	if bins < MIN_BINS:
		raise InsufficientSamples(f"at least {MIN_BINS} phase bins are required, got {bins}")


class _Binned(NamedTuple):
	idx: np.ndarray
	cos2: np.ndarray
	sin2: np.ndarray

	@classmethod
	def of(cls, trace: HomodyneTrace, bins: int) -> "_Binned":
		return cls(_bin_index(trace.phases, bins), np.cos(2 * trace.phases), np.sin(2 * trace.phases))


def _bin_statistics(values, binned: _Binned, bins: int, take=None):
	"""Per-bin counts, sample variances and mean cos/sin 2theta."""
	idx, cos2, sin2 = binned
	if take is not None:
		values, idx, cos2, sin2 = values[take], idx[take], cos2[take], sin2[take]
	counts = np.bincount(idx, minlength=bins).astype(float)
	if counts.min() < MIN_SAMPLES_PER_BIN:
		raise InsufficientSamples(
			f"every phase bin needs {MIN_SAMPLES_PER_BIN} samples, smallest has {int(counts.min())}"
		)
	mean = np.bincount(idx, weights=values, minlength=bins) / counts
	square = np.bincount(idx, weights=values * values, minlength=bins)
	variance = (square - counts * mean * mean) / (counts - 1)
	c2 = np.bincount(idx, weights=cos2, minlength=bins) / counts
	s2 = np.bincount(idx, weights=sin2, minlength=bins) / counts
	return counts, variance, c2, s2


def _fit_binned(mode, counts, variance, c2, s2, offset=0.0, check_stationary=True) -> ModeMoments:
	label = SHOT_LABEL if mode is None else ModeSelector(mode).value
	if np.any(variance <= 0):
		raise DegenerateTrace(f"trace {label} has a zero-variance phase bin")
	se = variance * np.sqrt(2 / (counts - 1))
	w = 1 / se**2
	design = np.column_stack([np.ones_like(c2), c2, s2])
	normal = design.T @ (w[:, None] * design)
	cov = np.linalg.inv(normal)
	params = cov @ (design.T @ (w * variance))
	dof = variance.size - 3
	chi2_dof = float(np.sum(w * (variance - design @ params) ** 2) / dof)
	if check_stationary and chi2_dof > CHI2_LIMIT:
		raise NonStationaryTrace(f"trace {label}: variance fit chi2/dof {chi2_dof:.2f} exceeds {CHI2_LIMIT}")
	A, B, C = params
	return ModeMoments(
		mode,
		float(A + B - offset),
		float(A - B - offset),
		float(C),
		math.sqrt(cov[0, 0] + cov[1, 1] + 2 * cov[0, 1]),
		math.sqrt(cov[0, 0] + cov[1, 1] - 2 * cov[0, 1]),
		math.sqrt(cov[2, 2]),
		chi2_dof,
	)


def fit_moments(trace: HomodyneTrace, bins: int = DEFAULT_BINS) -> ModeMoments:
	"""Sinusoidal fit of the phase-binned variance of a calibrated trace."""
	_check_bins(bins)
	if not trace.calibrated:
		log.warning("fitting moments of uncalibrated trace %s", trace.label)
	stats = _bin_statistics(trace.values, _Binned.of(trace, bins), bins)
	moments = _fit_binned(trace.mode, *stats, offset=trace.variance_offset)
	log.debug("mode %s moments %s chi2/dof %.3f", trace.label, moments.values, moments.chi2_dof)
	return moments


def design_matrix() -> np.ndarray:
	"""18 x 10 map from the unique CM elements to (VarX, VarY, CovXY) of each mode."""
	rows = []
	for mode in ModeSelector:
		u, v = MODE_QUADRATURES[mode]
		for a, b in ((u, u), (v, v), (u, v)):
			rows.append([a[i] * b[i] if i == j else a[i] * b[j] + a[j] * b[i] for i, j in ELEMENTS])
	return np.array(rows)


def exact_moments(state: State) -> List[ModeMoments]:
	"""Noise-free moments of all six modes, standard errors zero."""
	return [ModeMoments(mode, *mode_moments(state, mode)) for mode in ModeSelector]


def assemble_cm(moments: Union[Mapping, Iterable[ModeMoments]]) -> ReconstructedCM:
	"""Weighted least-squares inversion of the 18 fitted moments.

	Weights are inverse squared standard errors; any zero or missing error
	switches to ordinary least squares. The result is never coerced onto
	the physical set.
	"""
	if isinstance(moments, Mapping):
		moments = moments.values()
	by_mode = {ModeSelector(m.mode): m for m in moments if m.mode is not None}
	missing = [mode.value for mode in ModeSelector if mode not in by_mode]
	if missing:
		raise MissingMode(f"missing mode(s): {', '.join(missing)}")
	X = design_matrix()
	y = np.concatenate([by_mode[mode].values for mode in ModeSelector])
	se = np.concatenate([by_mode[mode].errors for mode in ModeSelector])
	if np.linalg.matrix_rank(X) < len(ELEMENTS):
		raise RankDeficient("mode design matrix does not determine every CM element")
	dof = X.shape[0] - X.shape[1]
	if np.all(np.isfinite(se)) and np.all(se > 0):
		w = 1 / se**2
		cov = np.linalg.inv(X.T @ (w[:, None] * X))
		params = cov @ (X.T @ (w * y))
		residual = float(np.sum(w * (y - X @ params) ** 2) / dof)
	else:
		params, *_ = np.linalg.lstsq(X, y, rcond=None)
		residual = float(np.sum((y - X @ params) ** 2) / dof)
		cov = residual * np.linalg.inv(X.T @ X)
	sigma = np.zeros((4, 4))
	errors = np.zeros((4, 4))
	sd = np.sqrt(np.clip(np.diag(cov), 0, None))
	for k, (i, j) in enumerate(ELEMENTS):
		sigma[i, j] = sigma[j, i] = params[k]
		errors[i, j] = errors[j, i] = sd[k]
	result = ReconstructedCM(
		CovarianceMatrix4(sigma), errors, residual,
		moments={m.value: by_mode[m] for m in ModeSelector},
	)
	if not result.physical:
		log.warning("reconstructed covariance matrix is not bona fide")
	return result


def gaussianity_check(trace: HomodyneTrace, bins: int = DEFAULT_BINS) -> GaussianityReport:
	"""Excess kurtosis per phase bin with standard error sqrt(24 / N_bin)."""
	idx = _bin_index(trace.phases, bins)
	counts = np.bincount(idx, minlength=bins)
	if counts.min() < 4:
		raise InsufficientSamples(f"trace {trace.label}: a phase bin holds {int(counts.min())} samples")
	order = np.argsort(idx, kind="stable")
	groups = np.split(trace.values[order], np.cumsum(counts)[:-1])
	excess = np.array([kurtosis(group) for group in groups])
	se = np.sqrt(24 / counts)
	flagged = bool(np.any(np.abs(excess) > KURTOSIS_FLAG_SE * se))
	if flagged:
		log.warning("trace %s is not Gaussian in at least one phase bin", trace.label)
	return GaussianityReport(trace.label, excess, se, flagged)


def correct_visibility(result: ReconstructedCM, visibility: float) -> ReconstructedCM:
	"""Undo the vacuum admixture of an interferometer of the given visibility.

	Detection at visibility V acts on the state like a channel of
	transmission V**2, so the source is its back-propagation.
	"""
	eta = visibility**2
	if eta == 1:
		return result
	corrected = replace(result, cm=back_propagate(result.cm, eta), errors=result.errors / eta)
	log.info("corrected for visibility %.4g (efficiency %.4g)", visibility, eta)
	if not corrected.physical:
		log.warning("visibility-corrected covariance matrix is not bona fide")
	return corrected


def reconstruct(
	record: MeasurementRecord,
	bins: int = DEFAULT_BINS,
	subtract_electronic: bool = False,
	visibility: Optional[float] = None,
) -> ReconstructedCM:
	"""Calibrate, fit and assemble; gaussianity reports are attached.

	Without `visibility` the result is the matrix seen through the detector;
	with it, the visibility loss is undone as well.
	"""
	moments, gaussianity = [], {}
	for mode in ModeSelector:
		trace = calibrate(record.modes[mode], record.shot, subtract_electronic)
		moments.append(fit_moments(trace, bins))
		gaussianity[mode.value] = gaussianity_check(trace, bins)
	result = assemble_cm(moments)
	result.gaussianity = gaussianity
	log.info("reconstructed CM, residual chi2/dof %.3f", result.residual)
	if visibility is not None:
		result = correct_visibility(result, visibility)
	return result


@dataclass(eq=False)
class MarkerEstimate:
	"""Point estimate on the full record plus bootstrap spread."""

	report: MarkerReport
	reconstruction: ReconstructedCM
	mean: Dict[str, float]
	std: Dict[str, float]
	cm_std: np.ndarray
	resamples: int
	seed: int
	T: Optional[float] = None
	T_mean: Optional[float] = None
	T_std: Optional[float] = None
	T_resamples: Optional[int] = None  # resamples with an inferred transmission

	def in_bits(self) -> "MarkerEstimate":
		"""Copy with entropic markers and their spread in bits."""
		scale = {name: 1 / math.log(2) for name in MarkerReport.ENTROPIC}
		return replace(
			self,
			report=self.report.in_bits(),
			mean={name: value * scale.get(name, 1) for name, value in self.mean.items()},
			std={name: value * scale.get(name, 1) for name, value in self.std.items()},
		)


def _infer_T(result: ReconstructedCM, tol: float) -> float:
	try:
		return infer_transmission(result.cm, tol=tol, errors=result.errors).T
	except CVMarkersError as exc:
		log.debug("transmission inference failed: %s", exc)
		return math.nan


def bootstrap_markers(
	record: MeasurementRecord,
	resamples: int = DEFAULT_RESAMPLES,
	seed: int = 0,
	bins: int = DEFAULT_BINS,
	subtract_electronic: bool = False,
	infer_T: bool = False,
	infer_tolerance: float = 0.05,
	visibility: Optional[float] = None,
) -> MarkerEstimate:
	"""Nonparametric bootstrap over the samples of every trace.

	Each resample redraws the shot-noise reference too, so the calibration
	uncertainty propagates into the markers. The transmission spread is NaN
	unless at least half of the resamples admit a pure-source preimage.
	"""
	if resamples < 2:
		raise InvalidConfig(f"bootstrap needs at least 2 resamples, got {resamples}")
	_check_bins(bins)
	point = reconstruct(record, bins, subtract_electronic, visibility)
	report = classify(point.cm)
	columns = MarkerReport.value_columns()

	shot = record.shot
	raw = [(mode, record.modes[mode]) for mode in ModeSelector]
	binned = [_Binned.of(trace, bins) for _, trace in raw]
	rng = np.random.default_rng(seed)
	values = np.full((resamples, len(columns)), math.nan)
	matrices = np.zeros((resamples, 4, 4))
	transmissions = np.full(resamples, math.nan)
	for r in range(resamples):
		take = rng.integers(0, len(shot), len(shot))
		scale, offset = _calibration(shot.values[take], shot.electronic_variance, subtract_electronic)
		moments = []
		for (mode, trace), b in zip(raw, binned):
			take = rng.integers(0, len(trace), len(trace))
			counts, variance, c2, s2 = _bin_statistics(trace.values, b, bins, take)
			moments.append(
				_fit_binned(mode, counts, variance * scale, c2, s2, offset, check_stationary=False)
			)
		sample = assemble_cm(moments)
		if visibility is not None:
			sample = correct_visibility(sample, visibility)
		matrices[r] = sample.cm.matrix
		sample_report = classify(sample.cm)
		values[r] = [getattr(sample_report, name) for name in columns]
		if infer_T:
			transmissions[r] = _infer_T(sample, infer_tolerance)
	log.info("bootstrap finished: %d resamples, seed %d", resamples, seed)

	with warnings.catch_warnings():
		# all-NaN columns (undefined markers) stay NaN
		warnings.simplefilter("ignore", RuntimeWarning)
		mean = dict(zip(columns, map(float, np.nanmean(values, axis=0))))
		std = dict(zip(columns, map(float, np.nanstd(values, axis=0, ddof=1))))
	estimate = MarkerEstimate(report, point, mean, std, matrices.std(axis=0, ddof=1), resamples, seed)
	if infer_T:
		found = transmissions[np.isfinite(transmissions)]
		estimate.T = _infer_T(point, infer_tolerance)
		estimate.T_resamples = int(found.size)
		if found.size >= max(2, resamples / 2):
			estimate.T_mean = float(found.mean())
			estimate.T_std = float(found.std(ddof=1))
		else:
			log.warning(
				"transmission inferred in only %d of %d resamples; no spread reported", found.size, resamples
			)
			estimate.T_mean = estimate.T_std = math.nan
	return estimate
