"""Lossy Gaussian channel: a beam splitter of power transmission T mixing each
mode with vacuum.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .errors import CVMarkersError, InvalidChannel, InvalidCovarianceMatrix, NoPurePreimage, UnphysicalState
from .gaussian import (
	PHYSICAL_TOL,
	SQL,
	CovarianceMatrix4,
	State,
	StandardFormCM,
	as_covariance,
	heisenberg_gap,
	is_bona_fide,
	standard_form,
)
from .markers import MarkerReport, classify

log = logging.getLogger(__name__)

FIDELITY_CROSSCHECK_TOL = 1e-12
ERROR_BAND_SD = 3.0


@dataclass(frozen=True)
class ChannelSpec:
	"""Power transmission T; T2 set only for the per-mode loss extension."""

	T: float
	T2: Optional[float] = None

	def __post_init__(self):
		for name in ("T", "T2"):
			value = getattr(self, name)
			if value is None:
				continue
			value = float(value)
			if not (math.isfinite(value) and 0.0 <= value <= 1.0):
				raise InvalidChannel(f"transmission {name} must lie in [0, 1], got {value}")
			object.__setattr__(self, name, value)

	@classmethod
	def from_decay(cls, gamma: float, t: float) -> "ChannelSpec":
		"""T = exp(-gamma t) for damping rate gamma (1/s) over time t (s)."""
		if gamma < 0 or t < 0:
			raise InvalidChannel(f"damping rate and time must be non-negative, got {gamma}, {t}")
		return cls(math.exp(-gamma * t))

	@property
	def transmissions(self):
		return self.T, self.T if self.T2 is None else self.T2

	@property
	def symmetric(self) -> bool:
		return self.T2 is None or self.T2 == self.T

	@property
	def zeta(self) -> float:
		"""Beam-splitter angle, tan(zeta) = sqrt((1 - T) / T)."""
		if self.T == 0:
			return math.pi / 2
		return math.atan(math.sqrt((1 - self.T) / self.T))


class TransmissionEstimate(NamedTuple):
	T: float
	sigma_1: State  # StandardFormCM unless only the error band made it pass
	heisenberg_gap: float = 0.0


@dataclass
class TrajectoryRow:
	T: float
	report: MarkerReport
	n_T: float
	m_T: float
	c1_T: float
	c2_T: float
	mean_photons: float

	@property
	def mean_correlation(self) -> float:
		return (abs(self.c1_T) + abs(self.c2_T)) / 2


@dataclass
class TrajectoryTable:
	rows: List[TrajectoryRow] = field(default_factory=list)

	def __len__(self):
		return len(self.rows)

	def __iter__(self):
		return iter(self.rows)

	@property
	def transmissions(self) -> np.ndarray:
		return np.array([row.T for row in self.rows])

	def column(self, name: str) -> np.ndarray:
		"""Row attribute or MarkerReport field as an array."""
		if name in TrajectoryRow.__dataclass_fields__ or name == "mean_correlation":
			return np.array([getattr(row, name) for row in self.rows])
		return np.array([getattr(row.report, name) for row in self.rows])


ChannelLike = Union[ChannelSpec, float]


def _channel(ch: ChannelLike) -> ChannelSpec:
	return ch if isinstance(ch, ChannelSpec) else ChannelSpec(ch)


def loss_budget(
	escape: float = 0.73,
	visibility: float = 0.98,
	photodiode: float = 0.90,
	propagation_loss: float = 0.01,
	attenuator: float = 1.0,
) -> ChannelSpec:
	"""Overall transmission from the individual efficiencies of the set-up.

	Visibility enters squared, as a mode-matching efficiency.
	"""
	T = escape * visibility**2 * photodiode * (1 - propagation_loss) * attenuator
	return ChannelSpec(T)


def evolve(state: State, ch: ChannelLike) -> CovarianceMatrix4:
	"""sigma_T = (1 - T) I/2 + T sigma, per mode when T2 is set."""
	ch = _channel(ch)
	cm = as_covariance(state)
	if not is_bona_fide(cm).flag:
		raise UnphysicalState("channel evolution needs a physical input state")
	T1, T2 = ch.transmissions
	gain = np.diag(np.sqrt([T1, T1, T2, T2]))
	vacuum = SQL * (np.eye(4) - gain @ gain)
	return CovarianceMatrix4(gain @ cm.matrix @ gain + vacuum)


def evolve_standard(sf: StandardFormCM, ch: ChannelLike) -> StandardFormCM:
	ch = _channel(ch)
	T1, T2 = ch.transmissions
	scale = math.sqrt(T1 * T2)
	return StandardFormCM(
		SQL + T1 * (sf.n - SQL),
		SQL + T2 * (sf.m - SQL),
		sf.c1 * scale,
		sf.c2 * scale,
	)


def back_propagate(state: State, T: float) -> CovarianceMatrix4:
	"""Source matrix that a channel of transmission T maps onto `state`."""
	if not 0 < T <= 1:
		raise InvalidChannel(f"back-propagation needs T in (0, 1], got {T}")
	sigma = as_covariance(state).matrix
	return CovarianceMatrix4((sigma - (1 - T) * SQL * np.eye(4)) / T)


def infer_transmission(
	state: State,
	tol: float = PHYSICAL_TOL,
	t_min: float = 1e-4,
	points: int = 400,
	errors: Optional[np.ndarray] = None,
) -> TransmissionEstimate:
	"""Transmission for which the back-propagated source is pure (det = 1/16).

	Candidate roots are bracketed on a log-spaced grid of (t_min, 1]; among
	the roots whose source passes the Heisenberg check, the largest T wins.
	The check allows `tol`, widened by ERROR_BAND_SD standard errors of the
	measured matrix when `errors` is given: back-propagation divides the
	measurement noise by T, so near-vacuum inputs give noisy sources.
	"""
	sigma = as_covariance(state).matrix
	excess = sigma - SQL * np.eye(4)
	if np.abs(excess).max() <= PHYSICAL_TOL:
		raise NoPurePreimage("vacuum input: every transmission has a pure-source preimage", 0.0)
	noise = 0.0 if errors is None else ERROR_BAND_SD * float(np.linalg.norm(np.asarray(errors, dtype=float), 2))

	def scaled_residual(T):
		# T^4 (det sigma_1(T) - 1/16), same sign and well conditioned near T -> 0
		return np.linalg.det(excess + T * SQL * np.eye(4)) - T**4 / 16

	grid = np.geomspace(t_min, 1.0, points)
	values = np.array([scaled_residual(T) for T in grid])
	candidates = set()
	for T, value in zip(grid, values):
		if abs(value) <= 1e-10 * T**4 / 16:
			candidates.add(float(T))
	for (a, b), (fa, fb) in zip(zip(grid[:-1], grid[1:]), zip(values[:-1], values[1:])):
		if fa * fb < 0:
			candidates.add(float(brentq(scaled_residual, a, b, xtol=1e-15, rtol=1e-14)))

	best_gap = -math.inf
	for T in sorted(candidates, reverse=True):
		T = min(T, 1.0)
		try:
			source = back_propagate(sigma, T)
		except InvalidCovarianceMatrix:
			continue
		gap = heisenberg_gap(source)
		best_gap = max(best_gap, gap)
		if gap >= -(tol + noise / T):
			log.info("inferred transmission T=%.6g (Heisenberg gap %.3e)", T, gap)
			try:
				sigma_1 = standard_form(source, max(tol, PHYSICAL_TOL))
			except CVMarkersError:
				# inside the error band but not reducible
				sigma_1 = source
			return TransmissionEstimate(T, sigma_1, gap)
	raise NoPurePreimage("no pure-source preimage", -best_gap if candidates else math.inf)


def mean_photon_number(state: State) -> float:
	"""(n + m - 1) / 2 generalised to (tr sigma - 2) / 4."""
	if isinstance(state, StandardFormCM):
		return (state.n + state.m - 1) / 2
	return (float(np.trace(as_covariance(state).matrix)) - 2) / 4


def mean_correlation(state: State) -> float:
	sigma = as_covariance(state).matrix
	return (abs(sigma[0, 2]) + abs(sigma[1, 3])) / 2


def expanded_fidelity(sf: StandardFormCM) -> float:
	s = sf.m + sf.n
	radicand = 1 + s * s + 2 * (sf.c2 - sf.c1) * (1 + s) + 2 * (s - 2 * sf.c1 * sf.c2)
	return 1 / math.sqrt(radicand)


def _validate_grid(T_grid: Iterable[float]) -> List[float]:
	grid = [float(T) for T in T_grid]
	if not grid:
		raise InvalidChannel("empty transmission grid")
	for T in grid:
		if not (math.isfinite(T) and 0 < T <= 1):
			raise InvalidChannel(f"grid value {T} outside (0, 1]")
	return grid


def marker_trajectory(
	sf_1: StandardFormCM, T_grid: Sequence[float], check_physical: bool = True
) -> TrajectoryTable:
	"""MarkerReport of the evolved state for every T, in grid order."""
	grid = _validate_grid(T_grid)
	if check_physical and not is_bona_fide(sf_1).flag:
		raise UnphysicalState("trajectory source is not a physical state")
	table = TrajectoryTable()
	for T in grid:
		sf_T = evolve_standard(sf_1, T)
		report = classify(sf_T)
		if report.physical:
			expanded = expanded_fidelity(sf_T)
			if abs(expanded - report.fidelity) > FIDELITY_CROSSCHECK_TOL:
				raise CVMarkersError(
					f"fidelity cross-check failed at T={T}: {expanded!r} != {report.fidelity!r}"
				)
		table.rows.append(
			TrajectoryRow(T, report, sf_T.n, sf_T.m, sf_T.c1, sf_T.c2, mean_photon_number(sf_T))
		)
	return table


def anchored_trajectory(cm_ref: State, T_ref: float, T_grid: Sequence[float]) -> TrajectoryTable:
	"""Trajectory whose source is fixed by a reference measurement taken at T_ref."""
	source = standard_form(back_propagate(cm_ref, T_ref))
	if not is_bona_fide(source).flag:
		log.warning("back-propagated source at T_ref=%g is not bona fide", T_ref)
	return marker_trajectory(source, T_grid, check_physical=False)
