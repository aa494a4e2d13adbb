"""Entanglement witnesses, teleportation fidelity, mutual information and discord.

All functions take either a StandardFormCM or a full CovarianceMatrix4.
Standard forms are evaluated with the closed-form expressions; full
matrices go through the locally invariant or operator-variance forms,
which coincide with the closed forms on standard-form input.
"""
import logging
import math
from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import List, NamedTuple, Tuple

import numpy as np
from scipy.optimize import least_squares

from .errors import (
	ComplexSpectrum,
	CVMarkersError,
	DomainError,
	NotBlockSeparable,
	NotCanonicalDuanForm,
	SearchFailure,
	UnphysicalState,
)
from .gaussian import (
	PHYSICAL_TOL,
	SQL,
	CovarianceMatrix4,
	LocalSymplectic,
	State,
	StandardFormCM,
	apply_local_symplectic,
	as_covariance,
	entropy_f,
	invariants,
	is_block_separable,
	is_bona_fide,
	purity,
	symplectic_spectrum,
)

log = logging.getLogger(__name__)

DUAN_TOL = 1e-6
REGION_TOL = 1e-9

# rows of (X1 - X2, Y1 + Y2), the quadratures the teleportation protocol measures
_EPR_QUADRATURES = np.array([[1.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, 1.0]])


class Direction(str, Enum):
	"""Which subsystem is inferred from measurements on the other."""

	ONE_TO_TWO = "1to2"  # conditional variances of subsystem 1
	TWO_TO_ONE = "2to1"


class RegionLabel(str, Enum):
	I = "I"  # EPR correlated
	II = "II"  # Duan sufficient bound broken
	III = "III"  # PHS entangled, teleportation above 1/2
	IV = "IV"  # PHS entangled, teleportation at or below 1/2
	V = "V"  # separable
	VI = "VI"  # not bona fide


@dataclass(frozen=True)
class DuanFormCM:
	"""X and Y sectors with independent diagonals."""

	n1: float
	n2: float
	m1: float
	m2: float
	c1: float
	c2: float

	@classmethod
	def from_cm(cls, state: State, xy_tol: float = PHYSICAL_TOL) -> "DuanFormCM":
		if isinstance(state, StandardFormCM):
			return cls(state.n, state.n, state.m, state.m, state.c1, state.c2)
		if not is_block_separable(state, xy_tol):
			raise NotBlockSeparable("covariance matrix has X-Y cross moments")
		s = as_covariance(state).matrix
		return cls(s[0, 0], s[1, 1], s[2, 2], s[3, 3], s[0, 2], s[1, 3])

	@property
	def matrix(self) -> np.ndarray:
		return np.array(
			[
				[self.n1, 0.0, self.c1, 0.0],
				[0.0, self.n2, 0.0, self.c2],
				[self.c1, 0.0, self.m1, 0.0],
				[0.0, self.c2, 0.0, self.m2],
			]
		)

	def to_cm(self) -> CovarianceMatrix4:
		return CovarianceMatrix4(self.matrix)

	@property
	def canonical(self) -> bool:
		return duan_form_conditions(self).holds


class DuanConditions(NamedTuple):
	holds: bool
	a0: float


@dataclass
class MarkerReport:
	mu: float
	entropy: float
	w_phs: float
	w_duan: float
	w_epr_1to2: float
	w_epr_2to1: float
	fidelity: float
	mutual_info: float
	discord_meas2: float
	discord_meas1: float
	d_plus: float
	d_minus: float
	I1: float
	I2: float
	I3: float
	I4: float
	physical: bool
	entangled_phs: bool
	duan_sufficient: bool
	epr_1to2: bool
	epr_2to1: bool
	fidelity_quantum: bool

	ENTROPIC = ("entropy", "mutual_info", "discord_meas2", "discord_meas1")

	@classmethod
	def columns(cls) -> Tuple[str, ...]:
		return tuple(f.name for f in fields(cls))

	@classmethod
	def value_columns(cls) -> Tuple[str, ...]:
		return tuple(f.name for f in fields(cls) if f.type in (float, "float"))

	def as_dict(self) -> dict:
		return asdict(self)

	def in_bits(self) -> "MarkerReport":
		"""Copy with entropic quantities divided by ln 2."""
		values = self.as_dict()
		for name in self.ENTROPIC:
			values[name] = values[name] / math.log(2)
		return MarkerReport(**values)


def _nm(state: State) -> Tuple[float, float]:
	if isinstance(state, StandardFormCM):
		return state.n, state.m
	inv = invariants(state)
	return math.sqrt(inv.I1), math.sqrt(inv.I2)


def w_phs(state: State) -> float:
	"""Separability witness from positivity under partial transposition."""
	inv = invariants(state)
	value = 4 * inv.I4 + SQL * SQL - (inv.I1 + inv.I2) - 2 * abs(inv.I3)
	if not is_bona_fide(state).flag:
		log.debug("w_phs evaluated on an unphysical matrix: %g", value)
	return value


def w_duan(state: State) -> float:
	if isinstance(state, StandardFormCM):
		n, m, c1, c2 = state.n, state.m, state.c1, state.c2
		return 2 * math.sqrt(max((n - SQL) * (m - SQL), 0.0)) - (c1 - c2)
	s = as_covariance(state).matrix
	# minimum over a of Var(a X1 - X2/a) + Var(a Y1 + Y2/a) - (a^2 + 1/a^2), halved
	x_excess = s[0, 0] + s[1, 1] - 1
	p_excess = s[2, 2] + s[3, 3] - 1
	return math.sqrt(max(x_excess * p_excess, 0.0)) - (s[0, 2] - s[1, 3])


def w_epr(state: State, direction=Direction.ONE_TO_TWO) -> float:
	"""Product of optimal inferred variances minus 1/4."""
	direction = Direction(direction)
	if isinstance(state, StandardFormCM):
		n, m, c1, c2 = state.n, state.m, state.c1, state.c2
		prefactor = n * n if direction is Direction.ONE_TO_TWO else m * m
		return prefactor * (1 - c1 * c1 / (n * m)) * (1 - c2 * c2 / (n * m)) - SQL * SQL
	cm = as_covariance(state)
	alpha, beta, gamma = cm.alpha, cm.beta, cm.gamma
	if direction is Direction.ONE_TO_TWO:
		conditional = alpha - gamma @ np.linalg.solve(beta, gamma.T)
	else:
		conditional = beta - gamma.T @ np.linalg.solve(alpha, gamma)
	return float(np.linalg.det(conditional)) - SQL * SQL


def fidelity(state: State) -> float:
	"""Coherent-state teleportation fidelity with this state as resource."""
	if isinstance(state, StandardFormCM):
		n, m, c1, c2 = state.n, state.m, state.c1, state.c2
		a, b = 1 + m + n - 2 * c1, 1 + m + n + 2 * c2
		if a <= 0 or b <= 0:
			raise UnphysicalState(f"non-positive fidelity radicand ({a:g}, {b:g})")
		return 1 / math.sqrt(a * b)
	noise = _EPR_QUADRATURES @ as_covariance(state).matrix @ _EPR_QUADRATURES.T
	det = np.linalg.det(np.eye(2) + noise)
	if det <= 0:
		raise UnphysicalState(f"non-positive fidelity radicand ({det:g})")
	return 1 / math.sqrt(det)


def mutual_information(state: State) -> float:
	n, m = _nm(state)
	d_plus, d_minus = symplectic_spectrum(state)
	return entropy_f(n) + entropy_f(m) - entropy_f(d_plus) - entropy_f(d_minus)


def discord(state: State, measured: int = 2) -> float:
	"""Gaussian discord with a Gaussian measurement on subsystem `measured`."""
	if measured not in (1, 2):
		raise DomainError(f"measured subsystem must be 1 or 2, got {measured!r}")
	inv = invariants(state)
	n, m = _nm(state)
	if measured == 1:
		n, m = m, n
	if inv.I3 > 0:
		log.warning("discord evaluated with c1*c2 > 0 (I3=%g); inner term taken verbatim", inv.I3)
	inner = (n + 2 * n * m + 2 * inv.I3) / (1 + 2 * m)
	if inner < SQL - PHYSICAL_TOL:
		raise UnphysicalState(f"discord inner argument {inner:g} below 1/2")
	d_plus, d_minus = symplectic_spectrum(inv)
	return entropy_f(m) - entropy_f(d_plus) - entropy_f(d_minus) + entropy_f(inner)


def diagonal_witnesses(n: float, c: float) -> Tuple[float, float, float]:
	"""(w_phs, w_duan, w_epr) of the fully symmetric state (n, n, c, -c)."""
	w_p = 4 * (n * n - c * c) ** 2 + SQL * SQL - 2 * n * n - 2 * c * c
	w_d = 2 * (n - SQL) - 2 * c
	w_e = n * n * (1 - c * c / (n * n)) ** 2 - SQL * SQL
	return w_p, w_d, w_e


def _entropy(d_plus, d_minus):
	if math.isnan(d_minus):
		raise ComplexSpectrum("no symplectic spectrum")
	return entropy_f(d_plus) + entropy_f(d_minus)


def _guarded(fn, *args):
	try:
		return fn(*args)
	except CVMarkersError as exc:
		log.debug("%s undefined: %s", fn.__name__, exc)
		return math.nan


def classify(state: State, tol: float = REGION_TOL) -> MarkerReport:
	"""Evaluate every marker; unphysical input yields physical=False."""
	physical = is_bona_fide(state).flag
	inv = invariants(state)
	try:
		d_plus, d_minus = symplectic_spectrum(inv)
	except ComplexSpectrum:
		d_plus = d_minus = math.nan
	phs = w_phs(state)
	duan = w_duan(state)
	epr12 = w_epr(state, Direction.ONE_TO_TWO)
	epr21 = w_epr(state, Direction.TWO_TO_ONE)
	fid = _guarded(fidelity, state)
	return MarkerReport(
		mu=_guarded(purity, state),
		entropy=_guarded(_entropy, d_plus, d_minus),
		w_phs=phs,
		w_duan=duan,
		w_epr_1to2=epr12,
		w_epr_2to1=epr21,
		fidelity=fid,
		mutual_info=_guarded(mutual_information, state),
		discord_meas2=_guarded(discord, state, 2),
		discord_meas1=_guarded(discord, state, 1),
		d_plus=d_plus,
		d_minus=d_minus,
		I1=inv.I1,
		I2=inv.I2,
		I3=inv.I3,
		I4=inv.I4,
		physical=bool(physical),
		entangled_phs=bool(physical and phs < -tol),
		duan_sufficient=bool(physical and duan < -tol),
		epr_1to2=bool(physical and epr12 < -tol),
		epr_2to1=bool(physical and epr21 < -tol),
		fidelity_quantum=bool(physical and fid > 0.5 + tol),
	)


def classify_region(n: float, c1_tilde: float, c2_tilde: float, tol: float = REGION_TOL) -> RegionLabel:
	"""Region of the balanced (m = n) plane with c_i = c~_i sqrt(n^2 - 1/4)."""
	for name, value in (("c1_tilde", c1_tilde), ("c2_tilde", c2_tilde)):
		if not -1 - 1e-12 <= value <= 1 + 1e-12:
			raise DomainError(f"{name} must lie in [-1, 1], got {value}")
	c_max = math.sqrt(max(n * n - SQL * SQL, 0.0))
	sf = StandardFormCM(n, n, c1_tilde * c_max, c2_tilde * c_max)
	if not is_bona_fide(sf, tol).flag:
		return RegionLabel.VI
	if min(w_epr(sf, Direction.ONE_TO_TWO), w_epr(sf, Direction.TWO_TO_ONE)) < -tol:
		return RegionLabel.I
	if w_duan(sf) < -tol:
		return RegionLabel.II
	if w_phs(sf) < -tol:
		return RegionLabel.III if fidelity(sf) > 0.5 + tol else RegionLabel.IV
	return RegionLabel.V


MIN_REGION_RESOLUTION = 8


def region_grid(n: float, resolution: int) -> List[Tuple[float, float, RegionLabel]]:
	"""Labels of a resolution x resolution grid over [-1, 1]^2, c~1 outer."""
	if resolution < MIN_REGION_RESOLUTION:
		raise DomainError(f"region resolution must be at least {MIN_REGION_RESOLUTION}, got {resolution}")
	axis = np.linspace(-1.0, 1.0, resolution)
	return [(float(a), float(b), classify_region(n, a, b)) for a in axis for b in axis]


def duan_form_conditions(d: DuanFormCM, tol: float = DUAN_TOL) -> DuanConditions:
	dn1, dn2, dm1, dm2 = d.n1 - SQL, d.n2 - SQL, d.m1 - SQL, d.m2 - SQL
	if min(dn1, dn2, dm1, dm2) <= PHYSICAL_TOL:
		log.warning("vacuum-sector degenerate Duan form; conditions hold vacuously")
		return DuanConditions(True, 1.0)
	ratio1, ratio2 = dn1 / dm1, dn2 / dm2
	ratios_match = abs(ratio1 - ratio2) <= tol * max(1.0, abs(ratio1))
	lhs = abs(d.c1) - abs(d.c2)
	rhs = math.sqrt(dn1 * dm1) - math.sqrt(dn2 * dm2)
	correlations_match = abs(lhs - rhs) <= tol * max(1.0, abs(d.c1) + abs(d.c2))
	a0 = (dm1 / dn1) ** 0.25
	return DuanConditions(bool(ratios_match and correlations_match), a0)


def duan_necessary(d: DuanFormCM, tol: float = DUAN_TOL) -> float:
	"""Duan total-variance excess for the canonical form; negative iff entangled."""
	holds, a0 = duan_form_conditions(d, tol)
	if not holds:
		raise NotCanonicalDuanForm("not in canonical Duan form")
	a0_sq = a0 * a0
	return (
		a0_sq * (d.n1 + d.n2 - 1)
		+ (d.m1 + d.m2 - 1) / a0_sq
		- 2 * (abs(d.c1) + abs(d.c2))
	)


def _squeezed(d: DuanFormCM, log_s: float, log_t: float) -> DuanFormCM:
	s2, t2, st = math.exp(2 * log_s), math.exp(2 * log_t), math.exp(log_s + log_t)
	return DuanFormCM(d.n1 * s2, d.n2 / s2, d.m1 * t2, d.m2 / t2, d.c1 * st, d.c2 / st)


def _duan_residuals(x, d: DuanFormCM) -> np.ndarray:
	q = _squeezed(d, x[0], x[1])
	dn1, dn2, dm1, dm2 = q.n1 - SQL, q.n2 - SQL, q.m1 - SQL, q.m2 - SQL
	ratio = dn1 * dm2 - dn2 * dm1
	roots = math.sqrt(max(dn1 * dm1, 0.0)) - math.sqrt(max(dn2 * dm2, 0.0))
	return np.array([ratio, abs(q.c1) - abs(q.c2) - roots])


def unveil_by_local_squeezing(
	state: State, xy_tol: float = PHYSICAL_TOL, tol: float = DUAN_TOL
) -> Tuple[DuanFormCM, LocalSymplectic]:
	"""Squeeze each mode locally until the canonical Duan conditions hold."""
	if not is_bona_fide(state).flag:
		raise UnphysicalState("local squeezing search needs a physical state")
	d = DuanFormCM.from_cm(state, xy_tol)
	if duan_form_conditions(d, tol).holds:
		return d, LocalSymplectic.identity()

	# every sector must stay above the vacuum level: s^2 in (1/(2 n1), 2 n2)
	lo_s, hi_s = 0.5 * math.log(SQL / d.n1), 0.5 * math.log(d.n2 / SQL)
	lo_t, hi_t = 0.5 * math.log(SQL / d.m1), 0.5 * math.log(d.m2 / SQL)
	if lo_s >= hi_s or lo_t >= hi_t:
		raise SearchFailure("no squeezing keeps every sector above vacuum", float("inf"))
	shrink_s, shrink_t = 1e-6 * (hi_s - lo_s), 1e-6 * (hi_t - lo_t)
	lower = np.array([lo_s + shrink_s, lo_t + shrink_t])
	upper = np.array([hi_s - shrink_s, hi_t - shrink_t])

	starts = [np.clip(np.zeros(2), lower, upper)]
	grid_s, grid_t = np.linspace(lower[0], upper[0], 7)[1:-1], np.linspace(lower[1], upper[1], 7)[1:-1]
	starts += [np.array([a, b]) for a in grid_s for b in grid_t]

	best_residual = math.inf
	for x0 in starts:
		fit = least_squares(
			_duan_residuals, x0, args=(d,), bounds=(lower, upper),
			xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000,
		)
		candidate = _squeezed(d, fit.x[0], fit.x[1])
		residual = float(np.abs(fit.fun).max())
		best_residual = min(best_residual, residual)
		if duan_form_conditions(candidate, tol).holds:
			op = LocalSymplectic.squeezing(math.exp(fit.x[0]), math.exp(fit.x[1]))
			log.info("canonical Duan form reached with s=%g t=%g", *np.exp(fit.x))
			return candidate, op
	raise SearchFailure("local squeezing search did not reach the canonical Duan form", best_residual)


def unveiled_state(state: State) -> CovarianceMatrix4:
	"""Input transformed by the squeezing unveil_by_local_squeezing finds."""
	_, op = unveil_by_local_squeezing(state)
	return apply_local_symplectic(state, op)
