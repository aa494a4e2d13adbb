"""Covariance-matrix algebra of two-mode Gaussian states.

Every matrix is expressed in shot-noise units with the vacuum quadrature
variance fixed to 1/2 and the quadratures ordered (X1, Y1, X2, Y2).
"""
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy.linalg import block_diag
from scipy.special import xlogy

from .errors import (
	BelowShotNoise,
	ComplexSpectrum,
	DomainError,
	InvalidCovarianceMatrix,
	UnphysicalState,
)

log = logging.getLogger(__name__)

SQL = 0.5  # vacuum quadrature variance
SYMMETRY_TOL = 1e-12
PHYSICAL_TOL = 1e-9
RADICAND_TOL = 1e-9
UNIMODULAR_TOL = 1e-12

OMEGA = np.array([[0.0, 1.0], [-1.0, 0.0]])
OMEGA_2 = block_diag(OMEGA, OMEGA)

# (row, column) positions mixing an X with a Y quadrature
XY_POSITIONS = ((0, 1), (0, 3), (2, 1), (2, 3))


@dataclass(frozen=True, eq=False)
class CovarianceMatrix4:
	"""Symmetric 4x4 second-moment matrix of (X1, Y1, X2, Y2)."""

	matrix: np.ndarray

	def __post_init__(self):
		arr = np.array(self.matrix, dtype=float)
		if arr.shape != (4, 4):
			raise InvalidCovarianceMatrix(f"expected a 4x4 matrix, got shape {arr.shape}")
		if not np.all(np.isfinite(arr)):
			raise InvalidCovarianceMatrix("matrix has non-finite entries")
		scale = max(1.0, float(np.abs(arr).max()))
		if np.abs(arr - arr.T).max() > SYMMETRY_TOL * scale:
			raise InvalidCovarianceMatrix("matrix is not symmetric")
		if np.any(np.diag(arr) <= 0):
			raise InvalidCovarianceMatrix("diagonal entries must be strictly positive")
		arr = (arr + arr.T) / 2
		arr.flags.writeable = False
		object.__setattr__(self, "matrix", arr)

	@property
	def alpha(self) -> np.ndarray:
		return self.matrix[:2, :2]

	@property
	def beta(self) -> np.ndarray:
		return self.matrix[2:, 2:]

	@property
	def gamma(self) -> np.ndarray:
		return self.matrix[:2, 2:]

	@property
	def physical(self) -> bool:
		return is_bona_fide(self).flag

	def allclose(self, other: "State", atol: float = 1e-12) -> bool:
		return bool(np.allclose(self.matrix, as_covariance(other).matrix, rtol=0.0, atol=atol))

	def __repr__(self):
		return f"CovarianceMatrix4({self.matrix.tolist()!r})"


@dataclass(frozen=True)
class StandardFormCM:
	"""The (n, m, c1, c2) standard form; physicality is not enforced."""

	n: float
	m: float
	c1: float
	c2: float

	def __post_init__(self):
		for name in ("n", "m", "c1", "c2"):
			value = float(getattr(self, name))
			if not math.isfinite(value):
				raise InvalidCovarianceMatrix(f"{name} must be finite, got {value}")
			object.__setattr__(self, name, value)
		if self.n < SQL - SYMMETRY_TOL or self.m < SQL - SYMMETRY_TOL:
			raise BelowShotNoise(
				f"below shot-noise diagonal: n={self.n}, m={self.m} (minimum {SQL})"
			)

	@property
	def matrix(self) -> np.ndarray:
		n, m, c1, c2 = self.n, self.m, self.c1, self.c2
		return np.array(
			[
				[n, 0.0, c1, 0.0],
				[0.0, n, 0.0, c2],
				[c1, 0.0, m, 0.0],
				[0.0, c2, 0.0, m],
			]
		)

	def to_cm(self) -> CovarianceMatrix4:
		return CovarianceMatrix4(self.matrix)

	def is_diagonal(self, tol: float = PHYSICAL_TOL) -> bool:
		"""Fully symmetric state: n = m and c1 = -c2."""
		return abs(self.n - self.m) <= tol and abs(self.c1 + self.c2) <= tol


State = Union[CovarianceMatrix4, StandardFormCM]


@dataclass(frozen=True)
class SymplecticData:
	I1: float
	I2: float
	I3: float
	I4: float
	d_plus: Optional[float] = None
	d_minus: Optional[float] = None

	@property
	def delta(self) -> float:
		return self.I1 + self.I2 + 2 * self.I3


@dataclass(frozen=True, eq=False)
class LocalSymplectic:
	"""One unimodular 2x2 block per subsystem."""

	S1: np.ndarray
	S2: np.ndarray

	def __post_init__(self):
		for name in ("S1", "S2"):
			block = np.array(getattr(self, name), dtype=float)
			if block.shape != (2, 2):
				raise DomainError(f"{name} must be 2x2, got shape {block.shape}")
			det = np.linalg.det(block)
			if abs(det - 1.0) > UNIMODULAR_TOL:
				raise DomainError(f"{name} is not unimodular (det={det!r})")
			block.flags.writeable = False
			object.__setattr__(self, name, block)

	@classmethod
	def identity(cls) -> "LocalSymplectic":
		return cls(np.eye(2), np.eye(2))

	@classmethod
	def squeezing(cls, s1: float = 1.0, s2: float = 1.0) -> "LocalSymplectic":
		"""diag(s, 1/s) on each mode."""
		return cls(np.diag([s1, 1 / s1]), np.diag([s2, 1 / s2]))

	@classmethod
	def rotation(cls, theta1: float = 0.0, theta2: float = 0.0) -> "LocalSymplectic":
		def rot(theta):
			c, s = math.cos(theta), math.sin(theta)
			return np.array([[c, s], [-s, c]])

		return cls(rot(theta1), rot(theta2))

	@property
	def matrix(self) -> np.ndarray:
		return block_diag(self.S1, self.S2)

	def then(self, other: "LocalSymplectic") -> "LocalSymplectic":
		"""Apply self first, other second."""
		return LocalSymplectic(other.S1 @ self.S1, other.S2 @ self.S2)


class BonaFide(NamedTuple):
	flag: bool
	margin: float


def make_standard_form(n: float, m: float, c1: float, c2: float) -> StandardFormCM:
	return StandardFormCM(n, m, c1, c2)


def pure_diagonal(n: float) -> StandardFormCM:
	"""Pure fully symmetric state with c = sqrt(n^2 - 1/4)."""
	if n < SQL:
		raise BelowShotNoise(f"below shot-noise diagonal: n={n}")
	c = math.sqrt(n * n - SQL * SQL)
	return StandardFormCM(n, n, c, -c)


def as_covariance(state: State) -> CovarianceMatrix4:
	if isinstance(state, CovarianceMatrix4):
		return state
	if isinstance(state, StandardFormCM):
		return state.to_cm()
	return CovarianceMatrix4(np.asarray(state))


def invariants(state: State) -> SymplecticData:
	"""I1..I4, computed in closed form for standard forms."""
	if isinstance(state, StandardFormCM):
		n, m, c1, c2 = state.n, state.m, state.c1, state.c2
		return SymplecticData(n * n, m * m, c1 * c2, (n * m - c1 * c1) * (n * m - c2 * c2))
	cm = as_covariance(state)
	return SymplecticData(
		float(np.linalg.det(cm.alpha)),
		float(np.linalg.det(cm.beta)),
		float(np.linalg.det(cm.gamma)),
		float(np.linalg.det(cm.matrix)),
	)


def symplectic_spectrum(inv: Union[SymplecticData, State]) -> tuple:
	if not isinstance(inv, SymplecticData):
		inv = invariants(inv)
	delta = inv.delta
	radicand = delta * delta - 4 * inv.I4
	if radicand < -RADICAND_TOL:
		raise ComplexSpectrum(f"complex symplectic spectrum (radicand {radicand:.3e})")
	root = math.sqrt(max(radicand, 0.0))
	plus, minus = (delta + root) / 2, (delta - root) / 2
	if minus < -RADICAND_TOL:
		raise ComplexSpectrum(f"complex symplectic spectrum (d_minus^2 = {minus:.3e})")
	return math.sqrt(plus), math.sqrt(max(minus, 0.0))


def symplectic_data(state: State) -> SymplecticData:
	inv = invariants(state)
	d_plus, d_minus = symplectic_spectrum(inv)
	return SymplecticData(inv.I1, inv.I2, inv.I3, inv.I4, d_plus, d_minus)


def heisenberg_gap(state: State) -> float:
	"""Smallest eigenvalue of sigma + (i/2) omega (+) omega."""
	cm = as_covariance(state)
	return float(np.linalg.eigvalsh(cm.matrix + 0.5j * OMEGA_2).min())


def is_bona_fide(state: State, tol: float = PHYSICAL_TOL) -> BonaFide:
	inv = invariants(state)
	margin = 4 * inv.I4 + SQL * SQL - inv.delta
	if margin < -tol:
		return BonaFide(False, margin)
	try:
		_, d_minus = symplectic_spectrum(inv)
	except ComplexSpectrum:
		return BonaFide(False, margin)
	cm = as_covariance(state)
	flag = (
		d_minus >= SQL - tol
		and np.linalg.eigvalsh(cm.matrix).min() >= -tol
		and heisenberg_gap(cm) >= -tol
	)
	return BonaFide(bool(flag), margin)


def purity(state: State) -> float:
	I4 = invariants(state).I4
	if I4 <= 0:
		raise UnphysicalState(f"unphysical state: det(sigma)={I4!r}")
	return 1 / (4 * math.sqrt(I4))


def entropy_f(x, tol: float = PHYSICAL_TOL):
	"""(x+1/2) log(x+1/2) - (x-1/2) log(x-1/2) in nats, f(1/2) = 0."""
	arr = np.asarray(x, dtype=float)
	if np.any(arr < SQL - tol):
		raise DomainError(f"entropy function needs x >= 1/2, got {x!r}")
	arr = np.maximum(arr, SQL)
	value = xlogy(arr + SQL, arr + SQL) - xlogy(arr - SQL, arr - SQL)
	return float(value) if value.ndim == 0 else value


def von_neumann_entropy(state: State) -> float:
	d_plus, d_minus = symplectic_spectrum(state)
	return entropy_f(d_plus) + entropy_f(d_minus)


def wigner_density(state: State, K) -> Union[float, np.ndarray]:
	"""Gaussian Wigner function at phase-space point(s) K (shape (4,) or (N, 4))."""
	sigma = as_covariance(state).matrix
	det = np.linalg.det(sigma)
	if det <= 0:
		raise UnphysicalState(f"singular covariance matrix (det={det!r})")
	points = np.atleast_2d(np.asarray(K, dtype=float))
	quad = np.einsum("ij,ij->i", points, np.linalg.solve(sigma, points.T).T)
	value = np.exp(-0.5 * quad) / (math.pi**2 * math.sqrt(det))
	return float(value[0]) if np.ndim(K) == 1 else value


def apply_local_symplectic(state: State, op: LocalSymplectic) -> CovarianceMatrix4:
	S = op.matrix
	return CovarianceMatrix4(S @ as_covariance(state).matrix @ S.T)


def is_block_separable(state: State, tol: float = PHYSICAL_TOL) -> bool:
	"""No X-Y cross moments anywhere in the matrix."""
	sigma = as_covariance(state).matrix
	return all(abs(sigma[i, j]) <= tol for i, j in XY_POSITIONS)


def is_standard_form(state: State, tol: float = PHYSICAL_TOL) -> bool:
	if isinstance(state, StandardFormCM):
		return True
	sigma = as_covariance(state).matrix
	return (
		is_block_separable(sigma, tol)
		and abs(sigma[0, 0] - sigma[1, 1]) <= tol
		and abs(sigma[2, 2] - sigma[3, 3]) <= tol
	)


def standard_form(state: State, tol: float = PHYSICAL_TOL) -> StandardFormCM:
	"""Standard-form representative of any two-mode CM.

	Matrices already in standard form are read off directly. Otherwise the
	representative is rebuilt from I1..I4 with the convention c1 >= |c2|;
	the sign and ordering ambiguities it resolves are local rotations.
	"""
	if isinstance(state, StandardFormCM):
		return state
	sigma = as_covariance(state).matrix
	if is_standard_form(sigma, tol):
		return StandardFormCM(
			(sigma[0, 0] + sigma[1, 1]) / 2,
			(sigma[2, 2] + sigma[3, 3]) / 2,
			sigma[0, 2],
			sigma[1, 3],
		)
	inv = invariants(state)
	if inv.I1 <= 0 or inv.I2 <= 0:
		raise UnphysicalState("local blocks are not positive definite")
	n, m = math.sqrt(inv.I1), math.sqrt(inv.I2)
	nm = n * m
	total = (nm * nm + inv.I3 * inv.I3 - inv.I4) / nm  # c1^2 + c2^2
	disc = total * total - 4 * inv.I3 * inv.I3
	if disc < -tol or total < -tol:
		raise UnphysicalState("invariants admit no real standard form")
	root = math.sqrt(max(disc, 0.0))
	c1 = math.sqrt(max((total + root) / 2, 0.0))
	c2 = math.copysign(math.sqrt(max((total - root) / 2, 0.0)), inv.I3)
	log.debug("standard form rebuilt from invariants: n=%g m=%g c1=%g c2=%g", n, m, c1, c2)
	return StandardFormCM(n, m, c1, c2)
