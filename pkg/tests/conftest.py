import math

import numpy as np
import pytest

from cv_markers.gaussian import CovarianceMatrix4, LocalSymplectic, StandardFormCM, is_bona_fide

C_REF = math.sqrt(3) / 2


@pytest.fixture
def vac():
	return StandardFormCM(0.5, 0.5, 0.0, 0.0)


@pytest.fixture
def ref():
	return StandardFormCM(1.0, 1.0, C_REF, -C_REF)


@pytest.fixture
def rng():
	return np.random.default_rng(20240611)


def two_mode_squeezer(r):
	ch, sh = math.cosh(r), math.sinh(r)
	return np.array([[ch, 0, sh, 0], [0, ch, 0, -sh], [sh, 0, ch, 0], [0, -sh, 0, ch]])


def beam_splitter(theta):
	c, s = math.cos(theta), math.sin(theta)
	return np.array([[c, 0, s, 0], [0, c, 0, s], [-s, 0, c, 0], [0, -s, 0, c]])


def random_local(rng) -> LocalSymplectic:
	squeeze = LocalSymplectic.squeezing(*np.exp(rng.uniform(-0.7, 0.7, 2)))
	return LocalSymplectic.rotation(*rng.uniform(0, 2 * math.pi, 2)).then(squeeze).then(
		LocalSymplectic.rotation(*rng.uniform(0, 2 * math.pi, 2))
	)


def random_physical_cm(rng) -> CovarianceMatrix4:
	"""Thermal spectrum dressed with random global and local symplectics."""
	nu = 0.5 + rng.exponential(0.5, 2)
	thermal = np.diag([nu[0], nu[0], nu[1], nu[1]])
	S = random_local(rng).matrix @ beam_splitter(rng.uniform(0, math.pi)) @ two_mode_squeezer(rng.uniform(0, 1.2))
	return CovarianceMatrix4(S @ thermal @ S.T)


def random_physical_sf(rng) -> StandardFormCM:
	"""Rejection-sampled physical standard form."""
	while True:
		n, m = rng.uniform(0.5, 3.0, 2)
		bound = math.sqrt(n * m)
		c1, c2 = rng.uniform(-bound, bound, 2)
		sf = StandardFormCM(n, m, c1, c2)
		if is_bona_fide(sf).flag:
			return sf


@pytest.fixture
def random_cms(rng):
	return [random_physical_cm(rng) for _ in range(200)]


@pytest.fixture
def random_sfs(rng):
	return [random_physical_sf(rng) for _ in range(2000)]
