class CVMarkersError(Exception):
	"""Base class of every error raised by cv_markers."""


class InvalidCovarianceMatrix(CVMarkersError, ValueError):
	pass


class BelowShotNoise(InvalidCovarianceMatrix):
	pass


class UnphysicalState(CVMarkersError, ValueError):
	pass


class ComplexSpectrum(UnphysicalState):
	pass


class DomainError(CVMarkersError, ValueError):
	pass


class NotBlockSeparable(CVMarkersError, ValueError):
	pass


class NotCanonicalDuanForm(CVMarkersError, ValueError):
	pass


class SearchFailure(CVMarkersError):
	def __init__(self, message, residual):
		super().__init__(f"{message} (residual {residual:.3e})")
		self.residual = residual


class InvalidChannel(CVMarkersError, ValueError):
	pass


class NoPurePreimage(CVMarkersError):
	def __init__(self, message, residual):
		super().__init__(f"{message} (best residual {residual:.3e})")
		self.residual = residual


class InvalidConfig(CVMarkersError, ValueError):
	pass


class InsufficientSamples(CVMarkersError, ValueError):
	pass


class NonStationaryTrace(CVMarkersError):
	pass


class DegenerateTrace(CVMarkersError, ValueError):
	pass


class RankDeficient(CVMarkersError):
	pass


class MissingMode(CVMarkersError):
	pass


class FormatError(CVMarkersError, ValueError):
	def __init__(self, message, line=None, column=None):
		where = f" at line {line}, column {column}" if line is not None else ""
		super().__init__(f"{message}{where}")
		self.line = line
		self.column = column
