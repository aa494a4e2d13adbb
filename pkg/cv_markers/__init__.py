from cv_markers.channel import ChannelSpec, evolve, infer_transmission, marker_trajectory
from cv_markers.gaussian import CovarianceMatrix4, StandardFormCM, make_standard_form, pure_diagonal
from cv_markers.markers import MarkerReport, classify, classify_region

__all__ = [
	"ChannelSpec",
	"CovarianceMatrix4",
	"MarkerReport",
	"StandardFormCM",
	"classify",
	"classify_region",
	"evolve",
	"infer_transmission",
	"make_standard_form",
	"marker_trajectory",
	"pure_diagonal",
]
