"""Readers and writers for covariance-matrix inputs, reports, tables and traces.

CSV outputs start with a versioned header comment, `# cv-markers <kind> v1`.
"""
import csv
import io
import logging
import math
import re
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import orjson

from .channel import TrajectoryTable
from .errors import CVMarkersError, FormatError
from .gaussian import CovarianceMatrix4, State, StandardFormCM
from .homodyne import SHOT_LABEL, HomodyneTrace, ModeSelector
from .markers import MarkerReport, RegionLabel
from .reconstruction import MarkerEstimate, ReconstructedCM

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CM_CONVENTION = "sql_half"
CM_ORDER = "X1 Y1 X2 Y2"
TRACE_COLUMNS = ("phase", "value")
TRAJECTORY_EXTRA = ("T", "mean_correlation", "n_T", "m_T", "c1_T", "c2_T", "mean_photons")
_JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_APPEND_NEWLINE
_TOKEN = re.compile(r"[^\s,]+")


def schema_header(kind: str, **fields) -> str:
	extra = "".join(f" {key}={value}" for key, value in fields.items())
	return f"# cv-markers {kind} v{SCHEMA_VERSION}{extra}\n"


# covariance-matrix input


def _standard_form_from(mapping: dict, where: str) -> StandardFormCM:
	try:
		return StandardFormCM(*(float(mapping[key]) for key in ("n", "m", "c1", "c2")))
	except KeyError as exc:
		raise FormatError(f"{where}: standard form needs key {exc.args[0]!r}") from None
	except (TypeError, ValueError) as exc:
		raise FormatError(f"{where}: {exc}") from None


def _matrix_from(rows, where: str) -> CovarianceMatrix4:
	try:
		return CovarianceMatrix4(np.array(rows, dtype=float))
	except (TypeError, ValueError) as exc:
		raise FormatError(f"{where}: {exc}") from None


def parse_cm_json(text, where: str = "<input>") -> State:
	"""JSON document: a 4x4 array, {"matrix": [[...]]} or {"n", "m", "c1", "c2"}."""
	try:
		document = orjson.loads(text)
	except orjson.JSONDecodeError as exc:
		raise FormatError(f"{where}: {exc.msg}", exc.lineno, exc.colno) from None
	if isinstance(document, dict):
		if document.get("convention", CM_CONVENTION) != CM_CONVENTION:
			raise FormatError(f"{where}: unsupported convention {document['convention']!r}, expected {CM_CONVENTION!r}")
		if " ".join(str(document.get("order", CM_ORDER)).split()) != CM_ORDER:
			raise FormatError(f"{where}: unsupported quadrature order {document['order']!r}")
		if "matrix" in document:
			return _matrix_from(document["matrix"], where)
		return _standard_form_from(document, where)
	if isinstance(document, list):
		return _matrix_from(document, where)
	raise FormatError(f"{where}: expected an object or a 4x4 array")


def parse_cm_text(text: str, where: str = "<input>") -> CovarianceMatrix4:
	"""Four whitespace- or comma-separated rows of four numbers; '#' starts a comment."""
	rows = []
	for lineno, line in enumerate(text.splitlines(), start=1):
		content = line.split("#", 1)[0]
		tokens = list(_TOKEN.finditer(content))
		if not tokens:
			continue
		row = []
		for token in tokens:
			try:
				row.append(float(token.group()))
			except ValueError:
				raise FormatError(f"{where}: not a number {token.group()!r}", lineno, token.start() + 1) from None
		if len(row) != 4:
			raise FormatError(f"{where}: expected 4 values, got {len(row)}", lineno, tokens[0].start() + 1)
		rows.append(row)
	if len(rows) != 4:
		raise FormatError(f"{where}: expected 4 rows, got {len(rows)}")
	return _matrix_from(rows, where)


def read_cm(path) -> State:
	path = Path(path)
	try:
		text = path.read_text(encoding="utf-8")
	except (OSError, UnicodeDecodeError) as exc:
		raise FormatError(f"cannot read {path}: {exc}") from None
	if text.lstrip().startswith(("{", "[")):
		return parse_cm_json(text, str(path))
	return parse_cm_text(text, str(path))


def cm_document(state: State) -> dict:
	if isinstance(state, StandardFormCM):
		return {"n": state.n, "m": state.m, "c1": state.c1, "c2": state.c2}
	return {"convention": CM_CONVENTION, "order": CM_ORDER, "matrix": state.matrix.tolist()}


# reports


def _finite_or_none(value):
	if isinstance(value, float) and not math.isfinite(value):
		return None
	return value


def report_document(report: MarkerReport, estimate: Optional[MarkerEstimate] = None) -> dict:
	document = {name: _finite_or_none(value) for name, value in report.as_dict().items()}
	if estimate is not None:
		document = {
			"report": document,
			"mean": {k: _finite_or_none(v) for k, v in estimate.mean.items()},
			"std": {k: _finite_or_none(v) for k, v in estimate.std.items()},
			"resamples": estimate.resamples,
			"seed": estimate.seed,
		}
		if estimate.T is not None:
			document["transmission"] = {
				"T": _finite_or_none(estimate.T),
				"mean": _finite_or_none(estimate.T_mean),
				"std": _finite_or_none(estimate.T_std),
				"resamples": estimate.T_resamples,
			}
	return document


def report_to_json(report: MarkerReport, estimate: Optional[MarkerEstimate] = None) -> bytes:
	return orjson.dumps(report_document(report, estimate), option=_JSON_OPTIONS)


def _csv_text(header: str, columns: Iterable[str], rows: Iterable[Iterable]) -> str:
	buffer = io.StringIO()
	buffer.write(header)
	writer = csv.writer(buffer, lineterminator="\n")
	writer.writerow(columns)
	writer.writerows(rows)
	return buffer.getvalue()


def _cell(value):
	if isinstance(value, (bool, np.bool_)):
		return "true" if value else "false"
	if isinstance(value, (float, np.floating)):
		return repr(float(value))
	return value


def report_to_csv(report: MarkerReport, estimate: Optional[MarkerEstimate] = None) -> str:
	columns = list(MarkerReport.columns())
	row = [_cell(getattr(report, name)) for name in columns]
	if estimate is not None:
		for name in MarkerReport.value_columns():
			columns.append(f"{name}_std")
			row.append(_cell(estimate.std[name]))
	return _csv_text(schema_header("report"), columns, [row])


def reconstruction_document(result: ReconstructedCM, estimate: Optional[MarkerEstimate] = None) -> dict:
	document = {
		"cm": cm_document(result.cm),
		"errors": result.errors.tolist(),
		"residual": result.residual,
		"physical": result.physical,
		"moments": {
			label: {
				"var_x": m.var_x, "var_y": m.var_y, "cov_xy": m.cov_xy,
				"se_x": m.se_x, "se_y": m.se_y, "se_xy": m.se_xy, "chi2_dof": m.chi2_dof,
			}
			for label, m in result.moments.items()
		},
		"gaussianity": {
			label: {
				"flagged": g.flagged,
				"worst_se": g.worst,
				"excess_kurtosis": g.excess_kurtosis.tolist(),
			}
			for label, g in result.gaussianity.items()
		},
	}
	if estimate is not None:
		document["cm_std"] = estimate.cm_std.tolist()
		document["markers"] = report_document(estimate.report, estimate)
	return document


def reconstruction_to_json(result: ReconstructedCM, estimate: Optional[MarkerEstimate] = None) -> bytes:
	return orjson.dumps(reconstruction_document(result, estimate), option=_JSON_OPTIONS)


def trajectory_columns() -> Tuple[str, ...]:
	return TRAJECTORY_EXTRA + MarkerReport.columns()


def trajectory_to_csv(table: TrajectoryTable) -> str:
	rows = []
	for row in table:
		extra = [getattr(row, name) for name in TRAJECTORY_EXTRA]
		rows.append([_cell(v) for v in extra] + [_cell(v) for v in row.report.as_dict().values()])
	return _csv_text(schema_header("trajectory"), trajectory_columns(), rows)


def region_to_csv(n: float, cells: List[Tuple[float, float, RegionLabel]]) -> str:
	resolution = int(round(math.sqrt(len(cells))))
	rows = [(repr(a), repr(b), label.value) for a, b, label in cells]
	return _csv_text(
		schema_header("region", n=repr(float(n)), resolution=resolution),
		("c1_tilde", "c2_tilde", "region"),
		rows,
	)


def format_table(report: MarkerReport, estimate: Optional[MarkerEstimate] = None) -> str:
	"""Aligned name / value (/ std) table for terminals."""
	lines = []
	for name, value in report.as_dict().items():
		if isinstance(value, bool):
			text = "yes" if value else "no"
		else:
			text = f"{value: .6f}"
		if estimate is not None and name in estimate.std:
			text += f"  +/- {estimate.std[name]:.2g}"
		lines.append(f"{name:<18}{text}")
	return "\n".join(lines) + "\n"


# traces


def trace_header(trace: HomodyneTrace) -> str:
	seed = "none" if trace.seed is None else trace.seed
	calibrated = "true" if trace.calibrated else "false"
	header = (
		f"# mode={trace.label} seed={seed} samples={len(trace)} calibrated={calibrated}"
		f" electronic_variance={trace.electronic_variance!r} variance_offset={trace.variance_offset!r}"
	)
	if trace.visibility is not None:
		header += f" visibility={trace.visibility!r}"
	return header + "\n"


def write_trace(path, trace: HomodyneTrace):
	path = Path(path)
	with open(path, "w", encoding="utf-8", newline="") as handle:
		handle.write(trace_header(trace))
		handle.write(",".join(TRACE_COLUMNS) + "\n")
		np.savetxt(handle, np.column_stack([trace.phases, trace.values]), delimiter=",", fmt="%.17g")
	log.debug("wrote %s (%d samples)", path, len(trace))


def parse_trace_header(line: str, where: str = "<trace>") -> Dict[str, str]:
	if not line.startswith("#"):
		raise FormatError(f"{where}: missing trace header", 1, 1)
	fields = {}
	for token in line[1:].split():
		key, sep, value = token.partition("=")
		if not sep:
			raise FormatError(f"{where}: malformed header field {token!r}", 1, line.index(token) + 1)
		fields[key] = value
	for key in ("mode", "seed", "samples", "calibrated"):
		if key not in fields:
			raise FormatError(f"{where}: header lacks '{key}'", 1, 1)
	return fields


def read_trace(path) -> HomodyneTrace:
	path = Path(path)
	where = str(path)
	with open(path, "r", encoding="utf-8") as handle:
		fields = parse_trace_header(handle.readline(), where)
		columns = handle.readline().strip()
		if columns != ",".join(TRACE_COLUMNS):
			raise FormatError(f"{where}: expected columns {','.join(TRACE_COLUMNS)}", 2, 1)
		try:
			data = np.loadtxt(handle, delimiter=",", ndmin=2)
		except ValueError as exc:
			raise FormatError(f"{where}: {exc}") from None
	try:
		mode = None if fields["mode"] == SHOT_LABEL else ModeSelector(fields["mode"])
		samples = int(fields["samples"])
		seed = None if fields["seed"] == "none" else int(fields["seed"])
		electronic = float(fields.get("electronic_variance", 0.0))
		offset = float(fields.get("variance_offset", 0.0))
		visibility = float(fields["visibility"]) if "visibility" in fields else None
	except ValueError as exc:
		raise FormatError(f"{where}: bad header value: {exc}", 1, 1) from None
	if data.shape != (samples, 2):
		raise FormatError(f"{where}: header announces {samples} samples, found {data.shape[0]}")
	try:
		return HomodyneTrace(
			mode, data[:, 0], data[:, 1],
			calibrated=fields["calibrated"] == "true",
			seed=seed,
			electronic_variance=electronic,
			variance_offset=offset,
			visibility=visibility,
		)
	except CVMarkersError as exc:
		raise FormatError(f"{where}: {exc}") from None


def trace_filename(label: str) -> str:
	return f"trace_{label}.csv"


def write_record(directory, traces: Dict[str, HomodyneTrace]) -> List[Path]:
	directory = Path(directory)
	directory.mkdir(parents=True, exist_ok=True)
	paths = []
	for label, trace in traces.items():
		path = directory / trace_filename(label)
		write_trace(path, trace)
		paths.append(path)
	return paths


def read_record(directory) -> List[HomodyneTrace]:
	"""Every trace file of a directory, warning on repeated seeds."""
	directory = Path(directory)
	traces = [read_trace(path) for path in sorted(directory.glob("trace_*.csv"))]
	seen = {}
	for trace in traces:
		if trace.seed is None:
			continue
		if trace.seed in seen:
			log.warning("traces %s and %s share seed %d", seen[trace.seed], trace.label, trace.seed)
		seen[trace.seed] = trace.label
	return traces
