"""Subcommand handlers, mixed into the application class next to Settings."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .channel import anchored_trajectory, evolve, marker_trajectory
from .errors import InvalidConfig
from .formats import (
	format_table,
	read_cm,
	read_record,
	reconstruction_to_json,
	region_to_csv,
	report_to_csv,
	report_to_json,
	trajectory_to_csv,
	write_record,
)
from .gaussian import State, StandardFormCM, pure_diagonal, standard_form
from .homodyne import SimConfig, simulate_record
from .markers import classify, region_grid
from .reconstruction import MeasurementRecord, bootstrap_markers
from .settings import DEFAULTS

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNPHYSICAL = 2

GRID_SCALES = ("linear", "log")


@dataclass(frozen=True)
class SweepConfig:
	source: State
	grid_min: float
	grid_max: float
	grid_count: int
	grid_scale: str = "linear"
	anchor_T: Optional[float] = None
	out: Optional[Path] = None
	seed: int = 0

	def __post_init__(self):
		if not 0 < self.grid_min <= self.grid_max <= 1:
			raise InvalidConfig(f"grid must lie in (0, 1], got [{self.grid_min}, {self.grid_max}]")
		if self.grid_count < 2:
			raise InvalidConfig(f"grid needs at least 2 points, got {self.grid_count}")
		if self.grid_scale not in GRID_SCALES:
			raise InvalidConfig(f"grid scale must be one of {GRID_SCALES}, got {self.grid_scale!r}")

	def grid(self) -> np.ndarray:
		space = np.geomspace if self.grid_scale == "log" else np.linspace
		return space(self.grid_min, self.grid_max, self.grid_count)


def parse_grid(text: str) -> dict:
	"""MIN:MAX:COUNT[:linear|log] into setting overrides."""
	parts = text.split(":")
	if len(parts) not in (3, 4):
		raise InvalidConfig(f"grid must read MIN:MAX:COUNT[:SCALE], got {text!r}")
	overrides = {"grid_min": parts[0], "grid_max": parts[1], "grid_count": parts[2]}
	if len(parts) == 4:
		overrides["grid_scale"] = parts[3]
	return overrides


class Commands:
	"""Every cmd_* takes the parsed arguments and returns an exit code."""

	def emit(self, content, out=None):
		"""Write to `out` (relative to the output directory) or to stdout."""
		if isinstance(content, bytes):
			content = content.decode("utf-8")
		if out is None:
			self.stdout.write(content)
			return None
		path = self.output_path(out)
		path.parent.mkdir(parents=True, exist_ok=True)
		path.write_text(content, encoding="utf-8")
		log.info("wrote %s", path)
		return path

	def setting_overrides(self, args) -> dict:
		"""Command line values that take precedence over every stored setting."""
		overrides = {name: getattr(args, name, None) for name in DEFAULTS}
		if getattr(args, "grid", None):
			overrides.update(parse_grid(args.grid))
		return overrides

	def output_path(self, out) -> Path:
		path = Path(out)
		return path if path.is_absolute() else Path(self.settings["output_dir"]) / path

	def load_state(self, args) -> State:
		if getattr(args, "sf", None) is not None:
			return StandardFormCM(*args.sf)
		if getattr(args, "pure", None) is not None:
			return pure_diagonal(args.pure)
		if getattr(args, "input", None) is not None:
			return read_cm(args.input)
		raise InvalidConfig("no input state: give --input, --pure or --sf")

	def cmd_analyze(self, args) -> int:
		state = self.load_state(args)
		report = classify(state)
		if self.settings["bits"]:
			report = report.in_bits()
		if args.format == "json":
			self.emit(report_to_json(report), args.out)
		elif args.format == "csv":
			self.emit(report_to_csv(report), args.out)
		else:
			self.emit(format_table(report), args.out)
		if not report.physical:
			log.warning("input covariance matrix is not bona fide")
			return EXIT_UNPHYSICAL
		return EXIT_OK

	def sweep_config(self, args) -> SweepConfig:
		s = self.settings
		return SweepConfig(
			self.load_state(args), s["grid_min"], s["grid_max"], s["grid_count"], s["grid_scale"],
			anchor_T=args.anchor_T, out=args.out, seed=s["seed"],
		)

	def cmd_sweep(self, args) -> int:
		cfg = self.sweep_config(args)
		if cfg.anchor_T is not None:
			table = anchored_trajectory(cfg.source, cfg.anchor_T, cfg.grid())
		else:
			table = marker_trajectory(standard_form(cfg.source), cfg.grid())
		if self.settings["bits"]:
			for row in table:
				row.report = row.report.in_bits()
		self.emit(trajectory_to_csv(table), cfg.out)
		return EXIT_OK

	def cmd_region(self, args) -> int:
		resolution = self.settings["region_resolution"]
		cells = region_grid(args.n, resolution)
		self.emit(region_to_csv(args.n, cells), args.out)
		return EXIT_OK

	def sim_config(self) -> SimConfig:
		s = self.settings
		return SimConfig(
			samples_per_trace=s["samples_per_trace"],
			visibility=s["visibility"],
			electronic_noise_db_below_shot=s["electronic_noise_db"] or None,
			seed=s["seed"],
			detector_gain=s["detector_gain"],
		)

	def cmd_simulate(self, args) -> int:
		state = self.load_state(args)
		if args.channel_T is not None:
			state = evolve(state, args.channel_T)
		directory = self.output_path(args.out or "traces")
		paths = write_record(directory, simulate_record(state, self.sim_config()))
		log.info("wrote %d traces to %s", len(paths), directory)
		self.stdout.write(f"{directory}\n")
		return EXIT_OK

	def cmd_reconstruct(self, args) -> int:
		s = self.settings
		record = MeasurementRecord.from_traces(read_record(args.input))
		visibility = args.correct_visibility if args.correct_visibility is not None else record.visibility
		if visibility is None:
			log.info("no visibility recorded with %s, reporting the detected state", args.input)
		estimate = bootstrap_markers(
			record,
			resamples=s["resamples"],
			seed=s["seed"],
			bins=s["bins"],
			subtract_electronic=s["subtract_electronic"],
			infer_T=args.infer_T,
			infer_tolerance=s["infer_tolerance"],
			visibility=visibility,
		)
		if estimate.T is not None:
			log.info("inferred transmission %.4f +/- %.4f", estimate.T, estimate.T_std)
		if s["bits"]:
			estimate = estimate.in_bits()
		if args.format == "csv":
			self.emit(report_to_csv(estimate.report, estimate), args.out)
		else:
			self.emit(reconstruction_to_json(estimate.reconstruction, estimate), args.out)
		return EXIT_OK

	def cmd_config(self, args) -> int:
		if args.action == "reset":
			self.reset_settings()
			self.initiate_settings(args.config, self.setting_overrides(args))
		elif args.action == "set":
			value = self.write_setting(args.key, args.value)
			log.info("stored %s = %r", args.key, value)
			self.initiate_settings(args.config, self.setting_overrides(args))
		for name in DEFAULTS:
			self.stdout.write(f"{name} = {_toml_value(self.settings[name])}\n")
		return EXIT_OK


def _toml_value(value) -> str:
	if isinstance(value, bool):
		return "true" if value else "false"
	if isinstance(value, str):
		return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
	return repr(value)
