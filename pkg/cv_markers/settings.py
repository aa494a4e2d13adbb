"""Configuration: defaults < preference store < TOML file < environment < flags."""
import logging
import os
import sys
from importlib import metadata
from pathlib import Path

# imports of TinyDB
from tinydb import Query, TinyDB, where

from .errors import InvalidConfig
# import my ORJSON extension for TinyDB
from .orjson_storage import ORJSONStorage

if sys.version_info >= (3, 11):
	import tomllib
else:
	import tomli as tomllib

log = logging.getLogger(__name__)

# package directory, pyproject.toml sits next to it in a source checkout
cwd = Path(__file__).parent

CONFIG_DIR_ENV = "CV_MARKERS_CONFIG_DIR"
OUTPUT_DIR_ENV = "CV_MARKERS_OUTPUT_DIR"
TOML_TABLE = "cv-markers"

DEFAULTS = {
	"bins": 32,
	"resamples": 200,
	"seed": 0,
	"samples_per_trace": 1_000_000,
	"visibility": 0.98,
	"electronic_noise_db": 16.0,
	"detector_gain": 1.0,
	"subtract_electronic": True,
	"bits": False,
	"grid_min": 0.01,
	"grid_max": 0.63,
	"grid_count": 63,
	"grid_scale": "linear",
	"region_resolution": 201,
	"infer_tolerance": 0.05,
	"output_dir": ".",
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}

query = Query()


def config_dir() -> Path:
	"""User config directory, overridable through the environment."""
	override = os.environ.get(CONFIG_DIR_ENV)
	return Path(override) if override else Path.home() / ".config" / "cv-markers"


def open_prefdb(path=None) -> TinyDB:
	"""Preference store, one {'settings': name, 'value': v} record per key."""
	path = Path(path) if path is not None else config_dir() / "settings.json"
	return TinyDB(path, storage=ORJSONStorage)


def coerce(name, value):
	"""Convert `value` to the type of the default for `name`."""
	if name not in DEFAULTS:
		raise InvalidConfig(f"unknown setting '{name}'")
	kind = type(DEFAULTS[name])
	try:
		if kind is bool:
			if isinstance(value, bool):
				return value
			text = str(value).strip().lower()
			if text in _TRUE:
				return True
			if text in _FALSE:
				return False
			raise ValueError(value)
		if kind in (int, float) and isinstance(value, bool):
			raise ValueError(value)
		if kind is int:
			number = float(value)
			if not number.is_integer():
				raise ValueError(value)
			return int(number)
		return kind(value)
	except (TypeError, ValueError):
		raise InvalidConfig(f"setting '{name}' expects {kind.__name__}, got {value!r}") from None


def load_toml(path) -> dict:
	"""Settings from a TOML file; keys at top level or in a [cv-markers] table."""
	path = Path(path)
	try:
		with open(path, "rb") as handle:
			document = tomllib.load(handle)
	except FileNotFoundError:
		raise InvalidConfig(f"config file {path} not found") from None
	except tomllib.TOMLDecodeError as exc:
		raise InvalidConfig(f"config file {path}: {exc}") from None
	table = document.get(TOML_TABLE, document)
	if not isinstance(table, dict):
		raise InvalidConfig(f"config file {path}: [{TOML_TABLE}] must be a table")
	return {name: coerce(name, value) for name, value in table.items()}


class Settings:
	"""Mixin resolving the effective configuration into `self.settings`.

	Expects `self.prefdb` to be an open preference store.
	"""

	def initiate_settings(self, config_file=None, overrides=None):
		try:
			# every known key must have a record, a missing one means a fresh or older store
			stored = {
				name: self.prefdb.search(query["settings"] == name)[0]["value"] for name in DEFAULTS
			}
		except IndexError:
			self.create_default_settings()
			return self.initiate_settings(config_file, overrides)
		settings = dict(DEFAULTS)
		for name, value in stored.items():
			try:
				settings[name] = coerce(name, value)
			except InvalidConfig:
				log.warning("ignoring stored value %r for '%s'", value, name)
		if config_file is not None:
			settings.update(load_toml(config_file))
			log.info("loaded settings from %s", config_file)
		if os.environ.get(OUTPUT_DIR_ENV):
			settings["output_dir"] = os.environ[OUTPUT_DIR_ENV]
		for name, value in (overrides or {}).items():
			if value is not None:
				settings[name] = coerce(name, value)
		self.settings = settings
		return settings

	def write_setting(self, name, value):
		value = coerce(name, value)
		self.prefdb.upsert({"settings": name, "value": value}, where("settings") == name)
		return value

	def create_default_settings(self):
		# only missing records are added, stored preferences survive
		for name, value in DEFAULTS.items():
			if not self.prefdb.contains(query["settings"] == name):
				self.prefdb.insert({"settings": name, "value": value})

	def reset_settings(self):
		self.prefdb.truncate()
		self.create_default_settings()

	def stored_settings(self) -> dict:
		return {record["settings"]: record["value"] for record in self.prefdb.all()}

	def extract_version(self):
		"""Installed distribution version, else the one in pyproject.toml."""
		try:
			return metadata.version("cv-markers")
		except metadata.PackageNotFoundError:
			pass
		toml_path = cwd.parent / "pyproject.toml"
		if toml_path.is_file():
			with open(toml_path, "rb") as handle:
				return tomllib.load(handle)["tool"]["poetry"]["version"]
		return None
