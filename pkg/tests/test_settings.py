import io
import logging

import pytest
from tinydb import where

from cv_markers.app import CVMarkers
from cv_markers.errors import InvalidConfig
from cv_markers.settings import DEFAULTS, OUTPUT_DIR_ENV, coerce, load_toml, open_prefdb


@pytest.fixture
def app(tmp_path, monkeypatch):
	monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
	app = CVMarkers(prefdb=open_prefdb(tmp_path / "config" / "settings.json"), stdout=io.StringIO())
	yield app
	app.prefdb.close()


def test_fresh_store_gets_defaults(app, tmp_path):
	assert app.initiate_settings() == DEFAULTS
	assert app.stored_settings() == DEFAULTS
	assert (tmp_path / "config" / "settings.json").is_file()


def test_write_setting_persists(app, tmp_path):
	app.initiate_settings()
	assert app.write_setting("bins", "64") == 64
	app.prefdb.close()
	reopened = CVMarkers(prefdb=open_prefdb(tmp_path / "config" / "settings.json"), stdout=io.StringIO())
	assert reopened.initiate_settings()["bins"] == 64
	assert len(reopened.prefdb.all()) == len(DEFAULTS)


def test_precedence(app, tmp_path, monkeypatch):
	app.initiate_settings()
	app.write_setting("bins", 64)
	app.write_setting("resamples", 50)
	config = tmp_path / "cv.toml"
	config.write_text('[cv-markers]\nbins = 48\noutput_dir = "from-toml"\n')
	monkeypatch.setenv(OUTPUT_DIR_ENV, "from-env")
	settings = app.initiate_settings(config, {"bins": None})
	assert settings["bins"] == 48
	assert settings["resamples"] == 50
	assert settings["output_dir"] == "from-env"
	assert app.initiate_settings(config, {"bins": "40", "output_dir": "flag"})["bins"] == 40
	assert app.settings["output_dir"] == "flag"


def test_reset_settings(app):
	app.initiate_settings()
	app.write_setting("visibility", 0.9)
	app.reset_settings()
	assert app.initiate_settings()["visibility"] == 0.98


def test_invalid_stored_value_is_ignored(app, caplog):
	app.initiate_settings()
	app.prefdb.update({"value": "many"}, where("settings") == "bins")
	with caplog.at_level(logging.WARNING, logger="cv_markers.settings"):
		assert app.initiate_settings()["bins"] == 32
	assert "ignoring stored value" in caplog.text


def test_corrupt_store_starts_from_defaults(tmp_path, caplog):
	path = tmp_path / "settings.json"
	path.write_text("{not json")
	app = CVMarkers(prefdb=open_prefdb(path), stdout=io.StringIO())
	with caplog.at_level(logging.WARNING, logger="cv_markers.orjson_storage"):
		assert app.initiate_settings()["seed"] == 0
	assert "corrupt" in caplog.text


@pytest.mark.parametrize(
	"name, value, expected",
	[
		("bits", "yes", True),
		("bits", "off", False),
		("bits", True, True),
		("bins", "1e2", 100),
		("bins", 16.0, 16),
		("visibility", "0.9", 0.9),
		("grid_scale", "log", "log"),
	],
)
def test_coerce(name, value, expected):
	assert coerce(name, value) == expected


@pytest.mark.parametrize(
	"name, value",
	[("bins", "2.5"), ("bins", True), ("bits", "maybe"), ("visibility", "high"), ("colour", "red")],
)
def test_coerce_rejects(name, value):
	with pytest.raises(InvalidConfig):
		coerce(name, value)


def test_load_toml(tmp_path):
	flat = tmp_path / "flat.toml"
	flat.write_text("seed = 7\nbits = true\n")
	assert load_toml(flat) == {"seed": 7, "bits": True}
	broken = tmp_path / "broken.toml"
	broken.write_text("seed = \n")
	with pytest.raises(InvalidConfig):
		load_toml(broken)
	with pytest.raises(InvalidConfig, match="not found"):
		load_toml(tmp_path / "absent.toml")
	unknown = tmp_path / "unknown.toml"
	unknown.write_text("[cv-markers]\ncolour = 'red'\n")
	with pytest.raises(InvalidConfig, match="unknown setting"):
		load_toml(unknown)


def test_extract_version(app):
	assert app.extract_version() == "0.1.0"
