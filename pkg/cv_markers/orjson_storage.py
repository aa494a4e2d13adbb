import logging
from pathlib import Path

import orjson
from tinydb import Storage

log = logging.getLogger(__name__)


class ORJSONStorage(Storage):
	"""TinyDB storage serialized with orjson; holds the preference store."""

	def __init__(self, filename):
		self.filename = Path(filename)
		self.filename.parent.mkdir(parents=True, exist_ok=True)
		log.debug("preference store at %s", self.filename)

	def read(self):
		try:
			with open(self.filename, "rb") as handle:
				content = handle.read()
		except FileNotFoundError:
			# tinydb initialises an empty store on None
			self.filename.touch()
			return None
		if not content:
			return None
		try:
			return orjson.loads(content)
		except orjson.JSONDecodeError:
			log.warning("preference store %s is corrupt, starting from defaults", self.filename)
			return None

	def write(self, data):
		with open(self.filename, "wb") as handle:
			handle.write(orjson.dumps(data, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY))

	def close(self):
		pass
