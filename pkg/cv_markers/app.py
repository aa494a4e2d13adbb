import argparse
import logging
import sys

from .commands import EXIT_ERROR, Commands
from .errors import CVMarkersError, InvalidConfig
from .settings import DEFAULTS, Settings, open_prefdb

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
	# usage errors exit with 1, 2 is reserved for unphysical input
	def error(self, message):
		self.print_usage(sys.stderr)
		raise InvalidConfig(message)


def _add_state_input(parser):
	group = parser.add_mutually_exclusive_group()
	group.add_argument("--input", "-i", help="covariance matrix file (JSON or 4 rows of 4 numbers)")
	group.add_argument("--pure", type=float, metavar="N", help="pure diagonal state with n = m = N")
	group.add_argument("--sf", type=float, nargs=4, metavar=("N", "M", "C1", "C2"), help="standard form")


def build_parser() -> argparse.ArgumentParser:
	parser = _Parser(prog="cv-markers", description="Quantum markers of two-mode Gaussian states.")
	parser.add_argument("--version", action="store_true", help="print the version and exit")
	parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
	parser.add_argument("--config", metavar="PATH", help="TOML file overriding stored settings")
	parser.add_argument("--output-dir", dest="output_dir", help="directory for relative --out paths")
	parser.add_argument("--seed", type=int)
	parser.add_argument("--bits", action="store_true", default=None, help="entropies in bits")
	commands = parser.add_subparsers(dest="command", metavar="COMMAND")

	analyze = commands.add_parser("analyze", help="every marker of one covariance matrix")
	_add_state_input(analyze)
	analyze.add_argument("--format", choices=("table", "json", "csv"), default="table")
	analyze.add_argument("--out", "-o")

	sweep = commands.add_parser("sweep", help="markers along the lossy-channel trajectory")
	_add_state_input(sweep)
	sweep.add_argument("--grid", metavar="MIN:MAX:COUNT[:SCALE]", help="transmission grid, SCALE linear or log")
	sweep.add_argument("--anchor-T", dest="anchor_T", type=float, help="input measured at this transmission")
	sweep.add_argument("--out", "-o")

	region = commands.add_parser("region", help="region labels over the balanced correlation plane")
	region.add_argument("--n", type=float, default=1.0)
	region.add_argument("--resolution", dest="region_resolution", type=int)
	region.add_argument("--out", "-o")

	simulate = commands.add_parser("simulate", help="write a synthetic homodyne record")
	_add_state_input(simulate)
	simulate.add_argument("--channel-T", dest="channel_T", type=float, help="apply loss before detection")
	simulate.add_argument("--samples", dest="samples_per_trace", type=int)
	simulate.add_argument("--visibility", type=float)
	simulate.add_argument("--electronic-noise-db", dest="electronic_noise_db", type=float)
	simulate.add_argument("--detector-gain", dest="detector_gain", type=float)
	simulate.add_argument("--out", "-o", help="trace directory")

	reconstruct = commands.add_parser("reconstruct", help="covariance matrix and markers from a trace directory")
	reconstruct.add_argument("--input", "-i", required=True, help="trace directory")
	reconstruct.add_argument("--bins", type=int)
	reconstruct.add_argument("--resamples", type=int)
	reconstruct.add_argument("--subtract-electronic", dest="subtract_electronic", action="store_true", default=None)
	reconstruct.add_argument("--keep-electronic", dest="subtract_electronic", action="store_false", default=None)
	reconstruct.add_argument(
		"--visibility", dest="correct_visibility", type=float,
		help="visibility to correct for, default the one recorded with the traces",
	)
	reconstruct.add_argument("--format", choices=("json", "csv"), default="json")
	reconstruct.add_argument("--infer-T", dest="infer_T", action="store_true")
	reconstruct.add_argument("--infer-tolerance", dest="infer_tolerance", type=float)
	reconstruct.add_argument("--out", "-o")

	config = commands.add_parser("config", help="show, set or reset stored settings")
	config.add_argument("action", choices=("show", "set", "reset"))
	config.add_argument("key", nargs="?", choices=tuple(DEFAULTS))
	config.add_argument("value", nargs="?")
	return parser


def setup_logging(verbosity: int):
	level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
	logging.basicConfig(format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
	logging.getLogger().setLevel(level)


# I inherit from pure classes with just methods
class CVMarkers(Commands, Settings):
	def __init__(self, prefdb=None, stdout=None):
		self.prefdb = prefdb if prefdb is not None else open_prefdb()
		self.stdout = stdout if stdout is not None else sys.stdout
		self.settings = dict(DEFAULTS)

	def run(self, args) -> int:
		if args.version:
			self.stdout.write(f"cv-markers {self.extract_version()}\n")
			return 0
		if args.command is None:
			raise InvalidConfig("no command given")
		if args.command == "config" and args.action == "set" and (args.key is None or args.value is None):
			raise InvalidConfig("config set needs KEY and VALUE")
		self.initiate_settings(args.config, self.setting_overrides(args))
		log.debug("settings %s", self.settings)
		return getattr(self, f"cmd_{args.command}")(args)


def main(argv=None) -> int:
	parser = build_parser()
	app = None
	try:
		args = parser.parse_args(argv)
		setup_logging(args.verbose)
		app = CVMarkers()
		return app.run(args)
	except CVMarkersError as exc:
		log.error("%s", exc)
		return EXIT_ERROR
	finally:
		if app is not None:
			app.prefdb.close()


if __name__ == "__main__":
	sys.exit(main())
