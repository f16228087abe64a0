"""
Shared plumbing of the harness management commands: common flags, loading inputs and rendering tables
"""
from colorama import Fore, Style
from colorama import init as colorama_init
from confmodel.errors import ConfigError
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured
from django.core.management.base import BaseCommand, CommandError

from agentnet.agents.pools import load_pool
from agentnet.attribution.models import AttributionError
from agentnet.gateway import GatewayError, get_gateway
from agentnet.inference.models import PRESETS, load_config
from agentnet.network.transcripts import SchemaVersionError

from .datasets import load_dataset

ACCURACY_LIMITS = (0.5, 0.8)  # limit for warning, limit for good

DOMAIN_ERRORS = (ImproperlyConfigured, ConfigError, AttributionError, GatewayError, SchemaVersionError, OSError)


class HarnessCommand(BaseCommand):
    """
    Base class for commands that run the network over a dataset
    """

    def add_run_arguments(self, parser, team=False):
        parser.add_argument("--pool", help="The pool file of candidate agents")
        if team:
            parser.add_argument("--team", help="A team file written by optimize, used instead of --pool")
        parser.add_argument("--dataset", required=True, help="The JSON lines dataset of queries")
        parser.add_argument("--config", help="A JSON run config file")
        parser.add_argument("--preset", choices=sorted(PRESETS), help="Preset the run config starts from")
        parser.add_argument("--seed", type=int, help="The master seed, overriding the one in --config")
        parser.add_argument(
            "--parallel",
            type=int,
            default=settings.AGENTNET_DEFAULT_PARALLELISM,
            help="Queries run concurrently",
        )
        parser.add_argument("--offline", action="store_true", help="Replay recorded responses instead of calling LLMs")
        parser.add_argument("--record", help="Directory to save LLM responses in for later offline runs")
        parser.add_argument("--out", help="The output directory")

    def load_inputs(self, options, sample_fraction=None):
        pool_file = options.get("team") or options.get("pool")
        if not pool_file:
            raise CommandError("A pool file is required (--pool%s)" % (" or --team" if "team" in options else ""))

        try:
            pool, ranker = load_pool(pool_file)
            overrides = {} if options.get("seed") is None else {"shuffle_seed": options["seed"]}
            config = load_config(options.get("config"), options.get("preset"), **overrides)
            dataset = load_dataset(options["dataset"], sample_fraction, config.shuffle_seed)
        except DOMAIN_ERRORS as e:
            raise CommandError(str(e))

        return pool, ranker, config, dataset

    def get_gateway(self, options):
        try:
            return get_gateway(offline=options["offline"], record_dir=options.get("record"))
        except DOMAIN_ERRORS as e:
            raise CommandError(str(e))

    def execute(self, *args, **options):
        colorama_init()
        return super(HarnessCommand, self).execute(*args, **options)

    def write_table(self, header, rows):
        self.stdout.write(row_to_str(header))
        self.stdout.write("=" * row_width(header))
        for row in rows:
            self.stdout.write(row_to_str(row))


def row_to_str(row):
    return "".join([str(cell[0]).ljust(cell[1]) for cell in row])


def row_width(row):
    return sum([cell[1] for cell in row])


def colored(val, color):
    return color + str(val) + Style.RESET_ALL


def colorcoded(val, limits):
    if val is None:
        return "-"

    if val >= limits[1]:
        color = Fore.GREEN
    elif val >= limits[0]:
        color = Fore.YELLOW
    else:
        color = Fore.RED

    return colored("%.3f" % val, color)


def format_number(val, places=2):
    return "-" if val is None else ("%%.%df" % places) % val
