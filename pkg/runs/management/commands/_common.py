import json
import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from runs.config import parse_config
from stochkin.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

# (flag, config key, type) for the command-line overrides of a config document
CONFIG_FLAGS = (
    ('--experiment', 'experiment', str),
    ('--algorithm', 'algorithm', str),
    ('--N', 'N', str),
    ('--N1', 'N1', int),
    ('--iters', 'iters', int),
    ('--burn-in', 'burn_in', float),
    ('--lambda', 'lambda', float),
    ('--tau', 'tau', float),
    ('--dt-max', 'dt_max', float),
    ('--rtol', 'rtol', float),
    ('--seed', 'seed', int),
    ('--workers', 'workers', int),
    ('--output-dir', 'output_dir', str),
    ('--d-eff', 'd_eff', float),
    ('--covariance', 'covariance', str),
    ('--resampling', 'resampling', str),
)


def add_config_arguments(parser):
    parser.add_argument('config', nargs='?', help='Run config (JSON); flags below override its keys')
    for flag, key, kind in CONFIG_FLAGS:
        parser.add_argument(flag, dest=key, type=kind, default=None)
    parser.add_argument('--progress', dest='progress', action='store_true', default=None)
    parser.add_argument('--no-density', dest='density', action='store_false', default=None)


def config_from_options(options):
    """RunConfig from the config file (if any) with command-line overrides applied."""
    data = {}
    if options.get('config'):
        path = Path(options['config'])
        try:
            data = json.loads(path.read_text())
        except OSError as e:
            raise ConfigurationError(f"Cannot read config {path}: {e}")
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Config {path} is not valid JSON: {e}")
    keys = [key for _, key, _ in CONFIG_FLAGS] + ['progress', 'density']
    for key in keys:
        value = options.get(key)
        if value is None:
            continue
        if key == 'N' and value.isdigit():
            value = int(value)
        data[key] = value
    return parse_config(json.dumps(data))


class StochKinCommand(BaseCommand):
    """
    Base command: subclasses implement ``run``. Any failure is logged and re-raised
    as a CommandError carrying one JSON line, so the process exits non-zero with a
    machine-readable message.
    """

    def run(self, **options):
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            return self.run(**options)
        except Exception as e:
            logger.error(f"{self.__module__.rsplit('.', 1)[-1]} failed: {type(e).__name__}: {e}")
            raise CommandError(json.dumps({'error': type(e).__name__, 'message': str(e)}))

    def write_json(self, data):
        self.stdout.write(json.dumps(data, sort_keys=True))
