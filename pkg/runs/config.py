"""
Run configuration: parsing, validation and resolution of bundle defaults.
"""
from dataclasses import asdict, dataclass, replace
from typing import Optional
import json
import logging
from pathlib import Path

from django.conf import settings

from experiments.bundles import BUILDERS, get_bundle
from stochkin.exceptions import ConfigurationError
from .serializers import CLE_ALGORITHMS, LNA_ALGORITHMS, ModelSpecSerializer, RunConfigSerializer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    algorithm: str
    iters: int
    seed: int
    N: Optional[object] = None
    N1: Optional[int] = None
    burn_in: float = 0.1
    scale: Optional[float] = None
    tau: float = 1.0
    dt_max: Optional[float] = None
    rtol: Optional[float] = None
    workers: int = 1
    output_dir: Optional[str] = None
    d_eff: Optional[float] = None
    covariance: Optional[object] = None
    initial: Optional[list] = None
    resampling: str = 'multinomial'
    density: bool = True
    progress: bool = False

    @property
    def uses_lna(self):
        return self.algorithm in LNA_ALGORITHMS

    @property
    def uses_cle(self):
        return self.algorithm in CLE_ALGORITHMS

    @classmethod
    def from_validated(cls, data):
        data = dict(data)
        if 'lambda' in data:
            data['scale'] = data.pop('lambda')
        return cls(**data)

    def to_dict(self):
        data = asdict(self)
        data['lambda'] = data.pop('scale')
        return data

    def resolve(self, bundle, pilot=False):
        """
        Fill every unset option from the bundle's defaults. A pilot run uses the
        bundle's small pilot particle count.
        """
        defaults = bundle.defaults
        n_particles = self.N
        if n_particles is None:
            n_particles = defaults['pilot_N'] if pilot else defaults['N']
        elif isinstance(n_particles, str):
            n_particles = _tuned_particles(n_particles)
        n_particles = None if self.algorithm == 'approx-lna' else int(n_particles)
        return replace(
            self,
            N=n_particles,
            N1=(self.N1 or n_particles) if self.algorithm == 'dapmmh-cle' else None,
            scale=self.scale if self.scale is not None else bundle.scale(self.algorithm),
            rtol=self.rtol if self.rtol is not None else settings.DEFAULT_RTOL,
            d_eff=self.d_eff if self.d_eff is not None else defaults['d_eff'],
            output_dir=self.output_dir or str(Path('output') / f"{bundle.name}-{self.algorithm}-{self.seed}"),
        )


def _tuned_particles(path):
    data = read_json(path)
    if 'chosen' not in data:
        raise ConfigurationError(f"{path} is not a tuning.json: it has no 'chosen' particle count")
    return data['chosen']


def read_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as e:
        raise ConfigurationError(f"Cannot read {path}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path} is not valid JSON: {e}")


def _errors(errors):
    return json.dumps(errors, sort_keys=True)


def parse_config(text):
    """Validated RunConfig from a JSON document."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigurationError("Config must be a JSON object")
    serializer = RunConfigSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigurationError(f"Invalid config: {_errors(serializer.errors)}")
    return RunConfig.from_validated(serializer.validated_data)


def load_experiment(reference):
    """A built-in bundle by name, or a user model document by path."""
    if reference in BUILDERS:
        return get_bundle(reference)
    path = Path(reference)
    if not path.exists():
        raise ConfigurationError(
            f"{reference!r} is neither a built-in experiment {sorted(BUILDERS)} nor a model file"
        )
    serializer = ModelSpecSerializer(data=read_json(path))
    if not serializer.is_valid():
        raise ConfigurationError(f"Invalid model {path}: {_errors(serializer.errors)}")
    logger.info(f"Loaded model {serializer.validated_data['name']} from {path}")
    return serializer.save()
