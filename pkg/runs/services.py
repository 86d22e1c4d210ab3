"""
Orchestration of the pilot, tuning and main-run stages, and the files each writes.
"""
import json
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from lna.likelihood import LnaLikelihood
from mcmc.diagnostics import density_grid
from mcmc.proposals import ProposalSpec
from mcmc.samplers import dapmmh_run, pmmh_run
from mcmc.tuning import PilotSummary, pilot_summary, pilot_tune_particles
from network.reactions import ParamVector
from smc.filters import ClePropagator, ParticleFilterLikelihood, SsaPropagator
from stochkin.exceptions import ConfigurationError
from stochkin.streams import EXACT_FILTER, PILOT, SURROGATE_FILTER, StreamFactory
from .config import load_experiment, read_json
from .models import RunRecord
from .serializers import RunReportSerializer

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'
DEFAULT_COVARIANCE_SCALE = 0.01


def write_matrix(path, matrix, columns):
    pd.DataFrame(np.asarray(matrix), columns=list(columns)).to_csv(path, index=False, float_format=FLOAT_FORMAT)


def read_matrix(path):
    """A CSV written by ``write_matrix`` as (column names, float matrix), exactly as written."""
    frame = pd.read_csv(path, float_precision='round_trip')
    return tuple(frame.columns), frame.to_numpy(dtype=float)


def write_json(path, data):
    with open(path, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write('\n')


class InferenceService:
    """
    Runs one config against its experiment bundle. ``pilot``, ``tune`` and ``run``
    each write their outputs into the config's output directory.
    """

    def __init__(self, config, bundle=None, pilot=False):
        self.bundle = bundle or load_experiment(config.experiment)
        self.config = config.resolve(self.bundle, pilot=pilot)
        self.streams = StreamFactory(self.config.seed)
        self.output_dir = Path(self.config.output_dir)

    @property
    def names(self):
        return self.bundle.param_names

    def exact_estimator(self, n_particles=None, streams=None, purpose=EXACT_FILTER):
        """Bootstrap filter over exact simulation."""
        bundle = self.bundle
        return ParticleFilterLikelihood(
            SsaPropagator(bundle.network), bundle.obs, bundle.times, bundle.values, bundle.x1,
            n_particles or self.config.N, streams or self.streams, purpose, self.config.workers,
            self.config.resampling,
        )

    def surrogate_estimator(self):
        """Restarting LNA or a CLE particle filter, depending on the algorithm."""
        bundle, config = self.bundle, self.config
        if config.uses_lna:
            return LnaLikelihood(bundle.network, bundle.obs, bundle.times, bundle.values, bundle.x1,
                                 tau=config.tau, rtol=config.rtol)
        if config.uses_cle:
            n_particles = config.N1 if config.algorithm == 'dapmmh-cle' else config.N
            return ParticleFilterLikelihood(
                ClePropagator(bundle.network, config.dt_max), bundle.obs, bundle.times, bundle.values,
                bundle.x1, n_particles, self.streams, SURROGATE_FILTER, config.workers, config.resampling,
            )
        raise ConfigurationError(f"{config.algorithm} has no surrogate")

    def covariance(self):
        """Proposal covariance of log c from a pilot.json, an inline matrix or the default."""
        d = self.bundle.dimension
        source = self.config.covariance
        if source is None:
            logger.warning(f"No pilot covariance given, using {DEFAULT_COVARIANCE_SCALE} * I")
            return DEFAULT_COVARIANCE_SCALE * np.eye(d)
        if isinstance(source, str):
            summary = PilotSummary.from_dict(read_json(source))
            if summary.param_names != tuple(self.names):
                raise ConfigurationError(f"{source} is for parameters {summary.param_names}, not {self.names}")
            matrix = summary.covariance
        else:
            matrix = np.asarray(source, dtype=float)
        if matrix.shape != (d, d):
            raise ConfigurationError(f"Proposal covariance must be {d} x {d}, got {matrix.shape}")
        return matrix

    def proposal(self):
        return ProposalSpec(self.config.scale, self.covariance(), self.config.d_eff)

    def initial(self):
        if self.config.initial is None:
            return self.bundle.initial_log_c()
        initial = np.asarray(self.config.initial, dtype=float)
        if initial.size != self.bundle.dimension:
            raise ConfigurationError(f"initial has {initial.size} values for {self.bundle.dimension} parameters")
        return initial

    def sample(self):
        config = self.config
        common = dict(
            prop=self.proposal(), initial=self.initial(), iters=config.iters, streams=self.streams,
            burn_in=config.burn_in, names=self.names, algorithm=config.algorithm, progress=config.progress,
        )
        logger.info(f"Running {config.algorithm} on {self.bundle.name} with seed {config.seed}")
        if config.algorithm == 'pmmh':
            estimators = (self.exact_estimator(),)
        elif config.algorithm.startswith('dapmmh'):
            estimators = (self.exact_estimator(), self.surrogate_estimator())
        else:
            estimators = (self.surrogate_estimator(),)
        try:
            if len(estimators) == 2:
                return dapmmh_run(self.bundle.prior, *estimators, **common)
            return pmmh_run(self.bundle.prior, estimators[0], exact=config.algorithm == 'pmmh', **common)
        finally:
            for estimator in estimators:
                if hasattr(estimator, 'close'):
                    estimator.close()

    def prepare_output_dir(self):
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
            marker = self.output_dir / '.write-test'
            marker.touch()
            marker.unlink()
        except OSError as e:
            raise ConfigurationError(f"Output directory {self.output_dir} is not writable: {e}")

    def write_outputs(self, report):
        trace = pd.DataFrame(report.trace, columns=['log_ml_exact', 'log_ml_surrogate'])
        trace.insert(0, 'iteration', np.arange(1, report.iterations + 1))
        write_matrix(self.output_dir / 'samples.csv', report.samples, self.names)
        trace.to_csv(self.output_dir / 'trace.csv', index=False, float_format=FLOAT_FORMAT)
        if self.config.density:
            grid = density_grid(report.samples, self.names)
            grid.to_csv(self.output_dir / 'density.csv', index=False, float_format=FLOAT_FORMAT)
        data = {**report.summary(), 'experiment': self.bundle.name, 'seed': self.config.seed,
                'config': self.config.to_dict()}
        report_data = RunReportSerializer(data).data
        write_json(self.output_dir / 'report.json', report_data)
        return report_data

    def record(self, report):
        ess_min = report.ess_min
        return RunRecord.objects.create(
            experiment=self.bundle.name,
            algorithm=self.config.algorithm,
            seed=self.config.seed,
            particles=self.config.N,
            iterations=report.iterations,
            alpha1=report.alpha1,
            alpha2_given_1=report.alpha2_given_1,
            ess_min=ess_min if math.isfinite(ess_min) else None,
            wall_time=report.wall_time,
            filter_calls=report.filter_calls,
            output_dir=str(self.output_dir),
            config=self.config.to_dict(),
        )

    def run(self):
        """Main run: chain, output files and a registry entry."""
        self.prepare_output_dir()
        report = self.sample()
        self.write_outputs(report)
        record = self.record(report)
        logger.info(f"Run {record.pk} written to {self.output_dir}")
        return report

    def pilot(self):
        """Short PMMH run whose posterior summaries seed tuning and the main run."""
        if self.config.algorithm != 'pmmh':
            raise ConfigurationError(f"Pilot runs use pmmh, not {self.config.algorithm}")
        self.prepare_output_dir()
        report = self.sample()
        self.write_outputs(report)
        summary = pilot_summary(report)
        write_json(self.output_dir / 'pilot.json', summary.to_dict())
        logger.info(f"Pilot posterior mean {dict(zip(self.names, summary.c_hat.round(6).tolist()))}")
        return summary

    def tune(self, pilot_path, candidates=None, reps=100):
        """Particle count for the main run, chosen at the pilot posterior mean."""
        summary = PilotSummary.from_dict(read_json(pilot_path))
        if summary.param_names != tuple(self.names):
            raise ConfigurationError(f"{pilot_path} is for parameters {summary.param_names}, not {self.names}")
        self.prepare_output_dir()
        c_hat = ParamVector(summary.c_hat, self.names)
        result = pilot_tune_particles(
            lambda n: self.exact_estimator(n, purpose=PILOT),
            c_hat,
            candidates or self.bundle.defaults['candidates'],
            reps,
        )
        write_json(self.output_dir / 'tuning.json', result.to_dict())
        return result
