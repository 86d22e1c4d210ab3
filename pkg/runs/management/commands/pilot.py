from runs.services import InferenceService
from ._common import StochKinCommand, add_config_arguments, config_from_options


class Command(StochKinCommand):
    help = 'Short pmmh run with few particles; writes pilot.json with the posterior mean and covariance'

    def add_arguments(self, parser):
        add_config_arguments(parser)

    def run(self, **options):
        service = InferenceService(config_from_options(options), pilot=True)
        summary = service.pilot()
        self.stdout.write(self.style.SUCCESS(
            f'Pilot acceptance {summary.acceptance_rate:.3f}; wrote {service.output_dir / "pilot.json"}'
        ))
