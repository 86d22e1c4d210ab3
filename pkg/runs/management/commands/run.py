from runs.services import InferenceService
from ._common import StochKinCommand, add_config_arguments, config_from_options


class Command(StochKinCommand):
    help = 'Run pmmh, delayed-acceptance pmmh or a surrogate-only chain and write its outputs'

    def add_arguments(self, parser):
        add_config_arguments(parser)

    def run(self, **options):
        service = InferenceService(config_from_options(options))
        report = service.run()
        if report.delayed:
            acceptance = f'alpha1 {report.alpha1:.3f}, alpha2|1 {report.alpha2_given_1:.3f}'
        else:
            acceptance = f'acceptance {report.acceptance_rate:.3f}'
        self.stdout.write(self.style.SUCCESS(
            f'{report.algorithm}: {report.iterations} iterations, {acceptance}, '
            f'{report.filter_calls} exact filter calls, '
            f'outputs in {service.output_dir}'
        ))
