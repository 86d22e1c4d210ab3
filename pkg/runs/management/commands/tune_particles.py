from runs.services import InferenceService
from ._common import StochKinCommand, add_config_arguments, config_from_options


class Command(StochKinCommand):
    help = 'Choose the particle count giving a log-likelihood variance of 1 to 1.5 at the pilot mean'

    def add_arguments(self, parser):
        add_config_arguments(parser)
        parser.add_argument('--pilot', required=True, help='pilot.json written by the pilot command')
        parser.add_argument('--candidates', type=int, nargs='+', help='Particle counts to try')
        parser.add_argument('--reps', type=int, default=100, help='Filter runs per candidate (default: 100)')

    def run(self, **options):
        service = InferenceService(config_from_options(options))
        result = service.tune(options['pilot'], options['candidates'], options['reps'])
        for n, variance in zip(result.candidates, result.variances):
            self.stdout.write(f'N={n}: variance {variance:.3f}')
        style = self.style.SUCCESS if result.in_band else self.style.WARNING
        self.stdout.write(style(f'Chose N={result.chosen}; wrote {service.output_dir / "tuning.json"}'))
