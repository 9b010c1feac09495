from spatial.exceptions import SchemaError
from spatial.management.commands._base import SpatialCommand
from spatial.services.dataset import load_jsonl
from spatial.services.trainer import TrainConfig, ablation


class Command(SpatialCommand):
    help = 'Compara λ=1 contra λ=0 sobre los mismos datos y varias semillas.'

    def add_arguments(self, parser):
        parser.add_argument('--data', required=True, help='Dataset JSONL.')
        parser.add_argument('--config', help='Configuración JSON del entrenamiento.')
        parser.add_argument('--seeds', default='0,1,2,3,4', help='Semillas separadas por coma.')
        parser.add_argument('--holdout', type=float, default=0.2, help='Fracción held-out.')
        self.add_seed_argument(parser)
        self.add_out_argument(parser)

    def handle(self, *args, **options):
        try:
            seeds = [int(s) for s in options['seeds'].split(',') if s.strip()]
        except ValueError as exc:
            raise SchemaError(f"--seeds inválido: {options['seeds']}") from exc
        if not seeds:
            raise SchemaError('--seeds no puede estar vacío')
        data = self.read_json(options['config'], 'configuración') if options['config'] else {}
        config = TrainConfig.from_json(data, seed=options['seed'])
        result = ablation(load_jsonl(options['data']), config, seeds, options['holdout'])
        self.emit_json(result, options)
