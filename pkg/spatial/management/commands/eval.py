from spatial.management.commands._base import SpatialCommand
from spatial.services.dataset import load_jsonl
from spatial.services.trainer import ToyModel, evaluate


class Command(SpatialCommand):
    help = 'Evalúa un modelo: exactitud y tasa de consistencia por plantilla.'

    def add_arguments(self, parser):
        parser.add_argument('--data', required=True, help='Dataset JSONL.')
        parser.add_argument('--model', required=True, help='Modelo JSON producido por `train`.')
        self.add_out_argument(parser)

    def handle(self, *args, **options):
        model = ToyModel.load(options['model'])
        records = load_jsonl(options['data'])
        self.emit_json(evaluate(model, records), options)
