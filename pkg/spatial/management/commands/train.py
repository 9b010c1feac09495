import json

from spatial.management.commands._base import SpatialCommand
from spatial.services.dataset import load_jsonl
from spatial.services.trainer import TrainConfig, export_report_xlsx, train


class Command(SpatialCommand):
    help = 'Entrena el modelo de juguete con la pérdida combinada (CE + λ·violaciones).'

    def add_arguments(self, parser):
        parser.add_argument('--data', required=True, help='Dataset JSONL generado con `gen`.')
        parser.add_argument('--config', help='Configuración JSON del entrenamiento.')
        self.add_seed_argument(parser)
        self.add_templates_argument(parser)
        parser.add_argument('--out', required=True, help='Archivo del modelo entrenado (JSON).')
        parser.add_argument('--report', help='Reporte por época: .json o .xlsx.')

    def handle(self, *args, **options):
        records = load_jsonl(options['data'])
        data = self.read_json(options['config'], 'configuración') if options['config'] else {}
        if options['templates'] is not None:
            data = dict(data, templates=options['templates'])
        config = TrainConfig.from_json(data, seed=options['seed'])

        model, report = train(records, config)
        model.save(options['out'])

        path = options['report']
        if path and path.lower().endswith('.xlsx'):
            export_report_xlsx(report, path)
        elif path:
            with open(path, 'w', encoding='utf-8') as fh:
                json.dump(report.to_json(), fh, indent=2)
                fh.write('\n')
        final = report.final
        self.stdout.write(json.dumps({
            'model': options['out'],
            'accuracy': final['accuracy'],
            'consistency_rate': final['consistency_rate'],
        }, indent=2))
