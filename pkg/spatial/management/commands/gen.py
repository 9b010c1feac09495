import io

from spatial.management.commands._base import SpatialCommand
from spatial.services.dataset import summarize, write_jsonl
from spatial.services.scenegen import GenConfig, generate_dataset


class Command(SpatialCommand):
    help = 'Genera escenas sintéticas con preguntas, Q-Chains y restricciones (JSONL).'

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Configuración JSON del generador.')
        self.add_seed_argument(parser)
        self.add_kb_argument(parser)
        self.add_templates_argument(parser)
        self.add_out_argument(parser)

    def handle(self, *args, **options):
        data = self.read_json(options['config'], 'configuración') if options['config'] else {}
        if options['templates'] is not None:
            data = dict(data, templates=options['templates'])
        config = GenConfig.from_json(data, seed=options['seed'])
        records = generate_dataset(config, self.load_kb(options))

        buffer = io.StringIO()
        write_jsonl(records, buffer)
        text = buffer.getvalue()
        if options['out']:
            with open(options['out'], 'w', encoding='utf-8') as fh:
                fh.write(text)
        else:
            self.stdout.write(text, ending='')
        stats = summarize(records)
        self.stderr.write(f"{stats['records']} registros, profundidad {stats['depth']}")
