from spatial.management.commands._base import SpatialCommand
from spatial.services.dataset import load_jsonl, summarize


class Command(SpatialCommand):
    help = 'Resumen de un dataset: tipos de pregunta, oro, profundidad y plantillas.'

    def add_arguments(self, parser):
        parser.add_argument('--data', required=True, help='Dataset JSONL.')
        self.add_format_argument(parser)
        self.add_out_argument(parser)

    def handle(self, *args, **options):
        stats = summarize(load_jsonl(options['data']))
        if options['fmt'] == 'json':
            self.emit_json(stats, options)
            return
        lines = [f"registros: {stats['records']}"]
        for key in ('question_type', 'gold', 'depth', 'templates'):
            body = ', '.join(f"{k}={v}" for k, v in stats[key].items()) or '-'
            lines.append(f"{key}: {body}")
        lines.append(f"depth_unreachable: {stats['depth_unreachable']}")
        self.emit_text('\n'.join(lines), options)
