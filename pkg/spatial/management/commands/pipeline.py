from spatial.exceptions import SchemaError
from spatial.management.commands._base import SpatialCommand
from spatial.services.constraints import CHAIN_TEMPLATES
from spatial.services.pipeline import PipelineOptions, pipeline_many
from spatial.services.render import DEFAULT_BANK, PhraseBank, RenderFormat
from spatial.services.spatial_core import QuestionType


class Command(SpatialCommand):
    help = 'Derivar -> restricciones -> racional para uno o varios objetivos.'

    def add_arguments(self, parser):
        self.add_scene_argument(parser)
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument('--target', help='Hecho objetivo "rel(subj,obj)".')
        source.add_argument('--questions', help='Lista JSON de preguntas YN.')
        self.add_kb_argument(parser)
        self.add_templates_argument(parser)
        self.add_format_argument(parser, choices=tuple(f.value for f in RenderFormat), default='cot')
        parser.add_argument('--phrases', help='Banco de frases JSON.')
        self.add_out_argument(parser)

    def handle(self, *args, **options):
        scene = self.load_scene(options['scene'])
        if options['target']:
            targets = [self.parse_target(options['target'], scene)]
        else:
            targets = []
            for question in self.load_questions(options['questions']):
                if question.qtype is not QuestionType.YN:
                    raise SchemaError(f"'{question.id}': pipeline sólo acepta preguntas YN")
                scene.require_entities(*question.entities)
                targets.append(question.fact)
        bank = PhraseBank.from_json(options['phrases']) if options['phrases'] else DEFAULT_BANK
        # reverse sólo si se pide con --include-templates
        opts = PipelineOptions(self.templates(options, CHAIN_TEMPLATES), RenderFormat(options['fmt']), bank)
        results = pipeline_many(scene, targets, self.load_kb(options), opts)
        data = [r.to_json() for r in results]
        self.emit_json(data[0] if options['target'] else data, options)
