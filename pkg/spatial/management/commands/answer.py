from spatial.management.commands._base import SpatialCommand
from spatial.services.qa_oracle import Oracle
from spatial.services.spatial_core import Question


class Command(SpatialCommand):
    help = 'Responde preguntas YN / FR sobre una escena (mundo cerrado).'

    def add_arguments(self, parser):
        self.add_scene_argument(parser)
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument('--questions', help='Lista JSON de preguntas.')
        source.add_argument('--target', help='Pregunta YN como hecho "rel(subj,obj)".')
        self.add_kb_argument(parser)
        self.add_format_argument(parser)
        self.add_out_argument(parser)

    def handle(self, *args, **options):
        scene = self.load_scene(options['scene'])
        if options['questions']:
            questions = self.load_questions(options['questions'])
        else:
            questions = [Question.yn(self.parse_target(options['target'], scene))]
        oracle = Oracle(scene, self.load_kb(options))
        answered = oracle.answer_all(questions)

        if options['fmt'] == 'json':
            self.emit_json([a.to_json() for a in answered], options)
            return
        lines = []
        for a in answered:
            value = a.answer.to_json()
            if isinstance(value, list):
                value = '{' + ', '.join(value) + '}'
            lines.append(f"{a.question.id}: {value} (profundidad {a.depth})")
        self.emit_text('\n'.join(lines), options)
