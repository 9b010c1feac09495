from spatial.exceptions import SchemaError
from spatial.management.commands._base import SpatialCommand
from spatial.services.constraints import (
    ConstraintSet,
    Template,
    chain_to_constraints,
    exact_label_constraints,
    inverse_label_constraints,
    label_entries,
    merge,
    reverse_pair_constraints,
)
from spatial.services.inference import chain_from_json, derive
from spatial.services.qa_oracle import Oracle
from spatial.services.spatial_core import Question, QuestionType, opposite_of


class Command(SpatialCommand):
    help = 'Compila una Q-Chain (o preguntas FR) a un conjunto de restricciones lógicas.'

    def add_arguments(self, parser):
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument('--chain', help='Q-Chain JSON ya extraída.')
        source.add_argument('--target', help='Hecho objetivo; requiere --scene.')
        source.add_argument('--questions', help='Preguntas FR; requiere --scene.')
        self.add_scene_argument(parser, required=False)
        self.add_kb_argument(parser)
        self.add_templates_argument(parser)
        parser.add_argument('--exact-mode', choices=('exclusion', 'exactly_one'), default='exclusion')
        self.add_out_argument(parser)

    def handle(self, *args, **options):
        templates = self.templates(options)
        if options['chain']:
            chain = chain_from_json(self.read_json(options['chain'], 'cadena'))
            self.emit_json(chain_to_constraints(chain).only(templates).to_json(), options)
            return

        if not options['scene']:
            raise SchemaError('--target y --questions necesitan --scene')
        scene = self.load_scene(options['scene'])
        oracle = Oracle(scene, self.load_kb(options))
        if options['target']:
            result = self._from_target(scene, oracle, options['target'], templates)
        else:
            result = self._from_fr(oracle, self.load_questions(options['questions']),
                                   templates, options['exact_mode'])
        self.emit_json(result.to_json(), options)

    def _from_target(self, scene, oracle, text, templates):
        target = self.parse_target(text, scene)
        chain = derive(scene, target, oracle.kb, closure=oracle.closure)
        if chain is None:
            # mundo cerrado: sin cadena no hay restricciones
            return ConstraintSet()
        cs = chain_to_constraints(chain).only(templates)
        opposite = opposite_of(target.rel)
        if Template.REVERSE in templates and opposite is not None:
            q_pos = Question.yn(target, id=chain.target_id)
            q_neg = Question.yn(target.with_relation(opposite), id='n')
            cs = merge(cs, reverse_pair_constraints(q_pos, q_neg, True))
        return cs

    def _from_fr(self, oracle, questions, templates, mode):
        parts = []
        for question in questions:
            if question.qtype is not QuestionType.FR:
                raise SchemaError(f"'{question.id}' no es una pregunta FR")
            gold = oracle.answer(question).answer
            parts.append(ConstraintSet(label_entries(question, gold)))
            if Template.EXACT_L in templates:
                parts.append(exact_label_constraints(question, gold, mode=mode))
            if Template.INVERSE in templates:
                subj, obj = question.pair
                inverse = oracle.answer_fr(obj, subj, question_id=f"{question.id}-inv")
                parts.append(inverse_label_constraints(question, inverse.question, gold, inverse.answer))
        return merge(*parts)
