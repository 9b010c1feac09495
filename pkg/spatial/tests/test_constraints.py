import json

from django.test import SimpleTestCase

from spatial.exceptions import NotAnOppositePair, SchemaError
from spatial.services.constraints import (
    And,
    ConstraintSet,
    Implies,
    Not,
    Or,
    Template,
    Var,
    chain_to_constraints,
    evaluate_boolean,
    exact_label_constraints,
    expr_from_sexpr,
    inverse_label_constraints,
    label_id,
    merge,
    reverse_pair_constraints,
)
from spatial.services.inference import derive
from spatial.services.rule_kb import default_kb
from spatial.services.spatial_core import Answer, Question, Relation, Scene, parse_fact


def stacked_chain():
    scene = Scene.build(['orange', 'red', 'white'], [
        parse_fact('above(white,orange)'),
        parse_fact('above(red,white)'),
    ])
    return derive(scene, parse_fact('below(orange,red)'), default_kb())


def yn(text, qid):
    return Question.yn(parse_fact(text), id=qid)


class ChainConstraintTests(SimpleTestCase):
    def test_reference_chain(self):
        cs = chain_to_constraints(stacked_chain())
        self.assertEqual(cs.question_ids, ('q1', 'q2', 'q3', 'q4', 't'))
        self.assertEqual([c.expr for c in cs.constraints], [
            Implies(Var('q1'), Var('q3')),
            Implies(Var('q2'), Var('q4')),
            Implies(And((Var('q3'), Var('q4'))), Var('t')),
        ])
        self.assertEqual([c.template for c in cs.constraints],
                         [Template.SYMMETRIC, Template.SYMMETRIC, Template.TRANSITIVE])
        self.assertTrue(cs.gold_satisfied())

    def test_one_constraint_per_rule_step(self):
        chain = stacked_chain()
        self.assertEqual(len(chain_to_constraints(chain)), len(chain.rule_steps()))

    def test_single_leaf_chain(self):
        scene = Scene.build('ab', [parse_fact('left(a,b)')])
        cs = chain_to_constraints(derive(scene, parse_fact('left(a,b)'), default_kb()))
        self.assertEqual(len(cs), 0)
        self.assertEqual(len(cs.questions), 1)

    def test_transitive_topo_step(self):
        scene = Scene.build('abcd', [
            parse_fact('inside(a,b)'), parse_fact('inside(c,d)'), parse_fact('left(b,d)'),
        ])
        cs = chain_to_constraints(derive(scene, parse_fact('left(a,c)'), default_kb()))
        self.assertEqual(len(cs), 1)
        constraint = cs.constraints[0]
        self.assertEqual(constraint.template, Template.TRANSITIVE_TOPO)
        self.assertEqual(constraint.expr, Implies(And((Var('q1'), Var('q2'), Var('q3'))), Var('t')))

    def test_json_shape(self):
        data = chain_to_constraints(stacked_chain()).to_json()
        self.assertEqual(data['constraints'][0], {
            'id': 'c1', 'template': 'symmetric', 'expr': ['=>', ['var', 'q1'], ['var', 'q3']],
        })
        self.assertEqual(data['questions'][0]['gold'], 'yes')
        again = ConstraintSet.from_json(json.loads(json.dumps(data)))
        self.assertEqual(again.to_json(), data)


class ReverseTests(SimpleTestCase):
    def test_left_right(self):
        cs = reverse_pair_constraints(yn('left(a,b)', 'p'), yn('right(a,b)', 'n'))
        self.assertEqual([c.expr for c in cs.constraints], [
            Implies(Var('p'), Not(Var('n'))),
            Implies(Not(Var('p')), Var('n')),
        ])
        self.assertTrue(all(c.template is Template.REVERSE for c in cs.constraints))
        self.assertEqual(cs.gold_assignment(), {'p': 1.0, 'n': 0.0})
        self.assertTrue(cs.gold_satisfied())

    def test_near_far(self):
        cs = reverse_pair_constraints(yn('near(a,b)', 'p'), yn('far(a,b)', 'n'))
        self.assertEqual(len(cs), 2)

    def test_not_an_opposite_pair(self):
        with self.assertRaises(NotAnOppositePair):
            reverse_pair_constraints(yn('left(a,b)', 'p'), yn('above(a,b)', 'n'))
        with self.assertRaises(NotAnOppositePair):
            reverse_pair_constraints(yn('left(a,b)', 'p'), yn('right(b,a)', 'n'))


class LabelConstraintTests(SimpleTestCase):
    def setUp(self):
        self.question = Question.fr('a', 'b', id='f')

    def test_five_exclusions(self):
        cs = exact_label_constraints(self.question)
        self.assertEqual(len(cs), 5)
        self.assertEqual(len(cs.questions), 15)
        left, right = Var('f:left'), Var('f:right')
        self.assertEqual(cs.constraints[0].expr, Not(And((left, right))))

    def test_boolean_satisfaction(self):
        cs = exact_label_constraints(self.question)
        probs = {qid: 0.0 for qid in cs.question_ids}
        probs['f:left'] = 1.0
        self.assertTrue(all(evaluate_boolean(c.expr, probs) for c in cs.constraints))
        probs['f:right'] = 1.0
        self.assertFalse(evaluate_boolean(cs.constraints[0].expr, probs))

    def test_exactly_one_mode(self):
        gold = Answer.relation_set([Relation.LEFT, Relation.NEAR])
        cs = exact_label_constraints(self.question, gold, mode='exactly_one')
        self.assertEqual(len(cs), 2)
        self.assertTrue(cs.gold_satisfied())
        with self.assertRaises(SchemaError):
            exact_label_constraints(self.question, mode='xor')

    def test_inverse_labels(self):
        inverse = Question.fr('b', 'a', id='g')
        gold = Answer.relation_set([Relation.INSIDE, Relation.LEFT])
        gold_inverse = Answer.relation_set([Relation.CONTAIN, Relation.RIGHT])
        cs = inverse_label_constraints(self.question, inverse, gold, gold_inverse)
        self.assertEqual(len(cs), 30)
        self.assertIn(Implies(Var('f:inside'), Var('g:contain')), [c.expr for c in cs.constraints])
        self.assertTrue(cs.gold_satisfied())
        with self.assertRaises(SchemaError):
            inverse_label_constraints(self.question, Question.fr('a', 'c', id='h'))

    def test_label_ids(self):
        self.assertEqual(label_id(self.question, Relation.COVEREDBY), 'f:coveredby')


class ConstraintSetTests(SimpleTestCase):
    def test_dangling_variable(self):
        from spatial.services.constraints import Constraint, QuestionEntry

        entry = QuestionEntry('q1', yn('left(a,b)', 'q1'), True)
        with self.assertRaises(SchemaError):
            ConstraintSet([entry], [Constraint('c1', Implies(Var('q1'), Var('q9')), Template.SYMMETRIC)])

    def test_merge_renumbers_and_dedupes(self):
        chain = chain_to_constraints(stacked_chain())
        pair = reverse_pair_constraints(yn('below(orange,red)', 't'), yn('above(orange,red)', 'n'))
        merged = merge(chain, pair)
        self.assertEqual([c.id for c in merged.constraints], ['c1', 'c2', 'c3', 'c4', 'c5'])
        self.assertEqual(merged.question_ids, ('q1', 'q2', 'q3', 'q4', 't', 'n'))
        self.assertEqual(merged.templates(), ['reverse', 'symmetric', 'transitive'])
        self.assertTrue(merged.gold_satisfied())
        self.assertEqual(len(merged.only({Template.REVERSE})), 2)

    def test_merge_conflicting_questions(self):
        a = reverse_pair_constraints(yn('left(a,b)', 'p'), yn('right(a,b)', 'n'))
        b = reverse_pair_constraints(yn('near(a,b)', 'p'), yn('far(a,b)', 'n'))
        with self.assertRaises(SchemaError):
            merge(a, b)

    def test_sexpr_parsing(self):
        expr = expr_from_sexpr(['or', ['not', ['var', 'a']], ['and', ['var', 'b'], ['var', 'c']]])
        self.assertEqual(expr, Or((Not(Var('a')), And((Var('b'), Var('c'))))))
        self.assertEqual(expr.variables(), ['a', 'b', 'c'])
        for bad in ([], ['xor', ['var', 'a']], ['=>', ['var', 'a']], ['var'], 'a', ['and']):
            with self.assertRaises(SchemaError):
                expr_from_sexpr(bad)

    def test_template_list(self):
        self.assertEqual(Template.parse_list('reverse, exactL'), {Template.REVERSE, Template.EXACT_L})
        self.assertEqual(Template.parse_list(''), frozenset())
        with self.assertRaises(SchemaError):
            Template.parse_list('symmetric,bogus')
