import json
import os
import tempfile

import numpy as np
from django.test import SimpleTestCase

from spatial.exceptions import MalformedFact, SchemaError, UnknownRelation, UnsupportedSymbol
from spatial.services.inference import derive
from spatial.services.render import (
    COS_SYMBOLS,
    PhraseBank,
    RenderFormat,
    StoryMode,
    noun_phrase,
    parse_nl_fact,
    render_chain,
    render_fact,
    render_question,
    render_story,
    story_lines,
)
from spatial.services.rule_kb import default_kb
from spatial.services.spatial_core import ALL_RELATIONS, Entity, Fact, Question, Relation, Scene, parse_fact

LARGE_RED = Entity('x', {'size': 'large', 'color': 'red', 'shape': 'square'})
SMALL_GREEN = Entity('y', {'size': 'small', 'color': 'green', 'shape': 'square'})
ENTITIES = [LARGE_RED, SMALL_GREEN]


def stacked_scene():
    return Scene.build(['orange', 'red', 'white'], [
        parse_fact('above(white,orange)'),
        parse_fact('above(red,white)'),
    ])


class FactRenderTests(SimpleTestCase):
    def test_nl_sentence(self):
        text = render_fact(Fact(Relation.LEFT, 'x', 'y'), ENTITIES)
        self.assertEqual(text, 'The large red square is to the left of the small green square.')

    def test_nl_round_trip_for_every_relation(self):
        for rel in ALL_RELATIONS:
            fact = Fact(rel, 'x', 'y')
            line = render_fact(fact, ENTITIES, RenderFormat.NL)
            self.assertEqual(parse_nl_fact(line, ENTITIES), fact, line)

    def test_round_trip_with_plain_ids(self):
        scene = stacked_scene()
        for fact in scene.sorted_facts():
            self.assertEqual(parse_nl_fact(render_fact(fact, scene), scene), fact)

    def test_unparseable_sentence(self):
        with self.assertRaises(MalformedFact):
            parse_nl_fact('The large red square sings to the small green square.', ENTITIES)

    def test_lr(self):
        text = render_fact(Fact(Relation.LEFT, 'x', 'y'), ENTITIES, RenderFormat.LR)
        self.assertEqual(text, 'Left(large red square, small green square)')

    def test_cos(self):
        text = render_fact(Fact(Relation.LEFT, 'x', 'y'), ENTITIES, RenderFormat.COS)
        self.assertEqual(text, '(large, red, square) < (small, green, square)')
        self.assertEqual(render_fact(Fact(Relation.ABOVE, 'x', 'y'), ENTITIES, 'cos'),
                         '(large, red, square) ↑ (small, green, square)')

    def test_cos_without_symbol(self):
        for rel in ALL_RELATIONS:
            if rel in COS_SYMBOLS:
                continue
            with self.assertRaises(UnsupportedSymbol):
                render_fact(Fact(rel, 'x', 'y'), ENTITIES, RenderFormat.COS)

    def test_blocks_and_unknown_entities(self):
        block = Entity('A', {'kind': 'block', 'name': 'A'})
        self.assertEqual(noun_phrase(block), 'block A')
        self.assertEqual(render_fact(Fact(Relation.INSIDE, 'x', 'A'), [LARGE_RED, block]),
                         'The large red square is inside block A.')
        self.assertEqual(render_fact(Fact(Relation.NEAR, 'p', 'q')), 'The p is near the q.')


class QuestionRenderTests(SimpleTestCase):
    def test_yes_no(self):
        question = Question.yn(parse_fact('above(white,orange)'))
        self.assertEqual(render_question(question, stacked_scene()), 'Is the white above the orange?')

    def test_verb_without_copula(self):
        question = Question.yn(Fact(Relation.OVERLAP, 'x', 'y'))
        self.assertEqual(render_question(question, ENTITIES),
                         'Does the large red square overlap the small green square?')
        question = Question.yn(Fact(Relation.CONTAIN, 'x', 'y'))
        self.assertEqual(render_question(question, ENTITIES),
                         'Does the large red square contain the small green square?')

    def test_find_relation(self):
        question = Question.fr('orange', 'red')
        self.assertEqual(render_question(question, stacked_scene()), 'Where is the orange relative to the red?')


class StoryTests(SimpleTestCase):
    def test_step_by_step(self):
        self.assertEqual(render_story(stacked_scene(), StoryMode.STEP_BY_STEP),
                         'The red is above the white.\nThe white is above the orange.')

    def test_raw_groups_by_subject(self):
        scene = Scene.build('abc', [parse_fact('left(a,b)'), parse_fact('near(a,c)'), parse_fact('far(b,c)')])
        self.assertEqual(render_story(scene, 'raw'),
                         'The a is to the left of the b and is near the c. The b is far from the c.')

    def test_empty_story(self):
        self.assertEqual(render_story(Scene.build('ab', [])), '')

    def test_story_lines_filter(self):
        lines = story_lines(stacked_scene(), about=['red'])
        self.assertEqual(lines, ['The red is above the white.'])

    def test_seeded_variants_are_deterministic(self):
        bank = PhraseBank({Relation.ABOVE: ['is above', 'sits over', 'is on top of']})
        first = render_story(stacked_scene(), bank=bank, rng=np.random.default_rng(3))
        second = render_story(stacked_scene(), bank=bank, rng=np.random.default_rng(3))
        self.assertEqual(first, second)
        for line in first.split('\n'):
            self.assertEqual(parse_nl_fact(line, stacked_scene(), bank).rel, Relation.ABOVE)


class PhraseBankTests(SimpleTestCase):
    def _write(self, data):
        handle, path = tempfile.mkstemp(suffix='.json')
        with os.fdopen(handle, 'w', encoding='utf-8') as fh:
            fh.write(data if isinstance(data, str) else json.dumps(data))
        self.addCleanup(os.remove, path)
        return path

    def test_from_json(self):
        bank = PhraseBank.from_json(self._write({'left': ['is   left of', 'stands left of'], 'near': 'is close to'}))
        self.assertEqual(bank.verb(Relation.LEFT), 'is left of')
        self.assertEqual(bank.verb(Relation.LEFT, 1), 'stands left of')
        self.assertEqual(bank.verb(Relation.NEAR), 'is close to')
        self.assertEqual(bank.verb(Relation.FAR), 'is far from')

    def test_invalid_banks(self):
        for data in ('{nope', ['left'], {'left': []}, {'left': ['  ']}):
            with self.assertRaises(SchemaError):
                PhraseBank.from_json(self._write(data))
        with self.assertRaises(UnknownRelation):
            PhraseBank.from_json(self._write({'sideways': ['is sideways to']}))


class ChainRenderTests(SimpleTestCase):
    def setUp(self):
        self.scene = stacked_scene()
        self.chain = derive(self.scene, parse_fact('below(orange,red)'), default_kb())

    def test_cot(self):
        lines = render_chain(self.chain, self.scene, RenderFormat.COT).split('\n')
        self.assertEqual(len(lines), 4)
        self.assertEqual(lines[0], 'Because the white is above the orange, the orange is below the white (converse).')
        self.assertEqual(lines[2], 'Because the orange is below the white and the white is below the red, '
                                   'the orange is below the red (transitive).')
        self.assertEqual(lines[-1], 'Answer: Yes')

    def test_lr_and_nl(self):
        lines = render_chain(self.chain, self.scene, RenderFormat.LR).split('\n')
        self.assertEqual(lines[2], 'Below(orange, white) + Below(white, red) => Below(orange, red) [transitive]')
        nl = render_chain(self.chain, self.scene, RenderFormat.NL).split('\n')
        self.assertEqual(nl[2], 'The orange is below the red.')

    def test_cos(self):
        lines = render_chain(self.chain, self.scene, RenderFormat.COS).split('\n')
        self.assertEqual(lines[0], '(white) ↑ (orange) => (orange) ↓ (white) [converse]')

    def test_given_target(self):
        chain = derive(self.scene, parse_fact('above(red,white)'), default_kb())
        self.assertEqual(render_chain(chain, self.scene, RenderFormat.COT, answer='Yes').split('\n'),
                         ['The story states that the red is above the white.', 'Answer: Yes'])
