import json
import warnings

from django.test import SimpleTestCase

from spatial.exceptions import ConfigError, DepthUnreachable, SchemaError
from spatial.services.constraints import Template
from spatial.services.inference import close
from spatial.services.rule_kb import default_kb
from spatial.services.scenegen import (
    Box,
    GenConfig,
    generate_dataset,
    generate_examples,
    generate_scene,
    label_sound,
    max_distance,
    min_distance,
    min_entities,
    relations_between,
    spine_plans,
)
from spatial.services.spatial_core import QuestionType, Relation


def box(lo, size):
    return Box.at(lo, size)


class GeometryTests(SimpleTestCase):
    def test_directional_with_margin(self):
        a, b = box((0, 0, 0), (1, 1, 1)), box((2, 0, 0), (1, 1, 1))
        self.assertIn(Relation.LEFT, relations_between(a, b))
        self.assertIn(Relation.RIGHT, relations_between(b, a))
        close_by = box((1.2, 0, 0), (1, 1, 1))
        self.assertNotIn(Relation.LEFT, relations_between(a, close_by))

    def test_distance(self):
        a = box((0, 0, 0), (0.5, 0.5, 0.5))
        self.assertIn(Relation.NEAR, relations_between(a, box((0.6, 0, 0), (0.5, 0.5, 0.5))))
        far = box((10, 0, 0), (1, 1, 1))
        self.assertIn(Relation.FAR, relations_between(a, far))
        self.assertAlmostEqual(min_distance(a, far), 9.5)
        self.assertGreater(max_distance(a, far), min_distance(a, far))

    def test_topology(self):
        outer = box((0, 0, 0), (4, 4, 4))
        self.assertIn(Relation.INSIDE, relations_between(box((1, 1, 1), (1, 1, 1)), outer))
        self.assertIn(Relation.COVEREDBY, relations_between(box((0, 1, 1), (1, 1, 1)), outer))
        self.assertIn(Relation.CONTAIN, relations_between(outer, box((1, 1, 1), (1, 1, 1))))
        self.assertIn(Relation.TOUCH, relations_between(box((4, 0, 0), (1, 1, 1)), outer))
        self.assertIn(Relation.OVERLAP, relations_between(box((3, 3, 3), (2, 2, 2)), outer))
        self.assertIn(Relation.DISCONNECTED, relations_between(box((6, 0, 0), (1, 1, 1)), outer))


class ConfigTests(SimpleTestCase):
    def test_depth_needs_enough_entities(self):
        with self.assertRaises(ConfigError):
            GenConfig(n_entities=2, k_target=10)

    def test_bounds(self):
        for kwargs in ({'k_target': 0}, {'k_target': 11}, {'n_entities': 1},
                       {'reveal_policy': 'some'}, {'negative_ratio': 1.5}):
            with self.assertRaises(ConfigError):
                GenConfig(**kwargs)

    def test_plans_add_up_to_depth(self):
        cost = {'revealed': 0, 'converse': 1, 'chained': 1}
        for k in range(1, 11):
            plans = spine_plans(k)
            self.assertTrue(plans)
            for plan in plans:
                self.assertEqual(plan.m + cost[plan.top] + (plan.target == 'converse'), k)
        self.assertEqual(min_entities(1), 2)

    def test_from_json(self):
        config = GenConfig.from_json({'k_target': 3, 'templates': 'reverse,exactL'}, seed=5)
        self.assertEqual(config.seed, 5)
        self.assertEqual(config.templates, {Template.REVERSE, Template.EXACT_L})
        with self.assertRaises(SchemaError):
            GenConfig.from_json({'k_target': 'deep'})


class SceneTests(SimpleTestCase):
    def test_revealed_facts_are_true(self):
        for seed in range(10):
            gscene = generate_scene(GenConfig(n_entities=7, n_blocks=2, k_target=3, seed=seed))
            self.assertLessEqual(gscene.scene.facts, gscene.truth)

    def test_spine_target_has_requested_depth(self):
        kb = default_kb()
        for k in range(1, 11):
            for seed in range(3):
                gscene = generate_scene(GenConfig(n_entities=k + 4, k_target=k, seed=seed))
                closure = close(gscene.scene, kb)
                self.assertEqual(closure.round_of(gscene.spine_target), k, (k, seed))

    def test_reveal_all(self):
        gscene = generate_scene(GenConfig(n_entities=4, k_target=2, reveal_policy='all'))
        self.assertEqual(gscene.scene.facts, gscene.truth)

    def test_two_entities(self):
        gscene = generate_scene(GenConfig(n_entities=2, k_target=1, distractors=0))
        self.assertEqual(len(gscene.scene.facts), 1)

    def test_blocks_are_named(self):
        gscene = generate_scene(GenConfig(n_entities=5, n_blocks=2, k_target=2))
        names = {e.id: e for e in gscene.entities}
        self.assertEqual(names['A'].attrs['kind'], 'block')
        self.assertEqual(names['B'].attrs['name'], 'B')


class ExampleTests(SimpleTestCase):
    def test_yes_questions_hit_the_target_depth(self):
        for k in range(1, 11):
            config = GenConfig(n_entities=k + 4, k_target=k, seed=k, n_scenes=3,
                               questions_per_scene=1, negative_ratio=0.0)
            records = generate_dataset(config)
            self.assertTrue(records)
            for record in records:
                self.assertTrue(record.gold.yes)
                self.assertFalse(record.depth_unreachable)
                self.assertEqual(record.k, k, record.id)

    def test_several_yes_questions_per_scene_stay_at_depth(self):
        hits = total = 0
        for k in range(1, 11):
            config = GenConfig(n_entities=k + 6, n_blocks=2, k_target=k, seed=k, n_scenes=4,
                               questions_per_scene=3, negative_ratio=0.0)
            with warnings.catch_warnings():
                warnings.simplefilter('ignore', DepthUnreachable)
                records = generate_dataset(config)
            for record in records:
                self.assertTrue(record.gold.yes)
                if not record.depth_unreachable:
                    self.assertEqual(record.k, k, record.id)
                hits += int(record.k == k)
                total += 1
        self.assertTrue(total)
        self.assertGreaterEqual(hits / total, 0.95)

    def test_exhausted_depth_skips_instead_of_going_shallower(self):
        gscene = generate_scene(GenConfig(n_entities=4, k_target=2, seed=0, distractors=0))
        config = GenConfig(n_entities=4, k_target=2, negative_ratio=0.0, questions_per_scene=12)
        closure = close(gscene.scene, default_kb())
        at_k = [f for f in closure.provenance if closure.round_of(f) == 2]
        records = generate_examples(gscene, config)
        self.assertEqual(len(records), min(len(at_k), 12))
        self.assertTrue(all(r.k == 2 and not r.depth_unreachable for r in records))

    def test_labels_are_sound(self):
        config = GenConfig(n_entities=6, n_blocks=2, k_target=3, question_mix=0.6, negative_ratio=0.5,
                           questions_per_scene=4)
        for index in range(8):
            gscene = generate_scene(replace_seed(config, index), index)
            for record in generate_examples(gscene, replace_seed(config, index)):
                self.assertTrue(label_sound(record, gscene), record.id)

    def test_gold_satisfies_constraints(self):
        for mode in ('exclusion', 'exactly_one'):
            config = GenConfig(n_entities=6, n_blocks=1, k_target=2, question_mix=0.5, n_scenes=6,
                               questions_per_scene=4, exact_mode=mode)
            for record in generate_dataset(config):
                self.assertTrue(record.constraints.gold_satisfied(), record.id)

    def test_no_answers_have_a_reverse_partner(self):
        config = GenConfig(n_entities=5, k_target=2, negative_ratio=1.0, n_scenes=4)
        records = generate_dataset(config)
        self.assertTrue(records)
        for record in records:
            self.assertEqual(record.question.qtype, QuestionType.YN)
            self.assertFalse(record.gold.yes)
            if record.chain is not None:
                self.assertIn('reverse', record.constraints.templates())

    def test_find_relation_questions(self):
        config = GenConfig(n_entities=5, k_target=2, question_mix=0.0, n_scenes=3)
        for record in generate_dataset(config):
            self.assertEqual(record.question.qtype, QuestionType.FR)
            self.assertTrue(record.gold.relations)
            self.assertEqual(set(record.constraints.templates()), {'exactL', 'inverse'})
            self.assertEqual(len(record.main_ids), 15)

    def test_template_filter(self):
        config = GenConfig(n_entities=5, k_target=2, negative_ratio=0.0, n_scenes=3,
                           templates=frozenset({Template.TRANSITIVE}))
        for record in generate_dataset(config):
            self.assertLessEqual(set(record.constraints.templates()), {'transitive'})

    def test_same_seed_same_bytes(self):
        config = GenConfig(n_entities=6, n_blocks=1, k_target=3, question_mix=0.7, n_scenes=3, seed=11)
        first = json.dumps([r.to_json() for r in generate_dataset(config)], sort_keys=True)
        second = json.dumps([r.to_json() for r in generate_dataset(config)], sort_keys=True)
        self.assertEqual(first, second)
        other = replace_seed(config, 12)
        self.assertNotEqual(first, json.dumps([r.to_json() for r in generate_dataset(other)], sort_keys=True))

    def test_unreachable_depth_warns(self):
        # escena de profundidad 1 pedida con k=10: se usa el hecho más profundo disponible
        gscene = generate_scene(GenConfig(n_entities=4, k_target=1, seed=0))
        config = GenConfig(n_entities=14, k_target=10, negative_ratio=0.0, questions_per_scene=1)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter('always')
            records = generate_examples(gscene, config)
        self.assertEqual(len(records), 1)
        self.assertTrue(records[0].depth_unreachable)
        self.assertLess(records[0].k, 10)
        self.assertTrue(any(issubclass(w.category, DepthUnreachable) for w in caught))


def replace_seed(config, seed):
    from dataclasses import replace

    return replace(config, seed=seed)
