import itertools
import math

import numpy as np
from django.test import SimpleTestCase

from spatial.exceptions import KinkPoint, MissingVariable, ProbabilityOutOfRange
from spatial.services.constraints import And, Implies, Not, Or, Var, evaluate_boolean
from spatial.services.softlogic import (
    NEG_LOG_EPS,
    ViolationForm,
    eval_product,
    grad_check,
    penalty,
    random_expr,
    violation,
)

a, b, c = Var('a'), Var('b'), Var('c')

# (expresión, probabilidades, valor esperado) calculados a mano
HAND_VALUES = (
    (a, {'a': 0.3}, 0.3),
    (Not(a), {'a': 0.3}, 0.7),
    (Not(Not(a)), {'a': 0.37}, 0.37),
    (And((a, b)), {'a': 0.5, 'b': 0.4}, 0.2),
    (Or((a, b)), {'a': 0.5, 'b': 0.4}, 0.7),
    (And((a, b, c)), {'a': 0.5, 'b': 0.5, 'c': 0.5}, 0.125),
    (Or((a, b, c)), {'a': 0.5, 'b': 0.5, 'c': 0.5}, 0.875),
    (And((a, a)), {'a': 0.5}, 0.25),
    (Or((a, a)), {'a': 0.5}, 0.75),
    (Implies(a, b), {'a': 0.9, 'b': 0.45}, 0.5),
    (Implies(a, b), {'a': 0.4, 'b': 0.8}, 1.0),
    (Implies(a, b), {'a': 0.0, 'b': 0.0}, 1.0),
    (Implies(a, b), {'a': 1.0, 'b': 0.0}, 0.0),
    (Implies(a, a), {'a': 0.3}, 1.0),
    (Not(And((a, b))), {'a': 0.7, 'b': 0.6}, 0.58),
    (Not(Or((a, b))), {'a': 0.2, 'b': 0.5}, 0.4),
    (Or((Not(a), b)), {'a': 0.6, 'b': 0.3}, 0.58),
    (And((a, Or((b, c)))), {'a': 0.5, 'b': 0.5, 'c': 0.5}, 0.375),
    (Implies(And((a, b)), c), {'a': 0.8, 'b': 0.9, 'c': 0.9}, 1.0),
    (Implies(And((a, b)), c), {'a': 0.8, 'b': 0.5, 'c': 0.2}, 0.5),
    (Implies(Not(a), b), {'a': 0.2, 'b': 0.4}, 0.5),
    (Implies(a, Not(b)), {'a': 0.5, 'b': 0.75}, 0.5),
    (Implies(Or((a, b)), c), {'a': 0.5, 'b': 0.5, 'c': 0.6}, 0.8),
)


class ProductValueTests(SimpleTestCase):
    def test_hand_computed_values(self):
        for expr, probs, expected in HAND_VALUES:
            result = eval_product(expr, probs)
            self.assertAlmostEqual(result.value, expected, places=12, msg=str(expr))
            self.assertAlmostEqual(result.violation, 1.0 - expected, places=12)

    def test_violation_examples(self):
        self.assertAlmostEqual(violation(Implies(a, b), {'a': 0.9, 'b': 0.45}), 0.5)
        self.assertEqual(violation(Implies(a, b), {'a': 1.0, 'b': 0.0}), 1.0)
        self.assertAlmostEqual(violation(Not(And((a, b))), {'a': 0.7, 'b': 0.6}), 0.42)
        self.assertEqual(violation(And((a, b)), {'a': 1.0, 'b': 1.0}), 0.0)

    def test_neg_log_form(self):
        h, grad = penalty(Implies(a, b), {'a': 0.9, 'b': 0.45}, ViolationForm.NEG_LOG)
        self.assertAlmostEqual(h, -math.log(0.5 + NEG_LOG_EPS))
        self.assertAlmostEqual(grad['b'], -(1 / 0.9) / (0.5 + NEG_LOG_EPS))

    def test_boolean_agreement(self):
        rng = np.random.default_rng(0)
        names = ['a', 'b', 'c']
        for _ in range(300):
            expr = random_expr(rng, names)
            for bits in itertools.product((0.0, 1.0), repeat=3):
                probs = dict(zip(names, bits))
                expected = 1.0 if evaluate_boolean(expr, probs) else 0.0
                self.assertEqual(eval_product(expr, probs).value, expected, str(expr))

    def test_range_on_random_inputs(self):
        rng = np.random.default_rng(1)
        names = ['a', 'b', 'c', 'd']
        for _ in range(300):
            expr = random_expr(rng, names, depth=4)
            probs = {n: float(rng.uniform(0.0, 1.0)) for n in names}
            value = eval_product(expr, probs).value
            self.assertTrue(0.0 <= value <= 1.0)

    def test_monotone_in_consequent_and_conjuncts(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            pa, pb, delta = rng.uniform(0.0, 1.0, 3)
            higher = min(1.0, pb + delta)
            low = eval_product(Implies(a, b), {'a': pa, 'b': pb}).value
            high = eval_product(Implies(a, b), {'a': pa, 'b': higher}).value
            self.assertGreaterEqual(high, low)
            low = eval_product(And((a, b)), {'a': pa, 'b': pb}).value
            high = eval_product(And((a, b)), {'a': pa, 'b': higher}).value
            self.assertGreaterEqual(high, low)

    def test_nary_folds_are_associative(self):
        probs = {'a': 0.3, 'b': 0.6, 'c': 0.8}
        for op in (And, Or):
            flat = eval_product(op((a, b, c)), probs).value
            nested = eval_product(op((op((a, b)), c)), probs).value
            self.assertAlmostEqual(flat, nested, places=15)

    def test_missing_and_out_of_range(self):
        with self.assertRaises(MissingVariable):
            eval_product(And((a, b)), {'a': 0.5})
        for bad in (1.5, -0.1, float('nan')):
            with self.assertRaises(ProbabilityOutOfRange):
                eval_product(a, {'a': bad})


class GradientTests(SimpleTestCase):
    def test_implies_gradient(self):
        grad = eval_product(Implies(a, b), {'a': 0.9, 'b': 0.45}).grad
        self.assertAlmostEqual(grad['b'], 1 / 0.9)
        self.assertAlmostEqual(grad['a'], -0.45 / 0.81)

    def test_satisfied_implies_has_zero_gradient(self):
        expr = Implies(And((Var('q3'), Var('q4'))), Var('t'))
        result = eval_product(expr, {'q3': 0.8, 'q4': 0.9, 't': 0.9})
        self.assertEqual(result.value, 1.0)
        self.assertEqual(result.grad, {'q3': 0.0, 'q4': 0.0, 't': 0.0})

    def test_kink_uses_else_branch(self):
        grad = eval_product(Implies(a, b), {'a': 0.5, 'b': 0.5}).grad
        self.assertAlmostEqual(grad['b'], 2.0)
        self.assertAlmostEqual(grad['a'], -2.0)
        self.assertEqual(eval_product(Implies(a, b), {'a': 0.0, 'b': 0.0}).grad, {'a': 0.0, 'b': 0.0})

    def test_single_conjunct_gradient_is_one(self):
        self.assertEqual(eval_product(And((a,)), {'a': 0.5}).grad, {'a': 1.0})

    def test_repeated_variable_accumulates(self):
        grad = eval_product(And((a, a)), {'a': 0.5}).grad
        self.assertAlmostEqual(grad['a'], 1.0)

    def test_random_gradients_match_finite_differences(self):
        rng = np.random.default_rng(42)
        names = ['a', 'b', 'c']
        checked = 0
        worst = 0.0
        while checked < 1000:
            expr = random_expr(rng, names)
            probs = {n: float(rng.uniform(0.05, 0.95)) for n in names}
            try:
                worst = max(worst, grad_check(expr, probs))
            except KinkPoint:
                continue
            checked += 1
        self.assertLessEqual(worst, 1e-5)

    def test_kink_guard(self):
        with self.assertRaises(KinkPoint):
            grad_check(Implies(a, b), {'a': 0.5, 'b': 0.5})
        with self.assertRaises(KinkPoint):
            grad_check(Implies(a, b), {'a': 0.5, 'b': 0.500001})
