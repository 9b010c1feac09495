import json

import numpy as np
from django.core.management.base import CommandError

from spatial.exceptions import KinkPoint, ProbabilityOutOfRange
from spatial.management.commands._base import EXIT_RUNTIME, SpatialCommand
from spatial.services.constraints import Implies, Var, chain_to_constraints
from spatial.services.inference import chain_depth
from spatial.services.pipeline import pipeline
from spatial.services.qa_oracle import Oracle
from spatial.services.render import RenderFormat, render_chain
from spatial.services.rule_kb import default_kb
from spatial.services.softlogic import eval_product, grad_check, random_expr
from spatial.services.spatial_core import Entity, Scene, parse_fact

# Escena de referencia: el blanco sobre el naranja y el rojo sobre el blanco.
REFERENCE_SCENE = {
    'entities': [
        {'id': 'orange', 'attrs': {'color': 'orange'}},
        {'id': 'red', 'attrs': {'color': 'red'}},
        {'id': 'white', 'attrs': {'color': 'white'}},
    ],
    'facts': ['above(white,orange)', 'above(red,white)'],
}
REFERENCE_TARGET = 'below(orange,red)'
REFERENCE_INTERMEDIATE = {'below(orange,white)', 'below(white,red)'}
REFERENCE_CONSTRAINTS = {
    '["=>", ["var", "q1"], ["var", "q3"]]',
    '["=>", ["var", "q2"], ["var", "q4"]]',
    '["=>", ["and", ["var", "q3"], ["var", "q4"]], ["var", "t"]]',
}


def reference_scene() -> Scene:
    return Scene.build(
        (Entity(e['id'], e['attrs']) for e in REFERENCE_SCENE['entities']),
        (parse_fact(f) for f in REFERENCE_SCENE['facts']),
    )


class Command(SpatialCommand):
    help = 'Corre el ejemplo de referencia de punta a punta y chequeos de gradiente.'

    def add_arguments(self, parser):
        parser.add_argument('--grad-samples', type=int, default=50)
        self.add_seed_argument(parser)

    def handle(self, *args, **options):
        checks = []

        def check(name, ok, detail=''):
            checks.append({'name': name, 'ok': bool(ok), 'detail': detail})

        scene = reference_scene()
        kb = default_kb()
        target = parse_fact(REFERENCE_TARGET)
        oracle = Oracle(scene, kb)
        answered = oracle.answer_yn(target)
        check('answer', answered.answer.yes, answered.answer.to_json())

        chain = answered.chains.get(target)
        inner = {str(s.fact) for s in chain.rule_steps() if s.fact != target} if chain else set()
        check('chain', inner == REFERENCE_INTERMEDIATE, sorted(inner))
        check('depth', chain is not None and chain_depth(chain) == 2,
              chain_depth(chain) if chain else None)

        constraints = chain_to_constraints(chain) if chain else None
        got = {json.dumps(c.expr.to_sexpr()) for c in constraints.constraints} if constraints else set()
        check('constraints', got == REFERENCE_CONSTRAINTS, sorted(got))
        check('gold_satisfied', constraints is not None and constraints.gold_satisfied())

        rationale = render_chain(chain, scene, RenderFormat.COT) if chain else ''
        check('rationale', len(rationale.split('\n')) == 4, rationale)

        negative = oracle.answer_yn(parse_fact('above(orange,red)'))
        check('closed_world', negative.answer.yes is False and not negative.chains)
        check('pipeline', pipeline(scene, target, kb, oracle=oracle).depth == 2)

        soft = eval_product(Implies(Var('q1'), Var('q3')), {'q1': 0.9, 'q3': 0.45})
        check('implies_value', abs(soft.value - 0.5) <= 1e-12, soft.value)

        seed = options['seed'] if options['seed'] is not None else 0
        rng = np.random.default_rng(seed)
        names = ['a', 'b', 'c']
        worst, tried = 0.0, 0
        while tried < options['grad_samples']:
            expr = random_expr(rng, names)
            probs = {n: float(rng.uniform(0.05, 0.95)) for n in names}
            try:
                worst = max(worst, grad_check(expr, probs))
            except (KinkPoint, ProbabilityOutOfRange):
                continue
            tried += 1
        check('grad_check', worst <= 1e-5, f"error relativo máximo {worst:.2e}")

        ok = all(c['ok'] for c in checks)
        self.stdout.write(json.dumps({'ok': ok, 'checks': checks}, indent=2, ensure_ascii=False))
        if not ok:
            failed = ', '.join(c['name'] for c in checks if not c['ok'])
            raise CommandError(f"selftest falló: {failed}", returncode=EXIT_RUNTIME)
