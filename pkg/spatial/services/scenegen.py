"""
Generador de escenas sintéticas con geometría de cajas y control de profundidad.

Cada entidad es una caja alineada a los ejes. Los hechos verdaderos se
extraen de la geometría (nunca de la inferencia) y se revela un subconjunto
en forma de árbol; las preguntas se etiquetan con el oráculo y los No se
certifican falsos en la geometría.

Profundidad k garantizada con una "columna": x_0 ⊇ x_1 ⊇ ... ⊇ x_m
encadenadas por coveredby, más rel(x_0, z). La cima puede revelarse
directa (costo 0), como conversa conv(rel)(z, x_0) (costo 1) o en dos saltos
rel(x_0, w), rel(w, z) (costo 1). El objetivo es rel(x_m, z) o su conversa
(costo 1). k = m + costo de la cima + costo del objetivo.
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from spatial.exceptions import ConfigError, DepthUnreachable, SchemaError
from spatial.services.constraints import (
    ConstraintSet,
    QuestionEntry,
    Template,
    chain_to_constraints,
    exact_label_constraints,
    inverse_label_constraints,
    label_entries,
    merge,
    reverse_pair_constraints,
)
from spatial.services.dataset import DatasetRecord
from spatial.services.inference import chain_depth, derive
from spatial.services.qa_oracle import Oracle
from spatial.services.rule_kb import RuleKB, default_kb, directional_lifted
from spatial.services.spatial_core import (
    ALL_RELATIONS,
    DIRECTIONAL,
    Answer,
    Entity,
    Fact,
    Question,
    QuestionType,
    Relation,
    Scene,
    opposite_of,
)

logger = logging.getLogger(__name__)

MARGIN = 0.5
NEAR_BELOW = 2.0
FAR_ABOVE = 6.0
TOL = 1e-9
NEST_SHRINK = 0.7

SIZES = ('small', 'medium', 'large')
COLORS = ('red', 'green', 'blue', 'yellow', 'black', 'white', 'orange', 'purple')
SHAPES = ('square', 'circle', 'triangle')


# -------------------------
# Geometría
# -------------------------

@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    @classmethod
    def at(cls, lo, size) -> 'Box':
        lo = np.asarray(lo, dtype=float)
        return cls(tuple(float(v) for v in lo), tuple(float(v) for v in lo + np.asarray(size, dtype=float)))

    @property
    def size(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    def to_json(self) -> dict:
        return {'lo': list(self.lo), 'hi': list(self.hi)}


def min_distance(a: Box, b: Box) -> float:
    gaps = [max(0.0, b.lo[i] - a.hi[i], a.lo[i] - b.hi[i]) for i in range(3)]
    return float(np.linalg.norm(gaps))


def max_distance(a: Box, b: Box) -> float:
    spans = [max(abs(a.hi[i] - b.lo[i]), abs(b.hi[i] - a.lo[i])) for i in range(3)]
    return float(np.linalg.norm(spans))


def _before(a: Box, b: Box, axis: int) -> bool:
    return a.hi[axis] + MARGIN <= b.lo[axis]


def _within(a: Box, b: Box) -> bool:
    return all(a.lo[i] >= b.lo[i] - TOL and a.hi[i] <= b.hi[i] + TOL for i in range(3))


def _strictly_within(a: Box, b: Box) -> bool:
    return all(a.lo[i] > b.lo[i] + TOL and a.hi[i] < b.hi[i] - TOL for i in range(3))


def _topology(a: Box, b: Box) -> Optional[Relation]:
    if min_distance(a, b) > TOL:
        return Relation.DISCONNECTED
    overlap = [min(a.hi[i], b.hi[i]) - max(a.lo[i], b.lo[i]) for i in range(3)]
    if any(o <= TOL for o in overlap):
        return Relation.TOUCH
    a_in_b, b_in_a = _within(a, b), _within(b, a)
    if a_in_b and b_in_a:
        return None
    if a_in_b:
        return Relation.INSIDE if _strictly_within(a, b) else Relation.COVEREDBY
    if b_in_a:
        return Relation.CONTAIN if _strictly_within(b, a) else Relation.COVER
    return Relation.OVERLAP


def relations_between(a: Box, b: Box) -> set:
    """Relaciones geométricamente verdaderas de a respecto de b."""
    rels = set()
    # x: izquierda/derecha, y: abajo/arriba, z: delante/detrás
    for axis, lower, upper in ((0, Relation.LEFT, Relation.RIGHT),
                               (1, Relation.BELOW, Relation.ABOVE),
                               (2, Relation.FRONT, Relation.BEHIND)):
        if _before(a, b, axis):
            rels.add(lower)
        if _before(b, a, axis):
            rels.add(upper)
    if max_distance(a, b) < NEAR_BELOW:
        rels.add(Relation.NEAR)
    if min_distance(a, b) > FAR_ABOVE:
        rels.add(Relation.FAR)
    topo = _topology(a, b)
    if topo is not None:
        rels.add(topo)
    return rels


def holds(fact: Fact, boxes: dict) -> bool:
    return fact.rel in relations_between(boxes[fact.subj], boxes[fact.obj])


def true_facts(boxes: dict) -> frozenset:
    facts = set()
    ids = sorted(boxes)
    for a in ids:
        for b in ids:
            if a != b:
                facts.update(Fact(rel, a, b) for rel in relations_between(boxes[a], boxes[b]))
    return frozenset(facts)


# -------------------------
# Configuración
# -------------------------

@dataclass(frozen=True)
class GenConfig:
    n_entities: int = 6
    n_blocks: int = 0
    k_target: int = 2
    reveal_policy: str = 'tree'
    seed: int = 0
    question_mix: float = 1.0
    negative_ratio: float = 0.5
    n_scenes: int = 1
    questions_per_scene: int = 2
    distractors: int = 2
    templates: frozenset = frozenset(Template)
    exact_mode: str = 'exclusion'

    def __post_init__(self):
        if not 1 <= self.k_target <= 10:
            raise ConfigError(f"k_target debe estar en 1..10, no {self.k_target}")
        if self.n_entities < 2:
            raise ConfigError('se necesitan al menos 2 entidades')
        if self.reveal_policy not in ('tree', 'all'):
            raise ConfigError(f"política de revelado desconocida '{self.reveal_policy}'")
        for name in ('question_mix', 'negative_ratio'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} debe estar en [0, 1], no {value}")
        if self.seed < 0:
            raise ConfigError('la semilla debe ser >= 0')
        needed = min_entities(self.k_target)
        if self.n_entities < needed:
            raise ConfigError(
                f"k_target={self.k_target} necesita al menos {needed} entidades (hay {self.n_entities})"
            )

    @classmethod
    def from_json(cls, data, seed: Optional[int] = None) -> 'GenConfig':
        from spatial.api.serializers import GenConfigSerializer, validate_document

        attrs = validate_document(GenConfigSerializer, data or {}, 'configuración de generación')
        if seed is not None:
            attrs['seed'] = seed
        if attrs.get('seed') is None:
            from django.conf import settings
            attrs['seed'] = settings.SPATIAL_DEFAULT_SEED
        attrs['templates'] = frozenset(Template(t) for t in attrs['templates'])
        return cls(**attrs)

    def to_json(self) -> dict:
        return {
            'n_entities': self.n_entities, 'n_blocks': self.n_blocks, 'k_target': self.k_target,
            'reveal_policy': self.reveal_policy, 'seed': self.seed,
            'question_mix': self.question_mix, 'negative_ratio': self.negative_ratio,
            'n_scenes': self.n_scenes, 'questions_per_scene': self.questions_per_scene,
            'distractors': self.distractors, 'templates': sorted(t.value for t in self.templates),
            'exact_mode': self.exact_mode,
        }


# -------------------------
# Columna de profundidad
# -------------------------

_TOP_COST = {'revealed': 0, 'converse': 1, 'chained': 1}
_TARGET_COST = {'direct': 0, 'converse': 1}


@dataclass(frozen=True)
class SpinePlan:
    m: int
    top: str
    target: str

    @property
    def entity_count(self) -> int:
        return self.m + 2 + (1 if self.top == 'chained' else 0)


def spine_plans(k: int) -> list:
    plans = []
    for top, top_cost in _TOP_COST.items():
        for target, target_cost in _TARGET_COST.items():
            m = k - top_cost - target_cost
            if m < 0:
                continue
            if m == 0 and top == 'converse' and target == 'converse':
                continue  # el objetivo sería el propio hecho revelado
            plans.append(SpinePlan(m, top, target))
    return plans


def min_entities(k: int) -> int:
    return min(p.entity_count for p in spine_plans(k))


# dirección del sujeto sobre el eje: -1 = el sujeto va antes
_AXIS = {
    Relation.LEFT: (0, -1), Relation.RIGHT: (0, 1),
    Relation.BELOW: (1, -1), Relation.ABOVE: (1, 1),
    Relation.FRONT: (2, -1), Relation.BEHIND: (2, 1),
    Relation.FAR: (0, -1),
}


@dataclass
class GroundedScene:
    boxes: dict
    nesting: dict
    entities: tuple
    scene: Scene
    truth: frozenset
    spine_target: Optional[Fact] = None
    spine_plan: Optional[SpinePlan] = None
    spine_relation: Optional[Relation] = None
    spine_ids: tuple = ()
    index: int = 0

    def holds(self, fact: Fact) -> bool:
        return holds(fact, self.boxes)

    def to_json(self) -> dict:
        return {
            'scene': self.scene.to_json(),
            'boxes': {k: self.boxes[k].to_json() for k in sorted(self.boxes)},
            'nesting': dict(sorted(self.nesting.items())),
            'spine_target': self.spine_target.to_json() if self.spine_target else None,
        }


class _Builder:
    def __init__(self, config: GenConfig, rng):
        self.config = config
        self.rng = rng
        self.boxes = {}
        self.nesting = {}
        self.order = []
        self.blocks = []

    def add(self, ent_id, box, parent=None):
        self.boxes[ent_id] = box
        self.order.append(ent_id)
        if parent is not None:
            self.nesting[ent_id] = parent

    def uniform(self, lo, hi, n=None):
        return self.rng.uniform(lo, hi, n)

    def pick(self, items):
        items = list(items)
        return items[int(self.rng.integers(len(items)))]

    def neighbour(self, prev: Box, rel: Relation, size) -> Box:
        axis, direction = _AXIS[rel]
        gap = self.uniform(6.5, 9.0) if rel is Relation.FAR else self.uniform(0.6, 2.0)
        lo = np.array(prev.lo, dtype=float)
        for i in range(3):
            if i != axis:
                lo[i] = prev.lo[i] + self.uniform(-1.0, 1.0)
        if direction < 0:
            lo[axis] = prev.hi[axis] + gap
        else:
            lo[axis] = prev.lo[axis] - gap - size[axis]
        return Box.at(lo, size)


def _entity_ids(n: int) -> list:
    return [f"o{i}" for i in range(1, n + 1)]


def generate_scene(config: GenConfig, index: int = 0) -> GroundedScene:
    rng = np.random.default_rng([config.seed, index])
    b = _Builder(config, rng)
    k = config.k_target
    plans = [p for p in spine_plans(k) if p.entity_count <= config.n_entities]
    if not plans:
        raise ConfigError(f"k_target={k} no cabe en {config.n_entities} entidades")
    plan = b.pick(plans)
    candidates = sorted(DIRECTIONAL, key=lambda r: r.order) if plan.top == 'chained' \
        else list(directional_lifted())
    rel = b.pick(candidates)

    ids = _entity_ids(config.n_entities)
    spine = ids[:plan.entity_count]
    xs = spine[:plan.m + 1]
    z = spine[plan.m + 1]
    w = spine[plan.m + 2] if plan.top == 'chained' else None

    # la columna: x_0 grande, cada x_i comparte la esquina mínima con su padre
    size0 = b.uniform(1.5, 2.5, 3)
    b.add(xs[0], Box.at(np.zeros(3), size0))
    for i in range(1, len(xs)):
        parent = b.boxes[xs[i - 1]]
        b.add(xs[i], Box.at(parent.lo, parent.size * NEST_SHRINK), parent=xs[i - 1])
    prev = b.boxes[xs[0]]
    if w is not None:
        b.add(w, b.neighbour(prev, rel, b.uniform(1.0, 2.0, 3)))
        prev = b.boxes[w]
    b.add(z, b.neighbour(prev, rel, b.uniform(1.0, 2.0, 3)))

    revealed = set()
    for i in range(1, len(xs)):
        revealed.add(Fact(Relation.COVEREDBY, xs[i], xs[i - 1]))
    if plan.top == 'revealed':
        revealed.add(Fact(rel, xs[0], z))
    elif plan.top == 'converse':
        revealed.add(Fact(rel.converse, z, xs[0]))
    else:
        revealed.update({Fact(rel, xs[0], w), Fact(rel, w, z)})
    target = Fact(rel, xs[-1], z) if plan.target == 'direct' else Fact(rel.converse, z, xs[-1])

    # bloques y distractores fuera de la región de la columna
    base_y = max(box.hi[1] for box in b.boxes.values()) + 3.0
    base_x = min(box.lo[0] for box in b.boxes.values())
    entities = {}
    for j in range(config.n_blocks):
        name = chr(ord('A') + j)
        b.add(name, Box.at((base_x + 9.0 * j, base_y, 0.0), (6.0, 6.0, 6.0)))
        b.blocks.append(name)
        entities[name] = Entity(name, {'kind': 'block', 'name': name})

    combos = [(s, c, h) for s in SIZES for c in COLORS for h in SHAPES]
    perm = rng.permutation(len(combos))
    for n, ent_id in enumerate(ids):
        size, color, shape = combos[int(perm[n % len(combos)])]
        entities[ent_id] = Entity(ent_id, {'size': size, 'color': color, 'shape': shape})

    for ent_id in ids[len(spine):]:
        if b.blocks and rng.random() < 0.7:
            block_id = b.pick(b.blocks)
            block = b.boxes[block_id]
            size = b.uniform(0.8, 1.5, 3)
            lo = np.array([block.lo[i] + b.uniform(0.2, 6.0 - size[i] - 0.2) for i in range(3)])
            if rng.random() < 0.5:
                axis = int(rng.integers(3))
                lo[axis] = block.lo[axis]
            b.add(ent_id, Box.at(lo, size), parent=block_id)
        else:
            lo = (base_x + b.uniform(-5.0, 25.0), base_y + 8.0 + b.uniform(0.0, 6.0), b.uniform(-3.0, 3.0))
            b.add(ent_id, Box.at(lo, b.uniform(1.0, 2.0, 3)))

    truth = true_facts(b.boxes)
    for fact in revealed | {target}:
        if fact not in truth:
            raise SchemaError(f"geometría inconsistente con el hecho de la columna {fact}")

    if config.reveal_policy == 'all':
        revealed = set(truth)
    else:
        revealed |= _tree_reveals(b, truth, spine, xs, z)

    scene = Scene.build(entities.values(), revealed)
    return GroundedScene(
        boxes=dict(b.boxes), nesting=dict(b.nesting), entities=scene.entities, scene=scene,
        truth=truth, spine_target=target, spine_plan=plan, spine_relation=rel,
        spine_ids=tuple(spine), index=index,
    )


def _tree_reveals(b: _Builder, truth: frozenset, spine, xs, z) -> set:
    """Un hecho por entidad nueva hacia una anterior, más `distractors` hechos extra.

    Nunca involucran x_1..x_m ni el par (x_0, z).
    """
    hidden = set(xs[1:])
    by_pair = {}
    for fact in truth:
        by_pair.setdefault((fact.subj, fact.obj), []).append(fact)

    def allowed(a, c):
        return a not in hidden and c not in hidden and {a, c} != {xs[0], z}

    def facts_between(a, c):
        return sorted(by_pair.get((a, c), []) + by_pair.get((c, a), []))

    revealed = set()
    placed = [e for e in spine if e not in hidden]
    for ent_id in b.order:
        if ent_id in spine:
            continue
        parent = b.nesting.get(ent_id)
        if parent is not None:
            options = [f for f in facts_between(ent_id, parent) if f.subj == ent_id and
                       f.rel in (Relation.INSIDE, Relation.COVEREDBY)]
        else:
            partners = [p for p in placed if allowed(ent_id, p) and facts_between(ent_id, p)]
            options = facts_between(ent_id, b.pick(partners)) if partners else []
        if options:
            revealed.add(b.pick(options))
        placed.append(ent_id)

    pairs = [(a, c) for a in placed for c in placed if a < c and allowed(a, c) and facts_between(a, c)]
    for _ in range(b.config.distractors):
        if not pairs:
            break
        a, c = b.pick(pairs)
        revealed.add(b.pick(facts_between(a, c)))
    return revealed


# -------------------------
# Ejemplos
# -------------------------

def _pick_positive(gscene: GroundedScene, oracle: Oracle, config: GenConfig, used: set, rng,
                   need_opposite: bool = False):
    """(hecho derivado, inalcanzable). Prefiere el objetivo de la columna y la ronda k.

    Si la escena tiene hechos de ronda k pero ya se usaron todos devuelve
    (None, False) y la pregunta se salta. Sólo cuando no hay ninguno se cae,
    una vez por escena, al hecho más profundo disponible.
    """
    closure = oracle.closure

    def eligible(fact):
        return not need_opposite or opposite_of(fact.rel) is not None

    at_k = sorted(f for f in closure.provenance if closure.round_of(f) == config.k_target and eligible(f))
    if at_k:
        free = [f for f in at_k if f not in used]
        if not free:
            return None, False
        if gscene.spine_target in free:
            return gscene.spine_target, False
        return free[int(rng.integers(len(free)))], False

    pool = [f for f in closure.provenance if f not in used and eligible(f)]
    if not pool or used:
        return None, True
    fallback = min(pool, key=lambda f: (-closure.round_of(f), f.sort_key))
    message = (f"escena {gscene.index}: no hay hechos de profundidad {config.k_target}; "
               f"se usa {fallback} (profundidad {closure.round_of(fallback)})")
    warnings.warn(message, DepthUnreachable)
    logger.warning(message)
    return fallback, True


def _yes_record(rid, gscene, oracle, config, fact, unreachable) -> DatasetRecord:
    chain = derive(gscene.scene, fact, oracle.kb, closure=oracle.closure, target_id='t')
    question = Question.yn(fact, id='t')
    constraints = chain_to_constraints(chain).only(config.templates)
    opposite = opposite_of(fact.rel)
    if Template.REVERSE in config.templates and opposite is not None:
        q_neg = Question.yn(fact.with_relation(opposite), id='n')
        constraints = merge(constraints, reverse_pair_constraints(question, q_neg, True))
    return DatasetRecord(rid, gscene.scene, question, Answer.yes_no(True), chain,
                         chain_depth(chain), constraints, unreachable)


def _unrelated_no_record(rid, gscene, oracle, rng) -> Optional[DatasetRecord]:
    """No sin cadena: relación al azar, falsa en la geometría y no derivable."""
    ids = list(gscene.scene.entity_ids)
    for _ in range(100):
        a, c = (ids[int(i)] for i in rng.choice(len(ids), size=2, replace=False))
        candidate = Fact(ALL_RELATIONS[int(rng.integers(len(ALL_RELATIONS)))], a, c)
        if not gscene.holds(candidate) and candidate not in oracle.closure:
            question = Question.yn(candidate, id='t')
            constraints = ConstraintSet([QuestionEntry('t', question, False)])
            return DatasetRecord(rid, gscene.scene, question, Answer.yes_no(False), None, 0, constraints)
    return None


def _no_record(rid, gscene, oracle, config, rng, used) -> Optional[DatasetRecord]:
    fact, unreachable = _pick_positive(gscene, oracle, config, used, rng, need_opposite=True)
    if fact is None:
        return _unrelated_no_record(rid, gscene, oracle, rng)
    used.add(fact)
    denied = fact.with_relation(opposite_of(fact.rel))
    if gscene.holds(denied) or denied in oracle.closure:
        return _unrelated_no_record(rid, gscene, oracle, rng)
    chain = derive(gscene.scene, fact, oracle.kb, closure=oracle.closure, target_id='p')
    q_pos, q_neg = Question.yn(fact, id='p'), Question.yn(denied, id='t')
    pair = reverse_pair_constraints(q_pos, q_neg, True)
    if Template.REVERSE not in config.templates:
        pair = ConstraintSet(pair.questions)
    constraints = merge(chain_to_constraints(chain).only(config.templates), pair)
    return DatasetRecord(rid, gscene.scene, q_neg, Answer.yes_no(False), chain,
                         chain_depth(chain), constraints, unreachable)


def _fr_record(rid, gscene, oracle, config, rng, used_pairs) -> Optional[DatasetRecord]:
    pairs = sorted({(f.subj, f.obj) for f in oracle.closure.facts} - used_pairs)
    if not pairs:
        return None
    target = gscene.spine_target
    spine_pair = (target.subj, target.obj) if target is not None else None
    pair = spine_pair if spine_pair in pairs else pairs[int(rng.integers(len(pairs)))]
    used_pairs.add(pair)

    answered = oracle.answer_fr(*pair, question_id='f')
    question, gold = answered.question, answered.answer
    chain = None
    if answered.chains:
        chain = max(answered.chains.values(), key=lambda c: (chain_depth(c), c.target.sort_key))

    parts = [ConstraintSet(label_entries(question, gold))]
    if Template.EXACT_L in config.templates:
        parts.append(exact_label_constraints(question, gold, mode=config.exact_mode))
    if Template.INVERSE in config.templates:
        inverse = oracle.answer_fr(pair[1], pair[0], question_id='g')
        parts.append(inverse_label_constraints(question, inverse.question, gold, inverse.answer))
    return DatasetRecord(rid, gscene.scene, question, gold, chain, answered.depth, merge(*parts))


def generate_examples(gscene: GroundedScene, config: GenConfig, kb: Optional[RuleKB] = None) -> list:
    kb = kb if kb is not None else default_kb()
    rng = np.random.default_rng([config.seed, gscene.index, 1])
    oracle = Oracle(gscene.scene, kb)
    records = []
    used, used_pairs = set(), set()
    for i in range(config.questions_per_scene):
        rid = f"s{gscene.index}-{i}"
        if rng.random() >= config.question_mix:
            record = _fr_record(rid, gscene, oracle, config, rng, used_pairs)
        elif rng.random() < config.negative_ratio:
            record = _no_record(rid, gscene, oracle, config, rng, used)
        else:
            fact, unreachable = _pick_positive(gscene, oracle, config, used, rng)
            record = None
            if fact is not None:
                used.add(fact)
                record = _yes_record(rid, gscene, oracle, config, fact, unreachable)
        if record is not None:
            records.append(record)
    return records


def generate_dataset(config: GenConfig, kb: Optional[RuleKB] = None) -> list:
    kb = kb if kb is not None else default_kb()
    records = []
    for index in range(config.n_scenes):
        records.extend(generate_examples(generate_scene(config, index), config, kb))
    logger.info("generados %d ejemplos en %d escenas (k=%d)", len(records), config.n_scenes, config.k_target)
    return records


def label_sound(record: DatasetRecord, gscene: GroundedScene) -> bool:
    """Yes => verdadero en la geometría; No => falso; FR => todo miembro verdadero."""
    if record.question.qtype is QuestionType.YN:
        return gscene.holds(record.question.fact) == bool(record.gold.yes)
    subj, obj = record.question.pair
    return all(gscene.holds(Fact(r, subj, obj)) for r in record.gold.relations)
