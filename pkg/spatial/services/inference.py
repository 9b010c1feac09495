"""
Motor de encadenamiento hacia adelante (forward chaining).

Calcula el cierre deductivo de una escena bajo una RuleKB con evaluación
semi-ingenua: en cada ronda sólo se emparejan reglas que usan al menos un
hecho nuevo de la ronda anterior. Se registra una única derivación por hecho
(la procedencia) y con ella se reconstruyen las Q-Chains.

Desempate de la procedencia dentro de una misma ronda: id de regla
(lexicográfico) y luego hechos premisa (lexicográfico). Gana la primera
derivación, así que la altura del árbol de un hecho es la ronda en la que
apareció.
"""
import logging
from dataclasses import dataclass
from typing import Optional

from spatial.exceptions import ResourceLimit, SchemaError
from spatial.services.rule_kb import RuleCategory, RuleKB
from spatial.services.spatial_core import (
    OPPOSITE_PAIRS,
    Fact,
    Question,
    Relation,
    Scene,
)

logger = logging.getLogger(__name__)

MAX_RELATIONS = 15


@dataclass(frozen=True)
class Derivation:
    rule_id: str
    premises: tuple
    round: int


class Closure:
    """Punto fijo mínimo que contiene los hechos de la escena."""

    def __init__(self, base, provenance, rounds, kb):
        self.base = frozenset(base)
        self.provenance = dict(provenance)
        self.facts = frozenset(self.base | set(self.provenance))
        self.rounds = rounds
        self.kb = kb

    def __contains__(self, fact: Fact) -> bool:
        return fact in self.facts

    def __len__(self) -> int:
        return len(self.facts)

    def is_base(self, fact: Fact) -> bool:
        return fact in self.base

    def derivation(self, fact: Fact) -> Optional[Derivation]:
        return self.provenance.get(fact)

    def round_of(self, fact: Fact) -> int:
        d = self.provenance.get(fact)
        return d.round if d else 0

    def relations_between(self, subj: str, obj: str) -> list:
        return sorted(
            (f.rel for f in self.facts if f.subj == subj and f.obj == obj),
            key=lambda r: r.order,
        )

    def to_json(self) -> dict:
        derived = []
        for fact in sorted(self.provenance):
            d = self.provenance[fact]
            derived.append({
                'fact': fact.to_json(),
                'rule': d.rule_id,
                'premises': [p.to_json() for p in d.premises],
                'round': d.round,
            })
        return {
            'facts': [f.to_json() for f in sorted(self.facts)],
            'base': [f.to_json() for f in sorted(self.base)],
            'derived': derived,
            'rounds': self.rounds,
        }


class _FactIndex:
    """Índices por (rel, subj) y (rel, obj) para los joins."""

    def __init__(self):
        self.by_rel = {}
        self.by_subj = {}
        self.by_obj = {}

    def add(self, fact: Fact) -> None:
        self.by_rel.setdefault(fact.rel, set()).add(fact)
        self.by_subj.setdefault((fact.rel, fact.subj), set()).add(fact)
        self.by_obj.setdefault((fact.rel, fact.obj), set()).add(fact)

    def candidates(self, pattern, binding):
        a = binding.get(pattern.a)
        b = binding.get(pattern.b)
        if a is not None and b is not None:
            fact = Fact(pattern.rel, a, b) if a != b else None
            if fact is not None and fact in self.by_subj.get((pattern.rel, a), ()):
                return (fact,)
            return ()
        if a is not None:
            return self.by_subj.get((pattern.rel, a), ())
        if b is not None:
            return self.by_obj.get((pattern.rel, b), ())
        return self.by_rel.get(pattern.rel, ())


def _bind(pattern, fact, binding):
    out = dict(binding)
    for var, value in ((pattern.a, fact.subj), (pattern.b, fact.obj)):
        if out.setdefault(var, value) != value:
            return None
    return out


def _join(rule, index, pos, delta_fact):
    """Todas las instanciaciones de `rule` con `delta_fact` en la premisa `pos`."""
    binding = _bind(rule.premises[pos], delta_fact, {})
    if binding is None:
        return
    chosen = [None] * len(rule.premises)
    chosen[pos] = delta_fact
    others = [i for i in range(len(rule.premises)) if i != pos]

    def walk(k, binding):
        if k == len(others):
            yield tuple(chosen), binding
            return
        i = others[k]
        for fact in sorted(index.candidates(rule.premises[i], binding)):
            nxt = _bind(rule.premises[i], fact, binding)
            if nxt is None:
                continue
            chosen[i] = fact
            yield from walk(k + 1, nxt)
        chosen[i] = None

    yield from walk(0, binding)


def close(scene: Scene, kb: RuleKB) -> Closure:
    n = len(scene.entities)
    limit = MAX_RELATIONS * n * max(n - 1, 0)
    index = _FactIndex()
    known = set(scene.facts)
    for fact in scene.facts:
        index.add(fact)
    provenance = {}
    delta = set(scene.facts)
    rounds = 0

    # rounds cuenta sólo las rondas que agregaron hechos
    while delta:
        current_round = rounds + 1
        best = {}
        for fact in sorted(delta):
            for rule, pos in kb.triggered_by(fact.rel):
                for premises, binding in _join(rule, index, pos, fact):
                    a, b = binding[rule.conclusion.a], binding[rule.conclusion.b]
                    if a == b:
                        continue
                    concl = Fact(rule.conclusion.rel, a, b)
                    if concl in known:
                        continue
                    key = (rule.id, tuple(p.sort_key for p in premises))
                    current = best.get(concl)
                    if current is None or key < current[0]:
                        best[concl] = (key, rule.id, premises)
        delta = set()
        for concl, (_key, rule_id, premises) in best.items():
            provenance[concl] = Derivation(rule_id, premises, current_round)
            known.add(concl)
            index.add(concl)
            delta.add(concl)
        if best:
            rounds = current_round
        if len(known) > limit:
            raise ResourceLimit(f"el cierre supera {limit} hechos para {n} entidades")

    closure = Closure(scene.facts, provenance, rounds, kb)
    logger.info("cierre: %d hechos (%d base) en %d rondas", len(closure), len(closure.base), rounds)
    return closure


def find_conflicts(closure: Closure) -> list:
    """Pares opuestos presentes a la vez sobre el mismo par ordenado."""
    conflicts = []
    for a, b in OPPOSITE_PAIRS:
        for fact in sorted(f for f in closure.facts if f.rel is a):
            other = fact.with_relation(b)
            if other in closure.facts:
                conflicts.append((fact, other))
    return conflicts


def is_consistent(closure: Closure) -> bool:
    return not find_conflicts(closure)


# -------------------------
# Q-Chains
# -------------------------

@dataclass(frozen=True)
class ChainNode:
    fact: Fact
    rule_id: Optional[str] = None
    category: Optional[RuleCategory] = None
    children: tuple = ()

    @property
    def is_leaf(self) -> bool:
        return self.rule_id is None


@dataclass(frozen=True)
class ChainStep:
    id: str
    fact: Fact
    rule_id: Optional[str]
    category: Optional[RuleCategory]
    premises: tuple

    def to_json(self) -> dict:
        return {
            'id': self.id,
            'fact': self.fact.to_json(),
            'rule': self.rule_id,
            'category': self.category.value if self.category else None,
            'premises': list(self.premises),
        }


class QChain:
    """Árbol de resolución: hojas = hechos afirmados, nodos internos = reglas."""

    def __init__(self, root: ChainNode, target_id: str = 't'):
        self.root = root
        self.target_id = target_id
        self.steps = self._number_steps()

    @property
    def target(self) -> Fact:
        return self.root.fact

    def _number_steps(self) -> tuple:
        # hojas primero (q1..), luego internos en post-orden, la raíz al final
        leaves, internal, seen = [], [], set()

        def visit(node):
            if node.fact in seen:
                return
            for child in node.children:
                visit(child)
            seen.add(node.fact)
            if node is self.root or node.fact == self.root.fact:
                return
            (leaves if node.is_leaf else internal).append(node)

        visit(self.root)
        ids = {}
        ordered = leaves + internal
        for i, node in enumerate(ordered, start=1):
            ids[node.fact] = f"q{i}"
        ids[self.root.fact] = self.target_id
        steps = []
        for node in ordered + [self.root]:
            steps.append(ChainStep(
                ids[node.fact], node.fact, node.rule_id, node.category,
                tuple(ids[c.fact] for c in node.children),
            ))
        return tuple(steps)

    def rule_steps(self) -> tuple:
        return tuple(s for s in self.steps if s.rule_id is not None)

    def leaves(self) -> tuple:
        return tuple(s.fact for s in self.steps if s.rule_id is None)

    def to_json(self) -> dict:
        return {
            'target': self.target.to_json(),
            'steps': [s.to_json() for s in self.steps],
        }


def derive(scene: Scene, target: Fact, kb: RuleKB, closure: Optional[Closure] = None,
           target_id: str = 't') -> Optional[QChain]:
    closure = closure if closure is not None else close(scene, kb)
    if target not in closure:
        return None
    memo = {}

    def build(fact):
        if fact in memo:
            return memo[fact]
        d = closure.derivation(fact)
        if d is None:
            node = ChainNode(fact)
        else:
            rule = closure.kb.get(d.rule_id) if closure.kb is not None else None
            category = rule.category if rule is not None else None
            node = ChainNode(fact, d.rule_id, category, tuple(build(p) for p in d.premises))
        memo[fact] = node
        return node

    return QChain(build(target), target_id=target_id)


def chain_depth(chain: QChain) -> int:
    def height(node):
        if node.is_leaf:
            return 0
        return 1 + max(height(c) for c in node.children)

    return height(chain.root)


def chain_to_questions(chain: QChain) -> list:
    """Una pregunta YN por hecho distinto de la cadena, todas con oro Yes."""
    from spatial.services.spatial_core import Answer

    return [(Question.yn(step.fact, id=step.id), Answer.yes_no(True)) for step in chain.steps]


def chain_from_json(data) -> QChain:
    from spatial.api.serializers import ChainSerializer

    serializer = ChainSerializer(data=data)
    if not serializer.is_valid():
        raise SchemaError(f"cadena inválida: {serializer.errors}")
    steps = serializer.validated_data['steps']
    by_id = {}
    for step in steps:
        if step['id'] in by_id:
            raise SchemaError(f"id de paso duplicado '{step['id']}'")
        by_id[step['id']] = step
    nodes = {}

    def build(step_id, trail=()):
        if step_id in nodes:
            return nodes[step_id]
        if step_id not in by_id:
            raise SchemaError(f"premisa '{step_id}' sin paso correspondiente")
        if step_id in trail:
            raise SchemaError(f"la cadena tiene un ciclo en '{step_id}'")
        step = by_id[step_id]
        children = tuple(build(p, trail + (step_id,)) for p in step['premises'])
        category = RuleCategory(step['category']) if step.get('category') else None
        node = ChainNode(step['fact'], step.get('rule'), category, children)
        nodes[step_id] = node
        return node

    target = serializer.validated_data['target']
    roots = [s['id'] for s in steps if s['fact'] == target]
    if not roots:
        raise SchemaError('la cadena no contiene un paso para el objetivo')
    return QChain(build(roots[-1]), target_id=roots[-1])


__all__ = [
    'Closure', 'ChainNode', 'ChainStep', 'Derivation', 'QChain', 'Relation',
    'chain_depth', 'chain_from_json', 'chain_to_questions', 'close', 'derive',
    'find_conflicts', 'is_consistent',
]
