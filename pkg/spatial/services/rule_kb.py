"""
Base de conocimiento espacial: esquemas de reglas tipados.

Las reglas son datos (patrones sobre variables x, y, z, h) que interpreta el
motor de inferencia; así se pueden cargar desde JSON, validar y registrar su
id en la procedencia de cada hecho derivado.
"""
import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

from spatial.exceptions import KBSchemaError, UnsafeRule
from spatial.services.spatial_core import (
    DIRECTIONAL,
    Fact,
    Relation,
    is_symmetric,
)

logger = logging.getLogger(__name__)

VARIABLES = ('x', 'y', 'z', 'h')


class RuleCategory(str, Enum):
    CONVERSE = 'converse'
    SYMMETRIC = 'symmetric'
    TRANSITIVE = 'transitive'
    TRANSITIVE_TOPO = 'transitive_topo'


# Forma de premisas/conclusión que exige cada categoría.
_SHAPES = {
    RuleCategory.CONVERSE: ((('x', 'y'),), ('y', 'x')),
    RuleCategory.SYMMETRIC: ((('x', 'y'),), ('y', 'x')),
    RuleCategory.TRANSITIVE: ((('x', 'y'), ('y', 'z')), ('x', 'z')),
    RuleCategory.TRANSITIVE_TOPO: ((('x', 'y'), ('h', 'z'), ('y', 'z')), ('x', 'h')),
}


@dataclass(frozen=True)
class Pattern:
    rel: Relation
    a: str
    b: str

    def instantiate(self, binding: dict) -> Fact:
        return Fact(self.rel, binding[self.a], binding[self.b])

    def __str__(self) -> str:
        return f"{self.rel.value}({self.a}, {self.b})"


@dataclass(frozen=True)
class Rule:
    id: str
    category: RuleCategory
    premises: tuple
    conclusion: Pattern

    @property
    def premise_variables(self) -> set:
        return {v for p in self.premises for v in (p.a, p.b)}

    def unbound_variables(self) -> list:
        bound = self.premise_variables
        return [v for v in (self.conclusion.a, self.conclusion.b) if v not in bound]

    def signature(self) -> tuple:
        """Identidad estructural (sin el id) para detectar duplicados."""
        return (
            self.category,
            tuple((p.rel, p.a, p.b) for p in self.premises),
            (self.conclusion.rel, self.conclusion.a, self.conclusion.b),
        )

    def formatted(self) -> str:
        """Texto `p1 ∧ p2 ⇒ c` con la notación de la tabla de reglas."""
        lhs = ' ∧ '.join(str(p) for p in self.premises)
        return f"{lhs} ⇒ {self.conclusion}"

    def apply(self, premise_facts: Iterable[Fact]) -> Optional[Fact]:
        """Instancia la conclusión sobre hechos concretos; None si no unifican."""
        binding = {}
        premise_facts = tuple(premise_facts)
        if len(premise_facts) != len(self.premises):
            return None
        for pattern, fact in zip(self.premises, premise_facts):
            if pattern.rel is not fact.rel:
                return None
            for var, value in ((pattern.a, fact.subj), (pattern.b, fact.obj)):
                if binding.setdefault(var, value) != value:
                    return None
        a, b = binding.get(self.conclusion.a), binding.get(self.conclusion.b)
        if a is None or b is None or a == b:
            return None
        return Fact(self.conclusion.rel, a, b)

    def to_json(self) -> dict:
        return {
            'id': self.id,
            'category': self.category.value,
            'premises': [f"{p.rel.value}({p.a},{p.b})" for p in self.premises],
            'conclusion': f"{self.conclusion.rel.value}({self.conclusion.a},{self.conclusion.b})",
        }


def check_rule(rule: Rule, rule_index: Optional[int] = None) -> None:
    """Seguridad primero (toda variable de la conclusión ligada), luego la forma."""
    unbound = rule.unbound_variables()
    if unbound:
        raise UnsafeRule(rule.id, unbound[0], rule_index=rule_index)
    for p in (*rule.premises, rule.conclusion):
        for var in (p.a, p.b):
            if var not in VARIABLES:
                raise KBSchemaError(f"variable '{var}' fuera de {{x, y, z, h}} en '{rule.id}'", rule_index)
    premise_shape, conclusion_shape = _SHAPES[rule.category]
    shape = tuple((p.a, p.b) for p in rule.premises)
    if shape != premise_shape or (rule.conclusion.a, rule.conclusion.b) != conclusion_shape:
        raise KBSchemaError(
            f"la regla '{rule.id}' no respeta la forma de la categoría {rule.category.value}: {rule.formatted()}",
            rule_index,
        )


class RuleKB:
    """Lista inmutable de reglas + índice de premisas por relación."""

    def __init__(self, rules: Iterable[Rule] = ()):
        rules = tuple(rules)
        seen = set()
        for i, rule in enumerate(rules):
            if rule.id in seen:
                raise KBSchemaError(f"id de regla duplicado '{rule.id}'", i)
            seen.add(rule.id)
        self._rules = rules
        self._by_id = {r.id: r for r in rules}
        index = {}
        for rule in rules:
            for pos, premise in enumerate(rule.premises):
                index.setdefault(premise.rel, []).append((rule, pos))
        self._index = {rel: tuple(entries) for rel, entries in index.items()}

    @property
    def rules(self) -> tuple:
        return self._rules

    def __len__(self) -> int:
        return len(self._rules)

    def __iter__(self):
        return iter(self._rules)

    def get(self, rule_id: str) -> Optional[Rule]:
        return self._by_id.get(rule_id)

    def triggered_by(self, rel: Relation) -> tuple:
        """(regla, posición de premisa) cuyas premisas usan `rel`."""
        return self._index.get(rel, ())

    def to_json(self) -> dict:
        return {'rules': [r.to_json() for r in self._rules]}


# -------------------------
# KB incorporada
# -------------------------

_CONVERSE_PAIRS = (
    (Relation.ABOVE, Relation.BELOW),
    (Relation.LEFT, Relation.RIGHT),
    (Relation.FRONT, Relation.BEHIND),
    (Relation.COVEREDBY, Relation.COVER),
    (Relation.INSIDE, Relation.CONTAIN),
)
_SYMMETRIC = (Relation.NEAR, Relation.FAR, Relation.TOUCH, Relation.DISCONNECTED, Relation.OVERLAP)
_SELF_TRANSITIVE = (
    Relation.LEFT, Relation.RIGHT, Relation.ABOVE, Relation.BELOW,
    Relation.BEHIND, Relation.FRONT, Relation.INSIDE, Relation.CONTAIN,
)
# Relaciones que "heredan" los objetos contenidos o cubiertos.
_LIFTED = (
    Relation.LEFT, Relation.RIGHT, Relation.ABOVE, Relation.BELOW, Relation.BEHIND,
    Relation.FRONT, Relation.NEAR, Relation.FAR, Relation.DISCONNECTED,
)
_CONTAINERS = (Relation.INSIDE, Relation.COVEREDBY)


def _rule(rule_id, category, premises, conclusion) -> Rule:
    return Rule(
        rule_id,
        category,
        tuple(Pattern(rel, a, b) for rel, a, b in premises),
        Pattern(*conclusion),
    )


def default_kb() -> RuleKB:
    # ids: "comp-" < "conv-", así en empate de ronda gana la composición
    rules = []
    for a, b in _CONVERSE_PAIRS:
        for p, c in ((a, b), (b, a)):
            rules.append(_rule(f"conv-{p.value}", RuleCategory.CONVERSE, [(p, 'x', 'y')], (c, 'y', 'x')))
    for rel in _SYMMETRIC:
        rules.append(_rule(f"sym-{rel.value}", RuleCategory.SYMMETRIC, [(rel, 'x', 'y')], (rel, 'y', 'x')))
    for rel in _SELF_TRANSITIVE:
        rules.append(_rule(
            f"comp-{rel.value}", RuleCategory.TRANSITIVE,
            [(rel, 'x', 'y'), (rel, 'y', 'z')], (rel, 'x', 'z'),
        ))
    rules.append(_rule(
        'comp-inside-coveredby', RuleCategory.TRANSITIVE,
        [(Relation.INSIDE, 'x', 'y'), (Relation.COVEREDBY, 'y', 'z')], (Relation.INSIDE, 'x', 'z'),
    ))
    rules.append(_rule(
        'comp-contain-cover', RuleCategory.TRANSITIVE,
        [(Relation.CONTAIN, 'x', 'y'), (Relation.COVER, 'y', 'z')], (Relation.CONTAIN, 'x', 'z'),
    ))
    for container in _CONTAINERS:
        for rel in _LIFTED:
            rules.append(_rule(
                f"comp-{container.value}-{rel.value}", RuleCategory.TRANSITIVE,
                [(container, 'x', 'y'), (rel, 'y', 'z')], (rel, 'x', 'z'),
            ))
    # (x inside y) + (h inside z) + (y rel z) => (x rel h)
    for container in _CONTAINERS:
        for rel in _LIFTED:
            rules.append(_rule(
                f"topo-{container.value}-{rel.value}", RuleCategory.TRANSITIVE_TOPO,
                [(container, 'x', 'y'), (container, 'h', 'z'), (rel, 'y', 'z')], (rel, 'x', 'h'),
            ))
    return RuleKB(rules)


# -------------------------
# Carga y validación
# -------------------------

def kb_from_json(data) -> RuleKB:
    from spatial.api.serializers import RuleFileSerializer, first_error

    serializer = RuleFileSerializer(data=data)
    if not serializer.is_valid():
        index, message = first_error(serializer.errors, 'rules')
        raise KBSchemaError(message, index)
    rules = []
    for i, item in enumerate(serializer.validated_data['rules']):
        rule = Rule(
            item['id'],
            RuleCategory(item['category']),
            tuple(Pattern(*p) for p in item['premises']),
            Pattern(*item['conclusion']),
        )
        check_rule(rule, rule_index=i)
        rules.append(rule)
    kb = RuleKB(rules)
    for diag in validate_kb(kb):
        logger.warning("KB %s: %s", diag.code, diag.message)
    return kb


def load_kb(path) -> RuleKB:
    try:
        with open(path, encoding='utf-8') as fh:
            data = json.load(fh)
    except ValueError as exc:
        raise KBSchemaError(f"JSON inválido en {path}: {exc}") from exc
    kb = kb_from_json(data)
    logger.info("KB cargada desde %s: %d reglas", path, len(kb))
    return kb


def resolve_kb(path: Optional[str] = None) -> RuleKB:
    """KB según el flag --kb, luego SPATIAL_KB_PATH, luego la incorporada."""
    if not path:
        from django.conf import settings
        path = getattr(settings, 'SPATIAL_KB_PATH', '') or None
    if path:
        return load_kb(path)
    return default_kb()


@dataclass(frozen=True)
class Diagnostic:
    code: str
    rule_id: Optional[str]
    message: str

    def to_json(self) -> dict:
        return {'code': self.code, 'rule': self.rule_id, 'message': self.message}


def validate_kb(kb: RuleKB) -> list:
    diagnostics = []
    first_by_signature = {}
    for rule in kb:
        sig = rule.signature()
        if sig in first_by_signature:
            diagnostics.append(Diagnostic(
                'Duplicate', rule.id,
                f"'{rule.id}' repite la regla '{first_by_signature[sig]}'",
            ))
        else:
            first_by_signature[sig] = rule.id

    single = {
        (r.premises[0].rel, r.conclusion.rel)
        for r in kb if r.category in (RuleCategory.CONVERSE, RuleCategory.SYMMETRIC)
    }
    for rule in kb:
        if rule.category is not RuleCategory.CONVERSE:
            continue
        p, c = rule.premises[0].rel, rule.conclusion.rel
        if (c, p) not in single:
            diagnostics.append(Diagnostic(
                'MissingMirror', rule.id,
                f"falta la regla espejo {c.value}(x, y) ⇒ {p.value}(y, x)",
            ))

    mentioned = {p.rel for r in kb for p in (*r.premises, r.conclusion)}
    for rel in sorted((r for r in mentioned if is_symmetric(r)), key=lambda r: r.order):
        if (rel, rel) not in single:
            diagnostics.append(Diagnostic(
                'MissingSelfRule', None,
                f"la relación simétrica {rel.value} no tiene regla {rel.value}(x, y) ⇒ {rel.value}(y, x)",
            ))
    return diagnostics


def directional_lifted() -> tuple:
    """Relaciones que atraviesan contención (usadas por el generador)."""
    return tuple(r for r in _LIFTED if r in DIRECTIONAL or r is Relation.FAR)
