"""
Vocabulario espacial y tipos de valor compartidos por todo el paquete.

Resumen rápido:
 - Relation / Category: las 15 relaciones y sus tres familias.
 - Entity / Fact / Scene: objetos opacos, átomos R(x, y) y una historia.
 - Question / Answer: preguntas YN (sí/no) y FR (encontrar relación).

Todos los tipos son inmutables. Los atributos de una entidad (tamaño, color,
forma, bloque) sólo los usa el renderizado; la inferencia trabaja sobre el
grafo de relaciones.
"""
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from spatial.exceptions import MalformedFact, ReflexiveFact, UnknownEntity, UnknownRelation, SchemaError


class Category(str, Enum):
    DIRECTIONAL = 'directional'
    DISTANCE = 'distance'
    TOPOLOGICAL = 'topological'


class Relation(str, Enum):
    LEFT = 'left'
    RIGHT = 'right'
    ABOVE = 'above'
    BELOW = 'below'
    BEHIND = 'behind'
    FRONT = 'front'
    NEAR = 'near'
    FAR = 'far'
    DISCONNECTED = 'disconnected'
    TOUCH = 'touch'
    OVERLAP = 'overlap'
    COVEREDBY = 'coveredby'
    INSIDE = 'inside'
    COVER = 'cover'
    CONTAIN = 'contain'

    @property
    def category(self) -> Category:
        return category_of(self)

    @property
    def converse(self) -> 'Relation':
        return converse_of(self)

    @property
    def order(self) -> int:
        return _RELATION_ORDER[self]

    @classmethod
    def from_token(cls, token: str) -> 'Relation':
        try:
            return cls(token.strip().lower())
        except ValueError:
            raise UnknownRelation(f"relación desconocida '{token}'", token, 0) from None


ALL_RELATIONS = tuple(Relation)
_RELATION_ORDER = {rel: i for i, rel in enumerate(ALL_RELATIONS)}

DIRECTIONAL = frozenset({Relation.LEFT, Relation.RIGHT, Relation.ABOVE, Relation.BELOW, Relation.BEHIND, Relation.FRONT})
DISTANCE = frozenset({Relation.NEAR, Relation.FAR})
TOPOLOGICAL = frozenset({
    Relation.DISCONNECTED, Relation.TOUCH, Relation.OVERLAP, Relation.COVEREDBY,
    Relation.INSIDE, Relation.COVER, Relation.CONTAIN,
})

_CONVERSE = {
    Relation.LEFT: Relation.RIGHT,
    Relation.RIGHT: Relation.LEFT,
    Relation.ABOVE: Relation.BELOW,
    Relation.BELOW: Relation.ABOVE,
    Relation.BEHIND: Relation.FRONT,
    Relation.FRONT: Relation.BEHIND,
    Relation.COVEREDBY: Relation.COVER,
    Relation.COVER: Relation.COVEREDBY,
    Relation.INSIDE: Relation.CONTAIN,
    Relation.CONTAIN: Relation.INSIDE,
    # simétricas: su propia conversa
    Relation.NEAR: Relation.NEAR,
    Relation.FAR: Relation.FAR,
    Relation.TOUCH: Relation.TOUCH,
    Relation.DISCONNECTED: Relation.DISCONNECTED,
    Relation.OVERLAP: Relation.OVERLAP,
}

# Pares mutuamente excluyentes sobre el mismo par ordenado de entidades.
OPPOSITE_PAIRS = (
    (Relation.LEFT, Relation.RIGHT),
    (Relation.ABOVE, Relation.BELOW),
    (Relation.BEHIND, Relation.FRONT),
    (Relation.NEAR, Relation.FAR),
    (Relation.DISCONNECTED, Relation.TOUCH),
)
_OPPOSITE = {}
for _a, _b in OPPOSITE_PAIRS:
    _OPPOSITE[_a] = _b
    _OPPOSITE[_b] = _a


def converse_of(rel: Relation) -> Relation:
    return _CONVERSE[rel]


def category_of(rel: Relation) -> Category:
    if rel in DIRECTIONAL:
        return Category.DIRECTIONAL
    if rel in DISTANCE:
        return Category.DISTANCE
    return Category.TOPOLOGICAL


def opposite_of(rel: Relation) -> Optional[Relation]:
    """Pareja excluyente de `rel`, o None si no pertenece a ningún par."""
    return _OPPOSITE.get(rel)


def is_symmetric(rel: Relation) -> bool:
    return _CONVERSE[rel] is rel


# -------------------------
# Entidades, hechos y escenas
# -------------------------

@dataclass(frozen=True)
class Entity:
    id: str
    attrs: dict = field(default_factory=dict, compare=False, hash=False)

    def to_json(self) -> dict:
        data = {'id': self.id}
        if self.attrs:
            data['attrs'] = dict(sorted(self.attrs.items()))
        return data


@dataclass(frozen=True, order=False)
class Fact:
    rel: Relation
    subj: str
    obj: str

    def __post_init__(self):
        if self.subj == self.obj:
            raise ReflexiveFact('hecho reflexivo: sujeto y objeto coinciden', format_fact(self), 0)

    @property
    def sort_key(self) -> tuple:
        return (self.rel.value, self.subj, self.obj)

    def __lt__(self, other: 'Fact') -> bool:
        return self.sort_key < other.sort_key

    def __str__(self) -> str:
        return format_fact(self)

    def converse(self) -> 'Fact':
        return Fact(converse_of(self.rel), self.obj, self.subj)

    def with_relation(self, rel: Relation) -> 'Fact':
        return Fact(rel, self.subj, self.obj)

    def to_json(self) -> dict:
        return {'rel': self.rel.value, 'subj': self.subj, 'obj': self.obj}


def format_fact(fact: Fact) -> str:
    return f"{fact.rel.value}({fact.subj},{fact.obj})"


_WS = re.compile(r'\s*')
_REL_TOKEN = re.compile(r'[A-Za-z_]+')
_ID_TOKEN = re.compile(r'[A-Za-z0-9_.\-]+')


def _scan(pattern, text, pos, what):
    pos = _WS.match(text, pos).end()
    m = pattern.match(text, pos)
    if not m:
        raise MalformedFact(f"se esperaba {what}", text, pos)
    return m.group(0), m.end()


def _expect(literal, text, pos):
    pos = _WS.match(text, pos).end()
    if not text.startswith(literal, pos):
        raise MalformedFact(f"se esperaba '{literal}'", text, pos)
    return pos + len(literal)


def parse_fact(text: str) -> Fact:
    """Parsea `rel(subj,obj)` con espacios opcionales.

    Errores distintos (todos con posición): relación desconocida, sintaxis
    mal formada y hecho reflexivo.
    """
    if not isinstance(text, str):
        raise MalformedFact('se esperaba texto', repr(text), 0)
    token, pos = _scan(_REL_TOKEN, text, 0, 'un nombre de relación')
    rel_pos = _WS.match(text, 0).end()
    try:
        rel = Relation(token.lower())
    except ValueError:
        raise UnknownRelation(f"relación desconocida '{token}'", text, rel_pos) from None
    pos = _expect('(', text, pos)
    subj_pos = _WS.match(text, pos).end()
    subj, pos = _scan(_ID_TOKEN, text, pos, 'un identificador')
    pos = _expect(',', text, pos)
    obj, pos = _scan(_ID_TOKEN, text, pos, 'un identificador')
    pos = _expect(')', text, pos)
    end = _WS.match(text, pos).end()
    if end != len(text):
        raise MalformedFact('texto sobrante después del hecho', text, end)
    if subj == obj:
        raise ReflexiveFact('hecho reflexivo: sujeto y objeto coinciden', text, subj_pos)
    return Fact(rel, subj, obj)


@dataclass(frozen=True)
class Scene:
    """Entidades declaradas + hechos afirmados (la historia)."""
    entities: tuple
    facts: frozenset

    def __post_init__(self):
        ids = [e.id for e in self.entities]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise SchemaError(f"ids de entidad duplicados: {', '.join(dupes)}")
        known = set(ids)
        for fact in self.facts:
            for ent in (fact.subj, fact.obj):
                if ent not in known:
                    raise UnknownEntity(f"el hecho {fact} referencia la entidad no declarada '{ent}'")

    @classmethod
    def build(cls, entities: Iterable, facts: Iterable[Fact]) -> 'Scene':
        ents = []
        for e in entities:
            ents.append(e if isinstance(e, Entity) else Entity(str(e)))
        return cls(tuple(sorted(ents, key=lambda e: e.id)), frozenset(facts))

    @property
    def entity_ids(self) -> tuple:
        return tuple(e.id for e in self.entities)

    def entity_map(self) -> dict:
        return {e.id: e for e in self.entities}

    def require_entities(self, *ids: str) -> None:
        known = set(self.entity_ids)
        for ent in ids:
            if ent not in known:
                raise UnknownEntity(f"entidad '{ent}' fuera de la escena")

    def sorted_facts(self) -> list:
        return sorted(self.facts)

    def to_json(self) -> dict:
        return {
            'entities': [e.to_json() for e in self.entities],
            'facts': [f.to_json() for f in self.sorted_facts()],
        }


# -------------------------
# Preguntas y respuestas
# -------------------------

class QuestionType(str, Enum):
    YN = 'YN'
    FR = 'FR'


@dataclass(frozen=True)
class Question:
    id: str
    qtype: QuestionType
    fact: Optional[Fact] = None
    pair: Optional[tuple] = None

    def __post_init__(self):
        if self.qtype is QuestionType.YN:
            if self.fact is None or self.pair is not None:
                raise SchemaError(f"la pregunta YN '{self.id}' necesita exactamente un hecho")
        else:
            if self.fact is not None or self.pair is None or len(self.pair) != 2:
                raise SchemaError(f"la pregunta FR '{self.id}' lleva un par (subj, obj) y ninguna relación")
            if self.pair[0] == self.pair[1]:
                raise SchemaError(f"la pregunta FR '{self.id}' pregunta por una entidad consigo misma")

    @classmethod
    def yn(cls, fact: Fact, id: Optional[str] = None) -> 'Question':
        return cls(id or format_fact(fact), QuestionType.YN, fact=fact)

    @classmethod
    def fr(cls, subj: str, obj: str, id: Optional[str] = None) -> 'Question':
        return cls(id or f"fr({subj},{obj})", QuestionType.FR, pair=(subj, obj))

    @property
    def entities(self) -> tuple:
        if self.fact is not None:
            return (self.fact.subj, self.fact.obj)
        return tuple(self.pair)

    def with_id(self, new_id: str) -> 'Question':
        return Question(new_id, self.qtype, self.fact, self.pair)

    def to_json(self) -> dict:
        data = {'id': self.id, 'type': self.qtype.value}
        if self.fact is not None:
            data['fact'] = self.fact.to_json()
        else:
            data['subj'], data['obj'] = self.pair
        return data


@dataclass(frozen=True)
class Answer:
    qtype: QuestionType
    yes: Optional[bool] = None
    relations: frozenset = frozenset()

    @classmethod
    def yes_no(cls, value: bool) -> 'Answer':
        return cls(QuestionType.YN, yes=bool(value))

    @classmethod
    def relation_set(cls, rels: Iterable[Relation]) -> 'Answer':
        return cls(QuestionType.FR, relations=frozenset(rels))

    def sorted_relations(self) -> list:
        return sorted(self.relations, key=lambda r: r.order)

    def to_json(self):
        if self.qtype is QuestionType.YN:
            return 'yes' if self.yes else 'no'
        return [r.value for r in self.sorted_relations()]

    @classmethod
    def from_json(cls, value) -> 'Answer':
        if isinstance(value, str):
            if value.lower() not in ('yes', 'no'):
                raise SchemaError(f"respuesta YN inválida: {value!r}")
            return cls.yes_no(value.lower() == 'yes')
        if isinstance(value, (list, tuple)):
            return cls.relation_set(Relation.from_token(v) for v in value)
        raise SchemaError(f"respuesta inválida: {value!r}")
