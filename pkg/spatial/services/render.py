"""
Renderizado determinista de hechos, historias y Q-Chains.

Formatos:
 - NL: oraciones con una plantilla por relación ("The white is above the orange.").
 - CoT: racional paso a paso en lenguaje natural, termina en "Answer: Yes".
 - LR: predicado-argumentos, "Left(large red square, small green square)".
 - CoS: tuplas de atributos unidas por glifos, "(large, red, square) < (small, green, square)".

Las entidades se describen por sus atributos (tamaño, color, forma) o,
si no los tienen, por su id. Los bloques se nombran "block A".
"""
import json
import logging
import re
from enum import Enum
from typing import Optional

from spatial.exceptions import MalformedFact, SchemaError, UnsupportedSymbol
from spatial.services.spatial_core import (
    ALL_RELATIONS,
    Entity,
    Fact,
    Question,
    QuestionType,
    Relation,
    Scene,
)

logger = logging.getLogger(__name__)


class RenderFormat(str, Enum):
    NL = 'nl'
    COT = 'cot'
    LR = 'lr'
    COS = 'cos'


class StoryMode(str, Enum):
    RAW = 'raw'
    STEP_BY_STEP = 'step_by_step'


# Frase verbal canónica: "<sujeto> <frase> <objeto>."
VERB_PHRASES = {
    Relation.LEFT: 'is to the left of',
    Relation.RIGHT: 'is to the right of',
    Relation.ABOVE: 'is above',
    Relation.BELOW: 'is below',
    Relation.BEHIND: 'is behind',
    Relation.FRONT: 'is in front of',
    Relation.NEAR: 'is near',
    Relation.FAR: 'is far from',
    Relation.DISCONNECTED: 'is disconnected from',
    Relation.TOUCH: 'is touching',
    Relation.OVERLAP: 'overlaps',
    Relation.COVEREDBY: 'is touching an edge of',
    Relation.INSIDE: 'is inside',
    Relation.COVER: 'covers',
    Relation.CONTAIN: 'contains',
}

COS_SYMBOLS = {
    Relation.LEFT: '<',
    Relation.RIGHT: '>',
    Relation.ABOVE: '↑',
    Relation.BELOW: '↓',
    Relation.NEAR: '~',
    Relation.TOUCH: '=',
}

# etiqueta de paso cuando la cadena no trae la categoría de la regla
_FALLBACK_CATEGORY = {1: 'converse', 2: 'transitive', 3: 'transitive_topo'}


class PhraseBank:
    """Frases verbales por relación; la primera de cada lista es la canónica."""

    def __init__(self, phrases: Optional[dict] = None):
        self.phrases = {rel: [VERB_PHRASES[rel]] for rel in ALL_RELATIONS}
        for rel, variants in (phrases or {}).items():
            self.phrases[rel] = list(variants)

    @classmethod
    def from_json(cls, path) -> 'PhraseBank':
        with open(path, encoding='utf-8') as fh:
            try:
                data = json.load(fh)
            except ValueError as exc:
                raise SchemaError(f"banco de frases inválido en {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise SchemaError('el banco de frases es un objeto {relación: [frases]}')
        phrases = {}
        for token, variants in data.items():
            rel = Relation.from_token(token)
            if isinstance(variants, str):
                variants = [variants]
            if not variants or not all(isinstance(v, str) and v.strip() for v in variants):
                raise SchemaError(f"frases vacías o inválidas para '{token}'")
            phrases[rel] = [' '.join(v.split()) for v in variants]
        return cls(phrases)

    def verb(self, rel: Relation, variant: int = 0) -> str:
        options = self.phrases[rel]
        return options[variant % len(options)]

    def all_verbs(self):
        """(relación, frase) de la más larga a la más corta, para parsear sin ambigüedad."""
        pairs = [(rel, v) for rel in ALL_RELATIONS for v in self.phrases[rel]]
        return sorted(pairs, key=lambda p: (-len(p[1]), p[0].order))


DEFAULT_BANK = PhraseBank()


# -------------------------
# Descripciones de entidades
# -------------------------

def _is_block(entity: Entity) -> bool:
    return entity.attrs.get('kind') == 'block'


def _attr_words(entity: Entity) -> list:
    return [str(entity.attrs[k]) for k in ('size', 'color', 'shape') if entity.attrs.get(k)]


def noun_phrase(entity: Entity) -> str:
    """'block A', 'the large red square' o 'the white'."""
    if _is_block(entity):
        return f"block {entity.attrs.get('name', entity.id)}"
    words = _attr_words(entity)
    return 'the ' + (' '.join(words) if words else entity.id)


def lr_term(entity: Entity) -> str:
    if _is_block(entity):
        return str(entity.attrs.get('name', entity.id))
    words = _attr_words(entity)
    return ' '.join(words) if words else entity.id


def cos_term(entity: Entity) -> str:
    if _is_block(entity):
        return str(entity.attrs.get('name', entity.id))
    words = _attr_words(entity)
    return '(' + ', '.join(words if words else [entity.id]) + ')'


def _entity(entities, ent_id: str) -> Entity:
    if isinstance(entities, Scene):
        entities = entities.entity_map()
    elif not isinstance(entities, dict):
        entities = {e.id: e for e in entities}
    return entities.get(ent_id) or Entity(ent_id)


def _capitalize(text: str) -> str:
    return text[:1].upper() + text[1:]


# -------------------------
# Hechos y preguntas
# -------------------------

def _clause(fact: Fact, entities, bank: PhraseBank, variant: int = 0) -> str:
    subj = noun_phrase(_entity(entities, fact.subj))
    obj = noun_phrase(_entity(entities, fact.obj))
    return f"{subj} {bank.verb(fact.rel, variant)} {obj}"


def render_fact(fact: Fact, entities=(), fmt: RenderFormat = RenderFormat.NL,
                bank: PhraseBank = DEFAULT_BANK, variant: int = 0) -> str:
    fmt = RenderFormat(fmt)
    if fmt in (RenderFormat.NL, RenderFormat.COT):
        return _capitalize(_clause(fact, entities, bank, variant)) + '.'
    if fmt is RenderFormat.LR:
        subj, obj = lr_term(_entity(entities, fact.subj)), lr_term(_entity(entities, fact.obj))
        return f"{fact.rel.value.capitalize()}({subj}, {obj})"
    symbol = COS_SYMBOLS.get(fact.rel)
    if symbol is None:
        raise UnsupportedSymbol(f"la relación '{fact.rel.value}' no tiene símbolo CoS")
    return f"{cos_term(_entity(entities, fact.subj))} {symbol} {cos_term(_entity(entities, fact.obj))}"


def render_question(question: Question, entities=(), bank: PhraseBank = DEFAULT_BANK) -> str:
    if question.qtype is QuestionType.FR:
        subj, obj = (noun_phrase(_entity(entities, e)) for e in question.pair)
        return f"Where is {subj} relative to {obj}?"
    fact = question.fact
    subj = noun_phrase(_entity(entities, fact.subj))
    obj = noun_phrase(_entity(entities, fact.obj))
    verb = bank.verb(fact.rel)
    if verb.startswith('is '):
        return f"Is {subj} {verb[3:]} {obj}?"
    # "overlaps" -> "Does ... overlap ...?"
    head, _, rest = verb.partition(' ')
    base = head[:-1] if head.endswith('s') else head
    return f"Does {subj} {' '.join(w for w in (base, rest) if w)} {obj}?"


def parse_nl_fact(line: str, entities, bank: PhraseBank = DEFAULT_BANK) -> Fact:
    """Inversa de render_fact(NL): reconoce la plantilla y resuelve las descripciones."""
    if isinstance(entities, Scene):
        entities = entities.entities
    phrases = {}
    for ent in entities:
        phrases[noun_phrase(ent).lower()] = ent.id
    text = ' '.join(line.strip().split())
    if text.endswith('.'):
        text = text[:-1]
    lowered = text.lower()
    for rel, verb in bank.all_verbs():
        pattern = re.compile(rf"^(?P<s>.+?) {re.escape(verb.lower())} (?P<o>.+)$")
        m = pattern.match(lowered)
        if not m:
            continue
        subj, obj = phrases.get(m.group('s')), phrases.get(m.group('o'))
        if subj is not None and obj is not None and subj != obj:
            return Fact(rel, subj, obj)
    raise MalformedFact('ninguna plantilla reconoce la oración', line, 0)


# -------------------------
# Historias
# -------------------------

def render_story(scene: Scene, mode: StoryMode = StoryMode.STEP_BY_STEP,
                 bank: PhraseBank = DEFAULT_BANK, rng=None) -> str:
    """step_by_step: una oración simple por línea. raw: una oración por sujeto."""
    mode = StoryMode(mode)
    facts = scene.sorted_facts()
    if not facts:
        return ''

    def variant(rel):
        if rng is None:
            return 0
        return int(rng.integers(len(bank.phrases[rel])))

    if mode is StoryMode.STEP_BY_STEP:
        return '\n'.join(render_fact(f, scene, RenderFormat.NL, bank, variant(f.rel)) for f in facts)

    by_subject = {}
    for fact in facts:
        by_subject.setdefault(fact.subj, []).append(fact)
    sentences = []
    for subj_id in sorted(by_subject):
        group = by_subject[subj_id]
        subj = noun_phrase(_entity(scene, subj_id))
        parts = [f"{bank.verb(f.rel, variant(f.rel))} {noun_phrase(_entity(scene, f.obj))}" for f in group]
        if len(parts) > 1:
            body = ', '.join(parts[:-1]) + ' and ' + parts[-1]
        else:
            body = parts[0]
        sentences.append(_capitalize(f"{subj} {body}") + '.')
    return ' '.join(sentences)


def story_lines(scene: Scene, about=(), bank: PhraseBank = DEFAULT_BANK) -> list:
    """Oraciones de los hechos que mencionan alguna de las entidades `about`."""
    wanted = set(about)
    return [
        render_fact(f, scene, RenderFormat.NL, bank)
        for f in scene.sorted_facts()
        if not wanted or f.subj in wanted or f.obj in wanted
    ]


# -------------------------
# Cadenas
# -------------------------

def _step_category(step) -> str:
    if step.category is not None:
        return step.category.value
    return _FALLBACK_CATEGORY.get(len(step.premises), 'rule')


def render_chain(chain, entities=(), fmt: RenderFormat = RenderFormat.COT,
                 bank: PhraseBank = DEFAULT_BANK, answer: str = 'Yes') -> str:
    fmt = RenderFormat(fmt)
    facts = {s.id: s.fact for s in chain.steps}
    rule_steps = chain.rule_steps()
    lines = []

    if not rule_steps:
        fact = chain.target
        if fmt is RenderFormat.COT:
            lines.append(f"The story states that {_clause(fact, entities, bank)}.")
        elif fmt is RenderFormat.NL:
            lines.append(render_fact(fact, entities, fmt, bank))
        else:
            lines.append(f"{render_fact(fact, entities, fmt, bank)} [given]")

    for step in rule_steps:
        premises = [facts[p] for p in step.premises]
        category = _step_category(step)
        if fmt is RenderFormat.NL:
            lines.append(render_fact(step.fact, entities, fmt, bank))
        elif fmt is RenderFormat.COT:
            because = ' and '.join(_clause(p, entities, bank) for p in premises)
            lines.append(f"Because {because}, {_clause(step.fact, entities, bank)} ({category}).")
        else:
            lhs = ' + '.join(render_fact(p, entities, fmt, bank) for p in premises)
            lines.append(f"{lhs} => {render_fact(step.fact, entities, fmt, bank)} [{category}]")

    lines.append(f"Answer: {answer}")
    return '\n'.join(lines)
