"""
Compilación de Q-Chains y de la estructura de respuestas a restricciones
lógicas de consistencia sobre variables de verdad de preguntas.

Familias de plantillas:
 - symmetric / transitive / transitive_topo: un paso de la cadena,
   premisas ⇒ conclusión.
 - reverse: par YN sobre relaciones opuestas (q ⇒ ¬q', ¬q ⇒ q').
 - exactL: exclusión entre etiquetas opuestas de una pregunta FR.
 - inverse: etiqueta r en (a, b) ⇒ etiqueta conversa en (b, a).

Las expresiones se serializan como S-expresiones en arrays JSON:
["=>", ["var", "q1"], ["var", "q3"]].
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

from spatial.exceptions import NotAnOppositePair, SchemaError
from spatial.services.inference import QChain, chain_to_questions
from spatial.services.spatial_core import (
    ALL_RELATIONS,
    OPPOSITE_PAIRS,
    Answer,
    Question,
    QuestionType,
    Relation,
    opposite_of,
)

logger = logging.getLogger(__name__)


class Template(str, Enum):
    SYMMETRIC = 'symmetric'
    REVERSE = 'reverse'
    TRANSITIVE = 'transitive'
    TRANSITIVE_TOPO = 'transitive_topo'
    EXACT_L = 'exactL'
    INVERSE = 'inverse'

    @classmethod
    def parse_list(cls, text: str) -> frozenset:
        """'symmetric,reverse' -> {SYMMETRIC, REVERSE}; vacío = ninguna."""
        out = set()
        for token in (t.strip() for t in (text or '').split(',')):
            if not token:
                continue
            try:
                out.add(cls(token))
            except ValueError:
                valid = ', '.join(t.value for t in cls)
                raise SchemaError(f"plantilla desconocida '{token}' (válidas: {valid})") from None
        return frozenset(out)


ALL_TEMPLATES = frozenset(Template)
CHAIN_TEMPLATES = frozenset({Template.SYMMETRIC, Template.TRANSITIVE, Template.TRANSITIVE_TOPO})

# nº de premisas de un paso -> plantilla
_STEP_TEMPLATE = {1: Template.SYMMETRIC, 2: Template.TRANSITIVE, 3: Template.TRANSITIVE_TOPO}


# -------------------------
# LogicExpr
# -------------------------

class LogicExpr:
    """Nodo del AST; las subclases son dataclasses inmutables."""

    def variables(self) -> list:
        seen = []
        self._collect(seen)
        return list(dict.fromkeys(seen))

    def _collect(self, out):
        for child in self.children():
            child._collect(out)

    def children(self) -> tuple:
        return ()

    def to_sexpr(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Var(LogicExpr):
    id: str

    def _collect(self, out):
        out.append(self.id)

    def to_sexpr(self):
        return ['var', self.id]

    def __str__(self):
        return f"T({self.id})"


@dataclass(frozen=True)
class Not(LogicExpr):
    arg: LogicExpr

    def children(self):
        return (self.arg,)

    def to_sexpr(self):
        return ['not', self.arg.to_sexpr()]

    def __str__(self):
        return f"¬{self.arg}"


@dataclass(frozen=True)
class And(LogicExpr):
    args: tuple

    def __post_init__(self):
        if not self.args:
            raise SchemaError('and sin argumentos')

    def children(self):
        return self.args

    def to_sexpr(self):
        return ['and', *(a.to_sexpr() for a in self.args)]

    def __str__(self):
        return '(' + ' ∧ '.join(str(a) for a in self.args) + ')'


@dataclass(frozen=True)
class Or(LogicExpr):
    args: tuple

    def __post_init__(self):
        if not self.args:
            raise SchemaError('or sin argumentos')

    def children(self):
        return self.args

    def to_sexpr(self):
        return ['or', *(a.to_sexpr() for a in self.args)]

    def __str__(self):
        return '(' + ' ∨ '.join(str(a) for a in self.args) + ')'


@dataclass(frozen=True)
class Implies(LogicExpr):
    antecedent: LogicExpr
    consequent: LogicExpr

    def children(self):
        return (self.antecedent, self.consequent)

    def to_sexpr(self):
        return ['=>', self.antecedent.to_sexpr(), self.consequent.to_sexpr()]

    def __str__(self):
        return f"{self.antecedent} ⇒ {self.consequent}"


def expr_from_sexpr(data) -> LogicExpr:
    if not isinstance(data, (list, tuple)) or not data or not isinstance(data[0], str):
        raise SchemaError(f"expresión mal formada: {data!r}")
    op, args = data[0], data[1:]
    if op == 'var':
        if len(args) != 1 or not isinstance(args[0], str) or not args[0]:
            raise SchemaError(f"'var' espera un id de pregunta: {data!r}")
        return Var(args[0])
    if op == 'not':
        if len(args) != 1:
            raise SchemaError(f"'not' espera un argumento: {data!r}")
        return Not(expr_from_sexpr(args[0]))
    if op in ('and', 'or'):
        if not args:
            raise SchemaError(f"'{op}' espera al menos un argumento")
        nodes = tuple(expr_from_sexpr(a) for a in args)
        return And(nodes) if op == 'and' else Or(nodes)
    if op == '=>':
        if len(args) != 2:
            raise SchemaError(f"'=>' espera dos argumentos: {data!r}")
        return Implies(expr_from_sexpr(args[0]), expr_from_sexpr(args[1]))
    raise SchemaError(f"operador desconocido '{op}'")


def evaluate_boolean(expr: LogicExpr, assignment: dict) -> bool:
    """Evaluación clásica; los valores se leen como verdad si son >= 0.5."""
    if isinstance(expr, Var):
        return bool(assignment[expr.id] >= 0.5)
    if isinstance(expr, Not):
        return not evaluate_boolean(expr.arg, assignment)
    if isinstance(expr, And):
        return all(evaluate_boolean(a, assignment) for a in expr.args)
    if isinstance(expr, Or):
        return any(evaluate_boolean(a, assignment) for a in expr.args)
    if isinstance(expr, Implies):
        return (not evaluate_boolean(expr.antecedent, assignment)) or evaluate_boolean(expr.consequent, assignment)
    raise SchemaError(f"nodo desconocido {expr!r}")


# -------------------------
# Preguntas y conjuntos de restricciones
# -------------------------

@dataclass(frozen=True)
class QuestionEntry:
    """Variable de verdad: una pregunta YN, o una etiqueta de una pregunta FR."""
    id: str
    question: Question
    gold: bool
    label: Optional[Relation] = None

    def to_json(self) -> dict:
        data = self.question.to_json()
        data['id'] = self.id
        if self.label is not None:
            data['question'] = self.question.id
            data['label'] = self.label.value
        data['gold'] = 'yes' if self.gold else 'no'
        return data


@dataclass(frozen=True)
class Constraint:
    id: str
    expr: LogicExpr
    template: Template

    def to_json(self) -> dict:
        return {'id': self.id, 'template': self.template.value, 'expr': self.expr.to_sexpr()}


class ConstraintSet:
    def __init__(self, questions: Iterable[QuestionEntry] = (), constraints: Iterable[Constraint] = ()):
        self.questions = tuple(questions)
        self.constraints = tuple(constraints)
        self._by_id = {}
        for entry in self.questions:
            if entry.id in self._by_id:
                raise SchemaError(f"id de pregunta duplicado '{entry.id}'")
            self._by_id[entry.id] = entry
        seen = set()
        for c in self.constraints:
            if c.id in seen:
                raise SchemaError(f"id de restricción duplicado '{c.id}'")
            seen.add(c.id)
            for var in c.expr.variables():
                if var not in self._by_id:
                    raise SchemaError(f"la restricción '{c.id}' referencia la pregunta inexistente '{var}'")

    def __len__(self) -> int:
        return len(self.constraints)

    def entry(self, qid: str) -> QuestionEntry:
        return self._by_id[qid]

    @property
    def question_ids(self) -> tuple:
        return tuple(e.id for e in self.questions)

    def gold_assignment(self) -> dict:
        return {e.id: 1.0 if e.gold else 0.0 for e in self.questions}

    def templates(self) -> list:
        return sorted({c.template.value for c in self.constraints})

    def only(self, templates: Iterable[Template]) -> 'ConstraintSet':
        keep = frozenset(templates)
        return ConstraintSet(self.questions, (c for c in self.constraints if c.template in keep))

    def gold_satisfied(self) -> bool:
        gold = self.gold_assignment()
        return all(evaluate_boolean(c.expr, gold) for c in self.constraints)

    def to_json(self) -> dict:
        return {
            'questions': [e.to_json() for e in self.questions],
            'constraints': [c.to_json() for c in self.constraints],
        }

    @classmethod
    def from_json(cls, data) -> 'ConstraintSet':
        from spatial.api.serializers import ConstraintSetSerializer

        serializer = ConstraintSetSerializer(data=data)
        if not serializer.is_valid():
            raise SchemaError(f"conjunto de restricciones inválido: {serializer.errors}")
        return serializer.save()


def _numbered(pairs, start=1):
    return [Constraint(f"c{i}", expr, tag) for i, (expr, tag) in enumerate(pairs, start=start)]


def chain_to_constraints(chain: QChain) -> ConstraintSet:
    questions = [QuestionEntry(q.id, q, answer.yes) for q, answer in chain_to_questions(chain)]
    pairs = []
    for step in chain.rule_steps():
        premises = tuple(Var(p) for p in step.premises)
        antecedent = premises[0] if len(premises) == 1 else And(premises)
        tag = _STEP_TEMPLATE.get(len(premises))
        if tag is None:
            raise SchemaError(f"paso '{step.id}' con {len(premises)} premisas")
        pairs.append((Implies(antecedent, Var(step.id)), tag))
    return ConstraintSet(questions, _numbered(pairs))


def reverse_pair_constraints(q_pos: Question, q_neg: Question, gold_pos: bool = True) -> ConstraintSet:
    """q ⇒ ¬q' y ¬q ⇒ q'. El oro de q' es el complemento del de q."""
    if q_pos.qtype is not QuestionType.YN or q_neg.qtype is not QuestionType.YN:
        raise NotAnOppositePair('las restricciones reverse se definen sobre preguntas YN')
    f, g = q_pos.fact, q_neg.fact
    if (f.subj, f.obj) != (g.subj, g.obj) or opposite_of(f.rel) is not g.rel:
        raise NotAnOppositePair(f"{f} y {g} no forman un par opuesto")
    questions = [QuestionEntry(q_pos.id, q_pos, gold_pos), QuestionEntry(q_neg.id, q_neg, not gold_pos)]
    pos, neg = Var(q_pos.id), Var(q_neg.id)
    pairs = [(Implies(pos, Not(neg)), Template.REVERSE), (Implies(Not(pos), neg), Template.REVERSE)]
    return ConstraintSet(questions, _numbered(pairs))


def label_id(question: Question, rel: Relation) -> str:
    return f"{question.id}:{rel.value}"


def label_entries(question: Question, gold: Optional[Answer] = None) -> list:
    """Una variable por relación (15), en el orden del vocabulario."""
    members = gold.relations if gold is not None else frozenset()
    return [QuestionEntry(label_id(question, rel), question, rel in members, rel) for rel in ALL_RELATIONS]


def exact_label_constraints(fr_question: Question, gold: Optional[Answer] = None,
                            mode: str = 'exclusion') -> ConstraintSet:
    if fr_question.qtype is not QuestionType.FR:
        raise SchemaError(f"exactL requiere una pregunta FR, no '{fr_question.id}'")
    if mode not in ('exclusion', 'exactly_one'):
        raise SchemaError(f"modo exactL desconocido '{mode}'")
    pairs = []
    for a, b in OPPOSITE_PAIRS:
        va, vb = Var(label_id(fr_question, a)), Var(label_id(fr_question, b))
        if mode == 'exclusion':
            expr = Not(And((va, vb)))
        else:
            # con oro conocido, exactly_one sólo sobre pares donde el oro elige uno
            if gold is not None and a not in gold.relations and b not in gold.relations:
                continue
            expr = Or((And((va, Not(vb))), And((Not(va), vb))))
        pairs.append((expr, Template.EXACT_L))
    return ConstraintSet(label_entries(fr_question, gold), _numbered(pairs))


def inverse_label_constraints(fr_question: Question, fr_inverse: Question,
                              gold: Optional[Answer] = None,
                              gold_inverse: Optional[Answer] = None) -> ConstraintSet:
    if fr_question.qtype is not QuestionType.FR or fr_inverse.qtype is not QuestionType.FR:
        raise SchemaError('las restricciones inverse se definen sobre preguntas FR')
    if tuple(fr_inverse.pair) != tuple(reversed(fr_question.pair)):
        raise SchemaError(f"'{fr_inverse.id}' no pregunta por el par inverso de '{fr_question.id}'")
    pairs = []
    for src, dst in ((fr_question, fr_inverse), (fr_inverse, fr_question)):
        for rel in ALL_RELATIONS:
            pairs.append((
                Implies(Var(label_id(src, rel)), Var(label_id(dst, rel.converse))),
                Template.INVERSE,
            ))
    questions = label_entries(fr_question, gold) + label_entries(fr_inverse, gold_inverse)
    return ConstraintSet(questions, _numbered(pairs))


def merge(*sets: ConstraintSet) -> ConstraintSet:
    """Une conjuntos: preguntas sin repetir, restricciones renumeradas c1..cn."""
    questions = {}
    constraints = []
    for cs in sets:
        for entry in cs.questions:
            current = questions.get(entry.id)
            if current is None:
                questions[entry.id] = entry
            elif current != entry:
                raise SchemaError(f"la pregunta '{entry.id}' aparece con dos definiciones distintas")
        constraints.extend((c.expr, c.template) for c in cs.constraints)
    return ConstraintSet(questions.values(), _numbered(constraints))
