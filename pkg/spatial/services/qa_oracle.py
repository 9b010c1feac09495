"""
Oráculo de preguntas YN / FR sobre el cierre deductivo (mundo cerrado).

Lo no derivable se responde No; FR devuelve el conjunto de relaciones
derivadas para el par, posiblemente vacío.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

from spatial.services.inference import Closure, chain_depth, close, derive, find_conflicts
from spatial.services.rule_kb import RuleKB
from spatial.services.spatial_core import Answer, Fact, Question, QuestionType, Scene

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnsweredQuestion:
    question: Question
    answer: Answer
    chains: dict = field(default_factory=dict)
    depth: int = 0
    consistent: bool = True

    def to_json(self) -> dict:
        return {
            'question': self.question.to_json(),
            'answer': self.answer.to_json(),
            'depth': self.depth,
            'consistent': self.consistent,
            'chains': {
                str(fact): chain.to_json()
                for fact, chain in sorted(self.chains.items())
            },
        }


class Oracle:
    """Reutiliza un único cierre para responder muchas preguntas sobre la misma escena."""

    def __init__(self, scene: Scene, kb: RuleKB, closure: Optional[Closure] = None):
        self.scene = scene
        self.kb = kb
        self.closure = closure if closure is not None else close(scene, kb)
        conflicts = find_conflicts(self.closure)
        self.consistent = not conflicts
        if conflicts:
            a, b = conflicts[0]
            logger.warning("escena inconsistente: %s y %s (%d conflictos)", a, b, len(conflicts))

    def _chain(self, fact: Fact):
        return derive(self.scene, fact, self.kb, closure=self.closure)

    def answer_yn(self, fact: Fact, question_id: Optional[str] = None) -> AnsweredQuestion:
        self.scene.require_entities(fact.subj, fact.obj)
        question = Question.yn(fact, id=question_id)
        chains = {}
        depth = 0
        if fact in self.closure:
            chain = self._chain(fact)
            chains[fact] = chain
            depth = chain_depth(chain)
        return AnsweredQuestion(question, Answer.yes_no(bool(chains)), chains, depth, self.consistent)

    def answer_fr(self, subj: str, obj: str, question_id: Optional[str] = None) -> AnsweredQuestion:
        self.scene.require_entities(subj, obj)
        question = Question.fr(subj, obj, id=question_id)
        chains = {}
        for rel in self.closure.relations_between(subj, obj):
            fact = Fact(rel, subj, obj)
            chains[fact] = self._chain(fact)
        depth = max((chain_depth(c) for c in chains.values()), default=0)
        answer = Answer.relation_set(f.rel for f in chains)
        return AnsweredQuestion(question, answer, chains, depth, self.consistent)

    def answer(self, question: Question) -> AnsweredQuestion:
        if question.qtype is QuestionType.YN:
            return self.answer_yn(question.fact, question_id=question.id)
        subj, obj = question.pair
        return self.answer_fr(subj, obj, question_id=question.id)

    def answer_all(self, questions) -> list:
        return [self.answer(q) for q in questions]


def answer_yn(scene: Scene, fact: Fact, kb: RuleKB) -> AnsweredQuestion:
    return Oracle(scene, kb).answer_yn(fact)


def answer_fr(scene: Scene, subj: str, obj: str, kb: RuleKB) -> AnsweredQuestion:
    return Oracle(scene, kb).answer_fr(subj, obj)
