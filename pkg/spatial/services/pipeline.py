"""
Composición en una llamada: derivar la Q-Chain, compilarla a restricciones
y renderizar el racional.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

from spatial.services.constraints import (
    CHAIN_TEMPLATES,
    ConstraintSet,
    chain_to_constraints,
    merge,
    reverse_pair_constraints,
    Template,
)
from spatial.services.inference import QChain, chain_depth
from spatial.services.qa_oracle import Oracle
from spatial.services.render import DEFAULT_BANK, PhraseBank, RenderFormat, render_chain
from spatial.services.rule_kb import RuleKB
from spatial.services.spatial_core import Answer, Fact, Question, Scene, opposite_of

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineOptions:
    templates: frozenset = CHAIN_TEMPLATES
    fmt: RenderFormat = RenderFormat.COT
    bank: PhraseBank = DEFAULT_BANK


@dataclass(frozen=True)
class PipelineResult:
    target: Fact
    answer: Answer
    chain: Optional[QChain]
    depth: int
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    rationale: str = ''

    def to_json(self) -> dict:
        return {
            'target': self.target.to_json(),
            'answer': self.answer.to_json(),
            'depth': self.depth,
            'chain': self.chain.to_json() if self.chain is not None else None,
            'constraints': self.constraints.to_json(),
            'rationale': self.rationale.split('\n') if self.rationale else [],
        }


def pipeline(scene: Scene, target: Fact, kb: RuleKB, options: Optional[PipelineOptions] = None,
             oracle: Optional[Oracle] = None) -> PipelineResult:
    options = options or PipelineOptions()
    oracle = oracle if oracle is not None else Oracle(scene, kb)
    answered = oracle.answer_yn(target, question_id='t')
    chain = answered.chains.get(target)
    if chain is None:
        # mundo cerrado: No, sin cadena ni restricciones
        return PipelineResult(target, answered.answer, None, 0, ConstraintSet(), 'Answer: No')

    constraints = chain_to_constraints(chain).only(options.templates)
    opposite = opposite_of(target.rel)
    if Template.REVERSE in options.templates and opposite is not None:
        q_neg = Question.yn(target.with_relation(opposite), id='n')
        constraints = merge(constraints, reverse_pair_constraints(answered.question, q_neg, True))
    rationale = render_chain(chain, scene, options.fmt, options.bank, answer='Yes')
    return PipelineResult(target, answered.answer, chain, chain_depth(chain), constraints, rationale)


def pipeline_many(scene: Scene, targets, kb: RuleKB, options: Optional[PipelineOptions] = None) -> list:
    """Mismo orden que `targets`; el cierre se calcula una sola vez."""
    oracle = Oracle(scene, kb)
    return [pipeline(scene, t, kb, options, oracle=oracle) for t in targets]
