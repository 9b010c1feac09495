"""
Registros del dataset (uno por pregunta) y su formato JSONL.

Cada registro lleva la escena, la pregunta principal, el oro, la cadena
(si la hay), la profundidad k y el ConstraintSet con todas las preguntas
auxiliares, así el entrenador no necesita más contexto.
"""
import json
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional

from spatial.exceptions import SchemaError
from spatial.services.constraints import ConstraintSet
from spatial.services.inference import QChain, chain_from_json
from spatial.services.spatial_core import Answer, Question, QuestionType, Scene

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    scene: Scene
    question: Question
    gold: Answer
    chain: Optional[QChain]
    k: int
    constraints: ConstraintSet
    depth_unreachable: bool = False

    def to_json(self) -> dict:
        from spatial.services.render import StoryMode, render_story

        story = render_story(self.scene, StoryMode.STEP_BY_STEP)
        return {
            'id': self.id,
            'scene': self.scene.to_json(),
            'story': story.split('\n') if story else [],
            'question': self.question.to_json(),
            'gold': self.gold.to_json(),
            'chain': self.chain.to_json() if self.chain is not None else None,
            'k': self.k,
            'constraints': self.constraints.to_json(),
            'depth_unreachable': self.depth_unreachable,
        }

    @classmethod
    def from_json(cls, data, line: Optional[int] = None) -> 'DatasetRecord':
        from spatial.api.serializers import (
            DatasetRecordSerializer,
            QuestionSerializer,
            SceneSerializer,
            validate_document,
        )

        where = f"registro (línea {line})" if line is not None else 'registro'
        attrs = validate_document(DatasetRecordSerializer, data, where)
        scene = validate_document(SceneSerializer, attrs['scene'], f"{where}: escena")
        question = validate_document(QuestionSerializer, attrs['question'], f"{where}: pregunta")
        gold = Answer.from_json(attrs['gold'])
        if gold.qtype is not question.qtype:
            raise SchemaError(f"{where}: el oro no corresponde al tipo de pregunta {question.qtype.value}")
        chain = chain_from_json(attrs['chain']) if attrs.get('chain') else None
        constraints = ConstraintSet.from_json(attrs['constraints'])
        return cls(
            attrs.get('id') or question.id,
            scene, question, gold, chain, attrs['k'], constraints,
            attrs.get('depth_unreachable', False),
        )

    @property
    def main_ids(self) -> tuple:
        """Variables del ConstraintSet que representan la pregunta principal."""
        if self.question.qtype is QuestionType.YN:
            return (self.question.id,)
        return tuple(e.id for e in self.constraints.questions
                     if e.label is not None and e.question.id == self.question.id)


def write_jsonl(records: Iterable[DatasetRecord], fh) -> int:
    count = 0
    for record in records:
        fh.write(json.dumps(record.to_json(), ensure_ascii=False, sort_keys=True))
        fh.write('\n')
        count += 1
    return count


def read_jsonl(fh) -> list:
    records = []
    for lineno, raw in enumerate(fh, start=1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            data = json.loads(raw)
        except ValueError as exc:
            raise SchemaError(f"JSON inválido en la línea {lineno}: {exc}") from exc
        records.append(DatasetRecord.from_json(data, line=lineno))
    logger.info("dataset: %d registros leídos", len(records))
    return records


def load_jsonl(path) -> list:
    with open(path, encoding='utf-8') as fh:
        return read_jsonl(fh)


def summarize(records: Iterable[DatasetRecord]) -> dict:
    by_type = Counter()
    by_gold = Counter()
    by_depth = Counter()
    by_template = Counter()
    unreachable = 0
    total = 0
    for record in records:
        total += 1
        by_type[record.question.qtype.value] += 1
        if record.question.qtype is QuestionType.YN:
            by_gold['yes' if record.gold.yes else 'no'] += 1
        else:
            by_gold['fr_empty' if not record.gold.relations else 'fr_nonempty'] += 1
        by_depth[str(record.k)] += 1
        for c in record.constraints.constraints:
            by_template[c.template.value] += 1
        unreachable += int(record.depth_unreachable)
    return {
        'records': total,
        'question_type': dict(sorted(by_type.items())),
        'gold': dict(sorted(by_gold.items())),
        'depth': {k: by_depth[k] for k in sorted(by_depth, key=int)},
        'templates': dict(sorted(by_template.items())),
        'depth_unreachable': unreachable,
    }
