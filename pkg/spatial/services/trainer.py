"""
Entrenamiento con restricciones sobre un clasificador lineal de juguete.

    L(w) = Σ_i CE(p_i, oro_i) + Σ_k λ_k · h_k(p)

p_i = sigmoid(W[fila_i] · φ_i). Una fila para YN y una por relación para las
etiquetas FR. φ junta dos bolsas hasheadas (blake2b de 64 bits con salt
fijo), cada una normalizada por separado: los unigramas y bigramas del texto
de la pregunta y de las oraciones de la historia que mencionan sus entidades,
y los tokens de rol, que cruzan la relación preguntada con la relación de
cada hecho de la historia y el lugar que ocupan en él las dos entidades.

Por defecto la entropía cruzada sólo mira la pregunta principal de cada
registro; las preguntas auxiliares de la Q-Chain entran únicamente a través
de las restricciones (`supervision='all'` supervisa todas las variables).

Las restricciones se aplican por ejemplo dentro de cada lote. Con λ_k = 0 la
plantilla ni siquiera se evalúa, así que entrenar con λ = 0 es idéntico a
entrenar sin restricciones.
"""
import hashlib
import json
import logging
import math
import re
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from spatial.exceptions import ConfigError, NonFiniteLoss, SchemaError
from spatial.services.constraints import ALL_TEMPLATES, Template, evaluate_boolean
from spatial.services.render import render_question, story_lines
from spatial.services.softlogic import ViolationForm, penalty
from spatial.services.spatial_core import ALL_RELATIONS, QuestionType

logger = logging.getLogger(__name__)

LABELS = ('YN',) + tuple(r.value for r in ALL_RELATIONS)
_ROW = {None: 0, **{rel: i for i, rel in enumerate(ALL_RELATIONS, start=1)}}
_TOKEN = re.compile(r'[a-z0-9]+')
# fracción de la norma² de φ que llevan los tokens de rol
ROLE_SHARE = 0.75
SUPERVISION = ('main', 'all')


# -------------------------
# Features
# -------------------------

def tokenize(text: str) -> list:
    words = _TOKEN.findall(text.lower())
    return words + [f"{a}_{b}" for a, b in zip(words, words[1:])]


def _bucket(token: str, dim: int, salt: bytes) -> int:
    digest = hashlib.blake2b(token.encode('utf-8'), digest_size=8, salt=salt).digest()
    return int.from_bytes(digest, 'little') % dim


def _bag(tokens, dim: int, salt: bytes) -> dict:
    counts = {}
    for token in tokens:
        idx = _bucket(token, dim, salt)
        counts[idx] = counts.get(idx, 0.0) + 1.0
    return counts


def featurize(text: str, dim: int, feature_seed: int = 0, roles=()):
    """(índices, valores) de φ, de norma 1 salvo colisiones entre las dos bolsas."""
    salt = int(feature_seed).to_bytes(16, 'little', signed=False)
    parts = [(b, s) for b, s in ((_bag(tokenize(text), dim, salt), 1.0 - ROLE_SHARE),
                                 (_bag(roles, dim, salt), ROLE_SHARE)) if b]
    if not parts:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    total = sum(share for _, share in parts)
    merged = {}
    for counts, share in parts:
        norm = math.sqrt(sum(v * v for v in counts.values()))
        scale = math.sqrt(share / total) / norm
        for i, v in counts.items():
            merged[i] = merged.get(i, 0.0) + v * scale
    idx = np.array(sorted(merged), dtype=np.int64)
    return idx, np.array([merged[i] for i in idx])


def _role(ent: str, fact) -> str:
    if fact.subj == ent:
        return 's'
    return 'o' if fact.obj == ent else '-'


def role_tokens(question, scene) -> list:
    """`rel:<r>` y un token <r>|<r'>|<rol_sujeto><rol_objeto> por hecho que toca el par.

    Para FR la relación preguntada es 'fr'. Los ids de las entidades no
    aparecen, así que la misma estructura se comparte entre escenas.
    """
    subj, obj = question.entities
    asked = question.fact.rel.value if question.qtype is QuestionType.YN else 'fr'
    tokens = [f"rel:{asked}"]
    for fact in scene.sorted_facts():
        pattern = _role(subj, fact) + _role(obj, fact)
        if pattern != '--':
            tokens.append(f"{asked}|{fact.rel.value}|{pattern}")
    return tokens


def question_text(question, scene) -> str:
    lines = [render_question(question, scene)]
    lines.extend(story_lines(scene, about=question.entities))
    return ' '.join(lines)


@dataclass
class EncodedRecord:
    """Filas, features y oro de cada variable del ConstraintSet de un registro.

    `main` marca con 1.0 las variables de la pregunta principal.
    """
    record: object
    ids: tuple
    rows: np.ndarray
    features: list
    gold: np.ndarray
    main: np.ndarray


def encode(record, dim: int, feature_seed: int = 0) -> EncodedRecord:
    cache = {}
    main = set(record.main_ids)
    ids, rows, feats, gold, mask = [], [], [], [], []
    for entry in record.constraints.questions:
        key = entry.question.id
        if key not in cache:
            question = entry.question
            cache[key] = featurize(question_text(question, record.scene), dim, feature_seed,
                                   role_tokens(question, record.scene))
        ids.append(entry.id)
        rows.append(_ROW[entry.label])
        feats.append(cache[key])
        gold.append(1.0 if entry.gold else 0.0)
        mask.append(1.0 if entry.id in main else 0.0)
    return EncodedRecord(record, tuple(ids), np.array(rows, dtype=np.int64), feats,
                         np.array(gold), np.array(mask))


# -------------------------
# Modelo
# -------------------------

class ToyModel:
    def __init__(self, weights: np.ndarray, seed: int = 0, feature_seed: int = 0):
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 2 or weights.shape[0] != len(LABELS):
            raise SchemaError(f"se esperaban {len(LABELS)} filas de pesos, no {weights.shape}")
        if not np.all(np.isfinite(weights)):
            raise SchemaError('pesos no finitos')
        self.weights = weights
        self.seed = seed
        self.feature_seed = feature_seed

    @classmethod
    def initial(cls, dim: int, seed: int = 0, feature_seed: int = 0) -> 'ToyModel':
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, 0.01, size=(len(LABELS), dim)), seed, feature_seed)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> 'ToyModel':
        return ToyModel(self.weights.copy(), self.seed, self.feature_seed)

    def encode(self, record) -> EncodedRecord:
        return encode(record, self.dim, self.feature_seed)

    def logits(self, enc: EncodedRecord) -> np.ndarray:
        return np.array([
            float(self.weights[row, idx] @ val) for row, (idx, val) in zip(enc.rows, enc.features)
        ])

    def predict_probs(self, record, enc: Optional[EncodedRecord] = None) -> dict:
        enc = enc if enc is not None else self.encode(record)
        probs = _sigmoid(self.logits(enc))
        return dict(zip(enc.ids, (float(p) for p in probs)))

    def to_json(self) -> dict:
        return {
            'dim': self.dim,
            'seed': self.seed,
            'feature_seed': self.feature_seed,
            'labels': list(LABELS),
            'weights': [[float(w) for w in row] for row in self.weights],
        }

    @classmethod
    def from_json(cls, data) -> 'ToyModel':
        from spatial.api.serializers import ToyModelSerializer, validate_document

        attrs = validate_document(ToyModelSerializer, data, 'modelo')
        if tuple(attrs['labels']) != LABELS:
            raise SchemaError('las etiquetas del modelo no coinciden con el vocabulario')
        return cls(np.array(attrs['weights'], dtype=float), attrs['seed'], attrs['feature_seed'])

    def save(self, path) -> None:
        with open(path, 'w', encoding='utf-8') as fh:
            json.dump(self.to_json(), fh)
            fh.write('\n')

    @classmethod
    def load(cls, path) -> 'ToyModel':
        with open(path, encoding='utf-8') as fh:
            try:
                data = json.load(fh)
            except ValueError as exc:
                raise SchemaError(f"modelo inválido en {path}: {exc}") from exc
        return cls.from_json(data)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


# -------------------------
# Configuración
# -------------------------

@dataclass(frozen=True)
class TrainConfig:
    lambdas: dict = field(default_factory=lambda: {t: 1.0 for t in Template})
    lr: float = 0.5
    epochs: int = 20
    seed: int = 0
    dual_enabled: bool = False
    dual_lr: float = 0.1
    violation_form: ViolationForm = ViolationForm.ONE_MINUS
    batch_size: int = 0
    l2: float = 0.0
    constraint_warmup_epochs: int = 0
    feature_dim: int = 4096
    feature_seed: int = 0
    templates: frozenset = ALL_TEMPLATES
    supervision: str = 'main'

    def __post_init__(self):
        if self.supervision not in SUPERVISION:
            raise ConfigError(f"supervisión desconocida '{self.supervision}'")
        if self.lr <= 0:
            raise ConfigError('lr debe ser > 0')
        if self.epochs < 1:
            raise ConfigError('epochs debe ser >= 1')
        if any(w < 0 for w in self.lambdas.values()):
            raise ConfigError('λ debe ser >= 0')
        if self.feature_dim < 1:
            raise ConfigError('feature_dim debe ser >= 1')
        if self.batch_size < 0 or self.l2 < 0 or self.dual_lr < 0:
            raise ConfigError('batch_size, l2 y dual_lr no pueden ser negativos')

    def weight(self, template: Template) -> float:
        if template not in self.templates:
            return 0.0
        return float(self.lambdas.get(template, 0.0))

    def with_lambda(self, value: float) -> 'TrainConfig':
        return replace(self, lambdas={t: float(value) for t in Template})

    @classmethod
    def from_json(cls, data, seed: Optional[int] = None) -> 'TrainConfig':
        from django.conf import settings
        from spatial.api.serializers import TrainConfigSerializer, validate_document

        attrs = validate_document(TrainConfigSerializer, data or {}, 'configuración de entrenamiento')
        if seed is not None:
            attrs['seed'] = seed
        return cls(
            lambdas={Template(k): v for k, v in attrs['lambda'].items()},
            lr=attrs['lr'],
            epochs=attrs['epochs'],
            seed=attrs['seed'] if attrs['seed'] is not None else settings.SPATIAL_DEFAULT_SEED,
            dual_enabled=attrs['dual_enabled'],
            dual_lr=attrs['dual_lr'],
            violation_form=ViolationForm(attrs['violation_form']),
            batch_size=attrs['batch_size'],
            l2=attrs['l2'],
            constraint_warmup_epochs=attrs['constraint_warmup_epochs'],
            feature_dim=attrs['feature_dim'] or settings.SPATIAL_FEATURE_DIM,
            feature_seed=settings.SPATIAL_FEATURE_SEED,
            templates=frozenset(Template(t) for t in attrs['templates']),
            supervision=attrs['supervision'],
        )

    def to_json(self) -> dict:
        return {
            'lambda': {t.value: self.lambdas.get(t, 0.0) for t in Template},
            'lr': self.lr,
            'epochs': self.epochs,
            'seed': self.seed,
            'dual_enabled': self.dual_enabled,
            'dual_lr': self.dual_lr,
            'violation_form': ViolationForm(self.violation_form).value,
            'batch_size': self.batch_size,
            'l2': self.l2,
            'constraint_warmup_epochs': self.constraint_warmup_epochs,
            'feature_dim': self.feature_dim,
            'templates': sorted(t.value for t in self.templates),
            'supervision': self.supervision,
        }


# -------------------------
# Pérdida
# -------------------------

@dataclass
class LossTerms:
    task: float
    constraint: float
    grad: np.ndarray
    violations: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.task + self.constraint


def loss_terms(model: ToyModel, enc: EncodedRecord, lambdas, form=ViolationForm.ONE_MINUS,
               active: bool = True, supervision: str = 'main') -> LossTerms:
    """Pérdida de un ejemplo y su gradiente respecto de los pesos.

    `lambdas` es una función plantilla -> peso; las plantillas con peso 0
    se omiten. `violations` junta los h_k evaluados por plantilla. Con
    supervision='main' la entropía cruzada sólo cubre la pregunta principal.
    """
    z = model.logits(enc)
    p = _sigmoid(z)
    y = enc.gold
    mask = enc.main if supervision == 'main' else np.ones_like(y)
    task = float(np.sum(mask * (np.logaddexp(0.0, z) - y * z)))
    dz = mask * (p - y)

    constraint = 0.0
    violations = {}
    if active and enc.record.constraints.constraints:
        probs = dict(zip(enc.ids, (float(v) for v in p)))
        position = {qid: i for i, qid in enumerate(enc.ids)}
        dp = np.zeros_like(p)
        touched = False
        for c in enc.record.constraints.constraints:
            weight = lambdas(c.template)
            if weight is None:
                continue
            h, grad_h = penalty(c.expr, probs, form)
            violations.setdefault(c.template, []).append(h)
            if weight == 0.0:
                continue
            touched = True
            constraint += weight * h
            for qid, g in grad_h.items():
                dp[position[qid]] += weight * g
        if touched:
            dz = dz + dp * p * (1.0 - p)

    grad = np.zeros_like(model.weights)
    for i, (row, (idx, val)) in enumerate(zip(enc.rows, enc.features)):
        if dz[i] != 0.0 and len(idx):
            np.add.at(grad[row], idx, dz[i] * val)
    return LossTerms(task, constraint, grad, violations)


def combined_loss(model: ToyModel, record, lambdas=1.0, form=ViolationForm.ONE_MINUS,
                  supervision: str = 'main'):
    """(pérdida, gradiente) de un registro. `lambdas`: número o {plantilla: peso}."""
    if isinstance(lambdas, dict):
        weights = {Template(k): float(v) for k, v in lambdas.items()}

        def lookup(template):
            return weights.get(template, 0.0) or None
    else:
        value = float(lambdas)

        def lookup(template):
            return value or None

    terms = loss_terms(model, model.encode(record), lookup, form, supervision=supervision)
    return terms.total, terms.grad


def dual_step(lambdas: dict, mean_violation: dict, dual_lr: float) -> dict:
    """λ_k <- max(0, λ_k + dual_lr · h̄_k)."""
    out = dict(lambdas)
    for template, h in mean_violation.items():
        out[template] = max(0.0, out.get(template, 0.0) + dual_lr * h)
    return out


# -------------------------
# Evaluación
# -------------------------

def evaluate(model, records, encoded=None) -> dict:
    """Exactitud de la pregunta principal y tasa de consistencia (umbral 0.5).

    `per_depth` desglosa ambas por la profundidad k de cada registro.
    """
    main_hits = label_hits = label_total = 0
    satisfied = total = 0
    per_template = {}
    per_depth = {}
    records = list(records)
    for n, record in enumerate(records):
        if encoded is not None:
            probs = model.predict_probs(record, encoded[n])
        else:
            probs = model.predict_probs(record)
        cs = record.constraints
        for entry in cs.questions:
            label_hits += int((probs[entry.id] >= 0.5) == entry.gold)
            label_total += 1
        if record.question.qtype is QuestionType.YN:
            hit = (probs[record.question.id] >= 0.5) == bool(record.gold.yes)
        else:
            predicted = {cs.entry(qid).label for qid in record.main_ids if probs[qid] >= 0.5}
            hit = predicted == set(record.gold.relations)
        main_hits += int(hit)
        depth = per_depth.setdefault(str(record.k), [0, 0, 0, 0])
        depth[0] += int(hit)
        depth[1] += 1
        for c in cs.constraints:
            ok = evaluate_boolean(c.expr, probs)
            bucket = per_template.setdefault(c.template.value, [0, 0])
            bucket[0] += int(ok)
            bucket[1] += 1
            depth[2] += int(ok)
            depth[3] += 1
            satisfied += int(ok)
            total += 1
    return {
        'examples': len(records),
        'accuracy': main_hits / len(records) if records else 0.0,
        'label_accuracy': label_hits / label_total if label_total else 0.0,
        # sin restricciones la consistencia es vacuamente 1
        'consistency_rate': satisfied / total if total else 1.0,
        'constraints': total,
        'per_template': {k: v[0] / v[1] for k, v in sorted(per_template.items())},
        'per_depth': {
            k: {'examples': v[1], 'accuracy': v[0] / v[1], 'consistency_rate': v[2] / v[3] if v[3] else 1.0}
            for k, v in sorted(per_depth.items(), key=lambda item: int(item[0]))
        },
    }


# -------------------------
# Entrenamiento
# -------------------------

@dataclass
class TrainReport:
    seed: int
    epochs: list = field(default_factory=list)
    final: dict = field(default_factory=dict)
    lambdas: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            'seed': self.seed,
            'epochs': self.epochs,
            'final': self.final,
            'lambda': {t.value if isinstance(t, Template) else t: v for t, v in self.lambdas.items()},
        }


def _batches(n: int, batch_size: int, rng):
    if batch_size <= 0 or batch_size >= n:
        return [np.arange(n)]
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def train(records, config: TrainConfig, model: Optional[ToyModel] = None):
    """Descenso por gradiente sobre la pérdida combinada. Devuelve (modelo, reporte)."""
    records = list(records)
    if not records:
        raise SchemaError('el dataset de entrenamiento está vacío')
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = ToyModel(
            rng.normal(0.0, 0.01, size=(len(LABELS), config.feature_dim)),
            config.seed, config.feature_seed,
        )
    else:
        model = model.copy()
    encoded = [model.encode(r) for r in records]
    lambdas = {t: config.weight(t) for t in Template}
    report = TrainReport(config.seed)

    for epoch in range(1, config.epochs + 1):
        active = epoch > config.constraint_warmup_epochs

        def lookup(template):
            weight = lambdas.get(template, 0.0) if template in config.templates else 0.0
            if weight > 0.0:
                return weight
            # con dual activo se mide h_k aunque λ_k sea 0, sin aportar gradiente
            return 0.0 if config.dual_enabled and template in config.templates else None

        task_loss = constraint_loss = 0.0
        seen = {}
        for batch in _batches(len(encoded), config.batch_size, rng):
            grad = np.zeros_like(model.weights)
            for i in batch:
                terms = loss_terms(model, encoded[i], lookup, config.violation_form, active,
                                   supervision=config.supervision)
                task_loss += terms.task
                constraint_loss += terms.constraint
                grad += terms.grad
                for template, hs in terms.violations.items():
                    seen.setdefault(template, []).extend(hs)
            grad /= len(batch)
            if config.l2:
                grad += config.l2 * model.weights
            model.weights -= config.lr * grad

        total = task_loss + constraint_loss
        if not math.isfinite(total) or not np.all(np.isfinite(model.weights)):
            raise NonFiniteLoss(epoch, total)

        if config.dual_enabled and active and seen:
            lambdas = dual_step(lambdas, {t: float(np.mean(hs)) for t, hs in seen.items()}, config.dual_lr)

        metrics = evaluate(model, records, encoded)
        row = {
            'epoch': epoch,
            'task_loss': task_loss / len(records),
            'constraint_loss': constraint_loss / len(records),
            'accuracy': metrics['accuracy'],
            'consistency_rate': metrics['consistency_rate'],
            'lambda': {t.value: lambdas[t] for t in Template},
        }
        report.epochs.append(row)
        logger.info(
            "época %d: task=%.4f constraint=%.4f acc=%.3f consistencia=%.3f",
            epoch, row['task_loss'], row['constraint_loss'], row['accuracy'], row['consistency_rate'],
        )

    report.final = evaluate(model, records, encoded)
    report.lambdas = dict(lambdas)
    return model, report


def split(records, holdout: float, seed: int):
    """(train, held-out) con una permutación fija por semilla."""
    if not 0.0 < holdout < 1.0:
        raise ConfigError('holdout debe estar en (0, 1)')
    records = list(records)
    if len(records) < 2:
        raise ConfigError('se necesitan al menos 2 registros para separar un held-out')
    order = np.random.default_rng(seed).permutation(len(records))
    n_hold = min(len(records) - 1, max(1, int(round(len(records) * holdout))))
    held = [records[i] for i in sorted(order[:n_hold])]
    kept = [records[i] for i in sorted(order[n_hold:])]
    return kept, held


def _mean_per_depth(runs) -> dict:
    depths = sorted({k for r in runs for k in r['per_depth']}, key=int)
    out = {}
    for k in depths:
        rows = [r['per_depth'][k] for r in runs if k in r['per_depth']]
        out[k] = {
            'examples': rows[0]['examples'],
            'accuracy': float(np.mean([row['accuracy'] for row in rows])),
            'consistency_rate': float(np.mean([row['consistency_rate'] for row in rows])),
        }
    return out


def ablation(records, config: TrainConfig, seeds=(0, 1, 2, 3, 4), holdout: float = 0.2) -> dict:
    """λ=1 contra λ=0 sobre los mismos datos; medias de consistencia y exactitud held-out."""
    train_set, held = split(records, holdout, config.seed)
    arms = {'lambda_1': config.with_lambda(1.0), 'lambda_0': config.with_lambda(0.0)}
    result = {'train_examples': len(train_set), 'heldout_examples': len(held), 'seeds': list(seeds)}
    for name, arm in arms.items():
        runs = []
        for seed in seeds:
            model, _ = train(train_set, replace(arm, seed=seed))
            metrics = evaluate(model, held)
            runs.append({'seed': seed, 'accuracy': metrics['accuracy'],
                         'consistency_rate': metrics['consistency_rate'],
                         'per_depth': metrics['per_depth']})
        result[name] = {
            'accuracy': float(np.mean([r['accuracy'] for r in runs])),
            'consistency_rate': float(np.mean([r['consistency_rate'] for r in runs])),
            'per_depth': _mean_per_depth(runs),
            'runs': runs,
        }
    result['delta_consistency'] = result['lambda_1']['consistency_rate'] - result['lambda_0']['consistency_rate']
    result['delta_accuracy'] = result['lambda_1']['accuracy'] - result['lambda_0']['accuracy']
    logger.info("ablation: Δconsistencia=%.3f Δexactitud=%.3f",
                result['delta_consistency'], result['delta_accuracy'])
    return result


# -------------------------
# Reportes
# -------------------------

EPOCH_COLUMNS = ('epoch', 'task_loss', 'constraint_loss', 'accuracy', 'consistency_rate')


def _flatten(data: dict, prefix: str = ''):
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, f"{name}.")
        else:
            yield name, value


def export_report_xlsx(report: TrainReport, path) -> None:
    """Hoja 'epochs' con una fila por época y hoja 'final' con las métricas finales."""
    from openpyxl import Workbook
    from openpyxl.styles import Font

    wb = Workbook()
    sheet = wb.active
    sheet.title = 'epochs'
    templates = [t.value for t in Template]
    header = list(EPOCH_COLUMNS) + [f"lambda_{t}" for t in templates]
    sheet.append(header)
    for cell in sheet[1]:
        cell.font = Font(bold=True)
    for row in report.epochs:
        sheet.append([row[c] for c in EPOCH_COLUMNS] + [row['lambda'][t] for t in templates])

    final = wb.create_sheet('final')
    final.append(['metric', 'value'])
    for cell in final[1]:
        cell.font = Font(bold=True)
    final.append(['seed', report.seed])
    for key, value in _flatten(report.final):
        final.append([key, value])
    wb.save(path)
