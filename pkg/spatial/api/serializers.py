"""
Validación de documentos JSON (escenas, preguntas, reglas, cadenas,
restricciones, probabilidades, configuraciones y modelos).

Cada serializer devuelve el objeto de dominio desde `save()`; los errores se
convierten en SchemaError con `validate_document`.
"""
from rest_framework import serializers

from spatial.exceptions import SchemaError
from spatial.services.constraints import (
    ConstraintSet,
    Constraint,
    QuestionEntry,
    Template,
    expr_from_sexpr,
)
from spatial.services.spatial_core import (
    Entity,
    Fact,
    Question,
    QuestionType,
    Relation,
    Scene,
    parse_fact,
)

RULE_CATEGORIES = ('converse', 'symmetric', 'transitive', 'transitive_topo')
TEMPLATE_CHOICES = tuple(t.value for t in Template)


def _flatten(detail, prefix='') -> str:
    if isinstance(detail, dict):
        parts = []
        for key, value in detail.items():
            label = prefix if key == 'non_field_errors' else (f"{prefix}.{key}" if prefix else str(key))
            parts.append(_flatten(value, label))
        return '; '.join(p for p in parts if p)
    if isinstance(detail, list):
        if all(not isinstance(d, (dict, list)) for d in detail):
            text = ' '.join(str(d) for d in detail)
            return f"{prefix}: {text}" if prefix else text
        return '; '.join(
            _flatten(d, f"{prefix}[{i}]") for i, d in enumerate(detail) if d
        )
    return f"{prefix}: {detail}" if prefix else str(detail)


def first_error(errors, key: str):
    """(índice del primer elemento inválido de `key`, mensaje) o (None, mensaje)."""
    detail = errors.get(key) if isinstance(errors, dict) else None
    if isinstance(detail, list):
        for i, item in enumerate(detail):
            if isinstance(item, dict) and item:
                return i, _flatten(item)
    return None, _flatten(errors)


def validate_document(serializer_class, data, what: str, **kwargs):
    serializer = serializer_class(data=data, **kwargs)
    if not serializer.is_valid():
        raise SchemaError(f"{what} inválido: {_flatten(serializer.errors)}")
    return serializer.save()


def _as_validation_error(exc: SchemaError):
    return serializers.ValidationError(str(exc))


class StrictSerializer(serializers.Serializer):
    """Rechaza claves que el serializer no declara."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({k: ['clave desconocida.'] for k in unknown})
        return super().to_internal_value(data)

    def create(self, validated_data):
        return validated_data


# -------------------------
# Hechos, escenas y preguntas
# -------------------------

class FactField(serializers.Field):
    """Acepta "rel(subj,obj)" o {"rel", "subj", "obj"}."""

    default_error_messages = {
        'invalid': 'se esperaba un hecho como texto "rel(subj,obj)" o un objeto {rel, subj, obj}.',
    }

    def to_internal_value(self, data):
        try:
            if isinstance(data, str):
                return parse_fact(data)
            if isinstance(data, dict) and set(data) == {'rel', 'subj', 'obj'}:
                return Fact(Relation.from_token(str(data['rel'])), str(data['subj']), str(data['obj']))
        except SchemaError as exc:
            raise _as_validation_error(exc)
        self.fail('invalid')

    def to_representation(self, value):
        return value.to_json()


class EntitySerializer(StrictSerializer):
    id = serializers.CharField()
    attrs = serializers.DictField(required=False, default=dict)


class SceneSerializer(StrictSerializer):
    entities = EntitySerializer(many=True)
    facts = serializers.ListField(child=FactField(), default=list)

    def validate(self, attrs):
        try:
            attrs['scene'] = Scene.build(
                (Entity(e['id'], dict(e.get('attrs') or {})) for e in attrs['entities']),
                attrs['facts'],
            )
        except SchemaError as exc:
            raise _as_validation_error(exc)
        return attrs

    def create(self, validated_data):
        return validated_data['scene']


class QuestionSerializer(StrictSerializer):
    id = serializers.CharField(required=False)
    type = serializers.ChoiceField(choices=('YN', 'FR'))
    fact = FactField(required=False)
    subj = serializers.CharField(required=False)
    obj = serializers.CharField(required=False)

    def validate(self, attrs):
        try:
            if attrs['type'] == 'YN':
                if 'fact' not in attrs or 'subj' in attrs or 'obj' in attrs:
                    raise SchemaError('una pregunta YN lleva "fact" y no "subj"/"obj"')
                return {'question': Question.yn(attrs['fact'], id=attrs.get('id'))}
            if 'fact' in attrs or 'subj' not in attrs or 'obj' not in attrs:
                raise SchemaError('una pregunta FR lleva "subj" y "obj" y ningún hecho')
            return {'question': Question.fr(attrs['subj'], attrs['obj'], id=attrs.get('id'))}
        except SchemaError as exc:
            raise _as_validation_error(exc)

    def create(self, validated_data):
        return validated_data['question']


class QuestionListSerializer(StrictSerializer):
    questions = QuestionSerializer(many=True)

    def validate(self, attrs):
        ids = [q['question'].id for q in attrs['questions']]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise serializers.ValidationError(f"ids de pregunta duplicados: {', '.join(dupes)}")
        return attrs

    def create(self, validated_data):
        return [q['question'] for q in validated_data['questions']]


# -------------------------
# Reglas
# -------------------------

class PatternField(serializers.Field):
    """Patrón de regla "rel(x,y)" -> (Relation, 'x', 'y')."""

    def to_internal_value(self, data):
        if not isinstance(data, str):
            raise serializers.ValidationError('se esperaba un patrón "rel(a,b)".')
        try:
            fact = parse_fact(data)
        except SchemaError as exc:
            raise _as_validation_error(exc)
        return (fact.rel, fact.subj, fact.obj)

    def to_representation(self, value):
        rel, a, b = value
        return f"{rel.value}({a},{b})"


class RuleSerializer(StrictSerializer):
    id = serializers.CharField()
    category = serializers.ChoiceField(choices=RULE_CATEGORIES)
    premises = serializers.ListField(child=PatternField(), min_length=1, max_length=3)
    conclusion = PatternField()


class RuleFileSerializer(StrictSerializer):
    rules = RuleSerializer(many=True)


# -------------------------
# Cadenas
# -------------------------

class ChainStepSerializer(StrictSerializer):
    id = serializers.CharField()
    fact = FactField()
    rule = serializers.CharField(required=False, allow_null=True, default=None)
    category = serializers.ChoiceField(choices=RULE_CATEGORIES, required=False, allow_null=True, default=None)
    premises = serializers.ListField(child=serializers.CharField(), default=list)

    def validate(self, attrs):
        if bool(attrs['rule']) != bool(attrs['premises']):
            raise serializers.ValidationError('un paso con regla necesita premisas y una hoja no lleva ninguna.')
        return attrs


class ChainSerializer(StrictSerializer):
    target = FactField()
    steps = ChainStepSerializer(many=True, allow_empty=False)


# -------------------------
# Restricciones y probabilidades
# -------------------------

class ExprField(serializers.Field):
    def to_internal_value(self, data):
        try:
            return expr_from_sexpr(data)
        except SchemaError as exc:
            raise _as_validation_error(exc)

    def to_representation(self, value):
        return value.to_sexpr()


class QuestionEntrySerializer(StrictSerializer):
    id = serializers.CharField()
    type = serializers.ChoiceField(choices=('YN', 'FR'), default='YN')
    fact = FactField(required=False)
    subj = serializers.CharField(required=False)
    obj = serializers.CharField(required=False)
    question = serializers.CharField(required=False)
    label = serializers.CharField(required=False)
    gold = serializers.ChoiceField(choices=('yes', 'no'))

    def validate(self, attrs):
        gold = attrs['gold'] == 'yes'
        try:
            if attrs['type'] == 'YN':
                if 'fact' not in attrs:
                    raise SchemaError(f"la pregunta '{attrs['id']}' no tiene hecho")
                question = Question(attrs['id'], QuestionType.YN, fact=attrs['fact'])
                return {'entry': QuestionEntry(attrs['id'], question, gold)}
            if 'subj' not in attrs or 'obj' not in attrs or 'label' not in attrs:
                raise SchemaError(f"la etiqueta FR '{attrs['id']}' necesita subj, obj y label")
            question = Question(attrs.get('question', attrs['id']), QuestionType.FR,
                                pair=(attrs['subj'], attrs['obj']))
            label = Relation.from_token(attrs['label'])
        except SchemaError as exc:
            raise _as_validation_error(exc)
        return {'entry': QuestionEntry(attrs['id'], question, gold, label)}


class ConstraintSerializer(StrictSerializer):
    id = serializers.CharField()
    template = serializers.ChoiceField(choices=TEMPLATE_CHOICES)
    expr = ExprField()


class ConstraintSetSerializer(StrictSerializer):
    questions = QuestionEntrySerializer(many=True)
    constraints = ConstraintSerializer(many=True, default=list)

    def validate(self, attrs):
        try:
            attrs['constraint_set'] = ConstraintSet(
                (q['entry'] for q in attrs['questions']),
                (Constraint(c['id'], c['expr'], Template(c['template'])) for c in attrs['constraints']),
            )
        except SchemaError as exc:
            raise _as_validation_error(exc)
        return attrs

    def create(self, validated_data):
        return validated_data['constraint_set']


class ProbsSerializer(StrictSerializer):
    probs = serializers.DictField(child=serializers.FloatField(), allow_empty=False)

    def create(self, validated_data):
        return dict(validated_data['probs'])


# -------------------------
# Configuraciones y modelo
# -------------------------

class TemplateListField(serializers.ListField):
    child = serializers.ChoiceField(choices=TEMPLATE_CHOICES)

    def to_internal_value(self, data):
        if isinstance(data, str):
            try:
                return sorted(t.value for t in Template.parse_list(data))
            except SchemaError as exc:
                raise _as_validation_error(exc)
        return sorted(set(super().to_internal_value(data)))


class GenConfigSerializer(StrictSerializer):
    n_entities = serializers.IntegerField(min_value=2, max_value=64, default=6)
    n_blocks = serializers.IntegerField(min_value=0, max_value=8, default=0)
    k_target = serializers.IntegerField(min_value=1, max_value=10, default=2)
    reveal_policy = serializers.ChoiceField(choices=('tree', 'all'), default='tree')
    seed = serializers.IntegerField(min_value=0, required=False, allow_null=True, default=None)
    question_mix = serializers.FloatField(min_value=0.0, max_value=1.0, default=1.0)
    negative_ratio = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.5)
    n_scenes = serializers.IntegerField(min_value=1, default=1)
    questions_per_scene = serializers.IntegerField(min_value=1, default=2)
    distractors = serializers.IntegerField(min_value=0, default=2)
    templates = TemplateListField(required=False, default=lambda: sorted(TEMPLATE_CHOICES))
    exact_mode = serializers.ChoiceField(choices=('exclusion', 'exactly_one'), default='exclusion')


class LambdaField(serializers.Field):
    """Un número para todas las plantillas o {plantilla: peso}."""

    def to_internal_value(self, data):
        if isinstance(data, bool):
            raise serializers.ValidationError('se esperaba un número o un objeto.')
        if isinstance(data, (int, float)):
            weights = {t: float(data) for t in TEMPLATE_CHOICES}
        elif isinstance(data, dict):
            unknown = sorted(set(data) - set(TEMPLATE_CHOICES))
            if unknown:
                raise serializers.ValidationError(f"plantillas desconocidas: {', '.join(unknown)}")
            weights = {t: 1.0 for t in TEMPLATE_CHOICES}
            try:
                weights.update({k: float(v) for k, v in data.items()})
            except (TypeError, ValueError):
                raise serializers.ValidationError('los pesos deben ser números.')
        else:
            raise serializers.ValidationError('se esperaba un número o un objeto.')
        if any(w < 0 for w in weights.values()):
            raise serializers.ValidationError('λ debe ser >= 0.')
        return weights

    def to_representation(self, value):
        return dict(value)


class TrainConfigSerializer(StrictSerializer):
    lr = serializers.FloatField(default=0.5)
    epochs = serializers.IntegerField(min_value=1, default=20)
    seed = serializers.IntegerField(min_value=0, required=False, allow_null=True, default=None)
    dual_enabled = serializers.BooleanField(default=False)
    dual_lr = serializers.FloatField(min_value=0.0, default=0.1)
    violation_form = serializers.ChoiceField(choices=('one_minus', 'neg_log'), default='one_minus')
    batch_size = serializers.IntegerField(min_value=0, default=0)
    l2 = serializers.FloatField(min_value=0.0, default=0.0)
    constraint_warmup_epochs = serializers.IntegerField(min_value=0, default=0)
    feature_dim = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    templates = TemplateListField(required=False, default=lambda: sorted(TEMPLATE_CHOICES))
    supervision = serializers.ChoiceField(choices=('main', 'all'), default='main')

    def get_fields(self):
        fields = super().get_fields()
        # "lambda" es palabra reservada: se declara aquí
        fields['lambda'] = LambdaField(required=False, default=1.0)
        return fields

    def validate_lr(self, value):
        if value <= 0:
            raise serializers.ValidationError('lr debe ser > 0.')
        return value

    def validate(self, attrs):
        weights = attrs.get('lambda', 1.0)
        if not isinstance(weights, dict):
            weights = LambdaField().to_internal_value(weights)
        attrs['lambda'] = weights
        return attrs


class ToyModelSerializer(StrictSerializer):
    dim = serializers.IntegerField(min_value=1)
    seed = serializers.IntegerField()
    feature_seed = serializers.IntegerField(default=0)
    labels = serializers.ListField(child=serializers.CharField(), allow_empty=False)
    weights = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))

    def validate(self, attrs):
        if len(attrs['weights']) != len(attrs['labels']):
            raise serializers.ValidationError('hay una fila de pesos por etiqueta.')
        if any(len(row) != attrs['dim'] for row in attrs['weights']):
            raise serializers.ValidationError(f"cada fila de pesos debe tener {attrs['dim']} valores.")
        return attrs


class DatasetRecordSerializer(StrictSerializer):
    id = serializers.CharField(required=False)
    scene = serializers.DictField()
    question = serializers.DictField()
    gold = serializers.JSONField()
    chain = serializers.DictField(required=False, allow_null=True, default=None)
    k = serializers.IntegerField(min_value=0)
    constraints = serializers.DictField()
    depth_unreachable = serializers.BooleanField(default=False)
    story = serializers.ListField(child=serializers.CharField(), required=False)
