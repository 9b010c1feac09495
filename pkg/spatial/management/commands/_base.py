"""
Base común de los comandos del CLI.

Códigos de salida: 0 éxito, 1 error en tiempo de ejecución, 2 uso o
esquema inválido (incluye archivos de entrada ilegibles). Los datos van a
stdout (o a --out); los diagnósticos a stderr.
"""
import json
import logging

from django.core.management.base import BaseCommand, CommandError

from spatial.api.serializers import (
    ConstraintSetSerializer,
    QuestionListSerializer,
    SceneSerializer,
    validate_document,
)
from spatial.exceptions import SchemaError, SpatialError
from spatial.services.constraints import ALL_TEMPLATES, Template
from spatial.services.rule_kb import resolve_kb
from spatial.services.spatial_core import parse_fact

logger = logging.getLogger('spatial.cli')

EXIT_RUNTIME = 1
EXIT_USAGE = 2


class SpatialCommand(BaseCommand):
    requires_system_checks = []

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except SchemaError as exc:
            raise CommandError(str(exc), returncode=EXIT_USAGE) from exc
        except OSError as exc:
            raise CommandError(f"no se pudo leer/escribir {exc.filename or ''}: {exc.strerror or exc}",
                               returncode=EXIT_USAGE) from exc
        except SpatialError as exc:
            raise CommandError(str(exc), returncode=EXIT_RUNTIME) from exc

    # --- argumentos comunes ---

    def add_kb_argument(self, parser):
        parser.add_argument('--kb', help='Archivo de reglas JSON (por defecto SPATIAL_KB_PATH o la KB incorporada).')

    def add_scene_argument(self, parser, required=True):
        parser.add_argument('--scene', required=required, help='Escena JSON {entities, facts}.')

    def add_out_argument(self, parser):
        parser.add_argument('--out', help='Archivo de salida (por defecto stdout).')

    def add_format_argument(self, parser, choices=('json', 'text'), default='json'):
        parser.add_argument('--format', choices=choices, default=default, dest='fmt',
                            help=f"Formato de salida ({', '.join(choices)}).")

    def add_seed_argument(self, parser):
        parser.add_argument('--seed', type=int, help='Semilla (por defecto SPATIAL_DEFAULT_SEED).')

    def add_templates_argument(self, parser):
        parser.add_argument(
            '--include-templates', dest='templates',
            help='Plantillas separadas por coma: ' + ','.join(t.value for t in Template),
        )

    # --- entrada ---

    def read_json(self, path, what='documento'):
        with open(path, encoding='utf-8') as fh:
            try:
                return json.load(fh)
            except ValueError as exc:
                raise SchemaError(f"{what} inválido en {path}: {exc}") from exc

    def load_scene(self, path):
        return validate_document(SceneSerializer, self.read_json(path, 'escena'), 'escena')

    def load_questions(self, path):
        data = self.read_json(path, 'preguntas')
        if isinstance(data, list):
            data = {'questions': data}
        return validate_document(QuestionListSerializer, data, 'lista de preguntas')

    def load_constraints(self, path):
        return validate_document(ConstraintSetSerializer, self.read_json(path, 'restricciones'),
                                 'conjunto de restricciones')

    def load_kb(self, options):
        return resolve_kb(options.get('kb') or None)

    def parse_target(self, text, scene=None):
        fact = parse_fact(text)
        if scene is not None:
            scene.require_entities(fact.subj, fact.obj)
        return fact

    def templates(self, options, default=ALL_TEMPLATES):
        text = options.get('templates')
        if text is None:
            return default
        return Template.parse_list(text)

    # --- salida ---

    def emit_text(self, text, options):
        path = options.get('out')
        if path:
            with open(path, 'w', encoding='utf-8') as fh:
                fh.write(text if text.endswith('\n') else text + '\n')
            logger.info("salida escrita en %s", path)
        else:
            self.stdout.write(text)

    def emit_json(self, data, options):
        self.emit_text(json.dumps(data, indent=2, ensure_ascii=False), options)

    def emit_json_lines(self, rows, options):
        """Un objeto JSON compacto por línea."""
        lines = [json.dumps(row, ensure_ascii=False) for row in rows]
        if lines:
            self.emit_text('\n'.join(lines), options)
