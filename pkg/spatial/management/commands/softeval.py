import json
import logging

from spatial.api.serializers import ProbsSerializer, validate_document
from spatial.exceptions import SchemaError
from spatial.management.commands._base import SpatialCommand
from spatial.services.constraints import expr_from_sexpr
from spatial.services.softlogic import ViolationForm, eval_product, violation

logger = logging.getLogger(__name__)


class Command(SpatialCommand):
    help = 'Evalúa restricciones con la t-norma producto: valor, violación y gradiente (una línea JSON por restricción).'

    def add_arguments(self, parser):
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument('--constraints', help='ConstraintSet JSON.')
        source.add_argument('--expr', help='Expresión como S-expresión JSON, p. ej. \'["=>", ["var","a"], ["var","b"]]\'.')
        parser.add_argument('--probs', required=True, help='Probabilidades JSON {"probs": {id: p}} o {id: p}.')
        parser.add_argument('--form', choices=[f.value for f in ViolationForm], default=ViolationForm.ONE_MINUS.value)
        self.add_out_argument(parser)

    def handle(self, *args, **options):
        data = self.read_json(options['probs'], 'probabilidades')
        if isinstance(data, dict) and 'probs' not in data:
            data = {'probs': data}
        probs = validate_document(ProbsSerializer, data, 'probabilidades')
        form = ViolationForm(options['form'])

        if options['expr']:
            try:
                expr = expr_from_sexpr(json.loads(options['expr']))
            except ValueError as exc:
                raise SchemaError(f"--expr no es JSON válido: {exc}") from exc
            self.emit_json_lines([self._row(None, None, expr, probs, form)], options)
            return

        cs = self.load_constraints(options['constraints'])
        rows = [self._row(c.id, c.template.value, c.expr, probs, form) for c in cs.constraints]
        logger.info("%d restricciones, violación total %.6f", len(rows), sum(r['violation'] for r in rows))
        self.emit_json_lines(rows, options)

    def _row(self, cid, template, expr, probs, form):
        result = eval_product(expr, probs)
        row = result.to_json()
        row['violation'] = violation(expr, probs, form)
        row['form'] = form.value
        if cid is not None:
            row['id'] = cid
            row['template'] = template
        return row
