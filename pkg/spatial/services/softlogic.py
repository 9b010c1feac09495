"""
Evaluación difusa de LogicExpr con la t-norma producto.

    ¬a      -> 1 - a
    a ∧ b   -> a·b
    a ∨ b   -> a + b - a·b   (plegado a izquierda para n-arios)
    a ⇒ b   -> 1 si a <= b, si no b / a   (residuo del producto)

Gradientes exactos por regla de la cadena. En el quiebre a == b > 0 del
implica se usa la rama "else" (∂b = 1/a, ∂a = -b/a²); con a == b == 0 el
gradiente es 0.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

from spatial.exceptions import KinkPoint, MissingVariable, ProbabilityOutOfRange, SchemaError
from spatial.services.constraints import And, Implies, LogicExpr, Not, Or, Var

logger = logging.getLogger(__name__)

NEG_LOG_EPS = 1e-6


class Semantics(str, Enum):
    PRODUCT = 'product'


class ViolationForm(str, Enum):
    ONE_MINUS = 'one_minus'
    NEG_LOG = 'neg_log'


@dataclass(frozen=True)
class SoftEval:
    value: float
    violation: float
    grad: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            'value': self.value,
            'violation': self.violation,
            'grad': {k: self.grad[k] for k in sorted(self.grad)},
        }


def check_probs(expr: LogicExpr, probs: dict) -> None:
    for var in expr.variables():
        if var not in probs:
            raise MissingVariable(f"falta la probabilidad de '{var}'")
        p = probs[var]
        if not isinstance(p, (int, float)) or not math.isfinite(p) or p < 0.0 or p > 1.0:
            raise ProbabilityOutOfRange(f"probabilidad de '{var}' fuera de [0, 1]: {p!r}")


def _add(acc: dict, grad: dict, scale: float) -> None:
    if scale == 0.0:
        return
    for k, g in grad.items():
        acc[k] = acc.get(k, 0.0) + scale * g


def _eval(expr: LogicExpr, probs: dict, kinks: list):
    """(valor, gradiente parcial) del nodo; `kinks` acumula v(a) - v(b) de cada ⇒."""
    if isinstance(expr, Var):
        return float(probs[expr.id]), {expr.id: 1.0}

    if isinstance(expr, Not):
        v, g = _eval(expr.arg, probs, kinks)
        out = {}
        _add(out, g, -1.0)
        return 1.0 - v, out

    if isinstance(expr, (And, Or)):
        parts = [_eval(a, probs, kinks) for a in expr.args]
        # Or trabaja sobre los complementos: ∂/∂v_i = ∏_{j≠i} (1 - v_j)
        factors = [v if isinstance(expr, And) else 1.0 - v for v, _ in parts]
        n = len(factors)
        prefix = [1.0] * (n + 1)
        suffix = [1.0] * (n + 1)
        for i in range(n):
            prefix[i + 1] = prefix[i] * factors[i]
        for i in range(n - 1, -1, -1):
            suffix[i] = suffix[i + 1] * factors[i]
        if isinstance(expr, And):
            value = parts[0][0]
            for v, _ in parts[1:]:
                value = value * v
        else:
            value = parts[0][0]
            for v, _ in parts[1:]:
                value = value + v - value * v
        out = {}
        for i, (_, g) in enumerate(parts):
            _add(out, g, prefix[i] * suffix[i + 1])
        return value, out

    if isinstance(expr, Implies):
        va, ga = _eval(expr.antecedent, probs, kinks)
        vb, gb = _eval(expr.consequent, probs, kinks)
        kinks.append(va - vb)
        out = {}
        if va < vb or (va == vb and va == 0.0):
            return 1.0, out
        _add(out, gb, 1.0 / va)
        _add(out, ga, -vb / (va * va))
        if va == vb:
            return 1.0, out
        return vb / va, out

    raise SchemaError(f"nodo desconocido {expr!r}")


def eval_product(expr: LogicExpr, probs: dict, semantics: Semantics = Semantics.PRODUCT) -> SoftEval:
    if semantics is not Semantics.PRODUCT:
        raise SchemaError(f"semántica no soportada: {semantics}")
    check_probs(expr, probs)
    value, grad = _eval(expr, probs, [])
    value = min(1.0, max(0.0, value))
    full = {var: grad.get(var, 0.0) for var in expr.variables()}
    return SoftEval(value, 1.0 - value, full)


def violation(expr: LogicExpr, probs: dict, form: ViolationForm = ViolationForm.ONE_MINUS) -> float:
    return penalty(expr, probs, form)[0]


def penalty(expr: LogicExpr, probs: dict, form: ViolationForm = ViolationForm.ONE_MINUS):
    """h_k y su gradiente respecto de cada probabilidad."""
    result = eval_product(expr, probs)
    if ViolationForm(form) is ViolationForm.ONE_MINUS:
        return result.violation, {k: -g for k, g in result.grad.items()}
    denom = result.value + NEG_LOG_EPS
    return -math.log(denom), {k: -g / denom for k, g in result.grad.items()}


def implies_gaps(expr: LogicExpr, probs: dict) -> list:
    check_probs(expr, probs)
    gaps = []
    _eval(expr, probs, gaps)
    return gaps


def grad_check(expr: LogicExpr, probs: dict, step: float = 1e-6) -> float:
    """Máximo error relativo entre el gradiente analítico y diferencias centrales."""
    gaps = implies_gaps(expr, probs)
    if any(abs(gap) <= 10 * step for gap in gaps):
        raise KinkPoint(f"un implica está a menos de {10 * step:g} de su quiebre")
    branches = [gap > 0 for gap in gaps]
    variables = expr.variables()
    for var in variables:
        if probs[var] - step < 0.0 or probs[var] + step > 1.0:
            raise ProbabilityOutOfRange(f"'{var}' demasiado cerca del borde de [0, 1] para el paso {step:g}")

    analytic = eval_product(expr, probs).grad
    worst = 0.0
    for var in variables:
        values = []
        for delta in (step, -step):
            shifted = dict(probs)
            shifted[var] = probs[var] + delta
            shifted_gaps = []
            values.append(_eval(expr, shifted, shifted_gaps)[0])
            # la perturbación no puede cruzar el quiebre de ningún implica
            if [gap > 0 for gap in shifted_gaps] != branches:
                raise KinkPoint(f"perturbar '{var}' cruza el quiebre de un implica")
        numeric = (values[0] - values[1]) / (2 * step)
        a = analytic[var]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-3)
        worst = max(worst, err)
    logger.debug("grad_check: %d variables, error máximo %.3e", len(variables), worst)
    return worst


def eval_batch(exprs, probs: dict) -> list:
    return [eval_product(e, probs) for e in exprs]


def random_expr(rng, variables, depth: int = 3) -> LogicExpr:
    """Expresión al azar sobre `variables` con profundidad <= depth."""
    if depth <= 0 or rng.random() < 0.25:
        return Var(variables[int(rng.integers(len(variables)))])
    op = int(rng.integers(4))
    if op == 0:
        return Not(random_expr(rng, variables, depth - 1))
    if op == 3:
        return Implies(random_expr(rng, variables, depth - 1), random_expr(rng, variables, depth - 1))
    args = tuple(random_expr(rng, variables, depth - 1) for _ in range(int(rng.integers(2, 4))))
    return And(args) if op == 1 else Or(args)
