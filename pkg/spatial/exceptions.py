"""Jerarquía de errores del paquete `spatial`.

Dos ramas:
 - SchemaError: la entrada no cumple el formato o los invariantes (el CLI
   responde con código de salida 2).
 - El resto de SpatialError: fallos en tiempo de ejecución (código 1).
"""


class SpatialError(Exception):
    """Base de todos los errores del dominio."""


class SchemaError(SpatialError):
    """Documento o valor de entrada inválido."""


# --- spatial_core ---

class FactParseError(SchemaError):
    """Error de parseo de un hecho `rel(subj,obj)`; conserva la posición."""

    def __init__(self, message, text='', position=0):
        self.text = text
        self.position = position
        super().__init__(f"{message} (posición {position}: {text!r})")


class UnknownRelation(FactParseError):
    pass


class MalformedFact(FactParseError):
    pass


class ReflexiveFact(FactParseError):
    pass


class UnknownEntity(SchemaError):
    pass


# --- rule_kb ---

class KBSchemaError(SchemaError):
    def __init__(self, message, rule_index=None):
        self.rule_index = rule_index
        prefix = f"regla #{rule_index}: " if rule_index is not None else ''
        super().__init__(prefix + message)


class UnsafeRule(KBSchemaError):
    def __init__(self, rule_id, variable, rule_index=None):
        self.rule_id = rule_id
        self.variable = variable
        super().__init__(
            f"la regla '{rule_id}' concluye sobre la variable '{variable}' que no aparece en ninguna premisa",
            rule_index=rule_index,
        )


# --- inference ---

class ResourceLimit(SpatialError):
    pass


# --- constraints / softlogic ---

class NotAnOppositePair(SchemaError):
    pass


class MissingVariable(SchemaError):
    pass


class ProbabilityOutOfRange(SchemaError):
    pass


class KinkPoint(SpatialError):
    pass


# --- trainer ---

class NonFiniteLoss(SpatialError):
    def __init__(self, epoch, value):
        self.epoch = epoch
        self.value = value
        super().__init__(f"pérdida no finita ({value}) en la época {epoch}")


# --- scenegen / render ---

class ConfigError(SchemaError):
    pass


class UnsupportedSymbol(SchemaError):
    pass


class DepthUnreachable(UserWarning):
    """No existe un hecho derivable con la profundidad pedida; se usa la mejor disponible."""
