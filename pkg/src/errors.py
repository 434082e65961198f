"""
Excepciones del motor de inferencia conjunta.
Toda excepción propia hereda de JointStructError para que la CLI pueda
traducirlas a un código de salida.
"""

from dataclasses import dataclass
from typing import List, Optional


class JointStructError(Exception):
    """Error base de la aplicación."""


@dataclass(frozen=True)
class ModelIssue:
    """Un invariante violado de la especificación del modelo."""
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class ModelValidationError(JointStructError):
    def __init__(self, issues: List[ModelIssue]):
        self.issues = list(issues)
        lines = "; ".join(str(issue) for issue in self.issues)
        super().__init__(f"Modelo inválido ({len(self.issues)} problemas): {lines}")


class ParseError(JointStructError):
    """El archivo no se pudo interpretar."""


class DimMismatch(JointStructError):
    def __init__(self, part: Optional[int], field: str, detail: str = ""):
        self.part = part
        self.field = field
        message = f"Dimensión inválida en parte {part}, campo '{field}'"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class IndexOutOfRange(JointStructError):
    """Índice de candidato, parte o valor de atributo fuera de rango."""


class MissingAttrFeature(JointStructError):
    def __init__(self, part: int, attribute: str):
        self.part = part
        self.attribute = attribute
        super().__init__(f"Falta el descriptor de '{attribute}' en la parte {part}")


class NoGroundTruth(JointStructError):
    """La instancia no tiene anotaciones."""


class SpaceTooLarge(JointStructError):
    """El espacio de etiquetas excede el tope del oráculo exhaustivo."""


class EmptyTrainingSet(JointStructError):
    """No hay instancias vinculables para entrenar."""


class EmptyInput(JointStructError):
    """Agregación sobre una lista vacía."""


class WeightsFormatError(JointStructError):
    """Archivo de pesos corrupto o incompatible con el modelo."""
