"""
Vector de pesos por bloques y su archivo binario.

Formato (little-endian):
    4 bytes   magia b"JSWT"
    uint16    versión del formato
    32 bytes  SHA-256 de la forma canónica del modelo
    uint64    D
    32 bytes  SHA-256 de la disposición de bloques
    D float64 valores
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Union

import numpy as np

from errors import WeightsFormatError
from model_spec import ModelSpec

logger = logging.getLogger(__name__)

MAGIC = b"JSWT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sH32sQ32s")


@dataclass(frozen=True, eq=False)
class WeightVector:
    """w aprendido, particionado en los bloques de la disposición del modelo."""
    values: np.ndarray
    spec: ModelSpec

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.spec.dimension,):
            raise WeightsFormatError(
                f"Vector de pesos de forma {values.shape}, se esperaba ({self.spec.dimension},)")
        if not np.all(np.isfinite(values)):
            raise WeightsFormatError("El vector de pesos contiene NaN o infinitos")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, spec: ModelSpec) -> "WeightVector":
        return cls(np.zeros(spec.dimension), spec)

    def block(self, kind: str, key) -> np.ndarray:
        return self.values[self.spec.layout.block(kind, key).slice]

    def block_by_name(self, name: str) -> np.ndarray:
        for block in self.spec.layout.blocks:
            if block.name == name:
                return self.values[block.slice]
        raise KeyError(name)

    def named_blocks(self) -> Dict[str, np.ndarray]:
        return {b.name: self.values[b.slice] for b in self.spec.layout.blocks}

    def norms(self) -> Dict[str, float]:
        """Norma L2 por tipo de bloque (útil para los reportes de entrenamiento)."""
        totals: Dict[str, float] = {}
        for b in self.spec.layout.blocks:
            totals[b.kind] = totals.get(b.kind, 0.0) + float(self.values[b.slice] @ self.values[b.slice])
        return {kind: float(np.sqrt(v)) for kind, v in totals.items()}


def save_weights(weights: WeightVector, path: Union[str, Path]) -> None:
    spec = weights.spec
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, bytes.fromhex(spec.model_hash),
                          spec.dimension, bytes.fromhex(spec.layout_checksum))
    Path(path).write_bytes(header + weights.values.astype("<f8").tobytes())
    logger.debug("Pesos guardados en %s (D=%d)", path, spec.dimension)


def load_weights(path: Union[str, Path], spec: ModelSpec) -> WeightVector:
    """
    Lee un archivo de pesos y comprueba que corresponde al modelo.

    Raises:
        WeightsFormatError: Si la cabecera no coincide o hay valores no finitos
    """
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise WeightsFormatError(f"No se pudo leer {path}: {e}") from e
    if len(data) < _HEADER.size:
        raise WeightsFormatError("Archivo de pesos truncado")

    magic, version, model_hash, dimension, layout_checksum = _HEADER.unpack_from(data)
    if magic != MAGIC or version != FORMAT_VERSION:
        raise WeightsFormatError(f"{path} no es un archivo de pesos reconocido")
    if dimension != spec.dimension or layout_checksum.hex() != spec.layout_checksum:
        raise WeightsFormatError(
            f"Los pesos (D={dimension}) no corresponden a la disposición del modelo (D={spec.dimension})")
    if model_hash.hex() != spec.model_hash:
        logger.warning("El hash de modelo de los pesos difiere; la disposición sí coincide")

    body = data[_HEADER.size:]
    if len(body) != 8 * dimension:
        raise WeightsFormatError("Longitud del cuerpo de pesos inconsistente con D")
    return WeightVector(np.frombuffer(body, dtype="<f8").astype(np.float64), spec)