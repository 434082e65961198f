"""
Métricas de evaluación: PCP para la pose y GAP para los atributos de prenda.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

import config
from errors import DimMismatch, EmptyInput, IndexOutOfRange, NoGroundTruth, ParseError
from instance_io import Instance, JointLabel, OrientedBox
from model_spec import ModelSpec

logger = logging.getLogger(__name__)

REPORT_NOTE = ("PCP total: media sin ponderar de las partes. "
               "GAP total: aciertos sobre decisiones evaluadas (se omiten los atributos sin anotar).")


# ============================================================================
# PCP Y GAP POR INSTANCIA
# ============================================================================

def endpoint_error(pred: OrientedBox, truth: OrientedBox) -> float:
    """
    Máximo error de extremo entre dos segmentos, con la correspondencia
    (directa o intercambiada) que lo minimiza.
    """
    a0, a1 = pred.endpoints()
    b0, b1 = truth.endpoints()
    direct = max(np.linalg.norm(a0 - b0), np.linalg.norm(a1 - b1))
    swapped = max(np.linalg.norm(a0 - b1), np.linalg.norm(a1 - b0))
    return float(min(direct, swapped))


def part_correct(pred: OrientedBox, truth: OrientedBox,
                 threshold: float = config.PCP_THRESHOLD) -> bool:
    """Ambos extremos a no más de threshold * L de la verdad, con L = s de la verdad."""
    return endpoint_error(pred, truth) <= threshold * truth.s


def pcp(pred_boxes: Sequence[OrientedBox], truth_boxes: Sequence[OrientedBox],
        threshold: float = config.PCP_THRESHOLD) -> List[bool]:
    if len(pred_boxes) != len(truth_boxes):
        raise DimMismatch(None, "pose", f"{len(pred_boxes)} cajas predichas para {len(truth_boxes)} verdaderas")
    return [part_correct(p, t, threshold) for p, t in zip(pred_boxes, truth_boxes)]


def gap(c: Sequence[int], attribute_groups: Sequence[Sequence[Optional[int]]],
        cardinalities: Optional[Sequence[int]] = None) -> List[Optional[bool]]:
    """
    Acierto por atributo: correcto si coincide con el valor de algún grupo.

    Returns:
        Lista con True/False, o None si el atributo no está anotado en ningún grupo
    """
    outcome: List[Optional[bool]] = []
    for k, value in enumerate(c):
        if cardinalities is not None and not 0 <= value < cardinalities[k]:
            raise IndexOutOfRange(f"Valor {value} fuera de [0, {cardinalities[k]}) para el atributo {k}")
        annotated = [group[k] for group in attribute_groups if group[k] is not None]
        outcome.append(None if not annotated else value in annotated)
    return outcome


@dataclass(frozen=True)
class InstanceEval:
    id: str
    parts: Tuple[bool, ...]
    attributes: Tuple[Optional[bool], ...]


def evaluate_instance(inst: Instance, label: JointLabel, spec: ModelSpec,
                      threshold: float = config.PCP_THRESHOLD) -> InstanceEval:
    if inst.ground_truth is None:
        raise NoGroundTruth(f"La instancia {inst.id} no tiene verdad de terreno")
    label.check(inst, spec)
    gt = inst.ground_truth
    return InstanceEval(
        id=inst.id,
        parts=tuple(pcp(inst.pose_boxes(label.p), gt.pose, threshold)),
        attributes=tuple(gap(label.c, gt.attribute_groups, spec.attributes.cardinalities)),
    )


# ============================================================================
# REPORTE
# ============================================================================

def _rate(correct: int, total: int) -> Optional[float]:
    return correct / total if total else None


@dataclass
class EvalReport:
    """Conteos de aciertos por parte y atributo; las tasas se derivan de ellos."""
    part_names: Tuple[str, ...]
    attribute_names: Tuple[str, ...]
    groups: Dict[str, Tuple[int, ...]]
    part_correct: List[int]
    part_total: List[int]
    attr_correct: List[int]
    attr_evaluated: List[int]
    attr_skipped: List[int]
    instances: int = 0
    threshold: float = config.PCP_THRESHOLD
    ids: List[str] = field(default_factory=list)

    @classmethod
    def empty(cls, spec: ModelSpec, threshold: float = config.PCP_THRESHOLD) -> "EvalReport":
        m, n = spec.part_count, spec.attribute_count
        groups = {spec.parts.pair_name(q): tuple(pair)
                  for q, pair in enumerate(spec.parts.symmetric_pairs)}
        return cls(tuple(spec.parts.part_names), tuple(spec.attributes.names), groups,
                   [0] * m, [0] * m, [0] * n, [0] * n, [0] * n, 0, threshold)

    def add(self, result: InstanceEval) -> None:
        for i, ok in enumerate(result.parts):
            self.part_correct[i] += int(ok)
            self.part_total[i] += 1
        for k, ok in enumerate(result.attributes):
            if ok is None:
                self.attr_skipped[k] += 1
            else:
                self.attr_correct[k] += int(ok)
                self.attr_evaluated[k] += 1
        self.instances += 1
        self.ids.append(result.id)

    def merge(self, other: "EvalReport") -> "EvalReport":
        """Combinación ponderada por conteos de dos reportes del mismo modelo."""
        if other.part_names != self.part_names or other.attribute_names != self.attribute_names:
            raise DimMismatch(None, "report", "los reportes provienen de modelos distintos")
        return EvalReport(
            self.part_names, self.attribute_names, dict(self.groups),
            [a + b for a, b in zip(self.part_correct, other.part_correct)],
            [a + b for a, b in zip(self.part_total, other.part_total)],
            [a + b for a, b in zip(self.attr_correct, other.attr_correct)],
            [a + b for a, b in zip(self.attr_evaluated, other.attr_evaluated)],
            [a + b for a, b in zip(self.attr_skipped, other.attr_skipped)],
            self.instances + other.instances, self.threshold, self.ids + other.ids,
        )

    # --- tasas ---
    @property
    def part_pcp(self) -> List[float]:
        return [_rate(c, t) or 0.0 for c, t in zip(self.part_correct, self.part_total)]

    def group_pcp(self, name: str) -> float:
        members = self.groups[name]
        return _rate(sum(self.part_correct[i] for i in members),
                     sum(self.part_total[i] for i in members)) or 0.0

    @property
    def total_pcp(self) -> float:
        return float(np.mean(self.part_pcp)) if self.part_pcp else 0.0

    @property
    def attr_gap(self) -> List[Optional[float]]:
        return [_rate(c, e) for c, e in zip(self.attr_correct, self.attr_evaluated)]

    @property
    def total_gap(self) -> float:
        return _rate(sum(self.attr_correct), sum(self.attr_evaluated)) or 0.0

    def pcp_columns(self) -> Dict[str, float]:
        """Columnas de pose en orden de parte: partes sueltas y grupos simétricos agrupados."""
        columns: Dict[str, float] = {}
        grouped = {i: name for name, members in self.groups.items() for i in members}
        for i, name in enumerate(self.part_names):
            if i in grouped:
                group = grouped[i]
                if group not in columns:
                    columns[group] = self.group_pcp(group)
            else:
                columns[name] = self.part_pcp[i]
        columns["Total"] = self.total_pcp
        return columns

    def gap_columns(self) -> Dict[str, Optional[float]]:
        columns: Dict[str, Optional[float]] = dict(zip(self.attribute_names, self.attr_gap))
        columns["Total"] = self.total_gap
        return columns

    def to_dict(self) -> dict:
        return {
            "note": REPORT_NOTE,
            "instances": self.instances,
            "pcp_threshold": self.threshold,
            "pcp": {
                "parts": dict(zip(self.part_names, self.part_pcp)),
                "columns": self.pcp_columns(),
                "total": self.total_pcp,
            },
            "gap": {
                "attributes": dict(zip(self.attribute_names, self.attr_gap)),
                "skipped": dict(zip(self.attribute_names, self.attr_skipped)),
                "total": self.total_gap,
            },
            "counts": {
                "part_correct": self.part_correct,
                "part_total": self.part_total,
                "attr_correct": self.attr_correct,
                "attr_evaluated": self.attr_evaluated,
            },
        }


def aggregate(results: Sequence[InstanceEval], spec: ModelSpec,
              threshold: float = config.PCP_THRESHOLD) -> EvalReport:
    if not results:
        raise EmptyInput("No hay resultados que agregar")
    report = EvalReport.empty(spec, threshold)
    for result in results:
        report.add(result)
    return report


def evaluate(instances: Sequence[Instance], labels: Dict[str, JointLabel], spec: ModelSpec,
             threshold: float = config.PCP_THRESHOLD) -> EvalReport:
    """Evalúa las predicciones de cada instancia con verdad de terreno."""
    results = []
    for inst in instances:
        if inst.id not in labels:
            logger.warning("Sin predicción para %s; se omite", inst.id)
            continue
        results.append(evaluate_instance(inst, labels[inst.id], spec, threshold))
    return aggregate(results, spec, threshold)


def error_reduction(better: EvalReport, baseline: EvalReport) -> Dict[str, Dict[str, Optional[float]]]:
    """
    Tasa de reducción de error 1 - err_a / err_b por columna de pose y de atributos.
    None cuando la línea base no tiene errores.
    """
    def reduce(a: Optional[float], b: Optional[float]) -> Optional[float]:
        if a is None or b is None:
            return None
        err_a, err_b = 1.0 - a, 1.0 - b
        if math.isclose(err_b, 0.0, abs_tol=1e-15):
            return None
        return 1.0 - err_a / err_b

    pcp_a, pcp_b = better.pcp_columns(), baseline.pcp_columns()
    gap_a, gap_b = better.gap_columns(), baseline.gap_columns()
    return {
        "pcp": {name: reduce(pcp_a[name], pcp_b[name]) for name in pcp_a},
        "gap": {name: reduce(gap_a[name], gap_b[name]) for name in gap_a},
    }


# ============================================================================
# ARCHIVOS
# ============================================================================

def save_report(report: EvalReport, path: Union[str, Path]) -> None:
    # Las columnas conservan el orden de la tabla
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, ensure_ascii=False),
                          encoding="utf-8")


def save_results(records: Sequence[dict], path: Union[str, Path]) -> None:
    document = {"format": "joint-struct-results", "results": sorted(records, key=lambda r: r["id"])}
    Path(path).write_text(json.dumps(document, sort_keys=True, ensure_ascii=False), encoding="utf-8")


def load_results(path: Union[str, Path]) -> Dict[str, JointLabel]:
    """Lee un archivo de resultados de inferencia como mapa id -> etiqueta."""
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
        return {
            str(r["id"]): JointLabel(tuple(int(v) for v in r["pose"]),
                                     tuple(int(v) for v in r["attributes"]))
            for r in document["results"]
        }
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ParseError(f"No se pudo leer el archivo de resultados {path}: {e}") from e
