"""
Módulo de entrada/salida de instancias.
Define el formato en disco (candidatos con descriptores precalculados,
evidencia de bordes y verdad de terreno) y su validación al cargar.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

import config
from errors import DimMismatch, IndexOutOfRange, MissingAttrFeature, ParseError
from model_spec import ModelSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OrientedBox:
    """Caja orientada (x, y, theta, s): centro, ángulo en grados y largo del eje mayor."""
    x: float
    y: float
    theta: float
    s: float

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def axis(self) -> np.ndarray:
        rad = math.radians(self.theta)
        return np.array([math.cos(rad), math.sin(rad)])

    def endpoints(self) -> Tuple[np.ndarray, np.ndarray]:
        half = 0.5 * self.s * self.axis
        return self.center - half, self.center + half

    def long_edges(self, width_ratio: float) -> Tuple[Tuple[np.ndarray, np.ndarray], ...]:
        """Los dos lados largos (l, r), paralelos al eje y a +-ancho/2 del centro."""
        normal = np.array([-self.axis[1], self.axis[0]])
        offset = 0.5 * self.s * width_ratio * normal
        a, b = self.endpoints()
        return (a + offset, b + offset), (a - offset, b - offset)

    def corners(self, width_ratio: float) -> np.ndarray:
        (l0, l1), (r0, r1) = self.long_edges(width_ratio)
        return np.stack([l0, l1, r1, r0])

    def hull(self, width_ratio: float) -> Tuple[float, float, float, float]:
        """Rectángulo alineado a los ejes que contiene la caja: (x0, y0, x1, y1)."""
        rad = math.radians(self.theta)
        length, width = self.s, self.s * width_ratio
        hx = 0.5 * (abs(math.cos(rad)) * length + abs(math.sin(rad)) * width)
        hy = 0.5 * (abs(math.sin(rad)) * length + abs(math.cos(rad)) * width)
        return self.x - hx, self.y - hy, self.x + hx, self.y + hy


@dataclass(frozen=True)
class EdgePixel:
    theta_e: float      # Orientación del borde en el píxel (grados)
    strg_e: float       # Intensidad del borde
    d_min: float        # Distancia mínima a los lados largos de la caja


@dataclass(frozen=True, eq=False)
class Candidate:
    x: float
    y: float
    theta: float
    s: float
    unary: np.ndarray
    hist_rgb: np.ndarray
    hist_lab: np.ndarray
    attr_feats: Mapping[int, np.ndarray] = field(default_factory=dict)
    edge_pixels: Tuple[EdgePixel, ...] = ()

    @property
    def box(self) -> OrientedBox:
        return OrientedBox(self.x, self.y, self.theta, self.s)

    @cached_property
    def edge_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(theta_e, strg_e, d_min) como arreglos para cálculos vectorizados."""
        if not self.edge_pixels:
            empty = np.zeros(0)
            return empty, empty, empty
        data = np.array([(e.theta_e, e.strg_e, e.d_min) for e in self.edge_pixels], dtype=float)
        return data[:, 0], data[:, 1], data[:, 2]


@dataclass(frozen=True)
class GroundTruth:
    pose: Tuple[OrientedBox, ...]
    attribute_groups: Tuple[Tuple[Optional[int], ...], ...]   # None = MISSING


@dataclass(frozen=True, eq=False)
class Instance:
    id: str
    image_width: int
    image_height: int
    ensembles: Tuple[Tuple[Candidate, ...], ...]
    ground_truth: Optional[GroundTruth] = None

    @property
    def candidate_counts(self) -> Tuple[int, ...]:
        return tuple(len(e) for e in self.ensembles)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.image_width, self.image_height)

    def candidate(self, part: int, index: int) -> Candidate:
        if not 0 <= part < len(self.ensembles):
            raise IndexOutOfRange(f"Parte {part} fuera de rango en {self.id}")
        ensemble = self.ensembles[part]
        if not 0 <= index < len(ensemble):
            raise IndexOutOfRange(
                f"Candidato {index} fuera de rango para la parte {part} (K={len(ensemble)}) en {self.id}")
        return ensemble[index]

    def pose_boxes(self, p: Sequence[int]) -> List[OrientedBox]:
        return [self.candidate(i, pi).box for i, pi in enumerate(p)]


@dataclass(frozen=True)
class JointLabel:
    """Etiqueta conjunta y = (p, c); índices desde 0, None = atributo sin anotar."""
    p: Tuple[int, ...]
    c: Tuple[Optional[int], ...]

    def check(self, inst: Instance, spec: ModelSpec, allow_missing: bool = False) -> "JointLabel":
        if len(self.p) != spec.part_count or len(self.c) != spec.attribute_count:
            raise IndexOutOfRange(f"Etiqueta con {len(self.p)} partes y {len(self.c)} atributos")
        for i, pi in enumerate(self.p):
            inst.candidate(i, pi)
        for k, ck in enumerate(self.c):
            if ck is None and allow_missing:
                continue
            if ck is None or not 0 <= ck < spec.attributes.cardinalities[k]:
                raise IndexOutOfRange(
                    f"Valor {ck} fuera de rango para {spec.attributes.names[k]} "
                    f"(T={spec.attributes.cardinalities[k]})")
        return self

    def matches(self, other: "JointLabel") -> bool:
        """Igualdad ignorando los atributos sin anotar de `other`."""
        return self.p == other.p and all(
            b is None or a == b for a, b in zip(self.c, other.c))


def derive_d_min(pixel_xy: Sequence[float], candidate: Candidate,
                 width_ratio: float = config.BOX_WIDTH_RATIO) -> float:
    """
    Distancia mínima de un píxel a los dos lados largos de la caja del candidato.

    Args:
        pixel_xy: Coordenadas (x, y) del píxel
        candidate: Candidato con geometría válida
        width_ratio: Ancho de la caja relativo a s

    Returns:
        min(dist(e, l), dist(e, r)) con distancia punto-segmento
    """
    point = np.asarray(pixel_xy, dtype=float)
    return min(_point_segment_distance(point, a, b)
               for a, b in candidate.box.long_edges(width_ratio))


def _point_segment_distance(point: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else float(np.clip((point - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(point - (a + t * ab)))


# ============================================================================
# VALIDACIÓN
# ============================================================================

def validate_instance(inst: Instance, spec: ModelSpec,
                      max_candidates: int = config.MAX_CANDIDATES) -> Instance:
    """
    Verifica los invariantes de tipo de una instancia contra el modelo.

    Raises:
        DimMismatch, MissingAttrFeature, IndexOutOfRange
    """
    attrs = spec.attributes
    if len(inst.ensembles) != spec.part_count:
        raise DimMismatch(None, "ensembles",
                          f"{len(inst.ensembles)} conjuntos para m={spec.part_count} en {inst.id}")
    if inst.image_width <= 0 or inst.image_height <= 0:
        raise DimMismatch(None, "image_size", inst.id)

    for part, ensemble in enumerate(inst.ensembles):
        if not 1 <= len(ensemble) <= max_candidates:
            raise DimMismatch(part, "ensemble", f"K={len(ensemble)} fuera de [1, {max_candidates}]")
        for cand in ensemble:
            _validate_candidate(cand, part, spec)

    gt = inst.ground_truth
    if gt is not None:
        if len(gt.pose) != spec.part_count:
            raise DimMismatch(None, "ground_truth.pose", f"{len(gt.pose)} cajas")
        if not gt.attribute_groups:
            raise DimMismatch(None, "ground_truth.attribute_groups", "sin grupos")
        for group in gt.attribute_groups:
            if len(group) != attrs.attribute_count:
                raise DimMismatch(None, "ground_truth.attribute_groups", f"{len(group)} valores")
            for k, value in enumerate(group):
                if value is not None and not 0 <= value < attrs.cardinalities[k]:
                    raise IndexOutOfRange(
                        f"{attrs.names[k]}={value} fuera de [0, {attrs.cardinalities[k]}) en {inst.id}")
    return inst


def _validate_candidate(cand: Candidate, part: int, spec: ModelSpec) -> None:
    if not 0.0 <= cand.theta < 360.0:
        raise DimMismatch(part, "theta", f"{cand.theta} fuera de [0, 360)")
    if not cand.s > 0.0:
        raise DimMismatch(part, "s", f"{cand.s} debe ser positivo")
    if cand.unary.shape != (spec.unary_dim,):
        raise DimMismatch(part, "unary", f"forma {cand.unary.shape}, se esperaba ({spec.unary_dim},)")
    for name in ("hist_rgb", "hist_lab"):
        hist = getattr(cand, name)
        if hist.shape != (spec.hist_dim,):
            raise DimMismatch(part, name, f"forma {hist.shape}, se esperaba ({spec.hist_dim},)")
        if np.any(hist < 0) or abs(float(hist.sum()) - 1.0) > config.HIST_SUM_TOL:
            raise DimMismatch(part, name, f"histograma no normalizado (suma {float(hist.sum()):.6g})")

    attrs = spec.attributes
    for k in range(attrs.attribute_count):
        needed = part in attrs.dependency[k]
        present = k in cand.attr_feats
        if needed and not present:
            raise MissingAttrFeature(part, attrs.names[k])
        if present and not needed:
            raise DimMismatch(part, f"attr_feats[{attrs.names[k]}]", "la parte no depende del atributo")
        if present and cand.attr_feats[k].shape != (attrs.feature_dims[k],):
            raise DimMismatch(part, f"attr_feats[{attrs.names[k]}]",
                              f"forma {cand.attr_feats[k].shape}, se esperaba ({attrs.feature_dims[k]},)")

    for pixel in cand.edge_pixels:
        if pixel.strg_e < 0 or pixel.d_min < 0:
            raise DimMismatch(part, "edge_pixels", "intensidad y distancia deben ser no negativas")


# ============================================================================
# LECTURA / ESCRITURA
# ============================================================================

def load_dataset(path: Union[str, Path], spec: ModelSpec) -> List[Instance]:
    """
    Carga y valida un conjunto de instancias.

    Args:
        path: Archivo JSON del conjunto
        spec: Modelo contra el que se valida

    Returns:
        Instancias ordenadas por id
    """
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"No se pudo leer el conjunto {path}: {e}") from e
    return parse_dataset(document, spec)


def parse_dataset(document: Mapping, spec: ModelSpec) -> List[Instance]:
    if not isinstance(document, Mapping) or document.get("format") != config.DATASET_FORMAT:
        raise ParseError("El documento no es un conjunto joint-struct")
    header = document.get("header", {})
    _check_header(header, spec)

    instances = []
    seen = set()
    for raw in document.get("instances", []):
        inst = validate_instance(_parse_instance(raw, spec), spec)
        if inst.id in seen:
            raise ParseError(f"Id de instancia duplicado: {inst.id}")
        seen.add(inst.id)
        instances.append(inst)
    instances.sort(key=lambda inst: inst.id)
    logger.debug("Cargadas %d instancias", len(instances))
    return instances


def _check_header(header: Mapping, spec: ModelSpec) -> None:
    expected = _header(spec)
    for key in ("m", "n", "unary_dim", "hist_dim", "attr_feature_dims"):
        if key in header and header[key] != expected[key]:
            raise DimMismatch(None, f"header.{key}", f"{header[key]} != {expected[key]}")
    if header.get("model_hash") not in (None, spec.model_hash):
        logger.warning("El hash de modelo del conjunto no coincide con el modelo cargado")


def _header(spec: ModelSpec) -> Dict:
    return {
        "model_hash": spec.model_hash,
        "m": spec.part_count,
        "n": spec.attribute_count,
        "unary_dim": spec.unary_dim,
        "hist_dim": spec.hist_dim,
        "attr_feature_dims": list(spec.attributes.feature_dims),
    }


def _vector(values) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(-1)


def _parse_instance(raw: Mapping, spec: ModelSpec) -> Instance:
    try:
        inst_id = str(raw["id"])
        width, height = int(raw["image_width"]), int(raw["image_height"])
        ensembles = []
        for part, ensemble in enumerate(raw["ensembles"]):
            ensembles.append(tuple(_parse_candidate(c, part, spec) for c in ensemble))
        gt = None
        if raw.get("ground_truth") is not None:
            g = raw["ground_truth"]
            gt = GroundTruth(
                pose=tuple(OrientedBox(*map(float, box)) for box in g["pose"]),
                attribute_groups=tuple(
                    tuple(None if v is None else int(v) for v in group)
                    for group in g["attribute_groups"]),
            )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"Instancia mal formada ({raw.get('id', '?')}): {e}") from e
    return Instance(id=inst_id, image_width=width, image_height=height,
                    ensembles=tuple(ensembles), ground_truth=gt)


def _parse_candidate(raw: Mapping, part: int, spec: ModelSpec) -> Candidate:
    x, y, theta, s = map(float, raw["box"])
    attrs = spec.attributes
    attr_feats = {}
    for name, values in raw.get("attr_feats", {}).items():
        if name not in attrs.names:
            raise ParseError(f"Atributo desconocido '{name}' en la parte {part}")
        attr_feats[attrs.index_of(name)] = _vector(values)

    cand = Candidate(x=x, y=y, theta=theta, s=s,
                     unary=_vector(raw["unary"]),
                     hist_rgb=_vector(raw["hist_rgb"]),
                     hist_lab=_vector(raw["hist_lab"]),
                     attr_feats=attr_feats)

    pixels = []
    for item in raw.get("edge_pixels", []):
        if isinstance(item, Mapping):
            if "d_min" in item:
                d_min = float(item["d_min"])
            else:
                # Píxel en coordenadas crudas: la distancia se deriva aquí
                d_min = derive_d_min((item["x"], item["y"]), cand, spec.width_ratio(part))
            pixels.append(EdgePixel(float(item["theta_e"]), float(item["strg_e"]), d_min))
        else:
            theta_e, strg_e, d_min = map(float, item)
            pixels.append(EdgePixel(theta_e, strg_e, d_min))
    return Candidate(x=x, y=y, theta=theta, s=s, unary=cand.unary, hist_rgb=cand.hist_rgb,
                     hist_lab=cand.hist_lab, attr_feats=attr_feats, edge_pixels=tuple(pixels))


def instance_to_dict(inst: Instance, spec: ModelSpec) -> Dict:
    names = spec.attributes.names
    data = {
        "id": inst.id,
        "image_width": inst.image_width,
        "image_height": inst.image_height,
        "ensembles": [
            [
                {
                    "box": [c.x, c.y, c.theta, c.s],
                    "unary": c.unary.tolist(),
                    "hist_rgb": c.hist_rgb.tolist(),
                    "hist_lab": c.hist_lab.tolist(),
                    "attr_feats": {names[k]: v.tolist() for k, v in sorted(c.attr_feats.items())},
                    "edge_pixels": [[e.theta_e, e.strg_e, e.d_min] for e in c.edge_pixels],
                }
                for c in ensemble
            ]
            for ensemble in inst.ensembles
        ],
        "ground_truth": None,
    }
    if inst.ground_truth is not None:
        gt = inst.ground_truth
        data["ground_truth"] = {
            "pose": [[b.x, b.y, b.theta, b.s] for b in gt.pose],
            "attribute_groups": [list(group) for group in gt.attribute_groups],
        }
    return data


def save_dataset(instances: Sequence[Instance], spec: ModelSpec, path: Union[str, Path]) -> None:
    """
    Guarda un conjunto en JSON (claves ordenadas). Los flotantes se escriben con
    su representación más corta que reproduce el valor exacto.
    """
    document = {
        "format": config.DATASET_FORMAT,
        "version": config.DATASET_VERSION,
        "header": _header(spec),
        "instances": [instance_to_dict(inst, spec) for inst in sorted(instances, key=lambda i: i.id)],
    }
    Path(path).write_text(json.dumps(document, sort_keys=True, ensure_ascii=False),
                          encoding="utf-8")
