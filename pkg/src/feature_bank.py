"""
Banco de características conjuntas J(x, y).
Calcula los bloques de pose (unario, deformación, consistencia), de prenda
(co-ocurrencia) y cruzados (F_k con selección de ranura), ensambla el vector
denso y puntúa w . J bloque a bloque sin materializarlo.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

import config
import edge_energy
from errors import IndexOutOfRange, MissingAttrFeature
from instance_io import Instance, JointLabel
from model_spec import Block, ModelSpec

logger = logging.getLogger(__name__)

Assignment = Union[Sequence[int], Mapping[int, int]]


@dataclass(frozen=True, eq=False)
class FeatureBlockView:
    """Valores de un bloque de la disposición para una etiqueta concreta."""
    block: Block
    values: np.ndarray


# ============================================================================
# CARACTERÍSTICAS DE POSE
# ============================================================================

def unary_feature(inst: Instance, part: int, index: int) -> np.ndarray:
    """Descriptor unario almacenado del candidato (la extracción es previa)."""
    return inst.candidate(part, index).unary


def position_bins(centers_i: np.ndarray, hulls_j: np.ndarray) -> np.ndarray:
    """
    Región 3x3 (fila mayor) del centro de p_i respecto al rectángulo de p_j.
    Los empates en los bordes de celda van a la fila/columna menor.

    Args:
        centers_i: (K_i, 2) centros
        hulls_j: (K_j, 4) rectángulos (x0, y0, x1, y1)

    Returns:
        (K_i, K_j) índices en [0, 9)
    """
    x = centers_i[:, 0:1]
    y = centers_i[:, 1:2]
    x0, y0, x1, y1 = (hulls_j[None, :, c] for c in range(4))
    col = np.where(x <= x0, 0, np.where(x <= x1, 1, 2))
    row = np.where(y <= y0, 0, np.where(y <= y1, 1, 2))
    return row * 3 + col


def rotation_bins(theta_i: np.ndarray, theta_j: np.ndarray) -> np.ndarray:
    """Bin de 18 grados de (theta_i - theta_j) mod 360; el borde superior es exclusivo."""
    diff = np.mod(theta_i[:, None] - theta_j[None, :], 360.0)
    bins = np.floor(diff / (360.0 / config.ROTATION_BINS)).astype(int)
    return np.minimum(bins, config.ROTATION_BINS - 1)


def _geometry(inst: Instance, spec: ModelSpec, part: int):
    boxes = [c.box for c in inst.ensembles[part]]
    centers = np.array([[b.x, b.y] for b in boxes], dtype=float)
    thetas = np.array([b.theta for b in boxes], dtype=float)
    hulls = np.array([b.hull(spec.width_ratio(part)) for b in boxes], dtype=float)
    return centers, thetas, hulls


def deformation_components(inst: Instance, spec: ModelSpec, edge: Tuple[int, int]):
    """Posición, rotación y distancia normalizada para todos los pares (K_i, K_j)."""
    i, j = edge
    centers_i, thetas_i, _ = _geometry(inst, spec, i)
    centers_j, thetas_j, hulls_j = _geometry(inst, spec, j)
    pos = position_bins(centers_i, hulls_j)
    rot = rotation_bins(thetas_i, thetas_j)
    delta = centers_i[:, None, :] - centers_j[None, :, :]
    dist = np.hypot(delta[..., 0], delta[..., 1]) / inst.diagonal
    return pos, rot, dist


def deformation_feature(inst: Instance, spec: ModelSpec, edge: Tuple[int, int],
                        p_i: int, p_j: int) -> np.ndarray:
    """
    Vector de 30 dimensiones: posición relativa (9, one-hot), rotación relativa
    (20, one-hot) y distancia entre centros dividida por la diagonal de la imagen.
    """
    i, j = edge
    box_i = inst.candidate(i, p_i).box
    box_j = inst.candidate(j, p_j).box
    pos = position_bins(np.array([[box_i.x, box_i.y]]),
                        np.array([box_j.hull(spec.width_ratio(j))]))[0, 0]
    rot = rotation_bins(np.array([box_i.theta]), np.array([box_j.theta]))[0, 0]

    feature = np.zeros(config.DEFORMATION_DIM)
    feature[pos] = 1.0
    feature[config.POSITION_BINS + rot] = 1.0
    feature[-1] = math.hypot(box_i.x - box_j.x, box_i.y - box_j.y) / inst.diagonal
    return feature


def chi2(a: np.ndarray, b: np.ndarray, eps: float = config.CHI2_EPS) -> np.ndarray:
    """Divergencia chi-cuadrado 0.5 * sum (a - b)^2 / (a + b + eps) sobre el último eje."""
    return 0.5 * np.sum((a - b) ** 2 / (a + b + eps), axis=-1)


def consistency_feature(inst: Instance, pair: Tuple[int, int], p_i: int, p_j: int) -> np.ndarray:
    """[chi2 en RGB, chi2 en LAB] entre los candidatos de dos partes simétricas."""
    a = inst.candidate(pair[0], p_i)
    b = inst.candidate(pair[1], p_j)
    return np.array([chi2(a.hist_rgb, b.hist_rgb), chi2(a.hist_lab, b.hist_lab)])


# ============================================================================
# CARACTERÍSTICAS DE PRENDA Y CRUZADAS
# ============================================================================

def cooccurrence_feature(c_k: int, c_l: int, t_k: int, t_l: int) -> np.ndarray:
    """One-hot de T_k * T_l con índice caliente c_k * T_l + c_l."""
    if not (0 <= c_k < t_k and 0 <= c_l < t_l):
        raise IndexOutOfRange(f"Valores ({c_k}, {c_l}) fuera de ({t_k}, {t_l})")
    feature = np.zeros(t_k * t_l)
    feature[c_k * t_l + c_l] = 1.0
    return feature


def _selected(assignment: Assignment, parts: Iterable[int]) -> Dict[int, int]:
    if isinstance(assignment, Mapping):
        return {part: assignment[part] for part in parts if part in assignment}
    return {part: assignment[part] for part in parts if part < len(assignment)}


def attribute_descriptor(inst: Instance, spec: ModelSpec, k: int,
                         assignment: Assignment) -> np.ndarray:
    """
    F_k: concatenación, en orden de índice de parte, de los descriptores del
    atributo k en los candidatos seleccionados.
    """
    attrs = spec.attributes
    parts = sorted(attrs.dependency[k])
    chosen = _selected(assignment, parts)
    if len(chosen) != len(parts):
        raise IndexOutOfRange(f"La asignación no cubre las partes de {attrs.names[k]}: {parts}")
    pieces = []
    for part in parts:
        cand = inst.candidate(part, chosen[part])
        if k not in cand.attr_feats:
            raise MissingAttrFeature(part, attrs.names[k])
        pieces.append(cand.attr_feats[k])
    return np.concatenate(pieces)


def cross_feature(inst: Instance, spec: ModelSpec, k: int, assignment: Assignment,
                  c_k: int) -> np.ndarray:
    """
    F_k copiado en la ranura c_k de T_k ranuras (ceros en el resto).

    Args:
        k: Índice del atributo
        assignment: Pose completa o mapa parte -> candidato para las partes de k
        c_k: Valor del atributo

    Returns:
        Vector de longitud T_k * dim(F_k)
    """
    t_k = spec.attributes.cardinalities[k]
    if not 0 <= c_k < t_k:
        raise IndexOutOfRange(f"{spec.attributes.names[k]}={c_k} fuera de [0, {t_k})")
    descriptor = attribute_descriptor(inst, spec, k, assignment)
    slots = np.zeros((t_k, descriptor.size))
    slots[c_k] = descriptor
    return slots.reshape(-1)


# ============================================================================
# ENSAMBLE Y PUNTUACIÓN
# ============================================================================

def _touches_missing(block: Block, c: Sequence[Optional[int]]) -> bool:
    return any(c[k] is None for k in block.key)


def joint_blocks(inst: Instance, spec: ModelSpec, y: JointLabel) -> List[FeatureBlockView]:
    """
    Todos los bloques de J(x, y). Los atributos sin anotar (None) anulan cada
    bloque que los toca.
    """
    y.check(inst, spec, allow_missing=True)
    p, c = y.p, y.c
    views = []
    for block in spec.layout.blocks:
        if block.kind == "unary":
            values = unary_feature(inst, block.key[0], p[block.key[0]])
        elif block.kind == "deformation":
            i, j = block.key
            values = deformation_feature(inst, spec, (i, j), p[i], p[j])
        elif block.kind == "consistency":
            i, j = block.key
            values = consistency_feature(inst, (i, j), p[i], p[j])
        elif block.kind == "cooccurrence":
            k, l = block.key
            if _touches_missing(block, c):
                values = np.zeros(block.length)
            else:
                t = spec.attributes.cardinalities
                values = cooccurrence_feature(c[k], c[l], t[k], t[l])
        else:
            k = block.key[0]
            values = (np.zeros(block.length) if c[k] is None
                      else cross_feature(inst, spec, k, p, c[k]))
        views.append(FeatureBlockView(block, values))
    return views


def assemble_joint(inst: Instance, spec: ModelSpec, y: JointLabel,
                   disabled: FrozenSet[str] = frozenset()) -> np.ndarray:
    """Vector denso J(x, y) de dimensión D."""
    joint = np.zeros(spec.dimension)
    for view in joint_blocks(inst, spec, y):
        if view.block.kind not in disabled:
            joint[view.block.slice] += view.values
    return joint


def score_joint(w: np.ndarray, inst: Instance, spec: ModelSpec, y: JointLabel) -> float:
    """
    w . J(x, y) calculado bloque a bloque: la co-ocurrencia lee una sola entrada
    y el bloque cruzado solo la ranura c_k.
    """
    y.check(inst, spec, allow_missing=True)
    layout = spec.layout
    p, c = y.p, y.c
    total = 0.0
    for block in layout.blocks:
        wb = w[block.slice]
        if block.kind == "unary":
            total += float(wb @ unary_feature(inst, block.key[0], p[block.key[0]]))
        elif block.kind == "deformation":
            i, j = block.key
            total += float(wb @ deformation_feature(inst, spec, (i, j), p[i], p[j]))
        elif block.kind == "consistency":
            i, j = block.key
            total += float(wb @ consistency_feature(inst, (i, j), p[i], p[j]))
        elif block.kind == "cooccurrence":
            k, l = block.key
            if not _touches_missing(block, c):
                total += float(wb[c[k] * spec.attributes.cardinalities[l] + c[l]])
        else:
            k = block.key[0]
            if c[k] is not None:
                descriptor = attribute_descriptor(inst, spec, k, p)
                slot = wb.reshape(spec.attributes.cardinalities[k], descriptor.size)[c[k]]
                total += float(slot @ descriptor)
    return total


def block_mask(spec: ModelSpec, disabled: Iterable[str]) -> np.ndarray:
    """Máscara 0/1 de dimensión D que apaga los tipos de bloque indicados."""
    disabled = set(disabled)
    mask = np.ones(spec.dimension)
    for block in spec.layout.blocks:
        if block.kind in disabled:
            mask[block.slice] = 0.0
    return mask


def dump_features(inst: Instance, spec: ModelSpec, y: JointLabel) -> Dict[str, List[float]]:
    """Bloques con nombre de J(x, y) para depuración."""
    return {view.block.name: view.values.tolist() for view in joint_blocks(inst, spec, y)}


# ============================================================================
# TABLAS DE POTENCIALES
# ============================================================================

class PotentialTables:
    """
    Tablas de puntuación precalculadas para una instancia y un vector w.

    Todas las contribuciones de w . J + alpha * Q se expresan como tablas
    sobre uno o dos índices: un vector K_i por parte, matrices K_i x K_j por
    arista de deformación y par simétrico, matrices K_i x T_k por parte de cada
    atributo cruzado y matrices T_k x T_l por arista de atributos. Se reutilizan
    en cada paso de la inferencia y en la puntuación rápida de etiquetas.
    """

    def __init__(self, inst: Instance, spec: ModelSpec, w: np.ndarray,
                 alpha: float = config.ALPHA, beta: float = config.BETA,
                 disabled: FrozenSet[str] = frozenset()):
        self.inst = inst
        self.spec = spec
        self.alpha = alpha
        self.beta = beta
        self.disabled = frozenset(disabled)
        self.sizes = inst.candidate_counts
        layout = spec.layout
        attrs = spec.attributes
        w = np.asarray(w, dtype=float)

        self.unary: List[np.ndarray] = []
        self.energy: List[np.ndarray] = []
        for i in range(spec.part_count):
            if "unary" in self.disabled:
                self.unary.append(np.zeros(self.sizes[i]))
            else:
                features = np.stack([c.unary for c in inst.ensembles[i]])
                self.unary.append(features @ w[layout.block("unary", (i,)).slice])
            self.energy.append(edge_energy.part_energies(inst, i, beta))

        self.deformation: Dict[Tuple[int, int], np.ndarray] = {}
        for edge in spec.parts.tree_edges:
            if "deformation" in self.disabled:
                self.deformation[edge] = np.zeros((self.sizes[edge[0]], self.sizes[edge[1]]))
                continue
            wb = w[layout.block("deformation", edge).slice]
            pos, rot, dist = deformation_components(inst, spec, edge)
            self.deformation[edge] = (wb[pos] + wb[config.POSITION_BINS + rot]
                                      + wb[-1] * dist)

        self.consistency: Dict[Tuple[int, int], np.ndarray] = {}
        for pair in spec.parts.symmetric_pairs:
            i, j = pair
            if "consistency" in self.disabled:
                self.consistency[pair] = np.zeros((self.sizes[i], self.sizes[j]))
                continue
            wb = w[layout.block("consistency", pair).slice]
            rgb_i = np.stack([c.hist_rgb for c in inst.ensembles[i]])[:, None, :]
            rgb_j = np.stack([c.hist_rgb for c in inst.ensembles[j]])[None, :, :]
            lab_i = np.stack([c.hist_lab for c in inst.ensembles[i]])[:, None, :]
            lab_j = np.stack([c.hist_lab for c in inst.ensembles[j]])[None, :, :]
            self.consistency[pair] = wb[0] * chi2(rgb_i, rgb_j) + wb[1] * chi2(lab_i, lab_j)

        # F_k es una concatenación: w_pc^k[c_k] . F_k se separa en una suma por parte
        self.cross: List[Dict[int, np.ndarray]] = []
        for k in range(attrs.attribute_count):
            t_k = attrs.cardinalities[k]
            parts = sorted(attrs.dependency[k])
            dim = attrs.feature_dims[k]
            slots = w[layout.block("cross", (k,)).slice].reshape(t_k, len(parts) * dim)
            per_part = {}
            for position, part in enumerate(parts):
                if "cross" in self.disabled:
                    per_part[part] = np.zeros((self.sizes[part], t_k))
                    continue
                feats = np.stack([_attr_feature(c, part, k, attrs.names[k])
                                  for c in inst.ensembles[part]])
                segment = slots[:, position * dim:(position + 1) * dim]
                per_part[part] = feats @ segment.T
            self.cross.append(per_part)

        self.cooccurrence: Dict[Tuple[int, int], np.ndarray] = {}
        for edge in attrs.attribute_tree_edges:
            k, l = edge
            shape = (attrs.cardinalities[k], attrs.cardinalities[l])
            if "cooccurrence" in self.disabled:
                self.cooccurrence[edge] = np.zeros(shape)
            else:
                self.cooccurrence[edge] = w[layout.block("cooccurrence", edge).slice].reshape(shape)

    def part_scores(self, part: int) -> np.ndarray:
        """Unario + alpha * energía de cada candidato de la parte."""
        return self.unary[part] + self.alpha * self.energy[part]

    def cross_unary(self, k: int, p: Sequence[int]) -> np.ndarray:
        """Puntuación cruzada de cada valor del atributo k con la pose fija."""
        return sum(table[p[part]] for part, table in self.cross[k].items())

    def pose_score(self, p: Sequence[int]) -> float:
        """w_p . J_p + alpha * Q."""
        total = sum(float(self.part_scores(i)[pi]) for i, pi in enumerate(p))
        total += sum(float(t[p[i], p[j]]) for (i, j), t in self.deformation.items())
        total += sum(float(t[p[i], p[j]]) for (i, j), t in self.consistency.items())
        return total

    def attribute_score(self, c: Sequence[Optional[int]]) -> float:
        """w_c . J_c (las aristas con atributos sin anotar no suman)."""
        return sum(float(t[c[k], c[l]]) for (k, l), t in self.cooccurrence.items()
                   if c[k] is not None and c[l] is not None)

    def cross_score(self, p: Sequence[int], c: Sequence[Optional[int]]) -> float:
        return sum(float(table[p[part], c[k]])
                   for k, per_part in enumerate(self.cross) if c[k] is not None
                   for part, table in per_part.items())

    def score(self, y: JointLabel) -> float:
        """S(x, y; w) = w . J(x, y) + alpha * Q(x, p) a partir de las tablas."""
        return self.pose_score(y.p) + self.attribute_score(y.c) + self.cross_score(y.p, y.c)


def _attr_feature(cand, part: int, k: int, name: str) -> np.ndarray:
    if k not in cand.attr_feats:
        raise MissingAttrFeature(part, name)
    return cand.attr_feats[k]
