"""
Entrenamiento de w con una SVM estructurada de márgenes binarios.

Cada etiqueta positiva debe puntuar w . J >= 1 - xi y cada negativa
w . J <= -1 + xi. Los negativos se muestrean (uniformes y difíciles, estos
últimos a partir de la inferencia con el w actual) y se acumulan entre rondas;
dentro de una ronda el objetivo es convexo y se minimiza por subgradiente.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np
import yaml
from tqdm import tqdm

import config
from errors import EmptyTrainingSet, NoGroundTruth, ParseError
from eval_metrics import endpoint_error
from feature_bank import assemble_joint, block_mask
from inference_engine import InferenceEngine
from instance_io import Instance, JointLabel
from model_spec import BLOCK_KINDS, ModelSpec
from weights_io import WeightVector

logger = logging.getLogger(__name__)

POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass(frozen=True)
class TrainExample:
    instance_id: str
    label: JointLabel
    polarity: str

    @property
    def sign(self) -> float:
        return 1.0 if self.polarity == POSITIVE else -1.0


@dataclass(frozen=True)
class TrainConfig:
    """
    Parámetros del entrenamiento.

    Attributes:
        C: Compromiso entre margen y holguras
        epochs: Pasos de subgradiente por ronda
        eta0: Tasa inicial; la tasa del paso t es eta0 / (1 + decay * t)
        decay: Decaimiento de la tasa
        negatives_per_instance: Negativos nuevos por instancia y ronda
        hard_negative_rounds: Tope de rondas extra que regeneran negativos con el w actual
        seed: Semilla de todo el muestreo
        disabled: Tipos de bloque apagados (sus pesos quedan en cero)
        pcp_threshold: Umbral para ligar la verdad de terreno a candidatos
    """
    C: float = config.SSVM_C
    epochs: int = config.EPOCHS
    eta0: float = config.LEARNING_RATE
    decay: float = config.LEARNING_DECAY
    negatives_per_instance: int = config.NEGATIVES_PER_INSTANCE
    hard_negative_rounds: int = config.HARD_NEGATIVE_ROUNDS
    seed: int = config.SEED
    disabled: FrozenSet[str] = frozenset()
    pcp_threshold: float = config.PCP_THRESHOLD

    def __post_init__(self):
        if self.C <= 0 or self.eta0 <= 0 or self.decay < 0:
            raise ValueError("C y eta0 deben ser positivos y decay no negativo")
        if self.epochs < 1 or self.negatives_per_instance < 0 or self.hard_negative_rounds < 0:
            raise ValueError("epochs >= 1; negatives_per_instance y hard_negative_rounds >= 0")
        unknown = set(self.disabled) - set(BLOCK_KINDS)
        if unknown:
            raise ValueError(f"Tipos de bloque desconocidos: {sorted(unknown)}")
        object.__setattr__(self, "disabled", frozenset(self.disabled))

    @classmethod
    def from_dict(cls, data: Mapping) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ParseError(f"Claves desconocidas en la configuración de entrenamiento: {sorted(unknown)}")
        values = dict(data)
        if "disabled" in values:
            values["disabled"] = frozenset(values["disabled"] or ())
        return cls(**values)

    def with_overrides(self, **changes) -> "TrainConfig":
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update({k: v for k, v in changes.items() if v is not None})
        return TrainConfig(**values)


def load_train_config(path: Union[str, Path]) -> TrainConfig:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ParseError(f"No se pudo leer la configuración {path}: {e}") from e
    try:
        return TrainConfig.from_dict(data)
    except (TypeError, ValueError) as e:
        raise ParseError(f"Configuración de entrenamiento inválida: {e}") from e


@dataclass
class TrainReport:
    objectives: List[float] = field(default_factory=list)
    round_objectives: List[float] = field(default_factory=list)
    instances: int = 0
    unbindable: List[str] = field(default_factory=list)
    positives: int = 0
    negatives: int = 0
    best_objective: float = float("inf")
    rounds: int = 0
    converged: bool = False
    block_norms: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "instances": self.instances,
            "unbindable": self.unbindable,
            "positives": self.positives,
            "negatives": self.negatives,
            "best_objective": self.best_objective,
            "rounds": self.rounds,
            "converged": self.converged,
            "round_objectives": self.round_objectives,
            "objectives": self.objectives,
            "block_norms": self.block_norms,
        }


# ============================================================================
# POSITIVOS Y NEGATIVOS
# ============================================================================

def bind_ground_truth(inst: Instance, spec: ModelSpec,
                      threshold: float = config.PCP_THRESHOLD) -> Optional[List[JointLabel]]:
    """
    Liga la verdad de terreno a índices de candidato.

    Para cada parte elige el candidato con menor error de extremos respecto a
    la caja verdadera; produce una etiqueta positiva por grupo de atributos.

    Returns:
        Lista de positivos, o None si alguna parte no tiene candidato dentro
        del umbral PCP (instancia no ligable)
    """
    gt = inst.ground_truth
    if gt is None:
        raise NoGroundTruth(f"La instancia {inst.id} no tiene verdad de terreno")

    pose = []
    for part, truth in enumerate(gt.pose):
        errors = [endpoint_error(c.box, truth) for c in inst.ensembles[part]]
        best = int(np.argmin(errors))
        if errors[best] > threshold * truth.s:
            logger.warning("%s: ningún candidato de '%s' cerca de la verdad; se excluye",
                           inst.id, spec.parts.part_names[part])
            return None
        pose.append(best)

    positives: List[JointLabel] = []
    for group in gt.attribute_groups:
        label = JointLabel(tuple(pose), tuple(group))
        if label not in positives:
            positives.append(label)
    return positives


def _missing_everywhere(positives: Sequence[JointLabel]) -> Set[int]:
    """Atributos sin anotar en todos los grupos de la instancia."""
    n = len(positives[0].c)
    return {k for k in range(n) if all(pos.c[k] is None for pos in positives)}


def _is_new(label: JointLabel, positives: Sequence[JointLabel], taken: Sequence[JointLabel]) -> bool:
    return not any(label.matches(pos) for pos in positives) and label not in taken


def _perturbations(base: JointLabel, inst: Instance, spec: ModelSpec,
                   missing: Set[int]) -> List[JointLabel]:
    """Todas las etiquetas que difieren de `base` en exactamente una coordenada."""
    out = []
    for i, k_i in enumerate(inst.candidate_counts):
        for v in range(k_i):
            if v != base.p[i]:
                p = list(base.p)
                p[i] = v
                out.append(JointLabel(tuple(p), base.c))
    for k, t_k in enumerate(spec.attributes.cardinalities):
        if k in missing:
            continue
        for v in range(t_k):
            if v != base.c[k]:
                c = list(base.c)
                c[k] = v
                out.append(JointLabel(base.p, tuple(c)))
    return out


def _filled(label: JointLabel, missing: Set[int]) -> JointLabel:
    """Deja sin anotar (None) los atributos que no lo están en ningún positivo."""
    c = tuple(None if k in missing else label.c[k] for k in range(len(label.c)))
    return JointLabel(label.p, c)


def generate_negatives(inst: Instance, positives: Sequence[JointLabel], spec: ModelSpec,
                       count: int, rng: np.random.Generator,
                       engine: Optional[InferenceEngine] = None) -> List[JointLabel]:
    """
    Negativos de una instancia: la mitad uniformes (rechazando los que
    coinciden con algún positivo) y la mitad difíciles (la salida de la
    inferencia conjunta con el w actual y las perturbaciones de una coordenada
    del positivo mejor puntuadas).

    Args:
        inst: Instancia
        positives: Etiquetas positivas (no vacía)
        spec: Modelo
        count: Número de negativos R
        rng: Generador con semilla derivada de (semilla, ronda, instancia)
        engine: Motor con el w actual; sin él los difíciles se eligen al azar

    Returns:
        Lista sin duplicados, vacía si el espacio de etiquetas no tiene otras
    """
    if not positives:
        raise ValueError("Se necesita al menos un positivo")
    missing = _missing_everywhere(positives)
    base = positives[0]
    sizes = inst.candidate_counts
    cards = spec.attributes.cardinalities
    free_attr_values = int(np.prod([t for k, t in enumerate(cards) if k not in missing]))
    if int(np.prod(sizes)) * free_attr_values <= len(positives):
        return []

    negatives: List[JointLabel] = []
    n_hard = count // 2 if engine is not None else 0
    n_random = count - n_hard

    attempts = 0
    while len(negatives) < n_random and attempts < config.NEGATIVE_SAMPLING_ATTEMPTS * max(n_random, 1):
        attempts += 1
        p = tuple(int(rng.integers(k)) for k in sizes)
        c = tuple(None if k in missing else int(rng.integers(t)) for k, t in enumerate(cards))
        label = JointLabel(p, c)
        if _is_new(label, positives, negatives):
            negatives.append(label)

    candidates = [lab for lab in _perturbations(base, inst, spec, missing)
                  if _is_new(lab, positives, [])]
    if engine is not None:
        found = engine.infer_joint(inst).label
        found = _filled(found, missing)
        if _is_new(found, positives, negatives):
            negatives.append(found)
        tables = engine.tables(inst)
        scores = np.array([tables.score(lab) for lab in candidates])
        # Orden estable: empates en el orden de enumeración
        candidates = [candidates[q] for q in np.argsort(-scores, kind="stable")]
    else:
        candidates = [candidates[q] for q in rng.permutation(len(candidates))]

    for label in candidates:
        if len(negatives) >= count:
            break
        if label not in negatives:
            negatives.append(label)
    return negatives[:count]


# ============================================================================
# CONJUNTO DE RESTRICCIONES Y OPTIMIZACIÓN
# ============================================================================

class ConstraintSet:
    """Restricciones de margen acumuladas: una fila s_r * J_r por ejemplo."""

    def __init__(self, spec: ModelSpec, disabled: FrozenSet[str] = frozenset()):
        self.spec = spec
        self.mask = block_mask(spec, disabled)
        self.disabled = frozenset(disabled)
        self.examples: List[TrainExample] = []
        self._seen: Set[Tuple[str, JointLabel, str]] = set()
        self._stacked = np.zeros((0, spec.dimension))
        self._pending: List[np.ndarray] = []

    def add(self, inst: Instance, label: JointLabel, polarity: str,
            w: Optional[np.ndarray] = None) -> bool:
        """
        Agrega la restricción si es nueva. Con `w`, solo si ese w la viola
        (margen < 1); una restricción satisfecha puede volver a ofrecerse después.
        """
        key = (inst.id, label, polarity)
        if key in self._seen:
            return False
        example = TrainExample(inst.id, label, polarity)
        row = example.sign * assemble_joint(inst, self.spec, label, self.disabled) * self.mask
        if w is not None and float(row @ w) >= 1.0:
            return False
        self._seen.add(key)
        self.examples.append(example)
        self._pending.append(row)
        return True

    def __len__(self) -> int:
        return len(self.examples)

    def count(self, polarity: str) -> int:
        return sum(1 for e in self.examples if e.polarity == polarity)

    @property
    def matrix(self) -> np.ndarray:
        """Filas s_r * J_r (el signo ya aplicado)."""
        if self._pending:
            self._stacked = np.vstack([self._stacked, *self._pending])
            self._pending = []
        return self._stacked

    def margins(self, w: np.ndarray) -> np.ndarray:
        return self.matrix @ w

    def objective(self, w: np.ndarray, C: float) -> float:
        """1/2 ||w||^2 + C * sum_r max(0, 1 - s_r w . J_r)."""
        slack = np.maximum(0.0, 1.0 - self.margins(w))
        return float(0.5 * w @ w + C * slack.sum())

    def subgradient(self, w: np.ndarray, C: float) -> np.ndarray:
        violated = self.margins(w) < 1.0
        return w - C * self.matrix[violated].sum(axis=0)


def optimize(constraints: ConstraintSet, w0: np.ndarray, cfg: TrainConfig,
             desc: str = "SSVM") -> Tuple[np.ndarray, List[float]]:
    """
    Descenso por subgradiente determinista sobre un conjunto fijo.

    Returns:
        (mejor iterado, objetivo tras cada época)
    """
    w = w0.copy()
    best_w, best = w.copy(), constraints.objective(w, cfg.C)
    history = []
    for t in tqdm(range(cfg.epochs), desc=desc, disable=not config.SHOW_PROGRESS, leave=False):
        eta = cfg.eta0 / (1.0 + cfg.decay * t)
        w = (w - eta * constraints.subgradient(w, cfg.C)) * constraints.mask
        value = constraints.objective(w, cfg.C)
        history.append(value)
        if value < best:
            best, best_w = value, w.copy()
    return best_w, history


def train(dataset: Sequence[Instance], spec: ModelSpec, cfg: TrainConfig = TrainConfig(),
          alpha: float = config.ALPHA, beta: float = config.BETA) -> Tuple[WeightVector, TrainReport]:
    """
    Aprende w sobre las instancias ligables del conjunto.

    Ronda 0 usa w = 0 para los negativos difíciles. Cada ronda siguiente los
    regenera con el w aprendido, agrega solo los que violan el margen y
    reanuda la optimización sobre el conjunto acumulado; se detiene cuando una
    ronda no agrega ninguno o tras hard_negative_rounds rondas extra.

    Raises:
        EmptyTrainingSet: Si ninguna instancia es ligable
    """
    report = TrainReport()
    bound: List[Tuple[Instance, List[JointLabel]]] = []
    for inst in dataset:
        try:
            positives = bind_ground_truth(inst, spec, cfg.pcp_threshold)
        except NoGroundTruth:
            logger.warning("%s sin verdad de terreno; se omite", inst.id)
            continue
        if positives is None:
            report.unbindable.append(inst.id)
        else:
            bound.append((inst, positives))
    if not bound:
        raise EmptyTrainingSet("Ninguna instancia del conjunto puede ligarse a sus candidatos")
    report.instances = len(bound)

    constraints = ConstraintSet(spec, cfg.disabled)
    for inst, positives in bound:
        for label in positives:
            constraints.add(inst, label, POSITIVE)

    w = np.zeros(spec.dimension)
    for round_index in range(cfg.hard_negative_rounds + 1):
        engine = InferenceEngine(spec, w, alpha, beta, cfg.disabled)
        added = 0
        for index, (inst, positives) in enumerate(bound):
            rng = np.random.default_rng([cfg.seed, round_index, index])
            current = w if round_index else None
            for label in generate_negatives(inst, positives, spec, cfg.negatives_per_instance, rng, engine):
                added += constraints.add(inst, label, NEGATIVE, current)
        logger.info("Ronda %d: %d negativos nuevos, %d restricciones", round_index, added, len(constraints))
        if round_index and not added:
            report.converged = True
            break

        w, history = optimize(constraints, w, cfg, desc=f"Ronda {round_index}")
        report.objectives.extend(history)
        report.round_objectives.append(constraints.objective(w, cfg.C))
        report.rounds += 1

    weights = WeightVector(w, spec)
    report.positives = constraints.count(POSITIVE)
    report.negatives = constraints.count(NEGATIVE)
    report.best_objective = report.round_objectives[-1]
    report.block_norms = weights.norms()
    return weights, report


def cross_validation_folds(instances: Sequence[Instance], folds: int = config.CV_FOLDS):
    """Particiones (entrenamiento, validación) en bloques contiguos por orden de id."""
    ordered = sorted(instances, key=lambda inst: inst.id)
    chunks = [list(chunk) for chunk in np.array_split(np.arange(len(ordered)), folds)]
    for held in range(folds):
        train_set = [ordered[q] for f, chunk in enumerate(chunks) if f != held for q in chunk]
        valid_set = [ordered[q] for q in chunks[held]]
        yield train_set, valid_set
