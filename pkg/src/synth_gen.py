"""
Generador de conjuntos sintéticos con un vector de pesos plantado.

Cada instancia tiene una pose verdadera (plantilla con traslación y escala
globales) y un grupo de atributos. Los descriptores de los candidatos se
sortean para que el w plantado puntúe más alto la verdad: el candidato
correcto se alinea con el vector unario plantado, los simétricos correctos
comparten histograma, los descriptores de atributo del candidato correcto se
acercan al prototipo del valor verdadero y los incorrectos al de un valor
distractor. Los candidatos correctos reciben bordes paralelos a sus lados
largos con probabilidad `edge_fidelity`.
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Mapping, Tuple, Union

import numpy as np
import yaml
from tqdm import tqdm

import config
from errors import ParseError
from feature_bank import position_bins, rotation_bins
from instance_io import (Candidate, EdgePixel, GroundTruth, Instance, OrientedBox,
                         derive_d_min, save_dataset)
from model_spec import ModelSpec
from weights_io import WeightVector, save_weights

logger = logging.getLogger(__name__)

# Pose de referencia en una imagen de 320x320: (dx, dy, theta, s) respecto al centro.
# Los ángulos relativos caen en el centro de los bins de rotación.
TEMPLATE: Dict[str, Tuple[float, float, float, float]] = {
    "torso": (0.0, 0.0, 90.0, 100.0),
    "RU.arm": (-45.0, -20.0, 117.0, 60.0),
    "LU.arm": (45.0, -20.0, 63.0, 60.0),
    "RL.arm": (-65.0, 35.0, 90.0, 55.0),
    "LL.arm": (65.0, 35.0, 90.0, 55.0),
    "head": (0.0, -75.0, 81.0, 40.0),
}

COOCCURRENCE_SCALE = 0.2
COOCCURRENCE_AGREEMENT = 0.7


@dataclass(frozen=True)
class SynthConfig:
    """
    Parámetros del generador.

    Attributes:
        n_train / n_test: Instancias por partición
        candidates: K por parte
        weight_scale: Escala del w plantado
        noise: Ruido sigma >= 0 de descriptores y geometría
        correlation: rho en [0, 1], peso del prototipo del valor en los descriptores de atributo
        edge_fidelity: Probabilidad de que el candidato correcto tenga bordes alineados
        missing_rate: Probabilidad de que un atributo quede sin anotar
        second_group_rate: Probabilidad de un segundo grupo de atributos
        seed: Semilla
    """
    n_train: int = config.SYNTH_TRAIN_COUNT
    n_test: int = config.SYNTH_TEST_COUNT
    candidates: int = config.SYNTH_CANDIDATES
    weight_scale: float = 1.0
    noise: float = 0.1
    correlation: float = 0.9
    edge_fidelity: float = 0.9
    missing_rate: float = 0.0
    second_group_rate: float = 0.0
    seed: int = config.SEED
    image_width: int = config.SYNTH_IMAGE_SIZE[0]
    image_height: int = config.SYNTH_IMAGE_SIZE[1]
    edge_pixels: int = config.SYNTH_EDGE_PIXELS

    def __post_init__(self):
        if self.n_train < 0 or self.n_test < 0:
            raise ValueError("Los tamaños de partición no pueden ser negativos")
        if not 1 <= self.candidates <= config.MAX_CANDIDATES:
            raise ValueError(f"candidates debe estar en [1, {config.MAX_CANDIDATES}]")
        if self.noise < 0 or self.weight_scale <= 0:
            raise ValueError("noise >= 0 y weight_scale > 0")
        for name in ("correlation", "edge_fidelity", "missing_rate", "second_group_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} debe estar en [0, 1]")

    @classmethod
    def from_dict(cls, data: Mapping) -> "SynthConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParseError(f"Claves desconocidas en la configuración sintética: {sorted(unknown)}")
        return cls(**data)


def load_synth_config(path: Union[str, Path]) -> SynthConfig:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        return SynthConfig.from_dict(data)
    except (OSError, yaml.YAMLError, TypeError, ValueError) as e:
        raise ParseError(f"Configuración sintética inválida en {path}: {e}") from e


@dataclass(frozen=True)
class SynthDataset:
    train: List[Instance]
    test: List[Instance]
    weights: WeightVector


# ============================================================================
# MODELO PLANTADO
# ============================================================================

@dataclass(frozen=True, eq=False)
class PlantedModel:
    unary_dirs: List[np.ndarray]               # vector unitario por parte
    prototypes: List[np.ndarray]               # (T_k, d_k) ortonormales por atributo
    weights: WeightVector


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _angle(theta: float) -> float:
    """Ángulo en [0, 360); el módulo de un negativo diminuto puede dar 360.0."""
    wrapped = float(theta) % 360.0
    return 0.0 if wrapped >= 360.0 else wrapped


def _template_boxes(spec: ModelSpec) -> List[OrientedBox]:
    boxes = []
    for name in spec.parts.part_names:
        if name not in TEMPLATE:
            raise ValueError(f"No hay pose de referencia para la parte '{name}'")
        dx, dy, theta, s = TEMPLATE[name]
        boxes.append(OrientedBox(160.0 + dx, 160.0 + dy, theta, s))
    return boxes


def plant_model(spec: ModelSpec, cfg: SynthConfig) -> PlantedModel:
    """Sortea el w plantado con el generador derivado de (semilla, 0)."""
    rng = np.random.default_rng([cfg.seed, 0])
    attrs = spec.attributes
    scale = cfg.weight_scale
    if spec.unary_dim < 2:
        raise ValueError("El generador necesita unary_dim >= 2")
    values = np.zeros(spec.dimension)
    layout = spec.layout

    unary_dirs = []
    for i in range(spec.part_count):
        direction = _unit(rng.standard_normal(spec.unary_dim))
        unary_dirs.append(direction)
        values[layout.block("unary", (i,)).slice] = scale * direction

    template = _template_boxes(spec)
    for edge in spec.parts.tree_edges:
        i, j = edge
        a, b = template[i], template[j]
        pos = position_bins(np.array([[a.x, a.y]]), np.array([b.hull(spec.width_ratio(j))]))[0, 0]
        rot = rotation_bins(np.array([a.theta]), np.array([b.theta]))[0, 0]
        block = np.zeros(config.DEFORMATION_DIM)
        block[pos] = scale
        block[config.POSITION_BINS + rot] = scale
        values[layout.block("deformation", edge).slice] = block

    for pair in spec.parts.symmetric_pairs:
        values[layout.block("consistency", pair).slice] = -scale

    prototypes = []
    for k in range(attrs.attribute_count):
        t_k, d_k = attrs.cardinalities[k], attrs.feature_dims[k]
        if t_k > d_k:
            raise ValueError(f"{attrs.names[k]}: T={t_k} prototipos no caben en dimensión {d_k}")
        basis, _ = np.linalg.qr(rng.standard_normal((d_k, t_k)))
        prototypes.append(basis.T)
        n_parts = len(attrs.dependency[k])
        values[layout.block("cross", (k,)).slice] = scale * np.tile(basis.T, (1, n_parts)).reshape(-1)

    for edge in attrs.attribute_tree_edges:
        k, l = edge
        t_k, t_l = attrs.cardinalities[k], attrs.cardinalities[l]
        table = np.zeros((t_k, t_l))
        table[np.arange(t_k), np.arange(t_k) % t_l] = COOCCURRENCE_SCALE * scale
        values[layout.block("cooccurrence", edge).slice] = table.reshape(-1)

    return PlantedModel(unary_dirs, prototypes, WeightVector(values, spec))


# ============================================================================
# INSTANCIAS
# ============================================================================

def _sample_attributes(spec: ModelSpec, rng: np.random.Generator) -> List[int]:
    """Valores verdaderos; a lo largo del árbol de atributos el hijo sigue al padre con frecuencia."""
    attrs = spec.attributes
    values = [int(rng.integers(t)) for t in attrs.cardinalities]
    for k, l in attrs.attribute_tree_edges:
        if rng.random() < COOCCURRENCE_AGREEMENT:
            values[l] = values[k] % attrs.cardinalities[l]
    return values


def _histogram(rng: np.random.Generator, dim: int) -> np.ndarray:
    h = rng.dirichlet(np.ones(dim))
    return h / h.sum()


def _attr_descriptor(prototype: np.ndarray, rho: float, sigma: float,
                     rng: np.random.Generator) -> np.ndarray:
    mixed = rho * prototype + (1.0 - rho) * _unit(rng.standard_normal(prototype.size))
    return mixed + sigma * rng.standard_normal(prototype.size)


def _edge_pixels(box: OrientedBox, cand: Candidate, width_ratio: float, aligned: bool,
                 count: int, sigma: float, rng: np.random.Generator) -> Tuple[EdgePixel, ...]:
    """Píxeles de borde junto a los lados largos; alineados con theta o con orientación aleatoria."""
    (l0, l1), (r0, r1) = box.long_edges(width_ratio)
    pixels = []
    for _ in range(count):
        a, b = (l0, l1) if rng.random() < 0.5 else (r0, r1)
        point = a + rng.random() * (b - a) + rng.normal(0.0, 1.0, size=2)
        if aligned:
            theta_e = (box.theta + rng.normal(0.0, 5.0 * sigma)) % 360.0
        else:
            theta_e = rng.uniform(0.0, 360.0)
        strength = rng.uniform(0.5, 1.0)
        pixels.append(EdgePixel(float(theta_e), float(strength),
                                derive_d_min(point, cand, width_ratio)))
    return tuple(pixels)


def generate_instance(spec: ModelSpec, cfg: SynthConfig, planted: PlantedModel,
                      instance_id: str, rng: np.random.Generator) -> Instance:
    attrs = spec.attributes
    sigma = cfg.noise
    m = spec.part_count

    # Pose verdadera: plantilla con traslación y escala globales, ruido por parte
    shift = rng.uniform(-20.0, 20.0, size=2)
    zoom = rng.uniform(0.9, 1.1)
    center = np.array([cfg.image_width / 2.0, cfg.image_height / 2.0])
    truth = []
    for box in _template_boxes(spec):
        offset = (np.array([box.x, box.y]) - 160.0) * zoom
        x, y = center + shift + offset + sigma * 4.0 * rng.standard_normal(2)
        theta = _angle(box.theta + sigma * 4.0 * rng.standard_normal())
        truth.append(OrientedBox(float(x), float(y), float(theta), float(box.s * zoom)))

    values = _sample_attributes(spec, rng)
    correct_index = [int(rng.integers(cfg.candidates)) for _ in range(m)]

    shared_hist = {}
    for a, b in spec.parts.symmetric_pairs:
        shared_hist[a] = shared_hist[b] = (_histogram(rng, spec.hist_dim), _histogram(rng, spec.hist_dim))

    ensembles = []
    for part in range(m):
        ratio = spec.width_ratio(part)
        direction = planted.unary_dirs[part]
        ensemble = []
        for index in range(cfg.candidates):
            correct = index == correct_index[part]
            if correct:
                t = truth[part]
                box = OrientedBox(t.x + sigma * 2.0 * rng.standard_normal(),
                                  t.y + sigma * 2.0 * rng.standard_normal(), t.theta, t.s)
                unary = direction + sigma * rng.standard_normal(spec.unary_dim)
                if part in shared_hist:
                    rgb, lab = shared_hist[part]
                    if sigma > 0:
                        rgb = rgb + 0.1 * sigma * _histogram(rng, spec.hist_dim)
                        lab = lab + 0.1 * sigma * _histogram(rng, spec.hist_dim)
                        rgb, lab = rgb / rgb.sum(), lab / lab.sum()
                else:
                    rgb, lab = _histogram(rng, spec.hist_dim), _histogram(rng, spec.hist_dim)
            else:
                box = OrientedBox(float(rng.uniform(0, cfg.image_width)),
                                  float(rng.uniform(0, cfg.image_height)),
                                  _angle(rng.uniform(0.0, 360.0)),
                                  float(truth[part].s * rng.uniform(0.6, 1.4)))
                other = rng.standard_normal(spec.unary_dim)
                other = _unit(other - (other @ direction) * direction)
                unary = other - 0.5 * direction + sigma * rng.standard_normal(spec.unary_dim)
                rgb, lab = _histogram(rng, spec.hist_dim), _histogram(rng, spec.hist_dim)

            attr_feats = {}
            for k in range(attrs.attribute_count):
                if part not in attrs.dependency[k]:
                    continue
                value = values[k]
                if not correct and attrs.cardinalities[k] > 1:
                    value = (value + int(rng.integers(1, attrs.cardinalities[k]))) % attrs.cardinalities[k]
                attr_feats[k] = _attr_descriptor(planted.prototypes[k][value], cfg.correlation, sigma, rng)

            cand = Candidate(x=box.x, y=box.y, theta=box.theta, s=box.s, unary=unary,
                             hist_rgb=rgb, hist_lab=lab, attr_feats=attr_feats)
            if correct:
                aligned = rng.random() < cfg.edge_fidelity
                pixels = _edge_pixels(box, cand, ratio, aligned, cfg.edge_pixels, sigma, rng)
            elif rng.random() < 0.5:
                pixels = ()
            else:
                pixels = _edge_pixels(box, cand, ratio, False, cfg.edge_pixels, sigma, rng)
            ensemble.append(replace(cand, edge_pixels=pixels))
        ensembles.append(tuple(ensemble))

    groups = [tuple(None if rng.random() < cfg.missing_rate else v for v in values)]
    if rng.random() < cfg.second_group_rate:
        k = int(rng.integers(attrs.attribute_count))
        if attrs.cardinalities[k] > 1:
            second = list(groups[0])
            second[k] = (values[k] + 1) % attrs.cardinalities[k]
            groups.append(tuple(second))

    return Instance(id=instance_id, image_width=cfg.image_width, image_height=cfg.image_height,
                    ensembles=tuple(ensembles),
                    ground_truth=GroundTruth(tuple(truth), tuple(groups)))


def generate(cfg: SynthConfig, spec: ModelSpec) -> SynthDataset:
    """
    Genera las particiones de entrenamiento y prueba y el w plantado.
    Cada instancia usa su propio generador derivado de (semilla, partición, índice).
    """
    planted = plant_model(spec, cfg)
    splits = {}
    for split_index, (name, count) in enumerate((("train", cfg.n_train), ("test", cfg.n_test))):
        instances = []
        for index in tqdm(range(count), desc=f"Sintéticos {name}", disable=not config.SHOW_PROGRESS):
            rng = np.random.default_rng([cfg.seed, split_index + 1, index])
            instances.append(generate_instance(spec, cfg, planted, f"{name}-{index:05d}", rng))
        splits[name] = instances
    logger.info("Generadas %d instancias de entrenamiento y %d de prueba", cfg.n_train, cfg.n_test)
    return SynthDataset(splits["train"], splits["test"], planted.weights)


def write_dataset(dataset: SynthDataset, spec: ModelSpec, out_dir: Union[str, Path]) -> Dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"train": out / "train.json", "test": out / "test.json", "weights": out / "planted.bin"}
    save_dataset(dataset.train, spec, paths["train"])
    save_dataset(dataset.test, spec, paths["test"])
    save_weights(dataset.weights, paths["weights"])
    return paths
