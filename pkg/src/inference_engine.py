"""
Motor de inferencia.

Implementa la inferencia exacta de pose dados los atributos (programación
dinámica max-producto sobre el árbol de super-nodos), la inferencia exacta de
atributos dada la pose (sobre el árbol de atributos), el ascenso por
coordenadas que alterna ambas, y oráculos exhaustivos para las pruebas.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

import config
from edge_energy import pose_energy
from errors import SpaceTooLarge
from feature_bank import PotentialTables, score_joint
from instance_io import Instance, JointLabel
from model_spec import ModelSpec

logger = logging.getLogger(__name__)


@dataclass
class MessageTable:
    """Puntuaciones por super-nodo, mensajes B_i(p_j) y punteros de retroceso."""
    node_scores: Dict[int, np.ndarray] = field(default_factory=dict)
    messages: Dict[int, np.ndarray] = field(default_factory=dict)
    backpointers: Dict[int, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class InferenceResult:
    label: JointLabel
    score: float
    trace: Tuple[Tuple[int, float], ...]
    iterations: int
    converged: bool

    def to_record(self, instance_id: str) -> dict:
        return {
            "id": instance_id,
            "pose": list(self.label.p),
            "attributes": list(self.label.c),
            "score": self.score,
            "iterations": self.iterations,
            "converged": self.converged,
            "trace": [[t, s] for t, s in self.trace],
        }


def score_full(w: np.ndarray, inst: Instance, spec: ModelSpec, y: JointLabel,
               alpha: float = config.ALPHA, beta: float = config.BETA) -> float:
    """S(x, y; w) = w . J(x, y) + alpha * Q(x, p), recalculado desde las características."""
    return score_joint(w, inst, spec, y) + alpha * pose_energy(inst, y.p, beta)


class InferenceEngine:
    """
    Inferencia sobre un modelo y un vector de pesos fijos.

    Args:
        spec: Estructura del modelo
        w: Vector de pesos (dimensión D)
        alpha: Peso de la energía de bordes fuertes
        beta: Peso del término de distancia dentro de Q
        disabled: Tipos de bloque apagados (ablaciones)
        max_iter: Iteraciones máximas del ascenso por coordenadas
        brute_force_cap: Tamaño máximo del espacio para los oráculos exhaustivos
    """

    def __init__(self, spec: ModelSpec, w: np.ndarray,
                 alpha: float = config.ALPHA, beta: float = config.BETA,
                 disabled: FrozenSet[str] = frozenset(),
                 max_iter: int = config.MAX_ITER,
                 brute_force_cap: int = config.BRUTE_FORCE_CAP):
        if max_iter < 1:
            raise ValueError("max_iter debe ser al menos 1")
        self.spec = spec
        self.w = np.asarray(w, dtype=float)
        if self.w.shape != (spec.dimension,) or not np.all(np.isfinite(self.w)):
            raise ValueError("El vector de pesos debe ser finito y de dimensión D")
        self.alpha = alpha
        self.beta = beta
        self.disabled = frozenset(disabled)
        self.max_iter = max_iter
        self.brute_force_cap = brute_force_cap

        self._classify_cross_terms()
        self._root_attribute_tree()

    # ------------------------------------------------------------------
    # Estructura
    # ------------------------------------------------------------------
    def _classify_cross_terms(self) -> None:
        """
        Ubica cada término cruzado: dentro de un super-nodo, sobre una arista
        padre-hijo o, si abarca más, separado por parte.
        """
        tree = self.spec.super_tree
        self.node_cross: Dict[int, List[Tuple[int, int]]] = {s: [] for s in range(len(tree.super_nodes))}
        self.edge_cross: Dict[int, List[Tuple[int, int]]] = {s: [] for s in range(len(tree.super_nodes))}
        for k, parts in enumerate(self.spec.attributes.dependency):
            nodes = {tree.node_of(part) for part in parts}
            if len(nodes) == 1:
                (node,) = nodes
                self.node_cross[node] += [(k, part) for part in parts]
                continue
            if len(nodes) == 2:
                a, b = sorted(nodes)
                child = b if tree.parent.get(b) == a else a if tree.parent.get(a) == b else None
                if child is not None:
                    self.edge_cross[child] += [(k, part) for part in parts]
                    continue
            for part in parts:
                self.node_cross[tree.node_of(part)].append((k, part))

    def _root_attribute_tree(self) -> None:
        attrs = self.spec.attributes
        graph = nx.Graph()
        graph.add_nodes_from(range(attrs.attribute_count))
        graph.add_edges_from(attrs.attribute_tree_edges)
        edges = list(nx.bfs_edges(graph, 0, sort_neighbors=sorted))
        self.attr_children: Dict[int, List[int]] = {k: [] for k in range(attrs.attribute_count)}
        for parent, child in edges:
            self.attr_children[parent].append(child)
        self.attr_post_order: List[int] = []

        def visit(k: int) -> None:
            for child in self.attr_children[k]:
                visit(child)
            self.attr_post_order.append(k)

        visit(0)

    def tables(self, inst: Instance) -> PotentialTables:
        return PotentialTables(inst, self.spec, self.w, self.alpha, self.beta, self.disabled)

    def score_full(self, inst: Instance, y: JointLabel) -> float:
        return score_full(self.w, inst, self.spec, y, self.alpha, self.beta)

    # ------------------------------------------------------------------
    # Pose dados los atributos
    # ------------------------------------------------------------------
    def _config_indices(self, sizes: Sequence[int]) -> Dict[int, Dict[int, np.ndarray]]:
        """Índice de candidato de cada parte para cada configuración de su super-nodo."""
        indices = {}
        for s, members in enumerate(self.spec.super_tree.super_nodes):
            grids = np.meshgrid(*[np.arange(sizes[p]) for p in members], indexing="ij")
            indices[s] = {part: grid.reshape(-1) for part, grid in zip(members, grids)}
        return indices

    def pose_messages(self, tables: PotentialTables,
                      c: Optional[Sequence[int]]) -> Tuple[MessageTable, Dict[int, Dict[int, np.ndarray]]]:
        """
        Pasada de hojas a raíz sobre el árbol de super-nodos.

        Args:
            tables: Potenciales de la instancia
            c: Atributos fijos, o None para ignorar todos los términos cruzados

        Returns:
            (MessageTable, índices de configuración por super-nodo)
        """
        tree = self.spec.super_tree
        idx = self._config_indices(tables.sizes)
        result = MessageTable()

        for s, members in enumerate(tree.super_nodes):
            member_set = set(members)
            score = sum(tables.part_scores(part)[idx[s][part]] for part in members)
            for (i, j), table in tables.consistency.items():
                if {i, j} <= member_set:
                    score = score + table[idx[s][i], idx[s][j]]
            for (i, j), table in tables.deformation.items():
                if {i, j} <= member_set:
                    score = score + table[idx[s][i], idx[s][j]]
            if c is not None:
                for k, part in self.node_cross[s]:
                    score = score + tables.cross[k][part][idx[s][part], c[k]]
            result.node_scores[s] = score

        for child in tree.post_order():
            if child == tree.root:
                continue
            parent = tree.parent[child]
            total = result.node_scores[child] + sum(
                (result.messages[v] for v in tree.children(child)), np.zeros(1))
            parent_vec = np.zeros(len(next(iter(idx[parent].values()))))
            if c is not None:
                for k, part in self.edge_cross[child]:
                    if part in tree.super_nodes[child]:
                        total = total + tables.cross[k][part][idx[child][part], c[k]]
                    else:
                        parent_vec = parent_vec + tables.cross[k][part][idx[parent][part], c[k]]

            pairwise = []
            for (i, j), table in tables.deformation.items():
                if i in tree.super_nodes[parent] and j in tree.super_nodes[child]:
                    pairwise.append((i, j, table))
                elif j in tree.super_nodes[parent] and i in tree.super_nodes[child]:
                    pairwise.append((j, i, table.T))

            message, back = self._edge_message(tree.super_nodes[parent], tree.super_nodes[child],
                                               idx[parent], idx[child], pairwise, total, tables.sizes)
            result.messages[child] = message + parent_vec
            result.backpointers[child] = back
        return result, idx

    @staticmethod
    def _edge_message(parent_parts, child_parts, idx_parent, idx_child, pairwise, total_child, sizes):
        """
        B(p_padre) = max_{p_hijo} [sum de deformaciones + total_hijo] con argmax.

        Si ambos extremos son pares unidos por dos aristas disjuntas, el máximo
        se calcula en dos pasadas (max, +) de costo K^3 cada una en lugar de una
        tabla K^4. El resto de las aristas cuesta el producto de las
        configuraciones de ambos extremos (K^2 entre partes simples).
        """
        parents_used = {a for a, _, _ in pairwise}
        children_used = {b for _, b, _ in pairwise}
        factorable = (len(child_parts) == 2 and len(parent_parts) == 2 and len(pairwise) == 2
                      and len(parents_used) == 2 and len(children_used) == 2)
        if not factorable:
            n_parent = len(next(iter(idx_parent.values())))
            n_child = len(total_child)
            scores = np.zeros((n_parent, n_child)) + total_child[None, :]
            for a, b, table in pairwise:
                scores = scores + table[idx_parent[a][:, None], idx_child[b][None, :]]
            return scores.max(axis=1), scores.argmax(axis=1)

        b1, b2 = child_parts
        (a_x, _, r1), = [(a, b, t) for a, b, t in pairwise if b == b1]
        (a_y, _, r2), = [(a, b, t) for a, b, t in pairwise if b == b2]
        k_b2 = sizes[b2]
        inner = total_child.reshape(sizes[b1], k_b2)
        # G(b1, a_y) = max_b2 inner[b1, b2] + r2[a_y, b2]
        g_full = inner[:, None, :] + r2[None, :, :]
        g, g_arg = g_full.max(axis=2), g_full.argmax(axis=2)
        # H(a_x, a_y) = max_b1 r1[a_x, b1] + G(b1, a_y)
        h_full = r1[:, :, None] + g[None, :, :]
        h, h_arg = h_full.max(axis=1), h_full.argmax(axis=1)

        ax, ay = idx_parent[a_x], idx_parent[a_y]
        best_b1 = h_arg[ax, ay]
        best_b2 = g_arg[best_b1, ay]
        return h[ax, ay], best_b1 * k_b2 + best_b2

    def infer_pose_given_attrs(self, inst: Instance, c: Optional[Sequence[int]] = None,
                               tables: Optional[PotentialTables] = None) -> Tuple[Tuple[int, ...], float]:
        """
        Pose exacta que maximiza w_p . J_p + alpha * Q + w_pc . J_pc(x, p, c).

        Args:
            inst: Instancia
            c: Atributos fijos; None anula los términos cruzados (inicialización)
            tables: Potenciales ya calculados (opcional)

        Returns:
            (p*, puntuación condicional)
        """
        tables = tables or self.tables(inst)
        messages, idx = self.pose_messages(tables, c)
        tree = self.spec.super_tree
        root = tree.root
        root_total = messages.node_scores[root] + sum(
            (messages.messages[v] for v in tree.children(root)), np.zeros(1))
        config_of = {root: int(np.argmax(root_total))}
        best = float(root_total[config_of[root]])

        stack = [root]
        while stack:
            node = stack.pop()
            for child in tree.children(node):
                config_of[child] = int(messages.backpointers[child][config_of[node]])
                stack.append(child)

        p = [0] * self.spec.part_count
        for s, members in enumerate(tree.super_nodes):
            for part in members:
                p[part] = int(idx[s][part][config_of[s]])
        return tuple(p), best

    # ------------------------------------------------------------------
    # Atributos dada la pose
    # ------------------------------------------------------------------
    def infer_attrs_given_pose(self, inst: Instance, p: Sequence[int],
                               tables: Optional[PotentialTables] = None) -> Tuple[Tuple[int, ...], float]:
        """
        Atributos exactos que maximizan w_c . J_c(c) + w_pc . J_pc(x, p, c);
        con la pose fija cada término cruzado es un unario de dimensión T_k.
        """
        tables = tables or self.tables(inst)
        attrs = self.spec.attributes
        totals: Dict[int, np.ndarray] = {}
        backs: Dict[int, np.ndarray] = {}
        for k in self.attr_post_order:
            total = np.asarray(tables.cross_unary(k, p), dtype=float) + np.zeros(attrs.cardinalities[k])
            for child in self.attr_children[k]:
                table = self._cooccurrence(tables, k, child)
                scores = table + totals[child][None, :]
                total = total + scores.max(axis=1)
                backs[child] = scores.argmax(axis=1)
            totals[k] = total

        c = [0] * attrs.attribute_count
        c[0] = int(np.argmax(totals[0]))
        best = float(totals[0][c[0]])
        stack = [0]
        while stack:
            k = stack.pop()
            for child in self.attr_children[k]:
                c[child] = int(backs[child][c[k]])
                stack.append(child)
        return tuple(c), best

    @staticmethod
    def _cooccurrence(tables: PotentialTables, parent: int, child: int) -> np.ndarray:
        if (parent, child) in tables.cooccurrence:
            return tables.cooccurrence[(parent, child)]
        return tables.cooccurrence[(child, parent)].T

    # ------------------------------------------------------------------
    # Inferencia conjunta
    # ------------------------------------------------------------------
    def infer_joint(self, inst: Instance) -> InferenceResult:
        """
        Ascenso por coordenadas: pose inicial sin atributos, luego alterna el
        paso de atributos y el de pose guardando la mejor puntuación S*.
        Se detiene cuando S* no cambia o al alcanzar max_iter.
        """
        tables = self.tables(inst)
        p_prev, _ = self.infer_pose_given_attrs(inst, None, tables)
        best_label: Optional[JointLabel] = None
        best_score = -math.inf
        trace: List[Tuple[int, float]] = []
        converged = False
        iteration = 0

        for iteration in range(1, self.max_iter + 1):
            c, _ = self.infer_attrs_given_pose(inst, p_prev, tables)
            p, _ = self.infer_pose_given_attrs(inst, c, tables)
            label = JointLabel(p, c)
            score = tables.score(label)
            trace.append((iteration, score))

            previous_best = best_score
            if score > best_score:
                best_score, best_label = score, label
            # Punto fijo: la pose no cambió, así que los pasos siguientes se repiten
            if p == p_prev or abs(best_score - previous_best) <= config.CONVERGENCE_TOL:
                converged = True
                break
            p_prev = p

        logger.debug("%s: S*=%.6f en %d iteraciones", inst.id, best_score, iteration)
        return InferenceResult(best_label, best_score, tuple(trace), iteration, converged)

    def infer_separate(self, inst: Instance,
                       attribute_engine: Optional["InferenceEngine"] = None) -> InferenceResult:
        """
        Línea base separada: pose sin términos cruzados y un único paso de
        atributos sobre esa pose (con otro modelo si se indica).
        """
        tables = self.tables(inst)
        p, _ = self.infer_pose_given_attrs(inst, None, tables)
        engine = attribute_engine or self
        c, _ = engine.infer_attrs_given_pose(inst, p)
        label = JointLabel(p, c)
        score = tables.score(label)
        return InferenceResult(label, score, ((1, score),), 1, True)

    # ------------------------------------------------------------------
    # Oráculos exhaustivos
    # ------------------------------------------------------------------
    def _score_grid(self, tables: PotentialTables, p: Optional[Sequence[int]] = None,
                    c: Optional[Sequence[int]] = None) -> Tuple[np.ndarray, List[Tuple[str, int]]]:
        """Puntuación de todas las etiquetas sobre las variables libres, como arreglo n-dimensional."""
        spec = self.spec
        cards = spec.attributes.cardinalities
        fixed: Dict[Tuple[str, int], int] = {}
        if p is not None:
            fixed.update({("p", i): pi for i, pi in enumerate(p)})
        if c is not None:
            fixed.update({("c", k): ck for k, ck in enumerate(c)})
        variables = [("p", i) for i in range(spec.part_count)] + \
                    [("c", k) for k in range(spec.attribute_count)]
        size_of = {("p", i): tables.sizes[i] for i in range(spec.part_count)}
        size_of.update({("c", k): cards[k] for k in range(spec.attribute_count)})
        free = [v for v in variables if v not in fixed]

        space = math.prod(size_of[v] for v in free)
        if space > self.brute_force_cap:
            raise SpaceTooLarge(f"{space} etiquetas superan el tope {self.brute_force_cap}")

        axis_of = {v: a for a, v in enumerate(free)}
        grid = np.zeros([size_of[v] for v in free])

        def add(table: np.ndarray, table_vars: Sequence[Tuple[str, int]]) -> None:
            index = tuple(fixed.get(v, slice(None)) for v in table_vars)
            kept = [v for v in table_vars if v not in fixed]
            values = np.asarray(table[index])
            order = sorted(range(len(kept)), key=lambda q: axis_of[kept[q]])
            values = np.transpose(values, order)
            shape = [1] * len(free)
            for q in order:
                shape[axis_of[kept[q]]] = size_of[kept[q]]
            nonlocal grid
            grid = grid + values.reshape(shape)

        for i in range(spec.part_count):
            add(tables.part_scores(i), [("p", i)])
        for (i, j), table in tables.deformation.items():
            add(table, [("p", i), ("p", j)])
        for (i, j), table in tables.consistency.items():
            add(table, [("p", i), ("p", j)])
        for (k, l), table in tables.cooccurrence.items():
            add(table, [("c", k), ("c", l)])
        for k, per_part in enumerate(tables.cross):
            for part, table in per_part.items():
                add(table, [("p", part), ("c", k)])
        return grid, free

    def _decode_grid(self, grid: np.ndarray, free, p, c) -> Tuple[JointLabel, float]:
        flat = int(np.argmax(grid))  # primer máximo = etiqueta lexicográficamente menor
        values = dict(zip(free, (int(v) for v in np.unravel_index(flat, grid.shape))))
        pose = tuple(values.get(("p", i), p[i] if p is not None else 0)
                     for i in range(self.spec.part_count))
        attrs = tuple(values.get(("c", k), c[k] if c is not None else 0)
                      for k in range(self.spec.attribute_count))
        return JointLabel(pose, attrs), float(grid.reshape(-1)[flat])

    def brute_force_joint(self, inst: Instance) -> Tuple[JointLabel, float]:
        """Argmax global exhaustivo de S(x, y; w) con el mismo desempate."""
        grid, free = self._score_grid(self.tables(inst))
        return self._decode_grid(grid, free, None, None)

    def conditional_brute_force_pose(self, inst: Instance, c: Optional[Sequence[int]]) -> Tuple[Tuple[int, ...], float]:
        """Máximo condicional exhaustivo sobre las poses (atributos fijos)."""
        tables = self.tables(inst)
        if c is None:
            tables.cross = [{part: np.zeros_like(t) for part, t in per_part.items()}
                            for per_part in tables.cross]
            c = (0,) * self.spec.attribute_count
        grid, free = self._score_grid(tables, c=c)
        label, _ = self._decode_grid(grid, free, None, c)
        # Sin la parte constante de los atributos
        return label.p, tables.pose_score(label.p) + tables.cross_score(label.p, c)

    def conditional_brute_force_attrs(self, inst: Instance, p: Sequence[int]) -> Tuple[Tuple[int, ...], float]:
        """Máximo condicional exhaustivo sobre los atributos (pose fija)."""
        tables = self.tables(inst)
        grid, free = self._score_grid(tables, p=p)
        label, _ = self._decode_grid(grid, free, p, None)
        return label.c, tables.attribute_score(label.c) + tables.cross_score(p, label.c)


# ============================================================================
# FUNCIONES DE CONVENIENCIA
# ============================================================================

def infer_pose_given_attrs(w, inst, spec, c, alpha=config.ALPHA, beta=config.BETA):
    return InferenceEngine(spec, w, alpha, beta).infer_pose_given_attrs(inst, c)


def infer_attrs_given_pose(w, inst, spec, p, alpha=config.ALPHA, beta=config.BETA):
    return InferenceEngine(spec, w, alpha, beta).infer_attrs_given_pose(inst, p)


def infer_joint(w, inst, spec, alpha=config.ALPHA, beta=config.BETA, max_iter=config.MAX_ITER):
    return InferenceEngine(spec, w, alpha, beta, max_iter=max_iter).infer_joint(inst)


def brute_force_joint(w, inst, spec, alpha=config.ALPHA, beta=config.BETA,
                      cap=config.BRUTE_FORCE_CAP):
    return InferenceEngine(spec, w, alpha, beta, brute_force_cap=cap).brute_force_joint(inst)


def _infer_task(args) -> InferenceResult:
    engine, inst, separate, attribute_engine = args
    return engine.infer_separate(inst, attribute_engine) if separate else engine.infer_joint(inst)


def infer_many(engine: InferenceEngine, instances: Sequence[Instance], workers: int = 1,
               separate: bool = False,
               attribute_engine: Optional[InferenceEngine] = None) -> List[InferenceResult]:
    """
    Inferencia sobre varias instancias; el orden del resultado sigue al de la entrada.
    Con `separate`, `attribute_engine` (si se da) decide los atributos sobre la pose.
    """
    tasks = [(engine, inst, separate, attribute_engine) for inst in instances]
    if workers <= 1:
        return [_infer_task(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(_infer_task, tasks, chunksize=8))
