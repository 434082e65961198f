"""
Módulo para renderizar una instancia: candidatos, pose predicha, verdad de
terreno y atributos de prenda sobre un lienzo.
"""

import logging
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import cv2
import numpy as np

import config
from instance_io import Instance, JointLabel, OrientedBox
from model_spec import ModelSpec

logger = logging.getLogger(__name__)


class SkeletonRenderer:
    """
    Dibuja las cajas orientadas de una instancia con OpenCV.
    Las imágenes de origen no forman parte del conjunto: se dibuja sobre un
    lienzo negro del tamaño de la imagen.
    """

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.skeleton_color = config.SKELETON_COLOR
        self.candidate_color = config.CANDIDATE_COLOR
        self.truth_color = config.TRUTH_COLOR
        self.line_thickness = config.LINE_THICKNESS

    def blank_canvas(self, inst: Instance) -> np.ndarray:
        return np.zeros((inst.image_height, inst.image_width, 3), dtype=np.uint8)

    def draw_box(self, canvas: np.ndarray, box: OrientedBox, width_ratio: float,
                 color: Tuple[int, int, int], thickness: Optional[int] = None) -> np.ndarray:
        """
        Dibuja una caja orientada.

        Args:
            canvas: Lienzo BGR
            box: Caja (x, y, theta, s)
            width_ratio: Ancho relativo a s
            color: Color BGR

        Returns:
            Lienzo con la caja dibujada
        """
        rect = ((box.x, box.y), (box.s, box.s * width_ratio), box.theta)
        corners = np.round(cv2.boxPoints(rect)).astype(np.int32)
        cv2.polylines(canvas, [corners], True, color, thickness or self.line_thickness)
        return canvas

    def draw_candidates(self, canvas: np.ndarray, inst: Instance) -> np.ndarray:
        if not config.SHOW_CANDIDATES:
            return canvas
        for part, ensemble in enumerate(inst.ensembles):
            for cand in ensemble:
                self.draw_box(canvas, cand.box, self.spec.width_ratio(part), self.candidate_color, 1)
        return canvas

    def draw_pose(self, canvas: np.ndarray, boxes: Sequence[OrientedBox],
                  color: Optional[Tuple[int, int, int]] = None) -> np.ndarray:
        """Cajas de una pose y los segmentos entre centros de las partes unidas en el árbol."""
        color = color or self.skeleton_color
        for part, box in enumerate(boxes):
            self.draw_box(canvas, box, self.spec.width_ratio(part), color)
        for i, j in self.spec.parts.tree_edges:
            a = (int(round(boxes[i].x)), int(round(boxes[i].y)))
            b = (int(round(boxes[j].x)), int(round(boxes[j].y)))
            cv2.line(canvas, a, b, color, 1)
        return canvas

    def draw_attributes(self, canvas: np.ndarray, c: Sequence[Optional[int]],
                        position: Tuple[int, int] = (10, 20)) -> np.ndarray:
        if not config.SHOW_ATTRIBUTES:
            return canvas
        y_offset = position[1]
        for name, value in zip(self.spec.attributes.names, c):
            text = f"{name}: {'-' if value is None else value}"
            cv2.putText(canvas, text, (position[0], y_offset), cv2.FONT_HERSHEY_SIMPLEX,
                        config.TEXT_SCALE, config.TEXT_COLOR, config.TEXT_THICKNESS)
            y_offset += 18
        return canvas

    def render(self, inst: Instance, label: Optional[JointLabel] = None,
               show_truth: bool = True) -> np.ndarray:
        """
        Lienzo completo: candidatos de fondo, verdad de terreno y pose predicha.

        Args:
            inst: Instancia
            label: Etiqueta predicha (opcional)
            show_truth: Dibujar la verdad de terreno si existe

        Returns:
            Imagen BGR uint8
        """
        canvas = self.draw_candidates(self.blank_canvas(inst), inst)
        if show_truth and inst.ground_truth is not None:
            self.draw_pose(canvas, inst.ground_truth.pose, self.truth_color)
        if label is not None:
            self.draw_pose(canvas, inst.pose_boxes(label.p))
            self.draw_attributes(canvas, label.c)
        return canvas

    def save(self, canvas: np.ndarray, path: Union[str, Path]) -> None:
        if not cv2.imwrite(str(path), canvas):
            raise OSError(f"OpenCV no pudo escribir {path}")
        logger.info("Imagen guardada en %s", path)
