"""
Energía de bordes fuertes Q(x, p).
Para cada candidato combina el acuerdo de orientación con los bordes que unen
sus articulaciones (Q^o) y la distancia ponderada de esos bordes a los lados
largos de la caja (Q^d).
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

import config
from instance_io import Candidate, Instance


@dataclass(frozen=True)
class EdgeScores:
    q_o: float      # Acuerdo de orientación
    q_d: float      # Distancia ponderada por intensidad (>= 0)


def edge_scores(candidate: Candidate) -> EdgeScores:
    """
    Calcula Q^o y Q^d de un candidato.

    Args:
        candidate: Candidato con su lista de píxeles de borde

    Returns:
        EdgeScores; (0, 0) si el candidato no tiene evidencia de bordes
    """
    theta_e, strength, d_min = candidate.edge_arrays
    z = theta_e.size
    if z == 0:
        return EdgeScores(0.0, 0.0)
    # Sin plegar el ángulo: el coseno es periódico
    q_o = float(np.sum(np.cos(np.radians(candidate.theta - theta_e)) * strength) / z)
    q_d = float(np.sum(d_min * strength) / z)
    return EdgeScores(q_o, q_d)


def candidate_energy(candidate: Candidate, beta: float = config.BETA) -> float:
    scores = edge_scores(candidate)
    return scores.q_o + beta * scores.q_d


def part_energies(inst: Instance, part: int, beta: float = config.BETA) -> np.ndarray:
    """Energía de cada candidato de una parte (vector de longitud K_i)."""
    return np.array([candidate_energy(c, beta) for c in inst.ensembles[part]])


def pose_energy(inst: Instance, p: Sequence[int], beta: float = config.BETA) -> float:
    """
    Q(x, p) = sum_i Q^o(p_i) + beta * sum_i Q^d(p_i); se descompone por partes.
    """
    return float(sum(candidate_energy(inst.candidate(i, pi), beta) for i, pi in enumerate(p)))
