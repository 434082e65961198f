"""
Fixtures compartidas: modelos por defecto e instancias aleatorias pequeñas.
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import config as settings  # noqa: E402
from instance_io import Candidate, EdgePixel, GroundTruth, Instance  # noqa: E402
from model_spec import build_default_model  # noqa: E402

SMALL_CARDINALITIES = (2, 3, 2, 3, 2)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: experimentos con modelo plantado y mediciones de tiempo")


@pytest.fixture(autouse=True)
def _quiet_progress(monkeypatch):
    monkeypatch.setattr(settings, "SHOW_PROGRESS", False)


@pytest.fixture(scope="session")
def spec():
    return build_default_model()


@pytest.fixture(scope="session")
def small_spec():
    """Modelo por defecto con cardinalidades pequeñas para los oráculos exhaustivos."""
    return build_default_model(cardinalities=SMALL_CARDINALITIES)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_candidate(spec, part, rng, width=320, height=320, edges=True):
    attrs = spec.attributes
    feats = {k: rng.standard_normal(attrs.feature_dims[k])
             for k in range(attrs.attribute_count) if part in attrs.dependency[k]}
    pixels = ()
    if edges:
        pixels = tuple(EdgePixel(float(rng.uniform(0, 360)), float(rng.uniform(0, 1)),
                                 float(rng.uniform(0, 10)))
                       for _ in range(int(rng.integers(0, 5))))
    return Candidate(
        x=float(rng.uniform(0, width)), y=float(rng.uniform(0, height)),
        theta=float(rng.uniform(0, 359.0)), s=float(rng.uniform(20, 80)),
        unary=rng.standard_normal(spec.unary_dim),
        hist_rgb=rng.dirichlet(np.ones(spec.hist_dim)),
        hist_lab=rng.dirichlet(np.ones(spec.hist_dim)),
        attr_feats=feats, edge_pixels=pixels,
    )


def random_instance(spec, rng, sizes, inst_id="inst-00000", groups=None):
    """Instancia con candidatos aleatorios; la verdad es el candidato 0 de cada parte."""
    ensembles = tuple(tuple(random_candidate(spec, part, rng) for _ in range(k))
                      for part, k in enumerate(sizes))
    if groups is None:
        groups = (tuple(int(rng.integers(t)) for t in spec.attributes.cardinalities),)
    truth = GroundTruth(pose=tuple(e[0].box for e in ensembles), attribute_groups=tuple(groups))
    return Instance(id=inst_id, image_width=320, image_height=320,
                    ensembles=ensembles, ground_truth=truth)


@pytest.fixture
def make_instance():
    return random_instance
